//! Marginal law of the tessellation at a fixed time, without simulating
//! jump times.
//!
//! The probability of exactly `k` divisions by time `t` together with an
//! event `A` on the resulting tessellation is the expectation, over the
//! embedded division chain (cell chosen with probability `Λ([C]) / ζ`,
//! hyperplane from `Λ̂_[C]`), of `1_A · P(S_k <= t < S_{k+1})`, where the
//! `S_j` are partial sums of independent exponentials with the chain's ζ
//! values as rates.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construct::{select_by_mass, Streams};
use crate::geometry::{Cell, ConvexSet, Hyperplane, EPS_VOL};
use crate::measure::{DirectionalDistribution, HyperplaneMeasure};
use crate::tess::{TessError, Tessellation};
use crate::tree::{enumerate_theta, TreeError};

/// Largest `k` accepted by the Monte Carlo estimators.
pub const MAX_ORACLE_K: usize = 12;
/// Largest `k` accepted by the exhaustive evaluation.
pub const MAX_EXHAUSTIVE_K: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("rates {0} and {1} coincide")]
    DegenerateRates(f64, f64),
    #[error("invalid rate sequence: {0}")]
    InvalidRates(String),
    #[error("k = {k} exceeds the supported maximum {max}")]
    KTooLarge { k: usize, max: usize },
    #[error("at least {min} samples are required, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("exhaustive evaluation requires a discrete directional distribution")]
    NotDiscrete,
    #[error(transparent)]
    Tess(#[from] TessError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Rates `ζ_0, ..., ζ_k` of the successive states of a division chain.
#[derive(Clone, Debug, PartialEq)]
pub struct RateSequence(Vec<f64>);

impl RateSequence {
    /// Rates must be positive, finite and nondecreasing.
    pub fn new(rates: Vec<f64>) -> Result<Self, OracleError> {
        if rates.is_empty() {
            return Err(OracleError::InvalidRates("empty".into()));
        }
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(OracleError::InvalidRates("rates must be positive and finite".into()));
        }
        if rates.windows(2).any(|w| w[1] < w[0] * (1.0 - 1e-12)) {
            return Err(OracleError::InvalidRates("rates must be nondecreasing".into()));
        }
        Ok(RateSequence(rates))
    }

    pub fn rates(&self) -> &[f64] {
        &self.0
    }

    /// Number of completed stages `k`.
    pub fn k(&self) -> usize {
        self.0.len() - 1
    }
}

/// `P(S_k <= t < S_{k+1})` by the distinct-rate partial-fraction formula.
pub fn hypoexp_window_prob(rates: &RateSequence, t: f64) -> Result<f64, OracleError> {
    let r = rates.rates();
    let k = rates.k();
    for i in 0..=k {
        for j in 0..i {
            if (r[i] - r[j]).abs() <= 1e-12 * r[i].max(r[j]) {
                return Err(OracleError::DegenerateRates(r[j], r[i]));
            }
        }
    }
    let prefactor: f64 = r[..k].iter().product();
    let sum: f64 = (0..=k)
        .map(|i| {
            let denom: f64 = (0..=k).filter(|&j| j != i).map(|j| r[j] - r[i]).product();
            (-r[i] * t).exp() / denom
        })
        .sum();
    Ok((prefactor * sum).clamp(0.0, 1.0))
}

/// `P(S_k <= t < S_{k+1})` by uniformization of the pure-birth chain.
///
/// Every term is nonnegative, so this stays accurate for equal or nearly
/// equal rates where partial fractions cancel catastrophically.
pub fn birth_chain_window_prob(rates: &RateSequence, t: f64) -> f64 {
    let r = rates.rates();
    let k = rates.k();
    if t <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let lambda = r.iter().cloned().fold(0.0, f64::max);
    let mean = lambda * t;
    let n_max = (mean + 12.0 * mean.sqrt() + k as f64 + 40.0).ceil() as usize;
    let mut v = vec![0.0; k + 1];
    v[0] = 1.0;
    let ln_mean = mean.ln();
    let mut ln_fact = 0.0;
    let mut acc = 0.0;
    for n in 0..=n_max {
        if n > 0 {
            ln_fact += (n as f64).ln();
            for s in (0..=k).rev() {
                let stay = v[s] * (1.0 - r[s] / lambda);
                let arrive = if s > 0 { v[s - 1] * r[s - 1] / lambda } else { 0.0 };
                v[s] = stay + arrive;
            }
        }
        let w = (-mean + n as f64 * ln_mean - ln_fact).exp();
        acc += w * v[k];
    }
    acc.clamp(0.0, 1.0)
}

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub k: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// One realization of the embedded division chain.
pub struct ChainSample {
    pub tessellation: Tessellation,
    pub rates: RateSequence,
    /// `P(S_k <= t < S_{k+1})` for the realized rates.
    pub weight: f64,
}

/// Runs `k` steps of the embedded chain: cell by `Λ([C]) / ζ`, hyperplane
/// from `Λ̂_[C]` by the direct sampler. Division times are the step indices.
pub fn sample_chain<R: Rng + ?Sized>(
    window: &Cell,
    measure: &Arc<HyperplaneMeasure>,
    t: f64,
    k: usize,
    rng: &mut R,
) -> Result<ChainSample, OracleError> {
    let mut tess = Tessellation::initial(window, measure.clone())?;
    let mut rates = vec![tess.zeta()];
    let min_volume = EPS_VOL * window.volume();
    for s in 0..k {
        let label = select_by_mass(&tess, rng.random::<f64>()).clone();
        let cell = tess.cell(&label).expect("selected label is live").clone();
        let sampler = measure.hit_sampler(&cell);
        let h = loop {
            let h = sampler.sample(rng);
            if cell.hits_interior(&h) && cell.clip_with_min_volume(&h, min_volume).is_ok() {
                break h;
            }
        };
        tess.divide(&label, &h, (s + 1) as f64)?;
        rates.push(tess.zeta());
    }
    let rates = RateSequence::new(rates)?;
    let weight = birth_chain_window_prob(&rates, t);
    Ok(ChainSample {
        tessellation: tess,
        rates,
        weight,
    })
}

/// `P(#cells at t = k + 1, tessellation ∈ A)` estimated from `n_samples`
/// chain realizations; sample `i` uses the `u` stream of replication `i`.
pub fn marginal_event_prob<F>(
    window: &Cell,
    measure: &Arc<HyperplaneMeasure>,
    t: f64,
    k: usize,
    event: F,
    n_samples: usize,
    seed: u64,
) -> Result<OracleRow, OracleError>
where
    F: Fn(&Tessellation) -> bool + Sync,
{
    if k > MAX_ORACLE_K {
        return Err(OracleError::KTooLarge { k, max: MAX_ORACLE_K });
    }
    if n_samples < 1000 {
        return Err(OracleError::TooFewSamples {
            min: 1000,
            got: n_samples,
        });
    }
    let values: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = Streams::new(seed, i).u;
            let s = sample_chain(window, measure, t, k, &mut rng)?;
            Ok(if event(&s.tessellation) { s.weight } else { 0.0 })
        })
        .collect::<Result<_, OracleError>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(OracleRow {
        k,
        estimate: mean,
        std_error: (var / n).sqrt(),
        n_samples,
    })
}

/// `P(#cells at t = k + 1)`.
pub fn marginal_count_prob(
    window: &Cell,
    measure: &Arc<HyperplaneMeasure>,
    t: f64,
    k: usize,
    n_samples: usize,
    seed: u64,
) -> Result<OracleRow, OracleError> {
    if k == 0 {
        // Empty product: the window survives with probability e^{-Λ([W]) t}.
        let m = measure.hit_mass(window);
        return Ok(OracleRow {
            k,
            estimate: (-m * t).exp(),
            std_error: 0.0,
            n_samples,
        });
    }
    marginal_event_prob(window, measure, t, k, |_| true, n_samples, seed)
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 0 { 0.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (x + 1.0), 0.5 * w));
    }
    out
}

/// `P(#cells at t = k + 1, A)` evaluated by summing over all division
/// tuples of order `k` and integrating each cut position by Gauss–Legendre
/// quadrature. Requires a discrete directional distribution.
pub fn exhaustive_event_prob<F>(
    window: &Cell,
    measure: &Arc<HyperplaneMeasure>,
    t: f64,
    k: usize,
    nodes: usize,
    event: F,
) -> Result<f64, OracleError>
where
    F: Fn(&Tessellation) -> bool + Sync,
{
    if k > MAX_EXHAUSTIVE_K {
        return Err(OracleError::KTooLarge {
            k,
            max: MAX_EXHAUSTIVE_K,
        });
    }
    let atoms = match measure.theta() {
        DirectionalDistribution::Discrete(a) => a.clone(),
        DirectionalDistribution::Isotropic => return Err(OracleError::NotDiscrete),
    };
    let rule = gauss_legendre_unit(nodes);
    let tuples = enumerate_theta(k)?;
    let start = Tessellation::initial(window, measure.clone())?;
    let ctx = Exhaustive {
        atoms: &atoms,
        rule: &rule,
        t,
        event: &event,
    };
    tuples
        .par_iter()
        .map(|r| {
            let steps: Vec<_> = (0..k).map(|s| r.divided_at(s).expect("order k")).collect();
            ctx.integrate(&start, &steps, vec![start.zeta()])
        })
        .sum()
}

struct Exhaustive<'a, F> {
    atoms: &'a [(crate::geometry::Direction, f64)],
    rule: &'a [(f64, f64)],
    t: f64,
    event: &'a F,
}

impl<F: Fn(&Tessellation) -> bool> Exhaustive<'_, F> {
    fn integrate(
        &self,
        tess: &Tessellation,
        steps: &[crate::tree::TreeWord],
        rates: Vec<f64>,
    ) -> Result<f64, OracleError> {
        let Some((label, rest)) = steps.split_first() else {
            if !(self.event)(tess) {
                return Ok(0.0);
            }
            return Ok(birth_chain_window_prob(&RateSequence::new(rates)?, self.t));
        };
        let cell = tess.cell(label).expect("tuple labels are live").clone();
        let mass = tess.mass(label).expect("live");
        let select = mass / tess.zeta();
        let widths: Vec<f64> = self.atoms.iter().map(|(u, w)| w * cell.width(u)).collect();
        let total_w: f64 = widths.iter().sum();
        let mut acc = 0.0;
        for ((u, _), wu) in self.atoms.iter().zip(&widths) {
            let (lo, hi) = cell.projection_interval(u);
            let mut inner = 0.0;
            for &(x, w) in self.rule {
                let h = Hyperplane::new(lo + x * (hi - lo), *u);
                let mut next = tess.clone();
                next.divide(label, &h, (rates.len()) as f64)?;
                let mut r = rates.clone();
                r.push(next.zeta());
                inner += w * self.integrate(&next, rest, r)?;
            }
            acc += wu / total_w * inner;
        }
        Ok(select * acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::TreeWord;
    use approx::assert_relative_eq;

    fn rates(v: &[f64]) -> RateSequence {
        RateSequence::new(v.to_vec()).unwrap()
    }

    /// Nested quadrature of the time integrals over the simplex.
    fn simplex_quadrature(r: &[f64], t: f64, nodes: usize) -> f64 {
        let rule = gauss_legendre_unit(nodes);
        fn rec(r: &[f64], remaining: f64, s: usize, rule: &[(f64, f64)]) -> f64 {
            let k = r.len() - 1;
            if s == k {
                return (-r[k] * remaining).exp();
            }
            rule.iter()
                .map(|&(x, w)| {
                    let dw = x * remaining;
                    w * remaining * r[s] * (-r[s] * dw).exp() * rec(r, remaining - dw, s + 1, rule)
                })
                .sum()
        }
        rec(r, t, 0, &rule)
    }

    #[test]
    fn single_stage_is_survival() {
        assert_relative_eq!(hypoexp_window_prob(&rates(&[1.7]), 0.8).unwrap(), (-1.7f64 * 0.8).exp());
        assert_relative_eq!(birth_chain_window_prob(&rates(&[1.7]), 0.8), (-1.7f64 * 0.8).exp(), max_relative = 1e-13);
    }

    #[test]
    fn two_stage_against_quadrature() {
        let r = rates(&[1.0, 2.0]);
        // ζ0 (e^{-ζ0 t} - e^{-ζ1 t}) / (ζ1 - ζ0) with ζ0 = 1, ζ1 = 2.
        let expected = (-1.0f64).exp() - (-2.0f64).exp();
        let quad = simplex_quadrature(&[1.0, 2.0], 1.0, 30);
        assert_relative_eq!(hypoexp_window_prob(&r, 1.0).unwrap(), quad, epsilon = 1e-10);
        assert_relative_eq!(hypoexp_window_prob(&r, 1.0).unwrap(), expected, epsilon = 1e-14);
        assert_relative_eq!(birth_chain_window_prob(&r, 1.0), quad, epsilon = 1e-10);
    }

    #[test]
    fn longer_chains_against_quadrature() {
        for r in [vec![1.0, 1.5, 2.7], vec![0.5, 0.9, 1.4, 3.0]] {
            let quad = simplex_quadrature(&r, 1.3, 24);
            let rs = rates(&r);
            assert_relative_eq!(hypoexp_window_prob(&rs, 1.3).unwrap(), quad, epsilon = 1e-10);
            assert_relative_eq!(birth_chain_window_prob(&rs, 1.3), quad, epsilon = 1e-10);
        }
    }

    #[test]
    fn equal_rates_give_poisson() {
        let r = rates(&[2.0; 6]);
        assert!(matches!(hypoexp_window_prob(&r, 1.0), Err(OracleError::DegenerateRates(..))));
        let p = birth_chain_window_prob(&r, 1.0);
        let poisson = (-2.0f64).exp() * 2f64.powi(5) / 120.0;
        assert_relative_eq!(p, poisson, max_relative = 1e-12);
    }

    #[test]
    fn near_zero_time() {
        let r = rates(&[1.0, 2.0, 3.0]);
        assert!(hypoexp_window_prob(&r, 1e-9).unwrap() < 1e-15);
        assert!(birth_chain_window_prob(&r, 1e-9) < 1e-15);
    }

    #[test]
    fn window_probs_sum_to_one_along_a_chain() {
        let all = [1.0, 1.4, 1.9, 2.2, 2.8, 3.1, 3.9, 4.4, 5.0, 5.3, 6.1, 6.6, 7.2];
        for t in [0.3, 1.0] {
            let total: f64 = (0..all.len())
                .map(|k| birth_chain_window_prob(&rates(&all[..=k]), t))
                .sum();
            // The tail beyond 12 jumps carries the remaining mass.
            let tail = 1.0 - total;
            assert!(tail >= -1e-12);
            if t == 0.3 {
                assert!(tail < 1e-8);
            }
        }
    }

    #[test]
    fn rate_validation() {
        assert!(RateSequence::new(vec![]).is_err());
        assert!(RateSequence::new(vec![1.0, 0.5]).is_err());
        assert!(RateSequence::new(vec![0.0]).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let rule = gauss_legendre_unit(8);
        let s: f64 = rule.iter().map(|(_, w)| w).sum();
        assert_relative_eq!(s, 1.0, epsilon = 1e-14);
        let m: f64 = rule.iter().map(|(x, w)| w * x.powi(15)).sum();
        assert_relative_eq!(m, 1.0 / 16.0, epsilon = 1e-14);
    }

    fn square() -> Cell {
        Cell::rectangle(TreeWord::root(), [0.0, 0.0], [1.0, 1.0]).unwrap()
    }

    #[test]
    fn k_zero_is_exact() {
        let m = Arc::new(HyperplaneMeasure::axis_parallel(1.0));
        let row = marginal_count_prob(&square(), &m, 1.0, 0, 1000, 1).unwrap();
        assert_relative_eq!(row.estimate, (-1.0f64).exp());
        assert_eq!(row.std_error, 0.0);
        assert_relative_eq!(exhaustive_event_prob(&square(), &m, 1.0, 0, 4, |_| true).unwrap(), (-1.0f64).exp());
    }

    #[test]
    fn guards() {
        let m = Arc::new(HyperplaneMeasure::axis_parallel(1.0));
        assert!(matches!(
            marginal_count_prob(&square(), &m, 1.0, 13, 1000, 1),
            Err(OracleError::KTooLarge { .. })
        ));
        assert!(matches!(
            marginal_count_prob(&square(), &m, 1.0, 2, 10, 1),
            Err(OracleError::TooFewSamples { .. })
        ));
        let iso = Arc::new(HyperplaneMeasure::isotropic(1.0));
        assert!(matches!(
            exhaustive_event_prob(&square(), &iso, 1.0, 1, 4, |_| true),
            Err(OracleError::NotDiscrete)
        ));
    }

    #[test]
    fn k_one_square_closed_reduction() {
        // Axis-parallel θ on the unit square: the first cut is vertical or
        // horizontal with facet length 1, so ζ_1 = 1 + 1/2 whatever its
        // position and P(k = 1) = P(S_1 <= 1 < S_2) for rates (1, 1.5).
        let m = Arc::new(HyperplaneMeasure::axis_parallel(1.0));
        let expected = hypoexp_window_prob(&rates(&[1.0, 1.5]), 1.0).unwrap();
        let ex = exhaustive_event_prob(&square(), &m, 1.0, 1, 8, |_| true).unwrap();
        assert_relative_eq!(ex, expected, epsilon = 1e-12);
        let row = marginal_count_prob(&square(), &m, 1.0, 1, 2000, 3).unwrap();
        assert_relative_eq!(row.estimate, expected, epsilon = 1e-12);
    }

    #[test]
    fn realized_tuples_are_valid_and_both_occur_at_k2() {
        let m = Arc::new(HyperplaneMeasure::axis_parallel(1.0));
        let mut rng = Streams::new(4, 0).u;
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            let s = sample_chain(&square(), &m, 1.0, 2, &mut rng).unwrap();
            let r = s.tessellation.tree_tuple().unwrap();
            crate::tree::TreeTuple::new(r.entries().to_vec()).unwrap();
            seen.insert(r);
        }
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn first_cut_vertical_is_half() {
        let m = Arc::new(HyperplaneMeasure::axis_parallel(1.0));
        let vertical = |t: &Tessellation| t.history()[0].hyperplane.direction.phi() == 0.0;
        let all = marginal_count_prob(&square(), &m, 1.0, 1, 4000, 9).unwrap();
        let ev = marginal_event_prob(&square(), &m, 1.0, 1, vertical, 4000, 9).unwrap();
        assert!((ev.estimate - 0.5 * all.estimate).abs() < 3.0 * ev.std_error.max(1e-12));
        let ex = exhaustive_event_prob(&square(), &m, 1.0, 1, 8, vertical).unwrap();
        assert_relative_eq!(ex, 0.5 * all.estimate, epsilon = 1e-12);
    }
}
