//! Test kit: empirical summaries, chi-square and Kolmogorov–Smirnov tests,
//! and the proposal-count benchmark.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::construct::{run_replications, single_step, ConstructError, Construction, Scenario, Streams};
use crate::tess::Tessellation;
use crate::tree::TreeWord;

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_MIN_BIN: u64 = 5;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    pub values: Vec<f64>,
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    /// Counts per integer value for count data; per equal-width bin for reals.
    pub histogram: BTreeMap<i64, u64>,
}

impl EmpiricalSummary {
    pub fn from_counts(counts: &[u64]) -> Result<Self, StatsError> {
        let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        let mut histogram = BTreeMap::new();
        for &c in counts {
            *histogram.entry(c as i64).or_insert(0) += 1;
        }
        Self::build(values, histogram)
    }

    pub fn from_reals(values: &[f64]) -> Result<Self, StatsError> {
        const BINS: usize = 20;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::Invalid("non-finite sample".into()));
        }
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo) / BINS as f64;
        let mut histogram = BTreeMap::new();
        for &v in values {
            let b = if width > 0.0 {
                (((v - lo) / width) as usize).min(BINS - 1)
            } else {
                0
            };
            *histogram.entry(b as i64).or_insert(0) += 1;
        }
        Self::build(values.to_vec(), histogram)
    }

    fn build(values: Vec<f64>, histogram: BTreeMap<i64, u64>) -> Result<Self, StatsError> {
        let n = values.len();
        if n == 0 {
            return Err(StatsError::InsufficientData("empty sample".into()));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Ok(EmpiricalSummary {
            values,
            n,
            mean,
            variance,
            histogram,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    ChiSquare,
    Ks,
    Z,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub kind: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dof: Option<usize>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
}

impl TestReport {
    fn new(kind: TestKind, statistic: f64, p_value: f64, alpha: f64, dof: Option<usize>) -> Self {
        let p_value = if p_value.is_nan() { 0.0 } else { p_value.clamp(0.0, 1.0) };
        TestReport {
            kind,
            statistic,
            p_value,
            alpha,
            pass: p_value > alpha,
            dof,
            label: String::new(),
        }
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

fn chi_square_sf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(dof as f64).map(|d| d.sf(x)).unwrap_or(0.0)
}

/// Greedily merges adjacent bins until every pooled bin reaches `min`
/// according to `key`; a short tail is folded into the last full bin.
fn pool_bins<T: Copy>(bins: &[T], min: f64, key: impl Fn(&[T]) -> f64) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::new();
    let mut cur = Vec::new();
    for &b in bins {
        cur.push(b);
        if key(&cur) >= min {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        match out.last_mut() {
            Some(last) => last.extend(cur),
            None => out.push(cur),
        }
    }
    out
}

/// Chi-square test of homogeneity between two samples of counts.
pub fn chi_square_two_sample(
    a: &EmpiricalSummary,
    b: &EmpiricalSummary,
    min_bin: u64,
    alpha: f64,
) -> Result<TestReport, StatsError> {
    let keys: Vec<i64> = a
        .histogram
        .keys()
        .chain(b.histogram.keys())
        .cloned()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let (na, nb) = (a.n as f64, b.n as f64);
    let total = na + nb;
    let rows: Vec<(f64, f64)> = keys
        .iter()
        .map(|k| {
            (
                *a.histogram.get(k).unwrap_or(&0) as f64,
                *b.histogram.get(k).unwrap_or(&0) as f64,
            )
        })
        .collect();
    // Pool until the smaller expected count in the bin is at least min_bin.
    let pooled = pool_bins(&rows, min_bin as f64, |bin| {
        let s: f64 = bin.iter().map(|(x, y)| x + y).sum();
        s * na.min(nb) / total
    });
    if pooled.len() < 2 {
        return Err(StatsError::InsufficientData(format!("{} usable bins", pooled.len())));
    }
    let mut stat = 0.0;
    for bin in &pooled {
        let oa: f64 = bin.iter().map(|r| r.0).sum();
        let ob: f64 = bin.iter().map(|r| r.1).sum();
        let ea = (oa + ob) * na / total;
        let eb = (oa + ob) * nb / total;
        stat += (oa - ea).powi(2) / ea + (ob - eb).powi(2) / eb;
    }
    let dof = pooled.len() - 1;
    Ok(TestReport::new(TestKind::ChiSquare, stat, chi_square_sf(stat, dof), alpha, Some(dof)))
}

/// Chi-square goodness of fit of `observed[i]` against probabilities
/// `probs[i]`. When the probabilities sum to less than one, the remainder
/// is a final bin holding every count not listed in `observed`.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], n: u64, min_bin: u64, alpha: f64) -> Result<TestReport, StatsError> {
    if observed.len() != probs.len() {
        return Err(StatsError::Invalid("observed and probs differ in length".into()));
    }
    let listed: u64 = observed.iter().sum();
    if listed > n || n == 0 {
        return Err(StatsError::Invalid("counts exceed sample size".into()));
    }
    let mut rows: Vec<(f64, f64)> = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| (o as f64, p * n as f64))
        .collect();
    let rest: f64 = 1.0 - probs.iter().sum::<f64>();
    if rest > 1e-12 || listed < n {
        rows.push(((n - listed) as f64, rest.max(0.0) * n as f64));
    }
    let pooled = pool_bins(&rows, min_bin as f64, |bin| bin.iter().map(|r| r.1).sum());
    if pooled.len() < 2 {
        return Err(StatsError::InsufficientData(format!("{} usable bins", pooled.len())));
    }
    let mut stat = 0.0;
    for bin in &pooled {
        let o: f64 = bin.iter().map(|r| r.0).sum();
        let e: f64 = bin.iter().map(|r| r.1).sum();
        if e <= 0.0 {
            if o > 0.0 {
                return Ok(TestReport::new(TestKind::ChiSquare, f64::INFINITY, 0.0, alpha, None));
            }
            continue;
        }
        stat += (o - e).powi(2) / e;
    }
    let dof = pooled.len() - 1;
    Ok(TestReport::new(TestKind::ChiSquare, stat, chi_square_sf(stat, dof), alpha, Some(dof)))
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Theta-function form converges quickly for small arguments.
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn ks_p(d: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F, alpha: f64) -> Result<TestReport, StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::InsufficientData(format!("{} samples", samples.len())));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(StatsError::Invalid("NaN sample".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    Ok(TestReport::new(TestKind::Ks, d, ks_p(d, n), alpha, None))
}

/// KS test of `rate_i * sample_i` against Exp(1).
pub fn ks_exponential(samples: &[f64], rates: &[f64], alpha: f64) -> Result<TestReport, StatsError> {
    if samples.len() != rates.len() {
        return Err(StatsError::Invalid("samples and rates differ in length".into()));
    }
    if samples.iter().chain(rates).any(|&x| !(x > 0.0)) {
        return Err(StatsError::Invalid("samples and rates must be positive".into()));
    }
    let scaled: Vec<f64> = samples.iter().zip(rates).map(|(s, r)| s * r).collect();
    ks_one_sample(&scaled, |x| 1.0 - (-x).exp(), alpha)
}

pub fn ks_uniform(samples: &[f64], alpha: f64) -> Result<TestReport, StatsError> {
    ks_one_sample(samples, |x| x.clamp(0.0, 1.0), alpha)
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<TestReport, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::InsufficientData("fewer than 2 samples".into()));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(TestReport::new(TestKind::Ks, d, ks_p(d, na * nb / (na + nb)), alpha, None))
}

/// Two-sided z-test. Passes when `|z| <= sigmas`; the p-value is reported
/// and `alpha` is the two-sided level matching `sigmas`.
pub fn z_test(estimate: f64, expected: f64, std_error: f64, sigmas: f64) -> TestReport {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let z = if std_error > 0.0 {
        (estimate - expected) / std_error
    } else if estimate == expected {
        0.0
    } else {
        f64::INFINITY
    };
    let p = 2.0 * normal.sf(z.abs());
    let alpha = 2.0 * normal.sf(sigmas);
    let mut r = TestReport::new(TestKind::Z, z, p, alpha, None);
    r.pass = z.abs() <= sigmas;
    r
}

/// Counts of the cell chosen by `n` independent single steps from a frozen
/// state, ordered by label.
pub fn selection_counts(
    frozen: &Tessellation,
    construction: Construction,
    n: usize,
    seed: u64,
) -> Result<BTreeMap<TreeWord, u64>, ConstructError> {
    use rayon::prelude::*;
    let picks: Vec<TreeWord> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut streams = Streams::new(seed, i);
            single_step(frozen, construction, &mut streams).map(|s| s.label)
        })
        .collect::<Result<_, _>>()?;
    let mut counts: BTreeMap<TreeWord, u64> = frozen.labels().map(|l| (l.clone(), 0)).collect();
    for p in picks {
        *counts.entry(p).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Chi-square of selected-cell counts against `Λ([C]) / ζ`.
pub fn selection_frequency_test(
    frozen: &Tessellation,
    construction: Construction,
    n: usize,
    seed: u64,
    alpha: f64,
) -> Result<TestReport, StatsError> {
    if frozen.len() < 2 {
        return Err(StatsError::Invalid("frozen state needs at least two cells".into()));
    }
    let counts = selection_counts(frozen, construction, n, seed).map_err(|e| StatsError::Invalid(e.to_string()))?;
    let zeta = frozen.zeta();
    let observed: Vec<u64> = counts.values().cloned().collect();
    let probs: Vec<f64> = counts.keys().map(|l| frozen.mass(l).unwrap_or(0.0) / zeta).collect();
    chi_square_gof(&observed, &probs, n as u64, DEFAULT_MIN_BIN, alpha)
        .map(|r| r.labeled(format!("selection/{}", construction.name())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub construction: Construction,
    /// Number of cells in the state from which the jump was made.
    pub n_cells: usize,
    pub jumps: usize,
    pub mean_proposals: f64,
    /// `n · Λ([W]) / ζ` averaged over the same states; 1 for density.
    pub predicted: f64,
}

/// Proposal table plus the number of discarded degenerate rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub rows: Vec<BenchRow>,
    pub degenerate_retries: BTreeMap<Construction, u64>,
}

/// Mean proposals per jump as a function of the number of cells.
pub fn benchmark_proposals(
    scn: &Scenario,
    constructions: &[Construction],
    replications: usize,
    seed: u64,
) -> Result<Benchmark, ConstructError> {
    let window_mass = scn.measure.hit_mass(&scn.window);
    let mut rows = Vec::new();
    let mut degenerate_retries = BTreeMap::new();
    for &c in constructions {
        let per_rep = run_replications(scn, c, seed, replications as u64, |tr| {
            let jumps: Vec<_> = tr
                .proposals_per_jump
                .iter()
                .zip(&tr.zetas)
                .enumerate()
                .map(|(j, (&p, &z))| (j + 1, p, (j + 1) as f64 * window_mass / z))
                .collect();
            (jumps, tr.degenerate_retries)
        })?;
        let mut acc: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
        let mut retries = 0;
        for (jumps, r) in per_rep {
            retries += r;
            for (n, p, pred) in jumps {
                let e = acc.entry(n).or_insert((0, 0.0, 0.0));
                e.0 += 1;
                e.1 += p as f64;
                e.2 += pred;
            }
        }
        degenerate_retries.insert(c, retries);
        for (n, (jumps, p, pred)) in acc {
            rows.push(BenchRow {
                construction: c,
                n_cells: n,
                jumps,
                mean_proposals: p / jumps as f64,
                predicted: if c == Construction::Density { 1.0 } else { pred / jumps as f64 },
            });
        }
    }
    Ok(Benchmark {
        rows,
        degenerate_retries,
    })
}
