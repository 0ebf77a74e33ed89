//! Translation-invariant hyperplane measures `gamma * (Lebesgue ⊗ theta)`.
//!
//! The mass of the hit-set of a convex set `C` is
//! `gamma * ∫ width(C, u) theta(du)`, and the normalized hit distribution
//! factorizes into a width-weighted direction followed by a uniform offset
//! on the projection interval.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Cell, ConvexSet, Direction, Hyperplane, Point};

/// Upper bound on proposals consumed by a single rejection draw.
pub const MAX_REJECTION_PROPOSALS: u64 = 1_000_000_000;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("invalid measure field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("rejection sampling exceeded {0} proposals")]
    RejectionOverflow(u64),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> MeasureError {
    MeasureError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DirectionalDistribution {
    /// Atoms with positive weights summing to one.
    Discrete(Vec<(Direction, f64)>),
    /// Uniform angle on `[0, pi)` in the plane.
    Isotropic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperplaneMeasure {
    gamma: f64,
    theta: DirectionalDistribution,
    dimension: usize,
}

impl HyperplaneMeasure {
    /// Validates intensity, weights and the spanning condition. On the line
    /// the directional part is fixed to the single direction `+1`.
    pub fn new(gamma: f64, theta: DirectionalDistribution, dimension: usize) -> Result<Self, MeasureError> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(invalid("gamma", format!("must be a positive finite number, got {gamma}")));
        }
        let theta = match dimension {
            1 => DirectionalDistribution::Discrete(vec![(Direction::line(), 1.0)]),
            2 => match theta {
                DirectionalDistribution::Isotropic => DirectionalDistribution::Isotropic,
                DirectionalDistribution::Discrete(atoms) => {
                    if atoms.iter().any(|(_, w)| !(w.is_finite() && *w > 0.0)) {
                        return Err(invalid("theta", "atom weights must be positive"));
                    }
                    let total: f64 = atoms.iter().map(|(_, w)| w).sum();
                    if (total - 1.0).abs() > 1e-6 {
                        return Err(invalid("theta", format!("atom weights sum to {total}, expected 1")));
                    }
                    let mut phis: Vec<f64> = atoms.iter().map(|(d, _)| d.phi()).collect();
                    phis.sort_by(f64::total_cmp);
                    phis.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
                    if phis.len() < 2 {
                        return Err(invalid("theta", "directions must span the plane (need two distinct angles)"));
                    }
                    DirectionalDistribution::Discrete(
                        atoms.into_iter().map(|(d, w)| (d, w / total)).collect(),
                    )
                }
            },
            d => return Err(invalid("dimension", format!("unsupported dimension {d}"))),
        };
        Ok(HyperplaneMeasure {
            gamma,
            theta,
            dimension,
        })
    }

    /// Axis-parallel directions with equal weight.
    pub fn axis_parallel(gamma: f64) -> Self {
        Self::new(
            gamma,
            DirectionalDistribution::Discrete(vec![
                (Direction::from_angle(0.0), 0.5),
                (Direction::from_angle(PI / 2.0), 0.5),
            ]),
            2,
        )
        .expect("valid axis-parallel measure")
    }

    pub fn isotropic(gamma: f64) -> Self {
        Self::new(gamma, DirectionalDistribution::Isotropic, 2).expect("valid isotropic measure")
    }

    pub fn line(gamma: f64) -> Self {
        Self::new(gamma, DirectionalDistribution::Isotropic, 1).expect("valid line measure")
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn theta(&self) -> &DirectionalDistribution {
        &self.theta
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// `Λ([C])`.
    pub fn hit_mass<C: ConvexSet + ?Sized>(&self, set: &C) -> f64 {
        match &self.theta {
            DirectionalDistribution::Discrete(atoms) => {
                self.gamma * atoms.iter().map(|(u, w)| w * set.width(u)).sum::<f64>()
            }
            DirectionalDistribution::Isotropic => {
                self.gamma * WidthProfile::new(set.extreme_points()).integral() / PI
            }
        }
    }

    /// A sampler of `Λ̂_[C]` for a fixed cell.
    pub fn hit_sampler(&self, cell: &Cell) -> HitSampler {
        HitSampler::new(self, cell)
    }

    /// One draw from `Λ̂_[C]` by the direct two-stage method.
    pub fn sample_hitting<R: Rng + ?Sized>(&self, cell: &Cell, rng: &mut R) -> Hyperplane {
        self.hit_sampler(cell).sample(rng)
    }

    /// Draws from `Λ̂_[window]` until a hyperplane hits `cell`; returns the
    /// accepted hyperplane and the number of proposals used.
    pub fn sample_hitting_by_rejection<R: Rng + ?Sized>(
        &self,
        window: &Cell,
        cell: &Cell,
        rng: &mut R,
    ) -> Result<(Hyperplane, u64), MeasureError> {
        let sampler = self.hit_sampler(window);
        sampler.sample_until_hit(cell, rng)
    }
}

/// Direct sampler of the normalized hit distribution of one cell.
#[derive(Clone, Debug)]
pub struct HitSampler {
    cell: Cell,
    directions: DirectionSampler,
}

#[derive(Clone, Debug)]
enum DirectionSampler {
    /// Cumulative width-weighted atom masses.
    Discrete { atoms: Vec<Direction>, cumulative: Vec<f64> },
    Profile(WidthProfile),
}

impl HitSampler {
    pub fn new(measure: &HyperplaneMeasure, cell: &Cell) -> Self {
        let directions = match &measure.theta {
            DirectionalDistribution::Discrete(atoms) => {
                let mut acc = 0.0;
                let cumulative = atoms
                    .iter()
                    .map(|(u, w)| {
                        acc += w * cell.width(u);
                        acc
                    })
                    .collect();
                DirectionSampler::Discrete {
                    atoms: atoms.iter().map(|(u, _)| *u).collect(),
                    cumulative,
                }
            }
            DirectionalDistribution::Isotropic => DirectionSampler::Profile(WidthProfile::new(cell.vertices())),
        };
        HitSampler {
            cell: cell.clone(),
            directions,
        }
    }

    pub fn cell(&self) -> &Cell {
        &self.cell
    }

    pub fn sample_direction<R: Rng + ?Sized>(&self, rng: &mut R) -> Direction {
        match &self.directions {
            DirectionSampler::Discrete { atoms, cumulative } => {
                let total = *cumulative.last().expect("at least one atom");
                let target = rng.random::<f64>() * total;
                let i = cumulative.partition_point(|&c| c <= target).min(atoms.len() - 1);
                atoms[i]
            }
            DirectionSampler::Profile(p) => Direction::from_angle(p.sample(rng.random::<f64>())),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Hyperplane {
        let u = self.sample_direction(rng);
        let (lo, hi) = self.cell.projection_interval(&u);
        let alpha = lo + rng.random::<f64>() * (hi - lo);
        Hyperplane::new(alpha, u)
    }

    /// Rejection against this sampler's cell: the first proposal hitting
    /// `target` is returned along with the proposal count.
    pub fn sample_until_hit<R: Rng + ?Sized>(
        &self,
        target: &Cell,
        rng: &mut R,
    ) -> Result<(Hyperplane, u64), MeasureError> {
        for n in 1..=MAX_REJECTION_PROPOSALS {
            let h = self.sample(rng);
            if target.hits(&h) {
                return Ok((h, n));
            }
        }
        Err(MeasureError::RejectionOverflow(MAX_REJECTION_PROPOSALS))
    }
}

/// Width of a planar convex set as a function of the normal angle.
///
/// Between consecutive edge-normal angles the extreme vertices do not
/// change, so the width there is `<d, u(phi)> = |d| cos(phi - psi)` for a
/// fixed difference vector `d`. This gives the integral and the inverse
/// distribution function in closed form on each piece.
#[derive(Clone, Debug)]
pub struct WidthProfile {
    pieces: Vec<WidthPiece>,
    total: f64,
}

#[derive(Clone, Copy, Debug)]
struct WidthPiece {
    start: f64,
    end: f64,
    d: Point,
    /// Integral over all earlier pieces.
    before: f64,
    mass: f64,
}

impl WidthProfile {
    pub fn new(points: &[Point]) -> Self {
        let n = points.len();
        let mut cuts = vec![0.0, PI];
        if n >= 2 {
            for i in 0..n {
                let a = points[i];
                let b = points[(i + 1) % n];
                let edge = (b[1] - a[1]).atan2(b[0] - a[0]);
                cuts.push((edge + PI / 2.0).rem_euclid(PI));
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

        let mut pieces = Vec::with_capacity(cuts.len());
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            let (start, end) = (w[0], w[1].min(PI));
            if end <= start {
                continue;
            }
            let mid = 0.5 * (start + end);
            let (c, s) = (mid.cos(), mid.sin());
            let key = |p: &Point| c * p[0] + s * p[1];
            let mut imax = 0;
            let mut imin = 0;
            for (i, p) in points.iter().enumerate() {
                if key(p) > key(&points[imax]) {
                    imax = i;
                }
                if key(p) < key(&points[imin]) {
                    imin = i;
                }
            }
            let d = [points[imax][0] - points[imin][0], points[imax][1] - points[imin][1]];
            let mass = (d[0] * (end.sin() - start.sin()) + d[1] * (start.cos() - end.cos())).max(0.0);
            pieces.push(WidthPiece {
                start,
                end,
                d,
                before: acc,
                mass,
            });
            acc += mass;
        }
        WidthProfile { pieces, total: acc }
    }

    /// `∫_0^pi width(phi) dphi`.
    pub fn integral(&self) -> f64 {
        self.total
    }

    pub fn width_at(&self, phi: f64) -> f64 {
        let u = Direction::from_angle(phi);
        let p = self.piece_containing(u.phi());
        (p.d[0] * u.components()[0] + p.d[1] * u.components()[1]).max(0.0)
    }

    /// `∫_0^phi width / ∫_0^pi width`.
    pub fn cdf(&self, phi: f64) -> f64 {
        if phi <= 0.0 {
            return 0.0;
        }
        if phi >= PI {
            return 1.0;
        }
        let p = self.piece_containing(phi);
        let partial = p.d[0] * (phi.sin() - p.start.sin()) + p.d[1] * (p.start.cos() - phi.cos());
        ((p.before + partial.clamp(0.0, p.mass)) / self.total).clamp(0.0, 1.0)
    }

    fn piece_containing(&self, phi: f64) -> &WidthPiece {
        let i = self.pieces.partition_point(|p| p.end <= phi);
        &self.pieces[i.min(self.pieces.len() - 1)]
    }

    /// The angle at probability level `q` in `[0, 1)`.
    pub fn sample(&self, q: f64) -> f64 {
        let target = q * self.total;
        let i = self
            .pieces
            .partition_point(|p| p.before + p.mass <= target)
            .min(self.pieces.len() - 1);
        let p = &self.pieces[i];
        let r = (p.d[0] * p.d[0] + p.d[1] * p.d[1]).sqrt();
        if r == 0.0 || p.mass == 0.0 {
            return p.start;
        }
        let psi = p.d[1].atan2(p.d[0]);
        // Offset of the piece start from psi, in (-pi, pi]; the width is
        // nonnegative on the piece so this lies in [-pi/2, pi/2].
        let mut delta = (p.start - psi).rem_euclid(2.0 * PI);
        if delta > PI {
            delta -= 2.0 * PI;
        }
        let s = (delta.sin() + (target - p.before) / r).clamp(-1.0, 1.0);
        (p.start + (s.asin() - delta)).clamp(p.start, p.end)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub phi: f64,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ThetaSpec {
    Discrete { atoms: Vec<AtomSpec> },
    Isotropic,
}

/// Serialized form: `{"gamma": 1.0, "theta": {"kind": "isotropic"}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub gamma: f64,
    #[serde(default = "default_theta")]
    pub theta: ThetaSpec,
}

fn default_theta() -> ThetaSpec {
    ThetaSpec::Isotropic
}

impl MeasureSpec {
    pub fn build(&self, dimension: usize) -> Result<HyperplaneMeasure, MeasureError> {
        let theta = match &self.theta {
            ThetaSpec::Isotropic => DirectionalDistribution::Isotropic,
            ThetaSpec::Discrete { atoms } => {
                if atoms.iter().any(|a| !a.phi.is_finite()) {
                    return Err(invalid("theta", "atom angle must be finite"));
                }
                DirectionalDistribution::Discrete(
                    atoms.iter().map(|a| (Direction::from_angle(a.phi), a.w)).collect(),
                )
            }
        };
        HyperplaneMeasure::new(self.gamma, theta, dimension)
    }
}
