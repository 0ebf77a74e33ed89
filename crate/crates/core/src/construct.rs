//! The three simulators of the STIT process in a window.
//!
//! * `lifetime`: every live cell carries an exponential clock with rate
//!   `Λ([C])`; a dying cell is cut by a hyperplane found by rejection from
//!   window-hitting proposals.
//! * `jumpchain`: exponential holding times with rate ζ, a cell chosen with
//!   probability `Λ([C]) / ζ`, and a hyperplane taken from one shared
//!   stream of window-hitting proposals.
//! * `density`: a hyperplane drawn from `Σ_C Λ_[C] / ζ`, and the divided
//!   cell chosen uniformly among the cells it hits. Every draw is used.
//!
//! Each replication owns three independent random streams: `u` for cell
//! selection, `v` for exponential clocks and `g` for hyperplanes.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{Cell, ConvexSet, Direction, Hyperplane, Point, EPS_VOL};
use crate::measure::{DirectionalDistribution, HitSampler, HyperplaneMeasure, MeasureError, MeasureSpec, WidthProfile};
use crate::tess::{TessError, Tessellation};
use crate::tree::TreeWord;

/// Upper bound on resampling attempts after measure-zero grazing cuts.
const MAX_DEGENERATE_RETRIES: usize = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum ConstructError {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Tess(#[from] TessError),
    #[error("time {t} outside [0, {t_end}]")]
    OutOfRange { t: f64, t_end: f64 },
    #[error("too many degenerate cuts while dividing `{0}`")]
    DegenerateLoop(TreeWord),
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
#[error("invalid config field `{field}`: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    Lifetime,
    Jumpchain,
    Density,
}

impl Construction {
    pub const ALL: [Construction; 3] = [Construction::Lifetime, Construction::Jumpchain, Construction::Density];

    pub fn name(self) -> &'static str {
        match self {
            Construction::Lifetime => "lifetime",
            Construction::Jumpchain => "jumpchain",
            Construction::Density => "density",
        }
    }
}

impl std::str::FromStr for Construction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lifetime" => Ok(Construction::Lifetime),
            "jumpchain" => Ok(Construction::Jumpchain),
            "density" => Ok(Construction::Density),
            other => Err(format!("unknown construction `{other}`")),
        }
    }
}

/// Window description as it appears in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WindowSpec {
    Interval { lo: f64, hi: f64 },
    Rectangle { lo: Point, hi: Point },
    Polygon { vertices: Vec<Point> },
}

impl WindowSpec {
    pub fn build(&self) -> Result<Cell, ConfigError> {
        let root = TreeWord::root();
        match self {
            WindowSpec::Interval { lo, hi } => Cell::interval(root, *lo, *hi),
            WindowSpec::Rectangle { lo, hi } => {
                if !(hi[0] > lo[0] && hi[1] > lo[1]) {
                    return Err(ConfigError::new("window", "rectangle must have hi > lo in both coordinates"));
                }
                Cell::rectangle(root, *lo, *hi)
            }
            WindowSpec::Polygon { vertices } => Cell::polygon(root, vertices),
        }
        .map_err(|e| ConfigError::new("window", e.to_string()))
    }
}

/// A simulation config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub window: WindowSpec,
    pub measure: MeasureSpec,
    pub t_end: f64,
    pub seed: u64,
    pub construction: Construction,
    #[serde(default = "one")]
    pub replications: u64,
    /// Optional stop after this many jumps, even before `t_end`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_jumps: Option<usize>,
}

fn one() -> u64 {
    1
}

impl SimConfig {
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(ConfigError::new("t_end", format!("must be positive and finite, got {}", self.t_end)));
        }
        if self.replications < 1 {
            return Err(ConfigError::new("replications", "must be at least 1"));
        }
        let window = self.window.build()?;
        let measure = self.measure.build(window.dimension()).map_err(|e| match e {
            MeasureError::Invalid { field, reason } => ConfigError::new(field, reason),
            other => ConfigError::new("measure", other.to_string()),
        })?;
        Ok(Scenario {
            window,
            measure: Arc::new(measure),
            t_end: self.t_end,
            max_jumps: self.max_jumps,
        })
    }
}

/// A validated window, measure and horizon.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub window: Cell,
    pub measure: Arc<HyperplaneMeasure>,
    pub t_end: f64,
    pub max_jumps: Option<usize>,
}

impl Scenario {
    pub fn new(window: Cell, measure: HyperplaneMeasure, t_end: f64) -> Self {
        Scenario {
            window,
            measure: Arc::new(measure),
            t_end,
            max_jumps: None,
        }
    }

    pub fn with_max_jumps(mut self, n: usize) -> Self {
        self.max_jumps = Some(n);
        self
    }

    fn exhausted(&self, jumps: usize) -> bool {
        self.max_jumps.is_some_and(|m| jumps >= m)
    }
}

/// The three independent random streams of one replication.
pub struct Streams {
    pub u: ChaCha8Rng,
    pub v: ChaCha8Rng,
    pub g: ChaCha8Rng,
}

impl Streams {
    /// Streams `4r`, `4r+1`, `4r+2` of the ChaCha generator keyed by `seed`.
    pub fn new(seed: u64, replication: u64) -> Self {
        let stream = |k: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(replication.wrapping_mul(4).wrapping_add(k));
            rng
        };
        Streams {
            u: stream(0),
            v: stream(1),
            g: stream(2),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub final_state: Tessellation,
    pub t_end: f64,
    pub construction: Construction,
    pub seed: u64,
    pub replication: u64,
    /// Hyperplane draws consumed in total.
    pub proposal_count: u64,
    /// Draws consumed by each jump.
    pub proposals_per_jump: Vec<u64>,
    /// ζ of the state before each jump, followed by the final ζ.
    pub zetas: Vec<f64>,
    /// Proposal rounds discarded as degenerate (not counted in proposals).
    pub degenerate_retries: u64,
}

impl Trajectory {
    pub fn jumps(&self) -> usize {
        self.final_state.history().len()
    }

    pub fn n_cells(&self) -> usize {
        self.final_state.len()
    }

    /// Holding times `S_n - S_{n-1}` of completed intervals.
    pub fn holding_times(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.final_state
            .history()
            .iter()
            .map(|j| {
                let d = j.time - prev;
                prev = j.time;
                d
            })
            .collect()
    }

    /// The state after the last jump at or before `t`.
    pub fn state_at(&self, t: f64) -> Result<Tessellation, ConstructError> {
        if !(0.0..=self.t_end).contains(&t) {
            return Err(ConstructError::OutOfRange { t, t_end: self.t_end });
        }
        let hist = self.final_state.history();
        let n = hist.partition_point(|j| j.time <= t);
        Ok(Tessellation::replay(
            self.final_state.window(),
            self.final_state.measure().clone(),
            &hist[..n],
        )?)
    }
}

/// The outcome of one division step from a given state.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub label: TreeWord,
    pub hyperplane: Hyperplane,
    /// Draws in the proposal round that produced `hyperplane`.
    pub proposals: u64,
    /// Rounds discarded because the cut left a piece below the volume floor.
    pub degenerate_retries: u64,
}

fn valid_cut(t: &Tessellation, cell: &Cell, h: &Hyperplane) -> bool {
    cell.hits_interior(h) && cell.clip_with_min_volume(h, EPS_VOL * t.window().volume()).is_ok()
}

/// Cell selection by partitioning `[0, 1)` into intervals of length
/// `Λ([C]) / ζ` in label order.
pub fn select_by_mass(t: &Tessellation, u: f64) -> &TreeWord {
    let target = u * t.zeta();
    let mut acc = 0.0;
    let mut last = None;
    for (label, m) in t.labels().zip(t.cells_with_mass().map(|(_, m)| m)) {
        acc += m;
        if target < acc {
            return label;
        }
        last = Some(label);
    }
    last.expect("tessellation has at least one cell")
}

/// Rejection from the window sampler until a proposal cuts `label`.
fn reject_into(
    t: &Tessellation,
    window: &HitSampler,
    label: &TreeWord,
    g: &mut ChaCha8Rng,
) -> Result<(Hyperplane, u64, u64), ConstructError> {
    let cell = t.cell(label).ok_or_else(|| TessError::UnknownLabel(label.clone()))?;
    for retries in 0..MAX_DEGENERATE_RETRIES {
        let (h, n) = window.sample_until_hit(cell, g)?;
        if valid_cut(t, cell, &h) {
            return Ok((h, n, retries as u64));
        }
    }
    Err(ConstructError::DegenerateLoop(label.clone()))
}

/// One jump-chain step: select by `U`, then rejection on the shared stream.
pub fn jumpchain_step(
    t: &Tessellation,
    window: &HitSampler,
    streams: &mut Streams,
) -> Result<Step, ConstructError> {
    let label = select_by_mass(t, streams.u.random::<f64>()).clone();
    let (hyperplane, proposals, degenerate_retries) = reject_into(t, window, &label, &mut streams.g)?;
    Ok(Step {
        label,
        hyperplane,
        proposals,
        degenerate_retries,
    })
}

/// One lifetime step from frozen state: independent exponential clocks on
/// all cells (ties broken by label order), then rejection.
pub fn lifetime_step(
    t: &Tessellation,
    window: &HitSampler,
    streams: &mut Streams,
) -> Result<Step, ConstructError> {
    let mut best: Option<(f64, &TreeWord)> = None;
    for (label, (_, m)) in t.labels().zip(t.cells_with_mass()) {
        let z: f64 = streams.v.sample(Exp1);
        let death = z / m;
        if best.is_none_or(|(b, _)| death < b) {
            best = Some((death, label));
        }
    }
    let label = best.expect("nonempty").1.clone();
    let (hyperplane, proposals, degenerate_retries) = reject_into(t, window, &label, &mut streams.g)?;
    Ok(Step {
        label,
        hyperplane,
        proposals,
        degenerate_retries,
    })
}

/// Sampler of `Γ̂ = Σ_C Λ_[C] / ζ` for a tessellation.
pub struct DensitySampler {
    profiles: HashMap<TreeWord, WidthProfile>,
}

impl Default for DensitySampler {
    fn default() -> Self {
        Self::new()
    }
}

impl DensitySampler {
    pub fn new() -> Self {
        DensitySampler {
            profiles: HashMap::new(),
        }
    }

    /// Drops cached tables of cells that no longer exist.
    pub fn forget(&mut self, label: &TreeWord) {
        self.profiles.remove(label);
    }

    /// Direction with density `∝ Σ_C width(C, u)` with respect to θ.
    pub fn sample_direction<R: Rng + ?Sized>(&mut self, t: &Tessellation, rng: &mut R) -> Direction {
        match t.measure().theta() {
            DirectionalDistribution::Discrete(atoms) => {
                if atoms.len() == 1 {
                    return atoms[0].0;
                }
                let weights: Vec<f64> = atoms
                    .iter()
                    .map(|(u, w)| w * t.cells().map(|c| c.width(u)).sum::<f64>())
                    .collect();
                let total: f64 = weights.iter().sum();
                let mut target = rng.random::<f64>() * total;
                for (i, w) in weights.iter().enumerate() {
                    if target < *w {
                        return atoms[i].0;
                    }
                    target -= w;
                }
                atoms[atoms.len() - 1].0
            }
            DirectionalDistribution::Isotropic => {
                // The aggregate width density is the mixture of the per-cell
                // densities with weights ∫ width(C, ·) ∝ Λ([C]).
                let label = select_by_mass(t, rng.random::<f64>()).clone();
                let cell = t.cell(&label).expect("selected label is live");
                let profile = self
                    .profiles
                    .entry(label)
                    .or_insert_with(|| WidthProfile::new(cell.vertices()));
                Direction::from_angle(profile.sample(rng.random::<f64>()))
            }
        }
    }

    /// Offset with density `∝ Σ_C 1{α ∈ π_u C}`: inverse distribution
    /// function of the step function over the union of projection intervals.
    pub fn sample_offset<R: Rng + ?Sized>(t: &Tessellation, u: &Direction, rng: &mut R) -> f64 {
        let mut events: Vec<(f64, i32)> = Vec::with_capacity(2 * t.len());
        for c in t.cells() {
            let (lo, hi) = c.projection_interval(u);
            events.push((lo, 1));
            events.push((hi, -1));
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        // Segments (start, length, multiplicity, mass before) with constant
        // multiplicity.
        let mut segments: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(events.len());
        let mut count = 0i32;
        let mut acc = 0.0;
        for w in events.windows(2) {
            count += w[0].1;
            let len = w[1].0 - w[0].0;
            if count > 0 && len > 0.0 {
                segments.push((w[0].0, len, count as f64, acc));
                acc += count as f64 * len;
            }
        }
        let target = rng.random::<f64>() * acc;
        let i = segments
            .partition_point(|s| s.3 + s.1 * s.2 <= target)
            .min(segments.len() - 1);
        let (start, len, mult, before) = segments[i];
        (start + (target - before) / mult).clamp(start, start + len)
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, t: &Tessellation, rng: &mut R) -> Hyperplane {
        let u = self.sample_direction(t, rng);
        let alpha = Self::sample_offset(t, &u, rng);
        Hyperplane::new(alpha, u)
    }

    /// One density step: `H ~ Γ̂`, then a uniform choice among the `ξ(H)`
    /// hit cells in label order.
    pub fn step(&mut self, t: &Tessellation, streams: &mut Streams) -> Result<Step, ConstructError> {
        for retries in 0..MAX_DEGENERATE_RETRIES {
            let h = self.sample(t, &mut streams.g);
            let hit = t.hit_labels(&h);
            if hit.is_empty() {
                continue;
            }
            let u = streams.u.random::<f64>();
            let k = ((u * hit.len() as f64) as usize).min(hit.len() - 1);
            let label = hit[k].clone();
            let cell = t.cell(&label).expect("hit label is live");
            if valid_cut(t, cell, &h) {
                return Ok(Step {
                    label,
                    hyperplane: h,
                    proposals: 1,
                    degenerate_retries: retries as u64,
                });
            }
        }
        Err(ConstructError::DegenerateLoop(TreeWord::root()))
    }
}

fn finish(
    t: Tessellation,
    scn: &Scenario,
    construction: Construction,
    seed: u64,
    replication: u64,
    proposals_per_jump: Vec<u64>,
    mut zetas: Vec<f64>,
    degenerate_retries: u64,
) -> Trajectory {
    zetas.push(t.zeta());
    Trajectory {
        final_state: t,
        t_end: scn.t_end,
        construction,
        seed,
        replication,
        proposal_count: proposals_per_jump.iter().sum(),
        proposals_per_jump,
        zetas,
        degenerate_retries,
    }
}

#[derive(PartialEq)]
struct Death {
    time: f64,
    label: TreeWord,
}

impl Eq for Death {}

impl Ord for Death {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then_with(|| self.label.cmp(&other.label))
    }
}

impl PartialOrd for Death {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Event-queue simulation with per-cell exponential lifetimes.
pub fn run_lifetime(scn: &Scenario, seed: u64, replication: u64) -> Result<Trajectory, ConstructError> {
    let mut streams = Streams::new(seed, replication);
    let mut t = Tessellation::initial(&scn.window, scn.measure.clone())?;
    let window = scn.measure.hit_sampler(&scn.window);
    let mut queue = BinaryHeap::new();
    let z: f64 = streams.v.sample(Exp1);
    queue.push(Reverse(Death {
        time: z / t.zeta(),
        label: TreeWord::root(),
    }));
    let mut per_jump = Vec::new();
    let mut zetas = Vec::new();
    let mut retries = 0;
    while let Some(Reverse(death)) = queue.pop() {
        if death.time > scn.t_end || scn.exhausted(per_jump.len()) {
            break;
        }
        let (h, n, r) = reject_into(&t, &window, &death.label, &mut streams.g)?;
        retries += r;
        zetas.push(t.zeta());
        t.divide(&death.label, &h, death.time)?;
        per_jump.push(n);
        for child in [death.label.minus(), death.label.plus()] {
            let m = t.mass(&child).expect("child just inserted");
            let z: f64 = streams.v.sample(Exp1);
            queue.push(Reverse(Death {
                time: death.time + z / m,
                label: child,
            }));
        }
    }
    Ok(finish(t, scn, Construction::Lifetime, seed, replication, per_jump, zetas, retries))
}

/// Embedded jump chain with shared-stream rejection.
pub fn run_jumpchain(scn: &Scenario, seed: u64, replication: u64) -> Result<Trajectory, ConstructError> {
    let mut streams = Streams::new(seed, replication);
    let mut t = Tessellation::initial(&scn.window, scn.measure.clone())?;
    let window = scn.measure.hit_sampler(&scn.window);
    let mut clock = 0.0;
    let mut per_jump = Vec::new();
    let mut zetas = Vec::new();
    let mut retries = 0;
    while !scn.exhausted(per_jump.len()) {
        let v: f64 = streams.v.sample(Exp1);
        clock += v / t.zeta();
        if clock > scn.t_end {
            break;
        }
        let step = jumpchain_step(&t, &window, &mut streams)?;
        zetas.push(t.zeta());
        t.divide(&step.label, &step.hyperplane, clock)?;
        per_jump.push(step.proposals);
        retries += step.degenerate_retries;
    }
    Ok(finish(t, scn, Construction::Jumpchain, seed, replication, per_jump, zetas, retries))
}

/// Density-driven construction: every hyperplane drawn is used.
pub fn run_density(scn: &Scenario, seed: u64, replication: u64) -> Result<Trajectory, ConstructError> {
    let mut streams = Streams::new(seed, replication);
    let mut t = Tessellation::initial(&scn.window, scn.measure.clone())?;
    let mut sampler = DensitySampler::new();
    let mut clock = 0.0;
    let mut per_jump = Vec::new();
    let mut zetas = Vec::new();
    let mut retries = 0;
    while !scn.exhausted(per_jump.len()) {
        let v: f64 = streams.v.sample(Exp1);
        clock += v / t.zeta();
        if clock > scn.t_end {
            break;
        }
        let step = sampler.step(&t, &mut streams)?;
        zetas.push(t.zeta());
        t.divide(&step.label, &step.hyperplane, clock)?;
        sampler.forget(&step.label);
        per_jump.push(step.proposals);
        retries += step.degenerate_retries;
    }
    Ok(finish(t, scn, Construction::Density, seed, replication, per_jump, zetas, retries))
}

pub fn run(
    scn: &Scenario,
    construction: Construction,
    seed: u64,
    replication: u64,
) -> Result<Trajectory, ConstructError> {
    match construction {
        Construction::Lifetime => run_lifetime(scn, seed, replication),
        Construction::Jumpchain => run_jumpchain(scn, seed, replication),
        Construction::Density => run_density(scn, seed, replication),
    }
}

/// One step of `construction` from a frozen state.
pub fn single_step(
    t: &Tessellation,
    construction: Construction,
    streams: &mut Streams,
) -> Result<Step, ConstructError> {
    let window = t.measure().hit_sampler(t.window());
    match construction {
        Construction::Lifetime => lifetime_step(t, &window, streams),
        Construction::Jumpchain => jumpchain_step(t, &window, streams),
        Construction::Density => DensitySampler::new().step(t, streams),
    }
}

/// Runs replications `0..n` in parallel and maps each trajectory through
/// `f`; results are ordered by replication index.
pub fn run_replications<T, F>(
    scn: &Scenario,
    construction: Construction,
    seed: u64,
    n: u64,
    f: F,
) -> Result<Vec<T>, ConstructError>
where
    T: Send,
    F: Fn(Trajectory) -> T + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(|r| run(scn, construction, seed, r).map(&f))
        .collect()
}
