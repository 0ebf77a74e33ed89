//! Command-line front end: `simulate`, `compare`, `render`, `oracle`, `bench`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::construct::{run, Construction, SimConfig, Trajectory};
use crate::geometry::ConvexSet;
use crate::oracle::{marginal_count_prob, OracleRow};
use crate::stats::{benchmark_proposals, chi_square_two_sample, ks_two_sample, z_test, EmpiricalSummary, TestReport};
use crate::tess::{JumpRecordRepr, Tessellation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAILED: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("comparison failed: {0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Failed(_) => EXIT_FAILED,
        }
    }
}

fn runtime<E: std::fmt::Display>(ctx: &str) -> impl Fn(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{ctx}: {e}"))
}

#[derive(Parser, Debug)]
#[command(name = "stitlab", version, about = "STIT tessellation simulator")]
pub struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run replications and write trajectories, summary and manifest.
    Simulate(SimulateArgs),
    /// Compare summary CSVs (and optionally oracle tables) statistically.
    Compare(CompareArgs),
    /// Render the state of a 2D trajectory at time `t` as SVG.
    Render(RenderArgs),
    /// Tabulate the marginal cell-count law without simulating jump times.
    Oracle(OracleArgs),
    /// Proposals per jump as a function of the number of cells.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Config JSON or a manifest written by a previous run.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub construction: Option<Construction>,
    #[arg(long)]
    pub replications: Option<u64>,
    /// Add a wall_time_ns column (makes the CSV nondeterministic).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Run directories, summary CSVs, or oracle JSON tables.
    #[arg(required = true, num_args = 2..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = crate::stats::DEFAULT_ALPHA)]
    pub alpha: f64,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// A rep_XXXXX.jsonl file; config.json is read from the same directory.
    #[arg(long)]
    pub trajectory: PathBuf,
    #[arg(long)]
    pub t: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Config to use instead of the sibling config.json.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k_max: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<usize>,
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("stitlab: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        // Fails harmlessly if a pool already exists (e.g. repeated calls in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Render(a) => cmd_render(&a),
        Command::Oracle(a) => cmd_oracle(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
    pub config: SimConfig,
}

/// SHA-256 of the config serialized with sorted keys.
pub fn config_hash(config: &SimConfig) -> String {
    let value = serde_json::to_value(config).expect("config serializes");
    let digest = Sha256::digest(canonical_json(&value).as_bytes());
    hex::encode(digest)
}

fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<_> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

/// Reads a config file; a manifest is accepted and its embedded config used.
pub fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let value = match value.get("config") {
        Some(inner) if value.get("config_hash").is_some() => inner.clone(),
        _ => value,
    };
    let config: SimConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
    config.scenario().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(runtime("creating output directory"))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

pub const SUMMARY_COLUMNS: [&str; 10] = [
    "replication",
    "seed",
    "t_end",
    "construction",
    "n_cells",
    "zeta_final",
    "boundary_length",
    "proposal_count",
    "n_jumps",
    "wall_time_ns",
];

pub fn trajectory_jsonl(tr: &Trajectory) -> String {
    let mut out = String::new();
    for j in tr.final_state.history() {
        out.push_str(&serde_json::to_string(&JumpRecordRepr::from(j)).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut config = load_config(&a.config)?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(c) = a.construction {
        config.construction = c;
    }
    if let Some(r) = a.replications {
        if r < 1 {
            return Err(CliError::Config("invalid config field `replications`: must be at least 1".into()));
        }
        config.replications = r;
    }
    let scn = config.scenario().map_err(|e| CliError::Config(e.to_string()))?;
    log::info!(
        "simulating {} replications of {} (seed {})",
        config.replications,
        config.construction.name(),
        config.seed
    );
    let results: Vec<(Trajectory, u128)> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let start = Instant::now();
            let tr = run(&scn, config.construction, config.seed, r)?;
            Ok((tr, start.elapsed().as_nanos()))
        })
        .collect::<Result<_, crate::construct::ConstructError>>()
        .map_err(runtime("simulation"))?;

    fs::create_dir_all(&a.out).map_err(runtime("creating output directory"))?;
    let mut outputs = Vec::new();
    let columns = if a.timing { &SUMMARY_COLUMNS[..] } else { &SUMMARY_COLUMNS[..9] };
    let mut csv = columns.join(",");
    csv.push('\n');
    for (tr, nanos) in &results {
        let name = format!("rep_{:05}.jsonl", tr.replication);
        write(&a.out.join(&name), &trajectory_jsonl(tr))?;
        outputs.push(name);
        let fin = format!("rep_{:05}.final.json", tr.replication);
        let record = serde_json::to_string(&tr.final_state.to_record()).map_err(runtime("serializing"))?;
        write(&a.out.join(&fin), &record)?;
        outputs.push(fin);
        let mut row = vec![
            tr.replication.to_string(),
            tr.seed.to_string(),
            sci(tr.t_end),
            tr.construction.name().to_string(),
            tr.n_cells().to_string(),
            sci(tr.final_state.zeta()),
            sci(tr.final_state.boundary_length()),
            tr.proposal_count.to_string(),
            tr.jumps().to_string(),
        ];
        if a.timing {
            row.push(nanos.to_string());
        }
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    write(&a.out.join("summary.csv"), &csv)?;
    outputs.push("summary.csv".into());
    let config_text = serde_json::to_string_pretty(&config).map_err(runtime("serializing"))?;
    write(&a.out.join("config.json"), &config_text)?;
    outputs.push("config.json".into());
    let manifest = RunManifest {
        config_hash: config_hash(&config),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        outputs,
        config,
    };
    write(
        &a.out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).map_err(runtime("serializing"))?,
    )?;
    Ok(())
}

/// One row of a summary CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub replication: u64,
    pub seed: u64,
    pub t_end: f64,
    pub construction: String,
    pub n_cells: u64,
    pub zeta_final: f64,
    pub boundary_length: f64,
    pub proposal_count: u64,
    pub n_jumps: u64,
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| CliError::Runtime(format!("{}: missing column {name}", path.display())))
    };
    let idx = [
        col("replication")?,
        col("seed")?,
        col("t_end")?,
        col("construction")?,
        col("n_cells")?,
        col("zeta_final")?,
        col("boundary_length")?,
        col("proposal_count")?,
        col("n_jumps")?,
    ];
    let bad = |l: usize| CliError::Runtime(format!("{}: malformed line {}", path.display(), l + 2));
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let get = |k: usize| f.get(idx[k]).copied().ok_or_else(|| bad(i));
            Ok(SummaryRow {
                replication: get(0)?.parse().map_err(|_| bad(i))?,
                seed: get(1)?.parse().map_err(|_| bad(i))?,
                t_end: get(2)?.parse().map_err(|_| bad(i))?,
                construction: get(3)?.to_string(),
                n_cells: get(4)?.parse().map_err(|_| bad(i))?,
                zeta_final: get(5)?.parse().map_err(|_| bad(i))?,
                boundary_length: get(6)?.parse().map_err(|_| bad(i))?,
                proposal_count: get(7)?.parse().map_err(|_| bad(i))?,
                n_jumps: get(8)?.parse().map_err(|_| bad(i))?,
            })
        })
        .collect()
}

enum CompareInput {
    Summary(PathBuf, Vec<SummaryRow>),
    Oracle(PathBuf, Vec<OracleRow>),
}

fn load_compare_input(p: &Path) -> Result<CompareInput, CliError> {
    if p.is_dir() {
        let csv = p.join("summary.csv");
        return Ok(CompareInput::Summary(csv.clone(), read_summary(&csv)?));
    }
    if p.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        let rows: Vec<OracleRow> =
            serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        return Ok(CompareInput::Oracle(p.to_path_buf(), rows));
    }
    Ok(CompareInput::Summary(p.to_path_buf(), read_summary(p)?))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompareReport {
    pub alpha: f64,
    pub pass: bool,
    pub tests: Vec<TestReport>,
    pub mismatches: Vec<String>,
}

/// Pairwise tests between summaries (cell counts: chi-square; boundary
/// length: KS) and z-tests of oracle rows against each summary.
pub fn compare_inputs(inputs: &[PathBuf], alpha: f64) -> Result<CompareReport, CliError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Config("invalid config field `alpha`: must lie in (0, 1)".into()));
    }
    let loaded: Vec<CompareInput> = inputs.iter().map(|p| load_compare_input(p)).collect::<Result<_, _>>()?;
    let summaries: Vec<(&PathBuf, &Vec<SummaryRow>)> = loaded
        .iter()
        .filter_map(|i| match i {
            CompareInput::Summary(p, r) => Some((p, r)),
            _ => None,
        })
        .collect();
    if summaries.is_empty() {
        return Err(CliError::Config("compare needs at least one summary CSV".into()));
    }
    if summaries.len() < 2 && summaries.len() == loaded.len() {
        return Err(CliError::Config("compare needs at least two inputs".into()));
    }
    let mut tests = Vec::new();
    let mut mismatches = Vec::new();
    let test_err = |e: crate::stats::StatsError| CliError::Runtime(e.to_string());
    for (i, (pa, ra)) in summaries.iter().enumerate() {
        for (pb, rb) in &summaries[i + 1..] {
            let pair = format!("{} vs {}", pa.display(), pb.display());
            let (ta, tb) = (ra.first().map(|r| r.t_end), rb.first().map(|r| r.t_end));
            if ta != tb {
                mismatches.push(format!("{pair}: t_end differs ({ta:?} vs {tb:?})"));
            }
            let ca = EmpiricalSummary::from_counts(&ra.iter().map(|r| r.n_cells).collect::<Vec<_>>()).map_err(test_err)?;
            let cb = EmpiricalSummary::from_counts(&rb.iter().map(|r| r.n_cells).collect::<Vec<_>>()).map_err(test_err)?;
            match chi_square_two_sample(&ca, &cb, crate::stats::DEFAULT_MIN_BIN, alpha) {
                Ok(r) => tests.push(r.labeled(format!("n_cells chi-square: {pair}"))),
                // A single pooled bin means both samples are concentrated on
                // the same few values: nothing to distinguish.
                Err(crate::stats::StatsError::InsufficientData(_)) if ca.histogram.keys().eq(cb.histogram.keys()) => {}
                Err(e) => return Err(test_err(e)),
            }
            let la: Vec<f64> = ra.iter().map(|r| r.boundary_length).collect();
            let lb: Vec<f64> = rb.iter().map(|r| r.boundary_length).collect();
            tests.push(
                ks_two_sample(&la, &lb, alpha)
                    .map_err(test_err)?
                    .labeled(format!("boundary_length KS: {pair}")),
            );
        }
    }
    let normal_quantile = {
        use statrs::distribution::{ContinuousCDF, Normal};
        Normal::new(0.0, 1.0).expect("normal").inverse_cdf(1.0 - alpha / 2.0)
    };
    let sigmas = normal_quantile.max(3.0);
    for input in &loaded {
        let CompareInput::Oracle(po, rows) = input else { continue };
        for (ps, rs) in &summaries {
            let n = rs.len() as f64;
            for row in rows {
                let hits = rs.iter().filter(|r| r.n_cells == row.k as u64 + 1).count() as f64;
                let freq = hits / n;
                let se = (row.std_error.powi(2) + freq * (1.0 - freq) / n).sqrt();
                tests.push(
                    z_test(freq, row.estimate, se, sigmas)
                        .labeled(format!("oracle k={}: {} vs {}", row.k, po.display(), ps.display())),
                );
            }
        }
    }
    let pass = mismatches.is_empty() && tests.iter().all(|t| t.pass);
    Ok(CompareReport {
        alpha,
        pass,
        tests,
        mismatches,
    })
}

pub fn cmd_compare(a: &CompareArgs) -> Result<(), CliError> {
    let report = compare_inputs(&a.inputs, a.alpha)?;
    write(&a.out, &serde_json::to_string_pretty(&report).map_err(runtime("serializing"))?)?;
    if report.pass {
        return Ok(());
    }
    let failed: Vec<String> = report
        .tests
        .iter()
        .filter(|t| !t.pass)
        .map(|t| format!("{} (p = {:.3e})", t.label, t.p_value))
        .chain(report.mismatches.iter().cloned())
        .collect();
    Err(CliError::Failed(failed.join("; ")))
}

pub fn read_trajectory(path: &Path, dimension: usize) -> Result<Vec<crate::tess::JumpRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str::<JumpRecordRepr>(l)
                .map(|r| r.to_record(dimension))
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Deterministic SVG: one closed path per cell in label order, y pointing up.
pub fn render_svg(t: &Tessellation) -> String {
    const SIZE: f64 = 512.0;
    const MARGIN: f64 = 8.0;
    let verts = t.window().vertices();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in verts {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    let scale = SIZE / (x1 - x0).max(y1 - y0);
    let (w, h) = ((x1 - x0) * scale + 2.0 * MARGIN, (y1 - y0) * scale + 2.0 * MARGIN);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.3}\" height=\"{h:.3}\" viewBox=\"0 0 {w:.3} {h:.3}\">"
    );
    let _ = writeln!(svg, "<g fill=\"none\" stroke=\"black\" stroke-width=\"1\">");
    for cell in t.cells() {
        let mut d = String::new();
        for (i, p) in cell.vertices().iter().enumerate() {
            let x = MARGIN + (p[0] - x0) * scale;
            let y = MARGIN + (y1 - p[1]) * scale;
            let _ = write!(d, "{}{x:.4} {y:.4} ", if i == 0 { "M" } else { "L" });
        }
        d.push('Z');
        let _ = writeln!(svg, "<path id=\"c{}\" d=\"{d}\"/>", cell.label());
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}

pub fn cmd_render(a: &RenderArgs) -> Result<(), CliError> {
    let config_path = match &a.config {
        Some(p) => p.clone(),
        None => a.trajectory.parent().unwrap_or(Path::new(".")).join("config.json"),
    };
    let config = load_config(&config_path)?;
    let scn = config.scenario().map_err(|e| CliError::Config(e.to_string()))?;
    if scn.window.dimension() != 2 {
        return Err(CliError::Config(format!(
            "render requires a 2D window, got dimension {}",
            scn.window.dimension()
        )));
    }
    if !(a.t.is_finite() && a.t >= 0.0) {
        return Err(CliError::Config(format!("invalid render time {}", a.t)));
    }
    let history = read_trajectory(&a.trajectory, 2)?;
    let upto: Vec<_> = history.into_iter().take_while(|j| j.time <= a.t).collect();
    let state = Tessellation::replay(&scn.window, scn.measure.clone(), &upto).map_err(runtime("replay"))?;
    write(&a.out, &render_svg(&state))
}

pub fn oracle_table(config: &SimConfig, k_max: usize, samples: usize, seed: u64) -> Result<Vec<OracleRow>, CliError> {
    let scn = config.scenario().map_err(|e| CliError::Config(e.to_string()))?;
    (0..=k_max)
        .map(|k| {
            marginal_count_prob(&scn.window, &scn.measure, scn.t_end, k, samples, seed.wrapping_add(k as u64))
                .map_err(|e| match e {
                    crate::oracle::OracleError::KTooLarge { .. } | crate::oracle::OracleError::TooFewSamples { .. } => {
                        CliError::Config(e.to_string())
                    }
                    other => CliError::Runtime(other.to_string()),
                })
        })
        .collect()
}

pub fn cmd_oracle(a: &OracleArgs) -> Result<(), CliError> {
    let config = load_config(&a.config)?;
    let seed = a.seed.unwrap_or(config.seed);
    let rows = oracle_table(&config, a.k_max, a.samples, seed)?;
    write(&a.out, &serde_json::to_string_pretty(&rows).map_err(runtime("serializing"))?)
}

pub fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let config = load_config(&a.config)?;
    let scn = config.scenario().map_err(|e| CliError::Config(e.to_string()))?;
    let reps = a.replications.unwrap_or(config.replications as usize);
    let rows = benchmark_proposals(&scn, &Construction::ALL, reps, a.seed.unwrap_or(config.seed))
        .map_err(runtime("benchmark"))?;
    for (c, n) in &rows.degenerate_retries {
        log::info!("{}: {n} degenerate proposal rounds discarded", c.name());
    }
    let mut csv = String::from("construction,n_cells,jumps,mean_proposals,predicted\n");
    for r in rows.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.construction.name(),
            r.n_cells,
            r.jumps,
            sci(r.mean_proposals),
            sci(r.predicted)
        );
    }
    write(&a.out, &csv)
}
