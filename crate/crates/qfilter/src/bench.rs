//! Configuration-driven benchmark harness: simulate chains, run filter
//! suites across seeds, aggregate empirical risks, emit machine-readable
//! reports.
//!
//! A scenario is a flat `key.path = value` text file; command-line flags
//! override individual keys. Runs are deterministic: a fixed config
//! (including seeds) produces byte-identical reports. Seeds fan out to a
//! rayon pool capped by the `QFILTER_THREADS` environment variable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{
    run_filter_pipeline, FilterConfig, FilterKind, FilterReport, GridSpec, PipelineModel,
    PredictiveMode, QubitInit,
};
use crate::kde::{BandwidthRule, KernelSpec};
use crate::models::{
    simulate_linear, simulate_microstep_chain, simulate_qubit_chain, LinearGaussianModel,
    QubitChainModel, Trajectory,
};

pub const REPORT_SCHEMA: u32 = 1;

/// Formats a float with 17 significant digits; parsing the result back
/// recovers the exact double.
pub fn fmt_f64(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Initial hidden value of a qubit scenario: fixed and known to the filters,
/// or drawn per seed from the uniform prior on (-1, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum S0Spec {
    Fixed(f64),
    Prior,
}

/// Which generative model a scenario runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    Linear(LinearGaussianModel),
    /// Gaussianized block recursion.
    QubitBlock { model: QubitChainModel, s0: S0Spec },
    /// Exact measurement-by-measurement chain.
    QubitMicro { model: QubitChainModel, s0: S0Spec },
}

impl ModelSpec {
    pub fn id(&self) -> &'static str {
        match self {
            ModelSpec::Linear(_) => "linear",
            ModelSpec::QubitBlock { .. } => "qubit-block",
            ModelSpec::QubitMicro { .. } => "qubit-micro",
        }
    }

    fn qubit_parts(&self) -> Option<(&QubitChainModel, &S0Spec)> {
        match self {
            ModelSpec::Linear(_) => None,
            ModelSpec::QubitBlock { model, s0 } | ModelSpec::QubitMicro { model, s0 } => {
                Some((model, s0))
            }
        }
    }

    /// Simulates one trajectory; any per-seed s0 draw consumes the RNG first
    /// so the whole seed stream is reproducible.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        length: usize,
        seed: u64,
        rng: &mut R,
    ) -> Result<(Trajectory, Option<f64>)> {
        match self {
            ModelSpec::Linear(m) => Ok((simulate_linear(m, length, seed, rng)?, None)),
            ModelSpec::QubitBlock { model, s0 } => {
                let s0 = resolve_s0(s0, rng);
                Ok((
                    simulate_qubit_chain(model, length, s0, seed, rng)?,
                    Some(s0),
                ))
            }
            ModelSpec::QubitMicro { model, s0 } => {
                let s0 = resolve_s0(s0, rng);
                Ok((
                    simulate_microstep_chain(model, length, s0, seed, rng)?,
                    Some(s0),
                ))
            }
        }
    }

    /// The model the filters assume. Micro-chain trajectories are filtered
    /// with the block-model densities, which quantifies how much the
    /// Gaussianized approximation costs on exact data.
    pub fn pipeline_model(&self) -> PipelineModel {
        match self {
            ModelSpec::Linear(m) => PipelineModel::Linear(*m),
            ModelSpec::QubitBlock { model, s0 } | ModelSpec::QubitMicro { model, s0 } => {
                PipelineModel::Qubit {
                    model: *model,
                    init: match s0 {
                        S0Spec::Fixed(v) => QubitInit::Known(*v),
                        S0Spec::Prior => QubitInit::UniformPrior,
                    },
                }
            }
        }
    }
}

fn resolve_s0<R: Rng + ?Sized>(spec: &S0Spec, rng: &mut R) -> f64 {
    match spec {
        S0Spec::Fixed(v) => *v,
        S0Spec::Prior => rng.random_range(-1.0..1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Validated scenario description.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub model: ModelSpec,
    pub length: usize,
    pub seeds: Vec<u64>,
    pub filters: Vec<FilterKind>,
    pub grid: GridSpec,
    pub kernel: KernelSpec,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
    /// Key/value echo of the source config, for the report.
    pub echo: BTreeMap<String, String>,
}

/// Parses `key.path = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(
                format!("line {}", lineno + 1),
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Seed lists: `7`, `1,2,9`, or the inclusive range `1..200`.
pub fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let value = value.trim();
    let bad = |msg: &str| Error::config("seeds", msg.to_string());
    if let Some((lo, hi)) = value.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad("range start must be an integer"))?;
        let hi: u64 = hi.trim().parse().map_err(|_| bad("range end must be an integer"))?;
        if hi < lo {
            return Err(bad("range end precedes start"));
        }
        return Ok((lo..=hi).collect());
    }
    let seeds: Vec<u64> = value
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("expected an integer, a comma list, or `lo..hi`"))?;
    if seeds.is_empty() {
        return Err(bad("at least one seed required"));
    }
    Ok(seeds)
}

/// Filter lists: `kalman,grid,optimal-eq`; the optimal-equation mode comes
/// from `optimal.predictive` unless spelled explicitly.
pub fn parse_filters(value: &str, mode: PredictiveMode) -> Result<Vec<FilterKind>> {
    let mut out = Vec::new();
    for token in value.split(',') {
        let token = token.trim();
        let kind = match token {
            "kalman" => FilterKind::Kalman,
            "grid" => FilterKind::Grid,
            "optimal-eq" => FilterKind::OptimalEq(mode),
            "optimal-eq-kernel" => FilterKind::OptimalEq(PredictiveMode::Kernel),
            "optimal-eq-grid" => FilterKind::OptimalEq(PredictiveMode::GridNormalizer),
            other => {
                return Err(Error::config(
                    "filters",
                    format!("unknown filter `{other}`"),
                ))
            }
        };
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(Error::config("filters", "at least one filter required"));
    }
    Ok(out)
}

fn parse_f64(map: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::config(key, "missing required key"))?;
    raw.parse()
        .map_err(|_| Error::config(key, format!("expected a number, got `{raw}`")))
}

fn parse_usize(map: &BTreeMap<String, String>, key: &str) -> Result<usize> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::config(key, "missing required key"))?;
    raw.parse()
        .map_err(|_| Error::config(key, format!("expected a positive integer, got `{raw}`")))
}

const KNOWN_KEYS: &[&str] = &[
    "model.kind",
    "model.a",
    "model.b",
    "model.A",
    "model.B",
    "model.c",
    "model.N",
    "model.s0",
    "model.clamp_eps",
    "trajectory.length",
    "seeds",
    "filters",
    "optimal.predictive",
    "grid.nodes",
    "grid.span_sigmas",
    "kernel.family",
    "kernel.bandwidth",
    "kernel.lag",
    "output.dir",
    "output.format",
];

impl ScenarioConfig {
    /// Builds and validates a scenario from raw key/value pairs.
    pub fn from_map(map: BTreeMap<String, String>) -> Result<Self> {
        for key in map.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::config(key, "unknown key"));
            }
        }

        let kind = map
            .get("model.kind")
            .ok_or_else(|| Error::config("model.kind", "missing required key"))?;
        let model = match kind.as_str() {
            "linear" => {
                let m = LinearGaussianModel::new(
                    parse_f64(&map, "model.a")?,
                    parse_f64(&map, "model.b")?,
                    parse_f64(&map, "model.A")?,
                    parse_f64(&map, "model.B")?,
                )
                .map_err(|e| Error::config("model", e.to_string()))?;
                ModelSpec::Linear(m)
            }
            "qubit-block" | "qubit-micro" => {
                let c = parse_f64(&map, "model.c")?;
                let n = parse_f64(&map, "model.N")?;
                if n < 1.0 || n.fract() != 0.0 || n > u32::MAX as f64 {
                    return Err(Error::config("model.N", "expected a positive integer"));
                }
                let mut m = QubitChainModel::new(c, n as u32)
                    .map_err(|e| Error::config("model", e.to_string()))?;
                if let Some(eps) = map.get("model.clamp_eps") {
                    let eps: f64 = eps
                        .parse()
                        .map_err(|_| Error::config("model.clamp_eps", "expected a number"))?;
                    m = m.with_clamp_eps(eps);
                    m.validate().map_err(|e| Error::config("model", e.to_string()))?;
                }
                let s0 = match map.get("model.s0").map(String::as_str) {
                    None | Some("prior") => S0Spec::Prior,
                    Some(raw) => {
                        let v: f64 = raw.parse().map_err(|_| {
                            Error::config("model.s0", "expected a number or `prior`")
                        })?;
                        if !(v > -1.0 && v < 1.0) {
                            return Err(Error::config("model.s0", "must lie in (-1, 1)"));
                        }
                        S0Spec::Fixed(v)
                    }
                };
                if kind == "qubit-block" {
                    ModelSpec::QubitBlock { model: m, s0 }
                } else {
                    ModelSpec::QubitMicro { model: m, s0 }
                }
            }
            other => {
                return Err(Error::config(
                    "model.kind",
                    format!("unknown model `{other}`"),
                ))
            }
        };

        let length = parse_usize(&map, "trajectory.length")?;
        if length == 0 {
            return Err(Error::config("trajectory.length", "must be >= 1"));
        }

        let seeds = parse_seeds(
            map.get("seeds")
                .ok_or_else(|| Error::config("seeds", "missing required key"))?,
        )?;

        let mode = match map.get("optimal.predictive").map(String::as_str) {
            None | Some("kernel") => PredictiveMode::Kernel,
            Some("grid") => PredictiveMode::GridNormalizer,
            Some(other) => {
                return Err(Error::config(
                    "optimal.predictive",
                    format!("expected `kernel` or `grid`, got `{other}`"),
                ))
            }
        };
        let filters = parse_filters(
            map.get("filters")
                .ok_or_else(|| Error::config("filters", "missing required key"))?,
            mode,
        )?;

        let mut grid = GridSpec::default();
        if map.contains_key("grid.nodes") {
            grid.nodes = parse_usize(&map, "grid.nodes")?;
            if grid.nodes < 2 {
                return Err(Error::config("grid.nodes", "need at least 2 nodes"));
            }
        }
        if map.contains_key("grid.span_sigmas") {
            grid.span_sigmas = parse_f64(&map, "grid.span_sigmas")?;
            if !(grid.span_sigmas > 0.0) {
                return Err(Error::config("grid.span_sigmas", "must be positive"));
            }
        }

        if let Some(fam) = map.get("kernel.family") {
            if fam != "gaussian" {
                return Err(Error::config(
                    "kernel.family",
                    format!("only `gaussian` is available, got `{fam}`"),
                ));
            }
        }
        let mut kernel = KernelSpec::default();
        if let Some(bw) = map.get("kernel.bandwidth") {
            kernel.bandwidth = if bw == "silverman" {
                BandwidthRule::Silverman
            } else {
                let h: f64 = bw.parse().map_err(|_| {
                    Error::config("kernel.bandwidth", "expected `silverman` or a number")
                })?;
                BandwidthRule::Fixed(h)
            };
        }
        if map.contains_key("kernel.lag") {
            kernel.lag = parse_usize(&map, "kernel.lag")?;
        }
        kernel
            .validate()
            .map_err(|e| Error::config("kernel.bandwidth", e.to_string()))?;

        let out_dir = PathBuf::from(
            map.get("output.dir").cloned().unwrap_or_else(|| "runs".into()),
        );
        let format = match map.get("output.format").map(String::as_str) {
            None | Some("csv") => OutputFormat::Csv,
            Some("json") => OutputFormat::Json,
            Some(other) => {
                return Err(Error::config(
                    "output.format",
                    format!("expected `csv` or `json`, got `{other}`"),
                ))
            }
        };

        Ok(ScenarioConfig {
            model,
            length,
            seeds,
            filters,
            grid,
            kernel,
            out_dir,
            format,
            echo: map,
        })
    }

    pub fn from_str_with_overrides(
        text: &str,
        overrides: &[(String, String)],
    ) -> Result<Self> {
        let mut map = parse_key_values(text)?;
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        Self::from_map(map)
    }

    fn filter_config(&self, kind: FilterKind) -> FilterConfig {
        FilterConfig {
            kind,
            grid: self.grid,
            kernel: self.kernel,
        }
    }
}

/// One (filter, seed) result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub filter: String,
    pub seed: u64,
    pub risk: f64,
    pub saturation: usize,
    pub skipped: usize,
    pub clamps: usize,
}

/// Per-filter aggregate over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterAggregate {
    pub filter: String,
    pub mean_risk: f64,
    /// Standard error of the mean risk across seeds.
    pub std_error: f64,
    pub seeds: usize,
    pub saturation_total: usize,
}

/// One-sided bootstrap comparison between two filters' mean risks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskComparison {
    /// Filter with the lower mean risk.
    pub filter_low: String,
    pub filter_high: String,
    /// mean(risk_high - risk_low) over seeds.
    pub mean_diff: f64,
    /// mean_diff relative to the higher mean risk.
    pub relative_diff: f64,
    /// 5th percentile of the bootstrap distribution of mean_diff.
    pub bootstrap_lower_05: f64,
    /// True when the lower bound stays nonnegative: the low filter is no
    /// worse at the 95% one-sided level.
    pub passes_one_sided_95: bool,
}

/// A (filter, seed) pair that failed, with the error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchFailure {
    pub filter: String,
    pub seed: u64,
    pub message: String,
}

/// Aggregated scenario result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: u32,
    pub version: String,
    pub config: BTreeMap<String, String>,
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<FilterAggregate>,
    pub comparisons: Vec<RiskComparison>,
    pub failures: Vec<BenchFailure>,
}

impl BenchReport {
    /// CSV table with header `filter,seed,risk,saturation`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("filter,seed,risk,saturation\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.filter,
                row.seed,
                fmt_f64(row.risk),
                row.saturation
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bench report serializes")
    }

    pub fn mean_risk(&self, filter: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.filter == filter)
            .map(|a| a.mean_risk)
    }
}

/// 5th percentile of the bootstrap distribution of the mean of `diffs`.
/// Deterministic: the resampling RNG is fixed.
pub fn bootstrap_mean_lower_05(diffs: &[f64], resamples: usize) -> f64 {
    assert!(!diffs.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(0xB007);
    let n = diffs.len();
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += diffs[rng.random_range(0..n)];
        }
        means.push(acc / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    means[(resamples as f64 * 0.05).floor() as usize]
}

/// Everything produced for one seed.
pub struct SeedRun {
    pub seed: u64,
    pub trajectory: Trajectory,
    pub drawn_s0: Option<f64>,
    pub reports: Vec<std::result::Result<FilterReport, String>>,
}

/// Simulates one seed and runs every configured filter on it.
pub fn run_seed(config: &ScenarioConfig, seed: u64) -> Result<SeedRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (trajectory, drawn_s0) = config.model.simulate(config.length, seed, &mut rng)?;
    let mut pipeline_model = config.model.pipeline_model();
    // A per-seed drawn s0 in Known mode must reach the filters too.
    if let (PipelineModel::Qubit { init, .. }, Some(s0), Some((_, S0Spec::Fixed(_)))) = (
        &mut pipeline_model,
        drawn_s0,
        config.model.qubit_parts().map(|(m, s)| (m, *s)),
    ) {
        *init = QubitInit::Known(s0);
    }
    let reports = config
        .filters
        .iter()
        .map(|kind| {
            run_filter_pipeline(&pipeline_model, &trajectory, &config.filter_config(*kind))
                .map_err(|e| e.to_string())
        })
        .collect();
    Ok(SeedRun {
        seed,
        trajectory,
        drawn_s0,
        reports,
    })
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("QFILTER_THREADS") {
        let n: usize = raw.parse().map_err(|_| {
            Error::config("QFILTER_THREADS", format!("expected a positive integer, got `{raw}`"))
        })?;
        if n == 0 {
            return Err(Error::config("QFILTER_THREADS", "must be >= 1"));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::config("QFILTER_THREADS", e.to_string()))
}

/// Runs the full scenario: every seed, every filter, aggregated risks and
/// pairwise comparisons. Deterministic given the config.
pub fn run_scenario(config: &ScenarioConfig) -> Result<BenchReport> {
    run_scenario_with(config, |_| {})
}

/// Like [`run_scenario`], passing each completed seed to `on_seed`
/// (per-seed trajectory/report output for the CLI).
pub fn run_scenario_with(
    config: &ScenarioConfig,
    on_seed: impl Fn(&SeedRun) + Sync,
) -> Result<BenchReport> {
    use rayon::prelude::*;

    let pool = thread_pool()?;
    let runs: Vec<Result<SeedRun>> = pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| {
                let run = run_seed(config, seed)?;
                on_seed(&run);
                Ok(run)
            })
            .collect()
    });

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for run in runs {
        let run = run?;
        for (kind, report) in config.filters.iter().zip(&run.reports) {
            match report {
                Ok(rep) => rows.push(BenchRow {
                    filter: kind.id().to_string(),
                    seed: run.seed,
                    risk: rep.empirical_risk,
                    saturation: rep.saturation_count,
                    skipped: rep.skipped,
                    clamps: run.trajectory.clamp_count,
                }),
                Err(message) => failures.push(BenchFailure {
                    filter: kind.id().to_string(),
                    seed: run.seed,
                    message: message.clone(),
                }),
            }
        }
    }
    rows.sort_by(|a, b| (&a.filter, a.seed).cmp(&(&b.filter, b.seed)));
    failures.sort_by(|a, b| (&a.filter, a.seed).cmp(&(&b.filter, b.seed)));

    let mut aggregates = Vec::new();
    for kind in &config.filters {
        let id = kind.id();
        let risks: Vec<f64> = rows
            .iter()
            .filter(|r| r.filter == id)
            .map(|r| r.risk)
            .collect();
        if risks.is_empty() {
            continue;
        }
        let n = risks.len() as f64;
        let mean = risks.iter().sum::<f64>() / n;
        let var = if risks.len() > 1 {
            risks.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        aggregates.push(FilterAggregate {
            filter: id.to_string(),
            mean_risk: mean,
            std_error: (var / n).sqrt(),
            seeds: risks.len(),
            saturation_total: rows
                .iter()
                .filter(|r| r.filter == id)
                .map(|r| r.saturation)
                .sum(),
        });
    }

    let mut comparisons = Vec::new();
    for i in 0..aggregates.len() {
        for j in (i + 1)..aggregates.len() {
            let (low, high) = if aggregates[i].mean_risk <= aggregates[j].mean_risk {
                (&aggregates[i], &aggregates[j])
            } else {
                (&aggregates[j], &aggregates[i])
            };
            let diffs: Vec<f64> = config
                .seeds
                .iter()
                .filter_map(|&seed| {
                    let lo = rows
                        .iter()
                        .find(|r| r.filter == low.filter && r.seed == seed)?;
                    let hi = rows
                        .iter()
                        .find(|r| r.filter == high.filter && r.seed == seed)?;
                    Some(hi.risk - lo.risk)
                })
                .collect();
            if diffs.is_empty() {
                continue;
            }
            let mean_diff = diffs.iter().sum::<f64>() / diffs.len() as f64;
            let lower = bootstrap_mean_lower_05(&diffs, 10_000);
            comparisons.push(RiskComparison {
                filter_low: low.filter.clone(),
                filter_high: high.filter.clone(),
                mean_diff,
                relative_diff: mean_diff / high.mean_risk.max(1e-300),
                bootstrap_lower_05: lower,
                passes_one_sided_95: lower >= 0.0,
            });
        }
    }

    Ok(BenchReport {
        schema: REPORT_SCHEMA,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.echo.clone(),
        rows,
        aggregates,
        comparisons,
        failures,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Writes the report under `dir`. CSV format emits the per-seed table plus
/// the JSON summary; JSON format emits the summary alone (rows embedded).
pub fn emit_report(report: &BenchReport, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if format == OutputFormat::Csv {
        let csv_path = dir.join("bench.csv");
        write_file(&csv_path, &report.to_csv())?;
        written.push(csv_path);
    }
    let json_path = dir.join("bench.json");
    write_file(&json_path, &report.to_json())?;
    written.push(json_path);
    Ok(written)
}

/// Writes a trajectory CSV and its metadata sidecar.
pub fn emit_trajectory(traj: &Trajectory, dir: &Path) -> Result<Vec<PathBuf>> {
    let csv_path = dir.join(format!("trajectory_seed{}.csv", traj.seed));
    write_file(&csv_path, &traj.to_csv())?;
    let meta_path = dir.join(format!("trajectory_seed{}.meta.json", traj.seed));
    let meta = serde_json::to_string_pretty(&traj.meta()).expect("trajectory meta serializes");
    write_file(&meta_path, &meta)?;
    Ok(vec![csv_path, meta_path])
}

/// Per-filter per-seed detail summary written next to the step CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterRunSummary {
    pub schema: u32,
    pub filter_id: String,
    pub seed: u64,
    pub risk: f64,
    pub saturation_count: usize,
    pub skipped: usize,
    pub steps: usize,
}

/// Writes one filter report (step CSV plus JSON summary).
pub fn emit_filter_report(report: &FilterReport, seed: u64, dir: &Path) -> Result<Vec<PathBuf>> {
    let base = format!("filter_{}_seed{}", report.filter_id, seed);
    let csv_path = dir.join(format!("{base}.csv"));
    write_file(&csv_path, &report.to_csv())?;
    let summary = FilterRunSummary {
        schema: REPORT_SCHEMA,
        filter_id: report.filter_id.clone(),
        seed,
        risk: report.empirical_risk,
        saturation_count: report.saturation_count,
        skipped: report.skipped,
        steps: report.steps.len(),
    };
    let json_path = dir.join(format!("{base}.summary.json"));
    write_file(
        &json_path,
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(vec![csv_path, json_path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn linear_config(filters: &str) -> ScenarioConfig {
        let text = format!(
            "model.kind = linear\n\
             model.a = 0.9\n\
             model.b = 0.6\n\
             model.A = 1.0\n\
             model.B = 1.0\n\
             trajectory.length = 200\n\
             seeds = 1..3\n\
             filters = {filters}\n"
        );
        ScenarioConfig::from_str_with_overrides(&text, &[]).unwrap()
    }

    #[test]
    fn fmt_f64_round_trips_exactly() {
        for x in [
            0.1,
            -3.141592653589793,
            1e-300,
            2.2250738585072014e-308,
            123456.789,
        ] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn seed_parsing_forms() {
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert_eq!(parse_seeds("1,2,9").unwrap(), vec![1, 2, 9]);
        assert_eq!(parse_seeds("3..6").unwrap(), vec![3, 4, 5, 6]);
        assert!(parse_seeds("6..3").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let err = ScenarioConfig::from_str_with_overrides("model.kindd = linear\n", &[])
            .unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("model.kindd"));
    }

    #[test]
    fn empty_seed_list_never_reaches_emission() {
        let text = "model.kind = linear\nmodel.a = 0.5\nmodel.b = 1.0\nmodel.A = 1.0\n\
                    model.B = 1.0\ntrajectory.length = 10\nseeds = \nfilters = kalman\n";
        assert!(ScenarioConfig::from_str_with_overrides(text, &[]).is_err());
    }

    #[test]
    fn overrides_replace_config_keys() {
        let text = "model.kind = linear\nmodel.a = 0.5\nmodel.b = 1.0\nmodel.A = 1.0\n\
                    model.B = 1.0\ntrajectory.length = 10\nseeds = 1\nfilters = kalman\n";
        let config = ScenarioConfig::from_str_with_overrides(
            text,
            &[("seeds".into(), "4..5".into()), ("filters".into(), "grid".into())],
        )
        .unwrap();
        assert_eq!(config.seeds, vec![4, 5]);
        assert_eq!(config.filters, vec![FilterKind::Grid]);
    }

    #[test]
    fn kalman_and_grid_mean_risks_agree_via_scenario() {
        let config = linear_config("kalman,grid");
        let report = run_scenario(&config).unwrap();
        let kalman = report.mean_risk("kalman").unwrap();
        let grid = report.mean_risk("grid").unwrap();
        assert!(
            (kalman - grid).abs() / kalman < 0.01,
            "kalman {kalman} vs grid {grid}"
        );
        assert!(report.failures.is_empty());
        // Aggregate invariant: mean of per-seed risks.
        for agg in &report.aggregates {
            let risks: Vec<f64> = report
                .rows
                .iter()
                .filter(|r| r.filter == agg.filter)
                .map(|r| r.risk)
                .collect();
            let mean = risks.iter().sum::<f64>() / risks.len() as f64;
            assert_abs_diff_eq!(agg.mean_risk, mean, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_coupling_scenario_has_prior_variance_risk() {
        let text = "model.kind = qubit-block\nmodel.c = 0.0\nmodel.N = 50\nmodel.s0 = prior\n\
                    trajectory.length = 50\nseeds = 1..60\nfilters = kalman,grid\ngrid.nodes = 401\n";
        let config = ScenarioConfig::from_str_with_overrides(text, &[]).unwrap();
        let report = run_scenario(&config).unwrap();
        // No information flows; every filter sits at the prior mean, so the
        // risk is the prior variance 1/3 up to Monte-Carlo error in s0.
        for agg in &report.aggregates {
            assert!(
                (agg.mean_risk - 1.0 / 3.0).abs() < 0.1,
                "{} risk {}",
                agg.filter,
                agg.mean_risk
            );
        }
    }

    #[test]
    fn scenario_reruns_are_byte_identical() {
        let config = linear_config("kalman,grid,optimal-eq");
        let a = run_scenario(&config).unwrap();
        let b = run_scenario(&config).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn report_json_round_trips_mean_risk() {
        let config = linear_config("kalman");
        let report = run_scenario(&config).unwrap();
        let parsed: BenchReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(
            parsed.mean_risk("kalman").unwrap().to_bits(),
            report.mean_risk("kalman").unwrap().to_bits()
        );
        assert_eq!(parsed.schema, REPORT_SCHEMA);
    }

    #[test]
    fn single_seed_single_filter_report_is_one_row() {
        let mut config = linear_config("kalman");
        config.seeds = vec![5];
        let report = run_scenario(&config).unwrap();
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("filter,seed,risk,saturation\n"));
        assert_eq!(report.rows.len(), 1);
    }

    #[test]
    fn emit_writes_csv_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let config = linear_config("kalman");
        let report = run_scenario(&config).unwrap();
        let files = emit_report(&report, OutputFormat::Csv, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
        assert_eq!(csv, report.to_csv());
        let json = std::fs::read_to_string(dir.path().join("bench.json")).unwrap();
        let parsed: BenchReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.mean_risk("kalman"), report.mean_risk("kalman"));
    }

    #[test]
    fn bootstrap_lower_bound_brackets_the_mean() {
        let diffs: Vec<f64> = (0..40).map(|i| 1.0 + 0.01 * (i % 5) as f64).collect();
        let lower = bootstrap_mean_lower_05(&diffs, 2000);
        assert!(lower > 0.9 && lower < 1.05, "lower bound {lower}");
        let mixed: Vec<f64> = (0..40).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let lower_mixed = bootstrap_mean_lower_05(&mixed, 2000);
        assert!(lower_mixed < 0.0);
    }
}
