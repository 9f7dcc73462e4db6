//! Command-line harness over the qfilter library: simulate chains, run
//! filter suites, compare risks, emit CSV/JSON reports.

use std::path::PathBuf;
use std::process::ExitCode;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qfilter::bench::{
    emit_filter_report, emit_report, emit_trajectory, parse_key_values, run_scenario_with,
    ScenarioConfig,
};
use qfilter::quantum::{
    bloch_to_density, coupling_unitary, kron, BlochVector, Observable, WeakMeasurementChain,
};
use qfilter::qudit::{
    artificial_qubits, coarse_correlation, coarse_grain, qudit_observation_model, relabel,
    Partition,
};
use qfilter::Error;

const USAGE: &str = "\
qfilter - weak-measurement simulation and nonlinear filtering benchmarks

USAGE:
  qfilter simulate   --config <path> [--seeds <spec>] [--out <dir>]
  qfilter filter     --config <path> [--seeds <spec>] [--filters <list>] [--out <dir>] [--format csv|json]
  qfilter bench      --config <path> [--seeds <spec>] [--filters <list>] [--out <dir>] [--format csv|json]
  qfilter qudit-demo [--seed <n>] [--blocks <n>] [--block-size <n>] [--coupling <c>] [--out <dir>]

SUBCOMMANDS:
  simulate    Write trajectory CSVs (step,hidden,observed) with JSON sidecars
  filter      Run each configured filter per seed; write per-step CSVs and summaries
  bench       Aggregate empirical risks across seeds into bench.csv / bench.json
  qudit-demo  Run the single-qudit observation model next to the two-qubit chain

OPTIONS:
  --config <path>    Scenario file of `key.path = value` lines (see README)
  --seeds <spec>     Override seeds: `7`, `1,2,9`, or `1..200`
  --filters <list>   Override filters: kalman,grid,optimal-eq
  --out <dir>        Output directory (default from config, else `runs`)
  --format <fmt>     Report format: csv (table + JSON summary) or json

ENVIRONMENT:
  QFILTER_THREADS    Caps the worker pool for seed fan-out

EXIT CODES:
  0 success, 2 configuration error, 3 runtime filter error
";

enum Command {
    Simulate,
    Filter,
    Bench,
    QuditDemo,
}

struct Args {
    command: Command,
    config: Option<PathBuf>,
    overrides: Vec<(String, String)>,
    // qudit-demo knobs
    seed: u64,
    blocks: usize,
    block_size: u32,
    coupling: f64,
    out: Option<PathBuf>,
}

fn parse_args(argv: &[String]) -> Result<Args, String> {
    let mut it = argv.iter();
    let command = match it.next().map(String::as_str) {
        Some("simulate") => Command::Simulate,
        Some("filter") => Command::Filter,
        Some("bench") => Command::Bench,
        Some("qudit-demo") => Command::QuditDemo,
        Some(other) => return Err(format!("unknown subcommand `{other}`")),
        None => return Err("missing subcommand".into()),
    };
    let mut args = Args {
        command,
        config: None,
        overrides: Vec::new(),
        seed: 1,
        blocks: 20,
        block_size: 25,
        coupling: 0.2,
        out: None,
    };
    while let Some(flag) = it.next() {
        let mut value = |name: &str| -> Result<String, String> {
            it.next()
                .cloned()
                .ok_or_else(|| format!("missing value for {name}"))
        };
        match flag.as_str() {
            "--config" => args.config = Some(PathBuf::from(value("--config")?)),
            "--seeds" => args.overrides.push(("seeds".into(), value("--seeds")?)),
            "--filters" => args.overrides.push(("filters".into(), value("--filters")?)),
            "--format" => args
                .overrides
                .push(("output.format".into(), value("--format")?)),
            "--out" => {
                let dir = value("--out")?;
                args.out = Some(PathBuf::from(&dir));
                args.overrides.push(("output.dir".into(), dir));
            }
            "--seed" => {
                args.seed = value("--seed")?
                    .parse()
                    .map_err(|_| "--seed expects an integer".to_string())?
            }
            "--blocks" => {
                args.blocks = value("--blocks")?
                    .parse()
                    .map_err(|_| "--blocks expects an integer".to_string())?
            }
            "--block-size" => {
                args.block_size = value("--block-size")?
                    .parse()
                    .map_err(|_| "--block-size expects an integer".to_string())?
            }
            "--coupling" => {
                args.coupling = value("--coupling")?
                    .parse()
                    .map_err(|_| "--coupling expects a number".to_string())?
            }
            "--help" | "-h" => return Err(String::new()),
            other => return Err(format!("unknown flag `{other}`")),
        }
    }
    Ok(args)
}

fn load_config(args: &Args, default_filters: bool) -> Result<ScenarioConfig, Error> {
    let path = args.config.as_ref().ok_or_else(|| Error::Config {
        path: "--config".into(),
        message: "a config file is required".into(),
    })?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut map = parse_key_values(&text)?;
    for (k, v) in &args.overrides {
        map.insert(k.clone(), v.clone());
    }
    if default_filters && !map.contains_key("filters") {
        map.insert("filters".into(), "kalman".into());
    }
    ScenarioConfig::from_map(map)
}

fn exit_code_for(err: &Error) -> u8 {
    if err.is_config() {
        2
    } else {
        3
    }
}

fn run_simulate(args: &Args) -> Result<u8, Error> {
    let config = load_config(args, true)?;
    for &seed in &config.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (traj, _) = config.model.simulate(config.length, seed, &mut rng)?;
        let files = emit_trajectory(&traj, &config.out_dir)?;
        println!(
            "seed {seed}: {} steps, {} clamps -> {}",
            traj.len(),
            traj.clamp_count,
            files[0].display()
        );
    }
    Ok(0)
}

fn run_filter_cmd(args: &Args) -> Result<u8, Error> {
    let config = load_config(args, false)?;
    let out_dir = config.out_dir.clone();
    let report = run_scenario_with(&config, |seed_run| {
        let _ = emit_trajectory(&seed_run.trajectory, &out_dir);
        for rep in seed_run.reports.iter().flatten() {
            let _ = emit_filter_report(rep, seed_run.seed, &out_dir);
        }
    })?;
    for row in &report.rows {
        println!(
            "filter {} seed {}: risk {:.6e} (saturated {}, skipped {})",
            row.filter, row.seed, row.risk, row.saturation, row.skipped
        );
    }
    if report.failures.is_empty() {
        Ok(0)
    } else {
        for f in &report.failures {
            eprintln!("filter {} seed {} failed: {}", f.filter, f.seed, f.message);
        }
        Ok(3)
    }
}

fn run_bench(args: &Args) -> Result<u8, Error> {
    let config = load_config(args, false)?;
    let report = run_scenario_with(&config, |_| {})?;
    let files = emit_report(&report, config.format, &config.out_dir)?;
    for agg in &report.aggregates {
        println!(
            "{}: mean risk {:.6e} (+/- {:.2e} over {} seeds)",
            agg.filter, agg.mean_risk, agg.std_error, agg.seeds
        );
    }
    for cmp in &report.comparisons {
        println!(
            "{} <= {}: mean diff {:.3e}, bootstrap 5% lower bound {:.3e} ({})",
            cmp.filter_low,
            cmp.filter_high,
            cmp.mean_diff,
            cmp.bootstrap_lower_05,
            if cmp.passes_one_sided_95 {
                "significant"
            } else {
                "not significant"
            }
        );
    }
    for f in &files {
        println!("wrote {}", f.display());
    }
    if report.failures.is_empty() {
        Ok(0)
    } else {
        for f in &report.failures {
            eprintln!("filter {} seed {} failed: {}", f.filter, f.seed, f.message);
        }
        Ok(3)
    }
}

fn run_qudit_demo(args: &Args) -> Result<u8, Error> {
    let c = args.coupling;
    let s2 = 0.4;
    let system = bloch_to_density(&BlochVector::new(0.0, s2, 0.0))?;
    let probe = BlochVector::new(0.0, 0.0, c);
    let state = relabel(kron(&system, &bloch_to_density(&probe)?)?)?;

    println!("single-qudit state from the product of system (theta2 = {s2}) and probe (theta3 = {c})");
    let (first, second) = artificial_qubits(&state);
    println!(
        "artificial qubit 1 (system) round-trip deviation: {:.2e}",
        first.matrix().max_abs_diff(system.matrix())
    );
    println!(
        "artificial qubit 2 (probe)  round-trip deviation: {:.2e}",
        second
            .matrix()
            .max_abs_diff(bloch_to_density(&probe)?.matrix())
    );

    let probs = state.level_probabilities();
    println!(
        "level occupations (3/2, 1/2, -1/2, -3/2): {:.4} {:.4} {:.4} {:.4}",
        probs[0], probs[1], probs[2], probs[3]
    );
    let outer = coarse_grain(&probs, Partition::by_outer())?;
    let inner = coarse_grain(&probs, Partition::by_inner())?;
    println!(
        "coarse-grained outer pair: ({:.4}, {:.4}); inner pair: ({:.4}, {:.4})",
        outer.probabilities[0], outer.probabilities[1], inner.probabilities[0], inner.probabilities[1]
    );
    println!(
        "correlation between the two groupings: {:.6}",
        coarse_correlation(&probs, Partition::by_outer(), Partition::by_inner())?
    );

    let w = coupling_unitary(1.0, std::f64::consts::FRAC_PI_4)?;
    let mut two_qubit = WeakMeasurementChain::new(system, probe, w.clone(), Observable::X)?;
    let mut qudit = qudit_observation_model(state.clone(), w, Observable::X, Some(probe))?;
    let mut rng_a = ChaCha8Rng::seed_from_u64(args.seed);
    let mut rng_b = ChaCha8Rng::seed_from_u64(args.seed);
    let total = args.blocks * args.block_size as usize;
    let mut matches = 0usize;
    for _ in 0..total {
        let a = two_qubit.step(&mut rng_a)?;
        let b = qudit.step(&mut rng_b)?;
        if a.label == b.label {
            matches += 1;
        }
    }
    println!(
        "two-qubit vs qudit chain over {total} measurements (seed {}): {matches} identical outcomes",
        args.seed
    );
    println!(
        "final hidden coordinate: two-qubit {:.6}, qudit {:.6}",
        two_qubit.hidden_coordinate(),
        qudit.hidden_coordinate()
    );

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.display().to_string(),
            source: e,
        })?;
        let state_path = dir.join("qudit_state.json");
        std::fs::write(&state_path, state.to_json()).map_err(|e| Error::Io {
            path: state_path.display().to_string(),
            source: e,
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let mut chain = qudit_observation_model(
            state,
            coupling_unitary(1.0, std::f64::consts::FRAC_PI_4)?,
            Observable::X,
            Some(probe),
        )?;
        let traj = chain.run(args.blocks, args.block_size, args.seed, &mut rng)?;
        let csv_path = dir.join("qudit_trajectory.csv");
        std::fs::write(&csv_path, traj.to_csv()).map_err(|e| Error::Io {
            path: csv_path.display().to_string(),
            source: e,
        })?;
        println!("wrote {} and {}", state_path.display(), csv_path.display());
    }
    Ok(0)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let args = match parse_args(&argv) {
        Ok(args) => args,
        Err(msg) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}\n");
            }
            eprint!("{USAGE}");
            return ExitCode::from(if msg.is_empty() { 0 } else { 2 });
        }
    };
    let result = match args.command {
        Command::Simulate => run_simulate(&args),
        Command::Filter => run_filter_cmd(&args),
        Command::Bench => run_bench(&args),
        Command::QuditDemo => run_qudit_demo(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
