use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

use swipt_core::algorithms::{run, IterationConfig, Mode};
use swipt_core::analysis::nearest_ap_energy_split;
use swipt_core::pareto::{log_grid, make_theta_schedule, mean_frontier, sweep, write_csv, Frontier, PreferenceWeights, WeightSchedule};
use swipt_core::physics::TsAllocation;
use swipt_core::scenario::{ScenarioConfig, SystemModel};
use swipt_core::validation::{run_suite, Level};
use swipt_core::SwiptError;

/// Overrides the rayon worker count.
const THREADS_ENV: &str = "SWIPT_THREADS";
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "swipt", version, about = "Rate-energy frontiers for multi-AP MISO SWIPT with time switching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep preference weights and write the Pareto frontier.
    Frontier(FrontierArgs),
    /// Repeat the frontier over AP spacings and tabulate the nearest-AP energy ratio.
    DistanceSweep(DistanceArgs),
    /// Run the self-check suite.
    Validate {
        /// fast or full
        #[arg(long, default_value = "fast")]
        level: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Adaptive,
    Fixed,
    Ideal,
}

#[derive(Args, Clone)]
struct SweepArgs {
    /// Scenario JSON; defaults are used for absent fields.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "adaptive")]
    mode: ModeArg,
    /// Decoding fraction for every UE in fixed mode.
    #[arg(long)]
    alpha: Option<f64>,
    /// Log-spaced theta1 grid `min:max:count`; the rate-only and energy-only
    /// extremes are always added.
    #[arg(long, default_value = "1e-3:1e3:20")]
    theta1_grid: String,
    /// Comma-separated energy weights, one per UE.
    #[arg(long, value_delimiter = ',')]
    theta2: Option<Vec<f64>>,
    /// Number of channel draws; seeds run from `seed` upward.
    #[arg(long, default_value_t = 1)]
    draws: u64,
    /// First seed; the config seed when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FrontierArgs {
    #[command(flatten)]
    sweep: SweepArgs,
}

#[derive(Args)]
struct DistanceArgs {
    #[command(flatten)]
    sweep: SweepArgs,
    /// Comma-separated AP spacings in meters.
    #[arg(long, value_delimiter = ',', default_value = "5,10,15,20")]
    d_values: Vec<f64>,
}

/// Failure classes with their exit codes.
enum Failure {
    /// Bad input, exit 2.
    Input(String),
    /// Solver or output failure, exit 1.
    Run(String),
}

impl From<SwiptError> for Failure {
    fn from(e: SwiptError) -> Self {
        match e {
            SwiptError::InvalidConfig(_) | SwiptError::Domain(_) | SwiptError::DimensionMismatch(_) => {
                Failure::Input(e.to_string())
            }
            other => Failure::Run(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Run(format!("{}: {e}", path.display()))
}

struct Loaded {
    config: ScenarioConfig,
    sha256: String,
}

fn load_config(path: &Path) -> Result<Loaded, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let config = ScenarioConfig::from_json(&text).map_err(|e| Failure::Input(e.to_string()))?;
    Ok(Loaded { config, sha256: hex::encode(Sha256::digest(&bytes)) })
}

fn parse_grid(text: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Input(format!("theta1 grid '{text}' is not min:max:count"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let min: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let max: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    let mut grid = log_grid(min, max, count)?;
    grid.push(0.0);
    grid.push(f64::INFINITY);
    Ok(grid)
}

fn mode_of(args: &SweepArgs, n_ue: usize) -> Result<Mode, Failure> {
    match (args.mode, args.alpha) {
        (ModeArg::Fixed, Some(a)) => Ok(Mode::Fixed(TsAllocation::uniform(n_ue, a)?)),
        (ModeArg::Fixed, None) => Err(Failure::Input("--mode fixed needs --alpha".into())),
        (_, Some(_)) => Err(Failure::Input("--alpha only applies to --mode fixed".into())),
        (ModeArg::Adaptive, None) => Ok(Mode::Adaptive),
        (ModeArg::Ideal, None) => Ok(Mode::Ideal),
    }
}

struct Plan {
    config: ScenarioConfig,
    sha256: String,
    mode: Mode,
    schedule: WeightSchedule,
    seeds: Vec<u64>,
}

fn plan(args: &SweepArgs) -> Result<Plan, Failure> {
    let Loaded { config, sha256 } = load_config(&args.config)?;
    if args.draws == 0 {
        return Err(Failure::Input("--draws must be at least 1".into()));
    }
    let mode = mode_of(args, config.n_ue)?;
    let schedule = make_theta_schedule(&parse_grid(&args.theta1_grid)?, args.theta2.as_deref(), config.n_ue)?;
    let first = args.seed.unwrap_or(config.seed);
    let seeds = (first..first + args.draws).collect();
    Ok(Plan { config, sha256, mode, schedule, seeds })
}

fn metadata(plan: &Plan, seed: String, extra: &[(&'static str, String)]) -> Vec<(&'static str, String)> {
    let mut m = vec![
        ("config_sha256", plan.sha256.clone()),
        ("seed", seed),
        ("version", VERSION.to_string()),
        ("mode", plan.mode.tag()),
    ];
    m.extend_from_slice(extra);
    m
}

fn write_frontier(dir: &Path, stem: &str, frontier: &Frontier, meta: &[(&str, String)]) -> Result<(), Failure> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let file = fs::File::create(&csv_path).map_err(|e| io_failure(&csv_path, e))?;
    write_csv(frontier, meta, std::io::BufWriter::new(file)).map_err(|e| Failure::Run(e.to_string()))?;
    let json_path = dir.join(format!("{stem}.json"));
    let meta_obj: serde_json::Map<String, serde_json::Value> =
        meta.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let body = serde_json::to_string_pretty(&json!({ "metadata": meta_obj, "frontier": frontier }))
        .map_err(|e| Failure::Run(e.to_string()))?;
    fs::write(&json_path, body).map_err(|e| io_failure(&json_path, e))
}

/// Sweeps every seed of the plan with `config` overriding the scenario.
fn sweep_draws(plan: &Plan, config: &ScenarioConfig) -> Result<Vec<(u64, Frontier)>, Failure> {
    plan.seeds
        .par_iter()
        .map(|&seed| {
            let model = SystemModel::from_config(&ScenarioConfig { seed, ..config.clone() })?;
            Ok((seed, sweep(&model, &plan.schedule, &plan.mode, &IterationConfig::default())))
        })
        .collect()
}

/// Writes per-draw and mean frontiers; returns whether every point passed.
fn emit_frontiers(
    plan: &Plan,
    dir: &Path,
    prefix: &str,
    draws: &[(u64, Frontier)],
    extra: &[(&'static str, String)],
) -> Result<bool, Failure> {
    let mut ok = true;
    for (seed, frontier) in draws {
        ok &= frontier.all_ok();
        let meta = metadata(plan, seed.to_string(), &[extra, &[("complete", frontier.all_ok().to_string())]].concat());
        write_frontier(dir, &format!("{prefix}seed{seed}"), frontier, &meta)?;
    }
    let frontiers: Vec<Frontier> = draws.iter().map(|d| d.1.clone()).collect();
    let mean = mean_frontier(&frontiers)?;
    let seeds = plan.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ");
    let meta = metadata(
        plan,
        seeds,
        &[extra, &[("draws", draws.len().to_string()), ("complete", ok.to_string())]].concat(),
    );
    write_frontier(dir, &format!("{prefix}mean"), &mean, &meta)?;
    Ok(ok)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn cmd_frontier(args: &FrontierArgs) -> Result<bool, Failure> {
    let plan = plan(&args.sweep)?;
    create_dir(&args.sweep.out)?;
    let draws = sweep_draws(&plan, &plan.config)?;
    let ok = emit_frontiers(&plan, &args.sweep.out, "frontier_", &draws, &[])?;
    report(&draws);
    Ok(ok)
}

fn report(draws: &[(u64, Frontier)]) {
    for (seed, f) in draws {
        let bad = f.points.iter().filter(|p| p.status.as_str() != "ok").count();
        println!("seed {seed}: {} points, {bad} flagged", f.points.len());
    }
}

struct RatioRow {
    d: f64,
    ue: usize,
    mean_of_ratios: f64,
    ratio_of_means: f64,
    draws: usize,
}

fn cmd_distance_sweep(args: &DistanceArgs) -> Result<bool, Failure> {
    let plan = plan(&args.sweep)?;
    if args.d_values.is_empty() || args.d_values.iter().any(|d| !(*d > 0.0)) {
        return Err(Failure::Input("--d-values must be positive".into()));
    }
    create_dir(&args.sweep.out)?;
    let n_ue = plan.config.n_ue;
    let energy_only = PreferenceWeights::uniform(n_ue, 0.0, 1.0)?;
    let mut ok = true;
    let mut rows = Vec::new();
    for &d in &args.d_values {
        let config = ScenarioConfig { ap_distance: d, ..plan.config.clone() };
        config.validate()?;
        let draws = sweep_draws(&plan, &config)?;
        let extra = [("ap_distance_D", d.to_string())];
        ok &= emit_frontiers(&plan, &args.sweep.out, &format!("frontier_D{d}_"), &draws, &extra)?;
        let splits: Vec<Result<Vec<(f64, f64)>, Failure>> = plan
            .seeds
            .par_iter()
            .map(|&seed| {
                let model = SystemModel::from_config(&ScenarioConfig { seed, ..config.clone() })?;
                let r = run(&model, &energy_only, &plan.mode, &IterationConfig::default())?;
                (0..n_ue)
                    .map(|i| Ok(nearest_ap_energy_split(model.channels(), &r.solution.precoders, i)?))
                    .collect()
            })
            .collect();
        let splits = splits.into_iter().collect::<Result<Vec<_>, _>>()?;
        for ue in 0..n_ue {
            let pairs: Vec<(f64, f64)> = splits.iter().map(|s| s[ue]).filter(|p| p.1 > 0.0).collect();
            let n = pairs.len() as f64;
            rows.push(RatioRow {
                d,
                ue,
                mean_of_ratios: pairs.iter().map(|(a, b)| a / b).sum::<f64>() / n,
                ratio_of_means: pairs.iter().map(|p| p.0).sum::<f64>() / pairs.iter().map(|p| p.1).sum::<f64>(),
                draws: pairs.len(),
            });
        }
    }
    let path = args.sweep.out.join("nearest_ap_ratio.csv");
    let mut text = String::new();
    for (k, v) in metadata(&plan, plan.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" "), &[]) {
        text.push_str(&format!("# {k}={v}\n"));
    }
    text.push_str("ap_distance_D,ue,mean_of_ratios,ratio_of_means,draws\n");
    for r in &rows {
        text.push_str(&format!("{},{},{},{},{}\n", r.d, r.ue, r.mean_of_ratios, r.ratio_of_means, r.draws));
    }
    fs::write(&path, text).map_err(|e| io_failure(&path, e))?;
    let first_ue: Vec<&RatioRow> = rows.iter().filter(|r| r.ue == 0).collect();
    let trend = first_ue.windows(2).all(|w| w[1].mean_of_ratios >= w[0].mean_of_ratios);
    for r in &first_ue {
        println!("D = {} m: mean r {:.4}, ratio of means {:.4}", r.d, r.mean_of_ratios, r.ratio_of_means);
    }
    println!("nearest-AP ratio of UE 0 nondecreasing in D: {trend}");
    Ok(ok)
}

fn cmd_validate(level: &str) -> Result<bool, Failure> {
    let level: Level = level.parse()?;
    let checks = run_suite(level);
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        println!("{:<width$}  {}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| Failure::Input(format!("{THREADS_ENV}='{v}' is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Run(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Frontier(a) => cmd_frontier(a),
        Command::DistanceSweep(a) => cmd_distance_sweep(a),
        Command::Validate { level } => cmd_validate(level),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some points failed their diagnostics; see the status column");
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
