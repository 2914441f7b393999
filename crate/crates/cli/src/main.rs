use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cobol_core::bench::export::{append_run, load_dir};
use cobol_core::bench::report::write_report;
use cobol_core::bench::{compute_metrics, run_experiment, Benchmark, ExperimentPlan};
use cobol_core::config::CobolConfig;
use cobol_core::record::{Method, RunRecord};
use rayon::prelude::*;

#[derive(Parser, Debug)]
#[command(name = "cobol", version, about = "Collaborative Bayesian optimisation with labelling experts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one method at one expert accuracy over several seeds.
    Run(RunArgs),
    /// Run every (method, accuracy) combination over several seeds.
    Sweep(SweepArgs),
    /// Build CSV tables and plots from stored runs.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve live labelling sessions over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "COBOL_DATA_DIR", default_value = "cobol-data")]
        data_dir: PathBuf,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    benchmark: String,
    /// Number of seeds, starting at `--first-seed`.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Overrides the horizon from the config file.
    #[arg(long)]
    horizon: Option<usize>,
    /// JSON file with hyperparameter overrides.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Observation noise; defaults to the configured sigma.
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Directory that receives one JSON-lines file per run.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_method, default_value = "cobol")]
    method: Method,
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
    accuracy: f64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_method, value_delimiter = ',', default_value = "cobol")]
    methods: Vec<Method>,
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',', default_value = "-2,-1,0,1,2")]
    accuracies: Vec<f64>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).ok_or_else(|| format!("unknown method `{s}`"))
}

fn load_config(common: &Common) -> Result<CobolConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            CobolConfig::from_json(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => CobolConfig::default(),
    };
    if let Some(h) = common.horizon {
        cfg.horizon = h;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn plan(common: &Common, config: &CobolConfig, method: Method, accuracy: f64) -> ExperimentPlan {
    ExperimentPlan {
        benchmark: common.benchmark.clone(),
        method,
        accuracy,
        seeds: (common.first_seed..common.first_seed + common.seeds).collect(),
        config: config.clone(),
        noise_sigma: common.noise_sigma,
    }
}

fn store(out: &Path, bench: &Benchmark, runs: &[RunRecord]) -> Result<()> {
    for r in runs {
        append_run(out, r)?;
        let sr = compute_metrics(r, bench)?.final_simple_regret();
        let sr = sr.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        match &r.error {
            Some(e) => println!("{}  FAILED after {} steps: {e}", r.run_id, r.steps.len()),
            None => println!("{}  SR={sr}  queries={}", r.run_id, r.queries()),
        }
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let bench = Benchmark::by_name(&args.common.benchmark)?;
    let runs = run_experiment(&plan(&args.common, &cfg, args.method, args.accuracy))?;
    store(&args.common.out, &bench, &runs)
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let bench = Benchmark::by_name(&args.common.benchmark)?;
    if args.methods.is_empty() || args.accuracies.is_empty() {
        bail!("need at least one method and one accuracy");
    }
    let mut legs = Vec::new();
    for &m in &args.methods {
        if matches!(m, Method::VanillaLcb | Method::Random) {
            legs.push(plan(&args.common, &cfg, m, 0.0));
        } else {
            legs.extend(args.accuracies.iter().map(|&a| plan(&args.common, &cfg, m, a)));
        }
    }
    let results: Vec<_> = legs.par_iter().map(run_experiment).collect();
    for runs in results {
        store(&args.common.out, &bench, &runs?)?;
    }
    Ok(())
}

fn report(input: &Path, out: &Path) -> Result<()> {
    let records = load_dir(input)?;
    if records.is_empty() {
        bail!("no run records found in {}", input.display());
    }
    for p in write_report(&records, out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Report { input, out } => report(&input, &out),
        Command::Serve { port, host, data_dir } => {
            let addr: SocketAddr = format!("{host}:{port}").parse().context("invalid host")?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(cobol_session::serve(addr, data_dir))?;
            Ok(())
        }
    }
}
