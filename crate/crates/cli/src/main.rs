use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use edgesim::config::{parse_literal, ExperimentConfig, Override};
use edgesim::experiment::{run_experiment, summarize, write_outputs};
use edgesim::policy::PolicyKind;
use edgesim::sim::Workload;
use edgesim::workload::write_trace;
use edgesim::Error;
use toml::Value;

#[derive(Parser)]
#[command(
    name = "edgesim",
    version,
    about = "Collaborative edge caching and transcoding simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration or a sweep and write CSV tables.
    Run(RunArgs),
    /// Check a config file without running anything.
    Validate(ConfigArgs),
    /// Export the generated request trace as CSV.
    Trace(TraceArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment file (TOML). Built-in defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set cluster.nodes=4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of replicates.
    #[arg(long, conflicts_with = "seed_list")]
    seeds: Option<usize>,
    /// Explicit replicate seeds.
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    /// Sweep axis: cache_fraction, processing_capacity, zipf_alpha, prefetch_window or policy.
    #[arg(long, value_name = "AXIS=V1,V2,..")]
    sweep: Vec<String>,
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// Replace existing output files.
    #[arg(long)]
    overwrite: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Also write the per-event log of every run.
    #[arg(long)]
    event_log: bool,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
    /// Workload seed; defaults to the first replicate seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    overwrite: bool,
}

const SWEEP_AXES: [&str; 5] = [
    "cache_fraction",
    "processing_capacity",
    "zipf_alpha",
    "prefetch_window",
    "policy",
];

fn sweep_override(arg: &str) -> Result<Override> {
    let (axis, values) = arg
        .split_once('=')
        .with_context(|| format!("--sweep {arg:?} is not AXIS=values"))?;
    let axis = axis.trim();
    if !SWEEP_AXES.contains(&axis) {
        bail!(
            "unknown sweep axis {axis:?} (expected one of {})",
            SWEEP_AXES.join(", ")
        );
    }
    let items: Vec<Value> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| match parse_literal(v) {
            // Whole numbers on float axes.
            Value::Integer(i) if axis != "prefetch_window" => Value::Float(i as f64),
            other => other,
        })
        .collect();
    if items.is_empty() {
        bail!("--sweep {axis} has no values");
    }
    Ok(Override::new(&format!("sweep.{axis}"), Value::Array(items)))
}

fn overrides(args: &ConfigArgs) -> Result<Vec<Override>> {
    args.set
        .iter()
        .map(|s| Override::parse(s).map_err(Into::into))
        .collect()
}

fn load(path: Option<&Path>, overrides: &[Override]) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path, overrides).with_context(|| match path {
        Some(p) => format!("loading {}", p.display()),
        None => "loading built-in defaults".to_string(),
    })
}

fn run(args: RunArgs) -> Result<()> {
    let mut ovs = overrides(&args.config)?;
    if let Some(n) = args.seeds {
        ovs.push(Override::new("seeds", Value::Integer(n as i64)));
        ovs.push(Override::new("seed_list", Value::Array(Vec::new())));
    }
    if let Some(list) = &args.seed_list {
        let seeds = list.iter().map(|&s| Value::Integer(s as i64)).collect();
        ovs.push(Override::new("seed_list", Value::Array(seeds)));
    }
    if let Some(kind) = args.policy {
        ovs.push(Override::new("policy.kind", Value::String(kind.as_str().into())));
    }
    for s in &args.sweep {
        ovs.push(sweep_override(s)?);
    }
    let config = load(args.config.config.as_deref(), &ovs)?;
    let results = run_experiment(&config, args.jobs, args.event_log)?;
    write_outputs(&args.out, &config, &results, args.overwrite)?;
    for s in summarize(&results) {
        println!(
            "{:<8} cache={:<5} proc={:<6} alpha={:<4} wd={} runs={:<3} hit_ratio={:.4}±{:.4} delay_ms={:.3} cdn_cost=${:.4}",
            s.policy.as_str(),
            s.cache_fraction,
            s.processing_capacity,
            s.zipf_alpha,
            s.prefetch_window,
            s.runs,
            s.hit_ratio_mean,
            s.hit_ratio_std,
            s.mean_delay_ms_mean,
            s.cdn_cost_mean,
        );
    }
    println!("wrote {} runs to {}", results.len(), args.out.display());
    Ok(())
}

/// Prints violations and deviations; returns whether the config is valid.
fn validate(args: ConfigArgs) -> Result<bool> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let config = match ExperimentConfig::from_toml_str(&text, &overrides(&args)?) {
        Ok(c) => c,
        Err(Error::InvalidConfig(problems)) => {
            report("violations", &problems);
            return Ok(false);
        }
        Err(e) => {
            report("violations", &[e.to_string()]);
            return Ok(false);
        }
    };
    let problems = config.validate();
    report("violations", &problems);
    report("deviations from reference settings", &config.reference_deviations());
    Ok(problems.is_empty())
}

fn report(title: &str, lines: &[String]) {
    println!("{title}: {}", lines.len());
    for l in lines {
        println!("  - {l}");
    }
}

fn trace(args: TraceArgs) -> Result<()> {
    let config = load(args.config.config.as_deref(), &overrides(&args.config)?)?;
    if args.out.exists() && !args.overwrite {
        return Err(Error::OutputExists(args.out).into());
    }
    let seed = args.seed.unwrap_or_else(|| config.replicate_seeds()[0]);
    let workload = Workload::generate(&config, seed)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_trace(BufWriter::new(file), &[workload.requests])?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a).map(|_| true),
        Command::Validate(a) => validate(a),
        Command::Trace(a) => trace(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
