mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use linspg::experiments::{self, ReproduceOptions, ReproductionId, SweepSpec};
use linspg::instances::{self, Assumption, FeatureFamily, GeneratorSpec};
use linspg::stochastic::LedgerPairs;
use linspg::{
    analyze, run_exact, run_stochastic, ExactRunConfig, Instance64, LearningRate, NoiseFamily, StochasticRunConfig,
    Trajectory64,
};
use serde_json::json;

use config::{config_count, output_dir, parse_count, FileConfig};

#[derive(Debug, Parser)]
#[command(name = "linspg", version, about = "Softmax policy gradient on linear bandits: analysis, runs, reproductions")]
struct Cli {
    /// Output directory (default: $LINSPG_OUT, then ./linspg-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the feature assumptions and print the verdict table.
    Analyze(SourceArgs),
    /// Exact softmax policy gradient.
    RunExact(ExactArgs),
    /// On-policy stochastic policy gradient with importance-weighted rewards.
    RunStochastic(StochasticArgs),
    /// Rerun a reference experiment and check it against its thresholds.
    Reproduce(ReproduceArgs),
    /// Stochastic runs over learning rates x noise families x seeds.
    Sweep(SweepArgs),
    /// Generate a random instance that meets the requested assumptions.
    Gen(GenArgs),
}

#[derive(Debug, Args, Default)]
#[group(multiple = false)]
struct SourceArgs {
    /// Registry id (example-1, example-2, example-3, example-4, prop-3, tabular-3).
    #[arg(long)]
    registry: Option<String>,
    /// Instance JSON file.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Generator spec JSON file; the instance is generated on the fly.
    #[arg(long = "generate", value_name = "SPEC")]
    generate: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExactArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Initial parameters, comma separated (default: zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Vec<f64>,
    /// `0.2`, `exact-bound:0.9` or `stochastic-bound`.
    #[arg(long)]
    lr: Option<String>,
    #[arg(long, alias = "T", value_parser = parse_count)]
    horizon: Option<usize>,
    #[arg(long, value_parser = parse_count)]
    stride: Option<usize>,
}

#[derive(Debug, Args)]
struct StochasticArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta: Vec<f64>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long, alias = "T", value_parser = parse_count)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    stride: Option<usize>,
    /// `bernoulli`, `gaussian[:sigma]` or `beta[:concentration]`; replaces the instance's family.
    #[arg(long)]
    noise: Option<String>,
    /// Record the progress/noise decomposition of z(a*) - z(a) for every a.
    #[arg(long)]
    ledger: bool,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    /// fig1, fig2, prop2, appendixF-exact or appendixF-stochastic.
    id: String,
    #[arg(long, value_parser = parse_count)]
    runs: Option<usize>,
    #[arg(long, alias = "T", value_parser = parse_count)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Learning rates for the stochastic reproduction (repeatable).
    #[arg(long)]
    lr: Vec<String>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Constant learning rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    lrs: Vec<f64>,
    /// Noise families, comma separated.
    #[arg(long, value_delimiter = ',')]
    noises: Vec<String>,
    #[arg(long, value_parser = parse_count)]
    seeds: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long, alias = "T", value_parser = parse_count)]
    horizon: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Auto,
    Uniform,
    Ordered,
}

impl From<FamilyArg> for FeatureFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Auto => FeatureFamily::Auto,
            FamilyArg::Uniform => FeatureFamily::Uniform,
            FamilyArg::Ordered => FeatureFamily::Ordered,
        }
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Base generator spec JSON; the flags below override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(short = 'K', long = "actions")]
    k: Option<usize>,
    #[arg(short = 'd', long = "dim")]
    d: Option<usize>,
    /// Required assumptions, comma separated (A1..A4).
    #[arg(long, value_delimiter = ',')]
    require: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long)]
    min_gap: Option<f64>,
    #[arg(long, value_parser = parse_count)]
    max_rejections: Option<usize>,
    #[arg(long)]
    max_kappa: Option<f64>,
    #[arg(long)]
    noise: Option<String>,
    /// File name inside the output directory.
    #[arg(long, default_value = "instance.json")]
    name: String,
}

const DEFAULT_STRIDE: usize = 100;
const DEFAULT_EXACT_HORIZON: usize = 10_000;
const DEFAULT_STOCHASTIC_HORIZON: usize = 100_000;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Analyze(_) => "analyze",
        Command::RunExact(_) => "run-exact",
        Command::RunStochastic(_) => "run-stochastic",
        Command::Reproduce(_) => "reproduce",
        Command::Sweep(_) => "sweep",
        Command::Gen(_) => "gen",
    }
}

/// Returns whether every check of the invoked command passed.
fn run(cli: Cli) -> Result<bool> {
    let cfg = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    cfg.check_subcommand(subcommand_name(&cli.command))?;
    let out = output_dir(cli.out, &cfg)?;
    match cli.command {
        Command::Analyze(src) => cmd_analyze(&src, &cfg, &out),
        Command::RunExact(args) => cmd_run_exact(args, &cfg, &out),
        Command::RunStochastic(args) => cmd_run_stochastic(args, &cfg, &out),
        Command::Reproduce(args) => cmd_reproduce(args, &cfg, &out),
        Command::Sweep(args) => cmd_sweep(args, &cfg, &out),
        Command::Gen(args) => cmd_gen(args, &cfg, &out),
    }
}

fn load_generator_spec(path: &Path) -> Result<GeneratorSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing generator spec {}", path.display()))
}

/// Resolves the single instance source, flags first.
fn resolve_source(src: &SourceArgs, cfg: &FileConfig) -> Result<(String, Instance64)> {
    let flag_given = src.registry.is_some() || src.file.is_some() || src.generate.is_some();
    let (registry, file, generate, inline) = if flag_given {
        (src.registry.clone(), src.file.clone(), src.generate.clone(), None)
    } else {
        (cfg.registry.clone(), cfg.file.clone(), None, cfg.generator.clone())
    };
    let count = [registry.is_some(), file.is_some(), generate.is_some(), inline.is_some()]
        .iter()
        .filter(|&&b| b)
        .count();
    if count != 1 {
        bail!("exactly one instance source is required (--registry, --file or --generate), found {count}");
    }
    if let Some(id) = registry {
        return Ok((format!("registry:{id}"), instances::lookup(&id)?));
    }
    if let Some(path) = file {
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let inst = Instance64::from_json(&text).with_context(|| format!("parsing instance {}", path.display()))?;
        return Ok((format!("file:{}", path.display()), inst));
    }
    let (label, spec) = match (generate, inline) {
        (Some(path), _) => (format!("generate:{}", path.display()), load_generator_spec(&path)?),
        (None, Some(spec)) => ("generate:config".to_string(), spec),
        (None, None) => unreachable!("source count checked above"),
    };
    Ok((label, instances::generate(&spec)?))
}

fn write(out: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = out.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn learning_rate(flag: Option<String>, cfg: &FileConfig, default: LearningRate<f64>) -> Result<LearningRate<f64>> {
    match flag.or_else(|| cfg.lr.clone()) {
        Some(s) => Ok(s.parse()?),
        None => Ok(default),
    }
}

fn initial_theta(flag: Vec<f64>, cfg: &FileConfig, d: usize) -> Vec<f64> {
    if !flag.is_empty() {
        return flag;
    }
    cfg.theta.clone().unwrap_or_else(|| vec![0.0; d])
}

fn cmd_analyze(src: &SourceArgs, cfg: &FileConfig, out: &Path) -> Result<bool> {
    let (label, inst) = resolve_source(src, cfg)?;
    let report = analyze(&inst)?;
    println!("instance: {label}");
    print!("{}", report.verdict_table());
    let path = write(out, "report.json", &serde_json::to_string_pretty(&report)?)?;
    println!("report written to {}", path.display());
    Ok(true)
}

fn run_summary(label: &str, traj: &Trajectory64, extra: serde_json::Value) -> serde_json::Value {
    let mut doc = json!({
        "instance": label,
        "learning_rate": traj.learning_rate,
        "steps": traj.steps(),
        "complete": traj.is_complete(),
        "abort": traj.abort,
        "optimal_action": traj.optimal_action,
        "optimal_reward": traj.optimal_reward,
        "final_expected_reward": traj.final_expected_reward(),
        "final_suboptimality": traj.final_suboptimality(),
        "final_argmax": traj.final_argmax(),
        "final_policy": traj.final_state.policy,
        "final_theta": traj.final_state.theta,
        "min_optimal_probability": traj.min_optimal_probability,
        "auc": traj.auc(),
    });
    if let (Some(map), serde_json::Value::Object(more)) = (doc.as_object_mut(), extra) {
        map.extend(more);
    }
    doc
}

fn print_run(traj: &Trajectory64) {
    println!(
        "steps = {}, final expected reward = {:.9}, suboptimality = {:.3e}, argmax = {} (optimal {})",
        traj.steps(),
        traj.final_expected_reward(),
        traj.final_suboptimality(),
        traj.final_argmax(),
        traj.optimal_action
    );
    if let Some(abort) = &traj.abort {
        println!("aborted after iteration {}: {}", abort.last_finite_iter, abort.reason);
    }
}

fn cmd_run_exact(args: ExactArgs, cfg: &FileConfig, out: &Path) -> Result<bool> {
    let (label, inst) = resolve_source(&args.source, cfg)?;
    let run_cfg = ExactRunConfig::new(
        initial_theta(args.theta, cfg, inst.dim()),
        args.horizon.or(config_count(cfg.horizon, "horizon")?).unwrap_or(DEFAULT_EXACT_HORIZON),
    )
    .with_learning_rate(learning_rate(args.lr, cfg, LearningRate::ExactBoundFraction(0.9))?)
    .with_stride(args.stride.or(config_count(cfg.stride, "stride")?).unwrap_or(DEFAULT_STRIDE));
    let traj = run_exact(&inst, &run_cfg)?;
    print_run(&traj);
    write(out, "trajectory.csv", &traj.to_csv())?;
    write(out, "theta.json", &traj.theta_json())?;
    let summary = run_summary(&label, &traj, json!({ "horizon": run_cfg.horizon }));
    write(out, "summary.json", &serde_json::to_string_pretty(&summary)?)?;
    println!("outputs written to {}", out.display());
    Ok(true)
}

fn cmd_run_stochastic(args: StochasticArgs, cfg: &FileConfig, out: &Path) -> Result<bool> {
    let (label, mut inst) = resolve_source(&args.source, cfg)?;
    if let Some(noise) = args.noise.or_else(|| cfg.noise.clone()) {
        inst = inst.with_noise(Some(noise.parse::<NoiseFamily>()?))?;
    }
    if inst.noise().is_none() {
        bail!("stochastic runs need a noise family: pass --noise or use an instance that declares one");
    }
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let ledger = args.ledger || cfg.ledger.unwrap_or(false);
    let run_cfg = StochasticRunConfig::new(
        initial_theta(args.theta, cfg, inst.dim()),
        args.horizon.or(config_count(cfg.horizon, "horizon")?).unwrap_or(DEFAULT_STOCHASTIC_HORIZON),
        seed,
    )
    .with_learning_rate(learning_rate(args.lr, cfg, LearningRate::StochasticBound)?)
    .with_stride(args.stride.or(config_count(cfg.stride, "stride")?).unwrap_or(DEFAULT_STRIDE))
    .with_ledger(if ledger { LedgerPairs::AgainstOptimal } else { LedgerPairs::Off });
    let traj = run_stochastic(&inst, &run_cfg)?;
    print_run(&traj);
    write(out, "trajectory.csv", &traj.to_csv())?;
    write(out, "steps.csv", &traj.step_log_csv())?;
    write(out, "theta.json", &traj.theta_json())?;
    for ((a, b), csv) in traj.ledger_csvs() {
        write(out, &format!("ledger_{a}_{b}.csv"), &csv)?;
    }
    let summary = run_summary(
        &label,
        &traj,
        json!({
            "horizon": run_cfg.horizon,
            "seed": seed,
            "noise": inst.noise(),
            "ledger_max_reconstruction_error": traj.ledger.as_ref().map(|l| l.max_reconstruction_error),
        }),
    );
    write(out, "summary.json", &serde_json::to_string_pretty(&summary)?)?;
    println!("outputs written to {}", out.display());
    Ok(true)
}

fn cmd_reproduce(args: ReproduceArgs, cfg: &FileConfig, out: &Path) -> Result<bool> {
    let id: ReproductionId = args.id.parse()?;
    let lrs = if args.lr.is_empty() { cfg.lrs.clone().unwrap_or_default() } else { args.lr };
    let learning_rates = if lrs.is_empty() {
        None
    } else {
        Some(lrs.iter().map(|s| s.parse::<LearningRate<f64>>()).collect::<linspg::Result<Vec<_>>>()?)
    };
    let opts = ReproduceOptions {
        runs: args.runs.or(config_count(cfg.runs, "runs")?),
        horizon: args.horizon.or(config_count(cfg.horizon, "horizon")?),
        seed: args.seed.or(cfg.seed),
        learning_rates,
    };
    let rep = experiments::reproduce(id, &opts)?;
    let dir = out.join(id.as_str());
    for artifact in &rep.artifacts {
        write(&dir, &artifact.name, &artifact.contents)?;
    }
    write(&dir, "summary.json", &rep.summary_json())?;
    for check in &rep.checks {
        println!(
            "{:<6} {}: {} (required {})",
            if check.passed { "PASS" } else { "FAIL" },
            check.name,
            check.value,
            check.requirement
        );
    }
    println!("{}: {}; outputs in {}", id, if rep.passed() { "PASS" } else { "FAIL" }, dir.display());
    Ok(rep.passed())
}

fn cmd_sweep(args: SweepArgs, cfg: &FileConfig, out: &Path) -> Result<bool> {
    let (label, inst) = resolve_source(&args.source, cfg)?;
    let defaults = SweepSpec::default();
    let learning_rates = match (args.lrs, &cfg.lrs) {
        (v, _) if !v.is_empty() => v,
        (_, Some(v)) => v
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|_| anyhow!("sweep learning rate `{s}` must be a number")))
            .collect::<Result<_>>()?,
        (_, None) => defaults.learning_rates,
    };
    let noise_names = if args.noises.is_empty() { cfg.noises.clone().unwrap_or_default() } else { args.noises };
    let noises = if noise_names.is_empty() {
        defaults.noises
    } else {
        noise_names.iter().map(|s| s.parse::<NoiseFamily>()).collect::<linspg::Result<_>>()?
    };
    let spec = SweepSpec {
        learning_rates,
        noises,
        seeds: args.seeds.or(config_count(cfg.seeds, "seeds")?).unwrap_or(defaults.seeds),
        master_seed: args.master_seed.or(cfg.master_seed).unwrap_or(defaults.master_seed),
        horizon: args.horizon.or(config_count(cfg.horizon, "horizon")?).unwrap_or(defaults.horizon),
    };
    let result = experiments::sweep(&inst, &spec)?;
    write(out, "sweep.csv", &result.to_csv())?;
    let failures = result.failures();
    for f in &failures {
        eprintln!(
            "run failed: lr = {}, noise = {}, seed = {}: {}",
            f.lr,
            f.noise,
            f.seed,
            f.error.as_deref().unwrap_or("")
        );
    }
    let summary = json!({
        "instance": label,
        "spec": spec,
        "rows": result.rows.len(),
        "failures": result.rows.iter().filter(|r| r.error.is_some()).collect::<Vec<_>>(),
    });
    write(out, "sweep_summary.json", &serde_json::to_string_pretty(&summary)?)?;
    println!("{} runs ({} failed); aggregate written to {}", result.rows.len(), failures.len(), out.join("sweep.csv").display());
    Ok(true)
}

fn cmd_gen(args: GenArgs, cfg: &FileConfig, out: &Path) -> Result<bool> {
    let base = match (&args.spec, &cfg.generator) {
        (Some(path), _) => Some(load_generator_spec(path)?),
        (None, Some(spec)) => Some(spec.clone()),
        (None, None) => None,
    };
    let require = args.require.iter().map(|s| s.parse::<Assumption>()).collect::<linspg::Result<Vec<_>>>()?;
    let mut spec = match base {
        Some(spec) => spec,
        None => {
            let (Some(k), Some(d)) = (args.k, args.d) else {
                bail!("gen needs --spec or both -K/--actions and -d/--dim");
            };
            GeneratorSpec::new(k, d, &require, args.seed.or(cfg.seed).unwrap_or(0))
        }
    };
    if let Some(k) = args.k {
        spec.k = k;
    }
    if let Some(d) = args.d {
        spec.d = d;
    }
    if !require.is_empty() {
        spec.require = require.into_iter().collect();
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(f) = args.family {
        spec.family = f.into();
    }
    if let Some(g) = args.min_gap {
        spec.min_gap = g;
    }
    if let Some(m) = args.max_rejections {
        spec.max_rejections = m;
    }
    if let Some(k) = args.max_kappa {
        spec.max_kappa = Some(k);
    }
    if let Some(n) = args.noise.or_else(|| cfg.noise.clone()) {
        spec.noise = Some(n.parse()?);
    }
    let inst = instances::generate(&spec)?;
    let path = write(out, &args.name, &inst.to_json())?;
    write(out, "generator_spec.json", &serde_json::to_string_pretty(&spec)?)?;
    println!("instance written to {}", path.display());
    Ok(true)
}
