use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use horizonlab::analysis::{effective_horizon_with, AnalysisOptions, GapScope, SolvabilityMode};
use horizonlab::envs::{GeneratorSpec, RandomMdpConfig};
use horizonlab::harness::{
    digest, run_experiment_with_mdp, sweep, tune_m, write_curves_csv, write_runs_csv, ExperimentSpec, RunRecord,
    EnvSource, SweepDocument, TuneConfig, TuneResult,
};
use horizonlab::{Error, Result, TabularMdp};

#[derive(Parser)]
#[command(name = "horizonlab", version, about = "Effective-horizon analysis and random-exploration learners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an MDP file.
    Gen(GenArgs),
    /// Per-k solvability, gap and effective-horizon table.
    Analyze(AnalyzeArgs),
    /// Train on every seed of an experiment spec.
    Train(TrainArgs),
    /// Binary-search the smallest m for one k.
    Tune(TuneArgs),
    /// Tune m for each k and summarize.
    Sweep(SweepArgs),
    /// Flatten result documents into CSV tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    #[command(subcommand)]
    family: Family,
    /// Apply the sticky-action transform with this probability.
    #[arg(long, global = true)]
    sticky: Option<f64>,
    /// Output file (stdout if omitted).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Family {
    /// Two-step reference model (2-QVI-solvable, not 1).
    Reference,
    /// Two-step reference variant that is 1-QVI-solvable.
    ReferenceSolvable,
    Chain {
        #[arg(long)]
        length: usize,
        #[arg(long, default_value_t = 0.0)]
        slip: f64,
        #[arg(long, default_value_t = 1.0)]
        terminal_reward: f64,
        /// Comma-separated decoy rewards, one per position.
        #[arg(long, value_delimiter = ',')]
        decoys: Vec<f64>,
    },
    Random {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 0.5)]
        reward_density: f64,
        #[arg(long)]
        deterministic: bool,
        /// Successors per transition row
        #[arg(long)]
        branching: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Tree {
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 0.5)]
        reward_density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Needle {
        #[arg(long)]
        horizon: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
    },
    /// Any generator given as a JSON document (inline or `@path`).
    Spec { spec: String },
}

#[derive(Args)]
struct AnalyzeArgs {
    mdp: PathBuf,
    /// Largest k analyzed (defaults to min(T, 5)).
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long, default_value_t = 0.95)]
    threshold: f64,
    #[arg(long, value_enum, default_value = "greedy-reachable")]
    solvability: SolvabilityArg,
    #[arg(long, value_enum, default_value = "all-states")]
    gap_scope: ScopeArg,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
    /// Also write the per-k table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SolvabilityArg {
    GreedyReachable,
    AllStates,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ScopeArg {
    AllStates,
    GreedyReachable,
}

#[derive(Args)]
struct OutputArgs {
    /// Result document (JSON).
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    runs_csv: Option<PathBuf>,
    #[arg(long)]
    curves_csv: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment spec (JSON).
    #[arg(long)]
    spec: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 1)]
    m_lo: usize,
    #[arg(long, default_value_t = 1024)]
    m_hi: usize,
    /// Fraction of seeds that must solve.
    #[arg(long, default_value_t = 0.6)]
    threshold: f64,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    ks: Vec<usize>,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Documents written by `train`, `tune` or `sweep`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    runs_csv: Option<PathBuf>,
    #[arg(long)]
    curves_csv: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct RunsDocument {
    records: Vec<RunRecord>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnyDocument {
    Sweep(SweepDocument),
    Tune(TuneResult),
    Runs(RunsDocument),
}

impl AnyDocument {
    fn into_records(self) -> Vec<RunRecord> {
        let from_tune = |t: TuneResult| t.probes.into_iter().flat_map(|p| p.records).collect::<Vec<_>>();
        match self {
            AnyDocument::Sweep(s) => s.results.into_iter().flat_map(from_tune).collect(),
            AnyDocument::Tune(t) => from_tune(t),
            AnyDocument::Runs(r) => r.records,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n").map_err(io_err(path)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn write_outputs<T: Serialize>(doc: &T, records: &[RunRecord], output: &OutputArgs) -> Result<()> {
    if let Some(path) = &output.out {
        write_json(doc, Some(path))?;
    }
    if let Some(path) = &output.runs_csv {
        write_runs_csv(records, create(path)?)?;
    }
    if let Some(path) = &output.curves_csv {
        write_curves_csv(records, create(path)?)?;
    }
    Ok(())
}

fn load_spec(path: &Path) -> Result<(ExperimentSpec, TabularMdp)> {
    let mut spec: ExperimentSpec = serde_json::from_str(&read_text(path)?)?;
    spec.validate()?;
    // Relative model paths are taken relative to the spec file.
    if let EnvSource::File(model) = &mut spec.env {
        if model.is_relative() {
            if let Some(dir) = path.parent() {
                *model = dir.join(&*model);
            }
        }
    }
    let mdp = spec.env.load()?.validated()?;
    Ok((spec, mdp))
}

fn gen(args: GenArgs) -> Result<()> {
    let base = match args.family {
        Family::Reference => GeneratorSpec::Reference,
        Family::ReferenceSolvable => GeneratorSpec::ReferenceSolvable,
        Family::Chain { length, slip, terminal_reward, decoys } => {
            GeneratorSpec::Chain { length, slip, terminal_reward, decoys }
        }
        Family::Random { states, actions, horizon, reward_density, deterministic, branching, seed } => {
            GeneratorSpec::Random(RandomMdpConfig {
                num_states: states,
                num_actions: actions,
                horizon,
                reward_density,
                deterministic,
                branching,
                seed,
            })
        }
        Family::Tree { actions, horizon, reward_density, seed } => {
            GeneratorSpec::Tree { num_actions: actions, horizon, reward_density, seed }
        }
        Family::Needle { horizon, actions } => GeneratorSpec::Needle { horizon, num_actions: actions },
        Family::Spec { spec } => {
            let text = match spec.strip_prefix('@') {
                Some(path) => read_text(Path::new(path))?,
                None => spec,
            };
            serde_json::from_str(&text)?
        }
    };
    let spec = match args.sticky {
        Some(p_sticky) => GeneratorSpec::Sticky { base: Box::new(base), p_sticky },
        None => base,
    };
    let mdp = spec.build()?;
    let mut meta = mdp.metadata().clone();
    meta.labels.insert("generator".into(), serde_json::to_string(&spec)?);
    let mdp = mdp.with_metadata(meta);
    match &args.out {
        Some(path) => mdp.save(path)?,
        None => println!("{}", mdp.to_json()),
    }
    Ok(())
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let mdp = TabularMdp::load(&args.mdp)?;
    let options = AnalysisOptions {
        solvability: match args.solvability {
            SolvabilityArg::GreedyReachable => SolvabilityMode::GreedyReachable,
            SolvabilityArg::AllStates => SolvabilityMode::AllStates,
        },
        gap_scope: match args.gap_scope {
            ScopeArg::AllStates => GapScope::AllStates,
            ScopeArg::GreedyReachable => GapScope::GreedyReachable,
        },
    };
    let k_max = args.k_max.unwrap_or(mdp.horizon().min(5));
    let report = effective_horizon_with(&mdp, k_max, args.threshold, options)?;
    if args.json {
        write_json(&report, None)?;
    } else {
        println!("{report}");
    }
    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_writer(create(path)?);
        for e in &report.entries {
            w.serialize(e)?;
        }
        w.flush().map_err(io_err(path))?;
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<bool> {
    let (spec, mdp) = load_spec(&args.spec)?;
    let records = run_experiment_with_mdp(&spec, &mdp)?;
    for r in &records {
        println!(
            "seed {:>4}  solved {:<5}  sample_complexity {:>10}  final_return {:.6}  optimal {:.6}",
            r.seed,
            r.solved,
            r.sample_complexity.map_or("-".into(), |c| c.to_string()),
            r.final_return().unwrap_or(f64::NAN),
            r.optimal_return
        );
    }
    let doc = RunsDocument { records };
    write_outputs(&doc, &doc.records, &args.output)?;
    Ok(doc.records.iter().any(|r| r.solved))
}

fn tune(args: TuneArgs) -> Result<bool> {
    let (spec, mdp) = load_spec(&args.spec)?;
    let cfg = TuneConfig { m_lo: args.search.m_lo, m_hi: args.search.m_hi, threshold: args.search.threshold };
    let result = tune_m(&spec, &mdp, args.k, cfg)?;
    for p in &result.probes {
        println!("m {:>8}  solved {}/{}  {}", p.m, p.solved_seeds, p.total_seeds, if p.success { "ok" } else { "fail" });
    }
    match result.m_star {
        Some(m) => println!("m* = {m} for k = {}", result.k),
        None => println!("no m in [{}, {}] met the success rule for k = {}", cfg.m_lo, cfg.m_hi, result.k),
    }
    if result.anomaly {
        println!("warning: non-monotone probe outcomes");
    }
    let records: Vec<RunRecord> = result.probes.iter().flat_map(|p| p.records.clone()).collect();
    write_outputs(&result, &records, &args.output)?;
    Ok(result.m_star.is_some())
}

fn sweep_cmd(args: SweepArgs) -> Result<bool> {
    let (spec, mdp) = load_spec(&args.spec)?;
    let cfg = TuneConfig { m_lo: args.search.m_lo, m_hi: args.search.m_hi, threshold: args.search.threshold };
    let doc = sweep(&spec, &mdp, &args.ks, cfg)?;
    for r in &doc.results {
        let median = r.best_probe().and_then(|p| p.median_sample_complexity());
        println!(
            "k {:>2}  m* {:>8}  median sample complexity {}",
            r.k,
            r.m_star.map_or("-".into(), |m| m.to_string()),
            median.map_or("-".into(), |c| c.to_string())
        );
    }
    match (doc.summary.best_k, doc.summary.best_m) {
        (Some(k), Some(m)) => println!("best: k = {k}, m = {m}"),
        _ => println!("no k solved the environment"),
    }
    println!("digest {}", digest(&doc)?);
    let records: Vec<RunRecord> =
        doc.results.iter().flat_map(|r| r.probes.iter().flat_map(|p| p.records.clone())).collect();
    write_outputs(&doc, &records, &args.output)?;
    Ok(!doc.summary.total_failure)
}

fn report(args: ReportArgs) -> Result<()> {
    let mut records = Vec::new();
    for path in &args.inputs {
        let doc: AnyDocument = serde_json::from_str(&read_text(path)?)?;
        records.extend(doc.into_records());
    }
    let mut groups: std::collections::BTreeMap<(String, String, usize, usize), Vec<&RunRecord>> = Default::default();
    for r in &records {
        groups.entry((r.env.clone(), r.algo.algo.to_string(), r.algo.k, r.algo.m)).or_default().push(r);
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<32} {:<6} {:>3} {:>8} {:>8} {:>14}", "env", "algo", "k", "m", "solved", "median_n")
        .map_err(io_err(Path::new("stdout")))?;
    for ((env, algo, k, m), rs) in &groups {
        let mut n: Vec<u64> = rs.iter().filter_map(|r| r.sample_complexity).collect();
        n.sort_unstable();
        let median = if n.is_empty() { "-".to_string() } else { n[n.len() / 2].to_string() };
        let solved = format!("{}/{}", n.len(), rs.len());
        writeln!(out, "{env:<32} {algo:<6} {k:>3} {m:>8} {solved:>8} {median:>14}")
            .map_err(io_err(Path::new("stdout")))?;
    }
    if let Some(path) = &args.runs_csv {
        write_runs_csv(&records, create(path)?)?;
    }
    if let Some(path) = &args.curves_csv {
        write_curves_csv(&records, create(path)?)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(a) => gen(a).map(|_| true),
        Command::Analyze(a) => analyze(a).map(|_| true),
        Command::Train(a) => train(a),
        Command::Tune(a) => tune(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Report(a) => report(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
