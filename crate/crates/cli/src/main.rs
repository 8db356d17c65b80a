use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use betrun::bench::{
    beatability_report, compare_to_f17, load_datasets, run_campaign, sample_seed, CampaignConfig, SampleSet, Setup,
};
use betrun::format::{opt_sig12, sig12};
use betrun::rng::{self, TAG_SOLVER};
use betrun::solvers::{
    generate_synthetic_dataset, parse_edge_list, parse_tsplib, run_solver, Clock, CurveJitter, GapDistribution,
    LiveRun, MvcInstance, MvcSolver, SyntheticCurveSpec, TspInstance, TspSolver,
};
use betrun::{
    run_bet_and_run, BetAndRunResult, BudgetPlan, Decider, Millis, Preset, RunOptions, RunSource, Strategy, TauMode,
    TraceDataset,
};

/// Bet-and-run restart strategies: replay recorded runs, drive live solvers,
/// and benchmark deciders.
#[derive(Parser)]
#[command(name = "betrun", version)]
struct Cli {
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one bet-and-run and print
    /// `instance,decider,T,t1,k,m,tau,final_quality,winner`.
    Run(RunArgs),
    /// Evaluate a grid of setups described by a config file and write CSV reports.
    Campaign(CampaignArgs),
    /// Write a dataset directory of improvement traces.
    GenTraces(GenArgs),
    /// Estimate how often the run leading at the decision point is beaten later.
    Beatability(BeatArgs),
    /// Compare deciders against the F17 preset with a rank-sum test.
    CompareF17(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Replay,
    Live,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClockArg {
    /// One solver step per millisecond; reproducible.
    Virtual,
    /// Elapsed wall-clock time.
    Wall,
}

impl From<ClockArg> for Clock {
    fn from(c: ClockArg) -> Clock {
        match c {
            ClockArg::Virtual => Clock::VirtualSteps,
            ClockArg::Wall => Clock::Wall,
        }
    }
}

/// Budget split shared by `run` and `compare-f17`.
#[derive(Args)]
struct PlanArgs {
    /// Total budget T in milliseconds.
    #[arg(long)]
    budget_ms: Millis,
    /// Initialization budget t1 in milliseconds.
    #[arg(long, conflicts_with = "t1_fraction")]
    t1_ms: Option<Millis>,
    /// t1 as a fraction of T, rounded down to an admissible value.
    #[arg(long)]
    t1_fraction: Option<f64>,
    /// Number of initial runs.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Number of runs continued after the decision.
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// How t1 is divided among the initial runs: even or luby.
    #[arg(long, default_value = "even")]
    strategy: Strategy,
}

impl PlanArgs {
    fn plan(&self) -> betrun::Result<BudgetPlan> {
        let probe = BudgetPlan { total: self.budget_ms, init: 0, k: self.k, m: self.m, strategy: self.strategy };
        let init = match (self.t1_ms, self.t1_fraction) {
            (Some(t1), _) => t1,
            (None, Some(f)) => {
                if !(0.0..=1.0).contains(&f) {
                    return Err(betrun::Error::Config(format!("t1 fraction {f} outside [0, 1]")));
                }
                let unit = probe.unit().max(1);
                (f * self.budget_ms as f64) as Millis / unit * unit
            }
            (None, None) => 0,
        };
        BudgetPlan::new(self.budget_ms, init, self.k, self.m, self.strategy)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Replay recorded traces or drive a live solver.
    #[arg(long, value_enum, default_value = "replay")]
    mode: Mode,
    /// Dataset directory (replay mode).
    #[arg(long, required_if_eq("mode", "replay"))]
    dataset: Option<PathBuf>,
    /// TSPLIB instance (live mode).
    #[arg(long, conflicts_with = "mvc")]
    tsp: Option<PathBuf>,
    /// Edge-list graph for minimum vertex cover (live mode).
    #[arg(long)]
    mvc: Option<PathBuf>,
    /// Clock for live solvers.
    #[arg(long, value_enum, default_value = "virtual")]
    clock: ClockArg,
    /// Named configuration: single, f17, restarts(k), luby_restarts(k).
    /// Replaces --t1-ms, --t1-fraction, --k, --m, --strategy and --decider.
    #[arg(long, conflicts_with_all = ["t1_ms", "t1_fraction", "k", "m", "strategy", "decider"])]
    preset: Option<Preset>,
    #[command(flatten)]
    plan: PlanArgs,
    /// Decider identifier, e.g. current-best or poly-2-lm-vep.
    #[arg(long, default_value = "current-best")]
    decider: Decider,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Decision time charged to the budget: zero or measured.
    #[arg(long, default_value = "zero")]
    tau: TauMode,
    /// Print the column header before the result line.
    #[arg(long)]
    header: bool,
    /// Also write the output to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CampaignArgs {
    /// Campaign config file.
    #[arg(long)]
    config: PathBuf,
    /// Directory for results.csv, scores.csv, verdicts.csv, verdict_counts.csv and summary.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Synthetic,
    Tsp,
    Mvc,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    source: Source,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of runs to record.
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Length of every run in milliseconds.
    #[arg(long)]
    budget_ms: Millis,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instance name written to the dataset; defaults to the output directory name.
    #[arg(long)]
    name: Option<String>,
    /// TSPLIB or edge-list instance (tsp and mvc sources).
    #[arg(long, required_if_eq_any([("source", "tsp"), ("source", "mvc")]))]
    instance: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "virtual")]
    clock: ClockArg,
    /// Synthetic asymptote.
    #[arg(long, default_value_t = 1000.0)]
    q_inf: f64,
    /// Synthetic amplitude a in q_inf + a t^-c.
    #[arg(long, default_value_t = 10_000.0)]
    amplitude: f64,
    /// Synthetic decay exponent c.
    #[arg(long, default_value_t = 0.5)]
    decay: f64,
    /// Improvement gaps: fixed:G, exp:MEAN or geo:FIRST:RATIO.
    #[arg(long, default_value = "exp:20", value_parser = parse_gaps)]
    gaps: GapDistribution,
    /// Synthetic quality rounding unit; 0 keeps raw values.
    #[arg(long, default_value_t = 1.0)]
    quantum: f64,
    /// Per-run uniform spread of q_inf.
    #[arg(long, default_value_t = 0.0)]
    jitter_q_inf: f64,
    /// Per-run uniform spread of the amplitude.
    #[arg(long, default_value_t = 0.0)]
    jitter_amplitude: f64,
    /// Per-run uniform spread of the decay exponent.
    #[arg(long, default_value_t = 0.0)]
    jitter_decay: f64,
}

#[derive(Args)]
struct BeatArgs {
    /// Dataset directories, one per instance.
    #[arg(long, required = true, num_args = 1..)]
    dataset: Vec<PathBuf>,
    #[arg(long)]
    budget_ms: Millis,
    #[arg(long)]
    t1_ms: Millis,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CompareArgs {
    /// Dataset directories, one per instance.
    #[arg(long, required = true, num_args = 1..)]
    dataset: Vec<PathBuf>,
    #[command(flatten)]
    plan: PlanArgs,
    /// Challenger deciders, comma-separated.
    #[arg(long, required = true, value_delimiter = ',')]
    decider: Vec<Decider>,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "zero")]
    tau: TauMode,
}

fn parse_gaps(s: &str) -> Result<GapDistribution, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |x: &str| x.parse::<f64>().map_err(|_| format!("bad number `{x}` in `{s}`"));
    match parts.as_slice() {
        ["fixed", g] => g.parse().map(GapDistribution::Fixed).map_err(|_| format!("bad gap `{g}`")),
        ["exp", mean] => Ok(GapDistribution::Exponential { mean: num(mean)? }),
        ["geo", first, ratio] => Ok(GapDistribution::Geometric { first: num(first)?, ratio: num(ratio)? }),
        _ => Err(format!("expected fixed:G, exp:MEAN or geo:FIRST:RATIO, got `{s}`")),
    }
}

enum LiveInstance {
    Tsp(Arc<TspInstance>),
    Mvc(Arc<MvcInstance>),
}

impl LiveInstance {
    fn load_tsp(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(LiveInstance::Tsp(Arc::new(parse_tsplib(&text)?)))
    }

    fn load_mvc(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(LiveInstance::Mvc(Arc::new(parse_edge_list(name, &text)?)))
    }

    fn name(&self) -> &str {
        match self {
            LiveInstance::Tsp(i) => &i.name,
            LiveInstance::Mvc(i) => &i.name,
        }
    }

    /// Run `i` uses the solver seed that `gen-traces` gives its run `i`.
    fn source(&self, i: usize, seed: u64, clock: Clock) -> Box<dyn RunSource> {
        let run_seed = rng::derive_seed(seed, &[TAG_SOLVER, i as u64]);
        let id = run_id(i);
        match self {
            LiveInstance::Tsp(inst) => Box::new(LiveRun::new(id, TspSolver::new(Arc::clone(inst), run_seed), clock)),
            LiveInstance::Mvc(inst) => Box::new(LiveRun::new(id, MvcSolver::new(Arc::clone(inst), run_seed), clock)),
        }
    }

    fn trace(&self, i: usize, seed: u64, budget: Millis, clock: Clock) -> betrun::ImprovementTrace {
        let run_seed = rng::derive_seed(seed, &[TAG_SOLVER, i as u64]);
        match self {
            LiveInstance::Tsp(inst) => {
                run_solver(run_id(i), TspSolver::new(Arc::clone(inst), run_seed), budget, clock, |_| {})
            }
            LiveInstance::Mvc(inst) => {
                run_solver(run_id(i), MvcSolver::new(Arc::clone(inst), run_seed), budget, clock, |_| {})
            }
        }
    }
}

fn run_id(i: usize) -> String {
    format!("run{i:05}")
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    print!("{text}");
    if let Some(path) = out {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let (plan, decider) = match args.preset {
        Some(p) => p.plan(args.plan.budget_ms)?,
        None => (args.plan.plan()?, args.decider.clone()),
    };
    let (instance, result): (String, BetAndRunResult) = match args.mode {
        Mode::Replay => {
            let dir = args.dataset.as_deref().expect("clap requires --dataset in replay mode");
            let dataset = TraceDataset::load(dir)?;
            let samples = SampleSet::draw(dataset.len(), plan.k, 1, args.seed)?;
            let setup = Setup::new(plan, decider.clone());
            let result = setup.run_on(&dataset, &samples.samples[0], sample_seed(args.seed, 0), args.tau)?;
            (dataset.instance_name, result)
        }
        Mode::Live => {
            let instance = match (&args.tsp, &args.mvc) {
                (Some(p), _) => LiveInstance::load_tsp(p)?,
                (None, Some(p)) => LiveInstance::load_mvc(p)?,
                (None, None) => bail!(betrun::Error::Config("live mode needs --tsp or --mvc".into())),
            };
            let sources = (0..plan.k).map(|i| instance.source(i, args.seed, args.clock.into())).collect();
            let options = RunOptions { tau: args.tau, seed: sample_seed(args.seed, 0) };
            let result = run_bet_and_run(&plan, sources, &decider, options)?;
            (instance.name().to_string(), result)
        }
    };
    let mut text = String::new();
    if args.header {
        text.push_str("instance,decider,T,t1,k,m,tau,final_quality,winner\n");
    }
    text.push_str(&format!(
        "{instance},{decider},{},{},{},{},{},{},{}\n",
        plan.total,
        plan.init,
        plan.k,
        plan.m,
        result.tau,
        opt_sig12(result.final_quality),
        result.winner_run_id.as_deref().unwrap_or("NA"),
    ));
    emit(&text, args.out.as_deref())
}

fn cmd_campaign(args: CampaignArgs) -> anyhow::Result<()> {
    let config = CampaignConfig::load(&args.config)?;
    let datasets = load_datasets(&config)?;
    let output = run_campaign(&config, &datasets)?;
    output.write(&args.out)?;
    print!("{}", output.summary);
    Ok(())
}

fn cmd_gen_traces(args: GenArgs) -> anyhow::Result<()> {
    let name = args.name.clone().unwrap_or_else(|| {
        args.out.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into())
    });
    let dataset = match args.source {
        Source::Synthetic => {
            let base = SyntheticCurveSpec {
                q_inf: args.q_inf,
                amplitude: args.amplitude,
                decay: args.decay,
                gaps: args.gaps,
                quantum: args.quantum,
                horizon: args.budget_ms,
                seed: args.seed,
            };
            let jitter = CurveJitter {
                q_inf: args.jitter_q_inf,
                amplitude: args.jitter_amplitude,
                decay: args.jitter_decay,
            };
            generate_synthetic_dataset(&name, &base, args.runs, &jitter, args.seed)?
        }
        Source::Tsp | Source::Mvc => {
            let path = args.instance.as_deref().expect("clap requires --instance");
            let instance = match args.source {
                Source::Tsp => LiveInstance::load_tsp(path)?,
                _ => LiveInstance::load_mvc(path)?,
            };
            let clock: Clock = args.clock.into();
            let traces = (0..args.runs)
                .into_par_iter()
                .map(|i| instance.trace(i, args.seed, args.budget_ms, clock))
                .collect();
            let mut dataset = TraceDataset::new(&name, traces);
            dataset.run_budget = Some(args.budget_ms);
            dataset
        }
    };
    dataset.save(&args.out)?;
    let reread = TraceDataset::load(&args.out)?;
    let same = reread.len() == dataset.len()
        && reread.traces.iter().zip(&dataset.traces).all(|(a, b)| a.points() == b.points());
    if !same {
        bail!("dataset in {} does not read back identically", args.out.display());
    }
    println!("wrote {} traces to {}", dataset.len(), args.out.display());
    Ok(())
}

fn cmd_beatability(args: BeatArgs) -> anyhow::Result<()> {
    let datasets: Vec<TraceDataset> =
        args.dataset.iter().map(|p| TraceDataset::load(p)).collect::<betrun::Result<_>>()?;
    let report = beatability_report(&datasets, args.budget_ms, args.t1_ms, args.k, args.samples, args.seed)?;
    println!("# share of samples whose leader at t1/k is beaten when every run continues to T - t1 + t1/k");
    println!("instance,T,t1,k,samples,beatability");
    for (instance, p) in &report.per_instance {
        println!("{instance},{},{},{},{},{}", args.budget_ms, args.t1_ms, args.k, args.samples, sig12(*p));
    }
    println!(
        "# mean {} over {} instances, {} beatable",
        sig12(report.mean()),
        report.per_instance.len(),
        report.instances_beatable()
    );
    Ok(())
}

fn cmd_compare_f17(args: CompareArgs) -> anyhow::Result<()> {
    let plan = args.plan.plan()?;
    let challengers: Vec<Setup> = args.decider.iter().map(|d| Setup::new(plan, d.clone())).collect();
    let reference = Setup::preset(Preset::F17, plan.total)?;
    println!("instance,challenger,reference,verdict,p_value,rank_sum");
    for path in &args.dataset {
        let dataset = TraceDataset::load(path)?;
        for c in compare_to_f17(&dataset, plan.total, &challengers, args.samples, args.seed, args.tau)? {
            println!(
                "{},{},{},{},{},{}",
                c.instance,
                c.challenger,
                reference.label,
                c.verdict.verdict,
                sig12(c.verdict.p_value),
                sig12(c.verdict.statistic)
            );
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<betrun::Error>() {
        Some(e) if e.is_usage() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .expect("global thread pool is configured once");
    }
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Campaign(a) => cmd_campaign(a),
        Command::GenTraces(a) => cmd_gen_traces(a),
        Command::Beatability(a) => cmd_beatability(a),
        Command::CompareF17(a) => cmd_compare_f17(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
