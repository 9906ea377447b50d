mod config;
mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use psgplan::eval::{
    aggregate, generate_dataset, instances_solved, plan_solves, run_experiment, score_intermediate, CellSeeds, ExperimentConfig,
};
use psgplan::extract::{estimate_traces, LearnedDomainModel};
use psgplan::learner::{train, SequenceModel, TrainConfig};
use psgplan::nn::Checkpoint;
use psgplan::planner::plan;
use psgplan::selector::{build_pairs, train_selector, SelectorConfig, SelectorNet};
use psgplan::strips::{parse_domain, parse_instance, write_domain, write_instance, ActionId, GroundDomain, InstanceRecord, State};
use psgplan::traces::{mask_traces, read_traces_file, write_traces_file, PartialTrace, PlanTrace};
use tracing::info;

use crate::config::{single_pct, ConfigArgs, RunConfig};
use crate::manifest::Manifest;

/// Learn planning domain models from partially observed plan traces and
/// plan with them.
#[derive(Debug, Parser)]
#[command(name = "psgplan", version)]
struct Cli {
    /// Output root; every command writes its files here
    #[arg(long, global = true, env = "PSGPLAN_OUT", value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (default 1)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Log filter, e.g. `info` or `psgplan=debug`
    #[arg(long, global = true, default_value = "warn", value_name = "FILTER")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a domain, instances, and reference traces
    Gen(GenArgs),
    /// Mask fully observed traces down to an observation percentage
    Mask(MaskArgs),
    /// Train the sequence model on (partial) traces
    Train(TrainArgs),
    /// Extract preconditions from a trained sequence model
    Extract(ExtractArgs),
    /// Train the action selector on a learned model's estimated traces
    TrainSelector(ExtractArgs),
    /// Plan instances with a learned model and selector
    Plan(PlanArgs),
    /// Score a learned model (and optionally its plans) on test data
    Eval(EvalArgs),
    /// Run the whole pipeline at every observation percentage
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct MaskArgs {
    #[arg(long, value_name = "FILE")]
    domain_file: PathBuf,
    /// Fully observed traces
    #[arg(long, value_name = "FILE")]
    traces: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    domain_file: PathBuf,
    #[arg(long, value_name = "FILE")]
    traces: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long, value_name = "FILE")]
    domain_file: PathBuf,
    /// The traces the model was trained on
    #[arg(long, value_name = "FILE")]
    traces: PathBuf,
    /// Sequence model (for extract) or learned model (for train-selector)
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long, value_name = "FILE")]
    domain_file: PathBuf,
    /// Learned model checkpoint
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    #[arg(long, value_name = "FILE")]
    selector: PathBuf,
    /// Instance file (one or more records)
    #[arg(long, value_name = "FILE")]
    instance: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    domain_file: PathBuf,
    /// Learned model checkpoint
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Fully observed test traces
    #[arg(long = "reference", value_name = "FILE")]
    reference: PathBuf,
    /// Selector checkpoint; with --instances, also plans and scores I
    #[arg(long, value_name = "FILE", requires = "instances")]
    selector: Option<PathBuf>,
    /// Test instances aligned with the test traces
    #[arg(long, value_name = "FILE", requires = "selector")]
    instances: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

struct Context_ {
    run: RunConfig,
    out: PathBuf,
    threads: usize,
}

impl Context_ {
    fn new(cli: &Cli, args: &ConfigArgs) -> Result<Self> {
        let run = args.resolve()?;
        let out = cli.out.clone().or_else(|| run.output_dir.clone()).unwrap_or_else(|| PathBuf::from("psgplan-out"));
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let threads = cli.threads.or(run.threads).unwrap_or(1);
        if threads == 0 {
            bail!("--threads must be positive");
        }
        Ok(Context_ { run, out, threads })
    }

    fn cfg(&self) -> &ExperimentConfig {
        &self.run.experiment
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn manifest(&self, command: &str) -> Manifest {
        Manifest::new(command, self.threads, self.cfg())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = tracing_subscriber::EnvFilter::try_new(&cli.log).unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let config = match &cli.command {
        Command::Gen(a) => &a.config,
        Command::Mask(a) => &a.config,
        Command::Train(a) => &a.config,
        Command::Extract(a) | Command::TrainSelector(a) => &a.config,
        Command::Plan(a) => &a.config,
        Command::Eval(a) => &a.config,
        Command::Sweep(a) => &a.config,
    };
    let ctx = Context_::new(cli, config)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(ctx.threads).build()?;
    pool.install(|| match &cli.command {
        Command::Gen(_) => gen(&ctx),
        Command::Mask(a) => mask(&ctx, a),
        Command::Train(a) => train_model(&ctx, a),
        Command::Extract(a) => extract(&ctx, a),
        Command::TrainSelector(a) => selector(&ctx, a),
        Command::Plan(a) => plan_cmd(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Sweep(_) => sweep(&ctx),
    })
}

fn read_domain(path: &Path) -> Result<GroundDomain> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_domain(&text).with_context(|| format!("in domain file {}", path.display()))
}

fn read_instances(domain: &GroundDomain, path: &Path) -> Result<Vec<InstanceRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_instance(domain, &text).with_context(|| format!("in instance file {}", path.display()))
}

fn read_traces(domain: &GroundDomain, path: &Path) -> Result<Vec<PartialTrace>> {
    read_traces_file(domain, path).with_context(|| format!("reading traces {}", path.display()))
}

/// Rebuilds complete traces from fully observed ones, checking them
/// against the domain.
fn full_traces(domain: &GroundDomain, traces: &[PartialTrace]) -> Result<Vec<PlanTrace>> {
    traces
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let full = PlanTrace::from_plan(domain, &t.initial, &t.actions).with_context(|| format!("trace {i}"))?;
            if !t.is_observation_of(&full) || PartialTrace::fully_observed(&full) != *t {
                bail!("trace {i} is not a fully observed trace of this domain");
            }
            Ok(full)
        })
        .collect()
}

fn write(path: &Path, text: &str, manifest: &mut Manifest) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    manifest.output(path)
}

fn finish(ctx: &Context_, manifest: &Manifest) -> Result<()> {
    let path = manifest.write(&ctx.out)?;
    info!(manifest = %path.display(), "done");
    Ok(())
}

fn gen(ctx: &Context_) -> Result<()> {
    let cfg = ctx.cfg();
    let data = generate_dataset(cfg)?;
    let mut m = ctx.manifest("gen");
    let d = &data.domain;
    write(&ctx.path("domain.txt"), &write_domain(d), &mut m)?;
    for (name, traces) in [("train.traces", &data.train_traces), ("test.traces", &data.test_traces)] {
        let path = ctx.path(name);
        let full: Vec<PartialTrace> = traces.iter().map(PartialTrace::fully_observed).collect();
        write_traces_file(d, &full, &path)?;
        m.output(&path)?;
    }
    for (name, insts, traces) in [
        ("train.instances", &data.train_instances, &data.train_traces),
        ("test.instances", &data.test_instances, &data.test_traces),
    ] {
        let records: Vec<InstanceRecord> = insts
            .iter()
            .zip(traces)
            .map(|(i, t)| InstanceRecord { instance: i.clone(), goal_state: Some(t.final_state().clone()) })
            .collect();
        write(&ctx.path(name), &write_instance(d, &records), &mut m)?;
    }
    println!("generated {} training and {} test traces in {}", data.train_traces.len(), data.test_traces.len(), ctx.out.display());
    finish(ctx, &m)
}

fn mask(ctx: &Context_, a: &MaskArgs) -> Result<()> {
    let mut m = ctx.manifest("mask");
    let d = read_domain(&a.domain_file)?;
    let full = full_traces(&d, &read_traces(&d, &a.traces)?)?;
    m.input(&a.domain_file)?;
    m.input(&a.traces)?;
    for &p in &ctx.cfg().percentages {
        let pct = psgplan::traces::ObservationPct::new(p)?;
        let masked = mask_traces(&full, pct, CellSeeds::derive(ctx.cfg().seed, pct).mask);
        let path = ctx.path(&format!("train-{p}.traces"));
        write_traces_file(&d, &masked, &path)?;
        m.output(&path)?;
    }
    finish(ctx, &m)
}

fn train_model(ctx: &Context_, a: &TrainArgs) -> Result<()> {
    let cfg = ctx.cfg();
    let pct = single_pct(cfg)?;
    let seeds = CellSeeds::derive(cfg.seed, pct);
    let mut m = ctx.manifest("train");
    let d = read_domain(&a.domain_file)?;
    let data = read_traces(&d, &a.traces)?;
    m.input(&a.domain_file)?;
    m.input(&a.traces)?;
    let mut model = SequenceModel::for_domain(cfg.absent_labels.apply(&cfg.learner, pct), &d, seeds.init)?;
    let outcome = train(&mut model, &data, &TrainConfig { seed: seeds.shuffle, ..cfg.training.clone() })?;
    let path = ctx.path("model.ckpt");
    model.to_checkpoint(&d.fingerprint()).save(&path)?;
    m.output(&path)?;
    let mut curve = String::from("epoch,loss\n");
    for (i, l) in outcome.loss_curve.iter().enumerate() {
        writeln!(curve, "{i},{l}").unwrap();
    }
    write(&ctx.path("loss.csv"), &curve, &mut m)?;
    println!("trained {} epochs, final loss {:e}", outcome.loss_curve.len(), outcome.final_loss().unwrap_or(f64::NAN));
    finish(ctx, &m)
}

fn extract(ctx: &Context_, a: &ExtractArgs) -> Result<()> {
    let mut m = ctx.manifest("extract");
    let d = read_domain(&a.domain_file)?;
    let data = read_traces(&d, &a.traces)?;
    let model = SequenceModel::from_checkpoint(&Checkpoint::load(&a.model)?, &d.fingerprint())?;
    for p in [&a.domain_file, &a.traces, &a.model] {
        m.input(p)?;
    }
    let learned = LearnedDomainModel::from_training(model, &data);
    let path = ctx.path("learned.ckpt");
    learned.save(&path, &d.fingerprint())?;
    m.output(&path)?;
    write(&ctx.path("preconditions.txt"), &learned.report(&d), &mut m)?;
    println!("extracted preconditions for {} of {} actions", learned.preconditions.pre.len(), d.num_actions());
    finish(ctx, &m)
}

fn selector(ctx: &Context_, a: &ExtractArgs) -> Result<()> {
    let cfg = ctx.cfg();
    let pct = single_pct(cfg)?;
    let seeds = CellSeeds::derive(cfg.seed, pct);
    let mut m = ctx.manifest("train-selector");
    let d = read_domain(&a.domain_file)?;
    let data = read_traces(&d, &a.traces)?;
    let learned = LearnedDomainModel::load(&a.model, &d.fingerprint())?;
    for p in [&a.domain_file, &a.traces, &a.model] {
        m.input(p)?;
    }
    let model = &learned.sequence_model;
    let pairs = build_pairs(&estimate_traces(model, &data), model, cfg.pair_budget, seeds.pairs);
    let sc = &cfg.selector;
    let mut net = SelectorNet::new(model.k(), d.num_actions(), &sc.hidden, sc.activation, seeds.init);
    let outcome = train_selector(&mut net, &pairs, &SelectorConfig { seed: seeds.shuffle, ..sc.clone() })?;
    let path = ctx.path("selector.ckpt");
    net.save(&path, &d.fingerprint())?;
    m.output(&path)?;
    println!("trained selector on {} pairs, final loss {:e}", pairs.len(), outcome.final_loss().unwrap_or(f64::NAN));
    finish(ctx, &m)
}

fn plan_names(d: &GroundDomain, plan: &[ActionId]) -> String {
    plan.iter().map(|&a| format!("{}\n", d.action_name(a))).collect()
}

fn plan_cmd(ctx: &Context_, a: &PlanArgs) -> Result<()> {
    let mut m = ctx.manifest("plan");
    let d = read_domain(&a.domain_file)?;
    let fp = d.fingerprint();
    let learned = LearnedDomainModel::load(&a.model, &fp)?;
    let net = SelectorNet::load(&a.selector, &fp)?;
    let records = read_instances(&d, &a.instance)?;
    for p in [&a.domain_file, &a.model, &a.selector, &a.instance] {
        m.input(p)?;
    }
    let mut plans = String::new();
    let mut results = String::from("instance,outcome,length,valid,expansions,backtracks,goal_attempts\n");
    for (i, r) in records.iter().enumerate() {
        let res = plan(&learned, &net, &r.instance, r.goal_state.as_ref(), &ctx.cfg().planner)?;
        let found = res.outcome.plan();
        if i > 0 {
            plans.push('\n');
        }
        writeln!(plans, "; instance {i}: {}", res.outcome.label()).unwrap();
        if let Some(p) = found {
            plans.push_str(&plan_names(&d, p));
        }
        let s = res.stats;
        writeln!(
            results,
            "{i},{},{},{},{},{},{}",
            res.outcome.label(),
            found.map_or(String::new(), |p| p.len().to_string()),
            plan_solves(&d, &r.instance, found),
            s.expansions,
            s.backtracks,
            s.goal_attempts
        )
        .unwrap();
    }
    print!("{plans}");
    write(&ctx.path("plan.txt"), &plans, &mut m)?;
    write(&ctx.path("plan-results.csv"), &results, &mut m)?;
    finish(ctx, &m)
}

fn eval(ctx: &Context_, a: &EvalArgs) -> Result<()> {
    let mut m = ctx.manifest("eval");
    let d = read_domain(&a.domain_file)?;
    let fp = d.fingerprint();
    let learned = LearnedDomainModel::load(&a.model, &fp)?;
    let tests = read_traces(&d, &a.reference)?;
    let reference = full_traces(&d, &tests)?;
    for p in [&a.domain_file, &a.model, &a.reference] {
        m.input(p)?;
    }
    let estimated: Vec<Vec<State>> = estimate_traces(&learned.sequence_model, &tests).into_iter().map(|e| e.decoded_states).collect();
    let scores = score_intermediate(&reference, &estimated, d.num_props());
    let (precision, recall) = aggregate(&scores)?;
    let mut csv = format!("metric,value\nstates,{}\nprecision,{precision}\nrecall,{recall}\n", scores.len());
    if let (Some(sel), Some(inst)) = (&a.selector, &a.instances) {
        let net = SelectorNet::load(sel, &fp)?;
        let records = read_instances(&d, inst)?;
        m.input(sel)?;
        m.input(inst)?;
        if records.len() != reference.len() {
            bail!("{} instances for {} test traces", records.len(), reference.len());
        }
        let mut found = Vec::with_capacity(records.len());
        for r in &records {
            let res = plan(&learned, &net, &r.instance, r.goal_state.as_ref(), &ctx.cfg().planner)?;
            found.push(res.outcome.plan().map(<[_]>::to_vec));
        }
        let insts: Vec<_> = records.iter().map(|r| r.instance.clone()).collect();
        let solved = instances_solved(&d, &insts, &found)?;
        let valid: Vec<bool> = insts.iter().zip(&found).map(|(i, f)| plan_solves(&d, i, f.as_deref())).collect();
        let identical =
            found.iter().zip(&reference).zip(&valid).filter(|((f, r), v)| **v && f.as_deref() == Some(r.actions.as_slice())).count();
        let n_valid = valid.iter().filter(|v| **v).count();
        let identity = if n_valid == 0 { 0.0 } else { identical as f64 / n_valid as f64 };
        writeln!(csv, "instances_solved,{solved}\nplan_identity_rate,{identity}").unwrap();
    }
    print!("{csv}");
    write(&ctx.path("eval.csv"), &csv, &mut m)?;
    finish(ctx, &m)
}

fn sweep(ctx: &Context_) -> Result<()> {
    let mut m = ctx.manifest("sweep");
    let run = run_experiment(ctx.cfg())?;
    let d = &run.dataset.domain;
    let fp = d.fingerprint();
    let report = run.report();
    write(&ctx.path("report.csv"), &report.to_csv()?, &mut m)?;
    write(&ctx.path("report.md"), &report.to_markdown(), &mut m)?;
    for c in &run.cells {
        let p = c.pct.value();
        let path = ctx.path(&format!("learned-{p}.ckpt"));
        c.learned.save(&path, &fp)?;
        m.output(&path)?;
        let path = ctx.path(&format!("selector-{p}.ckpt"));
        c.selector.save(&path, &fp)?;
        m.output(&path)?;
        write(&ctx.path(&format!("preconditions-{p}.txt")), &c.learned.report(d), &mut m)?;
    }
    print!("{}", report.to_markdown());
    finish(ctx, &m)
}
