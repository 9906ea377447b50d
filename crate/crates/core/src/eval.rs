//! Metrics and the end-to-end experiment: per-state precision and recall
//! of estimated traces, instances solved under the true domain, and plan
//! identity with the reference planner, across observation levels.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::info;

use crate::domains::DomainTemplate;
use crate::extract::{estimate_traces, extract_preconditions, LearnedDomainModel};
use crate::learner::{train, PsgConfig, SequenceModel, TrainConfig, TrainOutcome};
use crate::planner::{plan, PlanResult, PlannerConfig};
use crate::rng::{derive_seed, STREAM_INIT, STREAM_MASK, STREAM_PAIRS, STREAM_SHUFFLE};
use crate::selector::{build_pairs, train_selector, SelectorConfig, SelectorNet, DEFAULT_PAIR_BUDGET};
use crate::strips::{ActionId, GroundDomain, Instance, State, DEFAULT_ORACLE_BUDGET};
use crate::traces::{Dataset, ObservationPct, PartialTrace, PlanTrace};

/// Confusion counts of one estimated state against the real one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StateScore {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl StateScore {
    /// `tp / (tp + fp)`, or 1 when nothing was predicted true.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `tp / (tp + fn)`, or 1 when the real state is empty.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn add(&mut self, other: &StateScore) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

pub fn score_state(real: &State, estimated: &State, num_props: usize) -> StateScore {
    let tp = real.iter().filter(|&p| estimated.contains(p)).count();
    let fp = estimated.len() - tp;
    let fn_ = real.len() - tp;
    StateScore { tp, fp, fn_, tn: num_props - tp - fp - fn_ }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("no states to aggregate")]
    EmptyInput,
    #[error("{plans} plans for {instances} instances")]
    Misaligned { plans: usize, instances: usize },
}

/// Unweighted means of per-state precision and recall.
pub fn aggregate(scores: &[StateScore]) -> Result<(f64, f64), MetricError> {
    if scores.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let n = scores.len() as f64;
    let p = scores.iter().map(StateScore::precision).sum::<f64>() / n;
    let r = scores.iter().map(StateScore::recall).sum::<f64>() / n;
    Ok((p, r))
}

/// Scores the intermediate states of each estimate against its reference
/// trace. Endpoints are excluded since the estimate copies them.
pub fn score_intermediate(reference: &[PlanTrace], estimated: &[Vec<State>], num_props: usize) -> Vec<StateScore> {
    reference
        .iter()
        .zip(estimated)
        .flat_map(|(r, e)| {
            let n = r.num_steps();
            (1..n).map(move |i| score_state(&r.states[i], &e[i], num_props))
        })
        .collect()
}

/// Whether a plan solves its instance under the true domain.
pub fn plan_solves(domain: &GroundDomain, inst: &Instance, plan: Option<&[ActionId]>) -> bool {
    plan.is_some_and(|p| domain.validate_plan(inst, p).is_ok())
}

/// Fraction of instances whose plan validates under `domain`; `None`
/// counts as unsolved.
pub fn instances_solved(domain: &GroundDomain, instances: &[Instance], plans: &[Option<Vec<ActionId>>]) -> Result<f64, MetricError> {
    if plans.len() != instances.len() {
        return Err(MetricError::Misaligned { plans: plans.len(), instances: instances.len() });
    }
    let solved = instances.iter().zip(plans).filter(|(i, p)| plan_solves(domain, i, p.as_deref())).count();
    Ok(ratio(solved, instances.len()))
}

/// How unobserved propositions at intermediate steps enter the loss.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbsentLabels {
    /// Likelihood under observation at the run's percentage.
    #[default]
    ObservationRate,
    /// Excluded from the loss.
    Unknown,
    /// Treated as false.
    Negative,
}

impl AbsentLabels {
    pub fn apply(self, cfg: &PsgConfig, pct: ObservationPct) -> PsgConfig {
        let mut cfg = cfg.clone();
        cfg.absent_as_negative = self == AbsentLabels::Negative;
        cfg.observation_rate = (self == AbsentLabels::ObservationRate).then(|| f64::from(pct.value()) / 100.0);
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainTemplate,
    pub train_traces: usize,
    pub test_traces: usize,
    pub percentages: Vec<u32>,
    /// Every stage seed is derived from this one.
    pub seed: u64,
    pub oracle_budget: usize,
    pub absent_labels: AbsentLabels,
    /// Pairs kept per trace, as a multiple of its length.
    pub pair_budget: usize,
    pub learner: PsgConfig,
    pub training: TrainConfig,
    pub selector: SelectorConfig,
    pub planner: PlannerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            domain: DomainTemplate::Ferry { cars: 3, locations: 3 },
            train_traces: 200,
            test_traces: 30,
            percentages: vec![0, 20, 40, 60, 80, 100],
            seed: 0,
            oracle_budget: DEFAULT_ORACLE_BUDGET,
            absent_labels: AbsentLabels::default(),
            pair_budget: DEFAULT_PAIR_BUDGET,
            learner: PsgConfig::default(),
            training: TrainConfig::default(),
            selector: SelectorConfig::default(),
            planner: PlannerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.train_traces == 0 || self.test_traces == 0 {
            return Err("train_traces and test_traces must be positive".into());
        }
        if self.percentages.is_empty() {
            return Err("no observation percentages".into());
        }
        for &p in &self.percentages {
            ObservationPct::new(p).map_err(|e| e.to_string())?;
        }
        if self.pair_budget == 0 {
            return Err("pair_budget must be positive".into());
        }
        if self.planner.top_k == 0 {
            return Err("planner.top_k must be positive".into());
        }
        self.learner.validate().map_err(|e| e.to_string())
    }

    /// Hash of every setting, in hex.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(format!("{self:?}").as_bytes()))
    }
}

#[derive(Debug, Error)]
#[error("{stage} failed{}", pct.map(|p| format!(" at {p}% observation")).unwrap_or_default())]
pub struct ExperimentError {
    pub stage: &'static str,
    pub pct: Option<u32>,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

impl ExperimentError {
    fn new(stage: &'static str, pct: Option<u32>, source: impl Into<Box<dyn std::error::Error + Send + Sync>>) -> Self {
        ExperimentError { stage, pct, source: source.into() }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub observation_pct: u32,
    pub precision: f64,
    pub recall: f64,
    pub instances_solved: f64,
    pub plan_identity_rate: f64,
    pub train_loss_final: f64,
    pub seeds: u64,
    pub states: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub solved: usize,
    pub identical: usize,
    pub test_instances: usize,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ExperimentReport {
    pub fn to_csv(&self) -> Result<String, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self, ReportError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r.deserialize().collect::<Result<Vec<ReportRow>, _>>()?;
        Ok(ExperimentReport { rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ReportError> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, ReportError> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    /// Metrics as rows, observation percentages as columns.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| metric |");
        for r in &self.rows {
            write!(s, " {}% |", r.observation_pct).unwrap();
        }
        s.push_str("\n|---|");
        s.push_str(&"---:|".repeat(self.rows.len()));
        s.push('\n');
        let metrics: [(&str, fn(&ReportRow) -> String); 5] = [
            ("precision (%)", |r| format!("{:.1}", 100.0 * r.precision)),
            ("recall (%)", |r| format!("{:.1}", 100.0 * r.recall)),
            ("instances solved", |r| format!("{:.3}", r.instances_solved)),
            ("plan identity", |r| format!("{:.3}", r.plan_identity_rate)),
            ("final training loss", |r| format!("{:.2e}", r.train_loss_final)),
        ];
        for (name, f) in metrics {
            write!(s, "| {name} |").unwrap();
            for r in &self.rows {
                write!(s, " {} |", f(r)).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Everything produced at one observation level.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub pct: ObservationPct,
    pub train: Vec<PartialTrace>,
    pub learned: LearnedDomainModel,
    pub learner_outcome: TrainOutcome,
    pub selector: SelectorNet,
    pub selector_outcome: TrainOutcome,
    pub scores: Vec<StateScore>,
    pub plans: Vec<PlanResult>,
    pub row: ReportRow,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub dataset: Dataset,
    pub cells: Vec<CellRun>,
}

impl ExperimentRun {
    pub fn report(&self) -> ExperimentReport {
        ExperimentReport { rows: self.cells.iter().map(|c| c.row.clone()).collect() }
    }
}

pub fn generate_dataset(cfg: &ExperimentConfig) -> Result<Dataset, ExperimentError> {
    Dataset::generate(&cfg.domain, cfg.train_traces, cfg.test_traces, cfg.seed, cfg.oracle_budget)
        .map_err(|e| ExperimentError::new("data generation", None, e))
}

/// Generates data once, then runs every observation level in order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun, ExperimentError> {
    cfg.validate().map_err(|e| ExperimentError::new("configuration", None, e))?;
    let dataset = generate_dataset(cfg)?;
    let mut cells = Vec::with_capacity(cfg.percentages.len());
    for &pct in &cfg.percentages {
        let pct = ObservationPct::new(pct).map_err(|e| ExperimentError::new("configuration", Some(pct), e))?;
        cells.push(run_cell(cfg, &dataset, pct)?);
    }
    Ok(ExperimentRun { dataset, cells })
}

/// Seeds of one observation level, all derived from the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellSeeds {
    pub mask: u64,
    pub init: u64,
    pub shuffle: u64,
    pub pairs: u64,
}

impl CellSeeds {
    pub fn derive(seed: u64, pct: ObservationPct) -> Self {
        let i = u64::from(pct.value());
        CellSeeds {
            mask: derive_seed(seed, STREAM_MASK, i),
            init: derive_seed(seed, STREAM_INIT, i),
            shuffle: derive_seed(seed, STREAM_SHUFFLE, i),
            pairs: derive_seed(seed, STREAM_PAIRS, i),
        }
    }
}

/// Mask, train the learner, extract, train the selector, plan the test
/// instances, and score.
pub fn run_cell(cfg: &ExperimentConfig, dataset: &Dataset, pct: ObservationPct) -> Result<CellRun, ExperimentError> {
    let p = Some(pct.value());
    let seeds = CellSeeds::derive(cfg.seed, pct);
    let domain = &dataset.domain;
    let split = dataset.split(pct, seeds.mask);

    let learner_cfg = cfg.absent_labels.apply(&cfg.learner, pct);
    let mut model = SequenceModel::for_domain(learner_cfg, domain, seeds.init).map_err(|e| ExperimentError::new("learner", p, e))?;
    let training = TrainConfig { seed: seeds.shuffle, ..cfg.training.clone() };
    let learner_outcome = train(&mut model, &split.train, &training).map_err(|e| ExperimentError::new("learner", p, e))?;

    let estimated = estimate_traces(&model, &split.train);
    let pairs = build_pairs(&estimated, &model, cfg.pair_budget, seeds.pairs);
    let learned = LearnedDomainModel::new(model, extract_preconditions(&estimated));

    let sc = &cfg.selector;
    let mut selector = SelectorNet::new(learned.sequence_model.k(), domain.num_actions(), &sc.hidden, sc.activation, seeds.init);
    let selector_cfg = SelectorConfig { seed: seeds.shuffle, ..sc.clone() };
    let selector_outcome = train_selector(&mut selector, &pairs, &selector_cfg).map_err(|e| ExperimentError::new("selector", p, e))?;

    let test_partial: Vec<PartialTrace> = split.test.iter().map(PartialTrace::fully_observed).collect();
    let test_estimates: Vec<Vec<State>> =
        estimate_traces(&learned.sequence_model, &test_partial).into_iter().map(|e| e.decoded_states).collect();
    let scores = score_intermediate(&split.test, &test_estimates, domain.num_props());
    let (precision, recall) = aggregate(&scores).map_err(|e| ExperimentError::new("metrics", p, e))?;

    let plans = split
        .test_instances
        .par_iter()
        .zip(&split.test)
        .map(|(inst, reference)| plan(&learned, &selector, inst, Some(reference.final_state()), &cfg.planner))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ExperimentError::new("planning", p, e))?;
    let found: Vec<Option<Vec<ActionId>>> = plans.iter().map(|r| r.outcome.plan().map(<[_]>::to_vec)).collect();
    let instances_solved =
        instances_solved(domain, &split.test_instances, &found).map_err(|e| ExperimentError::new("metrics", p, e))?;
    let solved: Vec<bool> = split.test_instances.iter().zip(&found).map(|(i, f)| plan_solves(domain, i, f.as_deref())).collect();
    let identical = found
        .iter()
        .zip(&split.test)
        .zip(&solved)
        .filter(|((f, r), s)| **s && f.as_deref() == Some(r.actions.as_slice()))
        .count();
    let solved_count = solved.iter().filter(|s| **s).count();

    let mut totals = StateScore::default();
    scores.iter().for_each(|s| totals.add(s));
    let row = ReportRow {
        observation_pct: pct.value(),
        precision,
        recall,
        instances_solved,
        plan_identity_rate: if solved_count == 0 { 0.0 } else { identical as f64 / solved_count as f64 },
        train_loss_final: learner_outcome.final_loss().unwrap_or(f64::NAN),
        seeds: cfg.seed,
        states: scores.len(),
        tp: totals.tp,
        fp: totals.fp,
        fn_: totals.fn_,
        tn: totals.tn,
        solved: solved_count,
        identical,
        test_instances: split.test_instances.len(),
        config_fingerprint: cfg.fingerprint(),
    };
    info!(pct = pct.value(), precision, recall, instances_solved, identical, "observation level done");
    Ok(CellRun { pct, train: split.train, learned, learner_outcome, selector, selector_outcome, scores, plans, row })
}
