//! Explore-then-refine search controller.
//!
//! The controller keeps a bounded pool of the best scored candidates. While
//! exploring it asks the exploration generator for new architectures and
//! offers each to the pool; once the pool's best score reaches `gamma_trans`
//! it switches, once and for all, to hill-climbing from the pool's best with
//! the refinement generator. The run ends when the best score reaches
//! `gamma_stop` or the iteration budget is spent.

mod log;
mod pool;

use std::collections::{HashMap, VecDeque};
use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::arch::{catalog_table, parse_architecture, validate, ArchitectureSpec};
use crate::eval::{build_network, score, ScoreConfig, ScoreError};
use crate::generate::{BaseInfo, GenerationContext, Generator, GeneratorError, Phase, PoolMember};
use crate::resource::{check, estimate, ConstraintSet, ResourceProfile};
use crate::rng::{stream, Domain};

pub use log::{
    read_log, IterationRecord, JsonlSink, LogRecord, NullSink, RecordSink, SearchSummary, Termination, Verdict,
};
pub use pool::{pool_insert, CandidatePool, InsertOutcome, PoolEntry};

/// Rejection reasons kept for generator feedback.
const FEEDBACK_WINDOW: usize = 3;

fn default_pool_size() -> usize {
    5
}

fn default_max_iterations() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub gamma_trans: f64,
    pub gamma_stop: f64,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub score_config: ScoreConfig,
    #[serde(default)]
    pub constraints: ConstraintSet,
    #[serde(default)]
    pub seed: u64,
    /// Wall-clock durations make logs differ between runs, so they are opt-in.
    #[serde(default)]
    pub record_timings: bool,
}

impl SearchConfig {
    pub fn new(gamma_trans: f64, gamma_stop: f64) -> Self {
        Self {
            gamma_trans,
            gamma_stop,
            pool_size: default_pool_size(),
            max_iterations: default_max_iterations(),
            score_config: ScoreConfig::default(),
            constraints: ConstraintSet::default(),
            seed: 0,
            record_timings: false,
        }
    }

    pub fn check(&self) -> Result<(), SearchError> {
        if self.gamma_trans.is_nan() || self.gamma_stop.is_nan() || self.gamma_trans > self.gamma_stop {
            return Err(SearchError::InvalidConfig("gamma_trans must not exceed gamma_stop".into()));
        }
        if self.pool_size == 0 {
            return Err(SearchError::InvalidConfig("pool_size must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(SearchError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !self.constraints.is_consistent() {
            return Err(SearchError::InvalidConfig("min_params exceeds max_params".into()));
        }
        self.score_config.check().map_err(|e| SearchError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("initial architecture rejected: {0}")]
    InvalidInit(String),
    #[error("log sink failed: {0}")]
    Sink(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub mu: f64,
    pub sigma: f64,
}

/// Turns an architecture into a score. Implementations must be deterministic.
pub trait Evaluator {
    fn evaluate(&mut self, arch: &ArchitectureSpec) -> Result<Evaluation, ScoreError>;
}

/// Builds and scores each candidate, caching results by canonical serialization.
pub struct NetworkEvaluator {
    pub config: ScoreConfig,
    cache: HashMap<String, Result<Evaluation, ScoreError>>,
}

impl NetworkEvaluator {
    pub fn new(config: ScoreConfig) -> Self {
        Self { config, cache: HashMap::new() }
    }
}

impl Evaluator for NetworkEvaluator {
    fn evaluate(&mut self, arch: &ArchitectureSpec) -> Result<Evaluation, ScoreError> {
        let cfg = self.config;
        self.cache
            .entry(arch.compact())
            .or_insert_with(|| {
                let net = build_network(arch, cfg.seed).map_err(|e| ScoreError::InvalidConfig(e.to_string()))?;
                let report = score(&net, &cfg)?;
                Ok(Evaluation { mu: report.mean, sigma: report.std })
            })
            .clone()
    }
}

/// Inclusive: a pool best exactly at the threshold triggers the switch.
pub fn should_transition(pool: &CandidatePool, cfg: &SearchConfig) -> bool {
    pool.max_score().is_some_and(|m| m >= cfg.gamma_trans)
}

pub fn should_stop(pool: &CandidatePool, cfg: &SearchConfig, iteration: usize) -> bool {
    pool.max_score().is_some_and(|m| m >= cfg.gamma_stop) || iteration >= cfg.max_iterations
}

#[derive(Debug, Clone, PartialEq)]
pub struct Base {
    pub arch: ArchitectureSpec,
    pub mu: f64,
    pub profile: ResourceProfile,
}

#[derive(Debug, Clone)]
pub struct SearchState {
    pub phase: Phase,
    pub base: Option<Base>,
    pub pool: CandidatePool,
    /// Completed iterations.
    pub iteration: usize,
    pub transition_iteration: Option<usize>,
    rejections: VecDeque<String>,
}

impl SearchState {
    fn reject(&mut self, reason: &str) {
        if self.rejections.len() == FEEDBACK_WINDOW {
            self.rejections.pop_front();
        }
        self.rejections.push_back(reason.to_string());
    }

    fn enter_refinement(&mut self, at: usize) {
        let best = self.pool.best().expect("transition requires a non-empty pool");
        self.base = Some(Base { arch: best.arch.clone(), mu: best.mu, profile: estimate(&best.arch) });
        self.phase = Phase::Refinement;
        self.transition_iteration = Some(at);
    }
}

/// Why a candidate never reached the score comparison.
#[derive(Debug)]
enum Rejection {
    Transport(String),
    Other(String),
}

struct Candidate {
    arch: ArchitectureSpec,
    eval: Evaluation,
}

fn context(state: &SearchState, cfg: &SearchConfig, mode: crate::arch::Mode, iteration: usize) -> GenerationContext {
    let pool = state
        .pool
        .entries()
        .iter()
        .map(|e| PoolMember {
            serialization: e.arch.serialize().expect("pool members are non-empty"),
            score: e.mu,
        })
        .collect();
    let mut feedback = Vec::new();
    let base = state.base.as_ref().map(|b| {
        let c = &cfg.constraints;
        feedback.push(format!(
            "base uses {} of {} parameters, {} of {} FLOPs, depth {} of {}",
            b.profile.params, c.max_params, b.profile.flops, c.max_flops, b.profile.depth, c.max_depth
        ));
        BaseInfo { serialization: b.arch.serialize().expect("base is non-empty"), score: b.mu, profile: b.profile }
    });
    feedback.extend(state.rejections.iter().cloned());
    GenerationContext {
        phase: state.phase,
        mode,
        constraints: cfg.constraints,
        catalog: catalog_table(mode),
        pool,
        base,
        feedback,
        seed: stream(cfg.seed, Domain::Generator, iteration as u64).next_u64(),
    }
}

/// Generator output through parse, validation, budget check and scoring.
fn obtain(
    ctx: &GenerationContext,
    generator: &mut dyn Generator,
    evaluator: &mut dyn Evaluator,
    pool: &CandidatePool,
    attempts: &mut usize,
    candidate_text: &mut Option<String>,
) -> Result<Candidate, Rejection> {
    let result = match generator.generate(ctx) {
        Ok(r) => r,
        Err(GeneratorError::Transport { attempts: a, message }) => {
            *attempts = a;
            return Err(Rejection::Transport(format!("Transport: {message}")));
        }
        Err(e @ GeneratorError::Precondition(_)) => return Err(Rejection::Other(format!("Generator: {e}"))),
    };
    *attempts = result.attempts;
    let dsl = result.extracted.map_err(|e| Rejection::Other(format!("ExtractionError: {e}")))?;
    let arch = parse_architecture(&dsl, ctx.mode).map_err(|e| Rejection::Other(format!("ParseError: {e}")))?;
    *candidate_text = Some(arch.compact());
    let errors = validate(&arch, &ctx.constraints);
    if let Some(first) = errors.first() {
        return Err(Rejection::Other(format!("ValidationError: {first}")));
    }
    let violations = check(&estimate(&arch), &ctx.constraints);
    if let Some(first) = violations.first() {
        return Err(Rejection::Other(format!("ResourceViolation: {first}")));
    }
    if ctx.phase == Phase::Exploration && pool.contains(&arch) {
        return Err(Rejection::Other("Duplicate: already in pool".into()));
    }
    let eval = evaluator.evaluate(&arch).map_err(|e| Rejection::Other(format!("ScoreError: {e}")))?;
    Ok(Candidate { arch, eval })
}

struct StepOutcome {
    record: IterationRecord,
    transport_failure: bool,
}

fn step(
    state: &mut SearchState,
    cfg: &SearchConfig,
    mode: crate::arch::Mode,
    generator: &mut dyn Generator,
    evaluator: &mut dyn Evaluator,
) -> StepOutcome {
    let started = Instant::now();
    let iteration = state.iteration + 1;
    let phase = state.phase;
    let ctx = context(state, cfg, mode, iteration);
    let mut attempts = 1;
    let mut candidate = None;
    let outcome = obtain(&ctx, generator, evaluator, &state.pool, &mut attempts, &mut candidate);

    let mut transport_failure = false;
    let (verdict, reason, eval) = match outcome {
        Err(Rejection::Transport(reason)) => {
            transport_failure = true;
            (Verdict::Invalid, Some(reason), None)
        }
        Err(Rejection::Other(reason)) => (Verdict::Invalid, Some(reason), None),
        Ok(Candidate { arch, eval }) => match phase {
            Phase::Exploration => match pool_insert(&mut state.pool, &arch, eval.mu, eval.sigma) {
                InsertOutcome::Admitted => (Verdict::Admitted, None, Some(eval)),
                InsertOutcome::BelowMinimum => {
                    (Verdict::NotAdmitted, Some("BelowPoolMinimum: score does not beat pool minimum".into()), Some(eval))
                }
                InsertOutcome::Duplicate => (Verdict::NotAdmitted, Some("Duplicate: already in pool".into()), Some(eval)),
            },
            Phase::Refinement => {
                let base = state.base.as_mut().expect("refinement has a base");
                if eval.mu > base.mu {
                    *base = Base { profile: estimate(&arch), arch: arch.clone(), mu: eval.mu };
                    pool_insert(&mut state.pool, &arch, eval.mu, eval.sigma);
                    (Verdict::Accepted, None, Some(eval))
                } else {
                    let reason = format!("NotImproved: score {:.6} does not beat base {:.6}", eval.mu, base.mu);
                    (Verdict::NotImproved, Some(reason), Some(eval))
                }
            }
        },
    };
    if let Some(r) = &reason {
        state.reject(r);
    }

    state.iteration = iteration;
    let transitioned = phase == Phase::Exploration && should_transition(&state.pool, cfg);
    if transitioned {
        state.enter_refinement(iteration);
    }

    let record = IterationRecord {
        iteration,
        phase,
        generator: generator.name(),
        candidate,
        verdict,
        reason,
        mu: eval.map(|e| e.mu),
        sigma: eval.map(|e| e.sigma),
        pool_best: state.pool.best().map(|e| e.mu),
        pool_worst: state.pool.worst().map(|e| e.mu),
        pool_size: state.pool.len(),
        base_score: state.base.as_ref().map(|b| b.mu),
        transitioned,
        attempts,
        duration_us: cfg.record_timings.then(|| started.elapsed().as_micros() as u64),
    };
    StepOutcome { record, transport_failure }
}

/// One exploration iteration. Panics if the state is not exploring.
pub fn step_exploration(
    state: &mut SearchState,
    cfg: &SearchConfig,
    generator: &mut dyn Generator,
    evaluator: &mut dyn Evaluator,
    mode: crate::arch::Mode,
) -> IterationRecord {
    assert_eq!(state.phase, Phase::Exploration, "step_exploration outside exploration");
    step(state, cfg, mode, generator, evaluator).record
}

/// One refinement iteration. Panics if the state is not refining.
pub fn step_refinement(
    state: &mut SearchState,
    cfg: &SearchConfig,
    generator: &mut dyn Generator,
    evaluator: &mut dyn Evaluator,
    mode: crate::arch::Mode,
) -> IterationRecord {
    assert_eq!(state.phase, Phase::Refinement, "step_refinement outside refinement");
    step(state, cfg, mode, generator, evaluator).record
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: ArchitectureSpec,
    pub mu: f64,
    pub termination: Termination,
    pub transition_iteration: Option<usize>,
    pub records: Vec<IterationRecord>,
    pub summary: SearchSummary,
}

/// Scores `init`, seeds the pool with it, then iterates until a stop condition.
///
/// Iteration records and the final summary go to `sink` as they are produced.
/// Transport failures that outlast a generator's retries end the run early
/// with [`Termination::TransportExhausted`]; every other failure is logged and
/// the loop continues.
pub fn run_search(
    init: &ArchitectureSpec,
    cfg: &SearchConfig,
    explorer: &mut dyn Generator,
    refiner: &mut dyn Generator,
    evaluator: &mut dyn Evaluator,
    sink: &mut dyn RecordSink,
) -> Result<SearchOutcome, SearchError> {
    cfg.check()?;
    let errors = validate(init, &cfg.constraints);
    if let Some(first) = errors.first() {
        return Err(SearchError::InvalidInit(first.to_string()));
    }
    if let Some(v) = check(&estimate(init), &cfg.constraints).first() {
        return Err(SearchError::InvalidInit(v.to_string()));
    }
    let init_eval = evaluator.evaluate(init).map_err(|e| SearchError::InvalidInit(e.to_string()))?;

    let mode = init.mode;
    let mut state = SearchState {
        phase: Phase::Exploration,
        base: None,
        pool: CandidatePool::new(cfg.pool_size),
        iteration: 0,
        transition_iteration: None,
        rejections: VecDeque::new(),
    };
    pool_insert(&mut state.pool, init, init_eval.mu, init_eval.sigma);
    if should_transition(&state.pool, cfg) {
        state.enter_refinement(0);
    }

    let mut records = Vec::new();
    let mut termination = Termination::Budget;
    loop {
        if should_stop(&state.pool, cfg, state.iteration) {
            if state.pool.max_score().is_some_and(|m| m >= cfg.gamma_stop) {
                termination = Termination::StopThreshold;
            }
            break;
        }
        let generator: &mut dyn Generator = match state.phase {
            Phase::Exploration => explorer,
            Phase::Refinement => refiner,
        };
        let outcome = step(&mut state, cfg, mode, generator, evaluator);
        sink.emit(&LogRecord::Iteration(outcome.record.clone()))?;
        records.push(outcome.record);
        if outcome.transport_failure {
            termination = Termination::TransportExhausted;
            break;
        }
    }

    let best = state.pool.best().expect("pool holds at least the initial architecture");
    let summary = SearchSummary {
        best: best.arch.compact(),
        mu: best.mu,
        profile: estimate(&best.arch),
        iterations: state.iteration,
        transition_iteration: state.transition_iteration,
        termination,
    };
    sink.emit(&LogRecord::Summary(summary.clone()))?;
    Ok(SearchOutcome {
        best: best.arch.clone(),
        mu: best.mu,
        termination,
        transition_iteration: state.transition_iteration,
        records,
        summary,
    })
}
