//! Binary artificial bee colony with pluggable operator selection.
//!
//! Each move cycle selects an operator for the current food source, applies
//! it, repairs and evaluates the neighbour, turns the objective change into a
//! reward vector, feeds the credit model and the selection scheme, and
//! greedily replaces the source when the scalarized fitness improves.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::credit::{compute_reward, CreditError, CreditModel, CreditSettings, ExperienceError};
use crate::moo::{ParetoArchive, DEFAULT_ARCHIVE_CAPACITY};
use crate::operators::{MoveContext, OperatorError, OperatorId, OperatorPool};
use crate::problem::{BitSolution, Evaluation, ProblemError, SukpInstance};
use crate::selection::{SchemeKind, SchemeParams, SchemeState, SelectionError, WeightVector};

#[derive(Debug, Error)]
pub enum AbcError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Experience(#[from] ExperienceError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Credit(#[from] CreditError),
}

/// How a run treats previously learned credit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferMode {
    /// Start from a blank model.
    #[default]
    Fresh,
    /// Load prior experience and never update it.
    Frozen,
    /// Load prior experience and keep learning.
    Continue,
}

impl TransferMode {
    pub fn name(self) -> &'static str {
        match self {
            TransferMode::Fresh => "fresh",
            TransferMode::Frozen => "frozen",
            TransferMode::Continue => "continue",
        }
    }
}

impl fmt::Display for TransferMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransferMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fresh" => Ok(TransferMode::Fresh),
            "frozen" => Ok(TransferMode::Frozen),
            "continue" => Ok(TransferMode::Continue),
            _ => Err(format!(
                "unknown transfer mode `{s}` (valid: fresh, frozen, continue)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbcConfig {
    pub colony_size: usize,
    /// Trials without improvement tolerated before a scout replaces the source.
    pub limit: usize,
    /// Evaluations available after initialization.
    pub budget: usize,
    pub scheme: SchemeKind,
    pub scheme_params: SchemeParams,
    pub credit: CreditSettings,
    pub operators: OperatorPool,
    pub weights: WeightVector,
    pub seed: u64,
    pub transfer: TransferMode,
    pub experience: Option<PathBuf>,
    pub archive_capacity: Option<usize>,
    /// Scalarized fitness whose first attainment is reported as `evals_to_target`.
    pub target_fitness: Option<f64>,
    /// Keep a per-move trace in the result.
    pub record_trace: bool,
}

impl Default for AbcConfig {
    fn default() -> Self {
        AbcConfig {
            colony_size: 20,
            limit: 50,
            budget: 40_000,
            scheme: SchemeKind::Rl,
            scheme_params: SchemeParams::default(),
            credit: CreditSettings::default(),
            operators: OperatorPool::default(),
            weights: WeightVector::uniform(1),
            seed: 0,
            transfer: TransferMode::Fresh,
            experience: None,
            archive_capacity: Some(DEFAULT_ARCHIVE_CAPACITY),
            target_fitness: None,
            record_trace: false,
        }
    }
}

impl AbcConfig {
    pub fn validate(&self) -> Result<(), AbcError> {
        if self.colony_size < 2 {
            return Err(AbcError::Config("colony_size must be at least 2".into()));
        }
        if self.budget < self.colony_size {
            return Err(AbcError::Config(format!(
                "budget {} smaller than colony_size {}",
                self.budget, self.colony_size
            )));
        }
        self.scheme_params.validate(self.operators.size())?;
        self.credit.validate()?;
        if self.transfer != TransferMode::Fresh && self.scheme != SchemeKind::Rl {
            return Err(AbcError::Config(format!(
                "transfer mode {} requires the rl scheme",
                self.transfer
            )));
        }
        Ok(())
    }

    fn check_instance(&self, instance: &SukpInstance) -> Result<(), AbcError> {
        if self.weights.len() != instance.objective_count() {
            return Err(AbcError::Dimension(format!(
                "{} weights for {} objectives",
                self.weights.len(),
                instance.objective_count()
            )));
        }
        Ok(())
    }

    /// (operators, objectives, solution length) an experience file must have.
    pub fn experience_shape(&self, instance: &SukpInstance) -> (usize, usize, usize) {
        (
            self.operators.size(),
            instance.objective_count(),
            instance.item_count(),
        )
    }
}

/// Weighted sum of objectives, each divided by a fixed per-objective scale.
///
/// Single-objective runs use the raw value. With several objectives each is
/// divided by the smallest power of two not below its total profit, so
/// objectives are comparable in magnitude and the division itself is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalarizer {
    weights: Vec<f64>,
    scales: Vec<f64>,
}

impl Scalarizer {
    pub fn new(instance: &SukpInstance, weights: &WeightVector) -> Self {
        let scales = if instance.objective_count() == 1 {
            vec![1.0]
        } else {
            instance
                .profit_totals()
                .into_iter()
                .map(|t| if t > 0.0 { 2f64.powi(t.log2().ceil() as i32) } else { 1.0 })
                .collect()
        };
        Scalarizer {
            weights: weights.as_slice().to_vec(),
            scales,
        }
    }

    pub fn fitness(&self, eval: &Evaluation) -> f64 {
        eval.objectives
            .iter()
            .zip(&self.weights)
            .zip(&self.scales)
            .map(|((f, w), s)| w * (f / s))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoodSource {
    pub solution: BitSolution,
    pub evaluation: Evaluation,
    pub fitness: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Employed,
    Onlooker,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceEvent {
    Move {
        phase: Phase,
        source: usize,
        op: OperatorId,
        improved: bool,
        objectives: Vec<f64>,
    },
    Scout {
        source: usize,
    },
    /// End of one employed/onlooker/scout cycle.
    CycleEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub best_solution: BitSolution,
    pub best_evaluation: Evaluation,
    pub best_fitness: f64,
    pub archive: ParetoArchive,
    /// `(evaluations so far, best fitness)` at start and after every improvement.
    pub history: Vec<(u64, f64)>,
    pub evaluations: u64,
    pub evals_to_target: Option<u64>,
    /// Final credit model of rl runs.
    pub model: Option<CreditModel>,
    pub operator_counts: Vec<u64>,
    pub sources: Vec<FoodSource>,
    pub trace: Vec<TraceEvent>,
}

impl RunResult {
    /// First evaluation count at which the best fitness reached `target`.
    pub fn evals_to(&self, target: f64) -> Option<u64> {
        self.history
            .iter()
            .find(|&&(_, f)| f >= target)
            .map(|&(e, _)| e)
    }
}

/// Independent 64-bit seed for stream `index` derived from `base`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a golden-ratio stride
    let mut z = base
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Colony<'a> {
    instance: &'a SukpInstance,
    config: &'a AbcConfig,
    scalarizer: Scalarizer,
    rng: ChaCha8Rng,
    scheme: SchemeState,
    model: Option<CreditModel>,
    sources: Vec<FoodSource>,
    best: FoodSource,
    archive: ParetoArchive,
    history: Vec<(u64, f64)>,
    evaluations: u64,
    move_evals: usize,
    operator_counts: Vec<u64>,
    trace: Vec<TraceEvent>,
}

impl<'a> Colony<'a> {
    fn budget_left(&self) -> bool {
        self.move_evals < self.config.budget
    }

    fn evaluate(&mut self, x: &BitSolution) -> Result<(Evaluation, f64), AbcError> {
        let eval = self.instance.evaluate(x)?;
        debug_assert!(eval.feasible);
        self.evaluations += 1;
        let fit = self.scalarizer.fitness(&eval);
        self.archive.insert(x.clone(), eval.objectives.clone());
        Ok((eval, fit))
    }

    fn random_source(&mut self) -> Result<FoodSource, AbcError> {
        let raw = BitSolution::random(self.instance.item_count(), &mut self.rng);
        let solution = self
            .instance
            .repair_weighted(&raw, self.config.weights.as_slice())?;
        let (evaluation, fitness) = self.evaluate(&solution)?;
        Ok(FoodSource {
            solution,
            evaluation,
            fitness,
            trials: 0,
        })
    }

    fn offer_best(&mut self, candidate: &FoodSource) {
        if candidate.fitness > self.best.fitness {
            self.best = FoodSource {
                trials: 0,
                ..candidate.clone()
            };
            self.history.push((self.evaluations, candidate.fitness));
        }
    }

    /// One select/apply/repair/evaluate/credit/replace cycle on source `i`.
    fn move_source(&mut self, i: usize, phase: Phase) -> Result<(), AbcError> {
        let weights = &self.config.weights;
        let current = &self.sources[i];
        let credits = match &self.model {
            Some(model) => Some(model.credit_of(&current.solution)?),
            None => None,
        };
        let op = self.scheme.select(credits.as_ref(), weights, &mut self.rng)?;
        let n = self.sources.len();
        let mut donor = self.rng.random_range(0..n - 1);
        if donor >= i {
            donor += 1;
        }
        let ctx = MoveContext {
            current: &current.solution,
            global_best: &self.best.solution,
            donor: &self.sources[donor].solution,
        };
        let raw = self.config.operators.apply(op, &ctx, &mut self.rng)?;
        let solution = self.instance.repair_weighted(&raw, weights.as_slice())?;
        self.move_evals += 1;
        let (evaluation, fitness) = self.evaluate(&solution)?;
        self.operator_counts[op.0] += 1;

        let reward = compute_reward(&self.sources[i].evaluation, &evaluation)?;
        if let Some(model) = self.model.as_mut() {
            model.record_move(&solution, op, &reward)?;
        }
        self.scheme
            .update(op, reward.scalarize(self.config.weights.as_slice()))?;

        let improved = fitness > self.sources[i].fitness;
        if self.config.record_trace {
            self.trace.push(TraceEvent::Move {
                phase,
                source: i,
                op,
                improved,
                objectives: evaluation.objectives.clone(),
            });
        }
        if improved {
            let src = FoodSource {
                solution,
                evaluation,
                fitness,
                trials: 0,
            };
            self.offer_best(&src);
            self.sources[i] = src;
        } else {
            let src = &mut self.sources[i];
            src.trials = (src.trials + 1).min(self.config.limit + 1);
        }
        Ok(())
    }

    fn roulette(&mut self) -> usize {
        let weights: Vec<f64> = self.sources.iter().map(|s| s.fitness.max(0.0)).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return self.rng.random_range(0..weights.len());
        }
        let u = self.rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (k, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        weights.len() - 1
    }

    fn run(mut self) -> Result<RunResult, AbcError> {
        let sn = self.config.colony_size;
        for _ in 0..sn {
            let src = self.random_source()?;
            self.offer_best(&src);
            self.sources.push(src);
        }
        'search: while self.budget_left() {
            for i in 0..sn {
                if !self.budget_left() {
                    break 'search;
                }
                self.move_source(i, Phase::Employed)?;
            }
            for _ in 0..sn {
                if !self.budget_left() {
                    break 'search;
                }
                let i = self.roulette();
                self.move_source(i, Phase::Onlooker)?;
            }
            for i in 0..sn {
                if self.sources[i].trials > self.config.limit {
                    if !self.budget_left() {
                        break 'search;
                    }
                    self.move_evals += 1;
                    let src = self.random_source()?;
                    self.offer_best(&src);
                    self.sources[i] = src;
                    if self.config.record_trace {
                        self.trace.push(TraceEvent::Scout { source: i });
                    }
                }
            }
            if self.config.record_trace {
                self.trace.push(TraceEvent::CycleEnd);
            }
        }
        let evals_to_target = self.config.target_fitness.and_then(|t| {
            self.history
                .iter()
                .find(|&&(_, f)| f >= t)
                .map(|&(e, _)| e)
        });
        Ok(RunResult {
            best_solution: self.best.solution,
            best_evaluation: self.best.evaluation,
            best_fitness: self.best.fitness,
            archive: self.archive,
            history: self.history,
            evaluations: self.evaluations,
            evals_to_target,
            model: self.model,
            operator_counts: self.operator_counts,
            sources: self.sources,
            trace: self.trace,
        })
    }
}

/// Runs the colony starting from `initial` credit (rl scheme only). A `None`
/// model means a blank one.
pub fn run_with_model(
    instance: &SukpInstance,
    config: &AbcConfig,
    initial: Option<CreditModel>,
) -> Result<RunResult, AbcError> {
    config.validate()?;
    config.check_instance(instance)?;
    let shape = config.experience_shape(instance);
    let model = if config.scheme == SchemeKind::Rl {
        let model = match initial {
            Some(m) => {
                let found = (m.operators(), m.objectives(), m.solution_length());
                if found != shape {
                    return Err(AbcError::Dimension(format!(
                        "credit model shape {found:?}, run needs {shape:?}"
                    )));
                }
                m
            }
            None => CreditModel::new(shape.0, shape.1, shape.2, config.credit)?,
        };
        Some(model)
    } else {
        None
    };
    let rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scheme = SchemeState::new(config.scheme, config.operators.size(), config.scheme_params)?;
    // Placeholder best; replaced by the first initial source.
    let empty = BitSolution::zeros(instance.item_count());
    let empty_eval = instance.evaluate(&empty)?;
    let best = FoodSource {
        solution: empty,
        evaluation: empty_eval,
        fitness: f64::NEG_INFINITY,
        trials: 0,
    };
    let colony = Colony {
        instance,
        config,
        scalarizer: Scalarizer::new(instance, &config.weights),
        rng,
        scheme,
        model,
        sources: Vec::with_capacity(config.colony_size),
        best,
        archive: ParetoArchive::new(config.archive_capacity),
        history: Vec::new(),
        evaluations: 0,
        move_evals: 0,
        operator_counts: vec![0; config.operators.size()],
        trace: Vec::new(),
    };
    colony.run()
}

/// Loads the starting model implied by the configured transfer mode.
pub fn initial_model(
    instance: &SukpInstance,
    config: &AbcConfig,
) -> Result<Option<CreditModel>, AbcError> {
    if config.transfer == TransferMode::Fresh || config.scheme != SchemeKind::Rl {
        return Ok(None);
    }
    let Some(path) = &config.experience else {
        return Err(AbcError::Config(format!(
            "transfer mode {} needs an experience file",
            config.transfer
        )));
    };
    let mut model = CreditModel::load_experience(
        path,
        config.experience_shape(instance),
        config.credit.distance_mode,
    )?;
    model.set_settings(CreditSettings {
        learning_rate: model.settings().learning_rate,
        discount: model.settings().discount,
        ..config.credit
    })?;
    model.set_frozen(config.transfer == TransferMode::Frozen);
    Ok(Some(model))
}

/// Single run honouring the configured transfer mode and experience file.
pub fn run(instance: &SukpInstance, config: &AbcConfig) -> Result<RunResult, AbcError> {
    config.validate()?;
    config.check_instance(instance)?;
    let model = initial_model(instance, config)?;
    run_with_model(instance, config, model)
}

/// Repeated runs on one instance with credit carried over per transfer mode.
///
/// Repetition `k` uses seed `derive_seed(config.seed, k)`. Fresh mode starts
/// every repetition blank; frozen mode reuses `experience` read-only; continue
/// mode starts from `experience` and hands each final model to the next
/// repetition. A missing `experience` means a blank starting model.
pub fn run_transfer_sequence_from(
    instance: &SukpInstance,
    config: &AbcConfig,
    repetitions: usize,
    experience: Option<CreditModel>,
) -> Result<Vec<RunResult>, AbcError> {
    if repetitions == 0 {
        return Err(AbcError::Config("repetitions must be at least 1".into()));
    }
    config.validate()?;
    config.check_instance(instance)?;
    let mut carried = experience.map(|mut m| {
        m.set_frozen(config.transfer == TransferMode::Frozen);
        m
    });
    if config.transfer == TransferMode::Frozen && carried.is_none() && config.scheme == SchemeKind::Rl {
        let (o, f, m) = config.experience_shape(instance);
        let mut blank = CreditModel::new(o, f, m, config.credit)?;
        blank.set_frozen(true);
        carried = Some(blank);
    }
    let mut results = Vec::with_capacity(repetitions);
    for k in 0..repetitions {
        let rep_config = AbcConfig {
            seed: derive_seed(config.seed, k as u64),
            ..config.clone()
        };
        let start = match config.transfer {
            TransferMode::Fresh => None,
            TransferMode::Frozen | TransferMode::Continue => carried.clone(),
        };
        let result = run_with_model(instance, &rep_config, start)?;
        if config.transfer == TransferMode::Continue {
            carried = result.model.clone();
        }
        results.push(result);
    }
    Ok(results)
}

/// [`run_transfer_sequence_from`] with the experience named in the config.
pub fn run_transfer_sequence(
    instance: &SukpInstance,
    config: &AbcConfig,
    repetitions: usize,
) -> Result<Vec<RunResult>, AbcError> {
    let model = initial_model(instance, config)?;
    run_transfer_sequence_from(instance, config, repetitions, model)
}
