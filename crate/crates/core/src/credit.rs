//! Operator credit assignment.
//!
//! Each (operator, objective) pair keeps a cluster center in `[0,1]^m`, the
//! running mean of the states in which that operator improved that objective,
//! plus a scalar value updated by the temporal-difference rule
//!
//! ```text
//! q <- q + beta * (r + gamma * max_k Q(x', o_k) - q)
//! ```
//!
//! The selection credit of operator `i` for objective `j` at state `x` is the
//! product of a cluster term (similarity or raw distance between `x` and the
//! center) and a value term `1 + q`. Either factor can be switched off.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operators::OperatorId;
use crate::problem::{BitSolution, Evaluation};

pub const EXPERIENCE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CreditError {
    #[error("state has length {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("reward has {found} objectives, expected {expected}")]
    ObjectiveMismatch { expected: usize, found: usize },
    #[error("operator {index} out of range for {operators} operators")]
    InvalidOperator { index: usize, operators: usize },
    #[error("objective {index} out of range for {objectives} objectives")]
    InvalidObjective { index: usize, objectives: usize },
    #[error("invalid credit parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Error)]
pub enum ExperienceError {
    #[error("unsupported experience version {found} (supported: {EXPERIENCE_VERSION})")]
    Version { found: u64 },
    #[error("experience dimensions {found:?} do not match run (operators, objectives, length) {expected:?}")]
    Dimension {
        expected: (usize, usize, usize),
        found: (usize, usize, usize),
    },
    #[error("corrupt experience file: {0}")]
    Corrupt(String),
    #[error("experience io: {0}")]
    Io(#[from] std::io::Error),
}

/// How the cluster term is derived from the Euclidean distance `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMode {
    /// `1 / (1 + d)`: closer centers earn more credit.
    #[default]
    Similarity,
    /// `d` itself.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CreditSettings {
    pub learning_rate: f64,
    pub discount: f64,
    pub distance_mode: DistanceMode,
    /// Include the cluster term in the selection credit.
    pub use_cluster: bool,
    /// Include the `1 + q` value term in the selection credit.
    pub use_value: bool,
}

impl Default for CreditSettings {
    fn default() -> Self {
        CreditSettings {
            learning_rate: 0.1,
            discount: 0.0,
            distance_mode: DistanceMode::Similarity,
            use_cluster: true,
            use_value: true,
        }
    }
}

impl CreditSettings {
    pub fn validate(&self) -> Result<(), CreditError> {
        for (name, v) in [("learning rate", self.learning_rate), ("discount", self.discount)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CreditError::InvalidParameter(format!("{name} {v} not in [0,1]")));
            }
        }
        Ok(())
    }
}

/// Per-objective rewards of one move.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardVector(pub Vec<f64>);

impl RewardVector {
    pub fn scalarize(&self, weights: &[f64]) -> f64 {
        self.0.iter().zip(weights).map(|(r, w)| r * w).sum()
    }
}

/// Normalized non-negative improvement `max(0, (f' - f) / (|f| + 1))` per objective.
pub fn compute_reward(prev: &Evaluation, next: &Evaluation) -> Result<RewardVector, CreditError> {
    if prev.objectives.len() != next.objectives.len() {
        return Err(CreditError::ObjectiveMismatch {
            expected: prev.objectives.len(),
            found: next.objectives.len(),
        });
    }
    Ok(RewardVector(
        prev.objectives
            .iter()
            .zip(&next.objectives)
            .map(|(f, g)| ((g - f) / (f.abs() + 1.0)).max(0.0))
            .collect(),
    ))
}

/// Credit of every operator for every objective at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct CreditView {
    operators: usize,
    objectives: usize,
    values: Vec<f64>,
}

impl CreditView {
    pub fn new(credits: Vec<Vec<f64>>) -> Self {
        let operators = credits.len();
        let objectives = credits.first().map_or(0, Vec::len);
        CreditView {
            operators,
            objectives,
            values: credits.into_iter().flatten().collect(),
        }
    }

    pub fn operators(&self) -> usize {
        self.operators
    }

    pub fn objectives(&self) -> usize {
        self.objectives
    }

    pub fn get(&self, op: usize, objective: usize) -> f64 {
        self.values[op * self.objectives + objective]
    }

    /// `sum_j w_j * credit[op][j]`.
    pub fn scalarized(&self, op: usize, weights: &[f64]) -> f64 {
        (0..self.objectives).map(|j| weights[j] * self.get(op, j)).sum()
    }

    fn column_max(&self, objective: usize) -> f64 {
        (0..self.operators)
            .map(|i| self.get(i, objective))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Result of an update request on a possibly frozen model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    Applied,
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreditModel {
    operators: usize,
    objectives: usize,
    solution_length: usize,
    /// Row-major `[operator][objective]`, each of `solution_length`.
    centers: Vec<Vec<f64>>,
    counters: Vec<u64>,
    q_table: Vec<f64>,
    settings: CreditSettings,
    frozen: bool,
}

impl CreditModel {
    /// Blank model: centers at 0.5, counters and values at zero.
    pub fn new(
        operators: usize,
        objectives: usize,
        solution_length: usize,
        settings: CreditSettings,
    ) -> Result<Self, CreditError> {
        settings.validate()?;
        if operators == 0 || objectives == 0 {
            return Err(CreditError::InvalidParameter(
                "operators and objectives must be positive".into(),
            ));
        }
        let cells = operators * objectives;
        Ok(CreditModel {
            operators,
            objectives,
            solution_length,
            centers: vec![vec![0.5; solution_length]; cells],
            counters: vec![0; cells],
            q_table: vec![0.0; cells],
            settings,
            frozen: false,
        })
    }

    pub fn operators(&self) -> usize {
        self.operators
    }

    pub fn objectives(&self) -> usize {
        self.objectives
    }

    pub fn solution_length(&self) -> usize {
        self.solution_length
    }

    pub fn settings(&self) -> &CreditSettings {
        &self.settings
    }

    /// Replaces the non-persisted settings (learning rate, discount, credit shape).
    pub fn set_settings(&mut self, settings: CreditSettings) -> Result<(), CreditError> {
        settings.validate()?;
        self.settings = settings;
        Ok(())
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    fn cell(&self, op: usize, objective: usize) -> usize {
        op * self.objectives + objective
    }

    pub fn center(&self, op: usize, objective: usize) -> &[f64] {
        &self.centers[self.cell(op, objective)]
    }

    pub fn counter(&self, op: usize, objective: usize) -> u64 {
        self.counters[self.cell(op, objective)]
    }

    pub fn q_value(&self, op: usize, objective: usize) -> f64 {
        self.q_table[self.cell(op, objective)]
    }

    fn check_state(&self, x: &BitSolution) -> Result<(), CreditError> {
        if x.len() != self.solution_length {
            return Err(CreditError::DimensionMismatch {
                expected: self.solution_length,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn check_indices(&self, op: usize, objective: usize) -> Result<(), CreditError> {
        if op >= self.operators {
            return Err(CreditError::InvalidOperator {
                index: op,
                operators: self.operators,
            });
        }
        if objective >= self.objectives {
            return Err(CreditError::InvalidObjective {
                index: objective,
                objectives: self.objectives,
            });
        }
        Ok(())
    }

    /// Euclidean distance between `x` and the center of `(op, objective)`.
    pub fn distance(&self, x: &BitSolution, op: usize, objective: usize) -> f64 {
        self.center(op, objective)
            .iter()
            .zip(x.bits())
            .map(|(c, &b)| {
                let d = if b { 1.0 - c } else { -c };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Cluster term alone, per the configured distance mode.
    pub fn cluster_credit(&self, x: &BitSolution, op: usize, objective: usize) -> f64 {
        let d = self.distance(x, op, objective);
        match self.settings.distance_mode {
            DistanceMode::Similarity => 1.0 / (1.0 + d),
            DistanceMode::Literal => d,
        }
    }

    pub fn credit_of(&self, x: &BitSolution) -> Result<CreditView, CreditError> {
        self.check_state(x)?;
        let mut values = Vec::with_capacity(self.operators * self.objectives);
        for i in 0..self.operators {
            for j in 0..self.objectives {
                let cluster = if self.settings.use_cluster {
                    self.cluster_credit(x, i, j)
                } else {
                    1.0
                };
                let value = if self.settings.use_value {
                    1.0 + self.q_value(i, j)
                } else {
                    1.0
                };
                values.push(cluster * value);
            }
        }
        Ok(CreditView {
            operators: self.operators,
            objectives: self.objectives,
            values,
        })
    }

    /// Temporal-difference update of one value entry.
    pub fn bellman_update(
        &mut self,
        op: OperatorId,
        objective: usize,
        reward: f64,
        next_best: f64,
    ) -> Result<UpdateOutcome, CreditError> {
        self.check_indices(op.0, objective)?;
        if self.frozen {
            return Ok(UpdateOutcome::Skipped);
        }
        let CreditSettings {
            learning_rate: beta,
            discount: gamma,
            ..
        } = self.settings;
        let cell = self.cell(op.0, objective);
        let q = self.q_table[cell];
        self.q_table[cell] = q + beta * (reward + gamma * next_best - q);
        Ok(UpdateOutcome::Applied)
    }

    /// Feeds back the outcome of applying `op`, which produced state `next`.
    ///
    /// Objectives with positive reward count as a success: their counter is
    /// incremented and the center moves to the running mean of success
    /// states. Every objective then receives a value update bootstrapped from
    /// the best credit at `next`.
    pub fn record_move(
        &mut self,
        next: &BitSolution,
        op: OperatorId,
        reward: &RewardVector,
    ) -> Result<UpdateOutcome, CreditError> {
        self.check_state(next)?;
        self.check_indices(op.0, 0)?;
        if reward.0.len() != self.objectives {
            return Err(CreditError::ObjectiveMismatch {
                expected: self.objectives,
                found: reward.0.len(),
            });
        }
        if self.frozen {
            return Ok(UpdateOutcome::Skipped);
        }
        for (j, &r) in reward.0.iter().enumerate() {
            if r > 0.0 {
                let cell = self.cell(op.0, j);
                self.counters[cell] += 1;
                let n = self.counters[cell] as f64;
                for (c, &b) in self.centers[cell].iter_mut().zip(next.bits()) {
                    let target = if b { 1.0 } else { 0.0 };
                    *c += (target - *c) / n;
                }
            }
        }
        let view = self.credit_of(next)?;
        for (j, &r) in reward.0.iter().enumerate() {
            self.bellman_update(op, j, r, view.column_max(j))?;
        }
        Ok(UpdateOutcome::Applied)
    }

    pub fn to_experience(&self) -> ExperienceFile {
        let rows = |flat: &[f64]| -> Vec<Vec<f64>> {
            flat.chunks(self.objectives).map(<[f64]>::to_vec).collect()
        };
        ExperienceFile {
            version: EXPERIENCE_VERSION as u64,
            operators: self.operators,
            objectives: self.objectives,
            solution_length: self.solution_length,
            centers: self
                .centers
                .chunks(self.objectives)
                .map(<[Vec<f64>]>::to_vec)
                .collect(),
            counters: self
                .counters
                .chunks(self.objectives)
                .map(<[u64]>::to_vec)
                .collect(),
            q_table: rows(&self.q_table),
            beta: self.settings.learning_rate,
            gamma: self.settings.discount,
        }
    }

    /// Rebuilds a model from a decoded experience file after validating its shape.
    pub fn from_experience(
        file: ExperienceFile,
        distance_mode: DistanceMode,
    ) -> Result<Self, ExperienceError> {
        if file.version != EXPERIENCE_VERSION as u64 {
            return Err(ExperienceError::Version {
                found: file.version,
            });
        }
        let (ops, objs, m) = (file.operators, file.objectives, file.solution_length);
        let corrupt = |what: &str| ExperienceError::Corrupt(what.to_string());
        if ops == 0 || objs == 0 {
            return Err(corrupt("operators and objectives must be positive"));
        }
        fn shape_ok<T>(rows: &[Vec<T>], ops: usize, objs: usize) -> bool {
            rows.len() == ops && rows.iter().all(|r| r.len() == objs)
        }
        if !shape_ok(&file.centers, ops, objs)
            || !shape_ok(&file.counters, ops, objs)
            || !shape_ok(&file.q_table, ops, objs)
        {
            return Err(corrupt("array shape disagrees with declared dimensions"));
        }
        let centers: Vec<Vec<f64>> = file.centers.into_iter().flatten().collect();
        if centers
            .iter()
            .any(|c| c.len() != m || c.iter().any(|v| !(0.0..=1.0).contains(v)))
        {
            return Err(corrupt("center outside [0,1]^m"));
        }
        let q_table: Vec<f64> = file.q_table.into_iter().flatten().collect();
        if q_table.iter().any(|q| !q.is_finite()) {
            return Err(corrupt("non-finite value entry"));
        }
        let settings = CreditSettings {
            learning_rate: file.beta,
            discount: file.gamma,
            distance_mode,
            ..CreditSettings::default()
        };
        settings
            .validate()
            .map_err(|e| ExperienceError::Corrupt(e.to_string()))?;
        Ok(CreditModel {
            operators: ops,
            objectives: objs,
            solution_length: m,
            centers,
            counters: file.counters.into_iter().flatten().collect(),
            q_table,
            settings,
            frozen: false,
        })
    }

    /// Writes the experience file through a temporary file and an atomic rename.
    pub fn save_experience(&self, path: &Path) -> Result<(), ExperienceError> {
        let json = serde_json::to_string_pretty(&self.to_experience())
            .map_err(|e| ExperienceError::Corrupt(e.to_string()))?;
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(json.as_bytes())?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    /// Loads an experience file and checks it against the run dimensions
    /// `(operators, objectives, solution_length)`.
    pub fn load_experience(
        path: &Path,
        expected: (usize, usize, usize),
        distance_mode: DistanceMode,
    ) -> Result<Self, ExperienceError> {
        let file = read_experience_file(path)?;
        if file.version != EXPERIENCE_VERSION as u64 {
            return Err(ExperienceError::Version {
                found: file.version,
            });
        }
        let found = (file.operators, file.objectives, file.solution_length);
        if found != expected {
            return Err(ExperienceError::Dimension { expected, found });
        }
        CreditModel::from_experience(file, distance_mode)
    }
}

/// Decodes an experience file without checking it against any run.
pub fn read_experience_file(path: &Path) -> Result<ExperienceFile, ExperienceError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| ExperienceError::Corrupt(e.to_string()))
}

/// On-disk experience document. Arrays are row-major `[operator][objective]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperienceFile {
    pub version: u64,
    pub operators: usize,
    pub objectives: usize,
    pub solution_length: usize,
    pub centers: Vec<Vec<Vec<f64>>>,
    pub counters: Vec<Vec<u64>>,
    pub q_table: Vec<Vec<f64>>,
    pub beta: f64,
    pub gamma: f64,
}
