//! TOML run and matrix configuration files.
//!
//! Every key is optional. Relative paths are resolved against the directory
//! of the file that names them. Command-line values are merged on top with
//! [`RunSettings::overlay`].

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::abc::{derive_seed, AbcConfig, TransferMode};
use crate::bench::{BenchInstance, MatrixConfig, RankKey, Variant};
use crate::credit::DistanceMode;
use crate::operators::OperatorPool;
use crate::problem::{generate_instance, parse_instance, GeneratorParams, SukpInstance};
use crate::selection::{SchemeKind, WeightVector};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    /// An unknown scheme, operator or mode name.
    #[error("{0}")]
    UnknownName(String),
    #[error("{0}")]
    Invalid(String),
}

pub fn read_file(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_instance(path: &Path) -> Result<SukpInstance, ConfigError> {
    let text = read_file(path)?;
    parse_instance(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

/// Keys of a run configuration. Unset keys keep the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub instance: Option<PathBuf>,
    pub scheme: Option<String>,
    pub operators: Option<Vec<String>>,
    pub weights: Option<Vec<f64>>,
    pub colony_size: Option<usize>,
    pub limit: Option<usize>,
    pub budget: Option<usize>,
    pub seed: Option<u64>,
    pub transfer: Option<String>,
    pub experience: Option<PathBuf>,
    pub archive_capacity: Option<usize>,
    pub target_fitness: Option<f64>,
    pub learning_rate: Option<f64>,
    pub discount: Option<f64>,
    pub distance_mode: Option<String>,
    pub use_cluster: Option<bool>,
    pub use_value: Option<bool>,
    pub p_min: Option<f64>,
    pub alpha: Option<f64>,
    pub pursuit_rate: Option<f64>,
    pub ucb_c: Option<f64>,
    pub epsilon: Option<f64>,
    pub summary: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub archive: Option<PathBuf>,
    pub save_experience: Option<PathBuf>,
}

macro_rules! overlay_fields {
    ($base:expr, $top:expr, $($f:ident),*) => {
        RunSettings { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunSettings {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut s: RunSettings = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        s.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&read_file(path)?, path)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.instance,
            &mut self.experience,
            &mut self.summary,
            &mut self.history,
            &mut self.archive,
            &mut self.save_experience,
        ] {
            resolve(base, p);
        }
    }

    /// Keys set in `top` win over keys set in `self`.
    pub fn overlay(self, top: RunSettings) -> RunSettings {
        overlay_fields!(
            self, top, instance, scheme, operators, weights, colony_size, limit, budget, seed,
            transfer, experience, archive_capacity, target_fitness, learning_rate, discount,
            distance_mode, use_cluster, use_value, p_min, alpha, pursuit_rate, ucb_c, epsilon,
            summary, history, archive, save_experience
        )
    }

    /// Solver configuration for an instance with `objectives` objectives.
    /// Missing weights mean equal weights.
    pub fn to_config(&self, objectives: usize) -> Result<AbcConfig, ConfigError> {
        let mut c = AbcConfig::default();
        if let Some(s) = &self.scheme {
            c.scheme = s
                .parse::<SchemeKind>()
                .map_err(|e| ConfigError::UnknownName(e.to_string()))?;
        }
        if let Some(ops) = &self.operators {
            c.operators =
                OperatorPool::from_names(ops).map_err(|e| ConfigError::UnknownName(e.to_string()))?;
        }
        c.weights = match &self.weights {
            Some(w) => WeightVector::new(w.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => WeightVector::uniform(objectives.max(1)),
        };
        if let Some(t) = &self.transfer {
            c.transfer = t.parse::<TransferMode>().map_err(ConfigError::UnknownName)?;
        }
        if let Some(d) = &self.distance_mode {
            c.credit.distance_mode = match d.as_str() {
                "similarity" => DistanceMode::Similarity,
                "literal" => DistanceMode::Literal,
                other => {
                    return Err(ConfigError::UnknownName(format!(
                        "unknown distance mode `{other}` (valid: similarity, literal)"
                    )))
                }
            };
        }
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$src { c.$($dst).+ = v; })*
            };
        }
        set!(
            colony_size => colony_size,
            limit => limit,
            budget => budget,
            seed => seed,
            learning_rate => credit.learning_rate,
            discount => credit.discount,
            use_cluster => credit.use_cluster,
            use_value => credit.use_value,
            p_min => scheme_params.p_min,
            alpha => scheme_params.alpha,
            pursuit_rate => scheme_params.pursuit_rate,
            ucb_c => scheme_params.ucb_c,
            epsilon => scheme_params.epsilon,
        );
        if self.archive_capacity.is_some() {
            c.archive_capacity = self.archive_capacity;
        }
        c.target_fitness = self.target_fitness;
        c.experience = self.experience.clone();
        c.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(c)
    }
}

/// An instance file listed in a matrix.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceEntry {
    pub path: PathBuf,
    /// Defaults to the file stem.
    pub id: Option<String>,
    pub group: Option<String>,
}

/// A family of generated instances listed in a matrix.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedEntry {
    pub count: usize,
    pub items: usize,
    pub elements: usize,
    #[serde(default = "one")]
    pub objectives: usize,
    pub density: f64,
    pub capacity_ratio: f64,
    pub seed: u64,
    /// Instance ids are `{group}-{index}`.
    pub group: String,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SeedList {
    /// Seeds `0..n`.
    Count(u64),
    List(Vec<u64>),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSettings {
    #[serde(default)]
    pub instances: Vec<InstanceEntry>,
    #[serde(default)]
    pub generated: Vec<GeneratedEntry>,
    /// Variant labels such as `rl`, `pm` or `rl:continue`.
    pub schemes: Option<Vec<String>>,
    pub seeds: Option<SeedList>,
    pub target_ratio: Option<f64>,
    pub warmup_seed: Option<u64>,
    pub parallel: Option<usize>,
    pub timing: Option<bool>,
    /// `fitness` or `evals`.
    pub rank_by: Option<String>,
    pub records: Option<PathBuf>,
    pub ranks: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub report: Option<PathBuf>,
    /// Solver settings shared by all runs; `instance` and output keys are not allowed.
    #[serde(default)]
    pub run: RunSettings,
}

impl MatrixSettings {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut s: MatrixSettings = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for inst in &mut s.instances {
            if inst.path.is_relative() {
                inst.path = base.join(&inst.path);
            }
        }
        for p in [&mut s.records, &mut s.ranks, &mut s.plot, &mut s.report] {
            resolve(base, p);
        }
        s.run.resolve_paths(base);
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&read_file(path)?, path)
    }

    pub fn rank_key(&self) -> Result<RankKey, ConfigError> {
        match self.rank_by.as_deref() {
            None | Some("fitness") => Ok(RankKey::Fitness),
            Some("evals") => Ok(RankKey::EvalsToTarget),
            Some(other) => Err(ConfigError::UnknownName(format!(
                "unknown ranking key `{other}` (valid: fitness, evals)"
            ))),
        }
    }

    /// Reads or generates every instance. All files are read before any is
    /// parsed so a missing file is reported first.
    pub fn load_instances(&self) -> Result<Vec<BenchInstance>, ConfigError> {
        let texts = self
            .instances
            .iter()
            .map(|e| read_file(&e.path))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Vec::new();
        for (entry, text) in self.instances.iter().zip(texts) {
            let instance = parse_instance(&text).map_err(|e| ConfigError::Parse {
                path: entry.path.clone(),
                message: e.to_string(),
            })?;
            let id = entry.id.clone().unwrap_or_else(|| {
                entry
                    .path
                    .file_stem()
                    .map_or_else(|| entry.path.display().to_string(), |s| s.to_string_lossy().into_owned())
            });
            out.push(BenchInstance {
                id,
                group: entry.group.clone().unwrap_or_else(|| "default".into()),
                instance,
            });
        }
        for g in &self.generated {
            out.extend(generated_suite(g)?);
        }
        if out.is_empty() {
            return Err(ConfigError::Invalid("matrix lists no instances".into()));
        }
        Ok(out)
    }

    /// Matrix settings; weights default to equal weights over the objective
    /// count of `objectives`.
    pub fn to_matrix(&self, objectives: usize) -> Result<MatrixConfig, ConfigError> {
        if self.run.instance.is_some()
            || self.run.summary.is_some()
            || self.run.history.is_some()
            || self.run.archive.is_some()
            || self.run.save_experience.is_some()
        {
            return Err(ConfigError::Invalid(
                "[run] in a matrix file takes solver settings only".into(),
            ));
        }
        let mut base = self.run.to_config(objectives)?;
        base.transfer = TransferMode::Fresh;
        let mut m = MatrixConfig {
            base,
            ..MatrixConfig::default()
        };
        if let Some(schemes) = &self.schemes {
            m.variants = schemes
                .iter()
                .map(|s| s.parse::<Variant>().map_err(ConfigError::UnknownName))
                .collect::<Result<_, _>>()?;
        }
        match &self.seeds {
            Some(SeedList::Count(n)) => m.seeds = (0..*n).collect(),
            Some(SeedList::List(v)) => m.seeds = v.clone(),
            None => {}
        }
        if let Some(r) = self.target_ratio {
            m.target_ratio = r;
        }
        if let Some(s) = self.warmup_seed {
            m.warmup_seed = s;
        }
        if let Some(p) = self.parallel {
            m.parallel = p;
        }
        if let Some(t) = self.timing {
            m.timing = t;
        }
        m.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(m)
    }
}

/// Instance `k` of the family is drawn from `derive_seed(entry.seed, k)`.
pub fn generated_suite(entry: &GeneratedEntry) -> Result<Vec<BenchInstance>, ConfigError> {
    let params = GeneratorParams {
        items: entry.items,
        elements: entry.elements,
        objectives: entry.objectives,
        density: entry.density,
        capacity_ratio: entry.capacity_ratio,
    };
    (0..entry.count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(entry.seed, k as u64));
            let instance =
                generate_instance(&mut rng, params).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            Ok(BenchInstance {
                id: format!("{}-{k}", entry.group),
                group: entry.group.clone(),
                instance,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_settings_map_onto_config() {
        let s = RunSettings::from_toml(
            r#"
            instance = "inst.sukp"
            scheme = "ucb"
            operators = ["flip1", "flipk:2"]
            budget = 500
            colony_size = 4
            ucb_c = 2.0
            discount = 0.25
            distance_mode = "literal"
            summary = "/abs/out.txt"
            "#,
            Path::new("cfg/run.toml"),
        )
        .unwrap();
        assert_eq!(s.instance, Some(PathBuf::from("cfg/inst.sukp")));
        assert_eq!(s.summary, Some(PathBuf::from("/abs/out.txt")));
        let c = s.to_config(2).unwrap();
        assert_eq!(c.scheme, SchemeKind::Ucb);
        assert_eq!(c.operators.size(), 2);
        assert_eq!((c.budget, c.colony_size, c.limit), (500, 4, 50));
        assert_eq!(c.scheme_params.ucb_c, 2.0);
        assert_eq!(c.credit.discount, 0.25);
        assert_eq!(c.credit.distance_mode, DistanceMode::Literal);
        assert_eq!(c.weights.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn overlay_prefers_top() {
        let file = RunSettings {
            scheme: Some("pm".into()),
            seed: Some(1),
            ..RunSettings::default()
        };
        let flags = RunSettings {
            seed: Some(9),
            ..RunSettings::default()
        };
        let merged = file.overlay(flags);
        assert_eq!(merged.scheme.as_deref(), Some("pm"));
        assert_eq!(merged.seed, Some(9));
    }

    #[test]
    fn bad_names_and_values() {
        let bad = |text: &str| RunSettings::from_toml(text, Path::new("x.toml")).and_then(|s| s.to_config(1));
        assert!(matches!(bad("scheme = \"bogus\""), Err(ConfigError::UnknownName(m)) if m.contains("random")));
        assert!(matches!(bad("operators = [\"swap\"]"), Err(ConfigError::UnknownName(_))));
        assert!(matches!(bad("colony_size = 1"), Err(ConfigError::Invalid(_))));
        assert!(matches!(bad("nonsense = 1"), Err(ConfigError::Parse { .. })));
        assert!(matches!(bad("weights = [0.5, 0.6]"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn matrix_settings() {
        let s = MatrixSettings::from_toml(
            r#"
            schemes = ["rl", "random", "rl:continue"]
            seeds = 3
            parallel = 2
            records = "out/records.csv"
            [[generated]]
            count = 2
            items = 10
            elements = 8
            density = 0.3
            capacity_ratio = 0.5
            seed = 4
            group = "tiny"
            [run]
            budget = 100
            colony_size = 4
            "#,
            Path::new("/base/matrix.toml"),
        )
        .unwrap();
        assert_eq!(s.records, Some(PathBuf::from("/base/out/records.csv")));
        let m = s.to_matrix(1).unwrap();
        assert_eq!(m.seeds, vec![0, 1, 2]);
        assert_eq!(m.variants.len(), 3);
        assert_eq!(m.base.budget, 100);
        let inst = s.load_instances().unwrap();
        assert_eq!(inst.len(), 2);
        assert_eq!(inst[1].id, "tiny-1");
        assert_eq!(inst[1].instance.item_count(), 10);
        assert_eq!(s.load_instances().unwrap(), inst);
    }

    #[test]
    fn matrix_reports_missing_instance_file() {
        let s = MatrixSettings::from_toml(
            "[[instances]]\npath = \"missing.sukp\"\n",
            Path::new("/nowhere/m.toml"),
        )
        .unwrap();
        match s.load_instances() {
            Err(ConfigError::Io { path, .. }) => assert_eq!(path, PathBuf::from("/nowhere/missing.sukp")),
            other => panic!("unexpected {other:?}"),
        }
        let s = MatrixSettings::from_toml("[run]\ninstance = \"a\"\n", Path::new("m.toml")).unwrap();
        assert!(s.to_matrix(1).is_err());
        let s = MatrixSettings::from_toml("schemes = [\"pm:frozen\"]\n", Path::new("m.toml")).unwrap();
        assert!(matches!(s.to_matrix(1), Err(ConfigError::UnknownName(_))));
    }
}
