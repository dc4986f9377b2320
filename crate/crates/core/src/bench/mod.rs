//! Experiment matrices, rank tables and rank-sum tests.

mod ranks;
mod stats;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::abc::{run_with_model, AbcConfig, AbcError, RunResult, TransferMode};
use crate::credit::CreditModel;
use crate::problem::SukpInstance;
use crate::selection::SchemeKind;

pub use ranks::{rank_table, RankKey, RankTable};
pub use stats::{midranks, wilcoxon_rank_sum, Direction, RankSumTest, EXACT_LIMIT};

pub const DEFAULT_TARGET_RATIO: f64 = 0.99;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("rank-sum test needs at least 3 observations per sample (got {first} and {second})")]
    SampleTooSmall { first: usize, second: usize },
    #[error("rank-sum test received a non-finite value")]
    NonFinite,
    #[error("cell (instance {instance}, seed {seed}) has no record for {}", missing.join(", "))]
    IncompleteCell {
        instance: String,
        seed: u64,
        missing: Vec<String>,
    },
    #[error("cell (instance {instance}, seed {seed}) has two records for {scheme}")]
    DuplicateRecord {
        instance: String,
        seed: u64,
        scheme: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("records csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid matrix: {0}")]
    Config(String),
    #[error(transparent)]
    Abc(#[from] AbcError),
}

/// A named instance taking part in a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchInstance {
    pub id: String,
    /// Size class or family used to aggregate plot data.
    pub group: String,
    pub instance: SukpInstance,
}

/// One column of the comparison: a selection scheme under a transfer mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variant {
    pub scheme: SchemeKind,
    pub mode: TransferMode,
}

impl Variant {
    pub fn fresh(scheme: SchemeKind) -> Self {
        Variant {
            scheme,
            mode: TransferMode::Fresh,
        }
    }

    /// `rl`, `rl:frozen`, `rl:continue`, ...
    pub fn label(&self) -> String {
        variant_label(self.scheme.name(), self.mode)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (scheme, mode) = match s.split_once(':') {
            Some((scheme, mode)) => (scheme, mode.parse::<TransferMode>()?),
            None => (s, TransferMode::Fresh),
        };
        let scheme = scheme.parse::<SchemeKind>().map_err(|e| e.to_string())?;
        if mode != TransferMode::Fresh && scheme != SchemeKind::Rl {
            return Err(format!("transfer mode {mode} requires the rl scheme"));
        }
        Ok(Variant { scheme, mode })
    }
}

fn variant_label(scheme: &str, mode: TransferMode) -> String {
    match mode {
        TransferMode::Fresh => scheme.to_string(),
        other => format!("{scheme}:{other}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: String,
    pub scheme: String,
    pub mode: TransferMode,
    pub seed: u64,
    pub best_fitness: f64,
    pub evals_to_target: Option<u64>,
    pub wall_time_s: f64,
}

impl RunRecord {
    /// Column label used by rank tables.
    pub fn label(&self) -> String {
        variant_label(&self.scheme, self.mode)
    }
}

/// A run that returned an error instead of a result.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub instance: String,
    pub variant: Variant,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixConfig {
    /// Settings shared by every run; scheme, transfer mode and seed are overridden.
    pub base: AbcConfig,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    /// evals_to_target threshold as a share of the best fitness seen on the instance.
    pub target_ratio: f64,
    /// Seed of the fresh rl run whose final model seeds frozen and continue variants.
    pub warmup_seed: u64,
    /// Upper bound on concurrently executing runs.
    pub parallel: usize,
    /// Measure wall time; when off every record reports 0.
    pub timing: bool,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            base: AbcConfig::default(),
            variants: [SchemeKind::Rl, SchemeKind::Pm, SchemeKind::Random]
                .into_iter()
                .map(Variant::fresh)
                .collect(),
            seeds: (0..10).collect(),
            target_ratio: DEFAULT_TARGET_RATIO,
            warmup_seed: u64::MAX,
            parallel: 1,
            timing: false,
        }
    }
}

impl MatrixConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.variants.is_empty() {
            return Err(BenchError::Config("no schemes listed".into()));
        }
        if self.seeds.is_empty() {
            return Err(BenchError::Config("no seeds listed".into()));
        }
        let mut labels: Vec<String> = self.variants.iter().map(Variant::label).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(BenchError::Config("scheme listed twice".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(BenchError::Config("seed listed twice".into()));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(BenchError::Config(format!(
                "target ratio {} outside (0, 1]",
                self.target_ratio
            )));
        }
        if self.parallel == 0 {
            return Err(BenchError::Config("parallel must be at least 1".into()));
        }
        for v in &self.variants {
            self.run_config(v, 0).validate()?;
        }
        Ok(())
    }

    fn run_config(&self, variant: &Variant, seed: u64) -> AbcConfig {
        AbcConfig {
            scheme: variant.scheme,
            transfer: variant.mode,
            seed,
            experience: None,
            target_fitness: None,
            record_trace: false,
            ..self.base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatrixOutcome {
    /// Sorted by (instance, label, seed).
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

impl MatrixOutcome {
    /// Records of the (instance, seed) cells in which every variant succeeded.
    pub fn complete_records(&self) -> Vec<RunRecord> {
        let mut per_cell: BTreeMap<(&str, u64), usize> = BTreeMap::new();
        let mut labels: Vec<String> = self.records.iter().map(RunRecord::label).collect();
        labels.sort();
        labels.dedup();
        for f in &self.failures {
            per_cell.insert((&f.instance, f.seed), usize::MAX);
        }
        for r in &self.records {
            let n = per_cell.entry((&r.instance, r.seed)).or_insert(0);
            *n = n.saturating_add(1);
        }
        self.records
            .iter()
            .filter(|r| per_cell[&(r.instance.as_str(), r.seed)] == labels.len())
            .cloned()
            .collect()
    }
}

enum Job<'a> {
    Single {
        instance: usize,
        variant: Variant,
        seed: u64,
    },
    Sequence {
        instance: usize,
        variant: Variant,
        experience: &'a CreditModel,
    },
}

struct Finished {
    instance: usize,
    variant: Variant,
    seed: u64,
    outcome: Result<(RunResult, f64), String>,
}

/// Runs every variant on every instance for every seed.
///
/// Fresh variants run each seed independently with that seed. Frozen and
/// continue variants run the seeds in listed order as one transfer sequence
/// starting from the final model of a fresh rl warm-up run on the same
/// instance; a continue run therefore depends on the runs before it in the
/// list. Records do not depend on `parallel` or on scheduling.
pub fn run_matrix(
    instances: &[BenchInstance],
    config: &MatrixConfig,
) -> Result<MatrixOutcome, BenchError> {
    config.validate()?;
    let mut ids: Vec<&str> = instances.iter().map(|b| b.id.as_str()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(BenchError::Config("instance id listed twice".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallel)
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    pool.install(|| execute(instances, config))
}

fn execute(instances: &[BenchInstance], config: &MatrixConfig) -> Result<MatrixOutcome, BenchError> {
    let needs_warmup = config.variants.iter().any(|v| v.mode != TransferMode::Fresh);
    let warmups: Vec<Option<Result<CreditModel, String>>> = instances
        .par_iter()
        .map(|b| {
            needs_warmup.then(|| {
                let cfg = config.run_config(&Variant::fresh(SchemeKind::Rl), config.warmup_seed);
                run_with_model(&b.instance, &cfg, None)
                    .map_err(|e| e.to_string())
                    .and_then(|r| r.model.ok_or_else(|| "warm-up run kept no model".to_string()))
            })
        })
        .collect();

    let mut jobs = Vec::new();
    let mut finished = Vec::new();
    for (i, _) in instances.iter().enumerate() {
        for &variant in &config.variants {
            if variant.mode == TransferMode::Fresh {
                jobs.extend(config.seeds.iter().map(|&seed| Job::Single {
                    instance: i,
                    variant,
                    seed,
                }));
                continue;
            }
            match warmups[i].as_ref().expect("warm-up ran") {
                Ok(model) => jobs.push(Job::Sequence {
                    instance: i,
                    variant,
                    experience: model,
                }),
                Err(msg) => finished.extend(config.seeds.iter().map(|&seed| Finished {
                    instance: i,
                    variant,
                    seed,
                    outcome: Err(format!("warm-up failed: {msg}")),
                })),
            }
        }
    }

    let results: Vec<Vec<Finished>> = jobs
        .par_iter()
        .map(|job| run_job(instances, config, job))
        .collect();
    finished.extend(results.into_iter().flatten());

    // Per-instance target from the best fitness any variant reached.
    let mut best = vec![f64::NEG_INFINITY; instances.len()];
    for f in &finished {
        if let Ok((r, _)) = &f.outcome {
            best[f.instance] = best[f.instance].max(r.best_fitness);
        }
    }
    let mut outcome = MatrixOutcome::default();
    for f in finished {
        let id = instances[f.instance].id.clone();
        match f.outcome {
            Ok((result, wall)) => {
                let target = best[f.instance] * config.target_ratio;
                outcome.records.push(RunRecord {
                    instance: id,
                    scheme: f.variant.scheme.name().to_string(),
                    mode: f.variant.mode,
                    seed: f.seed,
                    best_fitness: result.best_fitness,
                    evals_to_target: result.evals_to(target),
                    wall_time_s: wall,
                });
            }
            Err(message) => outcome.failures.push(RunFailure {
                instance: id,
                variant: f.variant,
                seed: f.seed,
                message,
            }),
        }
    }
    outcome
        .records
        .sort_by(|a, b| (&a.instance, a.label(), a.seed).cmp(&(&b.instance, b.label(), b.seed)));
    outcome.failures.sort_by(|a, b| {
        (&a.instance, a.variant, a.seed).cmp(&(&b.instance, b.variant, b.seed))
    });
    Ok(outcome)
}

fn run_job(instances: &[BenchInstance], config: &MatrixConfig, job: &Job<'_>) -> Vec<Finished> {
    match *job {
        Job::Single {
            instance,
            variant,
            seed,
        } => {
            let cfg = config.run_config(&variant, seed);
            let start = Instant::now();
            let outcome = run_with_model(&instances[instance].instance, &cfg, None)
                .map(|r| (r, elapsed(config.timing, start)))
                .map_err(|e| e.to_string());
            vec![Finished {
                instance,
                variant,
                seed,
                outcome,
            }]
        }
        Job::Sequence {
            instance,
            variant,
            experience,
        } => {
            let mut out = Vec::with_capacity(config.seeds.len());
            let mut carried = experience.clone();
            let mut broken: Option<String> = None;
            for &seed in &config.seeds {
                if let Some(msg) = &broken {
                    out.push(Finished {
                        instance,
                        variant,
                        seed,
                        outcome: Err(format!("earlier repetition failed: {msg}")),
                    });
                    continue;
                }
                let cfg = config.run_config(&variant, seed);
                let start = Instant::now();
                let mut start_model = carried.clone();
                start_model.set_frozen(variant.mode == TransferMode::Frozen);
                match run_with_model(&instances[instance].instance, &cfg, Some(start_model)) {
                    Ok(result) => {
                        let wall = elapsed(config.timing, start);
                        if variant.mode == TransferMode::Continue {
                            if let Some(m) = &result.model {
                                carried = m.clone();
                            }
                        }
                        out.push(Finished {
                            instance,
                            variant,
                            seed,
                            outcome: Ok((result, wall)),
                        });
                    }
                    Err(e) => {
                        broken = Some(e.to_string());
                        out.push(Finished {
                            instance,
                            variant,
                            seed,
                            outcome: Err(e.to_string()),
                        });
                    }
                }
            }
            out
        }
    }
}

fn elapsed(timing: bool, start: Instant) -> f64 {
    if timing {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

const RECORD_HEADER: [&str; 7] = [
    "instance",
    "scheme",
    "mode",
    "seed",
    "best_fitness",
    "evals_to_target",
    "wall_time_s",
];

/// Writes the records CSV; an empty slice yields just the header.
pub fn write_records<W: Write>(out: W, records: &[RunRecord]) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<RunRecord>, BenchError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != RECORD_HEADER {
        return Err(BenchError::Config(format!(
            "records header `{}` (expected `{}`)",
            header.join(","),
            RECORD_HEADER.join(",")
        )));
    }
    Ok(rdr.deserialize().collect::<Result<Vec<RunRecord>, _>>()?)
}

/// `instance,scheme,mean_rank`, one row per (instance, scheme).
pub fn write_ranks<W: Write>(out: W, table: &RankTable) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["instance", "scheme", "mean_rank"])?;
    for instance in &table.instances {
        for scheme in &table.schemes {
            if let Some(rank) = table.instance_rank(instance, scheme) {
                w.write_record([instance.as_str(), scheme.as_str(), &format!("{rank:?}")])?;
            }
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Mean rank per (group, scheme) over every cell of the group's instances.
/// Instances without an entry in `groups` form a group of their own.
pub fn group_ranks(
    table: &RankTable,
    groups: &BTreeMap<String, String>,
) -> Vec<(String, String, f64)> {
    let mut order: Vec<String> = Vec::new();
    let mut sums: BTreeMap<(String, usize), (f64, usize)> = BTreeMap::new();
    for ((instance, _), ranks) in &table.cells {
        let group = groups.get(instance).unwrap_or(instance).clone();
        if !order.contains(&group) {
            order.push(group.clone());
        }
        for (k, &rank) in ranks.iter().enumerate() {
            let e = sums.entry((group.clone(), k)).or_insert((0.0, 0));
            e.0 += rank;
            e.1 += 1;
        }
    }
    order.sort();
    let mut rows = Vec::new();
    for group in order {
        for (k, scheme) in table.schemes.iter().enumerate() {
            if let Some(&(sum, n)) = sums.get(&(group.clone(), k)) {
                rows.push((group.clone(), scheme.clone(), sum / n as f64));
            }
        }
    }
    rows
}

/// `group,scheme,mean_rank` rows for bar charts.
pub fn write_plot_data<W: Write>(
    out: W,
    table: &RankTable,
    groups: &BTreeMap<String, String>,
) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "scheme", "mean_rank"])?;
    for (group, scheme, rank) in group_ranks(table, groups) {
        w.write_record([group.as_str(), scheme.as_str(), &format!("{rank:?}")])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultPaths {
    pub records: PathBuf,
    pub ranks: PathBuf,
    pub plot: PathBuf,
}

fn create(path: &Path) -> Result<File, BenchError> {
    File::create(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the records, ranks and plot-data files.
pub fn emit_results(
    records: &[RunRecord],
    table: &RankTable,
    groups: &BTreeMap<String, String>,
    paths: &ResultPaths,
) -> Result<(), BenchError> {
    write_records(io::BufWriter::new(create(&paths.records)?), records)?;
    write_ranks(io::BufWriter::new(create(&paths.ranks)?), table)?;
    write_plot_data(io::BufWriter::new(create(&paths.plot)?), table, groups)?;
    Ok(())
}

/// Per-record value under `key`, oriented so that larger is better for
/// fitness and smaller is better for evaluations. Runs that never reached
/// the target count as `f64::MAX` evaluations.
pub fn key_value(record: &RunRecord, key: RankKey) -> f64 {
    match key {
        RankKey::Fitness => record.best_fitness,
        RankKey::EvalsToTarget => record.evals_to_target.map_or(f64::MAX, |e| e as f64),
    }
}

/// Values of one variant label across all cells, in record order.
pub fn sample(records: &[RunRecord], label: &str, key: RankKey) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.label() == label)
        .map(|r| key_value(r, key))
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        v[n / 2 - 1] / 2.0 + v[n / 2] / 2.0
    })
}

/// Whether an expected best-to-worst ordering of variants shows up in the data.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingCheck {
    pub key: RankKey,
    /// Expected order, best first.
    pub labels: Vec<String>,
    pub grand_ranks: Vec<f64>,
    pub medians: Vec<f64>,
    /// Grand mean ranks strictly increase along `labels`.
    pub by_rank: bool,
    /// Medians never get better along `labels`.
    pub by_median: bool,
    /// Rank-sum test of the first label against the last.
    pub test: Option<RankSumTest>,
    /// The test favours the first label at the 0.05 level.
    pub significant: bool,
}

pub fn ordering_check(
    records: &[RunRecord],
    table: &RankTable,
    key: RankKey,
    labels: &[&str],
) -> Option<OrderingCheck> {
    if labels.len() < 2 || labels.iter().any(|l| table.grand_rank(l).is_none()) {
        return None;
    }
    let grand_ranks: Vec<f64> = labels.iter().map(|l| table.grand_rank(l).unwrap()).collect();
    let medians: Vec<f64> = labels
        .iter()
        .map(|l| median(&sample(records, l, key)).unwrap())
        .collect();
    let by_rank = grand_ranks.windows(2).all(|w| w[0] < w[1]);
    let by_median = medians.windows(2).all(|w| match key {
        RankKey::Fitness => w[0] >= w[1],
        RankKey::EvalsToTarget => w[0] <= w[1],
    });
    let first = sample(records, labels[0], key);
    let last = sample(records, labels[labels.len() - 1], key);
    let test = wilcoxon_rank_sum(&first, &last).ok();
    let wanted = match key {
        RankKey::Fitness => Direction::FirstGreater,
        RankKey::EvalsToTarget => Direction::SecondGreater,
    };
    let significant = test.is_some_and(|t| t.p_value < 0.05 && t.direction == wanted);
    Some(OrderingCheck {
        key,
        labels: labels.iter().map(|s| s.to_string()).collect(),
        grand_ranks,
        medians,
        by_rank,
        by_median,
        test,
        significant,
    })
}

/// Orderings the harness reports on whenever all their variants are present.
pub const EXPECTED_ORDERINGS: [&[&str]; 2] = [&["rl", "pm", "random"], &["rl:continue", "rl:frozen", "rl"]];

/// Plain-text summary: failures, grand ranks and the expected orderings,
/// with violations spelled out.
pub fn report(outcome: &MatrixOutcome, key: RankKey) -> Result<String, BenchError> {
    let mut s = String::new();
    let records = outcome.complete_records();
    let _ = writeln!(
        s,
        "{} records, {} failed runs, ranking by {}",
        outcome.records.len(),
        outcome.failures.len(),
        match key {
            RankKey::Fitness => "best fitness",
            RankKey::EvalsToTarget => "evaluations to target",
        }
    );
    for f in &outcome.failures {
        let _ = writeln!(
            s,
            "failed: instance {} scheme {} seed {}: {}",
            f.instance, f.variant, f.seed, f.message
        );
    }
    let dropped = outcome.records.len() - records.len();
    if dropped > 0 {
        let _ = writeln!(s, "{dropped} records excluded from ranking (incomplete cells)");
    }
    let table = rank_table(&records, key)?;
    for scheme in &table.schemes {
        let _ = writeln!(
            s,
            "{scheme:<12} mean rank {:.4}  median {}",
            table.grand_rank(scheme).unwrap_or(f64::NAN),
            median(&sample(&records, scheme, key))
                .map_or("-".to_string(), |m| if m == f64::MAX { "never".into() } else { format!("{m}") })
        );
    }
    for labels in EXPECTED_ORDERINGS {
        let Some(c) = ordering_check(&records, &table, key, labels) else {
            continue;
        };
        let order = c.labels.join(" < ");
        let verdict = |ok: bool| if ok { "holds" } else { "VIOLATED" };
        let _ = writeln!(s, "ordering {order} by mean rank: {}", verdict(c.by_rank));
        let _ = writeln!(s, "ordering {order} by median: {}", verdict(c.by_median));
        match c.test {
            Some(t) => {
                let _ = writeln!(
                    s,
                    "rank-sum {} vs {}: p = {:.4e} ({:?}){}",
                    c.labels[0],
                    c.labels[c.labels.len() - 1],
                    t.p_value,
                    t.direction,
                    if c.significant { "" } else { ", NOT significant in the expected direction" }
                );
            }
            None => {
                let _ = writeln!(s, "rank-sum test skipped: fewer than 3 runs per scheme");
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{generate_instance, GeneratorParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bench_instance(id: &str, seed: u64) -> BenchInstance {
        BenchInstance {
            id: id.into(),
            group: "small".into(),
            instance: generate_instance(
                &mut ChaCha8Rng::seed_from_u64(seed),
                GeneratorParams {
                    items: 15,
                    elements: 15,
                    objectives: 1,
                    density: 0.3,
                    capacity_ratio: 0.5,
                },
            )
            .unwrap(),
        }
    }

    fn matrix(variants: &[&str], seeds: usize, parallel: usize) -> MatrixConfig {
        MatrixConfig {
            base: AbcConfig {
                colony_size: 6,
                budget: 300,
                limit: 10,
                ..AbcConfig::default()
            },
            variants: variants.iter().map(|v| v.parse().unwrap()).collect(),
            seeds: (0..seeds as u64).collect(),
            parallel,
            ..MatrixConfig::default()
        }
    }

    #[test]
    fn cardinality_and_determinism() {
        let instances = [bench_instance("a", 1), bench_instance("b", 2)];
        let cfg = matrix(&["rl", "pm", "random"], 5, 1);
        let first = run_matrix(&instances, &cfg).unwrap();
        assert_eq!(first.records.len(), 30);
        assert!(first.failures.is_empty());
        let again = run_matrix(&instances, &cfg).unwrap();
        assert_eq!(first, again);
        let parallel = run_matrix(&instances, &MatrixConfig { parallel: 3, ..cfg }).unwrap();
        assert_eq!(first, parallel);
        assert!(first.records.iter().all(|r| r.wall_time_s == 0.0));
    }

    #[test]
    fn records_replay_from_their_seed() {
        let instances = [bench_instance("a", 1)];
        let cfg = matrix(&["ucb"], 3, 1);
        let out = run_matrix(&instances, &cfg).unwrap();
        for r in &out.records {
            let single = crate::abc::run(
                &instances[0].instance,
                &AbcConfig {
                    scheme: SchemeKind::Ucb,
                    seed: r.seed,
                    ..cfg.base.clone()
                },
            )
            .unwrap();
            assert_eq!(single.best_fitness, r.best_fitness);
        }
    }

    #[test]
    fn single_scheme_ranks_all_one() {
        let out = run_matrix(&[bench_instance("a", 3)], &matrix(&["ap"], 4, 1)).unwrap();
        let t = rank_table(&out.records, RankKey::Fitness).unwrap();
        assert_eq!(t.grand_rank("ap"), Some(1.0));
    }

    #[test]
    fn transfer_variants_and_targets() {
        let instances = [bench_instance("a", 4)];
        let out = run_matrix(&instances, &matrix(&["rl", "rl:frozen", "rl:continue"], 4, 2)).unwrap();
        assert_eq!(out.records.len(), 12);
        let best = out.records.iter().map(|r| r.best_fitness).fold(f64::MIN, f64::max);
        for r in &out.records {
            // The best run always reaches 99% of the best fitness.
            if r.best_fitness == best {
                assert!(r.evals_to_target.is_some());
            }
            if r.best_fitness < best * DEFAULT_TARGET_RATIO {
                assert_eq!(r.evals_to_target, None);
            }
        }
        let labels: Vec<String> = out.records.iter().map(RunRecord::label).collect();
        assert!(labels.contains(&"rl:continue".to_string()));
    }

    #[test]
    fn invalid_matrices_are_rejected() {
        let inst = [bench_instance("a", 1)];
        assert!(run_matrix(&inst, &matrix(&[], 2, 1)).is_err());
        assert!(run_matrix(&inst, &matrix(&["rl", "rl"], 2, 1)).is_err());
        assert!(run_matrix(&inst, &matrix(&["rl"], 0, 1)).is_err());
        assert!(run_matrix(&inst, &matrix(&["rl"], 2, 0)).is_err());
        let twice = [bench_instance("a", 1), bench_instance("a", 2)];
        assert!(run_matrix(&twice, &matrix(&["rl"], 2, 1)).is_err());
        assert!("pm:frozen".parse::<Variant>().is_err());
        assert!("rl:sideways".parse::<Variant>().is_err());
    }

    #[test]
    fn failures_are_recorded_not_dropped() {
        let mut inst = bench_instance("a", 1);
        inst.instance = inst.instance.with_profits(vec![
            vec![1; 15].into_iter().map(f64::from).collect(),
            vec![2.0; 15],
        ])
        .unwrap();
        let good = bench_instance("b", 2);
        // One weight against a 2-objective instance fails every run on it.
        let out = run_matrix(&[inst, good], &matrix(&["rl", "random"], 3, 1)).unwrap();
        assert_eq!(out.records.len(), 6);
        assert_eq!(out.failures.len(), 6);
        assert!(out.failures.iter().all(|f| f.instance == "a"));
        let rep = report(&out, RankKey::Fitness).unwrap();
        assert!(rep.contains("6 failed runs"));
    }

    #[test]
    fn empty_records_write_header_only() {
        let mut buf = Vec::new();
        write_records(&mut buf, &[]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "instance,scheme,mode,seed,best_fitness,evals_to_target,wall_time_s\n"
        );
    }

    #[test]
    fn csv_roundtrip_preserves_rank_table() {
        let instances = [bench_instance("a", 5), bench_instance("b", 6)];
        let out = run_matrix(&instances, &matrix(&["rl", "pm", "random", "rl:continue"], 3, 1)).unwrap();
        let mut buf = Vec::new();
        write_records(&mut buf, &out.records).unwrap();
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, out.records);
        for key in [RankKey::Fitness, RankKey::EvalsToTarget] {
            assert_eq!(
                rank_table(&back, key).unwrap(),
                rank_table(&out.records, key).unwrap()
            );
        }
    }

    #[test]
    fn floats_keep_full_precision() {
        let r = RunRecord {
            instance: "x".into(),
            scheme: "rl".into(),
            mode: TransferMode::Continue,
            seed: u64::MAX,
            best_fitness: 0.1 + 0.2,
            evals_to_target: None,
            wall_time_s: 1.0 / 3.0,
        };
        let mut buf = Vec::new();
        write_records(&mut buf, std::slice::from_ref(&r)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("0.30000000000000004"), "{text}");
        assert!(text.contains(",continue,18446744073709551615,"), "{text}");
        assert_eq!(read_records(buf.as_slice()).unwrap(), vec![r]);
    }

    #[test]
    fn plot_rows_per_group_and_scheme() {
        let mut instances = vec![bench_instance("a", 1), bench_instance("b", 2), bench_instance("c", 3)];
        instances[2].group = "large".into();
        let out = run_matrix(&instances, &matrix(&["rl", "pm", "random"], 3, 1)).unwrap();
        let table = rank_table(&out.records, RankKey::Fitness).unwrap();
        let groups: BTreeMap<String, String> = instances
            .iter()
            .map(|b| (b.id.clone(), b.group.clone()))
            .collect();
        let rows = group_ranks(&table, &groups);
        assert_eq!(rows.len(), 2 * 3);
        let mut buf = Vec::new();
        write_plot_data(&mut buf, &table, &groups).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
        let mut buf = Vec::new();
        write_ranks(&mut buf, &table).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 3 * 3);
    }

    #[test]
    fn emit_reports_unwritable_path() {
        let table = rank_table(&[], RankKey::Fitness).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("no/such/dir/records.csv");
        let err = emit_results(
            &[],
            &table,
            &BTreeMap::new(),
            &ResultPaths {
                records: missing.clone(),
                ranks: dir.path().join("r.csv"),
                plot: dir.path().join("p.csv"),
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("records.csv"));
    }

    #[test]
    fn report_flags_violated_ordering() {
        let rec = |scheme: &str, seed: u64, f: f64| RunRecord {
            instance: "i".into(),
            scheme: scheme.into(),
            mode: TransferMode::Fresh,
            seed,
            best_fitness: f,
            evals_to_target: None,
            wall_time_s: 0.0,
        };
        let mut records = Vec::new();
        for seed in 0..5 {
            records.push(rec("rl", seed, 1.0));
            records.push(rec("pm", seed, 2.0));
            records.push(rec("random", seed, 3.0));
        }
        let out = MatrixOutcome {
            records,
            failures: Vec::new(),
        };
        let rep = report(&out, RankKey::Fitness).unwrap();
        assert!(rep.contains("ordering rl < pm < random by mean rank: VIOLATED"), "{rep}");
        assert!(rep.contains("NOT significant"), "{rep}");
    }
}
