//! Average-rank tables over (instance, seed) cells.

use std::collections::BTreeMap;

use super::stats::midranks;
use super::{BenchError, RunRecord};

/// What a rank table orders by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankKey {
    /// Higher best fitness ranks better.
    #[default]
    Fitness,
    /// Fewer evaluations to the target rank better; never reaching it ranks last.
    EvalsToTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    /// Scheme labels in first-appearance order.
    pub schemes: Vec<String>,
    /// Instance ids in first-appearance order.
    pub instances: Vec<String>,
    /// Mean rank of each (instance, scheme) across seeds.
    pub instance_ranks: BTreeMap<(String, String), f64>,
    /// Mean rank of each scheme across all cells.
    pub grand: BTreeMap<String, f64>,
    /// Ranks per (instance, seed) cell, in `schemes` order.
    pub cells: BTreeMap<(String, u64), Vec<f64>>,
}

impl RankTable {
    pub fn instance_rank(&self, instance: &str, scheme: &str) -> Option<f64> {
        self.instance_ranks
            .get(&(instance.to_string(), scheme.to_string()))
            .copied()
    }

    pub fn grand_rank(&self, scheme: &str) -> Option<f64> {
        self.grand.get(scheme).copied()
    }
}

fn push_unique(list: &mut Vec<String>, s: &str) {
    if !list.iter().any(|x| x == s) {
        list.push(s.to_string());
    }
}

/// Ranks schemes within every (instance, seed) cell, 1 = best, ties averaged.
pub fn rank_table(records: &[RunRecord], key: RankKey) -> Result<RankTable, BenchError> {
    let mut schemes = Vec::new();
    let mut instances = Vec::new();
    for r in records {
        push_unique(&mut schemes, &r.label());
        push_unique(&mut instances, &r.instance);
    }
    let mut grid: BTreeMap<(String, u64), Vec<Option<f64>>> = BTreeMap::new();
    for r in records {
        let label = r.label();
        let col = schemes.iter().position(|s| *s == label).expect("collected above");
        let row = grid
            .entry((r.instance.clone(), r.seed))
            .or_insert_with(|| vec![None; schemes.len()]);
        if row[col].is_some() {
            return Err(BenchError::DuplicateRecord {
                instance: r.instance.clone(),
                seed: r.seed,
                scheme: label,
            });
        }
        // Negate so that a smaller value always means a better outcome.
        row[col] = Some(match key {
            RankKey::Fitness => -r.best_fitness,
            RankKey::EvalsToTarget => r.evals_to_target.map_or(f64::INFINITY, |e| e as f64),
        });
    }

    let mut cells = BTreeMap::new();
    let mut per_instance: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    let mut grand_sum: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for ((instance, seed), row) in grid {
        let missing: Vec<String> = row
            .iter()
            .zip(&schemes)
            .filter(|(v, _)| v.is_none())
            .map(|(_, s)| s.clone())
            .collect();
        if !missing.is_empty() {
            return Err(BenchError::IncompleteCell {
                instance,
                seed,
                missing,
            });
        }
        let values: Vec<f64> = row.into_iter().map(|v| v.expect("checked")).collect();
        let ranks = midranks(&values);
        for (scheme, &rank) in schemes.iter().zip(&ranks) {
            let e = per_instance
                .entry((instance.clone(), scheme.clone()))
                .or_insert((0.0, 0));
            e.0 += rank;
            e.1 += 1;
            let g = grand_sum.entry(scheme.clone()).or_insert((0.0, 0));
            g.0 += rank;
            g.1 += 1;
        }
        cells.insert((instance, seed), ranks);
    }
    Ok(RankTable {
        schemes,
        instances,
        instance_ranks: per_instance
            .into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect(),
        grand: grand_sum
            .into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect(),
        cells,
    })
}
