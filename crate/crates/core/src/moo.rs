//! Pareto dominance and a bounded archive of non-dominated solutions.

use std::io::{self, Write};

use thiserror::Error;

use crate::problem::BitSolution;

pub const DEFAULT_ARCHIVE_CAPACITY: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("objective vectors differ in length ({0} vs {1})")]
pub struct LengthMismatch(pub usize, pub usize);

/// Maximization dominance: `a >= b` everywhere and `a > b` somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool, LengthMismatch> {
    if a.len() != b.len() {
        return Err(LengthMismatch(a.len(), b.len()));
    }
    Ok(dominates_unchecked(a, b))
}

fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry {
    pub solution: BitSolution,
    pub objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoArchive {
    entries: Vec<ArchiveEntry>,
    capacity: Option<usize>,
}

impl Default for ParetoArchive {
    fn default() -> Self {
        ParetoArchive::new(Some(DEFAULT_ARCHIVE_CAPACITY))
    }
}

impl ParetoArchive {
    pub fn new(capacity: Option<usize>) -> Self {
        ParetoArchive {
            entries: Vec::new(),
            capacity,
        }
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts a feasible candidate; returns whether it was accepted.
    ///
    /// Candidates dominated by or equal (in objective space) to an entry are
    /// rejected. Accepted candidates evict every entry they dominate, and if
    /// the archive then exceeds its capacity the most crowded entry goes.
    pub fn insert(&mut self, solution: BitSolution, objectives: Vec<f64>) -> bool {
        if self
            .entries
            .iter()
            .any(|e| e.objectives == objectives || dominates_unchecked(&e.objectives, &objectives))
        {
            return false;
        }
        self.entries
            .retain(|e| !dominates_unchecked(&objectives, &e.objectives));
        self.entries.push(ArchiveEntry {
            solution,
            objectives,
        });
        if let Some(cap) = self.capacity {
            while self.entries.len() > cap.max(1) {
                let victim = self.most_crowded();
                self.entries.remove(victim);
            }
        }
        true
    }

    /// Entry with the smallest nearest-neighbour distance in objective space
    /// normalized by each objective's range. Ties go to the oldest entry.
    fn most_crowded(&self) -> usize {
        let dims = self.entries[0].objectives.len();
        let ranges: Vec<(f64, f64)> = (0..dims)
            .map(|j| {
                self.entries.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
                    (lo.min(e.objectives[j]), hi.max(e.objectives[j]))
                })
            })
            .collect();
        let norm = |v: &[f64], j: usize| {
            let (lo, hi) = ranges[j];
            if hi > lo {
                (v[j] - lo) / (hi - lo)
            } else {
                0.0
            }
        };
        let mut victim = 0;
        let mut smallest = f64::INFINITY;
        for (a, ea) in self.entries.iter().enumerate() {
            let nearest = self
                .entries
                .iter()
                .enumerate()
                .filter(|&(b, _)| b != a)
                .map(|(_, eb)| {
                    (0..dims)
                        .map(|j| (norm(&ea.objectives, j) - norm(&eb.objectives, j)).powi(2))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            if nearest < smallest {
                smallest = nearest;
                victim = a;
            }
        }
        victim
    }

    /// CSV with a `solution` bit-string column followed by `f1..fO`.
    pub fn write_csv<W: Write>(&self, mut out: W, objectives: usize) -> io::Result<()> {
        let mut header = vec!["solution".to_string()];
        header.extend((1..=objectives).map(|j| format!("f{j}")));
        writeln!(out, "{}", header.join(","))?;
        for e in &self.entries {
            write!(out, "{}", e.solution)?;
            for v in &e.objectives {
                write!(out, ",{v:?}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}
