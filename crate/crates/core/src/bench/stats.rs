//! Wilcoxon rank-sum (Mann-Whitney U) test.

use statrs::distribution::{ContinuousCDF, Normal};

use super::BenchError;

/// Largest combined sample size for which the exact null distribution is enumerated.
pub const EXACT_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// The first sample tends to be larger.
    FirstGreater,
    /// The second sample tends to be larger.
    SecondGreater,
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSumTest {
    /// Mann-Whitney U of the first sample.
    pub u_first: f64,
    pub u_second: f64,
    /// Two-sided p value.
    pub p_value: f64,
    pub direction: Direction,
    /// Whether `p_value` comes from full enumeration.
    pub exact: bool,
}

/// Midranks (1-based, ties averaged) of `values`.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Two-sided Wilcoxon rank-sum test of `a` against `b`.
///
/// With at most [`EXACT_LIMIT`] observations in total the p value is the
/// share of all `C(n1+n2, n1)` rank assignments whose rank sum lies at least
/// as far from its mean as the observed one (ties keep their midranks).
/// Larger samples use the normal approximation with tie and continuity
/// corrections.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<RankSumTest, BenchError> {
    let (n1, n2) = (a.len(), b.len());
    if n1 < 3 || n2 < 3 {
        return Err(BenchError::SampleTooSmall { first: n1, second: n2 });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(BenchError::NonFinite);
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum: f64 = ranks[..n1].iter().sum();
    let (f1, f2) = (n1 as f64, n2 as f64);
    let u_first = rank_sum - f1 * (f1 + 1.0) / 2.0;
    let u_second = f1 * f2 - u_first;
    let mean_u = f1 * f2 / 2.0;
    let direction = if u_first > u_second {
        Direction::FirstGreater
    } else if u_first < u_second {
        Direction::SecondGreater
    } else {
        Direction::Equal
    };

    let n = n1 + n2;
    let (p_value, exact) = if n <= EXACT_LIMIT {
        let mean_sum = f1 * (n as f64 + 1.0) / 2.0;
        let observed = (rank_sum - mean_sum).abs();
        let mut extreme = 0u64;
        let mut total = 0u64;
        for mask in 0u32..(1u32 << n) {
            if mask.count_ones() as usize != n1 {
                continue;
            }
            total += 1;
            let s: f64 = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| ranks[k]).sum();
            if (s - mean_sum).abs() >= observed - 1e-9 {
                extreme += 1;
            }
        }
        (extreme as f64 / total as f64, true)
    } else {
        let nf = n as f64;
        let tie_term: f64 = tie_groups(&pooled)
            .into_iter()
            .map(|t| {
                let t = t as f64;
                t * t * t - t
            })
            .sum();
        let variance = f1 * f2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
        if variance <= 0.0 {
            (1.0, false)
        } else {
            let z = ((u_first - mean_u).abs() - 0.5).max(0.0) / variance.sqrt();
            let normal = Normal::standard();
            ((2.0 * (1.0 - normal.cdf(z))).min(1.0), false)
        }
    };
    Ok(RankSumTest {
        u_first,
        u_second,
        p_value,
        direction,
        exact,
    })
}

fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        if j - i > 1 {
            groups.push(j - i);
        }
        i = j;
    }
    groups
}
