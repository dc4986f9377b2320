//! Set-union knapsack problem: instances, evaluation, repair and an
//! exhaustive oracle.
//!
//! Every item covers a subset of weighted elements. A selection is feasible
//! when the summed weight of the *union* of the covered elements stays within
//! capacity. Each objective owns one profit row over the items and all
//! objectives share the capacity constraint. Objectives are maximized.

use std::fmt;

use rand::Rng;
use thiserror::Error;

/// Largest item count accepted by [`SukpInstance::brute_force_optimum`].
pub const MAX_ORACLE_ITEMS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: negative value {value}")]
    NegativeValue { line: usize, value: f64 },
    #[error("line {line}: invalid number `{token}`")]
    InvalidNumber { line: usize, token: String },
    #[error("line {line}: membership entries must be 0 or 1, found `{token}`")]
    InvalidMembership { line: usize, token: String },
    #[error("line {line}: item {item} covers no element")]
    EmptyItem { line: usize, item: usize },
    #[error("line {line}: unexpected end of input, expected {expected}")]
    UnexpectedEof { line: usize, expected: String },
    #[error("line {line}: unexpected trailing content")]
    TrailingContent { line: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("solution has length {found}, instance has {expected} items")]
    LengthMismatch { expected: usize, found: usize },
    #[error("weight vector has length {found}, instance has {expected} objectives")]
    WeightMismatch { expected: usize, found: usize },
    #[error("instance has {items} items; exhaustive search is limited to {MAX_ORACLE_ITEMS}")]
    TooManyItems { items: usize },
    #[error("invalid instance: {0}")]
    Invalid(String),
}

/// Binary decision vector, one bit per item.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitSolution(Vec<bool>);

impl BitSolution {
    pub fn zeros(len: usize) -> Self {
        BitSolution(vec![false; len])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        BitSolution(bits)
    }

    /// Parses a string of `0`/`1` characters.
    pub fn from_str_bits(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(BitSolution)
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        BitSolution((0..len).map(|_| rng.random_bool(0.5)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.0[i] = value;
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = !self.0[i];
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn hamming(&self, other: &BitSolution) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BitSolution) -> bool {
        self.0.iter().zip(&other.0).all(|(&a, &b)| !a || b)
    }
}

impl fmt::Display for BitSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Objective values, union weight and feasibility of one solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objectives: Vec<f64>,
    pub union_weight: f64,
    pub feasible: bool,
}

impl Evaluation {
    /// Weighted sum of the raw objective values.
    pub fn weighted(&self, weights: &[f64]) -> f64 {
        self.objectives
            .iter()
            .zip(weights)
            .fold(0.0, |acc, (f, w)| acc + f * w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SukpInstance {
    item_count: usize,
    element_count: usize,
    /// `profits[j][i]`: profit of item `i` under objective `j`.
    profits: Vec<Vec<f64>>,
    weights: Vec<f64>,
    capacity: f64,
    /// Element indices covered by each item, ascending.
    item_elements: Vec<Vec<usize>>,
    /// Same membership packed into 64-bit words.
    item_words: Vec<Vec<u64>>,
}

fn word_count(n: usize) -> usize {
    n.div_ceil(64)
}

impl SukpInstance {
    /// Builds an instance from dense data, checking every invariant.
    pub fn new(
        profits: Vec<Vec<f64>>,
        weights: Vec<f64>,
        membership: Vec<Vec<bool>>,
        capacity: f64,
    ) -> Result<Self, ProblemError> {
        let item_count = membership.len();
        let element_count = weights.len();
        if item_count == 0 || element_count == 0 || profits.is_empty() {
            return Err(ProblemError::Invalid(
                "items, elements and objectives must all be non-empty".into(),
            ));
        }
        if !(capacity.is_finite() && capacity >= 0.0) {
            return Err(ProblemError::Invalid(format!("capacity {capacity}")));
        }
        for (j, row) in profits.iter().enumerate() {
            if row.len() != item_count {
                return Err(ProblemError::Invalid(format!(
                    "profit row {j} has {} entries, expected {item_count}",
                    row.len()
                )));
            }
            if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                return Err(ProblemError::Invalid(format!("profit {p}")));
            }
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(ProblemError::Invalid(format!("weight {w}")));
        }
        let words = word_count(element_count);
        let mut item_elements = Vec::with_capacity(item_count);
        let mut item_words = Vec::with_capacity(item_count);
        for (i, row) in membership.iter().enumerate() {
            if row.len() != element_count {
                return Err(ProblemError::Invalid(format!(
                    "membership row {i} has {} entries, expected {element_count}",
                    row.len()
                )));
            }
            let elems: Vec<usize> = (0..element_count).filter(|&e| row[e]).collect();
            if elems.is_empty() {
                return Err(ProblemError::Invalid(format!("item {i} covers no element")));
            }
            let mut packed = vec![0u64; words];
            for &e in &elems {
                packed[e / 64] |= 1 << (e % 64);
            }
            item_elements.push(elems);
            item_words.push(packed);
        }
        Ok(SukpInstance {
            item_count,
            element_count,
            profits,
            weights,
            capacity,
            item_elements,
            item_words,
        })
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    pub fn element_count(&self) -> usize {
        self.element_count
    }

    pub fn objective_count(&self) -> usize {
        self.profits.len()
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn profits(&self) -> &[Vec<f64>] {
        &self.profits
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn item_elements(&self, item: usize) -> &[usize] {
        &self.item_elements[item]
    }

    /// Sum of all item profits per objective; an upper bound on each objective.
    pub fn profit_totals(&self) -> Vec<f64> {
        self.profits.iter().map(|row| row.iter().sum()).collect()
    }

    /// Same instance with a different capacity.
    pub fn with_capacity(&self, capacity: f64) -> Result<Self, ProblemError> {
        if !(capacity.is_finite() && capacity >= 0.0) {
            return Err(ProblemError::Invalid(format!("capacity {capacity}")));
        }
        let mut out = self.clone();
        out.capacity = capacity;
        Ok(out)
    }

    /// Same items and constraint, different objective profit rows.
    pub fn with_profits(&self, profits: Vec<Vec<f64>>) -> Result<Self, ProblemError> {
        SukpInstance::new(profits, self.weights.clone(), self.membership(), self.capacity)
    }

    pub fn membership(&self) -> Vec<Vec<bool>> {
        self.item_elements
            .iter()
            .map(|elems| {
                let mut row = vec![false; self.element_count];
                for &e in elems {
                    row[e] = true;
                }
                row
            })
            .collect()
    }

    fn check_len(&self, x: &BitSolution) -> Result<(), ProblemError> {
        if x.len() != self.item_count {
            return Err(ProblemError::LengthMismatch {
                expected: self.item_count,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn union_weight_of_words(&self, words: &[u64]) -> f64 {
        let mut total = 0.0;
        for (wi, &word) in words.iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                total += self.weights[wi * 64 + b];
                bits &= bits - 1;
            }
        }
        total
    }

    pub fn evaluate(&self, x: &BitSolution) -> Result<Evaluation, ProblemError> {
        self.check_len(x)?;
        let mut union = vec![0u64; word_count(self.element_count)];
        for (i, words) in self.item_words.iter().enumerate() {
            if x.get(i) {
                for (u, w) in union.iter_mut().zip(words) {
                    *u |= w;
                }
            }
        }
        let union_weight = self.union_weight_of_words(&union);
        let objectives = self
            .profits
            .iter()
            .map(|row| {
                row.iter()
                    .zip(x.bits())
                    .filter(|(_, &b)| b)
                    .fold(0.0, |acc, (p, _)| acc + p)
            })
            .collect();
        Ok(Evaluation {
            objectives,
            union_weight,
            feasible: union_weight <= self.capacity,
        })
    }

    /// Repair with equal weights on every objective.
    pub fn repair(&self, x: &BitSolution) -> Result<BitSolution, ProblemError> {
        let weights = vec![1.0 / self.objective_count() as f64; self.objective_count()];
        self.repair_weighted(x, &weights)
    }

    /// Greedily drops selected items until the union weight fits the capacity.
    ///
    /// Each step removes the item with the smallest ratio of weighted profit to
    /// marginal union weight (the weight only that item contributes). Items
    /// with zero marginal weight free no capacity and are only dropped when
    /// every selected item is in that situation, lowest profit first.
    pub fn repair_weighted(
        &self,
        x: &BitSolution,
        objective_weights: &[f64],
    ) -> Result<BitSolution, ProblemError> {
        self.check_len(x)?;
        if objective_weights.len() != self.objective_count() {
            return Err(ProblemError::WeightMismatch {
                expected: self.objective_count(),
                found: objective_weights.len(),
            });
        }
        let mut out = x.clone();
        let mut cover = vec![0u32; self.element_count];
        for i in (0..self.item_count).filter(|&i| out.get(i)) {
            for &e in &self.item_elements[i] {
                cover[e] += 1;
            }
        }
        let mut load: f64 = (0..self.element_count)
            .filter(|&e| cover[e] > 0)
            .map(|e| self.weights[e])
            .sum();

        while load > self.capacity {
            let mut by_ratio: Option<(f64, usize)> = None;
            let mut by_profit: Option<(f64, usize)> = None;
            for i in (0..self.item_count).filter(|&i| out.get(i)) {
                let profit = self.weighted_profit(i, objective_weights);
                let marginal: f64 = self.item_elements[i]
                    .iter()
                    .filter(|&&e| cover[e] == 1)
                    .map(|&e| self.weights[e])
                    .sum();
                if marginal > 0.0 {
                    let ratio = profit / marginal;
                    if by_ratio.is_none_or(|(r, _)| ratio < r) {
                        by_ratio = Some((ratio, i));
                    }
                } else if by_profit.is_none_or(|(p, _)| profit < p) {
                    by_profit = Some((profit, i));
                }
            }
            let Some((_, drop)) = by_ratio.or(by_profit) else {
                // Nothing selected but still over capacity: cannot happen for C >= 0.
                break;
            };
            out.set(drop, false);
            for &e in &self.item_elements[drop] {
                cover[e] -= 1;
            }
            // Summed in element order so the result matches `evaluate` exactly.
            load = (0..self.element_count)
                .filter(|&e| cover[e] > 0)
                .map(|e| self.weights[e])
                .sum();
        }
        Ok(out)
    }

    fn weighted_profit(&self, item: usize, objective_weights: &[f64]) -> f64 {
        self.profits
            .iter()
            .zip(objective_weights)
            .map(|(row, w)| row[item] * w)
            .sum()
    }

    /// Exhaustive search over all `2^m` selections for the feasible one with
    /// the largest weighted objective sum. Ties go to the lexicographically
    /// smallest bit vector (item 0 most significant).
    pub fn brute_force_optimum(
        &self,
        objective_weights: &[f64],
    ) -> Result<(BitSolution, Evaluation), ProblemError> {
        let m = self.item_count;
        if m > MAX_ORACLE_ITEMS {
            return Err(ProblemError::TooManyItems { items: m });
        }
        if objective_weights.len() != self.objective_count() {
            return Err(ProblemError::WeightMismatch {
                expected: self.objective_count(),
                found: objective_weights.len(),
            });
        }
        let item_value: Vec<f64> = (0..m)
            .map(|i| self.weighted_profit(i, objective_weights))
            .collect();
        let words = word_count(self.element_count);
        let mut union = vec![0u64; words];
        let mut best: Option<(f64, u32)> = None;
        // Item i maps to mask bit (m - 1 - i), so ascending masks enumerate bit
        // vectors in lexicographic order and strict improvement keeps the
        // smallest one among ties.
        for mask in 0u32..(1u32 << m) {
            union.iter_mut().for_each(|u| *u = 0);
            let mut value = 0.0;
            for i in 0..m {
                if mask >> (m - 1 - i) & 1 == 1 {
                    for (u, w) in union.iter_mut().zip(&self.item_words[i]) {
                        *u |= w;
                    }
                    value += item_value[i];
                }
            }
            if self.union_weight_of_words(&union) > self.capacity {
                continue;
            }
            if best.is_none_or(|(v, _)| value > v) {
                best = Some((value, mask));
            }
        }
        // The empty selection is always feasible, so `best` is set.
        let (_, mask) = best.expect("empty selection is feasible");
        let x = BitSolution((0..m).map(|i| mask >> (m - 1 - i) & 1 == 1).collect());
        let eval = self.evaluate(&x)?;
        Ok((x, eval))
    }

    /// Serializes to the line-oriented instance format.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} {} {}\n{}\n",
            self.item_count,
            self.element_count,
            self.objective_count(),
            self.capacity
        );
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        for row in &self.profits {
            s.push_str(&join(row));
            s.push('\n');
        }
        s.push_str(&join(&self.weights));
        s.push('\n');
        for row in self.membership() {
            let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Parameters for [`generate_instance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorParams {
    pub items: usize,
    pub elements: usize,
    pub objectives: usize,
    /// Probability of each membership bit, in (0, 1].
    pub density: f64,
    /// Capacity as a fraction of the total element weight, in (0, 1].
    pub capacity_ratio: f64,
}

/// [`generate_instance`] driven by a ChaCha8 stream seeded with `seed`.
pub fn generate_seeded(seed: u64, params: GeneratorParams) -> Result<SukpInstance, ProblemError> {
    use rand::SeedableRng;
    generate_instance(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), params)
}

/// Random instance with integer profits and weights in `[1, 100]`.
///
/// Rows left empty by sampling receive one uniformly chosen element.
pub fn generate_instance<R: Rng + ?Sized>(
    rng: &mut R,
    params: GeneratorParams,
) -> Result<SukpInstance, ProblemError> {
    let GeneratorParams {
        items,
        elements,
        objectives,
        density,
        capacity_ratio,
    } = params;
    if items == 0 || elements == 0 || objectives == 0 {
        return Err(ProblemError::Invalid(
            "items, elements and objectives must be positive".into(),
        ));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(ProblemError::Invalid(format!("density {density} not in (0,1]")));
    }
    if !(capacity_ratio > 0.0 && capacity_ratio <= 1.0) {
        return Err(ProblemError::Invalid(format!(
            "capacity ratio {capacity_ratio} not in (0,1]"
        )));
    }
    let profits: Vec<Vec<f64>> = (0..objectives)
        .map(|_| (0..items).map(|_| rng.random_range(1..=100) as f64).collect())
        .collect();
    let weights: Vec<f64> = (0..elements)
        .map(|_| rng.random_range(1..=100) as f64)
        .collect();
    let membership: Vec<Vec<bool>> = (0..items)
        .map(|_| {
            let mut row: Vec<bool> = (0..elements).map(|_| rng.random_bool(density)).collect();
            if !row.iter().any(|&b| b) {
                row[rng.random_range(0..elements)] = true;
            }
            row
        })
        .collect();
    let capacity = capacity_ratio * weights.iter().sum::<f64>();
    SukpInstance::new(profits, weights, membership, capacity)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    /// Next non-blank line with comments stripped, as (line number, tokens).
    fn next_tokens(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (idx, raw) in self.inner.by_ref() {
            self.last = idx + 1;
            let content = raw.split('#').next().unwrap_or("");
            let tokens: Vec<&str> = content.split_whitespace().collect();
            if !tokens.is_empty() {
                return Some((idx + 1, tokens));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, Vec<&'a str>), ParseError> {
        self.next_tokens().ok_or_else(|| ParseError::UnexpectedEof {
            line: self.last + 1,
            expected: what.to_string(),
        })
    }
}

fn parse_values(line: usize, tokens: &[&str], expected: usize) -> Result<Vec<f64>, ParseError> {
    if tokens.len() != expected {
        return Err(ParseError::DimensionMismatch {
            line,
            expected,
            found: tokens.len(),
        });
    }
    tokens
        .iter()
        .map(|t| {
            let v: f64 = t.parse().map_err(|_| ParseError::InvalidNumber {
                line,
                token: t.to_string(),
            })?;
            if !v.is_finite() {
                return Err(ParseError::InvalidNumber {
                    line,
                    token: t.to_string(),
                });
            }
            if v < 0.0 {
                return Err(ParseError::NegativeValue { line, value: v });
            }
            Ok(v)
        })
        .collect()
}

/// Parses the line-oriented instance format:
///
/// ```text
/// m n O          # items, elements, objectives
/// C              # capacity
/// p_1 ... p_m    # O profit rows
/// w_1 ... w_n    # element weights
/// r_11 ... r_1n  # m membership rows of 0/1
/// ```
pub fn parse_instance(text: &str) -> Result<SukpInstance, ParseError> {
    let mut lines = Lines::new(text);
    let (hline, header) = lines.expect("header `m n O`")?;
    if header.len() != 3 {
        return Err(ParseError::MalformedHeader {
            line: hline,
            reason: format!("expected 3 fields, found {}", header.len()),
        });
    }
    let dims: Vec<usize> = header
        .iter()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| ParseError::MalformedHeader {
            line: hline,
            reason: "fields must be non-negative integers".into(),
        })?;
    let (m, n, o) = (dims[0], dims[1], dims[2]);
    if m == 0 || n == 0 || o == 0 {
        return Err(ParseError::MalformedHeader {
            line: hline,
            reason: "dimensions must be positive".into(),
        });
    }

    let (cline, ctoks) = lines.expect("capacity")?;
    let capacity = parse_values(cline, &ctoks, 1)?[0];

    let mut profits = Vec::with_capacity(o);
    for j in 0..o {
        let (line, toks) = lines.expect(&format!("profit row {}", j + 1))?;
        profits.push(parse_values(line, &toks, m)?);
    }
    let (wline, wtoks) = lines.expect("element weights")?;
    let weights = parse_values(wline, &wtoks, n)?;

    let mut membership = Vec::with_capacity(m);
    for i in 0..m {
        let (line, toks) = lines.expect(&format!("membership row {}", i + 1))?;
        if toks.len() != n {
            return Err(ParseError::DimensionMismatch {
                line,
                expected: n,
                found: toks.len(),
            });
        }
        let row: Vec<bool> = toks
            .iter()
            .map(|t| match *t {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(ParseError::InvalidMembership {
                    line,
                    token: t.to_string(),
                }),
            })
            .collect::<Result<_, _>>()?;
        if !row.iter().any(|&b| b) {
            return Err(ParseError::EmptyItem { line, item: i + 1 });
        }
        membership.push(row);
    }
    if let Some((line, _)) = lines.next_tokens() {
        return Err(ParseError::TrailingContent { line });
    }
    // All invariants were checked above.
    Ok(SukpInstance::new(profits, weights, membership, capacity)
        .expect("parsed instance satisfies invariants"))
}
