//! Binary move operators and the configurable operator pool.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::problem::BitSolution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("operator pool must contain at least one operator")]
    EmptyPool,
    #[error("operator index {index} out of range for pool of {size}")]
    InvalidId { index: usize, size: usize },
    #[error("unknown operator `{0}` (expected flip1, flipk:K, bestmix:P, donormix:P or exchange)")]
    UnknownOperator(String),
    #[error("invalid parameter in `{0}`")]
    InvalidParameter(String),
    #[error("move context vectors differ in length")]
    ContextMismatch,
}

/// Index of an operator within a pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OperatorId(pub usize);

impl fmt::Display for OperatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op{}", self.0)
    }
}

/// Solutions an operator may read when producing a neighbour.
#[derive(Debug, Clone, Copy)]
pub struct MoveContext<'a> {
    pub current: &'a BitSolution,
    pub global_best: &'a BitSolution,
    /// Another randomly chosen population member.
    pub donor: &'a BitSolution,
}

impl MoveContext<'_> {
    fn check(&self) -> Result<(), OperatorError> {
        let m = self.current.len();
        if self.global_best.len() != m || self.donor.len() != m {
            return Err(OperatorError::ContextMismatch);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Operator {
    /// Flip one uniformly chosen bit.
    FlipOne,
    /// Flip `k` distinct bits (fewer when the vector is shorter).
    FlipK(usize),
    /// Copy each bit from the global best with the given probability.
    BestMix(f64),
    /// Copy each bit from the donor with the given probability.
    DonorMix(f64),
    /// Clear one set bit and set one clear bit.
    Exchange,
}

impl Operator {
    pub fn apply<R: Rng + ?Sized>(
        &self,
        ctx: &MoveContext<'_>,
        rng: &mut R,
    ) -> Result<BitSolution, OperatorError> {
        ctx.check()?;
        let mut x = ctx.current.clone();
        let m = x.len();
        if m == 0 {
            return Ok(x);
        }
        match *self {
            Operator::FlipOne => x.flip(rng.random_range(0..m)),
            Operator::FlipK(k) => {
                for i in index::sample(rng, m, k.min(m)) {
                    x.flip(i);
                }
            }
            Operator::BestMix(p) => mix(&mut x, ctx.global_best, p, rng),
            Operator::DonorMix(p) => mix(&mut x, ctx.donor, p, rng),
            Operator::Exchange => {
                let ones: Vec<usize> = (0..m).filter(|&i| x.get(i)).collect();
                if ones.is_empty() || ones.len() == m {
                    // Nothing to exchange: fall back to a single flip.
                    x.flip(rng.random_range(0..m));
                } else {
                    let zeros: Vec<usize> = (0..m).filter(|&i| !x.get(i)).collect();
                    let out = ones[rng.random_range(0..ones.len())];
                    let inn = zeros[rng.random_range(0..zeros.len())];
                    x.set(out, false);
                    x.set(inn, true);
                }
            }
        }
        Ok(x)
    }
}

fn mix<R: Rng + ?Sized>(x: &mut BitSolution, source: &BitSolution, p: f64, rng: &mut R) {
    for i in 0..x.len() {
        if rng.random_bool(p) {
            x.set(i, source.get(i));
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operator::FlipOne => write!(f, "flip1"),
            Operator::FlipK(k) => write!(f, "flipk:{k}"),
            Operator::BestMix(p) => write!(f, "bestmix:{p}"),
            Operator::DonorMix(p) => write!(f, "donormix:{p}"),
            Operator::Exchange => write!(f, "exchange"),
        }
    }
}

impl FromStr for Operator {
    type Err = OperatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let bad = || OperatorError::InvalidParameter(s.to_string());
        let prob = |a: Option<&str>, default: f64| -> Result<f64, OperatorError> {
            let p = a.map_or(Ok(default), |a| a.parse::<f64>().map_err(|_| bad()))?;
            if (0.0..=1.0).contains(&p) {
                Ok(p)
            } else {
                Err(bad())
            }
        };
        match name {
            "flip1" if arg.is_none() => Ok(Operator::FlipOne),
            "flipk" => {
                let k = arg.map_or(Ok(3), |a| a.parse::<usize>().map_err(|_| bad()))?;
                if k == 0 {
                    return Err(bad());
                }
                Ok(Operator::FlipK(k))
            }
            "bestmix" => Ok(Operator::BestMix(prob(arg, 0.3)?)),
            "donormix" => Ok(Operator::DonorMix(prob(arg, 0.3)?)),
            "exchange" if arg.is_none() => Ok(Operator::Exchange),
            _ => Err(OperatorError::UnknownOperator(s.to_string())),
        }
    }
}

/// Non-empty ordered list of operators; an [`OperatorId`] indexes into it.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorPool {
    operators: Vec<Operator>,
}

impl Default for OperatorPool {
    /// `flip1`, `flipk:3`, `bestmix:0.3`, `exchange`.
    fn default() -> Self {
        OperatorPool {
            operators: vec![
                Operator::FlipOne,
                Operator::FlipK(3),
                Operator::BestMix(0.3),
                Operator::Exchange,
            ],
        }
    }
}

impl OperatorPool {
    pub fn new(operators: Vec<Operator>) -> Result<Self, OperatorError> {
        if operators.is_empty() {
            return Err(OperatorError::EmptyPool);
        }
        Ok(OperatorPool { operators })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, OperatorError> {
        let ops = names
            .iter()
            .map(|n| n.as_ref().parse())
            .collect::<Result<Vec<_>, _>>()?;
        OperatorPool::new(ops)
    }

    pub fn size(&self) -> usize {
        self.operators.len()
    }

    pub fn operators(&self) -> &[Operator] {
        &self.operators
    }

    pub fn names(&self) -> Vec<String> {
        self.operators.iter().map(|o| o.to_string()).collect()
    }

    pub fn get(&self, id: OperatorId) -> Result<&Operator, OperatorError> {
        self.operators.get(id.0).ok_or(OperatorError::InvalidId {
            index: id.0,
            size: self.operators.len(),
        })
    }

    /// Produces an unrepaired neighbour of `ctx.current`.
    pub fn apply<R: Rng + ?Sized>(
        &self,
        id: OperatorId,
        ctx: &MoveContext<'_>,
        rng: &mut R,
    ) -> Result<BitSolution, OperatorError> {
        self.get(id)?.apply(ctx, rng)
    }
}
