//! Deterministic outcome strategies for `m` three-outcome settings.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Largest supported number of settings (`3^8 = 6561` strategies).
pub const MAX_SETTINGS: usize = 8;

pub const OUTCOMES: usize = 3;

/// All `3^m` deterministic strategies. Strategy `λ` assigns outcome
/// `(λ / 3^x) % 3` to setting `x`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrategyTable {
    m: usize,
    digits: Vec<u8>,
}

pub fn enumerate_strategies(m: usize) -> Result<StrategyTable> {
    if m == 0 || m > MAX_SETTINGS {
        return Err(Error::TooManySettings(m));
    }
    let count = OUTCOMES.pow(m as u32);
    let mut digits = Vec::with_capacity(count * m);
    for lambda in 0..count {
        let mut rest = lambda;
        for _ in 0..m {
            digits.push((rest % OUTCOMES) as u8);
            rest /= OUTCOMES;
        }
    }
    Ok(StrategyTable { m, digits })
}

impl StrategyTable {
    pub fn settings(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.digits.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    /// Outcome fixed by strategy `lambda` for setting `x`.
    pub fn outcome(&self, lambda: usize, x: usize) -> usize {
        self.digits[lambda * self.m + x] as usize
    }

    /// Outcomes of strategy `lambda`, one per setting.
    pub fn row(&self, lambda: usize) -> &[u8] {
        &self.digits[lambda * self.m..(lambda + 1) * self.m]
    }

    /// `D(a|x,λ)`.
    pub fn d(&self, a: usize, x: usize, lambda: usize) -> bool {
        self.outcome(lambda, x) == a
    }

    /// Number of strategies sharing one fixed `(a, x)` pair: `3^(m-1)`.
    pub fn per_outcome(&self) -> usize {
        self.len() / OUTCOMES
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(enumerate_strategies(1).unwrap().len(), 3);
        assert_eq!(enumerate_strategies(3).unwrap().len(), 27);
        assert_eq!(enumerate_strategies(7).unwrap().len(), 2187);
        assert_eq!(enumerate_strategies(0), Err(Error::TooManySettings(0)));
        assert_eq!(enumerate_strategies(9), Err(Error::TooManySettings(9)));
    }

    #[test]
    fn exactly_one_outcome_per_setting() {
        let t = enumerate_strategies(3).unwrap();
        for lambda in 0..t.len() {
            for x in 0..3 {
                let hits = (0..OUTCOMES).filter(|&a| t.d(a, x, lambda)).count();
                assert_eq!(hits, 1);
            }
        }
    }

    #[test]
    fn base_three_digit_order() {
        let t = enumerate_strategies(3).unwrap();
        // 14 = 2 + 1*3 + 1*9
        assert_eq!(t.row(14), &[2, 1, 1]);
        let mut seen: Vec<&[u8]> = (0..t.len()).map(|l| t.row(l)).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 27);
    }
}
