//! Precision, recall and accuracy, kept as exact ratios alongside their
//! floating-point values.

use serde::{Deserialize, Serialize};

use super::matching::MatchResult;
use crate::error::{Error, Result};

/// Match tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Counts { tp, fp, fn_ }
    }

    pub fn of(m: &MatchResult) -> Self {
        Counts::new(m.matched.len(), m.false_positives.len(), m.false_negatives.len())
    }

    pub fn reported(&self) -> usize {
        self.tp + self.fp
    }

    pub fn gold(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |a, b| a + b)
    }
}

/// `num / den` with both integers retained, so complementary rates can be
/// checked without rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: usize,
    pub den: usize,
}

impl Ratio {
    pub fn new(num: usize, den: usize) -> Self {
        Ratio { num, den }
    }

    /// `None` for a zero denominator.
    pub fn value(&self) -> Option<f64> {
        (self.den > 0).then(|| self.num as f64 / self.den as f64)
    }

    pub fn percent(&self) -> Option<f64> {
        self.value().map(|v| v * 100.0)
    }

    /// The complementary ratio `(den - num) / den`.
    pub fn complement(&self) -> Ratio {
        Ratio::new(self.den - self.num, self.den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    /// TP / (TP + FP + FN).
    pub accuracy: f64,
}

/// Precision, recall and accuracy. A side with a zero denominator scores 0;
/// all-zero counts are degenerate.
pub fn metrics(c: Counts) -> Result<Metrics> {
    if c.total() == 0 {
        return Err(Error::DegenerateInput("TP + FP + FN = 0".into()));
    }
    Ok(Metrics {
        precision: Ratio::new(c.tp, c.reported()).value().unwrap_or(0.0),
        recall: Ratio::new(c.tp, c.gold()).value().unwrap_or(0.0),
        accuracy: Ratio::new(c.tp, c.total()).value().unwrap_or(0.0),
    })
}
