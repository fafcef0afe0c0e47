use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 6;
pub const DAYS: usize = 7;
pub const PERIODS: usize = 4;
/// Time ids used by the padding pseudo-tweet; the day and period tables have
/// one extra row for them.
pub const PAD_DAY: usize = DAYS;
pub const PAD_PERIOD: usize = PERIODS;

/// Day of week (Monday = 0) and quarter of the day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeCode {
    pub day: u8,
    pub period: u8,
}

impl TimeCode {
    pub fn new(day: usize, period: usize) -> Result<Self> {
        if day >= DAYS || period >= PERIODS {
            return Err(Error::Encoding(format!("time code ({day}, {period}) out of range")));
        }
        Ok(Self {
            day: day as u8,
            period: period as u8,
        })
    }
}

/// One tweet as id sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedTweet {
    pub tokens: Vec<usize>,
    pub pos: Vec<usize>,
    pub time: TimeCode,
}

/// A target tweet with its history (oldest first) and optional label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub target: EncodedTweet,
    #[serde(default)]
    pub history: Vec<EncodedTweet>,
    #[serde(default)]
    pub label: Option<usize>,
}

/// Probability vector over the six activities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivityDistribution(pub [f64; NUM_CLASSES]);

impl ActivityDistribution {
    pub fn uniform() -> Self {
        Self([1.0 / NUM_CLASSES as f64; NUM_CLASSES])
    }

    pub fn from_slice(p: &[f64]) -> Result<Self> {
        let arr: [f64; NUM_CLASSES] = p
            .try_into()
            .map_err(|_| Error::Dimension(format!("distribution of length {}", p.len())))?;
        Ok(Self(arr))
    }

    pub fn probs(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    /// Index of the largest probability; the first wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Non-negative, finite, and summing to 1 within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.0.iter().all(|p| p.is_finite() && *p >= 0.0)
            && (self.0.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}
