use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index sets of a train/dev/test split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n`; dev and test get `floor(n / 5)` each and the
/// rest goes to train.
pub fn split_dataset(n: usize, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = n / 5;
    let test = idx.split_off(n - k);
    let dev = idx.split_off(n - 2 * k);
    Split {
        train: idx,
        dev,
        test,
    }
}

/// `N / (C * count_c)`, rescaled to mean 1.
pub fn class_weights(labels: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; num_classes];
    for &y in labels {
        if y >= num_classes {
            return Err(Error::Index {
                what: "classes",
                index: y,
                size: num_classes,
            });
        }
        counts[y] += 1;
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!("class {c} has no training examples")));
    }
    let n = labels.len() as f64;
    let raw: Vec<f64> = counts
        .iter()
        .map(|&c| n / (num_classes as f64 * c as f64))
        .collect();
    let mean = raw.iter().sum::<f64>() / num_classes as f64;
    Ok(raw.iter().map(|w| w / mean).collect())
}
