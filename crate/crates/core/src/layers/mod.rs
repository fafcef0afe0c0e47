//! Recurrent and auxiliary layers built on the tape.
//!
//! Layers work on batches of padded sequences ([`SeqBatch`]); a single
//! sequence is a batch of one row.

mod attention;
mod conv;
mod lstm;

pub use attention::{AttentionOutput, AttentionParams};
pub use conv::Conv1d;
pub use lstm::{bilstm, clstm_step, lstm_step, run_lstm, ContextInjection, LstmCell, LstmRun};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Time-major batch of padded sequences.
///
/// `steps[t]` is a `[batch, width]` matrix; row `b` holds real data only for
/// `t < lengths[b]`.
#[derive(Debug, Clone)]
pub struct SeqBatch {
    pub steps: Vec<Var>,
    pub lengths: Vec<usize>,
}

impl SeqBatch {
    pub fn new(steps: Vec<Var>, lengths: Vec<usize>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::EmptySequence("sequence with no time steps".into()));
        }
        if let Some(b) = lengths.iter().position(|&l| l == 0 || l > steps.len()) {
            return Err(Error::EmptySequence(format!(
                "row {b} has length {} for {} steps",
                lengths[b],
                steps.len()
            )));
        }
        Ok(Self { steps, lengths })
    }

    /// A batch of one full-length sequence.
    pub fn single(steps: Vec<Var>) -> Result<Self> {
        let t = steps.len();
        Self::new(steps, vec![t])
    }

    /// Splits a `[T, d]` matrix into a one-row batch of `T` steps.
    pub fn from_matrix(tape: &mut Tape<'_>, seq: Var) -> Result<Self> {
        let (t, _) = tape.value(seq).dims2()?;
        if t == 0 {
            return Err(Error::EmptySequence("empty matrix".into()));
        }
        let steps = (0..t)
            .map(|i| tape.pick_rows(&[seq], &[(0, i)]))
            .collect::<Result<Vec<_>>>()?;
        Self::single(steps)
    }

    pub fn batch(&self) -> usize {
        self.lengths.len()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Row validity mask at step `t`, or `None` when every row is valid.
    pub fn mask(&self, t: usize) -> Option<Vec<f64>> {
        if self.lengths.iter().all(|&l| t < l) {
            None
        } else {
            Some(
                self.lengths
                    .iter()
                    .map(|&l| if t < l { 1.0 } else { 0.0 })
                    .collect(),
            )
        }
    }

    /// The same sequences with each row's valid prefix reversed.
    pub fn reversed(&self, tape: &mut Tape<'_>) -> Result<Self> {
        let steps = (0..self.len())
            .map(|t| {
                let picks: Vec<_> = self
                    .lengths
                    .iter()
                    .enumerate()
                    .map(|(b, &l)| if t < l { (l - 1 - t, b) } else { (t, b) })
                    .collect();
                tape.pick_rows(&self.steps, &picks)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(steps, self.lengths.clone())
    }
}

pub(crate) fn zeros(tape: &mut Tape<'_>, rows: usize, cols: usize) -> Var {
    tape.constant(Tensor::zeros(&[rows, cols]))
}
