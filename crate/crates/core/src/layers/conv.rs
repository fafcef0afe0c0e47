//! Same-length 1-D convolution over time with ReLU.

use crate::error::{dim_err, Error, Result};
use crate::params::{Initializer, ParamId, ParameterStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::{zeros, SeqBatch};

/// Kernel rows are grouped by offset (`-r..=r`), then by input feature.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub width: usize,
    pub d_in: usize,
    pub filters: usize,
    kernel: ParamId,
    bias: ParamId,
}

impl Conv1d {
    pub fn build(
        store: &mut ParameterStore,
        init: &mut Initializer,
        prefix: &str,
        d_in: usize,
        width: usize,
        filters: usize,
    ) -> Result<Self> {
        if width.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel width {width} must be odd")));
        }
        let kernel = store.insert(format!("{prefix}.kernel"), init.gaussian(&[width * d_in, filters]))?;
        let bias = store.insert(format!("{prefix}.bias"), Tensor::zeros(&[filters]))?;
        Ok(Self {
            width,
            d_in,
            filters,
            kernel,
            bias,
        })
    }

    pub fn param_ids(&self) -> [ParamId; 2] {
        [self.kernel, self.bias]
    }

    /// Output step `t` sees inputs `t - r ..= t + r`; positions outside a
    /// row's valid range contribute zeros.
    pub fn apply(&self, tape: &mut Tape<'_>, seq: &SeqBatch) -> Result<SeqBatch> {
        let b = seq.batch();
        for x in &seq.steps {
            if tape.value(*x).dims2()? != (b, self.d_in) {
                return dim_err(format!(
                    "conv input of shape {:?}, expected [{b}, {}]",
                    tape.value(*x).shape(),
                    self.d_in
                ));
            }
        }
        let masked = (0..seq.len())
            .map(|t| match seq.mask(t) {
                None => Ok(seq.steps[t]),
                Some(m) => tape.scale_rows(seq.steps[t], m),
            })
            .collect::<Result<Vec<_>>>()?;
        let pad = zeros(tape, b, self.d_in);
        let kernel = tape.param(self.kernel)?;
        let bias = tape.param(self.bias)?;
        let r = (self.width / 2) as isize;
        let mut out = Vec::with_capacity(seq.len());
        for t in 0..seq.len() as isize {
            let window: Vec<Var> = (-r..=r)
                .map(|o| {
                    let s = t + o;
                    if s < 0 || s >= masked.len() as isize {
                        pad
                    } else {
                        masked[s as usize]
                    }
                })
                .collect();
            let x = if window.len() == 1 {
                window[0]
            } else {
                tape.concat_last(&window)?
            };
            let y = tape.matmul(x, kernel)?;
            let y = tape.add(y, bias)?;
            out.push(tape.relu(y)?);
        }
        SeqBatch::new(out, seq.lengths.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tape: &mut Tape<'_>, data: &[Vec<f64>]) -> SeqBatch {
        let steps = data
            .iter()
            .map(|r| tape.constant(Tensor::new(vec![1, r.len()], r.clone()).unwrap()))
            .collect();
        SeqBatch::single(steps).unwrap()
    }

    #[test]
    fn even_width_rejected() {
        let mut store = ParameterStore::new();
        let mut init = Initializer::new(0, 0.1).unwrap();
        assert!(matches!(
            Conv1d::build(&mut store, &mut init, "c", 2, 2, 3),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn width_one_is_positionwise_linear() {
        let mut store = ParameterStore::new();
        let mut init = Initializer::new(1, 0.5).unwrap();
        let conv = Conv1d::build(&mut store, &mut init, "c", 2, 1, 3).unwrap();
        let data = vec![vec![0.5, -1.0], vec![2.0, 0.25]];
        let k = store.get(conv.kernel).values().to_vec();
        let mut tape = Tape::with_params(&store);
        let s = seq(&mut tape, &data);
        let out = conv.apply(&mut tape, &s).unwrap();
        for (t, x) in data.iter().enumerate() {
            for f in 0..3 {
                let lin = x[0] * k[f] + x[1] * k[3 + f];
                assert!((tape.values(out.steps[t])[f] - lin.max(0.0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_kernel_gives_zero() {
        let mut store = ParameterStore::new();
        let mut init = Initializer::new(1, 0.5).unwrap();
        let conv = Conv1d::build(&mut store, &mut init, "c", 2, 3, 2).unwrap();
        store.get_mut(conv.kernel).values_mut().fill(0.0);
        let mut tape = Tape::with_params(&store);
        let s = seq(&mut tape, &[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let out = conv.apply(&mut tape, &s).unwrap();
        for st in &out.steps {
            assert!(tape.values(*st).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn width_three_matches_sliding_window() {
        let mut store = ParameterStore::new();
        let mut init = Initializer::new(2, 0.5).unwrap();
        let conv = Conv1d::build(&mut store, &mut init, "c", 2, 3, 2).unwrap();
        store.get_mut(conv.bias).values_mut().copy_from_slice(&[0.1, -0.2]);
        let data = vec![vec![0.3, -0.7], vec![1.1, 0.4], vec![-0.6, 0.9], vec![0.2, 0.2]];
        let k = store.get(conv.kernel).values().to_vec();
        let bias = [0.1, -0.2];
        let mut tape = Tape::with_params(&store);
        let s = seq(&mut tape, &data);
        let out = conv.apply(&mut tape, &s).unwrap();
        for t in 0..data.len() as isize {
            for f in 0..2 {
                let mut acc = bias[f];
                for (slot, o) in (-1..=1).enumerate() {
                    let src = t + o;
                    if src < 0 || src >= data.len() as isize {
                        continue;
                    }
                    for d in 0..2 {
                        acc += data[src as usize][d] * k[(slot * 2 + d) * 2 + f];
                    }
                }
                let got = tape.values(out.steps[t as usize])[f];
                assert!((got - acc.max(0.0)).abs() < 1e-12);
            }
        }
    }
}
