//! Scaled dot-product self-attention pooled to one vector per sequence.

use crate::error::{dim_err, Error, Result};
use crate::params::{Initializer, ParamId, ParameterStore};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub d_h: usize,
    pub d_a: usize,
    w_q: ParamId,
    w_k: ParamId,
    w_v: ParamId,
    w_o: ParamId,
}

/// Pooled vector plus the per-query attention weights (`[batch, T]` each).
#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub pooled: Var,
    pub weights: Vec<Var>,
}

impl AttentionParams {
    pub fn build(
        store: &mut ParameterStore,
        init: &mut Initializer,
        prefix: &str,
        d_h: usize,
        d_a: usize,
    ) -> Result<Self> {
        let mut mat = |name: &str, r: usize, c: usize| {
            store.insert(format!("{prefix}.{name}"), init.gaussian(&[r, c]))
        };
        Ok(Self {
            d_h,
            d_a,
            w_q: mat("W_q", d_h, d_a)?,
            w_k: mat("W_k", d_h, d_a)?,
            w_v: mat("W_v", d_h, d_a)?,
            w_o: mat("W_o", d_a, d_h)?,
        })
    }

    pub fn param_ids(&self) -> [ParamId; 4] {
        [self.w_q, self.w_k, self.w_v, self.w_o]
    }

    /// Attends over `hidden` (queries, keys and values all come from the
    /// hidden states) and averages the attended vectors over each row's
    /// valid positions. Output is `[batch, d_h]`.
    pub fn pool(
        &self,
        tape: &mut Tape<'_>,
        hidden: &[Var],
        lengths: &[usize],
    ) -> Result<AttentionOutput> {
        let t_len = hidden.len();
        if t_len == 0 {
            return Err(Error::EmptySequence("attention over zero positions".into()));
        }
        let b = lengths.len();
        for h in hidden {
            if tape.value(*h).dims2()? != (b, self.d_h) {
                return dim_err(format!(
                    "attention input of shape {:?}, expected [{b}, {}]",
                    tape.value(*h).shape(),
                    self.d_h
                ));
            }
        }
        if lengths.iter().any(|&l| l == 0 || l > t_len) {
            return Err(Error::EmptySequence("attention row with no valid positions".into()));
        }
        let (wq, wk, wv, wo) = (
            tape.param(self.w_q)?,
            tape.param(self.w_k)?,
            tape.param(self.w_v)?,
            tape.param(self.w_o)?,
        );
        let mut qs = Vec::with_capacity(t_len);
        let mut ks = Vec::with_capacity(t_len);
        let mut vs = Vec::with_capacity(t_len);
        for &h in hidden {
            qs.push(tape.matmul(h, wq)?);
            ks.push(tape.matmul(h, wk)?);
            vs.push(tape.matmul(h, wv)?);
        }
        let scale = 1.0 / (self.d_a as f64).sqrt();
        let key_mask: Vec<bool> = (0..b)
            .flat_map(|r| (0..t_len).map(move |u| u < lengths[r]))
            .collect();
        let all_valid = key_mask.iter().all(|&m| m);

        let mut weights = Vec::with_capacity(t_len);
        let mut pooled: Option<Var> = None;
        for t in 0..t_len {
            let scores = (0..t_len)
                .map(|u| tape.row_dot(qs[t], ks[u]))
                .collect::<Result<Vec<_>>>()?;
            let scores = tape.concat_last(&scores)?;
            let scores = tape.scale(scores, scale)?;
            let a = tape.softmax_rows(scores, (!all_valid).then_some(key_mask.as_slice()))?;
            let mut ctx: Option<Var> = None;
            for (u, &v) in vs.iter().enumerate() {
                let w = tape.col_slice(a, u)?;
                let term = tape.mul_col(w, v)?;
                ctx = Some(match ctx {
                    Some(acc) => tape.add(acc, term)?,
                    None => term,
                });
            }
            weights.push(a);
            let factors = lengths
                .iter()
                .map(|&l| if t < l { 1.0 / l as f64 } else { 0.0 })
                .collect();
            let part = tape.scale_rows(ctx.expect("t_len > 0"), factors)?;
            pooled = Some(match pooled {
                Some(acc) => tape.add(acc, part)?,
                None => part,
            });
        }
        let pooled = tape.matmul(pooled.expect("t_len > 0"), wo)?;
        Ok(AttentionOutput { pooled, weights })
    }
}
