//! Central finite-difference checks of tape gradients.
//!
//! Relative error is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.
//! The floor keeps entries whose true gradient is essentially zero from
//! dividing rounding noise by rounding noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{
    bilstm, clstm_step, lstm_step, run_lstm, AttentionParams, ContextInjection, Conv1d, LstmCell,
    SeqBatch,
};
use crate::model::{
    Architecture, EncodedExample, EncodedTweet, Features, Model, ModelSpec, TimeCode, NUM_CLASSES,
};
use crate::params::{Initializer, ParamId, ParameterStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Outcome of one gradient check.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Location of the worst entry: parameter or input name and flat index.
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    fn record(&mut self, name: &str, k: usize, a: f64, n: f64) {
        let e = relative_error(a, n);
        self.checked += 1;
        if e > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = self.max_rel_err.max(e);
            self.worst = Some((name.to_string(), k));
        }
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        self.checked += other.checked;
        if other.max_rel_err > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst.clone();
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Checks gradients with respect to free input tensors.
///
/// `f` receives the inputs recorded as gradient-requiring leaves and returns
/// a single-element loss.
pub fn check_inputs<F>(inputs: &[Tensor], eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs
            .iter()
            .map(|t| tape.leaf(t.clone().with_requires_grad(true)))
            .collect();
        let l = f(&mut tape, &vars)?;
        Ok(tape.values(l)[0])
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_requires_grad(true)))
        .collect();
    let l = f(&mut tape, &vars)?;
    tape.backward(l)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| tape.grad(*v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    drop(tape);

    let mut report = GradCheckReport::default();
    let mut xs = inputs.to_vec();
    for i in 0..xs.len() {
        for k in 0..xs[i].len() {
            let orig = xs[i].values()[k];
            xs[i].values_mut()[k] = orig + eps;
            let up = eval(&xs)?;
            xs[i].values_mut()[k] = orig - eps;
            let down = eval(&xs)?;
            xs[i].values_mut()[k] = orig;
            report.record(&format!("input{i}"), k, analytic[i][k], (up - down) / (2.0 * eps));
        }
    }
    Ok(report)
}

/// Checks gradients of every entry of the selected parameters (all when
/// `only` is `None`). `f` must be deterministic, including any dropout masks.
pub fn check_params<F>(
    store: &mut ParameterStore,
    only: Option<&[ParamId]>,
    eps: f64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let grads = {
        let mut tape = Tape::with_params(store);
        let l = f(&mut tape)?;
        tape.backward(l)?;
        tape.param_grads()
    };
    let eval = |store: &ParameterStore| -> Result<f64> {
        let mut tape = Tape::with_params(store);
        let l = f(&mut tape)?;
        Ok(tape.values(l)[0])
    };
    let ids: Vec<ParamId> = match only {
        Some(ids) => ids.to_vec(),
        None => store.ids().collect(),
    };
    let mut report = GradCheckReport::default();
    for id in ids {
        let name = store.name(id).to_string();
        let analytic = grads
            .get(id)
            .map_or_else(|| vec![0.0; store.get(id).len()], <[f64]>::to_vec);
        for (k, &a) in analytic.iter().enumerate() {
            let orig = store.get(id).values()[k];
            store.get_mut(id).values_mut()[k] = orig + eps;
            let up = eval(store)?;
            store.get_mut(id).values_mut()[k] = orig - eps;
            let down = eval(store)?;
            store.get_mut(id).values_mut()[k] = orig;
            report.record(&name, k, a, (up - down) / (2.0 * eps));
        }
    }
    Ok(report)
}


fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), values).expect("shape and length agree")
}

/// Values bounded away from zero so ReLU kinks stay outside the stencil.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let mut t = uniform(rng, shape, 0.1, 1.0);
    for v in t.values_mut() {
        if rng.random::<bool>() {
            *v = -*v;
        }
    }
    t
}

/// Reduces `v` to a scalar through a fixed random projection so every
/// output entry gets a distinct upstream gradient.
fn project(tape: &mut Tape<'_>, v: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone().reshape(tape.value(v).shape().to_vec())?);
    let p = tape.mul(v, w)?;
    tape.sum(p)
}

type OpFn = fn(&mut ChaCha8Rng) -> Result<GradCheckReport>;

/// A named gradient check over freshly drawn random inputs.
#[derive(Clone, Copy)]
pub struct OpCase {
    pub name: &'static str,
    run: OpFn,
}

impl OpCase {
    pub fn run(&self, seed: u64) -> Result<GradCheckReport> {
        (self.run)(&mut ChaCha8Rng::seed_from_u64(seed))
    }
}

macro_rules! input_case {
    ($name:literal, |$rng:ident| [$($input:expr),+ $(,)?], out $out:expr, |$tape:ident, $v:ident| $body:expr) => {
        OpCase {
            name: $name,
            run: |$rng| {
                let inputs = vec![$($input),+];
                let proj = uniform($rng, &$out, -1.0, 1.0);
                check_inputs(&inputs, DEFAULT_EPS, |$tape, $v| {
                    let out = $body?;
                    project($tape, out, &proj)
                })
            },
        }
    };
}

/// Every differentiable tape op and layer, each checked on its own.
pub fn op_cases() -> Vec<OpCase> {
    vec![
        input_case!("matmul", |r| [uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[4, 2], -1.0, 1.0)],
            out [3, 2], |t, v| t.matmul(v[0], v[1])),
        input_case!("add", |r| [uniform(r, &[2, 3], -1.0, 1.0), uniform(r, &[2, 3], -1.0, 1.0)],
            out [2, 3], |t, v| t.add(v[0], v[1])),
        input_case!("add_bias", |r| [uniform(r, &[4, 3], -1.0, 1.0), uniform(r, &[3], -1.0, 1.0)],
            out [4, 3], |t, v| t.add(v[0], v[1])),
        input_case!("mul", |r| [uniform(r, &[2, 3], -1.0, 1.0), uniform(r, &[2, 3], -1.0, 1.0)],
            out [2, 3], |t, v| t.mul(v[0], v[1])),
        input_case!("mul_row", |r| [uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[4], -1.0, 1.0)],
            out [3, 4], |t, v| t.mul_row(v[0], v[1])),
        input_case!("mul_col", |r| [uniform(r, &[3, 1], -1.0, 1.0), uniform(r, &[3, 4], -1.0, 1.0)],
            out [3, 4], |t, v| t.mul_col(v[0], v[1])),
        input_case!("scale", |r| [uniform(r, &[2, 3], -1.0, 1.0)],
            out [2, 3], |t, v| t.scale(v[0], -1.7)),
        input_case!("scale_rows", |r| [uniform(r, &[3, 2], -1.0, 1.0)],
            out [3, 2], |t, v| t.scale_rows(v[0], vec![0.5, 0.0, -2.0])),
        input_case!("blend", |r| [uniform(r, &[3, 2], -1.0, 1.0), uniform(r, &[3, 2], -1.0, 1.0)],
            out [3, 2], |t, v| t.blend(v[0], v[1], vec![1.0, 0.0, 1.0])),
        input_case!("sigmoid", |r| [uniform(r, &[2, 4], -3.0, 3.0)],
            out [2, 4], |t, v| t.sigmoid(v[0])),
        input_case!("tanh", |r| [uniform(r, &[2, 4], -3.0, 3.0)],
            out [2, 4], |t, v| t.tanh(v[0])),
        input_case!("relu", |r| [off_zero(r, &[2, 4])],
            out [2, 4], |t, v| t.relu(v[0])),
        input_case!("concat_last", |r| [uniform(r, &[2, 3], -1.0, 1.0), uniform(r, &[2, 1], -1.0, 1.0), uniform(r, &[2, 2], -1.0, 1.0)],
            out [2, 6], |t, v| t.concat_last(&[v[0], v[1], v[2]])),
        input_case!("embedding", |r| [uniform(r, &[5, 3], -1.0, 1.0)],
            out [4, 3], |t, v| t.embedding(v[0], &[4, 0, 4, 2])),
        input_case!("pick_rows", |r| [uniform(r, &[3, 2], -1.0, 1.0), uniform(r, &[2, 2], -1.0, 1.0)],
            out [4, 2], |t, v| t.pick_rows(&[v[0], v[1]], &[(1, 1), (0, 2), (0, 2), (1, 0)])),
        input_case!("row_dot", |r| [uniform(r, &[3, 4], -1.0, 1.0), uniform(r, &[3, 4], -1.0, 1.0)],
            out [3, 1], |t, v| t.row_dot(v[0], v[1])),
        input_case!("softmax_rows", |r| [uniform(r, &[2, 4], -2.0, 2.0)],
            out [2, 4], |t, v| t.softmax_rows(v[0], None)),
        input_case!("softmax_rows_masked", |r| [uniform(r, &[2, 4], -2.0, 2.0)],
            out [2, 4], |t, v| t.softmax_rows(v[0], Some(&[true, true, false, true, true, false, false, false]))),
        input_case!("col_slice", |r| [uniform(r, &[3, 4], -1.0, 1.0)],
            out [3, 1], |t, v| t.col_slice(v[0], 2)),
        input_case!("sum", |r| [uniform(r, &[3, 4], -1.0, 1.0)],
            out [1], |t, v| t.sum(v[0])),
        input_case!("dropout", |r| [uniform(r, &[4, 5], -1.0, 1.0)],
            out [4, 5], |t, v| t.dropout(v[0], 0.3, true, &mut ChaCha8Rng::seed_from_u64(99))),
        OpCase {
            name: "softmax_cross_entropy",
            run: |r| {
                let logits = uniform(r, &[5, NUM_CLASSES], -2.0, 2.0);
                let targets: Vec<usize> = (0..5).map(|_| r.random_range(0..NUM_CLASSES)).collect();
                let weights: Vec<f64> = (0..NUM_CLASSES).map(|_| r.random_range(0.2..2.0)).collect();
                check_inputs(&[logits], DEFAULT_EPS, |t, v| {
                    t.softmax_cross_entropy(v[0], &targets, &weights)
                })
            },
        },
        OpCase { name: "lstm_step", run: |r| layer_case(r, LayerKind::Step) },
        OpCase { name: "clstm_step", run: |r| layer_case(r, LayerKind::ContextStep) },
        OpCase { name: "lstm_sequence_padded", run: |r| layer_case(r, LayerKind::Sequence) },
        OpCase { name: "lstm_no_peephole", run: |r| layer_case(r, LayerKind::NoPeephole) },
        OpCase { name: "bilstm", run: |r| layer_case(r, LayerKind::Bidirectional) },
        OpCase { name: "attention_pool", run: |r| layer_case(r, LayerKind::Attention) },
        OpCase { name: "conv1d", run: |r| layer_case(r, LayerKind::Conv) },
    ]
}

#[derive(Clone, Copy)]
enum LayerKind {
    Step,
    ContextStep,
    Sequence,
    NoPeephole,
    Bidirectional,
    Attention,
    Conv,
}

/// Layer checks treat inputs as parameters too, so one pass covers weights
/// and inputs.
fn layer_case(rng: &mut ChaCha8Rng, kind: LayerKind) -> Result<GradCheckReport> {
    let (b, d_in, d_h, d_e, t_len) = (2, 3, 4, 2, 3);
    let mut store = ParameterStore::new();
    let mut init = Initializer::new(rng.random(), 0.5)?;
    let peep = !matches!(kind, LayerKind::NoPeephole);
    let cell = LstmCell::build(&mut store, &mut init, "cell", d_in, d_h, peep)?;
    let back = LstmCell::build(&mut store, &mut init, "back", d_in, d_h, peep)?;
    let inj = ContextInjection::build(&mut store, &mut init, "cell", d_e, d_h)?;
    let att = AttentionParams::build(&mut store, &mut init, "att", d_h, 3)?;
    let conv = Conv1d::build(&mut store, &mut init, "conv", d_in, 3, d_in)?;
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let shape = store.get(id).shape().to_vec();
        *store.get_mut(id) = uniform(rng, &shape, -0.8, 0.8);
    }
    let xs: Vec<ParamId> = (0..t_len)
        .map(|t| store.insert(format!("x{t}"), uniform(rng, &[b, d_in], -1.0, 1.0)))
        .collect::<Result<_>>()?;
    let e = store.insert("e", uniform(rng, &[b, d_e], -1.0, 1.0))?;
    let h0 = store.insert("h0", uniform(rng, &[b, d_h], -1.0, 1.0))?;
    let c0 = store.insert("c0", uniform(rng, &[b, d_h], -1.0, 1.0))?;
    let lengths = vec![t_len, 2];
    let proj = uniform(rng, &[b, 2 * d_h], -1.0, 1.0);
    let proj_h = uniform(rng, &[b, d_h], -1.0, 1.0);
    let proj_c = uniform(rng, &[b, d_in], -1.0, 1.0);
    check_params(&mut store, None, DEFAULT_EPS, |tape| {
        let x: Vec<Var> = xs.iter().map(|&id| tape.param(id)).collect::<Result<_>>()?;
        let seq = SeqBatch::new(x.clone(), lengths.clone())?;
        match kind {
            LayerKind::Step | LayerKind::ContextStep => {
                let (h, c) = (tape.param(h0)?, tape.param(c0)?);
                let (h, c) = if matches!(kind, LayerKind::Step) {
                    lstm_step(tape, &cell, x[0], h, c)?
                } else {
                    let e = tape.param(e)?;
                    clstm_step(tape, &cell, &inj, x[0], e, h, c)?
                };
                let hc = tape.concat_last(&[h, c])?;
                project(tape, hc, &proj)
            }
            LayerKind::Sequence | LayerKind::NoPeephole => {
                let e = tape.param(e)?;
                let es = vec![e; t_len];
                let run = run_lstm(tape, &cell, &seq, Some((&inj, &es)))?;
                let mid = tape.concat_last(&[run.hidden[1], run.last])?;
                project(tape, mid, &proj)
            }
            LayerKind::Bidirectional => {
                let out = bilstm(tape, &cell, &back, &seq)?;
                project(tape, out, &proj)
            }
            LayerKind::Attention => {
                let run = run_lstm(tape, &cell, &seq, None)?;
                let out = att.pool(tape, &run.hidden, &seq.lengths)?;
                project(tape, out.pooled, &proj_h)
            }
            LayerKind::Conv => {
                let out = conv.apply(tape, &seq)?;
                let sum = tape.add(out.steps[0], out.steps[2])?;
                let sum = tape.add(sum, out.steps[1])?;
                project(tape, sum, &proj_c)
            }
        }
    })
}

/// Tiny dimensions used for whole-model checks.
pub fn tiny_spec(arch: Architecture, seed: u64) -> ModelSpec {
    let features = match arch {
        a if a.content_only() => Features::NONE,
        Architecture::Hlstm => Features {
            history: true,
            ..Features::NONE
        },
        _ => Features::ALL,
    };
    ModelSpec {
        architecture: arch,
        features,
        history_len: 2,
        content_dim: 3,
        pos_dim: 2,
        day_dim: 2,
        period_dim: 2,
        hidden: 4,
        dropout: 0.25,
        attention: arch == Architecture::LstmAtt
            || (matches!(arch, Architecture::Hlstm | Architecture::Hdlstm) && seed % 2 == 1),
        peephole: true,
        conv_width: 3,
        init_std: 0.5,
        seed,
    }
}

pub const TINY_VOCAB: usize = 10;
pub const TINY_POS_VOCAB: usize = 6;

fn random_tweet(rng: &mut ChaCha8Rng) -> Result<EncodedTweet> {
    let n = rng.random_range(1..=4);
    Ok(EncodedTweet {
        tokens: (0..n).map(|_| rng.random_range(0..TINY_VOCAB)).collect(),
        pos: (0..n).map(|_| rng.random_range(0..TINY_POS_VOCAB)).collect(),
        time: TimeCode::new(rng.random_range(0..7), rng.random_range(0..4))?,
    })
}

/// Checks every parameter of a tiny randomly initialized model on a random
/// labelled batch, with dropout active under a fixed mask.
pub fn check_architecture(arch: Architecture, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let spec = tiny_spec(arch, seed);
    let mut model = Model::build(spec.clone(), TINY_VOCAB, TINY_POS_VOCAB)?;
    let ids: Vec<ParamId> = model.store.ids().collect();
    for id in ids {
        let shape = model.store.get(id).shape().to_vec();
        *model.store.get_mut(id) = uniform(&mut rng, &shape, -0.6, 0.6);
    }
    let batch: Vec<EncodedExample> = (0..3)
        .map(|_| {
            let h = rng.random_range(0..=spec.history_len);
            Ok(EncodedExample {
                target: random_tweet(&mut rng)?,
                history: (0..h).map(|_| random_tweet(&mut rng)).collect::<Result<_>>()?,
                label: Some(rng.random_range(0..NUM_CLASSES)),
            })
        })
        .collect::<Result<_>>()?;
    let weights: Vec<f64> = (0..NUM_CLASSES).map(|_| rng.random_range(0.5..1.5)).collect();
    let refs: Vec<&EncodedExample> = batch.iter().collect();
    let mask_seed: u64 = rng.random();
    let Model { net, store, .. } = &mut model;
    check_params(store, None, DEFAULT_EPS, |tape| {
        let mut drop_rng = ChaCha8Rng::seed_from_u64(mask_seed);
        net.loss(tape, &refs, &weights, Some(&mut drop_rng))
    })
}

/// Runs `instances` seeded checks of every op and every architecture,
/// returning one `(name, merged report)` per entry.
pub fn run_suite(instances: u64, base_seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    if instances == 0 {
        return Err(Error::Config("gradient suite needs at least one instance".into()));
    }
    let mut out = Vec::new();
    for case in op_cases() {
        let mut merged = GradCheckReport::default();
        for i in 0..instances {
            merged.merge(&case.run(base_seed.wrapping_add(i))?);
        }
        out.push((format!("op:{}", case.name), merged));
    }
    for arch in Architecture::ALL {
        let mut merged = GradCheckReport::default();
        for i in 0..instances {
            merged.merge(&check_architecture(arch, base_seed.wrapping_add(i))?);
        }
        out.push((format!("model:{arch}"), merged));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        assert!(relative_error(1e-12, 0.0) < 1e-5);
    }

    #[test]
    fn detects_wrong_gradient() {
        // a deliberately broken "loss" whose tape gradient is ignored:
        // the tape sees a constant, finite differences see x^2
        let x = Tensor::new(vec![1], vec![1.5]).unwrap();
        let r = check_inputs(&[x], DEFAULT_EPS, |tape, v| {
            let c = tape.constant(tape.value(v[0]).clone());
            let sq = tape.mul(c, c)?;
            tape.sum(sq)
        })
        .unwrap();
        assert!(!r.passes(1e-4));
    }

    #[test]
    fn every_op_passes_on_a_few_seeds() {
        for case in op_cases() {
            for seed in 0..3 {
                let r = case.run(seed).unwrap();
                assert!(r.checked > 0, "{}", case.name);
                assert!(r.passes(1e-4), "{} seed {seed}: {r:?}", case.name);
            }
        }
    }

    #[test]
    fn every_architecture_passes() {
        for arch in Architecture::ALL {
            for seed in 0..2 {
                let r = check_architecture(arch, seed).unwrap();
                assert!(r.passes(1e-4), "{arch} seed {seed}: {r:?}");
            }
        }
    }
}
