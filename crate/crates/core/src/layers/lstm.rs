//! Peephole LSTM cell with optional gate-level context injection.
//!
//! One step computes
//!
//! ```text
//! i = σ(W_xi·x + W_hi·h + w_ci ⊙ c_prev + b_i [+ W_Ei·E])
//! f = σ(W_xf·x + W_hf·h + w_cf ⊙ c_prev + b_f [+ W_Ef·E])
//! c = f ⊙ c_prev + i ⊙ tanh(W_xc·x + b_c [+ W_Ec·E])
//! o = σ(W_xo·x + W_ho·h + w_co ⊙ c + b_o [+ W_Eo·E])
//! h = o ⊙ tanh(c)
//! ```
//!
//! with row-vector inputs, so `W·x` is stored as `x · W` with `W: [d_in, d_h]`.
//! The candidate has no recurrent term. Injection terms are added last,
//! which makes a zero context bit-identical to the plain cell.

use crate::error::{dim_err, Error, Result};
use crate::params::{Initializer, ParamId, ParameterStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::{zeros, SeqBatch};

/// Parameters of one LSTM cell.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub d_in: usize,
    pub d_h: usize,
    w_xi: ParamId,
    w_xf: ParamId,
    w_xc: ParamId,
    w_xo: ParamId,
    w_hi: ParamId,
    w_hf: ParamId,
    w_ho: ParamId,
    peephole: Option<[ParamId; 3]>,
    b_i: ParamId,
    b_f: ParamId,
    b_c: ParamId,
    b_o: ParamId,
}

impl LstmCell {
    pub fn build(
        store: &mut ParameterStore,
        init: &mut Initializer,
        prefix: &str,
        d_in: usize,
        d_h: usize,
        peephole: bool,
    ) -> Result<Self> {
        if d_in == 0 || d_h == 0 {
            return Err(Error::Config(format!("lstm {prefix} with d_in={d_in} d_h={d_h}")));
        }
        let mut mat = |name: &str, r: usize, c: usize| {
            store.insert(format!("{prefix}.{name}"), init.gaussian(&[r, c]))
        };
        let w_xi = mat("W_xi", d_in, d_h)?;
        let w_xf = mat("W_xf", d_in, d_h)?;
        let w_xc = mat("W_xc", d_in, d_h)?;
        let w_xo = mat("W_xo", d_in, d_h)?;
        let w_hi = mat("W_hi", d_h, d_h)?;
        let w_hf = mat("W_hf", d_h, d_h)?;
        let w_ho = mat("W_ho", d_h, d_h)?;
        let peephole = if peephole {
            let mut vec = |name: &str| store.insert(format!("{prefix}.{name}"), init.gaussian(&[d_h]));
            Some([vec("w_ci")?, vec("w_cf")?, vec("w_co")?])
        } else {
            None
        };
        let mut bias = |name: &str| store.insert(format!("{prefix}.{name}"), Tensor::zeros(&[d_h]));
        Ok(Self {
            d_in,
            d_h,
            w_xi,
            w_xf,
            w_xc,
            w_xo,
            w_hi,
            w_hf,
            w_ho,
            peephole,
            b_i: bias("b_i")?,
            b_f: bias("b_f")?,
            b_c: bias("b_c")?,
            b_o: bias("b_o")?,
        })
    }

    pub fn has_peephole(&self) -> bool {
        self.peephole.is_some()
    }

    pub fn bias_ids(&self) -> [ParamId; 4] {
        [self.b_i, self.b_f, self.b_c, self.b_o]
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut v = vec![
            self.w_xi, self.w_xf, self.w_xc, self.w_xo, self.w_hi, self.w_hf, self.w_ho,
        ];
        v.extend(self.peephole.iter().flatten());
        v.extend(self.bias_ids());
        v
    }
}

/// Context-to-gate matrices of a contextual LSTM, one per gate.
#[derive(Debug, Clone)]
pub struct ContextInjection {
    pub d_e: usize,
    w_ei: ParamId,
    w_ef: ParamId,
    w_ec: ParamId,
    w_eo: ParamId,
}

impl ContextInjection {
    pub fn build(
        store: &mut ParameterStore,
        init: &mut Initializer,
        prefix: &str,
        d_e: usize,
        d_h: usize,
    ) -> Result<Self> {
        if d_e == 0 {
            return Err(Error::Config(format!("context injection {prefix} with d_e=0")));
        }
        let mut mat = |name: &str| store.insert(format!("{prefix}.{name}"), init.gaussian(&[d_e, d_h]));
        Ok(Self {
            d_e,
            w_ei: mat("W_Ei")?,
            w_ef: mat("W_Ef")?,
            w_ec: mat("W_Ec")?,
            w_eo: mat("W_Eo")?,
        })
    }

    pub fn param_ids(&self) -> [ParamId; 4] {
        [self.w_ei, self.w_ef, self.w_ec, self.w_eo]
    }
}

fn check_rows(tape: &Tape<'_>, v: Var, width: usize, what: &str) -> Result<usize> {
    let (r, c) = tape.value(v).dims2()?;
    if c != width {
        return dim_err(format!(
            "{what} has shape {:?}, expected width {width}",
            tape.value(v).shape()
        ));
    }
    Ok(r)
}

fn step_impl(
    tape: &mut Tape<'_>,
    p: &LstmCell,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    ctx: Option<(&ContextInjection, Var)>,
) -> Result<(Var, Var)> {
    let b = check_rows(tape, x, p.d_in, "input")?;
    for (v, what) in [(h_prev, "previous hidden state"), (c_prev, "previous cell state")] {
        if check_rows(tape, v, p.d_h, what)? != b {
            return dim_err(format!("{what} rows differ from input rows {b}"));
        }
    }
    if let Some((inj, e)) = ctx {
        if check_rows(tape, e, inj.d_e, "context")? != b {
            return dim_err(format!("context rows differ from input rows {b}"));
        }
    }
    let inject = |tape: &mut Tape<'_>, pre: Var, w: fn(&ContextInjection) -> ParamId| -> Result<Var> {
        match ctx {
            Some((inj, e)) => {
                let w = tape.param(w(inj))?;
                let term = tape.matmul(e, w)?;
                tape.add(pre, term)
            }
            None => Ok(pre),
        }
    };
    let gate = |tape: &mut Tape<'_>, wx: ParamId, wh: ParamId, peep: Option<(ParamId, Var)>, bias: ParamId| -> Result<Var> {
        let wx = tape.param(wx)?;
        let wh = tape.param(wh)?;
        let xa = tape.matmul(x, wx)?;
        let ha = tape.matmul(h_prev, wh)?;
        let mut pre = tape.add(xa, ha)?;
        if let Some((w, c)) = peep {
            let w = tape.param(w)?;
            let pc = tape.mul_row(c, w)?;
            pre = tape.add(pre, pc)?;
        }
        let bias = tape.param(bias)?;
        tape.add(pre, bias)
    };
    let peep = p.peephole;

    let pre_i = gate(tape, p.w_xi, p.w_hi, peep.map(|w| (w[0], c_prev)), p.b_i)?;
    let pre_i = inject(tape, pre_i, |c| c.w_ei)?;
    let i = tape.sigmoid(pre_i)?;

    let pre_f = gate(tape, p.w_xf, p.w_hf, peep.map(|w| (w[1], c_prev)), p.b_f)?;
    let pre_f = inject(tape, pre_f, |c| c.w_ef)?;
    let f = tape.sigmoid(pre_f)?;

    let w_xc = tape.param(p.w_xc)?;
    let b_c = tape.param(p.b_c)?;
    let xc = tape.matmul(x, w_xc)?;
    let pre_g = tape.add(xc, b_c)?;
    let pre_g = inject(tape, pre_g, |c| c.w_ec)?;
    let g = tape.tanh(pre_g)?;

    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;

    let pre_o = gate(tape, p.w_xo, p.w_ho, peep.map(|w| (w[2], c)), p.b_o)?;
    let pre_o = inject(tape, pre_o, |c| c.w_eo)?;
    let o = tape.sigmoid(pre_o)?;

    let tc = tape.tanh(c)?;
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

/// One step of the plain cell. Returns `(h_t, c_t)`.
pub fn lstm_step(
    tape: &mut Tape<'_>,
    p: &LstmCell,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    step_impl(tape, p, x, h_prev, c_prev, None)
}

/// One step of the contextual cell: `E` enters every gate through its own matrix.
pub fn clstm_step(
    tape: &mut Tape<'_>,
    p: &LstmCell,
    inj: &ContextInjection,
    x: Var,
    e: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    step_impl(tape, p, x, h_prev, c_prev, Some((inj, e)))
}

/// Hidden states of a full run.
#[derive(Debug, Clone)]
pub struct LstmRun {
    /// `hidden[t]` is `[batch, d_h]`; padded rows repeat their last valid state.
    pub hidden: Vec<Var>,
    /// State after each row's last valid step.
    pub last: Var,
}

/// Runs the cell over a batch from a zero initial state.
///
/// `ctx`, when given, supplies one `[batch, d_E]` context per step.
pub fn run_lstm(
    tape: &mut Tape<'_>,
    p: &LstmCell,
    seq: &SeqBatch,
    ctx: Option<(&ContextInjection, &[Var])>,
) -> Result<LstmRun> {
    if seq.is_empty() {
        return Err(Error::EmptySequence("lstm over zero steps".into()));
    }
    if let Some((_, es)) = ctx {
        if es.len() != seq.len() {
            return dim_err(format!("{} context steps for {} inputs", es.len(), seq.len()));
        }
    }
    let b = seq.batch();
    let mut h = zeros(tape, b, p.d_h);
    let mut c = zeros(tape, b, p.d_h);
    let mut hidden = Vec::with_capacity(seq.len());
    for (t, &x) in seq.steps.iter().enumerate() {
        let (h_new, c_new) = step_impl(tape, p, x, h, c, ctx.map(|(inj, es)| (inj, es[t])))?;
        match seq.mask(t) {
            None => {
                h = h_new;
                c = c_new;
            }
            Some(mask) => {
                h = tape.blend(h_new, h, mask.clone())?;
                c = tape.blend(c_new, c, mask)?;
            }
        }
        hidden.push(h);
    }
    Ok(LstmRun { hidden, last: h })
}

/// Final forward state concatenated with the final state of a run over the
/// reversed sequence: `[batch, 2 * d_h]`.
pub fn bilstm(tape: &mut Tape<'_>, fwd: &LstmCell, bwd: &LstmCell, seq: &SeqBatch) -> Result<Var> {
    let f = run_lstm(tape, fwd, seq, None)?;
    let rev = seq.reversed(tape)?;
    let r = run_lstm(tape, bwd, &rev, None)?;
    tape.concat_last(&[f.last, r.last])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::sigmoid;

    fn cell(store: &mut ParameterStore, seed: u64, d_in: usize, d_h: usize) -> LstmCell {
        let mut init = Initializer::new(seed, 0.5).unwrap();
        LstmCell::build(store, &mut init, "cell", d_in, d_h, true).unwrap()
    }

    fn randomize_biases(store: &mut ParameterStore, c: &LstmCell, seed: u64) {
        let mut init = Initializer::new(seed, 0.5).unwrap();
        for id in c.bias_ids() {
            let t = store.get_mut(id);
            for v in t.values_mut() {
                *v = init.sample();
            }
        }
    }

    /// Straight-line single-step evaluator over plain slices.
    fn oracle_step(
        store: &ParameterStore,
        prefix: &str,
        x: &[f64],
        h: &[f64],
        c: &[f64],
        ctx: Option<(&str, &[f64])>,
    ) -> (Vec<f64>, Vec<f64>) {
        let p = |n: &str| store.by_name(&format!("{prefix}.{n}")).unwrap().values().to_vec();
        let d_h = h.len();
        let vm = |v: &[f64], w: &[f64]| -> Vec<f64> {
            (0..d_h)
                .map(|j| v.iter().enumerate().map(|(k, vk)| vk * w[k * d_h + j]).sum())
                .collect()
        };
        let inj = |gate: &str| -> Vec<f64> {
            match ctx {
                Some((pre, e)) => {
                    let w = store.by_name(&format!("{pre}.W_E{gate}")).unwrap().values().to_vec();
                    vm(e, &w)
                }
                None => vec![0.0; d_h],
            }
        };
        let (wci, wcf, wco) = (p("w_ci"), p("w_cf"), p("w_co"));
        let xi = vm(x, &p("W_xi"));
        let hi = vm(h, &p("W_hi"));
        let ei = inj("i");
        let bi = p("b_i");
        let i: Vec<f64> = (0..d_h).map(|j| sigmoid(xi[j] + hi[j] + wci[j] * c[j] + bi[j] + ei[j])).collect();
        let xf = vm(x, &p("W_xf"));
        let hf = vm(h, &p("W_hf"));
        let ef = inj("f");
        let bf = p("b_f");
        let f: Vec<f64> = (0..d_h).map(|j| sigmoid(xf[j] + hf[j] + wcf[j] * c[j] + bf[j] + ef[j])).collect();
        let xc = vm(x, &p("W_xc"));
        let ec = inj("c");
        let bc = p("b_c");
        let c_new: Vec<f64> = (0..d_h)
            .map(|j| f[j] * c[j] + i[j] * (xc[j] + bc[j] + ec[j]).tanh())
            .collect();
        let xo = vm(x, &p("W_xo"));
        let ho = vm(h, &p("W_ho"));
        let eo = inj("o");
        let bo = p("b_o");
        let h_new = (0..d_h)
            .map(|j| sigmoid(xo[j] + ho[j] + wco[j] * c_new[j] + bo[j] + eo[j]) * c_new[j].tanh())
            .collect();
        (h_new, c_new)
    }

    fn row(tape: &mut Tape<'_>, v: &[f64]) -> Var {
        tape.constant(Tensor::new(vec![1, v.len()], v.to_vec()).unwrap())
    }

    #[test]
    fn zero_everything_gives_zero_state() {
        let mut store = ParameterStore::new();
        let mut init = Initializer::new(0, 1e-300).unwrap();
        let c = LstmCell::build(&mut store, &mut init, "z", 3, 2, true).unwrap();
        for id in c.param_ids() {
            store.get_mut(id).values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::with_params(&store);
        let x = zeros(&mut tape, 1, 3);
        let h = zeros(&mut tape, 1, 2);
        let (h1, c1) = lstm_step(&mut tape, &c, x, h, h).unwrap();
        assert_eq!(tape.values(h1), &[0.0, 0.0]);
        assert_eq!(tape.values(c1), &[0.0, 0.0]);
    }

    #[test]
    fn saturated_gates_pass_memory_through() {
        let mut store = ParameterStore::new();
        let c = cell(&mut store, 3, 3, 2);
        store.by_name_mut("cell.b_f").unwrap().values_mut().fill(50.0);
        store.by_name_mut("cell.b_i").unwrap().values_mut().fill(-50.0);
        store.by_name_mut("cell.w_ci").unwrap().values_mut().fill(0.0);
        store.by_name_mut("cell.w_cf").unwrap().values_mut().fill(0.0);
        let mut tape = Tape::with_params(&store);
        let x = zeros(&mut tape, 1, 3);
        let h = zeros(&mut tape, 1, 2);
        let cp = row(&mut tape, &[0.7, -0.4]);
        let (_, c1) = lstm_step(&mut tape, &c, x, h, cp).unwrap();
        for (a, b) in tape.values(c1).iter().zip([0.7, -0.4]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn step_matches_straight_line_oracle() {
        let mut store = ParameterStore::new();
        let c = cell(&mut store, 5, 3, 2);
        randomize_biases(&mut store, &c, 6);
        let (x, h, cp) = ([0.3, -1.2, 0.8], [0.1, -0.5], [0.9, 0.2]);
        let (eh, ec) = oracle_step(&store, "cell", &x, &h, &cp, None);
        let mut tape = Tape::with_params(&store);
        let (xv, hv, cv) = (row(&mut tape, &x), row(&mut tape, &h), row(&mut tape, &cp));
        let (h1, c1) = lstm_step(&mut tape, &c, xv, hv, cv).unwrap();
        for (a, b) in tape.values(h1).iter().zip(&eh).chain(tape.values(c1).iter().zip(&ec)) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn contextual_step_matches_oracle_and_collapses() {
        let mut store = ParameterStore::new();
        let c = cell(&mut store, 8, 3, 2);
        randomize_biases(&mut store, &c, 9);
        let mut init = Initializer::new(10, 0.5).unwrap();
        let inj = ContextInjection::build(&mut store, &mut init, "ctx", 4, 2).unwrap();
        let (x, h, cp, e) = ([0.3, -1.2, 0.8], [0.1, -0.5], [0.9, 0.2], [0.5, -0.1, 0.3, 1.1]);
        let (eh, ec) = oracle_step(&store, "cell", &x, &h, &cp, Some(("ctx", &e)));
        let mut tape = Tape::with_params(&store);
        let (xv, hv, cv, ev) = (row(&mut tape, &x), row(&mut tape, &h), row(&mut tape, &cp), row(&mut tape, &e));
        let (h1, c1) = clstm_step(&mut tape, &c, &inj, xv, ev, hv, cv).unwrap();
        for (a, b) in tape.values(h1).iter().zip(&eh).chain(tape.values(c1).iter().zip(&ec)) {
            assert!((a - b).abs() < 1e-12);
        }
        let zero_e = zeros(&mut tape, 1, 4);
        let (hz, cz) = clstm_step(&mut tape, &c, &inj, xv, zero_e, hv, cv).unwrap();
        let (hp, cpl) = lstm_step(&mut tape, &c, xv, hv, cv).unwrap();
        assert_eq!(tape.values(hz), tape.values(hp));
        assert_eq!(tape.values(cz), tape.values(cpl));
    }

    #[test]
    fn zero_injection_matrices_collapse() {
        let mut store = ParameterStore::new();
        let c = cell(&mut store, 8, 3, 2);
        let mut init = Initializer::new(10, 0.5).unwrap();
        let inj = ContextInjection::build(&mut store, &mut init, "ctx", 4, 2).unwrap();
        for id in inj.param_ids() {
            store.get_mut(id).values_mut().fill(0.0);
        }
        let mut tape = Tape::with_params(&store);
        let (xv, hv, cv, ev) = (
            row(&mut tape, &[1.0, 2.0, 3.0]),
            row(&mut tape, &[0.1, 0.2]),
            row(&mut tape, &[0.3, 0.4]),
            row(&mut tape, &[5.0, -3.0, 2.0, 1.0]),
        );
        let (hz, _) = clstm_step(&mut tape, &c, &inj, xv, ev, hv, cv).unwrap();
        let (hp, _) = lstm_step(&mut tape, &c, xv, hv, cv).unwrap();
        assert_eq!(tape.values(hz), tape.values(hp));
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let mut store = ParameterStore::new();
        let c = cell(&mut store, 1, 3, 2);
        let mut tape = Tape::with_params(&store);
        let x = zeros(&mut tape, 1, 4);
        let h = zeros(&mut tape, 1, 2);
        assert!(matches!(lstm_step(&mut tape, &c, x, h, h), Err(Error::Dimension(_))));
    }

    fn seq_of(tape: &mut Tape<'_>, rows: &[&[f64]]) -> SeqBatch {
        let steps = rows.iter().map(|r| row(tape, r)).collect();
        SeqBatch::single(steps).unwrap()
    }

    #[test]
    fn run_single_step_and_last_state() {
        let mut store = ParameterStore::new();
        let c = cell(&mut store, 2, 2, 3);
        let mut tape = Tape::with_params(&store);
        let s = seq_of(&mut tape, &[&[0.5, -0.5]]);
        let run = run_lstm(&mut tape, &c, &s, None).unwrap();
        let h0 = zeros(&mut tape, 1, 3);
        let (h1, _) = lstm_step(&mut tape, &c, s.steps[0], h0, h0).unwrap();
        assert_eq!(tape.values(run.last), tape.values(h1));

        let s = seq_of(&mut tape, &[&[0.5, -0.5], &[1.0, 0.0], &[0.0, 2.0]]);
        let run = run_lstm(&mut tape, &c, &s, None).unwrap();
        assert_eq!(run.last, run.hidden[2]);
        let rev = seq_of(&mut tape, &[&[0.0, 2.0], &[1.0, 0.0], &[0.5, -0.5]]);
        let run_rev = run_lstm(&mut tape, &c, &rev, None).unwrap();
        assert_ne!(tape.values(run.last), tape.values(run_rev.last));
    }

    #[test]
    fn padded_rows_match_unpadded_runs() {
        let mut store = ParameterStore::new();
        let c = cell(&mut store, 4, 2, 3);
        let mut tape = Tape::with_params(&store);
        let a = [[0.1, 0.2], [0.3, -0.4], [1.0, 0.5]];
        let b = [[0.7, -0.1], [9.0, 9.0], [9.0, 9.0]];
        let steps: Vec<Var> = (0..3)
            .map(|t| {
                tape.constant(Tensor::from_rows(&[a[t].to_vec(), b[t].to_vec()]).unwrap())
            })
            .collect();
        let batch = SeqBatch::new(steps, vec![3, 1]).unwrap();
        let run = run_lstm(&mut tape, &c, &batch, None).unwrap();
        let sa = seq_of(&mut tape, &[&a[0], &a[1], &a[2]]);
        let sb = seq_of(&mut tape, &[&b[0]]);
        let ra = run_lstm(&mut tape, &c, &sa, None).unwrap();
        let rb = run_lstm(&mut tape, &c, &sb, None).unwrap();
        let last = tape.values(run.last).to_vec();
        assert_eq!(&last[..3], tape.values(ra.last));
        assert_eq!(&last[3..], tape.values(rb.last));
    }

    #[test]
    fn empty_sequence_rejected() {
        assert!(matches!(SeqBatch::single(vec![]), Err(Error::EmptySequence(_))));
    }

    #[test]
    fn constant_context_run_equals_step_chain() {
        let mut store = ParameterStore::new();
        let c = cell(&mut store, 12, 2, 2);
        let mut init = Initializer::new(13, 0.5).unwrap();
        let inj = ContextInjection::build(&mut store, &mut init, "ctx", 3, 2).unwrap();
        let mut tape = Tape::with_params(&store);
        let s = seq_of(&mut tape, &[&[0.5, -0.5], &[0.2, 0.1]]);
        let e = row(&mut tape, &[0.3, 0.3, -0.2]);
        let run = run_lstm(&mut tape, &c, &s, Some((&inj, &[e, e]))).unwrap();
        let z = zeros(&mut tape, 1, 2);
        let (h1, c1) = clstm_step(&mut tape, &c, &inj, s.steps[0], e, z, z).unwrap();
        let (h2, _) = clstm_step(&mut tape, &c, &inj, s.steps[1], e, h1, c1).unwrap();
        assert_eq!(tape.values(run.last), tape.values(h2));
    }

    #[test]
    fn bilstm_palindrome_and_reverse_oracle() {
        let mut store = ParameterStore::new();
        let f = cell(&mut store, 20, 2, 3);
        let mut tape = Tape::with_params(&store);
        let s = seq_of(&mut tape, &[&[0.5, -0.5], &[0.1, 0.9], &[0.5, -0.5]]);
        let out = bilstm(&mut tape, &f, &f, &s).unwrap();
        assert_eq!(tape.value(out).shape(), &[1, 6]);
        let v = tape.values(out);
        assert_eq!(&v[..3], &v[3..]);
        drop(tape);

        let mut both = ParameterStore::new();
        let mut init = Initializer::new(30, 0.5).unwrap();
        let fw = LstmCell::build(&mut both, &mut init, "fw", 2, 3, true).unwrap();
        let bw = LstmCell::build(&mut both, &mut init, "bw", 2, 3, true).unwrap();
        let mut tape = Tape::with_params(&both);
        let s = seq_of(&mut tape, &[&[0.5, -0.5], &[0.1, 0.9], &[-0.3, 0.2]]);
        let out = bilstm(&mut tape, &fw, &bw, &s).unwrap();
        let r = seq_of(&mut tape, &[&[-0.3, 0.2], &[0.1, 0.9], &[0.5, -0.5]]);
        let fr = run_lstm(&mut tape, &fw, &s, None).unwrap();
        let br = run_lstm(&mut tape, &bw, &r, None).unwrap();
        let v = tape.values(out).to_vec();
        assert_eq!(&v[..3], tape.values(fr.last));
        assert_eq!(&v[3..], tape.values(br.last));
    }
}
