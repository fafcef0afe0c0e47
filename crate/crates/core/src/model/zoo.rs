//! The eight architectures, assembled from shared embedding tables, the
//! layer library and a dense softmax head.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::layers::{bilstm, run_lstm, AttentionParams, ContextInjection, Conv1d, LstmCell, SeqBatch};
use crate::params::{Initializer, ParamId, ParameterStore};
use crate::tape::{softmax, Tape, Var};
use crate::tensor::Tensor;

use super::example::{
    ActivityDistribution, EncodedExample, EncodedTweet, DAYS, NUM_CLASSES, PAD_DAY, PAD_PERIOD,
    PERIODS,
};
use super::spec::{Architecture, ModelSpec};
use super::vocab::PAD;

const PAD_SEQ: [usize; 1] = [PAD];
const PREDICT_BATCH: usize = 64;

#[derive(Debug, Clone)]
enum Body {
    Lstm(LstmCell),
    Bilstm {
        fwd: LstmCell,
        bwd: LstmCell,
    },
    Cnnlstm {
        conv: Conv1d,
        cell: LstmCell,
    },
    LstmAtt {
        cell: LstmCell,
        att: AttentionParams,
    },
    Jlstm {
        content: LstmCell,
        pos: Option<LstmCell>,
        time: Option<LstmCell>,
        history: Vec<LstmCell>,
    },
    Clstm {
        cell: LstmCell,
        inj: Option<ContextInjection>,
    },
    Hlstm {
        word: LstmCell,
        sequence: LstmCell,
        att: Option<AttentionParams>,
    },
    Hdlstm {
        cell: LstmCell,
        inj: Option<ContextInjection>,
        att: Option<AttentionParams>,
    },
}

/// Parameter handles and topology of one model; values live in a
/// [`ParameterStore`].
#[derive(Debug, Clone)]
pub struct Network {
    spec: ModelSpec,
    content_emb: ParamId,
    pos_emb: Option<ParamId>,
    day_emb: Option<ParamId>,
    period_emb: Option<ParamId>,
    body: Body,
    flat_dim: usize,
    head_w: ParamId,
    head_b: ParamId,
}

/// A network together with its parameter values.
#[derive(Debug, Clone)]
pub struct Model {
    pub net: Network,
    pub store: ParameterStore,
    pub content_vocab: usize,
    pub pos_vocab: usize,
}

/// One tweet as seen by an encoder; history slots without a real tweet hold
/// a single padding token.
#[derive(Debug, Clone, Copy)]
struct Component<'a> {
    tokens: &'a [usize],
    pos: &'a [usize],
    day: usize,
    period: usize,
}

impl<'a> Component<'a> {
    fn of(t: &'a EncodedTweet) -> Self {
        Self {
            tokens: &t.tokens,
            pos: &t.pos,
            day: t.time.day as usize,
            period: t.time.period as usize,
        }
    }

    fn padding() -> Component<'static> {
        Component {
            tokens: &PAD_SEQ,
            pos: &PAD_SEQ,
            day: PAD_DAY,
            period: PAD_PERIOD,
        }
    }
}

impl Model {
    pub fn build(spec: ModelSpec, content_vocab: usize, pos_vocab: usize) -> Result<Self> {
        spec.validate()?;
        if content_vocab == 0 || pos_vocab == 0 {
            return Err(Error::Config(format!(
                "vocabulary sizes must be positive (content {content_vocab}, pos {pos_vocab})"
            )));
        }
        let mut store = ParameterStore::new();
        let mut init = Initializer::new(spec.seed, spec.init_std)?;
        let net = Network::build(spec, content_vocab, pos_vocab, &mut store, &mut init)?;
        Ok(Self {
            net,
            store,
            content_vocab,
            pos_vocab,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.net.spec
    }

    /// Evaluation-mode distributions, computed in mini-batches.
    pub fn predict(&self, examples: &[EncodedExample]) -> Result<Vec<ActivityDistribution>> {
        let mut out = Vec::with_capacity(examples.len());
        for chunk in examples.chunks(PREDICT_BATCH) {
            let refs: Vec<&EncodedExample> = chunk.iter().collect();
            let mut tape = Tape::with_params(&self.store);
            let logits = self.net.logits(&mut tape, &refs, None)?;
            for row in tape.values(logits).chunks(NUM_CLASSES) {
                out.push(ActivityDistribution::from_slice(&softmax(row))?);
            }
        }
        Ok(out)
    }

    pub fn distribution(&self, ex: &EncodedExample) -> Result<ActivityDistribution> {
        Ok(self.predict(std::slice::from_ref(ex))?[0])
    }
}

impl Network {
    fn build(
        spec: ModelSpec,
        content_vocab: usize,
        pos_vocab: usize,
        store: &mut ParameterStore,
        init: &mut Initializer,
    ) -> Result<Self> {
        let f = spec.features;
        let (d_c, d_h, peep) = (spec.content_dim, spec.hidden, spec.peephole);
        let h = spec.history_slots();
        let content_emb = store.insert("emb.content", init.gaussian(&[content_vocab, d_c]))?;
        let pos_emb = if f.pos {
            Some(store.insert("emb.pos", init.gaussian(&[pos_vocab, spec.pos_dim]))?)
        } else {
            None
        };
        let (day_emb, period_emb) = if f.time {
            (
                Some(store.insert("emb.day", init.gaussian(&[DAYS + 1, spec.day_dim]))?),
                Some(store.insert("emb.period", init.gaussian(&[PERIODS + 1, spec.period_dim]))?),
            )
        } else {
            (None, None)
        };
        let ctx = spec.context_dim();
        let inj = |store: &mut ParameterStore, init: &mut Initializer, prefix: &str| {
            if ctx > 0 {
                ContextInjection::build(store, init, prefix, ctx, d_h).map(Some)
            } else {
                Ok(None)
            }
        };
        let att = |store: &mut ParameterStore, init: &mut Initializer| {
            if spec.attention {
                AttentionParams::build(store, init, "att", d_h, d_h).map(Some)
            } else {
                Ok(None)
            }
        };
        let (body, flat_dim) = match spec.architecture {
            Architecture::Lstm => (Body::Lstm(LstmCell::build(store, init, "lstm", d_c, d_h, peep)?), d_h),
            Architecture::Bilstm => (
                Body::Bilstm {
                    fwd: LstmCell::build(store, init, "lstm.fwd", d_c, d_h, peep)?,
                    bwd: LstmCell::build(store, init, "lstm.bwd", d_c, d_h, peep)?,
                },
                2 * d_h,
            ),
            Architecture::Cnnlstm => (
                Body::Cnnlstm {
                    conv: Conv1d::build(store, init, "conv", d_c, spec.conv_width, d_c)?,
                    cell: LstmCell::build(store, init, "lstm", d_c, d_h, peep)?,
                },
                d_h,
            ),
            Architecture::LstmAtt => (
                Body::LstmAtt {
                    cell: LstmCell::build(store, init, "lstm", d_c, d_h, peep)?,
                    att: AttentionParams::build(store, init, "att", d_h, d_h)?,
                },
                d_h,
            ),
            Architecture::Jlstm => {
                let content = LstmCell::build(store, init, "jlstm.content", d_c, d_h, peep)?;
                let pos = if f.pos {
                    Some(LstmCell::build(store, init, "jlstm.pos", spec.pos_dim, d_h, peep)?)
                } else {
                    None
                };
                let time = if f.time {
                    Some(LstmCell::build(store, init, "jlstm.time", spec.time_dim(), d_h, peep)?)
                } else {
                    None
                };
                let history = (0..h)
                    .map(|k| LstmCell::build(store, init, &format!("jlstm.history{k}"), d_c, d_h, peep))
                    .collect::<Result<Vec<_>>>()?;
                let streams = 1 + usize::from(f.pos) + usize::from(f.time) + h;
                (
                    Body::Jlstm {
                        content,
                        pos,
                        time,
                        history,
                    },
                    streams * d_h,
                )
            }
            Architecture::Clstm => (
                Body::Clstm {
                    cell: LstmCell::build(store, init, "clstm", d_c * (1 + h), d_h, peep)?,
                    inj: inj(store, init, "clstm")?,
                },
                d_h,
            ),
            Architecture::Hlstm => (
                Body::Hlstm {
                    word: LstmCell::build(store, init, "hlstm.word", d_c, d_h, peep)?,
                    sequence: LstmCell::build(store, init, "hlstm.sequence", d_h, d_h, peep)?,
                    att: att(store, init)?,
                },
                d_h,
            ),
            Architecture::Hdlstm => (
                Body::Hdlstm {
                    cell: LstmCell::build(store, init, "hdlstm", d_c, d_h, peep)?,
                    inj: inj(store, init, "hdlstm")?,
                    att: att(store, init)?,
                },
                (1 + h) * d_h,
            ),
        };
        let head_w = store.insert("out.W", init.gaussian(&[flat_dim, NUM_CLASSES]))?;
        let head_b = store.insert("out.b", Tensor::zeros(&[NUM_CLASSES]))?;
        Ok(Self {
            spec,
            content_emb,
            pos_emb,
            day_emb,
            period_emb,
            body,
            flat_dim,
            head_w,
            head_b,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Width of the vector fed to the output layer.
    pub fn flat_dim(&self) -> usize {
        self.flat_dim
    }

    /// Ids of the POS, day and period embedding tables.
    pub fn context_table_ids(&self) -> Vec<ParamId> {
        [self.pos_emb, self.day_emb, self.period_emb].into_iter().flatten().collect()
    }

    /// Ids of the gate-injection matrices, if any.
    pub fn injection_ids(&self) -> Vec<ParamId> {
        match &self.body {
            Body::Clstm { inj, .. } | Body::Hdlstm { inj, .. } => {
                inj.iter().flat_map(|i| i.param_ids()).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Unnormalized class scores `[batch, 6]`. Dropout is active only when
    /// `rng` is given.
    pub fn logits(
        &self,
        tape: &mut Tape<'_>,
        batch: &[&EncodedExample],
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        let flat = self.flat(tape, batch)?;
        let x = match rng {
            Some(r) => tape.dropout(flat, self.spec.dropout, true, r)?,
            None => flat,
        };
        let w = tape.param(self.head_w)?;
        let b = tape.param(self.head_b)?;
        let y = tape.matmul(x, w)?;
        tape.add(y, b)
    }

    /// Class-weighted cross-entropy over a labelled batch.
    pub fn loss(
        &self,
        tape: &mut Tape<'_>,
        batch: &[&EncodedExample],
        class_weights: &[f64],
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        let targets = batch
            .iter()
            .map(|ex| ex.label.ok_or_else(|| Error::Data("example without a label".into())))
            .collect::<Result<Vec<_>>>()?;
        let logits = self.logits(tape, batch, rng)?;
        tape.softmax_cross_entropy(logits, &targets, class_weights)
    }

    /// Flat representation `[batch, flat_dim]` before dropout and the head.
    pub fn flat(&self, tape: &mut Tape<'_>, batch: &[&EncodedExample]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::EmptySequence("empty batch".into()));
        }
        for ex in batch {
            self.check_example(ex)?;
        }
        match &self.body {
            Body::Lstm(cell) => self.forward_lstm(tape, batch, cell),
            Body::Bilstm { fwd, bwd } => self.forward_bilstm(tape, batch, fwd, bwd),
            Body::Cnnlstm { conv, cell } => self.forward_cnnlstm(tape, batch, conv, cell),
            Body::LstmAtt { cell, att } => self.forward_lstm_att(tape, batch, cell, att),
            Body::Jlstm {
                content,
                pos,
                time,
                history,
            } => self.forward_jlstm(tape, batch, content, pos.as_ref(), time.as_ref(), history),
            Body::Clstm { cell, inj } => self.forward_clstm(tape, batch, cell, inj.as_ref()),
            Body::Hlstm {
                word,
                sequence,
                att,
            } => self.forward_hlstm(tape, batch, word, sequence, att.as_ref()),
            Body::Hdlstm { cell, inj, att } => {
                let comps = self.hd_components(tape, batch, cell, inj.as_ref(), att.as_ref())?;
                tape.concat_last(&comps)
            }
        }
    }

    fn check_example(&self, ex: &EncodedExample) -> Result<()> {
        let f = self.spec.features;
        let check = |t: &EncodedTweet, what: &str| -> Result<()> {
            if t.tokens.is_empty() {
                return Err(Error::EmptySequence(format!("{what} has no tokens")));
            }
            if f.pos && t.pos.len() != t.tokens.len() {
                return Err(Error::Encoding(format!(
                    "{what} has {} POS ids for {} tokens",
                    t.pos.len(),
                    t.tokens.len()
                )));
            }
            Ok(())
        };
        check(&ex.target, "target tweet")?;
        if f.history {
            if ex.history.len() > self.spec.history_len {
                return Err(Error::Encoding(format!(
                    "{} history tweets for a window of {}",
                    ex.history.len(),
                    self.spec.history_len
                )));
            }
            for t in &ex.history {
                check(t, "history tweet")?;
            }
        }
        Ok(())
    }

    /// History slots oldest first, front-padded to the window length.
    fn slots<'a>(&self, ex: &'a EncodedExample) -> Vec<Component<'a>> {
        let h = self.spec.history_slots();
        let real = &ex.history[ex.history.len().saturating_sub(h)..];
        let mut out = vec![Component::padding(); h - real.len().min(h)];
        out.extend(real.iter().map(Component::of));
        out
    }

    fn embed(&self, tape: &mut Tape<'_>, table: ParamId, seqs: &[&[usize]], len: usize) -> Result<Vec<Var>> {
        let table = tape.param(table)?;
        (0..len)
            .map(|t| {
                let idx: Vec<usize> = seqs.iter().map(|s| s.get(t).copied().unwrap_or(PAD)).collect();
                tape.embedding(table, &idx)
            })
            .collect()
    }

    fn token_batch(&self, tape: &mut Tape<'_>, comps: &[Component<'_>]) -> Result<SeqBatch> {
        let seqs: Vec<&[usize]> = comps.iter().map(|c| c.tokens).collect();
        let lengths: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        let len = lengths.iter().copied().max().unwrap_or(0);
        let steps = self.embed(tape, self.content_emb, &seqs, len)?;
        SeqBatch::new(steps, lengths)
    }

    fn time_embedding(&self, tape: &mut Tape<'_>, comps: &[Component<'_>]) -> Result<Var> {
        let (Some(day), Some(period)) = (self.day_emb, self.period_emb) else {
            return Err(Error::Encoding("time feature is not enabled".into()));
        };
        let days: Vec<usize> = comps.iter().map(|c| c.day).collect();
        let periods: Vec<usize> = comps.iter().map(|c| c.period).collect();
        let day = tape.param(day)?;
        let period = tape.param(period)?;
        let d = tape.embedding(day, &days)?;
        let p = tape.embedding(period, &periods)?;
        tape.concat_last(&[d, p])
    }

    /// Per-step gate context `POS ⊕ time` for `len` steps, or `None` when
    /// neither feature is on.
    fn context_steps(&self, tape: &mut Tape<'_>, comps: &[Component<'_>], len: usize) -> Result<Option<Vec<Var>>> {
        let f = self.spec.features;
        if !f.pos && !f.time {
            return Ok(None);
        }
        let pos = match self.pos_emb {
            Some(table) if f.pos => {
                let seqs: Vec<&[usize]> = comps.iter().map(|c| c.pos).collect();
                Some(self.embed(tape, table, &seqs, len)?)
            }
            _ => None,
        };
        let time = if f.time {
            Some(self.time_embedding(tape, comps)?)
        } else {
            None
        };
        (0..len)
            .map(|t| match (&pos, time) {
                (Some(p), Some(tm)) => tape.concat_last(&[p[t], tm]),
                (Some(p), None) => Ok(p[t]),
                (None, Some(tm)) => Ok(tm),
                (None, None) => unreachable!("checked above"),
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn targets<'a>(batch: &[&'a EncodedExample]) -> Vec<Component<'a>> {
        batch.iter().map(|ex| Component::of(&ex.target)).collect()
    }

    fn forward_lstm(&self, tape: &mut Tape<'_>, batch: &[&EncodedExample], cell: &LstmCell) -> Result<Var> {
        let seq = self.token_batch(tape, &Self::targets(batch))?;
        Ok(run_lstm(tape, cell, &seq, None)?.last)
    }

    fn forward_bilstm(
        &self,
        tape: &mut Tape<'_>,
        batch: &[&EncodedExample],
        fwd: &LstmCell,
        bwd: &LstmCell,
    ) -> Result<Var> {
        let seq = self.token_batch(tape, &Self::targets(batch))?;
        bilstm(tape, fwd, bwd, &seq)
    }

    fn forward_cnnlstm(
        &self,
        tape: &mut Tape<'_>,
        batch: &[&EncodedExample],
        conv: &Conv1d,
        cell: &LstmCell,
    ) -> Result<Var> {
        let seq = self.token_batch(tape, &Self::targets(batch))?;
        let feats = conv.apply(tape, &seq)?;
        Ok(run_lstm(tape, cell, &feats, None)?.last)
    }

    fn forward_lstm_att(
        &self,
        tape: &mut Tape<'_>,
        batch: &[&EncodedExample],
        cell: &LstmCell,
        att: &AttentionParams,
    ) -> Result<Var> {
        let seq = self.token_batch(tape, &Self::targets(batch))?;
        let run = run_lstm(tape, cell, &seq, None)?;
        Ok(att.pool(tape, &run.hidden, &seq.lengths)?.pooled)
    }

    fn forward_jlstm(
        &self,
        tape: &mut Tape<'_>,
        batch: &[&EncodedExample],
        content: &LstmCell,
        pos: Option<&LstmCell>,
        time: Option<&LstmCell>,
        history: &[LstmCell],
    ) -> Result<Var> {
        let targets = Self::targets(batch);
        let seq = self.token_batch(tape, &targets)?;
        let mut flats = vec![run_lstm(tape, content, &seq, None)?.last];
        if let (Some(cell), Some(table)) = (pos, self.pos_emb) {
            let seqs: Vec<&[usize]> = targets.iter().map(|c| c.pos).collect();
            let steps = self.embed(tape, table, &seqs, seq.len())?;
            let pseq = SeqBatch::new(steps, seq.lengths.clone())?;
            flats.push(run_lstm(tape, cell, &pseq, None)?.last);
        }
        if let Some(cell) = time {
            let t = self.time_embedding(tape, &targets)?;
            let tseq = SeqBatch::new(vec![t], vec![1; batch.len()])?;
            flats.push(run_lstm(tape, cell, &tseq, None)?.last);
        }
        let slots: Vec<Vec<Component<'_>>> = batch.iter().map(|ex| self.slots(ex)).collect();
        for (k, cell) in history.iter().enumerate() {
            let comps: Vec<Component<'_>> = slots.iter().map(|s| s[k]).collect();
            let hseq = self.token_batch(tape, &comps)?;
            flats.push(run_lstm(tape, cell, &hseq, None)?.last);
        }
        if flats.len() == 1 {
            Ok(flats[0])
        } else {
            tape.concat_last(&flats)
        }
    }

    fn forward_clstm(
        &self,
        tape: &mut Tape<'_>,
        batch: &[&EncodedExample],
        cell: &LstmCell,
        inj: Option<&ContextInjection>,
    ) -> Result<Var> {
        let targets = Self::targets(batch);
        let slots: Vec<Vec<Component<'_>>> = batch.iter().map(|ex| self.slots(ex)).collect();
        let lengths: Vec<usize> = targets
            .iter()
            .zip(&slots)
            .map(|(t, s)| s.iter().map(|c| c.tokens.len()).fold(t.tokens.len(), usize::max))
            .collect();
        let len = lengths.iter().copied().max().unwrap_or(0);
        let mut streams = vec![self.embed(
            tape,
            self.content_emb,
            &targets.iter().map(|c| c.tokens).collect::<Vec<_>>(),
            len,
        )?];
        for k in 0..self.spec.history_slots() {
            let seqs: Vec<&[usize]> = slots.iter().map(|s| s[k].tokens).collect();
            streams.push(self.embed(tape, self.content_emb, &seqs, len)?);
        }
        let steps = (0..len)
            .map(|t| {
                if streams.len() == 1 {
                    Ok(streams[0][t])
                } else {
                    let parts: Vec<Var> = streams.iter().map(|s| s[t]).collect();
                    tape.concat_last(&parts)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let seq = SeqBatch::new(steps, lengths)?;
        let ctx = self.context_steps(tape, &targets, len)?;
        let run = match (inj, &ctx) {
            (Some(inj), Some(es)) => run_lstm(tape, cell, &seq, Some((inj, es)))?,
            _ => run_lstm(tape, cell, &seq, None)?,
        };
        Ok(run.last)
    }

    fn forward_hlstm(
        &self,
        tape: &mut Tape<'_>,
        batch: &[&EncodedExample],
        word: &LstmCell,
        sequence: &LstmCell,
        att: Option<&AttentionParams>,
    ) -> Result<Var> {
        let b = batch.len();
        let (comps, n_slots) = self.chronological(batch);
        let seq = self.token_batch(tape, &comps)?;
        let tweets = run_lstm(tape, word, &seq, None)?.last;
        let steps = (0..n_slots)
            .map(|s| {
                let picks: Vec<(usize, usize)> = (0..b).map(|r| (0, s * b + r)).collect();
                tape.pick_rows(&[tweets], &picks)
            })
            .collect::<Result<Vec<_>>>()?;
        let upper = SeqBatch::new(steps, vec![n_slots; b])?;
        let run = run_lstm(tape, sequence, &upper, None)?;
        match att {
            Some(att) => Ok(att.pool(tape, &run.hidden, &upper.lengths)?.pooled),
            None => Ok(run.last),
        }
    }

    /// All components of the batch, slot-major: history slots oldest first,
    /// then the targets. Returns the components and the slot count.
    fn chronological<'a>(&self, batch: &[&'a EncodedExample]) -> (Vec<Component<'a>>, usize) {
        let h = self.spec.history_slots();
        let slots: Vec<Vec<Component<'a>>> = batch.iter().map(|ex| self.slots(ex)).collect();
        let mut comps = Vec::with_capacity((h + 1) * batch.len());
        for k in 0..h {
            comps.extend(slots.iter().map(|s| s[k]));
        }
        comps.extend(Self::targets(batch));
        (comps, h + 1)
    }

    /// One `[batch, d_h]` vector per component, chronological.
    fn hd_components(
        &self,
        tape: &mut Tape<'_>,
        batch: &[&EncodedExample],
        cell: &LstmCell,
        inj: Option<&ContextInjection>,
        att: Option<&AttentionParams>,
    ) -> Result<Vec<Var>> {
        let b = batch.len();
        let (comps, n_slots) = self.chronological(batch);
        let seq = self.token_batch(tape, &comps)?;
        let ctx = self.context_steps(tape, &comps, seq.len())?;
        let run = match (inj, &ctx) {
            (Some(inj), Some(es)) => run_lstm(tape, cell, &seq, Some((inj, es)))?,
            _ => run_lstm(tape, cell, &seq, None)?,
        };
        let flat = match att {
            Some(att) => att.pool(tape, &run.hidden, &seq.lengths)?.pooled,
            None => run.last,
        };
        (0..n_slots)
            .map(|s| {
                let picks: Vec<(usize, usize)> = (0..b).map(|r| (0, s * b + r)).collect();
                tape.pick_rows(&[flat], &picks)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::example::TimeCode;
    use crate::model::spec::Features;
    use crate::tape::sigmoid;

    const V: usize = 10;
    const P: usize = 6;

    fn tiny(arch: Architecture, features: Features, history_len: usize) -> ModelSpec {
        ModelSpec {
            architecture: arch,
            features,
            history_len,
            content_dim: 3,
            pos_dim: 2,
            day_dim: 2,
            period_dim: 2,
            hidden: 4,
            dropout: 0.2,
            attention: arch == Architecture::LstmAtt,
            peephole: true,
            conv_width: 3,
            init_std: 0.5,
            seed: 11,
        }
    }

    fn tweet(rng: &mut ChaCha8Rng) -> EncodedTweet {
        let n = rng.random_range(1..5);
        EncodedTweet {
            tokens: (0..n).map(|_| rng.random_range(0..V)).collect(),
            pos: (0..n).map(|_| rng.random_range(0..P)).collect(),
            time: TimeCode::new(rng.random_range(0..7), rng.random_range(0..4)).unwrap(),
        }
    }

    fn example(rng: &mut ChaCha8Rng, max_hist: usize) -> EncodedExample {
        let h = rng.random_range(0..=max_hist);
        EncodedExample {
            target: tweet(rng),
            history: (0..h).map(|_| tweet(rng)).collect(),
            label: Some(rng.random_range(0..NUM_CLASSES)),
        }
    }

    fn all_specs() -> Vec<ModelSpec> {
        let none = Features::NONE;
        let hist = Features {
            history: true,
            ..none
        };
        let mut v: Vec<ModelSpec> = [
            Architecture::Lstm,
            Architecture::Bilstm,
            Architecture::Cnnlstm,
            Architecture::LstmAtt,
        ]
        .into_iter()
        .map(|a| tiny(a, none, 2))
        .collect();
        v.push(tiny(Architecture::Jlstm, Features::ALL, 2));
        v.push(tiny(Architecture::Clstm, Features::ALL, 2));
        v.push(tiny(Architecture::Hlstm, hist, 2));
        let mut hd = tiny(Architecture::Hdlstm, Features::ALL, 2);
        hd.attention = true;
        v.push(hd);
        v
    }

    #[test]
    fn every_architecture_emits_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for spec in all_specs() {
            let m = Model::build(spec.clone(), V, P).unwrap();
            let exs: Vec<EncodedExample> = (0..7).map(|_| example(&mut rng, 3.min(spec.history_len))).collect();
            let batch = m.predict(&exs).unwrap();
            for (ex, d) in exs.iter().zip(&batch) {
                assert!(d.is_valid(1e-9), "{}", spec.architecture);
                // batched and single-example evaluation agree
                let single = m.distribution(ex).unwrap();
                for (a, b) in single.0.iter().zip(d.0) {
                    assert!((a - b).abs() < 1e-12, "{}", spec.architecture);
                }
            }
        }
    }

    #[test]
    fn untrained_default_model_is_near_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut spec = ModelSpec::new(Architecture::Lstm, Features::NONE);
        spec.content_dim = 50;
        spec.hidden = 50;
        let m = Model::build(spec, 100, 5).unwrap();
        for _ in 0..10 {
            let n = rng.random_range(1..15);
            let ex = EncodedExample {
                target: EncodedTweet {
                    tokens: (0..n).map(|_| rng.random_range(0..100)).collect(),
                    pos: vec![],
                    time: TimeCode::new(0, 0).unwrap(),
                },
                history: vec![],
                label: None,
            };
            let d = m.distribution(&ex).unwrap();
            assert!(d.0.iter().all(|&p| p < 0.5));
        }
    }

    #[test]
    fn lstm_parameter_count_closed_form() {
        let spec = ModelSpec::new(Architecture::Lstm, Features::NONE);
        let vocab = 1000;
        let m = Model::build(spec, vocab, 5).unwrap();
        let (d_in, d_h) = (200, 200);
        let cell = 4 * d_in * d_h + 3 * d_h * d_h + 3 * d_h + 4 * d_h;
        let head = d_h * 6 + 6;
        assert_eq!(m.store.num_values(), vocab * 200 + cell + head);
    }

    #[test]
    fn shapes_at_default_dims() {
        let j = Model::build(ModelSpec::new(Architecture::Jlstm, Features::ALL), 20, 5).unwrap();
        assert_eq!(j.net.flat_dim(), 200 + 200 + 200 + 5 * 200);
        let hd = Model::build(ModelSpec::new(Architecture::Hdlstm, Features::ALL), 20, 5).unwrap();
        assert_eq!(hd.net.flat_dim(), 6 * 200);
        let names: Vec<&str> = hd.store.iter().map(|(_, n, _)| n).filter(|n| n.starts_with("emb.")).collect();
        assert_eq!(names, ["emb.content", "emb.pos", "emb.day", "emb.period"]);
        let fused = |f: Features| {
            let s = ModelSpec::new(Architecture::Clstm, f);
            s.content_dim * (1 + s.history_slots()) + s.context_dim()
        };
        assert_eq!(
            fused(Features {
                pos: true,
                time: true,
                history: false
            }),
            200 + 20 + 40
        );
    }

    #[test]
    fn builds_are_deterministic() {
        for spec in all_specs() {
            let a = Model::build(spec.clone(), V, P).unwrap();
            let b = Model::build(spec, V, P).unwrap();
            assert_eq!(a.store.to_records(), b.store.to_records());
        }
    }

    #[test]
    fn empty_content_and_missing_pos_rejected() {
        let m = Model::build(tiny(Architecture::Clstm, Features::ALL, 2), V, P).unwrap();
        let mut ex = example(&mut ChaCha8Rng::seed_from_u64(1), 2);
        ex.target.pos.clear();
        assert!(matches!(m.distribution(&ex), Err(Error::Encoding(_))));
        ex.target.tokens.clear();
        assert!(matches!(m.distribution(&ex), Err(Error::EmptySequence(_))));
        let l = Model::build(tiny(Architecture::Lstm, Features::NONE, 0), V, P).unwrap();
        assert!(matches!(l.distribution(&ex), Err(Error::EmptySequence(_))));
    }

    #[test]
    fn jlstm_without_context_is_lstm() {
        let mut jspec = tiny(Architecture::Jlstm, Features::NONE, 2);
        jspec.seed = 3;
        let j = Model::build(jspec, V, P).unwrap();
        let mut l = Model::build(tiny(Architecture::Lstm, Features::NONE, 2), V, P).unwrap();
        assert_eq!(j.net.flat_dim(), l.net.flat_dim());
        for (_, name, t) in j.store.iter() {
            let lname = name.replace("jlstm.content", "lstm");
            l.store.by_name_mut(&lname).unwrap().values_mut().copy_from_slice(t.values());
        }
        let ex = example(&mut ChaCha8Rng::seed_from_u64(2), 2);
        assert_eq!(j.distribution(&ex).unwrap(), l.distribution(&ex).unwrap());
    }

    #[test]
    fn history_order_matters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let hist = Features {
            history: true,
            ..Features::NONE
        };
        for spec in [
            tiny(Architecture::Jlstm, Features::ALL, 3),
            tiny(Architecture::Hlstm, hist, 3),
            tiny(Architecture::Hdlstm, Features::ALL, 3),
        ] {
            let m = Model::build(spec, V, P).unwrap();
            let mut ex = example(&mut rng, 0);
            ex.history = (0..3).map(|_| tweet(&mut rng)).collect();
            let a = m.distribution(&ex).unwrap();
            ex.history.reverse();
            let b = m.distribution(&ex).unwrap();
            assert_ne!(a, b, "{}", m.spec().architecture);
        }
    }

    #[test]
    fn hlstm_zero_history_is_one_sequence_step() {
        let hist = Features {
            history: true,
            ..Features::NONE
        };
        let m = Model::build(tiny(Architecture::Hlstm, hist, 0), V, P).unwrap();
        let ex = example(&mut ChaCha8Rng::seed_from_u64(6), 0);
        let mut tape = Tape::with_params(&m.store);
        let flat = m.net.flat(&mut tape, &[&ex]).unwrap();
        let Body::Hlstm { word, sequence, .. } = &m.net.body else { unreachable!() };
        let seq = m.net.token_batch(&mut tape, &[Component::of(&ex.target)]).unwrap();
        let rep = run_lstm(&mut tape, word, &seq, None).unwrap().last;
        let upper = SeqBatch::single(vec![rep]).unwrap();
        let expect = run_lstm(&mut tape, sequence, &upper, None).unwrap().last;
        assert_eq!(tape.values(flat), tape.values(expect));
    }

    #[test]
    fn shared_encoders_give_identical_component_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = Model::build(tiny(Architecture::Hdlstm, Features::ALL, 2), V, P).unwrap();
        let t = tweet(&mut rng);
        let ex = EncodedExample {
            target: t.clone(),
            history: vec![tweet(&mut rng), t],
            label: None,
        };
        let Body::Hdlstm { cell, inj, att } = &m.net.body else { unreachable!() };
        let mut tape = Tape::with_params(&m.store);
        let comps = m.net.hd_components(&mut tape, &[&ex], cell, inj.as_ref(), att.as_ref()).unwrap();
        assert_eq!(comps.len(), 3);
        assert_eq!(tape.values(comps[1]), tape.values(comps[2]));
        assert_ne!(tape.values(comps[0]), tape.values(comps[2]));

        let hist = Features {
            history: true,
            ..Features::NONE
        };
        let h = Model::build(tiny(Architecture::Hlstm, hist, 2), V, P).unwrap();
        let Body::Hlstm { word, .. } = &h.net.body else { unreachable!() };
        let mut tape = Tape::with_params(&h.store);
        let (comps, _) = h.net.chronological(&[&ex]);
        let seq = h.net.token_batch(&mut tape, &comps).unwrap();
        let reps = run_lstm(&mut tape, word, &seq, None).unwrap().last;
        let v = tape.values(reps);
        assert_eq!(&v[4..8], &v[8..12]);
    }

    #[test]
    fn hdlstm_without_history_matches_clstm() {
        let f = Features {
            pos: true,
            time: true,
            history: false,
        };
        let hd = Model::build(tiny(Architecture::Hdlstm, f, 0), V, P).unwrap();
        let mut c = Model::build(tiny(Architecture::Clstm, f, 0), V, P).unwrap();
        for (_, name, t) in hd.store.iter() {
            let cname = name.replace("hdlstm", "clstm");
            c.store.by_name_mut(&cname).unwrap().values_mut().copy_from_slice(t.values());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let ex = example(&mut rng, 0);
            assert_eq!(hd.distribution(&ex).unwrap(), c.distribution(&ex).unwrap());
        }
    }

    fn zero_context(m: &mut Model) {
        let ids: Vec<ParamId> = m
            .net
            .context_table_ids()
            .into_iter()
            .chain(m.net.injection_ids())
            .collect();
        for id in ids {
            m.store.get_mut(id).values_mut().fill(0.0);
        }
    }

    #[test]
    fn zeroed_context_ignores_pos_and_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for arch in [Architecture::Clstm, Architecture::Hdlstm] {
            let mut m = Model::build(tiny(arch, Features::ALL, 2), V, P).unwrap();
            zero_context(&mut m);
            for _ in 0..10 {
                let ex = example(&mut rng, 2);
                let base = m.distribution(&ex).unwrap();
                let mut alt = ex.clone();
                for t in std::iter::once(&mut alt.target).chain(alt.history.iter_mut()) {
                    t.pos = t.pos.iter().map(|_| rng.random_range(0..P)).collect();
                    t.time = TimeCode::new(rng.random_range(0..7), rng.random_range(0..4)).unwrap();
                }
                assert_eq!(m.distribution(&alt).unwrap(), base, "{arch}");
            }
        }
    }

    #[test]
    fn zeroed_clstm_equals_width_matched_lstm() {
        let f = Features {
            pos: true,
            time: true,
            history: false,
        };
        let mut c = Model::build(tiny(Architecture::Clstm, f, 0), V, P).unwrap();
        zero_context(&mut c);
        let mut l = Model::build(tiny(Architecture::Lstm, Features::NONE, 0), V, P).unwrap();
        for (_, name, t) in l.store.clone().iter() {
            let cname = name.replacen("lstm", "clstm", 1);
            let src = c.store.by_name(&cname).unwrap().values().to_vec();
            l.store.by_name_mut(name).unwrap().values_mut().copy_from_slice(&src);
            assert_eq!(t.shape(), c.store.by_name(&cname).unwrap().shape());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..5 {
            let ex = example(&mut rng, 0);
            assert_eq!(c.distribution(&ex).unwrap(), l.distribution(&ex).unwrap());
        }
    }

    /// Row-vector matrix product against a row-major `[rows, cols]` slice.
    fn vecmat(x: &[f64], w: &[f64], cols: usize) -> Vec<f64> {
        (0..cols)
            .map(|j| x.iter().enumerate().map(|(i, xi)| xi * w[i * cols + j]).sum())
            .collect()
    }

    /// Builds the fused step vectors by hand and runs a plain peephole LSTM
    /// whose input matrices are the cell's input and context matrices
    /// stacked, then the head and a softmax.
    fn clstm_oracle(store: &ParameterStore, ex: &EncodedExample, h_len: usize) -> Vec<f64> {
        let get = |n: &str| store.by_name(n).unwrap().values().to_vec();
        let row = |table: &str, width: usize, i: usize| get(table)[i * width..(i + 1) * width].to_vec();
        let (dc, dh) = (3, 4);
        let mut slots: Vec<Vec<usize>> = vec![vec![PAD]; h_len - ex.history.len()];
        slots.extend(ex.history.iter().map(|t| t.tokens.clone()));
        let len = slots.iter().map(Vec::len).fold(ex.target.tokens.len(), usize::max);
        let at = |s: &[usize], t: usize| s.get(t).copied().unwrap_or(PAD);
        let stack = |x: &str, e: &str| {
            let mut w = get(&format!("clstm.{x}"));
            w.extend(get(&format!("clstm.{e}")));
            w
        };
        let (wi, wf, wc, wo) = (
            stack("W_xi", "W_Ei"),
            stack("W_xf", "W_Ef"),
            stack("W_xc", "W_Ec"),
            stack("W_xo", "W_Eo"),
        );
        let (hi, hf, ho) = (get("clstm.W_hi"), get("clstm.W_hf"), get("clstm.W_ho"));
        let (pi, pf, po) = (get("clstm.w_ci"), get("clstm.w_cf"), get("clstm.w_co"));
        let (bi, bf, bc, bo) = (get("clstm.b_i"), get("clstm.b_f"), get("clstm.b_c"), get("clstm.b_o"));
        let mut h = vec![0.0; dh];
        let mut c = vec![0.0; dh];
        for t in 0..len {
            let mut z = row("emb.content", dc, at(&ex.target.tokens, t));
            for s in &slots {
                z.extend(row("emb.content", dc, at(s, t)));
            }
            z.extend(row("emb.pos", 2, at(&ex.target.pos, t)));
            z.extend(row("emb.day", 2, ex.target.time.day as usize));
            z.extend(row("emb.period", 2, ex.target.time.period as usize));
            let (zi, zf, zc, zo) = (vecmat(&z, &wi, dh), vecmat(&z, &wf, dh), vecmat(&z, &wc, dh), vecmat(&z, &wo, dh));
            let (ri, rf, ro) = (vecmat(&h, &hi, dh), vecmat(&h, &hf, dh), vecmat(&h, &ho, dh));
            let mut nc = vec![0.0; dh];
            let mut nh = vec![0.0; dh];
            for k in 0..dh {
                let i = sigmoid(zi[k] + ri[k] + pi[k] * c[k] + bi[k]);
                let f = sigmoid(zf[k] + rf[k] + pf[k] * c[k] + bf[k]);
                nc[k] = f * c[k] + i * (zc[k] + bc[k]).tanh();
                let o = sigmoid(zo[k] + ro[k] + po[k] * nc[k] + bo[k]);
                nh[k] = o * nc[k].tanh();
            }
            h = nh;
            c = nc;
        }
        let logits: Vec<f64> = vecmat(&h, &get("out.W"), 6)
            .iter()
            .zip(get("out.b"))
            .map(|(a, b)| a + b)
            .collect();
        softmax(&logits)
    }

    #[test]
    fn clstm_matches_fused_sequence_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut m = Model::build(tiny(Architecture::Clstm, Features::ALL, 2), V, P).unwrap();
        for id in m.store.ids().collect::<Vec<_>>() {
            for v in m.store.get_mut(id).values_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        for _ in 0..20 {
            let ex = example(&mut rng, 2);
            let got = m.distribution(&ex).unwrap();
            let want = clstm_oracle(&m.store, &ex, 2);
            for (a, b) in got.0.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_same_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let ex = example(&mut rng, 2);
        for spec in all_specs() {
            let a = Model::build(spec.clone(), V, P).unwrap().distribution(&ex).unwrap();
            let b = Model::build(spec, V, P).unwrap().distribution(&ex).unwrap();
            assert_eq!(a, b);
        }
    }
}
