//! Self-describing JSON checkpoints: spec, vocabularies and every parameter
//! as a `(name, shape, values)` triple. Floats are written with shortest
//! round-trip formatting, so a reload is bit-exact.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamRecord;

use super::spec::ModelSpec;
use super::vocab::Vocab;
use super::zoo::Model;

pub const FORMAT: &str = "tweetact-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: ModelSpec,
    pub content_vocab: Vocab,
    pub pos_vocab: Vocab,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, content_vocab: &Vocab, pos_vocab: &Vocab) -> Result<Self> {
        if content_vocab.len() != model.content_vocab || pos_vocab.len() != model.pos_vocab {
            return Err(Error::Compatibility(format!(
                "model built for vocabularies of {}/{} entries, got {}/{}",
                model.content_vocab,
                model.pos_vocab,
                content_vocab.len(),
                pos_vocab.len()
            )));
        }
        let params = model.store.to_records();
        if let Some(p) = params.iter().find(|p| p.values.iter().any(|v| !v.is_finite())) {
            return Err(Error::State(format!("parameter {} holds non-finite values", p.name)));
        }
        Ok(Self {
            format: FORMAT.into(),
            version: VERSION,
            spec: model.spec().clone(),
            content_vocab: content_vocab.clone(),
            pos_vocab: pos_vocab.clone(),
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        if ck.format != FORMAT {
            return Err(Error::Load(format!("{}: not a checkpoint ({:?})", path.display(), ck.format)));
        }
        if ck.version != VERSION {
            return Err(Error::Compatibility(format!(
                "checkpoint version {} but this build reads {VERSION}",
                ck.version
            )));
        }
        Ok(ck)
    }

    /// Rebuilds the model and overwrites every parameter with the stored
    /// values; names and shapes must match the spec's layout exactly.
    pub fn to_model(&self) -> Result<Model> {
        let mut model = Model::build(self.spec.clone(), self.content_vocab.len(), self.pos_vocab.len())?;
        if model.store.len() != self.params.len() {
            return Err(Error::Compatibility(format!(
                "spec defines {} parameters, checkpoint holds {}",
                model.store.len(),
                self.params.len()
            )));
        }
        for rec in &self.params {
            let t = model
                .store
                .by_name_mut(&rec.name)
                .ok_or_else(|| Error::Compatibility(format!("unexpected parameter {}", rec.name)))?;
            if t.shape() != rec.shape.as_slice() || rec.values.len() != t.len() {
                return Err(Error::Compatibility(format!(
                    "parameter {} has shape {:?}, checkpoint says {:?}",
                    rec.name,
                    t.shape(),
                    rec.shape
                )));
            }
            t.values_mut().copy_from_slice(&rec.values);
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::spec::{Architecture, Features};

    fn small() -> (Model, Vocab, Vocab) {
        let mut spec = ModelSpec::new(Architecture::Hdlstm, Features::ALL);
        spec.content_dim = 4;
        spec.hidden = 3;
        spec.history_len = 2;
        let cv = Vocab::build("a b c d".split(' '), 1);
        let pv = Vocab::build("N V".split(' '), 1);
        let mut m = Model::build(spec, cv.len(), pv.len()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for id in m.store.ids().collect::<Vec<_>>() {
            for v in m.store.get_mut(id).values_mut() {
                *v = rng.random::<f64>() * 1e-3 - 3.3e-4;
            }
        }
        (m, cv, pv)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (m, cv, pv) = small();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        Checkpoint::from_model(&m, &cv, &pv).unwrap().save(&path).unwrap();
        let ck = Checkpoint::load(&path).unwrap();
        let back = ck.to_model().unwrap();
        for ((_, _, a), (_, _, b)) in m.store.iter().zip(back.store.iter()) {
            let ab: Vec<u64> = a.values().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.values().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        assert_eq!(ck.content_vocab, cv);
    }

    #[test]
    fn mismatched_layout_rejected() {
        let (m, cv, pv) = small();
        let mut ck = Checkpoint::from_model(&m, &cv, &pv).unwrap();
        ck.params[0].shape = vec![1, 1];
        assert!(matches!(ck.to_model(), Err(Error::Compatibility(_))));
        let mut ck = Checkpoint::from_model(&m, &cv, &pv).unwrap();
        ck.params.pop();
        assert!(matches!(ck.to_model(), Err(Error::Compatibility(_))));
        let mut ck = Checkpoint::from_model(&m, &cv, &pv).unwrap();
        ck.spec.hidden = 5;
        assert!(matches!(ck.to_model(), Err(Error::Compatibility(_))));
        assert!(Checkpoint::from_model(&m, &cv, &Vocab::new()).is_err());
    }

    #[test]
    fn garbage_file_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        std::fs::write(&path, "{\"format\": 3}").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Load(_))));
    }
}
