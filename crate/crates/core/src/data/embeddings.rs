//! Pretrained vectors in the whitespace-separated text format
//! (`word v1 v2 ...`, optional `count dim` header line).

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Vocab;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl Embeddings {
    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
        Self::parse(BufReader::new(file), path)
    }

    pub fn parse<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut fields = line.split_whitespace();
            let Some(word) = fields.next() else { continue };
            let rest: Vec<&str> = fields.collect();
            if i == 0 && rest.len() == 1 && word.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
                dim = Some(rest[0].parse::<usize>().expect("checked"));
                continue;
            }
            let values = rest
                .iter()
                .map(|v| v.parse::<f64>().map_err(|e| err(i + 1, format!("bad value {v:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if values.is_empty() {
                return Err(err(i + 1, format!("no values for {word:?}")));
            }
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(err(i + 1, format!("{} values, expected {d}", values.len())))
                }
                _ => {}
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(err(i + 1, "non-finite value".into()));
            }
            vectors.entry(word.to_string()).or_insert(values);
        }
        let dim = dim.ok_or_else(|| Error::Load(format!("{}: no vectors", path.display())))?;
        Ok(Self { dim, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors
            .get(word)
            .or_else(|| self.vectors.get(&word.to_lowercase()))
            .map(Vec::as_slice)
    }

    /// Overwrites rows of a `[vocab, dim]` table for every vocabulary entry
    /// that has a vector. Returns the number of rows written.
    pub fn apply(&self, table: &mut Tensor, vocab: &Vocab) -> Result<usize> {
        let (rows, cols) = table.dims2()?;
        if rows != vocab.len() || cols != self.dim {
            return Err(Error::Dimension(format!(
                "embedding table {:?} for vocabulary {} and vectors of width {}",
                table.shape(),
                vocab.len(),
                self.dim
            )));
        }
        let mut hits = 0;
        for (id, tok) in vocab.tokens().iter().enumerate() {
            if let Some(v) = self.get(tok) {
                table.values_mut()[id * cols..(id + 1) * cols].copy_from_slice(v);
                hits += 1;
            }
        }
        Ok(hits)
    }
}
