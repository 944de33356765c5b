//! Per-token state features.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Snippet, Vocab};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FeatureSpec {
    /// Indicator of the token's vocabulary id.
    OneHot,
    /// One-hot followed by `line / n_lines` and `col_start / max_cols`.
    OneHotPos,
    /// Hashed counts of the character n-grams of the token text.
    CharNgram { n: usize, buckets: usize },
    /// Rows of a pretrained embedding table keyed by token text.
    External { path: PathBuf },
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Token embedding table read from `<text> <v1> ... <vd>` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    width: usize,
    rows: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut width = None;
        let mut rows = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let field = format!("line {}", i + 1);
            let values = fields
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::data(origin, &field, format!("bad value `{f}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            match width {
                None if values.is_empty() => {
                    return Err(Error::data(origin, &field, "row has no values"))
                }
                None => width = Some(values.len()),
                Some(w) if w != values.len() => {
                    return Err(Error::data(
                        origin,
                        &field,
                        format!("width {} differs from {w}", values.len()),
                    ))
                }
                Some(_) => {}
            }
            if rows.insert(token.to_string(), values).is_some() {
                return Err(Error::data(
                    origin,
                    &field,
                    format!("duplicate entry `{token}`"),
                ));
            }
        }
        let width = width.ok_or_else(|| Error::data(origin, "table", "no rows"))?;
        Ok(EmbeddingTable { width, rows })
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// A [`FeatureSpec`] bound to a vocabulary (and, for external embeddings, a
/// loaded table).
#[derive(Clone, Debug)]
pub struct Featurizer {
    spec: FeatureSpec,
    vocab_size: usize,
    table: Option<EmbeddingTable>,
}

impl Featurizer {
    pub fn new(spec: &FeatureSpec, vocab: &Vocab) -> Result<Self> {
        let table = match spec {
            FeatureSpec::External { path } => Some(EmbeddingTable::load(path)?),
            FeatureSpec::CharNgram { n, buckets } if *n == 0 || *buckets == 0 => {
                return Err(Error::param(
                    "char n-gram features need n >= 1 and buckets >= 1",
                ))
            }
            _ => None,
        };
        Ok(Featurizer {
            spec: spec.clone(),
            vocab_size: vocab.len(),
            table,
        })
    }

    pub fn with_table(spec: &FeatureSpec, vocab: &Vocab, table: EmbeddingTable) -> Self {
        Featurizer {
            spec: spec.clone(),
            vocab_size: vocab.len(),
            table: Some(table),
        }
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        match &self.spec {
            FeatureSpec::OneHot => self.vocab_size,
            FeatureSpec::OneHotPos => self.vocab_size + 2,
            FeatureSpec::CharNgram { buckets, .. } => *buckets,
            FeatureSpec::External { .. } => self.table.as_ref().map_or(0, |t| t.width),
        }
    }

    /// `(n_tokens, dim)` feature matrix; the snippet's vocab ids must
    /// already be assigned from the same vocabulary.
    pub fn featurize(&self, snippet: &Snippet) -> Result<Tensor> {
        let d = self.dim();
        let n = snippet.len();
        let mut data = vec![0.0; n * d];
        let max_cols = snippet.max_cols() as f64;
        let n_lines = snippet.n_lines.max(1) as f64;
        for (i, tok) in snippet.tokens.iter().enumerate() {
            let row = &mut data[i * d..(i + 1) * d];
            match &self.spec {
                FeatureSpec::OneHot | FeatureSpec::OneHotPos => {
                    if tok.vocab_id >= self.vocab_size {
                        return Err(Error::param(format!(
                            "token {i} of `{}` has vocab id {} outside vocabulary of {}",
                            snippet.id, tok.vocab_id, self.vocab_size
                        )));
                    }
                    row[tok.vocab_id] = 1.0;
                    if matches!(self.spec, FeatureSpec::OneHotPos) {
                        row[self.vocab_size] = tok.line as f64 / n_lines;
                        row[self.vocab_size + 1] = tok.col_start as f64 / max_cols;
                    }
                }
                FeatureSpec::CharNgram { n: gram, buckets } => {
                    let chars: Vec<char> = tok.text.chars().collect();
                    if chars.len() < *gram {
                        row[bucket(&chars, *buckets)] += 1.0;
                    } else {
                        for w in chars.windows(*gram) {
                            row[bucket(w, *buckets)] += 1.0;
                        }
                    }
                }
                FeatureSpec::External { .. } => {
                    let table = self.table.as_ref().expect("external table loaded");
                    if let Some(values) = table.rows.get(&tok.text) {
                        row.copy_from_slice(values);
                    }
                }
            }
        }
        Tensor::new(vec![n, d], data)
    }
}

fn bucket(chars: &[char], buckets: usize) -> usize {
    let gram: String = chars.iter().collect();
    (fnv1a64(gram.as_bytes()) % buckets as u64) as usize
}
