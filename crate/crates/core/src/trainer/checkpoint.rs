use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::code_model::{FeatureSpec, Featurizer, Vocab};
use crate::error::{Error, Result};
use crate::policy::{BcConfig, PolicyParams, Slot};

/// Bumped whenever the document layout changes.
pub const FORMAT_VERSION: u32 = 1;

/// Floats are written as the shortest decimal that parses back to the same
/// 64-bit value.
pub const FLOAT_ENCODING: &str = "shortest-roundtrip-decimal";

/// A trained policy together with everything needed to featurize new
/// snippets the same way.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: BcConfig,
    pub vocab: Vocab,
    pub feature_spec: FeatureSpec,
    pub params: PolicyParams,
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format_version: u32,
    float_encoding: String,
    config: BcConfig,
    vocab: Vocab,
    feature_spec: FeatureSpec,
    params: BTreeMap<String, NamedTensor>,
}

impl Checkpoint {
    pub fn featurizer(&self) -> Result<Featurizer> {
        Featurizer::new(&self.feature_spec, &self.vocab)
    }

    pub fn to_json(&self) -> Result<String> {
        let params = self
            .params
            .slots()
            .iter()
            .zip(self.params.tensors())
            .map(|(slot, t)| {
                let named = NamedTensor {
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                };
                (slot.name().to_string(), named)
            })
            .collect();
        let doc = Document {
            format_version: FORMAT_VERSION,
            float_encoding: FLOAT_ENCODING.to_string(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            feature_spec: self.feature_spec.clone(),
            params,
        };
        let mut text = serde_json::to_string_pretty(&doc)
            .map_err(|e| Error::Checkpoint(format!("serialize: {e}")))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // Check the version before the layout so that newer files fail
        // with a version error rather than a schema error.
        let raw: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::Checkpoint(format!("malformed JSON: {e}")))?;
        match raw
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
        {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::Checkpoint(format!(
                    "format_version {v} is not supported (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Checkpoint("missing format_version".into())),
        }
        let doc: Document = serde_json::from_value(raw)
            .map_err(|e| Error::Checkpoint(format!("invalid document: {e}")))?;
        if doc.float_encoding != FLOAT_ENCODING {
            return Err(Error::Checkpoint(format!(
                "unsupported float_encoding `{}`",
                doc.float_encoding
            )));
        }
        doc.config
            .validate()
            .map_err(|e| Error::Checkpoint(format!("config: {e}")))?;

        let input = doc.params.get(Slot::InputProj.name()).ok_or_else(|| {
            Error::Checkpoint(format!("missing parameter `{}`", Slot::InputProj.name()))
        })?;
        let d_feat = *input.shape.first().unwrap_or(&0);
        let dims = doc.config.dims(d_feat);
        let named = doc
            .params
            .into_iter()
            .map(|(name, t)| {
                let tensor = Tensor::new(t.shape, t.data)
                    .map_err(|e| Error::Checkpoint(format!("parameter `{name}`: {e}")))?;
                Ok((name, tensor))
            })
            .collect::<Result<Vec<_>>>()?;
        let params = PolicyParams::from_named(dims, named)?;

        let checkpoint = Checkpoint {
            config: doc.config,
            vocab: doc.vocab,
            feature_spec: doc.feature_spec,
            params,
        };
        if let Ok(f) = checkpoint.featurizer() {
            if f.dim() != d_feat {
                return Err(Error::Checkpoint(format!(
                    "features have width {} but `input_proj` expects {d_feat}",
                    f.dim()
                )));
            }
        }
        Ok(checkpoint)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
