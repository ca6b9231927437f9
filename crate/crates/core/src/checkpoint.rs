//! Self-describing text checkpoints.
//!
//! A JSON document holding the model config, the dataset id digest and every
//! tensor as a named, shaped, row-major array. Floats are written in shortest
//! round-trip form, so save → load reproduces scores bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{Dims, JifrParams, Model, ModelConfig, ParamId};

const FORMAT: &str = "jifr-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dataset_digest: String,
    config: ModelConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct Document {
    #[serde(flatten)]
    header: Header,
    tensors: Vec<TensorRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub dataset_digest: String,
}

impl Checkpoint {
    pub fn new(model: Model, data: &Dataset) -> Self {
        Checkpoint {
            model,
            dataset_digest: data.id_digest(),
        }
    }

    /// Fails unless the checkpoint was written for `data`.
    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if self.dataset_digest != data.id_digest() {
            return Err(Error::Checkpoint(
                "checkpoint was trained on a different dataset (id digest mismatch)".into(),
            ));
        }
        self.model.check_dataset(data)
    }

    pub fn to_text(&self) -> String {
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            dataset_digest: self.dataset_digest.clone(),
            config: self.model.config.clone(),
        };
        let head = serde_json::to_string_pretty(&header).expect("plain data");
        let mut out = String::with_capacity(head.len() + 64);
        // Re-open the header object to append the tensor list, one tensor per line.
        out.push_str(head.trim_end().trim_end_matches('}').trim_end());
        out.push_str(",\n  \"tensors\": [\n");
        let p = &self.model.params;
        for (n, id) in ParamId::ALL.into_iter().enumerate() {
            let m = p.get(id);
            let record = TensorRecord {
                name: id.name().into(),
                shape: [m.rows(), m.cols()],
                data: m.as_slice().to_vec(),
            };
            out.push_str("    ");
            out.push_str(&serde_json::to_string(&record).expect("finite floats"));
            if n + 1 < ParamId::ALL.len() {
                out.push(',');
            }
            out.push('\n');
        }
        out.push_str("  ]\n}\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let doc: Document =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if doc.header.format != FORMAT || doc.header.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format {} v{}",
                doc.header.format, doc.header.version
            )));
        }
        let config = doc.header.config;
        let mut found: Vec<Option<Matrix>> = vec![None; ParamId::ALL.len()];
        for t in doc.tensors {
            let id = ParamId::from_name(&t.name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown tensor '{}'", t.name)))?;
            let m = Matrix::from_vec(t.shape[0], t.shape[1], t.data).ok_or_else(|| {
                Error::Checkpoint(format!("tensor '{}' data does not match its shape", t.name))
            })?;
            let slot = &mut found[ParamId::ALL.iter().position(|&x| x == id).expect("listed")];
            if slot.replace(m).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor '{}'", t.name)));
            }
        }
        let take = |id: ParamId, found: &mut Vec<Option<Matrix>>| {
            found[ParamId::ALL.iter().position(|&x| x == id).expect("listed")]
                .take()
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{}'", id.name())))
        };
        let user_factors = take(ParamId::UserFactors, &mut found)?;
        let item_factors = take(ParamId::ItemFactors, &mut found)?;
        let visual_projection = take(ParamId::VisualProjection, &mut found)?;
        let dims = Dims {
            num_users: user_factors.rows(),
            num_items: item_factors.rows(),
            feature_dim: visual_projection.cols(),
        };
        let mut params = JifrParams::zeros(&config, dims);
        params.user_factors = user_factors;
        params.item_factors = item_factors;
        params.visual_projection = visual_projection;
        for id in ParamId::ALL {
            if let Some(m) =
                found[ParamId::ALL.iter().position(|&x| x == id).expect("listed")].take()
            {
                *params.get_mut(id) = m;
            } else if !matches!(
                id,
                ParamId::UserFactors | ParamId::ItemFactors | ParamId::VisualProjection
            ) {
                return Err(Error::Checkpoint(format!("missing tensor '{}'", id.name())));
            }
        }
        let model =
            Model::from_parts(config, params).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Checkpoint {
            model,
            dataset_digest: doc.header.dataset_digest,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::data::write_text_file(path, &self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
