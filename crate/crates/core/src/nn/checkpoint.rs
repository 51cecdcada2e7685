//! Model checkpoint container.
//!
//! A checkpoint is one JSON object:
//!
//! ```text
//! {
//!   "format": "unitstyle-checkpoint",
//!   "version": 1,
//!   "kind": "duration" | "pitch",
//!   "dtype": "f32" | "f64",            // precision the model was trained in
//!   "arch": { ...architecture hyperparameters... },
//!   "speakers": [{"id": str, "mean_hz": f64, "std_hz": f64}, ...],   // table order = embedding row
//!   "params": [{"name": str, "shape": [usize...], "data": [f64...]}, ...]
//! }
//! ```
//!
//! Parameter values are written as `f64` regardless of `dtype`; an `f32`
//! value survives the widening exactly, so reloading is lossless.
//! Parameter order and names are those of a freshly constructed model of the
//! same architecture and are validated on load.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Params;
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "unitstyle-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeakerRecord {
    pub id: String,
    pub mean_hz: f64,
    pub std_hz: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub dtype: String,
    pub arch: serde_json::Value,
    pub speakers: Vec<SpeakerRecord>,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn new<T: Scalar>(
        kind: &str,
        arch: serde_json::Value,
        speakers: Vec<SpeakerRecord>,
        params: &Params<T>,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            kind: kind.to_string(),
            dtype: T::DTYPE.to_string(),
            arch,
            speakers,
            params: params
                .entries()
                .iter()
                .map(|e| ParamRecord {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    data: e.data.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        }
    }

    /// Copies stored values into `skeleton`, which must have identical names and shapes.
    pub fn fill_params<T: Scalar>(&self, skeleton: &mut Params<T>) -> Result<()> {
        if self.params.len() != skeleton.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                skeleton.len(),
                self.params.len()
            )));
        }
        for (rec, e) in self.params.iter().zip(skeleton.entries_mut()) {
            if rec.name != e.name || rec.shape != e.shape || rec.data.len() != e.data.len() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` {:?} does not match expected `{}` {:?}",
                    rec.name, rec.shape, e.name, e.shape
                )));
            }
            if let Some(bad) = rec.data.iter().find(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("parameter `{}` holds {bad}", rec.name)));
            }
            for (d, &v) in e.data.iter_mut().zip(&rec.data) {
                *d = T::lit(v);
            }
        }
        Ok(())
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        if self.kind != kind {
            return Err(Error::Checkpoint(format!(
                "expected a `{kind}` checkpoint, found `{}`",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&s)
    }
}
