use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NnError, ParamBuffer};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Structured-text dump of named, shaped tensors plus free-form metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_params<T: Scalar>(kind: &str, meta: serde_json::Value, p: &ParamBuffer<T>) -> Self {
        let tensors = p
            .specs()
            .iter()
            .map(|s| NamedTensor {
                name: s.name.clone(),
                shape: s.shape.clone(),
                data: p.data[s.range()].iter().map(|x| x.as_f64()).collect(),
            })
            .collect();
        Self { version: CHECKPOINT_VERSION, kind: kind.to_string(), meta, tensors }
    }

    /// Copies every tensor into `p`, which must already have the matching layout.
    pub fn load_into<T: Scalar>(&self, kind: &str, p: &mut ParamBuffer<T>) -> Result<(), NnError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(NnError::Version(self.version));
        }
        if self.kind != kind {
            return Err(NnError::Kind { expected: kind.into(), found: self.kind.clone() });
        }
        for spec in p.specs().to_vec() {
            let t = self
                .tensors
                .iter()
                .find(|t| t.name == spec.name)
                .ok_or_else(|| NnError::UnknownTensor(spec.name.clone()))?;
            if t.shape != spec.shape || t.data.len() != spec.len() {
                return Err(NnError::ShapeMismatch { name: spec.name.clone(), expected: spec.shape, found: t.shape.clone() });
            }
            if t.data.iter().any(|x| !x.is_finite()) {
                return Err(NnError::NonFinite(spec.name.clone()));
            }
            for (d, &s) in p.data[spec.range()].iter_mut().zip(&t.data) {
                *d = T::lit(s);
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
