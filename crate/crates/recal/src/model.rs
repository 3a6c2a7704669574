//! Versioned JSON model files.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! saved model applies bit-for-bit like the one it was saved from.

use std::path::Path;

use recal_core::{BinningScheme, PiecewiseRecalibrator, Recalibrator, ShiftCorrector, ShiftWeights, WeightProvenance};
use serde::{Deserialize, Serialize};

use crate::error::{RecalError, Result};
use crate::io::write_atomic;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piecewise {
    pub edges: Vec<f64>,
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shift {
    pub w: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_hat: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_hat: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelBody {
    Piecewise {
        piecewise: Piecewise,
    },
    Shift {
        shift: Shift,
    },
    Composite {
        shift: Shift,
        piecewise: Piecewise,
    },
    Constant {
        value: f64,
    },
    Identity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// SHA-256 of the file the model was fitted on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u64,
    pub model: ModelBody,
    #[serde(default)]
    pub metadata: FitMetadata,
}

fn piecewise_part(h: &PiecewiseRecalibrator) -> Piecewise {
    Piecewise {
        edges: h.scheme().edges().to_vec(),
        values: h.values().to_vec(),
        counts: h.counts().to_vec(),
    }
}

fn shift_part(g: &ShiftCorrector) -> Shift {
    let (p_hat, q_hat) = match g.weights().provenance() {
        WeightProvenance::Exact => (None, None),
        WeightProvenance::PlugIn { p_hat, q_hat } => (Some(p_hat.clone()), Some(q_hat.clone())),
    };
    Shift {
        w: g.weights().weights().to_vec(),
        p_hat,
        q_hat,
    }
}

fn build_piecewise(p: &Piecewise) -> recal_core::Result<PiecewiseRecalibrator> {
    let scheme = BinningScheme::from_edges(p.edges.clone())?;
    PiecewiseRecalibrator::from_parts(scheme, p.values.clone(), p.counts.clone())
}

fn build_shift(s: &Shift, path: &Path) -> Result<ShiftCorrector> {
    let weights = match (&s.p_hat, &s.q_hat) {
        (Some(p), Some(q)) => {
            let w = ShiftWeights::plug_in(p.clone(), q.clone())?;
            if w.weights() != s.w.as_slice() {
                return Err(RecalError::Model {
                    path: path.to_path_buf(),
                    message: "w does not equal q_hat / p_hat".into(),
                });
            }
            w
        }
        (None, None) => ShiftWeights::exact(s.w.clone())?,
        _ => {
            return Err(RecalError::Model {
                path: path.to_path_buf(),
                message: "p_hat and q_hat must be given together".into(),
            })
        }
    };
    Ok(ShiftCorrector::new(weights)?)
}

impl ModelFile {
    pub fn from_recalibrator(h: &Recalibrator, metadata: FitMetadata) -> Self {
        let model = match h {
            Recalibrator::PiecewiseConstant(p) => ModelBody::Piecewise {
                piecewise: piecewise_part(p),
            },
            Recalibrator::ShiftCorrector(g) => ModelBody::Shift { shift: shift_part(g) },
            Recalibrator::Composite { outer, inner } => ModelBody::Composite {
                shift: shift_part(outer),
                piecewise: piecewise_part(inner),
            },
            Recalibrator::Constant(c) => ModelBody::Constant { value: *c },
            Recalibrator::Identity => ModelBody::Identity,
        };
        ModelFile {
            format_version: FORMAT_VERSION,
            model,
            metadata,
        }
    }

    /// Rebuilds the recalibrator; `path` is used for error messages only.
    pub fn to_recalibrator(&self, path: &Path) -> Result<Recalibrator> {
        Ok(match &self.model {
            ModelBody::Piecewise { piecewise } => Recalibrator::PiecewiseConstant(build_piecewise(piecewise)?),
            ModelBody::Shift { shift } => Recalibrator::ShiftCorrector(build_shift(shift, path)?),
            ModelBody::Composite { shift, piecewise } => Recalibrator::Composite {
                outer: build_shift(shift, path)?,
                inner: build_piecewise(piecewise)?,
            },
            ModelBody::Constant { value } => {
                if !(0.0..=1.0).contains(value) {
                    return Err(RecalError::Model {
                        path: path.to_path_buf(),
                        message: format!("constant {value} is outside [0, 1]"),
                    });
                }
                Recalibrator::Constant(*value)
            }
            ModelBody::Identity => Recalibrator::Identity,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model files serialize")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let malformed = |e: serde_json::Error| RecalError::Model {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let raw: serde_json::Value = serde_json::from_str(text).map_err(malformed)?;
        let version = raw.get("format_version").and_then(serde_json::Value::as_u64);
        match version {
            Some(FORMAT_VERSION) => serde_json::from_value(raw).map_err(malformed),
            Some(found) => Err(RecalError::VersionMismatch {
                path: path.to_path_buf(),
                found,
                expected: FORMAT_VERSION,
            }),
            None => Err(RecalError::Model {
                path: path.to_path_buf(),
                message: "missing integer `format_version`".into(),
            }),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json();
        write_atomic(path, |w| {
            w.write_all(text.as_bytes())?;
            w.write_all(b"\n")
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| RecalError::io(path, e))?;
        Self::from_json(&text, path)
    }
}

/// Loads a model file and rebuilds its recalibrator.
pub fn load_recalibrator(path: &Path) -> Result<(Recalibrator, ModelFile)> {
    let file = ModelFile::load(path)?;
    let h = file.to_recalibrator(path)?;
    Ok((h, file))
}
