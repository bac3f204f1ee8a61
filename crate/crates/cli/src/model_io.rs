//! Network files: JSON with a version tag, the input width, and one entry
//! per layer holding row-major weights, biases, and the activation. Floats
//! carry 17 significant digits, so `load(save(net))` reproduces forward
//! outputs bit-exactly.

use std::fs;
use std::path::Path;

use robnet_core::linalg::Matrix;
use robnet_core::nn::{Activation, Layer, Network};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::to_json_17;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: line {line}, column {column}: {message}")]
    Json { path: String, line: usize, column: usize, message: String },
    #[error("{path}: unsupported model version {got} (this build reads version {MODEL_VERSION})")]
    Version { path: String, got: u32 },
    #[error("{path}: layer {layer}: {reason}")]
    Layer { path: String, layer: usize, reason: String },
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    input_dim: usize,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    /// Row-major: `weights[r * in_dim + c]` feeds output `r` from input `c`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clamp_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clamp_hi: Option<f64>,
}

fn io_err(path: &Path, source: std::io::Error) -> ModelIoError {
    ModelIoError::Io { path: path.display().to_string(), source }
}

pub fn save_model(net: &Network, path: &Path) -> Result<(), ModelIoError> {
    let file = ModelFile {
        version: MODEL_VERSION,
        input_dim: net.input_dim(),
        layers: net
            .layers()
            .iter()
            .map(|layer| {
                let (activation, clamp_lo, clamp_hi) = match layer.activation() {
                    Activation::Relu => ("relu", None, None),
                    Activation::Clamp { lo, hi } => ("clamp", Some(lo), Some(hi)),
                    Activation::Identity => ("identity", None, None),
                };
                LayerFile {
                    weights: layer.weights().data().to_vec(),
                    bias: layer.bias().to_vec(),
                    activation: activation.to_string(),
                    clamp_lo,
                    clamp_hi,
                }
            })
            .collect(),
    };
    fs::write(path, to_json_17(&file)).map_err(|e| io_err(path, e))
}

pub fn load_model(path: &Path) -> Result<Network, ModelIoError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| ModelIoError::Json {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if file.version != MODEL_VERSION {
        return Err(ModelIoError::Version { path: path.display().to_string(), got: file.version });
    }
    let layer_err = |layer: usize, reason: String| ModelIoError::Layer {
        path: path.display().to_string(),
        layer,
        reason,
    };

    let mut layers = Vec::with_capacity(file.layers.len());
    let mut fan_in = file.input_dim;
    for (i, lf) in file.layers.iter().enumerate() {
        let rows = lf.bias.len();
        if rows == 0 {
            return Err(layer_err(i, String::from("empty bias vector")));
        }
        if lf.weights.len() != rows * fan_in {
            return Err(layer_err(
                i,
                format!(
                    "weights field has {} entries, expected {} ({} outputs x {} inputs)",
                    lf.weights.len(),
                    rows * fan_in,
                    rows,
                    fan_in
                ),
            ));
        }
        if lf.weights.iter().chain(&lf.bias).any(|v| !v.is_finite()) {
            return Err(layer_err(i, String::from("weights field contains a non-finite value")));
        }
        let activation = match lf.activation.as_str() {
            "relu" | "identity" => {
                if lf.clamp_lo.is_some() || lf.clamp_hi.is_some() {
                    return Err(layer_err(
                        i,
                        format!("clamp_lo/clamp_hi given for activation \"{}\"", lf.activation),
                    ));
                }
                if lf.activation == "relu" {
                    Activation::Relu
                } else {
                    Activation::Identity
                }
            }
            "clamp" => match (lf.clamp_lo, lf.clamp_hi) {
                (Some(lo), Some(hi)) => Activation::Clamp { lo, hi },
                _ => {
                    return Err(layer_err(
                        i,
                        String::from("activation \"clamp\" needs both clamp_lo and clamp_hi"),
                    ))
                }
            },
            other => return Err(layer_err(i, format!("unknown activation \"{other}\""))),
        };
        let matrix = Matrix::from_flat(rows, fan_in, lf.weights.clone());
        let layer = Layer::new(matrix, lf.bias.clone(), activation)
            .map_err(|e| layer_err(i, e.to_string()))?;
        layers.push(layer);
        fan_in = rows;
    }
    Network::new(layers).map_err(|e| ModelIoError::Layer {
        path: path.display().to_string(),
        layer: file.layers.len(),
        reason: e.to_string(),
    })
}
