//! Model persistence as versioned JSON.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::layers::{LayerKind, LayerSpec};
use super::model::{check_layers, CompanderModel, LayerParams, Normalization, Role, TrainingMeta};
use crate::error::{Error, Result};

pub const MODEL_VERSION: u32 = 1;

/// Weights of one layer; `kernel` is row-major over `kernel_shape = [out, in, k]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerWeightsFile {
    kernel_shape: [usize; 3],
    kernel: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    role: Role,
    segment_len: usize,
    normalization: Normalization,
    norm_scale: f64,
    layers: Vec<LayerSpec>,
    weights: Vec<LayerWeightsFile>,
    output_gain: Option<f64>,
    training_meta: TrainingMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<AdamState>,
}

pub fn model_to_json(model: &CompanderModel) -> Result<String> {
    let file = ModelFile {
        version: MODEL_VERSION,
        role: model.role,
        segment_len: model.segment_len,
        normalization: model.normalization,
        norm_scale: model.norm_scale,
        layers: model.layers.clone(),
        weights: model
            .layers
            .iter()
            .zip(&model.weights)
            .map(|(l, w)| LayerWeightsFile {
                kernel_shape: l.kernel_shape(),
                kernel: w.kernel.clone(),
                bias: w.bias.clone(),
            })
            .collect(),
        output_gain: model.output_gain,
        training_meta: model.training_meta.clone(),
        optimizer: model.optimizer.clone(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::format("model", e.to_string()))
}

pub fn model_from_json(text: &str) -> Result<CompanderModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::format("model", e.to_string()))?;
    if file.version != MODEL_VERSION {
        return Err(Error::format(
            "version",
            format!("unsupported model version {} (expected {MODEL_VERSION})", file.version),
        ));
    }
    check_layers(&file.layers, file.segment_len).map_err(|e| Error::format("layers", e.to_string()))?;
    if file.weights.len() != file.layers.len() {
        return Err(Error::format(
            "weights",
            format!("{} weight entries for {} layers", file.weights.len(), file.layers.len()),
        ));
    }
    let mut weights = Vec::with_capacity(file.layers.len());
    for (i, (l, w)) in file.layers.iter().zip(file.weights).enumerate() {
        let (nk, nb) = match l.kind {
            LayerKind::Conv1d => (l.out_channels * l.in_channels * l.kernel_len, l.out_channels),
            LayerKind::Upsample => (0, 0),
        };
        if w.kernel_shape != l.kernel_shape() || w.kernel.len() != nk {
            return Err(Error::format(
                format!("weights[{i}].kernel"),
                format!("layer {i}: expected {nk} values of shape {:?}, got {}", l.kernel_shape(), w.kernel.len()),
            ));
        }
        if w.bias.len() != nb {
            return Err(Error::format(
                format!("weights[{i}].bias"),
                format!("layer {i}: expected {nb} values, got {}", w.bias.len()),
            ));
        }
        if w.kernel.iter().chain(&w.bias).any(|v| !v.is_finite()) {
            return Err(Error::format(format!("weights[{i}]"), format!("layer {i}: non-finite weight")));
        }
        weights.push(LayerParams { kernel: w.kernel, bias: w.bias });
    }
    if !(file.norm_scale.is_finite() && file.norm_scale > 0.0) {
        return Err(Error::format("norm_scale", "must be positive"));
    }
    let model = CompanderModel {
        role: file.role,
        segment_len: file.segment_len,
        normalization: file.normalization,
        norm_scale: file.norm_scale,
        layers: file.layers,
        weights,
        output_gain: file.output_gain,
        training_meta: file.training_meta,
        optimizer: file.optimizer,
    };
    if let Some(st) = &model.optimizer {
        if !st.matches(&model) {
            return Err(Error::format("optimizer", "state does not match the model layout"));
        }
    }
    Ok(model)
}

pub fn save_model(model: &CompanderModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CompanderModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{build_model, ArchConfig};

    #[test]
    fn roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        for role in [Role::Source, Role::Destination] {
            let m = build_model(role, 64, &ArchConfig::default(), 42).unwrap();
            save_model(&m, &path).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(m, back);
            let x: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).cos() * 1.3).collect();
            assert_eq!(m.forward(&x).unwrap(), back.forward(&x).unwrap());
        }
    }

    #[test]
    fn corrupted_weights_name_the_layer() {
        let m = build_model(Role::Source, 64, &ArchConfig::default(), 1).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&model_to_json(&m).unwrap()).unwrap();
        v["weights"][3]["kernel"].as_array_mut().unwrap().pop();
        match model_from_json(&v.to_string()) {
            Err(Error::Format { field, .. }) => assert_eq!(field, "weights[3].kernel"),
            other => panic!("{other:?}"),
        }
        let mut v: serde_json::Value = serde_json::from_str(&model_to_json(&m).unwrap()).unwrap();
        v["version"] = 9.into();
        assert!(matches!(model_from_json(&v.to_string()), Err(Error::Format { .. })));
    }
}
