use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::adam::AdamState;
use super::layers::{
    conv1d_backward, conv1d_forward, upsample_backward, upsample_forward, LayerKind, LayerSpec,
};
use crate::error::{Error, Result};
use crate::signal::{peak_abs, SignalSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Source,
    Destination,
}

/// How inputs are brought into the unit interval before the first layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide each segment by its own peak and multiply the output back.
    /// Keeps the model scale-equivariant; no side information is needed
    /// because the peak of the received segment is used at the destination.
    #[default]
    PerSignalPeak,
    /// Divide by the fixed `norm_scale` recorded at training time.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub init_seed: u64,
    pub seed: Option<u64>,
    pub epochs_run: usize,
    pub final_loss: Option<f64>,
    pub loss_floor_cl: Option<f64>,
    #[serde(default)]
    pub loss_history: Vec<f64>,
    #[serde(default)]
    pub clamp_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanderModel {
    pub role: Role,
    pub segment_len: usize,
    pub normalization: Normalization,
    pub norm_scale: f64,
    pub layers: Vec<LayerSpec>,
    pub weights: Vec<LayerParams>,
    /// Learned output gain. When present, the last layer's pre-activation is
    /// divided by its own peak before the activation, then scaled by this gain.
    pub output_gain: Option<f64>,
    pub training_meta: TrainingMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<AdamState>,
}

/// Overrides for [`build_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub layers: Option<Vec<LayerSpec>>,
    pub normalization: Normalization,
    pub norm_scale: f64,
    pub output_gain: Option<f64>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            layers: None,
            normalization: Normalization::PerSignalPeak,
            norm_scale: 1.0,
            output_gain: None,
        }
    }
}

pub const DEFAULT_SOURCE_GAIN: f64 = 0.5;

pub fn default_layers(role: Role) -> Vec<LayerSpec> {
    let last = match role {
        Role::Source => Activation::AfMu,
        Role::Destination => Activation::Linear,
    };
    vec![
        LayerSpec::conv(1, 8, 9, 2, Activation::AfMu),
        LayerSpec::conv(8, 16, 9, 2, Activation::AfMu),
        LayerSpec::upsample(16, 2),
        LayerSpec::conv(16, 8, 9, 1, Activation::AfMu),
        LayerSpec::upsample(8, 2),
        LayerSpec::conv(8, 1, 9, 1, last),
    ]
}

pub(crate) fn check_layers(layers: &[LayerSpec], segment_len: usize) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::param("layers", "at least one layer is required"));
    }
    let mut len = segment_len;
    let mut ch = 1;
    for (i, l) in layers.iter().enumerate() {
        l.validate(i)?;
        if l.in_channels != ch {
            return Err(Error::param(
                "layers",
                format!("layer {i} expects {} channels, previous layer gives {ch}", l.in_channels),
            ));
        }
        len = l.output_len(len).ok_or_else(|| {
            Error::param(
                "segment_len",
                format!("length {len} at layer {i} is not divisible by stride {}", l.stride),
            )
        })?;
        ch = l.out_channels;
    }
    if ch != 1 || len != segment_len {
        return Err(Error::param(
            "layers",
            format!("network maps 1x{segment_len} to {ch}x{len}; must return 1x{segment_len}"),
        ));
    }
    if layers.last().map(|l| l.kind) != Some(LayerKind::Conv1d) {
        return Err(Error::param("layers", "last layer must be a convolution"));
    }
    Ok(())
}

/// Builds a model with fan-in uniform initialization `U(-1/√fan_in, 1/√fan_in)`.
pub fn build_model(role: Role, segment_len: usize, arch: &ArchConfig, seed: u64) -> Result<CompanderModel> {
    let layers = arch.layers.clone().unwrap_or_else(|| default_layers(role));
    check_layers(&layers, segment_len)?;
    if !(arch.norm_scale.is_finite() && arch.norm_scale > 0.0) {
        return Err(Error::param("norm_scale", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = layers
        .iter()
        .map(|l| match l.kind {
            LayerKind::Conv1d => {
                let bound = 1.0 / ((l.in_channels * l.kernel_len) as f64).sqrt();
                let n = l.out_channels * l.in_channels * l.kernel_len;
                let kernel = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
                let bias = (0..l.out_channels).map(|_| rng.gen_range(-bound..bound)).collect();
                LayerParams { kernel, bias }
            }
            LayerKind::Upsample => LayerParams { kernel: Vec::new(), bias: Vec::new() },
        })
        .collect();
    let output_gain = match (role, arch.output_gain) {
        (_, Some(g)) => Some(g),
        (Role::Source, None) => Some(DEFAULT_SOURCE_GAIN),
        (Role::Destination, None) => None,
    };
    Ok(CompanderModel {
        role,
        segment_len,
        normalization: arch.normalization,
        norm_scale: arch.norm_scale,
        layers,
        weights,
        output_gain,
        training_meta: TrainingMeta { init_seed: seed, ..Default::default() },
        optimizer: None,
    })
}

/// Intermediate values kept for the backward pass.
pub(crate) struct Trace {
    scale: f64,
    /// Input tensor and length of every layer.
    inputs: Vec<(Vec<f64>, usize)>,
    /// Pre-activation output of every layer.
    pre: Vec<Vec<f64>>,
    head: Option<HeadTrace>,
    pub(crate) clamped: usize,
}

impl Trace {
    pub(crate) fn kink_margin(&self, layers: &[LayerSpec], has_head: bool) -> f64 {
        let mut m = f64::INFINITY;
        let last = layers.len().saturating_sub(1);
        for (i, (spec, z)) in layers.iter().zip(&self.pre).enumerate() {
            let vals: &[f64] = match (&self.head, i == last && has_head) {
                (Some(h), true) => &h.normalized,
                (None, true) => &[],
                _ => z,
            };
            if spec.activation == Activation::AfMu {
                // the head's peak entry sits at exactly ±1 under any perturbation
                let skip = self.head.as_ref().filter(|_| i == last && has_head).map(|h| h.argmax);
                for (_, v) in vals.iter().enumerate().filter(|(j, _)| Some(*j) != skip) {
                    m = m.min(v.abs()).min((v.abs() - 1.0).abs());
                }
            }
        }
        m
    }
}

struct HeadTrace {
    peak: f64,
    argmax: usize,
    normalized: Vec<f64>,
    activated: Vec<f64>,
}

/// Gradients in the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
    pub output_gain: f64,
}

impl Gradients {
    pub fn zeros_like(model: &CompanderModel) -> Self {
        Self {
            layers: model
                .weights
                .iter()
                .map(|w| LayerParams {
                    kernel: vec![0.0; w.kernel.len()],
                    bias: vec![0.0; w.bias.len()],
                })
                .collect(),
            output_gain: 0.0,
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.kernel.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= k);
        }
        self.output_gain *= k;
    }
}

impl CompanderModel {
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(LayerSpec::n_params).sum::<usize>() + self.output_gain.map_or(0, |_| 1)
    }

    fn input_scale(&self, x: &[f64]) -> f64 {
        match self.normalization {
            Normalization::PerSignalPeak => peak_abs(x),
            Normalization::Global => self.norm_scale,
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.segment_len {
            return Err(Error::param(
                "signal",
                format!("length {n} does not match segment_len {}", self.segment_len),
            ));
        }
        Ok(())
    }

    pub(crate) fn forward_trace(&self, x: &[f64]) -> (Vec<f64>, Trace) {
        let scale = self.input_scale(x);
        let mut trace = Trace { scale, inputs: Vec::new(), pre: Vec::new(), head: None, clamped: 0 };
        if scale == 0.0 {
            return (vec![0.0; x.len()], trace);
        }
        let mut h: Vec<f64> = x.iter().map(|v| v / scale).collect();
        let mut len = x.len();
        let last = self.layers.len() - 1;
        for (i, (spec, w)) in self.layers.iter().zip(&self.weights).enumerate() {
            let (z, len_out) = match spec.kind {
                LayerKind::Conv1d => (conv1d_forward(&h, len, &w.kernel, &w.bias, spec), len / spec.stride),
                LayerKind::Upsample => (upsample_forward(&h, spec.in_channels, len, spec.stride), len * spec.stride),
            };
            let act = spec.activation;
            let out = if i == last && self.output_gain.is_some() {
                z.clone()
            } else {
                if act == Activation::AfMu {
                    trace.clamped += z.iter().filter(|v| v.abs() > 1.0).count();
                }
                z.iter().map(|&v| act.apply(v)).collect()
            };
            trace.inputs.push((std::mem::replace(&mut h, out), len));
            trace.pre.push(z);
            len = len_out;
        }
        if let Some(g) = self.output_gain {
            let z = &h;
            let (argmax, peak) = z
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
            let act = self.layers[last].activation;
            let normalized: Vec<f64> = if peak > 0.0 { z.iter().map(|v| v / peak).collect() } else { vec![0.0; z.len()] };
            let activated: Vec<f64> = normalized.iter().map(|&v| act.apply(v)).collect();
            h = activated.iter().map(|v| scale * g * v).collect();
            trace.head = Some(HeadTrace { peak, argmax, normalized, activated });
        } else {
            h.iter_mut().for_each(|v| *v *= scale);
        }
        (h, trace)
    }

    /// Accumulates parameter gradients of `Σ gout·y` into `grads`; returns the gradient
    /// with respect to the normalized input.
    pub(crate) fn backward(&self, trace: &Trace, gout: &[f64], grads: &mut Gradients) -> Vec<f64> {
        let scale = trace.scale;
        if scale == 0.0 {
            return vec![0.0; gout.len()];
        }
        let last = self.layers.len() - 1;
        // gradient with respect to the output of the layer currently being processed
        let mut g: Vec<f64> = match (&trace.head, self.output_gain) {
            (Some(head), Some(gain)) => {
                let act = self.layers[last].activation;
                grads.output_gain += gout.iter().zip(&head.activated).map(|(a, b)| a * scale * b).sum::<f64>();
                if head.peak == 0.0 {
                    vec![0.0; gout.len()]
                } else {
                    let gv: Vec<f64> = gout
                        .iter()
                        .zip(&head.normalized)
                        .map(|(go, &v)| go * scale * gain * act.derivative(v))
                        .collect();
                    let dot: f64 = gv.iter().zip(&head.normalized).map(|(a, b)| a * b).sum();
                    let z_star = trace.pre[last][head.argmax];
                    let mut gz: Vec<f64> = gv.iter().map(|v| v / head.peak).collect();
                    gz[head.argmax] -= z_star.signum() * dot / head.peak;
                    gz
                }
            }
            _ => gout.iter().map(|v| v * scale).collect(),
        };
        for i in (0..=last).rev() {
            let spec = &self.layers[i];
            if !(i == last && self.output_gain.is_some()) {
                for (gv, &z) in g.iter_mut().zip(&trace.pre[i]) {
                    *gv *= spec.activation.derivative(z);
                }
            }
            let (x, len_in) = &trace.inputs[i];
            g = match spec.kind {
                LayerKind::Conv1d => {
                    let gl = &mut grads.layers[i];
                    conv1d_backward(x, *len_in, &self.weights[i].kernel, spec, &g, &mut gl.kernel, &mut gl.bias)
                }
                LayerKind::Upsample => upsample_backward(&g, spec.in_channels, *len_in, spec.stride),
            };
        }
        g
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::param("signal", format!("non-finite sample {v}")));
        }
        Ok(self.forward_trace(x).0)
    }

    /// Output together with the number of activation inputs that hit the clamp.
    pub fn forward_with_clamps(&self, x: &[f64]) -> Result<(Vec<f64>, usize)> {
        self.check_len(x.len())?;
        let (y, t) = self.forward_trace(x);
        Ok((y, t.clamped))
    }

    pub fn forward_set(&self, set: &SignalSet) -> Result<SignalSet> {
        let tag = match self.role {
            Role::Source => "compressed",
            Role::Destination => "reconstructed",
        };
        set.map(format!("{}:{tag}", set.source_id()), |s| self.forward(s.samples()))
    }

    pub(crate) fn visit_params_mut(&mut self, mut f: impl FnMut(usize, &mut [f64])) {
        let mut k = 0;
        for w in &mut self.weights {
            if w.kernel.is_empty() {
                continue;
            }
            f(k, &mut w.kernel);
            f(k + 1, &mut w.bias);
            k += 2;
        }
        if let Some(g) = self.output_gain.as_mut() {
            f(k, std::slice::from_mut(g));
        }
    }
}

impl Gradients {
    pub(crate) fn groups(&self, with_gain: bool) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            if l.kernel.is_empty() {
                continue;
            }
            out.push(&l.kernel);
            out.push(&l.bias);
        }
        if with_gain {
            out.push(std::slice::from_ref(&self.output_gain));
        }
        out
    }
}
