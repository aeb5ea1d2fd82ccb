use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::af;
use super::adam::{AdamHyper, AdamState};
use super::model::{CompanderModel, Gradients, Role};
use crate::compander::{compression_loss, ErrorMetric};
use crate::error::{Error, Result};
use crate::signal::SignalSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub loss: ErrorMetric,
    pub stop_at_loss_floor: bool,
    pub seed: u64,
    /// Destination stop: relative improvement below `plateau_rel_tol`
    /// across `plateau_window` epochs.
    pub plateau_window: usize,
    pub plateau_rel_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            max_epochs: 200,
            loss: ErrorMetric::Mse,
            stop_at_loss_floor: true,
            seed: 0,
            plateau_window: 10,
            plateau_rel_tol: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", "must be positive"));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::param("beta", "beta1 and beta2 must lie in (0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::param("eps", "must be positive"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::param("batch_size", "batch_size and max_epochs must be positive"));
        }
        Ok(())
    }

    fn hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LossFloor,
    Plateau,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Per-epoch mean loss of this call only.
    pub history: Vec<f64>,
    pub stop: StopReason,
}

/// Mean compression loss of the μ = 255 activation over a target set; all-zero
/// targets contribute zero.
pub fn loss_floor_cl(targets: &SignalSet, metric: ErrorMetric) -> Result<f64> {
    let mut total = 0.0;
    for s in targets.iter() {
        match compression_loss(s.samples(), af, metric) {
            Ok(v) => total += v,
            Err(Error::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(total / targets.len() as f64)
}

fn check_pair(model: &CompanderModel, inputs: &SignalSet, targets: &SignalSet) -> Result<()> {
    if inputs.len() != targets.len() {
        return Err(Error::param(
            "targets",
            format!("{} inputs vs {} targets", inputs.len(), targets.len()),
        ));
    }
    if inputs.segment_len() != model.segment_len || targets.segment_len() != model.segment_len {
        return Err(Error::param("inputs", "segment length differs from the model"));
    }
    Ok(())
}

/// Trains the source model towards smoothed targets, stopping once the epoch
/// loss reaches the compression-loss floor of the targets.
pub fn train_source(
    mut model: CompanderModel,
    raw: &SignalSet,
    smoothed: &SignalSet,
    cfg: &TrainConfig,
) -> Result<(CompanderModel, TrainReport)> {
    if model.role != Role::Source {
        return Err(Error::param("model", "train_source needs a source model"));
    }
    check_pair(&model, raw, smoothed)?;
    let floor = loss_floor_cl(smoothed, cfg.loss)?;
    model.training_meta.loss_floor_cl = Some(floor);
    let stop_floor = cfg.stop_at_loss_floor.then_some(floor);
    fit(model, raw, smoothed, cfg, stop_floor, false)
}

/// Trains a destination (expander/denoiser) model; the caller prepares the
/// inputs, including any amplifier or channel corruption.
pub fn train_destination(
    model: CompanderModel,
    inputs: &SignalSet,
    targets: &SignalSet,
    cfg: &TrainConfig,
) -> Result<(CompanderModel, TrainReport)> {
    if model.role != Role::Destination {
        return Err(Error::param("model", "train_destination needs a destination model"));
    }
    check_pair(&model, inputs, targets)?;
    fit(model, inputs, targets, cfg, None, true)
}

fn sample_loss_grad(metric: ErrorMetric, y: &[f64], t: &[f64], weight: f64) -> (f64, Vec<f64>) {
    let n = y.len() as f64;
    match metric {
        ErrorMetric::Mse => {
            let loss = y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
            let g = y.iter().zip(t).map(|(a, b)| weight * 2.0 * (a - b) / n).collect();
            (loss, g)
        }
        ErrorMetric::Mae => {
            let loss = y.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
            let g = y
                .iter()
                .zip(t)
                .map(|(a, b)| {
                    let d = a - b;
                    if d == 0.0 { 0.0 } else { weight * d.signum() / n }
                })
                .collect();
            (loss, g)
        }
    }
}

/// Shuffle order for one epoch, a pure function of `(seed, epoch)`.
fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

fn fit(
    mut model: CompanderModel,
    inputs: &SignalSet,
    targets: &SignalSet,
    cfg: &TrainConfig,
    floor: Option<f64>,
    plateau: bool,
) -> Result<(CompanderModel, TrainReport)> {
    cfg.validate()?;
    let mut adam = match model.optimizer.take() {
        Some(st) if st.matches(&model) => st,
        Some(_) => return Err(Error::format("optimizer", "state does not match the model layout")),
        None => AdamState::for_model(&model),
    };
    let hyper = cfg.hyper();
    let n = inputs.len();
    let start_epoch = model.training_meta.epochs_run;
    let mut history = Vec::new();
    let mut stop = StopReason::MaxEpochs;
    for epoch in start_epoch..start_epoch + cfg.max_epochs {
        let order = epoch_order(n, cfg.seed, epoch);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros_like(&model);
            let w = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = inputs.signals()[i].samples();
                let t = targets.signals()[i].samples();
                let (y, trace) = model.forward_trace(x);
                model.training_meta.clamp_events += trace.clamped as u64;
                let (loss, gout) = sample_loss_grad(cfg.loss, &y, t, w);
                total += loss;
                model.backward(&trace, &gout, &mut grads);
            }
            adam.update(&mut model, &grads, &hyper);
        }
        let epoch_loss = total / n as f64;
        history.push(epoch_loss);
        let meta = &mut model.training_meta;
        meta.loss_history.push(epoch_loss);
        meta.epochs_run = epoch + 1;
        meta.final_loss = Some(epoch_loss);
        meta.seed = Some(cfg.seed);
        let first = meta.loss_history[0];
        if !epoch_loss.is_finite() || epoch_loss > 10.0 * first.max(f64::MIN_POSITIVE) {
            return Err(Error::Training(format!(
                "loss diverged at epoch {epoch}: {epoch_loss} (initial {first})"
            )));
        }
        if let Some(f) = floor {
            if epoch_loss <= f {
                stop = StopReason::LossFloor;
                break;
            }
        }
        if plateau {
            let h = &meta.loss_history;
            let w = cfg.plateau_window;
            if w > 0 && h.len() > w {
                let past = h[h.len() - 1 - w];
                let improvement = (past - epoch_loss) / past.abs().max(f64::MIN_POSITIVE);
                if improvement < cfg.plateau_rel_tol {
                    stop = StopReason::Plateau;
                    break;
                }
            }
        }
    }
    model.optimizer = Some(adam);
    Ok((model, TrainReport { history, stop }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{build_model, ArchConfig};
    use crate::signal::{smooth_samples, synth_bandlimited_vibration, BandlimitedSpec};

    fn corpus(n: usize, len: usize, seed: u64) -> SignalSet {
        let spec = BandlimitedSpec::default();
        let sigs = (0..n)
            .map(|i| synth_bandlimited_vibration(len, &spec, seed + i as u64).unwrap())
            .collect();
        SignalSet::new(sigs, "toy").unwrap()
    }

    #[test]
    fn zero_pairs_converge_immediately() {
        let z = SignalSet::from_rows(vec![vec![0.0; 32]; 8], 1.0, "z").unwrap();
        let m = build_model(Role::Source, 32, &ArchConfig::default(), 1).unwrap();
        let cfg = TrainConfig { max_epochs: 5, ..Default::default() };
        let (_, rep) = train_source(m, &z, &z, &cfg).unwrap();
        assert!(rep.history.len() <= 5);
        assert!(*rep.history.last().unwrap() < 1e-12);
    }

    #[test]
    fn misaligned_and_wrong_role() {
        let a = corpus(4, 32, 1);
        let b = corpus(3, 32, 1);
        let src = build_model(Role::Source, 32, &ArchConfig::default(), 1).unwrap();
        let dst = build_model(Role::Destination, 32, &ArchConfig::default(), 1).unwrap();
        let cfg = TrainConfig { max_epochs: 1, ..Default::default() };
        assert!(train_source(src.clone(), &a, &b, &cfg).is_err());
        assert!(train_source(dst, &a, &a, &cfg).is_err());
        assert!(train_destination(src, &a, &a, &cfg).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let a = corpus(16, 32, 3);
        let m = build_model(Role::Destination, 32, &ArchConfig::default(), 1).unwrap();
        let cfg = TrainConfig { learning_rate: 50.0, max_epochs: 30, ..Default::default() };
        match train_destination(m, &a, &a, &cfg) {
            Err(Error::Training(_)) => {}
            other => panic!("expected a training failure, got {:?}", other.map(|r| r.1)),
        }
    }

    #[test]
    fn resume_matches_single_run() {
        let x = corpus(40, 64, 10);
        let m = build_model(Role::Destination, 64, &ArchConfig::default(), 2).unwrap();
        let cfg = |e| TrainConfig { max_epochs: e, batch_size: 8, seed: 4, plateau_window: 0, ..Default::default() };
        let (one, _) = train_destination(m.clone(), &x, &x, &cfg(5)).unwrap();
        let (half, _) = train_destination(m, &x, &x, &cfg(3)).unwrap();
        let json = serde_json::to_string(&half).unwrap();
        let reloaded: CompanderModel = serde_json::from_str(&json).unwrap();
        let (two, _) = train_destination(reloaded, &x, &x, &cfg(2)).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn source_reaches_twice_the_floor() {
        let raw = corpus(200, 512, 1000);
        let sm = raw
            .map("smoothed", |s| smooth_samples(s.samples(), 5))
            .unwrap();
        let m = build_model(Role::Source, 512, &ArchConfig::default(), 1).unwrap();
        let (m, rep) = train_source(m, &raw, &sm, &TrainConfig::default()).unwrap();
        let floor = m.training_meta.loss_floor_cl.unwrap();
        assert!(*rep.history.last().unwrap() <= 2.0 * floor, "{rep:?} floor {floor}");
    }
}
