use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SignalSet;

/// `10 log10(Σx² / Σ(x - x')²)`; an exact reconstruction returns `f64::INFINITY`.
pub fn snr_d(original: &[f64], denoised: &[f64]) -> Result<f64> {
    if original.len() != denoised.len() {
        return Err(Error::param(
            "denoised",
            format!("length {} vs {}", denoised.len(), original.len()),
        ));
    }
    let sig: f64 = original.iter().map(|v| v * v).sum();
    if !(sig > 0.0) {
        return Err(Error::Degenerate("original has zero power".into()));
    }
    let err: f64 = original
        .iter()
        .zip(denoised)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (sig / err).log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrSummary {
    pub mean_db: f64,
    pub per_signal_db: Vec<f64>,
}

/// Per-signal SNR_d over aligned sets plus their mean.
pub fn snr_d_sets(original: &SignalSet, denoised: &SignalSet) -> Result<SnrSummary> {
    if original.len() != denoised.len() {
        return Err(Error::param("denoised", "set sizes differ"));
    }
    let per_signal_db = original
        .iter()
        .zip(denoised.iter())
        .map(|(a, b)| snr_d(a.samples(), b.samples()))
        .collect::<Result<Vec<_>>>()?;
    let mean_db = per_signal_db.iter().sum::<f64>() / per_signal_db.len() as f64;
    Ok(SnrSummary { mean_db, per_signal_db })
}

/// Mean per-signal average power of `a` over that of `b`.
pub fn avg_power_ratio(set_a: &SignalSet, set_b: &SignalSet) -> Result<f64> {
    let mean = |s: &SignalSet| s.iter().map(|x| x.mean_power()).sum::<f64>() / s.len() as f64;
    let pb = mean(set_b);
    if !(pb > 0.0) {
        return Err(Error::Degenerate("reference set has zero power".into()));
    }
    Ok(mean(set_a) / pb)
}
