//! Peak/mean amplitude constellations and EVM.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{SignalSet, VibrationSignal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstellationPoint {
    pub peak_amp: f64,
    pub mean_amp: f64,
    pub label: Option<String>,
}

impl ConstellationPoint {
    pub fn of(signal: &VibrationSignal) -> Self {
        let x = signal.samples();
        Self {
            peak_amp: signal.peak_abs(),
            mean_amp: x.iter().map(|v| v.abs()).sum::<f64>() / x.len() as f64,
            label: signal.label().map(str::to_owned),
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.peak_amp.hypot(self.mean_amp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    pub points: Vec<ConstellationPoint>,
    pub source_tag: String,
}

impl Constellation {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.points.iter().map(ConstellationPoint::magnitude).fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| ConstellationPoint {
                    peak_amp: p.peak_amp * c,
                    mean_amp: p.mean_amp * c,
                    label: p.label.clone(),
                })
                .collect(),
            source_tag: self.source_tag.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("peak_amp,mean_amp,label\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.peak_amp, p.mean_amp, p.label.as_deref().unwrap_or(""));
        }
        out
    }
}

pub fn constellation(set: &SignalSet) -> Constellation {
    Constellation {
        points: set.iter().map(ConstellationPoint::of).collect(),
        source_tag: set.source_id().to_owned(),
    }
}

/// Pointwise `(amp - ref)` differences; order matters.
pub fn error_vectors(con_amp: &Constellation, con_ref: &Constellation) -> Result<Vec<(f64, f64)>> {
    if con_amp.len() != con_ref.len() {
        return Err(Error::param(
            "con_amp",
            format!("{} points vs {} in the reference", con_amp.len(), con_ref.len()),
        ));
    }
    Ok(con_amp
        .points
        .iter()
        .zip(&con_ref.points)
        .map(|(a, r)| (a.peak_amp - r.peak_amp, a.mean_amp - r.mean_amp))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvmStatistic {
    #[default]
    Rms,
    Mean,
}

/// EVM in percent, normalized by the largest point magnitude of `con_ref`.
pub fn evm(vectors: &[(f64, f64)], con_ref: &Constellation, stat: EvmStatistic) -> Result<f64> {
    if vectors.is_empty() || con_ref.is_empty() {
        return Err(Error::param("vectors", "empty"));
    }
    let norm = con_ref.max_magnitude();
    if !(norm > 0.0) {
        return Err(Error::Degenerate("reference constellation has zero magnitude".into()));
    }
    let n = vectors.len() as f64;
    let e = match stat {
        EvmStatistic::Rms => (vectors.iter().map(|(p, m)| p * p + m * m).sum::<f64>() / n).sqrt(),
        EvmStatistic::Mean => vectors.iter().map(|(p, m)| p.hypot(*m)).sum::<f64>() / n,
    };
    Ok(100.0 * e / norm)
}

/// Convenience: EVM between two aligned sets.
pub fn evm_sets(processed: &SignalSet, reference: &SignalSet, stat: EvmStatistic) -> Result<f64> {
    let r = constellation(reference);
    evm(&error_vectors(&constellation(processed), &r)?, &r, stat)
}
