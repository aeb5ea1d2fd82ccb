//! Signal containers, segmentation, smoothing and synthetic vibration sources.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample rate used when none is given (the bearing rigs this targets run at 64 kHz).
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 64_000.0;

/// One fixed-length, finite, real-valued vibration record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VibrationSignal {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    label: Option<String>,
}

impl VibrationSignal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::param(
                "samples",
                format!("need at least 2 samples, got {}", samples.len()),
            ));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::param(
                "sample_rate_hz",
                format!("must be positive, got {sample_rate_hz}"),
            ));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(
                "samples",
                format!("non-finite value {} at index {i}", samples[i]),
            ));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Same rate and label, new samples.
    pub fn map_samples(&self, samples: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(samples, self.sample_rate_hz)?;
        out.label = self.label.clone();
        Ok(out)
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn peak_abs(&self) -> f64 {
        peak_abs(&self.samples)
    }
}

/// Ordered collection of equal-length signals sharing one sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSet {
    signals: Vec<VibrationSignal>,
    source_id: String,
}

impl SignalSet {
    pub fn new(signals: Vec<VibrationSignal>, source_id: impl Into<String>) -> Result<Self> {
        let first = signals
            .first()
            .ok_or_else(|| Error::param("signals", "a set needs at least one signal"))?;
        let (len, rate) = (first.len(), first.sample_rate_hz());
        for (i, s) in signals.iter().enumerate() {
            if s.len() != len {
                return Err(Error::param(
                    "signals",
                    format!("signal {i} has length {}, expected {len}", s.len()),
                ));
            }
            if s.sample_rate_hz() != rate {
                return Err(Error::param(
                    "signals",
                    format!(
                        "signal {i} has sample rate {}, expected {rate}",
                        s.sample_rate_hz()
                    ),
                ));
            }
        }
        Ok(Self {
            signals,
            source_id: source_id.into(),
        })
    }

    /// Builds a set from raw rows at a common rate.
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        sample_rate_hz: f64,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let signals = rows
            .into_iter()
            .map(|r| VibrationSignal::new(r, sample_rate_hz))
            .collect::<Result<Vec<_>>>()?;
        Self::new(signals, source_id)
    }

    pub fn signals(&self) -> &[VibrationSignal] {
        &self.signals
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn segment_len(&self) -> usize {
        self.signals[0].len()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.signals[0].sample_rate_hz()
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn iter(&self) -> impl Iterator<Item = &VibrationSignal> {
        self.signals.iter()
    }

    /// Applies `f` to every signal's samples, keeping rate, labels and order.
    pub fn map<F>(&self, source_id: impl Into<String>, mut f: F) -> Result<Self>
    where
        F: FnMut(&VibrationSignal) -> Result<Vec<f64>>,
    {
        let signals = self
            .signals
            .iter()
            .map(|s| s.map_samples(f(s)?))
            .collect::<Result<Vec<_>>>()?;
        Self::new(signals, source_id)
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize], source_id: impl Into<String>) -> Result<Self> {
        let signals = indices
            .iter()
            .map(|&i| {
                self.signals
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::param("indices", format!("index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(signals, source_id)
    }
}

pub fn mean_power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

pub fn peak_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub(crate) fn normal_samples(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sigma * z
        })
        .collect()
}

/// I.i.d. zero-mean Gaussian samples of standard deviation `sigma`.
pub fn synth_gaussian_vibration(n_samples: usize, sigma: f64, seed: u64) -> Result<VibrationSignal> {
    if n_samples < 2 {
        return Err(Error::param("n_samples", "must be at least 2"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    VibrationSignal::new(normal_samples(&mut rng, n_samples, sigma), DEFAULT_SAMPLE_RATE_HZ)
}

/// Parameters of the band-limited Gaussian source used as the companding corpus.
///
/// The process is white Gaussian noise through a Hann-windowed sinc low-pass
/// (unit energy, so the in-band standard deviation is `sigma`), plus white
/// measurement noise of standard deviation `noise_ratio * sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandlimitedSpec {
    pub sigma: f64,
    /// Cut-off as a fraction of the sample rate, in (0, 0.5).
    pub cutoff: f64,
    pub noise_ratio: f64,
    pub taps: usize,
}

impl Default for BandlimitedSpec {
    fn default() -> Self {
        Self {
            sigma: 2.5,
            cutoff: 0.08,
            noise_ratio: 0.05,
            taps: 63,
        }
    }
}

fn lowpass_taps(cutoff: f64, taps: usize) -> Vec<f64> {
    let centre = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let n = i as f64 - centre;
            let arg = 2.0 * cutoff * n;
            let sinc = if arg == 0.0 {
                1.0
            } else {
                (std::f64::consts::PI * arg).sin() / (std::f64::consts::PI * arg)
            };
            let w = 0.5
                - 0.5 * (2.0 * std::f64::consts::PI * (i + 1) as f64 / (taps + 1) as f64).cos();
            2.0 * cutoff * sinc * w
        })
        .collect();
    let energy = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter_mut().for_each(|v| *v /= energy);
    h
}

/// One band-limited Gaussian vibration record; deterministic per seed.
pub fn synth_bandlimited_vibration(
    n_samples: usize,
    spec: &BandlimitedSpec,
    seed: u64,
) -> Result<VibrationSignal> {
    if n_samples < 2 {
        return Err(Error::param("n_samples", "must be at least 2"));
    }
    if !(spec.sigma.is_finite() && spec.sigma > 0.0) {
        return Err(Error::param("sigma", format!("must be positive, got {}", spec.sigma)));
    }
    if !(spec.cutoff > 0.0 && spec.cutoff < 0.5) {
        return Err(Error::param("cutoff", "must lie in (0, 0.5)"));
    }
    if !(spec.noise_ratio >= 0.0 && spec.noise_ratio.is_finite()) {
        return Err(Error::param("noise_ratio", "must be non-negative"));
    }
    if spec.taps == 0 || spec.taps.is_multiple_of(2) {
        return Err(Error::param("taps", "must be odd"));
    }
    let h = lowpass_taps(spec.cutoff, spec.taps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white = normal_samples(&mut rng, n_samples + h.len() - 1, 1.0);
    let noise = normal_samples(&mut rng, n_samples, spec.noise_ratio * spec.sigma);
    let samples = (0..n_samples)
        .map(|t| {
            let acc: f64 = h.iter().zip(&white[t..]).map(|(a, b)| a * b).sum();
            spec.sigma * acc + noise[t]
        })
        .collect();
    VibrationSignal::new(samples, DEFAULT_SAMPLE_RATE_HZ)
}

/// Splits a long record into consecutive non-overlapping segments; the short
/// remainder is dropped.
pub fn segment(long_signal: &VibrationSignal, segment_len: usize) -> Result<SignalSet> {
    if segment_len < 2 {
        return Err(Error::param("segment_len", "must be at least 2"));
    }
    if segment_len > long_signal.len() {
        return Err(Error::param(
            "segment_len",
            format!(
                "{segment_len} exceeds signal length {}",
                long_signal.len()
            ),
        ));
    }
    let signals = long_signal
        .samples()
        .chunks_exact(segment_len)
        .map(|c| long_signal.map_samples(c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    SignalSet::new(signals, "segmented")
}

/// Centered moving average with reflect padding (`x[-k] = x[k]`).
pub fn smooth_samples(x: &[f64], window_len: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if window_len.is_multiple_of(2) || window_len == 0 || window_len >= n {
        return Err(Error::param(
            "window_len",
            format!("must be odd and in [1, {n}), got {window_len}"),
        ));
    }
    let half = window_len / 2;
    let at = |i: isize| -> f64 {
        let n = n as isize;
        let j = if i < 0 {
            -i
        } else if i >= n {
            2 * (n - 1) - i
        } else {
            i
        };
        x[j as usize]
    };
    let inv = 1.0 / window_len as f64;
    Ok((0..n as isize)
        .map(|t| {
            let s: f64 = (t - half as isize..=t + half as isize).map(at).sum();
            s * inv
        })
        .collect())
}

pub fn smooth(signal: &VibrationSignal, window_len: usize) -> Result<VibrationSignal> {
    signal.map_samples(smooth_samples(signal.samples(), window_len)?)
}
