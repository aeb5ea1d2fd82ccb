//! Welch averaged-periodogram PSD with a Hamming window.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::fft::rfft_padded;
use crate::error::{Error, Result};
use crate::signal::{SignalSet, VibrationSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Hamming,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hamming if len == 1 => vec![1.0],
            WindowKind::Hamming => (0..len)
                .map(|n| {
                    0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos()
                })
                .collect(),
        }
    }
}

/// Welch settings. `None` fields resolve against the signal length:
/// window `N/2`, FFT size the next power of two at or above `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchSettings {
    pub window: WindowKind,
    pub window_len: Option<usize>,
    pub overlap_fraction: f64,
    pub nfft: Option<usize>,
}

impl Default for WelchSettings {
    fn default() -> Self {
        Self {
            window: WindowKind::Hamming,
            window_len: None,
            overlap_fraction: 0.5,
            nfft: None,
        }
    }
}

impl WelchSettings {
    /// Concrete `(window_len, hop, nfft)` for a signal of length `n`.
    pub fn resolve(&self, n: usize) -> Result<(usize, usize, usize)> {
        let window_len = self.window_len.unwrap_or(n / 2);
        if window_len < 2 || window_len > n {
            return Err(Error::param(
                "window_len",
                format!("must be in [2, {n}], got {window_len}"),
            ));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::param("overlap_fraction", "must lie in [0, 1)"));
        }
        let nfft = self.nfft.unwrap_or_else(|| n.next_power_of_two());
        if nfft < window_len || !nfft.is_power_of_two() {
            return Err(Error::param(
                "nfft",
                format!("must be a power of two >= window_len, got {nfft}"),
            ));
        }
        let overlap = (self.overlap_fraction * window_len as f64).round() as usize;
        let hop = (window_len - overlap).max(1);
        Ok((window_len, hop, nfft))
    }
}

/// One-sided power spectral density in power per Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub freqs_hz: Vec<f64>,
    pub density: Vec<f64>,
    pub window_len: usize,
    pub overlap_fraction: f64,
    pub nfft: usize,
    pub n_segments: usize,
}

impl PsdEstimate {
    pub fn bin_width_hz(&self) -> f64 {
        self.freqs_hz[1] - self.freqs_hz[0]
    }

    /// Rectangle-rule integral of the density over `[lo_hz, hi_hz]`.
    pub fn band_power(&self, lo_hz: f64, hi_hz: f64) -> f64 {
        let df = self.bin_width_hz();
        self.freqs_hz
            .iter()
            .zip(&self.density)
            .filter(|(f, _)| **f >= lo_hz && **f <= hi_hz)
            .map(|(_, d)| d * df)
            .sum()
    }

    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width_hz()
    }

    /// Power above the given fraction of the frequency axis (0.9 = top 10%).
    pub fn high_band_power(&self, fraction: f64) -> f64 {
        let top = *self.freqs_hz.last().expect("non-empty PSD");
        self.band_power(fraction * top, top)
    }

    pub fn peak_frequency_hz(&self) -> f64 {
        let i = self
            .density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.freqs_hz[i]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("freq_hz,density\n");
        for (f, d) in self.freqs_hz.iter().zip(&self.density) {
            let _ = writeln!(out, "{f},{d}");
        }
        out
    }
}

/// Welch estimate over raw samples at `sample_rate_hz`.
pub fn welch_psd_samples(x: &[f64], sample_rate_hz: f64, settings: &WelchSettings) -> Result<PsdEstimate> {
    let (window_len, hop, nfft) = settings.resolve(x.len())?;
    let w = settings.window.coefficients(window_len);
    let w_energy: f64 = w.iter().map(|v| v * v).sum();
    let n_bins = nfft / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut n_segments = 0;
    let mut start = 0;
    let mut frame = vec![0.0; window_len];
    while start + window_len <= x.len() {
        for (f, (s, c)) in frame.iter_mut().zip(x[start..].iter().zip(&w)) {
            *f = s * c;
        }
        let spec = rfft_padded(&frame, nfft)?;
        for (a, v) in acc.iter_mut().zip(&spec[..n_bins]) {
            *a += v.norm_sqr();
        }
        n_segments += 1;
        start += hop;
    }
    let scale = 1.0 / (sample_rate_hz * w_energy * n_segments as f64);
    let density = acc
        .iter()
        .enumerate()
        .map(|(k, v)| {
            // fold negative frequencies onto the one-sided axis
            let fold = if k == 0 || (k == nfft / 2) { 1.0 } else { 2.0 };
            v * scale * fold
        })
        .collect();
    let freqs_hz = (0..n_bins)
        .map(|k| k as f64 * sample_rate_hz / nfft as f64)
        .collect();
    Ok(PsdEstimate {
        freqs_hz,
        density,
        window_len,
        overlap_fraction: settings.overlap_fraction,
        nfft,
        n_segments,
    })
}

pub fn welch_psd(signal: &VibrationSignal, settings: &WelchSettings) -> Result<PsdEstimate> {
    welch_psd_samples(signal.samples(), signal.sample_rate_hz(), settings)
}

/// Elementwise mean of per-signal Welch estimates, accumulated in set order.
pub fn mean_psd(set: &SignalSet, settings: &WelchSettings) -> Result<PsdEstimate> {
    let mut iter = set.iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::param("set", "empty set"))?;
    let mut out = welch_psd(first, settings)?;
    for s in iter {
        let p = welch_psd(s, settings)?;
        if p.density.len() != out.density.len() {
            return Err(Error::param("set", "inconsistent PSD lengths"));
        }
        for (a, b) in out.density.iter_mut().zip(&p.density) {
            *a += b;
        }
    }
    let n = set.len() as f64;
    out.density.iter_mut().for_each(|d| *d /= n);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{mean_power, synth_gaussian_vibration};

    #[test]
    fn default_layout_matches_reference_setup() {
        let s = WelchSettings::default();
        let (win, hop, nfft) = s.resolve(6400).unwrap();
        assert_eq!((win, hop, nfft), (3200, 1600, 8192));
        let x = synth_gaussian_vibration(6400, 1.0, 1).unwrap();
        let p = welch_psd(&x, &s).unwrap();
        assert_eq!(p.n_segments, 3);
        assert_eq!(p.density.len(), 4097);
        assert_eq!(*p.freqs_hz.last().unwrap(), 32_000.0);
    }

    #[test]
    fn sinusoid_peaks_at_its_frequency() {
        let fs = 8000.0;
        let f0 = 1234.0;
        let x: Vec<f64> = (0..4096)
            .map(|i| (2.0 * std::f64::consts::PI * f0 * i as f64 / fs).sin())
            .collect();
        let p = welch_psd_samples(&x, fs, &WelchSettings::default()).unwrap();
        assert!((p.peak_frequency_hz() - f0).abs() <= p.bin_width_hz() / 2.0);
    }

    #[test]
    fn parseval_within_five_percent() {
        let x = synth_gaussian_vibration(6400, 1.7, 3).unwrap();
        let p = welch_psd(&x, &WelchSettings::default()).unwrap();
        let ratio = p.total_power() / x.mean_power();
        assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
        let sine: Vec<f64> = (0..6400).map(|i| (0.05 * i as f64).sin()).collect();
        let p = welch_psd_samples(&sine, 1.0, &WelchSettings::default()).unwrap();
        assert!((p.total_power() / mean_power(&sine) - 1.0).abs() < 0.05);
    }

    #[test]
    fn white_noise_is_flat() {
        let sigs = (0..200)
            .map(|i| synth_gaussian_vibration(2048, 1.0, 100 + i).unwrap())
            .collect();
        let set = SignalSet::new(sigs, "white").unwrap();
        let p = mean_psd(&set, &WelchSettings::default()).unwrap();
        let n = p.density.len();
        let mean = p.density[1..n - 1].iter().sum::<f64>() / (n - 2) as f64;
        for d in &p.density[1..n - 1] {
            let db = 10.0 * (d / mean).log10();
            assert!(db.abs() < 3.0, "{db}");
        }
    }

    #[test]
    fn mean_of_identical_signals() {
        let x = synth_gaussian_vibration(1024, 1.0, 5).unwrap();
        let single = SignalSet::new(vec![x.clone()], "one").unwrap();
        let twice = SignalSet::new(vec![x.clone(), x.clone()], "two").unwrap();
        let s = WelchSettings::default();
        let a = welch_psd(&x, &s).unwrap();
        assert_eq!(mean_psd(&single, &s).unwrap(), a);
        let b = mean_psd(&twice, &s).unwrap();
        for (u, v) in a.density.iter().zip(&b.density) {
            assert!((u - v).abs() <= 1e-15 * u.abs().max(1e-300));
        }
    }

    #[test]
    fn circular_shift_changes_little() {
        let sigs: Vec<_> = (0..100)
            .map(|i| synth_gaussian_vibration(1024, 1.0, 500 + i).unwrap())
            .collect();
        let shifted: Vec<_> = sigs
            .iter()
            .map(|s| {
                let mut v = s.samples().to_vec();
                v.rotate_right(37);
                s.map_samples(v).unwrap()
            })
            .collect();
        let s = WelchSettings::default();
        let a = mean_psd(&SignalSet::new(sigs, "a").unwrap(), &s).unwrap();
        let b = mean_psd(&SignalSet::new(shifted, "b").unwrap(), &s).unwrap();
        assert!((a.total_power() / b.total_power() - 1.0).abs() < 0.05);
        let band = |p: &PsdEstimate| p.band_power(6_400.0, 19_200.0);
        assert!((band(&a) / band(&b) - 1.0).abs() < 0.1);
    }

    #[test]
    fn invalid_settings() {
        let x = vec![0.1; 100];
        let bad = [
            WelchSettings { window_len: Some(101), ..Default::default() },
            WelchSettings { overlap_fraction: 1.0, ..Default::default() },
            WelchSettings { nfft: Some(32), ..Default::default() },
            WelchSettings { nfft: Some(100), window_len: Some(50), ..Default::default() },
        ];
        for s in bad {
            assert!(welch_psd_samples(&x, 1.0, &s).is_err(), "{s:?}");
        }
    }
}
