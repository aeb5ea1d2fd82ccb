//! Nonlinear power amplification (Rapp SSPA), input back-off and AWGN.
//!
//! The amplifier acts on sample magnitudes and keeps the sign, the usual
//! convention for real baseband records. AM/PM conversion is not modelled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{mean_power, normal_samples, SignalSet};

/// Rapp AM/AM parameters: saturation level, small-signal gain and smoothness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RappParams {
    pub a_sat: f64,
    pub gain_a: f64,
    pub p: f64,
}

impl RappParams {
    pub fn new(a_sat: f64, gain_a: f64, p: f64) -> Result<Self> {
        if !(a_sat.is_finite() && a_sat > 0.0) {
            return Err(Error::param("a_sat", format!("must be positive, got {a_sat}")));
        }
        if !(gain_a.is_finite() && gain_a >= 0.0) {
            return Err(Error::param("gain_a", format!("must be non-negative, got {gain_a}")));
        }
        // p = 0 would make the exponent 1/(2p) singular
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::param("p", format!("must be positive, got {p}")));
        }
        Ok(Self { a_sat, gain_a, p })
    }

    /// Unit gain and p = 2 at the given saturation level.
    pub fn with_saturation(a_sat: f64) -> Result<Self> {
        Self::new(a_sat, 1.0, 2.0)
    }

    /// Output amplitude for one input sample.
    #[inline]
    pub fn amplify(&self, a_in: f64) -> f64 {
        let lin = self.gain_a * a_in;
        let r = (lin.abs() / self.a_sat).powf(2.0 * self.p);
        if r > 1.0 {
            // rewritten as A_sat / (1 + 1/r)^(1/2p) so the bound holds after rounding
            return self.a_sat.copysign(lin) / (1.0 + r.recip()).powf(1.0 / (2.0 * self.p));
        }
        lin / (1.0 + r).powf(1.0 / (2.0 * self.p))
    }
}

/// Elementwise `A_out = a A_in / (1 + (a|A_in|/A_sat)^(2p))^(1/(2p))`.
pub fn rapp_amplify(x: &[f64], params: &RappParams) -> Result<Vec<f64>> {
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::param("signal", format!("non-finite sample {v}")));
    }
    Ok(x.iter().map(|&v| params.amplify(v)).collect())
}

/// Scales amplitudes by `10^(-ibo_db/20)`.
pub fn apply_ibo(x: &[f64], ibo_db: f64) -> Result<Vec<f64>> {
    if !(ibo_db.is_finite() && ibo_db >= 0.0) {
        return Err(Error::param("ibo_db", format!("must be non-negative, got {ibo_db}")));
    }
    let g = 10f64.powf(-ibo_db / 20.0);
    Ok(x.iter().map(|v| v * g).collect())
}

/// Adds white Gaussian noise of power `mean_power(x) / 10^(snr_db/10)`.
pub fn add_awgn(x: &[f64], snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    if snr_db.is_nan() {
        return Err(Error::param("snr_db", "NaN"));
    }
    let p = mean_power(x);
    if !(p > 0.0) {
        return Err(Error::Degenerate("AWGN relative to an all-zero signal".into()));
    }
    let sigma = (p / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = normal_samples(&mut rng, x.len(), sigma);
    Ok(x.iter().zip(noise).map(|(a, n)| a + n).collect())
}

/// Mean over signals of each signal's average power.
///
/// The result is used directly as the amplitude saturation level `A_sat`,
/// even though it is a power; the evaluation setup defines it this way.
pub fn saturation_from_set(set: &SignalSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::param("set", "empty set"));
    }
    Ok(set.iter().map(|s| s.mean_power()).sum::<f64>() / set.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synth_gaussian_vibration, SignalSet};
    use proptest::prelude::*;

    fn unit_rapp() -> RappParams {
        RappParams::new(1.0, 1.0, 2.0).unwrap()
    }

    #[test]
    fn rapp_reference_points() {
        let p = unit_rapp();
        assert_eq!(p.amplify(0.0), 0.0);
        assert!((p.amplify(1.0) - 2f64.powf(-0.25)).abs() < 1e-15);
        assert!((p.amplify(1.0) - 0.8409).abs() < 1e-4);
        let small = p.amplify(0.01);
        assert!((small / 0.01 - 1.0).abs() < 0.005);
        assert!((p.amplify(1e200) - 1.0).abs() < 1e-12);
        assert!(RappParams::new(1.0, 1.0, 0.0).is_err());
        assert!(RappParams::new(0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn ibo_scaling() {
        let x = [1.0, -2.0, 0.5];
        assert_eq!(apply_ibo(&x, 0.0).unwrap(), x.to_vec());
        let half = apply_ibo(&x, 20.0 * 2f64.log10()).unwrap();
        for (a, b) in half.iter().zip(x) {
            assert!((a - b / 2.0).abs() < 1e-15);
        }
        let tenth = apply_ibo(&x, 10.0).unwrap();
        assert!((mean_power(&tenth) * 10.0 / mean_power(&x) - 1.0).abs() < 1e-12);
        assert!(apply_ibo(&x, -1.0).is_err());
    }

    #[test]
    fn awgn_power_and_determinism() {
        let x = synth_gaussian_vibration(1_000_000, 1.3, 2).unwrap();
        let y = add_awgn(x.samples(), 0.0, 8).unwrap();
        let noise: Vec<f64> = y.iter().zip(x.samples()).map(|(a, b)| a - b).collect();
        let ratio = mean_power(&noise) / x.mean_power();
        assert!((ratio - 1.0).abs() < 0.03, "{ratio}");
        let snr = 10.0 * (x.mean_power() / mean_power(&noise)).log10();
        assert!(snr.abs() < 0.3);
        assert_eq!(y, add_awgn(x.samples(), 0.0, 8).unwrap());
        let clean = add_awgn(x.samples(), 300.0, 8).unwrap();
        assert!(clean.iter().zip(x.samples()).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(add_awgn(&[0.0; 8], 0.0, 1).is_err());
    }

    #[test]
    fn saturation_levels() {
        let unit = SignalSet::from_rows(vec![vec![1.0, -1.0], vec![-1.0, 1.0]], 1.0, "u").unwrap();
        assert_eq!(saturation_from_set(&unit).unwrap(), 1.0);
        let s3 = 3f64.sqrt();
        let two = SignalSet::from_rows(vec![vec![1.0, -1.0], vec![s3, -s3]], 1.0, "t").unwrap();
        assert!((saturation_from_set(&two).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn hard_limiter_limit() {
        let p = RappParams::new(1.0, 1.0, 100.0).unwrap();
        let worst = (0..=4000)
            .map(|i| i as f64 * 0.001)
            .map(|a| (p.amplify(a) - a.min(1.0)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.01, "{worst}");
    }

    proptest! {
        #[test]
        fn rapp_odd_bounded_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6, sat in 0.01f64..100.0, p in 0.5f64..10.0, g in 0.0f64..5.0) {
            let r = RappParams::new(sat, g, p).unwrap();
            prop_assert_eq!(r.amplify(-a), -r.amplify(a));
            prop_assert!(r.amplify(a).abs() <= sat);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(r.amplify(lo) <= r.amplify(hi) + 1e-12 * sat);
        }
    }
}
