//! Analytic μ-law companding, power scaling and clipping-noise estimates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{mean_power, peak_abs};

/// The μ used by the compression activation and the μ-law baseline.
pub const DEFAULT_MU: f64 = 255.0;

/// Validity floor for the asymptotic clipping-noise formula.
pub const CLIPPING_APPROX_FLOOR_DB: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuLawParams {
    pub mu: f64,
    pub norm_a: f64,
}

impl MuLawParams {
    pub fn new(mu: f64, norm_a: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::param("mu", format!("must be positive, got {mu}")));
        }
        if !(norm_a.is_finite() && norm_a > 0.0) {
            return Err(Error::param("norm_a", format!("must be positive, got {norm_a}")));
        }
        Ok(Self { mu, norm_a })
    }

    /// Normalization set to the signal's own peak, so `|x/A| <= 1` holds.
    pub fn fitted(mu: f64, x: &[f64]) -> Result<Self> {
        let a = peak_abs(x);
        if a == 0.0 {
            return Err(Error::Degenerate("all-zero signal has no μ-law scale".into()));
        }
        Self::new(mu, a)
    }
}

#[inline]
pub(crate) fn mu_law(v: f64, mu: f64) -> f64 {
    (mu * v.abs()).ln_1p() / mu.ln_1p() * v.signum_or_zero()
}

#[inline]
pub(crate) fn mu_law_inverse(v: f64, mu: f64) -> f64 {
    (v.abs() * mu.ln_1p()).exp_m1() / mu * v.signum_or_zero()
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f64;
}

impl SignumOrZero for f64 {
    #[inline]
    fn signum_or_zero(self) -> f64 {
        if self == 0.0 {
            0.0
        } else {
            self.signum()
        }
    }
}

fn check_domain(x: &[f64], a: f64, name: &'static str) -> Result<()> {
    if let Some(v) = x.iter().find(|v| !(v.abs() <= a)) {
        return Err(Error::range(name, *v, format!("|value| must not exceed A = {a}")));
    }
    Ok(())
}

/// `y = A sgn(x) ln(1 + μ|x/A|) / ln(1 + μ)`.
pub fn mu_compress(x: &[f64], params: &MuLawParams) -> Result<Vec<f64>> {
    check_domain(x, params.norm_a, "x")?;
    let a = params.norm_a;
    Ok(x.iter().map(|&v| a * mu_law(v / a, params.mu)).collect())
}

/// Inverse of [`mu_compress`].
pub fn mu_expand(y: &[f64], params: &MuLawParams) -> Result<Vec<f64>> {
    check_domain(y, params.norm_a, "y")?;
    let a = params.norm_a;
    Ok(y.iter().map(|&v| a * mu_law_inverse(v / a, params.mu)).collect())
}

/// Uniform scaling so the mean power equals `target_mean_power`.
pub fn power_scale(x: &[f64], target_mean_power: f64) -> Result<Vec<f64>> {
    if !(target_mean_power.is_finite() && target_mean_power >= 0.0) {
        return Err(Error::param(
            "target_mean_power",
            format!("must be non-negative, got {target_mean_power}"),
        ));
    }
    let current = mean_power(x);
    if !(current > 0.0) {
        return Err(Error::Degenerate("cannot power-scale an all-zero signal".into()));
    }
    let g = (target_mean_power / current).sqrt();
    Ok(x.iter().map(|v| v * g).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    #[default]
    Mse,
    Mae,
}

impl ErrorMetric {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        match self {
            ErrorMetric::Mse => a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / n,
            ErrorMetric::Mae => a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>() / n,
        }
    }
}

/// Compression loss: error between `x` and `AF(x/A)` power-scaled back to the
/// mean power of `x`, with `A = max|x|`.
pub fn compression_loss<F>(x: &[f64], af: F, metric: ErrorMetric) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let a = peak_abs(x);
    if a == 0.0 {
        return Err(Error::Degenerate("compression loss of an all-zero target".into()));
    }
    let compressed: Vec<f64> = x.iter().map(|v| af(v / a)).collect();
    let pc = power_scale(&compressed, mean_power(x))?;
    Ok(metric.eval(x, &pc))
}

/// Largest amplitude of a power-preserved signal held to `papr_t_db`.
pub fn peak_c(papr_t_db: f64, p_in: f64) -> Result<f64> {
    if !(p_in.is_finite() && p_in > 0.0) {
        return Err(Error::param("p_in", format!("must be positive, got {p_in}")));
    }
    if !papr_t_db.is_finite() {
        return Err(Error::param("papr_t_db", "must be finite"));
    }
    Ok((10f64.powf(papr_t_db / 10.0) * p_in).sqrt())
}

/// Leading asymptotic term of the Gaussian clipping-noise integral,
/// `2 sqrt(2/pi) σ² PAPR_t^(-3/2) exp(-PAPR_t/2)`.
pub fn clipping_noise_approx(papr_t_db: f64, sigma2: f64) -> Result<f64> {
    if !(papr_t_db >= CLIPPING_APPROX_FLOOR_DB) {
        return Err(Error::range(
            "papr_t_db",
            papr_t_db,
            format!("asymptotic clipping noise needs PAPR_t >= {CLIPPING_APPROX_FLOOR_DB} dB"),
        ));
    }
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::param("sigma2", "must be non-negative"));
    }
    let p = 10f64.powf(papr_t_db / 10.0);
    Ok(2.0 * (2.0 / std::f64::consts::PI).sqrt() * sigma2 * p.powf(-1.5) * (-p / 2.0).exp())
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

/// `2 E[(x - Peak_c)^2 1{x > Peak_c}]` for `x ~ N(0, σ²)`, by plain sampling.
pub fn clipping_noise_oracle(
    papr_t_db: f64,
    sigma2: f64,
    n_mc: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_mc < 100_000 {
        return Err(Error::param("n_mc", "need at least 1e5 draws"));
    }
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::param("sigma2", "must be positive"));
    }
    let peak = peak_c(papr_t_db, sigma2)?;
    let sigma = sigma2.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_mc {
        let z: f64 = StandardNormal.sample(&mut rng);
        let excess = sigma * z - peak;
        if excess > 0.0 {
            let y = 2.0 * excess * excess;
            sum += y;
            sum_sq += y * y;
        }
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(McEstimate {
        value: mean,
        std_error: (var / n).sqrt(),
        n: n_mc,
    })
}

/// Trapezoid quadrature of `2 ∫ (x - Peak_c)^2 p(x) dx` over `[Peak_c, Peak_c + 10σ]`.
pub fn clipping_noise_quadrature(papr_t_db: f64, sigma2: f64, intervals: usize) -> Result<f64> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::param("sigma2", "must be positive"));
    }
    if intervals == 0 {
        return Err(Error::param("intervals", "must be positive"));
    }
    let peak = peak_c(papr_t_db, sigma2)?;
    let sigma = sigma2.sqrt();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sigma2).sqrt();
    let f = |x: f64| 2.0 * (x - peak).powi(2) * norm * (-x * x / (2.0 * sigma2)).exp();
    let h = 10.0 * sigma / intervals as f64;
    let inner: f64 = (1..intervals).map(|i| f(peak + i as f64 * h)).sum();
    Ok(h * (0.5 * f(peak) + inner + 0.5 * f(peak + 10.0 * sigma)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::synth_gaussian_vibration;
    use proptest::prelude::*;

    fn unit() -> MuLawParams {
        MuLawParams::new(255.0, 1.0).unwrap()
    }

    #[test]
    fn compress_reference_points() {
        let y = mu_compress(&[0.0, 1.0, 0.5, -1.0], &unit()).unwrap();
        assert_eq!(y[0], 0.0);
        assert!((y[1] - 1.0).abs() < 1e-15);
        // ln(128.5) / ln(256)
        assert!((y[2] - 0.875_703_068_649_234_9).abs() < 1e-12);
        assert!((y[3] + 1.0).abs() < 1e-15);
        let x = mu_expand(&[0.875_703_068_649_234_9, 0.0], &unit()).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12);
        assert_eq!(x[1], 0.0);
    }

    #[test]
    fn domain_violations() {
        assert!(matches!(mu_compress(&[1.5], &unit()), Err(Error::Range { .. })));
        assert!(matches!(mu_expand(&[-1.01], &unit()), Err(Error::Range { .. })));
        assert!(MuLawParams::new(0.0, 1.0).is_err());
        assert!(MuLawParams::new(255.0, -1.0).is_err());
        assert!(MuLawParams::fitted(255.0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn mu_law_raises_mean_power() {
        let x = synth_gaussian_vibration(5000, 1.0, 4).unwrap();
        let p = MuLawParams::fitted(255.0, x.samples()).unwrap();
        let y = mu_compress(x.samples(), &p).unwrap();
        assert!(mean_power(&y) > 5.0 * mean_power(x.samples()));
        assert!((peak_abs(&y) - peak_abs(x.samples())).abs() < 1e-12);
    }

    #[test]
    fn power_scaling() {
        let x = synth_gaussian_vibration(4096, 1.0, 9).unwrap();
        let same = power_scale(x.samples(), mean_power(x.samples())).unwrap();
        for (a, b) in same.iter().zip(x.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
        let doubled = power_scale(x.samples(), 4.0 * mean_power(x.samples())).unwrap();
        for (a, b) in doubled.iter().zip(x.samples()) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
        let quarter = power_scale(x.samples(), 0.25).unwrap();
        assert!((mean_power(&quarter) / 0.25 - 1.0).abs() < 1e-12);
        assert!(matches!(power_scale(&[0.0; 4], 1.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn compression_loss_cases() {
        let af = |v: f64| mu_law(v, DEFAULT_MU);
        let x = synth_gaussian_vibration(5000, 1.0, 21).unwrap();
        assert!(compression_loss(x.samples(), |v| v, ErrorMetric::Mse).unwrap() < 1e-24);
        assert!(compression_loss(&[0.8; 64], af, ErrorMetric::Mse).unwrap() < 1e-24);
        assert!(compression_loss(&[0.0; 64], af, ErrorMetric::Mse).is_err());

        // CL against the clipping-noise estimate at the PAPR the compression reaches
        let cl = compression_loss(x.samples(), af, ErrorMetric::Mse).unwrap();
        let p = MuLawParams::fitted(DEFAULT_MU, x.samples()).unwrap();
        let compressed = mu_compress(x.samples(), &p).unwrap();
        let papr_db = crate::papr::papr_db(crate::papr::papr_samples(&compressed).unwrap()).unwrap();
        let cn = clipping_noise_approx(papr_db, 1.0).unwrap();
        assert!((cl / cn - 1.0).abs() < 0.25, "cl {cl} cn {cn} at {papr_db} dB");
        let mae = compression_loss(x.samples(), af, ErrorMetric::Mae).unwrap();
        assert!(mae > 0.0 && mae < 1.0);
    }

    #[test]
    fn peak_c_values() {
        assert!((peak_c(0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((peak_c(10.0 * 4f64.log10(), 1.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((peak_c(8.0, 0.5).unwrap() - (10f64.powf(0.8) * 0.5).sqrt()).abs() < 1e-15);
        assert!((peak_c(8.0, 0.5).unwrap() - 1.776).abs() < 1e-3);
        assert!(peak_c(8.0, 0.0).is_err());
    }

    #[test]
    fn clipping_noise_approx_values() {
        assert_eq!(clipping_noise_approx(8.0, 0.0).unwrap(), 0.0);
        let v = clipping_noise_approx(8.0, 1.0).unwrap();
        assert!((v - 4.294_015_344_408_594e-3).abs() < 1e-15, "{v}");
        assert!(matches!(clipping_noise_approx(2.0, 1.0), Err(Error::Range { .. })));
    }

    #[test]
    fn oracle_routes_agree() {
        // quadrature reference for 6 dB (scipy.integrate.quad gives 0.0116993836479)
        let q = clipping_noise_quadrature(6.0, 1.0, 200_000).unwrap();
        assert!((q - 0.011_699_383_647_930_38).abs() < 1e-12, "{q}");
        let mc = clipping_noise_oracle(6.0, 1.0, 1_000_000, 5).unwrap();
        assert!((mc.value - q).abs() < 3.0 * mc.std_error, "{mc:?} vs {q}");
        let far = clipping_noise_oracle(40.0, 1.0, 100_000, 5).unwrap();
        assert_eq!(far.value, 0.0);
    }

    proptest! {
        #[test]
        fn roundtrip_and_symmetry(x in -1.0f64..=1.0, mu in 1.0f64..1000.0, a in 0.1f64..10.0) {
            let p = MuLawParams::new(mu, a).unwrap();
            let v = x * a;
            let y = mu_compress(&[v, -v], &p).unwrap();
            prop_assert_eq!(y[0], -y[1]);
            prop_assert!(y[0].abs() <= a * (1.0 + 1e-15));
            let back = mu_expand(&y[..1], &p).unwrap();
            prop_assert!((back[0] - v).abs() < 1e-9);
        }

        #[test]
        fn compression_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(mu_law(lo, 255.0) <= mu_law(hi, 255.0));
        }

        #[test]
        fn power_scale_keeps_papr(v in prop::collection::vec(-5.0f64..5.0, 4..64), t in 0.01f64..50.0) {
            prop_assume!(mean_power(&v) > 1e-6);
            let y = power_scale(&v, t).unwrap();
            let a = crate::papr::papr_samples(&v).unwrap();
            let b = crate::papr::papr_samples(&y).unwrap();
            prop_assert!((a - b).abs() < 1e-12 * a);
        }
    }
}
