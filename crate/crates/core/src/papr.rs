//! Peak-to-average power ratio and its complementary CDF.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{SignalSet, VibrationSignal};
use crate::special::erfc;

/// Lowest threshold accepted by the asymptotic CCDF formula.
pub const CLOSED_FORM_FLOOR_DB: f64 = 3.0;

/// Finite-sample PAPR of raw samples, `max|x|^2 / mean(|x|^2)`.
pub fn papr_samples(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Degenerate("empty signal".into()));
    }
    let mut peak = 0.0_f64;
    let mut sum = 0.0;
    for v in x {
        let p = v * v;
        peak = peak.max(p);
        sum += p;
    }
    if sum == 0.0 {
        return Err(Error::Degenerate("all-zero signal has no PAPR".into()));
    }
    // max(p) * n / sum(p) >= 1 mathematically; clamp rounding noise on constants
    Ok((peak * x.len() as f64 / sum).max(1.0))
}

pub fn papr(signal: &VibrationSignal) -> Result<f64> {
    papr_samples(signal.samples())
}

pub fn papr_db(ratio: f64) -> Result<f64> {
    if !(ratio > 0.0) {
        return Err(Error::param("ratio", format!("must be positive, got {ratio}")));
    }
    Ok(10.0 * ratio.log10())
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn check_n(n_samples: usize) -> Result<()> {
    if n_samples == 0 {
        return Err(Error::param("n_samples", "must be at least 1"));
    }
    Ok(())
}

/// `1 - erf(sqrt(P_o/2))^N` for a Gaussian record of `n_samples` samples.
///
/// Evaluated as `-expm1(N * ln(1 - erfc))` so the result keeps full relative
/// precision both near 0 and near 1.
pub fn ccdf_exact(p_o_db: f64, n_samples: usize) -> Result<f64> {
    check_n(n_samples)?;
    if p_o_db.is_nan() {
        return Err(Error::param("p_o_db", "NaN threshold"));
    }
    let tail = erfc((db_to_linear(p_o_db) / 2.0).sqrt());
    Ok((-(n_samples as f64 * (-tail).ln_1p()).exp_m1()).clamp(0.0, 1.0))
}

/// Asymptotic CCDF `1 - (1 - exp(-P_o/2)/sqrt(P_o*pi/2))^N`, valid for large `P_o`.
pub fn ccdf_closed_form(p_o_db: f64, n_samples: usize) -> Result<f64> {
    check_n(n_samples)?;
    if !(p_o_db >= CLOSED_FORM_FLOOR_DB) {
        return Err(Error::range(
            "p_o_db",
            p_o_db,
            format!("asymptotic CCDF needs P_o >= {CLOSED_FORM_FLOOR_DB} dB"),
        ));
    }
    let p = db_to_linear(p_o_db);
    let tail = ((-p / 2.0).exp() / (p * std::f64::consts::PI / 2.0).sqrt()).min(1.0);
    Ok((-(n_samples as f64 * (-tail).ln_1p()).exp_m1()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcdfKind {
    Exact,
    ClosedForm,
    Empirical,
}

impl CcdfKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CcdfKind::Exact => "exact",
            CcdfKind::ClosedForm => "closed_form",
            CcdfKind::Empirical => "empirical",
        }
    }
}

/// `(threshold, probability)` pairs with ascending thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcdfCurve {
    pub thresholds_db: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub kind: CcdfKind,
    pub n_samples: usize,
}

impl CcdfCurve {
    pub fn exact(thresholds_db: &[f64], n_samples: usize) -> Result<Self> {
        check_sorted(thresholds_db)?;
        let probabilities = thresholds_db
            .iter()
            .map(|&t| ccdf_exact(t, n_samples))
            .collect::<Result<_>>()?;
        Ok(Self {
            thresholds_db: thresholds_db.to_vec(),
            probabilities,
            kind: CcdfKind::Exact,
            n_samples,
        })
    }

    pub fn closed_form(thresholds_db: &[f64], n_samples: usize) -> Result<Self> {
        check_sorted(thresholds_db)?;
        let probabilities = thresholds_db
            .iter()
            .map(|&t| ccdf_closed_form(t, n_samples))
            .collect::<Result<_>>()?;
        Ok(Self {
            thresholds_db: thresholds_db.to_vec(),
            probabilities,
            kind: CcdfKind::ClosedForm,
            n_samples,
        })
    }

    /// Probability at a threshold on the curve's grid, if present.
    pub fn at(&self, threshold_db: f64) -> Option<f64> {
        self.thresholds_db
            .iter()
            .position(|t| (t - threshold_db).abs() < 1e-9)
            .map(|i| self.probabilities[i])
    }

    /// CSV with header `threshold_db,probability,kind,N`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold_db,probability,kind,N\n");
        for (t, p) in self.thresholds_db.iter().zip(&self.probabilities) {
            let _ = writeln!(out, "{t},{p},{},{}", self.kind.as_str(), self.n_samples);
        }
        out
    }
}

fn check_sorted(thresholds_db: &[f64]) -> Result<()> {
    if thresholds_db.iter().any(|t| t.is_nan()) {
        return Err(Error::param("thresholds_db", "NaN threshold"));
    }
    if thresholds_db.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("thresholds_db", "thresholds must be ascending"));
    }
    Ok(())
}

/// Evenly spaced grid `from, from+step, ..., to` (inclusive within rounding).
pub fn threshold_grid(from_db: f64, to_db: f64, step_db: f64) -> Result<Vec<f64>> {
    if !(step_db > 0.0) || !(to_db >= from_db) {
        return Err(Error::param("step_db", "need step > 0 and to >= from"));
    }
    let n = ((to_db - from_db) / step_db + 1e-9).floor() as usize;
    // snap to a 1e-9 dB lattice so 6 + 1*0.1 prints as 6.1
    Ok((0..=n).map(|i| ((from_db + i as f64 * step_db) * 1e9).round() / 1e9).collect())
}

/// PAPR in dB for every signal of a set, in set order.
pub fn papr_db_per_signal(set: &SignalSet) -> Result<Vec<f64>> {
    set.iter().map(|s| papr(s).and_then(papr_db)).collect()
}

/// Fraction of signals whose PAPR strictly exceeds each threshold.
pub fn ccdf_empirical(set: &SignalSet, thresholds_db: &[f64]) -> Result<CcdfCurve> {
    let paprs = papr_db_per_signal(set)?;
    ccdf_from_paprs(&paprs, thresholds_db, set.segment_len())
}

/// Empirical CCDF from precomputed per-signal PAPR values (dB).
pub fn ccdf_from_paprs(paprs_db: &[f64], thresholds_db: &[f64], n_samples: usize) -> Result<CcdfCurve> {
    if paprs_db.is_empty() {
        return Err(Error::param("set", "need at least one signal"));
    }
    check_sorted(thresholds_db)?;
    let mut sorted = paprs_db.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len() as f64;
    let probabilities = thresholds_db
        .iter()
        .map(|&t| {
            let at_or_below = sorted.partition_point(|&p| p <= t);
            (sorted.len() - at_or_below) as f64 / total
        })
        .collect();
    Ok(CcdfCurve {
        thresholds_db: thresholds_db.to_vec(),
        probabilities,
        kind: CcdfKind::Empirical,
        n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn papr_reference_waveforms() {
        let sine: Vec<f64> = (0..100_000)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / 1000.0).sin())
            .collect();
        assert!((papr_samples(&sine).unwrap() - 2.0).abs() < 1e-6);
        assert!((papr_db(2.0).unwrap() - 3.0103).abs() < 1e-4);
        assert_eq!(papr_samples(&[0.7; 32]).unwrap(), 1.0);
        assert_eq!(papr_samples(&[0.0, 0.0, 0.0, 2.0]).unwrap(), 4.0);
        assert!(matches!(papr_samples(&[0.0; 8]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn papr_db_values() {
        assert_eq!(papr_db(1.0).unwrap(), 0.0);
        assert!((papr_db(10.0).unwrap() - 10.0).abs() < 1e-15);
        assert!(papr_db(0.0).is_err());
        assert!(papr_db(-1.0).is_err());
    }

    #[test]
    fn exact_ccdf_values() {
        // oracle: 1 - erf(sqrt(5)) evaluated independently (Simpson quadrature
        // of the Gaussian tail, see special.rs tests) = 1.565402258002548e-3
        let v = ccdf_exact(10.0, 1).unwrap();
        assert!((v - 1.565_402_258_002_548e-3).abs() < 1e-14, "{v}");
        assert!((ccdf_exact(-80.0, 1).unwrap() - 1.0).abs() < 1e-3);
        assert!(ccdf_exact(-300.0, 10).unwrap() > 0.999_999);
        let mut last = 0.0;
        for n in [1, 10, 100, 1000, 10_000, 100_000] {
            let p = ccdf_exact(10.0, n).unwrap();
            assert!(p >= last);
            last = p;
        }
        assert!(last > 0.999);
        assert!(ccdf_exact(10.0, 0).is_err());
    }

    #[test]
    fn closed_form_values() {
        // direct evaluation: exp(-5)/sqrt(5*pi) = 1.7000733205040364e-3
        let v = ccdf_closed_form(10.0, 1).unwrap();
        assert!((v - 1.700_073_320_504_036e-3).abs() < 1e-14, "{v}");
        assert!(ccdf_closed_form(10.0, 1_000_000).unwrap() > 0.999_999);
        assert!(matches!(ccdf_closed_form(2.9, 10), Err(Error::Range { .. })));
        assert!(ccdf_closed_form(3.0, 10).is_ok());
    }

    #[test]
    fn closed_form_overestimates_by_the_asymptotic_tail_error() {
        // erfc(x) < exp(-x^2)/(x sqrt(pi)) < erfc(x) * (1 + 1/(2x^2)) / (1 - ...)
        // so the closed form sits above the exact curve everywhere it is defined.
        for n in [50, 500, 5000] {
            for i in 0..=80 {
                let t = 6.0 + 0.1 * i as f64;
                let e = ccdf_exact(t, n).unwrap();
                let c = ccdf_closed_form(t, n).unwrap();
                assert!(c >= e - 1e-15, "N={n} t={t}");
                assert!(c - e < 0.06, "N={n} t={t} gap {}", c - e);
            }
        }
    }

    #[test]
    fn empirical_ccdf_by_construction() {
        // fifteen unit samples and one peak chosen for a PAPR of exactly 9 dB
        let r = 10f64.powf(0.9);
        let peak = (r * 15.0 / (16.0 - r)).sqrt();
        let mut x = vec![1.0; 15];
        x.push(peak);
        let p = papr_db(papr_samples(&x).unwrap()).unwrap();
        assert!((p - 9.0).abs() < 1e-9, "{p}");
        let set = SignalSet::from_rows(vec![x], 1.0, "one").unwrap();
        let c = ccdf_empirical(&set, &[8.0, 10.0]).unwrap();
        assert_eq!(c.probabilities, vec![1.0, 0.0]);
        let c = ccdf_empirical(&set, &[-5.0, 0.0, 1.0]).unwrap();
        assert_eq!(c.probabilities, vec![1.0, 1.0, 1.0]);
        assert!(ccdf_empirical(&set, &[3.0, 2.0]).is_err());
    }

    #[test]
    fn empirical_uses_strict_inequality() {
        let c = ccdf_from_paprs(&[5.0, 6.0], &[5.0, 6.0], 4).unwrap();
        assert_eq!(c.probabilities, vec![0.5, 0.0]);
    }

    #[test]
    fn csv_layout() {
        let c = CcdfCurve::closed_form(&[6.0, 6.5], 50).unwrap();
        let csv = c.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("threshold_db,probability,kind,N"));
        assert!(lines.next().unwrap().ends_with(",closed_form,50"));
    }

    #[test]
    fn grid_is_inclusive() {
        let g = threshold_grid(6.0, 14.0, 0.1).unwrap();
        assert_eq!(g.len(), 81);
        assert!((g[80] - 14.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn papr_scale_invariant(v in prop::collection::vec(-10.0f64..10.0, 2..64), c in 0.01f64..100.0, neg in any::<bool>()) {
            prop_assume!(v.iter().any(|x| x.abs() > 1e-6));
            let c = if neg { -c } else { c };
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let a = papr_samples(&v).unwrap();
            let b = papr_samples(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
            prop_assert!(a >= 1.0);
        }

        #[test]
        fn analytic_ccdfs_monotone(t in 3.0f64..16.0, dt in 0.0f64..2.0, n in 1usize..20_000, dn in 0usize..5000) {
            let e0 = ccdf_exact(t, n).unwrap();
            prop_assert!(ccdf_exact(t + dt, n).unwrap() <= e0 + 1e-15);
            prop_assert!(ccdf_exact(t, n + dn).unwrap() >= e0 - 1e-15);
            let c0 = ccdf_closed_form(t, n).unwrap();
            prop_assert!(ccdf_closed_form(t + dt, n).unwrap() <= c0 + 1e-15);
            prop_assert!(ccdf_closed_form(t, n + dn).unwrap() >= c0 - 1e-15);
            prop_assert!((0.0..=1.0).contains(&e0) && (0.0..=1.0).contains(&c0));
        }
    }
}
