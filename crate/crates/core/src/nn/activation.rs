//! μ-law compression activation (μ = 255) with a clamp outside [-1, 1].

use serde::{Deserialize, Serialize};

use crate::compander::{mu_law, DEFAULT_MU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    AfMu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::AfMu => af(x),
            Activation::Linear => x,
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::AfMu => af_derivative(x),
            Activation::Linear => 1.0,
        }
    }
}

/// `sgn(x) ln(1 + 255|x|) / ln 256`, saturating at ±1 for |x| > 1.
#[inline]
pub fn af(x: f64) -> f64 {
    mu_law(x.clamp(-1.0, 1.0), DEFAULT_MU)
}

/// Subgradient of [`af`]: the analytic slope inside the unit interval, zero in the clamp.
#[inline]
pub fn af_derivative(x: f64) -> f64 {
    let a = x.abs();
    if a > 1.0 {
        0.0
    } else {
        DEFAULT_MU / ((1.0 + DEFAULT_MU * a) * DEFAULT_MU.ln_1p())
    }
}

/// Elementwise [`af`], also returning how many inputs hit the clamp.
pub fn af_forward(x: &[f64]) -> (Vec<f64>, usize) {
    let clamped = x.iter().filter(|v| v.abs() > 1.0).count();
    (x.iter().map(|&v| af(v)).collect(), clamped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compander::{mu_compress, MuLawParams};
    use proptest::prelude::*;

    #[test]
    fn reference_points() {
        assert_eq!(af(0.0), 0.0);
        assert!((af(1.0) - 1.0).abs() < 1e-15);
        assert!((af(0.5) - 0.8757030686492349).abs() < 1e-12);
        assert_eq!(af(3.0), af(1.0));
        assert_eq!(af_derivative(1.5), 0.0);
        let (_, n) = af_forward(&[0.1, -2.0, 1.0, 1.0001]);
        assert_eq!(n, 2);
    }

    proptest! {
        #[test]
        fn matches_mu_compress(x in -1.0f64..=1.0) {
            let p = MuLawParams::new(255.0, 1.0).unwrap();
            prop_assert!((af(x) - mu_compress(&[x], &p).unwrap()[0]).abs() <= 1e-12);
            prop_assert_eq!(af(-x), -af(x));
            prop_assert!(af(x).abs() <= 1.0);
        }

        #[test]
        fn derivative_matches_difference(x in 0.001f64..0.999, s in prop::bool::ANY) {
            let x = if s { x } else { -x };
            let h = 1e-7;
            let fd = (af(x + h) - af(x - h)) / (2.0 * h);
            prop_assert!((fd - af_derivative(x)).abs() <= 1e-5 * fd.abs());
        }
    }
}
