//! Browser bindings: PAPR CCDF curves, compander and amplifier transfer
//! curves, and a seeded Monte-Carlo PAPR experiment. Every export returns a
//! flat `Float64Array` so the page can plot it without extra glue.

use vibpapr::compander::{mu_compress, MuLawParams};
use vibpapr::papr::{ccdf_closed_form, ccdf_exact, ccdf_from_paprs, papr_db, papr_samples, threshold_grid};
use vibpapr::pipeline::derive_seed;
use vibpapr::rf::RappParams;
use vibpapr::signal::synth_gaussian_vibration;
use wasm_bindgen::prelude::*;

const MAX_POINTS: usize = 20_000;
const MAX_MC_SAMPLES: usize = 20_000_000;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn grid(from_db: f64, to_db: f64, step_db: f64) -> Result<Vec<f64>, JsError> {
    let g = threshold_grid(from_db, to_db, step_db).map_err(js_err)?;
    if g.len() > MAX_POINTS {
        return Err(JsError::new("threshold grid too fine"));
    }
    Ok(g)
}

/// Rows of `[threshold_db, exact, closed_form]` for signals of `n` samples.
#[wasm_bindgen]
pub fn ccdf_curves(n: usize, from_db: f64, to_db: f64, step_db: f64) -> Result<Vec<f64>, JsError> {
    let mut out = Vec::new();
    for t in grid(from_db, to_db, step_db)? {
        out.extend([t, ccdf_exact(t, n).map_err(js_err)?, ccdf_closed_form(t, n).map_err(js_err)?]);
    }
    Ok(out)
}

/// Rows of `[input, mu_law(input), rapp(input)]` for inputs in `[0, max_in]`.
/// The μ-law curve uses `A = max_in`; the amplifier has unit gain.
#[wasm_bindgen]
pub fn transfer_curves(mu: f64, a_sat: f64, p: f64, max_in: f64, points: usize) -> Result<Vec<f64>, JsError> {
    if !(2..=MAX_POINTS).contains(&points) {
        return Err(JsError::new("points must be in 2..=20000"));
    }
    if !(max_in.is_finite() && max_in > 0.0) {
        return Err(JsError::new("max_in must be positive"));
    }
    let rapp = RappParams::new(a_sat, 1.0, p).map_err(js_err)?;
    let xs: Vec<f64> = (0..points).map(|i| max_in * i as f64 / (points - 1) as f64).collect();
    let mu_law = mu_compress(&xs, &MuLawParams::new(mu, max_in).map_err(js_err)?).map_err(js_err)?;
    Ok(xs.iter().zip(&mu_law).flat_map(|(&x, &y)| [x, y, rapp.amplify(x)]).collect())
}

/// Rows of `[threshold_db, empirical, exact]` from `n_signals` seeded
/// Gaussian signals of `n` samples each.
#[wasm_bindgen]
pub fn papr_experiment(
    n_signals: usize,
    n: usize,
    seed: u64,
    from_db: f64,
    to_db: f64,
    step_db: f64,
) -> Result<Vec<f64>, JsError> {
    if n_signals == 0 || n_signals.saturating_mul(n) > MAX_MC_SAMPLES {
        return Err(JsError::new("need 1 to 2e7 samples in total"));
    }
    let thresholds = grid(from_db, to_db, step_db)?;
    let paprs = (0..n_signals)
        .map(|i| {
            let s = synth_gaussian_vibration(n, 1.0, derive_seed(seed, "web-papr", i as u64))?;
            papr_db(papr_samples(s.samples())?)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(js_err)?;
    let curve = ccdf_from_paprs(&paprs, &thresholds, n).map_err(js_err)?;
    let mut out = Vec::with_capacity(3 * thresholds.len());
    for (&t, &p) in thresholds.iter().zip(&curve.probabilities) {
        out.extend([t, p, ccdf_exact(t, n).map_err(js_err)?]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ccdf_rows() {
        let v = ccdf_curves(500, 6.0, 8.0, 1.0).unwrap();
        assert_eq!(v.len(), 9);
        assert_eq!(v[3], 7.0);
        assert_eq!(v[4], ccdf_exact(7.0, 500).unwrap());
    }

    #[test]
    fn transfer_rows() {
        let v = transfer_curves(255.0, 1.0, 2.0, 2.0, 5).unwrap();
        assert_eq!(v.len(), 15);
        assert_eq!(&v[..3], &[0.0, 0.0, 0.0]);
        let last = &v[12..];
        assert_eq!(last[0], 2.0);
        assert!((last[1] - 2.0).abs() < 1e-12);
        assert!(last[2] < 1.0);
    }

    #[test]
    fn experiment_is_seeded() {
        let a = papr_experiment(50, 256, 3, 4.0, 12.0, 1.0).unwrap();
        assert_eq!(a, papr_experiment(50, 256, 3, 4.0, 12.0, 1.0).unwrap());
        assert!(a.chunks(3).all(|r| (0.0..=1.0).contains(&r[1])));
    }
}
