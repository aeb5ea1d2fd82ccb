//! Central finite-difference checks for the hand-written backward passes.
//! Each function returns the largest elementwise relative error
//! `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::activation::{af, af_derivative};
use super::layers::{conv1d_backward, conv1d_forward, upsample_backward, upsample_forward, LayerSpec};
use super::model::{CompanderModel, Gradients};

const STEP: f64 = 1e-6;
/// Convolution and upsampling are linear in every input, so a central
/// difference has no truncation error there and a larger step only cuts
/// roundoff.
const LINEAR_STEP: f64 = 1e-3;

fn rel(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Fourth-order central difference of `f` with respect to each entry of `p`.
fn numeric_grad(p: &mut [f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            let mut at = |d: f64| {
                p[i] = orig + d;
                f(p)
            };
            let g = (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step);
            p[i] = orig;
            g
        })
        .collect()
}

fn worst(a: &[f64], n: &[f64]) -> f64 {
    a.iter().zip(n).map(|(&x, &y)| rel(x, y)).fold(0.0, f64::max)
}

/// Activation slope at random points away from the kinks at 0 and ±1.
pub fn check_af(n_points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_points)
        .map(|_| {
            let mag = rng.gen_range(1e-3..0.999);
            let x = if rng.gen::<bool>() { mag } else { -mag };
            let numeric = (af(x + STEP) - af(x - STEP)) / (2.0 * STEP);
            rel(af_derivative(x), numeric)
        })
        .fold(0.0, f64::max)
}

/// Input, kernel and bias gradients of one convolution under a random linear loss.
pub fn check_conv1d(spec: &LayerSpec, len_in: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cin, cout, k) = (spec.in_channels, spec.out_channels, spec.kernel_len);
    let len_out = len_in / spec.stride;
    let mut x = uniform(&mut rng, cin * len_in, -1.0, 1.0);
    let mut w = uniform(&mut rng, cout * cin * k, -1.0, 1.0);
    let mut b = uniform(&mut rng, cout, -1.0, 1.0);
    let r = uniform(&mut rng, cout * len_out, -1.0, 1.0);
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; b.len()];
    let gx = conv1d_backward(&x, len_in, &w, spec, &r, &mut gw, &mut gb);
    let (w0, b0, x0) = (w.clone(), b.clone(), x.clone());
    let nx = numeric_grad(&mut x, LINEAR_STEP, |xs| dot(&r, &conv1d_forward(xs, len_in, &w0, &b0, spec)));
    let nw = numeric_grad(&mut w, LINEAR_STEP, |ws| dot(&r, &conv1d_forward(&x0, len_in, ws, &b0, spec)));
    let nb = numeric_grad(&mut b, LINEAR_STEP, |bs| dot(&r, &conv1d_forward(&x0, len_in, &w0, bs, spec)));
    worst(&gx, &nx).max(worst(&gw, &nw)).max(worst(&gb, &nb))
}

pub fn check_upsample(channels: usize, len_in: usize, factor: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = uniform(&mut rng, channels * len_in, -1.0, 1.0);
    let r = uniform(&mut rng, channels * len_in * factor, -1.0, 1.0);
    let gx = upsample_backward(&r, channels, len_in, factor);
    let nx = numeric_grad(&mut x, LINEAR_STEP, |xs| dot(&r, &upsample_forward(xs, channels, len_in, factor)));
    worst(&gx, &nx)
}

/// Distance of the closest activation input to a point where the activation
/// is not smooth (0 and the clamp edges ±1). Finite differences straddling
/// such a point are meaningless, so checks should use inputs with a margin
/// well above the step size.
pub fn kink_margin(model: &CompanderModel, x: &[f64]) -> f64 {
    model.forward_trace(x).1.kink_margin(&model.layers, model.output_gain.is_some())
}

/// Every trainable parameter of a whole model, including the output gain.
pub fn check_model(model: &CompanderModel, x: &[f64], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = uniform(&mut rng, x.len(), -1.0, 1.0);
    let (_, trace) = model.forward_trace(x);
    let mut grads = Gradients::zeros_like(model);
    model.backward(&trace, &r, &mut grads);
    let mut probe = model.clone();
    let mut err: f64 = 0.0;
    for li in 0..model.weights.len() {
        for which in 0..2 {
            let mut p = if which == 0 { model.weights[li].kernel.clone() } else { model.weights[li].bias.clone() };
            let numeric = numeric_grad(&mut p, STEP, |ps| {
                if which == 0 {
                    probe.weights[li].kernel.copy_from_slice(ps);
                } else {
                    probe.weights[li].bias.copy_from_slice(ps);
                }
                dot(&r, &probe.forward_trace(x).0)
            });
            probe.weights[li] = model.weights[li].clone();
            let analytic = if which == 0 { &grads.layers[li].kernel } else { &grads.layers[li].bias };
            err = err.max(worst(analytic, &numeric));
        }
    }
    if let Some(g) = model.output_gain {
        let mut p = vec![g];
        let numeric = numeric_grad(&mut p, STEP, |ps| {
            probe.output_gain = Some(ps[0]);
            dot(&r, &probe.forward_trace(x).0)
        });
        err = err.max(rel(grads.output_gain, numeric[0]));
    }
    err
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::activation::Activation;
    use crate::nn::model::{build_model, ArchConfig, Normalization, Role};

    #[test]
    fn layers_pass() {
        assert!(check_af(500, 1) < 1e-5);
        for (i, spec) in [
            LayerSpec::conv(1, 3, 5, 1, Activation::Linear),
            LayerSpec::conv(2, 3, 9, 2, Activation::Linear),
            LayerSpec::conv(3, 1, 3, 2, Activation::Linear),
            LayerSpec::conv(3, 5, 9, 1, Activation::Linear),
            LayerSpec::conv(2, 6, 7, 2, Activation::Linear),
        ]
        .iter()
        .enumerate()
        {
            assert!(check_conv1d(spec, 16, i as u64) < 1e-5);
        }
        assert!(check_upsample(3, 5, 2, 0) < 1e-5);
    }

    #[test]
    fn models_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (role, normalization) in [
            (Role::Source, Normalization::PerSignalPeak),
            (Role::Destination, Normalization::PerSignalPeak),
            (Role::Source, Normalization::Global),
        ] {
            let arch = ArchConfig { normalization, norm_scale: 3.0, ..Default::default() };
            let m = build_model(role, 32, &arch, 5).unwrap();
            let x = loop {
                let x = uniform(&mut rng, 32, -2.0, 2.0);
                if kink_margin(&m, &x) > 1e-4 {
                    break x;
                }
            };
            let e = check_model(&m, &x, 2);
            assert!(e < 1e-5, "{role:?} {normalization:?}: {e}");
        }
    }
}
