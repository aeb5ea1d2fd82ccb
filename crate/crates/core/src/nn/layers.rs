//! Conv1d (same padding, stride 1 or 2) and nearest-neighbour upsampling on
//! channel-major tensors: element `(c, t)` lives at `c * len + t`.

use serde::{Deserialize, Serialize};

use super::activation::Activation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv1d,
    Upsample,
}

/// One layer. For `Upsample`, `stride` is the repetition factor and
/// `kernel_len` is 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_len: usize,
    pub stride: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel_len: usize, stride: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Conv1d,
            in_channels,
            out_channels,
            kernel_len,
            stride,
            activation,
        }
    }

    pub fn upsample(channels: usize, factor: usize) -> Self {
        Self {
            kind: LayerKind::Upsample,
            in_channels: channels,
            out_channels: channels,
            kernel_len: 1,
            stride: factor,
            activation: Activation::Linear,
        }
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        let bad = |reason: String| Err(Error::param("layers", format!("layer {index}: {reason}")));
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        match self.kind {
            LayerKind::Conv1d => {
                if self.kernel_len.is_multiple_of(2) {
                    return bad(format!("kernel_len {} must be odd", self.kernel_len));
                }
                if !(self.stride == 1 || self.stride == 2) {
                    return bad(format!("stride {} must be 1 or 2", self.stride));
                }
            }
            LayerKind::Upsample => {
                if self.in_channels != self.out_channels || self.kernel_len != 1 || self.stride < 1 {
                    return bad("upsample keeps channels, kernel_len 1, factor >= 1".into());
                }
            }
        }
        Ok(())
    }

    pub fn output_len(&self, len_in: usize) -> Option<usize> {
        match self.kind {
            LayerKind::Conv1d => (len_in.is_multiple_of(self.stride)).then_some(len_in / self.stride),
            LayerKind::Upsample => Some(len_in * self.stride),
        }
    }

    pub fn kernel_shape(&self) -> [usize; 3] {
        match self.kind {
            LayerKind::Conv1d => [self.out_channels, self.in_channels, self.kernel_len],
            LayerKind::Upsample => [0, 0, 0],
        }
    }

    pub fn n_params(&self) -> usize {
        match self.kind {
            LayerKind::Conv1d => self.out_channels * (self.in_channels * self.kernel_len + 1),
            LayerKind::Upsample => 0,
        }
    }
}

/// Output positions `t` whose tap `t·s + offset` falls inside the input.
#[inline]
fn valid_range(offset: isize, stride: usize, len_in: usize, len_out: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { (-offset + s - 1) / s };
    let hi = ((len_in as isize - offset + s - 1) / s).clamp(0, len_out as isize);
    (lo as usize, (hi as usize).max(lo as usize))
}

/// Unrolls receptive fields: `cols[(c·K + k)·T + t] = x[c, t·s + k − (K−1)/2]`.
fn im2col(x: &[f64], len_in: usize, spec: &LayerSpec) -> Vec<f64> {
    let (cin, k, s) = (spec.in_channels, spec.kernel_len, spec.stride);
    let len_out = len_in / s;
    let pad = (k - 1) / 2;
    let mut cols = vec![0.0; cin * k * len_out];
    for ic in 0..cin {
        let xrow = &x[ic * len_in..(ic + 1) * len_in];
        for kk in 0..k {
            let row = &mut cols[(ic * k + kk) * len_out..(ic * k + kk + 1) * len_out];
            for (t, c) in row.iter_mut().enumerate() {
                let i = (t * s + kk) as isize - pad as isize;
                if i >= 0 && (i as usize) < len_in {
                    *c = xrow[i as usize];
                }
            }
        }
    }
    cols
}

/// Inverse scatter of [`im2col`], accumulating overlapping taps.
fn col2im(cols: &[f64], len_in: usize, spec: &LayerSpec) -> Vec<f64> {
    let (cin, k, s) = (spec.in_channels, spec.kernel_len, spec.stride);
    let len_out = len_in / s;
    let pad = (k - 1) / 2;
    let mut x = vec![0.0; cin * len_in];
    for ic in 0..cin {
        let xrow = &mut x[ic * len_in..(ic + 1) * len_in];
        for kk in 0..k {
            let row = &cols[(ic * k + kk) * len_out..(ic * k + kk + 1) * len_out];
            for (t, c) in row.iter().enumerate() {
                let i = (t * s + kk) as isize - pad as isize;
                if i >= 0 && (i as usize) < len_in {
                    xrow[i as usize] += c;
                }
            }
        }
    }
    x
}

/// `C (m×n) = beta·C + A·B` with explicit row/column strides for A and B.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, beta: f64, c: &mut [f64]) {
    assert!(c.len() >= m * n);
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), rsa as isize, csa as isize,
            b.as_ptr(), rsb as isize, csb as isize,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Below this many output channels the unrolled matrix product does not pay off.
const GEMM_MIN_OUT_CHANNELS: usize = 4;

/// `y[o, t] = b[o] + Σ_c Σ_k w[o, c, k] x[c, t·s + k − (K−1)/2]`, zero outside the input.
pub fn conv1d_forward(x: &[f64], len_in: usize, w: &[f64], b: &[f64], spec: &LayerSpec) -> Vec<f64> {
    if spec.out_channels < GEMM_MIN_OUT_CHANNELS {
        conv1d_forward_direct(x, len_in, w, b, spec)
    } else {
        conv1d_forward_gemm(x, len_in, w, b, spec)
    }
}

/// Accumulates weight and bias gradients; returns the input gradient.
pub fn conv1d_backward(
    x: &[f64],
    len_in: usize,
    w: &[f64],
    spec: &LayerSpec,
    gy: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
) -> Vec<f64> {
    if spec.out_channels < GEMM_MIN_OUT_CHANNELS {
        conv1d_backward_direct(x, len_in, w, spec, gy, gw, gb)
    } else {
        conv1d_backward_gemm(x, len_in, w, spec, gy, gw, gb)
    }
}

fn conv1d_forward_gemm(x: &[f64], len_in: usize, w: &[f64], b: &[f64], spec: &LayerSpec) -> Vec<f64> {
    let (cin, cout, k) = (spec.in_channels, spec.out_channels, spec.kernel_len);
    debug_assert_eq!(x.len(), cin * len_in);
    let len_out = len_in / spec.stride;
    let cols = im2col(x, len_in, spec);
    let mut y = vec![0.0; cout * len_out];
    for (row, bias) in y.chunks_exact_mut(len_out).zip(b) {
        row.fill(*bias);
    }
    let ck = cin * k;
    gemm(cout, ck, len_out, w, ck, 1, &cols, len_out, 1, 1.0, &mut y);
    y
}

fn conv1d_backward_gemm(
    x: &[f64],
    len_in: usize,
    w: &[f64],
    spec: &LayerSpec,
    gy: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
) -> Vec<f64> {
    let (cin, cout, k) = (spec.in_channels, spec.out_channels, spec.kernel_len);
    let len_out = len_in / spec.stride;
    let ck = cin * k;
    let cols = im2col(x, len_in, spec);
    for (g, row) in gb.iter_mut().zip(gy.chunks_exact(len_out)) {
        *g += row.iter().sum::<f64>();
    }
    // gW (cout×ck) += gY (cout×T) · colsᵀ (T×ck)
    gemm(cout, len_out, ck, gy, len_out, 1, &cols, 1, len_out, 1.0, gw);
    // gcols (ck×T) = Wᵀ (ck×cout) · gY (cout×T)
    let mut gcols = vec![0.0; ck * len_out];
    gemm(ck, cout, len_out, w, 1, ck, gy, len_out, 1, 0.0, &mut gcols);
    col2im(&gcols, len_in, spec)
}

/// `Σ_i a[i] x[i·s]` with four independent partial sums.
#[inline]
fn strided_dot(a: &[f64], x: &[f64], s: usize) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * x[i * s];
        acc[1] += a[i + 1] * x[(i + 1) * s];
        acc[2] += a[i + 2] * x[(i + 2) * s];
        acc[3] += a[i + 3] * x[(i + 3) * s];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * x[i * s];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn conv1d_forward_direct(x: &[f64], len_in: usize, w: &[f64], b: &[f64], spec: &LayerSpec) -> Vec<f64> {
    let (cin, cout, k, s) = (spec.in_channels, spec.out_channels, spec.kernel_len, spec.stride);
    let len_out = len_in / s;
    let pad = (k - 1) / 2;
    let mut y = vec![0.0; cout * len_out];
    for oc in 0..cout {
        let yrow = &mut y[oc * len_out..(oc + 1) * len_out];
        yrow.fill(b[oc]);
        for ic in 0..cin {
            let xrow = &x[ic * len_in..(ic + 1) * len_in];
            let wrow = &w[(oc * cin + ic) * k..(oc * cin + ic + 1) * k];
            for (kk, &wv) in wrow.iter().enumerate() {
                let (lo, hi) = valid_range(kk as isize - pad as isize, s, len_in, len_out);
                if lo >= hi {
                    continue;
                }
                let start = lo * s + kk - pad;
                for (yv, xv) in yrow[lo..hi].iter_mut().zip(xrow[start..].iter().step_by(s)) {
                    *yv += wv * xv;
                }
            }
        }
    }
    y
}

fn conv1d_backward_direct(
    x: &[f64],
    len_in: usize,
    w: &[f64],
    spec: &LayerSpec,
    gy: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
) -> Vec<f64> {
    let (cin, cout, k, s) = (spec.in_channels, spec.out_channels, spec.kernel_len, spec.stride);
    let len_out = len_in / s;
    let pad = (k - 1) / 2;
    let mut gx = vec![0.0; cin * len_in];
    for oc in 0..cout {
        let grow = &gy[oc * len_out..(oc + 1) * len_out];
        gb[oc] += grow.iter().sum::<f64>();
        for ic in 0..cin {
            let xrow = &x[ic * len_in..(ic + 1) * len_in];
            let off0 = (oc * cin + ic) * k;
            let gxrow = &mut gx[ic * len_in..(ic + 1) * len_in];
            for kk in 0..k {
                let wv = w[off0 + kk];
                let (lo, hi) = valid_range(kk as isize - pad as isize, s, len_in, len_out);
                if lo >= hi {
                    continue;
                }
                let start = lo * s + kk - pad;
                let g = &grow[lo..hi];
                gw[off0 + kk] += strided_dot(g, &xrow[start..], s);
                for (gxv, gv) in gxrow[start..].iter_mut().step_by(s).zip(g) {
                    *gxv += gv * wv;
                }
            }
        }
    }
    gx
}

pub fn upsample_forward(x: &[f64], channels: usize, len_in: usize, factor: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(channels * len_in * factor);
    for c in 0..channels {
        for &v in &x[c * len_in..(c + 1) * len_in] {
            y.extend(std::iter::repeat_n(v, factor));
        }
    }
    y
}

pub fn upsample_backward(gy: &[f64], channels: usize, len_in: usize, factor: usize) -> Vec<f64> {
    gy.chunks_exact(factor)
        .map(|c| c.iter().sum())
        .take(channels * len_in)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel_and_stride() {
        let spec = LayerSpec::conv(1, 1, 3, 1, Activation::Linear);
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(conv1d_forward(&x, 4, &[0.0, 1.0, 0.0], &[0.0], &spec), x.to_vec());
        // shift right by one with zero fill
        assert_eq!(conv1d_forward(&x, 4, &[1.0, 0.0, 0.0], &[0.5], &spec), vec![0.5, 1.5, 2.5, 3.5]);
        let s2 = LayerSpec::conv(1, 1, 3, 2, Activation::Linear);
        assert_eq!(conv1d_forward(&x, 4, &[1.0, 1.0, 1.0], &[0.0], &s2), vec![3.0, 9.0]);
        assert_eq!(s2.output_len(5), None);
    }

    #[test]
    fn upsample_roundtrip() {
        let y = upsample_forward(&[1.0, 2.0, 3.0, 4.0], 2, 2, 2);
        assert_eq!(y, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]);
        assert_eq!(upsample_backward(&y, 2, 2, 2), vec![2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn validation() {
        assert!(LayerSpec::conv(1, 2, 4, 1, Activation::AfMu).validate(0).is_err());
        assert!(LayerSpec::conv(1, 2, 5, 3, Activation::AfMu).validate(0).is_err());
        assert!(LayerSpec::conv(0, 2, 5, 1, Activation::AfMu).validate(0).is_err());
        assert!(LayerSpec::upsample(4, 2).validate(0).is_ok());
    }
}
