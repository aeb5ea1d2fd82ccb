//! In-place iterative radix-2 FFT.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Forward transform `X[k] = sum_n x[n] exp(-2πi kn/N)`; length must be a power of two.
pub fn fft_in_place(buf: &mut [Complex64]) -> Result<()> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::param("nfft", format!("{n} is not a power of two")));
    }
    let bits = n.trailing_zeros();
    if bits == 0 {
        return Ok(());
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = -2.0 * std::f64::consts::PI / len as f64;
        // twiddles computed directly per index to avoid accumulated rotation error
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, step * k as f64))
            .collect();
        for chunk in buf.chunks_exact_mut(len) {
            let (lo, hi) = chunk.split_at_mut(half);
            for k in 0..half {
                let t = hi[k] * twiddles[k];
                hi[k] = lo[k] - t;
                lo[k] += t;
            }
        }
        len <<= 1;
    }
    Ok(())
}

/// Zero-padded transform of a real sequence.
pub fn rfft_padded(x: &[f64], nfft: usize) -> Result<Vec<Complex64>> {
    if x.len() > nfft {
        return Err(Error::param("nfft", "shorter than the input"));
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(nfft, Complex64::new(0.0, 0.0));
    fft_in_place(&mut buf)?;
    Ok(buf)
}
