//! Iterative radix-2 FFT. Sizes must be powers of two.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

#[allow(unused_imports)]
use crate::math::Float;

/// Precomputed twiddles and bit-reversal permutation for one transform size.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl Fft {
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2, "FFT size must be a power of two");
        let bits = n.trailing_zeros();
        let bitrev = (0..n).map(|i| i.reverse_bits() >> (usize::BITS - bits)).collect();
        let twiddles = (0..n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Self { n, twiddles, bitrev }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// In-place forward transform.
    pub fn process(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n);
        for i in 0..self.n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= self.n {
            let half = size / 2;
            let step = self.n / size;
            for start in (0..self.n).step_by(size) {
                for k in 0..half {
                    let w = self.twiddles[k * step];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            size *= 2;
        }
    }

    /// Power spectrum `|X_k|^2` for `k = 0..=n/2` of a real frame, zero-padded to `n`.
    pub fn power_spectrum(&self, frame: &[f64], scratch: &mut Vec<Complex64>, out: &mut Vec<f64>) {
        scratch.clear();
        scratch.extend(frame.iter().take(self.n).map(|&x| Complex64::new(x, 0.0)));
        scratch.resize(self.n, Complex64::new(0.0, 0.0));
        self.process(scratch);
        out.clear();
        out.extend(scratch[..=self.n / 2].iter().map(|c| c.norm_sqr()));
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, v)| v * Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let x: Vec<Complex64> =
            (0..64).map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos())).collect();
        let mut y = x.clone();
        Fft::new(64).process(&mut y);
        for (a, b) in y.iter().zip(naive_dft(&x)) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn power_of_bin_centred_tone() {
        let fft = Fft::new(32);
        let frame: Vec<f64> = (0..32).map(|i| (2.0 * PI * 4.0 * i as f64 / 32.0).cos()).collect();
        let (mut s, mut p) = (vec![], vec![]);
        fft.power_spectrum(&frame, &mut s, &mut p);
        assert_eq!(p.len(), 17);
        assert!((p[4] - 256.0).abs() < 1e-9);
        assert!(p[3] < 1e-18 && p[5] < 1e-18);
    }
}
