//! Iterative radix-2 Cooley-Tukey FFT.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Precomputed twiddles and bit-reversal permutation for one transform size.
///
/// A plan is immutable once built and can be shared between threads.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        // Each twiddle is evaluated directly rather than by repeated
        // multiplication so rounding error does not accumulate with k.
        let twiddles = (0..n / 2)
            .map(|k| {
                let theta = -2.0 * PI * k as f64 / n as f64;
                Complex64::new(theta.cos(), theta.sin())
            })
            .collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        Ok(Self { n, twiddles, bitrev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform, `X[k] = Σ x[n]·e^{-2πikn/N}`.
    pub fn process(&self, buf: &mut [Complex64]) -> Result<()> {
        if buf.len() != self.n {
            return Err(Error::Shape(format!(
                "fft buffer has length {}, plan expects {}",
                buf.len(),
                self.n
            )));
        }
        for i in 0..self.n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= self.n {
            let half = size / 2;
            let stride = self.n / size;
            for start in (0..self.n).step_by(size) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            size *= 2;
        }
        Ok(())
    }

    /// Half spectrum (`n/2 + 1` bins) of a real frame. Shorter frames are
    /// zero-padded to the plan length.
    pub fn real_half_spectrum(&self, frame: &[f64]) -> Result<Vec<Complex64>> {
        if frame.len() > self.n {
            return Err(Error::Shape(format!(
                "frame of {} samples exceeds fft length {}",
                frame.len(),
                self.n
            )));
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        for (dst, &x) in buf.iter_mut().zip(frame) {
            dst.re = x;
        }
        self.process(&mut buf)?;
        buf.truncate(self.n / 2 + 1);
        Ok(buf)
    }
}

/// Half spectrum of a real frame whose length is a power of two.
pub fn fft_real(frame: &[f64]) -> Result<Vec<Complex64>> {
    FftPlan::new(frame.len())?.real_half_spectrum(frame)
}

/// Full complex forward transform of a power-of-two-length buffer.
pub fn fft_complex(input: &[Complex64]) -> Result<Vec<Complex64>> {
    let plan = FftPlan::new(input.len())?;
    let mut buf = input.to_vec();
    plan.process(&mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::naive_dft;
    use proptest::prelude::*;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn constant_frame() {
        let x = fft_real(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(x.len(), 3);
        assert!(close(x[0], Complex64::new(4.0, 0.0)));
        assert!(close(x[1], Complex64::new(0.0, 0.0)));
        assert!(close(x[2], Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn impulse_is_flat() {
        let x = fft_real(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(x.iter().all(|&v| close(v, Complex64::new(1.0, 0.0))));
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(fft_real(&[0.0; 6]), Err(Error::NotPowerOfTwo(6))));
        assert!(matches!(fft_real(&[]), Err(Error::NotPowerOfTwo(0))));
    }

    #[test]
    fn length_one() {
        let x = fft_real(&[3.5]).unwrap();
        assert_eq!(x, vec![Complex64::new(3.5, 0.0)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn matches_naive_dft(log_n in 0u32..10, seed in any::<u64>()) {
            use rand::Rng;
            let n = 1usize << log_n;
            let mut rng = crate::rng::stream(seed, 0);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = fft_real(&x).unwrap();
            let slow = naive_dft(&x);
            let scale = slow.iter().map(|c| c.norm()).fold(1e-300, f64::max);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).norm() / scale < 1e-9);
            }
        }

        #[test]
        fn linearity(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            use rand::Rng;
            let mut rng = crate::rng::stream(seed, 0);
            let x: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let (fx, fy, fm) = (fft_real(&x).unwrap(), fft_real(&y).unwrap(), fft_real(&mix).unwrap());
            for k in 0..fm.len() {
                prop_assert!((fm[k] - (fx[k] * a + fy[k] * b)).norm() < 1e-9);
            }
        }
    }
}
