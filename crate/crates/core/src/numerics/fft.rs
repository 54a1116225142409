//! Iterative radix-2 Cooley-Tukey transform.

use num_complex::Complex;

use crate::Scalar;

/// Precomputed twiddles and bit-reversal table for one power-of-two size.
#[derive(Debug, Clone)]
pub struct FftPlan<T> {
    n: usize,
    /// Stage with half-length `h` reads its twiddles from `tw_*[h..2h]`.
    tw_re: Vec<T>,
    tw_im: Vec<T>,
    reversed: Vec<u32>,
}

impl<T: Scalar> FftPlan<T> {
    /// Builds a plan for `n` points. `n` must be a power of two.
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "FFT size {n} is not a power of two");
        let mut tw_re = vec![T::zero(); n.max(2)];
        let mut tw_im = vec![T::zero(); n.max(2)];
        let mut h = 1;
        while h < n {
            for k in 0..h {
                // Evaluated in f64 so f32 plans keep full accuracy.
                let ang = -std::f64::consts::PI * k as f64 / h as f64;
                tw_re[h + k] = T::of(ang.cos());
                tw_im[h + k] = T::of(ang.sin());
            }
            h <<= 1;
        }
        let bits = n.trailing_zeros();
        let reversed = (0..n as u32).map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (32 - bits) }).collect();
        Self { n, tw_re, tw_im, reversed }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform, `X_k = Σ x_j e^{-2πi jk/n}`.
    pub fn forward(&self, buf: &mut [Complex<T>]) {
        assert_eq!(buf.len(), self.n);
        let mut re: Vec<T> = self.reversed.iter().map(|&r| buf[r as usize].re).collect();
        let mut im: Vec<T> = self.reversed.iter().map(|&r| buf[r as usize].im).collect();
        self.butterflies(&mut re, &mut im);
        for ((z, r), i) in buf.iter_mut().zip(re).zip(im) {
            *z = Complex::new(r, i);
        }
    }

    /// Radix-2 stages on bit-reversed split real/imaginary data.
    fn butterflies(&self, re: &mut [T], im: &mut [T]) {
        let n = self.n;
        if n < 2 {
            return;
        }
        for (r, i) in re.chunks_exact_mut(2).zip(im.chunks_exact_mut(2)) {
            let (ur, ui) = (r[0], i[0]);
            r[0] = ur + r[1];
            i[0] = ui + i[1];
            r[1] = ur - r[1];
            i[1] = ui - i[1];
        }
        let mut h = 2;
        while h < n {
            let (wr, wi) = (&self.tw_re[h..2 * h], &self.tw_im[h..2 * h]);
            for (r, i) in re.chunks_exact_mut(2 * h).zip(im.chunks_exact_mut(2 * h)) {
                let (xr, yr) = r.split_at_mut(h);
                let (xi, yi) = i.split_at_mut(h);
                for k in 0..h {
                    let vr = yr[k] * wr[k] - yi[k] * wi[k];
                    let vi = yr[k] * wi[k] + yi[k] * wr[k];
                    let (ur, ui) = (xr[k], xi[k]);
                    xr[k] = ur + vr;
                    xi[k] = ui + vi;
                    yr[k] = ur - vr;
                    yi[k] = ui - vi;
                }
            }
            h <<= 1;
        }
    }

    /// In-place inverse transform including the `1/n` factor.
    pub fn inverse(&self, buf: &mut [Complex<T>]) {
        for z in buf.iter_mut() {
            *z = z.conj();
        }
        self.forward(buf);
        let scale = T::one() / T::of_usize(self.n);
        for z in buf.iter_mut() {
            *z = z.conj() * scale;
        }
    }
}
