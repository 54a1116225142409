//! FFT-based linear convolution and bracketed root refinement.

mod fft;
mod root;

pub use fft::FftPlan;
pub use root::refine_root;

use num_complex::Complex;

use crate::{Error, Result, Scalar};

/// Zero-padded FFT convolution with a fixed signal length, kernel length and
/// kernel origin.
///
/// Output sample `i` is `Σ_j signal[j] · kernel[i − j + center]`, i.e. the
/// linear convolution sampled on the signal grid with the kernel origin at
/// zero shift. The transform length is the next power of two at or above
/// `signal_len + kernel_len − 1`, so no circular wrap-around occurs.
///
/// Spectra hold the `size/2 + 1` non-redundant bins of a real sequence and
/// are computed with a half-length complex transform.
#[derive(Debug, Clone)]
pub struct Convolver<T> {
    signal_len: usize,
    kernel_len: usize,
    center: usize,
    size: usize,
    plan: FftPlan<T>,
    /// `e^{−2πik/size}` for `k = 0..=size/2`.
    post: Vec<Complex<T>>,
}

impl<T: Scalar> Convolver<T> {
    pub fn new(signal_len: usize, kernel_len: usize, center: usize) -> Result<Self> {
        if signal_len == 0 || kernel_len == 0 {
            return Err(Error::InvalidArgument("convolution of an empty sequence".into()));
        }
        if center >= kernel_len {
            return Err(Error::InvalidArgument(format!("kernel center {center} outside kernel of length {kernel_len}")));
        }
        let size = (signal_len + kernel_len - 1).next_power_of_two().max(2);
        let half = size / 2;
        let post = (0..=half)
            .map(|k| {
                let ang = -2.0 * std::f64::consts::PI * k as f64 / size as f64;
                Complex::new(T::of(ang.cos()), T::of(ang.sin()))
            })
            .collect();
        Ok(Self { signal_len, kernel_len, center, size, plan: FftPlan::new(half), post })
    }

    /// Transform length.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel_len
    }

    /// Non-redundant spectrum of a zero-padded real sequence.
    pub fn spectrum(&self, x: &[T]) -> Vec<Complex<T>> {
        debug_assert!(x.len() <= self.size);
        let m = self.size / 2;
        let mut z = vec![Complex::new(T::zero(), T::zero()); m];
        for (k, pair) in x.chunks(2).enumerate() {
            z[k].re = pair[0];
            if let Some(&v) = pair.get(1) {
                z[k].im = v;
            }
        }
        self.plan.forward(&mut z);
        let half = T::of(0.5);
        (0..=m)
            .map(|k| {
                let a = z[k % m];
                let b = z[(m - k) % m].conj();
                let even = (a + b) * half;
                let d = (a - b) * half;
                // (a − b) / 2i
                let odd = Complex::new(d.im, -d.re);
                even + self.post[k] * odd
            })
            .collect()
    }

    /// Spectra of two real sequences.
    pub fn spectra(&self, a: &[T], b: &[T]) -> (Vec<Complex<T>>, Vec<Complex<T>>) {
        (self.spectrum(a), self.spectrum(b))
    }

    /// Inverse-transforms the spectrum of a real sequence and extracts the
    /// aligned window.
    pub fn window(&self, spectrum: &[Complex<T>]) -> Vec<T> {
        let m = self.size / 2;
        debug_assert_eq!(spectrum.len(), m + 1);
        let half = T::of(0.5);
        let mut z: Vec<Complex<T>> = (0..m)
            .map(|k| {
                let a = spectrum[k];
                let b = spectrum[m - k].conj();
                let even = (a + b) * half;
                let odd = (a - b) * half * self.post[k].conj();
                even + Complex::new(-odd.im, odd.re)
            })
            .collect();
        self.plan.inverse(&mut z);
        (self.center..self.center + self.signal_len).map(|i| if i % 2 == 0 { z[i / 2].re } else { z[i / 2].im }).collect()
    }

    /// Windows two spectra.
    pub fn window_pair(&self, a: &[Complex<T>], b: &[Complex<T>]) -> (Vec<T>, Vec<T>) {
        (self.window(a), self.window(b))
    }

    /// Pointwise product of two spectra followed by [`Convolver::window`].
    pub fn apply(&self, a: &[Complex<T>], b: &[Complex<T>]) -> Vec<T> {
        let prod: Vec<_> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        self.window(&prod)
    }

    /// One-shot convolution.
    pub fn convolve(&self, signal: &[T], kernel: &[T]) -> Vec<T> {
        self.apply(&self.spectrum(signal), &self.spectrum(kernel))
    }
}

/// Linear convolution of two equal-length sequences on the signal grid.
///
/// `kernel_center` is the index of the kernel's origin sample; output `i` is
/// `Σ_j signal[j] · kernel[i − j + kernel_center]`.
pub fn linear_convolve<T: Scalar>(signal: &[T], kernel: &[T], kernel_center: usize) -> Result<Vec<T>> {
    if signal.len() != kernel.len() {
        return Err(Error::InvalidArgument(format!("signal length {} differs from kernel length {}", signal.len(), kernel.len())));
    }
    if signal.iter().chain(kernel).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite convolution input".into()));
    }
    let conv = Convolver::new(signal.len(), kernel.len(), kernel_center)?;
    Ok(conv.convolve(signal, kernel))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(s: &[f64], k: &[f64], c: usize) -> Vec<f64> {
        let n = s.len();
        (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for (j, &sj) in s.iter().enumerate() {
                    let idx = i as isize - j as isize + c as isize;
                    if idx >= 0 && (idx as usize) < k.len() {
                        acc += sj * k[idx as usize];
                    }
                }
                acc
            })
            .collect()
    }

    #[test]
    fn impulse_translates_kernel() {
        let n = 16;
        let mut s = vec![0.0; n];
        s[5] = 1.0;
        let k: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + (i as f64 - 8.0).powi(2))).collect();
        let out = linear_convolve(&s, &k, 8).unwrap();
        for i in 0..n {
            let src = i as isize - 5 + 8;
            let want = if (0..n as isize).contains(&src) { k[src as usize] } else { 0.0 };
            assert!((out[i] - want).abs() < 1e-14, "{i}");
        }
    }

    #[test]
    fn boxcar_with_boxcar_is_triangle() {
        let n = 32;
        let mut s = vec![0.0; n];
        let mut k = vec![0.0; n];
        for i in 10..14 {
            s[i] = 1.0;
        }
        for i in 0..4 {
            k[i] = 1.0;
        }
        let out = linear_convolve(&s, &k, 0).unwrap();
        let want = direct(&s, &k, 0);
        for i in 0..n {
            assert!((out[i] - want[i]).abs() < 1e-12);
        }
        assert!((out[13] - 4.0).abs() < 1e-12);
        assert!((out[10] - 1.0).abs() < 1e-12);
        assert!((out[16] - 1.0).abs() < 1e-12);
        assert!(out[17].abs() < 1e-12);
    }

    #[test]
    fn gaussian_semigroup_on_grid() {
        let dt = 0.01;
        let n = 2001;
        let c = n / 2;
        let g = |t: f64, v: f64| (-t * t / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let t = |i: usize| (i as f64 - c as f64) * dt;
        let s: Vec<f64> = (0..n).map(|i| g(t(i), 1.0)).collect();
        let k: Vec<f64> = (0..n).map(|i| g(t(i), 2.0) * dt).collect();
        let out = linear_convolve(&s, &k, c).unwrap();
        for i in 0..n {
            assert!((out[i] - g(t(i), 3.0)).abs() < 1e-6, "{i}");
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(linear_convolve(&[1.0, 2.0], &[1.0], 0).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(linear_convolve(&[1.0, f64::NAN], &[1.0, 0.0], 0).is_err());
    }

    #[test]
    fn fft_round_trip() {
        let plan = FftPlan::<f64>::new(64);
        let orig: Vec<Complex<f64>> = (0..64).map(|i| Complex::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let mut buf = orig.clone();
        plan.forward(&mut buf);
        plan.inverse(&mut buf);
        for (a, b) in orig.iter().zip(&buf) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn fft_matches_dft() {
        let n = 32;
        let plan = FftPlan::<f64>::new(n);
        let x: Vec<Complex<f64>> = (0..n).map(|i| Complex::new(i as f64 * 0.1, -(i as f64).sqrt())).collect();
        let mut buf = x.clone();
        plan.forward(&mut buf);
        for k in 0..n {
            let mut acc = Complex::new(0.0, 0.0);
            for (j, xj) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                acc += xj * Complex::new(ang.cos(), ang.sin());
            }
            assert!((acc - buf[k]).norm() < 1e-10);
        }
    }

    #[test]
    fn real_spectrum_matches_complex_transform() {
        let conv = Convolver::<f64>::new(20, 20, 10).unwrap();
        let a: Vec<f64> = (0..27).map(|i| (i as f64).cos()).collect();
        let spectrum = conv.spectrum(&a);
        let plan = FftPlan::<f64>::new(conv.size());
        let mut full = vec![Complex::new(0.0, 0.0); conv.size()];
        for (z, &v) in full.iter_mut().zip(&a) {
            z.re = v;
        }
        plan.forward(&mut full);
        for k in 0..=conv.size() / 2 {
            assert!((spectrum[k] - full[k]).norm() < 1e-12, "{k}");
        }
    }

    #[test]
    fn window_inverts_spectrum() {
        let conv = Convolver::<f64>::new(9, 4, 2).unwrap();
        let a: Vec<f64> = (0..9).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let back = conv.window(&conv.spectrum(&a));
        for i in 0..7 {
            assert!((back[i] - a[i + 2]).abs() < 1e-14);
        }
    }

    #[test]
    fn single_precision_convolution() {
        let s: Vec<f32> = (0..50).map(|i| (i as f32 * 0.2).sin().abs()).collect();
        let k: Vec<f32> = (0..50).map(|i| (-(i as f32 - 25.0).powi(2) / 20.0).exp()).collect();
        let out = linear_convolve(&s, &k, 25).unwrap();
        let s64: Vec<f64> = s.iter().map(|&v| v as f64).collect();
        let k64: Vec<f64> = k.iter().map(|&v| v as f64).collect();
        let want = direct(&s64, &k64, 25);
        for i in 0..50 {
            assert!((out[i] as f64 - want[i]).abs() < 1e-4 * (1.0 + want[i].abs()));
        }
    }
}
