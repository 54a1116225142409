//! Gaussian kernel-density model with one component per bin, its analytic
//! derivatives, EM deconvolution fit and semi-group scale shifts.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::Convolver;
use crate::{Error, Histogram, Result, Scalar};

/// Normal density `(2π·var)^(−½) exp(−(t−mu)²/(2·var))`.
pub fn gaussian<T: Scalar>(t: T, mu: T, var: T) -> Result<T> {
    if !(var > T::zero()) {
        return Err(Error::InvalidArgument(format!("variance must be positive, got {var}")));
    }
    Ok(gauss(t - mu, var))
}

#[inline]
fn gauss<T: Scalar>(d: T, var: T) -> T {
    (-(d * d) / (var + var)).exp() / (T::TAU() * var).sqrt()
}

/// Number of standard deviations beyond which a Gaussian term underflows.
pub(crate) fn cutoff<T: Scalar>() -> T {
    (-(T::of(2.0)) * T::min_positive_value().ln()).sqrt() + T::one()
}

/// `KD(t) = Δt · Σ_j β_j 𝒢(t; t_j, σ²)` on uniformly spaced centers.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel<T> {
    centers: Vec<T>,
    weights: Vec<T>,
    variance: T,
    dt: T,
}

impl<T: Scalar> KdeModel<T> {
    /// Builds a model on `n = weights.len()` centers `t0 + iΔt`.
    ///
    /// Weights are rescaled so that `Δt · Σβ = 1`.
    pub fn new(t0: T, dt: T, weights: Vec<T>, variance: T) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one weight".into()));
        }
        if !(dt > T::zero() && dt.is_finite() && t0.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid grid t0={t0}, dt={dt}")));
        }
        if !(variance > T::zero() && variance.is_finite()) {
            return Err(Error::InvalidArgument(format!("variance must be positive, got {variance}")));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= T::zero())) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
        let mass = dt * weights.iter().copied().sum::<T>();
        if !(mass > T::zero()) {
            return Err(Error::InvalidArgument("all weights are zero".into()));
        }
        let centers = (0..weights.len()).map(|i| t0 + T::of_usize(i) * dt).collect();
        let weights = weights.into_iter().map(|w| w / mass).collect();
        Ok(Self { centers, weights, variance, dt })
    }

    /// Model on the grid of `hist`.
    pub fn on_histogram(hist: &Histogram<T>, weights: Vec<T>, variance: T) -> Result<Self> {
        if weights.len() != hist.len() {
            return Err(Error::InvalidArgument("weight count differs from bin count".into()));
        }
        Self::new(hist.t()[0], hist.dt(), weights, variance)
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn variance(&self) -> T {
        self.variance
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Indices of components that do not underflow at `t`.
    fn support(&self, t: T) -> Range<usize> {
        let reach = cutoff::<T>() * self.variance.sqrt();
        let n = self.len();
        let t0 = self.centers[0];
        let lo = ((t - reach - t0) / self.dt).ceil();
        let hi = ((t + reach - t0) / self.dt).floor();
        let lo = if lo > T::zero() { lo.to_usize().unwrap_or(n).min(n) } else { 0 };
        let hi = if hi >= T::zero() { (hi.to_usize().unwrap_or(n - 1).min(n - 1)) + 1 } else { 0 };
        lo..hi.max(lo)
    }

    /// Density at `t`.
    pub fn evaluate(&self, t: T) -> T {
        let v = self.variance;
        let sum: T = self.support(t).map(|j| self.weights[j] * gauss(t - self.centers[j], v)).sum();
        sum * self.dt
    }

    /// First derivative of the density at `t`.
    pub fn derivative1(&self, t: T) -> T {
        let v = self.variance;
        let sum: T = self
            .support(t)
            .map(|j| {
                let d = t - self.centers[j];
                -self.weights[j] * gauss(d, v) * d
            })
            .sum();
        sum * self.dt / v
    }

    /// Second derivative of the density at `t`.
    pub fn derivative2(&self, t: T) -> T {
        let v = self.variance;
        let sum: T = self
            .support(t)
            .map(|j| {
                let d = t - self.centers[j];
                self.weights[j] * gauss(d, v) * (d * d - v)
            })
            .sum();
        sum * self.dt / (v * v)
    }

    /// Density at every bin center, computed by convolution.
    pub fn evaluate_at_centers(&self) -> Vec<T> {
        let mut ws = KernelWorkspace::new(self.len());
        ws.prepare(self.variance, self.dt);
        let fb = ws.conv.spectrum(&self.weights);
        ws.conv.apply(&fb, &ws.fg).into_iter().map(|v| v.max(T::zero())).collect()
    }

    /// Same weights and centers at variance `σ² + dsigma2`.
    pub fn at_scale(&self, dsigma2: T) -> Result<Self> {
        let variance = self.variance + dsigma2;
        if !(variance > T::zero()) {
            return Err(Error::ScaleUnderflow { variance: self.variance.f64(), offset: dsigma2.f64() });
        }
        Ok(Self { variance, ..self.clone() })
    }
}

/// Form of the variance update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceRule {
    /// `σ² ← Δt Σ_i β_i [D ∗ V]_i`, whose fixed point is the current σ².
    #[default]
    Corrected,
    /// The same quantity multiplied by the current σ².
    AsPrinted,
}

/// EM iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig<T> {
    /// Stop once `Σ|Δβ|/β` falls below this.
    pub delta: T,
    pub max_iterations: usize,
    /// Floor for the model density in the ratio `h / KD`.
    pub division_floor: T,
    pub update_variance: bool,
    pub variance_rule: VarianceRule,
}

impl<T: Scalar> Default for EmConfig<T> {
    fn default() -> Self {
        Self {
            delta: T::of(1e-6),
            max_iterations: 10_000,
            division_floor: T::of(1e-12),
            update_variance: true,
            variance_rule: VarianceRule::Corrected,
        }
    }
}

impl<T: Scalar> EmConfig<T> {
    fn validate(&self) -> Result<()> {
        if !(self.delta > T::zero()) || !(self.division_floor > T::zero()) || self.max_iterations == 0 {
            return Err(Error::InvalidArgument("delta, division_floor and max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of [`em_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmFit<T> {
    pub model: KdeModel<T>,
    pub iterations: usize,
    /// Last value of the convergence ratio `Σ|Δβ|/β`.
    pub residual: T,
    pub converged: bool,
    /// `max_i |h_i − KD(t_i)|` for the returned model.
    pub fit_error: T,
}

/// State reported to an observer after each EM iteration.
#[derive(Debug)]
pub struct EmIteration<'a, T> {
    /// 1-based iteration number.
    pub iteration: usize,
    /// Convergence ratio of this iteration.
    pub residual: T,
    /// Variance after this iteration.
    pub variance: T,
    /// Weights after this iteration.
    pub weights: &'a [T],
    h: &'a [T],
    density: &'a [T],
    dt: T,
    floor: T,
}

impl<T: Scalar> EmIteration<'_, T> {
    /// `Δt Σ h ln(h / KD)` for the model that entered this iteration.
    pub fn kl(&self) -> T {
        kl_divergence(self.h, self.density, self.dt, self.floor)
    }
}

/// Discrete Kullback-Leibler divergence of density `q` from `h` on a grid.
pub fn kl_divergence<T: Scalar>(h: &[T], q: &[T], dt: T, floor: T) -> T {
    let s: T = h.iter().zip(q).filter(|(h, _)| **h > T::zero()).map(|(&h, &q)| h * (h / q.max(floor)).ln()).sum();
    s * dt
}

/// Sampled kernels and their spectra for one variance.
struct KernelWorkspace<T> {
    n: usize,
    half: usize,
    variance: Option<T>,
    conv: Convolver<T>,
    fg: Vec<num_complex::Complex<T>>,
    fv: Vec<num_complex::Complex<T>>,
}

impl<T: Scalar> KernelWorkspace<T> {
    fn new(n: usize) -> Self {
        Self { n, half: 0, variance: None, conv: Convolver::new(n, 1, 0).expect("valid sizes"), fg: Vec::new(), fv: Vec::new() }
    }

    /// Samples `Δt·𝒢(qΔt; 0, σ²)` and `(qΔt)²` times it for `|q| ≤ half`,
    /// growing the transform only when the kernel no longer fits.
    fn prepare(&mut self, variance: T, dt: T) {
        if self.variance == Some(variance) {
            return;
        }
        self.variance = Some(variance);
        let n = self.n;
        let need = (cutoff::<T>() * variance.sqrt() / dt).ceil().to_usize().unwrap_or(n).min(n - 1);
        let size = (n + 2 * need).next_power_of_two();
        // Widest kernel that still fits in this transform size.
        let half = ((size - n) / 2).min(n - 1).max(need);
        if half != self.half || self.conv.kernel_len() != 2 * half + 1 {
            self.half = half;
            self.conv = Convolver::new(n, 2 * half + 1, half).expect("valid sizes");
        }
        let mut g = vec![T::zero(); 2 * half + 1];
        let mut v = vec![T::zero(); 2 * half + 1];
        for q in 0..=half {
            let x = T::of_usize(q) * dt;
            let gq = gauss(x, variance) * dt;
            let vq = x * x * gq;
            g[half + q] = gq;
            g[half - q] = gq;
            v[half + q] = vq;
            v[half - q] = vq;
        }
        let (fg, fv) = self.conv.spectra(&g, &v);
        self.fg = fg;
        self.fv = fv;
    }
}

/// Fits a [`KdeModel`] to `hist` by EM deconvolution.
pub fn em_fit<T: Scalar>(hist: &Histogram<T>, config: &EmConfig<T>) -> Result<EmFit<T>> {
    em_fit_observed(hist, config, |_| {})
}

/// [`em_fit`] with a callback after every iteration.
pub fn em_fit_observed<T: Scalar, F>(hist: &Histogram<T>, config: &EmConfig<T>, mut observe: F) -> Result<EmFit<T>>
where
    F: FnMut(&EmIteration<'_, T>),
{
    config.validate()?;
    let n = hist.len();
    let dt = hist.dt();
    let h = hist.h();
    if !(hist.mass() > T::zero()) {
        return Err(Error::InvalidArgument("histogram has zero mass".into()));
    }
    let eps = config.division_floor;
    let var_min = dt * dt;
    let var_max = (T::of_usize(n) * dt).powi(2);
    let mut beta = vec![T::one() / (T::of_usize(n) * dt); n];
    let mut variance = dt.max(var_min);
    let mut ws = KernelWorkspace::new(n);
    let mut iterations = 0;
    let mut residual = T::infinity();
    let mut converged = false;

    while iterations < config.max_iterations {
        ws.prepare(variance, dt);
        let fb = ws.conv.spectrum(&beta);
        let density: Vec<T> = ws.conv.apply(&fb, &ws.fg).into_iter().map(|v| v.max(T::zero())).collect();
        let ratio: Vec<T> = h.iter().zip(&density).map(|(&h, &d)| h / d.max(eps)).collect();

        let fd = ws.conv.spectrum(&ratio);
        let back = ws.conv.apply(&fd, &ws.fg);
        let second = config.update_variance.then(|| ws.conv.apply(&fd, &ws.fv));

        let mut next: Vec<T> = beta.iter().zip(&back).map(|(&b, &c)| (b * c).max(T::zero())).collect();
        let mass = dt * next.iter().copied().sum::<T>();
        if !(mass > T::zero() && mass.is_finite()) {
            return Err(Error::InvalidArgument("EM weights lost all mass".into()));
        }
        for b in next.iter_mut() {
            *b /= mass;
        }

        if let Some(s) = second {
            let moment = dt * beta.iter().zip(&s).map(|(&b, &s)| b * s.max(T::zero())).sum::<T>();
            let updated = match config.variance_rule {
                VarianceRule::Corrected => moment,
                VarianceRule::AsPrinted => variance * moment,
            };
            variance = if updated.is_finite() { updated.max(var_min).min(var_max) } else { var_max };
        }

        residual = beta.iter().zip(&next).filter(|(b, _)| **b >= eps).map(|(&b, &nb)| (nb - b).abs() / b).sum();
        iterations += 1;
        observe(&EmIteration { iteration: iterations, residual, variance, weights: &next, h, density: &density, dt, floor: eps });
        beta = next;
        if residual < config.delta {
            converged = true;
            break;
        }
    }

    let model = KdeModel::on_histogram(hist, beta, variance)?;
    let fit_error = model.evaluate_at_centers().iter().zip(h).map(|(&m, &h)| (m - h).abs()).fold(T::zero(), T::max);
    Ok(EmFit { model, iterations, residual, converged, fit_error })
}

/// One row of the EM trace CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmTraceRow<T> {
    pub iteration: usize,
    pub residual: T,
    pub sigma2: T,
}

/// Writes `iteration,residual,sigma2` rows.
pub fn write_em_trace<T: Scalar>(rows: &[EmTraceRow<T>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let run = || -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        w.write_record(["iteration", "residual", "sigma2"])?;
        for r in rows {
            w.write_record([r.iteration.to_string(), format!("{:?}", r.residual), format!("{:?}", r.sigma2)])?;
        }
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.flush()
    };
    run().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(t: f64, m: f64, v: f64) -> f64 {
        (-(t - m) * (t - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
    }

    fn two_bump() -> KdeModel<f64> {
        let n = 81;
        let dt = 0.1;
        let w = (0..n)
            .map(|i| {
                let t = -4.0 + i as f64 * dt;
                0.7 * g(t, -1.5, 0.3) + 0.3 * g(t, 1.2, 0.5)
            })
            .collect();
        KdeModel::new(-4.0, dt, w, 0.2).unwrap()
    }

    #[test]
    fn gaussian_peak_value() {
        let v = gaussian(0.0f64, 0.0, 1.0).unwrap();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn gaussian_symmetric() {
        for a in [0.1, 1.0, 3.7] {
            assert_eq!(gaussian(2.0 + a, 2.0f64, 0.7).unwrap(), gaussian(2.0 - a, 2.0, 0.7).unwrap());
        }
    }

    #[test]
    fn gaussian_integrates_to_one() {
        let v = 2.5f64;
        let r = 10.0 * v.sqrt();
        let m = 200_000;
        let h = 2.0 * r / m as f64;
        // Simpson's rule.
        let mut s = gaussian(-r, 0.0, v).unwrap() + gaussian(r, 0.0, v).unwrap();
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * gaussian(-r + i as f64 * h, 0.0, v).unwrap();
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_rejects_nonpositive_variance() {
        assert!(gaussian(0.0f64, 0.0, 0.0).is_err());
        assert!(gaussian(0.0f64, 0.0, -1.0).is_err());
    }

    #[test]
    fn single_weight_model_is_a_gaussian() {
        let mut w = vec![0.0; 11];
        w[4] = 1.0;
        let m = KdeModel::new(0.0f64, 0.5, w, 0.3).unwrap();
        assert!((m.weights()[4] - 2.0).abs() < 1e-15);
        for t in [-1.0, 0.3, 2.0, 2.2, 5.0] {
            assert!((m.evaluate(t) - g(t, 2.0, 0.3)).abs() < 1e-14);
        }
    }

    #[test]
    fn model_integrates_to_one() {
        let m = two_bump();
        let (a, b) = (-12.0, 12.0);
        let k = 100_000;
        let h = (b - a) / k as f64;
        let s: f64 = (0..k).map(|i| m.evaluate(a + (i as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn derivatives_at_single_peak() {
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let m = KdeModel::new(-2.0f64, 0.5, w, 0.4).unwrap();
        assert!(m.derivative1(0.0).abs() < 1e-12);
        let want = -g(0.0, 0.0, 0.4) * 0.5 * 2.0 / 0.4;
        assert!((m.derivative2(0.0) - want).abs() < 1e-12);
        assert!(m.derivative2(0.0) < 0.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let m = two_bump();
        let s = m.variance().sqrt();
        let step = 1e-6 * s;
        for i in 0..100 {
            let t = -3.5 + 7.0 * (i as f64 + 0.37) / 100.0;
            let fd1 = (m.evaluate(t + step) - m.evaluate(t - step)) / (2.0 * step);
            let fd2 = (m.derivative1(t + step) - m.derivative1(t - step)) / (2.0 * step);
            let d1 = m.derivative1(t);
            let d2 = m.derivative2(t);
            assert!((fd1 - d1).abs() <= 1e-5 * d1.abs().max(1e-3), "{t}: {fd1} {d1}");
            assert!((fd2 - d2).abs() <= 1e-5 * d2.abs().max(1e-3), "{t}: {fd2} {d2}");
        }
    }

    #[test]
    fn at_scale_identity_and_additivity() {
        let m = two_bump();
        assert_eq!(m.at_scale(0.0).unwrap(), m);
        let a = m.at_scale(0.3).unwrap().at_scale(-0.1).unwrap();
        let b = m.at_scale(0.2).unwrap();
        assert_eq!(a.weights(), b.weights());
        assert_eq!(a.centers(), b.centers());
        assert!((a.variance() - b.variance()).abs() < 1e-15);
        assert_eq!(m.variance(), 0.2);
    }

    #[test]
    fn at_scale_underflow() {
        let m = two_bump();
        assert!(matches!(m.at_scale(-0.2), Err(Error::ScaleUnderflow { .. })));
        assert!(m.at_scale(-0.19).is_ok());
    }

    #[test]
    fn centers_evaluation_matches_pointwise() {
        let m = two_bump();
        let fast = m.evaluate_at_centers();
        for (i, &t) in m.centers().iter().enumerate() {
            assert!((fast[i] - m.evaluate(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_weights_are_a_fixed_point() {
        let n = 200;
        let dt = 0.05;
        let var = dt;
        let w: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 * dt;
                g(t, 5.0, 0.4) + 0.5 * g(t, 3.5, 0.2)
            })
            .collect();
        let start = KdeModel::new(0.0, dt, w, var).unwrap();
        let h = start.evaluate_at_centers();
        let hist = Histogram::normalize(&h, -dt / 2.0, (n as f64 - 0.5) * dt).unwrap();
        // The fit starts flat; check the fixed-point identity directly.
        let cfg = EmConfig { update_variance: false, max_iterations: 1, ..EmConfig::default() };
        let mut ws = KernelWorkspace::new(n);
        ws.prepare(var, dt);
        let ratio: Vec<f64> = hist.h().iter().zip(&h).map(|(a, b)| a / b.max(cfg.division_floor)).collect();
        let fd = ws.conv.spectrum(&ratio);
        let back = ws.conv.apply(&fd, &ws.fg);
        for (i, b) in start.weights().iter().enumerate() {
            let updated = b * back[i];
            assert!((updated - b).abs() < 1e-10 * b.max(1.0), "{i}");
        }
    }

    #[test]
    fn flat_start_interior_unchanged_when_histogram_is_its_own_blur() {
        let n = 300;
        let dt = 0.1;
        let flat = KdeModel::new(0.0f64, dt, vec![1.0; n], dt).unwrap();
        let h = flat.evaluate_at_centers();
        let hist = Histogram::normalize(&h, -dt / 2.0, (n as f64 - 0.5) * dt).unwrap();
        let cfg = EmConfig { update_variance: false, max_iterations: 1, ..EmConfig::default() };
        let fit = em_fit(&hist, &cfg).unwrap();
        let sigma = dt.sqrt();
        let margin = (10.0 * sigma / dt).ceil() as usize;
        let b0 = 1.0 / (n as f64 * dt);
        let scale = fit.model.weights()[n / 2] / b0;
        for i in margin..n - margin {
            assert!((fit.model.weights()[i] / scale - b0).abs() < 1e-10, "{i}");
        }
    }

    #[test]
    fn three_gaussians_reproduced() {
        let n = 400;
        let (lo, hi) = (-10.0, 10.0);
        let dt = (hi - lo) / n as f64;
        let raw: Vec<f64> = (0..n)
            .map(|i| {
                let t = lo + (i as f64 + 0.5) * dt;
                (g(t, -5.0, 0.36) + g(t, 0.0, 0.36) + g(t, 5.0, 0.36)) / 3.0
            })
            .collect();
        let hist = Histogram::normalize(&raw, lo, hi).unwrap();
        let fit = em_fit(&hist, &EmConfig::default()).unwrap();
        assert!(fit.fit_error < 1e-3, "{}", fit.fit_error);
        let mass: f64 = fit.model.weights().iter().sum::<f64>() * fit.model.dt();
        assert!((mass - 1.0).abs() < 1e-8);
        for (i, &t) in hist.t().iter().enumerate() {
            assert!((fit.model.evaluate(t) - hist.h()[i]).abs() <= fit.fit_error + 1e-12);
        }
    }

    #[test]
    fn zero_iterations_not_allowed() {
        let hist = Histogram::normalize(&[1.0f64, 2.0, 1.0], 0.0, 3.0).unwrap();
        let cfg = EmConfig { max_iterations: 0, ..EmConfig::default() };
        assert!(em_fit(&hist, &cfg).is_err());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let hist = Histogram::normalize(&[1.0f64, 5.0, 2.0, 0.0, 3.0, 1.0], 0.0, 6.0).unwrap();
        let cfg = EmConfig { max_iterations: 2, delta: 1e-30, ..EmConfig::default() };
        let fit = em_fit(&hist, &cfg).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 2);
    }

    #[test]
    fn printed_rule_squares_variance_at_fixed_point() {
        let n = 400;
        let dt = 0.05;
        let raw: Vec<f64> = (0..n).map(|i| g(i as f64 * dt, 10.0, 2.0)).collect();
        let hist = Histogram::normalize(&raw, -dt / 2.0, (n as f64 - 0.5) * dt).unwrap();
        let mut seen = Vec::new();
        let cfg = EmConfig { max_iterations: 1, variance_rule: VarianceRule::AsPrinted, ..EmConfig::default() };
        em_fit_observed(&hist, &cfg, |it| seen.push(it.variance)).unwrap();
        let mut corrected = Vec::new();
        let cfg = EmConfig { max_iterations: 1, ..EmConfig::default() };
        em_fit_observed(&hist, &cfg, |it| corrected.push(it.variance)).unwrap();
        assert!((seen[0] - dt * corrected[0]).abs() < 1e-12);
    }

    #[test]
    fn trace_csv_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("trace.csv");
        let rows = vec![EmTraceRow { iteration: 1, residual: 0.5f64, sigma2: 0.25 }];
        write_em_trace(&rows, &p).unwrap();
        let s = std::fs::read_to_string(&p).unwrap();
        assert_eq!(s, "iteration,residual,sigma2\n1,0.5,0.25\n");
    }

    #[test]
    fn single_precision_fit() {
        let raw: Vec<f32> = (0..64).map(|i| (-((i as f32 - 32.0) / 6.0).powi(2)).exp()).collect();
        let hist = Histogram::normalize(&raw, 0.0, 64.0).unwrap();
        let fit = em_fit(&hist, &EmConfig { delta: 1e-4, ..EmConfig::default() }).unwrap();
        let mass: f32 = fit.model.weights().iter().sum::<f32>() * fit.model.dt();
        assert!((mass - 1.0).abs() < 1e-5);
        assert!(fit.fit_error < 1e-3);
    }
}
