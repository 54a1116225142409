//! Cauchy-mixture validation harness and Gaussian ground-truth mixtures.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::numerics::refine_root;
use crate::scalespace::{detect_thresholds_with, DetectConfig, Direction};
use crate::{em_fit, EmConfig, Error, Histogram, Result};

const CROSSING_TOL: f64 = 1e-10;
const SCAN_POINTS: usize = 1000;

/// Three-component Cauchy mixture with sorted locations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CauchyMixture {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub c: [f64; 3],
}

impl CauchyMixture {
    pub fn new(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Result<Self> {
        if a.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::InvalidArgument("locations must be sorted".into()));
        }
        if b.iter().any(|&b| !(b > 0.0)) || c.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::InvalidArgument("scales and weights must be positive".into()));
        }
        if (c.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("weights must sum to 1".into()));
        }
        Ok(Self { a, b, c })
    }

    /// Weighted component `c_j · Cauchy(t; a_j, b_j)`.
    pub fn component_pdf(&self, j: usize, t: f64) -> f64 {
        let z = (t - self.a[j]) / self.b[j];
        self.c[j] / (PI * self.b[j] * (1.0 + z * z))
    }

    pub fn pdf(&self, t: f64) -> f64 {
        (0..3).map(|j| self.component_pdf(j, t)).sum()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        (0..3).map(|j| self.c[j] * (0.5 + ((t - self.a[j]) / self.b[j]).atan() / PI)).sum()
    }

    fn log_component(&self, j: usize, t: f64) -> f64 {
        let z = (t - self.a[j]) / self.b[j];
        self.c[j].ln() - (PI * self.b[j]).ln() - z.mul_add(z, 1.0).ln()
    }

    /// Crossings of consecutive weighted components inside `(a_k, a_{k+1})`.
    pub fn reference_thresholds(&self) -> Result<[f64; 2]> {
        let mut out = [0.0; 2];
        for k in 0..2 {
            let f = |t: f64| self.log_component(k, t) - self.log_component(k + 1, t);
            out[k] = crossing(f, self.a[k], self.a[k + 1])
                .ok_or_else(|| Error::DegenerateMixture(format!("components {} and {} do not cross", k + 1, k + 2)))?;
        }
        Ok(out)
    }

    /// Draws `n` samples; `t = a_j + b_j tan(π(u − ½))` for a component
    /// chosen with probability `c_j`.
    pub fn draw_samples(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let j = pick(&self.c, rng.gen::<f64>());
                let u: f64 = rng.gen();
                self.a[j] + self.b[j] * (PI * (u - 0.5)).tan()
            })
            .collect()
    }
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return j;
        }
    }
    weights.len() - 1
}

/// First sign change from positive to negative of `f` on `[lo, hi]`, given
/// `f(lo) > 0 > f(hi)`.
fn crossing<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> Option<f64> {
    if !(hi > lo && f(lo) > 0.0 && f(hi) < 0.0) {
        return None;
    }
    let h = (hi - lo) / SCAN_POINTS as f64;
    let mut prev = lo;
    for i in 1..=SCAN_POINTS {
        let t = if i == SCAN_POINTS { hi } else { lo + i as f64 * h };
        if f(t) <= 0.0 {
            return refine_root(&f, prev, t, CROSSING_TOL).ok();
        }
        prev = t;
    }
    None
}

/// Samples a mixture from the validation parameter ranges.
pub fn sample_mixture(seed: u64) -> CauchyMixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = [0.0; 3];
    let mut b = [0.0; 3];
    let mut c = [0.0; 3];
    for v in a.iter_mut() {
        *v = rng.gen_range(-4.0..4.0);
    }
    for v in b.iter_mut() {
        *v = rng.gen_range(0.5..2.0);
    }
    for v in c.iter_mut() {
        *v = rng.gen_range(0.2..0.5);
    }
    a.sort_by(f64::total_cmp);
    let total: f64 = c.iter().sum();
    for v in c.iter_mut() {
        *v /= total;
    }
    CauchyMixture { a, b, c }
}

/// Gaussian mixture with strictly increasing means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianMixtureTruth {
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl GaussianMixtureTruth {
    pub fn new(alpha: Vec<f64>, mu: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        let k = alpha.len();
        if k == 0 || mu.len() != k || sigma2.len() != k {
            return Err(Error::InvalidArgument("component vectors must be non-empty and equal length".into()));
        }
        if alpha.iter().any(|&a| !(a > 0.0)) || (alpha.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("weights must be positive and sum to 1".into()));
        }
        if sigma2.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument("variances must be positive".into()));
        }
        if mu.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("means must be strictly increasing".into()));
        }
        Ok(Self { alpha, mu, sigma2 })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn component_pdf(&self, k: usize, t: f64) -> f64 {
        let d = t - self.mu[k];
        self.alpha[k] * (-d * d / (2.0 * self.sigma2[k])).exp() / (2.0 * PI * self.sigma2[k]).sqrt()
    }

    pub fn pdf(&self, t: f64) -> f64 {
        (0..self.len()).map(|k| self.component_pdf(k, t)).sum()
    }

    fn log_component(&self, k: usize, t: f64) -> f64 {
        let d = t - self.mu[k];
        self.alpha[k].ln() - 0.5 * (2.0 * PI * self.sigma2[k]).ln() - d * d / (2.0 * self.sigma2[k])
    }

    /// Crossings of consecutive weighted components inside `(μ_k, μ_{k+1})`.
    pub fn truth_thresholds(&self) -> Result<Vec<f64>> {
        (0..self.len().saturating_sub(1))
            .map(|k| {
                let f = |t: f64| self.log_component(k, t) - self.log_component(k + 1, t);
                crossing(f, self.mu[k], self.mu[k + 1])
                    .ok_or_else(|| Error::DegenerateMixture(format!("components {} and {} do not cross", k + 1, k + 2)))
            })
            .collect()
    }

    /// Histogram of the exact density sampled at bin centers.
    pub fn density_histogram(&self, lo: f64, hi: f64, n_bins: usize) -> Result<Histogram<f64>> {
        let dt = (hi - lo) / n_bins as f64;
        let raw: Vec<f64> = (0..n_bins).map(|i| self.pdf(lo + (i as f64 + 0.5) * dt)).collect();
        Histogram::normalize(&raw, lo, hi)
    }

    pub fn draw_samples(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normals: Vec<Normal<f64>> =
            self.mu.iter().zip(&self.sigma2).map(|(&m, &v)| Normal::new(m, v.sqrt()).expect("positive variance")).collect();
        (0..n)
            .map(|_| {
                let k = pick(&self.alpha, rng.gen::<f64>());
                normals[k].sample(&mut rng)
            })
            .collect()
    }
}

/// Pairwise crossings of a Gaussian truth mixture.
pub fn gaussian_truth_thresholds(g: &GaussianMixtureTruth) -> Result<Vec<f64>> {
    g.truth_thresholds()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of case `index` in a run seeded with `seed`.
pub fn case_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

/// Settings for [`run_validation`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationConfig {
    pub n_cases: usize,
    pub n_bins: usize,
    pub samples_per_case: usize,
    pub dsigma2: f64,
    pub seed: u64,
    pub lo: f64,
    pub hi: f64,
    pub max_steps: usize,
    pub em: EmConfig<f64>,
}

impl ValidationConfig {
    pub fn new(n_cases: usize, n_bins: usize, seed: u64) -> Self {
        Self {
            n_cases,
            n_bins,
            samples_per_case: 10_000,
            dsigma2: 0.01,
            seed,
            lo: -15.0,
            hi: 15.0,
            max_steps: 10_000,
            em: EmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseStatus {
    Ok,
    Degenerate,
    Failed,
}

/// Base-scale minima count relative to `C − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MinimaClass {
    Over,
    Under,
    Exact,
}

impl MinimaClass {
    fn of(count: usize, target: usize) -> Self {
        match count.cmp(&target) {
            std::cmp::Ordering::Greater => MinimaClass::Over,
            std::cmp::Ordering::Less => MinimaClass::Under,
            std::cmp::Ordering::Equal => MinimaClass::Exact,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            MinimaClass::Over => "over",
            MinimaClass::Under => "under",
            MinimaClass::Exact => "exact",
        }
    }
}

/// Outcome of one validation case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseRecord {
    pub case: usize,
    pub seed: u64,
    pub mixture: CauchyMixture,
    pub status: CaseStatus,
    pub error: Option<String>,
    pub reference: Option<[f64; 2]>,
    pub predicted: Option<[f64; 2]>,
    pub deviations: Option<[f64; 2]>,
    pub base_minima: Option<usize>,
    pub minima_class: Option<MinimaClass>,
    pub direction: Option<Direction>,
    pub scale_offset: Option<f64>,
    pub steps: Option<usize>,
    pub em_iterations: Option<usize>,
    pub em_converged: Option<bool>,
    pub sigma2: Option<f64>,
}

/// Aggregate statistics of a validation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub n_cases: usize,
    pub n_bins: usize,
    pub samples_per_case: usize,
    pub dsigma2: f64,
    pub seed: u64,
    pub n_degenerate: usize,
    pub n_failed: usize,
    pub n_evaluated: usize,
    /// Thresholds scored; failed cases contribute two deviating ones.
    pub n_thresholds: usize,
    pub n_deviating: usize,
    pub deviation_fraction: f64,
    pub over_resolved: usize,
    pub under_resolved: usize,
    pub exact_resolved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub summary: ValidationSummary,
    pub cases: Vec<CaseRecord>,
}

/// Runs the Cauchy-mixture validation protocol.
///
/// Cases run on the current rayon pool; each case derives its seeds from
/// `(seed, index)` so results do not depend on scheduling.
pub fn run_validation(cfg: &ValidationConfig) -> Result<ValidationReport> {
    if cfg.n_cases == 0 {
        return Err(Error::InvalidArgument("n_cases must be at least 1".into()));
    }
    if cfg.samples_per_case == 0 || !(cfg.dsigma2 > 0.0) {
        return Err(Error::InvalidArgument("samples_per_case and dsigma2 must be positive".into()));
    }
    let cases: Vec<CaseRecord> = (0..cfg.n_cases).into_par_iter().map(|i| run_case(cfg, i)).collect();
    Ok(ValidationReport { summary: summarize(cfg, &cases), cases })
}

fn run_case(cfg: &ValidationConfig, index: usize) -> CaseRecord {
    let seed = case_seed(cfg.seed, index);
    let mixture = sample_mixture(seed);
    let mut rec = CaseRecord {
        case: index,
        seed,
        mixture,
        status: CaseStatus::Ok,
        error: None,
        reference: None,
        predicted: None,
        deviations: None,
        base_minima: None,
        minima_class: None,
        direction: None,
        scale_offset: None,
        steps: None,
        em_iterations: None,
        em_converged: None,
        sigma2: None,
    };
    let reference = match mixture.reference_thresholds() {
        Ok(r) => r,
        Err(e) => {
            rec.status = CaseStatus::Degenerate;
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    rec.reference = Some(reference);
    let fail = |mut rec: CaseRecord, e: Error| {
        rec.status = CaseStatus::Failed;
        rec.error = Some(e.to_string());
        rec
    };
    let samples = mixture.draw_samples(cfg.samples_per_case, splitmix64(seed ^ 0x5A5A_5A5A_5A5A_5A5A));
    let hist = match Histogram::from_samples(&samples, cfg.lo, cfg.hi, cfg.n_bins) {
        Ok(h) => h,
        Err(e) => return fail(rec, e),
    };
    let fit = match em_fit(&hist, &cfg.em) {
        Ok(f) => f,
        Err(e) => return fail(rec, e),
    };
    rec.em_iterations = Some(fit.iterations);
    rec.em_converged = Some(fit.converged);
    rec.sigma2 = Some(fit.model.variance());
    let dcfg = DetectConfig { max_steps: cfg.max_steps, ..DetectConfig::new(3, cfg.dsigma2) };
    let mut base = None;
    let result = detect_thresholds_with(&fit.model, &dcfg, |row| {
        if row.step == 0 {
            base = Some(row.minima_count);
        }
    });
    rec.base_minima = base;
    rec.minima_class = base.map(|b| MinimaClass::of(b, 2));
    match result {
        Ok(r) => {
            let p = [r.thresholds[0], r.thresholds[1]];
            rec.predicted = Some(p);
            rec.deviations = Some([(p[0] - reference[0]).abs(), (p[1] - reference[1]).abs()]);
            rec.direction = Some(r.direction);
            rec.scale_offset = Some(r.scale_offset);
            rec.steps = Some(r.steps);
            rec
        }
        Err(e) => fail(rec, e),
    }
}

fn summarize(cfg: &ValidationConfig, cases: &[CaseRecord]) -> ValidationSummary {
    let count = |s: CaseStatus| cases.iter().filter(|c| c.status == s).count();
    let n_failed = count(CaseStatus::Failed);
    let n_evaluated = count(CaseStatus::Ok);
    let deviating: usize = cases.iter().filter_map(|c| c.deviations).map(|d| d.iter().filter(|&&v| v > 1.0).count()).sum();
    let n_thresholds = 2 * (n_evaluated + n_failed);
    let n_deviating = deviating + 2 * n_failed;
    let class = |k: MinimaClass| cases.iter().filter(|c| c.minima_class == Some(k)).count();
    ValidationSummary {
        n_cases: cfg.n_cases,
        n_bins: cfg.n_bins,
        samples_per_case: cfg.samples_per_case,
        dsigma2: cfg.dsigma2,
        seed: cfg.seed,
        n_degenerate: count(CaseStatus::Degenerate),
        n_failed,
        n_evaluated,
        n_thresholds,
        n_deviating,
        deviation_fraction: if n_thresholds == 0 { 0.0 } else { n_deviating as f64 / n_thresholds as f64 },
        over_resolved: class(MinimaClass::Over),
        under_resolved: class(MinimaClass::Under),
        exact_resolved: class(MinimaClass::Exact),
    }
}

impl ValidationReport {
    /// Summary as pretty-printed JSON.
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }

    /// Writes the per-case table.
    pub fn write_cases_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_cases_csv_to(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn write_cases_csv_to<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "case",
            "seed",
            "a1",
            "a2",
            "a3",
            "b1",
            "b2",
            "b3",
            "c1",
            "c2",
            "c3",
            "status",
            "ref_tau1",
            "ref_tau2",
            "pred_tau1",
            "pred_tau2",
            "dev1",
            "dev2",
            "base_minima",
            "minima_class",
            "direction",
            "scale_offset",
            "steps",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for c in &self.cases {
            let m = &c.mixture;
            let mut row = vec![c.case.to_string(), c.seed.to_string()];
            row.extend(m.a.iter().chain(&m.b).chain(&m.c).map(|v| format!("{v:?}")));
            row.push(
                match c.status {
                    CaseStatus::Ok => "ok",
                    CaseStatus::Degenerate => "degenerate",
                    CaseStatus::Failed => "failed",
                }
                .to_string(),
            );
            for pair in [c.reference, c.predicted, c.deviations] {
                row.push(opt(pair.map(|p| p[0])));
                row.push(opt(pair.map(|p| p[1])));
            }
            row.push(c.base_minima.map(|v| v.to_string()).unwrap_or_default());
            row.push(c.minima_class.map(|k| k.as_str().to_string()).unwrap_or_default());
            row.push(
                c.direction
                    .map(|d| match d {
                        Direction::None => "none",
                        Direction::Coarser => "coarser",
                        Direction::Finer => "finer",
                    })
                    .unwrap_or_default()
                    .to_string(),
            );
            row.push(opt(c.scale_offset));
            row.push(c.steps.map(|v| v.to_string()).unwrap_or_default());
            wr.write_record(&row)?;
        }
        wr.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_mixtures_are_valid() {
        for s in 0..10_000u64 {
            let m = sample_mixture(s);
            assert!(CauchyMixture::new(m.a, m.b, m.c).is_ok(), "seed {s}");
            assert!(m.a.iter().all(|&a| (-4.0..4.0).contains(&a)));
            assert!(m.b.iter().all(|&b| (0.5..2.0).contains(&b)));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_mixture(42), sample_mixture(42));
        let m = sample_mixture(1);
        assert_eq!(m.draw_samples(50, 9), m.draw_samples(50, 9));
    }

    #[test]
    fn component_peak() {
        let m = sample_mixture(7);
        for j in 0..3 {
            let want = m.c[j] / (PI * m.b[j]);
            assert!((m.component_pdf(j, m.a[j]) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_is_sum_of_components() {
        let m = sample_mixture(11);
        for i in 0..50 {
            let t = -10.0 + i as f64 * 0.4;
            let s: f64 = (0..3).map(|j| m.component_pdf(j, t)).sum();
            assert!((m.pdf(t) - s).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_pair_crosses_at_zero() {
        let f = |t: f64| {
            let p = |a: f64| 0.5 / (PI * (1.0 + (t - a) * (t - a)));
            p(-2.0).ln() - p(2.0).ln()
        };
        assert!(crossing(f, -2.0, 2.0).unwrap().abs() < 1e-10);
    }

    #[test]
    fn reference_thresholds_are_roots() {
        let mut checked = 0;
        for s in 0..300u64 {
            let m = sample_mixture(s);
            let Ok(r) = m.reference_thresholds() else { continue };
            checked += 1;
            for k in 0..2 {
                assert!(r[k] > m.a[k] && r[k] < m.a[k + 1]);
                let d = |t: f64| m.component_pdf(k, t) - m.component_pdf(k + 1, t);
                assert!(d(r[k]).abs() < 1e-10, "seed {s}");
                assert!(d(r[k] - 1e-6) > 0.0 && d(r[k] + 1e-6) < 0.0);
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn gaussian_equal_weights_midpoint() {
        let g = GaussianMixtureTruth::new(vec![0.5, 0.5], vec![-1.0, 3.0], vec![0.8, 0.8]).unwrap();
        let t = g.truth_thresholds().unwrap();
        assert!((t[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_weight_ratio_shift() {
        let (m1, m2, v) = (0.0, 4.0, 1.3);
        let g = GaussianMixtureTruth::new(vec![2.0 / 3.0, 1.0 / 3.0], vec![m1, m2], vec![v, v]).unwrap();
        let t = g.truth_thresholds().unwrap()[0];
        let want = 0.5 * (m1 + m2) + v * 2f64.ln() / (m2 - m1);
        assert!((t - want).abs() < 1e-9);
    }

    #[test]
    fn gaussian_truth_validation() {
        assert!(GaussianMixtureTruth::new(vec![0.5, 0.5], vec![1.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(GaussianMixtureTruth::new(vec![0.6, 0.6], vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(GaussianMixtureTruth::new(vec![0.5, 0.5], vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn dominated_gaussian_is_degenerate() {
        let g = GaussianMixtureTruth::new(vec![0.9, 0.1], vec![0.0, 2.0], vec![1.0, 0.05]).unwrap();
        assert!(g.truth_thresholds().is_ok());
        let g = GaussianMixtureTruth::new(vec![0.98, 0.02], vec![0.0, 0.5], vec![4.0, 4.0]).unwrap();
        assert!(matches!(g.truth_thresholds(), Err(Error::DegenerateMixture(_))));
    }

    #[test]
    fn case_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| case_seed(5, i)).collect();
        assert_eq!(s.len(), 1000);
    }
}
