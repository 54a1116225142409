//! Porosity estimation from grayscale image stacks.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::kmeans_1d;
use crate::scalespace::{detect_thresholds_with, DetectConfig, Direction};
use crate::{em_fit, EmConfig, Error, Histogram, Result, Scalar};

/// Slices of equal size and bit depth. Pixels are stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageStack {
    width: usize,
    height: usize,
    maxval: u16,
    slices: Vec<Vec<u16>>,
}

impl ImageStack {
    pub fn new(width: usize, height: usize, maxval: u16, slices: Vec<Vec<u16>>) -> Result<Self> {
        if width == 0 || height == 0 || maxval == 0 {
            return Err(Error::InvalidArgument("image dimensions and maxval must be positive".into()));
        }
        if slices.is_empty() {
            return Err(Error::InvalidArgument("stack has no slices".into()));
        }
        for (i, s) in slices.iter().enumerate() {
            if s.len() != width * height {
                return Err(Error::InvalidArgument(format!("slice {i} has {} pixels, expected {}", s.len(), width * height)));
            }
            if s.iter().any(|&v| v > maxval) {
                return Err(Error::InvalidArgument(format!("slice {i} has a pixel above maxval {maxval}")));
            }
        }
        Ok(Self { width, height, maxval, slices })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn maxval(&self) -> u16 {
        self.maxval
    }

    /// 8 for single-byte samples, 16 otherwise.
    pub fn bit_depth(&self) -> u8 {
        if self.maxval < 256 {
            8
        } else {
            16
        }
    }

    pub fn slices(&self) -> &[Vec<u16>] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }
}

/// A decoded binary PGM image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u16>,
}

/// Decodes a binary (P5) PGM; `name` labels errors.
pub fn parse_pgm(bytes: &[u8], name: &str) -> Result<PgmImage> {
    let bad = |m: &str| Error::format(name, m);
    let mut pos = 0;
    let token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
            *pos += 1;
        }
        if start == *pos {
            return Err(bad("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    if token(&mut pos)? != "P5" {
        return Err(bad("not a binary PGM (missing P5 magic)"));
    }
    let mut number = |what: &str| -> Result<usize> { token(&mut pos)?.parse::<usize>().map_err(|_| bad(&format!("malformed {what}"))) };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if width == 0 || height == 0 {
        return Err(bad("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval must be in 1..=65535"));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(bad("missing whitespace after maxval"));
    }
    pos += 1;
    let count = width * height;
    let wide = maxval > 255;
    let need = if wide { 2 * count } else { count };
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(bad(&format!("truncated payload: {} of {need} bytes", raster.len())));
    }
    let pixels: Vec<u16> = if wide {
        raster[..need].chunks_exact(2).map(|p| u16::from_be_bytes([p[0], p[1]])).collect()
    } else {
        raster[..need].iter().map(|&b| b as u16).collect()
    };
    if pixels.iter().any(|&v| v as usize > maxval) {
        return Err(bad("pixel value exceeds maxval"));
    }
    Ok(PgmImage { width, height, maxval: maxval as u16, pixels })
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<PgmImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes, &path.display().to_string())
}

/// Encodes a binary PGM.
pub fn encode_pgm(width: usize, height: usize, maxval: u16, pixels: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    if maxval > 255 {
        for &v in pixels {
            out.extend_from_slice(&v.to_be_bytes());
        }
    } else {
        out.extend(pixels.iter().map(|&v| v as u8));
    }
    out
}

pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, maxval: u16, pixels: &[u16]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(width, height, maxval, pixels)).map_err(|e| Error::io(path, e))
}

/// Loads PGM slices that share dimensions and maxval.
pub fn load_stack<P: AsRef<Path>>(paths: &[P]) -> Result<ImageStack> {
    let first = paths.first().ok_or_else(|| Error::InvalidArgument("no image files given".into()))?;
    let head = read_pgm(first)?;
    let mut slices = vec![head.pixels];
    for p in &paths[1..] {
        let img = read_pgm(p)?;
        if img.width != head.width || img.height != head.height || img.maxval != head.maxval {
            return Err(Error::format(
                p.as_ref().display().to_string(),
                format!(
                    "{}x{} maxval {} differs from {}x{} maxval {} of the first slice",
                    img.width, img.height, img.maxval, head.width, head.height, head.maxval
                ),
            ));
        }
        slices.push(img.pixels);
    }
    ImageStack::new(head.width, head.height, head.maxval, slices)
}

/// Writes each slice as `<dir>/<prefix>NNNN.pgm`.
pub fn write_stack(stack: &ImageStack, dir: impl AsRef<Path>, prefix: &str) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    stack
        .slices
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = dir.join(format!("{prefix}{i:04}.pgm"));
            write_pgm(&p, stack.width, stack.height, stack.maxval, s)?;
            Ok(p)
        })
        .collect()
}

/// Integer counts of one slice on `n_bins` bins over `[0, maxval + 1)`.
pub fn slice_counts(pixels: &[u16], maxval: u16, n_bins: usize) -> Vec<u64> {
    let span = maxval as u64 + 1;
    let mut counts = vec![0u64; n_bins];
    for &v in pixels {
        counts[(v as u64 * n_bins as u64 / span) as usize] += 1;
    }
    counts
}

/// Histogram of every pixel of every slice on `[0, maxval + 1)`.
pub fn combined_histogram<T: Scalar>(stack: &ImageStack, n_bins: usize) -> Result<Histogram<T>> {
    if n_bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {n_bins}")));
    }
    let counts = stack.slices.par_iter().map(|s| slice_counts(s, stack.maxval, n_bins)).reduce(
        || vec![0u64; n_bins],
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    );
    let raw: Vec<T> = counts.iter().map(|&c| T::from_u64(c).expect("count fits")).collect();
    Histogram::normalize(&raw, T::zero(), T::of_usize(stack.maxval as usize + 1))
}

/// Weighted mean intensities below `tau1` (void) and above `tau2` (solid).
pub fn reference_points<T: Scalar>(hist: &Histogram<T>, tau1: T, tau2: T) -> Result<(T, T)> {
    if !(tau1 < tau2) {
        return Err(Error::InvalidArgument(format!("tau1 {tau1} must be below tau2 {tau2}")));
    }
    let mean = |keep: &dyn Fn(T) -> bool, side: &str| -> Result<T> {
        let (mut m, mut s) = (T::zero(), T::zero());
        for (&t, &h) in hist.t().iter().zip(hist.h()) {
            if keep(t) {
                m += h;
                s += h * t;
            }
        }
        if m > T::zero() {
            Ok(s / m)
        } else {
            Err(Error::EmptyCluster(format!("no histogram mass {side}")))
        }
    };
    Ok((mean(&|t| t < tau1, &format!("below {tau1}"))?, mean(&|t| t > tau2, &format!("above {tau2}"))?))
}

/// `φ = (t − t_s)/(t_v − t_s)` clamped to `[0, 1]`.
pub fn porosity_of_intensity<T: Scalar>(t: T, t_v: T, t_s: T) -> Result<T> {
    if t_v == t_s {
        return Err(Error::DegenerateReferences(t_v.f64()));
    }
    Ok(((t - t_s) / (t_v - t_s)).max(T::zero()).min(T::one()))
}

/// First moment of the porosity map over the histogram.
pub fn mean_porosity<T: Scalar>(hist: &Histogram<T>, t_v: T, t_s: T) -> Result<T> {
    let mut acc = T::zero();
    for (&t, &h) in hist.t().iter().zip(hist.h()) {
        acc += h * porosity_of_intensity(t, t_v, t_s)?;
    }
    Ok((acc * hist.dt()).max(T::zero()).min(T::one()))
}

/// Distribution of pixel porosity on `n_bins` bins over `[0, 1]`.
pub fn porosity_histogram<T: Scalar>(hist: &Histogram<T>, t_v: T, t_s: T, n_bins: usize) -> Result<Histogram<T>> {
    if n_bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {n_bins}")));
    }
    let mut raw = vec![T::zero(); n_bins];
    let nb = T::of_usize(n_bins);
    for (&t, &h) in hist.t().iter().zip(hist.h()) {
        let phi = porosity_of_intensity(t, t_v, t_s)?;
        let k = (phi * nb).floor().to_usize().unwrap_or(0).min(n_bins - 1);
        raw[k] += h;
    }
    Histogram::normalize(&raw, T::zero(), T::one())
}

/// Thresholding method feeding the porosity pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    KdeScaleSpace,
    Kmeans,
}

/// Settings shared by both methods.
#[derive(Debug, Clone, PartialEq)]
pub struct PorosityOptions<T> {
    pub em: EmConfig<T>,
    pub dsigma2: T,
    pub max_steps: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: T,
}

impl<T: Scalar> Default for PorosityOptions<T> {
    fn default() -> Self {
        Self { em: EmConfig::default(), dsigma2: T::of(0.01), max_steps: 10_000, kmeans_max_iters: 500, kmeans_tol: T::of(1e-10) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PorosityReport<T> {
    pub method: Method,
    pub bins: usize,
    pub tau1: T,
    pub tau2: T,
    pub t_v: T,
    pub t_s: T,
    pub mean_porosity: T,
    /// Scale offset of the thresholds (scale-space method only).
    pub scale_offset: Option<T>,
    pub direction: Option<Direction>,
    pub em_iterations: Option<usize>,
    pub em_converged: Option<bool>,
    /// Sorted centroids (k-means only).
    pub centroids: Option<Vec<T>>,
}

/// Three-class thresholds, reference intensities and mean porosity.
pub fn estimate_porosity<T: Scalar>(hist: &Histogram<T>, method: Method, opts: &PorosityOptions<T>) -> Result<PorosityReport<T>> {
    let (tau, report) = match method {
        Method::KdeScaleSpace => {
            let fit = em_fit(hist, &opts.em)?;
            let cfg = DetectConfig { max_steps: opts.max_steps, ..DetectConfig::new(3, opts.dsigma2) };
            let r = detect_thresholds_with(&fit.model, &cfg, |_| {})?;
            let partial = PartialReport {
                scale_offset: Some(r.scale_offset),
                direction: Some(r.direction),
                em_iterations: Some(fit.iterations),
                em_converged: Some(fit.converged),
                centroids: None,
            };
            (r.thresholds, partial)
        }
        Method::Kmeans => {
            let r = kmeans_1d(hist, 3, opts.kmeans_max_iters, opts.kmeans_tol)?;
            let partial = PartialReport { centroids: Some(r.centroids), ..PartialReport::default() };
            (r.thresholds, partial)
        }
    };
    let (t_v, t_s) = reference_points(hist, tau[0], tau[1])?;
    let mean = mean_porosity(hist, t_v, t_s)?;
    Ok(PorosityReport {
        method,
        bins: hist.len(),
        tau1: tau[0],
        tau2: tau[1],
        t_v,
        t_s,
        mean_porosity: mean,
        scale_offset: report.scale_offset,
        direction: report.direction,
        em_iterations: report.em_iterations,
        em_converged: report.em_converged,
        centroids: report.centroids,
    })
}

struct PartialReport<T> {
    scale_offset: Option<T>,
    direction: Option<Direction>,
    em_iterations: Option<usize>,
    em_converged: Option<bool>,
    centroids: Option<Vec<T>>,
}

impl<T> Default for PartialReport<T> {
    fn default() -> Self {
        Self { scale_offset: None, direction: None, em_iterations: None, em_converged: None, centroids: None }
    }
}

/// Parameters of a synthetic three-phase stack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhantomConfig {
    pub width: usize,
    pub height: usize,
    pub n_slices: usize,
    /// Void, porous and solid phase fractions.
    pub fractions: [f64; 3],
    /// Phase mean intensities, ascending.
    pub means: [f64; 3],
    pub noise_sigma: f64,
    pub maxval: u16,
    /// Edge length of the square phase blocks, in pixels.
    pub block: usize,
    pub seed: u64,
}

impl PhantomConfig {
    pub fn new(width: usize, height: usize, n_slices: usize, fractions: [f64; 3], means: [f64; 3], noise_sigma: f64, seed: u64) -> Self {
        Self { width, height, n_slices, fractions, means, noise_sigma, maxval: 255, block: 8, seed }
    }

    /// `f_void + f_porous · φ(mean_porous)` with the void and solid means as
    /// references.
    pub fn ground_truth(&self) -> f64 {
        let [v, p, s] = self.means;
        let phi = ((p - s) / (v - s)).clamp(0.0, 1.0);
        self.fractions[0] + self.fractions[1] * phi
    }
}

/// Blocky three-phase stack with Gaussian intensity noise, and its ground
/// truth porosity.
pub fn generate_phantom(cfg: &PhantomConfig) -> Result<(ImageStack, f64)> {
    let f = cfg.fractions;
    if f.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("phase fractions {f:?} must be in [0,1] and sum to 1")));
    }
    if !(cfg.means[0] < cfg.means[1] && cfg.means[1] < cfg.means[2]) {
        return Err(Error::InvalidArgument("phase means must be strictly increasing".into()));
    }
    if !(cfg.noise_sigma > 0.0) {
        return Err(Error::InvalidArgument("noise sigma must be positive".into()));
    }
    if cfg.width == 0 || cfg.height == 0 || cfg.n_slices == 0 || cfg.block == 0 || cfg.maxval == 0 {
        return Err(Error::InvalidArgument("phantom sizes must be positive".into()));
    }
    let bx = cfg.width.div_ceil(cfg.block);
    let by = cfg.height.div_ceil(cfg.block);
    let blocks = bx * by * cfg.n_slices;

    // Largest-remainder quotas so block fractions match as closely as possible.
    let exact: Vec<f64> = f.iter().map(|&x| x * blocks as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|&x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = blocks - quota.iter().sum::<usize>();
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        quota[k] += 1;
        left -= 1;
    }
    let mut phases: Vec<u8> = (0..3u8).flat_map(|k| std::iter::repeat_n(k, quota[k as usize])).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    phases.shuffle(&mut rng);

    let noise = Normal::new(0.0, cfg.noise_sigma).expect("positive sigma");
    let top = cfg.maxval as f64;
    let mut slices = Vec::with_capacity(cfg.n_slices);
    for z in 0..cfg.n_slices {
        let mut px = Vec::with_capacity(cfg.width * cfg.height);
        for y in 0..cfg.height {
            for x in 0..cfg.width {
                let b = (z * by + y / cfg.block) * bx + x / cfg.block;
                let mean = cfg.means[phases[b] as usize];
                let v = (mean + noise.sample(&mut rng)).round().clamp(0.0, top);
                px.push(v as u16);
            }
        }
        slices.push(px);
    }
    Ok((ImageStack::new(cfg.width, cfg.height, cfg.maxval, slices)?, cfg.ground_truth()))
}
