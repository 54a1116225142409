//! Local minima of a [`KdeModel`] and the scale walk that searches for a
//! variance offset with exactly `C − 1` of them.

use std::path::Path;

use num_complex::Complex;
use serde::Serialize;

use crate::kde::cutoff;
use crate::numerics::{refine_root, Convolver};
use crate::{Error, KdeModel, Result, Scalar};

/// Sorted minima of a model at `variance + scale_offset`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimaSet<T> {
    pub positions: Vec<T>,
    pub scale_offset: T,
}

impl<T> MinimaSet<T> {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Which way the scale walk went.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    None,
    Coarser,
    Finer,
}

/// Thresholds found by [`detect_thresholds`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult<T> {
    pub thresholds: Vec<T>,
    pub scale_offset: T,
    pub direction: Direction,
    /// Walk steps taken, not counting bisection probes.
    pub steps: usize,
    /// True when the offset was found by bisection after an overshoot.
    pub refined: bool,
    /// Minima count of the unshifted model.
    pub base_minima: usize,
}

/// Scans one model for minima at arbitrary scale offsets.
///
/// The derivative on the oversampled grid is a convolution of the upsampled
/// weights with the sampled derivative kernel; the weight spectrum is reused
/// across offsets.
pub struct MinimaScanner<'a, T> {
    model: &'a KdeModel<T>,
    oversampling: usize,
    root_tol: T,
    points: usize,
    step: T,
    conv: Convolver<T>,
    weights: Vec<Complex<T>>,
}

impl<'a, T: Scalar> MinimaScanner<'a, T> {
    pub fn new(model: &'a KdeModel<T>, oversampling: usize, root_tol: T) -> Result<Self> {
        if oversampling == 0 {
            return Err(Error::InvalidArgument("grid oversampling must be at least 1".into()));
        }
        if !(root_tol > T::zero()) {
            return Err(Error::InvalidArgument("root tolerance must be positive".into()));
        }
        let points = (model.len() - 1) * oversampling + 1;
        let conv = Convolver::new(points, 2 * points - 1, points - 1)?;
        let mut up = vec![T::zero(); points];
        for (j, &b) in model.weights().iter().enumerate() {
            up[j * oversampling] = b;
        }
        let weights = conv.spectrum(&up);
        Ok(Self { model, oversampling, root_tol, points, step: model.dt() / T::of_usize(oversampling), conv, weights })
    }

    /// Scanner with 10× oversampling and tolerance `Δt·1e-6`.
    pub fn with_defaults(model: &'a KdeModel<T>) -> Result<Self> {
        Self::new(model, 10, model.dt() * T::of(1e-6))
    }

    /// First derivative on the scan grid at the given variance.
    fn scan(&self, variance: T) -> Vec<T> {
        let m = self.points;
        let reach = (cutoff::<T>() * variance.sqrt() / self.step).ceil().to_usize().unwrap_or(m).min(m - 1);
        let mut kernel = vec![T::zero(); 2 * m - 1];
        let scale = self.model.dt() / variance;
        for q in 0..=reach {
            let x = T::of_usize(q) * self.step;
            let k = (-(x * x) / (variance + variance)).exp() / (T::TAU() * variance).sqrt() * x * scale;
            // d/dt of 𝒢(t − t_j) is odd in the offset.
            kernel[m - 1 + q] = -k;
            kernel[m - 1 - q] = k;
        }
        let fk = self.conv.spectrum(&kernel);
        self.conv.apply(&self.weights, &fk)
    }

    /// Minima of the model at `variance + offset`.
    pub fn minima_at(&self, offset: T) -> Result<MinimaSet<T>> {
        let shifted = self.model.at_scale(offset)?;
        let deriv = self.scan(shifted.variance());
        let peak = deriv.iter().fold(T::zero(), |a, d| a.max(d.abs()));
        let floor = peak * T::epsilon() * T::of(1e3);
        let t0 = self.model.centers()[0];
        let x = |i: usize| t0 + T::of_usize(i) * self.step;
        let t_last = x(self.points - 1);

        let mut positions = Vec::new();
        let mut last_negative: Option<usize> = None;
        for (i, &d) in deriv.iter().enumerate() {
            if d.abs() <= floor {
                continue;
            }
            if d < T::zero() {
                last_negative = Some(i);
                continue;
            }
            let Some(a) = last_negative.take() else { continue };
            let f = |t: T| shifted.derivative1(t);
            let (lo, hi) = (x(a), x(i));
            if !(f(lo) < T::zero() && f(hi) > T::zero()) {
                continue;
            }
            let root = refine_root(f, lo, hi, self.root_tol)?;
            if root - t0 <= self.root_tol || t_last - root <= self.root_tol {
                continue;
            }
            if shifted.derivative2(root) > T::zero() {
                positions.push(root);
            }
        }
        Ok(MinimaSet { positions, scale_offset: offset })
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }
}

/// Minima of `model` at its own variance.
pub fn local_minima<T: Scalar>(model: &KdeModel<T>, oversampling: usize, root_tol: T) -> Result<MinimaSet<T>> {
    MinimaScanner::new(model, oversampling, root_tol)?.minima_at(T::zero())
}

/// Settings for [`detect_thresholds_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectConfig<T> {
    pub classes: usize,
    /// Magnitude of one scale step `Δσ²`.
    pub step: T,
    pub max_steps: usize,
    pub oversampling: usize,
    /// Root tolerance; `None` means `Δt·1e-6`.
    pub root_tol: Option<T>,
}

impl<T: Scalar> DetectConfig<T> {
    pub fn new(classes: usize, step: T) -> Self {
        Self { classes, step, max_steps: 10_000, oversampling: 10, root_tol: None }
    }
}

/// One evaluated scale during the walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WalkTraceRow<T> {
    pub step: usize,
    pub scale_offset: T,
    pub minima_count: usize,
}

/// Walks the model through scale space until it has `classes − 1` minima.
pub fn detect_thresholds<T: Scalar>(model: &KdeModel<T>, classes: usize, dsigma2_step: T, max_steps: usize) -> Result<ThresholdResult<T>> {
    let cfg = DetectConfig { max_steps, ..DetectConfig::new(classes, dsigma2_step) };
    detect_thresholds_with(model, &cfg, |_| {})
}

/// [`detect_thresholds`] with full settings and a callback per evaluated
/// scale (walk steps and bisection probes alike).
pub fn detect_thresholds_with<T: Scalar, F>(model: &KdeModel<T>, cfg: &DetectConfig<T>, mut observe: F) -> Result<ThresholdResult<T>>
where
    F: FnMut(WalkTraceRow<T>),
{
    if cfg.classes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 classes, got {}", cfg.classes)));
    }
    if !(cfg.step > T::zero() && cfg.step.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale step must be positive, got {}", cfg.step)));
    }
    let target = cfg.classes - 1;
    let tol = cfg.root_tol.unwrap_or(model.dt() * T::of(1e-6));
    let scanner = MinimaScanner::new(model, cfg.oversampling, tol)?;
    let mut evals = 0usize;
    let mut probe = |offset: T| -> Result<MinimaSet<T>> {
        let set = scanner.minima_at(offset)?;
        observe(WalkTraceRow { step: evals, scale_offset: offset, minima_count: set.len() });
        evals += 1;
        Ok(set)
    };

    let base = probe(T::zero())?;
    let base_minima = base.len();
    let done = |set: MinimaSet<T>, direction, steps, refined| ThresholdResult {
        thresholds: set.positions,
        scale_offset: set.scale_offset,
        direction,
        steps,
        refined,
        base_minima,
    };
    if base_minima == target {
        return Ok(done(base, Direction::None, 0, false));
    }
    let (direction, sign) = if base_minima > target { (Direction::Coarser, T::one()) } else { (Direction::Finer, -T::one()) };
    // Counts on the starting side of the target.
    let before = |count: usize| if sign > T::zero() { count > target } else { count < target };

    let mut prev = (T::zero(), base_minima);
    for k in 1..=cfg.max_steps {
        let offset = sign * T::of_usize(k) * cfg.step;
        if !(model.variance() + offset > T::zero()) {
            return Err(Error::UnresolvableClusters { wanted: target, found: prev.1, offset: prev.0.f64() });
        }
        let set = probe(offset)?;
        let count = set.len();
        if count == target {
            return Ok(done(set, direction, k, false));
        }
        if before(count) {
            prev = (offset, count);
            continue;
        }
        // Overshoot: bisect on the scale axis between the last two offsets.
        let (mut near, mut far) = (prev, (offset, count));
        let min_width = cfg.step / T::of(1024.0);
        while (far.0 - near.0).abs() > min_width {
            let mid = near.0 + (far.0 - near.0) / T::of(2.0);
            let set = probe(mid)?;
            let c = set.len();
            if c == target {
                return Ok(done(set, direction, k, true));
            }
            if before(c) {
                near = (mid, c);
            } else {
                far = (mid, c);
            }
        }
        let (lower, upper) = if near.1 < far.1 { (near, far) } else { (far, near) };
        return Err(Error::CountUnreachable {
            wanted: target,
            below: lower.1,
            above: upper.1,
            offset_below: lower.0.f64(),
            offset_above: upper.0.f64(),
        });
    }
    Err(Error::SearchLimit { steps: cfg.max_steps, found: prev.1, wanted: target })
}

/// Writes `step,scale_offset,minima_count` rows.
pub fn write_walk_trace<T: Scalar>(rows: &[WalkTraceRow<T>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let run = || -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["step", "scale_offset", "minima_count"])?;
        for r in rows {
            w.write_record([r.step.to_string(), format!("{:?}", r.scale_offset), r.minima_count.to_string()])?;
        }
        w.flush()
    };
    run().map_err(|e| Error::io(path, e))
}
