//! Uniform-bin normalized histograms and their `t,h` CSV form.

use std::io::{Read, Write};
use std::path::Path;

use log::warn;

use crate::{Error, Result, Scalar};

const SPACING_TOL: f64 = 1e-6;
const MASS_TOL: f64 = 1e-6;

/// Histogram on a uniform grid with `Δt · Σ h = 1`.
///
/// Bin `i` covers `[lo + iΔt, lo + (i+1)Δt)` and is represented by its
/// center `t_i = lo + (i + ½)Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram<T> {
    t: Vec<T>,
    h: Vec<T>,
    dt: T,
}

impl<T: Scalar> Histogram<T> {
    /// Bins `samples` on `[lo, hi)`; samples outside the range are dropped.
    pub fn from_samples(samples: &[T], lo: T, hi: T, n_bins: usize) -> Result<Self> {
        check_range(lo, hi, n_bins)?;
        let dt = (hi - lo) / T::of_usize(n_bins);
        let mut counts = vec![0u64; n_bins];
        let mut kept = 0u64;
        for &x in samples {
            if !(x >= lo && x < hi) {
                continue;
            }
            let idx = ((x - lo) / dt).floor().to_usize().unwrap_or(0).min(n_bins - 1);
            counts[idx] += 1;
            kept += 1;
        }
        if kept == 0 {
            return Err(Error::EmptyHistogram(format!("none of {} samples fall in [{lo}, {hi})", samples.len())));
        }
        let raw: Vec<T> = counts.iter().map(|&c| T::from_u64(c).unwrap()).collect();
        Self::normalize(&raw, lo, hi)
    }

    /// Scales non-negative raw counts on `[lo, hi)` into a density.
    pub fn normalize(raw_counts: &[T], lo: T, hi: T) -> Result<Self> {
        check_range(lo, hi, raw_counts.len())?;
        if raw_counts.iter().any(|c| !(c.is_finite() && *c >= T::zero())) {
            return Err(Error::InvalidArgument("counts must be finite and non-negative".into()));
        }
        let n = raw_counts.len();
        let dt = (hi - lo) / T::of_usize(n);
        let total: T = raw_counts.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(Error::EmptyHistogram("all counts are zero".into()));
        }
        let scale = T::one() / (dt * total);
        let half = T::of(0.5);
        Ok(Self { t: (0..n).map(|i| lo + (T::of_usize(i) + half) * dt).collect(), h: raw_counts.iter().map(|&c| c * scale).collect(), dt })
    }

    /// Builds a histogram from bin centers and densities, checking every
    /// invariant except normalization, which is restored if off by more
    /// than 1e-6. Returns the original mass `Δt·Σh` when renormalized.
    pub fn from_parts(t: &[T], h: &[T]) -> Result<(Self, Option<T>)> {
        let n = t.len();
        if n < 2 || h.len() != n {
            return Err(Error::InvalidArgument(format!(
                "need at least two bins with matching lengths, got {} centers and {} densities",
                n,
                h.len()
            )));
        }
        if t.iter().chain(h).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite histogram value".into()));
        }
        if let Some(i) = h.iter().position(|&v| v < T::zero()) {
            return Err(Error::InvalidArgument(format!("negative density at row {}", i + 1)));
        }
        let dt = (t[n - 1] - t[0]) / T::of_usize(n - 1);
        if !(dt > T::zero()) {
            return Err(Error::InvalidArgument("bin centers are not ascending".into()));
        }
        let tol = T::of(SPACING_TOL) * dt;
        for (i, w) in t.windows(2).enumerate() {
            if ((w[1] - w[0]) - dt).abs() > tol {
                return Err(Error::InvalidArgument(format!("non-uniform spacing between rows {} and {}", i + 1, i + 2)));
            }
        }
        let mass: T = h.iter().copied().sum::<T>() * dt;
        if !(mass > T::zero()) {
            return Err(Error::EmptyHistogram("all densities are zero".into()));
        }
        let first = t[0];
        let centers = (0..n).map(|i| first + T::of_usize(i) * dt).collect();
        let renormalized = (mass - T::one()).abs() > T::of(MASS_TOL);
        let h = if renormalized { h.iter().map(|&v| v / mass).collect() } else { h.to_vec() };
        Ok((Self { t: centers, h, dt }, renormalized.then_some(mass)))
    }

    /// Bin centers.
    pub fn t(&self) -> &[T] {
        &self.t
    }

    /// Densities.
    pub fn h(&self) -> &[T] {
        &self.h
    }

    /// Bin width.
    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Left edge of the first bin.
    pub fn lo(&self) -> T {
        self.t[0] - self.dt * T::of(0.5)
    }

    /// Right edge of the last bin.
    pub fn hi(&self) -> T {
        self.t[self.len() - 1] + self.dt * T::of(0.5)
    }

    /// `Δt · Σ h`.
    pub fn mass(&self) -> T {
        self.h.iter().copied().sum::<T>() * self.dt
    }

    /// Writes the `t,h` CSV form.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    /// Writes the `t,h` CSV form to any writer.
    pub fn write_csv_to<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "h"])?;
        for (t, h) in self.t.iter().zip(&self.h) {
            wr.write_record([format!("{t:?}"), format!("{h:?}")])?;
        }
        wr.flush()
    }

    /// Reads a `t,h` CSV file, renormalizing with a warning if needed.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::read_csv_checked(path)?.0)
    }

    /// Like [`Histogram::read_csv`] but also returns the original mass when
    /// the file was renormalized.
    pub fn read_csv_checked(path: impl AsRef<Path>) -> Result<(Self, Option<T>)> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let name = path.display().to_string();
        let out = Self::parse_csv(file, &name)?;
        if let Some(mass) = out.1 {
            warn!("{name}: histogram mass {mass} renormalized to 1");
        }
        Ok(out)
    }

    /// Parses `t,h` CSV from a reader; `name` labels format errors.
    pub fn parse_csv<R: Read>(reader: R, name: &str) -> Result<(Self, Option<T>)> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rd.headers().map_err(|e| Error::format(name, e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "h" {
            return Err(Error::format(name, "expected header `t,h`"));
        }
        let mut t = Vec::new();
        let mut h = Vec::new();
        for (row, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| Error::format(name, e.to_string()))?;
            let parse = |col: usize| -> Result<T> {
                rec[col]
                    .parse::<f64>()
                    .ok()
                    .and_then(T::from_f64)
                    .ok_or_else(|| Error::format(name, format!("row {}: bad number `{}`", row + 1, &rec[col])))
            };
            t.push(parse(0)?);
            h.push(parse(1)?);
        }
        Self::from_parts(&t, &h).map_err(|e| match e {
            Error::InvalidArgument(m) | Error::EmptyHistogram(m) => Error::format(name, m),
            other => other,
        })
    }
}

fn check_range<T: Scalar>(lo: T, hi: T, n_bins: usize) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::InvalidArgument(format!("invalid range [{lo}, {hi})")));
    }
    if n_bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {n_bins}")));
    }
    Ok(())
}
