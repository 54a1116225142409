//! Weighted 1D k-means on histogram bins.

use serde::Serialize;

use crate::{Error, Histogram, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeansResult<T> {
    /// Sorted centroids.
    pub centroids: Vec<T>,
    /// Midpoints between consecutive centroids.
    pub thresholds: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Weighted within-cluster sum of squares.
    pub inertia: T,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<T>,
}

/// Index of the nearest centroid; ties go to the lower index.
pub fn nearest<T: Scalar>(centroids: &[T], t: T) -> usize {
    let mut best = 0;
    let mut dist = (t - centroids[0]).abs();
    for (k, &c) in centroids.iter().enumerate().skip(1) {
        let d = (t - c).abs();
        if d < dist {
            best = k;
            dist = d;
        }
    }
    best
}

/// Weighted within-cluster sum of squares of an assignment.
pub fn inertia<T: Scalar>(hist: &Histogram<T>, centroids: &[T], labels: &[usize]) -> T {
    hist.t().iter().zip(hist.h()).zip(labels).map(|((&t, &h), &k)| h * hist.dt() * (t - centroids[k]).powi(2)).sum()
}

/// Lloyd iterations on bin centers weighted by `h_i·Δt`, started from the
/// weighted `(j − ½)/C` quantiles.
pub fn kmeans_1d<T: Scalar>(hist: &Histogram<T>, classes: usize, max_iters: usize, tol: T) -> Result<KMeansResult<T>> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 classes, got {classes}")));
    }
    let occupied: Vec<usize> = (0..hist.len()).filter(|&i| hist.h()[i] > T::zero()).collect();
    if occupied.len() < classes {
        return Err(Error::InvalidArgument(format!("{} bins with positive mass, need at least {classes}", occupied.len())));
    }
    let t = hist.t();
    let w: Vec<T> = hist.h().iter().map(|&h| h * hist.dt()).collect();
    let mut centroids: Vec<T> = initial_bins(&w, &occupied, classes).into_iter().map(|i| t[i]).collect();

    let mut labels = vec![0usize; t.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        for (l, &ti) in labels.iter_mut().zip(t) {
            *l = nearest(&centroids, ti);
        }
        history.push(inertia(hist, &centroids, &labels));
        let mut sum = vec![T::zero(); classes];
        let mut mass = vec![T::zero(); classes];
        for ((&ti, &wi), &k) in t.iter().zip(&w).zip(&labels) {
            sum[k] += wi * ti;
            mass[k] += wi;
        }
        let mut shift = T::zero();
        for k in 0..classes {
            // An emptied cluster keeps its centroid.
            if mass[k] > T::zero() {
                let c = sum[k] / mass[k];
                shift = shift.max((c - centroids[k]).abs());
                centroids[k] = c;
            }
        }
        iterations += 1;
        if shift < tol {
            converged = true;
            break;
        }
    }
    for (l, &ti) in labels.iter_mut().zip(t) {
        *l = nearest(&centroids, ti);
    }
    let final_inertia = inertia(hist, &centroids, &labels);
    centroids.sort_by(|a, b| a.partial_cmp(b).expect("finite centroids"));
    let two = T::of(2.0);
    let thresholds = centroids.windows(2).map(|p| (p[0] + p[1]) / two).collect();
    Ok(KMeansResult { centroids, thresholds, iterations, converged, inertia: final_inertia, inertia_history: history })
}

/// Bins holding the weighted `(j − ½)/C` quantiles, made distinct by moving
/// collisions to the next occupied bin.
fn initial_bins<T: Scalar>(w: &[T], occupied: &[usize], classes: usize) -> Vec<usize> {
    let total: T = w.iter().copied().sum();
    let mut picks = Vec::with_capacity(classes);
    let mut cum = T::zero();
    let mut pos = 0;
    for j in 0..classes {
        let q = total * (T::of_usize(j) + T::of(0.5)) / T::of_usize(classes);
        while pos + 1 < occupied.len() && cum + w[occupied[pos]] < q {
            cum += w[occupied[pos]];
            pos += 1;
        }
        picks.push(pos);
    }
    // Slot j must leave room for the classes after it.
    let m = occupied.len();
    for j in 0..classes {
        let lo = if j == 0 { 0 } else { picks[j - 1] + 1 };
        picks[j] = picks[j].max(lo).min(m - (classes - j));
    }
    picks.into_iter().map(|p| occupied[p]).collect()
}
