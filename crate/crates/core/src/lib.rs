//! Histogram segmentation by EM kernel-density deconvolution and Gaussian
//! scale-space minima.
//!
//! A histogram is fitted with one Gaussian per bin sharing a single
//! variance ([`em_fit`]). The fitted model is then shifted through scale
//! space ([`detect_thresholds`]) until it has exactly `C − 1` local minima,
//! which become the class thresholds.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for the common cases.
// `!(x > 0)` also rejects NaN; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baseline;
pub mod error;
pub mod histogram;
pub mod kde;
pub mod numerics;
pub mod porosity;
pub mod scalar;
pub mod scalespace;
pub mod synthetic;

pub use baseline::{kmeans_1d, KMeansResult};
pub use error::{Error, Result};
pub use histogram::Histogram;
pub use kde::{em_fit, gaussian, EmConfig, EmFit, KdeModel, VarianceRule};
pub use scalar::Scalar;
pub use scalespace::{detect_thresholds, detect_thresholds_with, local_minima, DetectConfig, Direction, MinimaSet, ThresholdResult};

pub type Histogram64 = Histogram<f64>;
pub type Histogram32 = Histogram<f32>;
pub type KdeModel64 = KdeModel<f64>;
pub type KdeModel32 = KdeModel<f32>;
pub type EmConfig64 = EmConfig<f64>;
pub type EmConfig32 = EmConfig<f32>;
pub type EmFit64 = EmFit<f64>;
pub type EmFit32 = EmFit<f32>;
pub type ThresholdResult64 = ThresholdResult<f64>;
pub type ThresholdResult32 = ThresholdResult<f32>;
pub type MinimaSet64 = MinimaSet<f64>;
pub type MinimaSet32 = MinimaSet<f32>;
pub type KMeansResult64 = KMeansResult<f64>;
pub type KMeansResult32 = KMeansResult<f32>;
pub type PorosityReport64 = porosity::PorosityReport<f64>;
pub type PorosityReport32 = porosity::PorosityReport<f32>;
