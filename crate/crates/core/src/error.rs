use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the histogram segmentation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty histogram: {0}")]
    EmptyHistogram(String),

    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no sign change in bracket [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },

    #[error("scale underflow: variance {variance} + offset {offset} is not positive")]
    ScaleUnderflow { variance: f64, offset: f64 },

    #[error(
        "unresolvable clusters: wanted {wanted} minima, found {found} at offset {offset} \
         before the variance reached zero"
    )]
    UnresolvableClusters { wanted: usize, found: usize, offset: f64 },

    #[error("search limit: {steps} scale steps taken, {found} minima (wanted {wanted})")]
    SearchLimit { steps: usize, found: usize, wanted: usize },

    #[error(
        "count unreachable: wanted {wanted} minima, nearest counts {below} at offset \
         {offset_below} and {above} at offset {offset_above}"
    )]
    CountUnreachable { wanted: usize, below: usize, above: usize, offset_below: f64, offset_above: f64 },

    #[error("degenerate mixture: {0}")]
    DegenerateMixture(String),

    #[error("empty cluster: {0}")]
    EmptyCluster(String),

    #[error("degenerate reference intensities: t_v = t_s = {0}")]
    DegenerateReferences(f64),
}

impl Error {
    pub(crate) fn format(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
