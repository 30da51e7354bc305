use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GaspError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GaspError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported kernel: roughness {0} (supported: 0.5, 1.5, 2.5)")]
    UnsupportedKernel(f64),

    #[error("invalid site grid: {0}")]
    Grid(String),

    #[error("numerical instability at site {site}: {detail}")]
    NumericalInstability { site: usize, detail: String },

    #[error("rank deficiency: {n} fully observed sites for {k} samples (need n >= K)")]
    RankDeficient { n: usize, k: usize },

    #[error("degenerate sample: row {0} is identically zero after centering")]
    DegenerateSample(usize),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("problem too large for the dense path: size {size} exceeds limit {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("component {index}: {source}")]
    Component {
        index: usize,
        #[source]
        source: Box<GaspError>,
    },

    #[error("invalid mask: {0}")]
    Mask(String),

    #[error("nothing to impute: no partially observed samples")]
    NothingToImpute,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl GaspError {
    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            GaspError::Domain(_) => "domain",
            GaspError::UnsupportedKernel(_) => "unsupported-kernel",
            GaspError::Grid(_) => "grid",
            GaspError::NumericalInstability { .. } => "numerical-instability",
            GaspError::RankDeficient { .. } => "rank-deficient",
            GaspError::DegenerateSample(_) => "degenerate-sample",
            GaspError::Contract(_) => "contract",
            GaspError::Precondition(_) => "precondition",
            GaspError::Singular(_) => "singular",
            GaspError::TooLarge { .. } => "too-large",
            GaspError::Component { source, .. } => source.kind(),
            GaspError::Mask(_) => "mask",
            GaspError::NothingToImpute => "nothing-to-impute",
            GaspError::Io { .. } => "io",
            GaspError::Parse { .. } => "parse",
        }
    }

    pub(crate) fn in_component(self, index: usize) -> Self {
        GaspError::Component {
            index,
            source: Box::new(self),
        }
    }
}
