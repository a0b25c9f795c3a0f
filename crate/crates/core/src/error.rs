use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },

    #[error("unsupported format_version {found} (this build reads version {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("network has no layers")]
    EmptyNetwork,

    #[error("duplicate layer name `{0}`")]
    DuplicateLayer(String),

    #[error("layer `{layer}`: field `{field}` {reason}")]
    InvalidLayer {
        layer: String,
        field: &'static str,
        reason: String,
    },

    #[error("tile dimensions must be ≥ 1 (got {rows}x{cols})")]
    InvalidGeometry { rows: u32, cols: u32 },

    #[error("efficiency must lie strictly between 0 and 1 (got {0})")]
    InvalidEfficiency(f64),

    #[error("no positive control-block edge solves the efficiency equation")]
    NoPositiveRoot,

    #[error("brute-force oracle handles at most {max} items (got {got})")]
    OracleTooLarge { max: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
