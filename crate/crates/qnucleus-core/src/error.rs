use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("chart box mismatch between voxel sets")]
    BoxMismatch,
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("point outside field domain")]
    Domain,
    #[error("affine map is numerically singular (sigma_min = {0:.3e})")]
    SingularMap(f64),
    #[error("hat order {found} does not match required order {required}")]
    OrderMismatch { found: usize, required: usize },
    #[error("invalid cut: hat surface meets the compact set or hat leaves the ambient")]
    InvalidCut,
    #[error("sequence mismatch: {0}")]
    SequenceMismatch(String),
    #[error("sequence does not empty the compact set ({residual} voxels remain)")]
    NotEmptying { residual: usize },
    #[error("cannot dominate: positive branch vanishes at seam voxel {voxel}")]
    CannotDominate { voxel: usize },
    #[error("seam violation at voxel {voxel}: existing function does not dominate vanishing branch")]
    SeamViolation { voxel: usize },
    #[error("glue seam check failed at voxel {voxel} (margin {margin:.3e})")]
    GlueSeam { voxel: usize, margin: f64 },
    #[error("coverage failure: compact set not contained in the union of the glue regions")]
    Coverage,
    #[error("construction failed at step {step}: {source}")]
    Construction {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("probe input invalid: {0}")]
    ProbeInput(String),
    #[error("unknown scene '{0}'")]
    UnknownScene(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
