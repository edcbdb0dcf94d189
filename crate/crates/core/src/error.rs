use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("region ids are not contiguous: id {missing} is absent (max id {max})")]
    NonContiguousRegionIds { missing: u32, max: u32 },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("invalid label map: {0}")]
    InvalidLabels(String),

    #[error("invalid probability field: {0}")]
    InvalidProbability(String),

    #[error("probability floor must lie in (0, 1), got {0}")]
    InvalidFloor(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sigma heuristic needs at least one edge")]
    NoEdges,

    #[error("label {label} at node {node} is out of range for {num_classes} classes")]
    LabelOutOfRange {
        node: usize,
        label: u16,
        num_classes: usize,
    },

    #[error("instance too large for exhaustive search: {nodes} nodes x {classes} classes")]
    InstanceTooLarge { nodes: usize, classes: usize },

    #[error("shape mismatch: reference has {reference} elements, prediction has {predicted}")]
    ShapeMismatch { reference: usize, predicted: usize },

    #[error("confusion matrix is empty")]
    EmptyMatrix,

    #[error("bad magic bytes")]
    BadMagic,

    #[error("truncated file: {0}")]
    TruncatedFile(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
