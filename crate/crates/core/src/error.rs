use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(PathBuf),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("pixel ({row}, {col}) outside {height}x{width} grid")]
    OutOfRange {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("cannot project the origin")]
    OriginPoint,
    #[error("padding {pad} must be smaller than width {width}")]
    PadTooLarge { pad: usize, width: usize },
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("mesh is not normalized: vertex at radius {radius} exceeds {limit}")]
    UnnormalizedMesh { radius: f64, limit: f64 },
    #[error("map has no valid pixels")]
    EmptyMap,
    #[error("map dropped {0} hits during encoding; parity fusion is unreliable")]
    TruncatedMap(u32),
    #[error("occupancy grid is empty")]
    EmptyGrid,
    #[error("point set is empty")]
    EmptySet,
    #[error("mesh is not watertight: {fraction:.4} of voxels have fractional winding numbers")]
    NonWatertight { fraction: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("depth stack mismatch: {0}")]
    StackMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0} sweep cells failed")]
    FailedCells(usize),
}
