//! Meshes, textures and images on disk.
//!
//! Supported formats: the `v`/`vt`/`f` subset of Wavefront OBJ, binary PPM
//! (`P6`, 8 bit) and PFM (`PF`, 32-bit float). Layouts are documented in
//! `docs/formats.md`.

mod image;
mod mesh;

use std::path::PathBuf;

use thiserror::Error;

pub use image::{
    load_texture, quantize, read_pfm, read_ppm, save_image, save_texture, texture_from_ppm,
    write_pfm, write_ppm, Image, PfmData, Texture, WrapMode,
};
pub use mesh::{parse_obj, parse_obj_with_stats, Face, Mesh, ObjStats};

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("obj line {line}: {message}")]
    Obj { line: usize, message: String },
    #[error("obj line {line}: index {index} out of range")]
    IndexOutOfRange { line: usize, index: i64 },
    #[error("obj line {line}: face vertex has no texture coordinate")]
    MissingUv { line: usize },
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("image dimensions {width}x{height} are too large")]
    DimensionOverflow { width: usize, height: usize },
    #[error("invalid texture: {0}")]
    InvalidTexture(String),
    #[error("unsupported image format for `{}`", .0.display())]
    UnsupportedFormat(PathBuf),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AssetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AssetError::Io {
            path: path.into(),
            source,
        }
    }
}
