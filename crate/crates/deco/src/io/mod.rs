//! File formats: images, frame directories, templates, pose sequences,
//! meshes, checkpoints and telemetry.

mod checkpoint;
mod frames;
mod image;
mod obj;
mod pose;
mod telemetry;
mod template;

pub use self::image::{
    image_from_png, mask_png_bytes, png_bytes, read_depth, read_mask, read_normals, read_rgb, write_depth, write_mask,
    write_normals, write_rgb, BitDepth, DEFAULT_DEPTH_NEAR,
};
pub use checkpoint::{
    read_atlas, read_flow, read_params, write_atlas, write_flow, write_params, ATLAS_FORMAT, PARAMS_MAGIC,
    PARAMS_VERSION,
};
pub use frames::{frame_name, list_numbered, read_frames, read_mask_dir, read_normal_dir, write_frames, write_mask_dir};
pub use obj::{write_obj, obj_string};
pub use pose::{parse_poses, pose_string, read_poses, write_poses, PoseSequence};
pub use telemetry::{write_telemetry, TELEMETRY_COLUMNS};
pub use template::{
    read_template, read_template_json, template_bytes, template_from_bytes, write_template, write_template_json,
    TEMPLATE_MAGIC, TEMPLATE_VERSION,
};

use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    /// Malformed text record; `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {what}: expected {expected}, found {actual}")]
    Count {
        path: PathBuf,
        /// 1-based line of the offending record, when the format is line-oriented.
        line: Option<usize>,
        what: &'static str,
        expected: usize,
        actual: usize,
    },
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl std::fmt::Display) -> Self {
        IoError::Format {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn parse(path: &Path, line: usize, message: impl std::fmt::Display) -> Self {
        IoError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        }
    }

    /// 1-based line of a text-format error.
    pub fn line(&self) -> Option<usize> {
        match self {
            IoError::Parse { line, .. } => Some(*line),
            IoError::Count { line, .. } => *line,
            _ => None,
        }
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| IoError::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}
