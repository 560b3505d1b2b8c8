//! Layered background atlas: a coordinate network maps frame pixels to
//! atlas uv, a second network maps uv to color. Edits to the discretized
//! atlas propagate to every frame through the frozen uv field.

mod clip;
mod mlp;
mod model;

pub use clip::{Flow, TranslatingCheckerboard, VideoClip};
pub use mlp::{encode_backward, encode_into, encoded_dim, Mlp, Tape};
pub use model::{
    discretize_atlas, propagate_edit, reconstruct, track_dot, train_atlas, validate_edited_atlas, AtlasConfig, AtlasModel,
    UvMapping, DEFAULT_ATLAS_SIZE,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AtlasError {
    #[error("clip has no frames")]
    EmptyClip,
    #[error("frame {frame} differs in size or is not RGB")]
    FrameShape { frame: usize },
    #[error("expected {expected} masks, got {actual}")]
    MaskCount { expected: usize, actual: usize },
    #[error("mask {frame} does not match the frame size")]
    MaskShape { frame: usize },
    #[error("flow must hold one frame-sized field per consecutive frame pair")]
    FlowShape,
    #[error("fps must be positive, got {0}")]
    InvalidFps(f64),
    #[error("every pixel is masked as foreground")]
    AllMasked,
    #[error("invalid atlas configuration")]
    Config,
    #[error("frame {frame} out of range (clip has {frames})")]
    FrameOutOfRange { frame: usize, frames: usize },
    #[error("edited atlas is {width}x{height} with {channels} channels")]
    EditedAtlasShape { width: usize, height: usize, channels: usize },
}
