//! Software rasterizer with frozen-coverage gradients.

mod camera;
mod grad;
mod raster;
mod schedule;

pub use camera::{Camera, CameraError};
pub use grad::{grad_geometry, grad_texture};
pub use raster::{
    render, sample_texture, shade_normals, FrameBuffer, RenderOptions, DEFAULT_BACKGROUND, NO_TRIANGLE,
};
pub use schedule::{hierarchical_schedule, ResolutionSchedule, ScheduleError};

use crate::body::BodyError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("mesh has no vertices or faces")]
    EmptyMesh,
    #[error("texture must be a non-empty 3-channel image, got {0} channels")]
    TextureShape(usize),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Mesh(#[from] BodyError),
}
