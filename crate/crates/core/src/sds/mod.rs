//! Score-distillation optimization of the canonical body.
//!
//! Each branch renders an image `I`, encodes it to `z`, perturbs it to `z_t`
//! with a frozen `(t, ε)`, denoises once to `z_0` and decodes `Î`. The image
//! gradient is the encode adjoint of the latent residual
//! `w(t)·(α_t/σ_t)·(z − z_0)` plus `2λ(I − Î)`, with `z_0` and `Î` held
//! constant. The normal branch is chained to `(β, ψ, D)`, the RGB branch to
//! the texture.

mod config;
mod guidance;
mod optimize;
mod step;

pub use config::{
    Framing, LearningRates, OptimizerConfig, Orbit, ReconPreset, SampledView, ViewSampling, WeightFn,
    RECON_WEIGHT_DEFAULT, RECON_WEIGHT_LIGHT,
};
pub use guidance::{Branch, Guidance, RenderOracle, ViewContext};
pub use optimize::{optimize, optimize_with, Guides, OptimizeOutcome, Prompts, SDSGradReport};
pub use step::{
    branch_image_grad, geo_step, latent_residual_grad, tex_step, BranchGrad, BranchStats, GeoStep, StepNoise,
    TexStep,
};

use crate::body::BodyError;
use crate::diffusion::{DiffusionError, PredictorError};
use crate::render::RenderError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdsError {
    #[error("invalid optimizer config: {0}")]
    Config(&'static str),
    #[error("sigma vanishes at timestep {0}")]
    ZeroSigma(usize),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Body(#[from] BodyError),
}

impl From<PredictorError> for SdsError {
    fn from(e: PredictorError) -> Self {
        SdsError::Diffusion(DiffusionError::Predictor(e))
    }
}
