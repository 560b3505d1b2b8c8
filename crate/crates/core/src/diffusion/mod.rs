//! Latent codec, noise schedule and the noise-predictor seam.

mod latent;
mod predictor;
mod schedule;

pub use latent::{LatentCodec, LatentGrid};
pub use predictor::{
    add_noise, one_step_x0, oracle_noise, x0_from_eps, Conditioning, NoisePredictor, OraclePredictor,
    PredictorError, ZeroPredictor,
};
pub use schedule::NoiseSchedule;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffusionError {
    #[error("timestep {t} outside 1..={max}")]
    InvalidTimestep { t: usize, max: usize },
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: [usize; 3], actual: [usize; 3] },
    #[error("image {width}x{height} is not divisible by the latent factor {factor}")]
    NotDivisible { width: usize, height: usize, factor: usize },
    #[error("alpha_bar must lie in (0, 1) and strictly decrease")]
    InvalidSchedule,
    #[error("latent contains non-finite values")]
    NonFinite,
    #[error("noise predictor failed: {0}")]
    Predictor(#[from] PredictorError),
}
