use alloc::string::String;

use super::{DiffusionError, LatentGrid, NoiseSchedule};

/// Text conditioning and sampling controls forwarded to a predictor.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Conditioning {
    pub prompt: String,
    /// Classifier-free guidance weight; honored by backends that implement it.
    pub guidance_scale: f64,
    pub seed: u64,
}

impl Conditioning {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            guidance_scale: 7.5,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Failures of a noise predictor backend.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictorError {
    /// The backend could not be reached or did not answer in time.
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    /// The backend answered but violated the wire contract.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("predicted noise has shape {actual:?}, expected {expected:?}")]
    ShapeMismatch { expected: [usize; 3], actual: [usize; 3] },
}

/// `ε̂(z_t; y, t)`: shape-preserving and deterministic for fixed inputs.
pub trait NoisePredictor: Send + Sync {
    fn predict(&self, z_t: &LatentGrid, t: usize, cond: &Conditioning) -> Result<LatentGrid, PredictorError>;
}

impl<P: NoisePredictor + ?Sized> NoisePredictor for &P {
    fn predict(&self, z_t: &LatentGrid, t: usize, cond: &Conditioning) -> Result<LatentGrid, PredictorError> {
        (**self).predict(z_t, t, cond)
    }
}

impl<P: NoisePredictor + ?Sized> NoisePredictor for alloc::boxed::Box<P> {
    fn predict(&self, z_t: &LatentGrid, t: usize, cond: &Conditioning) -> Result<LatentGrid, PredictorError> {
        (**self).predict(z_t, t, cond)
    }
}

impl<P: NoisePredictor + ?Sized> NoisePredictor for alloc::sync::Arc<P> {
    fn predict(&self, z_t: &LatentGrid, t: usize, cond: &Conditioning) -> Result<LatentGrid, PredictorError> {
        (**self).predict(z_t, t, cond)
    }
}

/// Predicts zero noise everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl NoisePredictor for ZeroPredictor {
    fn predict(&self, z_t: &LatentGrid, _t: usize, _cond: &Conditioning) -> Result<LatentGrid, PredictorError> {
        let [c, h, w] = z_t.shape();
        Ok(LatentGrid::zeros(c, h, w))
    }
}

/// Verification denoiser: returns the unique `ε̂` for which the one-step
/// estimate equals `target`, i.e. `(z_t − α_t·target) / σ_t`.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    target: LatentGrid,
    schedule: NoiseSchedule,
}

impl OraclePredictor {
    pub fn new(target: LatentGrid, schedule: NoiseSchedule) -> Self {
        Self { target, schedule }
    }

    pub fn target(&self) -> &LatentGrid {
        &self.target
    }
}

/// `(z_t − α_t·target) / σ_t` on raw buffers.
pub fn oracle_noise(schedule: &NoiseSchedule, z_t: &[f64], target: &[f64], t: usize) -> alloc::vec::Vec<f64> {
    let a = schedule.alpha(t);
    let s = schedule.sigma(t);
    z_t.iter().zip(target).map(|(z, x)| (z - a * x) / s).collect()
}

impl NoisePredictor for OraclePredictor {
    fn predict(&self, z_t: &LatentGrid, t: usize, _cond: &Conditioning) -> Result<LatentGrid, PredictorError> {
        if z_t.shape() != self.target.shape() {
            return Err(PredictorError::ShapeMismatch {
                expected: self.target.shape(),
                actual: z_t.shape(),
            });
        }
        self.schedule
            .check(t)
            .map_err(|e| PredictorError::Contract(alloc::format!("{e}")))?;
        let data = oracle_noise(&self.schedule, z_t.data(), self.target.data(), t);
        LatentGrid::from_vec(z_t.shape(), data).map_err(|e| PredictorError::Contract(alloc::format!("{e}")))
    }
}

/// `z_t = α_t·z + σ_t·ε`.
pub fn add_noise(
    schedule: &NoiseSchedule,
    z: &LatentGrid,
    t: usize,
    eps: &LatentGrid,
) -> Result<LatentGrid, DiffusionError> {
    schedule.check(t)?;
    eps.expect_shape(z.shape())?;
    Ok(z.axpby(schedule.alpha(t), eps, schedule.sigma(t)))
}

/// One-step denoised estimate `z_0 = (z_t − σ_t·ε̂) / α_t`.
pub fn one_step_x0<P: NoisePredictor + ?Sized>(
    schedule: &NoiseSchedule,
    z_t: &LatentGrid,
    t: usize,
    predictor: &P,
    cond: &Conditioning,
) -> Result<LatentGrid, DiffusionError> {
    schedule.check(t)?;
    let eps_hat = predictor.predict(z_t, t, cond)?;
    x0_from_eps(schedule, z_t, t, &eps_hat)
}

/// `z_0 = (z_t − σ_t·ε̂) / α_t` for an already-predicted `ε̂`.
pub fn x0_from_eps(
    schedule: &NoiseSchedule,
    z_t: &LatentGrid,
    t: usize,
    eps_hat: &LatentGrid,
) -> Result<LatentGrid, DiffusionError> {
    schedule.check(t)?;
    if eps_hat.shape() != z_t.shape() {
        return Err(PredictorError::ShapeMismatch {
            expected: z_t.shape(),
            actual: eps_hat.shape(),
        }
        .into());
    }
    let a = schedule.alpha(t);
    Ok(z_t.axpby(1.0 / a, eps_hat, -schedule.sigma(t) / a))
}
