//! Lighting-aware harmonization of a rendered foreground into a background.
//!
//! Both layers are split into albedo and scalar shading. A directional plus
//! ambient light is fitted to the background shading, the foreground is
//! re-shaded from its normals under that light, optionally refined, and
//! multiplied back onto the (optionally adjusted) foreground albedo.

mod albedo;
mod decompose;
mod frame;
mod light;
mod refine;

pub use albedo::{fit_params, harmonize_albedo, AlbedoStats, HarmonizeParams, LOG_OFFSET};
pub use decompose::{decompose, gaussian_blur, DecomposeMode, ShadingDecomposition, RETINEX_SIGMA_FRACTION};
pub use frame::{estimate_frame, harmonize_sequence, render_frame, FrameEstimate, HarmonizeConfig, LayerInputs};
pub use light::{estimate_light, estimate_light_with, LightFitOptions, LightModel};
pub use refine::{BilateralSmooth, Passthrough, RefineError, RefineInputs, ShadingRefiner};

use alloc::vec::Vec;
use nalgebra::Vector3;

use crate::image::{Image, Mask};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarmonizeError {
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("shading must be non-negative")]
    NegativeShading,
    #[error("light needs a unit direction and non-negative intensity and ambient")]
    InvalidLight,
    #[error("light fit needs at least 4 usable pixels, got {0}")]
    TooFewPixels(usize),
    /// All normals are collinear, so only the level `ambient + intensity·(n·l)` is identifiable.
    #[error("normals are collinear; only the shading level {level} is identifiable")]
    DegenerateNormals { level: f64 },
    #[error("EMA weight must lie in [0, 1], got {0}")]
    EmaWeight(f64),
}

/// Single-channel shading `ambient + intensity·max(0, n·l)`; zero normals
/// (uncovered pixels) receive the ambient term.
pub fn shade_foreground(normals: &[Vector3<f64>], width: usize, height: usize, light: &LightModel) -> Result<Image, HarmonizeError> {
    if normals.len() != width * height {
        return Err(HarmonizeError::Shape("normal count must equal width × height"));
    }
    let data = normals.iter().map(|n| light.shade(n)).collect();
    Ok(Image::from_vec(width, height, 1, data).expect("normal-sized buffer"))
}

/// `mask ? clamp(albedo ⊙ shading) : background`
pub fn compose(albedo: &Image, shading: &Image, background: &Image, mask: &Mask) -> Result<Image, HarmonizeError> {
    let (w, h) = (background.width(), background.height());
    if albedo.channels() != 3
        || background.channels() != 3
        || shading.channels() != 1
        || (albedo.width(), albedo.height()) != (w, h)
        || (shading.width(), shading.height()) != (w, h)
        || (mask.width(), mask.height()) != (w, h)
    {
        return Err(HarmonizeError::Shape("compose inputs must share one resolution"));
    }
    let mut out = background.clone();
    for i in 0..w * h {
        if mask.data()[i] {
            let s = shading.data()[i];
            let a = albedo.pixel_at(i);
            for (o, v) in out.pixel_at_mut(i).iter_mut().zip(a) {
                *o = (v * s).clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

/// Values an exponential moving average can blend.
pub trait EmaBlend: Clone {
    /// `λ·prev + (1 − λ)·self`
    fn ema(&self, prev: &Self, lambda: f64) -> Self;
}

impl EmaBlend for f64 {
    fn ema(&self, prev: &Self, lambda: f64) -> Self {
        lambda * prev + (1.0 - lambda) * self
    }
}

impl EmaBlend for HarmonizeParams {
    fn ema(&self, prev: &Self, lambda: f64) -> Self {
        Self {
            exposure: self.exposure.ema(&prev.exposure, lambda),
            white_balance: [0, 1, 2].map(|c| self.white_balance[c].ema(&prev.white_balance[c], lambda)),
            gamma: self.gamma.ema(&prev.gamma, lambda),
        }
    }
}

impl EmaBlend for LightModel {
    /// Direction is blended componentwise then renormalized.
    fn ema(&self, prev: &Self, lambda: f64) -> Self {
        let d = prev.direction * lambda + self.direction * (1.0 - lambda);
        Self {
            direction: d.try_normalize(1e-12).unwrap_or(self.direction),
            intensity: self.intensity.ema(&prev.intensity, lambda),
            ambient: self.ambient.ema(&prev.ambient, lambda),
        }
    }
}

/// `y_0 = x_0`, `y_i = λ·y_{i−1} + (1 − λ)·x_i`.
pub fn temporal_ema<T: EmaBlend>(seq: &[T], lambda: f64) -> Result<Vec<T>, HarmonizeError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(HarmonizeError::EmaWeight(lambda));
    }
    let mut out: Vec<T> = Vec::with_capacity(seq.len());
    for x in seq {
        let y = match out.last() {
            Some(prev) => x.ema(prev, lambda),
            None => x.clone(),
        };
        out.push(y);
    }
    Ok(out)
}
