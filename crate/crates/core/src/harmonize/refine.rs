use alloc::boxed::Box;
use alloc::string::String;
use nalgebra::Vector3;

use super::HarmonizeError;
use crate::image::{Image, Mask};

/// Everything a shading refiner may look at.
#[derive(Debug, Clone, Copy)]
pub struct RefineInputs<'a> {
    pub composite: &'a Image,
    /// Single-channel initial foreground shading.
    pub shading: &'a Image,
    pub fg_mask: &'a Mask,
    pub normals: &'a [Vector3<f64>],
    pub depth: &'a [f64],
}

impl RefineInputs<'_> {
    pub fn validate(&self) -> Result<(), HarmonizeError> {
        let (w, h) = (self.shading.width(), self.shading.height());
        let n = w * h;
        if self.shading.channels() != 1
            || (self.composite.width(), self.composite.height()) != (w, h)
            || (self.fg_mask.width(), self.fg_mask.height()) != (w, h)
            || self.normals.len() != n
            || self.depth.len() != n
        {
            return Err(HarmonizeError::Shape("refiner inputs must share one resolution"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RefineError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Input(#[from] HarmonizeError),
}

/// Post-processes the relit foreground shading.
pub trait ShadingRefiner: Send + Sync {
    fn refine(&self, inputs: &RefineInputs<'_>) -> Result<Image, RefineError>;
}

impl<R: ShadingRefiner + ?Sized> ShadingRefiner for &R {
    fn refine(&self, inputs: &RefineInputs<'_>) -> Result<Image, RefineError> {
        (**self).refine(inputs)
    }
}

impl<R: ShadingRefiner + ?Sized> ShadingRefiner for Box<R> {
    fn refine(&self, inputs: &RefineInputs<'_>) -> Result<Image, RefineError> {
        (**self).refine(inputs)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Passthrough;

impl ShadingRefiner for Passthrough {
    fn refine(&self, inputs: &RefineInputs<'_>) -> Result<Image, RefineError> {
        inputs.validate()?;
        Ok(inputs.shading.clone())
    }
}

/// Cross-bilateral filter of the shading inside the foreground mask, with
/// range weights taken from the composite's colors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilateralSmooth {
    pub radius: usize,
    pub sigma_space: f64,
    pub sigma_range: f64,
}

impl Default for BilateralSmooth {
    fn default() -> Self {
        Self {
            radius: 3,
            sigma_space: 2.0,
            sigma_range: 0.1,
        }
    }
}

impl ShadingRefiner for BilateralSmooth {
    fn refine(&self, inputs: &RefineInputs<'_>) -> Result<Image, RefineError> {
        inputs.validate()?;
        let s = inputs.shading;
        let (w, h) = (s.width(), s.height());
        let r = self.radius as isize;
        let inv_s = 1.0 / (2.0 * self.sigma_space * self.sigma_space);
        let inv_r = 1.0 / (2.0 * self.sigma_range * self.sigma_range);
        let mut out = s.clone();
        for y in 0..h {
            for x in 0..w {
                if !inputs.fg_mask.get(x, y) {
                    continue;
                }
                let center = inputs.composite.pixel(x, y);
                let (mut acc, mut wsum) = (0.0, 0.0);
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (qx, qy) = (x as isize + dx, y as isize + dy);
                        if qx < 0 || qy < 0 || qx >= w as isize || qy >= h as isize {
                            continue;
                        }
                        let (qx, qy) = (qx as usize, qy as usize);
                        if !inputs.fg_mask.get(qx, qy) {
                            continue;
                        }
                        let q = inputs.composite.pixel(qx, qy);
                        let dc: f64 = (0..3).map(|c| (q[c] - center[c]) * (q[c] - center[c])).sum();
                        let wgt = libm::exp(-((dx * dx + dy * dy) as f64) * inv_s - dc * inv_r);
                        acc += wgt * s.get(qx, qy, 0);
                        wsum += wgt;
                    }
                }
                out.set(x, y, 0, acc / wsum);
            }
        }
        Ok(out)
    }
}
