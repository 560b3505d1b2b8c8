use alloc::vec;
use alloc::vec::Vec;

use super::DiffusionError;
use crate::image::Image;

/// Channel-major (`C × H × W`) latent tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl LatentGrid {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_vec(shape: [usize; 3], data: Vec<f64>) -> Result<Self, DiffusionError> {
        let [channels, height, width] = shape;
        if data.len() != channels * height * width {
            return Err(DiffusionError::ShapeMismatch {
                expected: shape,
                actual: [data.len(), 1, 1],
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DiffusionError::NonFinite);
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Standard-normal draws of the given shape.
    pub fn gaussian<R: rand::Rng + ?Sized>(shape: [usize; 3], rng: &mut R) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let [channels, height, width] = shape;
        let data = (0..channels * height * width)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn expect_shape(&self, shape: [usize; 3]) -> Result<(), DiffusionError> {
        if self.shape() == shape {
            Ok(())
        } else {
            Err(DiffusionError::ShapeMismatch {
                expected: shape,
                actual: self.shape(),
            })
        }
    }

    /// `a·self + b·other`, elementwise.
    pub fn axpby(&self, a: f64, other: &LatentGrid, b: f64) -> LatentGrid {
        debug_assert_eq!(self.shape(), other.shape());
        LatentGrid {
            data: self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect(),
            ..*self
        }
    }

    pub fn scale(&self, s: f64) -> LatentGrid {
        LatentGrid {
            data: self.data.iter().map(|x| x * s).collect(),
            ..*self
        }
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    /// Round-trips every value through `f32`, the wire precision.
    pub fn to_f32_precision(&self) -> LatentGrid {
        LatentGrid {
            data: self.data.iter().map(|&x| x as f32 as f64).collect(),
            ..*self
        }
    }
}

/// Average-pool / bilinear-upsample latent codec standing in for an
/// autoencoder: `encode` maps each `f × f` block mean `m` to `2m − 1`,
/// `decode` inverts the affine map and upsamples bilinearly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct LatentCodec {
    pub factor: usize,
}

impl Default for LatentCodec {
    fn default() -> Self {
        Self { factor: 8 }
    }
}

impl LatentCodec {
    pub fn new(factor: usize) -> Self {
        Self { factor: factor.max(1) }
    }

    /// Latent shape for an image of the given size.
    pub fn latent_shape(&self, width: usize, height: usize, channels: usize) -> Result<[usize; 3], DiffusionError> {
        let f = self.factor;
        if width % f != 0 || height % f != 0 || width == 0 || height == 0 {
            return Err(DiffusionError::NotDivisible { width, height, factor: f });
        }
        Ok([channels, height / f, width / f])
    }

    pub fn encode(&self, image: &Image) -> Result<LatentGrid, DiffusionError> {
        let (w, h, c) = image.dims();
        let shape = self.latent_shape(w, h, c)?;
        let f = self.factor;
        let [_, lh, lw] = shape;
        let mut out = LatentGrid::zeros(c, lh, lw);
        let inv = 1.0 / (f * f) as f64;
        for y in 0..h {
            for x in 0..w {
                let px = image.pixel(x, y);
                let base = (y / f) * lw + x / f;
                for (ch, v) in px.iter().enumerate() {
                    out.data[ch * lh * lw + base] += v * inv;
                }
            }
        }
        for v in &mut out.data {
            *v = 2.0 * *v - 1.0;
        }
        Ok(out)
    }

    /// Adjoint of the encoder's Jacobian: each latent gradient is broadcast
    /// over its block and scaled by `2 / f²`.
    pub fn encode_adjoint(&self, grad: &LatentGrid, width: usize, height: usize) -> Image {
        let f = self.factor;
        let [c, lh, lw] = grad.shape();
        let scale = 2.0 / (f * f) as f64;
        Image::from_fn(width, height, c, |x, y, ch| {
            scale * grad.data[(ch * lh + (y / f).min(lh - 1)) * lw + (x / f).min(lw - 1)]
        })
    }

    pub fn decode(&self, z: &LatentGrid) -> Image {
        let f = self.factor;
        let [c, lh, lw] = z.shape();
        let (w, h) = (lw * f, lh * f);
        let inv = 1.0 / f as f64;
        let mut out = Image::new(w, h, c);
        for y in 0..h {
            let ly = (y as f64 + 0.5) * inv - 0.5;
            for x in 0..w {
                let lx = (x as f64 + 0.5) * inv - 0.5;
                let taps = crate::image::bilinear_taps(lw, lh, lx, ly);
                let px = out.pixel_mut(x, y);
                for (ch, o) in px.iter_mut().enumerate() {
                    let plane = &z.data[ch * lh * lw..(ch + 1) * lh * lw];
                    let v: f64 = taps.iter().map(|&(i, wt)| wt * plane[i]).sum();
                    *o = (0.5 * (v + 1.0)).clamp(0.0, 1.0);
                }
            }
        }
        out
    }
}
