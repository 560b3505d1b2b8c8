use alloc::vec;
use alloc::vec::Vec;

use super::HarmonizeError;
use crate::image::Image;

/// Intrinsic split `image ≈ albedo ⊙ shading` with scalar shading.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadingDecomposition {
    /// `h × w × 3` reflectance in `[0, 1]`.
    pub albedo: Image,
    /// `h × w × 1` non-negative shading.
    pub shading: Image,
}

impl ShadingDecomposition {
    pub fn new(albedo: Image, shading: Image) -> Result<Self, HarmonizeError> {
        if albedo.channels() != 3
            || shading.channels() != 1
            || (albedo.width(), albedo.height()) != (shading.width(), shading.height())
        {
            return Err(HarmonizeError::Shape("albedo must be RGB and shading single-channel of equal size"));
        }
        if shading.data().iter().any(|s| !(*s >= 0.0)) {
            return Err(HarmonizeError::NegativeShading);
        }
        Ok(Self { albedo, shading })
    }

    /// `albedo ⊙ shading`, unclamped.
    pub fn recompose(&self) -> Image {
        let mut out = self.albedo.clone();
        for (i, s) in self.shading.data().iter().enumerate() {
            out.pixel_at_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecomposeMode {
    /// Known maps, passed through unchanged.
    GroundTruth(ShadingDecomposition),
    /// Shading is luminance blurred with `σ = 5%` of the image diagonal.
    Retinex {
        /// Floor on shading when dividing out albedo.
        epsilon: f64,
    },
}

impl DecomposeMode {
    pub fn retinex() -> Self {
        DecomposeMode::Retinex { epsilon: 1e-3 }
    }
}

/// Fraction of the diagonal used as the retinex blur σ.
pub const RETINEX_SIGMA_FRACTION: f64 = 0.05;

pub fn decompose(image: &Image, mode: &DecomposeMode) -> Result<ShadingDecomposition, HarmonizeError> {
    if image.channels() != 3 {
        return Err(HarmonizeError::Shape("image must be RGB"));
    }
    match mode {
        DecomposeMode::GroundTruth(d) => {
            if (d.albedo.width(), d.albedo.height()) != (image.width(), image.height()) {
                return Err(HarmonizeError::Shape("ground-truth maps differ in size from the image"));
            }
            Ok(d.clone())
        }
        DecomposeMode::Retinex { epsilon } => {
            let (w, h) = (image.width(), image.height());
            let diag = libm::sqrt((w * w + h * h) as f64);
            let shading = gaussian_blur(&image.luminance(), RETINEX_SIGMA_FRACTION * diag);
            let mut albedo = Image::new(w, h, 3);
            let mut floored = 0usize;
            for i in 0..w * h {
                let s = shading.data()[i];
                let d = if s < *epsilon {
                    floored += 1;
                    *epsilon
                } else {
                    s
                };
                let src = image.pixel_at(i);
                for (a, v) in albedo.pixel_at_mut(i).iter_mut().zip(src) {
                    *a = (v / d).clamp(0.0, 1.0);
                }
            }
            if floored * 100 > w * h {
                log::warn!("retinex: shading floored to {epsilon:e} on {floored} of {} pixels", w * h);
            }
            Ok(ShadingDecomposition { albedo, shading })
        }
    }
}

/// Separable Gaussian blur, clamp-to-edge, truncated at 3σ.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if !(sigma > 0.0) {
        return img.clone();
    }
    let radius = libm::ceil(3.0 * sigma) as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| libm::exp(-((k * k) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let (w, h, c) = img.dims();
    let mut tmp = vec![0.0; w * h * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let xs = (x as isize + k as isize - radius).clamp(0, w as isize - 1) as usize;
                    acc += kv * img.get(xs, y, ch);
                }
                tmp[(y * w + x) * c + ch] = acc;
            }
        }
    }
    let mut out = Image::new(w, h, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let ys = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
                    acc += kv * tmp[(ys * w + x) * c + ch];
                }
                out.set(x, y, ch, acc);
            }
        }
    }
    out
}
