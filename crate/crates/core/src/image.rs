//! Dense float images and boolean masks.
//!
//! Images are stored row-major with interleaved channels (`HWC`), values in
//! linear `[0, 1]` unless a caller says otherwise.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major, channel-interleaved float image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Image of `width * height` pixels all equal to `color`.
    pub fn from_color(width: usize, height: usize, color: &[f64]) -> Self {
        let mut data = Vec::with_capacity(width * height * color.len());
        for _ in 0..width * height {
            data.extend_from_slice(color);
        }
        Self {
            width,
            height,
            channels: color.len(),
            data,
        }
    }

    /// Wraps an existing buffer. Returns `None` when the length does not match.
    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == width * height * channels).then_some(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
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
    fn offset(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.offset(x, y) + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let o = self.offset(x, y);
        self.data[o + c] = value;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let o = self.offset(x, y);
        let c = self.channels;
        &mut self.data[o..o + c]
    }

    /// Pixel by flat index `y * width + x`.
    #[inline]
    pub fn pixel_at(&self, index: usize) -> &[f64] {
        let o = index * self.channels;
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn pixel_at_mut(&mut self, index: usize) -> &mut [f64] {
        let c = self.channels;
        let o = index * c;
        &mut self.data[o..o + c]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.dims() == other.dims()
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Continuous texel coordinates for a normalized `(u, v)`: texel centers
    /// sit at `((i + 0.5) / width, (j + 0.5) / height)`, `v = 0` is the top row.
    #[inline]
    pub fn texel_coords(&self, u: f64, v: f64) -> (f64, f64) {
        (u * self.width as f64 - 0.5, v * self.height as f64 - 0.5)
    }

    /// Bilinear tap locations and weights for continuous texel coordinates,
    /// clamped to edge. Weights sum to one.
    pub fn bilinear_taps(&self, x: f64, y: f64) -> [(usize, f64); 4] {
        bilinear_taps(self.width, self.height, x, y)
    }

    /// Bilinear sample at continuous texel coordinates (clamp to edge).
    pub fn sample_texel(&self, x: f64, y: f64, out: &mut [f64]) {
        let taps = self.bilinear_taps(x, y);
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            *o = taps
                .iter()
                .map(|&(idx, w)| w * self.data[idx * self.channels + c])
                .sum();
        }
    }

    /// Bilinear sample at normalized `(u, v)` (clamp to edge).
    pub fn sample_uv(&self, u: f64, v: f64, out: &mut [f64]) {
        let (x, y) = self.texel_coords(u, v);
        self.sample_texel(x, y, out);
    }

    pub fn mse(&self, other: &Image) -> f64 {
        assert!(self.same_shape(other), "mse: image shapes differ");
        if self.data.is_empty() {
            return 0.0;
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        sum / self.data.len() as f64
    }

    /// MSE restricted to pixels where `mask` is set.
    pub fn masked_mse(&self, other: &Image, mask: &Mask) -> f64 {
        assert!(self.same_shape(other), "masked_mse: image shapes differ");
        let mut sum = 0.0;
        let mut count = 0usize;
        for (i, &m) in mask.data().iter().enumerate() {
            if m {
                for (a, b) in self.pixel_at(i).iter().zip(other.pixel_at(i)) {
                    sum += (a - b) * (a - b);
                }
                count += self.channels;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Channel-wise linear luminance (Rec. 709 weights) of a 3-channel image.
    pub fn luminance(&self) -> Image {
        assert_eq!(self.channels, 3, "luminance needs an RGB image");
        let mut out = Image::new(self.width, self.height, 1);
        for i in 0..self.pixel_count() {
            out.data[i] = luminance(self.pixel_at(i));
        }
        out
    }
}

#[inline]
pub fn luminance(rgb: &[f64]) -> f64 {
    0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2]
}

/// Flat pixel indices and weights of a clamp-to-edge bilinear lookup.
pub fn bilinear_taps(width: usize, height: usize, x: f64, y: f64) -> [(usize, f64); 4] {
    let max_x = (width - 1) as f64;
    let max_y = (height - 1) as f64;
    let x = x.clamp(0.0, max_x);
    let y = y.clamp(0.0, max_y);
    let x0 = libm::floor(x);
    let y0 = libm::floor(y);
    let fx = x - x0;
    let fy = y - y0;
    let x0 = x0 as usize;
    let y0 = y0 as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    [
        (y0 * width + x0, (1.0 - fx) * (1.0 - fy)),
        (y0 * width + x1, fx * (1.0 - fy)),
        (y1 * width + x0, (1.0 - fx) * fy),
        (y1 * width + x1, fx * fy),
    ]
}

/// Per-pixel boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    #[inline]
    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    pub fn inverted(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|m| !m).collect(),
        }
    }
}

/// Peak signal-to-noise ratio for unit-range signals, capped at
/// [`PSNR_CAP_DB`] when the inputs are identical.
pub fn psnr(a: &Image, b: &Image) -> f64 {
    psnr_from_mse(a.mse(b))
}

pub const PSNR_CAP_DB: f64 = 99.0;

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (-10.0 * libm::log10(mse)).min(PSNR_CAP_DB)
}
