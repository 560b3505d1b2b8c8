use alloc::vec::Vec;

use super::AtlasError;
use crate::image::{Image, Mask};

/// Dense per-pixel displacement. For frame `i`, pixel `p` shows the same
/// scene point as `p + flow(p)` in frame `i − 1`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Flow {
    width: usize,
    height: usize,
    data: Vec<[f64; 2]>,
}

impl Flow {
    pub fn uniform(width: usize, height: usize, d: [f64; 2]) -> Self {
        Self {
            width,
            height,
            data: alloc::vec![d; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<[f64; 2]>) -> Option<Self> {
        (data.len() == width * height).then_some(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[[f64; 2]] {
        &self.data
    }
}

/// Ordered frames with optional foreground masks (`true` = human) and
/// optional ground-truth backward flow (`flow[i − 1]` belongs to frame `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub frames: Vec<Image>,
    pub masks: Option<Vec<Mask>>,
    pub fps: f64,
    pub flow: Option<Vec<Flow>>,
}

impl VideoClip {
    pub fn new(frames: Vec<Image>, fps: f64) -> Result<Self, AtlasError> {
        let clip = Self {
            frames,
            masks: None,
            fps,
            flow: None,
        };
        clip.validate()?;
        Ok(clip)
    }

    pub fn with_masks(mut self, masks: Vec<Mask>) -> Result<Self, AtlasError> {
        self.masks = Some(masks);
        self.validate()?;
        Ok(self)
    }

    pub fn with_flow(mut self, flow: Vec<Flow>) -> Result<Self, AtlasError> {
        self.flow = Some(flow);
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(width, height)` shared by every frame.
    pub fn dims(&self) -> (usize, usize) {
        self.frames.first().map(|f| (f.width(), f.height())).unwrap_or((0, 0))
    }

    #[inline]
    pub fn is_background(&self, frame: usize, x: usize, y: usize) -> bool {
        self.masks.as_ref().is_none_or(|m| !m[frame].get(x, y))
    }

    pub fn validate(&self) -> Result<(), AtlasError> {
        let Some(first) = self.frames.first() else {
            return Err(AtlasError::EmptyClip);
        };
        let (w, h) = (first.width(), first.height());
        if w == 0 || h == 0 {
            return Err(AtlasError::EmptyClip);
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.width() != w || f.height() != h || f.channels() != 3 {
                return Err(AtlasError::FrameShape { frame: i });
            }
        }
        if let Some(masks) = &self.masks {
            if masks.len() != self.frames.len() {
                return Err(AtlasError::MaskCount {
                    expected: self.frames.len(),
                    actual: masks.len(),
                });
            }
            if let Some(i) = masks.iter().position(|m| m.width() != w || m.height() != h) {
                return Err(AtlasError::MaskShape { frame: i });
            }
        }
        if let Some(flow) = &self.flow {
            if flow.len() + 1 != self.frames.len() || flow.iter().any(|f| f.width() != w || f.height() != h) {
                return Err(AtlasError::FlowShape);
            }
        }
        if !(self.fps > 0.0) {
            return Err(AtlasError::InvalidFps(self.fps));
        }
        Ok(())
    }
}

/// Soft checkerboard with a slow color drift, translating by a constant
/// number of pixels per frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranslatingCheckerboard {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Square edge length in pixels.
    pub square: f64,
    /// Content motion in pixels per frame.
    pub velocity: [f64; 2],
    /// Edge steepness of the `tanh(k·sin)` profile.
    pub sharpness: f64,
}

impl Default for TranslatingCheckerboard {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            frames: 16,
            square: 8.0,
            velocity: [1.0, 0.0],
            sharpness: 2.0,
        }
    }
}

impl TranslatingCheckerboard {
    /// Color of the scene point at world coordinates `(wx, wy)`.
    pub fn color(&self, wx: f64, wy: f64, out: &mut [f64]) {
        let pi = core::f64::consts::PI;
        let k = self.sharpness;
        let s = libm::tanh(k * libm::sin(pi * wx / self.square)) * libm::tanh(k * libm::sin(pi * wy / self.square));
        let s = s / (libm::tanh(k) * libm::tanh(k));
        for (c, o) in out.iter_mut().enumerate().take(3) {
            let tint = 0.08 * libm::sin(2.0 * pi * wx / 97.0 + 2.1 * c as f64) + 0.06 * libm::cos(2.0 * pi * wy / 83.0 + c as f64);
            *o = 0.5 + 0.3 * s + tint;
        }
    }

    /// Pixel position in `frame` of the point seen at `p0` in frame 0.
    pub fn track(&self, p0: [f64; 2], frame: usize) -> [f64; 2] {
        [p0[0] + self.velocity[0] * frame as f64, p0[1] + self.velocity[1] * frame as f64]
    }

    pub fn clip(&self) -> VideoClip {
        let frames = (0..self.frames)
            .map(|i| {
                let mut img = Image::new(self.width, self.height, 3);
                let mut rgb = [0.0; 3];
                for y in 0..self.height {
                    for x in 0..self.width {
                        let wx = x as f64 + 0.5 - self.velocity[0] * i as f64;
                        let wy = y as f64 + 0.5 - self.velocity[1] * i as f64;
                        self.color(wx, wy, &mut rgb);
                        img.pixel_mut(x, y).copy_from_slice(&rgb);
                    }
                }
                img
            })
            .collect();
        let back = [-self.velocity[0], -self.velocity[1]];
        let flow = (1..self.frames).map(|_| Flow::uniform(self.width, self.height, back)).collect();
        VideoClip {
            frames,
            masks: None,
            fps: 24.0,
            flow: Some(flow),
        }
    }
}
