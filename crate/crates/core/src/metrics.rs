//! Image-quality and temporal-consistency measures.

use alloc::string::String;
use alloc::vec::Vec;

pub use crate::atlas::Flow;
pub use crate::image::{psnr, psnr_from_mse, PSNR_CAP_DB};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("frame {index}: {what} differs in size")]
    Shape { index: usize, what: &'static str },
    #[error("expected {expected} flow fields, got {actual}")]
    FlowCount { expected: usize, actual: usize },
}

/// Frame `prev` resampled onto the next frame's pixel grid through backward
/// `flow`. Pixels whose source lies outside `prev` are `None`.
pub fn warp(prev: &Image, flow: &Flow) -> Vec<Option<[f64; 3]>> {
    let (w, h) = (prev.width(), prev.height());
    let mut out = Vec::with_capacity(w * h);
    let mut rgb = [0.0; 3];
    for y in 0..h {
        for x in 0..w {
            let d = flow.get(x, y);
            let (sx, sy) = (x as f64 + d[0], y as f64 + d[1]);
            if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f64 || sy > (h - 1) as f64 {
                out.push(None);
                continue;
            }
            prev.sample_texel(sx, sy, &mut rgb);
            out.push(Some(rgb));
        }
    }
    out
}

/// Mean over consecutive pairs of the MSE between frame `t + 1` and frame
/// `t` warped by `flows[t]`, over in-bounds pixels.
pub fn warp_error(frames: &[Image], flows: &[Flow]) -> Result<f64, MetricsError> {
    if frames.len() < 2 {
        return Ok(0.0);
    }
    if flows.len() + 1 != frames.len() {
        return Err(MetricsError::FlowCount {
            expected: frames.len() - 1,
            actual: flows.len(),
        });
    }
    let mut total = 0.0;
    for (t, flow) in flows.iter().enumerate() {
        let (prev, next) = (&frames[t], &frames[t + 1]);
        if !prev.same_shape(next) {
            return Err(MetricsError::Shape { index: t + 1, what: "frame" });
        }
        if (flow.width(), flow.height()) != (next.width(), next.height()) {
            return Err(MetricsError::Shape { index: t + 1, what: "flow" });
        }
        let (mut acc, mut n) = (0.0, 0usize);
        for (i, src) in warp(prev, flow).into_iter().enumerate() {
            if let Some(src) = src {
                for (a, b) in src.iter().zip(next.pixel_at(i)) {
                    acc += (a - b) * (a - b);
                }
                n += 3;
            }
        }
        total += if n > 0 { acc / n as f64 } else { 0.0 };
    }
    Ok(total / flows.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    /// PSNR in dB per frame against its reference, capped at [`PSNR_CAP_DB`].
    pub frame_psnr: Vec<f64>,
    pub mean_psnr: Option<f64>,
    pub warp_error: Option<f64>,
    /// Wall-clock seconds per named stage.
    pub stage_seconds: Vec<(String, f64)>,
}

impl MetricsReport {
    pub fn is_finite(&self) -> bool {
        self.frame_psnr.iter().all(|p| p.is_finite())
            && self.mean_psnr.is_none_or(|p| p.is_finite())
            && self.warp_error.is_none_or(|w| w.is_finite())
            && self.stage_seconds.iter().all(|s| s.1.is_finite())
    }
}

/// PSNR against `references` (when given) and warp error (when `flows` given).
pub fn metrics(
    outputs: &[Image],
    references: Option<&[Image]>,
    flows: Option<&[Flow]>,
) -> Result<MetricsReport, MetricsError> {
    let mut report = MetricsReport::default();
    if let Some(refs) = references {
        for (i, (o, r)) in outputs.iter().zip(refs).enumerate() {
            if !o.same_shape(r) {
                return Err(MetricsError::Shape { index: i, what: "reference" });
            }
            report.frame_psnr.push(psnr(o, r));
        }
        if !report.frame_psnr.is_empty() {
            report.mean_psnr = Some(report.frame_psnr.iter().sum::<f64>() / report.frame_psnr.len() as f64);
        }
    }
    if let Some(flows) = flows {
        report.warp_error = Some(warp_error(outputs, flows)?);
    }
    Ok(report)
}
