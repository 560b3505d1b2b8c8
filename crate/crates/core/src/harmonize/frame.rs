use alloc::vec::Vec;
use nalgebra::Vector3;

use super::{
    compose, decompose, estimate_light_with, fit_params, shade_foreground, temporal_ema, AlbedoStats,
    DecomposeMode, HarmonizeError, HarmonizeParams, LightFitOptions, LightModel, RefineError, RefineInputs,
    ShadingRefiner,
};
use crate::image::{Image, Mask};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct HarmonizeConfig {
    /// Fit albedo parameters to the background; identity when off.
    pub adjust_albedo: bool,
    /// Explicit albedo parameters, overriding the fit.
    pub albedo_params: Option<HarmonizeParams>,
    pub ema_lambda: f64,
    /// Light used when no background normals are available.
    pub fallback_light: LightModel,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub light_fit: LightFitOptions,
}

impl Default for HarmonizeConfig {
    fn default() -> Self {
        Self {
            adjust_albedo: true,
            albedo_params: None,
            ema_lambda: 0.5,
            fallback_light: LightModel {
                direction: Vector3::z(),
                intensity: 0.8,
                ambient: 0.2,
            },
            light_fit: LightFitOptions::default(),
        }
    }
}

impl HarmonizeConfig {
    pub fn validate(&self) -> Result<(), HarmonizeError> {
        if !(0.0..=1.0).contains(&self.ema_lambda) {
            return Err(HarmonizeError::EmaWeight(self.ema_lambda));
        }
        LightModel::new(
            self.fallback_light.direction,
            self.fallback_light.intensity,
            self.fallback_light.ambient,
        )?;
        if self.albedo_params.is_some_and(|p| !p.is_valid()) {
            return Err(HarmonizeError::Shape("albedo gains must be positive"));
        }
        Ok(())
    }
}

/// One frame's layers. Normals are unit vectors, zero where undefined.
#[derive(Debug, Clone, Copy)]
pub struct LayerInputs<'a> {
    /// Rendered foreground RGB over the full frame.
    pub foreground: &'a Image,
    pub fg_mode: &'a DecomposeMode,
    pub fg_mask: &'a Mask,
    pub fg_normals: &'a [Vector3<f64>],
    pub fg_depth: &'a [f64],
    pub background: &'a Image,
    pub bg_mode: &'a DecomposeMode,
    pub bg_normals: Option<&'a [Vector3<f64>]>,
}

impl LayerInputs<'_> {
    fn validate(&self) -> Result<(usize, usize), HarmonizeError> {
        let (w, h) = (self.background.width(), self.background.height());
        let n = w * h;
        if (self.foreground.width(), self.foreground.height()) != (w, h)
            || (self.fg_mask.width(), self.fg_mask.height()) != (w, h)
            || self.fg_normals.len() != n
            || self.fg_depth.len() != n
            || self.bg_normals.is_some_and(|b| b.len() != n)
        {
            return Err(HarmonizeError::Shape("layer inputs must share one resolution"));
        }
        Ok((w, h))
    }
}

/// Per-frame light and albedo parameters before temporal smoothing.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FrameEstimate {
    pub light: LightModel,
    pub params: HarmonizeParams,
}

/// Fits the background light over pixels outside the foreground mask and,
/// when enabled, the albedo parameters.
pub fn estimate_frame(inputs: &LayerInputs<'_>, cfg: &HarmonizeConfig) -> Result<FrameEstimate, HarmonizeError> {
    inputs.validate()?;
    let bg = decompose(inputs.background, inputs.bg_mode)?;
    let light = match inputs.bg_normals {
        Some(normals) => {
            let select: Vec<bool> = inputs.fg_mask.data().iter().map(|m| !m).collect();
            estimate_light_with(normals, bg.shading.data(), Some(&select), &cfg.light_fit)?
        }
        None => cfg.fallback_light,
    };
    let params = match (cfg.albedo_params, cfg.adjust_albedo) {
        (Some(p), _) => p,
        (None, false) => HarmonizeParams::IDENTITY,
        (None, true) => {
            let fg = decompose(inputs.foreground, inputs.fg_mode)?;
            let bg_region = inputs.fg_mask.inverted();
            match (
                AlbedoStats::from_image(&fg.albedo, Some(inputs.fg_mask), true),
                AlbedoStats::from_image(&bg.albedo, Some(&bg_region), true),
            ) {
                (Some(f), Some(b)) => fit_params(&f, &b),
                _ => HarmonizeParams::IDENTITY,
            }
        }
    };
    Ok(FrameEstimate { light, params })
}

/// Relights and composites one frame under a (smoothed) estimate.
pub fn render_frame<R: ShadingRefiner + ?Sized>(
    inputs: &LayerInputs<'_>,
    estimate: &FrameEstimate,
    refiner: &R,
) -> Result<Image, RefineError> {
    let (w, h) = inputs.validate()?;
    let fg = decompose(inputs.foreground, inputs.fg_mode)?;
    let albedo = estimate.params.apply(&fg.albedo);
    let initial = shade_foreground(inputs.fg_normals, w, h, &estimate.light)?;
    let composite = compose(&albedo, &initial, inputs.background, inputs.fg_mask)?;
    let refined = refiner.refine(&RefineInputs {
        composite: &composite,
        shading: &initial,
        fg_mask: inputs.fg_mask,
        normals: inputs.fg_normals,
        depth: inputs.fg_depth,
    })?;
    if (refined.width(), refined.height(), refined.channels()) != (w, h, 1) {
        return Err(RefineError::Contract(alloc::format!(
            "refined shading is {}x{}x{}, expected {w}x{h}x1",
            refined.width(),
            refined.height(),
            refined.channels()
        )));
    }
    if refined.data().iter().any(|s| !(*s >= 0.0)) {
        return Err(HarmonizeError::NegativeShading.into());
    }
    Ok(compose(&albedo, &refined, inputs.background, inputs.fg_mask)?)
}

/// Estimates every frame, smooths light and albedo parameters with the
/// EMA, then relights and composites each frame.
pub fn harmonize_sequence<R: ShadingRefiner + ?Sized>(
    frames: &[LayerInputs<'_>],
    cfg: &HarmonizeConfig,
    refiner: &R,
) -> Result<(Vec<Image>, Vec<FrameEstimate>), RefineError> {
    cfg.validate()?;
    let raw = frames
        .iter()
        .map(|f| estimate_frame(f, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let lights = temporal_ema(&raw.iter().map(|e| e.light).collect::<Vec<_>>(), cfg.ema_lambda)?;
    let params = temporal_ema(&raw.iter().map(|e| e.params).collect::<Vec<_>>(), cfg.ema_lambda)?;
    let smoothed: Vec<FrameEstimate> = lights
        .into_iter()
        .zip(params)
        .map(|(light, params)| FrameEstimate { light, params })
        .collect();
    let images = frames
        .iter()
        .zip(&smoothed)
        .map(|(f, e)| render_frame(f, e, refiner))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((images, smoothed))
}
