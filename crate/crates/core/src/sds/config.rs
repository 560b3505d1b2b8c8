use core::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;

use super::SdsError;
use crate::diffusion::{LatentCodec, NoiseSchedule};
use crate::render::{Camera, RenderOptions, ResolutionSchedule};

/// Reconstruction weight of the default preset.
pub const RECON_WEIGHT_DEFAULT: f64 = 1.0;
/// Reconstruction weight of the light preset.
pub const RECON_WEIGHT_LIGHT: f64 = 0.01;

/// Time-dependent weighting `w(t)` of the score-distillation term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WeightFn {
    Uniform,
    /// `σ_t²`
    #[default]
    SigmaSquared,
    /// `σ_t·α_t`
    SigmaAlpha,
}

impl WeightFn {
    pub fn eval(self, schedule: &NoiseSchedule, t: usize) -> f64 {
        match self {
            WeightFn::Uniform => 1.0,
            WeightFn::SigmaSquared => {
                let s = schedule.sigma(t);
                s * s
            }
            WeightFn::SigmaAlpha => schedule.sigma(t) * schedule.alpha(t),
        }
    }
}

/// Reconstruction-weight presets for `λ_n` and `λ_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ReconPreset {
    /// `λ_n = λ_r = 1`
    #[default]
    Default,
    /// `λ_n = λ_r = 0.01`
    Light,
}

impl ReconPreset {
    pub fn weight(self) -> f64 {
        match self {
            ReconPreset::Default => RECON_WEIGHT_DEFAULT,
            ReconPreset::Light => RECON_WEIGHT_LIGHT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LearningRates {
    pub beta: f64,
    pub psi: f64,
    pub displacement: f64,
    pub texture: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            beta: 1e-2,
            psi: 1e-2,
            displacement: 1e-3,
            texture: 5e-2,
        }
    }
}

/// Whole-body or close-up head view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Framing {
    Body,
    Head,
}

/// Orbit of one framing: cameras look at `target` from `distance`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Orbit {
    pub target: [f64; 3],
    pub distance: f64,
    pub fov_deg: f64,
}

/// Distribution of training cameras: uniform azimuth, elevation drawn from
/// a band, head close-ups with probability `head_probability`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ViewSampling {
    pub body: Orbit,
    pub head: Orbit,
    pub head_probability: f64,
    pub azimuth_deg: [f64; 2],
    pub elevation_deg: [f64; 2],
}

impl Default for ViewSampling {
    fn default() -> Self {
        Self {
            body: Orbit {
                target: [0.0, 0.9, 0.0],
                distance: 3.0,
                fov_deg: 40.0,
            },
            head: Orbit {
                target: [0.0, 1.6, 0.0],
                distance: 0.9,
                fov_deg: 40.0,
            },
            head_probability: 0.2,
            azimuth_deg: [0.0, 360.0],
            elevation_deg: [-10.0, 30.0],
        }
    }
}

impl ViewSampling {
    /// Camera for `framing` at the given angles (degrees) and square resolution.
    pub fn camera(&self, framing: Framing, azimuth_deg: f64, elevation_deg: f64, resolution: usize) -> Camera {
        let orbit = match framing {
            Framing::Body => self.body,
            Framing::Head => self.head,
        };
        let (az, el) = (azimuth_deg * PI / 180.0, elevation_deg * PI / 180.0);
        let target = Vector3::from(orbit.target);
        let dir = Vector3::new(libm::cos(el) * libm::sin(az), libm::sin(el), libm::cos(el) * libm::cos(az));
        Camera::look_at(
            target + dir * orbit.distance,
            target,
            Vector3::y(),
            orbit.fov_deg * PI / 180.0,
            resolution,
            resolution,
        )
        .expect("orbit cameras are valid for |elevation| < 90°")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SampledView {
        let framing = if rng.random::<f64>() < self.head_probability {
            Framing::Head
        } else {
            Framing::Body
        };
        let azimuth_deg = lerp(self.azimuth_deg, rng.random::<f64>());
        let elevation_deg = lerp(self.elevation_deg, rng.random::<f64>());
        SampledView {
            framing,
            azimuth_deg,
            elevation_deg,
        }
    }

    fn validate(&self) -> Result<(), SdsError> {
        let ok = [self.body, self.head]
            .iter()
            .all(|o| o.distance > 0.0 && o.fov_deg > 0.0 && o.fov_deg < 180.0)
            && (0.0..=1.0).contains(&self.head_probability)
            && self.elevation_deg.iter().all(|e| e.abs() < 90.0);
        if ok {
            Ok(())
        } else {
            Err(SdsError::Config("camera sampling"))
        }
    }
}

fn lerp(range: [f64; 2], s: f64) -> f64 {
    range[0] + (range[1] - range[0]) * s
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SampledView {
    pub framing: Framing,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

/// Joint geometry and texture optimization settings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct OptimizerConfig {
    /// Normal-map reconstruction weight `λ_n`.
    pub lambda_n: f64,
    /// RGB reconstruction weight `λ_r`.
    pub lambda_r: f64,
    pub lambda_geo: f64,
    pub lambda_tex: f64,
    /// Geometry receives updates on iterations `0..geo_freeze_iter`.
    pub geo_freeze_iter: usize,
    /// Total iterations; texture is updated on every one.
    pub tex_iters: usize,
    pub learning_rates: LearningRates,
    pub weight_fn: WeightFn,
    pub views: ViewSampling,
    /// Square resolution of the normal-map render.
    pub normal_resolution: usize,
    /// Coarse-to-fine square resolution of the RGB render.
    pub rgb_schedule: ResolutionSchedule,
    pub codec: LatentCodec,
    /// Timesteps are drawn uniformly from `[t_range[0]·T, t_range[1]·T]`.
    pub t_range: [f64; 2],
    /// Steps whose parameter-gradient norm exceeds this are skipped.
    pub grad_ceiling: f64,
    pub render: RenderOptions,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lambda_n: RECON_WEIGHT_DEFAULT,
            lambda_r: RECON_WEIGHT_DEFAULT,
            lambda_geo: 1.0,
            lambda_tex: 1.0,
            geo_freeze_iter: 50,
            tex_iters: 150,
            learning_rates: LearningRates::default(),
            weight_fn: WeightFn::default(),
            views: ViewSampling::default(),
            normal_resolution: 512,
            rgb_schedule: ResolutionSchedule::default(),
            codec: LatentCodec::default(),
            t_range: [0.02, 0.98],
            grad_ceiling: 1e8,
            render: RenderOptions::default(),
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn with_preset(preset: ReconPreset) -> Self {
        Self {
            lambda_n: preset.weight(),
            lambda_r: preset.weight(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SdsError> {
        let weights = [self.lambda_n, self.lambda_r, self.lambda_geo, self.lambda_tex];
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(SdsError::Config("weights must be finite and non-negative"));
        }
        if self.geo_freeze_iter > self.tex_iters {
            return Err(SdsError::Config("geo_freeze_iter must not exceed tex_iters"));
        }
        let lr = self.learning_rates;
        if [lr.beta, lr.psi, lr.displacement, lr.texture].iter().any(|r| !(*r >= 0.0)) {
            return Err(SdsError::Config("learning rates must be non-negative"));
        }
        if self.codec.factor == 0 {
            return Err(SdsError::Config("latent factor must be positive"));
        }
        let f = self.codec.factor;
        if self.normal_resolution == 0 || self.normal_resolution % f != 0 {
            return Err(SdsError::Config("normal resolution must be a positive multiple of the latent factor"));
        }
        if self.rgb_schedule.rungs().iter().any(|r| r.1 == 0 || r.1 % f != 0) {
            return Err(SdsError::Config("RGB resolutions must be positive multiples of the latent factor"));
        }
        let [lo, hi] = self.t_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(SdsError::Config("t_range must satisfy 0 <= lo <= hi <= 1"));
        }
        if !(self.grad_ceiling > 0.0) {
            return Err(SdsError::Config("grad_ceiling must be positive"));
        }
        self.views.validate()
    }
}
