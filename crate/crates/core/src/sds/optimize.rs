use alloc::vec::Vec;
use nalgebra::Vector3;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{geo_step, tex_step, Framing, Guidance, OptimizerConfig, SdsError, StepNoise};
use crate::body::{BodyParams, CanonicalRig};
use crate::diffusion::{Conditioning, NoiseSchedule};
use crate::optim::{Adam, AdamConfig};

/// Guides for the normal-space and image-space branches.
#[derive(Clone, Copy)]
pub struct Guides<'a> {
    pub normal: &'a dyn Guidance,
    pub rgb: &'a dyn Guidance,
}

impl<'a> Guides<'a> {
    pub fn shared(guide: &'a dyn Guidance) -> Self {
        Self {
            normal: guide,
            rgb: guide,
        }
    }
}

/// Conditioning of each branch; identical by default.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompts {
    pub normal: Conditioning,
    pub rgb: Conditioning,
}

impl Prompts {
    pub fn same(cond: Conditioning) -> Self {
        Self {
            normal: cond.clone(),
            rgb: cond,
        }
    }
}

/// Per-iteration telemetry of the optimization loop.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SDSGradReport {
    pub iteration: usize,
    pub t: usize,
    pub framing: Framing,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Normal-map resolution, 0 once geometry is frozen.
    pub normal_resolution: usize,
    pub rgb_resolution: usize,
    pub geo_sds_norm: f64,
    pub normal_recon_norm: f64,
    pub tex_sds_norm: f64,
    pub rgb_recon_norm: f64,
    pub geo_loss: f64,
    pub tex_loss: f64,
    /// Weighted parameter-gradient norms fed to the optimizer.
    pub geo_param_grad_norm: f64,
    pub tex_param_grad_norm: f64,
    pub geo_updated: bool,
    pub tex_updated: bool,
    /// Set when the gradient ceiling rejected an update this iteration.
    pub skipped: bool,
}

impl SDSGradReport {
    pub fn is_finite(&self) -> bool {
        [
            self.azimuth_deg,
            self.elevation_deg,
            self.geo_sds_norm,
            self.normal_recon_norm,
            self.tex_sds_norm,
            self.rgb_recon_norm,
            self.geo_loss,
            self.tex_loss,
            self.geo_param_grad_norm,
            self.tex_param_grad_norm,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub params: BodyParams,
    pub log: Vec<SDSGradReport>,
    pub geo_updates: usize,
    pub tex_updates: usize,
    pub skipped_steps: usize,
}

/// Joint geometry and texture optimization; see [`optimize_with`].
pub fn optimize(
    rig: &CanonicalRig,
    init: BodyParams,
    guides: Guides<'_>,
    prompts: &Prompts,
    cfg: &OptimizerConfig,
    schedule: &NoiseSchedule,
) -> Result<OptimizeOutcome, SdsError> {
    optimize_with(rig, init, guides, prompts, cfg, schedule, |_, _, _| {})
}

/// Runs `cfg.tex_iters` iterations. Each samples a view and a timestep,
/// updates geometry while `iteration < geo_freeze_iter` and texture always,
/// then clamps the texture to `[0, 1]`. `observer` sees the parameters after
/// every iteration. Deterministic for a fixed `cfg.seed`.
pub fn optimize_with<F>(
    rig: &CanonicalRig,
    init: BodyParams,
    guides: Guides<'_>,
    prompts: &Prompts,
    cfg: &OptimizerConfig,
    schedule: &NoiseSchedule,
    mut observer: F,
) -> Result<OptimizeOutcome, SdsError>
where
    F: FnMut(usize, &BodyParams, &SDSGradReport),
{
    cfg.validate()?;
    check_params(rig, &init)?;
    let mut params = init;
    let lr = cfg.learning_rates;
    let mut adam_beta = Adam::<f64>::new(AdamConfig::with_lr(lr.beta), params.beta.len());
    let mut adam_psi = Adam::<f64>::new(AdamConfig::with_lr(lr.psi), params.psi.len());
    let mut adam_disp = Adam::<f64>::new(AdamConfig::with_lr(lr.displacement), 3 * params.displacement.len());
    let mut adam_tex = Adam::<f64>::new(AdamConfig::with_lr(lr.texture), params.texture.data().len());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = Vec::with_capacity(cfg.tex_iters);
    let (mut geo_updates, mut tex_updates, mut skipped_steps) = (0, 0, 0);

    for it in 0..cfg.tex_iters {
        let view = cfg.views.sample(&mut rng);
        let t = schedule.sample_step(&mut rng, cfg.t_range[0], cfg.t_range[1]);
        let geo_noise = StepNoise { t, seed: rng.next_u64() };
        let tex_noise = StepNoise { t, seed: rng.next_u64() };
        let rgb_res = cfg.rgb_schedule.resolution_at(it);
        if it > 0 && rgb_res != cfg.rgb_schedule.resolution_at(it - 1) {
            // Texel gradients scale with pixel count; stale moments would overshoot.
            adam_tex = Adam::new(AdamConfig::with_lr(lr.texture), params.texture.data().len());
        }

        let mut report = SDSGradReport {
            iteration: it,
            t,
            framing: view.framing,
            azimuth_deg: view.azimuth_deg,
            elevation_deg: view.elevation_deg,
            normal_resolution: 0,
            rgb_resolution: rgb_res,
            geo_sds_norm: 0.0,
            normal_recon_norm: 0.0,
            tex_sds_norm: 0.0,
            rgb_recon_norm: 0.0,
            geo_loss: 0.0,
            tex_loss: 0.0,
            geo_param_grad_norm: 0.0,
            tex_param_grad_norm: 0.0,
            geo_updated: false,
            tex_updated: false,
            skipped: false,
        };

        // Both branches are evaluated at the pre-update parameters.
        let geo = if it < cfg.geo_freeze_iter {
            let cam = cfg.views.camera(view.framing, view.azimuth_deg, view.elevation_deg, cfg.normal_resolution);
            report.normal_resolution = cfg.normal_resolution;
            Some(geo_step(rig, &params, &cam, guides.normal, &prompts.normal, geo_noise, cfg, schedule)?)
        } else {
            None
        };
        let cam = cfg.views.camera(view.framing, view.azimuth_deg, view.elevation_deg, rgb_res);
        let tex = tex_step(rig, &params, &cam, guides.rgb, &prompts.rgb, tex_noise, cfg, schedule)?;

        if let Some(mut geo) = geo {
            geo.grads.scale(cfg.lambda_geo);
            let norm = geo.grads.norm();
            report.geo_sds_norm = geo.stats.sds_grad_norm;
            report.normal_recon_norm = geo.stats.recon_grad_norm;
            report.geo_loss = geo.stats.sds_loss + geo.stats.recon_loss;
            report.geo_param_grad_norm = norm;
            if norm.is_finite() && norm <= cfg.grad_ceiling {
                adam_beta.update(&mut params.beta, &geo.grads.beta);
                adam_psi.update(&mut params.psi, &geo.grads.psi);
                let mut flat = flatten(&params.displacement);
                adam_disp.update(&mut flat, &flatten(&geo.grads.displacement));
                unflatten(&flat, &mut params.displacement);
                report.geo_updated = true;
                geo_updates += 1;
            } else {
                report.skipped = true;
            }
        }

        let mut grad = tex.grad;
        grad.data_mut().iter_mut().for_each(|g| *g *= cfg.lambda_tex);
        let norm = libm::sqrt(grad.data().iter().map(|g| g * g).sum());
        report.tex_sds_norm = tex.stats.sds_grad_norm;
        report.rgb_recon_norm = tex.stats.recon_grad_norm;
        report.tex_loss = tex.stats.sds_loss + tex.stats.recon_loss;
        report.tex_param_grad_norm = norm;
        if norm.is_finite() && norm <= cfg.grad_ceiling {
            adam_tex.update(params.texture.data_mut(), grad.data());
            params.texture.clamp01();
            report.tex_updated = true;
            tex_updates += 1;
        } else {
            report.skipped = true;
        }

        if report.skipped {
            skipped_steps += 1;
            log::warn!(
                "iteration {it}: gradient norm above ceiling {:e}, update skipped (geo {:e}, tex {:e})",
                cfg.grad_ceiling,
                report.geo_param_grad_norm,
                report.tex_param_grad_norm
            );
        }
        observer(it, &params, &report);
        log.push(report);
    }

    Ok(OptimizeOutcome {
        params,
        log,
        geo_updates,
        tex_updates,
        skipped_steps,
    })
}

fn check_params(rig: &CanonicalRig, params: &BodyParams) -> Result<(), SdsError> {
    let tpl = rig.template();
    let checks = [
        ("beta", tpl.shape_dims(), params.beta.len()),
        ("psi", tpl.expr_dims(), params.psi.len()),
        ("displacement", rig.vertex_count(), params.displacement.len()),
        ("texture channels", 3, params.texture.channels()),
    ];
    for (what, expected, actual) in checks {
        if expected != actual {
            return Err(crate::body::BodyError::DimensionMismatch { what, expected, actual }.into());
        }
    }
    Ok(())
}

fn flatten(v: &[Vector3<f64>]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn unflatten(flat: &[f64], out: &mut [Vector3<f64>]) {
    for (p, c) in out.iter_mut().zip(flat.chunks_exact(3)) {
        *p = Vector3::new(c[0], c[1], c[2]);
    }
}
