use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Branch, Guidance, OptimizerConfig, SdsError, ViewContext, WeightFn};
use crate::body::{BodyParams, CanonicalRig, ParamGrads};
use crate::diffusion::{add_noise, x0_from_eps, Conditioning, LatentGrid, NoiseSchedule};
use crate::image::Image;
use crate::render::{grad_geometry, grad_texture, render, Camera};

/// Frozen timestep and noise draw of one branch evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepNoise {
    pub t: usize,
    pub seed: u64,
}

impl StepNoise {
    /// Standard-normal `ε` of the given latent shape, a pure function of the seed.
    pub fn eps(&self, shape: [usize; 3]) -> LatentGrid {
        LatentGrid::gaussian(shape, &mut ChaCha8Rng::seed_from_u64(self.seed))
    }
}

/// `∂L/∂z = w(t)·(α_t/σ_t)·(z − z_0)` with `z_0` held constant.
pub fn latent_residual_grad(
    schedule: &NoiseSchedule,
    z: &LatentGrid,
    z0: &LatentGrid,
    t: usize,
    weight: WeightFn,
) -> Result<LatentGrid, SdsError> {
    schedule.check(t)?;
    z0.expect_shape(z.shape())?;
    let sigma = schedule.sigma(t);
    if !(sigma > 0.0) {
        return Err(SdsError::ZeroSigma(t));
    }
    let k = weight.eval(schedule, t) * schedule.alpha(t) / sigma;
    Ok(z.axpby(k, z0, -k))
}

/// Magnitudes of one branch's two objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BranchStats {
    /// Norm of the score-distillation term's image-space gradient.
    pub sds_grad_norm: f64,
    /// Norm of the reconstruction term's image-space gradient.
    pub recon_grad_norm: f64,
    /// `½·w(t)·(α_t/σ_t)·‖z − z_0‖²`, whose gradient is the latent residual.
    pub sds_loss: f64,
    /// `λ·‖I − Î‖²`
    pub recon_loss: f64,
}

/// Image-space gradient of one branch objective.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchGrad {
    pub image_grad: Image,
    /// One-step denoised image `Î`.
    pub denoised: Image,
    pub stats: BranchStats,
}

/// Gradient of `SDS(encode(I)) + λ‖I − Î‖²` with respect to the rendered image.
#[allow(clippy::too_many_arguments)]
pub fn branch_image_grad<G: Guidance + ?Sized>(
    image: &Image,
    guide: &G,
    cond: &Conditioning,
    view: &ViewContext<'_>,
    noise: StepNoise,
    schedule: &NoiseSchedule,
    weight: WeightFn,
    lambda_recon: f64,
) -> Result<BranchGrad, SdsError> {
    let codec = view.codec;
    let z = codec.encode(image)?;
    let eps = noise.eps(z.shape());
    let z_t = add_noise(schedule, &z, noise.t, &eps)?;
    let eps_hat = guide.predict_view(&z_t, noise.t, cond, view)?;
    let z0 = x0_from_eps(schedule, &z_t, noise.t, &eps_hat)?;
    if !z0.is_finite() {
        return Err(SdsError::NonFinite("denoised latent"));
    }
    let g_z = latent_residual_grad(schedule, &z, &z0, noise.t, weight)?;
    let denoised = codec.decode(&z0);

    let (w, h) = (image.width(), image.height());
    let mut image_grad = codec.encode_adjoint(&g_z, w, h);
    let sds_grad_norm = l2(image_grad.data());
    let mut recon_sq = 0.0;
    let mut recon_loss = 0.0;
    for ((g, &i), &d) in image_grad.data_mut().iter_mut().zip(image.data()).zip(denoised.data()) {
        let r = i - d;
        let gr = 2.0 * lambda_recon * r;
        recon_sq += gr * gr;
        recon_loss += lambda_recon * r * r;
        *g += gr;
    }
    let residual_sq: f64 = z.data().iter().zip(z0.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    let k = weight.eval(schedule, noise.t) * schedule.alpha(noise.t) / schedule.sigma(noise.t);
    Ok(BranchGrad {
        image_grad,
        denoised,
        stats: BranchStats {
            sds_grad_norm,
            recon_grad_norm: libm::sqrt(recon_sq),
            sds_loss: 0.5 * k * residual_sq,
            recon_loss,
        },
    })
}

fn l2(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Geometry gradient of the normal-space objective at one view.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoStep {
    pub grads: ParamGrads,
    pub stats: BranchStats,
}

/// Texture gradient of the image-space objective at one view.
#[derive(Debug, Clone, PartialEq)]
pub struct TexStep {
    pub grad: Image,
    pub stats: BranchStats,
}

/// Renders the normal map at `camera`, scores it with `guide` and chains the
/// image gradient through the rasterizer and the body model to `(β, ψ, D)`.
#[allow(clippy::too_many_arguments)]
pub fn geo_step<G: Guidance + ?Sized>(
    rig: &CanonicalRig,
    params: &BodyParams,
    camera: &Camera,
    guide: &G,
    cond: &Conditioning,
    noise: StepNoise,
    cfg: &OptimizerConfig,
    schedule: &NoiseSchedule,
) -> Result<GeoStep, SdsError> {
    let mesh = rig.build(params)?;
    let fb = render(&mesh, &params.texture, camera, &cfg.render)?;
    let view = ViewContext {
        camera,
        branch: Branch::Normal,
        codec: cfg.codec,
    };
    let bg = branch_image_grad(&fb.normal_image(), guide, cond, &view, noise, schedule, cfg.weight_fn, cfg.lambda_n)?;
    let vertex_grad = grad_geometry(&fb, &mesh, &bg.image_grad, &Image::new(fb.width, fb.height, 3));
    Ok(GeoStep {
        grads: rig.pullback(&vertex_grad),
        stats: bg.stats,
    })
}

/// Renders RGB at `camera`, scores it with `guide` and chains the image
/// gradient to the texture; geometry is held fixed.
#[allow(clippy::too_many_arguments)]
pub fn tex_step<G: Guidance + ?Sized>(
    rig: &CanonicalRig,
    params: &BodyParams,
    camera: &Camera,
    guide: &G,
    cond: &Conditioning,
    noise: StepNoise,
    cfg: &OptimizerConfig,
    schedule: &NoiseSchedule,
) -> Result<TexStep, SdsError> {
    let mesh = rig.build(params)?;
    let fb = render(&mesh, &params.texture, camera, &cfg.render)?;
    let view = ViewContext {
        camera,
        branch: Branch::Rgb,
        codec: cfg.codec,
    };
    let bg = branch_image_grad(&fb.rgb, guide, cond, &view, noise, schedule, cfg.weight_fn, cfg.lambda_r)?;
    let tex = &params.texture;
    Ok(TexStep {
        grad: grad_texture(&fb, &mesh, &bg.image_grad, (tex.width(), tex.height())),
        stats: bg.stats,
    })
}
