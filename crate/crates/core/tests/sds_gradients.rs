//! Analytic branch gradients against frozen-(coverage, t, ε) central differences.

use deco_core::body::toy::{toy_biped, ToyBipedConfig};
use deco_core::body::{BodyParams, CanonicalRig};
use deco_core::diffusion::{
    add_noise, x0_from_eps, Conditioning, LatentCodec, LatentGrid, NoisePredictor, NoiseSchedule, PredictorError,
};
use deco_core::image::Image;
use deco_core::render::{render, sample_texture, shade_normals, Camera, FrameBuffer, RenderOptions};
use deco_core::sds::{geo_step, tex_step, Framing, OptimizerConfig, StepNoise, ViewSampling, WeightFn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic pseudo-random noise prediction, independent of its input.
struct FixedNoise(u64);

impl NoisePredictor for FixedNoise {
    fn predict(&self, z_t: &LatentGrid, _t: usize, _c: &Conditioning) -> Result<LatentGrid, PredictorError> {
        Ok(LatentGrid::gaussian(z_t.shape(), &mut ChaCha8Rng::seed_from_u64(self.0)))
    }
}

struct Scene {
    rig: CanonicalRig,
    params: BodyParams,
    camera: Camera,
    cfg: OptimizerConfig,
    schedule: NoiseSchedule,
    noise: StepNoise,
}

fn scene() -> Scene {
    let rig = CanonicalRig::new(toy_biped(&ToyBipedConfig::default()).unwrap(), 0).unwrap();
    assert!(rig.vertex_count() <= 2000);
    let mut params = rig.zero_params((32, 32));
    params.beta.iter_mut().enumerate().for_each(|(i, b)| *b = 0.1 * (i as f64 - 2.5));
    params.psi.iter_mut().enumerate().for_each(|(i, p)| *p = 0.05 * i as f64);
    params.texture = Image::from_fn(32, 32, 3, |x, y, c| 0.2 + 0.6 * (((x * 7 + y * 3 + c * 5) % 11) as f64 / 10.0));
    let cfg = OptimizerConfig {
        codec: LatentCodec::new(4),
        normal_resolution: 64,
        weight_fn: WeightFn::SigmaSquared,
        lambda_n: 0.7,
        lambda_r: 0.3,
        ..OptimizerConfig::default()
    };
    let camera = ViewSampling::default().camera(Framing::Body, 35.0, 12.0, 64);
    Scene {
        rig,
        params,
        camera,
        cfg,
        schedule: NoiseSchedule::default(),
        noise: StepNoise { t: 420, seed: 9 },
    }
}

/// `½k‖encode(I) − z_0‖² + λ‖I − Î‖²` with `z_0`, `Î` taken from the base image.
struct FrozenObjective {
    z0: LatentGrid,
    denoised: Image,
    k: f64,
    lambda: f64,
    codec: LatentCodec,
}

impl FrozenObjective {
    fn new(base: &Image, s: &Scene, guide: &dyn NoisePredictor, lambda: f64) -> Self {
        let codec = s.cfg.codec;
        let z = codec.encode(base).unwrap();
        let z_t = add_noise(&s.schedule, &z, s.noise.t, &s.noise.eps(z.shape())).unwrap();
        let eps_hat = guide.predict(&z_t, s.noise.t, &Conditioning::new("")).unwrap();
        let z0 = x0_from_eps(&s.schedule, &z_t, s.noise.t, &eps_hat).unwrap();
        let t = s.noise.t;
        let k = s.cfg.weight_fn.eval(&s.schedule, t) * s.schedule.alpha(t) / s.schedule.sigma(t);
        Self {
            denoised: codec.decode(&z0),
            z0,
            k,
            lambda,
            codec,
        }
    }

    fn eval(&self, img: &Image) -> f64 {
        let z = self.codec.encode(img).unwrap();
        let sds: f64 = z.data().iter().zip(self.z0.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let rec: f64 = img.data().iter().zip(self.denoised.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        0.5 * self.k * sds + self.lambda * rec
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn frozen_normals(s: &Scene, fb: &FrameBuffer, p: &BodyParams) -> Image {
    shade_normals(fb, &s.rig.build(p).unwrap())
}

#[test]
fn geometry_gradient_matches_central_differences() {
    let s = scene();
    let guide = FixedNoise(3);
    let mesh = s.rig.build(&s.params).unwrap();
    let fb = render(&mesh, &s.params.texture, &s.camera, &RenderOptions::default()).unwrap();
    assert!(fb.covered_pixels() > 200);
    let obj = FrozenObjective::new(&fb.normal_image(), &s, &guide, s.cfg.lambda_n);
    let step = geo_step(&s.rig, &s.params, &s.camera, &guide, &Conditioning::new(""), s.noise, &s.cfg, &s.schedule)
        .unwrap();
    let h = 1e-5;
    let fd = |perturb: &dyn Fn(&mut BodyParams, f64)| {
        let mut p = s.params.clone();
        perturb(&mut p, h);
        let up = obj.eval(&frozen_normals(&s, &fb, &p));
        let mut p = s.params.clone();
        perturb(&mut p, -h);
        let down = obj.eval(&frozen_normals(&s, &fb, &p));
        (up - down) / (2.0 * h)
    };
    for k in 0..s.params.beta.len() {
        let num = fd(&|p, d| p.beta[k] += d);
        let e = rel_err(step.grads.beta[k], num);
        assert!(e < 1e-3, "beta[{k}]: analytic {} vs numeric {num} (rel {e:e})", step.grads.beta[k]);
    }
    for k in 0..s.params.psi.len() {
        let num = fd(&|p, d| p.psi[k] += d);
        let e = rel_err(step.grads.psi[k], num);
        assert!(e < 1e-3, "psi[{k}]: analytic {} vs numeric {num} (rel {e:e})", step.grads.psi[k]);
    }
    let mut ranked: Vec<usize> = (0..s.params.displacement.len()).collect();
    ranked.sort_by(|&a, &b| step.grads.displacement[b].norm().total_cmp(&step.grads.displacement[a].norm()));
    for &v in ranked.iter().take(12) {
        for axis in 0..3 {
            let num = fd(&|p, d| p.displacement[v][axis] += d);
            let ana = step.grads.displacement[v][axis];
            let e = rel_err(ana, num);
            assert!(e < 1e-3, "D[{v}][{axis}]: analytic {ana} vs numeric {num} (rel {e:e})");
        }
    }
}

#[test]
fn texture_gradient_matches_central_differences() {
    let s = scene();
    let guide = FixedNoise(5);
    let mesh = s.rig.build(&s.params).unwrap();
    let fb = render(&mesh, &s.params.texture, &s.camera, &RenderOptions::default()).unwrap();
    let obj = FrozenObjective::new(&fb.rgb, &s, &guide, s.cfg.lambda_r);
    let step = tex_step(&s.rig, &s.params, &s.camera, &guide, &Conditioning::new(""), s.noise, &s.cfg, &s.schedule)
        .unwrap();
    let mut ranked: Vec<usize> = (0..step.grad.data().len()).collect();
    ranked.sort_by(|&a, &b| step.grad.data()[b].abs().total_cmp(&step.grad.data()[a].abs()));
    let h = 1e-5;
    for &i in ranked.iter().take(16) {
        let eval = |d: f64| {
            let mut tex = s.params.texture.clone();
            tex.data_mut()[i] += d;
            obj.eval(&sample_texture(&fb, &mesh, &tex, RenderOptions::default().background))
        };
        let num = (eval(h) - eval(-h)) / (2.0 * h);
        let ana = step.grad.data()[i];
        assert!(ana != 0.0);
        let e = rel_err(ana, num);
        assert!(e < 1e-3, "texel {i}: analytic {ana} vs numeric {num} (rel {e:e})");
    }
}
