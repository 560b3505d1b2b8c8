use deco_core::body::toy::{toy_biped, ToyBipedConfig};
use deco_core::body::{BodyParams, CanonicalRig};
use deco_core::diffusion::{
    Conditioning, LatentCodec, LatentGrid, NoiseSchedule, OraclePredictor, ZeroPredictor,
};
use deco_core::image::Image;
use deco_core::render::{render, RenderOptions, ResolutionSchedule};
use deco_core::sds::{
    geo_step, latent_residual_grad, LearningRates, optimize, optimize_with, tex_step, Framing, Guides, OptimizerConfig, Prompts,
    RenderOracle, StepNoise, ViewSampling, WeightFn,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rig(levels: usize) -> CanonicalRig {
    CanonicalRig::new(toy_biped(&ToyBipedConfig::default()).unwrap(), levels).unwrap()
}

fn smooth_texture(size: usize) -> Image {
    Image::from_fn(size, size, 3, |x, y, c| {
        let (u, v) = ((x as f64 + 0.5) / size as f64, (y as f64 + 0.5) / size as f64);
        0.5 + 0.25 * (std::f64::consts::TAU * (u + 0.3 * c as f64)).sin() * (std::f64::consts::PI * v).cos()
    })
}

fn small_cfg() -> OptimizerConfig {
    OptimizerConfig {
        normal_resolution: 32,
        rgb_schedule: ResolutionSchedule::ladder(16, 32, 20),
        codec: LatentCodec::new(4),
        ..OptimizerConfig::default()
    }
}

fn prompts() -> Prompts {
    Prompts::same(Conditioning::new("a person"))
}

#[test]
fn latent_residual_examples() {
    let s = NoiseSchedule::default();
    let z = LatentGrid::filled(4, 2, 2, 0.3);
    let g = latent_residual_grad(&s, &z, &z, 500, WeightFn::SigmaSquared).unwrap();
    assert!(g.data().iter().all(|&v| v == 0.0));

    // alpha/sigma = 2 at alpha_bar = 0.8
    let two = NoiseSchedule::from_alpha_bar(vec![0.8]).unwrap();
    let z0 = LatentGrid::filled(4, 2, 2, 0.3 - 0.25);
    let g = latent_residual_grad(&two, &z, &z0, 1, WeightFn::Uniform).unwrap();
    assert!(g.data().iter().all(|&v| (v - 0.5).abs() < 1e-12));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z = LatentGrid::gaussian([4, 3, 5], &mut rng);
    let z0 = LatentGrid::gaussian([4, 3, 5], &mut rng);
    for weight in [WeightFn::Uniform, WeightFn::SigmaSquared, WeightFn::SigmaAlpha] {
        let t = rng.random_range(1..=1000);
        let g = latent_residual_grad(&s, &z, &z0, t, weight).unwrap();
        let ab: f64 = (1..=t).map(|k| 1.0 - (1e-4 + (2e-2 - 1e-4) * (k - 1) as f64 / 999.0)).product();
        let (a, sg) = (ab.sqrt(), (1.0 - ab).sqrt());
        let w = match weight {
            WeightFn::Uniform => 1.0,
            WeightFn::SigmaSquared => sg * sg,
            WeightFn::SigmaAlpha => sg * a,
        };
        for i in 0..z.len() {
            let want = w * a / sg * (z.data()[i] - z0.data()[i]);
            assert!((g.data()[i] - want).abs() < 1e-9 * want.abs().max(1.0));
        }
    }
    assert!(latent_residual_grad(&s, &z, &LatentGrid::zeros(1, 1, 1), 10, WeightFn::Uniform).is_err());
    assert!(latent_residual_grad(&s, &z, &z0, 0, WeightFn::Uniform).is_err());
}

#[test]
fn zero_residual_step_is_exactly_zero() {
    let rig = rig(0);
    let mut params = rig.zero_params((16, 16));
    params.texture = smooth_texture(16);
    let cfg = OptimizerConfig {
        codec: LatentCodec::new(1),
        ..small_cfg()
    };
    let s = NoiseSchedule::default();
    let oracle = RenderOracle::new(&rig, params.clone(), s.clone(), cfg.render).unwrap();
    let cam = cfg.views.camera(Framing::Body, 20.0, 5.0, 32);
    let noise = StepNoise { t: 300, seed: 4 };
    let cond = Conditioning::new("");
    let geo = geo_step(&rig, &params, &cam, &oracle, &cond, noise, &cfg, &s).unwrap();
    assert!(geo.grads.norm() < 1e-9, "geometry gradient {}", geo.grads.norm());
    let tex = tex_step(&rig, &params, &cam, &oracle, &cond, noise, &cfg, &s).unwrap();
    assert!(tex.grad.data().iter().all(|g| g.abs() < 1e-9));
}

#[test]
fn oracle_with_pure_sds_pulls_toward_target_latent() {
    let rig = rig(0);
    let mut params = rig.zero_params((16, 16));
    params.texture = Image::filled(16, 16, 3, 0.4);
    let cfg = OptimizerConfig {
        lambda_r: 0.0,
        ..small_cfg()
    };
    let s = NoiseSchedule::default();
    let cam = cfg.views.camera(Framing::Body, 0.0, 0.0, 32);
    let fb = render(&rig.build(&params).unwrap(), &params.texture, &cam, &cfg.render).unwrap();
    let z = cfg.codec.encode(&fb.rgb).unwrap();
    let target = z.axpby(1.0, &LatentGrid::filled(3, 8, 8, 1.0), 0.1);
    let oracle = OraclePredictor::new(target.clone(), s.clone());
    let noise = StepNoise { t: 640, seed: 2 };
    let tex = tex_step(&rig, &params, &cam, &oracle, &Conditioning::new(""), noise, &cfg, &s).unwrap();
    // Hand chain: k·(z − z*) broadcast through the encode adjoint onto texels.
    let k = s.sigma(640) * s.sigma(640) * s.alpha(640) / s.sigma(640);
    let g_z = z.axpby(k, &target, -k);
    let g_img = cfg.codec.encode_adjoint(&g_z, 32, 32);
    let want = deco_core::render::grad_texture(&fb, &rig.build(&params).unwrap(), &g_img, (16, 16));
    for (a, b) in tex.grad.data().iter().zip(want.data()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(tex.grad.data().iter().all(|&g| g <= 0.0));
}

#[test]
fn constant_color_target_decreases_texture_error() {
    let rig = rig(0);
    let mut params = rig.zero_params((16, 16));
    params.texture = smooth_texture(16);
    let cfg = OptimizerConfig {
        lambda_r: 1.0,
        ..small_cfg()
    };
    let s = NoiseSchedule::default();
    let cam = cfg.views.camera(Framing::Body, 0.0, 0.0, 32);
    let color = [0.8, 0.3, 0.2];
    let target_img = Image::from_fn(32, 32, 3, |_, _, c| color[c]);
    let oracle = OraclePredictor::new(cfg.codec.encode(&target_img).unwrap(), s.clone());
    let mesh = rig.build(&params).unwrap();
    let covered_mse = |p: &BodyParams| {
        let fb = render(&mesh, &p.texture, &cam, &cfg.render).unwrap();
        let (mut acc, mut n) = (0.0, 0);
        for i in 0..fb.coverage.len() {
            if fb.coverage[i] {
                let px = fb.rgb.pixel_at(i);
                acc += (0..3).map(|c| (px[c] - color[c]).powi(2)).sum::<f64>();
                n += 3;
            }
        }
        acc / n as f64
    };
    let mut prev = covered_mse(&params);
    for step in 0..50 {
        let noise = StepNoise { t: 500, seed: step };
        let tex = tex_step(&rig, &params, &cam, &oracle, &Conditioning::new(""), noise, &cfg, &s).unwrap();
        for (p, g) in params.texture.data_mut().iter_mut().zip(tex.grad.data()) {
            *p -= 0.05 * g;
        }
        params.texture.clamp01();
        let mse = covered_mse(&params);
        assert!(mse < prev, "step {step}: {mse} !< {prev}");
        prev = mse;
    }
}

#[test]
fn schedule_counts_updates() {
    let rig = rig(0);
    let init = rig.zero_params((16, 16));
    let cfg = OptimizerConfig {
        geo_freeze_iter: 50,
        tex_iters: 150,
        ..small_cfg()
    };
    let out = optimize(&rig, init, Guides::shared(&ZeroPredictor), &prompts(), &cfg, &NoiseSchedule::default()).unwrap();
    assert_eq!(out.geo_updates, 50);
    assert_eq!(out.tex_updates, 150);
    assert_eq!(out.log.len(), 150);
    assert_eq!(out.log.iter().filter(|r| r.geo_updated).count(), 50);
    assert!(out.log.iter().take(50).all(|r| r.geo_updated));
    assert!(out.log.iter().all(|r| r.is_finite()));
    assert_eq!(out.log[0].rgb_resolution, 16);
    assert_eq!(out.log[149].rgb_resolution, 32);
}

#[test]
fn zero_weights_leave_parameters_unchanged() {
    let rig = rig(0);
    let mut init = rig.zero_params((16, 16));
    init.texture = smooth_texture(16);
    init.beta[1] = 0.3;
    let cfg = OptimizerConfig {
        lambda_geo: 0.0,
        lambda_tex: 0.0,
        lambda_n: 0.0,
        lambda_r: 0.0,
        tex_iters: 20,
        geo_freeze_iter: 10,
        ..small_cfg()
    };
    let out = optimize(&rig, init.clone(), Guides::shared(&ZeroPredictor), &prompts(), &cfg, &NoiseSchedule::default())
        .unwrap();
    assert_eq!(out.params, init);
}

#[test]
fn gradient_ceiling_skips_steps() {
    let rig = rig(0);
    let init = rig.zero_params((16, 16));
    let cfg = OptimizerConfig {
        grad_ceiling: 1e-30,
        tex_iters: 5,
        geo_freeze_iter: 5,
        ..small_cfg()
    };
    let out = optimize(&rig, init.clone(), Guides::shared(&ZeroPredictor), &prompts(), &cfg, &NoiseSchedule::default())
        .unwrap();
    assert_eq!(out.skipped_steps, 5);
    assert_eq!((out.geo_updates, out.tex_updates), (0, 0));
    assert_eq!(out.params, init);
}

#[test]
fn invalid_config_is_rejected() {
    let rig = rig(0);
    let init = rig.zero_params((16, 16));
    let bad = [
        OptimizerConfig { lambda_n: -1.0, ..small_cfg() },
        OptimizerConfig { geo_freeze_iter: 200, tex_iters: 100, ..small_cfg() },
        OptimizerConfig { normal_resolution: 30, ..small_cfg() },
        OptimizerConfig { t_range: [0.5, 0.2], ..small_cfg() },
    ];
    for cfg in bad {
        assert!(optimize(&rig, init.clone(), Guides::shared(&ZeroPredictor), &prompts(), &cfg, &NoiseSchedule::default())
            .is_err());
    }
}

#[test]
fn equal_seeds_give_identical_trajectories() {
    let rig = rig(0);
    let mut gt = rig.zero_params((16, 16));
    gt.texture = smooth_texture(16);
    gt.beta[0] = 0.2;
    let s = NoiseSchedule::default();
    let oracle = RenderOracle::new(&rig, gt, s.clone(), RenderOptions::default()).unwrap();
    let cfg = OptimizerConfig {
        tex_iters: 30,
        geo_freeze_iter: 10,
        seed: 77,
        ..small_cfg()
    };
    let run = || {
        let mut traj = Vec::new();
        let out = optimize_with(&rig, rig.zero_params((16, 16)), Guides::shared(&oracle), &prompts(), &cfg, &s, |_, p, _| {
            traj.push(p.clone())
        })
        .unwrap();
        (traj, out.log)
    };
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    let other = OptimizerConfig { seed: 78, ..cfg.clone() };
    let out = optimize(&rig, rig.zero_params((16, 16)), Guides::shared(&oracle), &prompts(), &other, &s).unwrap();
    assert_ne!(out.params, *a.last().unwrap());
}

/// Fixed view, fixed resolution, pixel-space latents: the rendered error
/// against the ground truth falls monotonically after a short warm-up.
#[test]
fn oracle_texture_error_decreases_monotonically() {
    let rig = rig(0);
    let mut gt = rig.zero_params((32, 32));
    gt.texture = smooth_texture(32);
    let s = NoiseSchedule::default();
    let oracle = RenderOracle::new(&rig, gt.clone(), s.clone(), RenderOptions::default()).unwrap();
    let views = ViewSampling {
        head_probability: 0.0,
        azimuth_deg: [30.0, 30.0],
        elevation_deg: [10.0, 10.0],
        ..ViewSampling::default()
    };
    let cfg = OptimizerConfig {
        views,
        rgb_schedule: ResolutionSchedule::fixed(64),
        normal_resolution: 64,
        tex_iters: 60,
        geo_freeze_iter: 0,
        codec: LatentCodec::new(1),
        learning_rates: LearningRates {
            texture: 1e-2,
            ..LearningRates::default()
        },
        ..OptimizerConfig::default()
    };
    let cam = views.camera(Framing::Body, 30.0, 10.0, 64);
    let target = render(oracle.mesh(), &gt.texture, &cam, &cfg.render).unwrap().rgb;
    let mut mse = Vec::new();
    optimize_with(&rig, rig.zero_params((32, 32)), Guides::shared(&oracle), &prompts(), &cfg, &s, |_, p, _| {
        mse.push(render(oracle.mesh(), &p.texture, &cam, &cfg.render).unwrap().rgb.mse(&target));
    })
    .unwrap();
    for i in 11..mse.len() {
        assert!(mse[i] <= mse[i - 1], "iteration {i}: {} > {}", mse[i], mse[i - 1]);
    }
    assert!(*mse.last().unwrap() < 1e-3);
}
