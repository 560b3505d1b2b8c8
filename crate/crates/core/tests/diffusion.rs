use deco_core::diffusion::{
    add_noise, one_step_x0, Conditioning, LatentCodec, LatentGrid, NoisePredictor, NoiseSchedule, OraclePredictor,
    PredictorError, ZeroPredictor,
};
use deco_core::image::{psnr, Image};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Returns a fixed noise grid regardless of input.
struct Known(LatentGrid);

impl NoisePredictor for Known {
    fn predict(&self, _z: &LatentGrid, _t: usize, _c: &Conditioning) -> Result<LatentGrid, PredictorError> {
        Ok(self.0.clone())
    }
}

fn max_abs(a: &LatentGrid, b: &LatentGrid) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn default_schedule_matches_linear_beta_products() {
    let s = NoiseSchedule::default();
    assert_eq!(s.steps(), 1000);
    let mut prod = 1.0;
    for t in 1..=1000 {
        let beta = 1e-4 + (2e-2 - 1e-4) * (t - 1) as f64 / 999.0;
        prod *= 1.0 - beta;
        assert!((s.alpha_bar()[t - 1] - prod).abs() < 1e-14);
        assert!((s.alpha(t).powi(2) + s.sigma(t).powi(2) - 1.0).abs() < 1e-12);
    }
    assert!(s.check(0).is_err() && s.check(1001).is_err());
}

#[test]
fn one_step_inverts_add_noise_on_random_triples() {
    let s = NoiseSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cond = Conditioning::new("a person");
    for _ in 0..100 {
        let shape = [4, rng.random_range(1..9), rng.random_range(1..9)];
        let z = LatentGrid::gaussian(shape, &mut rng);
        let eps = LatentGrid::gaussian(shape, &mut rng);
        let t = rng.random_range(1..=1000);
        let z_t = add_noise(&s, &z, t, &eps).unwrap();
        let z0 = one_step_x0(&s, &z_t, t, &Known(eps.clone()), &cond).unwrap();
        assert!(max_abs(&z0, &z) < 1e-9, "t = {t}");

        let target = LatentGrid::gaussian(shape, &mut rng);
        let oracle = OraclePredictor::new(target.clone(), s.clone());
        assert!(max_abs(&one_step_x0(&s, &z_t, t, &oracle, &cond).unwrap(), &target) < 1e-9);
        let noisy_target = add_noise(&s, &target, t, &eps).unwrap();
        assert!(max_abs(&oracle.predict(&noisy_target, t, &cond).unwrap(), &eps) < 1e-9);
    }
}

#[test]
fn add_noise_matches_scalar_loop() {
    let s = NoiseSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z = LatentGrid::gaussian([3, 4, 5], &mut rng);
    let eps = LatentGrid::gaussian([3, 4, 5], &mut rng);
    for t in [1, 17, 500, 1000] {
        let ab = s.alpha_bar()[t - 1];
        let z_t = add_noise(&s, &z, t, &eps).unwrap();
        for i in 0..z.len() {
            let want = ab.sqrt() * z.data()[i] + (1.0 - ab).sqrt() * eps.data()[i];
            assert!((z_t.data()[i] - want).abs() < 1e-12);
        }
    }
    let zero = LatentGrid::zeros(3, 4, 5);
    let z_t = add_noise(&s, &z, 300, &zero).unwrap();
    assert!(max_abs(&z_t, &z.scale(s.alpha(300))) < 1e-15);
    // ᾱ_1 ≈ 1, so z_1 stays within σ_1·|ε| + (1 − α_1)·|z| of z
    let zmax = z.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let emax = eps.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bound = s.sigma(1) * emax + (1.0 - s.alpha(1)) * zmax + 1e-15;
    assert!(s.sigma(1) < 0.011);
    assert!(max_abs(&add_noise(&s, &z, 1, &eps).unwrap(), &z) <= bound);
    assert!(add_noise(&s, &z, 0, &eps).is_err());
    assert!(add_noise(&s, &z, 1, &LatentGrid::zeros(3, 4, 4)).is_err());
}

#[test]
fn zero_prediction_rescales_by_alpha() {
    let s = NoiseSchedule::default();
    let z_t = LatentGrid::gaussian([4, 3, 3], &mut ChaCha8Rng::seed_from_u64(5));
    let z0 = one_step_x0(&s, &z_t, 640, &ZeroPredictor, &Conditioning::new("")).unwrap();
    assert!(max_abs(&z0, &z_t.scale(1.0 / s.alpha(640))) < 1e-12);
}

#[test]
fn encode_is_block_mean_affine() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let img = Image::from_fn(16, 16, 3, |_, _, _| rng.random_range(0.0..1.0));
    let z = LatentCodec::new(8).encode(&img).unwrap();
    assert_eq!(z.shape(), [3, 2, 2]);
    for c in 0..3 {
        for by in 0..2 {
            for bx in 0..2 {
                let mut sum = 0.0;
                for y in 0..8 {
                    for x in 0..8 {
                        sum += img.get(8 * bx + x, 8 * by + y, c);
                    }
                }
                assert!((z.get(c, by, bx) - (2.0 * sum / 64.0 - 1.0)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn constants_round_trip_exactly() {
    for v in [0.0, 0.3, 0.71, 1.0] {
        let img = Image::filled(32, 16, 3, v);
        let codec = LatentCodec::new(8);
        let back = codec.decode(&codec.encode(&img).unwrap());
        assert!(back.data().iter().all(|x| (x - v).abs() < 1e-12));
    }
}

#[test]
fn smooth_gradient_round_trip_exceeds_thirty_db() {
    let img = Image::from_fn(128, 128, 3, |x, y, c| {
        let (u, v) = (x as f64 / 127.0, y as f64 / 127.0);
        [0.2 + 0.6 * u, 0.1 + 0.8 * v, 0.5 + 0.3 * (u - v)][c]
    });
    let codec = LatentCodec::new(8);
    let back = codec.decode(&codec.encode(&img).unwrap());
    let p = psnr(&img, &back);
    assert!(p > 30.0, "round trip psnr {p}");
}

#[test]
fn encode_adjoint_passes_dot_test() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for f in [1, 2, 4, 8] {
        let codec = LatentCodec::new(f);
        let (w, h) = (16, 24);
        let x = Image::from_fn(w, h, 3, |_, _, _| rng.random_range(-1.0..1.0));
        let g = LatentGrid::gaussian([3, h / f, w / f], &mut rng);
        // encode is affine; its linear part is encode(x) - encode(0)
        let lin: Vec<f64> = codec
            .encode(&x)
            .unwrap()
            .data()
            .iter()
            .zip(codec.encode(&Image::new(w, h, 3)).unwrap().data())
            .map(|(a, b)| a - b)
            .collect();
        let lhs: f64 = lin.iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let adj = codec.encode_adjoint(&g, w, h);
        let rhs: f64 = adj.data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }
}

proptest! {
    #[test]
    fn round_trip_is_contraction_on_band_limited_images(fx in 0.0f64..1.0, fy in 0.0f64..1.0, phase in 0.0f64..6.3) {
        // at most one cycle over each 64-pixel side
        let img = Image::from_fn(64, 64, 3, |x, y, c| {
            0.5 + 0.3 * (std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) / 64.0 + phase + c as f64).sin()
        });
        let codec = LatentCodec::new(8);
        let back = codec.decode(&codec.encode(&img).unwrap());
        let mean = img.data().iter().sum::<f64>() / img.data().len() as f64;
        let energy = img.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / img.data().len() as f64;
        prop_assert!(img.mse(&back) <= energy);
        prop_assert!(img.mse(&back) < 2e-3);
    }
}
