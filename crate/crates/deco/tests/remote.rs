mod common;

use std::net::TcpListener;

use common::MockServer;
use deco::io::{image_from_png, png_bytes, BitDepth};
use deco::remote::*;
use deco_core::atlas::AtlasError;
use deco_core::diffusion::{Conditioning, LatentGrid, NoisePredictor, NoiseSchedule, OraclePredictor, PredictorError};
use deco_core::harmonize::{Passthrough, RefineError, RefineInputs, ShadingRefiner};
use deco_core::image::{Image, Mask};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(url: &str) -> RemoteConfig {
    RemoteConfig {
        endpoint: url.to_string(),
        timeout_ms: 5_000,
        retries: 2,
        backoff_ms: 1,
    }
}

fn random_latent(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> LatentGrid {
    let n = shape.iter().product();
    LatentGrid::from_vec(shape, (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()
}

fn predict_ok(body: &[u8], f: impl Fn(&LatentGrid, usize) -> LatentGrid) -> (u16, String) {
    let req: PredictRequest = serde_json::from_slice(body).unwrap();
    let z = req.latent().unwrap();
    let eps = f(&z, req.t);
    (200, serde_json::to_string(&PredictResponse::new(&eps)).unwrap())
}

fn oracle_server(target: LatentGrid) -> MockServer {
    let oracle = OraclePredictor::new(target, NoiseSchedule::default());
    MockServer::start(move |r| {
        predict_ok(&r.body, |z, t| oracle.predict(z, t, &Conditioning::new("")).unwrap())
    })
}

#[test]
fn zero_server_echoes_zero_noise() {
    let server = MockServer::start(|r| {
        predict_ok(&r.body, |z, _| {
            let [c, h, w] = z.shape();
            LatentGrid::zeros(c, h, w)
        })
    });
    let p = RemotePredictor::new(config(&server.url));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let z = random_latent(&mut rng, [4, 3, 5]);
    let eps = p.predict(&z, 10, &Conditioning::new("a person")).unwrap();
    assert_eq!(eps, LatentGrid::zeros(4, 3, 5));
    assert_eq!(server.hits(), 1);
}

#[test]
fn request_carries_conditioning() {
    let server = MockServer::start(|r| {
        let req: PredictRequest = serde_json::from_slice(&r.body).unwrap();
        assert_eq!(req.prompt, "a knight");
        assert_eq!(req.seed, 77);
        assert_eq!(req.t, 321);
        assert_eq!(req.shape, [4, 2, 2]);
        predict_ok(&r.body, |z, _| z.clone())
    });
    let p = RemotePredictor::new(config(&server.url));
    let z = LatentGrid::zeros(4, 2, 2);
    p.predict(&z, 321, &Conditioning::new("a knight").with_seed(77)).unwrap();
}

#[test]
fn remote_oracle_matches_local_oracle_at_wire_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shape = [4, 6, 5];
    let target = random_latent(&mut rng, shape);
    let server = oracle_server(target.clone());
    let remote = RemotePredictor::new(config(&server.url));
    let local = OraclePredictor::new(target, NoiseSchedule::default());
    for _ in 0..10 {
        let z = random_latent(&mut rng, shape);
        let t = rng.random_range(20..980);
        let cond = Conditioning::new("p");
        let got = remote.predict(&z, t, &cond).unwrap();
        let want = local.predict(&z.to_f32_precision(), t, &cond).unwrap().to_f32_precision();
        assert_eq!(got, want);
    }
}

#[test]
fn wrong_shape_is_a_shape_mismatch() {
    let server = MockServer::start(|r| predict_ok(&r.body, |_, _| LatentGrid::zeros(4, 2, 2)));
    let p = RemotePredictor::new(config(&server.url));
    let err = p.predict(&LatentGrid::zeros(4, 3, 3), 5, &Conditioning::new("")).unwrap_err();
    assert_eq!(
        err,
        PredictorError::ShapeMismatch {
            expected: [4, 3, 3],
            actual: [4, 2, 2]
        }
    );
}

#[test]
fn short_payload_is_a_contract_violation() {
    let server = MockServer::start(|_| {
        let resp = PredictResponse {
            eps: encode_f32(&[0.0; 7]),
            shape: [4, 2, 1],
        };
        (200, serde_json::to_string(&resp).unwrap())
    });
    let p = RemotePredictor::new(config(&server.url));
    let err = p.predict(&LatentGrid::zeros(4, 2, 1), 5, &Conditioning::new("")).unwrap_err();
    assert!(matches!(err, PredictorError::Contract(_)), "{err}");
}

#[test]
fn transient_failures_are_retried() {
    let server = {
        let count = std::sync::atomic::AtomicUsize::new(0);
        MockServer::start(move |r| {
            if count.fetch_add(1, std::sync::atomic::Ordering::SeqCst) < 2 {
                (503, "{}".into())
            } else {
                predict_ok(&r.body, |z, _| z.clone())
            }
        })
    };
    let p = RemotePredictor::new(config(&server.url));
    let z = LatentGrid::zeros(4, 1, 1);
    assert_eq!(p.predict(&z, 1, &Conditioning::new("")).unwrap(), z);
    assert_eq!(server.hits(), 3);
}

#[test]
fn persistent_unavailability_is_a_transport_failure() {
    for status in [503u16, 429] {
        let server = MockServer::start(move |_| (status, "{}".into()));
        let p = RemotePredictor::new(config(&server.url));
        let err = p.predict(&LatentGrid::zeros(4, 1, 1), 1, &Conditioning::new("")).unwrap_err();
        assert!(matches!(err, PredictorError::Transport { attempts: 3, .. }), "{err}");
        assert_eq!(server.hits(), 3);
    }
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(|_| (400, r#"{"error":"bad prompt"}"#.into()));
    let p = RemotePredictor::new(config(&server.url));
    let err = p.predict(&LatentGrid::zeros(4, 1, 1), 1, &Conditioning::new("")).unwrap_err();
    match err {
        PredictorError::Contract(m) => assert!(m.contains("400") && m.contains("bad prompt"), "{m}"),
        other => panic!("{other}"),
    }
    assert_eq!(server.hits(), 1);
}

#[test]
fn malformed_json_is_a_contract_violation() {
    for body in ["not json", r#"{"eps": 3}"#, r#"{"eps":"!!!","shape":[4,1,1]}"#] {
        let server = MockServer::start(move |_| (200, body.into()));
        let p = RemotePredictor::new(config(&server.url));
        let err = p.predict(&LatentGrid::zeros(4, 1, 1), 1, &Conditioning::new("")).unwrap_err();
        assert!(matches!(err, PredictorError::Contract(_)), "{body}: {err}");
        assert_eq!(server.hits(), 1);
    }
}

#[test]
fn refused_connection_is_a_transport_failure() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let p = RemotePredictor::new(config(&format!("http://127.0.0.1:{port}/")));
    let err = p.predict(&LatentGrid::zeros(4, 1, 1), 1, &Conditioning::new("")).unwrap_err();
    assert!(matches!(err, PredictorError::Transport { attempts: 3, .. }), "{err}");
}

#[test]
fn environment_overrides_the_endpoint() {
    let var = "DECO_TEST_REMOTE_OVERRIDE_URL";
    std::env::remove_var(var);
    assert_eq!(config("http://a/").with_env_override(var).endpoint, "http://a/");
    std::env::set_var(var, "");
    assert_eq!(config("http://a/").with_env_override(var).endpoint, "http://a/");
    std::env::set_var(var, "http://b/");
    assert_eq!(config("http://a/").with_env_override(var).endpoint, "http://b/");
    std::env::remove_var(var);

    std::env::set_var(PREDICTOR_ENDPOINT_ENV, "http://c/");
    assert_eq!(RemotePredictor::from_env(config("http://a/")).endpoint(), "http://c/");
    std::env::remove_var(PREDICTOR_ENDPOINT_ENV);
    assert_eq!(RemotePredictor::from_env(config("http://a/")).endpoint(), "http://a/");
}

#[test]
fn latent_and_half_codecs_round_trip_at_their_precision() {
    let v = [0.0, -1.5, 1.0 / 3.0, 1e-3, 65504.0];
    let f32s = decode_f32(&encode_f32(&v)).unwrap();
    for (a, b) in v.iter().zip(&f32s) {
        assert_eq!(*b, *a as f32 as f64);
    }
    let f16s = decode_f16(&encode_f16(&v)).unwrap();
    for (a, b) in v.iter().zip(&f16s) {
        assert!((a - b).abs() <= a.abs() * 2f64.powi(-11), "{a} vs {b}");
    }
    assert!(decode_f32(&encode_bytes(&[0, 1, 2])).is_err());
    assert!(decode_f16("@@@").is_err());
}

fn atlas() -> Image {
    Image::from_fn(12, 8, 3, |x, y, c| ((x * 17 + y * 5 + c * 60) % 256) as f64 / 255.0)
}

fn editor_server(f: impl Fn(&Image) -> Image + Send + Sync + 'static) -> MockServer {
    MockServer::start(move |r| {
        let req: EditRequest = serde_json::from_slice(&r.body).unwrap();
        let img = image_from_png(&decode_bytes(&req.atlas_png).unwrap()).unwrap();
        let out = f(&img);
        let resp = EditResponse {
            image_png: encode_bytes(&png_bytes(&out, BitDepth::Sixteen).unwrap()),
        };
        (200, serde_json::to_string(&resp).unwrap())
    })
}

#[test]
fn editor_identity_returns_the_atlas() {
    let server = editor_server(Image::clone);
    let src = EditSource::Remote(config(&server.url));
    let a = atlas();
    assert_eq!(request_atlas_edit(&src, &a, "winter", None, 4).unwrap(), a);
}

#[test]
fn editor_edits_come_back_at_sixteen_bit_precision() {
    let server = editor_server(|img| img.map(|v| 1.0 - v));
    let src = EditSource::Remote(config(&server.url));
    let a = atlas();
    let got = request_atlas_edit(&src, &a, "negative", None, 4).unwrap();
    for (g, v) in got.data().iter().zip(a.data()) {
        assert!((g - (1.0 - v)).abs() <= 0.5 / 65535.0 + 1e-12);
    }
}

#[test]
fn editor_forwards_prompt_seed_and_depth() {
    let server = MockServer::start(|r| {
        let req: EditRequest = serde_json::from_slice(&r.body).unwrap();
        assert_eq!(req.prompt, "sunset");
        assert_eq!(req.seed, 9);
        let depth = image_from_png(&decode_bytes(req.depth_png.as_deref().unwrap()).unwrap()).unwrap();
        assert_eq!((depth.width(), depth.height()), (12, 8));
        (200, serde_json::to_string(&EditResponse { image_png: req.atlas_png }).unwrap())
    });
    let depth = Image::filled(12, 8, 1, 0.5);
    let src = EditSource::Remote(config(&server.url));
    request_atlas_edit(&src, &atlas(), "sunset", Some(&depth), 9).unwrap();
}

#[test]
fn editor_rejects_a_resized_atlas() {
    let server = editor_server(|_| Image::filled(6, 4, 3, 0.5));
    let src = EditSource::Remote(config(&server.url));
    let err = request_atlas_edit(&src, &atlas(), "x", None, 0).unwrap_err();
    assert!(
        matches!(err, EditorError::Atlas(AtlasError::EditedAtlasShape { width: 6, height: 4, .. })),
        "{err}"
    );
}

#[test]
fn editor_non_png_is_a_contract_violation() {
    let server = MockServer::start(|_| (200, r#"{"image_png":"aGVsbG8="}"#.into()));
    let src = EditSource::Remote(config(&server.url));
    let err = request_atlas_edit(&src, &atlas(), "x", None, 0).unwrap_err();
    assert!(matches!(err, EditorError::Remote(RemoteError::Contract(_))), "{err}");
}

struct RefineScene {
    composite: Image,
    shading: Image,
    mask: Mask,
    normals: Vec<Vector3<f64>>,
    depth: Vec<f64>,
}

impl RefineScene {
    fn new(w: usize, h: usize) -> Self {
        let mask = Mask::from_fn(w, h, |x, y| x > 1 && y > 1 && x < w - 2 && y < h - 2);
        Self {
            composite: Image::from_fn(w, h, 3, |x, y, c| (x + y + c) as f64 / (w + h + 3) as f64),
            shading: Image::from_fn(w, h, 1, |x, y, _| 0.3 + 0.05 * x as f64 + 0.02 * y as f64),
            normals: (0..w * h)
                .map(|i| if mask.data()[i] { Vector3::new(0.0, 0.6, 0.8) } else { Vector3::zeros() })
                .collect(),
            depth: (0..w * h).map(|i| if mask.data()[i] { 2.5 } else { f64::INFINITY }).collect(),
            mask,
        }
    }

    fn inputs(&self) -> RefineInputs<'_> {
        RefineInputs {
            composite: &self.composite,
            shading: &self.shading,
            fg_mask: &self.mask,
            normals: &self.normals,
            depth: &self.depth,
        }
    }
}

#[test]
fn refiner_echo_matches_passthrough_at_half_precision() {
    let server = MockServer::start(|r| {
        let req: RefineRequest = serde_json::from_slice(&r.body).unwrap();
        let depth = decode_f16(&req.depth).unwrap();
        assert!(depth.iter().any(|d| d.is_infinite()));
        let resp = RefineResponse {
            width: req.width,
            height: req.height,
            shading: req.shading,
        };
        (200, serde_json::to_string(&resp).unwrap())
    });
    let scene = RefineScene::new(9, 7);
    let remote = RemoteRefiner::new(config(&server.url)).refine(&scene.inputs()).unwrap();
    let local = Passthrough.refine(&scene.inputs()).unwrap();
    assert_eq!((remote.width(), remote.height(), remote.channels()), (9, 7, 1));
    for (a, b) in remote.data().iter().zip(local.data()) {
        assert!((a - b).abs() <= b.abs() * 2f64.powi(-11), "{a} vs {b}");
    }
}

#[test]
fn refiner_wrong_size_is_a_contract_violation() {
    let server = MockServer::start(|_| {
        let resp = RefineResponse {
            width: 2,
            height: 2,
            shading: encode_f16(&[1.0; 4]),
        };
        (200, serde_json::to_string(&resp).unwrap())
    });
    let scene = RefineScene::new(9, 7);
    let err = RemoteRefiner::new(config(&server.url)).refine(&scene.inputs()).unwrap_err();
    assert!(matches!(err, RefineError::Contract(_)), "{err}");
}

#[test]
fn refiner_transport_failure_is_reported() {
    let server = MockServer::start(|_| (500, "{}".into()));
    let scene = RefineScene::new(9, 7);
    let err = RemoteRefiner::new(config(&server.url)).refine(&scene.inputs()).unwrap_err();
    assert!(matches!(err, RefineError::Transport { attempts: 3, .. }), "{err}");
}
