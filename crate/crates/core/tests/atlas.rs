use std::sync::OnceLock;

use deco_core::atlas::{
    discretize_atlas, propagate_edit, reconstruct, train_atlas, validate_edited_atlas, AtlasConfig, AtlasError,
    AtlasModel, TranslatingCheckerboard, VideoClip, DEFAULT_ATLAS_SIZE,
};
use deco_core::image::{psnr, Image, Mask};
use proptest::prelude::*;

fn small_board() -> TranslatingCheckerboard {
    TranslatingCheckerboard {
        width: 32,
        height: 32,
        frames: 6,
        ..TranslatingCheckerboard::default()
    }
}

/// Briefly trained model shared by the structural tests.
fn model() -> &'static AtlasModel {
    static MODEL: OnceLock<AtlasModel> = OnceLock::new();
    MODEL.get_or_init(|| train_atlas(&small_board().clip(), 300, &AtlasConfig::default()).unwrap())
}

#[test]
fn single_frame_fit_exceeds_thirty_db() {
    let board = TranslatingCheckerboard {
        frames: 1,
        ..TranslatingCheckerboard::default()
    };
    let clip = board.clip();
    let m = train_atlas(&clip, 5000, &AtlasConfig::default()).unwrap();
    let p = psnr(&reconstruct(&m, 0).unwrap(), &clip.frames[0]);
    assert!(p > 30.0, "psnr {p}");
}

#[test]
fn constant_clip_exceeds_forty_db() {
    let frames = vec![Image::from_color(24, 24, &[0.7, 0.2, 0.4]); 4];
    let clip = VideoClip::new(frames.clone(), 24.0).unwrap();
    let m = train_atlas(&clip, 800, &AtlasConfig::default()).unwrap();
    for (f, frame) in frames.iter().enumerate() {
        let p = psnr(&m.reconstruct(f).unwrap(), frame);
        assert!(p > 40.0, "frame {f}: psnr {p}");
    }
}

#[test]
fn training_and_inference_are_deterministic() {
    let clip = small_board().clip();
    let cfg = AtlasConfig {
        seed: 3,
        ..AtlasConfig::default()
    };
    let a = train_atlas(&clip, 40, &cfg).unwrap();
    let b = train_atlas(&clip, 40, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.reconstruct(2).unwrap(), a.reconstruct(2).unwrap());
    let c = train_atlas(&clip, 40, &AtlasConfig { seed: 4, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn constant_uv_stub_gives_constant_frames() {
    let stub = model().with_constant_uv([0.3, 0.6]);
    let color = stub.atlas_colors(&[[0.3, 0.6]])[0];
    for f in 0..stub.frames() {
        let img = stub.reconstruct(f).unwrap();
        assert!(img.data().chunks(3).all(|px| px == color));
    }
}

#[test]
fn constant_red_edit_paints_every_pixel() {
    let m = model();
    let red = Image::from_color(16, 9, &[1.0, 0.0, 0.0]);
    for f in 0..m.frames() {
        let out = propagate_edit(m, &red, f).unwrap();
        assert!(out.data().chunks(3).all(|px| px == [1.0, 0.0, 0.0]));
    }
}

#[test]
fn unedited_atlas_round_trips_through_propagation() {
    let m = model();
    let atlas = discretize_atlas(m, None);
    assert_eq!((atlas.width(), atlas.height()), DEFAULT_ATLAS_SIZE);
    for f in 0..m.frames() {
        let p = psnr(&propagate_edit(m, &atlas, f).unwrap(), &reconstruct(m, f).unwrap());
        assert!(p > 35.0, "frame {f}: psnr {p}");
    }
}

#[test]
fn edits_change_only_pixels_sampling_the_edited_region() {
    let m = model();
    let (aw, ah) = (96, 64);
    let atlas = m.discretize(aw, ah);
    let mut edited = atlas.clone();
    let (x0, x1, y0, y1) = (30, 50, 20, 40);
    for y in y0..y1 {
        for x in x0..x1 {
            edited.pixel_mut(x, y).copy_from_slice(&[0.0, 1.0, 0.0]);
        }
    }
    let mut changed = 0;
    for f in 0..m.frames() {
        let uvs = m.uv_field(f).unwrap();
        let a = m.propagate_edit(&atlas, f).unwrap();
        let b = m.propagate_edit(&edited, f).unwrap();
        for (i, uv) in uvs.iter().enumerate() {
            // bilinear support: texels floor(s) and floor(s) + 1 on each axis
            let (sx, sy) = (uv[0] * aw as f64 - 0.5, uv[1] * ah as f64 - 0.5);
            let touches = |s: f64, lo: usize, hi: usize| {
                let k = s.floor();
                (k + 1.0 >= lo as f64) && (k < hi as f64)
            };
            if a.pixel_at(i) != b.pixel_at(i) {
                changed += 1;
                assert!(touches(sx, x0, x1) && touches(sy, y0, y1), "pixel {i} changed with uv {uv:?}");
            }
        }
    }
    assert!(changed > 0);
}

#[test]
fn static_clip_edits_are_frame_identical() {
    let board = TranslatingCheckerboard {
        width: 32,
        height: 32,
        frames: 8,
        velocity: [0.0, 0.0],
        ..TranslatingCheckerboard::default()
    };
    let m = train_atlas(&board.clip(), 400, &AtlasConfig::default()).unwrap();
    let mut edited = m.discretize(128, 72);
    for y in 20..50 {
        for x in 40..90 {
            edited.pixel_mut(x, y).copy_from_slice(&[1.0, 1.0, 0.0]);
        }
    }
    let frames: Vec<Image> = (0..8).map(|f| m.propagate_edit(&edited, f).unwrap()).collect();
    for a in &frames {
        for b in &frames {
            assert!(a.mse(b) < 1e-4, "frame-pair mse {}", a.mse(b));
        }
    }
}

#[test]
fn rejected_inputs() {
    let clip = small_board().clip();
    let masks = vec![Mask::new(32, 32, true); clip.len()];
    let masked = clip.clone().with_masks(masks).unwrap();
    assert_eq!(train_atlas(&masked, 10, &AtlasConfig::default()).unwrap_err(), AtlasError::AllMasked);
    assert!(VideoClip::new(vec![], 24.0).is_err());
    assert!(VideoClip::new(vec![Image::new(4, 4, 3), Image::new(5, 4, 3)], 24.0).is_err());
    assert!(clip.clone().with_masks(vec![Mask::new(32, 32, false)]).is_err());
    let bad = AtlasConfig {
        lr: 0.0,
        ..AtlasConfig::default()
    };
    assert_eq!(train_atlas(&clip, 10, &bad).unwrap_err(), AtlasError::Config);

    let m = model();
    assert!(matches!(m.reconstruct(m.frames()), Err(AtlasError::FrameOutOfRange { .. })));
    assert!(m.propagate_edit(&Image::new(1, 8, 3), 0).is_err());
    assert!(validate_edited_atlas(&Image::new(768, 432, 3), DEFAULT_ATLAS_SIZE).is_ok());
    assert!(validate_edited_atlas(&Image::new(767, 432, 3), DEFAULT_ATLAS_SIZE).is_err());
}

#[test]
fn masked_pixels_are_ignored_by_training() {
    let board = small_board();
    let clip = board.clip();
    // corrupt a masked square; the fit must not see it
    let mut frames = clip.frames.clone();
    let mask = Mask::from_fn(32, 32, |x, y| (8..16).contains(&x) && (8..16).contains(&y));
    for f in &mut frames {
        for y in 8..16 {
            for x in 8..16 {
                f.pixel_mut(x, y).copy_from_slice(&[0.0, 0.0, 0.0]);
            }
        }
    }
    let corrupted = VideoClip::new(frames, 24.0)
        .unwrap()
        .with_flow(clip.flow.clone().unwrap())
        .unwrap()
        .with_masks(vec![mask.clone(); board.frames])
        .unwrap();
    let clean = clip.with_masks(vec![mask; board.frames]).unwrap();
    let cfg = AtlasConfig::default();
    assert_eq!(train_atlas(&corrupted, 30, &cfg).unwrap(), train_atlas(&clean, 30, &cfg).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn uv_stays_in_unit_square(frame in 0usize..6, seed in 0u64..1000) {
        let m = model();
        let perturbed = train_atlas(&small_board().clip(), 5, &AtlasConfig { seed, lr: 0.5, ..AtlasConfig::default() }).unwrap();
        for mm in [m, &perturbed] {
            for uv in mm.uv_field(frame).unwrap() {
                prop_assert!((0.0..=1.0).contains(&uv[0]) && (0.0..=1.0).contains(&uv[1]));
            }
        }
    }
}
