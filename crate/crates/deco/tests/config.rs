use std::path::Path;

use deco::config::{ConfigError, GuidanceSource, PipelineConfig, RefinerChoice};
use deco::remote::EditSource;

/// The TOML block of the module documentation.
fn documented_example() -> String {
    let src = include_str!("../src/config.rs");
    let body: Vec<&str> = src
        .lines()
        .map(|l| l.strip_prefix("//!").map(|l| l.strip_prefix(' ').unwrap_or(l)))
        .take_while(Option::is_some)
        .flatten()
        .skip_while(|l| !l.starts_with("```toml"))
        .skip(1)
        .take_while(|l| !l.starts_with("```"))
        .collect();
    assert!(body.len() > 10, "documented example not found");
    body.join("\n")
}

#[test]
fn documented_example_parses() {
    let cfg = PipelineConfig::from_toml(&documented_example(), Path::new("doc.toml")).unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.atlas.size, (768, 432));
    assert_eq!(cfg.atlas.network.hidden_units, 64);
    assert_eq!(cfg.human.levels, 1);
    assert_eq!(cfg.human.optimizer.tex_iters, 150);
    assert_eq!(cfg.human.guidance, GuidanceSource::Zero);
    assert_eq!(cfg.harmonize.params.ema_lambda, 0.5);
    assert_eq!(cfg.harmonize.refiner, RefinerChoice::Passthrough);
    assert!(matches!(cfg.atlas.editor, Some(EditSource::File(_))));
    assert!(!cfg.stages.allow_passthrough);
}

#[test]
fn toml_round_trip_is_lossless() {
    let mut cfg = PipelineConfig::from_toml(&documented_example(), Path::new("doc.toml")).unwrap();
    cfg.harmonize.params.ema_lambda = 0.1 + 0.2;
    cfg.human.guidance = GuidanceSource::Oracle { params: "gt.bin".into() };
    let text = cfg.to_toml();
    assert_eq!(PipelineConfig::from_toml(&text, Path::new("x")).unwrap(), cfg);
    let default = PipelineConfig::default();
    assert_eq!(PipelineConfig::from_toml(&default.to_toml(), Path::new("x")).unwrap(), default);
}

#[test]
fn empty_file_is_the_default() {
    assert_eq!(PipelineConfig::from_toml("", Path::new("x")).unwrap(), PipelineConfig::default());
}

#[test]
fn unknown_keys_are_rejected_at_every_level() {
    for text in [
        "sede = 1",
        "[paths]\nframez = \"a\"",
        "[stages]\nedit_hair = true",
        "[atlas]\nnetwork = { hidden = 3 }",
        "[human]\noptimizer = { iterations = 3 }",
        "[harmonize]\nparams = { ema = 0.5 }",
        "[camera]\nlens = 3",
        "[atlas]\neditor = { remote = { endpoint = \"x\", retry = 1 } }",
    ] {
        let err = PipelineConfig::from_toml(text, Path::new("bad.toml")).unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { .. }), "{text}: {err}");
        assert!(err.to_string().starts_with("bad.toml"), "{err}");
    }
}

#[test]
fn validation_reports_what_is_missing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.stages.edit_background = false;
    cfg.stages.edit_human = false;
    assert!(cfg.validate().unwrap_err().to_string().contains("allow_passthrough"));
    cfg.stages.allow_passthrough = true;
    assert!(cfg.validate().unwrap_err().to_string().contains("frames"));
    cfg.paths.frames = Some(dir.path().join("nope"));
    cfg.paths.output = Some(dir.path().join("out"));
    assert!(matches!(cfg.validate(), Err(ConfigError::MissingPath { .. })));
    cfg.paths.frames = Some(dir.path().to_path_buf());
    cfg.validate().unwrap();

    cfg.stages.edit_background = true;
    assert!(cfg.validate().is_err(), "background edit needs an editor");
    cfg.atlas.editor = Some(EditSource::File(dir.path().join("edited.png")));
    assert!(matches!(cfg.validate(), Err(ConfigError::MissingPath { .. })));
}

#[test]
fn invalid_numbers_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let base = {
        let mut c = PipelineConfig::default();
        c.stages.edit_background = false;
        c.paths.frames = Some(dir.path().to_path_buf());
        c.paths.output = Some(dir.path().join("out"));
        c
    };
    base.validate().unwrap();
    let cases: Vec<Box<dyn Fn(&mut PipelineConfig)>> = vec![
        Box::new(|c| c.atlas.size = (0, 4)),
        Box::new(|c| c.atlas.fps = 0.0),
        Box::new(|c| c.human.texture_size = (0, 0)),
        Box::new(|c| c.harmonize.retinex_epsilon = -1.0),
        Box::new(|c| c.harmonize.params.ema_lambda = 1.5),
        Box::new(|c| c.camera.fov_deg = 0.0),
        Box::new(|c| c.camera.eye = c.camera.target),
    ];
    for (i, f) in cases.iter().enumerate() {
        let mut c = base.clone();
        f(&mut c);
        assert!(c.validate().is_err(), "case {i} should fail");
    }
}

#[test]
fn seed_reaches_seeded_stages() {
    let a = PipelineConfig::default().with_seed(5);
    let b = PipelineConfig::default().with_seed(6);
    assert_eq!(a.seed, 5);
    assert_ne!(a.seeded_atlas(), b.seeded_atlas());
    assert_ne!(a.seeded_optimizer(), b.seeded_optimizer());
    assert_eq!(a.seeded_atlas(), PipelineConfig::default().with_seed(5).seeded_atlas());
}
