mod common;

use std::path::{Path, PathBuf};
use std::process::{Command as Process, Output};

use clap::{CommandFactory, Parser};
use common::{base_config, ClipFixture};
use deco::cli::{Cli, Command};
use deco::config::{GuidanceSource, PipelineConfig, RefinerChoice};
use deco::io::{write_rgb, BitDepth};
use deco::remote::EditSource;
use deco_core::image::Image;

fn deco(args: &[&str]) -> Output {
    Process::new(env!("CARGO_BIN_EXE_deco"))
        .args(args)
        .env_remove("DECO_CACHE_DIR")
        .env_remove("DECO_LOG")
        .output()
        .unwrap()
}

fn resolved(args: &[&str]) -> PipelineConfig {
    let cli = Cli::try_parse_from(std::iter::once("deco").chain(args.iter().copied())).unwrap();
    cli.command.resolved_config().unwrap()
}

fn write_config(dir: &Path, cfg: &PipelineConfig) -> PathBuf {
    let path = dir.join("deco.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(deco(&["paint"]).status.code(), Some(2));
    assert_eq!(deco(&["atlas-fit"]).status.code(), Some(2), "missing --out");
    assert_eq!(deco(&["atlas-fit", "--out", "a", "--atlas-size", "12"]).status.code(), Some(2));
    assert_eq!(deco(&[]).status.code(), Some(2));
    let help = deco(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("human-optimize"));
}

#[test]
fn every_argument_is_documented() {
    let cmd = Cli::command();
    cmd.clone().debug_assert();
    for sub in cmd.get_subcommands() {
        assert!(sub.get_about().is_some(), "{} lacks a description", sub.get_name());
        for arg in sub.get_arguments() {
            let id = arg.get_id().as_str();
            if id == "help" || id == "version" {
                continue;
            }
            assert!(arg.get_help().is_some(), "{} --{id} lacks help", sub.get_name());
        }
    }
}

#[test]
fn flags_override_the_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let mut file = PipelineConfig::default();
    file.seed = 11;
    file.atlas.iters = 5;
    file.atlas.fps = 12.0;
    file.human.levels = 1;
    file.human.optimizer.lambda_r = 123.0;
    file.harmonize.params.ema_lambda = 0.25;
    file.harmonize.refiner = RefinerChoice::Remote(deco::remote::RemoteConfig {
        timeout_ms: 77,
        ..deco::remote::RemoteConfig::new("http://file/")
    });
    let cfg = write_config(dir.path(), &file);
    let cfg = cfg.to_str().unwrap();

    let c = resolved(&["atlas-fit", "--config", cfg, "--iters", "9", "--out", "m.json"]);
    assert_eq!((c.seed, c.atlas.iters, c.atlas.fps), (11, 9, 12.0));
    let c = resolved(&["atlas-fit", "--out", "m.json"]);
    let d = PipelineConfig::default();
    assert_eq!((c.seed, c.atlas.iters, c.atlas.fps), (d.seed, d.atlas.iters, d.atlas.fps));
    let c = resolved(&["atlas-fit", "--config", cfg, "--seed", "3", "--atlas-size", "20x10", "--out", "m"]);
    assert_eq!((c.seed, c.atlas.size), (3, (20, 10)));

    let c = resolved(&["human-optimize", "--config", cfg, "--lambda-n", "2", "--out", "p.bin"]);
    assert_eq!((c.human.levels, c.human.optimizer.lambda_n, c.human.optimizer.lambda_r), (1, 2.0, 123.0));
    let c = resolved(&["human-optimize", "--config", cfg, "--preset", "light", "--lambda-r", "4", "--out", "p"]);
    assert_eq!(c.human.optimizer.lambda_n, c.human.optimizer.lambda_r.min(c.human.optimizer.lambda_n));
    assert_eq!(c.human.optimizer.lambda_r, 4.0);
    let c = resolved(&["human-optimize", "--oracle", "gt.bin", "--out", "p"]);
    assert_eq!(c.human.guidance, GuidanceSource::Oracle { params: "gt.bin".into() });

    let base = ["harmonize", "--fg", "a", "--fg-mask", "b", "--fg-normals", "c", "--bg", "d", "--out", "e"];
    let with = |extra: &[&str]| {
        let mut v: Vec<&str> = base.to_vec();
        v.extend_from_slice(&["--config", cfg]);
        v.extend_from_slice(extra);
        resolved(&v)
    };
    let c = with(&[]);
    assert_eq!(c.harmonize.params.ema_lambda, 0.25);
    let c = with(&["--ema", "0.75", "--refiner-endpoint", "http://flag/"]);
    assert_eq!(c.harmonize.params.ema_lambda, 0.75);
    match c.harmonize.refiner {
        RefinerChoice::Remote(r) => assert_eq!((r.endpoint.as_str(), r.timeout_ms), ("http://flag/", 77)),
        other => panic!("{other:?}"),
    }
    assert_eq!(with(&["--refiner", "passthrough"]).harmonize.refiner, RefinerChoice::Passthrough);

    let c = resolved(&["atlas-edit", "--config", cfg, "--edited", "e.png", "--prompt", "snow", "--out", "o"]);
    assert_eq!(c.atlas.editor, Some(EditSource::File("e.png".into())));
    assert_eq!(c.prompts.background, "snow");

    let c = resolved(&["run", "--config", cfg, "--out", "o", "--cache", "k"]);
    assert_eq!((c.paths.output, c.paths.cache), (Some("o".into()), Some("k".into())));
    assert!(matches!(
        Cli::try_parse_from(["deco", "run"]).unwrap().command,
        Command::Run(_)
    ));
}

#[test]
fn metrics_of_identical_directories_is_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    let fx = ClipFixture::write(&dir.path().join("clip"), 12, 10, 3);
    let frames = fx.frames_dir();
    let frames = frames.to_str().unwrap();
    let flow = fx.root.join("flow.json");
    let json = dir.path().join("report.json");
    let out = deco(&[
        "metrics",
        "--out",
        frames,
        "--ref",
        frames,
        "--flow",
        flow.to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["mean_psnr"], 99.0);
    assert_eq!(report["frame_psnr"].as_array().unwrap().len(), 3);
    assert!(report["warp_error"].as_f64().unwrap() >= 0.0);
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(saved["mean_psnr"], 99.0);
}

#[test]
fn run_with_the_same_seed_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h, n) = (24, 20, 2);
    let fx = ClipFixture::write(&dir.path().join("clip"), w, h, n);
    let mut cfg = base_config(&fx, &dir.path().join("unused"));
    cfg.paths.cache = None;
    cfg.atlas.iters = 30;
    cfg.atlas.size = (w, h);
    cfg.stages.edit_background = true;
    cfg.stages.allow_passthrough = false;
    let edited = dir.path().join("edited.png");
    write_rgb(&edited, &Image::from_fn(w, h, 3, |x, y, c| ((x + 2 * y + c) % 7) as f64 / 6.0), BitDepth::Eight)
        .unwrap();
    cfg.atlas.editor = Some(EditSource::File(edited));
    let cfg_path = write_config(dir.path(), &cfg);

    let run = |name: &str, seed: &str| -> PathBuf {
        let out = dir.path().join(name);
        let res = deco(&["run", "--config", cfg_path.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        let summary: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
        assert_eq!(summary["atlas"], "miss");
        out
    };
    let (a, b) = (run("a", "7"), run("b", "7"));
    for f in 0..n {
        let name = format!("frames/{f:05}.png");
        let (fa, fb) = (std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
        assert!(fa == fb, "frame {f} differs between equal-seed runs");
    }
    assert!(!a.join("partial").exists());
}

#[test]
fn runtime_failures_print_a_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.paths.frames = Some(dir.path().join("missing"));
    cfg.paths.output = Some(dir.path().join("out"));
    cfg.stages.edit_background = false;
    let path = write_config(dir.path(), &cfg);
    let out = deco(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["stage"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("missing"));

    let out = deco(&["compose", "--fg", "nope", "--mask", "nope", "--bg", "nope", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["stage"], "ingest");
    assert_eq!(err["error"]["kind"], "io");

    std::fs::write(&path, "seed = \"x\"").unwrap();
    let out = deco(&["run", "--config", path.to_str().unwrap()]);
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
}
