//! Command-line front end.
//!
//! Every subcommand reads an optional `--config` pipeline file and then
//! overlays its explicit flags onto it, so a flag beats the file and the
//! file beats the built-in default. `--seed` reaches every seeded stage.
//!
//! Failures print `{"error": {"stage", "kind", "message"}}` on stderr and
//! exit with status 1; usage errors print the synopsis and exit with 2.
//!
//! Environment: `DECO_LOG` (falling back to `RUST_LOG`) sets the log
//! filter, `DECO_CACHE_DIR` the artifact cache, and `DECO_PREDICTOR_URL`,
//! `DECO_EDITOR_URL`, `DECO_REFINER_URL` override remote endpoints.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deco_core::atlas::{train_atlas, VideoClip};
use deco_core::body::{animate_sequence, CanonicalRig};
use deco_core::diffusion::{Conditioning, NoiseSchedule, ZeroPredictor};
use deco_core::harmonize::{compose, harmonize_sequence, DecomposeMode, LayerInputs, RefineError, ShadingDecomposition};
use deco_core::image::{Image, Mask};
use deco_core::metrics::metrics;
use deco_core::render::render;
use deco_core::sds::{optimize, Guidance, Guides, Prompts, ReconPreset, RenderOracle};
use nalgebra::Vector3;

use crate::config::{BilateralParams, GuidanceSource, PipelineConfig, RefinerChoice};
use crate::io::{
    frame_name, list_numbered, read_atlas, read_depth, read_flow, read_frames, read_mask_dir, read_normal_dir,
    read_params, write_atlas, write_frames, write_obj, write_params, write_rgb, write_telemetry, BitDepth, IoError,
    DEFAULT_DEPTH_NEAR,
};
use crate::pipeline::{
    self, build_refiner, check_params, coverage_mask, ingest_poses, load_template, write_metrics, Cause,
    PipelineError, Stage,
};
use crate::remote::{request_atlas_edit, EditSource, RemoteConfig, RemotePredictor};

/// Log filter variable; `RUST_LOG` is used when it is unset.
pub const LOG_ENV: &str = "DECO_LOG";

#[derive(Debug, Parser)]
#[command(name = "deco", version, about = "Decoupled human and background video editing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a layered background atlas to a frame directory.
    AtlasFit(AtlasFitArgs),
    /// Edit a fitted atlas and propagate the edit to every frame.
    AtlasEdit(AtlasEditArgs),
    /// Optimize body shape, displacement and texture under guidance.
    HumanOptimize(HumanOptimizeArgs),
    /// Pose an optimized body per frame and export meshes (and renders).
    Animate(AnimateArgs),
    /// Relight a foreground layer into a background and composite.
    Harmonize(HarmonizeArgs),
    /// Composite a foreground over a background through masks.
    Compose(ComposeArgs),
    /// Run the whole pipeline from a configuration file.
    Run(RunArgs),
    /// PSNR against references and flow-warp error of a frame directory.
    Metrics(MetricsArgs),
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Pipeline configuration (TOML); explicit flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic stage [config: seed].
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let w = w.trim().parse().map_err(|_| format!("bad width `{w}`"))?;
    let h = h.trim().parse().map_err(|_| format!("bad height `{h}`"))?;
    Ok((w, h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum DepthArg {
    #[value(name = "8")]
    Eight,
    #[default]
    #[value(name = "16")]
    Sixteen,
}

impl From<DepthArg> for BitDepth {
    fn from(d: DepthArg) -> Self {
        match d {
            DepthArg::Eight => BitDepth::Eight,
            DepthArg::Sixteen => BitDepth::Sixteen,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AtlasFitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory of numbered frames [config: paths.frames].
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Directory of foreground masks, white = excluded [config: paths.masks].
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Backward optical flow (JSON) enabling the flow-consistency term [config: paths.flow].
    #[arg(long)]
    pub flow: Option<PathBuf>,
    /// Training iterations [config: atlas.iters].
    #[arg(long)]
    pub iters: Option<usize>,
    /// Clip frame rate [config: atlas.fps].
    #[arg(long)]
    pub fps: Option<f64>,
    /// Size of the discretized atlas image [config: atlas.size].
    #[arg(long, value_parser = parse_size, value_name = "WxH")]
    pub atlas_size: Option<(usize, usize)>,
    /// Output atlas model (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the discretized atlas image.
    #[arg(long)]
    pub atlas_png: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AtlasEditArgs {
    #[command(flatten)]
    pub common: Common,
    /// Fitted atlas model (JSON) [config: atlas.checkpoint].
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Pre-edited atlas image [config: atlas.editor.file].
    #[arg(long, conflicts_with = "endpoint")]
    pub edited: Option<PathBuf>,
    /// Remote editor URL [config: atlas.editor.remote.endpoint].
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Edit prompt [config: prompts.background].
    #[arg(long)]
    pub prompt: Option<String>,
    /// Size of the atlas image sent to the editor [config: atlas.size].
    #[arg(long, value_parser = parse_size, value_name = "WxH")]
    pub atlas_size: Option<(usize, usize)>,
    /// Output directory for propagated frames and atlas images.
    #[arg(long)]
    pub out: PathBuf,
    /// Bit depth of the written frames.
    #[arg(long, value_enum, default_value = "16")]
    pub bit_depth: DepthArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Default,
    Light,
}

#[derive(Debug, Clone, Args)]
pub struct HumanOptimizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Body template (binary or .json); toy biped when absent [config: paths.template].
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Subdivision levels [config: human.levels].
    #[arg(long)]
    pub levels: Option<usize>,
    /// Texture resolution [config: human.texture_size].
    #[arg(long, value_parser = parse_size, value_name = "WxH")]
    pub texture_size: Option<(usize, usize)>,
    /// Guide with an oracle rendering these parameters [config: human.guidance.oracle].
    #[arg(long, conflicts_with = "endpoint")]
    pub oracle: Option<PathBuf>,
    /// Remote noise predictor URL [config: human.guidance.remote].
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Body prompt [config: prompts.human].
    #[arg(long)]
    pub prompt: Option<String>,
    /// Total iterations [config: human.optimizer.tex_iters].
    #[arg(long)]
    pub iters: Option<usize>,
    /// Iterations that update geometry [config: human.optimizer.geo_freeze_iter].
    #[arg(long)]
    pub geo_iters: Option<usize>,
    /// Reconstruction-weight preset for both λ_n and λ_r.
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// Normal reconstruction weight [config: human.optimizer.lambda_n].
    #[arg(long)]
    pub lambda_n: Option<f64>,
    /// RGB reconstruction weight [config: human.optimizer.lambda_r].
    #[arg(long)]
    pub lambda_r: Option<f64>,
    /// Output parameter checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-iteration gradient telemetry (CSV).
    #[arg(long)]
    pub telemetry: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AnimateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Body template [config: paths.template].
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Subdivision levels the parameters were optimized at [config: human.levels].
    #[arg(long)]
    pub levels: Option<usize>,
    /// Parameter checkpoint [config: human.checkpoint].
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Pose sequence [config: paths.poses].
    #[arg(long)]
    pub poses: Option<PathBuf>,
    /// Output directory for per-frame OBJ meshes.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also render each frame at this size through the configured camera.
    #[arg(long, value_parser = parse_size, value_name = "WxH")]
    pub render_size: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RefinerArg {
    Passthrough,
    Bilateral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum FgModeArg {
    /// The rendered colors are the albedo; shading is one.
    #[default]
    GroundTruth,
    Retinex,
}

#[derive(Debug, Clone, Args)]
pub struct HarmonizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Rendered foreground frames.
    #[arg(long)]
    pub fg: PathBuf,
    /// Foreground masks.
    #[arg(long)]
    pub fg_mask: PathBuf,
    /// Foreground normal maps, `(n + 1) / 2` encoded.
    #[arg(long)]
    pub fg_normals: PathBuf,
    /// Foreground inverse-depth maps; unit depth inside the mask when absent.
    #[arg(long)]
    pub fg_depth: Option<PathBuf>,
    /// Background frames.
    #[arg(long)]
    pub bg: PathBuf,
    /// Background normal maps for the light fit [config: paths.bg_normals].
    #[arg(long)]
    pub bg_normals: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Temporal EMA weight [config: harmonize.params.ema_lambda].
    #[arg(long)]
    pub ema: Option<f64>,
    /// Local shading refiner [config: harmonize.refiner].
    #[arg(long, value_enum, conflicts_with = "refiner_endpoint")]
    pub refiner: Option<RefinerArg>,
    /// Remote shading refiner URL [config: harmonize.refiner.remote].
    #[arg(long)]
    pub refiner_endpoint: Option<String>,
    /// Keep the foreground albedo unchanged [config: harmonize.params.adjust_albedo].
    #[arg(long)]
    pub no_albedo: bool,
    /// Shading floor of the background Retinex split [config: harmonize.retinex_epsilon].
    #[arg(long)]
    pub retinex_epsilon: Option<f64>,
    /// How the foreground splits into albedo and shading.
    #[arg(long, value_enum, default_value = "ground-truth")]
    pub fg_mode: FgModeArg,
}

#[derive(Debug, Clone, Args)]
pub struct ComposeArgs {
    /// Foreground frames.
    #[arg(long)]
    pub fg: PathBuf,
    /// Foreground masks.
    #[arg(long)]
    pub mask: PathBuf,
    /// Background frames.
    #[arg(long)]
    pub bg: PathBuf,
    /// Output directory; frames keep the background's bit depth.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    /// Input frames [config: paths.frames].
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Output directory [config: paths.output].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Artifact cache directory [config: paths.cache].
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    /// Frames to score.
    #[arg(long)]
    pub out: PathBuf,
    /// Reference frames.
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    /// Backward optical flow (JSON) for the warp error.
    #[arg(long)]
    pub flow: Option<PathBuf>,
    /// Also write the report to this JSON file.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn base_config(common: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| PipelineError::new(Stage::Config, e))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn set<T: Clone>(slot: &mut T, flag: &Option<T>) {
    if let Some(v) = flag {
        *slot = v.clone();
    }
}

fn set_opt<T: Clone>(slot: &mut Option<T>, flag: &Option<T>) {
    if flag.is_some() {
        *slot = flag.clone();
    }
}

/// Keeps remote settings from the file when only the URL is overridden.
fn remote_with(existing: Option<&RemoteConfig>, url: &str) -> RemoteConfig {
    RemoteConfig {
        endpoint: url.to_string(),
        ..existing.cloned().unwrap_or_default()
    }
}

impl Command {
    /// The configuration this command runs with: file, then flags.
    pub fn resolved_config(&self) -> Result<PipelineConfig, PipelineError> {
        match self {
            Command::AtlasFit(a) => {
                let mut c = base_config(&a.common)?;
                set_opt(&mut c.paths.frames, &a.frames);
                set_opt(&mut c.paths.masks, &a.masks);
                set_opt(&mut c.paths.flow, &a.flow);
                set(&mut c.atlas.iters, &a.iters);
                set(&mut c.atlas.fps, &a.fps);
                set(&mut c.atlas.size, &a.atlas_size);
                Ok(c)
            }
            Command::AtlasEdit(a) => {
                let mut c = base_config(&a.common)?;
                set_opt(&mut c.atlas.checkpoint, &a.model);
                if let Some(p) = &a.edited {
                    c.atlas.editor = Some(EditSource::File(p.clone()));
                }
                if let Some(url) = &a.endpoint {
                    let old = match &c.atlas.editor {
                        Some(EditSource::Remote(r)) => Some(r),
                        _ => None,
                    };
                    c.atlas.editor = Some(EditSource::Remote(remote_with(old, url)));
                }
                set(&mut c.prompts.background, &a.prompt);
                set(&mut c.atlas.size, &a.atlas_size);
                Ok(c)
            }
            Command::HumanOptimize(a) => {
                let mut c = base_config(&a.common)?;
                set_opt(&mut c.paths.template, &a.template);
                set(&mut c.human.levels, &a.levels);
                set(&mut c.human.texture_size, &a.texture_size);
                if let Some(p) = &a.oracle {
                    c.human.guidance = GuidanceSource::Oracle { params: p.clone() };
                }
                if let Some(url) = &a.endpoint {
                    let old = match &c.human.guidance {
                        GuidanceSource::Remote(r) => Some(r),
                        _ => None,
                    };
                    c.human.guidance = GuidanceSource::Remote(remote_with(old, url));
                }
                set(&mut c.prompts.human, &a.prompt);
                let o = &mut c.human.optimizer;
                set(&mut o.tex_iters, &a.iters);
                set(&mut o.geo_freeze_iter, &a.geo_iters);
                if let Some(p) = a.preset {
                    let w = match p {
                        PresetArg::Default => ReconPreset::Default,
                        PresetArg::Light => ReconPreset::Light,
                    }
                    .weight();
                    o.lambda_n = w;
                    o.lambda_r = w;
                }
                set(&mut o.lambda_n, &a.lambda_n);
                set(&mut o.lambda_r, &a.lambda_r);
                Ok(c)
            }
            Command::Animate(a) => {
                let mut c = base_config(&a.common)?;
                set_opt(&mut c.paths.template, &a.template);
                set(&mut c.human.levels, &a.levels);
                set_opt(&mut c.human.checkpoint, &a.params);
                set_opt(&mut c.paths.poses, &a.poses);
                Ok(c)
            }
            Command::Harmonize(a) => {
                let mut c = base_config(&a.common)?;
                set_opt(&mut c.paths.bg_normals, &a.bg_normals);
                set(&mut c.harmonize.params.ema_lambda, &a.ema);
                match a.refiner {
                    Some(RefinerArg::Passthrough) => c.harmonize.refiner = RefinerChoice::Passthrough,
                    Some(RefinerArg::Bilateral) => {
                        if !matches!(c.harmonize.refiner, RefinerChoice::Bilateral(_)) {
                            c.harmonize.refiner = RefinerChoice::Bilateral(BilateralParams::default());
                        }
                    }
                    None => {}
                }
                if let Some(url) = &a.refiner_endpoint {
                    let old = match &c.harmonize.refiner {
                        RefinerChoice::Remote(r) => Some(r),
                        _ => None,
                    };
                    c.harmonize.refiner = RefinerChoice::Remote(remote_with(old, url));
                }
                if a.no_albedo {
                    c.harmonize.params.adjust_albedo = false;
                }
                set(&mut c.harmonize.retinex_epsilon, &a.retinex_epsilon);
                Ok(c)
            }
            Command::Compose(_) | Command::Metrics(_) => Ok(PipelineConfig::default()),
            Command::Run(a) => {
                let mut c = base_config(&a.common)?;
                set_opt(&mut c.paths.frames, &a.frames);
                set_opt(&mut c.paths.output, &a.out);
                set_opt(&mut c.paths.cache, &a.cache);
                Ok(c)
            }
        }
    }
}

fn err(stage: Stage, cause: impl Into<Cause>) -> PipelineError {
    PipelineError::new(stage, cause)
}

fn required<'a, T>(value: &'a Option<T>, what: &str) -> Result<&'a T, PipelineError> {
    value
        .as_ref()
        .ok_or_else(|| err(Stage::Config, Cause::Input(format!("{what} is required (flag or config)"))))
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON value serializes"));
}

/// Executes a parsed command.
pub fn dispatch(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = cli.command.resolved_config()?;
    match &cli.command {
        Command::AtlasFit(a) => atlas_fit(a, &cfg),
        Command::AtlasEdit(a) => atlas_edit(a, &cfg),
        Command::HumanOptimize(a) => human_optimize(a, &cfg),
        Command::Animate(a) => animate(a, &cfg),
        Command::Harmonize(a) => harmonize(a, &cfg),
        Command::Compose(a) => compose_cmd(a),
        Command::Run(_) => {
            let out = pipeline::run(&cfg)?;
            print_json(&serde_json::json!({
                "frames": out.frames_dir,
                "atlas": out.atlas,
                "human": out.human,
                "metrics": out.metrics,
            }));
            Ok(())
        }
        Command::Metrics(a) => metrics_cmd(a),
    }
}

fn atlas_fit(a: &AtlasFitArgs, cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let st = Stage::Atlas;
    let dir = required(&cfg.paths.frames, "--frames")?;
    let (frames, _) = read_frames(dir).map_err(|e| err(Stage::Ingest, e))?;
    let mut clip = VideoClip::new(frames, cfg.atlas.fps).map_err(|e| err(Stage::Ingest, e))?;
    if let Some(m) = &cfg.paths.masks {
        let masks = read_mask_dir(m).map_err(|e| err(Stage::Ingest, e))?;
        clip = clip.with_masks(masks).map_err(|e| err(Stage::Ingest, e))?;
    }
    if let Some(f) = &cfg.paths.flow {
        let flow = read_flow(f).map_err(|e| err(Stage::Ingest, e))?;
        clip = clip.with_flow(flow).map_err(|e| err(Stage::Ingest, e))?;
    }
    let model = train_atlas(&clip, cfg.atlas.iters, &cfg.seeded_atlas()).map_err(|e| err(st, e))?;
    write_atlas(&a.out, &model).map_err(|e| err(Stage::Export, e))?;
    if let Some(png) = &a.atlas_png {
        let (w, h) = cfg.atlas.size;
        write_rgb(png, &model.discretize(w, h), BitDepth::Sixteen).map_err(|e| err(Stage::Export, e))?;
    }
    let last = model.loss_history().last().map(|l| l.1);
    print_json(&serde_json::json!({ "atlas": a.out, "final_loss": last }));
    Ok(())
}

fn atlas_edit(a: &AtlasEditArgs, cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let st = Stage::AtlasEdit;
    let model = read_atlas(required(&cfg.atlas.checkpoint, "--model")?).map_err(|e| err(Stage::Atlas, e))?;
    let editor = required(&cfg.atlas.editor, "--edited or --endpoint")?;
    let (w, h) = cfg.atlas.size;
    let atlas = model.discretize(w, h);
    let edited = request_atlas_edit(editor, &atlas, &cfg.prompts.background, None, cfg.seed).map_err(|e| err(st, e))?;
    let frames = (0..model.frames())
        .map(|f| model.propagate_edit(&edited, f))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| err(st, e))?;
    let ex = |e: IoError| err(Stage::Export, e);
    write_rgb(&a.out.join("atlas.png"), &atlas, BitDepth::Sixteen).map_err(ex)?;
    write_rgb(&a.out.join("atlas_edited.png"), &edited, BitDepth::Sixteen).map_err(ex)?;
    write_frames(&a.out.join("frames"), &frames, a.bit_depth.into()).map_err(ex)?;
    print_json(&serde_json::json!({ "frames": a.out.join("frames"), "count": frames.len() }));
    Ok(())
}

fn human_optimize(a: &HumanOptimizeArgs, cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let st = Stage::Human;
    let template = load_template(cfg.paths.template.as_deref()).map_err(|e| err(st, e))?;
    let rig = CanonicalRig::new(template, cfg.human.levels).map_err(|e| err(st, e))?;
    let opt = cfg.seeded_optimizer();
    let schedule = NoiseSchedule::default();
    let guide: Box<dyn Guidance> = match &cfg.human.guidance {
        GuidanceSource::Zero => Box::new(ZeroPredictor),
        GuidanceSource::Oracle { params } => {
            let gt = read_params(params).map_err(|e| err(st, e))?;
            check_params(&rig, &gt).map_err(|e| err(st, e))?;
            Box::new(RenderOracle::new(&rig, gt, schedule.clone(), opt.render).map_err(|e| err(st, e))?)
        }
        GuidanceSource::Remote(r) => Box::new(RemotePredictor::from_env(r.clone())),
    };
    let prompts = Prompts::same(Conditioning::new(cfg.prompts.human.clone()).with_seed(cfg.seed));
    let out = optimize(
        &rig,
        rig.zero_params(cfg.human.texture_size),
        Guides::shared(guide.as_ref()),
        &prompts,
        &opt,
        &schedule,
    )
    .map_err(|e| err(st, e))?;
    write_params(&a.out, &out.params).map_err(|e| err(Stage::Export, e))?;
    if let Some(t) = &a.telemetry {
        write_telemetry(t, &out.log).map_err(|e| err(Stage::Export, e))?;
    }
    print_json(&serde_json::json!({
        "params": a.out,
        "geo_updates": out.geo_updates,
        "tex_updates": out.tex_updates,
        "skipped_steps": out.skipped_steps,
    }));
    Ok(())
}

fn animate(a: &AnimateArgs, cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let st = Stage::Animate;
    let template = load_template(cfg.paths.template.as_deref()).map_err(|e| err(st, e))?;
    let rig = CanonicalRig::new(template, cfg.human.levels).map_err(|e| err(st, e))?;
    let params = read_params(required(&cfg.human.checkpoint, "--params")?).map_err(|e| err(st, e))?;
    check_params(&rig, &params).map_err(|e| err(st, e))?;
    let joints = rig.template().joint_count();
    let poses = ingest_poses(required(&cfg.paths.poses, "--poses")?, joints, None, false).map_err(|e| err(st, e))?;
    let canonical = rig.build(&params).map_err(|e| err(st, e))?;
    let joint_pos = rig.joints(&params.beta).map_err(|e| err(st, e))?;
    let meshes =
        animate_sequence(&canonical, &joint_pos, &rig.template().parents, &poses.poses).map_err(|e| err(st, e))?;
    for (i, m) in meshes.iter().enumerate() {
        let path = a.out_dir.join(Path::new(&frame_name(i)).with_extension("obj"));
        write_obj(&path, m).map_err(|e| err(Stage::Export, e))?;
    }
    if let Some((w, h)) = a.render_size {
        let cams = cfg.camera.cameras(meshes.len(), w, h).map_err(|e| err(Stage::Render, e))?;
        let mut rgb = Vec::with_capacity(meshes.len());
        let mut masks = Vec::with_capacity(meshes.len());
        for (m, c) in meshes.iter().zip(&cams) {
            let fb = render(m, &params.texture, c, &cfg.human.optimizer.render).map_err(|e| err(Stage::Render, e))?;
            masks.push(coverage_mask(&fb));
            rgb.push(fb.rgb);
        }
        let ex = |e: IoError| err(Stage::Export, e);
        write_frames(&a.out_dir.join("frames"), &rgb, BitDepth::Sixteen).map_err(ex)?;
        crate::io::write_mask_dir(&a.out_dir.join("masks"), &masks).map_err(ex)?;
    }
    print_json(&serde_json::json!({ "meshes": meshes.len(), "out_dir": a.out_dir }));
    Ok(())
}

fn read_depth_dir(dir: &Path) -> Result<Vec<(Vec<f64>, usize, usize)>, IoError> {
    list_numbered(dir)?
        .iter()
        .map(|p| read_depth(p, DEFAULT_DEPTH_NEAR))
        .collect()
}

fn harmonize(a: &HarmonizeArgs, cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let ing = |e: IoError| err(Stage::Ingest, e);
    let (fg, _) = read_frames(&a.fg).map_err(ing)?;
    let masks = read_mask_dir(&a.fg_mask).map_err(ing)?;
    let normals = read_normal_dir(&a.fg_normals).map_err(ing)?;
    let (bg, depth) = read_frames(&a.bg).map_err(ing)?;
    let bg_normals: Option<Vec<Vec<Vector3<f64>>>> = match &cfg.paths.bg_normals {
        Some(d) => Some(read_normal_dir(d).map_err(ing)?.into_iter().map(|n| n.0).collect()),
        None => None,
    };
    let n = fg.len();
    let counts = [masks.len(), normals.len(), bg.len()];
    if counts.iter().any(|&c| c != n) || bg_normals.as_ref().is_some_and(|b| b.len() != n) {
        return Err(err(Stage::Ingest, Cause::Input("layer directories hold different frame counts".into())));
    }
    let depths: Vec<Vec<f64>> = match &a.fg_depth {
        Some(d) => read_depth_dir(d).map_err(ing)?.into_iter().map(|d| d.0).collect(),
        None => masks
            .iter()
            .map(|m| m.data().iter().map(|&c| if c { 1.0 } else { f64::INFINITY }).collect())
            .collect(),
    };
    if depths.len() != n {
        return Err(err(Stage::Ingest, Cause::Input("depth map count differs from frame count".into())));
    }
    let st = Stage::Harmonize;
    let fg_modes = fg
        .iter()
        .map(|f| match a.fg_mode {
            FgModeArg::GroundTruth => {
                ShadingDecomposition::new(f.clone(), Image::filled(f.width(), f.height(), 1, 1.0))
                    .map(DecomposeMode::GroundTruth)
                    .map_err(|e| err(st, RefineError::from(e)))
            }
            FgModeArg::Retinex => Ok(DecomposeMode::Retinex {
                epsilon: cfg.harmonize.retinex_epsilon,
            }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let bg_mode = DecomposeMode::Retinex {
        epsilon: cfg.harmonize.retinex_epsilon,
    };
    let layers: Vec<LayerInputs<'_>> = (0..n)
        .map(|f| LayerInputs {
            foreground: &fg[f],
            fg_mode: &fg_modes[f],
            fg_mask: &masks[f],
            fg_normals: &normals[f].0,
            fg_depth: &depths[f],
            background: &bg[f],
            bg_mode: &bg_mode,
            bg_normals: bg_normals.as_ref().map(|b| b[f].as_slice()),
        })
        .collect();
    let refiner = build_refiner(&cfg.harmonize.refiner);
    let (frames, estimates) =
        harmonize_sequence(&layers, &cfg.harmonize.params, refiner.as_ref()).map_err(|e| err(st, e))?;
    write_frames(&a.out, &frames, depth).map_err(|e| err(Stage::Export, e))?;
    print_json(&serde_json::json!({ "frames": a.out, "estimates": estimates }));
    Ok(())
}

fn compose_cmd(a: &ComposeArgs) -> Result<(), PipelineError> {
    let ing = |e: IoError| err(Stage::Ingest, e);
    let (fg, _) = read_frames(&a.fg).map_err(ing)?;
    let masks: Vec<Mask> = read_mask_dir(&a.mask).map_err(ing)?;
    let (bg, depth) = read_frames(&a.bg).map_err(ing)?;
    if fg.len() != bg.len() || masks.len() != bg.len() {
        return Err(err(Stage::Ingest, Cause::Input("layer directories hold different frame counts".into())));
    }
    let frames = fg
        .iter()
        .zip(&masks)
        .zip(&bg)
        .map(|((f, m), b)| {
            compose(f, &Image::filled(b.width(), b.height(), 1, 1.0), b, m)
                .map_err(|e| err(Stage::Harmonize, RefineError::from(e)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    write_frames(&a.out, &frames, depth).map_err(|e| err(Stage::Export, e))?;
    print_json(&serde_json::json!({ "frames": a.out, "count": frames.len() }));
    Ok(())
}

fn metrics_cmd(a: &MetricsArgs) -> Result<(), PipelineError> {
    let ing = |e: IoError| err(Stage::Ingest, e);
    let (out, _) = read_frames(&a.out).map_err(ing)?;
    let refs = match &a.reference {
        Some(d) => Some(read_frames(d).map_err(ing)?.0),
        None => None,
    };
    if refs.as_ref().is_some_and(|r| r.len() != out.len()) {
        return Err(err(Stage::Ingest, Cause::Input("reference count differs from frame count".into())));
    }
    let flow = match &a.flow {
        Some(f) => Some(read_flow(f).map_err(ing)?),
        None => None,
    };
    let report = metrics(&out, refs.as_deref(), flow.as_deref()).map_err(|e| err(Stage::Metrics, e))?;
    if let Some(path) = &a.json {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        write_metrics(dir, &report).map_err(|e| err(Stage::Export, e))?;
        if path.file_name() != Some("metrics.json".as_ref()) {
            std::fs::rename(dir.join("metrics.json"), path).map_err(|e| err(Stage::Export, IoError::io(path, e)))?;
        }
    }
    print_json(&serde_json::to_value(&report).expect("report serializes"));
    Ok(())
}

fn init_logging() {
    let filter = std::env::var(LOG_ENV)
        .or_else(|_| std::env::var("RUST_LOG"))
        .unwrap_or_else(|_| "warn".into());
    let _ = env_logger::Builder::new().parse_filters(&filter).try_init();
}

/// Parses `args` (program name first), runs the command and maps the
/// outcome to an exit status.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}
