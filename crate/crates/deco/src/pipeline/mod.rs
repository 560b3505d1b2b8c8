//! End-to-end editing run.
//!
//! Stages run in order and hand artifacts over through files:
//!
//! 1. **atlas**: fit (or load) the background atlas; with background
//!    editing on, edit the discretized atlas and propagate it to every
//!    frame. With only the human edited, the atlas reconstruction fills
//!    the region the original person covered.
//! 2. **human**: optimize (or load) body parameters, animate them with the
//!    ingested poses and render each frame through its camera.
//! 3. **compose**: harmonize the rendered body into the background layer,
//!    or composite it as is.
//!
//! A disabled stage passes the original pixels through. Everything is
//! written under `<output>/partial/` and moved into `<output>/` only when
//! the whole run succeeds; a failed run leaves its partial outputs behind.

mod cache;
mod poses;

pub use cache::{ArtifactCache, CacheKey, CacheStatus, CACHE_DIR_ENV};
pub use poses::{ingest_poses, resample_nearest, IngestError};

use std::path::{Path, PathBuf};
use std::time::Instant;

use deco_core::atlas::{train_atlas, AtlasError, AtlasModel, Flow, VideoClip};
use deco_core::body::toy::{toy_biped, ToyBipedConfig};
use deco_core::body::{animate_sequence, BodyError, BodyParams, BodyTemplate, CanonicalRig, Pose};
use deco_core::diffusion::{Conditioning, NoiseSchedule, ZeroPredictor};
use deco_core::harmonize::{
    compose, harmonize_sequence, BilateralSmooth, DecomposeMode, LayerInputs, Passthrough,
    RefineError, ShadingDecomposition, ShadingRefiner,
};
use deco_core::image::{Image, Mask};
use deco_core::metrics::{metrics, MetricsError, MetricsReport};
use deco_core::render::{render, FrameBuffer, RenderError};
use deco_core::sds::{optimize, Guidance, Guides, Prompts, RenderOracle, SdsError};
use nalgebra::Vector3;

use crate::config::{ConfigError, GuidanceSource, PipelineConfig, RefinerChoice};
use crate::io::{
    list_numbered, read_atlas, read_flow, read_frames, read_mask_dir, read_normal_dir, read_params, read_template,
    template_bytes, write_atlas, write_frames, write_mask_dir, write_params, write_rgb, write_telemetry, BitDepth,
    IoError,
};
use crate::remote::{request_atlas_edit, EditorError, RemotePredictor, RemoteRefiner};

/// Pipeline stage, used to tag failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Ingest,
    Atlas,
    AtlasEdit,
    Human,
    Animate,
    Render,
    Harmonize,
    Export,
    Metrics,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Atlas => "atlas",
            Stage::AtlasEdit => "atlas_edit",
            Stage::Human => "human",
            Stage::Animate => "animate",
            Stage::Render => "render",
            Stage::Harmonize => "harmonize",
            Stage::Export => "export",
            Stage::Metrics => "metrics",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Cause {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error(transparent)]
    Edit(#[from] EditorError),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error(transparent)]
    Optimize(#[from] SdsError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Harmonize(#[from] RefineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Input(String),
}

impl Cause {
    /// Stable machine-readable name of the failure class.
    pub fn kind(&self) -> &'static str {
        match self {
            Cause::Config(_) => "config",
            Cause::Io(IoError::Io { .. }) => "io",
            Cause::Io(_) => "format",
            Cause::Ingest(IngestError::Io(IoError::Io { .. })) => "io",
            Cause::Ingest(_) => "format",
            Cause::Atlas(_) => "atlas",
            Cause::Edit(EditorError::Remote(_)) => "remote",
            Cause::Edit(EditorError::Io(_)) => "io",
            Cause::Edit(EditorError::Atlas(_)) => "atlas",
            Cause::Body(_) => "body",
            Cause::Optimize(SdsError::Diffusion(_)) => "remote",
            Cause::Optimize(_) => "optimize",
            Cause::Render(_) => "render",
            Cause::Harmonize(RefineError::Input(_)) => "harmonize",
            Cause::Harmonize(_) => "remote",
            Cause::Metrics(_) => "metrics",
            Cause::Input(_) => "input",
        }
    }
}

/// Failure of one stage.
#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {cause}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub cause: Cause,
}

impl PipelineError {
    pub fn new(stage: Stage, cause: impl Into<Cause>) -> Self {
        Self {
            stage,
            cause: cause.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        self.cause.kind()
    }

    /// `{"error": {"stage", "kind", "message"}}`
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": {
                "stage": self.stage.as_str(),
                "kind": self.kind(),
                "message": self.cause.to_string(),
            }
        })
    }
}

pub(crate) trait StageResult<T> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<Cause>> StageResult<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::new(stage, e))
    }
}

pub(crate) fn input_err(stage: Stage, msg: impl Into<String>) -> PipelineError {
    PipelineError::new(stage, Cause::Input(msg.into()))
}

/// Result of a successful run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub output: PathBuf,
    pub frames_dir: PathBuf,
    pub frames: Vec<Image>,
    pub metrics: MetricsReport,
    pub atlas: CacheStatus,
    pub human: CacheStatus,
}

/// Loaded inputs shared by every stage.
struct Inputs {
    frame_paths: Vec<PathBuf>,
    frames: Vec<Image>,
    depth: BitDepth,
    masks: Option<Vec<Mask>>,
    flow: Option<Vec<Flow>>,
    references: Option<Vec<Image>>,
    bg_normals: Option<Vec<Vec<Vector3<f64>>>>,
}

impl Inputs {
    fn dims(&self) -> (usize, usize) {
        (self.frames[0].width(), self.frames[0].height())
    }
}

struct Timer {
    stages: Vec<(String, f64)>,
    start: Instant,
}

impl Timer {
    fn new() -> Self {
        Self {
            stages: Vec::new(),
            start: Instant::now(),
        }
    }

    fn lap(&mut self, name: &str) {
        self.stages.push((name.to_string(), self.start.elapsed().as_secs_f64()));
        self.start = Instant::now();
    }
}

/// Runs every enabled stage of a validated configuration.
pub fn run(cfg: &PipelineConfig) -> Result<RunOutcome, PipelineError> {
    cfg.validate().stage(Stage::Config)?;
    let output = cfg.paths.output.clone().expect("validated");
    let partial = output.join("partial");
    if partial.exists() {
        std::fs::remove_dir_all(&partial)
            .map_err(|e| IoError::io(&partial, e))
            .stage(Stage::Export)?;
    }
    let cache = ArtifactCache::locate(cfg.paths.cache.as_deref(), &output);
    let mut timer = Timer::new();

    let inputs = ingest(cfg)?;
    timer.lap("ingest");
    let n = inputs.frames.len();
    let (w, h) = inputs.dims();
    log::info!("ingested {n} frames of {w}x{h}");

    let s = cfg.stages;
    let need_atlas = s.edit_background || (s.edit_human && inputs.masks.is_some());
    let (background, atlas_status) = if need_atlas {
        let (model, status) = atlas_stage(cfg, &inputs, &cache, &partial)?;
        let bg = background_layer(cfg, &inputs, &model, &partial)?;
        write_frames(&partial.join("background"), &bg, BitDepth::Sixteen).stage(Stage::AtlasEdit)?;
        timer.lap("atlas");
        (bg, status)
    } else {
        (inputs.frames.clone(), CacheStatus::Skipped)
    };

    let (final_frames, human_status) = if s.edit_human {
        let (params, rig, status) = human_stage(cfg, &cache, &partial)?;
        timer.lap("human");
        let buffers = animate_and_render(cfg, &inputs, &rig, &params, &partial)?;
        timer.lap("render");
        let out = composite(cfg, &inputs, &buffers, &background)?;
        timer.lap("compose");
        (out, status)
    } else {
        (restore_foreground(&inputs, background), CacheStatus::Skipped)
    };

    write_frames(&partial.join("frames"), &final_frames, inputs.depth).stage(Stage::Export)?;
    timer.lap("export");

    let mut report = metrics(&final_frames, inputs.references.as_deref(), inputs.flow.as_deref()).stage(Stage::Metrics)?;
    timer.lap("metrics");
    report.stage_seconds = timer.stages;
    write_metrics(&partial, &report).stage(Stage::Metrics)?;

    promote(&partial, &output).stage(Stage::Export)?;
    let frames_dir = output.join("frames");
    log::info!("wrote {} frames to {}", n, frames_dir.display());
    Ok(RunOutcome {
        output,
        frames_dir,
        frames: final_frames,
        metrics: report,
        atlas: atlas_status,
        human: human_status,
    })
}

fn ingest(cfg: &PipelineConfig) -> Result<Inputs, PipelineError> {
    let st = Stage::Ingest;
    let p = &cfg.paths;
    let dir = p.frames.as_deref().expect("validated");
    let frame_paths = list_numbered(dir).stage(st)?;
    let (frames, depth) = read_frames(dir).stage(st)?;
    if frames.is_empty() {
        return Err(input_err(st, format!("{} holds no frames", dir.display())));
    }
    let (w, h) = (frames[0].width(), frames[0].height());
    if let Some(i) = frames.iter().position(|f| (f.width(), f.height()) != (w, h)) {
        return Err(input_err(st, format!("frame {i} is not {w}x{h}")));
    }
    let n = frames.len();
    let count = |what: &str, actual: usize, expected: usize| {
        if actual == expected {
            Ok(())
        } else {
            Err(PipelineError::new(
                st,
                IngestError::Mismatch {
                    what: what.to_string(),
                    expected,
                    actual,
                },
            ))
        }
    };
    let masks = match &p.masks {
        Some(d) => {
            let m = read_mask_dir(d).stage(st)?;
            count("mask count", m.len(), n)?;
            if m.iter().any(|m| (m.width(), m.height()) != (w, h)) {
                return Err(input_err(st, format!("masks must be {w}x{h}")));
            }
            Some(m)
        }
        None => None,
    };
    let flow = match &p.flow {
        Some(f) => {
            let fl = read_flow(f).stage(st)?;
            count("flow field count", fl.len(), n.saturating_sub(1))?;
            if fl.iter().any(|f| (f.width(), f.height()) != (w, h)) {
                return Err(input_err(st, format!("flow fields must be {w}x{h}")));
            }
            Some(fl)
        }
        None => None,
    };
    let references = match &p.references {
        Some(d) => {
            let r = read_frames(d).stage(st)?.0;
            count("reference count", r.len(), n)?;
            Some(r)
        }
        None => None,
    };
    let bg_normals = match &p.bg_normals {
        Some(d) => {
            let maps = read_normal_dir(d).stage(st)?;
            count("background normal map count", maps.len(), n)?;
            if maps.iter().any(|m| (m.1, m.2) != (w, h)) {
                return Err(input_err(st, format!("background normal maps must be {w}x{h}")));
            }
            Some(maps.into_iter().map(|m| m.0).collect())
        }
        None => None,
    };
    Ok(Inputs {
        frame_paths,
        frames,
        depth,
        masks,
        flow,
        references,
        bg_normals,
    })
}

/// Writes via a temporary sibling so readers never see half a file.
fn store<F: FnOnce(&Path) -> Result<(), IoError>>(path: &Path, write: F) -> Result<(), IoError> {
    let tmp = path.with_extension("tmp");
    write(&tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| IoError::io(path, e))
}

fn atlas_stage(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    cache: &ArtifactCache,
    partial: &Path,
) -> Result<(AtlasModel, CacheStatus), PipelineError> {
    let st = Stage::Atlas;
    let (model, status) = if let Some(ckpt) = &cfg.atlas.checkpoint {
        (read_atlas(ckpt).stage(st)?, CacheStatus::Checkpoint)
    } else {
        let net = cfg.seeded_atlas();
        let mut key = CacheKey::new("atlas");
        key.files(&inputs.frame_paths).stage(st)?;
        if let Some(d) = &cfg.paths.masks {
            key.files(&list_numbered(d).stage(st)?).stage(st)?;
        }
        if let Some(f) = &cfg.paths.flow {
            key.file(f).stage(st)?;
        }
        key.json(&net).json(&cfg.atlas.iters).json(&cfg.atlas.fps);
        let path = cache.path("atlas", &key, "json");
        if path.exists() {
            log::info!("atlas cache hit {}", path.display());
            (read_atlas(&path).stage(st)?, CacheStatus::Hit)
        } else {
            let mut clip = VideoClip::new(inputs.frames.clone(), cfg.atlas.fps).stage(st)?;
            if let Some(m) = &inputs.masks {
                clip = clip.with_masks(m.clone()).stage(st)?;
            }
            if let Some(f) = &inputs.flow {
                clip = clip.with_flow(f.clone()).stage(st)?;
            }
            log::info!("fitting atlas for {} iterations", cfg.atlas.iters);
            let model = train_atlas(&clip, cfg.atlas.iters, &net).stage(st)?;
            store(&path, |p| write_atlas(p, &model)).stage(st)?;
            (model, CacheStatus::Miss)
        }
    };
    let (w, h) = inputs.dims();
    if (model.width(), model.height(), model.frames()) != (w, h, inputs.frames.len()) {
        return Err(input_err(
            st,
            format!(
                "atlas covers {} frames of {}x{}, clip has {} of {w}x{h}",
                model.frames(),
                model.width(),
                model.height(),
                inputs.frames.len()
            ),
        ));
    }
    write_atlas(&partial.join("atlas.json"), &model).stage(st)?;
    Ok((model, status))
}

/// Background layer per frame: the propagated edit, or with background
/// editing off the original frame with the person's region reconstructed.
fn background_layer(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    model: &AtlasModel,
    partial: &Path,
) -> Result<Vec<Image>, PipelineError> {
    let st = Stage::AtlasEdit;
    let n = inputs.frames.len();
    if cfg.stages.edit_background {
        let (aw, ah) = cfg.atlas.size;
        let atlas = model.discretize(aw, ah);
        write_rgb(&partial.join("atlas.png"), &atlas, BitDepth::Sixteen).stage(st)?;
        let editor = cfg.atlas.editor.as_ref().expect("validated");
        let edited = request_atlas_edit(editor, &atlas, &cfg.prompts.background, None, cfg.seed).stage(st)?;
        write_rgb(&partial.join("atlas_edited.png"), &edited, BitDepth::Sixteen).stage(st)?;
        (0..n).map(|f| model.propagate_edit(&edited, f).stage(st)).collect()
    } else {
        let masks = inputs.masks.as_ref().expect("atlas runs for the human edit only with masks");
        (0..n)
            .map(|f| {
                let recon = model.reconstruct(f).stage(st)?;
                let mut out = inputs.frames[f].clone();
                for (i, &m) in masks[f].data().iter().enumerate() {
                    if m {
                        out.pixel_at_mut(i).copy_from_slice(recon.pixel_at(i));
                    }
                }
                Ok(out)
            })
            .collect()
    }
}

/// Loads the template named in the configuration or builds the toy biped.
pub fn load_template(path: Option<&Path>) -> Result<BodyTemplate, Cause> {
    match path {
        Some(p) => Ok(read_template(p)?),
        None => Ok(toy_biped(&ToyBipedConfig::default())?),
    }
}

/// Checks that checkpointed parameters fit the rig.
pub fn check_params(rig: &CanonicalRig, params: &BodyParams) -> Result<(), Cause> {
    let t = rig.template();
    let ok = params.beta.len() == t.shape_dims()
        && params.psi.len() == t.expr_dims()
        && params.theta.len() == t.joint_count()
        && params.displacement.len() == rig.vertex_count()
        && params.texture.channels() == 3;
    if ok {
        Ok(())
    } else {
        Err(Cause::Input(format!(
            "parameters (β {}, ψ {}, θ {}, D {}) do not fit the rig (β {}, ψ {}, θ {}, D {})",
            params.beta.len(),
            params.psi.len(),
            params.theta.len(),
            params.displacement.len(),
            t.shape_dims(),
            t.expr_dims(),
            t.joint_count(),
            rig.vertex_count()
        )))
    }
}

fn human_stage(
    cfg: &PipelineConfig,
    cache: &ArtifactCache,
    partial: &Path,
) -> Result<(BodyParams, CanonicalRig, CacheStatus), PipelineError> {
    let st = Stage::Human;
    let template = load_template(cfg.paths.template.as_deref()).stage(st)?;
    let rig = CanonicalRig::new(template, cfg.human.levels).stage(st)?;
    let (params, status) = if let Some(ckpt) = &cfg.human.checkpoint {
        (read_params(ckpt).stage(st)?, CacheStatus::Checkpoint)
    } else {
        let opt = cfg.seeded_optimizer();
        let mut key = CacheKey::new("human");
        key.bytes(&template_bytes(rig.template()))
            .json(&cfg.human.levels)
            .json(&cfg.human.texture_size)
            .json(&opt)
            .json(&cfg.human.guidance)
            .str(&cfg.prompts.human);
        if let GuidanceSource::Oracle { params } = &cfg.human.guidance {
            key.file(params).stage(st)?;
        }
        let path = cache.path("human", &key, "bin");
        if path.exists() {
            log::info!("human cache hit {}", path.display());
            (read_params(&path).stage(st)?, CacheStatus::Hit)
        } else {
            let schedule = NoiseSchedule::default();
            let guide: Box<dyn Guidance> = match &cfg.human.guidance {
                GuidanceSource::Zero => Box::new(ZeroPredictor),
                GuidanceSource::Oracle { params } => {
                    let gt = read_params(params).stage(st)?;
                    check_params(&rig, &gt).stage(st)?;
                    Box::new(RenderOracle::new(&rig, gt, schedule.clone(), opt.render).stage(st)?)
                }
                GuidanceSource::Remote(r) => Box::new(RemotePredictor::from_env(r.clone())),
            };
            let prompts = Prompts::same(Conditioning::new(cfg.prompts.human.clone()).with_seed(cfg.seed));
            log::info!("optimizing body for {} iterations", opt.tex_iters);
            let out = optimize(
                &rig,
                rig.zero_params(cfg.human.texture_size),
                Guides::shared(guide.as_ref()),
                &prompts,
                &opt,
                &schedule,
            )
            .stage(st)?;
            write_telemetry(&partial.join("telemetry.csv"), &out.log).stage(st)?;
            store(&path, |p| write_params(p, &out.params)).stage(st)?;
            (out.params, CacheStatus::Miss)
        }
    };
    check_params(&rig, &params).stage(st)?;
    write_params(&partial.join("params.bin"), &params).stage(st)?;
    Ok((params, rig, status))
}

fn animate_and_render(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    rig: &CanonicalRig,
    params: &BodyParams,
    partial: &Path,
) -> Result<Vec<FrameBuffer>, PipelineError> {
    let st = Stage::Animate;
    let n = inputs.frames.len();
    let joints = rig.template().joint_count();
    let poses: Vec<Pose> = match &cfg.paths.poses {
        Some(p) => ingest_poses(p, joints, Some(n), cfg.human.resample_poses).stage(st)?.poses,
        None => vec![Pose::rest(joints); n],
    };
    let canonical = rig.build(params).stage(st)?;
    let joint_pos = rig.joints(&params.beta).stage(st)?;
    let meshes = animate_sequence(&canonical, &joint_pos, &rig.template().parents, &poses).stage(st)?;

    let st = Stage::Render;
    let (w, h) = inputs.dims();
    let cameras = cfg.camera.cameras(n, w, h).stage(st)?;
    let buffers = meshes
        .iter()
        .zip(&cameras)
        .map(|(m, c)| render(m, &params.texture, c, &cfg.human.optimizer.render).stage(st))
        .collect::<Result<Vec<_>, _>>()?;
    let rgb: Vec<Image> = buffers.iter().map(|b| b.rgb.clone()).collect();
    write_frames(&partial.join("foreground"), &rgb, BitDepth::Sixteen).stage(st)?;
    write_mask_dir(&partial.join("foreground_masks"), &buffers.iter().map(coverage_mask).collect::<Vec<_>>())
        .stage(st)?;
    Ok(buffers)
}

pub fn coverage_mask(fb: &FrameBuffer) -> Mask {
    Mask::from_vec(fb.width, fb.height, fb.coverage.clone()).expect("coverage matches the buffer")
}

/// Builds the configured shading refiner.
pub fn build_refiner(choice: &RefinerChoice) -> Box<dyn ShadingRefiner> {
    match choice {
        RefinerChoice::Passthrough => Box::new(Passthrough),
        RefinerChoice::Bilateral(p) => Box::new(BilateralSmooth::from(*p)),
        RefinerChoice::Remote(r) => Box::new(RemoteRefiner::from_env(r.clone())),
    }
}

fn composite(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    buffers: &[FrameBuffer],
    background: &[Image],
) -> Result<Vec<Image>, PipelineError> {
    let st = Stage::Harmonize;
    let (w, h) = inputs.dims();
    let ones = Image::filled(w, h, 1, 1.0);
    let masks: Vec<Mask> = buffers.iter().map(coverage_mask).collect();
    if !cfg.stages.harmonize {
        return buffers
            .iter()
            .zip(&masks)
            .zip(background)
            .map(|((b, m), bg)| compose(&b.rgb, &ones, bg, m).map_err(RefineError::from).stage(st))
            .collect();
    }
    let fg_modes = buffers
        .iter()
        .map(|b| {
            ShadingDecomposition::new(b.rgb.clone(), ones.clone())
                .map(DecomposeMode::GroundTruth)
                .map_err(RefineError::from)
                .stage(st)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let bg_mode = DecomposeMode::Retinex {
        epsilon: cfg.harmonize.retinex_epsilon,
    };
    let layers: Vec<LayerInputs<'_>> = (0..buffers.len())
        .map(|f| LayerInputs {
            foreground: &buffers[f].rgb,
            fg_mode: &fg_modes[f],
            fg_mask: &masks[f],
            fg_normals: &buffers[f].normal,
            fg_depth: &buffers[f].depth,
            background: &background[f],
            bg_mode: &bg_mode,
            bg_normals: inputs.bg_normals.as_ref().map(|n| n[f].as_slice()),
        })
        .collect();
    let refiner = build_refiner(&cfg.harmonize.refiner);
    let (frames, estimates) = harmonize_sequence(&layers, &cfg.harmonize.params, refiner.as_ref()).stage(st)?;
    log::debug!("harmonization estimates: {estimates:?}");
    Ok(frames)
}

/// Puts the original pixels back inside the foreground masks.
fn restore_foreground(inputs: &Inputs, mut background: Vec<Image>) -> Vec<Image> {
    if let Some(masks) = &inputs.masks {
        for ((bg, orig), mask) in background.iter_mut().zip(&inputs.frames).zip(masks) {
            for (i, &m) in mask.data().iter().enumerate() {
                if m {
                    bg.pixel_at_mut(i).copy_from_slice(orig.pixel_at(i));
                }
            }
        }
    }
    background
}

/// `metrics.json` with the full report and `metrics.csv` with one row per frame.
pub fn write_metrics(dir: &Path, report: &MetricsReport) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let json = dir.join("metrics.json");
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(&json, text).map_err(|e| IoError::io(&json, e))?;
    let csv_path = dir.join("metrics.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| IoError::format(&csv_path, e))?;
    w.write_record(["frame", "psnr_db"]).map_err(|e| IoError::format(&csv_path, e))?;
    for (i, p) in report.frame_psnr.iter().enumerate() {
        w.write_record([i.to_string(), format!("{p}")])
            .map_err(|e| IoError::format(&csv_path, e))?;
    }
    w.flush().map_err(|e| IoError::io(&csv_path, e))
}

/// Moves every entry of `partial` into `output`, replacing older ones.
fn promote(partial: &Path, output: &Path) -> Result<(), IoError> {
    let entries = std::fs::read_dir(partial).map_err(|e| IoError::io(partial, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| IoError::io(partial, e))?;
        let target = output.join(entry.file_name());
        if target.is_dir() {
            std::fs::remove_dir_all(&target).map_err(|e| IoError::io(&target, e))?;
        } else if target.exists() {
            std::fs::remove_file(&target).map_err(|e| IoError::io(&target, e))?;
        }
        std::fs::rename(entry.path(), &target).map_err(|e| IoError::io(&target, e))?;
    }
    std::fs::remove_dir(partial).map_err(|e| IoError::io(partial, e))
}
