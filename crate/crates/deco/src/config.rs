//! Pipeline configuration, loaded from TOML.
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! frames = "clip/frames"        # numbered PNG/PPM frames (required by `run`)
//! masks = "clip/masks"          # optional foreground masks, white = human
//! poses = "clip/poses.txt"      # optional; rest pose for every frame when absent
//! template = "body.tpl"         # optional; built-in toy biped when absent
//! output = "out"                # required by `run`
//! references = "clip/expected"  # optional frames for PSNR
//! flow = "clip/flow.json"       # optional backward flow for warp error
//! bg_normals = "clip/normals"   # optional background normals for light fitting
//! cache = "cache"               # optional; see `DECO_CACHE_DIR`
//!
//! [prompts]
//! human = "a person in a red jacket"
//! background = "a snowy street"
//!
//! [stages]
//! edit_human = true
//! edit_background = true
//! harmonize = true
//! allow_passthrough = false     # permit a run with both edits off
//!
//! [atlas]
//! iters = 2000
//! size = [768, 432]
//! editor = { file = "edited_atlas.png" }   # or { remote = { endpoint = "http://..." } }
//! network = { hidden_units = 64 }          # any `AtlasConfig` field
//!
//! [human]
//! levels = 1
//! texture_size = [64, 64]
//! guidance = "zero"             # or { oracle = { params = "gt.bin" } }, { remote = { endpoint = "..." } }
//! resample_poses = false
//! optimizer = { tex_iters = 150 }           # any `OptimizerConfig` field
//!
//! [camera]
//! eye = [0.0, 0.9, 3.0]
//! target = [0.0, 0.9, 0.0]
//! fov_deg = 40.0
//! per_frame = "cameras.json"    # optional list of {eye, target, up, fov_deg}
//!
//! [harmonize]
//! retinex_epsilon = 0.001
//! refiner = "passthrough"       # or "bilateral", { bilateral = {...} }, { remote = {...} }
//! params = { ema_lambda = 0.5 } # any `HarmonizeConfig` field
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use deco_core::atlas::{AtlasConfig, DEFAULT_ATLAS_SIZE};
use deco_core::harmonize::{BilateralSmooth, HarmonizeConfig};
use deco_core::render::Camera;
use deco_core::sds::OptimizerConfig;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::remote::{EditSource, RemoteConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{what} `{path}` does not exist")]
    MissingPath { what: &'static str, path: PathBuf },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub prompts: PromptConfig,
    pub stages: Stages,
    pub atlas: AtlasStage,
    pub human: HumanStage,
    pub camera: CameraConfig,
    pub harmonize: HarmonizeStage,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub frames: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub poses: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub flow: Option<PathBuf>,
    pub bg_normals: Option<PathBuf>,
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub human: String,
    pub background: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub edit_human: bool,
    pub edit_background: bool,
    pub harmonize: bool,
    /// Accept a run with both edit stages off; it reproduces the input.
    pub allow_passthrough: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self {
            edit_human: true,
            edit_background: true,
            harmonize: true,
            allow_passthrough: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtlasStage {
    pub iters: usize,
    /// `(width, height)` of the discretized atlas handed to the editor.
    pub size: (usize, usize),
    pub fps: f64,
    /// Source of the edited atlas; required when the background is edited.
    pub editor: Option<EditSource>,
    /// Trained atlas to load instead of fitting.
    pub checkpoint: Option<PathBuf>,
    pub network: AtlasConfig,
}

impl Default for AtlasStage {
    fn default() -> Self {
        Self {
            iters: 2000,
            size: DEFAULT_ATLAS_SIZE,
            fps: 24.0,
            editor: None,
            checkpoint: None,
            network: AtlasConfig::default(),
        }
    }
}

/// Noise-prediction source for the human optimization.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GuidanceSource {
    /// Predicts zero noise; only the reconstruction terms act.
    #[default]
    Zero,
    /// Renders a known body stored as a parameter checkpoint.
    Oracle { params: PathBuf },
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanStage {
    /// Subdivision levels applied to the template.
    pub levels: usize,
    pub texture_size: (usize, usize),
    /// Optimized parameters to load instead of optimizing.
    pub checkpoint: Option<PathBuf>,
    pub guidance: GuidanceSource,
    /// Resample a pose sequence of different length by nearest index.
    pub resample_poses: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for HumanStage {
    fn default() -> Self {
        Self {
            levels: 0,
            texture_size: (64, 64),
            checkpoint: None,
            guidance: GuidanceSource::Zero,
            resample_poses: false,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Pinhole camera through which the animated body is rendered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraPose {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    pub fov_deg: f64,
}

impl Default for CameraPose {
    fn default() -> Self {
        Self {
            eye: [0.0, 0.9, 3.0],
            target: [0.0, 0.9, 0.0],
            up: [0.0, 1.0, 0.0],
            fov_deg: 40.0,
        }
    }
}

impl CameraPose {
    pub fn camera(&self, width: usize, height: usize) -> Result<Camera, ConfigError> {
        Camera::look_at(
            Vector3::from(self.eye),
            Vector3::from(self.target),
            Vector3::from(self.up),
            self.fov_deg.to_radians(),
            width,
            height,
        )
        .map_err(|e| ConfigError::Invalid(format!("camera: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    pub fov_deg: f64,
    /// JSON list of per-frame poses, overriding the static one.
    pub per_frame: Option<PathBuf>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        let p = CameraPose::default();
        Self {
            eye: p.eye,
            target: p.target,
            up: p.up,
            fov_deg: p.fov_deg,
            per_frame: None,
        }
    }
}

impl CameraConfig {
    pub fn pose(&self) -> CameraPose {
        CameraPose {
            eye: self.eye,
            target: self.target,
            up: self.up,
            fov_deg: self.fov_deg,
        }
    }

    /// One camera per frame at the given resolution.
    pub fn cameras(&self, frames: usize, width: usize, height: usize) -> Result<Vec<Camera>, ConfigError> {
        let poses = match &self.per_frame {
            None => vec![self.pose(); frames],
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.clone(),
                    source,
                })?;
                let poses: Vec<CameraPose> = serde_json::from_str(&text).map_err(|e| ConfigError::Syntax {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                if poses.len() != frames {
                    return Err(ConfigError::Invalid(format!(
                        "{} lists {} cameras for {frames} frames",
                        path.display(),
                        poses.len()
                    )));
                }
                poses
            }
        };
        poses.iter().map(|p| p.camera(width, height)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RefinerChoice {
    #[default]
    Passthrough,
    Bilateral(#[serde(default)] BilateralParams),
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BilateralParams {
    pub radius: usize,
    pub sigma_space: f64,
    pub sigma_range: f64,
}

impl Default for BilateralParams {
    fn default() -> Self {
        let b = BilateralSmooth::default();
        Self {
            radius: b.radius,
            sigma_space: b.sigma_space,
            sigma_range: b.sigma_range,
        }
    }
}

impl From<BilateralParams> for BilateralSmooth {
    fn from(p: BilateralParams) -> Self {
        BilateralSmooth {
            radius: p.radius,
            sigma_space: p.sigma_space,
            sigma_range: p.sigma_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarmonizeStage {
    /// Shading floor of the Retinex split applied to the background.
    pub retinex_epsilon: f64,
    pub refiner: RefinerChoice,
    pub params: HarmonizeConfig,
}

impl Default for HarmonizeStage {
    fn default() -> Self {
        Self {
            retinex_epsilon: 1e-3,
            refiner: RefinerChoice::Passthrough,
            params: HarmonizeConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses a TOML file without validating it.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    /// `path` only labels errors.
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Checks everything `run` needs: stage toggles, sub-configs and that
    /// every referenced input exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = self.stages;
        if !s.edit_human && !s.edit_background && !s.allow_passthrough {
            return Err(ConfigError::Invalid(
                "at least one of stages.edit_human and stages.edit_background must be enabled \
                 (set stages.allow_passthrough to copy the input)"
                    .into(),
            ));
        }
        let p = &self.paths;
        let Some(frames) = &p.frames else {
            return Err(ConfigError::Invalid("paths.frames is required".into()));
        };
        if p.output.is_none() {
            return Err(ConfigError::Invalid("paths.output is required".into()));
        }
        let mut inputs: Vec<(&'static str, &Path)> = vec![("paths.frames", frames)];
        for (what, path) in [
            ("paths.masks", &p.masks),
            ("paths.poses", &p.poses),
            ("paths.template", &p.template),
            ("paths.references", &p.references),
            ("paths.flow", &p.flow),
            ("paths.bg_normals", &p.bg_normals),
            ("atlas.checkpoint", &self.atlas.checkpoint),
            ("human.checkpoint", &self.human.checkpoint),
            ("camera.per_frame", &self.camera.per_frame),
        ] {
            if let Some(path) = path {
                inputs.push((what, path));
            }
        }
        if let GuidanceSource::Oracle { params } = &self.human.guidance {
            inputs.push(("human.guidance.oracle.params", params));
        }
        if let Some(EditSource::File(path)) = &self.atlas.editor {
            inputs.push(("atlas.editor.file", path));
        }
        for (what, path) in inputs {
            if !path.exists() {
                return Err(ConfigError::MissingPath {
                    what,
                    path: path.to_path_buf(),
                });
            }
        }
        if s.edit_background && self.atlas.editor.is_none() {
            return Err(ConfigError::Invalid("stages.edit_background needs atlas.editor".into()));
        }
        let (aw, ah) = self.atlas.size;
        if aw == 0 || ah == 0 {
            return Err(ConfigError::Invalid("atlas.size must be non-zero".into()));
        }
        if !(self.atlas.fps > 0.0) {
            return Err(ConfigError::Invalid("atlas.fps must be positive".into()));
        }
        self.atlas
            .network
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("atlas.network: {e}")))?;
        let (tw, th) = self.human.texture_size;
        if tw == 0 || th == 0 {
            return Err(ConfigError::Invalid("human.texture_size must be non-zero".into()));
        }
        self.human
            .optimizer
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("human.optimizer: {e}")))?;
        self.harmonize
            .params
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("harmonize.params: {e}")))?;
        if !(self.harmonize.retinex_epsilon > 0.0) {
            return Err(ConfigError::Invalid("harmonize.retinex_epsilon must be positive".into()));
        }
        self.camera.pose().camera(1, 1)?;
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Sub-configs with the run seed threaded through.
    pub fn seeded_atlas(&self) -> AtlasConfig {
        AtlasConfig {
            seed: self.seed,
            ..self.atlas.network
        }
    }

    pub fn seeded_optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            seed: self.seed,
            ..self.human.optimizer.clone()
        }
    }
}
