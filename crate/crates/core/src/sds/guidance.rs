use alloc::format;

use crate::body::{BodyParams, CanonicalRig, Mesh};
use crate::diffusion::{
    oracle_noise, Conditioning, LatentCodec, LatentGrid, NoisePredictor, NoiseSchedule, PredictorError,
};
use crate::render::{render, Camera, RenderOptions};

/// Which rendered quantity a guidance call scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Branch {
    /// Encoded normal map.
    Normal,
    /// Textured RGB render.
    Rgb,
}

/// Render context of a guidance call.
#[derive(Debug, Clone, Copy)]
pub struct ViewContext<'a> {
    pub camera: &'a Camera,
    pub branch: Branch,
    pub codec: LatentCodec,
}

/// Noise prediction that may depend on the view being scored.
///
/// Every [`NoisePredictor`] is a view-independent guide.
pub trait Guidance: Send + Sync {
    fn predict_view(
        &self,
        z_t: &LatentGrid,
        t: usize,
        cond: &Conditioning,
        view: &ViewContext<'_>,
    ) -> Result<LatentGrid, PredictorError>;
}

impl<P: NoisePredictor + ?Sized> Guidance for P {
    fn predict_view(
        &self,
        z_t: &LatentGrid,
        t: usize,
        cond: &Conditioning,
        _view: &ViewContext<'_>,
    ) -> Result<LatentGrid, PredictorError> {
        self.predict(z_t, t, cond)
    }
}

/// Oracle guide built from a ground-truth body: predicts the noise that
/// denoises to the encoded ground-truth render at the requested view.
#[derive(Debug, Clone)]
pub struct RenderOracle {
    mesh: Mesh,
    params: BodyParams,
    schedule: NoiseSchedule,
    render: RenderOptions,
}

impl RenderOracle {
    pub fn new(
        rig: &CanonicalRig,
        params: BodyParams,
        schedule: NoiseSchedule,
        render: RenderOptions,
    ) -> Result<Self, crate::body::BodyError> {
        let mesh = rig.build(&params)?;
        Ok(Self {
            mesh,
            params,
            schedule,
            render,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn params(&self) -> &BodyParams {
        &self.params
    }

    /// Ground-truth latent seen from `view`.
    pub fn target(&self, view: &ViewContext<'_>) -> Result<LatentGrid, PredictorError> {
        let fb = render(&self.mesh, &self.params.texture, view.camera, &self.render)
            .map_err(|e| PredictorError::Contract(format!("oracle render: {e}")))?;
        let image = match view.branch {
            Branch::Normal => fb.normal_image(),
            Branch::Rgb => fb.rgb,
        };
        view.codec
            .encode(&image)
            .map_err(|e| PredictorError::Contract(format!("oracle encode: {e}")))
    }
}

impl Guidance for RenderOracle {
    fn predict_view(
        &self,
        z_t: &LatentGrid,
        t: usize,
        _cond: &Conditioning,
        view: &ViewContext<'_>,
    ) -> Result<LatentGrid, PredictorError> {
        self.schedule
            .check(t)
            .map_err(|e| PredictorError::Contract(format!("{e}")))?;
        let target = self.target(view)?;
        if target.shape() != z_t.shape() {
            return Err(PredictorError::ShapeMismatch {
                expected: z_t.shape(),
                actual: target.shape(),
            });
        }
        let eps = oracle_noise(&self.schedule, z_t.data(), target.data(), t);
        LatentGrid::from_vec(z_t.shape(), eps).map_err(|e| PredictorError::Contract(format!("{e}")))
    }
}
