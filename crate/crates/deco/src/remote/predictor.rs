use deco_core::diffusion::{Conditioning, LatentGrid, NoisePredictor, PredictorError};

use super::{decode_f32, encode_f32, HttpClient, RemoteConfig, RemoteError, PREDICTOR_ENDPOINT_ENV};

/// Request body: `latent` is base64 little-endian `f32`, row-major over `shape = [c, h, w]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PredictRequest {
    pub latent: String,
    pub shape: [usize; 3],
    pub t: usize,
    pub prompt: String,
    pub guidance_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PredictResponse {
    pub eps: String,
    pub shape: [usize; 3],
}

impl PredictRequest {
    pub fn new(z_t: &LatentGrid, t: usize, cond: &Conditioning) -> Self {
        Self {
            latent: encode_f32(z_t.data()),
            shape: z_t.shape(),
            t,
            prompt: cond.prompt.clone(),
            guidance_scale: cond.guidance_scale,
            seed: cond.seed,
        }
    }

    pub fn latent(&self) -> Result<LatentGrid, RemoteError> {
        let data = decode_f32(&self.latent)?;
        LatentGrid::from_vec(self.shape, data).map_err(|e| RemoteError::Contract(e.to_string()))
    }
}

impl PredictResponse {
    pub fn new(eps: &LatentGrid) -> Self {
        Self {
            eps: encode_f32(eps.data()),
            shape: eps.shape(),
        }
    }
}

/// Noise predictor behind an HTTP endpoint.
#[derive(Debug, Clone)]
pub struct RemotePredictor {
    client: HttpClient,
}

impl RemotePredictor {
    pub fn new(cfg: RemoteConfig) -> Self {
        Self {
            client: HttpClient::new(cfg),
        }
    }

    /// As [`RemotePredictor::new`], with the endpoint overridable from the environment.
    pub fn from_env(cfg: RemoteConfig) -> Self {
        Self::new(cfg.with_env_override(PREDICTOR_ENDPOINT_ENV))
    }

    pub fn endpoint(&self) -> &str {
        &self.client.config().endpoint
    }
}

impl From<RemoteError> for PredictorError {
    fn from(e: RemoteError) -> Self {
        match e {
            RemoteError::Transport { message, attempts } => PredictorError::Transport { message, attempts },
            RemoteError::Contract(m) => PredictorError::Contract(m),
        }
    }
}

impl NoisePredictor for RemotePredictor {
    fn predict(&self, z_t: &LatentGrid, t: usize, cond: &Conditioning) -> Result<LatentGrid, PredictorError> {
        let resp: PredictResponse = self.client.post_json(&PredictRequest::new(z_t, t, cond))?;
        if resp.shape != z_t.shape() {
            return Err(PredictorError::ShapeMismatch {
                expected: z_t.shape(),
                actual: resp.shape,
            });
        }
        let data = decode_f32(&resp.eps)?;
        let n: usize = resp.shape.iter().product();
        if data.len() != n {
            return Err(PredictorError::Contract(format!("eps holds {} values, shape needs {n}", data.len())));
        }
        LatentGrid::from_vec(resp.shape, data).map_err(|e| PredictorError::Contract(e.to_string()))
    }
}
