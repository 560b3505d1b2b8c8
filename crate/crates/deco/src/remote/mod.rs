//! HTTP JSON clients for external models: noise predictor, atlas editor
//! and shading refiner.
//!
//! Float payloads are base64 strings of little-endian `f32` (latents) or
//! `f16` (shading, depth), row-major. Images travel as base64 PNG.
//! Connection failures, timeouts and 5xx/429 answers are transport
//! failures and are retried with exponential backoff; every other
//! malformed answer is a contract failure and is returned at once.

mod editor;
mod predictor;
mod refiner;

pub use editor::{request_atlas_edit, EditRequest, EditResponse, EditSource, EditorError};
pub use predictor::{PredictRequest, PredictResponse, RemotePredictor};
pub use refiner::{RefineRequest, RefineResponse, RemoteRefiner};

use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Overrides the configured noise-predictor endpoint.
pub const PREDICTOR_ENDPOINT_ENV: &str = "DECO_PREDICTOR_URL";
/// Overrides the configured atlas-editor endpoint.
pub const EDITOR_ENDPOINT_ENV: &str = "DECO_EDITOR_URL";
/// Overrides the configured shading-refiner endpoint.
pub const REFINER_ENDPOINT_ENV: &str = "DECO_REFINER_URL";

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    /// Extra attempts after the first on transport failure.
    pub retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff_ms: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            timeout_ms: 30_000,
            retries: 2,
            backoff_ms: 200,
        }
    }
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            ..Self::default()
        }
    }

    /// Replaces the endpoint with the value of `var` when it is set and non-empty.
    pub fn with_env_override(mut self, var: &str) -> Self {
        if let Some(url) = std::env::var(var).ok().filter(|v| !v.is_empty()) {
            self.endpoint = url;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RemoteError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("contract violation: {0}")]
    Contract(String),
}

/// Blocking JSON client with bounded retries.
#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
    cfg: RemoteConfig,
}

impl HttpClient {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, cfg }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    pub fn post_json<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, RemoteError> {
        let attempts = self.cfg.retries + 1;
        let mut delay = Duration::from_millis(self.cfg.backoff_ms);
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.agent.post(&self.cfg.endpoint).send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status == 429 || status >= 500 {
                        last = format!("HTTP {status}");
                        log::warn!("{}: {last} (attempt {attempt}/{attempts})", self.cfg.endpoint);
                        continue;
                    }
                    if !(200..300).contains(&status) {
                        let text = resp.body_mut().read_to_string().unwrap_or_default();
                        return Err(RemoteError::Contract(format!("HTTP {status}: {}", text.trim())));
                    }
                    return resp
                        .body_mut()
                        .read_json::<Resp>()
                        .map_err(|e| RemoteError::Contract(format!("malformed response: {e}")));
                }
                Err(e) => {
                    last = e.to_string();
                    log::warn!("{}: {last} (attempt {attempt}/{attempts})", self.cfg.endpoint);
                }
            }
        }
        Err(RemoteError::Transport {
            message: format!("{}: {last}", self.cfg.endpoint),
            attempts,
        })
    }
}

/// Base64 of the values rounded to little-endian `f32`.
pub fn encode_f32(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f32(text: &str) -> Result<Vec<f64>, RemoteError> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| RemoteError::Contract(format!("bad base64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(RemoteError::Contract(format!("{} bytes is not a whole number of f32", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect())
}

/// Base64 of the values rounded to little-endian `f16`.
pub fn encode_f16(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| half::f16::from_f64(v).to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f16(text: &str) -> Result<Vec<f64>, RemoteError> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| RemoteError::Contract(format!("bad base64: {e}")))?;
    if bytes.len() % 2 != 0 {
        return Err(RemoteError::Contract(format!("{} bytes is not a whole number of f16", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|c| half::f16::from_le_bytes([c[0], c[1]]).to_f64())
        .collect())
}

pub fn encode_bytes(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn decode_bytes(text: &str) -> Result<Vec<u8>, RemoteError> {
    STANDARD
        .decode(text)
        .map_err(|e| RemoteError::Contract(format!("bad base64: {e}")))
}
