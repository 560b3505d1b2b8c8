use deco_core::harmonize::{RefineError, RefineInputs, ShadingRefiner};
use deco_core::image::Image;

use super::{
    decode_f16, encode_bytes, encode_f16, HttpClient, RemoteConfig, RemoteError, REFINER_ENDPOINT_ENV,
};
use crate::io::{mask_png_bytes, png_bytes, BitDepth};

/// Request body. `composite_png` is 16-bit RGB; `normals_png` is 16-bit RGB
/// storing `(n + 1) / 2`; `mask_png` is 8-bit gray with 255 = foreground;
/// `shading` and `depth` are base64 little-endian `f16`, row-major, with
/// infinite depth where uncovered.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RefineRequest {
    pub width: usize,
    pub height: usize,
    pub composite_png: String,
    pub shading: String,
    pub mask_png: String,
    pub normals_png: String,
    pub depth: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RefineResponse {
    pub width: usize,
    pub height: usize,
    pub shading: String,
}

/// Shading refiner behind an HTTP endpoint.
#[derive(Debug, Clone)]
pub struct RemoteRefiner {
    client: HttpClient,
}

impl RemoteRefiner {
    pub fn new(cfg: RemoteConfig) -> Self {
        Self {
            client: HttpClient::new(cfg),
        }
    }

    pub fn from_env(cfg: RemoteConfig) -> Self {
        Self::new(cfg.with_env_override(REFINER_ENDPOINT_ENV))
    }
}

fn contract(e: impl std::fmt::Display) -> RefineError {
    RefineError::Contract(e.to_string())
}

impl From<RemoteError> for RefineError {
    fn from(e: RemoteError) -> Self {
        match e {
            RemoteError::Transport { message, attempts } => RefineError::Transport { message, attempts },
            RemoteError::Contract(m) => RefineError::Contract(m),
        }
    }
}

impl ShadingRefiner for RemoteRefiner {
    fn refine(&self, inputs: &RefineInputs<'_>) -> Result<Image, RefineError> {
        inputs.validate()?;
        let (w, h) = (inputs.shading.width(), inputs.shading.height());
        let normals = Image::from_vec(
            w,
            h,
            3,
            inputs
                .normals
                .iter()
                .flat_map(|n| [0.5 * (n.x + 1.0), 0.5 * (n.y + 1.0), 0.5 * (n.z + 1.0)])
                .collect(),
        )
        .expect("normal buffer");
        let req = RefineRequest {
            width: w,
            height: h,
            composite_png: encode_bytes(&png_bytes(inputs.composite, BitDepth::Sixteen).map_err(contract)?),
            shading: encode_f16(inputs.shading.data()),
            mask_png: encode_bytes(&mask_png_bytes(inputs.fg_mask).map_err(contract)?),
            normals_png: encode_bytes(&png_bytes(&normals, BitDepth::Sixteen).map_err(contract)?),
            depth: encode_f16(inputs.depth),
        };
        let resp: RefineResponse = self.client.post_json(&req)?;
        if (resp.width, resp.height) != (w, h) {
            return Err(contract(format!("refined shading is {}x{}, expected {w}x{h}", resp.width, resp.height)));
        }
        let data = decode_f16(&resp.shading)?;
        if data.len() != w * h {
            return Err(contract(format!("refined shading holds {} values, expected {}", data.len(), w * h)));
        }
        Ok(Image::from_vec(w, h, 1, data).expect("sized shading buffer"))
    }
}
