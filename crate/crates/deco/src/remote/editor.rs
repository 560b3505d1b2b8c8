use std::path::PathBuf;

use deco_core::atlas::{validate_edited_atlas, AtlasError};
use deco_core::image::Image;

use super::{decode_bytes, encode_bytes, HttpClient, RemoteConfig, RemoteError, EDITOR_ENDPOINT_ENV};
use crate::io::{image_from_png, png_bytes, read_rgb, BitDepth, IoError};

/// Where an edited atlas comes from.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EditSource {
    /// A pre-edited atlas image on disk.
    File(PathBuf),
    Remote(RemoteConfig),
}

/// Request body: base64 PNGs of the atlas and optional depth guidance.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EditRequest {
    pub atlas_png: String,
    pub prompt: String,
    pub depth_png: Option<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EditResponse {
    pub image_png: String,
}

#[derive(Debug, thiserror::Error)]
pub enum EditorError {
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("edited atlas rejected: {0}")]
    Atlas(#[from] AtlasError),
}

/// Edited atlas from `source`, checked to be RGB at the atlas resolution.
pub fn request_atlas_edit(
    source: &EditSource,
    atlas: &Image,
    prompt: &str,
    depth: Option<&Image>,
    seed: u64,
) -> Result<Image, EditorError> {
    let edited = match source {
        EditSource::File(path) => read_rgb(path)?.0,
        EditSource::Remote(cfg) => {
            let client = HttpClient::new(cfg.clone().with_env_override(EDITOR_ENDPOINT_ENV));
            let req = EditRequest {
                atlas_png: encode_bytes(&png_bytes(atlas, BitDepth::Sixteen)?),
                prompt: prompt.to_string(),
                depth_png: depth
                    .map(|d| png_bytes(d, BitDepth::Sixteen).map(|b| encode_bytes(&b)))
                    .transpose()?,
                seed,
            };
            let resp: EditResponse = client.post_json(&req)?;
            image_from_png(&decode_bytes(&resp.image_png)?)
                .map_err(|e| RemoteError::Contract(format!("edited atlas is not a PNG: {e}")))?
        }
    };
    validate_edited_atlas(&edited, (atlas.width(), atlas.height()))?;
    Ok(edited)
}
