//! Body-parameter and atlas checkpoints, and ground-truth flow files.
//!
//! Body parameters, little-endian:
//! magic `DECOPRM\0`, version `u32` (= 1), dims `S, J, E, V', W_t, H_t` as `u32`,
//! then `f64` blocks `β (S)`, `θ (J·3)`, `ψ (E)`, `D (V'·3)`, texture `(H_t·W_t·3)`.
//!
//! Atlas: JSON `{"format": "deco-atlas", "version": 1, "model": ...}`.
//! Flow: JSON array of `{"width", "height", "data": [[dx, dy], ...]}`.

use std::path::Path;

use deco_core::atlas::{AtlasModel, Flow};
use deco_core::body::BodyParams;
use deco_core::image::Image;

use super::template::{ByteReader, ByteWriter};
use super::{read_bytes, write_bytes, IoError};

pub const PARAMS_MAGIC: &[u8; 8] = b"DECOPRM\0";
pub const PARAMS_VERSION: u32 = 1;
pub const ATLAS_FORMAT: &str = "deco-atlas";
const ATLAS_VERSION: u32 = 1;

pub fn write_params(path: &Path, p: &BodyParams) -> Result<(), IoError> {
    let mut w = ByteWriter::default();
    w.0.extend_from_slice(PARAMS_MAGIC);
    w.u32(PARAMS_VERSION);
    for d in [
        p.beta.len(),
        p.theta.len(),
        p.psi.len(),
        p.displacement.len(),
        p.texture.width(),
        p.texture.height(),
    ] {
        w.len(d);
    }
    if p.texture.channels() != 3 {
        return Err(IoError::format(path, "texture must be RGB"));
    }
    w.f64s(p.beta.iter().copied());
    w.f64s(p.theta.iter().flat_map(|v| [v.x, v.y, v.z]));
    w.f64s(p.psi.iter().copied());
    w.f64s(p.displacement.iter().flat_map(|v| [v.x, v.y, v.z]));
    w.f64s(p.texture.data().iter().copied());
    write_bytes(path, &w.0)
}

pub fn read_params(path: &Path) -> Result<BodyParams, IoError> {
    let bytes = read_bytes(path)?;
    let mut r = ByteReader::new(&bytes, path);
    r.magic(PARAMS_MAGIC, PARAMS_VERSION)?;
    let [s, j, e, v, tw, th] = [r.len()?, r.len()?, r.len()?, r.len()?, r.len()?, r.len()?];
    let beta = r.f64s(s)?;
    let theta = r.vec3s(j)?;
    let psi = r.f64s(e)?;
    let displacement = r.vec3s(v)?;
    let texture = Image::from_vec(tw, th, 3, r.f64s(tw * th * 3)?).expect("sized texture buffer");
    r.finish()?;
    Ok(BodyParams {
        beta,
        theta,
        psi,
        displacement,
        texture,
    })
}

#[derive(serde::Serialize, serde::Deserialize)]
struct AtlasFile<M> {
    format: String,
    version: u32,
    model: M,
}

pub fn write_atlas(path: &Path, model: &AtlasModel) -> Result<(), IoError> {
    let file = AtlasFile {
        format: ATLAS_FORMAT.to_string(),
        version: ATLAS_VERSION,
        model,
    };
    write_bytes(path, &serde_json::to_vec(&file).map_err(|e| IoError::format(path, e))?)
}

pub fn read_atlas(path: &Path) -> Result<AtlasModel, IoError> {
    let file: AtlasFile<AtlasModel> =
        serde_json::from_slice(&read_bytes(path)?).map_err(|e| IoError::format(path, e))?;
    if file.format != ATLAS_FORMAT || file.version != ATLAS_VERSION {
        return Err(IoError::format(
            path,
            format!("expected {ATLAS_FORMAT} v{ATLAS_VERSION}, found {} v{}", file.format, file.version),
        ));
    }
    Ok(file.model)
}

pub fn write_flow(path: &Path, flow: &[Flow]) -> Result<(), IoError> {
    write_bytes(path, &serde_json::to_vec(flow).map_err(|e| IoError::format(path, e))?)
}

pub fn read_flow(path: &Path) -> Result<Vec<Flow>, IoError> {
    let flows: Vec<Flow> = serde_json::from_slice(&read_bytes(path)?).map_err(|e| IoError::format(path, e))?;
    if let Some(i) = flows.iter().position(|f| f.data().len() != f.width() * f.height()) {
        return Err(IoError::format(path, format!("flow {i} has the wrong number of vectors")));
    }
    Ok(flows)
}
