//! Body template container.
//!
//! Binary layout, all integers `u32` and all reals `f64`, little-endian:
//!
//! | field | count |
//! |---|---|
//! | magic `DECOTPL\0` | 8 bytes |
//! | version (= 1) | 1 |
//! | `V, F, J, S, P, E` | 6 |
//! | mean shape | `V·3` |
//! | faces | `F·3` (`u32`) |
//! | shape, pose, expression bases | `V·3·S`, `V·3·P`, `V·3·E`, `[vertex][axis][coeff]` |
//! | joint regressor | `J·V`, row-major |
//! | skin weights | `V·J`, row-major |
//! | uv | `V·2` |
//! | parents | `J` (`u32`, `0xFFFFFFFF` = root) |
//!
//! The JSON form mirrors the template's field names.

use std::path::Path;

use deco_core::body::{BlendBasis, BodyTemplate};
use nalgebra::Vector3;

use super::{read_bytes, write_bytes, IoError};

pub const TEMPLATE_MAGIC: &[u8; 8] = b"DECOTPL\0";
pub const TEMPLATE_VERSION: u32 = 1;
const ROOT: u32 = u32::MAX;

#[derive(Default)]
pub(super) struct ByteWriter(pub Vec<u8>);

impl ByteWriter {
    pub fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    pub fn len(&mut self, v: usize) {
        self.u32(u32::try_from(v).expect("dimension fits in u32"));
    }

    pub fn f64s(&mut self, v: impl IntoIterator<Item = f64>) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

pub(super) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self { bytes, pos: 0, path }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            IoError::format(self.path, format!("truncated at byte {} (need {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn magic(&mut self, magic: &[u8; 8], version: u32) -> Result<(), IoError> {
        if self.take(8)? != magic {
            return Err(IoError::format(self.path, "bad magic"));
        }
        let v = self.u32()?;
        if v != version {
            return Err(IoError::format(self.path, format!("unsupported version {v}, expected {version}")));
        }
        Ok(())
    }

    pub fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn len(&mut self) -> Result<usize, IoError> {
        Ok(self.u32()? as usize)
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>, IoError> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| IoError::format(self.path, "length overflow"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    pub fn vec3s(&mut self, n: usize) -> Result<Vec<Vector3<f64>>, IoError> {
        Ok(self.f64s(3 * n)?.chunks_exact(3).map(|c| Vector3::new(c[0], c[1], c[2])).collect())
    }

    pub fn finish(&self) -> Result<(), IoError> {
        if self.pos != self.bytes.len() {
            return Err(IoError::format(
                self.path,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

pub fn template_bytes(t: &BodyTemplate) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.0.extend_from_slice(TEMPLATE_MAGIC);
    w.u32(TEMPLATE_VERSION);
    for d in [
        t.vertex_count(),
        t.faces.len(),
        t.joint_count(),
        t.shape_basis.dims(),
        t.pose_basis.dims(),
        t.expr_basis.dims(),
    ] {
        w.len(d);
    }
    w.f64s(t.mean_shape.iter().flat_map(|v| [v.x, v.y, v.z]));
    for f in &t.faces {
        f.iter().for_each(|&i| w.u32(i));
    }
    for b in [&t.shape_basis, &t.pose_basis, &t.expr_basis] {
        w.f64s(b.data().iter().copied());
    }
    w.f64s(t.joint_regressor.iter().copied());
    w.f64s(t.skin_weights.iter().copied());
    w.f64s(t.uv.iter().flat_map(|uv| *uv));
    for p in &t.parents {
        w.u32(p.map_or(ROOT, |p| p as u32));
    }
    w.0
}

/// Parses and validates a binary template.
pub fn template_from_bytes(bytes: &[u8], path: &Path) -> Result<BodyTemplate, IoError> {
    let mut r = ByteReader::new(bytes, path);
    r.magic(TEMPLATE_MAGIC, TEMPLATE_VERSION)?;
    let [v, f, j, s, p, e] = [r.len()?, r.len()?, r.len()?, r.len()?, r.len()?, r.len()?];
    let mean_shape = r.vec3s(v)?;
    let mut faces = Vec::with_capacity(f);
    for _ in 0..f {
        faces.push([r.u32()?, r.u32()?, r.u32()?]);
    }
    let basis = |r: &mut ByteReader<'_>, dims: usize| -> Result<BlendBasis, IoError> {
        BlendBasis::from_vec(v, dims, r.f64s(v * 3 * dims)?).map_err(|e| IoError::format(path, e))
    };
    let shape_basis = basis(&mut r, s)?;
    let pose_basis = basis(&mut r, p)?;
    let expr_basis = basis(&mut r, e)?;
    let joint_regressor = r.f64s(j * v)?;
    let skin_weights = r.f64s(v * j)?;
    let uv = r.f64s(2 * v)?.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    let mut parents = Vec::with_capacity(j);
    for _ in 0..j {
        let p = r.u32()?;
        parents.push((p != ROOT).then_some(p as usize));
    }
    r.finish()?;
    let t = BodyTemplate {
        mean_shape,
        faces,
        shape_basis,
        pose_basis,
        expr_basis,
        joint_regressor,
        skin_weights,
        uv,
        parents,
    };
    t.validate().map_err(|e| IoError::format(path, e))?;
    Ok(t)
}

pub fn write_template(path: &Path, t: &BodyTemplate) -> Result<(), IoError> {
    write_bytes(path, &template_bytes(t))
}

/// Reads a template, choosing JSON for `.json` paths and binary otherwise.
pub fn read_template(path: &Path) -> Result<BodyTemplate, IoError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        return read_template_json(path);
    }
    template_from_bytes(&read_bytes(path)?, path)
}

pub fn write_template_json(path: &Path, t: &BodyTemplate) -> Result<(), IoError> {
    let json = serde_json::to_vec(t).map_err(|e| IoError::format(path, e))?;
    write_bytes(path, &json)
}

pub fn read_template_json(path: &Path) -> Result<BodyTemplate, IoError> {
    let t: BodyTemplate = serde_json::from_slice(&read_bytes(path)?).map_err(|e| IoError::format(path, e))?;
    t.validate().map_err(|e| IoError::format(path, e))?;
    Ok(t)
}
