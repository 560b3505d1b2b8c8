//! Wavefront OBJ export (`v`, `vt`, `f v/vt`) for inspection.

use std::fmt::Write as _;
use std::path::Path;

use deco_core::body::Mesh;

use super::{write_bytes, IoError};

pub fn obj_string(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(64 * mesh.vertex_count());
    for v in &mesh.vertices {
        writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z).unwrap();
    }
    for uv in &mesh.uv {
        writeln!(out, "vt {:?} {:?}", uv[0], uv[1]).unwrap();
    }
    for f in &mesh.faces {
        let [a, b, c] = f.map(|i| i + 1);
        writeln!(out, "f {a}/{a} {b}/{b} {c}/{c}").unwrap();
    }
    out
}

pub fn write_obj(path: &Path, mesh: &Mesh) -> Result<(), IoError> {
    write_bytes(path, obj_string(mesh).as_bytes())
}
