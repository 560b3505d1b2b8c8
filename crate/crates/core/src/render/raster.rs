use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{Matrix3, Vector3};

use super::{Camera, RenderError};
use crate::body::Mesh;
use crate::image::Image;

/// Marker for pixels without a triangle.
pub const NO_TRIANGLE: u32 = u32::MAX;

/// Mid-gray default for uncovered pixels.
pub const DEFAULT_BACKGROUND: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RenderOptions {
    /// Constant written to uncovered RGB and normal-map pixels.
    pub background: f64,
    /// Triangles with any vertex closer than this are dropped.
    pub near: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            background: DEFAULT_BACKGROUND,
            near: 1e-3,
        }
    }
}

/// Rasterized buffers plus the per-pixel triangle assignment needed to
/// differentiate with visibility held fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffer {
    pub width: usize,
    pub height: usize,
    pub rgb: Image,
    /// Camera-space unit normals; zero where uncovered.
    pub normal: Vec<Vector3<f64>>,
    /// Distance along the view axis; `+∞` where uncovered.
    pub depth: Vec<f64>,
    pub coverage: Vec<bool>,
    /// Triangle index per pixel, [`NO_TRIANGLE`] where uncovered.
    pub triangle: Vec<u32>,
    /// Perspective-correct barycentric coordinates per pixel.
    pub bary: Vec<[f64; 3]>,
    /// World→camera rotation used for the normal buffer.
    pub rotation: Matrix3<f64>,
    pub background: f64,
    /// Zero-area triangles skipped while rasterizing.
    pub degenerate_triangles: usize,
    /// Triangles dropped by the near plane.
    pub clipped_triangles: usize,
}

impl FrameBuffer {
    pub fn covered_pixels(&self) -> usize {
        self.coverage.iter().filter(|&&c| c).count()
    }

    /// Normal map encoded to `[0, 1]` as `(n + 1) / 2`; uncovered pixels
    /// hold the background constant.
    pub fn normal_image(&self) -> Image {
        let mut img = Image::filled(self.width, self.height, 3, self.background);
        for (i, n) in self.normal.iter().enumerate() {
            if self.coverage[i] {
                let px = img.pixel_at_mut(i);
                for c in 0..3 {
                    px[c] = 0.5 * (n[c] + 1.0);
                }
            }
        }
        img
    }
}

/// Rasterizes `mesh` with a z-buffer: RGB is the bilinear texture sample at
/// the interpolated UV, normals are interpolated area-weighted vertex normals.
pub fn render(
    mesh: &Mesh,
    texture: &Image,
    camera: &Camera,
    opts: &RenderOptions,
) -> Result<FrameBuffer, RenderError> {
    if mesh.vertices.is_empty() || mesh.faces.is_empty() {
        return Err(RenderError::EmptyMesh);
    }
    if texture.channels() != 3 || texture.pixel_count() == 0 {
        return Err(RenderError::TextureShape(texture.channels()));
    }
    camera.validate()?;
    crate::body::validate_faces(&mesh.faces, mesh.vertex_count())?;

    let (w, h) = (camera.width, camera.height);
    let n = w * h;
    let mut fb = FrameBuffer {
        width: w,
        height: h,
        rgb: Image::new(w, h, 3),
        normal: vec![Vector3::zeros(); n],
        depth: vec![f64::INFINITY; n],
        coverage: vec![false; n],
        triangle: vec![NO_TRIANGLE; n],
        bary: vec![[0.0; 3]; n],
        rotation: camera.rotation,
        background: opts.background,
        degenerate_triangles: 0,
        clipped_triangles: 0,
    };

    let projected: Vec<(f64, f64, f64)> = mesh
        .vertices
        .iter()
        .map(|v| camera.project_camera(&camera.to_camera(v)))
        .collect();

    for (fi, face) in mesh.faces.iter().enumerate() {
        let [a, b, c] = face.map(|i| i as usize);
        let area3 = (mesh.vertices[b] - mesh.vertices[a]).cross(&(mesh.vertices[c] - mesh.vertices[a]));
        if area3.norm_squared() == 0.0 {
            fb.degenerate_triangles += 1;
            continue;
        }
        let p = [projected[a], projected[b], projected[c]];
        if p.iter().any(|q| !(q.2 > opts.near)) {
            fb.clipped_triangles += 1;
            continue;
        }
        let area = edge(p[0], p[1], (p[2].0, p[2].1));
        if area.abs() < 1e-12 {
            continue;
        }
        let min_x = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
        let max_x = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
        let max_y = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
        let Some((x0, x1)) = pixel_span(min_x, max_x, w) else { continue };
        let Some((y0, y1)) = pixel_span(min_y, max_y, h) else { continue };
        let inv_area = 1.0 / area;
        for py in y0..=y1 {
            let sy = py as f64 + 0.5;
            for px in x0..=x1 {
                let s = (px as f64 + 0.5, sy);
                let l0 = edge(p[1], p[2], s) * inv_area;
                let l1 = edge(p[2], p[0], s) * inv_area;
                let l2 = 1.0 - l0 - l1;
                if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                    continue;
                }
                let q = [l0 / p[0].2, l1 / p[1].2, l2 / p[2].2];
                let sum = q[0] + q[1] + q[2];
                let depth = 1.0 / sum;
                let idx = py * w + px;
                if depth < fb.depth[idx] {
                    fb.depth[idx] = depth;
                    fb.coverage[idx] = true;
                    fb.triangle[idx] = fi as u32;
                    fb.bary[idx] = [q[0] / sum, q[1] / sum, q[2] / sum];
                }
            }
        }
    }

    fb.rgb = sample_texture(&fb, mesh, texture, opts.background);
    let normals = mesh.vertex_normals();
    for i in 0..n {
        if fb.coverage[i] {
            fb.normal[i] = pixel_normal(&fb, mesh, &normals, i).0;
        }
    }
    Ok(fb)
}

#[inline]
fn edge(a: (f64, f64, f64), b: (f64, f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Pixel indices whose centers fall inside `[lo, hi]`.
fn pixel_span(lo: f64, hi: f64, size: usize) -> Option<(usize, usize)> {
    let first = libm::ceil(lo - 0.5).max(0.0);
    let last = libm::floor(hi - 0.5).min(size as f64 - 1.0);
    (first <= last).then_some((first as usize, last as usize))
}

/// Interpolated UV of a covered pixel.
#[inline]
pub(crate) fn pixel_uv(fb: &FrameBuffer, mesh: &Mesh, i: usize) -> [f64; 2] {
    let face = mesh.faces[fb.triangle[i] as usize];
    let b = fb.bary[i];
    let mut uv = [0.0; 2];
    for k in 0..3 {
        let t = mesh.uv[face[k] as usize];
        uv[0] += b[k] * t[0];
        uv[1] += b[k] * t[1];
    }
    uv
}

/// Camera-space unit normal and the unnormalized world-space blend of a
/// covered pixel.
#[inline]
pub(crate) fn pixel_normal(
    fb: &FrameBuffer,
    mesh: &Mesh,
    vertex_normals: &[Vector3<f64>],
    i: usize,
) -> (Vector3<f64>, Vector3<f64>) {
    let face = mesh.faces[fb.triangle[i] as usize];
    let b = fb.bary[i];
    let blend = vertex_normals[face[0] as usize] * b[0]
        + vertex_normals[face[1] as usize] * b[1]
        + vertex_normals[face[2] as usize] * b[2];
    let len = blend.norm();
    let unit = if len > 0.0 { blend / len } else { Vector3::zeros() };
    (fb.rotation * unit, blend)
}

/// RGB of `texture` under the frame buffer's frozen coverage. Linear in the
/// texture; with `background = 0` this is the texture JVP.
pub fn sample_texture(fb: &FrameBuffer, mesh: &Mesh, texture: &Image, background: f64) -> Image {
    let mut out = Image::filled(fb.width, fb.height, 3, background);
    let mut rgb = [0.0; 3];
    for i in 0..fb.width * fb.height {
        if !fb.coverage[i] {
            continue;
        }
        let uv = pixel_uv(fb, mesh, i);
        texture.sample_uv(uv[0], uv[1], &mut rgb);
        out.pixel_at_mut(i).copy_from_slice(&rgb);
    }
    out
}

/// Encoded normal map of `mesh` under the frame buffer's frozen coverage.
pub fn shade_normals(fb: &FrameBuffer, mesh: &Mesh) -> Image {
    let normals = mesh.vertex_normals();
    let mut out = Image::filled(fb.width, fb.height, 3, fb.background);
    for i in 0..fb.width * fb.height {
        if !fb.coverage[i] {
            continue;
        }
        let n = pixel_normal(fb, mesh, &normals, i).0;
        let px = out.pixel_at_mut(i);
        for c in 0..3 {
            px[c] = 0.5 * (n[c] + 1.0);
        }
    }
    out
}
