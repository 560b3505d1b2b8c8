//! Frozen-coverage adjoints of [`render`](super::render).
//!
//! The pixel→triangle assignment and barycentric weights recorded in the
//! [`FrameBuffer`] are treated as constants, so RGB is linear in the texture
//! and the normal map depends on vertices only through the area-weighted
//! vertex normals.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{Matrix3, Vector3};

use super::raster::{pixel_normal, pixel_uv};
use super::FrameBuffer;
use crate::body::Mesh;
use crate::image::Image;

/// Scatter-adds per-pixel RGB gradients onto the bilinear texel neighbors;
/// the exact adjoint of [`sample_texture`](super::sample_texture).
pub fn grad_texture(
    fb: &FrameBuffer,
    mesh: &Mesh,
    dl_drgb: &Image,
    texture_size: (usize, usize),
) -> Image {
    let (tw, th) = texture_size;
    let mut grad = Image::new(tw, th, 3);
    for i in 0..fb.width * fb.height {
        if !fb.coverage[i] {
            continue;
        }
        let g = dl_drgb.pixel_at(i);
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        let uv = pixel_uv(fb, mesh, i);
        let taps = crate::image::bilinear_taps(tw, th, uv[0] * tw as f64 - 0.5, uv[1] * th as f64 - 0.5);
        for (texel, w) in taps {
            if w == 0.0 {
                continue;
            }
            let t = grad.pixel_at_mut(texel);
            for c in 0..3 {
                t[c] += w * g[c];
            }
        }
    }
    grad
}

/// Gradient on vertex positions from gradients on the encoded normal map
/// and on RGB.
///
/// RGB is a texture lookup at fixed UVs, so under frozen coverage it has
/// no geometric dependence and `dl_drgb` contributes nothing; it is taken
/// so callers can pass the full image gradient.
pub fn grad_geometry(
    fb: &FrameBuffer,
    mesh: &Mesh,
    dl_dnormal: &Image,
    _dl_drgb: &Image,
) -> Vec<Vector3<f64>> {
    let nv = mesh.vertex_count();
    let mut sums = vec![Vector3::zeros(); nv];
    for f in &mesh.faces {
        let [a, b, c] = f.map(|i| i as usize);
        let cross = (mesh.vertices[b] - mesh.vertices[a]).cross(&(mesh.vertices[c] - mesh.vertices[a]));
        sums[a] += cross;
        sums[b] += cross;
        sums[c] += cross;
    }
    let normals: Vec<Vector3<f64>> = sums
        .iter()
        .map(|s| {
            let n = s.norm();
            if n > 0.0 {
                s / n
            } else {
                Vector3::zeros()
            }
        })
        .collect();

    // d/d(unit vertex normal)
    let mut g_normal = vec![Vector3::zeros(); nv];
    let rt = fb.rotation.transpose();
    for i in 0..fb.width * fb.height {
        if !fb.coverage[i] {
            continue;
        }
        let g = dl_dnormal.pixel_at(i);
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        let g_cam = Vector3::new(0.5 * g[0], 0.5 * g[1], 0.5 * g[2]);
        let g_unit = rt * g_cam;
        let (_, blend) = pixel_normal(fb, mesh, &normals, i);
        let len = blend.norm();
        if len == 0.0 {
            continue;
        }
        let unit = blend / len;
        let g_blend = normalize_adjoint(&unit, len, &g_unit);
        let face = mesh.faces[fb.triangle[i] as usize];
        let b = fb.bary[i];
        for k in 0..3 {
            g_normal[face[k] as usize] += g_blend * b[k];
        }
    }

    // through n_v = s_v / |s_v|
    let g_sum: Vec<Vector3<f64>> = sums
        .iter()
        .zip(&normals)
        .zip(&g_normal)
        .map(|((s, n), g)| {
            let len = s.norm();
            if len == 0.0 || g.norm_squared() == 0.0 {
                Vector3::zeros()
            } else {
                normalize_adjoint(n, len, g)
            }
        })
        .collect();

    // through s_v = Σ_f (p1 - p0) × (p2 - p0)
    let mut grad = vec![Vector3::zeros(); nv];
    for f in &mesh.faces {
        let [a, b, c] = f.map(|i| i as usize);
        let g_cross = g_sum[a] + g_sum[b] + g_sum[c];
        if g_cross.norm_squared() == 0.0 {
            continue;
        }
        let e1 = mesh.vertices[b] - mesh.vertices[a];
        let e2 = mesh.vertices[c] - mesh.vertices[a];
        let g_e1 = e2.cross(&g_cross);
        let g_e2 = g_cross.cross(&e1);
        grad[b] += g_e1;
        grad[c] += g_e2;
        grad[a] -= g_e1 + g_e2;
    }
    grad
}

/// Adjoint of `x ↦ x / |x|` at a point with unit direction `unit` and
/// length `len`.
#[inline]
fn normalize_adjoint(unit: &Vector3<f64>, len: f64, g: &Vector3<f64>) -> Vector3<f64> {
    (Matrix3::identity() - unit * unit.transpose()) * g / len
}
