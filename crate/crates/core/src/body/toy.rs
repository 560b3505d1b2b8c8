//! Procedurally generated desk-scale body templates.
//!
//! [`toy_biped`] builds a capsule-limb biped on a 24-joint skeleton whose
//! joint order puts every parent before its children, so any prefix of
//! `4..=24` joints is a valid tree. Each bone is a closed capsule driven by
//! its parent joint, leaf joints get an end capsule, and seam vertices are
//! duplicated so every capsule owns a clean UV chart.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
use nalgebra::Vector3;

use super::{BlendBasis, BodyError, BodyTemplate};

/// Rest position, parent, capsule radius of the bone ending at the joint.
const SKELETON: [([f64; 3], Option<usize>, f64); 24] = [
    ([0.0, 0.95, 0.0], None, 0.10),        // pelvis
    ([0.09, 0.88, 0.0], Some(0), 0.07),    // left hip
    ([-0.09, 0.88, 0.0], Some(0), 0.07),   // right hip
    ([0.0, 1.05, 0.0], Some(0), 0.11),     // spine 1
    ([0.10, 0.50, 0.0], Some(1), 0.065),   // left knee
    ([-0.10, 0.50, 0.0], Some(2), 0.065),  // right knee
    ([0.0, 1.18, 0.0], Some(3), 0.11),     // spine 2
    ([0.10, 0.10, 0.0], Some(4), 0.05),    // left ankle
    ([-0.10, 0.10, 0.0], Some(5), 0.05),   // right ankle
    ([0.0, 1.30, 0.0], Some(6), 0.12),     // spine 3
    ([0.10, 0.04, 0.12], Some(7), 0.04),   // left foot
    ([-0.10, 0.04, 0.12], Some(8), 0.04),  // right foot
    ([0.0, 1.50, 0.0], Some(9), 0.05),     // neck
    ([0.08, 1.42, 0.0], Some(9), 0.05),    // left collar
    ([-0.08, 1.42, 0.0], Some(9), 0.05),   // right collar
    ([0.0, 1.60, 0.0], Some(12), 0.05),    // head
    ([0.18, 1.42, 0.0], Some(13), 0.05),   // left shoulder
    ([-0.18, 1.42, 0.0], Some(14), 0.05),  // right shoulder
    ([0.45, 1.42, 0.0], Some(16), 0.045),  // left elbow
    ([-0.45, 1.42, 0.0], Some(17), 0.045), // right elbow
    ([0.70, 1.42, 0.0], Some(18), 0.04),   // left wrist
    ([-0.70, 1.42, 0.0], Some(19), 0.04),  // right wrist
    ([0.78, 1.42, 0.0], Some(20), 0.035),  // left hand
    ([-0.78, 1.42, 0.0], Some(21), 0.035), // right hand
];

const HEAD: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    Torso,
    Arm,
    Leg,
    Head,
}

fn region_of(joint: usize) -> Region {
    match joint {
        1 | 2 | 4 | 5 | 7 | 8 | 10 | 11 => Region::Leg,
        13 | 14 | 16..=23 => Region::Arm,
        12 | HEAD => Region::Head,
        _ => Region::Torso,
    }
}

/// Tessellation and basis sizes of a toy biped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyBipedConfig {
    pub joints: usize,
    /// Vertices around each capsule ring (excluding the seam duplicate).
    pub segments: usize,
    /// Latitude rings per hemispherical cap.
    pub cap_rings: usize,
    /// Rings along the cylinder, including both end rings.
    pub body_rings: usize,
    pub shape_dims: usize,
    pub expr_dims: usize,
}

impl Default for ToyBipedConfig {
    fn default() -> Self {
        Self {
            joints: 24,
            segments: 8,
            cap_rings: 2,
            body_rings: 3,
            shape_dims: 6,
            expr_dims: 4,
        }
    }
}

impl ToyBipedConfig {
    pub fn with_joints(joints: usize) -> Self {
        Self {
            joints,
            ..Self::default()
        }
    }
}

/// The shipped toy template family: 4, 8, 16 and 24 joints.
pub fn shipped_templates() -> Vec<BodyTemplate> {
    [4, 8, 16, 24]
        .into_iter()
        .map(|j| toy_biped(&ToyBipedConfig::with_joints(j)).expect("shipped toy config is valid"))
        .collect()
}

struct Capsule {
    start: Vector3<f64>,
    end: Vector3<f64>,
    radius: f64,
    driver: usize,
    /// Joint blended in near the start of the capsule.
    start_blend: Option<usize>,
    /// Joint blended in near the end of the capsule.
    end_blend: Option<usize>,
    region: Region,
}

struct CapsuleVertex {
    radial: Vector3<f64>,
    along: f64,
    angle: f64,
}

pub fn toy_biped(cfg: &ToyBipedConfig) -> Result<BodyTemplate, BodyError> {
    let j = cfg.joints;
    if !(4..=24).contains(&j) {
        return Err(BodyError::UnsupportedJointCount(j));
    }
    let joint_pos: Vec<Vector3<f64>> = SKELETON[..j]
        .iter()
        .map(|(p, _, _)| Vector3::new(p[0], p[1], p[2]))
        .collect();
    let parents: Vec<Option<usize>> = SKELETON[..j].iter().map(|(_, p, _)| *p).collect();
    let has_child: Vec<bool> = (0..j).map(|a| parents.iter().any(|p| *p == Some(a))).collect();

    let mut capsules = Vec::new();
    for c in 1..j {
        let p = parents[c].expect("non-root joint has a parent");
        capsules.push(Capsule {
            start: joint_pos[p],
            end: joint_pos[c],
            radius: SKELETON[c].2,
            driver: p,
            start_blend: parents[p],
            end_blend: Some(c),
            region: region_of(c),
        });
    }
    for c in 1..j {
        if has_child[c] {
            continue;
        }
        let p = parents[c].expect("non-root joint has a parent");
        let (len, radius) = if c == HEAD { (0.16, 0.1) } else { (0.08, SKELETON[c].2) };
        let dir = (joint_pos[c] - joint_pos[p]).normalize();
        capsules.push(Capsule {
            start: joint_pos[c],
            end: joint_pos[c] + dir * len,
            radius,
            driver: c,
            start_blend: Some(p),
            end_blend: None,
            region: region_of(c),
        });
    }

    let seg = cfg.segments.max(3);
    let cols = libm::ceil(libm::sqrt(capsules.len() as f64)) as usize;
    let rows = capsules.len().div_ceil(cols);

    let mut mean_shape = Vec::new();
    let mut uv = Vec::new();
    let mut faces = Vec::new();
    let mut weights = Vec::new();
    let mut info = Vec::new();
    let mut regions = Vec::new();
    let mut regressor = Vec::new();
    let mut joint_rings: Vec<Option<Vec<usize>>> = vec![None; j];

    for (ci, cap) in capsules.iter().enumerate() {
        let axis = cap.end - cap.start;
        let length = axis.norm();
        let dir = axis / length;
        let reference = if dir.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
        let e1 = dir.cross(&reference).normalize();
        let e2 = dir.cross(&e1);

        // (center, ring radius, cylinder-end tag)
        let mut rings: Vec<(Vector3<f64>, f64, Option<bool>)> = Vec::new();
        for k in 1..=cfg.cap_rings {
            let a = FRAC_PI_2 * k as f64 / (cfg.cap_rings + 1) as f64;
            rings.push((cap.start - dir * (cap.radius * libm::cos(a)), cap.radius * libm::sin(a), None));
        }
        let body = cfg.body_rings.max(2);
        for m in 0..body {
            let t = m as f64 / (body - 1) as f64;
            let tag = if m == 0 {
                Some(false)
            } else if m == body - 1 {
                Some(true)
            } else {
                None
            };
            rings.push((cap.start + axis * t, cap.radius, tag));
        }
        for k in (1..=cfg.cap_rings).rev() {
            let a = FRAC_PI_2 * k as f64 / (cfg.cap_rings + 1) as f64;
            rings.push((cap.end + dir * (cap.radius * libm::cos(a)), cap.radius * libm::sin(a), None));
        }

        let tile = [(ci % cols) as f64 / cols as f64, (ci / cols) as f64 / rows as f64];
        let size = [1.0 / cols as f64, 1.0 / rows as f64];
        let margin = [0.04 * size[0], 0.04 * size[1]];
        let to_uv = |lu: f64, lv: f64| {
            [
                tile[0] + margin[0] + lu * (size[0] - 2.0 * margin[0]),
                tile[1] + margin[1] + lv * (size[1] - 2.0 * margin[1]),
            ]
        };
        let n_rings = rings.len();
        let base = mean_shape.len() as u32;

        let mut push = |pos: Vector3<f64>, tex: [f64; 2], radial: Vector3<f64>, angle: f64| {
            let along = ((pos - cap.start).dot(&dir) / length).clamp(0.0, 1.0);
            mean_shape.push(pos);
            uv.push(tex);
            info.push(CapsuleVertex { radial, along, angle });
            regions.push((cap.region, cap.driver));
            let mut row = vec![0.0; j];
            row[cap.driver] = 1.0;
            if along < 0.25 {
                if let Some(b) = cap.start_blend {
                    let t = 0.5 * (1.0 - along / 0.25);
                    row[b] += t;
                    row[cap.driver] -= t;
                }
            }
            if along > 0.75 {
                if let Some(b) = cap.end_blend {
                    let t = 0.5 * (along - 0.75) / 0.25;
                    row[b] += t;
                    row[cap.driver] -= t;
                }
            }
            weights.extend(row);
        };

        push(cap.start - dir * cap.radius, to_uv(0.5, 0.0), -dir, 0.0);
        for (ri, &(center, radius, tag)) in rings.iter().enumerate() {
            let lv = (ri + 1) as f64 / (n_rings + 1) as f64;
            let first = base as usize + 1 + ri * (seg + 1);
            for s in 0..=seg {
                let phi = 2.0 * PI * s as f64 / seg as f64;
                let radial = e1 * libm::cos(phi) + e2 * libm::sin(phi);
                push(center + radial * radius, to_uv(s as f64 / seg as f64, lv), radial, phi);
            }
            let ring: Vec<usize> = (first..first + seg).collect();
            match tag {
                Some(false) if parents[cap.driver].is_none() && joint_rings[cap.driver].is_none() => {
                    joint_rings[cap.driver] = Some(ring);
                }
                Some(true) => {
                    if let Some(c) = cap.end_blend {
                        if joint_rings[c].is_none() {
                            joint_rings[c] = Some(ring);
                        }
                    }
                }
                _ => {}
            }
        }
        push(cap.end + dir * cap.radius, to_uv(0.5, 1.0), dir, 0.0);

        let ring_vertex = |r: usize, s: usize| base + 1 + (r * (seg + 1) + s) as u32;
        let south = base;
        let north = base + 1 + (n_rings * (seg + 1)) as u32;
        for s in 0..seg {
            faces.push([south, ring_vertex(0, s + 1), ring_vertex(0, s)]);
        }
        for r in 0..n_rings - 1 {
            for s in 0..seg {
                let a = ring_vertex(r, s);
                let b = ring_vertex(r, s + 1);
                let c = ring_vertex(r + 1, s + 1);
                let d = ring_vertex(r + 1, s);
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
        for s in 0..seg {
            faces.push([ring_vertex(n_rings - 1, s), ring_vertex(n_rings - 1, s + 1), north]);
        }
    }

    let v = mean_shape.len();
    regressor.resize(j * v, 0.0);
    for (joint, ring) in joint_rings.iter().enumerate() {
        let ring = ring.as_ref().expect("every joint terminates a capsule ring");
        let w = 1.0 / ring.len() as f64;
        for &i in ring {
            regressor[joint * v + i] = w;
        }
    }

    let height = 0.95;
    let mut shape_basis = BlendBasis::zeros(v, cfg.shape_dims);
    for (i, (vi, &(region, _))) in info.iter().zip(&regions).enumerate() {
        let pos = mean_shape[i];
        for k in 0..cfg.shape_dims {
            let offset = match k {
                0 => vi.radial * 0.02,
                1 => Vector3::new(0.0, (pos.y - height) * 0.05, 0.0),
                2 if region == Region::Arm => vi.radial * 0.015,
                3 if region == Region::Leg => vi.radial * 0.015,
                4 if region == Region::Torso => Vector3::new(0.0, 0.0, vi.radial.z * 0.02),
                5 => Vector3::new(pos.x * 0.04, 0.0, 0.0),
                k if k >= 6 => vi.radial * (0.004 * libm::sin((k as f64 - 4.0) * 3.0 * pos.y)),
                _ => Vector3::zeros(),
            };
            for axis in 0..3 {
                shape_basis.set(i, axis, k, offset[axis]);
            }
        }
    }

    let head_top = mean_shape.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let mut expr_basis = BlendBasis::zeros(v, cfg.expr_dims);
    for (i, (vi, &(region, driver))) in info.iter().zip(&regions).enumerate() {
        let in_face = if j > HEAD {
            driver == HEAD
        } else {
            region != Region::Arm && mean_shape[i].y > head_top - 0.12
        };
        if !in_face {
            continue;
        }
        for k in 0..cfg.expr_dims {
            let offset = match k % 4 {
                0 => Vector3::new(0.0, 0.0, 0.01 * vi.radial.z.max(0.0)),
                1 => Vector3::new(0.01 * vi.radial.x, 0.0, 0.0),
                2 => Vector3::new(0.0, 0.01 * vi.along, 0.0),
                _ => vi.radial * (0.008 * libm::sin(3.0 * vi.angle + k as f64)),
            };
            for axis in 0..3 {
                expr_basis.set(i, axis, k, offset[axis]);
            }
        }
    }

    let non_root: Vec<usize> = (0..j).filter(|&a| parents[a].is_some()).collect();
    let mut pose_basis = BlendBasis::zeros(v, 9 * non_root.len());
    for i in 0..v {
        for (slot, &joint) in non_root.iter().enumerate() {
            let w = weights[i * j + joint];
            if w == 0.0 {
                continue;
            }
            for e in 0..9 {
                for axis in 0..3 {
                    let phase = (i * 31 + slot * 7 + e * 3 + axis) as f64;
                    pose_basis.set(i, axis, 9 * slot + e, 0.002 * w * libm::sin(phase));
                }
            }
        }
    }

    let template = BodyTemplate {
        mean_shape,
        faces,
        shape_basis,
        pose_basis,
        expr_basis,
        joint_regressor: regressor,
        skin_weights: weights,
        uv,
        parents,
    };
    template.validate()?;
    Ok(template)
}

/// A 3-vertex, 2-joint template with two shape and one expression
/// coefficient, for hand-checkable tests.
pub fn tiny_template() -> BodyTemplate {
    let v = 3;
    let mean_shape = vec![
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
    ];
    let shape = [
        0.1, -0.2, 0.0, 0.3, 0.05, 0.0, //
        0.2, 0.1, -0.1, 0.0, 0.0, 0.4, //
        -0.3, 0.2, 0.15, 0.1, 0.0, -0.05,
    ];
    let expr = [0.0, 0.0, 0.1, 0.05, 0.0, -0.02, 0.0, 0.07, 0.0];
    BodyTemplate {
        mean_shape,
        faces: vec![[0, 1, 2]],
        shape_basis: BlendBasis::from_vec(v, 2, shape.to_vec()).unwrap(),
        pose_basis: BlendBasis::zeros(v, 9),
        expr_basis: BlendBasis::from_vec(v, 1, expr.to_vec()).unwrap(),
        joint_regressor: vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.5, 0.5],
        skin_weights: vec![1.0, 0.0, 0.5, 0.5, 0.0, 1.0],
        uv: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        parents: vec![None, Some(0)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::regress_joints;

    #[test]
    fn shipped_templates_are_valid_and_desk_sized() {
        for t in shipped_templates() {
            t.validate().unwrap();
            assert!(t.vertex_count() <= 2000, "{}", t.vertex_count());
            assert!(t.vertex_count() >= 300);
        }
    }

    #[test]
    fn regressor_recovers_skeleton() {
        let t = toy_biped(&ToyBipedConfig::default()).unwrap();
        let joints = regress_joints(&t, &[0.0; 6]).unwrap();
        for (j, (p, _, _)) in SKELETON.iter().enumerate() {
            let d = joints[j] - Vector3::new(p[0], p[1], p[2]);
            assert!(d.norm() < 1e-12, "joint {j} off by {}", d.norm());
        }
    }

    #[test]
    fn joint_count_outside_family_is_rejected() {
        assert_eq!(
            toy_biped(&ToyBipedConfig::with_joints(3)).unwrap_err(),
            BodyError::UnsupportedJointCount(3)
        );
    }

    #[test]
    fn capsules_face_outward() {
        let t = toy_biped(&ToyBipedConfig::with_joints(4)).unwrap();
        let mesh = t.rest_mesh();
        // signed volume of closed outward-oriented surfaces is positive
        let vol: f64 = mesh
            .faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| mesh.vertices[i as usize]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum();
        assert!(vol > 0.0);
    }
}
