//! Parametric human body.
//!
//! A [`BodyTemplate`] carries the rest-pose mean shape with linear shape,
//! pose and expression blend bases, a joint regressor, skinning weights and
//! the kinematic tree. [`canonical_shape`] evaluates the blend shapes,
//! [`subdivide`] refines topology with interpolated skinning weights,
//! [`canonical_human`] adds per-vertex displacements on the refined mesh and
//! [`skin`] / [`animate_sequence`] pose it with linear blend skinning.

mod blend;
mod rig;
mod skin;
mod subdivide;
pub mod toy;

use alloc::vec::Vec;
use nalgebra::Vector3;

pub use blend::{canonical_shape, pose_feature, regress_joints};
pub use rig::{CanonicalRig, ParamGrads};
pub use skin::{animate_sequence, kinematic_order, skin, world_transforms, Pose};
pub use subdivide::{subdivide, subdivide_with_map, SubdivisionMap};

use crate::image::Image;

/// Tolerance on simplex rows (skinning weights, regressor rows).
pub const WEIGHT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BodyError {
    #[error("{what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("face {face} references vertex {vertex} but the mesh has {count} vertices")]
    InvalidFaceIndex {
        face: usize,
        vertex: usize,
        count: usize,
    },
    #[error("edge ({0}, {1}) is shared by more than two faces")]
    NonManifoldEdge(usize, usize),
    #[error("skin weight row {row} is not a probability simplex (sum {sum})")]
    InvalidSkinWeights { row: usize, sum: f64 },
    #[error("joint regressor row {row} sums to {sum}, expected 1")]
    InvalidRegressor { row: usize, sum: f64 },
    #[error("kinematic tree contains a cycle through joint {0}")]
    CyclicKinematicTree(usize),
    #[error("toy templates support 4..=24 joints, got {0}")]
    UnsupportedJointCount(usize),
    #[error("joint {joint} has parent {parent} outside the {count} joints")]
    InvalidParent {
        joint: usize,
        parent: usize,
        count: usize,
    },
}

/// Linear vertex-offset basis stored as `[vertex][axis][coefficient]`.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlendBasis {
    vertices: usize,
    dims: usize,
    data: Vec<f64>,
}

impl BlendBasis {
    pub fn zeros(vertices: usize, dims: usize) -> Self {
        Self {
            vertices,
            dims,
            data: alloc::vec![0.0; vertices * 3 * dims],
        }
    }

    pub fn from_vec(vertices: usize, dims: usize, data: Vec<f64>) -> Result<Self, BodyError> {
        if data.len() != vertices * 3 * dims {
            return Err(BodyError::DimensionMismatch {
                what: "blend basis length",
                expected: vertices * 3 * dims,
                actual: data.len(),
            });
        }
        Ok(Self {
            vertices,
            dims,
            data,
        })
    }

    #[inline]
    pub fn vertices(&self) -> usize {
        self.vertices
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, vertex: usize, axis: usize, k: usize) -> f64 {
        self.data[(vertex * 3 + axis) * self.dims + k]
    }

    #[inline]
    pub fn set(&mut self, vertex: usize, axis: usize, k: usize, value: f64) {
        self.data[(vertex * 3 + axis) * self.dims + k] = value;
    }

    /// Basis column `k` as per-vertex offsets.
    pub fn column(&self, k: usize) -> Vec<Vector3<f64>> {
        (0..self.vertices)
            .map(|v| Vector3::new(self.get(v, 0, k), self.get(v, 1, k), self.get(v, 2, k)))
            .collect()
    }

    /// `out[v] += B · coeffs`.
    pub fn accumulate(&self, coeffs: &[f64], out: &mut [Vector3<f64>]) {
        debug_assert_eq!(coeffs.len(), self.dims);
        if self.dims == 0 || coeffs.iter().all(|&c| c == 0.0) {
            return;
        }
        for (v, o) in out.iter_mut().enumerate().take(self.vertices) {
            for axis in 0..3 {
                let row = &self.data[(v * 3 + axis) * self.dims..][..self.dims];
                o[axis] += row.iter().zip(coeffs).map(|(b, c)| b * c).sum::<f64>();
            }
        }
    }

    /// `Bᵀ · grad`, the coefficient gradient of per-vertex gradients.
    pub fn transpose_apply(&self, grad: &[Vector3<f64>]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.dims];
        for (v, g) in grad.iter().enumerate().take(self.vertices) {
            for axis in 0..3 {
                let row = &self.data[(v * 3 + axis) * self.dims..][..self.dims];
                for (o, b) in out.iter_mut().zip(row) {
                    *o += b * g[axis];
                }
            }
        }
        out
    }
}

/// Rest-pose body model with blend bases, regressor, skinning weights and tree.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BodyTemplate {
    pub mean_shape: Vec<Vector3<f64>>,
    pub faces: Vec<[u32; 3]>,
    pub shape_basis: BlendBasis,
    /// Columns index `9 * k + 3 * row + col` over non-root joints `k` in
    /// joint order, matching [`pose_feature`].
    pub pose_basis: BlendBasis,
    pub expr_basis: BlendBasis,
    /// `J × V`, row-major.
    pub joint_regressor: Vec<f64>,
    /// `V × J`, row-major.
    pub skin_weights: Vec<f64>,
    pub uv: Vec<[f64; 2]>,
    pub parents: Vec<Option<usize>>,
}

impl BodyTemplate {
    #[inline]
    pub fn vertex_count(&self) -> usize {
        self.mean_shape.len()
    }

    #[inline]
    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    #[inline]
    pub fn shape_dims(&self) -> usize {
        self.shape_basis.dims()
    }

    #[inline]
    pub fn expr_dims(&self) -> usize {
        self.expr_basis.dims()
    }

    /// Number of joints with a parent; the pose basis has nine columns each.
    pub fn non_root_joints(&self) -> usize {
        self.parents.iter().filter(|p| p.is_some()).count()
    }

    /// Checks every structural invariant of the template.
    pub fn validate(&self) -> Result<(), BodyError> {
        let v = self.vertex_count();
        let j = self.joint_count();
        let check = |what, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(BodyError::DimensionMismatch {
                    what,
                    expected,
                    actual,
                })
            }
        };
        check("uv count", v, self.uv.len())?;
        check("skin weight entries", v * j, self.skin_weights.len())?;
        check("joint regressor entries", j * v, self.joint_regressor.len())?;
        check("shape basis vertices", v, self.shape_basis.vertices())?;
        check("expression basis vertices", v, self.expr_basis.vertices())?;
        check("pose basis vertices", v, self.pose_basis.vertices())?;
        check("pose basis dims", 9 * self.non_root_joints(), self.pose_basis.dims())?;
        for (joint, parent) in self.parents.iter().enumerate() {
            if let Some(p) = *parent {
                if p >= j {
                    return Err(BodyError::InvalidParent {
                        joint,
                        parent: p,
                        count: j,
                    });
                }
            }
        }
        kinematic_order(&self.parents)?;
        validate_faces(&self.faces, v)?;
        validate_weight_rows(&self.skin_weights, j)?;
        for (row, chunk) in self.joint_regressor.chunks(v.max(1)).enumerate() {
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
                return Err(BodyError::InvalidRegressor { row, sum });
            }
        }
        Ok(())
    }

    /// Rest-pose mesh with template topology, UVs and skinning weights.
    pub fn rest_mesh(&self) -> Mesh {
        Mesh {
            vertices: self.mean_shape.clone(),
            faces: self.faces.clone(),
            uv: self.uv.clone(),
            skin_weights: self.skin_weights.clone(),
            joints: self.joint_count(),
        }
    }

    /// All-zero parameters sized for this template at `levels` of subdivision.
    pub fn zero_params(&self, levels: usize, texture_size: (usize, usize)) -> BodyParams {
        let subdivided = subdivide(&self.rest_mesh(), levels)
            .expect("validated template subdivides")
            .vertex_count();
        BodyParams {
            beta: alloc::vec![0.0; self.shape_dims()],
            theta: alloc::vec![Vector3::zeros(); self.joint_count()],
            psi: alloc::vec![0.0; self.expr_dims()],
            displacement: alloc::vec![Vector3::zeros(); subdivided],
            texture: Image::filled(texture_size.0, texture_size.1, 3, 0.5),
        }
    }
}

pub(crate) fn validate_faces(faces: &[[u32; 3]], vertex_count: usize) -> Result<(), BodyError> {
    for (face, tri) in faces.iter().enumerate() {
        for &vertex in tri {
            if vertex as usize >= vertex_count {
                return Err(BodyError::InvalidFaceIndex {
                    face,
                    vertex: vertex as usize,
                    count: vertex_count,
                });
            }
        }
    }
    Ok(())
}

pub(crate) fn validate_weight_rows(weights: &[f64], joints: usize) -> Result<(), BodyError> {
    if joints == 0 {
        return Ok(());
    }
    for (row, chunk) in weights.chunks(joints).enumerate() {
        let sum: f64 = chunk.iter().sum();
        if chunk.iter().any(|&w| w < 0.0 || !w.is_finite()) || (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(BodyError::InvalidSkinWeights { row, sum });
        }
    }
    Ok(())
}

/// Optimizable body symbols: shape, pose, expression, displacement, texture.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyParams {
    pub beta: Vec<f64>,
    /// One axis-angle rotation (radians) per joint.
    pub theta: Vec<Vector3<f64>>,
    pub psi: Vec<f64>,
    /// Canonical-space offsets, one per subdivided vertex.
    pub displacement: Vec<Vector3<f64>>,
    /// `H_t × W_t × 3` albedo texture in `[0, 1]`.
    pub texture: Image,
}

/// Triangle mesh with per-vertex UVs and skinning weights (`N × J`).
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[u32; 3]>,
    pub uv: Vec<[f64; 2]>,
    pub skin_weights: Vec<f64>,
    pub joints: usize,
}

impl Mesh {
    #[inline]
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    #[inline]
    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    #[inline]
    pub fn weights(&self, vertex: usize) -> &[f64] {
        &self.skin_weights[vertex * self.joints..(vertex + 1) * self.joints]
    }

    pub fn validate(&self) -> Result<(), BodyError> {
        let n = self.vertex_count();
        if self.uv.len() != n {
            return Err(BodyError::DimensionMismatch {
                what: "uv count",
                expected: n,
                actual: self.uv.len(),
            });
        }
        if self.skin_weights.len() != n * self.joints {
            return Err(BodyError::DimensionMismatch {
                what: "skin weight entries",
                expected: n * self.joints,
                actual: self.skin_weights.len(),
            });
        }
        validate_faces(&self.faces, n)?;
        validate_weight_rows(&self.skin_weights, self.joints)
    }

    /// Area-weighted vertex normals; isolated vertices get a zero normal.
    pub fn vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut sums = alloc::vec![Vector3::zeros(); self.vertex_count()];
        for f in &self.faces {
            let [a, b, c] = f.map(|i| i as usize);
            let cross = (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
            sums[a] += cross;
            sums[b] += cross;
            sums[c] += cross;
        }
        sums.into_iter()
            .map(|s| {
                let n = s.norm();
                if n > 0.0 {
                    s / n
                } else {
                    Vector3::zeros()
                }
            })
            .collect()
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }
}

/// Canonical human: subdivided blend-shape mesh plus per-vertex displacement,
/// evaluated at the rest pose (`params.theta` is ignored here).
pub fn canonical_human(
    template: &BodyTemplate,
    params: &BodyParams,
    levels: usize,
) -> Result<Mesh, BodyError> {
    let rest = alloc::vec![Vector3::zeros(); template.joint_count()];
    let shaped = canonical_shape(template, &params.beta, &rest, &params.psi)?;
    let mut mesh = subdivide(&shaped, levels)?;
    if params.displacement.len() != mesh.vertex_count() {
        return Err(BodyError::DimensionMismatch {
            what: "displacement vertex count",
            expected: mesh.vertex_count(),
            actual: params.displacement.len(),
        });
    }
    for (v, d) in mesh.vertices.iter_mut().zip(&params.displacement) {
        *v += d;
    }
    Ok(mesh)
}
