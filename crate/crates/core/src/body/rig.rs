use alloc::vec::Vec;
use nalgebra::Vector3;

use super::{canonical_shape, subdivide_with_map, BodyError, BodyParams, BodyTemplate, Mesh, SubdivisionMap};

/// A template bound to a subdivision level, with the refined topology and
/// the linear position map cached so the canonical human can be rebuilt
/// and differentiated every optimizer step without redoing topology work.
#[derive(Debug, Clone)]
pub struct CanonicalRig {
    template: BodyTemplate,
    levels: usize,
    topology: Mesh,
    map: SubdivisionMap,
}

/// Gradients of a scalar objective on the geometry parameter groups.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamGrads {
    pub beta: Vec<f64>,
    pub psi: Vec<f64>,
    pub displacement: Vec<Vector3<f64>>,
}

impl ParamGrads {
    pub fn zeros_like(params: &BodyParams) -> Self {
        Self {
            beta: alloc::vec![0.0; params.beta.len()],
            psi: alloc::vec![0.0; params.psi.len()],
            displacement: alloc::vec![Vector3::zeros(); params.displacement.len()],
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.beta.iter_mut().for_each(|g| *g *= s);
        self.psi.iter_mut().for_each(|g| *g *= s);
        self.displacement.iter_mut().for_each(|g| *g *= s);
    }

    pub fn norm(&self) -> f64 {
        let sq: f64 = self.beta.iter().map(|g| g * g).sum::<f64>()
            + self.psi.iter().map(|g| g * g).sum::<f64>()
            + self.displacement.iter().map(|g| g.norm_squared()).sum::<f64>();
        libm::sqrt(sq)
    }

    pub fn is_finite(&self) -> bool {
        self.beta.iter().chain(&self.psi).all(|g| g.is_finite())
            && self.displacement.iter().all(|g| g.iter().all(|x| x.is_finite()))
    }
}

impl CanonicalRig {
    pub fn new(template: BodyTemplate, levels: usize) -> Result<Self, BodyError> {
        template.validate()?;
        let (topology, map) = subdivide_with_map(&template.rest_mesh(), levels)?;
        Ok(Self {
            template,
            levels,
            topology,
            map,
        })
    }

    pub fn template(&self) -> &BodyTemplate {
        &self.template
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn vertex_count(&self) -> usize {
        self.topology.vertex_count()
    }

    /// Subdivided rest topology (mean-shape positions).
    pub fn topology(&self) -> &Mesh {
        &self.topology
    }

    pub fn zero_params(&self, texture_size: (usize, usize)) -> BodyParams {
        self.template.zero_params(self.levels, texture_size)
    }

    /// `S(T(β, 0, ψ)) + D` at the rest pose.
    pub fn build(&self, params: &BodyParams) -> Result<Mesh, BodyError> {
        if params.displacement.len() != self.vertex_count() {
            return Err(BodyError::DimensionMismatch {
                what: "displacement vertex count",
                expected: self.vertex_count(),
                actual: params.displacement.len(),
            });
        }
        let rest = alloc::vec![Vector3::zeros(); self.template.joint_count()];
        let shaped = canonical_shape(&self.template, &params.beta, &rest, &params.psi)?;
        let mut vertices = self.map.apply(&shaped.vertices);
        for (v, d) in vertices.iter_mut().zip(&params.displacement) {
            *v += d;
        }
        Ok(Mesh {
            vertices,
            ..self.topology.clone()
        })
    }

    /// Chains per-vertex gradients on the built mesh back to `(β, ψ, D)`.
    pub fn pullback(&self, vertex_grad: &[Vector3<f64>]) -> ParamGrads {
        let base = self.map.transpose_apply(vertex_grad);
        ParamGrads {
            beta: self.template.shape_basis.transpose_apply(&base),
            psi: self.template.expr_basis.transpose_apply(&base),
            displacement: vertex_grad.to_vec(),
        }
    }

    /// Joint locations of the shaped, un-subdivided template.
    pub fn joints(&self, beta: &[f64]) -> Result<Vec<Vector3<f64>>, BodyError> {
        super::regress_joints(&self.template, beta)
    }
}
