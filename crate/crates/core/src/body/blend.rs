use alloc::vec::Vec;
use nalgebra::{Matrix3, Rotation3, Vector3};

use super::{BodyError, BodyTemplate, Mesh};

/// Rotation matrix of an axis-angle vector (Rodrigues).
#[inline]
pub(crate) fn axis_angle_matrix(v: &Vector3<f64>) -> Matrix3<f64> {
    Rotation3::new(*v).into_inner()
}

/// Flattened `R(θ_j) − I` over non-root joints, row-major per joint.
pub fn pose_feature(theta: &[Vector3<f64>], parents: &[Option<usize>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(9 * parents.len());
    for (j, parent) in parents.iter().enumerate() {
        if parent.is_none() {
            continue;
        }
        let m = axis_angle_matrix(&theta[j]) - Matrix3::identity();
        for r in 0..3 {
            for c in 0..3 {
                out.push(m[(r, c)]);
            }
        }
    }
    out
}

fn expect_len(what: &'static str, expected: usize, actual: usize) -> Result<(), BodyError> {
    if expected == actual {
        Ok(())
    } else {
        Err(BodyError::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}

/// `meanShape + B_s·β + B_p·p(θ) + B_e·ψ` on template topology.
pub fn canonical_shape(
    template: &BodyTemplate,
    beta: &[f64],
    theta: &[Vector3<f64>],
    psi: &[f64],
) -> Result<Mesh, BodyError> {
    expect_len("shape coefficients", template.shape_dims(), beta.len())?;
    expect_len("pose rotations", template.joint_count(), theta.len())?;
    expect_len("expression coefficients", template.expr_dims(), psi.len())?;
    let mut vertices = template.mean_shape.clone();
    template.shape_basis.accumulate(beta, &mut vertices);
    template
        .pose_basis
        .accumulate(&pose_feature(theta, &template.parents), &mut vertices);
    template.expr_basis.accumulate(psi, &mut vertices);
    Ok(Mesh {
        vertices,
        faces: template.faces.clone(),
        uv: template.uv.clone(),
        skin_weights: template.skin_weights.clone(),
        joints: template.joint_count(),
    })
}

/// Joint locations `J(β)` regressed from the un-subdivided shaped template.
pub fn regress_joints(template: &BodyTemplate, beta: &[f64]) -> Result<Vec<Vector3<f64>>, BodyError> {
    expect_len("shape coefficients", template.shape_dims(), beta.len())?;
    let mut shaped = template.mean_shape.clone();
    template.shape_basis.accumulate(beta, &mut shaped);
    let v = template.vertex_count();
    Ok(template
        .joint_regressor
        .chunks(v)
        .map(|row| {
            row.iter()
                .zip(&shaped)
                .filter(|(w, _)| **w != 0.0)
                .fold(Vector3::zeros(), |acc, (w, p)| acc + p * *w)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::toy::tiny_template;
    use crate::body::BlendBasis;

    #[test]
    fn rest_parameters_give_mean_shape() {
        let t = tiny_template();
        let rest = alloc::vec![Vector3::zeros(); t.joint_count()];
        let mesh = canonical_shape(&t, &[0.0; 2], &rest, &[0.0]).unwrap();
        assert_eq!(mesh.vertices, t.mean_shape);
    }

    #[test]
    fn unit_beta_adds_basis_column() {
        let t = tiny_template();
        let rest = alloc::vec![Vector3::zeros(); t.joint_count()];
        let mesh = canonical_shape(&t, &[1.0, 0.0], &rest, &[0.0]).unwrap();
        let col = t.shape_basis.column(0);
        for i in 0..t.vertex_count() {
            assert_eq!(mesh.vertices[i], t.mean_shape[i] + col[i]);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let t = tiny_template();
        let rest = alloc::vec![Vector3::zeros(); t.joint_count()];
        let err = canonical_shape(&t, &[0.0; 3], &rest, &[0.0]).unwrap_err();
        assert!(matches!(err, BodyError::DimensionMismatch { expected: 2, actual: 3, .. }));
    }

    #[test]
    fn one_hot_regressor_selects_vertices() {
        let mut t = tiny_template();
        let v = t.vertex_count();
        t.joint_regressor = alloc::vec![0.0; t.joint_count() * v];
        t.joint_regressor[0] = 1.0;
        t.joint_regressor[v + 2] = 1.0;
        let joints = regress_joints(&t, &[0.0, 0.0]).unwrap();
        assert_eq!(joints[0], t.mean_shape[0]);
        assert_eq!(joints[1], t.mean_shape[2]);
    }

    #[test]
    fn pose_feature_vanishes_at_rest() {
        let parents = [None, Some(0), Some(1)];
        let f = pose_feature(&[Vector3::zeros(); 3], &parents);
        assert_eq!(f.len(), 18);
        assert!(f.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pose_basis_contributes_when_posed() {
        let mut t = tiny_template();
        let dims = t.pose_basis.dims();
        let mut basis = BlendBasis::zeros(t.vertex_count(), dims);
        basis.set(0, 1, 0, 1.0);
        t.pose_basis = basis;
        let mut theta = alloc::vec![Vector3::zeros(); t.joint_count()];
        theta[1] = Vector3::new(0.0, 0.0, 0.3);
        let mesh = canonical_shape(&t, &[0.0; 2], &theta, &[0.0]).unwrap();
        let expected = libm::cos(0.3) - 1.0;
        assert!((mesh.vertices[0].y - t.mean_shape[0].y - expected).abs() < 1e-12);
    }
}
