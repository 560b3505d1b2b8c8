use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{Matrix3, Vector3};

use super::blend::axis_angle_matrix;
use super::{BodyError, Mesh};

/// One frame of animation: a rotation per joint plus a global translation.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub axis_angles: Vec<Vector3<f64>>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn rest(joints: usize) -> Self {
        Self {
            axis_angles: vec![Vector3::zeros(); joints],
            translation: Vector3::zeros(),
        }
    }

    pub fn joints(&self) -> usize {
        self.axis_angles.len()
    }
}

/// Parents-before-children order over the kinematic tree.
pub fn kinematic_order(parents: &[Option<usize>]) -> Result<Vec<usize>, BodyError> {
    let n = parents.len();
    let mut children = vec![Vec::new(); n];
    let mut roots = Vec::new();
    for (j, p) in parents.iter().enumerate() {
        match *p {
            Some(p) if p >= n => {
                return Err(BodyError::InvalidParent {
                    joint: j,
                    parent: p,
                    count: n,
                })
            }
            Some(p) => children[p].push(j),
            None => roots.push(j),
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack: Vec<usize> = roots.into_iter().rev().collect();
    while let Some(j) = stack.pop() {
        order.push(j);
        stack.extend(children[j].iter().rev().copied());
    }
    if order.len() != n {
        let mut seen = vec![false; n];
        for &j in &order {
            seen[j] = true;
        }
        let stuck = seen.iter().position(|s| !s).unwrap_or(0);
        return Err(BodyError::CyclicKinematicTree(stuck));
    }
    Ok(order)
}

/// Per-joint skinning transforms `(R_j, t_j)` such that a rest-pose point
/// `v` rigidly attached to joint `j` lands at `R_j v + t_j`.
pub fn world_transforms(
    theta: &[Vector3<f64>],
    joints: &[Vector3<f64>],
    parents: &[Option<usize>],
) -> Result<Vec<(Matrix3<f64>, Vector3<f64>)>, BodyError> {
    let n = parents.len();
    for (what, len) in [("pose rotations", theta.len()), ("joint locations", joints.len())] {
        if len != n {
            return Err(BodyError::DimensionMismatch {
                what,
                expected: n,
                actual: len,
            });
        }
    }
    let order = kinematic_order(parents)?;
    let mut global = vec![(Matrix3::identity(), Vector3::zeros()); n];
    for &j in &order {
        let r = axis_angle_matrix(&theta[j]);
        global[j] = match parents[j] {
            None => (r, joints[j]),
            Some(p) => {
                let (pr, pt) = global[p];
                (pr * r, pr * (joints[j] - joints[p]) + pt)
            }
        };
    }
    Ok(global
        .into_iter()
        .zip(joints)
        .map(|((r, t), j)| (r, t - r * j))
        .collect())
}

/// Linear blend skinning of a canonical mesh.
pub fn skin(
    mesh: &Mesh,
    theta: &[Vector3<f64>],
    joints: &[Vector3<f64>],
    parents: &[Option<usize>],
) -> Result<Mesh, BodyError> {
    if mesh.joints != parents.len() {
        return Err(BodyError::DimensionMismatch {
            what: "mesh joint count",
            expected: parents.len(),
            actual: mesh.joints,
        });
    }
    let transforms = world_transforms(theta, joints, parents)?;
    let mut out = mesh.clone();
    for (i, v) in out.vertices.iter_mut().enumerate() {
        let rest = mesh.vertices[i];
        let mut acc = Vector3::zeros();
        for (w, (r, t)) in mesh.weights(i).iter().zip(&transforms) {
            if *w != 0.0 {
                acc += (r * rest + t) * *w;
            }
        }
        *v = acc;
    }
    Ok(out)
}

/// Skins the canonical mesh once per pose, preserving order.
pub fn animate_sequence(
    canonical: &Mesh,
    joints: &[Vector3<f64>],
    parents: &[Option<usize>],
    poses: &[Pose],
) -> Result<Vec<Mesh>, BodyError> {
    poses
        .iter()
        .map(|pose| {
            let mut m = skin(canonical, &pose.axis_angles, joints, parents)?;
            if pose.translation != Vector3::zeros() {
                for v in &mut m.vertices {
                    *v += pose.translation;
                }
            }
            Ok(m)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_is_rejected() {
        let parents = [Some(2), Some(0), Some(1)];
        assert!(matches!(
            kinematic_order(&parents),
            Err(BodyError::CyclicKinematicTree(_))
        ));
        let parents = [None, Some(2), Some(1)];
        assert!(matches!(
            kinematic_order(&parents),
            Err(BodyError::CyclicKinematicTree(_))
        ));
    }

    #[test]
    fn order_handles_unsorted_parents() {
        let parents = [Some(2), None, Some(1)];
        assert_eq!(kinematic_order(&parents).unwrap(), [1, 2, 0]);
    }

    #[test]
    fn empty_pose_sequence_is_empty() {
        let mesh = Mesh {
            vertices: vec![Vector3::new(1.0, 0.0, 0.0)],
            faces: vec![],
            uv: vec![[0.0, 0.0]],
            skin_weights: vec![1.0],
            joints: 1,
        };
        let out = animate_sequence(&mesh, &[Vector3::zeros()], &[None], &[]).unwrap();
        assert!(out.is_empty());
    }
}
