use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use nalgebra::Vector3;

use super::{BodyError, Mesh};

/// Linear map from base-mesh vertex positions to subdivided positions.
///
/// Each level keeps the incoming vertices in place and appends one vertex
/// per edge at the midpoint of its two endpoints.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SubdivisionMap {
    base_vertices: usize,
    levels: Vec<Vec<[u32; 2]>>,
}

impl SubdivisionMap {
    pub fn identity(base_vertices: usize) -> Self {
        Self {
            base_vertices,
            levels: Vec::new(),
        }
    }

    pub fn base_vertices(&self) -> usize {
        self.base_vertices
    }

    pub fn output_vertices(&self) -> usize {
        self.base_vertices + self.levels.iter().map(Vec::len).sum::<usize>()
    }

    /// Pushes base positions through every level.
    pub fn apply(&self, base: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        assert_eq!(base.len(), self.base_vertices, "subdivision map input size");
        let mut out = Vec::with_capacity(self.output_vertices());
        out.extend_from_slice(base);
        for level in &self.levels {
            for &[a, b] in level {
                let mid = (out[a as usize] + out[b as usize]) * 0.5;
                out.push(mid);
            }
        }
        out
    }

    /// Adjoint of [`apply`](Self::apply): gradient on base positions.
    pub fn transpose_apply(&self, grad: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        assert_eq!(grad.len(), self.output_vertices(), "subdivision map gradient size");
        let mut acc = grad.to_vec();
        let mut end = acc.len();
        for level in self.levels.iter().rev() {
            let start = end - level.len();
            for (k, &[a, b]) in level.iter().enumerate() {
                let g = acc[start + k] * 0.5;
                acc[a as usize] += g;
                acc[b as usize] += g;
            }
            end = start;
        }
        acc.truncate(self.base_vertices);
        acc
    }
}

/// Midpoint (1→4) subdivision applied `levels` times.
pub fn subdivide(mesh: &Mesh, levels: usize) -> Result<Mesh, BodyError> {
    subdivide_with_map(mesh, levels).map(|(m, _)| m)
}

/// [`subdivide`] that also returns the linear position map it applied.
pub fn subdivide_with_map(mesh: &Mesh, levels: usize) -> Result<(Mesh, SubdivisionMap), BodyError> {
    let mut current = mesh.clone();
    let mut map = SubdivisionMap::identity(mesh.vertex_count());
    for _ in 0..levels {
        let (next, edges) = subdivide_once(&current)?;
        map.levels.push(edges);
        current = next;
    }
    Ok((current, map))
}

fn subdivide_once(mesh: &Mesh) -> Result<(Mesh, Vec<[u32; 2]>), BodyError> {
    super::validate_faces(&mesh.faces, mesh.vertex_count())?;
    let n = mesh.vertex_count();
    let joints = mesh.joints;

    // edge -> (new vertex index, incident face count)
    let mut edge_index: BTreeMap<(u32, u32), (u32, u8)> = BTreeMap::new();
    let mut edges = Vec::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let key = if a < b { (a, b) } else { (b, a) };
            let next = (n + edges.len()) as u32;
            let entry = edge_index.entry(key).or_insert_with(|| {
                edges.push([key.0, key.1]);
                (next, 0)
            });
            entry.1 += 1;
            if entry.1 > 2 {
                return Err(BodyError::NonManifoldEdge(key.0 as usize, key.1 as usize));
            }
        }
    }

    let total = n + edges.len();
    let mut vertices = Vec::with_capacity(total);
    let mut uv = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total * joints);
    vertices.extend_from_slice(&mesh.vertices);
    uv.extend_from_slice(&mesh.uv);
    weights.extend_from_slice(&mesh.skin_weights);
    for &[a, b] in &edges {
        let (a, b) = (a as usize, b as usize);
        vertices.push((mesh.vertices[a] + mesh.vertices[b]) * 0.5);
        uv.push([
            0.5 * (mesh.uv[a][0] + mesh.uv[b][0]),
            0.5 * (mesh.uv[a][1] + mesh.uv[b][1]),
        ]);
        let start = weights.len();
        let mut sum = 0.0;
        for j in 0..joints {
            let w = 0.5 * (mesh.skin_weights[a * joints + j] + mesh.skin_weights[b * joints + j]);
            sum += w;
            weights.push(w);
        }
        if sum > 0.0 {
            for w in &mut weights[start..] {
                *w /= sum;
            }
        }
    }

    let mid = |a: u32, b: u32| {
        let key = if a < b { (a, b) } else { (b, a) };
        edge_index[&key].0
    };
    let mut faces = Vec::with_capacity(mesh.faces.len() * 4);
    for &[a, b, c] in &mesh.faces {
        let ab = mid(a, b);
        let bc = mid(b, c);
        let ca = mid(c, a);
        faces.push([a, ab, ca]);
        faces.push([b, bc, ab]);
        faces.push([c, ca, bc]);
        faces.push([ab, bc, ca]);
    }

    Ok((
        Mesh {
            vertices,
            faces,
            uv,
            skin_weights: weights,
            joints,
        },
        edges,
    ))
}
