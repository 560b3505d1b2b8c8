use nalgebra::{Matrix2, Matrix3, Matrix4, Vector2, Vector3, Vector4};

use super::HarmonizeError;

/// Directional light plus constant ambient term.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LightModel {
    /// Unit vector pointing toward the light.
    pub direction: Vector3<f64>,
    pub intensity: f64,
    pub ambient: f64,
}

impl LightModel {
    pub fn new(direction: Vector3<f64>, intensity: f64, ambient: f64) -> Result<Self, HarmonizeError> {
        let n = direction.norm();
        if !(n > 0.0) || !(intensity >= 0.0) || !(ambient >= 0.0) {
            return Err(HarmonizeError::InvalidLight);
        }
        Ok(Self {
            direction: direction / n,
            intensity,
            ambient,
        })
    }

    /// `ambient + intensity·max(0, n·direction)`
    #[inline]
    pub fn shade(&self, normal: &Vector3<f64>) -> f64 {
        self.ambient + self.intensity * normal.dot(&self.direction).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightFitOptions {
    pub max_alternations: usize,
    /// Stop once the objective and direction both change less than this.
    pub tolerance: f64,
}

impl Default for LightFitOptions {
    fn default() -> Self {
        Self {
            max_alternations: 50,
            tolerance: 1e-8,
        }
    }
}

/// Fits `s ≈ a + i·max(0, n·l)` over the selected pixels.
///
/// Alternates an exact linear solve for `(a, i)` with a projected
/// Gauss-Newton step on the unit sphere for `l`, starting from the
/// unclamped linear fit `s ≈ a + n·m`. Pixels with zero normals are skipped.
pub fn estimate_light(
    normals: &[Vector3<f64>],
    shading: &[f64],
    mask: Option<&[bool]>,
) -> Result<LightModel, HarmonizeError> {
    estimate_light_with(normals, shading, mask, &LightFitOptions::default())
}

pub fn estimate_light_with(
    normals: &[Vector3<f64>],
    shading: &[f64],
    mask: Option<&[bool]>,
    opts: &LightFitOptions,
) -> Result<LightModel, HarmonizeError> {
    if normals.len() != shading.len() || mask.is_some_and(|m| m.len() != normals.len()) {
        return Err(HarmonizeError::Shape("normals, shading and mask must have equal length"));
    }
    let samples: alloc::vec::Vec<(Vector3<f64>, f64)> = normals
        .iter()
        .zip(shading)
        .enumerate()
        .filter(|(k, (n, s))| mask.is_none_or(|m| m[*k]) && n.norm_squared() > 0.0 && s.is_finite())
        .map(|(_, (n, s))| (n.normalize(), *s))
        .collect();
    if samples.len() < 4 {
        return Err(HarmonizeError::TooFewPixels(samples.len()));
    }
    let mean_s = samples.iter().map(|p| p.1).sum::<f64>() / samples.len() as f64;
    let n0 = samples[0].0;
    if samples.iter().all(|(n, _)| n.cross(&n0).norm() < 1e-9) {
        return Err(HarmonizeError::DegenerateNormals { level: mean_s });
    }

    // Unclamped start: s ≈ a + n·m.
    let mut ata = Matrix4::zeros();
    let mut atb = Vector4::zeros();
    for (n, s) in &samples {
        let row = Vector4::new(1.0, n.x, n.y, n.z);
        ata += row * row.transpose();
        atb += row * *s;
    }
    let mut dir = match ata.try_inverse().map(|inv| inv * atb) {
        Some(x) if Vector3::new(x[1], x[2], x[3]).norm() > 1e-12 => Vector3::new(x[1], x[2], x[3]).normalize(),
        _ => samples.iter().fold(Vector3::zeros(), |acc, (n, s)| acc + n * (*s - mean_s)).try_normalize(1e-12).unwrap_or(n0),
    };

    let objective = |l: &Vector3<f64>, a: f64, i: f64| -> f64 {
        samples.iter().map(|(n, s)| {
            let r = a + i * n.dot(l).max(0.0) - s;
            r * r
        }).sum()
    };
    let mut prev = f64::INFINITY;
    for _ in 0..opts.max_alternations {
        let (a, i) = solve_levels(&samples, &dir, mean_s);
        if i <= 0.0 {
            break;
        }
        // Gauss-Newton on l with (a, i) fixed, restricted to the tangent plane.
        let mut g = Vector3::zeros();
        let mut hmat = Matrix3::zeros();
        for (n, s) in &samples {
            if n.dot(&dir) > 0.0 {
                let r = a + i * n.dot(&dir) - s;
                g += n * (i * r);
                hmat += n * n.transpose() * (i * i);
            }
        }
        let proj = Matrix3::identity() - dir * dir.transpose();
        let g = proj * g;
        let hp = proj * hmat * proj + dir * dir.transpose();
        let step = match hp.try_inverse() {
            Some(inv) => -(proj * (inv * g)),
            None => -g,
        };
        let f0 = objective(&dir, a, i);
        let mut t = 1.0;
        let mut next = dir;
        while t > 1e-10 {
            let cand = (dir + step * t).normalize();
            if objective(&cand, a, i) <= f0 {
                next = cand;
                break;
            }
            t *= 0.5;
        }
        let moved = (next - dir).norm();
        dir = next;
        let f = objective(&dir, a, i);
        if (prev - f).abs() <= opts.tolerance * prev.max(1e-300) && moved < opts.tolerance || f == 0.0 {
            break;
        }
        prev = f;
    }
    let (a, i) = solve_levels(&samples, &dir, mean_s);
    LightModel::new(dir, i, a)
}

/// Least-squares `(a, i)` for fixed `l`, projected onto `a, i ≥ 0`.
fn solve_levels(samples: &[(Vector3<f64>, f64)], dir: &Vector3<f64>, mean_s: f64) -> (f64, f64) {
    let mut m = Matrix2::zeros();
    let mut b = Vector2::zeros();
    for (n, s) in samples {
        let f = n.dot(dir).max(0.0);
        let row = Vector2::new(1.0, f);
        m += row * row.transpose();
        b += row * *s;
    }
    let (a, i) = match m.try_inverse() {
        Some(inv) => {
            let x = inv * b;
            (x[0], x[1])
        }
        None => (mean_s, 0.0),
    };
    if i < 0.0 {
        return (mean_s.max(0.0), 0.0);
    }
    if a < 0.0 {
        let i = if m[(1, 1)] > 0.0 { (b[1] / m[(1, 1)]).max(0.0) } else { 0.0 };
        return (0.0, i);
    }
    (a, i)
}
