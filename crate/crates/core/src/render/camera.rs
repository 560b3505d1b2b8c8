use nalgebra::{Matrix3, Vector3};

/// Pinhole camera. Camera space is right-handed with `+x` right, `+y` up
/// and the view direction along `-z`; pixel `(0, 0)` is the top-left corner.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Camera {
    /// Focal length in pixels.
    pub focal: f64,
    /// Principal point in pixels.
    pub principal: [f64; 2],
    /// World→camera rotation.
    pub rotation: Matrix3<f64>,
    /// World→camera translation.
    pub translation: Vector3<f64>,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CameraError {
    #[error("focal length must be positive and finite, got {0}")]
    NonPositiveFocal(f64),
    #[error("field of view must lie in (0, π) radians, got {0}")]
    FieldOfView(f64),
    #[error("rotation is not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("resolution must be non-zero")]
    EmptyResolution,
    #[error("look-at eye coincides with target or is parallel to up")]
    DegenerateLookAt,
}

impl Camera {
    /// Camera at `eye` looking at `target`, vertical field of view in radians.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        fov_y: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, CameraError> {
        if !(fov_y > 0.0 && fov_y < core::f64::consts::PI) {
            return Err(CameraError::FieldOfView(fov_y));
        }
        let forward = target - eye;
        if forward.norm() == 0.0 {
            return Err(CameraError::DegenerateLookAt);
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-12 {
            return Err(CameraError::DegenerateLookAt);
        }
        let right = right.normalize();
        let true_up = right.cross(&forward);
        let rotation = Matrix3::from_rows(&[right.transpose(), true_up.transpose(), (-forward).transpose()]);
        let focal = 0.5 * height as f64 / libm::tan(0.5 * fov_y);
        let cam = Self {
            focal,
            principal: [0.5 * width as f64, 0.5 * height as f64],
            translation: -(rotation * eye),
            rotation,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return Err(CameraError::NonPositiveFocal(self.focal));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CameraError::EmptyResolution);
        }
        let dev = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        if dev > 1e-9 {
            return Err(CameraError::NotOrthonormal(dev));
        }
        Ok(())
    }

    /// Same pose and field of view at a different resolution.
    pub fn with_resolution(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            focal: self.focal * sy,
            principal: [self.principal[0] * sx, self.principal[1] * sy],
            width,
            height,
            ..self.clone()
        }
    }

    #[inline]
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Projects a camera-space point to `(pixel x, pixel y, depth)`, with
    /// depth the positive distance along the view axis.
    #[inline]
    pub fn project_camera(&self, pc: &Vector3<f64>) -> (f64, f64, f64) {
        let depth = -pc.z;
        (
            self.principal[0] + self.focal * pc.x / depth,
            self.principal[1] - self.focal * pc.y / depth,
            depth,
        )
    }

    pub fn eye(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}
