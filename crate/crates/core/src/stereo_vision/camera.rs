use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use super::{Result, StereoError};

/// Pinhole intrinsics with the five-term radial/tangential distortion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub p1: f64,
    pub p2: f64,
    pub width: usize,
    pub height: usize,
}

impl PinholeCamera {
    /// Distortion-free camera with square pixels and a centred principal point.
    pub fn ideal(f: f64, width: usize, height: usize) -> Self {
        Self {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            p1: 0.0,
            p2: 0.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.fx, self.fy, self.cx, self.cy, self.k1, self.k2, self.k3, self.p1, self.p2,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || !(self.fx > 0.0) || !(self.fy > 0.0) {
            return Err(StereoError::InvalidCamera(
                "focal lengths must be positive and finite".into(),
            ));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(StereoError::InvalidCamera(
                "principal point outside the image".into(),
            ));
        }
        Ok(())
    }

    pub fn has_distortion(&self) -> bool {
        [self.k1, self.k2, self.k3, self.p1, self.p2]
            .iter()
            .any(|&v| v != 0.0)
    }

    pub fn intrinsic_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Applies lens distortion to normalised image coordinates.
    pub fn distort(&self, x: f64, y: f64) -> [f64; 2] {
        let r2 = x * x + y * y;
        let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
        [
            x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x),
            y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y,
        ]
    }

    /// Inverts [`distort`](Self::distort) by Newton iteration.
    pub fn undistort(&self, xd: f64, yd: f64) -> [f64; 2] {
        if !self.has_distortion() {
            return [xd, yd];
        }
        let (mut x, mut y) = (xd, yd);
        for _ in 0..30 {
            let [fx, fy] = self.distort(x, y);
            let (ex, ey) = (fx - xd, fy - yd);
            if ex.abs() < 1e-14 && ey.abs() < 1e-14 {
                break;
            }
            let r2 = x * x + y * y;
            let radial = 1.0 + r2 * (self.k1 + r2 * (self.k2 + r2 * self.k3));
            let dradial = self.k1 + r2 * (2.0 * self.k2 + 3.0 * self.k3 * r2);
            let j00 = radial + 2.0 * x * x * dradial + 2.0 * self.p1 * y + 6.0 * self.p2 * x;
            let j01 = 2.0 * x * y * dradial + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
            let j10 = 2.0 * x * y * dradial + 2.0 * self.p1 * x + 2.0 * self.p2 * y;
            let j11 = radial + 2.0 * y * y * dradial + 6.0 * self.p1 * y + 2.0 * self.p2 * x;
            let det = j00 * j11 - j01 * j10;
            if det.abs() < 1e-12 {
                break;
            }
            x -= (j11 * ex - j01 * ey) / det;
            y -= (-j10 * ex + j00 * ey) / det;
        }
        [x, y]
    }

    /// Projects a point in camera coordinates (mm); `None` behind the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<[f64; 2]> {
        if p.z <= 0.0 {
            return None;
        }
        let [xd, yd] = self.distort(p.x / p.z, p.y / p.z);
        Some([self.fx * xd + self.cx, self.fy * yd + self.cy])
    }

    /// Undistorted normalised ray direction (z = 1) through a pixel.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vector3<f64> {
        let [x, y] = self.undistort((u - self.cx) / self.fx, (v - self.cy) / self.fy);
        Vector3::new(x, y, 1.0)
    }
}

/// Rectified geometry shared by both cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct Rectification {
    /// Rotates left-camera coordinates into the rectified frame.
    pub r_left: Matrix3<f64>,
    /// Rotates right-camera coordinates into the rectified frame.
    pub r_right: Matrix3<f64>,
    /// Common intrinsics of the two rectified, distortion-free views.
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
    /// Distance between the optical centres, in mm.
    pub baseline: f64,
    /// Maps `(x, y, d, 1)` to homogeneous `(X, Y, Z, W)` in the rectified left frame.
    pub q: Matrix4<f64>,
}

/// Calibrated camera pair. A point in left-camera coordinates maps to the
/// right camera as `X_r = rotation · X_l + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoRig {
    pub left: PinholeCamera,
    pub right: PinholeCamera,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub rectification: Rectification,
    /// RMS reprojection error reported by calibration, if the rig came from one.
    pub rms_reprojection_px: Option<f64>,
}

impl StereoRig {
    pub fn new(
        left: PinholeCamera,
        right: PinholeCamera,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        left.validate()?;
        right.validate()?;
        if left.width != right.width || left.height != right.height {
            return Err(StereoError::InvalidCamera(
                "left and right image sizes differ".into(),
            ));
        }
        if (rotation.transpose() * rotation - Matrix3::identity()).norm() > 1e-9
            || rotation.determinant() < 0.0
        {
            return Err(StereoError::InvalidCamera(
                "rotation is not orthonormal".into(),
            ));
        }
        if !(translation.norm() > 0.0) {
            return Err(StereoError::InvalidCamera("zero baseline".into()));
        }
        let rectification = compute_rectification(&left, &right, &rotation, &translation);
        Ok(Self {
            left,
            right,
            rotation,
            translation,
            rectification,
            rms_reprojection_px: None,
        })
    }

    /// Two identical ideal cameras side by side, the right one `baseline_mm`
    /// along +x.
    pub fn ideal(f: f64, width: usize, height: usize, baseline_mm: f64) -> Result<Self> {
        let cam = PinholeCamera::ideal(f, width, height);
        Self::new(
            cam,
            cam,
            Matrix3::identity(),
            Vector3::new(-baseline_mm, 0.0, 0.0),
        )
    }

    pub fn baseline(&self) -> f64 {
        self.translation.norm()
    }

    /// Right camera centre in left-camera coordinates.
    pub fn right_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&RigFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RigFile = serde_json::from_str(text)?;
        let mut rig = Self::new(
            file.left,
            file.right,
            from_rows3(&file.rotation),
            Vector3::from(file.translation),
        )?;
        rig.rms_reprojection_px = file.rms_reprojection_px;
        Ok(rig)
    }
}

/// Bouguet-style rectification: both views are rotated onto a common
/// orientation whose x axis is the baseline and whose z axis averages the
/// two optical axes.
fn compute_rectification(
    left: &PinholeCamera,
    right: &PinholeCamera,
    rotation: &Matrix3<f64>,
    translation: &Vector3<f64>,
) -> Rectification {
    let center = -(rotation.transpose() * translation);
    let baseline = center.norm();
    let e1 = center / baseline;
    let z_avg = (Vector3::z() + rotation.transpose() * Vector3::z()).normalize();
    let e2 = z_avg.cross(&e1).normalize();
    let e3 = e1.cross(&e2);
    let r_left = Matrix3::from_rows(&[e1.transpose(), e2.transpose(), e3.transpose()]);
    let r_right = r_left * rotation.transpose();
    let f = 0.25 * (left.fx + left.fy + right.fx + right.fy);
    let cx = 0.5 * (left.cx + right.cx);
    let cy = 0.5 * (left.cy + right.cy);
    #[rustfmt::skip]
    let q = Matrix4::new(
        1.0, 0.0, 0.0, -cx,
        0.0, 1.0, 0.0, -cy,
        0.0, 0.0, 0.0, f,
        0.0, 0.0, 1.0 / baseline, 0.0,
    );
    Rectification {
        r_left,
        r_right,
        f,
        cx,
        cy,
        baseline,
        q,
    }
}

#[derive(Serialize, Deserialize)]
struct RigFile {
    left: PinholeCamera,
    right: PinholeCamera,
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    #[serde(default)]
    rms_reprojection_px: Option<f64>,
    /// Written for consumers; recomputed from the calibration on load.
    #[serde(default)]
    q: Option<[[f64; 4]; 4]>,
}

impl From<&StereoRig> for RigFile {
    fn from(rig: &StereoRig) -> Self {
        let q = rig.rectification.q;
        Self {
            left: rig.left,
            right: rig.right,
            rotation: to_rows3(&rig.rotation),
            translation: rig.translation.into(),
            rms_reprojection_px: rig.rms_reprojection_px,
            q: Some(std::array::from_fn(|r| std::array::from_fn(|c| q[(r, c)]))),
        }
    }
}

fn to_rows3(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
}

fn from_rows3(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| rows[r][c])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undistort_inverts_distort() {
        let mut cam = PinholeCamera::ideal(800.0, 640, 480);
        cam.k1 = -0.3;
        cam.k2 = 0.08;
        cam.p1 = 0.001;
        cam.p2 = -0.0005;
        for &(x, y) in &[(0.0, 0.0), (0.3, -0.2), (-0.38, 0.29), (0.1, 0.25)] {
            let [xd, yd] = cam.distort(x, y);
            let [xu, yu] = cam.undistort(xd, yd);
            assert!((xu - x).abs() < 1e-10 && (yu - y).abs() < 1e-10);
        }
    }

    #[test]
    fn ideal_rig_has_textbook_q() {
        let rig = StereoRig::ideal(800.0, 640, 480, 14.0).unwrap();
        let r = &rig.rectification;
        assert!((r.r_left - Matrix3::identity()).norm() < 1e-12);
        assert!((r.r_right - Matrix3::identity()).norm() < 1e-12);
        assert_eq!(r.baseline, 14.0);
        let p = r.q * nalgebra::Vector4::new(319.5, 239.5, 56.0, 1.0);
        assert!((p.z / p.w - 200.0).abs() < 1e-12);
    }

    #[test]
    fn rig_json_round_trip() {
        let mut right = PinholeCamera::ideal(805.0, 640, 480);
        right.k1 = -0.1;
        let rot = nalgebra::Rotation3::from_euler_angles(0.01, -0.02, 0.005).into_inner();
        let rig = StereoRig::new(
            PinholeCamera::ideal(800.0, 640, 480),
            right,
            rot,
            Vector3::new(-14.0, 0.1, 0.2),
        )
        .unwrap();
        let back = StereoRig::from_json(&rig.to_json().unwrap()).unwrap();
        assert_eq!(back, rig);
    }

    #[test]
    fn rejects_bad_geometry() {
        let cam = PinholeCamera::ideal(800.0, 640, 480);
        let skew = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(StereoRig::new(cam, cam, skew, Vector3::new(-14.0, 0.0, 0.0)).is_err());
        assert!(StereoRig::new(cam, cam, Matrix3::identity(), Vector3::zeros()).is_err());
    }
}
