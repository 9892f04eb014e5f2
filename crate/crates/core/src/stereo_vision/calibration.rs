use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{PinholeCamera, Result, StereoError, StereoRig};

/// Planar checkerboard described by its inner-corner lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoardSpec {
    pub cols: usize,
    pub rows: usize,
    pub pitch_mm: f64,
}

impl Default for BoardSpec {
    fn default() -> Self {
        Self {
            cols: 8,
            rows: 6,
            pitch_mm: 17.0,
        }
    }
}

impl BoardSpec {
    pub fn corner_count(&self) -> usize {
        self.cols * self.rows
    }

    /// Corner positions on the board plane (z = 0), row by row.
    pub fn object_points(&self) -> Vec<Vector3<f64>> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (c, r)))
            .map(|(c, r)| Vector3::new(c as f64 * self.pitch_mm, r as f64 * self.pitch_mm, 0.0))
            .collect()
    }
}

/// Detected corners of one board pose in both cameras, in board order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerFrame {
    pub left: Vec<[f64; 2]>,
    pub right: Vec<[f64; 2]>,
}

const MIN_FRAMES: usize = 10;
const MIN_TILT_SPREAD_DEG: f64 = 5.0;
const N_INTRINSICS: usize = 9;

/// Stereo calibration by joint Levenberg–Marquardt over both cameras'
/// intrinsics and distortion, the relative pose and every board pose,
/// initialised from per-camera homographies and Zhang's closed form.
///
/// The returned rig carries the per-coordinate RMS reprojection error.
pub fn calibrate_stereo(
    frames: &[CornerFrame],
    board: &BoardSpec,
    width: usize,
    height: usize,
) -> Result<StereoRig> {
    if frames.len() < MIN_FRAMES {
        return Err(StereoError::InsufficientPoseDiversity(format!(
            "need at least {MIN_FRAMES} frames, got {}",
            frames.len()
        )));
    }
    let n = board.corner_count();
    for (i, f) in frames.iter().enumerate() {
        if f.left.len() != n || f.right.len() != n {
            return Err(StereoError::MalformedCorners(format!(
                "frame {i}: expected {n} corners per camera, got {} / {}",
                f.left.len(),
                f.right.len()
            )));
        }
        if f.left
            .iter()
            .chain(&f.right)
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(StereoError::MalformedCorners(format!(
                "frame {i}: non-finite corner"
            )));
        }
    }
    let object = board.object_points();
    let lefts: Vec<&[[f64; 2]]> = frames.iter().map(|f| f.left.as_slice()).collect();
    let rights: Vec<&[[f64; 2]]> = frames.iter().map(|f| f.right.as_slice()).collect();
    let (k_left, poses_left) = initial_camera(&object, &lefts, width, height)?;
    let (k_right, poses_right) = initial_camera(&object, &rights, width, height)?;

    let mut rel_r = Vector3::zeros();
    let mut rel_t = Vector3::zeros();
    for ((rl, tl), (rr, tr)) in poses_left.iter().zip(&poses_right) {
        let r = rr * rl.inverse();
        rel_r += r.scaled_axis();
        rel_t += tr - r * tl;
    }
    rel_r /= frames.len() as f64;
    rel_t /= frames.len() as f64;

    let mut params = Vec::with_capacity(2 * N_INTRINSICS + 6 + 6 * frames.len());
    params.extend([
        k_left[(0, 0)],
        k_left[(1, 1)],
        k_left[(0, 2)],
        k_left[(1, 2)],
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ]);
    params.extend([
        k_right[(0, 0)],
        k_right[(1, 1)],
        k_right[(0, 2)],
        k_right[(1, 2)],
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ]);
    params.extend(rel_r.iter().chain(rel_t.iter()));
    for (r, t) in &poses_left {
        params.extend(r.scaled_axis().iter().chain(t.iter()));
    }
    let problem = Problem {
        object: &object,
        frames,
        width,
        height,
    };
    let (params, rms) = problem.solve(DVector::from_vec(params))?;

    let left = problem.camera(&params, 0);
    let right = problem.camera(&params, 1);
    let rotation = Rotation3::new(Vector3::new(params[18], params[19], params[20])).into_inner();
    let translation = Vector3::new(params[21], params[22], params[23]);
    let mut rig = StereoRig::new(left, right, rotation, translation)?;
    rig.rms_reprojection_px = Some(rms);
    Ok(rig)
}

type Pose = (Rotation3<f64>, Vector3<f64>);

/// Normalised DLT homography from board plane to image.
fn homography(object: &[Vector3<f64>], image: &[[f64; 2]]) -> Option<Matrix3<f64>> {
    let n = object.len() as f64;
    let (mx, my) = image
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + p[0] / n, a.1 + p[1] / n));
    let spread = image
        .iter()
        .map(|p| ((p[0] - mx).powi(2) + (p[1] - my).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let (ox, oy) = object
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + p.x / n, a.1 + p.y / n));
    let ospread = object
        .iter()
        .map(|p| ((p.x - ox).powi(2) + (p.y - oy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if spread <= 0.0 || ospread <= 0.0 {
        return None;
    }
    let (si, so) = (2f64.sqrt() / spread, 2f64.sqrt() / ospread);
    let mut a = DMatrix::zeros(2 * object.len(), 9);
    for (i, (o, p)) in object.iter().zip(image).enumerate() {
        let (x, y) = ((o.x - ox) * so, (o.y - oy) * so);
        let (u, v) = ((p[0] - mx) * si, (p[1] - my) * si);
        let r0 = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u];
        let r1 = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v];
        for j in 0..9 {
            a[(2 * i, j)] = r0[j];
            a[(2 * i + 1, j)] = r1[j];
        }
    }
    let svd = (a.transpose() * &a).symmetric_eigen();
    let (imin, _) = svd
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let h = svd.eigenvectors.column(imin);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_img_inv = Matrix3::new(1.0 / si, 0.0, mx, 0.0, 1.0 / si, my, 0.0, 0.0, 1.0);
    let t_obj = Matrix3::new(so, 0.0, -ox * so, 0.0, so, -oy * so, 0.0, 0.0, 1.0);
    let hm = t_img_inv * hn * t_obj;
    Some(hm / hm[(2, 2)])
}

/// Board pose from a homography and intrinsics.
fn pose_from_homography(k_inv: &Matrix3<f64>, h: &Matrix3<f64>) -> Pose {
    let (h1, h2, h3) = (h.column(0), h.column(1), h.column(2));
    let mut lambda = 1.0 / (k_inv * h1).norm();
    if (k_inv * h3).z * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1 = k_inv * h1 * lambda;
    let r2 = k_inv * h2 * lambda;
    let r3 = r1.cross(&r2);
    let t = k_inv * h3 * lambda;
    let m = Matrix3::from_columns(&[r1, r2, r3]);
    let svd = m.svd(true, true);
    let mut r = svd.u.expect("u requested") * svd.v_t.expect("v requested");
    if r.determinant() < 0.0 {
        r = -r;
    }
    (Rotation3::from_matrix_unchecked(r), t)
}

fn zhang_v(h: &Matrix3<f64>, i: usize, j: usize) -> [f64; 6] {
    let (hi, hj) = (h.column(i), h.column(j));
    [
        hi[0] * hj[0],
        hi[0] * hj[1] + hi[1] * hj[0],
        hi[1] * hj[1],
        hi[2] * hj[0] + hi[0] * hj[2],
        hi[2] * hj[1] + hi[1] * hj[2],
        hi[2] * hj[2],
    ]
}

/// Zero-skew intrinsics and per-view poses for one camera.
fn initial_camera(
    object: &[Vector3<f64>],
    views: &[&[[f64; 2]]],
    width: usize,
    height: usize,
) -> Result<(Matrix3<f64>, Vec<Pose>)> {
    let degenerate = |why: &str| StereoError::InsufficientPoseDiversity(why.to_string());
    let hs: Vec<Matrix3<f64>> = views
        .iter()
        .map(|v| homography(object, v))
        .collect::<Option<_>>()
        .ok_or_else(|| degenerate("collinear corners"))?;

    // Tilt spread under a nominal camera: identical or parallel boards give
    // no constraint on the intrinsics.
    let s = width.max(height) as f64;
    let k0 = Matrix3::new(
        s,
        0.0,
        width as f64 / 2.0,
        0.0,
        s,
        height as f64 / 2.0,
        0.0,
        0.0,
        1.0,
    );
    let k0_inv = k0.try_inverse().expect("nominal K is invertible");
    let normals: Vec<Vector3<f64>> = hs
        .iter()
        .map(|h| pose_from_homography(&k0_inv, h).0 * Vector3::z())
        .collect();
    let spread = normals
        .iter()
        .flat_map(|a| {
            normals
                .iter()
                .map(move |b| a.dot(b).clamp(-1.0, 1.0).acos())
        })
        .fold(0.0f64, f64::max);
    if spread.to_degrees() < MIN_TILT_SPREAD_DEG {
        return Err(degenerate(&format!(
            "board orientations span only {:.2}°",
            spread.to_degrees()
        )));
    }

    // Condition the homographies in a pixel frame scaled to unit size.
    let t = Matrix3::new(
        1.0 / s,
        0.0,
        -(width as f64) / (2.0 * s),
        0.0,
        1.0 / s,
        -(height as f64) / (2.0 * s),
        0.0,
        0.0,
        1.0,
    );
    let mut v = DMatrix::zeros(2 * hs.len(), 6);
    for (i, h) in hs.iter().enumerate() {
        let hn = t * h;
        let v12 = zhang_v(&hn, 0, 1);
        let v11 = zhang_v(&hn, 0, 0);
        let v22 = zhang_v(&hn, 1, 1);
        for j in 0..6 {
            v[(2 * i, j)] = v12[j];
            v[(2 * i + 1, j)] = v11[j] - v22[j];
        }
    }
    let eig = (v.transpose() * &v).symmetric_eigen();
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("6 eigenvalues");
    let b = eig.eigenvectors.column(imin);
    let (b11, b12, b22, b13, b23, b33) = (b[0], b[1], b[2], b[3], b[4], b[5]);
    let den = b11 * b22 - b12 * b12;
    let v0 = (b12 * b13 - b11 * b23) / den;
    let lambda = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11;
    let alpha2 = lambda / b11;
    let beta2 = lambda * b11 / den;
    if !(alpha2 > 0.0 && beta2 > 0.0 && den.abs() > 0.0) {
        return Err(degenerate("closed-form intrinsics are not real"));
    }
    let (alpha, beta) = (alpha2.sqrt(), beta2.sqrt());
    let u0 = -b13 * alpha2 / lambda;
    let kn = Matrix3::new(alpha, 0.0, u0, 0.0, beta, v0, 0.0, 0.0, 1.0);
    let k = t.try_inverse().expect("scaling is invertible") * kn;
    let k_inv = k
        .try_inverse()
        .ok_or_else(|| degenerate("singular intrinsics"))?;
    let poses = hs.iter().map(|h| pose_from_homography(&k_inv, h)).collect();
    Ok((k, poses))
}

struct Problem<'a> {
    object: &'a [Vector3<f64>],
    frames: &'a [CornerFrame],
    width: usize,
    height: usize,
}

impl Problem<'_> {
    fn camera(&self, p: &DVector<f64>, which: usize) -> PinholeCamera {
        let o = which * N_INTRINSICS;
        PinholeCamera {
            fx: p[o],
            fy: p[o + 1],
            cx: p[o + 2],
            cy: p[o + 3],
            k1: p[o + 4],
            k2: p[o + 5],
            p1: p[o + 6],
            p2: p[o + 7],
            k3: p[o + 8],
            width: self.width,
            height: self.height,
        }
    }

    fn view_offset(view: usize) -> usize {
        2 * N_INTRINSICS + 6 + 6 * view
    }

    fn block_len(&self) -> usize {
        4 * self.object.len()
    }

    /// Residuals (projected − observed) of one board pose, left then right.
    fn view_residuals(&self, p: &DVector<f64>, view: usize, out: &mut [f64]) {
        let (cl, cr) = (self.camera(p, 0), self.camera(p, 1));
        let rel_r = Rotation3::new(Vector3::new(p[18], p[19], p[20]));
        let rel_t = Vector3::new(p[21], p[22], p[23]);
        let o = Self::view_offset(view);
        let r = Rotation3::new(Vector3::new(p[o], p[o + 1], p[o + 2]));
        let t = Vector3::new(p[o + 3], p[o + 4], p[o + 5]);
        let frame = &self.frames[view];
        let n = self.object.len();
        for (i, obj) in self.object.iter().enumerate() {
            let xl = r * obj + t;
            let xr = rel_r * xl + rel_t;
            for (cam, x, obs, base) in [
                (&cl, xl, frame.left[i], 2 * i),
                (&cr, xr, frame.right[i], 2 * (n + i)),
            ] {
                let [u, v] = project_any(cam, &x);
                out[base] = u - obs[0];
                out[base + 1] = v - obs[1];
            }
        }
    }

    fn residuals(&self, p: &DVector<f64>) -> DVector<f64> {
        let bl = self.block_len();
        let mut r = DVector::zeros(bl * self.frames.len());
        for v in 0..self.frames.len() {
            self.view_residuals(p, v, &mut r.as_mut_slice()[v * bl..(v + 1) * bl]);
        }
        r
    }

    /// Central-difference Jacobian; a board-pose parameter only touches
    /// its own view's residual block.
    fn jacobian(&self, p: &DVector<f64>) -> DMatrix<f64> {
        let bl = self.block_len();
        let nv = self.frames.len();
        let mut j = DMatrix::zeros(bl * nv, p.len());
        let step = |x: f64| 1e-6 * x.abs().max(1e-2);
        let mut q = p.clone();
        for k in 0..Self::view_offset(0) {
            let h = step(p[k]);
            q[k] = p[k] + h;
            let rp = self.residuals(&q);
            q[k] = p[k] - h;
            let rm = self.residuals(&q);
            q[k] = p[k];
            j.column_mut(k).copy_from(&((rp - rm) / (2.0 * h)));
        }
        let (mut rp, mut rm) = (vec![0.0; bl], vec![0.0; bl]);
        for v in 0..nv {
            for k in Self::view_offset(v)..Self::view_offset(v) + 6 {
                let h = step(p[k]);
                q[k] = p[k] + h;
                self.view_residuals(&q, v, &mut rp);
                q[k] = p[k] - h;
                self.view_residuals(&q, v, &mut rm);
                q[k] = p[k];
                for i in 0..bl {
                    j[(v * bl + i, k)] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
        }
        j
    }

    fn solve(&self, mut p: DVector<f64>) -> Result<(DVector<f64>, f64)> {
        let mut r = self.residuals(&p);
        let mut cost = r.norm_squared();
        let mut lambda = 1e-3;
        for _ in 0..200 {
            let j = self.jacobian(&p);
            let jt = j.transpose();
            let a = &jt * &j;
            let g = &jt * &r;
            let mut improved = false;
            while lambda < 1e12 {
                let mut damped = a.clone();
                for i in 0..p.len() {
                    damped[(i, i)] += lambda * a[(i, i)].max(1e-12);
                }
                let Some(chol) = damped.cholesky() else {
                    lambda *= 10.0;
                    continue;
                };
                let delta = chol.solve(&(-&g));
                let candidate = &p + &delta;
                let rc = self.residuals(&candidate);
                let c = rc.norm_squared();
                if c.is_finite() && c < cost {
                    let gain = (cost - c) / cost.max(f64::MIN_POSITIVE);
                    p = candidate;
                    r = rc;
                    cost = c;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = gain > 1e-14 && delta.norm() > 1e-12 * p.norm();
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        if !cost.is_finite() {
            return Err(StereoError::CalibrationFailed(
                "non-finite reprojection cost".into(),
            ));
        }
        Ok((p, (cost / r.len() as f64).sqrt()))
    }
}

/// Projection that stays defined behind the camera so the optimiser can
/// step through awkward intermediate states.
fn project_any(cam: &PinholeCamera, x: &Vector3<f64>) -> [f64; 2] {
    let z = if x.z.abs() < 1e-9 { 1e-9 } else { x.z };
    let [xd, yd] = cam.distort(x.x / z, x.y / z);
    [cam.fx * xd + cam.cx, cam.fy * yd + cam.cy]
}

/// Board observations rendered through a known rig.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticViews {
    pub frames: Vec<CornerFrame>,
    /// Board-to-left-camera pose of every view.
    pub poses: Vec<(Matrix3<f64>, Vector3<f64>)>,
}

/// Projects the board through `rig` at `n_views` random poses (150–350 mm
/// away, tilted up to ±35°) with every corner visible in both images, adding
/// Gaussian corner noise of `noise_px` per coordinate.
pub fn synthetic_corner_frames(
    rig: &StereoRig,
    board: &BoardSpec,
    n_views: usize,
    noise_px: f64,
    seed: u64,
) -> SyntheticViews {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_px.max(0.0)).expect("finite sigma");
    let object = board.object_points();
    let centre = Vector3::new(
        (board.cols - 1) as f64 * board.pitch_mm / 2.0,
        (board.rows - 1) as f64 * board.pitch_mm / 2.0,
        0.0,
    );
    let inside = |cam: &PinholeCamera, p: &[f64; 2]| {
        p[0] >= 0.0
            && p[1] >= 0.0
            && p[0] <= (cam.width - 1) as f64
            && p[1] <= (cam.height - 1) as f64
    };
    let mut frames = Vec::with_capacity(n_views);
    let mut poses = Vec::with_capacity(n_views);
    while frames.len() < n_views {
        let tilt = 35f64.to_radians();
        let r = Rotation3::from_euler_angles(
            rng.random_range(-tilt..tilt),
            rng.random_range(-tilt..tilt),
            rng.random_range(-0.3..0.3),
        );
        let z = rng.random_range(150.0..350.0);
        let t = Vector3::new(
            rng.random_range(-0.12..0.12) * z + 7.0,
            rng.random_range(-0.1..0.1) * z,
            z,
        );
        let mut left = Vec::with_capacity(object.len());
        let mut right = Vec::with_capacity(object.len());
        let mut ok = true;
        for obj in &object {
            let xl = r * (obj - centre) + t;
            let xr = rig.rotation * xl + rig.translation;
            match (rig.left.project(&xl), rig.right.project(&xr)) {
                (Some(pl), Some(pr)) if inside(&rig.left, &pl) && inside(&rig.right, &pr) => {
                    left.push(pl);
                    right.push(pr);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        for p in left.iter_mut().chain(right.iter_mut()) {
            p[0] += noise.sample(&mut rng);
            p[1] += noise.sample(&mut rng);
        }
        frames.push(CornerFrame { left, right });
        poses.push((r.into_inner(), t - r * centre));
    }
    SyntheticViews { frames, poses }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homography_is_exact_on_clean_data() {
        let rig = StereoRig::ideal(800.0, 640, 480, 14.0).unwrap();
        let board = BoardSpec::default();
        let views = synthetic_corner_frames(&rig, &board, 1, 0.0, 3);
        let h = homography(&board.object_points(), &views.frames[0].left).unwrap();
        for (o, p) in board.object_points().iter().zip(&views.frames[0].left) {
            let q = h * Vector3::new(o.x, o.y, 1.0);
            assert!((q.x / q.z - p[0]).abs() < 1e-6 && (q.y / q.z - p[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn too_few_frames() {
        let rig = StereoRig::ideal(800.0, 640, 480, 14.0).unwrap();
        let views = synthetic_corner_frames(&rig, &BoardSpec::default(), 3, 0.0, 1);
        let err = calibrate_stereo(&views.frames, &BoardSpec::default(), 640, 480).unwrap_err();
        assert!(matches!(err, StereoError::InsufficientPoseDiversity(_)));
    }

    #[test]
    fn identical_views_rejected() {
        let rig = StereoRig::ideal(800.0, 640, 480, 14.0).unwrap();
        let one = synthetic_corner_frames(&rig, &BoardSpec::default(), 1, 0.0, 1)
            .frames
            .remove(0);
        let frames = vec![one; 12];
        let err = calibrate_stereo(&frames, &BoardSpec::default(), 640, 480).unwrap_err();
        assert!(err.to_string().contains("insufficient pose diversity"));
    }
}
