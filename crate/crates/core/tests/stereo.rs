use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stereotac::imaging_io::{FloatMap, ImageRGB8, MapUnit, PointCloud3D, INVALID_DEPTH};
use stereotac::membrane_sim::procedural_texture;
use stereotac::stereo_vision::{
    block_match, calibrate_stereo, rectify_pair, rectify_point, remove_outliers, reproject,
    synthetic_corner_frames, BoardSpec, DisparityMap, MatcherSettings, PinholeCamera, Side,
    StereoRig,
};

fn disparity(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> DisparityMap {
    let v = (0..w * h).map(|i| f(i % w, i / w)).collect();
    let map = FloatMap::with_sentinel(w, h, v, MapUnit::DisparityPx, INVALID_DEPTH).unwrap();
    DisparityMap {
        map,
        settings: MatcherSettings::default(),
    }
}

fn tilted_rig() -> StereoRig {
    let left = PinholeCamera {
        fx: 805.0,
        fy: 798.0,
        cx: 322.0,
        cy: 236.0,
        ..PinholeCamera::ideal(800.0, 640, 480)
    };
    let right = PinholeCamera {
        fx: 795.0,
        fy: 801.0,
        cx: 317.0,
        cy: 243.0,
        ..PinholeCamera::ideal(800.0, 640, 480)
    };
    let r = Rotation3::from_euler_angles(0.01, -0.02, 0.015).into_inner();
    StereoRig::new(left, right, r, Vector3::new(-14.0, 0.4, -0.3)).unwrap()
}

#[test]
fn reprojection_follows_triangulation() {
    let rig = StereoRig::ideal(800.0, 64, 48, 14.0).unwrap();
    let rep = reproject(&disparity(64, 48, |_, _| 56.0), &rig, None);
    assert_eq!(rep.cloud.len(), 64 * 48);
    for (p, &i) in rep.cloud.points.iter().zip(&rep.pixel_index) {
        let (u, v) = ((i % 64) as f64, (i / 64) as f64);
        assert!((p[2] - 200.0).abs() < 1e-9);
        assert!((p[0] - (u - 31.5) * 200.0 / 800.0).abs() < 1e-9);
        assert!((p[1] - (v - 23.5) * 200.0 / 800.0).abs() < 1e-9);
    }
}

#[test]
fn nonpositive_and_invalid_disparities_are_skipped() {
    let rig = StereoRig::ideal(800.0, 8, 8, 14.0).unwrap();
    let d = disparity(8, 8, |x, _| match x {
        0 => 0.0,
        1 => -3.0,
        2 => INVALID_DEPTH,
        _ => 10.0,
    });
    let rep = reproject(&d, &rig, None);
    assert_eq!(rep.cloud.len(), 5 * 8);
    assert_eq!(rep.skipped_nonpositive, 16);
}

#[test]
fn shifted_texture_matches_at_shift() {
    let (w, h, shift) = (200, 120, 8);
    let wide = procedural_texture(w + shift, h, 17, 0.4);
    let left = ImageRGB8::from_fn(w, h, |x, y| wide.get(x, y));
    let right = ImageRGB8::from_fn(w, h, |x, y| wide.get(x + shift, y));
    let settings = MatcherSettings {
        max_disparity: 32,
        ..Default::default()
    };
    let d = block_match(&left, &right, &settings).unwrap();
    let valid: Vec<f32> = d.valid_values().collect();
    assert!(valid.len() > 1000);
    let good = valid
        .iter()
        .filter(|&&v| (v - shift as f32).abs() <= 0.25)
        .count();
    assert!(
        good as f64 >= 0.95 * valid.len() as f64,
        "{good} of {}",
        valid.len()
    );
}

#[test]
fn flat_image_gives_no_matches() {
    let img = ImageRGB8::from_fn(64, 48, |_, _| [90, 90, 90]);
    let d = block_match(
        &img,
        &img,
        &MatcherSettings {
            max_disparity: 16,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(d.valid_values().count(), 0);
}

#[test]
fn rectified_correspondences_share_a_row() {
    let rig = tilted_rig();
    let rect = &rig.rectification;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let x = Vector3::new(
            rng.random_range(-60.0..60.0),
            rng.random_range(-40.0..40.0),
            rng.random_range(120.0..400.0),
        );
        let xr = rig.rotation * x + rig.translation;
        let (Some(pl), Some(pr)) = (rig.left.project(&x), rig.right.project(&xr)) else {
            continue;
        };
        let a = rectify_point(&rig, Side::Left, pl[0], pl[1]).unwrap();
        let b = rectify_point(&rig, Side::Right, pr[0], pr[1]).unwrap();
        assert!((a[1] - b[1]).abs() < 1e-6);
        let d = a[0] - b[0];
        let z_rect = (rect.r_left * x).z;
        assert!((rect.f * rect.baseline / d - z_rect).abs() < 1e-6 * z_rect);
    }
}

#[test]
fn rectify_pair_rejects_wrong_size() {
    let rig = StereoRig::ideal(300.0, 64, 48, 14.0).unwrap();
    let img = ImageRGB8::new(32, 48);
    assert!(rectify_pair(&img, &img, &rig).is_err());
}

#[test]
fn calibration_recovers_rig() {
    let truth = tilted_rig();
    let board = BoardSpec::default();
    let views = synthetic_corner_frames(&truth, &board, 15, 0.2, 33);
    let rig = calibrate_stereo(&views.frames, &board, 640, 480).unwrap();
    assert!(
        (rig.baseline() - truth.baseline()).abs() < 0.01 * truth.baseline(),
        "{}",
        rig.baseline()
    );
    assert!((rig.left.fx - truth.left.fx).abs() < 0.01 * truth.left.fx);
    let rms = rig.rms_reprojection_px.unwrap();
    assert!(rms > 0.1 && rms < 0.3, "{rms}");
}

#[test]
fn too_few_views_rejected() {
    let truth = tilted_rig();
    let board = BoardSpec::default();
    let views = synthetic_corner_frames(&truth, &board, 4, 0.2, 1);
    assert!(calibrate_stereo(&views.frames, &board, 640, 480).is_err());
}

#[test]
fn rig_json_round_trips() {
    let rig = tilted_rig();
    let back = StereoRig::from_json(&rig.to_json().unwrap()).unwrap();
    assert_eq!(back.left, rig.left);
    assert!((back.rotation - rig.rotation).norm() < 1e-12);
    assert!((back.rectification.q - rig.rectification.q).norm() < 1e-9);
}

/// Keep mask by brute-force nearest neighbours.
fn oracle_keep(points: &[[f64; 3]], k: usize, ratio: f64) -> Vec<bool> {
    let dist = |a: &[f64; 3], b: &[f64; 3]| {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    };
    let mean: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| dist(p, q))
                .collect();
            d.sort_by(f64::total_cmp);
            d[..k].iter().sum::<f64>() / k as f64
        })
        .collect();
    let n = mean.len() as f64;
    let mu = mean.iter().sum::<f64>() / n;
    let sd = (mean.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / n).sqrt();
    mean.iter().map(|&m| m <= mu + ratio * sd).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn depth_is_focal_baseline_over_disparity(d in 1.0f32..120.0, f in 200.0f64..1500.0, b in 5.0f64..100.0) {
        let rig = StereoRig::ideal(f, 16, 12, b).unwrap();
        let rep = reproject(&disparity(16, 12, |_, _| d), &rig, None);
        for p in &rep.cloud.points {
            prop_assert!((p[2] - f * b / d as f64).abs() < 1e-9 * p[2]);
        }
    }

    #[test]
    fn larger_disparity_is_closer(d in 0.5f32..100.0, step in 0.01f32..10.0) {
        let rig = StereoRig::ideal(800.0, 4, 4, 14.0).unwrap();
        let near = reproject(&disparity(4, 4, |_, _| d + step), &rig, None);
        let far = reproject(&disparity(4, 4, |_, _| d), &rig, None);
        prop_assert!(near.cloud.points[0][2] < far.cloud.points[0][2]);
    }

    #[test]
    fn outlier_mask_matches_brute_force(seed in any::<u64>(), k in 2usize..10, ratio in 0.5f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts: Vec<[f64; 3]> = (0..120).map(|_| [rng.random_range(0.0..50.0), rng.random_range(0.0..50.0), 200.0 + rng.random_range(-1.0..1.0)]).collect();
        for _ in 0..4 {
            pts.push([rng.random_range(0.0..50.0), rng.random_range(0.0..50.0), rng.random_range(260.0..400.0)]);
        }
        let (cloud, keep, stats) = remove_outliers(&PointCloud3D::from_points(pts.clone()), k, ratio).unwrap();
        prop_assume!(!stats.capped);
        prop_assert_eq!(&keep, &oracle_keep(&pts, k, ratio));
        prop_assert_eq!(cloud.len(), keep.iter().filter(|k| **k).count());
    }
}

#[test]
fn q_matrix_round_trips_points() {
    let rig = tilted_rig();
    let rect = &rig.rectification;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let x = Vector3::new(
            rng.random_range(-80.0..80.0),
            rng.random_range(-60.0..60.0),
            rng.random_range(100.0..300.0),
        );
        let xr = rig.rotation * x + rig.translation;
        let (Some(pl), Some(pr)) = (rig.left.project(&x), rig.right.project(&xr)) else {
            continue;
        };
        let a = rectify_point(&rig, Side::Left, pl[0], pl[1]).unwrap();
        let b = rectify_point(&rig, Side::Right, pr[0], pr[1]).unwrap();
        let h = rect.q * nalgebra::Vector4::new(a[0], a[1], a[0] - b[0], 1.0);
        let back = rect.r_left.transpose() * Vector3::new(h.x / h.w, h.y / h.w, h.z / h.w);
        assert!((back - x).norm() < 0.5, "{back} vs {x}");
    }
}

#[test]
fn homogeneous_cloud_keeps_every_point() {
    let grid: Vec<[f64; 3]> = (0..400)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / 400.0;
            [50.0 * t.cos(), 50.0 * t.sin(), 100.0]
        })
        .collect();
    let (once, _, stats) = remove_outliers(&PointCloud3D::from_points(grid), 8, 2.0).unwrap();
    assert_eq!(stats.removed, 0);
    let (twice, _, again) = remove_outliers(&once, 8, 2.0).unwrap();
    assert_eq!(again.removed, 0);
    assert_eq!(twice, once);
}

#[test]
fn salt_noise_removal_restores_plane() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut pts: Vec<[f64; 3]> = (0..3000)
        .map(|i| {
            let (x, y) = ((i % 60) as f64, (i / 60) as f64);
            [x, y, 150.0 + 0.1 * x + rng.random_range(-0.05..0.05)]
        })
        .collect();
    for _ in 0..150 {
        pts.push([
            rng.random_range(0.0..60.0),
            rng.random_range(0.0..50.0),
            rng.random_range(100.0..200.0),
        ]);
    }
    let plane_rms = |c: &[[f64; 3]]| {
        let fit = stereotac::depth_eval::fit_plane_samples(c).unwrap();
        fit.rms()
    };
    let before = plane_rms(&pts);
    let (filtered, _, _) = remove_outliers(&PointCloud3D::from_points(pts), 20, 2.0).unwrap();
    let after = plane_rms(&filtered.points);
    assert!(after * 3.0 <= before, "{before} -> {after}");
}
