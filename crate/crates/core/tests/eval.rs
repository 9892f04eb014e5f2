use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stereotac::depth_eval::{
    evaluate_sequence, fit_plane, spatial_rmse_pct, temporal_noise_pct, z_accuracy, EvalConfig, Roi,
};
use stereotac::imaging_io::{FloatMap, MapUnit, INVALID_DEPTH};

const W: usize = 80;
const H: usize = 60;

fn map(f: impl Fn(usize, usize) -> f64) -> FloatMap {
    let v = (0..W * H).map(|i| f(i % W, i / W) as f32).collect();
    FloatMap::with_sentinel(W, H, v, MapUnit::Mm, INVALID_DEPTH).unwrap()
}

/// Plane residual RMS by SVD least squares over the same ROI.
fn oracle_rms(depth: &FloatMap, roi: &Roi) -> f64 {
    let pts: Vec<(f64, f64, f64)> = roi
        .pixels()
        .filter_map(|(x, y)| depth.valid(x, y).map(|z| (x as f64, y as f64, z as f64)))
        .collect();
    let a = DMatrix::from_fn(pts.len(), 3, |r, c| [pts[r].0, pts[r].1, 1.0][c]);
    let b = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.2));
    let coef = a.clone().svd(true, true).solve(&b, 1e-12).unwrap();
    let r = b - a * coef;
    (r.norm_squared() / pts.len() as f64).sqrt()
}

#[test]
fn z_accuracy_of_constant_offset_plane() {
    for gt in [100.0, 200.0, 300.0] {
        for e in [-0.05, 0.0, 0.01, 0.09] {
            let d = map(|_, _| gt * (1.0 + e));
            let got = z_accuracy(&d, &EvalConfig::new(gt, "m")).unwrap();
            assert!((got - 100.0 * e).abs() < 1e-3, "gt {gt} e {e}: {got}");
        }
    }
}

#[test]
fn z_accuracy_ignores_invalid_pixels_and_is_signed() {
    let d = map(|x, y| {
        if (x + y) % 7 == 0 {
            INVALID_DEPTH as f64
        } else {
            190.0
        }
    });
    let got = z_accuracy(&d, &EvalConfig::new(200.0, "m")).unwrap();
    assert!((got + 5.0).abs() < 1e-3);
    let abs = EvalConfig {
        absolute_z_accuracy: true,
        ..EvalConfig::new(200.0, "m")
    };
    assert!((z_accuracy(&d, &abs).unwrap() - 5.0).abs() < 1e-3);
}

#[test]
fn spatial_rmse_matches_svd_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let noise: Vec<f64> = (0..W * H).map(|_| rng.random_range(-2.0..2.0)).collect();
    let d = map(|x, y| 200.0 + 0.05 * x as f64 - 0.02 * y as f64 + noise[y * W + x]);
    let cfg = EvalConfig::new(200.0, "m");
    let roi = Roi::central(W, H, 0.6);
    let got = spatial_rmse_pct(&d, &cfg).unwrap();
    let want = oracle_rms(&d, &roi) / 200.0 * 100.0;
    assert!((got - want).abs() < 1e-4 * want, "{got} vs {want}");
}

#[test]
fn temporal_noise_of_linear_ramp() {
    let n = 10;
    let step = 0.3;
    let frames: Vec<FloatMap> = (0..n)
        .map(|k| map(|x, _| 150.0 + 0.01 * x as f64 + k as f64 * step))
        .collect();
    let got = temporal_noise_pct(&frames, &EvalConfig::new(150.0, "m")).unwrap();
    let want = step * (((n * n - 1) as f64) / 12.0).sqrt() / 150.0 * 100.0;
    assert!((got - want).abs() < 1e-4 * want, "{got} vs {want}");
}

#[test]
fn perfect_sequence_scores_zero() {
    let frames = vec![map(|_, _| 250.0); 4];
    let r = evaluate_sequence(&frames, &EvalConfig::new(250.0, "m")).unwrap();
    assert!(r.z_accuracy_pct.abs() < 1e-6 && r.rmse_pct_mean < 1e-6 && r.temporal_noise_pct < 1e-6);
}

#[test]
fn empty_roi_is_an_error() {
    let d = map(|_, _| INVALID_DEPTH as f64);
    assert!(z_accuracy(&d, &EvalConfig::new(200.0, "m")).is_err());
    assert!(EvalConfig::new(-1.0, "m").validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rmse_invariant_to_added_plane(a in -0.2f64..0.2, b in -0.2f64..0.2, c in -20.0f64..20.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise: Vec<f64> = (0..W * H).map(|_| rng.random_range(-1.0..1.0)).collect();
        let base = map(|x, y| 200.0 + noise[y * W + x]);
        let tilted = map(|x, y| 200.0 + noise[y * W + x] + a * x as f64 + b * y as f64 + c);
        let cfg = EvalConfig::new(200.0, "m");
        let r0 = spatial_rmse_pct(&base, &cfg).unwrap();
        let r1 = spatial_rmse_pct(&tilted, &cfg).unwrap();
        prop_assert!((r0 - r1).abs() < 2e-3 * r0.max(1e-3));
    }

    #[test]
    fn z_accuracy_scales_with_offset(gt in 50.0f64..600.0, e in -0.2f64..0.2) {
        let d = map(|_, _| gt * (1.0 + e));
        let got = z_accuracy(&d, &EvalConfig::new(gt, "m")).unwrap();
        prop_assert!((got - 100.0 * e).abs() < 1e-3 + 1e-4 * (100.0 * e).abs());
    }

    #[test]
    fn plane_fit_recovers_coefficients(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -100.0f64..100.0) {
        let d = map(|x, y| a * x as f64 + b * y as f64 + c);
        let fit = fit_plane(&d, &Roi::central(W, H, 0.6)).unwrap();
        prop_assert!((fit.a - a).abs() < 1e-4 && (fit.b - b).abs() < 1e-4 && (fit.c - c).abs() < 1e-2);
    }
}
