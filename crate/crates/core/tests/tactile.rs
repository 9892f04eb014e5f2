use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stereotac::experiments::{calibrate_membrane, TactileExperimentConfig};
use stereotac::membrane_sim::{
    ball_press_sequence, render_press, render_reference_pair, Finish, IndenterSpec, MembraneSpec,
    TactileSimConfig,
};
use stereotac::tactile_recon::{
    ball_label, decode_dataset, encode_dataset, gen_ball_labels, measure_disk_depth, reconstruct,
    CalibrationSample, HsvFilterSpec,
};

/// Surface angle from the right triangle formed by the offset and the
/// sphere's depth below the contact point.
fn oracle_angle(offset: f64, r: f64) -> f64 {
    offset.atan2((r * r - offset * offset).sqrt())
}

#[test]
fn ball_label_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 10_000 {
        let r = rng.random_range(5.0..120.0);
        let c = [rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)];
        let p = [
            c[0] + rng.random_range(-r..r),
            c[1] + rng.random_range(-r..r),
        ];
        let (ox, oy) = (p[0] - c[0], p[1] - c[1]);
        let inside = ox * ox + oy * oy < r * r;
        let got = ball_label(p[0], p[1], c, r);
        assert_eq!(got.is_some(), inside);
        let Some([dx, dy]) = got else { continue };
        assert!((dx - oracle_angle(ox, r)).abs() < 1e-12);
        assert!((dy - oracle_angle(oy, r)).abs() < 1e-12);
        let [mx, my] = ball_label(2.0 * c[0] - p[0], 2.0 * c[1] - p[1], c, r).unwrap();
        assert!((mx + dx).abs() < 1e-12 && (my + dy).abs() < 1e-12);
        checked += 1;
    }
}

#[test]
fn gen_ball_labels_uses_exact_geometry() {
    let cfg = TactileSimConfig::clean();
    let membrane = MembraneSpec::preset(Finish::SemiReflective);
    let presses = ball_press_sequence(&membrane, 6.0, 2, 9, &cfg).unwrap();
    let reference = render_reference_pair(&cfg.rig, &membrane, &cfg.grid).unwrap();
    let (w, h) = (cfg.grid.width as f64, cfg.grid.height as f64);
    for p in &presses {
        let samples = gen_ball_labels(
            &p.frames,
            &reference,
            p.center_px,
            p.radius_px,
            None,
            &HsvFilterSpec::default(),
        )
        .unwrap();
        assert!(samples.len() > 100);
        for s in samples {
            let (x, y) = (
                (s.features[2] * (w - 1.0)).round(),
                (s.features[3] * (h - 1.0)).round(),
            );
            let (ox, oy) = (x - p.center_px[0], y - p.center_px[1]);
            assert!(ox.hypot(oy) < p.radius_px);
            assert!((s.labels[0] - oracle_angle(ox, p.radius_px)).abs() < 1e-12);
            assert!((s.labels[1] - oracle_angle(oy, p.radius_px)).abs() < 1e-12);
        }
    }
}

#[test]
fn contact_limit_narrows_labels() {
    let cfg = TactileSimConfig::clean();
    let membrane = MembraneSpec::preset(Finish::SemiMatte);
    let p = &ball_press_sequence(&membrane, 6.0, 1, 4, &cfg).unwrap()[0];
    let reference = render_reference_pair(&cfg.rig, &membrane, &cfg.grid).unwrap();
    let spec = HsvFilterSpec::default();
    let all =
        gen_ball_labels(&p.frames, &reference, p.center_px, p.radius_px, None, &spec).unwrap();
    let inner = gen_ball_labels(
        &p.frames,
        &reference,
        p.center_px,
        p.radius_px,
        Some(p.contact_radius_px),
        &spec,
    )
    .unwrap();
    assert!(p.contact_radius_px < p.radius_px);
    assert!(inner.len() < all.len());
}

#[test]
fn deeper_disk_presses_reconstruct_deeper() {
    let cfg = TactileExperimentConfig {
        sim: TactileSimConfig::clean(),
        calibration_presses: 12,
        ..Default::default()
    };
    let cal = calibrate_membrane(&MembraneSpec::preset(Finish::SemiReflective), &cfg, 21).unwrap();
    let s = cfg.sim.grid.px_per_mm;
    let depths: Vec<f64> = [0.5, 1.0, 1.5]
        .iter()
        .map(|&d| {
            let disk = IndenterSpec::disk(13.0, d, [320.0, 240.0]);
            let (frames, _) = render_press(&disk, &cal.membrane, &cfg.sim, 5).unwrap();
            let rec = reconstruct(&cal.model, &frames, &cal.reference, &cfg.hsv, s).unwrap();
            measure_disk_depth(&rec.depth, disk.center_px, 13.0, s).unwrap()
        })
        .collect();
    assert!(
        depths[0] > 0.0 && depths[0] < depths[1] && depths[1] < depths[2],
        "{depths:?}"
    );

    let rec = reconstruct(&cal.model, &cal.reference, &cal.reference, &cfg.hsv, s).unwrap();
    assert_eq!(rec.peak_depth(), 0.0);
}

fn sample() -> impl Strategy<Value = CalibrationSample> {
    let angle = -1.5f64..1.5;
    (
        -1.0f64..1.0,
        -1.0f64..1.0,
        0.0f64..1.0,
        0.0f64..1.0,
        angle.clone(),
        angle,
    )
        .prop_map(|(a, b, c, d, e, f)| CalibrationSample {
            features: [a, b, c, d],
            labels: [e, f],
        })
}

proptest! {
    #[test]
    fn dataset_round_trips(samples in prop::collection::vec(sample(), 0..40)) {
        let back = decode_dataset(&encode_dataset(&samples)).unwrap();
        prop_assert_eq!(back, samples);
    }

    #[test]
    fn labels_are_antisymmetric(
        cx in 0.0f64..640.0,
        cy in 0.0f64..480.0,
        r in 1.0f64..200.0,
        fx in -0.99f64..0.99,
        fy in -0.99f64..0.99,
    ) {
        let (ox, oy) = (fx * r / 2f64.sqrt(), fy * r / 2f64.sqrt());
        let a = ball_label(cx + ox, cy + oy, [cx, cy], r).unwrap();
        let b = ball_label(cx - ox, cy + oy, [cx, cy], r).unwrap();
        let c = ball_label(cx + ox, cy - oy, [cx, cy], r).unwrap();
        prop_assert!((a[0] + b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        prop_assert!((a[1] + c[1]).abs() < 1e-12 && (a[0] - c[0]).abs() < 1e-12);
        prop_assert!(a[0].abs() < std::f64::consts::FRAC_PI_2 && a[1].abs() < std::f64::consts::FRAC_PI_2);
    }
}

#[test]
fn thirty_press_calibration_generalises() {
    let cfg = TactileExperimentConfig::default();
    let cal = calibrate_membrane(&MembraneSpec::preset(Finish::SemiReflective), &cfg, 2).unwrap();
    let holdout = cal.model.holdout_rmse.unwrap();
    assert!(holdout < 0.05, "held-out rmse {holdout} rad");
    assert!(cal.samples > 10_000);
}
