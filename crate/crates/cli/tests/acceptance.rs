//! Acceptance suite: one PASS/FAIL line per criterion, run in sequence so
//! the runtime budgets are measured without contention.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stereotac::depth_eval::{mean_std, z_accuracy, EvalConfig, EvalResult};
use stereotac::experiments::{
    disk_experiment, leakage_scenario, stereo_sweep, LeakageConfig, StereoSweepConfig,
    TactileExperimentConfig,
};
use stereotac::imaging_io::{FloatMap, ImageRGB8, MapUnit, INVALID_DEPTH};
use stereotac::membrane_sim::{
    ball_press_sequence, procedural_texture, render_reference_pair, Finish, MembraneSpec,
    TactileSimConfig,
};
use stereotac::stereo_vision::{
    block_match, calibrate_stereo, reproject, synthetic_corner_frames, BoardSpec, DisparityMap,
    MatcherSettings, StereoRig,
};
use stereotac::tactile_recon::{
    ball_label, gen_ball_labels, solve_poisson_dirichlet, HsvFilterSpec,
};
use stereotac::DEFAULT_SEED;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, budget: Duration, detail: String) -> Outcome {
    check(
        elapsed < budget,
        format!(
            "{detail}; {:.1} s of {} s budget",
            elapsed.as_secs_f64(),
            budget.as_secs()
        ),
    )
}

/// Interior 5-point system solved by banded Cholesky.
fn direct_poisson(gx: &[f64], gy: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (nx, ny) = (w - 2, h - 2);
    let (n, b) = (nx * ny, nx);
    let mut band = vec![vec![0.0f64; b + 1]; n];
    let mut y = vec![0.0; n];
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let p = (j + 1) * w + i + 1;
            y[k] = -(gx[p] - gx[p - 1] + gy[p] - gy[p - w]);
            band[k][b] = 4.0;
            if i > 0 {
                band[k][b - 1] = -1.0;
            }
            if j > 0 {
                band[k][0] = -1.0;
            }
        }
    }
    for i in 0..n {
        for jj in b.saturating_sub(i)..=b {
            let j = i + jj - b;
            let mut s = band[i][jj];
            for k in i.saturating_sub(b).max(j.saturating_sub(b))..j {
                s -= band[i][k + b - i] * band[j][k + b - j];
            }
            band[i][jj] = if j == i { s.sqrt() } else { s / band[j][b] };
        }
    }
    for i in 0..n {
        let s = (i.saturating_sub(b)..i).fold(y[i], |s, k| s - band[i][k + b - i] * y[k]);
        y[i] = s / band[i][b];
    }
    for i in (0..n).rev() {
        let s = (i + 1..(i + b + 1).min(n)).fold(y[i], |s, k| s - band[k][i + b - k] * y[k]);
        y[i] = s / band[i][b];
    }
    let mut z = vec![0.0; w * h];
    for j in 0..ny {
        z[(j + 1) * w + 1..(j + 1) * w + 1 + nx].copy_from_slice(&y[j * nx..(j + 1) * nx]);
    }
    z
}

fn poisson_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (w, h) = (rng.random_range(8..=64), rng.random_range(8..=64));
        let mut field = || -> Vec<f64> {
            (0..w * h)
                .map(|p| {
                    let (x, y) = (p % w, p / w);
                    if x < 3 || y < 3 || x + 3 >= w || y + 3 >= h {
                        0.0
                    } else {
                        rng.random_range(-1.0..1.0)
                    }
                })
                .collect()
        };
        let (gx, gy) = (field(), field());
        let fast = solve_poisson_dirichlet(&gx, &gy, w, h);
        let direct = direct_poisson(&gx, &gy, w, h);
        let num: f64 = fast.iter().zip(&direct).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = direct.iter().map(|b| b * b).sum();
        worst = worst.max((num / den).sqrt());
    }
    let elapsed = t.elapsed();
    check(
        worst < 1e-6,
        format!("max relative error {worst:.2e} over 20 fields"),
    )
    .and_then(|d| within(elapsed, Duration::from_secs(5), d))
}

fn label_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let angle = |o: f64, r: f64| o.atan2((r * r - o * o).sqrt());
    let (mut worst, mut n) = (0.0f64, 0);
    while n < 10_000 {
        let r = rng.random_range(10.0..120.0);
        let c = [
            rng.random_range(100.0..540.0),
            rng.random_range(100.0..380.0),
        ];
        let (ox, oy) = (rng.random_range(-r..r), rng.random_range(-r..r));
        let Some(d) = ball_label(c[0] + ox, c[1] + oy, c, r) else {
            continue;
        };
        let m = ball_label(c[0] - ox, c[1] - oy, c, r).ok_or("mirror pixel lost its label")?;
        worst = worst
            .max((d[0] - angle(ox, r)).abs())
            .max((d[1] - angle(oy, r)).abs());
        worst = worst.max((d[0] + m[0]).abs()).max((d[1] + m[1]).abs());
        n += 1;
    }
    let cfg = TactileSimConfig::clean();
    let membrane = MembraneSpec::preset(Finish::SemiReflective);
    let reference =
        render_reference_pair(&cfg.rig, &membrane, &cfg.grid).map_err(|e| e.to_string())?;
    let (w, h) = ((cfg.grid.width - 1) as f64, (cfg.grid.height - 1) as f64);
    let mut pressed = 0;
    for p in
        ball_press_sequence(&membrane, 6.0, 3, DEFAULT_SEED, &cfg).map_err(|e| e.to_string())?
    {
        let samples = gen_ball_labels(
            &p.frames,
            &reference,
            p.center_px,
            p.radius_px,
            None,
            &HsvFilterSpec::default(),
        )
        .map_err(|e| e.to_string())?;
        for s in &samples {
            let (ox, oy) = (
                (s.features[2] * w).round() - p.center_px[0],
                (s.features[3] * h).round() - p.center_px[1],
            );
            worst = worst
                .max((s.labels[0] - angle(ox, p.radius_px)).abs())
                .max((s.labels[1] - angle(oy, p.radius_px)).abs());
        }
        pressed += samples.len();
    }
    check(
        worst < 1e-12,
        format!(
            "max deviation {worst:.1e} rad over 10000 random pixels and {pressed} press pixels"
        ),
    )
}

fn disk_table() -> Outcome {
    let t = Instant::now();
    let rows = disk_experiment(
        &Finish::ALL,
        &TactileExperimentConfig::default(),
        DEFAULT_SEED,
    )
    .map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let stats: Vec<(Finish, f64, f64)> = rows
        .iter()
        .map(|(name, d)| {
            let (m, s) = mean_std(d);
            (Finish::parse(name).expect("preset name"), m, s)
        })
        .collect();
    let summary = stats
        .iter()
        .map(|(f, m, s)| format!("{} {m:.3}±{s:.3}", f.name()))
        .collect::<Vec<_>>()
        .join(", ");
    let semi = stats
        .iter()
        .find(|s| s.0 == Finish::SemiReflective)
        .ok_or("no semi_reflective row")?;
    let mut by_std = stats.clone();
    by_std.sort_by(|a, b| a.2.total_cmp(&b.2));
    let ok = (semi.1 - 1.0).abs() <= 0.2 && by_std[..2].iter().all(|s| s.0.is_reflective());
    check(ok, summary).and_then(|d| within(elapsed, Duration::from_secs(120), d))
}

fn z_accuracy_exact() -> Outcome {
    let mut worst = 0.0f64;
    for gt in [100.0, 200.0, 300.0] {
        for e in [-0.05, 0.0, 0.01, 0.09] {
            let map = FloatMap::from_values(
                640,
                480,
                vec![(gt * (1.0 + e)) as f32; 640 * 480],
                MapUnit::Mm,
            )
            .unwrap();
            let got =
                z_accuracy(&map, &EvalConfig::new(gt, "synthetic")).map_err(|e| e.to_string())?;
            worst = worst.max((got - 100.0 * e).abs());
        }
    }
    check(
        worst < 0.01,
        format!("max deviation {worst:.2e} percentage points"),
    )
}

fn cell(results: &[EvalResult], finish: Finish, d: f64) -> &EvalResult {
    results
        .iter()
        .find(|r| r.membrane == finish.name() && r.gt_mm == d)
        .expect("cell present")
}

fn stereo_trends() -> Outcome {
    let cfg = StereoSweepConfig::default();
    let t = Instant::now();
    let results = stereo_sweep(&cfg, DEFAULT_SEED).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let (tr, sm, sr) = (
        Finish::Transparent,
        Finish::SemiMatte,
        Finish::SemiReflective,
    );
    let mut broken = Vec::new();
    for &d in &cfg.distances_mm {
        let (a, b, c) = (
            cell(&results, tr, d),
            cell(&results, sm, d),
            cell(&results, sr, d),
        );
        if !(a.rmse_pct_mean <= b.rmse_pct_mean && b.rmse_pct_mean < c.rmse_pct_mean) {
            broken.push(format!("rmse@{d}"));
        }
        if !(c.temporal_noise_pct > a.temporal_noise_pct
            && c.temporal_noise_pct > b.temporal_noise_pct)
        {
            broken.push(format!("temporal@{d}"));
        }
    }
    let clean = StereoSweepConfig {
        finishes: vec![tr],
        frames_per_cell: 3,
        render: stereotac::membrane_sim::StereoRenderOptions {
            jitter_sigma: 0.0,
            ..cfg.render.clone()
        },
        ..cfg.clone()
    };
    let clean_rmse = stereo_sweep(&clean, DEFAULT_SEED)
        .map_err(|e| e.to_string())?
        .iter()
        .fold(0.0f64, |m, r| m.max(r.rmse_pct_mean));
    let row = |f: Finish, pick: fn(&EvalResult) -> f64| {
        cfg.distances_mm
            .iter()
            .map(|&d| format!("{:.2}", pick(cell(&results, f, d))))
            .collect::<Vec<_>>()
            .join("/")
    };
    let detail = format!(
        "rmse% tr {} sm {} sr {}; temporal% tr {} sm {} sr {}; noiseless transparent rmse max {clean_rmse:.3}%{}",
        row(tr, |r| r.rmse_pct_mean),
        row(sm, |r| r.rmse_pct_mean),
        row(sr, |r| r.rmse_pct_mean),
        row(tr, |r| r.temporal_noise_pct),
        row(sm, |r| r.temporal_noise_pct),
        row(sr, |r| r.temporal_noise_pct),
        if broken.is_empty() { String::new() } else { format!("; ordering broken at {}", broken.join(", ")) }
    );
    check(broken.is_empty() && clean_rmse < 0.5, detail)
        .and_then(|d| within(elapsed, Duration::from_secs(300), d))
}

fn triangulation() -> Outcome {
    let rig = StereoRig::ideal(800.0, 640, 480, 14.0).map_err(|e| e.to_string())?;
    let map = FloatMap::with_sentinel(
        640,
        480,
        vec![56.0; 640 * 480],
        MapUnit::DisparityPx,
        INVALID_DEPTH,
    )
    .unwrap();
    let rep = reproject(
        &DisparityMap {
            map,
            settings: MatcherSettings::default(),
        },
        &rig,
        None,
    );
    let z_err = rep
        .cloud
        .points
        .iter()
        .fold(0.0f64, |m, p| m.max((p[2] - 200.0).abs()));
    let board = BoardSpec::default();
    let views = synthetic_corner_frames(&rig, &board, 15, 0.2, DEFAULT_SEED);
    let cal = calibrate_stereo(&views.frames, &board, 640, 480).map_err(|e| e.to_string())?;
    let b_err = (cal.baseline() - 14.0).abs() / 14.0;
    check(
        z_err < 1e-9 && rep.cloud.len() == 640 * 480 && b_err < 0.01,
        format!(
            "max |Z − 200| {z_err:.1e} mm; calibrated baseline {:.4} mm ({:.3}% off)",
            cal.baseline(),
            100.0 * b_err
        ),
    )
}

fn translation() -> Outcome {
    let wide = procedural_texture(648, 480, DEFAULT_SEED, 0.4);
    let left = ImageRGB8::from_fn(640, 480, |x, y| wide.get(x, y));
    let right = ImageRGB8::from_fn(640, 480, |x, y| wide.get(x + 8, y));
    let d = block_match(&left, &right, &MatcherSettings::default()).map_err(|e| e.to_string())?;
    let valid: Vec<f32> = d.valid_values().collect();
    let good = valid.iter().filter(|v| (**v - 8.0).abs() <= 0.25).count();
    let frac = good as f64 / valid.len().max(1) as f64;
    check(
        !valid.is_empty() && frac >= 0.95,
        format!(
            "{:.2}% of {} valid pixels at 8.0 ± 0.25",
            100.0 * frac,
            valid.len()
        ),
    )
}

fn leakage() -> Outcome {
    let cfg = LeakageConfig::default();
    let readings = leakage_scenario(&cfg, DEFAULT_SEED).map_err(|e| e.to_string())?;
    let detail = readings
        .iter()
        .map(|r| format!("{:.2}% → {:.3} mm", 100.0 * r.opacity, r.peak_depth_mm))
        .collect::<Vec<_>>()
        .join(", ");
    let ok = readings[0].peak_depth_mm > 0.0
        && readings
            .windows(2)
            .all(|w| w[1].peak_depth_mm < w[0].peak_depth_mm);
    check(ok && readings.len() == 3, detail)
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).expect("output dir") {
        let path = entry.expect("entry").path();
        files.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read(&path).expect("read"),
        );
    }
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let config = root.join("small.json");
    std::fs::write(
        &config,
        r#"{"tactile": {"calibration_presses": 3, "disk_trials": 2, "train": {"epochs": 5}},
            "stereo": {"frames_per_cell": 2, "distances_mm": [150.0]},
            "leakage": {"tactile": {"calibration_presses": 3, "train": {"epochs": 5}}}}"#,
    )
    .map_err(|e| e.to_string())?;
    let run = |out: &Path, args: &[String]| -> Result<Vec<u8>, String> {
        let o = Command::new(env!("CARGO_BIN_EXE_stereotac"))
            .arg("--config")
            .arg(&config)
            .args(["--seed", "7", "--out"])
            .arg(out)
            .args(args)
            .env("STEREOTAC_LOG", "error")
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)));
        }
        Ok(o.stdout)
    };
    let p = |path: &Path| path.to_string_lossy().into_owned();
    let (sim_t, sim_s, cal) = (
        root.join("in_tactile"),
        root.join("in_stereo"),
        root.join("in_model"),
    );
    run(
        &sim_t,
        &["simulate".into(), "--mode".into(), "tactile".into()],
    )?;
    run(
        &sim_s,
        &[
            "simulate".into(),
            "--mode".into(),
            "stereo".into(),
            "--frames".into(),
            "2".into(),
        ],
    )?;
    run(&cal, &["calibrate-tactile".into()])?;
    let s = |v: &[&str]| v.iter().map(|a| a.to_string()).collect::<Vec<String>>();
    let commands: Vec<(&str, Vec<String>)> = vec![
        (
            "simulate tactile",
            s(&["simulate", "--mode", "tactile", "--indenter", "sphere6"]),
        ),
        (
            "simulate stereo",
            s(&["simulate", "--mode", "stereo", "--frames", "2"]),
        ),
        (
            "simulate ball-presses",
            s(&["simulate", "--mode", "ball-presses", "--count", "2"]),
        ),
        ("calibrate-tactile", s(&["calibrate-tactile"])),
        (
            "reconstruct",
            vec![
                "reconstruct".into(),
                "--input".into(),
                p(&sim_t),
                "--model".into(),
                p(&cal.join("model.json")),
                "--ply".into(),
            ],
        ),
        (
            "stereo",
            vec![
                "stereo".into(),
                "--left".into(),
                p(&sim_s.join("left_00.ppm")),
                "--right".into(),
                p(&sim_s.join("right_00.ppm")),
                "--rig".into(),
                p(&sim_s.join("rig.json")),
                "--outliers".into(),
                "8,2.0".into(),
            ],
        ),
        (
            "evaluate stereo-sweep",
            s(&[
                "evaluate",
                "stereo-sweep",
                "--membranes",
                "transparent,semi_reflective",
            ]),
        ),
        (
            "evaluate tactile-disk",
            s(&["evaluate", "tactile-disk", "--membranes", "semi_matte"]),
        ),
        ("evaluate opacity", s(&["evaluate", "opacity"])),
        ("evaluate leakage", s(&["evaluate", "leakage"])),
        (
            "evaluate maps",
            vec![
                "evaluate".into(),
                "maps".into(),
                "--gt".into(),
                "200".into(),
                "--maps".into(),
                p(&sim_t.join("surface.pfm")),
            ],
        ),
    ];
    let mut differing = Vec::new();
    let mut files = 0;
    for (i, (name, args)) in commands.iter().enumerate() {
        let (a, b) = (root.join(format!("a{i}")), root.join(format!("b{i}")));
        let (out_a, out_b) = (run(&a, args)?, run(&b, args)?);
        let (snap_a, snap_b) = (snapshot(&a), snapshot(&b));
        files += snap_a.len();
        if out_a != out_b || snap_a != snap_b || snap_a.is_empty() {
            differing.push(*name);
        }
    }
    check(
        differing.is_empty(),
        format!(
            "{} subcommand runs, {files} output files compared{}",
            commands.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!("; differs: {}", differing.join(", "))
            }
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("Poisson solve matches direct 5-point solve", poisson_oracle),
        (
            "ball labels equal asin(offset/r), antisymmetric",
            label_exactness,
        ),
        ("13 mm disk at 1.0 mm: mean and std ordering", disk_table),
        ("Z-accuracy of constant-offset plane", z_accuracy_exact),
        ("stereo sweep RMSE and temporal-noise trends", stereo_trends),
        ("triangulation and calibrated baseline", triangulation),
        ("block matching of an 8 px shift", translation),
        ("leakage imprint falls with opacity", leakage),
        ("CLI byte-determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {id}. {name} [{secs:.1} s]: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {id}. {name} [{secs:.1} s]: {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
