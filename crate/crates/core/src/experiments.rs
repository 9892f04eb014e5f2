//! End-to-end drivers shared by the command-line tool and the test suites:
//! tactile calibration from ball presses, the disk-press trial, the stereo
//! distance sweep, the reflective-object leakage scenario and the opacity
//! bench.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::depth_eval::{
    evaluate_sequence, EvalConfig, EvalError, EvalResult, REPORT_DISTANCES_MM,
};
use crate::imaging_io::{CellUnit, FloatMap, MapUnit, ReportCell, ReportTable, INVALID_DEPTH};
use crate::membrane_sim::{
    ball_press_sequence, measure_opacity, render_press, render_reference_pair, render_stereo_pair,
    render_tactile_pair, ExternalScene, Finish, IndenterSpec, MembraneSpec, ReflectiveObject,
    SimError, StereoRenderOptions, TactileFramePair, TactileSimConfig, BENCH_SOURCE_LUX,
};
use crate::stereo_vision::{
    block_match, remove_outliers, reproject, MatcherSettings, StereoError, StereoRig,
};
use crate::tactile_recon::{
    fit_calibration, label_presses, measure_disk_depth, reconstruct, CalibModel, HsvFilterSpec,
    Reconstruction, TactileError, TrainConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Tactile(#[from] TactileError),
    #[error(transparent)]
    Stereo(#[from] StereoError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid experiment settings: {0}")]
    InvalidSettings(String),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Distinct, reproducible sub-seed for one stage of an experiment.
pub fn derive_seed(seed: u64, stage: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.random()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TactileExperimentConfig {
    pub sim: TactileSimConfig,
    pub hsv: HsvFilterSpec,
    pub train: TrainConfig,
    pub ball_radius_mm: f64,
    pub calibration_presses: usize,
    pub disk_diameter_mm: f64,
    pub disk_depth_mm: f64,
    pub disk_trials: usize,
}

impl Default for TactileExperimentConfig {
    fn default() -> Self {
        Self {
            sim: TactileSimConfig::default(),
            hsv: HsvFilterSpec::default(),
            train: TrainConfig::default(),
            ball_radius_mm: 6.0,
            calibration_presses: 30,
            disk_diameter_mm: 13.0,
            disk_depth_mm: 1.0,
            disk_trials: 30,
        }
    }
}

/// A trained membrane: regressor plus the no-contact reference it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedMembrane {
    pub membrane: MembraneSpec,
    pub model: CalibModel,
    pub reference: TactileFramePair,
    pub samples: usize,
}

/// Presses the calibration ball, labels the contact pixels and trains the
/// regressor.
pub fn calibrate_membrane(
    membrane: &MembraneSpec,
    cfg: &TactileExperimentConfig,
    seed: u64,
) -> Result<CalibratedMembrane> {
    let presses = ball_press_sequence(
        membrane,
        cfg.ball_radius_mm,
        cfg.calibration_presses,
        derive_seed(seed, 1),
        &cfg.sim,
    )?;
    let reference = render_reference_pair(&cfg.sim.rig, membrane, &cfg.sim.grid)?;
    let samples = label_presses(&presses, &reference, &cfg.hsv)?;
    let train = TrainConfig {
        seed: derive_seed(seed, 2),
        ..cfg.train.clone()
    };
    let mut model = fit_calibration(&samples, &train)?;
    model.frame_size = Some([cfg.sim.grid.width, cfg.sim.grid.height]);
    Ok(CalibratedMembrane {
        membrane: membrane.clone(),
        model,
        reference,
        samples: samples.len(),
    })
}

/// One disk press at a random position that keeps the disk and its skirt
/// on the grid.
pub fn random_disk_press(
    cfg: &TactileExperimentConfig,
    membrane: &MembraneSpec,
    rng: &mut impl Rng,
) -> Result<IndenterSpec> {
    let grid = &cfg.sim.grid;
    let margin = 0.5 * cfg.disk_diameter_mm * grid.px_per_mm + membrane.stiffness_radius + 4.0;
    let (max_x, max_y) = (
        (grid.width - 1) as f64 - margin,
        (grid.height - 1) as f64 - margin,
    );
    if max_x <= margin || max_y <= margin {
        return Err(ExperimentError::InvalidSettings(
            "disk does not fit on the sensor grid".into(),
        ));
    }
    let center = [
        rng.random_range(margin..max_x),
        rng.random_range(margin..max_y),
    ];
    Ok(IndenterSpec::disk(
        cfg.disk_diameter_mm,
        cfg.disk_depth_mm,
        center,
    ))
}

/// Plateau depth (mm) of `disk_trials` presses at random positions.
pub fn disk_trials(
    cal: &CalibratedMembrane,
    cfg: &TactileExperimentConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
    (0..cfg.disk_trials)
        .map(|_| {
            let indenter = random_disk_press(cfg, &cal.membrane, &mut rng)?;
            let (frames, _) = render_press(&indenter, &cal.membrane, &cfg.sim, rng.random())?;
            let rec = reconstruct(
                &cal.model,
                &frames,
                &cal.reference,
                &cfg.hsv,
                cfg.sim.grid.px_per_mm,
            )?;
            Ok(measure_disk_depth(
                &rec.depth,
                indenter.center_px,
                cfg.disk_diameter_mm,
                cfg.sim.grid.px_per_mm,
            )?)
        })
        .collect()
}

/// Calibrates every membrane and runs its disk trials, returning
/// `(membrane name, per-trial depths)` rows.
pub fn disk_experiment(
    finishes: &[Finish],
    cfg: &TactileExperimentConfig,
    seed: u64,
) -> Result<Vec<(String, Vec<f64>)>> {
    finishes
        .iter()
        .enumerate()
        .map(|(i, &finish)| {
            let membrane = MembraneSpec::preset(finish);
            let s = derive_seed(seed, 100 + i as u64);
            let cal = calibrate_membrane(&membrane, cfg, s)?;
            log::info!(
                "{}: {} samples, holdout rmse {:?}",
                finish.name(),
                cal.samples,
                cal.model.holdout_rmse
            );
            Ok((finish.name().to_string(), disk_trials(&cal, cfg, s)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StereoSweepConfig {
    pub focal_px: f64,
    pub width: usize,
    pub height: usize,
    pub baseline_mm: f64,
    pub distances_mm: Vec<f64>,
    pub frames_per_cell: usize,
    pub finishes: Vec<Finish>,
    pub ambient_lux: f64,
    pub matcher: MatcherSettings,
    pub render: StereoRenderOptions,
    /// `(k, std_ratio)` for statistical outlier removal; `None` skips it.
    pub outliers: Option<(usize, f64)>,
}

impl Default for StereoSweepConfig {
    fn default() -> Self {
        Self {
            focal_px: 800.0,
            width: 640,
            height: 480,
            baseline_mm: 14.0,
            distances_mm: REPORT_DISTANCES_MM.to_vec(),
            frames_per_cell: 10,
            finishes: Finish::SEE_THROUGH.to_vec(),
            ambient_lux: 400.0,
            matcher: MatcherSettings::default(),
            render: StereoRenderOptions::default(),
            outliers: None,
        }
    }
}

impl StereoSweepConfig {
    pub fn rig(&self) -> Result<StereoRig> {
        Ok(StereoRig::ideal(
            self.focal_px,
            self.width,
            self.height,
            self.baseline_mm,
        )?)
    }
}

/// Depth map (mm along the left optical axis) from a rectified pair:
/// block matching, reprojection through Q and optional outlier removal.
/// Pixels without a surviving point carry the invalid sentinel.
pub fn stereo_depth_map(
    left: &crate::imaging_io::ImageRGB8,
    right: &crate::imaging_io::ImageRGB8,
    rig: &StereoRig,
    matcher: &MatcherSettings,
    outliers: Option<(usize, f64)>,
) -> Result<FloatMap> {
    let disparity = block_match(left, right, matcher)?;
    let rep = reproject(&disparity, rig, None);
    let keep = match outliers {
        Some((k, ratio)) if rep.cloud.len() > k => remove_outliers(&rep.cloud, k, ratio)?.1,
        _ => vec![true; rep.cloud.len()],
    };
    let (w, h) = (left.width(), left.height());
    let mut values = vec![INVALID_DEPTH; w * h];
    for ((p, &idx), &k) in rep.cloud.points.iter().zip(&rep.pixel_index).zip(&keep) {
        if k {
            values[idx] = p[2] as f32;
        }
    }
    Ok(
        FloatMap::with_sentinel(w, h, values, MapUnit::Mm, INVALID_DEPTH)
            .map_err(SimError::from)?,
    )
}

/// Depth maps of `frames_per_cell` captures of a textured plane at
/// `distance_mm` through `membrane`.
pub fn stereo_cell_frames(
    membrane: &MembraneSpec,
    distance_mm: f64,
    cfg: &StereoSweepConfig,
    seed: u64,
) -> Result<Vec<FloatMap>> {
    let rig = cfg.rig()?;
    let scene = ExternalScene::textured_plane(distance_mm, cfg.ambient_lux, derive_seed(seed, 10));
    (0..cfg.frames_per_cell)
        .map(|i| {
            let options = StereoRenderOptions {
                frame_seed: derive_seed(seed, 1000 + i as u64),
                ..cfg.render.clone()
            };
            let (l, r) = render_stereo_pair(&scene, membrane, &rig, &options)?;
            stereo_depth_map(&l, &r, &rig, &cfg.matcher, cfg.outliers)
        })
        .collect()
}

/// Every membrane × distance cell of the sweep, evaluated against the true
/// plane distance.
pub fn stereo_sweep(cfg: &StereoSweepConfig, seed: u64) -> Result<Vec<EvalResult>> {
    let mut results = Vec::new();
    for (mi, &finish) in cfg.finishes.iter().enumerate() {
        let membrane = MembraneSpec::preset(finish);
        for (di, &d) in cfg.distances_mm.iter().enumerate() {
            let cell_seed = derive_seed(seed, 10_000 + (mi * 100 + di) as u64);
            let frames = stereo_cell_frames(&membrane, d, cfg, cell_seed)?;
            let eval = EvalConfig {
                frame_count: frames.len(),
                ..EvalConfig::new(d, finish.name())
            };
            let r = evaluate_sequence(&frames, &eval)?;
            log::info!(
                "{} @ {d} mm: z {:.3}%, rmse {:.3}%, temporal {:.3}%",
                finish.name(),
                r.z_accuracy_pct,
                r.rmse_pct_mean,
                r.temporal_noise_pct
            );
            results.push(r);
        }
    }
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeakageConfig {
    pub tactile: TactileExperimentConfig,
    pub object: ReflectiveObject,
    /// Opacities to probe, in increasing order.
    pub opacities: Vec<f64>,
    /// Finish whose calibration is shared by every probed opacity.
    pub finish: Finish,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        let grid = crate::SensorGrid::DEFAULT;
        Self {
            tactile: TactileExperimentConfig {
                sim: TactileSimConfig::clean(),
                ..Default::default()
            },
            object: ReflectiveObject {
                center_px: [grid.width as f64 / 2.0, grid.height as f64 / 2.0],
                radius_mm: 5.0,
                standoff_mm: 1.0,
                reflectivity: 4.0,
            },
            opacities: [
                Finish::Transparent,
                Finish::SemiMatte,
                Finish::SemiReflective,
            ]
            .iter()
            .map(|f| MembraneSpec::preset(*f).opacity)
            .collect(),
            finish: Finish::Transparent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReading {
    pub opacity: f64,
    /// Largest reconstructed depth (mm) with nothing touching the membrane.
    pub peak_depth_mm: f64,
    pub masked_pixels: usize,
}

/// Reconstructs a flat, untouched membrane with a mirror-like object
/// hovering outside it, once per opacity. Any nonzero depth is the
/// false-contact artifact.
pub fn leakage_scenario(cfg: &LeakageConfig, seed: u64) -> Result<Vec<LeakageReading>> {
    let base = MembraneSpec::preset(cfg.finish);
    let cal = calibrate_membrane(&base, &cfg.tactile, seed)?;
    let grid = &cfg.tactile.sim.grid;
    let flat = FloatMap::zeros(grid.width, grid.height, MapUnit::Mm);
    let scene = ExternalScene {
        reflective_object: Some(cfg.object.clone()),
        ..ExternalScene::none()
    };
    cfg.opacities
        .iter()
        .map(|&opacity| {
            let membrane = MembraneSpec {
                opacity,
                ..base.clone()
            };
            let frames = render_tactile_pair(&flat, &cfg.tactile.sim.rig, &membrane, &scene, grid)?;
            let rec: Reconstruction = reconstruct(
                &cal.model,
                &frames,
                &cal.reference,
                &cfg.tactile.hsv,
                grid.px_per_mm,
            )?;
            Ok(LeakageReading {
                opacity,
                peak_depth_mm: rec.peak_depth(),
                masked_pixels: rec.mask.count(),
            })
        })
        .collect()
}

/// Lux-meter readings for the bare source and every membrane preset.
pub fn opacity_table() -> Result<ReportTable> {
    let mut labels = vec!["no_membrane".to_string()];
    labels.extend(Finish::ALL.iter().map(|f| f.name().to_string()));
    let mut table = ReportTable::new(
        "Membrane opacity",
        "membrane",
        labels,
        vec!["lux".into(), "opacity_pct".into()],
    );
    let bare = measure_opacity(None, BENCH_SOURCE_LUX)?;
    table.set(0, 0, ReportCell::new(bare.transmitted_lux, CellUnit::Lux));
    for (i, f) in Finish::ALL.iter().enumerate() {
        let r = measure_opacity(Some(&MembraneSpec::preset(*f)), BENCH_SOURCE_LUX)?;
        table.set(i + 1, 0, ReportCell::new(r.transmitted_lux, CellUnit::Lux));
        if let Some(pct) = r.opacity_pct {
            table.set(i + 1, 1, ReportCell::new(pct, CellUnit::Percent));
        }
    }
    Ok(table)
}
