use std::path::Path;

use anyhow::{anyhow, bail, Context as _, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use stereotac::depth_eval::{
    assemble_report, assemble_tactile_report, evaluate_sequence, spatial_rmse_pct, z_accuracy,
    EvalConfig, EvalResult, ReportMetric,
};
use stereotac::experiments::{
    derive_seed, disk_experiment, leakage_scenario, opacity_table, stereo_sweep,
};
use stereotac::imaging_io::{
    read_floatmap, read_image, CellUnit, FloatMap, ImageRGB8, MapUnit, PointCloud3D, ReportCell,
    ReportTable, INVALID_DEPTH,
};
use stereotac::membrane_sim::{
    add_sensor_noise, ball_press_sequence, deform_membrane, render_reference_pair,
    render_stereo_pair, render_tactile_pair, ExternalScene, Finish, IndenterShape, IndenterSpec,
    MembraneSpec, ReflectiveObject, StereoRenderOptions, TactileFramePair,
};
use stereotac::stereo_vision::{block_match, rectify_pair, remove_outliers, reproject, StereoRig};
use stereotac::tactile_recon::{
    fit_calibration, gen_ball_labels, label_presses, measure_disk_depth, read_dataset, CalibModel,
    CalibrationSample, TactileError, TrainConfig,
};
use stereotac::SensorGrid;

use crate::config::RunConfig;
use crate::output::OutDir;
use crate::{
    CalibrateArgs, EvaluateArgs, Experiment, ReconstructArgs, SimMode, SimulateArgs, StereoArgs,
};

pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub out: OutDir,
}

/// Ground truth written next to a simulated tactile capture.
#[derive(Debug, Serialize, Deserialize)]
struct TactileTruth {
    membrane: MembraneSpec,
    indenter: Option<IndenterSpec>,
    reflective_object: Option<ReflectiveObject>,
    grid: SensorGrid,
}

#[derive(Debug, Serialize, Deserialize)]
struct StereoTruth {
    membrane: MembraneSpec,
    distance_mm: f64,
    frames: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct PressRecord {
    frame_dx: String,
    frame_dy: String,
    center_px: [f64; 2],
    radius_px: f64,
    contact_radius_px: f64,
}

/// Index of a ball-press directory.
#[derive(Debug, Serialize, Deserialize)]
struct PressSet {
    membrane: MembraneSpec,
    ball_radius_mm: f64,
    grid: SensorGrid,
    reference_dx: String,
    reference_dy: String,
    presses: Vec<PressRecord>,
}

#[derive(Debug, Serialize)]
struct ReconstructSummary {
    masked_pixels: usize,
    peak_depth_mm: f64,
    plateau_depth_mm: Option<f64>,
    /// Set when no contact was expected but depth was reconstructed anyway.
    false_contact: Option<bool>,
}

#[derive(Debug, Serialize)]
struct StereoSummary {
    valid_disparities: usize,
    points: usize,
    outliers_removed: usize,
    median_z_mm: Option<f64>,
}

fn finish(name: &str) -> Result<Finish> {
    Finish::parse(name).ok_or_else(|| {
        let names: Vec<&str> = Finish::ALL.iter().map(|f| f.name()).collect();
        anyhow!(
            "unknown membrane {name:?}; expected one of {}",
            names.join(", ")
        )
    })
}

fn membrane(name: &str, opacity: Option<f64>) -> Result<MembraneSpec> {
    let mut m = MembraneSpec::preset(finish(name)?);
    if let Some(o) = opacity {
        m.opacity = o;
    }
    m.validate()?;
    Ok(m)
}

/// `none`, `disk[<diameter>]` or `sphere[<radius>]`; sizes in mm.
fn indenter(spec: &str, depth: f64, center: [f64; 2]) -> Result<Option<IndenterSpec>> {
    let size = |rest: &str, default: f64| -> Result<f64> {
        if rest.is_empty() {
            return Ok(default);
        }
        rest.parse::<f64>()
            .map_err(|_| anyhow!("bad indenter size in {spec:?}"))
    };
    if spec == "none" {
        return Ok(None);
    }
    if let Some(rest) = spec.strip_prefix("disk") {
        return Ok(Some(IndenterSpec::disk(size(rest, 13.0)?, depth, center)));
    }
    if let Some(rest) = spec.strip_prefix("sphere") {
        return Ok(Some(IndenterSpec::sphere(size(rest, 4.0)?, depth, center)));
    }
    bail!("unknown indenter {spec:?}; expected none, disk[<diameter mm>] or sphere[<radius mm>]")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_image(path: &Path) -> Result<ImageRGB8> {
    read_image(path).with_context(|| format!("reading {}", path.display()))
}

fn load_pair(dir: &Path, dx: &str, dy: &str) -> Result<TactileFramePair> {
    Ok(TactileFramePair::new(
        load_image(&dir.join(dx))?,
        load_image(&dir.join(dy))?,
    )?)
}

pub fn simulate(ctx: &Context, a: &SimulateArgs) -> Result<()> {
    match a.mode {
        SimMode::Tactile => simulate_tactile(ctx, a)?,
        SimMode::Stereo => simulate_stereo(ctx, a)?,
        SimMode::BallPresses => simulate_presses(ctx, a)?,
    }
    let name = match a.mode {
        SimMode::Tactile => "simulate tactile",
        SimMode::Stereo => "simulate stereo",
        SimMode::BallPresses => "simulate ball-presses",
    };
    ctx.out.sidecar(name, ctx.seed, &ctx.config)
}

fn simulate_tactile(ctx: &Context, a: &SimulateArgs) -> Result<()> {
    let sim = &ctx.config.tactile.sim;
    let grid = sim.grid;
    let m = membrane(&a.membrane, a.opacity)?;
    let center = a
        .center
        .unwrap_or([grid.width as f64 / 2.0, grid.height as f64 / 2.0]);
    let indenter = indenter(&a.indenter, a.depth, center)?;
    let surface = match &indenter {
        Some(i) => deform_membrane(i, &m, &grid)?,
        None => FloatMap::zeros(grid.width, grid.height, MapUnit::Mm),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.seed, 20));
    let mut scene = if sim.ambient_lux > 0.0 {
        ExternalScene::ambient_clutter(sim.ambient_lux, derive_seed(ctx.seed, 21))
    } else {
        ExternalScene::none()
    };
    scene.reflective_object = a.reflective_object.map(|standoff_mm| ReflectiveObject {
        center_px: center,
        standoff_mm,
        ..ctx.config.leakage.object.clone()
    });
    let mut frames = render_tactile_pair(&surface, &sim.rig, &m, &scene, &grid)?;
    add_sensor_noise(&mut frames.frame_dx, sim.sensor_noise_sigma, &mut rng);
    add_sensor_noise(&mut frames.frame_dy, sim.sensor_noise_sigma, &mut rng);
    let reference = render_reference_pair(&sim.rig, &m, &grid)?;

    let out = &ctx.out;
    out.image("frame_dx.ppm", &frames.frame_dx)?;
    out.image("frame_dy.ppm", &frames.frame_dy)?;
    out.image("reference_dx.ppm", &reference.frame_dx)?;
    out.image("reference_dy.ppm", &reference.frame_dy)?;
    out.floatmap("surface.pfm", &surface)?;
    let peak = surface.values().iter().fold(0.0f32, |m, &v| m.min(v));
    out.json(
        "truth.json",
        &TactileTruth {
            membrane: m,
            indenter,
            reflective_object: scene.reflective_object.clone(),
            grid,
        },
    )?;
    println!(
        "wrote tactile frame pair; true peak indentation {:.3} mm",
        peak.abs()
    );
    Ok(())
}

fn simulate_stereo(ctx: &Context, a: &SimulateArgs) -> Result<()> {
    let cfg = &ctx.config.stereo;
    if a.frames == 0 {
        bail!("--frames must be at least 1");
    }
    let m = membrane(&a.membrane, a.opacity)?;
    let rig = cfg.rig()?;
    let scene =
        ExternalScene::textured_plane(a.distance, cfg.ambient_lux, derive_seed(ctx.seed, 10));
    for i in 0..a.frames {
        let options = StereoRenderOptions {
            frame_seed: derive_seed(ctx.seed, 1000 + i as u64),
            ..cfg.render.clone()
        };
        let (l, r) = render_stereo_pair(&scene, &m, &rig, &options)?;
        ctx.out.image(&format!("left_{i:02}.ppm"), &l)?;
        ctx.out.image(&format!("right_{i:02}.ppm"), &r)?;
    }
    ctx.out.text("rig.json", &rig.to_json()?)?;
    ctx.out.json(
        "truth.json",
        &StereoTruth {
            membrane: m,
            distance_mm: a.distance,
            frames: a.frames,
        },
    )?;
    println!(
        "wrote {} stereo pair(s) of a plane at {} mm",
        a.frames, a.distance
    );
    Ok(())
}

fn simulate_presses(ctx: &Context, a: &SimulateArgs) -> Result<()> {
    let cfg = &ctx.config.tactile;
    let m = membrane(&a.membrane, a.opacity)?;
    let count = a.count.unwrap_or(cfg.calibration_presses);
    let presses = ball_press_sequence(
        &m,
        cfg.ball_radius_mm,
        count,
        derive_seed(ctx.seed, 1),
        &cfg.sim,
    )?;
    let reference = render_reference_pair(&cfg.sim.rig, &m, &cfg.sim.grid)?;
    ctx.out.image("reference_dx.ppm", &reference.frame_dx)?;
    ctx.out.image("reference_dy.ppm", &reference.frame_dy)?;
    let mut records = Vec::with_capacity(presses.len());
    for (i, p) in presses.iter().enumerate() {
        let (dx, dy) = (
            format!("press_{i:03}_dx.ppm"),
            format!("press_{i:03}_dy.ppm"),
        );
        ctx.out.image(&dx, &p.frames.frame_dx)?;
        ctx.out.image(&dy, &p.frames.frame_dy)?;
        records.push(PressRecord {
            frame_dx: dx,
            frame_dy: dy,
            center_px: p.center_px,
            radius_px: p.radius_px,
            contact_radius_px: p.contact_radius_px,
        });
    }
    let set = PressSet {
        membrane: m,
        ball_radius_mm: cfg.ball_radius_mm,
        grid: cfg.sim.grid,
        reference_dx: "reference_dx.ppm".into(),
        reference_dy: "reference_dy.ppm".into(),
        presses: records,
    };
    ctx.out.json("presses.json", &set)?;
    println!("wrote {count} ball presses");
    Ok(())
}

fn labels_from_dir(dir: &Path, ctx: &Context) -> Result<(Vec<CalibrationSample>, SensorGrid)> {
    let set: PressSet = read_json(&dir.join("presses.json"))?;
    let reference = load_pair(dir, &set.reference_dx, &set.reference_dy)?;
    let mut samples = Vec::new();
    for p in &set.presses {
        let frames = load_pair(dir, &p.frame_dx, &p.frame_dy)?;
        let hsv = &ctx.config.tactile.hsv;
        match gen_ball_labels(
            &frames,
            &reference,
            p.center_px,
            p.radius_px,
            Some(p.contact_radius_px),
            hsv,
        ) {
            Ok(s) => samples.extend(s),
            Err(TactileError::EmptyCalibrationFrame) => {
                log::warn!("{} has no contact pixels", p.frame_dx)
            }
            Err(e) => return Err(e.into()),
        }
    }
    if samples.is_empty() {
        return Err(TactileError::EmptyDataset.into());
    }
    Ok((samples, set.grid))
}

pub fn calibrate(ctx: &Context, a: &CalibrateArgs) -> Result<()> {
    let cfg = &ctx.config.tactile;
    let (samples, grid, from_dataset) = if let Some(path) = &a.dataset {
        let samples =
            read_dataset(path).with_context(|| format!("loading dataset {}", path.display()))?;
        (samples, None, true)
    } else if let Some(dir) = &a.presses {
        let (samples, grid) = labels_from_dir(dir, ctx)?;
        (samples, Some(grid), false)
    } else {
        let m = membrane(&a.membrane, None)?;
        let presses = ball_press_sequence(
            &m,
            cfg.ball_radius_mm,
            cfg.calibration_presses,
            derive_seed(ctx.seed, 1),
            &cfg.sim,
        )?;
        let reference = render_reference_pair(&cfg.sim.rig, &m, &cfg.sim.grid)?;
        (
            label_presses(&presses, &reference, &cfg.hsv)?,
            Some(cfg.sim.grid),
            false,
        )
    };
    let train = TrainConfig {
        seed: derive_seed(ctx.seed, 2),
        ..cfg.train.clone()
    };
    let mut model = fit_calibration(&samples, &train)?;
    model.frame_size = grid.map(|g| [g.width, g.height]);
    ctx.out.text("model.json", &model.to_json()?)?;
    if !from_dataset {
        ctx.out.text(
            "dataset.csv",
            &stereotac::tactile_recon::encode_dataset(&samples),
        )?;
    }
    for w in &model.warnings {
        println!("warning: {w}");
    }
    match model.holdout_rmse {
        Some(e) => println!(
            "trained on {} of {} samples; held-out RMSE {e:.4} rad",
            model.train_samples,
            samples.len()
        ),
        None => println!(
            "trained on {} samples; too few for a held-out split",
            model.train_samples
        ),
    }
    ctx.out.sidecar("calibrate-tactile", ctx.seed, &ctx.config)
}

pub fn reconstruct(ctx: &Context, a: &ReconstructArgs) -> Result<()> {
    let frames = load_pair(&a.input, "frame_dx.ppm", "frame_dy.ppm")?;
    let reference = load_pair(&a.input, "reference_dx.ppm", "reference_dy.ppm")?;
    let truth_path = a.input.join("truth.json");
    let truth: Option<TactileTruth> = if truth_path.exists() {
        Some(read_json(&truth_path)?)
    } else {
        None
    };
    let px_per_mm = truth.as_ref().map_or(a.px_per_mm, |t| t.grid.px_per_mm);
    let text = std::fs::read_to_string(&a.model)
        .with_context(|| format!("reading model {}", a.model.display()))?;
    let model = CalibModel::from_json(&text)
        .with_context(|| format!("parsing model {}", a.model.display()))?;
    if let Some([w, h]) = model.frame_size {
        if [w, h] != [frames.width(), frames.height()] {
            bail!(
                "model was calibrated on {w}x{h} frames but the input is {}x{}",
                frames.width(),
                frames.height()
            );
        }
    }
    let rec = stereotac::tactile_recon::reconstruct(
        &model,
        &frames,
        &reference,
        &ctx.config.tactile.hsv,
        px_per_mm,
    )?;
    ctx.out.floatmap("depth.pfm", &rec.depth)?;
    if a.ply {
        let (w, _) = (rec.depth.width(), rec.depth.height());
        let points = rec
            .depth
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &z)| z > 0.0)
            .map(|(i, &z)| {
                [
                    (i % w) as f64 / px_per_mm,
                    (i / w) as f64 / px_per_mm,
                    z as f64,
                ]
            })
            .collect();
        ctx.out
            .cloud("depth.ply", &PointCloud3D::from_points(points))?;
    }
    let peak = rec.peak_depth();
    let masked = rec.mask.count();
    let plateau = match truth.as_ref().and_then(|t| t.indenter.as_ref()) {
        Some(IndenterSpec {
            shape: IndenterShape::Disk { diameter_mm },
            center_px,
            ..
        }) => Some(measure_disk_depth(
            &rec.depth,
            *center_px,
            *diameter_mm,
            px_per_mm,
        )?),
        _ => None,
    };
    if masked == 0 {
        println!("no contact: depth map is all zero");
    } else {
        println!("contact over {masked} pixels; peak depth {peak:.3} mm");
    }
    if let Some(p) = plateau {
        println!("disk plateau depth {p:.3} mm");
    }
    let false_contact = a.expect_no_contact.then_some(peak > 0.0);
    if false_contact == Some(true) {
        println!("flagged: {peak:.3} mm of depth where no contact was expected (light leaking through the membrane?)");
    }
    ctx.out.json(
        "summary.json",
        &ReconstructSummary {
            masked_pixels: masked,
            peak_depth_mm: peak,
            plateau_depth_mm: plateau,
            false_contact,
        },
    )?;
    ctx.out.sidecar("reconstruct", ctx.seed, &ctx.config)
}

pub fn stereo(ctx: &Context, a: &StereoArgs) -> Result<()> {
    let rig_text = std::fs::read_to_string(&a.rig)
        .with_context(|| format!("reading rig file {}", a.rig.display()))?;
    let rig = StereoRig::from_json(&rig_text)
        .with_context(|| format!("parsing rig file {}", a.rig.display()))?;
    let (left, right) = (load_image(&a.left)?, load_image(&a.right)?);
    let (left, right) = rectify_pair(&left, &right, &rig)?;
    let matcher = &ctx.config.stereo.matcher;
    let disparity = block_match(&left, &right, matcher)?;
    let rep = reproject(&disparity, &rig, Some(&left));
    let outliers = a.outliers.or(ctx.config.stereo.outliers);
    let (cloud, keep, removed) = match outliers {
        Some((k, ratio)) if rep.cloud.len() > k => {
            let (cloud, keep, stats) = remove_outliers(&rep.cloud, k, ratio)?;
            (cloud, keep, stats.removed)
        }
        _ => (rep.cloud.clone(), vec![true; rep.cloud.len()], 0),
    };
    let (w, h) = (left.width(), left.height());
    let mut depth = vec![INVALID_DEPTH; w * h];
    for ((p, &idx), &k) in rep.cloud.points.iter().zip(&rep.pixel_index).zip(&keep) {
        if k {
            depth[idx] = p[2] as f32;
        }
    }
    let depth = FloatMap::with_sentinel(w, h, depth, MapUnit::Mm, INVALID_DEPTH)?;
    ctx.out.floatmap("disparity.pfm", &disparity.map)?;
    ctx.out.floatmap("depth.pfm", &depth)?;
    ctx.out.cloud("cloud.ply", &cloud)?;
    let summary = StereoSummary {
        valid_disparities: disparity.valid_values().count(),
        points: cloud.len(),
        outliers_removed: removed,
        median_z_mm: cloud.median_z(),
    };
    match summary.median_z_mm {
        Some(z) => println!("{} points; median Z {z:.2} mm", summary.points),
        None => println!("no valid disparities"),
    }
    ctx.out.json("summary.json", &summary)?;
    ctx.out.sidecar("stereo", ctx.seed, &ctx.config)
}

pub fn evaluate(ctx: &Context, a: &EvaluateArgs) -> Result<()> {
    let finishes = a
        .membranes
        .as_ref()
        .map(|names| names.iter().map(|n| finish(n)).collect::<Result<Vec<_>>>())
        .transpose()?;
    let command = match a.experiment {
        Experiment::StereoSweep => {
            let mut cfg = ctx.config.stereo.clone();
            if let Some(f) = a.frames {
                cfg.frames_per_cell = f;
            }
            if let Some(d) = &a.distances {
                cfg.distances_mm = d.clone();
            }
            if let Some(f) = &finishes {
                cfg.finishes = f.clone();
            }
            let results = stereo_sweep(&cfg, ctx.seed)?;
            let names: Vec<&str> = cfg.finishes.iter().map(|f| f.name()).collect();
            for (stem, metric) in [
                ("z_accuracy", ReportMetric::ZAccuracy),
                ("spatial_rmse", ReportMetric::SpatialRmse),
                ("temporal_noise", ReportMetric::TemporalNoise),
            ] {
                let table = assemble_report(&results, metric, &names);
                println!("{}", table.to_pretty(3));
                ctx.out.report(stem, &table)?;
            }
            ctx.out.json("sweep_results.json", &results)?;
            "evaluate stereo-sweep"
        }
        Experiment::TactileDisk => {
            let mut cfg = ctx.config.tactile.clone();
            if let Some(t) = a.trials {
                cfg.disk_trials = t;
            }
            let finishes = finishes.unwrap_or_else(|| Finish::ALL.to_vec());
            let rows = disk_experiment(&finishes, &cfg, ctx.seed)?;
            let table = assemble_tactile_report(&rows);
            println!("{}", table.to_pretty(3));
            ctx.out.report("disk_depth", &table)?;
            ctx.out.json("disk_trials.json", &rows)?;
            "evaluate tactile-disk"
        }
        Experiment::Opacity => {
            let table = opacity_table()?;
            println!("{}", table.to_pretty(2));
            ctx.out.report("opacity", &table)?;
            "evaluate opacity"
        }
        Experiment::Leakage => {
            let readings = leakage_scenario(&ctx.config.leakage, ctx.seed)?;
            let labels = readings
                .iter()
                .map(|r| format!("{:.2}", 100.0 * r.opacity))
                .collect();
            let mut table = ReportTable::new(
                "False-contact depth",
                "opacity_pct",
                labels,
                vec!["peak_depth".into()],
            );
            for (i, r) in readings.iter().enumerate() {
                table.set(i, 0, ReportCell::new(r.peak_depth_mm, CellUnit::Mm));
            }
            println!("{}", table.to_pretty(3));
            ctx.out.report("leakage", &table)?;
            ctx.out.json("leakage.json", &readings)?;
            "evaluate leakage"
        }
        Experiment::Maps => {
            let gt = a.gt.ok_or_else(|| anyhow!("`maps` needs --gt <mm>"))?;
            if a.maps.is_empty() {
                bail!("`maps` needs at least one --maps <file.pfm>");
            }
            let maps = a
                .maps
                .iter()
                .map(|p| read_floatmap(p).with_context(|| format!("reading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let table = maps_table(&maps, gt, &a.membrane)?;
            println!("{}", table.to_pretty(3));
            ctx.out.report("maps", &table)?;
            "evaluate maps"
        }
    };
    ctx.out.sidecar(command, ctx.seed, &ctx.config)
}

/// One-row metrics table for a sequence of depth maps. Maps of mismatched
/// size leave the row empty instead of failing the run.
fn maps_table(maps: &[FloatMap], gt: f64, membrane: &str) -> Result<ReportTable> {
    let cols = ["z_accuracy", "spatial_rmse", "temporal_noise"]
        .map(String::from)
        .to_vec();
    let mut table = ReportTable::new(
        "Depth map metrics (%)",
        "distance_mm",
        vec![format!("{gt}")],
        cols,
    );
    if maps.iter().any(|m| !m.same_size(&maps[0])) {
        log::warn!("depth maps differ in size; leaving the cell empty");
        eprintln!("warning: depth maps differ in size; cell left empty");
        return Ok(table);
    }
    let cfg = EvalConfig {
        frame_count: maps.len(),
        ..EvalConfig::new(gt, membrane)
    };
    if maps.len() == 1 {
        eprintln!("warning: one depth map; temporal noise left empty");
        table.set(
            0,
            0,
            ReportCell::new(z_accuracy(&maps[0], &cfg)?, CellUnit::Percent),
        );
        table.set(
            0,
            1,
            ReportCell::new(spatial_rmse_pct(&maps[0], &cfg)?, CellUnit::Percent),
        );
        return Ok(table);
    }
    let r: EvalResult = evaluate_sequence(maps, &cfg)?;
    table.set(0, 0, ReportCell::new(r.z_accuracy_pct, CellUnit::Percent));
    table.set(
        0,
        1,
        ReportCell::with_spread(r.rmse_pct_mean, r.rmse_pct_std, CellUnit::Percent),
    );
    table.set(
        0,
        2,
        ReportCell::new(r.temporal_noise_pct, CellUnit::Percent),
    );
    Ok(table)
}
