//! Benchmark harness over the synthetic scene suites.
//!
//! Per scene: render, corrupt the filter with the error model, then compare
//! the raw composite `corrupted * camera` and the refined composite (cascade
//! under RGB or geometry guidance) against a target image.

use std::fmt::{self, Write as _};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::compose::{composite, relight_with_coefficients, shadow_pass, RelightInputs, ShadowParams};
use crate::diffusion::{cascade, cascade_profiled, CascadeProfile, CascadeSchedule, DEFAULT_LAMBDA};
use crate::error::{Error, Result};
use crate::guidance::{build_coefficients, rgb_guidance, GuidanceField, DEFAULT_KAPPA};
use crate::image::ImageF;
use crate::metrics::{mask_iou, psnr, ssim};
use crate::synth::{
    benchmark_suite, corrupt, flat_wall_scene, geometry_features, render, BenchmarkKind, ErrorModel, RenderOutput,
    SceneInstance,
};

pub const CSV_HEADER: &str = "benchmark,scene_id,psnr_raw,psnr_refined,ssim_raw,ssim_refined,time_ms";

/// Image both composites are scored against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// The unmodified camera frame.
    Camera,
    /// `filter * camera` with the uncorrupted filter.
    GroundTruth,
}

impl Target {
    pub fn default_for(kind: BenchmarkKind) -> Target {
        match kind {
            BenchmarkKind::MeshErrorCorrection | BenchmarkKind::MultiLighting => Target::Camera,
            BenchmarkKind::Fidelity => Target::GroundTruth,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Target::Camera => "camera",
            Target::GroundTruth => "ground-truth",
        }
    }
}

/// Feature image the refinement is guided by.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BenchGuidance {
    /// The camera frame.
    #[default]
    Rgb,
    /// [`geometry_features`] of the render.
    Geometry,
}

impl BenchGuidance {
    pub fn name(self) -> &'static str {
        match self {
            BenchGuidance::Rgb => "rgb",
            BenchGuidance::Geometry => "geometry",
        }
    }

    pub fn field(self, render: &RenderOutput, kappa: f32) -> Result<GuidanceField> {
        match self {
            BenchGuidance::Rgb => rgb_guidance(&render.camera, kappa),
            BenchGuidance::Geometry => GuidanceField::new(geometry_features(render), kappa),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub kind: BenchmarkKind,
    pub count: usize,
    pub seed: u64,
    pub resolution: usize,
    /// `None` picks [`CascadeSchedule::ladder_for`] the resolution.
    pub schedule: Option<CascadeSchedule>,
    pub kappa: f32,
    pub guidance: BenchGuidance,
    /// Noise seed is replaced per scene.
    pub error_model: ErrorModel,
    pub target: Target,
    /// Timed refinement repetitions after one warm-up; the median is kept.
    pub repetitions: usize,
}

impl BenchConfig {
    pub fn new(kind: BenchmarkKind, count: usize, seed: u64) -> Self {
        Self {
            kind,
            count,
            seed,
            resolution: 256,
            schedule: None,
            kappa: DEFAULT_KAPPA,
            guidance: BenchGuidance::Rgb,
            error_model: ErrorModel::default(),
            target: Target::default_for(kind),
            repetitions: 5,
        }
    }

    pub fn effective_schedule(&self) -> Result<CascadeSchedule> {
        match &self.schedule {
            Some(s) => Ok(s.clone()),
            None => CascadeSchedule::ladder_for(self.resolution, DEFAULT_LAMBDA),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRow {
    pub scene_id: usize,
    pub psnr_raw: f64,
    pub psnr_refined: f64,
    pub ssim_raw: f64,
    pub ssim_refined: f64,
    pub time_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub psnr_raw: f64,
    pub psnr_refined: f64,
    pub ssim_raw: f64,
    pub ssim_refined: f64,
    pub time_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub benchmark: String,
    pub target: Target,
    pub guidance: BenchGuidance,
    pub rows: Vec<MetricRow>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl MetricReport {
    fn column(&self, f: fn(&MetricRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    fn aggregate(&self, reduce: fn(Vec<f64>) -> f64) -> Aggregate {
        Aggregate {
            psnr_raw: reduce(self.column(|r| r.psnr_raw)),
            psnr_refined: reduce(self.column(|r| r.psnr_refined)),
            ssim_raw: reduce(self.column(|r| r.ssim_raw)),
            ssim_refined: reduce(self.column(|r| r.ssim_refined)),
            time_ms: reduce(self.column(|r| r.time_ms)),
        }
    }

    pub fn mean(&self) -> Aggregate {
        self.aggregate(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn median(&self) -> Aggregate {
        self.aggregate(median)
    }

    /// Fraction of scenes where the refined PSNR beats the raw one.
    pub fn psnr_win_rate(&self) -> f64 {
        let wins = self.rows.iter().filter(|r| r.psnr_refined > r.psnr_raw).count();
        wins as f64 / self.rows.len() as f64
    }

    /// Header, one line per scene. Infinite PSNR prints as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.3}",
                self.benchmark, r.scene_id, r.psnr_raw, r.psnr_refined, r.ssim_raw, r.ssim_refined, r.time_ms
            );
        }
        out
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "benchmark {} ({} scenes, target: {}, guidance: {}; SSIM stands in for LPIPS)",
            self.benchmark,
            self.rows.len(),
            self.target.name(),
            self.guidance.name()
        )?;
        writeln!(f, "{:<8} {:>10} {:>12} {:>9} {:>12} {:>10}", "", "psnr_raw", "psnr_refined", "ssim_raw", "ssim_refined", "time_ms")?;
        for (name, a) in [("mean", self.mean()), ("median", self.median())] {
            writeln!(
                f,
                "{:<8} {:>10.4} {:>12.4} {:>9.4} {:>12.4} {:>10.3}",
                name, a.psnr_raw, a.psnr_refined, a.ssim_raw, a.ssim_refined, a.time_ms
            )?;
        }
        write!(f, "refined PSNR wins: {:.1}%", 100.0 * self.psnr_win_rate())
    }
}

/// Median of `reps` timed calls after one untimed warm-up call.
pub fn time_median<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<(T, Duration)> {
    let mut out = f()?;
    let mut times = Vec::with_capacity(reps.max(1));
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        out = f()?;
        times.push(t.elapsed());
    }
    times.sort();
    Ok((out, times[times.len() / 2]))
}

/// Everything one scene contributes to a benchmark, before scoring.
#[derive(Clone, Debug)]
pub struct SceneRun {
    pub render: RenderOutput,
    pub corrupted: ImageF,
    pub raw: ImageF,
    pub refined: ImageF,
    pub ground_truth: ImageF,
    pub refine_time: Duration,
}

pub fn run_scene(inst: &SceneInstance, config: &BenchConfig) -> Result<SceneRun> {
    let mut scene = inst.scene.clone();
    scene.camera.resolution.width = config.resolution;
    scene.camera.resolution.height = config.resolution;
    let r = render(&scene)?;
    let corrupted = corrupt(&r.filter, &r.depth, &config.error_model.with_seed(inst.noise_seed))?;
    let raw = composite(&corrupted, &r.camera, None)?;
    let ground_truth = composite(&r.filter, &r.camera, None)?;
    let inputs = RelightInputs::new(r.camera.clone(), corrupted.clone(), None)?;
    let guidance = config.guidance.field(&r, config.kappa)?;
    let schedule = config.effective_schedule()?;
    let (refined, refine_time) = time_median(config.repetitions, || {
        relight_with_coefficients(&inputs, &build_coefficients(&guidance), &schedule, None)
    })?;
    Ok(SceneRun {
        render: r,
        corrupted,
        raw,
        refined,
        ground_truth,
        refine_time,
    })
}

/// Scenes run in parallel; rows come back in scene order.
pub fn run_benchmark(config: &BenchConfig) -> Result<MetricReport> {
    if config.resolution < crate::metrics::SSIM_WINDOW {
        return Err(Error::invalid(format!("resolution {} is below the SSIM window", config.resolution)));
    }
    let suite = benchmark_suite(config.kind, config.count, config.seed, config.resolution)?;
    let rows = suite
        .par_iter()
        .map(|inst| {
            let run = run_scene(inst, config)?;
            let target = match config.target {
                Target::Camera => &run.render.camera,
                Target::GroundTruth => &run.ground_truth,
            };
            Ok(MetricRow {
                scene_id: inst.id,
                psnr_raw: psnr(&run.raw, target, 1.0)?,
                psnr_refined: psnr(&run.refined, target, 1.0)?,
                ssim_raw: ssim(&run.raw, target)?,
                ssim_refined: ssim(&run.refined, target)?,
                time_ms: run.refine_time.as_secs_f64() * 1e3,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport {
        benchmark: config.kind.name().to_string(),
        target: config.target,
        guidance: config.guidance,
        rows,
    })
}

pub const SPEED_CASCADED: &str = "16:5,8:10,4:15,2:20";
pub const SPEED_NAIVE: &str = "2:50";
pub const SPEED_REFERENCE: &str = "2:1000";

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedRow {
    pub name: &'static str,
    pub schedule: String,
    pub steps: usize,
    pub time_ms: f64,
    /// Split of the final timed run.
    pub coefficients_ms: f64,
    pub resampling_ms: f64,
    pub diffusion_ms: f64,
    /// Diffused filter against the reference's diffused filter.
    pub ssim: f64,
    /// Composite against the reference composite.
    pub ssim_composite: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedReport {
    pub width: usize,
    pub height: usize,
    pub cascaded: SpeedRow,
    pub naive: SpeedRow,
    pub reference: SpeedRow,
}

impl SpeedReport {
    pub fn rows(&self) -> [&SpeedRow; 3] {
        [&self.cascaded, &self.naive, &self.reference]
    }
}

impl fmt::Display for SpeedReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "speed ablation on {}x{} (median wall-clock, SSIM vs the 1000-step run)", self.width, self.height)?;
        writeln!(
            f,
            "{:<10} {:<22} {:>6} {:>10} {:>9} {:>9} {:>9} {:>8} {:>14}",
            "config", "schedule", "steps", "time_ms", "coeff_ms", "resamp_ms", "diff_ms", "ssim", "ssim_composite"
        )?;
        for r in self.rows() {
            writeln!(
                f,
                "{:<10} {:<22} {:>6} {:>10.3} {:>9.3} {:>9.3} {:>9.3} {:>8.4} {:>14.4}",
                r.name,
                r.schedule,
                r.steps,
                r.time_ms,
                r.coefficients_ms,
                r.resampling_ms,
                r.diffusion_ms,
                r.ssim,
                r.ssim_composite
            )?;
        }
        Ok(())
    }
}

/// Times the cascaded schedule against 50 and 1000 steps at half resolution.
/// Each timing covers coefficient construction plus the cascade.
pub fn run_speed_ablation(filter: &ImageF, camera: &ImageF, kappa: f32, lambda: f32, repetitions: usize) -> Result<SpeedReport> {
    let guidance = rgb_guidance(camera, kappa)?;
    let configs = [("cascaded", SPEED_CASCADED), ("naive-50", SPEED_NAIVE), ("naive-1000", SPEED_REFERENCE)];
    let mut outs = Vec::with_capacity(3);
    for (name, spec) in configs {
        let schedule = CascadeSchedule::parse(spec, lambda)?;
        let ((img, profile), t) = time_median(repetitions, || {
            let t = Instant::now();
            let coeffs = build_coefficients(&guidance);
            let built = t.elapsed();
            let (img, mut profile) = cascade_profiled(filter, &coeffs, &schedule)?;
            profile.coefficients += built;
            Ok((img, profile))
        })?;
        outs.push((name, schedule, img, profile, t));
    }
    let reference = outs[2].2.clone();
    let reference_composite = composite(&reference, camera, None)?;
    let mut rows = Vec::with_capacity(3);
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    for (name, schedule, img, profile, t) in outs {
        let CascadeProfile { coefficients, resampling, diffusion, .. } = profile;
        rows.push(SpeedRow {
            name,
            schedule: schedule.to_string(),
            steps: schedule.total_steps(),
            time_ms: ms(t),
            coefficients_ms: ms(coefficients),
            resampling_ms: ms(resampling),
            diffusion_ms: ms(diffusion),
            ssim: ssim(&img, &reference)?,
            ssim_composite: ssim(&composite(&img, camera, None)?, &reference_composite)?,
        });
    }
    let mut it = rows.into_iter();
    Ok(SpeedReport {
        width: filter.width(),
        height: filter.height(),
        cascaded: it.next().unwrap(),
        naive: it.next().unwrap(),
        reference: it.next().unwrap(),
    })
}

/// The 512x512 corrupted benchmark scene the speed ablation runs on.
pub fn speed_input(seed: u64) -> Result<(ImageF, ImageF)> {
    let inst = benchmark_suite(BenchmarkKind::MeshErrorCorrection, 1, seed, 512)?.remove(0);
    let r = render(&inst.scene)?;
    let corrupted = corrupt(&r.filter, &r.depth, &ErrorModel::default().with_seed(inst.noise_seed))?;
    Ok((corrupted, r.camera))
}

/// Mask IoU of a shadow map against the hard shadow it came from, `v < 1/2`.
pub const SHADOW_MASK_THRESHOLD: f32 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct ShadowSweep {
    pub resolution: usize,
    /// `(iterations, IoU)` for the shadow pass.
    pub pass: Vec<(usize, f64)>,
    /// IoU after running the shadow through the default cascade instead.
    pub cascade_iou: f64,
}

impl ShadowSweep {
    pub fn iou_at(&self, iterations: usize) -> Option<f64> {
        self.pass.iter().find(|(n, _)| *n == iterations).map(|(_, v)| *v)
    }
}

impl fmt::Display for ShadowSweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "shadow IoU on the flat-wall scene at {0}x{0}", self.resolution)?;
        writeln!(f, "{:<12} {:>8}", "iterations", "iou")?;
        for (n, iou) in &self.pass {
            writeln!(f, "{n:<12} {iou:>8.4}")?;
        }
        writeln!(f, "{:<12} {:>8.4}", "cascade", self.cascade_iou)
    }
}

/// Hard shadow of the flat-wall scene's side light, diffused under the
/// camera frame's guidance for `1..=max_iterations` shadow-pass steps.
pub fn shadow_sweep(resolution: usize, max_iterations: usize, kappa: f32, lambda: f32) -> Result<ShadowSweep> {
    let (scene, side) = flat_wall_scene(resolution);
    let camera = render(&scene)?.camera;
    let shadow = render(&scene.with_lights(vec![side]))?.shadow;
    let guidance = rgb_guidance(&camera, kappa)?;
    let pass = (1..=max_iterations)
        .map(|n| {
            let out = shadow_pass(&shadow, &guidance, &ShadowParams::new(n, lambda)?)?;
            Ok((n, mask_iou(&out, &shadow, SHADOW_MASK_THRESHOLD)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let cascaded = cascade(&shadow, &guidance, &CascadeSchedule::default())?;
    Ok(ShadowSweep {
        resolution,
        pass,
        cascade_iou: mask_iou(&cascaded, &shadow, SHADOW_MASK_THRESHOLD)?,
    })
}
