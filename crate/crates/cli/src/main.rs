//! `relight`: command-line front end.
//!
//! Exit codes: 0 success, 2 bad flags, 3 I/O, 4 incompatible image
//! dimensions. Tables and data go to stdout, diagnostics to stderr.

use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use relight_core::bench::{
    run_benchmark, run_speed_ablation, shadow_sweep, speed_input, BenchConfig, BenchGuidance, Target,
};
use relight_core::compose::{relight, RelightInputs, ShadowParams};
use relight_core::diffusion::{CascadeSchedule, DEFAULT_LAMBDA, DEFAULT_SCHEDULE};
use relight_core::guidance::{load_feature_map, rgb_guidance, save_feature_map, GuidanceField, DEFAULT_KAPPA};
use relight_core::io::{read_png, write_png, BitDepth};
use relight_core::synth::{benchmark_suite, corrupt, geometry_features, render, BenchmarkKind, ErrorModel, SceneSpec};
use relight_core::Error;
use relight_service::{AppState, ServiceConfig};

#[derive(Parser, Debug)]
#[command(name = "relight", version, about = "Relight camera frames with guided anisotropic diffusion")]
struct Cli {
    /// Worker threads for every parallel region; 1 runs sequentially.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Refine a relight filter against a camera frame and composite.
    Relight(RelightArgs),
    /// Write synthetic benchmark scenes and their buffers.
    Synth(SynthArgs),
    /// Run a benchmark suite or the cascade speed ablation.
    Bench(BenchArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct RelightArgs {
    /// Camera frame; the output has the same bit depth.
    #[arg(long)]
    rgb: PathBuf,
    #[arg(long)]
    filter: PathBuf,
    /// Single-channel shadow attenuation map.
    #[arg(long)]
    shadow: Option<PathBuf>,
    /// `rgb`, or `gadf:<path>` for a stored feature map.
    #[arg(long, default_value = "rgb", value_parser = parse_guidance)]
    guidance: GuidanceArg,
    #[arg(long, default_value = DEFAULT_SCHEDULE)]
    schedule: String,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f32,
    /// Edge scale; defaults to 0.03, or the feature map's own value.
    #[arg(long)]
    kappa: Option<f32>,
    #[arg(long, default_value_t = 3)]
    shadow_iters: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Debug)]
enum GuidanceArg {
    Rgb,
    Gadf(PathBuf),
}

fn parse_guidance(s: &str) -> Result<GuidanceArg, String> {
    match s.split_once(':') {
        None if s == "rgb" => Ok(GuidanceArg::Rgb),
        Some(("gadf", p)) if !p.is_empty() => Ok(GuidanceArg::Gadf(p.into())),
        _ => Err(format!("expected `rgb` or `gadf:<path>`, got {s:?}")),
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// mesh-error-correction | multi-lighting | fidelity (or 1, 2, 3)
    #[arg(long, default_value = "mesh-error-correction")]
    kind: BenchmarkKind,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Square image side in pixels.
    #[arg(long, default_value_t = 256)]
    resolution: usize,
    #[arg(long)]
    error_shift: Option<usize>,
    #[arg(long)]
    error_dilate: Option<usize>,
    #[arg(long)]
    error_noise: Option<f32>,
    /// Also write the geometry feature map as `<scene>_features.gadf`.
    #[arg(long)]
    features: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BenchKindArg {
    Suite(BenchmarkKind),
    Speed,
    Shadow,
}

fn parse_bench_kind(s: &str) -> Result<BenchKindArg, String> {
    match s {
        "speed" => return Ok(BenchKindArg::Speed),
        "shadow" => return Ok(BenchKindArg::Shadow),
        _ => {}
    }
    s.parse().map(BenchKindArg::Suite).map_err(|e: Error| e.to_string())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GuidanceModeArg {
    Rgb,
    Geometry,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TargetArg {
    Camera,
    GroundTruth,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// 1, 2, 3, speed, or shadow (IoU over 1..=10 shadow-pass iterations)
    #[arg(long, value_parser = parse_bench_kind)]
    benchmark: BenchKindArg,
    #[arg(long, default_value_t = 50)]
    count: usize,
    /// Defaults to a ladder sized for the resolution.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long, default_value_t = 256)]
    resolution: usize,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f32,
    /// Refinement guidance for the scene suites.
    #[arg(long, value_enum, default_value = "rgb")]
    guidance: GuidanceModeArg,
    /// Image both composites are scored against; defaults per benchmark.
    #[arg(long, value_enum)]
    target: Option<TargetArg>,
    /// Timed repetitions per measurement.
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long)]
    scene: PathBuf,
    /// Feature map for `guidance-mode: gadf` requests.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Concurrent renders; defaults to --threads or the core count.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f32,
    #[arg(long)]
    no_cache: bool,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl fmt::Display) -> Self {
        Self { code: 2, message: message.to_string() }
    }

    fn io(message: impl fmt::Display) -> Self {
        Self { code: 3, message: message.to_string() }
    }

    /// Reading or writing `path` failed.
    fn at(path: &Path) -> impl FnOnce(Error) -> Self + '_ {
        move |e| Self::io(format!("{}: {e}", path.display()))
    }

    /// Error raised while combining images that were read successfully.
    fn compute(e: Error) -> Self {
        let code = match e {
            Error::DimensionMismatch(_) | Error::InvalidArgument(_) => 4,
            Error::Validation { .. } => 2,
            _ => 3,
        };
        Self { code, message: e.to_string() }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("relight: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match &cli.command {
        Command::Relight(a) => relight_cmd(a),
        Command::Synth(a) => synth_cmd(a, cli.seed),
        Command::Bench(a) => bench_cmd(a, cli.seed),
        Command::Serve(a) => serve_cmd(a, cli.threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("relight: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn relight_cmd(a: &RelightArgs) -> CmdResult {
    let schedule = CascadeSchedule::parse(&a.schedule, a.lambda).map_err(|e| Failure::usage(format!("--schedule: {e}")))?;
    let shadow_params = ShadowParams::new(a.shadow_iters, a.lambda).map_err(|e| Failure::usage(format!("--shadow-iters: {e}")))?;
    if let Some(k) = a.kappa {
        if !(k.is_finite() && k > 0.0) {
            return Err(Failure::usage(format!("--kappa must be positive, got {k}")));
        }
    }

    let (camera, depth) = read_png(&a.rgb).map_err(Failure::at(&a.rgb))?;
    let (filter, _) = read_png(&a.filter).map_err(Failure::at(&a.filter))?;
    let shadow = match &a.shadow {
        Some(p) => Some(read_png(p).map_err(Failure::at(p))?.0),
        None => None,
    };
    let guidance = match &a.guidance {
        GuidanceArg::Rgb => None,
        GuidanceArg::Gadf(p) => Some(load_feature_map(p).map_err(Failure::at(p))?),
    };

    let guidance = match guidance {
        None => rgb_guidance(&camera, a.kappa.unwrap_or(DEFAULT_KAPPA)),
        Some(g) => match a.kappa {
            Some(k) => g.with_kappa(k),
            None => Ok(g),
        },
    }
    .map_err(Failure::compute)?;
    let inputs = RelightInputs::new(camera, filter, shadow).map_err(Failure::compute)?;
    let out = relight(&inputs, &guidance, &schedule, Some(&shadow_params)).map_err(Failure::compute)?;
    write_png(&a.out, &out, depth).map_err(Failure::at(&a.out))
}

fn synth_cmd(a: &SynthArgs, seed: u64) -> CmdResult {
    if a.count == 0 {
        return Err(Failure::usage("--count must be at least 1"));
    }
    let base = ErrorModel::default();
    let model = ErrorModel {
        silhouette_shift: a.error_shift.unwrap_or(base.silhouette_shift),
        dilation: a.error_dilate.unwrap_or(base.dilation),
        boundary_noise_amplitude: a.error_noise.unwrap_or(base.boundary_noise_amplitude),
        noise_seed: 0,
    };
    model.validate().map_err(|_| Failure::usage("--error-noise must lie in [0, 1]"))?;
    let suite = benchmark_suite(a.kind, a.count, seed, a.resolution).map_err(Failure::usage)?;

    std::fs::create_dir_all(&a.out_dir).map_err(|e| Failure::io(format!("{}: {e}", a.out_dir.display())))?;
    for inst in &suite {
        let r = render(&inst.scene).map_err(Failure::compute)?;
        let corrupted = corrupt(&r.filter, &r.depth, &model.with_seed(inst.noise_seed)).map_err(Failure::compute)?;
        let name = inst.name();
        let files = [
            ("camera", &r.camera, BitDepth::Eight),
            ("filter", &r.filter, BitDepth::Sixteen),
            ("filter_corrupt", &corrupted, BitDepth::Sixteen),
            ("shadow", &r.shadow, BitDepth::Eight),
        ];
        for (suffix, img, depth) in files {
            let path = a.out_dir.join(format!("{name}_{suffix}.png"));
            write_png(&path, img, depth).map_err(Failure::at(&path))?;
        }
        if a.features {
            let path = a.out_dir.join(format!("{name}_features.gadf"));
            let g = GuidanceField::new(geometry_features(&r), DEFAULT_KAPPA).map_err(Failure::compute)?;
            save_feature_map(&path, &g).map_err(Failure::at(&path))?;
        }
        let path = a.out_dir.join(format!("{name}.json"));
        inst.scene.save(&path).map_err(Failure::at(&path))?;
        println!("{name}");
    }
    Ok(())
}

fn bench_cmd(a: &BenchArgs, seed: u64) -> CmdResult {
    if a.count == 0 {
        return Err(Failure::usage("--count must be at least 1"));
    }
    if a.repetitions == 0 {
        return Err(Failure::usage("--repetitions must be at least 1"));
    }
    if !(a.kappa.is_finite() && a.kappa > 0.0) {
        return Err(Failure::usage(format!("--kappa must be positive, got {}", a.kappa)));
    }
    let schedule = a
        .schedule
        .as_deref()
        .map(|s| CascadeSchedule::parse(s, DEFAULT_LAMBDA))
        .transpose()
        .map_err(|e| Failure::usage(format!("--schedule: {e}")))?;

    match a.benchmark {
        BenchKindArg::Speed => {
            let (filter, camera) = speed_input(seed).map_err(Failure::compute)?;
            let report = run_speed_ablation(&filter, &camera, a.kappa, DEFAULT_LAMBDA, a.repetitions).map_err(Failure::compute)?;
            print!("{report}");
            if let Some(path) = &a.csv {
                let mut csv = String::from("config,schedule,steps,time_ms,coefficients_ms,resampling_ms,diffusion_ms,ssim,ssim_composite\n");
                for r in report.rows() {
                    csv.push_str(&format!(
                        "{},{},{},{:.3},{:.3},{:.3},{:.3},{},{}\n",
                        r.name, r.schedule, r.steps, r.time_ms, r.coefficients_ms, r.resampling_ms, r.diffusion_ms, r.ssim, r.ssim_composite
                    ));
                }
                write_text(path, &csv)?;
            }
        }
        BenchKindArg::Shadow => {
            if a.resolution < 8 {
                return Err(Failure::usage("--resolution must be at least 8"));
            }
            let sweep = shadow_sweep(a.resolution, 10, a.kappa, DEFAULT_LAMBDA).map_err(Failure::compute)?;
            print!("{sweep}");
            if let Some(path) = &a.csv {
                let mut csv = String::from("iterations,iou\n");
                for (n, iou) in &sweep.pass {
                    csv.push_str(&format!("{n},{iou}\n"));
                }
                csv.push_str(&format!("cascade,{}\n", sweep.cascade_iou));
                write_text(path, &csv)?;
            }
        }
        BenchKindArg::Suite(kind) => {
            let mut config = BenchConfig::new(kind, a.count, seed);
            config.resolution = a.resolution;
            config.schedule = schedule;
            config.kappa = a.kappa;
            config.repetitions = a.repetitions;
            config.guidance = match a.guidance {
                GuidanceModeArg::Rgb => BenchGuidance::Rgb,
                GuidanceModeArg::Geometry => BenchGuidance::Geometry,
            };
            if let Some(t) = a.target {
                config.target = match t {
                    TargetArg::Camera => Target::Camera,
                    TargetArg::GroundTruth => Target::GroundTruth,
                };
            }
            config.effective_schedule().map_err(Failure::usage)?;
            let report = run_benchmark(&config).map_err(|e| match e {
                Error::InvalidArgument(_) => Failure::usage(e),
                e => Failure::compute(e),
            })?;
            println!("{report}");
            if let Some(path) = &a.csv {
                write_text(path, &report.to_csv())?;
            }
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    std::fs::write(path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn serve_cmd(a: &ServeArgs, threads: Option<u16>) -> CmdResult {
    if a.workers == Some(0) {
        return Err(Failure::usage("--workers must be at least 1"));
    }
    if !(a.kappa.is_finite() && a.kappa > 0.0) {
        return Err(Failure::usage(format!("--kappa must be positive, got {}", a.kappa)));
    }
    let scene = SceneSpec::load(&a.scene).map_err(Failure::at(&a.scene))?;
    let features: Option<GuidanceField> = match &a.features {
        Some(p) => Some(load_feature_map(p).map_err(Failure::at(p))?),
        None => None,
    };
    let mut config = ServiceConfig {
        cache: !a.no_cache,
        kappa: a.kappa,
        features,
        ..ServiceConfig::default()
    };
    if let Some(w) = a.workers.or(threads.map(usize::from)) {
        config.workers = w;
    }
    let state = AppState::new(scene, config).map_err(Failure::at(&a.scene))?;

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(Failure::io)?;
    runtime.block_on(async {
        let addr = SocketAddr::new(a.host, a.port);
        let listener = relight_service::bind(addr)
            .await
            .map_err(|e| Failure::io(format!("cannot bind {addr}: {e}")))?;
        let local = listener.local_addr().map_err(Failure::io)?;
        eprintln!("relight: listening on http://{local}");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            eprintln!("relight: shutting down");
        };
        relight_service::serve(listener, state, shutdown).await.map_err(Failure::io)
    })
}
