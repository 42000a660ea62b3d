//! Command line front end for the motion-gated flow pipeline: synthetic
//! scene generation, end-to-end runs, gated-vs-dense benchmarking,
//! single-pair flow, and flow field rendering.
//!
//! Exit codes: 0 success, 1 usage, 2 unreadable or inconsistent data,
//! 3 flow backend failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use neuroflow_core::config::{FlowBackendKind, FlowConfig, Mode};
use neuroflow_core::io;
use neuroflow_core::pipeline::PipelineError;
use neuroflow_core::synth::{gen_scene, write_scene, SceneSpec};
use neuroflow_core::{bench_compare, load_config, run_pipeline, FlowField, MetricsReport};

#[derive(Parser)]
#[command(name = "neuroflow", version, about = "Motion-pattern-gated optical flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene description into frames with ground truth
    Synth(SynthArgs),
    /// Run the pipeline over a frame sequence
    Run(RunArgs),
    /// Time gated against dense flow on the same sequence
    Bench(BenchArgs),
    /// Compute flow for one frame pair and write a .flo file
    Flow(FlowArgs),
    /// Render a .flo field as a color PPM image
    Viz(VizArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description file (TOML)
    #[arg(long, value_name = "PATH")]
    spec: PathBuf,
    /// Directory to write frames and ground truth into
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Replaces the scene seed from the description
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline configuration file (TOML)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the configured mode
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Overrides the configured flow backend
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Overrides the configured output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Pipeline configuration file (TOML)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Repetitions per mode; timings report the median
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(3..))]
    reps: u64,
    /// Overrides the configured flow backend
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
}

#[derive(Args)]
struct FlowArgs {
    /// First frame (PGM)
    prev: PathBuf,
    /// Second frame (PGM)
    curr: PathBuf,
    /// Output .flo path
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Flow backend; parameters come from --config when given
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Pipeline configuration supplying backend parameters
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct VizArgs {
    /// Input .flo field
    flo: PathBuf,
    /// Output PPM path
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Magnitude drawn at full brightness; the field maximum when omitted
    #[arg(long, value_name = "PX")]
    mag_ref: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Neuromorphic,
    Conventional,
}

impl From<ModeArg> for Mode {
    fn from(arg: ModeArg) -> Mode {
        match arg {
            ModeArg::Neuromorphic => Mode::Neuromorphic,
            ModeArg::Conventional => Mode::Conventional,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Farneback,
    Blockmatch,
    External,
}

impl From<BackendArg> for FlowBackendKind {
    fn from(arg: BackendArg) -> FlowBackendKind {
        match arg {
            BackendArg::Farneback => FlowBackendKind::Farneback,
            BackendArg::Blockmatch => FlowBackendKind::Blockmatch,
            BackendArg::External => FlowBackendKind::External,
        }
    }
}

/// Failure after argument parsing, split by exit code: data errors cover
/// unreadable or inconsistent inputs and configs, backend errors cover the
/// flow computation itself.
enum CliError {
    Data(String),
    Backend(String),
}

fn data(err: impl std::fmt::Display) -> CliError {
    CliError::Data(err.to_string())
}

fn pipeline_error(err: PipelineError) -> CliError {
    if matches!(err, PipelineError::Flow { .. }) {
        CliError::Backend(err.to_string())
    } else {
        CliError::Data(err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Synth(args) => synth(args),
        Command::Run(args) => run(args),
        Command::Bench(args) => bench(args),
        Command::Flow(args) => flow(args),
        Command::Viz(args) => viz(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Backend(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn synth(args: SynthArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.spec)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.spec.display())))?;
    let mut spec: SceneSpec = toml::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.spec.display())))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let scene = gen_scene(&spec).map_err(data)?;
    write_scene(&scene, &args.out).map_err(data)?;
    println!(
        "wrote {} frames of {}x{} to {}",
        scene.frames.len(),
        spec.width,
        spec.height,
        args.out.display()
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let mut config = load_config(&args.config).map_err(data)?;
    if let Some(mode) = args.mode {
        config.mode = mode.into();
    }
    if let Some(backend) = args.backend {
        config.flow.backend = backend.into();
    }
    if let Some(out) = args.out {
        config.output_dir = Some(out);
    }
    let result = run_pipeline(&config).map_err(pipeline_error)?;
    println!("processed {} frame pairs in {} mode", result.outputs.len(), config.mode.as_str());
    for (stage, seconds) in &result.report.stage_seconds {
        println!("  {stage}: {seconds:.4} s");
    }
    print_means(&result.report);
    if let Some(out) = &config.output_dir {
        println!("artifacts under {}", out.display());
    }
    Ok(())
}

fn print_means(report: &MetricsReport) {
    let summaries = [
        ("ssim", &report.ssim),
        ("pixel accuracy", &report.pa),
        ("box iou", &report.mean_iou),
    ];
    for (name, values) in summaries {
        if !values.is_empty() {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            println!("  mean {name}: {mean:.4}");
        }
    }
}

fn bench(args: BenchArgs) -> Result<(), CliError> {
    let mut config = load_config(&args.config).map_err(data)?;
    if let Some(backend) = args.backend {
        config.flow.backend = backend.into();
    }
    let report = bench_compare(&config, args.reps as usize).map_err(pipeline_error)?;
    println!("{:<9} {:<13} {:>8} {:>10}", "task", "mode", "score", "stage s");
    for row in &report.rows {
        let score = match row.score {
            Some(s) => format!("{s:.4}"),
            None => "-".into(),
        };
        println!(
            "{:<9} {:<13} {:>8} {:>10.4}",
            row.task,
            row.mode.as_str(),
            score,
            row.stage_seconds
        );
    }
    for (mode, seconds) in &report.flow_seconds {
        println!("flow {mode}: {seconds:.4} s");
    }
    println!("speedup {:.2}x", report.speedup);
    Ok(())
}

fn flow(args: FlowArgs) -> Result<(), CliError> {
    let mut flow_config = match &args.config {
        Some(path) => load_config(path).map_err(data)?.flow,
        None => FlowConfig::default(),
    };
    if let Some(backend) = args.backend {
        flow_config.backend = backend.into();
    }
    let backend = flow_config.build().map_err(data)?;
    let prev = io::read_pgm(&args.prev).map_err(data)?;
    let curr = io::read_pgm(&args.curr).map_err(data)?;
    let field = backend.compute(&prev, &curr).map_err(|e| CliError::Backend(e.to_string()))?;
    io::write_flo(&field, &args.out).map_err(data)?;
    println!("wrote {}x{} flow to {}", field.width(), field.height(), args.out.display());
    Ok(())
}

fn viz(args: VizArgs) -> Result<(), CliError> {
    let field = io::read_flo(&args.flo).map_err(data)?;
    let pixels = render_flow(&field, args.mag_ref);
    write_ppm(&pixels, field.width(), field.height(), &args.out)?;
    println!("wrote {}x{} image to {}", field.width(), field.height(), args.out.display());
    Ok(())
}

/// Renders a flow field with the usual direction-to-hue map: hue from the
/// displacement angle, full saturation, brightness from magnitude scaled so
/// `mag_ref` (or the field maximum) is white-hot and zero flow is black.
fn render_flow(field: &FlowField, mag_ref: Option<f64>) -> Vec<u8> {
    let (w, h) = (field.width(), field.height());
    let mut magnitudes = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let (u, v) = field.get(x, y);
            magnitudes[y * w + x] = f64::hypot(u as f64, v as f64);
        }
    }
    let top = mag_ref.unwrap_or_else(|| magnitudes.iter().cloned().fold(0.0, f64::max));
    let scale = if top > 0.0 { 1.0 / top } else { 0.0 };
    let mut pixels = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = field.get(x, y);
            let hue = (v as f64).atan2(u as f64).to_degrees().rem_euclid(360.0);
            let value = (magnitudes[y * w + x] * scale).clamp(0.0, 1.0);
            pixels.extend(hsv_to_rgb(hue, 1.0, value));
        }
    }
    pixels
}

/// Hue in degrees, saturation and value in [0, 1], to RGB bytes.
fn hsv_to_rgb(hue: f64, saturation: f64, value: f64) -> [u8; 3] {
    let sector = hue.rem_euclid(360.0) / 60.0;
    let chroma = value * saturation;
    let x = chroma * (1.0 - (sector % 2.0 - 1.0).abs());
    let (r, g, b) = match sector as usize {
        0 => (chroma, x, 0.0),
        1 => (x, chroma, 0.0),
        2 => (0.0, chroma, x),
        3 => (0.0, x, chroma),
        4 => (x, 0.0, chroma),
        _ => (chroma, 0.0, x),
    };
    let floor = value - chroma;
    [
        ((r + floor) * 255.0).round() as u8,
        ((g + floor) * 255.0).round() as u8,
        ((b + floor) * 255.0).round() as u8,
    ]
}

/// Binary PPM (P6), 8 bits per channel, row-major RGB.
fn write_ppm(pixels: &[u8], width: usize, height: usize, path: &Path) -> Result<(), CliError> {
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(pixels);
    fs::write(path, bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primary_hues_hit_the_pure_channels() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), [0, 255, 0]);
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), [0, 0, 255]);
        assert_eq!(hsv_to_rgb(60.0, 1.0, 1.0), [255, 255, 0]);
        assert_eq!(hsv_to_rgb(180.0, 1.0, 1.0), [0, 255, 255]);
        assert_eq!(hsv_to_rgb(300.0, 1.0, 1.0), [255, 0, 255]);
    }

    #[test]
    fn zero_saturation_is_gray_and_zero_value_is_black() {
        assert_eq!(hsv_to_rgb(123.0, 0.0, 0.5), [128, 128, 128]);
        assert_eq!(hsv_to_rgb(321.0, 1.0, 0.0), [0, 0, 0]);
    }

    #[test]
    fn hue_wraps_at_the_circle_boundary() {
        assert_eq!(hsv_to_rgb(360.0, 1.0, 1.0), hsv_to_rgb(0.0, 1.0, 1.0));
        assert_eq!(hsv_to_rgb(-60.0, 1.0, 1.0), hsv_to_rgb(300.0, 1.0, 1.0));
    }

    #[test]
    fn rightward_flow_renders_red_and_still_pixels_black() {
        let mut field = FlowField::new(2, 1);
        field.set(0, 0, 2.0, 0.0);
        let pixels = render_flow(&field, None);
        assert_eq!(pixels, vec![255, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn magnitude_reference_caps_brightness() {
        let mut field = FlowField::new(1, 1);
        field.set(0, 0, 1.0, 0.0);
        assert_eq!(render_flow(&field, Some(2.0)), vec![128, 0, 0]);
        assert_eq!(render_flow(&field, Some(0.5)), vec![255, 0, 0]);
    }

    #[test]
    fn all_zero_field_renders_black_without_dividing_by_zero() {
        let field = FlowField::new(3, 2);
        assert!(render_flow(&field, None).iter().all(|&b| b == 0));
    }
}
