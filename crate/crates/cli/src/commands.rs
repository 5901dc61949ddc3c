//! Command-line surface. Every command returns a JSON report.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mpi_stereo_core::{
    build_mpi_classical, make_plane_spec, render_depth_view, render_view, resample_bilinear,
    CameraRig, ClassicalOptions, RenderOptions,
};
use mpi_stereo_lmpin::{
    init_weights, zero_weights, ForwardOptions, Lmpin, NetworkConfig, NetworkWeights,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::archive::{read_archive, write_archive};
use crate::bench::{run_bench, BenchConfig};
use crate::config::{parse_assign, parse_direction, JobConfig, Layout, Mode};
use crate::error::{CliError, Result};
use crate::eval::eval_dirs;
use crate::io::{read_depth, read_image, write_depth, write_image, BitDepth};
use crate::pipeline::{convert_frame, infer_network_config, side_by_side};

#[derive(Debug, Parser)]
#[command(
    name = "mpi-stereo",
    version,
    about = "Planar-to-stereo conversion with multiplane images"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert frames to stereo pairs or side-by-side images.
    Convert(ConvertArgs),
    /// Render a novel view from an MPI archive.
    Render(RenderArgs),
    /// Build an MPI archive from an image and a depth map or network weights.
    BuildMpi(BuildArgs),
    /// Time full-resolution against low-resolution MPI rendering.
    Bench(BenchArgs),
    /// Compute PSNR, SSIM and L1 between two directories of images.
    Eval(EvalArgs),
    /// Write a seeded (or all-zero) network weight archive.
    InitWeights(InitArgs),
}

#[derive(Debug, Args, Default)]
pub struct ConvertArgs {
    /// Key-value job file; flags override its settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input image or directory of numbered frames (repeatable).
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// Depth map or directory, matched to inputs by order (repeatable).
    #[arg(long)]
    pub depth: Vec<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub n_planes: Option<usize>,
    #[arg(long)]
    pub d_min: Option<f64>,
    #[arg(long)]
    pub d_max: Option<f64>,
    #[arg(long)]
    pub max_disparity_px: Option<f64>,
    #[arg(long)]
    pub factor: Option<usize>,
    /// classical, network or dibr
    #[arg(long)]
    pub mode: Option<String>,
    /// left_right_pair or sbs
    #[arg(long)]
    pub layout: Option<String>,
    /// left_to_right renders the right view; right_to_left renders the left view
    #[arg(long)]
    pub direction: Option<String>,
    /// hard or tent plane assignment
    #[arg(long)]
    pub assign: Option<String>,
    #[arg(long)]
    pub no_inpaint: bool,
    #[arg(long)]
    pub network_h: Option<usize>,
    #[arg(long)]
    pub network_w: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = crate::config::DEFAULT_MAX_DISPARITY_PX)]
    pub max_disparity_px: f64,
    #[arg(long, default_value = "left_to_right")]
    pub direction: String,
    /// Also write the rendered disparity.
    #[arg(long)]
    pub depth_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub depth: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub n_planes: usize,
    #[arg(long, default_value_t = 0.0)]
    pub d_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub d_max: f64,
    #[arg(long, default_value = "hard")]
    pub assign: String,
    #[arg(long)]
    pub no_inpaint: bool,
    #[arg(long, default_value_t = 256)]
    pub network_h: usize,
    #[arg(long, default_value_t = 384)]
    pub network_w: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 1920)]
    pub width: usize,
    #[arg(long, default_value_t = 1080)]
    pub height: usize,
    #[arg(long, default_value_t = 16)]
    pub n_planes: usize,
    /// Comma-separated downsample factors.
    #[arg(long, default_value = "4", value_delimiter = ',')]
    pub factors: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    #[arg(long, default_value_t = 3)]
    pub warmups: usize,
    /// network or classical
    #[arg(long, default_value = "network")]
    pub mode: String,
    #[arg(long, default_value_t = 2)]
    pub base_channels: usize,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 16.0)]
    pub max_disparity_px: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred_depth: Option<PathBuf>,
    #[arg(long)]
    pub ref_depth: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// All-zero weights and biases.
    #[arg(long)]
    pub zero: bool,
    #[arg(long, default_value_t = 32)]
    pub base_channels: usize,
    #[arg(long, default_value_t = 2)]
    pub detail_downsamples: usize,
}

pub fn run(cli: Cli) -> Result<Value> {
    match cli.command {
        Command::Convert(a) => cmd_convert(&job_config(&a)?),
        Command::Render(a) => cmd_render(&a),
        Command::BuildMpi(a) => cmd_build_mpi(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::InitWeights(a) => cmd_init_weights(&a),
    }
}

/// Merges the optional job file with command-line flags.
pub fn job_config(a: &ConvertArgs) -> Result<JobConfig> {
    let mut cfg = match &a.config {
        Some(p) => JobConfig::from_file(p)?,
        None => JobConfig::default(),
    };
    if !a.input.is_empty() {
        cfg.inputs = a.input.clone();
    }
    if !a.depth.is_empty() {
        cfg.depths = a.depth.clone();
    }
    if let Some(w) = &a.weights {
        cfg.weights = Some(w.clone());
    }
    if let Some(o) = &a.output {
        cfg.output_dir = o.clone();
    }
    macro_rules! take {
        ($($field:ident),*) => {$( if let Some(v) = a.$field { cfg.$field = v; } )*};
    }
    take!(
        n_planes,
        d_min,
        d_max,
        max_disparity_px,
        network_h,
        network_w
    );
    if a.factor.is_some() {
        cfg.factor = a.factor;
    }
    if let Some(m) = &a.mode {
        cfg.mode = Mode::parse(m)?;
    }
    if let Some(l) = &a.layout {
        cfg.layout = Layout::parse(l)?;
    }
    if let Some(d) = &a.direction {
        cfg.direction = parse_direction(d)?;
    }
    if let Some(s) = &a.assign {
        cfg.assign = parse_assign(s)?;
    }
    if a.no_inpaint {
        cfg.inpaint = false;
    }
    Ok(cfg)
}

fn read_weights(path: &Path) -> Result<NetworkWeights> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(NetworkWeights::from_bytes(&bytes)?)
}

fn load_network(
    path: &Path,
    n_planes: usize,
    h: usize,
    w: usize,
    d_min: f64,
    d_max: f64,
) -> Result<Lmpin> {
    let weights = read_weights(path)?;
    let cfg = infer_network_config(&weights, n_planes, h, w, d_min, d_max)?;
    Ok(Lmpin::new(cfg, weights)?)
}

fn output_name(input: &Path, suffix: &str) -> String {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "frame".into());
    let ext = match input
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
    {
        Some(e) if e == "ppm" => "ppm",
        _ => "png",
    };
    format!("{stem}_{suffix}.{ext}")
}

pub fn cmd_convert(cfg: &JobConfig) -> Result<Value> {
    let mut cfg = cfg.clone();
    cfg.expand_directories()?;
    cfg.validate()?;
    let net = match (cfg.mode, &cfg.weights) {
        (Mode::Network, Some(w)) => Some(load_network(
            w,
            cfg.n_planes,
            cfg.network_h,
            cfg.network_w,
            cfg.d_min,
            cfg.d_max,
        )?),
        _ => None,
    };
    fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;
    let frames = cfg
        .inputs
        .par_iter()
        .enumerate()
        .map(|(i, input)| {
            let (image, bits) = read_image(input)?;
            let depth = match cfg.depths.get(i) {
                Some(p) => Some(read_depth(p)?.0),
                None => None,
            };
            let out = convert_frame(&image, depth.as_ref(), net.as_ref(), &cfg)?;
            let mut written = Vec::new();
            match cfg.layout {
                Layout::LeftRightPair => {
                    for (suffix, view) in [("left", &out.left), ("right", &out.right)] {
                        let path = cfg.output_dir.join(output_name(input, suffix));
                        write_image(&path, view, bits)?;
                        written.push(path.display().to_string());
                    }
                }
                Layout::Sbs => {
                    let path = cfg.output_dir.join(output_name(input, "sbs"));
                    write_image(&path, &side_by_side(&out.left, &out.right)?, bits)?;
                    written.push(path.display().to_string());
                }
            }
            Ok(json!({
                "input": input.display().to_string(),
                "outputs": written,
                "mask_sum_error": out.mask_sum_error,
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(json!({
        "command": "convert",
        "mode": cfg.mode.as_str(),
        "layout": cfg.layout.as_str(),
        "factor": cfg.factor(),
        "max_disparity_px": cfg.max_disparity_px,
        "frames": frames,
    }))
}

pub fn cmd_render(a: &RenderArgs) -> Result<Value> {
    let (stack, manifest) = read_archive(&a.archive)?;
    let rig = CameraRig::from_max_disparity(
        a.max_disparity_px,
        stack.spec().d_max(),
        parse_direction(&a.direction)?,
    )?;
    let view = render_view(&stack, &rig);
    write_image(&a.out, &view, BitDepth::Sixteen)?;
    if let Some(p) = &a.depth_out {
        write_depth(
            p,
            &render_depth_view(&stack, &rig, RenderOptions::default()),
        )?;
    }
    Ok(json!({
        "command": "render",
        "archive": a.archive.display().to_string(),
        "output": a.out.display().to_string(),
        "height": manifest.height,
        "width": manifest.width,
        "n_planes": manifest.n_planes,
        "shift_scale": rig.shift_scale,
    }))
}

pub fn cmd_build_mpi(a: &BuildArgs) -> Result<Value> {
    let (image, _) = read_image(&a.image)?;
    let (stack, normalization) = match (&a.depth, &a.weights) {
        (Some(d), None) => {
            let (depth, norm) = read_depth(d)?;
            let spec = make_plane_spec(a.n_planes, a.d_min, a.d_max)?;
            let opts = ClassicalOptions {
                mode: parse_assign(&a.assign)?,
                inpaint: !a.no_inpaint,
            };
            (
                build_mpi_classical(&image, &depth, &spec, opts)?,
                norm.as_str(),
            )
        }
        (None, Some(w)) => {
            let net = load_network(w, a.n_planes, a.network_h, a.network_w, a.d_min, a.d_max)?;
            let input = resample_bilinear(&image, a.network_h, a.network_w)?;
            (
                net.forward(&input, ForwardOptions::default())?.stack,
                "network",
            )
        }
        _ => {
            return Err(CliError::Config(
                "give exactly one of --depth or --weights".into(),
            ))
        }
    };
    let manifest = write_archive(&a.out, &stack, normalization)?;
    Ok(json!({
        "command": "build-mpi",
        "archive": a.out.display().to_string(),
        "height": manifest.height,
        "width": manifest.width,
        "n_planes": manifest.n_planes,
        "density_mode": manifest.density_mode,
    }))
}

fn write_report(path: Option<&Path>, value: &Value) -> Result<()> {
    if let Some(p) = path {
        let text = serde_json::to_string_pretty(value).expect("report serializes");
        fs::write(p, text).map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs) -> Result<Value> {
    let mode = Mode::parse(&a.mode)?;
    let weights = match &a.weights {
        Some(p) => Some(read_weights(p)?),
        None => None,
    };
    let cfg = BenchConfig {
        width: a.width,
        height: a.height,
        n_planes: a.n_planes,
        factors: a.factors.clone(),
        runs: a.runs,
        warmups: a.warmups,
        mode,
        base_channels: a.base_channels,
        weights,
        max_disparity_px: a.max_disparity_px,
        seed: a.seed,
    };
    let report = serde_json::to_value(run_bench(&cfg)?).expect("report serializes");
    write_report(a.out.as_deref(), &report)?;
    Ok(report)
}

pub fn cmd_eval(a: &EvalArgs) -> Result<Value> {
    let report = eval_dirs(
        &a.pred,
        &a.gt,
        a.pred_depth.as_deref(),
        a.ref_depth.as_deref(),
    )?;
    let report = serde_json::to_value(report).expect("report serializes");
    write_report(a.out.as_deref(), &report)?;
    Ok(report)
}

pub fn cmd_init_weights(a: &InitArgs) -> Result<Value> {
    let cfg = NetworkConfig {
        base_channels: a.base_channels,
        detail_downsamples: a.detail_downsamples,
        ..Default::default()
    };
    let weights = if a.zero {
        zero_weights(&cfg)?
    } else {
        init_weights(&cfg, a.seed)?
    };
    let bytes = weights.to_bytes();
    fs::write(&a.out, &bytes).map_err(|e| CliError::io(&a.out, e))?;
    Ok(json!({
        "command": "init-weights",
        "path": a.out.display().to_string(),
        "seed": a.seed,
        "zero": a.zero,
        "base_channels": a.base_channels,
        "detail_downsamples": a.detail_downsamples,
        "tensors": weights.tensors().len(),
        "bytes": bytes.len(),
        "manifest_hash": weights.manifest_hash(),
    }))
}
