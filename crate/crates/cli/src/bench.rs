//! Timing harness comparing the full-resolution path with low-resolution
//! MPI construction at several downsample factors.

use std::time::{Duration, Instant};

use mpi_stereo_core::{
    build_mpi_classical, make_plane_spec, render_lowres_pipeline_timed, resample_bilinear,
    resample_depth, CameraRig, ClassicalOptions, DepthMap, Direction, ImageBuffer, PlaneStack,
    RenderOptions, StageTimes,
};
use mpi_stereo_lmpin::{init_weights, ForwardOptions, Lmpin, NetworkConfig, NetworkWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Mode;
use crate::error::{CliError, Result};
use crate::pipeline::infer_network_config;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub width: usize,
    pub height: usize,
    pub n_planes: usize,
    pub factors: Vec<usize>,
    pub runs: usize,
    pub warmups: usize,
    pub mode: Mode,
    /// Width of the randomly initialized network when no weights are given.
    pub base_channels: usize,
    pub weights: Option<NetworkWeights>,
    pub max_disparity_px: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            width: 1920,
            height: 1080,
            n_planes: 16,
            factors: vec![4],
            runs: 20,
            warmups: 3,
            mode: Mode::Network,
            base_channels: 2,
            weights: None,
            max_disparity_px: 16.0,
            seed: 0,
        }
    }
}

/// Median wall time per stage, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageReport {
    pub build_ms: f64,
    pub blend_ms: f64,
    pub warp_ms: f64,
    pub composite_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorReport {
    pub factor: usize,
    /// Resolution the MPI is rendered from.
    pub mpi_height: usize,
    pub mpi_width: usize,
    /// Padded network input size, network mode only.
    pub network_height: Option<usize>,
    pub network_width: Option<usize>,
    pub stages: StageReport,
    /// Full-resolution median total over this factor's median total.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub mode: String,
    pub width: usize,
    pub height: usize,
    pub n_planes: usize,
    pub runs: usize,
    pub warmups: usize,
    pub threads: usize,
    pub base_channels: Option<usize>,
    pub full: FactorReport,
    pub factors: Vec<FactorReport>,
    pub wall_seconds: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Smallest positive multiple of 32 that holds `n`.
pub fn network_size(n: usize) -> usize {
    n.div_ceil(32).max(1) * 32
}

/// Extends `image` to `h×w` by repeating its last row and column.
pub fn pad_edge(image: &ImageBuffer, h: usize, w: usize) -> Result<ImageBuffer> {
    let (ih, iw, c) = image.dims();
    let mut data = Vec::with_capacity(h * w * c);
    for y in 0..h {
        let row = image.row(y.min(ih - 1));
        data.extend_from_slice(row);
        let last = &row[(iw - 1) * c..];
        for _ in iw..w {
            data.extend_from_slice(last);
        }
    }
    Ok(ImageBuffer::new(h, w, c, data)?)
}

fn synthetic_frame(h: usize, w: usize, seed: u64) -> (ImageBuffer, DepthMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: [f32; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let image = ImageBuffer::from_fn(h, w, 3, |y, x, c| {
        let (fx, fy) = (x as f32 / w as f32, y as f32 / h as f32);
        0.5 + 0.4 * ((fx * 23.0 + phase[c] * 6.0).sin() * (fy * 17.0 + phase[c]).cos())
    })
    .expect("finite pattern");
    let depth = DepthMap::from_fn(h, w, |y, x| {
        let (fx, fy) = (x as f32 / w as f32 - 0.5, y as f32 / h as f32 - 0.5);
        (1.0 - 2.0 * (fx * fx + fy * fy).sqrt()).clamp(0.0, 1.0)
    })
    .expect("depth in range");
    (image, depth)
}

enum Builder {
    Network(Vec<(usize, Lmpin)>),
    Classical(DepthMap),
}

struct Timed {
    build: Duration,
    stages: StageTimes,
    total: Duration,
}

fn network_for(cfg: &BenchConfig, h: usize, w: usize) -> Result<Lmpin> {
    let (nh, nw) = (network_size(h), network_size(w));
    let weights = match &cfg.weights {
        Some(weights) => weights.clone(),
        None => init_weights(
            &NetworkConfig {
                base_channels: cfg.base_channels,
                n_planes: cfg.n_planes,
                input_h: nh,
                input_w: nw,
                ..Default::default()
            },
            cfg.seed,
        )?,
    };
    let ncfg = infer_network_config(&weights, cfg.n_planes, nh, nw, 0.0, 1.0)?;
    Ok(Lmpin::new(ncfg, weights)?)
}

fn build_low_stack(
    builder: &Builder,
    factor: usize,
    image: &ImageBuffer,
    n_planes: usize,
) -> Result<PlaneStack> {
    let (lh, lw) = (image.height() / factor, image.width() / factor);
    match builder {
        Builder::Network(nets) => {
            let net = &nets
                .iter()
                .find(|(f, _)| *f == factor)
                .expect("network per factor")
                .1;
            let c = net.config();
            let low = if factor == 1 {
                image.clone()
            } else {
                resample_bilinear(image, lh, lw)?
            };
            let input = pad_edge(&low, c.input_h, c.input_w)?;
            let out = net.forward(&input, ForwardOptions::default())?;
            Ok(out.stack.crop(lh, lw)?)
        }
        Builder::Classical(depth) => {
            let spec = make_plane_spec(n_planes, 0.0, 1.0)?;
            let opts = ClassicalOptions::default();
            if factor == 1 {
                return Ok(build_mpi_classical(image, depth, &spec, opts)?);
            }
            let low_image = resample_bilinear(image, lh, lw)?;
            let low_depth = resample_depth(depth, lh, lw)?;
            Ok(build_mpi_classical(&low_image, &low_depth, &spec, opts)?)
        }
    }
}

fn run_once(
    builder: &Builder,
    factor: usize,
    image: &ImageBuffer,
    rig: &CameraRig,
    n_planes: usize,
) -> Result<Timed> {
    let start = Instant::now();
    let stack = build_low_stack(builder, factor, image, n_planes)?;
    let build = start.elapsed();
    let mut stages = StageTimes::default();
    let view = render_lowres_pipeline_timed(
        image,
        &stack,
        rig,
        factor,
        RenderOptions::default(),
        &mut stages,
    )?;
    drop(stack);
    std::hint::black_box(view);
    Ok(Timed {
        build,
        stages,
        total: start.elapsed(),
    })
}

fn measure(
    cfg: &BenchConfig,
    builder: &Builder,
    factor: usize,
    image: &ImageBuffer,
    rig: &CameraRig,
) -> Result<StageReport> {
    for _ in 0..cfg.warmups {
        run_once(builder, factor, image, rig, cfg.n_planes)?;
    }
    let runs = (0..cfg.runs)
        .map(|_| run_once(builder, factor, image, rig, cfg.n_planes))
        .collect::<Result<Vec<_>>>()?;
    let pick = |f: &dyn Fn(&Timed) -> Duration| median(runs.iter().map(|t| ms(f(t))).collect());
    Ok(StageReport {
        build_ms: pick(&|t| t.build),
        blend_ms: pick(&|t| t.stages.blend),
        warp_ms: pick(&|t| t.stages.warp),
        composite_ms: pick(&|t| t.stages.composite),
        total_ms: pick(&|t| t.total),
    })
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let started = Instant::now();
    if cfg.runs == 0 || cfg.factors.is_empty() {
        return Err(CliError::Config(
            "bench needs at least one run and one factor".into(),
        ));
    }
    for &f in &cfg.factors {
        if f < 2 || cfg.height % f != 0 || cfg.width % f != 0 {
            return Err(CliError::Config(format!(
                "factor {f} must be at least 2 and divide {}x{}",
                cfg.height, cfg.width
            )));
        }
    }
    let (image, depth) = synthetic_frame(cfg.height, cfg.width, cfg.seed);
    let rig = CameraRig::from_max_disparity(cfg.max_disparity_px, 1.0, Direction::LeftToRight)?;
    let all: Vec<usize> = std::iter::once(1)
        .chain(cfg.factors.iter().copied())
        .collect();
    let builder = match cfg.mode {
        Mode::Network => Builder::Network(
            all.iter()
                .map(|&f| Ok((f, network_for(cfg, cfg.height / f, cfg.width / f)?)))
                .collect::<Result<Vec<_>>>()?,
        ),
        Mode::Classical => Builder::Classical(depth),
        Mode::Dibr => {
            return Err(CliError::Config(
                "bench supports network and classical modes".into(),
            ))
        }
    };
    let report = |f: usize, stages: StageReport, speedup: f64| {
        let net = match &builder {
            Builder::Network(nets) => nets.iter().find(|(g, _)| *g == f).map(|(_, n)| n.config()),
            Builder::Classical(_) => None,
        };
        FactorReport {
            factor: f,
            mpi_height: cfg.height / f,
            mpi_width: cfg.width / f,
            network_height: net.map(|c| c.input_h),
            network_width: net.map(|c| c.input_w),
            stages,
            speedup,
        }
    };

    let full = report(1, measure(cfg, &builder, 1, &image, &rig)?, 1.0);
    let mut factors = Vec::new();
    for &f in &cfg.factors {
        let stages = measure(cfg, &builder, f, &image, &rig)?;
        factors.push(report(f, stages, full.stages.total_ms / stages.total_ms));
    }
    Ok(BenchReport {
        mode: cfg.mode.as_str().to_string(),
        width: cfg.width,
        height: cfg.height,
        n_planes: cfg.n_planes,
        runs: cfg.runs,
        warmups: cfg.warmups,
        threads: rayon::current_num_threads(),
        base_channels: match &builder {
            Builder::Network(nets) => Some(nets[0].1.config().base_channels),
            Builder::Classical(_) => None,
        },
        full,
        factors,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn network_sizes_round_to_32() {
        assert_eq!(network_size(1080), 1088);
        assert_eq!(network_size(1920), 1920);
        assert_eq!(network_size(270), 288);
        assert_eq!(network_size(480), 480);
        assert_eq!(network_size(5), 32);
    }

    #[test]
    fn edge_padding_repeats_border() {
        let img = ImageBuffer::from_fn(2, 3, 3, |y, x, c| (y * 3 + x + c) as f32 / 10.0).unwrap();
        let p = pad_edge(&img, 4, 5).unwrap();
        assert_eq!(p.dims(), (4, 5, 3));
        assert_eq!(p.pixel(0, 4), img.pixel(0, 2));
        assert_eq!(p.pixel(3, 1), img.pixel(1, 1));
        assert_eq!(p.pixel(3, 4), img.pixel(1, 2));
        assert_eq!(p.clone().crop(2, 3).unwrap(), img);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn small_bench_reports_all_fields() {
        for mode in [Mode::Network, Mode::Classical] {
            let cfg = BenchConfig {
                width: 128,
                height: 64,
                n_planes: 4,
                factors: vec![2, 4],
                runs: 3,
                warmups: 1,
                mode,
                ..Default::default()
            };
            let r = run_bench(&cfg).unwrap();
            assert_eq!(r.factors.len(), 2);
            assert!(r.full.stages.total_ms > 0.0);
            assert!(r.factors.iter().all(|f| f.speedup > 0.0));
            let json = serde_json::to_value(&r).unwrap();
            assert!(json["factors"][1]["stages"]["composite_ms"].is_number());
        }
    }

    #[test]
    fn rejects_bad_factor() {
        let cfg = BenchConfig {
            width: 100,
            height: 64,
            factors: vec![3],
            ..Default::default()
        };
        assert!(run_bench(&cfg).is_err());
    }
}
