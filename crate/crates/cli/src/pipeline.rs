//! Per-frame conversion: build an MPI (or forward-warp), render the second view.

use mpi_stereo_core::{
    build_mpi_classical, dibr_render, make_plane_spec, render_lowres_pipeline_timed, render_view,
    resample_bilinear, resample_depth, resample_map, CameraRig, ClassicalOptions, DepthMap,
    Direction, ImageBuffer, MpiError, Plane, PlaneStack, RenderOptions, StageTimes,
};
use mpi_stereo_lmpin::{ForwardOptions, Lmpin, NetworkConfig, NetworkWeights};

use crate::config::{JobConfig, Mode};
use crate::error::{CliError, Result};

/// Network settings recovered from a weight archive's tensor shapes.
pub fn infer_network_config(
    weights: &NetworkWeights,
    n_planes: usize,
    input_h: usize,
    input_w: usize,
    d_min: f64,
    d_max: f64,
) -> Result<NetworkConfig> {
    let stem = weights.get("semantic.stem.weight")?;
    let base_channels = *stem.shape.last().unwrap_or(&0);
    let detail_downsamples = (0..)
        .take_while(|i| {
            weights
                .tensors()
                .contains_key(&format!("detail.enc{i}.down.weight"))
        })
        .count();
    let cfg = NetworkConfig {
        base_channels,
        detail_downsamples,
        n_planes,
        input_h,
        input_w,
        d_min,
        d_max,
        ..Default::default()
    };
    weights.validate(&cfg)?;
    Ok(cfg)
}

/// Resamples every plane of a stack to `h×w`.
pub fn resample_stack(stack: &PlaneStack, h: usize, w: usize) -> Result<PlaneStack> {
    let planes = stack
        .planes()
        .iter()
        .map(|p| {
            Ok(Plane {
                color: resample_bilinear(&p.color, h, w)?,
                density: resample_map(&p.density, h, w)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlaneStack::new(
        stack.spec().clone(),
        planes,
        stack.density_mode(),
    )?)
}

fn check_factor(image: &ImageBuffer, factor: usize) -> Result<(usize, usize)> {
    let (h, w) = (image.height(), image.width());
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(MpiError::BadFactor {
            factor,
            height: h,
            width: w,
        }
        .into());
    }
    Ok((h / factor, w / factor))
}

pub fn rig_for(cfg: &JobConfig) -> Result<CameraRig> {
    Ok(CameraRig::from_max_disparity(
        cfg.max_disparity_px,
        cfg.d_max,
        cfg.direction,
    )?)
}

/// Classical build. At `factor > 1` the MPI is built from downsampled
/// image and depth and rendered with the low-resolution pipeline.
pub fn convert_classical(
    image: &ImageBuffer,
    depth: &DepthMap,
    cfg: &JobConfig,
    times: &mut StageTimes,
) -> Result<ImageBuffer> {
    let spec = make_plane_spec(cfg.n_planes, cfg.d_min, cfg.d_max)?;
    let rig = rig_for(cfg)?;
    let opts = ClassicalOptions {
        mode: cfg.assign,
        inpaint: cfg.inpaint,
    };
    let factor = cfg.factor();
    if factor == 1 {
        let stack = build_mpi_classical(image, depth, &spec, opts)?;
        return Ok(render_view(&stack, &rig));
    }
    let (lh, lw) = check_factor(image, factor)?;
    let low_image = resample_bilinear(image, lh, lw)?;
    let low_depth = resample_depth(depth, lh, lw)?;
    let stack = build_mpi_classical(&low_image, &low_depth, &spec, opts)?;
    Ok(render_lowres_pipeline_timed(
        image,
        &stack,
        &rig,
        factor,
        RenderOptions::default(),
        times,
    )?)
}

/// Largest deviation of the per-pixel mask sum from one.
pub fn mask_sum_error(masks: &mpi_stereo_core::AssignMasks) -> f64 {
    masks
        .weights()
        .chunks_exact(masks.n_planes())
        .map(|px| (px.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Network build at network resolution, then the low-resolution pipeline
/// against the full-resolution source.
pub fn convert_network(
    image: &ImageBuffer,
    net: &Lmpin,
    cfg: &JobConfig,
    times: &mut StageTimes,
) -> Result<(ImageBuffer, f64)> {
    let factor = cfg.factor();
    let (lh, lw) = check_factor(image, factor)?;
    let nc = net.config();
    let input = resample_bilinear(&image.to_rgb(), nc.input_h, nc.input_w)?;
    let out = net.forward(&input, ForwardOptions::default())?;
    let low = resample_stack(&out.stack, lh, lw)?;
    let rig = rig_for(cfg)?;
    let view =
        render_lowres_pipeline_timed(image, &low, &rig, factor, RenderOptions::default(), times)?;
    Ok((view, mask_sum_error(&out.masks)))
}

pub fn convert_dibr(image: &ImageBuffer, depth: &DepthMap, cfg: &JobConfig) -> Result<ImageBuffer> {
    Ok(dibr_render(image, depth, &rig_for(cfg)?)?)
}

/// Rendered frame plus the diagnostics reported for it.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub left: ImageBuffer,
    pub right: ImageBuffer,
    pub mask_sum_error: Option<f64>,
}

/// Converts one frame. A zero baseline returns the source for both views.
pub fn convert_frame(
    image: &ImageBuffer,
    depth: Option<&DepthMap>,
    net: Option<&Lmpin>,
    cfg: &JobConfig,
) -> Result<FrameOutput> {
    let image = image.to_rgb();
    let mut times = StageTimes::default();
    let need_depth = || depth.ok_or_else(|| CliError::Config("depth map required".into()));
    let (novel, mask_sum_error) = if cfg.max_disparity_px == 0.0 {
        (image.clone(), None)
    } else {
        match cfg.mode {
            Mode::Classical => (
                convert_classical(&image, need_depth()?, cfg, &mut times)?,
                None,
            ),
            Mode::Dibr => (convert_dibr(&image, need_depth()?, cfg)?, None),
            Mode::Network => {
                let net = net.ok_or_else(|| CliError::Config("network weights required".into()))?;
                let (v, e) = convert_network(&image, net, cfg, &mut times)?;
                (v, Some(e))
            }
        }
    };
    let (left, right) = match cfg.direction {
        Direction::LeftToRight => (image, novel),
        Direction::RightToLeft => (novel, image),
    };
    Ok(FrameOutput {
        left,
        right,
        mask_sum_error,
    })
}

/// Places two equally sized views next to each other, left view on the left.
pub fn side_by_side(left: &ImageBuffer, right: &ImageBuffer) -> Result<ImageBuffer> {
    if left.dims() != right.dims() {
        return Err(MpiError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            left.dims(),
            right.dims()
        ))
        .into());
    }
    let (h, w, c) = left.dims();
    let mut data = Vec::with_capacity(h * w * c * 2);
    for y in 0..h {
        data.extend_from_slice(left.row(y));
        data.extend_from_slice(right.row(y));
    }
    Ok(ImageBuffer::new(h, 2 * w, c, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mpi_stereo_lmpin::{init_weights, zero_weights};

    fn frame(h: usize, w: usize) -> ImageBuffer {
        ImageBuffer::from_fn(h, w, 3, |y, x, c| {
            ((x * 11 + y * 7 + c * 3) % 29) as f32 / 28.0
        })
        .unwrap()
    }

    #[test]
    fn infers_config_from_archive() {
        let cfg = NetworkConfig {
            base_channels: 3,
            detail_downsamples: 3,
            n_planes: 5,
            input_h: 64,
            input_w: 64,
            ..Default::default()
        };
        let w = init_weights(&cfg, 0).unwrap();
        let back = infer_network_config(&w, 5, 64, 64, 0.0, 1.0).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn constant_depth_shifts_the_whole_frame() {
        let img = frame(8, 24);
        let depth = DepthMap::filled(8, 24, 0.5).unwrap();
        let cfg = JobConfig {
            max_disparity_px: 8.0,
            n_planes: 3,
            ..Default::default()
        };
        let out = convert_frame(&img, Some(&depth), None, &cfg).unwrap();
        assert_eq!(out.left, img);
        for y in 0..8 {
            for x in 0..20 {
                for c in 0..3 {
                    assert!((out.right.get(y, x, c) - img.get(y, x + 4, c)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn zero_baseline_returns_source() {
        let img = frame(8, 8);
        let cfg = JobConfig {
            max_disparity_px: 0.0,
            mode: Mode::Network,
            ..Default::default()
        };
        let out = convert_frame(&img, None, None, &cfg).unwrap();
        assert_eq!(out.right, img);
    }

    #[test]
    fn network_frame_runs() {
        let ncfg = NetworkConfig {
            base_channels: 2,
            n_planes: 4,
            input_h: 32,
            input_w: 64,
            ..Default::default()
        };
        let net = Lmpin::new(ncfg.clone(), zero_weights(&ncfg).unwrap()).unwrap();
        let cfg = JobConfig {
            mode: Mode::Network,
            n_planes: 4,
            ..Default::default()
        };
        let out = convert_frame(&frame(40, 80), None, Some(&net), &cfg).unwrap();
        assert!(out.mask_sum_error.unwrap() <= 1e-5);
        assert!(out.right.data().iter().all(|v| v.is_finite()));
        assert!(matches!(
            convert_frame(&frame(42, 80), None, Some(&net), &cfg),
            Err(CliError::Core(MpiError::BadFactor { .. }))
        ));
    }

    #[test]
    fn sbs_places_left_first() {
        let l = ImageBuffer::filled(2, 3, 3, 0.0).unwrap();
        let r = ImageBuffer::filled(2, 3, 3, 1.0).unwrap();
        let s = side_by_side(&l, &r).unwrap();
        assert_eq!(s.width(), 6);
        assert_eq!(s.get(1, 2, 0), 0.0);
        assert_eq!(s.get(1, 3, 0), 1.0);
    }
}
