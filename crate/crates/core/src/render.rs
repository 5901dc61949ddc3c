//! Novel-view rendering: density to opacity, per-plane horizontal warps,
//! over-compositing, depth compositing and the low-resolution pipeline.
//!
//! All image work is row-parallel. Every output row is computed by one task
//! with a fixed plane order, so results do not depend on the thread count.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::builder::{blend_weights_from_alphas, mix_with_source, BlendOrder};
use crate::error::{MpiError, Result};
use crate::fastmath::exp_f32;
use crate::geometry::{make_shift_table, ShiftTable};
use crate::resample::{RowCache, RowMagnifier};
use crate::simd::dispatch;
use crate::types::{
    CameraRig, DensityMode, DepthMap, Direction, ImageBuffer, Plane, PlaneStack, ScalarMap,
};

/// Accumulated opacity below which the rendered depth falls back to zero.
pub const DEPTH_OPACITY_FLOOR: f32 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaConvention {
    /// `α = 1 - exp(-σδ)`: zero density is transparent.
    #[default]
    Complement,
    /// `α = exp(-σδ)` exactly as printed.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RenderOptions {
    pub alpha: AlphaConvention,
    pub blend_order: BlendOrder,
}

#[inline(always)]
fn sigma_to_alpha(sigma: f32, delta: f32, convention: AlphaConvention) -> f32 {
    let t = exp_f32(-(sigma * delta));
    match convention {
        AlphaConvention::Complement => 1.0 - t,
        AlphaConvention::PaperLiteral => t,
    }
}

pub fn alpha_from_sigma(
    sigma: &ScalarMap,
    delta: f32,
    convention: AlphaConvention,
) -> Result<ScalarMap> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(MpiError::ValueOutOfRange(format!(
            "plane gap delta = {delta}"
        )));
    }
    if let Some(index) = sigma.data().iter().position(|&s| s < 0.0) {
        return Err(MpiError::NegativeSigma {
            index,
            value: sigma.data()[index],
        });
    }
    let data = dispatch(
        #[inline(always)]
        || {
            sigma
                .data()
                .iter()
                .map(|&s| sigma_to_alpha(s, delta, convention))
                .collect()
        },
    );
    ScalarMap::new(sigma.height(), sigma.width(), data)
}

/// Opacity of every plane in the stack.
pub fn plane_alphas(stack: &PlaneStack, convention: AlphaConvention) -> Result<Vec<ScalarMap>> {
    match stack.density_mode() {
        DensityMode::DirectAlpha => Ok(stack.planes().iter().map(|p| p.density.clone()).collect()),
        DensityMode::RawSigma => {
            let delta = stack.spec().delta() as f32;
            stack
                .planes()
                .iter()
                .map(|p| alpha_from_sigma(&p.density, delta, convention))
                .collect()
        }
    }
}

/// A horizontal shift split into whole and fractional source offsets:
/// output `x` samples the source at `x + offset + frac`.
#[derive(Debug, Clone, Copy)]
struct RowShift {
    offset: isize,
    frac: f32,
}

impl RowShift {
    fn new(shift: f32) -> Self {
        let src = -(shift as f64);
        let offset = src.floor();
        Self {
            offset: offset as isize,
            frac: (src - offset) as f32,
        }
    }
}

/// Warps one row. Color clamps to the edge; alpha beyond the border is zero.
#[inline(always)]
fn warp_row(
    color: &[f32],
    alpha: &[f32],
    shift: RowShift,
    out_color: &mut [f32],
    out_alpha: &mut [f32],
) {
    let w = alpha.len() as isize;
    let RowShift { offset, frac } = shift;
    // Columns whose two source taps both lie inside the row.
    let lo = (-offset).clamp(0, w);
    let hi = (w - 1 - offset).clamp(lo, w);
    let edge = |x: isize, out_color: &mut [f32], out_alpha: &mut [f32]| {
        let x0 = x + offset;
        let x1 = x0 + 1;
        let a0 = if (0..w).contains(&x0) {
            alpha[x0 as usize]
        } else {
            0.0
        };
        let a1 = if (0..w).contains(&x1) {
            alpha[x1 as usize]
        } else {
            0.0
        };
        let c0 = x0.clamp(0, w - 1) as usize * 3;
        let c1 = x1.clamp(0, w - 1) as usize * 3;
        let o = x as usize;
        out_alpha[o] = a0 + (a1 - a0) * frac;
        for ch in 0..3 {
            let (v0, v1) = (color[c0 + ch], color[c1 + ch]);
            out_color[o * 3 + ch] = v0 + (v1 - v0) * frac;
        }
    };
    for x in (0..lo).chain(hi..w) {
        edge(x, out_color, out_alpha);
    }
    if lo == hi {
        return;
    }
    let (lo, hi, s) = (lo as usize, hi as usize, (lo + offset) as usize);
    let n = hi - lo;
    for ((o, &v0), &v1) in out_alpha[lo..hi]
        .iter_mut()
        .zip(&alpha[s..s + n])
        .zip(&alpha[s + 1..s + 1 + n])
    {
        *o = v0 + (v1 - v0) * frac;
    }
    for ((o, &v0), &v1) in out_color[lo * 3..hi * 3]
        .iter_mut()
        .zip(&color[s * 3..(s + n) * 3])
        .zip(&color[s * 3 + 3..(s + n) * 3 + 3])
    {
        *o = v0 + (v1 - v0) * frac;
    }
}

#[inline]
fn warp_alpha_row(alpha: &[f32], shift: RowShift, out_alpha: &mut [f32]) {
    let w = alpha.len() as isize;
    let RowShift { offset, frac } = shift;
    for x in 0..w {
        let x0 = x + offset;
        let x1 = x0 + 1;
        let a0 = if (0..w).contains(&x0) {
            alpha[x0 as usize]
        } else {
            0.0
        };
        let a1 = if (0..w).contains(&x1) {
            alpha[x1 as usize]
        } else {
            0.0
        };
        out_alpha[x as usize] = a0 + (a1 - a0) * frac;
    }
}

/// Translates a plane horizontally by `shift_px` with bilinear sampling.
/// Newly exposed border pixels are transparent.
pub fn warp_plane(
    plane_color: &ImageBuffer,
    plane_alpha: &ScalarMap,
    shift_px: f32,
) -> Result<(ImageBuffer, ScalarMap)> {
    if plane_color.channels() != 3
        || plane_color.height() != plane_alpha.height()
        || plane_color.width() != plane_alpha.width()
    {
        return Err(MpiError::DimensionMismatch(format!(
            "color {:?} vs alpha {}x{}",
            plane_color.dims(),
            plane_alpha.height(),
            plane_alpha.width()
        )));
    }
    if !shift_px.is_finite() {
        return Err(MpiError::NonFinite(format!("shift {shift_px}")));
    }
    let (h, w) = (plane_color.height(), plane_color.width());
    if shift_px == 0.0 {
        return Ok((plane_color.clone(), plane_alpha.clone()));
    }
    let shift = RowShift::new(shift_px);
    let mut color = vec![0.0f32; h * w * 3];
    let mut alpha = vec![0.0f32; h * w];
    color
        .par_chunks_mut(w * 3)
        .zip(alpha.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (oc, oa))| {
            warp_row(plane_color.row(y), plane_alpha.row(y), shift, oc, oa);
        });
    let color = color.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok((
        ImageBuffer::from_raw(h, w, 3, color),
        ScalarMap::from_raw(h, w, alpha),
    ))
}

#[inline(always)]
fn over(acc: &mut [f32], color: &[f32], alpha: &[f32]) {
    for ((a, c), &al) in acc
        .chunks_exact_mut(3)
        .zip(color.chunks_exact(3))
        .zip(alpha)
    {
        let keep = 1.0 - al;
        for ch in 0..3 {
            a[ch] = c[ch] * al + keep * a[ch];
        }
    }
}

fn density_row_to_alpha(
    density: &[f32],
    mode: DensityMode,
    delta: f32,
    convention: AlphaConvention,
    out: &mut [f32],
) {
    match mode {
        DensityMode::DirectAlpha => out.copy_from_slice(density),
        DensityMode::RawSigma => {
            for (o, &s) in out.iter_mut().zip(density) {
                *o = sigma_to_alpha(s, delta, convention);
            }
        }
    }
}

fn render_rows(stack: &PlaneStack, shifts: &ShiftTable, opts: RenderOptions) -> ImageBuffer {
    let (h, w) = (stack.height(), stack.width());
    let delta = stack.spec().delta() as f32;
    let mode = stack.density_mode();
    let mut out = vec![0.0f32; h * w * 3];
    out.par_chunks_mut(w * 3).enumerate().for_each_init(
        || (vec![0.0f32; w], vec![0.0f32; w * 3], vec![0.0f32; w]),
        |(alpha, warped_color, warped_alpha), (y, acc)| {
            for (n, plane) in stack.planes().iter().enumerate().rev() {
                density_row_to_alpha(plane.density.row(y), mode, delta, opts.alpha, alpha);
                let shift = RowShift::new(shifts.get(n));
                warp_row(plane.color.row(y), alpha, shift, warped_color, warped_alpha);
                over(acc, warped_color, warped_alpha);
            }
        },
    );
    let out = out.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    ImageBuffer::from_raw(h, w, 3, out)
}

/// Over-composites the stack in its own view (no warping).
pub fn composite(stack: &PlaneStack) -> ImageBuffer {
    composite_with(stack, RenderOptions::default())
}

pub fn composite_with(stack: &PlaneStack, opts: RenderOptions) -> ImageBuffer {
    let zero = ShiftTable::zeros(stack.n_planes());
    render_rows(stack, &zero, opts)
}

/// Warps every plane by its shift and composites, nearest plane on top.
pub fn render_view(stack: &PlaneStack, rig: &CameraRig) -> ImageBuffer {
    render_view_with(stack, rig, RenderOptions::default())
}

pub fn render_view_with(stack: &PlaneStack, rig: &CameraRig, opts: RenderOptions) -> ImageBuffer {
    render_rows(stack, &make_shift_table(stack.spec(), rig), opts)
}

/// Rendered disparity of the target view, normalized by accumulated opacity.
pub fn render_depth_view(stack: &PlaneStack, rig: &CameraRig, opts: RenderOptions) -> DepthMap {
    let shifts = make_shift_table(stack.spec(), rig);
    let (h, w) = (stack.height(), stack.width());
    let delta = stack.spec().delta() as f32;
    let mode = stack.density_mode();
    let mut out = vec![0.0f32; h * w];
    out.par_chunks_mut(w).enumerate().for_each_init(
        || (vec![0.0f32; w], vec![0.0f32; w], vec![0.0f32; w]),
        |(alpha, warped_alpha, coverage), (y, depth)| {
            coverage.iter_mut().for_each(|v| *v = 0.0);
            for (n, plane) in stack.planes().iter().enumerate().rev() {
                density_row_to_alpha(plane.density.row(y), mode, delta, opts.alpha, alpha);
                warp_alpha_row(alpha, RowShift::new(shifts.get(n)), warped_alpha);
                let d = stack.spec().disparity(n) as f32;
                for ((acc_d, acc_a), &al) in depth
                    .iter_mut()
                    .zip(coverage.iter_mut())
                    .zip(warped_alpha.iter())
                {
                    *acc_d = d * al + (1.0 - al) * *acc_d;
                    *acc_a = al + (1.0 - al) * *acc_a;
                }
            }
            for (d, &a) in depth.iter_mut().zip(coverage.iter()) {
                *d = if a > DEPTH_OPACITY_FLOOR {
                    (*d / a).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        },
    );
    DepthMap::from_raw(h, w, out)
}

/// Disparity composited in the stack's own view.
pub fn composite_depth(stack: &PlaneStack) -> DepthMap {
    let rig = CameraRig {
        focal_px: 1.0,
        baseline: 0.0,
        shift_scale: 0.0,
        direction: Direction::LeftToRight,
        intrinsics: None,
    };
    render_depth_view(stack, &rig, RenderOptions::default())
}

/// Full-resolution reference for the accelerated path: blend every plane
/// color with the source by its visibility weight, then warp and composite.
pub fn render_blended(
    source: &ImageBuffer,
    stack: &PlaneStack,
    rig: &CameraRig,
    opts: RenderOptions,
) -> Result<ImageBuffer> {
    let source = source.to_rgb();
    if source.height() != stack.height() || source.width() != stack.width() {
        return Err(MpiError::DimensionMismatch(format!(
            "source {:?} vs stack {}x{}",
            source.dims(),
            stack.height(),
            stack.width()
        )));
    }
    let alphas = plane_alphas(stack, opts.alpha)?;
    let weights = blend_weights_from_alphas(&alphas, opts.blend_order);
    let planes = stack
        .planes()
        .iter()
        .zip(alphas)
        .zip(weights.maps())
        .map(|((plane, alpha), w)| {
            let color = mix_with_source(source.data(), plane.color.data(), w.data());
            Plane {
                color: ImageBuffer::from_raw(source.height(), source.width(), 3, color),
                density: alpha,
            }
        })
        .collect();
    let blended = PlaneStack::new(stack.spec().clone(), planes, DensityMode::DirectAlpha)?;
    Ok(render_view_with(&blended, rig, opts))
}

/// Wall time spent in each stage of [`render_lowres_pipeline_timed`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub blend: Duration,
    pub warp: Duration,
    pub composite: Duration,
}

pub fn render_lowres_pipeline(
    source: &ImageBuffer,
    low_stack: &PlaneStack,
    rig: &CameraRig,
    factor: usize,
) -> Result<ImageBuffer> {
    let mut times = StageTimes::default();
    render_lowres_pipeline_timed(
        source,
        low_stack,
        rig,
        factor,
        RenderOptions::default(),
        &mut times,
    )
}

/// Renders a full-resolution view from a low-resolution MPI.
///
/// Visibility weights are computed at low resolution. Each plane's color,
/// opacity and weight are then bilinearly magnified, the color is blended
/// with the full-resolution source, and the plane is warped and composited
/// at full resolution. Planes are streamed back to front so memory stays at
/// a few full-resolution planes.
pub fn render_lowres_pipeline_timed(
    source: &ImageBuffer,
    low_stack: &PlaneStack,
    rig: &CameraRig,
    factor: usize,
    opts: RenderOptions,
    times: &mut StageTimes,
) -> Result<ImageBuffer> {
    let (h, w) = (source.height(), source.width());
    if factor == 0
        || h % factor != 0
        || w % factor != 0
        || low_stack.height() * factor != h
        || low_stack.width() * factor != w
    {
        return Err(MpiError::BadFactor {
            factor,
            height: h,
            width: w,
        });
    }
    let source = source.to_rgb();
    let started = Instant::now();
    let alphas = plane_alphas(low_stack, opts.alpha)?;
    let weights = blend_weights_from_alphas(&alphas, opts.blend_order);
    times.blend += started.elapsed();

    let (lh, lw) = (low_stack.height(), low_stack.width());
    let color_mag = RowMagnifier::new(lh, lw, 3, h, w);
    let scalar_mag = RowMagnifier::new(lh, lw, 1, h, w);
    let shifts = make_shift_table(low_stack.spec(), rig);
    let mut acc = vec![0.0f32; h * w * 3];
    for n in (0..low_stack.n_planes()).rev() {
        let pass = Instant::now();
        let shift = RowShift::new(shifts.get(n));
        let (color, alpha, weight) = (
            low_stack.planes()[n].color.data(),
            alphas[n].data(),
            weights.get(n).data(),
        );
        let split = acc
            .par_chunks_mut(w * 3)
            .enumerate()
            .map_init(
                || PipelineScratch::new(w),
                |s, (y, acc_row)| {
                    dispatch(
                        #[inline(always)]
                        || {
                            let t0 = Instant::now();
                            color_mag.row(color, y, &mut s.color_cache, &mut s.color);
                            scalar_mag.row(alpha, y, &mut s.alpha_cache, &mut s.alpha);
                            scalar_mag.row(weight, y, &mut s.weight_cache, &mut s.weight);
                            blend_row(source.row(y), &mut s.color, &s.weight);
                            let t1 = Instant::now();
                            warp_row(
                                &s.color,
                                &s.alpha,
                                shift,
                                &mut s.warped_color,
                                &mut s.warped_alpha,
                            );
                            let t2 = Instant::now();
                            over(acc_row, &s.warped_color, &s.warped_alpha);
                            [t1 - t0, t2 - t1, t2.elapsed()]
                        },
                    )
                },
            )
            .reduce(
                || [Duration::ZERO; 3],
                |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]],
            );
        // Per-row timings are summed over workers; rescale them to the pass wall time.
        let wall = pass.elapsed();
        let busy: Duration = split.iter().sum();
        let share = |d: Duration| {
            if busy.is_zero() {
                Duration::ZERO
            } else {
                wall.mul_f64(d.as_secs_f64() / busy.as_secs_f64())
            }
        };
        times.blend += share(split[0]);
        times.warp += share(split[1]);
        times.composite += share(split[2]);
    }
    let out = acc.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(ImageBuffer::from_raw(h, w, 3, out))
}

struct PipelineScratch {
    color_cache: RowCache,
    alpha_cache: RowCache,
    weight_cache: RowCache,
    color: Vec<f32>,
    alpha: Vec<f32>,
    weight: Vec<f32>,
    warped_color: Vec<f32>,
    warped_alpha: Vec<f32>,
}

impl PipelineScratch {
    fn new(w: usize) -> Self {
        Self {
            color_cache: RowCache::new(),
            alpha_cache: RowCache::new(),
            weight_cache: RowCache::new(),
            color: vec![0.0; w * 3],
            alpha: vec![0.0; w],
            weight: vec![0.0; w],
            warped_color: vec![0.0; w * 3],
            warped_alpha: vec![0.0; w],
        }
    }
}

/// Replaces `color` with the weighted mix of source and magnified plane color.
#[inline(always)]
fn blend_row(source: &[f32], color: &mut [f32], weight: &[f32]) {
    for ((c, s), &wt) in color
        .chunks_exact_mut(3)
        .zip(source.chunks_exact(3))
        .zip(weight)
    {
        let wt = wt.clamp(0.0, 1.0);
        for ch in 0..3 {
            let plane = c[ch].clamp(0.0, 1.0);
            c[ch] = (wt * s[ch] + (1.0 - wt) * plane).clamp(0.0, 1.0);
        }
    }
}
