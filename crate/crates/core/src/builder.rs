//! Classical MPI construction from an image and a disparity map, plus the
//! visibility weights and foreground/prediction color blending shared with
//! the learned path.
//!
//! Plane index 0 is the nearest plane throughout.

use rayon::prelude::*;

use crate::error::{MpiError, Result};
use crate::render::{plane_alphas, AlphaConvention};
use crate::resample::{resample_bilinear, resample_map};
use crate::simd::dispatch;
use crate::types::{
    AssignMasks, DensityMode, DepthMap, ImageBuffer, Plane, PlaneSpec, PlaneStack, ScalarMap,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssignMode {
    /// One-hot on the plane with the nearest disparity; ties go to the nearer plane.
    #[default]
    Hard,
    /// Linear split between the two bracketing planes.
    Tent,
}

fn assign_pixel(d: f64, planes: &[f64], mode: AssignMode, out: &mut [f32]) {
    let n_planes = planes.len();
    match mode {
        AssignMode::Hard => {
            let mut best = 0;
            let mut best_err = f64::INFINITY;
            for (n, &dn) in planes.iter().enumerate() {
                let err = (d - dn).abs();
                if err < best_err {
                    best = n;
                    best_err = err;
                }
            }
            out[best] = 1.0;
        }
        AssignMode::Tent => {
            let d = d.clamp(planes[n_planes - 1], planes[0]);
            let step = planes[0] - planes[1];
            let mut n = (((planes[0] - d) / step).floor().max(0.0) as usize).min(n_planes - 2);
            while n > 0 && d > planes[n] {
                n -= 1;
            }
            while n < n_planes - 2 && d < planes[n + 1] {
                n += 1;
            }
            if d == planes[n] {
                out[n] = 1.0;
            } else if d == planes[n + 1] {
                out[n + 1] = 1.0;
            } else {
                let t = (planes[n] - d) / (planes[n] - planes[n + 1]);
                out[n] = (1.0 - t) as f32;
                out[n + 1] = t as f32;
            }
        }
    }
}

/// Splits every pixel across planes according to its disparity. Values outside
/// the plane range clamp to the end planes.
pub fn assign_masks_from_depth(
    depth: &DepthMap,
    spec: &PlaneSpec,
    mode: AssignMode,
) -> AssignMasks {
    let n_planes = spec.n_planes();
    let planes = spec.disparities();
    let mut weights = vec![0.0f32; depth.height() * depth.width() * n_planes];
    weights
        .par_chunks_mut(n_planes * depth.width())
        .zip(depth.data().par_chunks(depth.width()))
        .for_each(|(row, drow)| {
            for (px, &d) in row.chunks_exact_mut(n_planes).zip(drow) {
                assign_pixel(d as f64, planes, mode, px);
            }
        });
    AssignMasks::from_raw(depth.height(), depth.width(), n_planes, weights)
}

/// Context region of every plane: the mask mass on that plane and all planes
/// behind it. Entry 0 covers everything.
pub fn context_masks(masks: &AssignMasks) -> Vec<ScalarMap> {
    let (h, w, n_planes) = (masks.height(), masks.width(), masks.n_planes());
    let mut ctx = vec![vec![0.0f32; h * w]; n_planes];
    for (p, px) in masks.weights().chunks_exact(n_planes).enumerate() {
        let mut acc = 0.0f64;
        for n in (0..n_planes).rev() {
            acc += px[n] as f64;
            ctx[n][p] = acc as f32;
        }
    }
    ctx.into_iter()
        .map(|data| ScalarMap::from_raw(h, w, data))
        .collect()
}

/// Direction of the transmittance product used for blend weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlendOrder {
    /// `w_n = Π_{j<n} (1 - α_j)`: product over the planes in front.
    #[default]
    FrontToBack,
    /// `w_n = Π_{j>n} (1 - α_j)`: the printed index range taken literally.
    Literal,
}

/// Per-plane visibility of the source view.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendWeights {
    maps: Vec<ScalarMap>,
}

impl BlendWeights {
    pub fn maps(&self) -> &[ScalarMap] {
        &self.maps
    }

    pub fn get(&self, n: usize) -> &ScalarMap {
        &self.maps[n]
    }

    pub fn into_maps(self) -> Vec<ScalarMap> {
        self.maps
    }
}

pub fn blend_weights_from_alphas(alphas: &[ScalarMap], order: BlendOrder) -> BlendWeights {
    let n_planes = alphas.len();
    let (h, w) = (alphas[0].height(), alphas[0].width());
    let mut maps = vec![vec![0.0f32; h * w]; n_planes];
    let indices: Vec<usize> = match order {
        BlendOrder::FrontToBack => (0..n_planes).collect(),
        BlendOrder::Literal => (0..n_planes).rev().collect(),
    };
    let mut running = vec![1.0f32; h * w];
    for &n in &indices {
        maps[n].copy_from_slice(&running);
        dispatch(
            #[inline(always)]
            || {
                for (r, &a) in running.iter_mut().zip(alphas[n].data()) {
                    *r *= 1.0 - a;
                }
            },
        );
    }
    BlendWeights {
        maps: maps
            .into_iter()
            .map(|d| ScalarMap::from_raw(h, w, d))
            .collect(),
    }
}

pub fn blend_weights(stack: &PlaneStack) -> Result<BlendWeights> {
    blend_weights_with(stack, AlphaConvention::default(), BlendOrder::default())
}

pub fn blend_weights_with(
    stack: &PlaneStack,
    convention: AlphaConvention,
    order: BlendOrder,
) -> Result<BlendWeights> {
    let alphas = plane_alphas(stack, convention)?;
    Ok(blend_weights_from_alphas(&alphas, order))
}

/// `w * source + (1 - w) * color`, all at the same resolution.
pub(crate) fn mix_with_source(source: &[f32], color: &[f32], weight: &[f32]) -> Vec<f32> {
    let mut out = vec![0.0f32; source.len()];
    out.par_chunks_mut(3 * 1024)
        .zip(source.par_chunks(3 * 1024))
        .zip(color.par_chunks(3 * 1024))
        .zip(weight.par_chunks(1024))
        .for_each(|(((o, s), c), w)| {
            for (((o, s), c), &w) in o
                .chunks_exact_mut(3)
                .zip(s.chunks_exact(3))
                .zip(c.chunks_exact(3))
                .zip(w)
            {
                let w = w.clamp(0.0, 1.0);
                for ch in 0..3 {
                    o[ch] = (w * s[ch] + (1.0 - w) * c[ch]).clamp(0.0, 1.0);
                }
            }
        });
    out
}

/// Blends the full-resolution source with a low-resolution plane color using
/// the upsampled visibility weight.
pub fn blend_colors(
    source: &ImageBuffer,
    low_color: &ImageBuffer,
    low_w: &ScalarMap,
    out_h: usize,
    out_w: usize,
) -> Result<ImageBuffer> {
    if source.height() != out_h || source.width() != out_w || source.channels() != 3 {
        return Err(MpiError::DimensionMismatch(format!(
            "source is {:?}, expected {out_h}x{out_w}x3",
            source.dims()
        )));
    }
    if low_color.height() != low_w.height()
        || low_color.width() != low_w.width()
        || low_color.channels() != 3
    {
        return Err(MpiError::DimensionMismatch(format!(
            "plane color {:?} and weight {}x{} differ",
            low_color.dims(),
            low_w.height(),
            low_w.width()
        )));
    }
    let color = resample_bilinear(low_color, out_h, out_w)?;
    let weight = resample_map(low_w, out_h, out_w)?;
    let data = mix_with_source(source.data(), color.data(), weight.data());
    Ok(ImageBuffer::from_raw(out_h, out_w, 3, data))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassicalOptions {
    pub mode: AssignMode,
    /// Extend background color horizontally into the zones covered by nearer planes.
    pub inpaint: bool,
}

impl Default for ClassicalOptions {
    fn default() -> Self {
        Self {
            mode: AssignMode::Hard,
            inpaint: true,
        }
    }
}

/// Replaces every pixel outside `valid` by the nearest valid pixel on its row.
/// Rows without any valid pixel are left untouched.
fn extend_row(colors: &mut [f32], valid: &[bool]) {
    let w = valid.len();
    let mut nearest_left = vec![usize::MAX; w];
    let mut last = usize::MAX;
    for x in 0..w {
        if valid[x] {
            last = x;
        }
        nearest_left[x] = last;
    }
    let mut next = usize::MAX;
    for x in (0..w).rev() {
        if valid[x] {
            next = x;
            continue;
        }
        let left = nearest_left[x];
        let src = match (left != usize::MAX, next != usize::MAX) {
            (true, true) if x - left <= next - x => left,
            (_, true) => next,
            (true, false) => left,
            (false, false) => continue,
        };
        for c in 0..3 {
            colors[x * 3 + c] = colors[src * 3 + c];
        }
    }
}

/// Builds a direct-alpha MPI by binning the image into planes by disparity.
///
/// Opacity is `M_n / Σ_{j≥n} M_j`, so compositing weights reproduce the
/// assign masks exactly; for hard binning this equals `M_n`.
pub fn build_mpi_classical(
    image: &ImageBuffer,
    depth: &DepthMap,
    spec: &PlaneSpec,
    opts: ClassicalOptions,
) -> Result<PlaneStack> {
    if image.height() != depth.height() || image.width() != depth.width() {
        return Err(MpiError::DimensionMismatch(format!(
            "image {}x{} vs depth {}x{}",
            image.height(),
            image.width(),
            depth.height(),
            depth.width()
        )));
    }
    let (h, w) = (image.height(), image.width());
    let rgb = image.to_rgb();
    let masks = assign_masks_from_depth(depth, spec, opts.mode);
    let contexts = context_masks(&masks);

    let planes: Vec<Plane> = (0..spec.n_planes())
        .into_par_iter()
        .map(|n| {
            let ctx = contexts[n].data();
            let alpha: Vec<f32> = ctx
                .iter()
                .enumerate()
                .map(|(p, &c)| {
                    let m = masks.weights()[p * spec.n_planes() + n];
                    if c > 0.0 {
                        (m / c).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut color = rgb.data().to_vec();
            if opts.inpaint {
                for y in 0..h {
                    let valid: Vec<bool> =
                        ctx[y * w..(y + 1) * w].iter().map(|&c| c > 0.0).collect();
                    extend_row(&mut color[y * w * 3..(y + 1) * w * 3], &valid);
                }
            }
            Plane {
                color: ImageBuffer::from_raw(h, w, 3, color),
                density: ScalarMap::from_raw(h, w, alpha),
            }
        })
        .collect();
    PlaneStack::new(spec.clone(), planes, DensityMode::DirectAlpha)
}
