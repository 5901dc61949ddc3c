//! Depth-image-based rendering: forward warping with a per-row z-buffer,
//! followed by background-side hole filling.

use rayon::prelude::*;

use crate::error::{MpiError, Result};
use crate::types::{CameraRig, DepthMap, ImageBuffer, ScalarMap};

/// Contributions whose target displacement differs by at most this many
/// pixels are treated as the same surface and blended by splat weight.
pub const SURFACE_TOLERANCE_PX: f64 = 0.5;

/// Binary map of pixels that received no contribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoleMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl HoleMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(MpiError::DimensionMismatch(format!(
                "hole mask {}x{} with {} entries",
                height,
                width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[bool] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&h| h).count()
    }
}

#[derive(Debug, Clone)]
pub struct DibrWarp {
    pub image: ImageBuffer,
    pub holes: HoleMask,
    /// Winning disparity per target pixel, zero in holes.
    pub disparity: ScalarMap,
}

struct RowBuffers {
    acc: Vec<f64>,
    weight: Vec<f64>,
    best: Vec<f32>,
}

impl RowBuffers {
    fn new(w: usize, c: usize) -> Self {
        Self {
            acc: vec![0.0; w * c],
            weight: vec![0.0; w],
            best: vec![f32::NEG_INFINITY; w],
        }
    }

    fn reset(&mut self) {
        self.acc.iter_mut().for_each(|v| *v = 0.0);
        self.weight.iter_mut().for_each(|v| *v = 0.0);
        self.best.iter_mut().for_each(|v| *v = f32::NEG_INFINITY);
    }

    fn splat(&mut self, x: usize, d: f32, px: &[f32], wgt: f64, tol: f32) {
        let c = px.len();
        let best = self.best[x];
        if d > best + tol {
            self.best[x] = d;
            self.weight[x] = wgt;
            for (a, &v) in self.acc[x * c..(x + 1) * c].iter_mut().zip(px) {
                *a = v as f64 * wgt;
            }
        } else if d >= best - tol {
            self.best[x] = best.max(d);
            self.weight[x] += wgt;
            for (a, &v) in self.acc[x * c..(x + 1) * c].iter_mut().zip(px) {
                *a += v as f64 * wgt;
            }
        }
    }
}

fn check_shapes(image: &ImageBuffer, depth: &DepthMap) -> Result<()> {
    if image.height() != depth.height() || image.width() != depth.width() {
        return Err(MpiError::DimensionMismatch(format!(
            "image {:?} vs depth {}x{}",
            image.dims(),
            depth.height(),
            depth.width()
        )));
    }
    Ok(())
}

/// Forward-warps every source pixel to `x + sign·shift_scale·d`, splatting
/// into the two nearest columns. The nearer surface wins each conflict.
pub fn forward_warp(image: &ImageBuffer, depth: &DepthMap, rig: &CameraRig) -> Result<DibrWarp> {
    check_shapes(image, depth)?;
    let (h, w, c) = image.dims();
    let scale = rig.shift_scale * rig.direction.sign();
    let tol = if rig.shift_scale > 0.0 {
        (SURFACE_TOLERANCE_PX / rig.shift_scale) as f32
    } else {
        0.0
    };

    let mut out = vec![0.0f32; h * w * c];
    let mut holes = vec![false; h * w];
    let mut disp = vec![0.0f32; h * w];
    out.par_chunks_mut(w * c)
        .zip(holes.par_chunks_mut(w))
        .zip(disp.par_chunks_mut(w))
        .enumerate()
        .for_each_init(
            || RowBuffers::new(w, c),
            |buf, (y, ((out_row, hole_row), disp_row))| {
                buf.reset();
                let src = image.row(y);
                for (xs, &d) in depth.row(y).iter().enumerate() {
                    let xt = xs as f64 + scale * d as f64;
                    let x0 = xt.floor();
                    let f = xt - x0;
                    let px = &src[xs * c..(xs + 1) * c];
                    for (xi, wgt) in [(x0, 1.0 - f), (x0 + 1.0, f)] {
                        if wgt <= 0.0 || xi < 0.0 || xi >= w as f64 {
                            continue;
                        }
                        buf.splat(xi as usize, d, px, wgt, tol);
                    }
                }
                for x in 0..w {
                    let wsum = buf.weight[x];
                    if wsum > 0.0 {
                        for ch in 0..c {
                            out_row[x * c + ch] =
                                (buf.acc[x * c + ch] / wsum).clamp(0.0, 1.0) as f32;
                        }
                        disp_row[x] = buf.best[x];
                    } else {
                        hole_row[x] = true;
                    }
                }
            },
        );

    Ok(DibrWarp {
        image: ImageBuffer::from_raw(h, w, c, out),
        holes: HoleMask {
            height: h,
            width: w,
            data: holes,
        },
        disparity: ScalarMap::from_raw(h, w, disp),
    })
}

/// Fills holes row by row from the neighbouring valid pixel with the smaller
/// disparity. Rows that are entirely holes copy the nearest filled row.
pub fn inpaint_holes(
    image: &ImageBuffer,
    holes: &HoleMask,
    disparity: &ScalarMap,
) -> Result<ImageBuffer> {
    let (h, w, c) = image.dims();
    if holes.height != h || holes.width != w || disparity.height() != h || disparity.width() != w {
        return Err(MpiError::DimensionMismatch(format!(
            "image {:?}, holes {}x{}, disparity {}x{}",
            image.dims(),
            holes.height,
            holes.width,
            disparity.height(),
            disparity.width()
        )));
    }
    let mut out = image.data().to_vec();
    out.par_chunks_mut(w * c).enumerate().for_each(|(y, row)| {
        let mask = holes.row(y);
        let disp = disparity.row(y);
        let mut x = 0;
        while x < w {
            if !mask[x] {
                x += 1;
                continue;
            }
            let start = x;
            while x < w && mask[x] {
                x += 1;
            }
            let left = start.checked_sub(1);
            let right = (x < w).then_some(x);
            let donor = match (left, right) {
                (Some(l), Some(r)) => {
                    if disp[r] < disp[l] {
                        r
                    } else {
                        l
                    }
                }
                (Some(l), None) => l,
                (None, Some(r)) => r,
                (None, None) => continue,
            };
            let px: Vec<f32> = row[donor * c..(donor + 1) * c].to_vec();
            for t in start..x {
                row[t * c..(t + 1) * c].copy_from_slice(&px);
            }
        }
    });

    let full: Vec<bool> = (0..h).map(|y| holes.row(y).iter().all(|&v| v)).collect();
    if full.iter().any(|&f| f) && !full.iter().all(|&f| f) {
        for y in 0..h {
            if !full[y] {
                continue;
            }
            let donor = (1..h).find_map(|k| {
                let up = y.checked_sub(k).filter(|&r| !full[r]);
                let down = Some(y + k).filter(|&r| r < h && !full[r]);
                up.or(down)
            });
            if let Some(d) = donor {
                let (dst, src) = (y * w * c, d * w * c);
                out.copy_within(src..src + w * c, dst);
            }
        }
    }
    Ok(ImageBuffer::from_raw(h, w, c, out))
}

/// Forward warp followed by hole filling.
pub fn dibr_render(image: &ImageBuffer, depth: &DepthMap, rig: &CameraRig) -> Result<ImageBuffer> {
    let warp = forward_warp(image, depth, rig)?;
    inpaint_holes(&warp.image, &warp.holes, &warp.disparity)
}
