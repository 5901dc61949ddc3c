//! Separable bilinear resampling, sample-center convention with edge clamp.
//!
//! Output pixel `i` of an axis of length `out` reads the source at
//! `(i + 0.5) * in / out - 0.5`, clamped to `[0, in - 1]`.

use rayon::prelude::*;

use crate::error::{MpiError, Result};
use crate::types::{DepthMap, ImageBuffer, ScalarMap};

#[derive(Debug, Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    frac: f32,
}

fn taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(input - 1);
            Tap {
                i0,
                i1,
                frac: (src - i0 as f64) as f32,
            }
        })
        .collect()
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    a + (b - a) * t
}

/// Resamples interleaved `h×w×c` data to `out_h×out_w×c`.
///
/// Equal sizes return an exact copy.
pub fn resample_interleaved(
    data: &[f32],
    h: usize,
    w: usize,
    c: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f32> {
    assert_eq!(data.len(), h * w * c);
    if h == out_h && w == out_w {
        return data.to_vec();
    }
    let mag = RowMagnifier::new(h, w, c, out_h, out_w);
    let mut out = vec![0.0f32; out_h * out_w * c];
    out.par_chunks_mut(out_w * c)
        .enumerate()
        .for_each_init(RowCache::new, |cache, (y, row)| {
            mag.row(data, y, cache, row)
        });
    out
}

/// Row-at-a-time bilinear resampling of interleaved data. Each output row
/// depends only on its two source rows, so rows can be produced on demand.
pub struct RowMagnifier {
    w: usize,
    c: usize,
    out_w: usize,
    xt: Vec<Tap>,
    yt: Vec<Tap>,
    same: bool,
}

/// Per-worker cache of the two most recent horizontally resampled rows.
pub struct RowCache {
    keys: [usize; 2],
    rows: [Vec<f32>; 2],
}

impl Default for RowCache {
    fn default() -> Self {
        Self::new()
    }
}

impl RowCache {
    pub fn new() -> Self {
        Self {
            keys: [usize::MAX; 2],
            rows: [Vec::new(), Vec::new()],
        }
    }
}

impl RowMagnifier {
    pub fn new(h: usize, w: usize, c: usize, out_h: usize, out_w: usize) -> Self {
        Self {
            w,
            c,
            out_w,
            xt: taps(w, out_w),
            yt: taps(h, out_h),
            same: h == out_h && w == out_w,
        }
    }

    fn horizontal(&self, src: &[f32], out: &mut Vec<f32>) {
        let c = self.c;
        out.resize(self.out_w * c, 0.0);
        if self.w == self.out_w {
            out.copy_from_slice(src);
            return;
        }
        for (x, t) in self.xt.iter().enumerate() {
            for ch in 0..c {
                out[x * c + ch] = lerp(src[t.i0 * c + ch], src[t.i1 * c + ch], t.frac);
            }
        }
    }

    fn slot(&self, data: &[f32], cache: &mut RowCache, y: usize, keep: usize) -> usize {
        if let Some(s) = cache.keys.iter().position(|&k| k == y) {
            return s;
        }
        let s = if cache.keys[0] == keep { 1 } else { 0 };
        let row_len = self.w * self.c;
        self.horizontal(&data[y * row_len..(y + 1) * row_len], &mut cache.rows[s]);
        cache.keys[s] = y;
        s
    }

    /// Output row `y` of the magnified data.
    #[inline]
    pub fn row(&self, data: &[f32], y: usize, cache: &mut RowCache, out: &mut [f32]) {
        let row_len = self.w * self.c;
        if self.same {
            out.copy_from_slice(&data[y * row_len..(y + 1) * row_len]);
            return;
        }
        let t = self.yt[y];
        if self.w == self.out_w {
            let a = &data[t.i0 * row_len..(t.i0 + 1) * row_len];
            if t.frac == 0.0 || t.i0 == t.i1 {
                out.copy_from_slice(a);
            } else {
                let b = &data[t.i1 * row_len..(t.i1 + 1) * row_len];
                for ((o, &va), &vb) in out.iter_mut().zip(a).zip(b) {
                    *o = lerp(va, vb, t.frac);
                }
            }
            return;
        }
        let s0 = self.slot(data, cache, t.i0, t.i1);
        if t.frac == 0.0 || t.i0 == t.i1 {
            out.copy_from_slice(&cache.rows[s0]);
            return;
        }
        let s1 = self.slot(data, cache, t.i1, t.i0);
        let (a, b) = (&cache.rows[s0], &cache.rows[s1]);
        for ((o, &va), &vb) in out.iter_mut().zip(a.iter()).zip(b.iter()) {
            *o = lerp(va, vb, t.frac);
        }
    }
}

fn check_target(out_h: usize, out_w: usize) -> Result<()> {
    if out_h == 0 || out_w == 0 {
        return Err(MpiError::ZeroDimension(format!(
            "resample target is {out_h}x{out_w}"
        )));
    }
    Ok(())
}

pub fn resample_bilinear(src: &ImageBuffer, out_h: usize, out_w: usize) -> Result<ImageBuffer> {
    check_target(out_h, out_w)?;
    let (h, w, c) = src.dims();
    let data = resample_interleaved(src.data(), h, w, c, out_h, out_w);
    // Convex weights keep values in range up to rounding.
    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(ImageBuffer::from_raw(out_h, out_w, c, data))
}

pub fn resample_map(src: &ScalarMap, out_h: usize, out_w: usize) -> Result<ScalarMap> {
    check_target(out_h, out_w)?;
    let data = resample_interleaved(src.data(), src.height(), src.width(), 1, out_h, out_w);
    Ok(ScalarMap::from_raw(out_h, out_w, data))
}

pub fn resample_depth(src: &DepthMap, out_h: usize, out_w: usize) -> Result<DepthMap> {
    check_target(out_h, out_w)?;
    let data = resample_interleaved(src.data(), src.height(), src.width(), 1, out_h, out_w);
    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(DepthMap::from_raw(out_h, out_w, data))
}
