//! Feature maps and the handful of dense ops the network needs.

use mpi_stereo_core::resample::resample_interleaved;
use mpi_stereo_core::simd::dispatch;
use mpi_stereo_core::{logistic_f32, softplus_f32, RowCache, RowMagnifier};
use rayon::prelude::*;

use crate::error::{LmpinError, Result};

/// Dense tensor as stored in a weight archive.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(LmpinError::DimensionMismatch(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Interleaved `height×width×channels` activations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(LmpinError::DimensionMismatch(format!(
                "{height}x{width}x{channels} feature map with {} values",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(LmpinError::DimensionMismatch(format!(
                "non-finite activation {v}"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::from_raw(
            height,
            width,
            channels,
            vec![0.0; height * width * channels],
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn map(mut self, f: impl Fn(f32) -> f32 + Sync) -> Self {
        self.data.par_iter_mut().for_each(|v| *v = f(*v));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

/// A convolution layer borrowed from a weight set.
#[derive(Debug, Clone, Copy)]
pub struct Conv<'a> {
    /// `[k, k, c_in, c_out]`
    pub weight: &'a [f32],
    pub bias: &'a [f32],
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
}

impl Conv<'_> {
    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let p = self.padding();
        (
            (h + 2 * p - self.kernel) / self.stride + 1,
            (w + 2 * p - self.kernel) / self.stride + 1,
        )
    }
}

/// Zero-padded 2D convolution. `input` may carry fewer channels than the
/// layer's `c_in`; missing trailing channels are treated as zero.
///
/// Each output row is computed by one task in a fixed order, so the result
/// is bitwise independent of the thread count.
pub fn conv2d(input: &FeatureMap, conv: &Conv, act: Activation) -> FeatureMap {
    let (oh, ow) = conv.out_size(input.height, input.width);
    let cout = conv.c_out;
    let planes = padded_planes(input, conv.padding());
    let mut out = vec![0.0f32; oh * ow * cout];
    out.par_chunks_mut(ow * cout).enumerate().for_each_init(
        || vec![0.0f32; ow * cout],
        |acc, (oy, row)| {
            dispatch(
                #[inline(always)]
                || {
                    conv_row(input, &planes, conv, oy, acc);
                    for (co, a) in acc.chunks_exact(ow).enumerate() {
                        for (px, &v) in row.chunks_exact_mut(cout).zip(a) {
                            px[co] = match act {
                                Activation::Identity => v,
                                Activation::Relu => v.max(0.0),
                            };
                        }
                    }
                },
            )
        },
    );
    FeatureMap::from_raw(oh, ow, cout, out)
}

/// One output row into `acc`, channel-major (`c_out` runs of the row width).
#[inline(always)]
fn conv_row(input: &FeatureMap, planes: &[f32], conv: &Conv, oy: usize, acc: &mut [f32]) {
    assert!(input.channels <= conv.c_in);
    let (h, w, cin) = input.shape();
    let ow = conv.out_size(h, w).1;
    let (k, s, p, cout) = (conv.kernel, conv.stride, conv.padding(), conv.c_out);
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    for (co, a) in acc.chunks_exact_mut(ow).enumerate() {
        a.fill(conv.bias[co]);
    }
    for ci in 0..cin {
        let plane = &planes[ci * ph * pw..(ci + 1) * ph * pw];
        if k == 3 && s == 1 {
            let rows = [0, 1, 2].map(|ky| &plane[(oy + ky) * pw..(oy + ky + 1) * pw]);
            for (co, a) in acc.chunks_exact_mut(ow).enumerate() {
                let wt: [f32; 9] =
                    std::array::from_fn(|t| conv.weight[(t * conv.c_in + ci) * cout + co]);
                conv3_row(a, rows, &wt);
            }
            continue;
        }
        for ky in 0..k {
            let src = &plane[(oy * s + ky) * pw..(oy * s + ky + 1) * pw];
            for kx in 0..k {
                let wbase = ((ky * k + kx) * conv.c_in + ci) * cout;
                let wrow = &conv.weight[wbase..wbase + cout];
                for (a, &wv) in acc.chunks_exact_mut(ow).zip(wrow) {
                    if s == 1 {
                        for (o, &v) in a.iter_mut().zip(&src[kx..kx + ow]) {
                            *o += wv * v;
                        }
                    } else {
                        for (o, &v) in a.iter_mut().zip(src[kx..].iter().step_by(s)) {
                            *o += wv * v;
                        }
                    }
                }
            }
        }
    }
}

/// Adds one input channel's 3×3 stride-1 contribution to an output row.
#[inline(always)]
fn conv3_row(acc: &mut [f32], rows: [&[f32]; 3], wt: &[f32; 9]) {
    let n = acc.len();
    let (r0, r1, r2) = (&rows[0][..n + 2], &rows[1][..n + 2], &rows[2][..n + 2]);
    for x in 0..n {
        let top = wt[0] * r0[x] + wt[1] * r0[x + 1] + wt[2] * r0[x + 2];
        let mid = wt[3] * r1[x] + wt[4] * r1[x + 1] + wt[5] * r1[x + 2];
        let bot = wt[6] * r2[x] + wt[7] * r2[x + 1] + wt[8] * r2[x + 2];
        acc[x] += top + mid + bot;
    }
}

/// Rows per task in [`upsample_conv_conv`].
const BAND_ROWS: usize = 32;

/// `conv(relu(conv(upsample(x))))` for two 3×3 stride-1 layers, streamed
/// in bands of rows so no full-size intermediate is stored. Output is laid
/// out `out_h×c_out×out_w` and matches the unfused ops exactly.
pub fn upsample_conv_conv(
    x: &FeatureMap,
    out_h: usize,
    out_w: usize,
    first: &Conv,
    second: &Conv,
) -> Vec<f32> {
    assert!(first.kernel == 3 && first.stride == 1 && second.kernel == 3 && second.stride == 1);
    assert!(x.channels <= first.c_in && first.c_out <= second.c_in);
    let (c1, cm, co) = (x.channels, first.c_out, second.c_out);
    let pw = out_w + 2;
    let mag = RowMagnifier::new(x.height, x.width, c1, out_h, out_w);
    let mut out = vec![0.0f32; out_h * co * out_w];
    out.par_chunks_mut(BAND_ROWS * co * out_w)
        .enumerate()
        .for_each_init(
            || {
                (
                    RowCache::new(),
                    vec![0.0f32; out_w * c1],
                    vec![0.0f32; (BAND_ROWS + 4) * c1 * pw],
                    vec![0.0f32; (BAND_ROWS + 2) * cm * pw],
                    vec![0.0f32; cm * out_w],
                )
            },
            |(cache, interleaved, up, mid, acc), (band, chunk)| {
                dispatch(
                    #[inline(always)]
                    || {
                        let y0 = band * BAND_ROWS;
                        let rows = chunk.len() / (co * out_w);
                        up.fill(0.0);
                        mid.fill(0.0);
                        let inside = |j: usize, halo: usize| {
                            (y0 + j).checked_sub(halo).filter(|&y| y < out_h)
                        };
                        for j in 0..rows + 4 {
                            let Some(y) = inside(j, 2) else { continue };
                            mag.row(&x.data, y, cache, interleaved);
                            let dst = &mut up[j * c1 * pw..(j + 1) * c1 * pw];
                            for (xx, px) in interleaved.chunks_exact(c1).enumerate() {
                                for (ci, &v) in px.iter().enumerate() {
                                    dst[ci * pw + 1 + xx] = v;
                                }
                            }
                        }
                        let row_of = |j: usize, c: usize| j * c * pw..(j + 1) * c * pw;
                        for j in 0..rows + 2 {
                            if inside(j, 1).is_none() {
                                continue;
                            }
                            let src = [0, 1, 2].map(|k| &up[row_of(j + k, c1)]);
                            conv3_planar_row(src, c1, pw, first, acc);
                            let dst = &mut mid[j * cm * pw..(j + 1) * cm * pw];
                            for (c, a) in acc.chunks_exact(out_w).enumerate() {
                                for (d, &v) in dst[c * pw + 1..c * pw + 1 + out_w].iter_mut().zip(a)
                                {
                                    *d = v.max(0.0);
                                }
                            }
                        }
                        for (j, o) in chunk.chunks_exact_mut(co * out_w).enumerate() {
                            let src = [0, 1, 2].map(|k| &mid[row_of(j + k, cm)]);
                            conv3_planar_row(src, cm, pw, second, o);
                        }
                    },
                )
            },
        );
    out
}

/// One 3×3 output row from three padded row-planar input rows of `c`
/// channels, same accumulation order as [`conv2d`].
#[inline(always)]
fn conv3_planar_row(rows: [&[f32]; 3], c: usize, pw: usize, conv: &Conv, acc: &mut [f32]) {
    let ow = pw - 2;
    for (co, a) in acc.chunks_exact_mut(ow).enumerate() {
        a.fill(conv.bias[co]);
    }
    for ci in 0..c {
        let r = [0, 1, 2].map(|k| &rows[k][ci * pw..(ci + 1) * pw]);
        for (co, a) in acc.chunks_exact_mut(ow).enumerate() {
            let wt: [f32; 9] =
                std::array::from_fn(|t| conv.weight[(t * conv.c_in + ci) * conv.c_out + co]);
            conv3_row(a, r, &wt);
        }
    }
}

/// Channel-planar copy of `input` with `p` zeros on every side.
fn padded_planes(input: &FeatureMap, p: usize) -> Vec<f32> {
    let (h, w, c) = input.shape();
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let mut planes = vec![0.0f32; c * ph * pw];
    planes
        .par_chunks_mut(ph * pw)
        .enumerate()
        .for_each(|(ci, plane)| {
            for y in 0..h {
                let dst = &mut plane[(y + p) * pw + p..(y + p) * pw + p + w];
                let src = &input.data[y * w * c..(y + 1) * w * c];
                for (d, px) in dst.iter_mut().zip(src.chunks_exact(c)) {
                    *d = px[ci];
                }
            }
        });
    planes
}

/// Response of input channel `channel` of a stride-1 layer to a constant
/// all-ones map, without bias. Zero padding makes this border dependent.
pub fn constant_channel_response(conv: &Conv, channel: usize, h: usize, w: usize) -> FeatureMap {
    let (k, p, cout) = (conv.kernel, conv.padding() as isize, conv.c_out);
    let mut out = vec![0.0f32; h * w * cout];
    for y in 0..h {
        for x in 0..w {
            let px = &mut out[(y * w + x) * cout..(y * w + x + 1) * cout];
            for ky in 0..k {
                let iy = y as isize + ky as isize - p;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = x as isize + kx as isize - p;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let base = ((ky * k + kx) * conv.c_in + channel) * cout;
                    for (o, &wv) in px.iter_mut().zip(&conv.weight[base..base + cout]) {
                        *o += wv;
                    }
                }
            }
        }
    }
    FeatureMap::from_raw(h, w, cout, out)
}

/// Bilinear resize, sample-center convention.
pub fn upsample(input: &FeatureMap, out_h: usize, out_w: usize) -> FeatureMap {
    let (h, w, c) = input.shape();
    FeatureMap::from_raw(
        out_h,
        out_w,
        c,
        resample_interleaved(&input.data, h, w, c, out_h, out_w),
    )
}

/// Box-filter downsampling by an integer factor.
pub fn avg_pool(input: &FeatureMap, factor: usize) -> FeatureMap {
    let (h, w, c) = input.shape();
    let (oh, ow) = (h / factor, w / factor);
    let norm = 1.0 / (factor * factor) as f32;
    let mut out = vec![0.0f32; oh * ow * c];
    out.par_chunks_mut(ow * c)
        .enumerate()
        .for_each(|(oy, row)| {
            for dy in 0..factor {
                let y = oy * factor + dy;
                for (ox, px) in row.chunks_exact_mut(c).enumerate() {
                    for dx in 0..factor {
                        let x = ox * factor + dx;
                        let src = &input.data[(y * w + x) * c..(y * w + x + 1) * c];
                        for (o, &v) in px.iter_mut().zip(src) {
                            *o += v;
                        }
                    }
                }
            }
            row.iter_mut().for_each(|v| *v *= norm);
        });
    FeatureMap::from_raw(oh, ow, c, out)
}

#[inline]
pub fn logistic(x: f32) -> f32 {
    logistic_f32(x)
}

#[inline]
pub fn softplus(x: f32) -> f32 {
    softplus_f32(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(input: &FeatureMap, conv: &Conv) -> Vec<f32> {
        let (h, w, cin) = input.shape();
        let (oh, ow) = conv.out_size(h, w);
        let p = conv.padding() as isize;
        let mut out = vec![0.0f64; oh * ow * conv.c_out];
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..conv.c_out {
                    let mut s = conv.bias[co] as f64;
                    for ky in 0..conv.kernel {
                        for kx in 0..conv.kernel {
                            let iy = (oy * conv.stride) as isize + ky as isize - p;
                            let ix = (ox * conv.stride) as isize + kx as isize - p;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                let wi =
                                    ((ky * conv.kernel + kx) * conv.c_in + ci) * conv.c_out + co;
                                s += input.get(iy as usize, ix as usize, ci) as f64
                                    * conv.weight[wi] as f64;
                            }
                        }
                    }
                    out[(oy * ow + ox) * conv.c_out + co] = s;
                }
            }
        }
        out.into_iter().map(|v| v as f32).collect()
    }

    fn pseudo(n: usize, seed: u32) -> Vec<f32> {
        (0..n)
            .map(|i| {
                let v = (i as u32)
                    .wrapping_mul(2654435761)
                    .wrapping_add(seed.wrapping_mul(40503));
                ((v >> 8) % 2001) as f32 / 1000.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn conv_matches_direct_sum() {
        for (h, w, cin, cout, k, s) in [
            (7, 9, 3, 5, 3, 1),
            (8, 10, 4, 6, 3, 2),
            (5, 5, 2, 3, 1, 1),
            (9, 7, 3, 1, 3, 2),
        ] {
            let input = FeatureMap::new(h, w, cin, pseudo(h * w * cin, 1)).unwrap();
            let weight = pseudo(k * k * cin * cout, 2);
            let bias = pseudo(cout, 3);
            let conv = Conv {
                weight: &weight,
                bias: &bias,
                kernel: k,
                c_in: cin,
                c_out: cout,
                stride: s,
            };
            let fast = conv2d(&input, &conv, Activation::Identity);
            let slow = naive_conv(&input, &conv);
            assert_eq!(
                fast.shape(),
                (conv.out_size(h, w).0, conv.out_size(h, w).1, cout)
            );
            for (a, b) in fast.data().iter().zip(&slow) {
                assert!((a - b).abs() < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn fused_tail_matches_unfused_ops() {
        for (h, w, c1, cm, co) in [(35, 6, 2, 3, 4), (8, 5, 3, 2, 1)] {
            let x = FeatureMap::new(h, w, c1, pseudo(h * w * c1, 11)).unwrap();
            let (w1, b1) = (pseudo(9 * c1 * cm, 12), pseudo(cm, 13));
            let (w2, b2) = (pseudo(9 * cm * co, 14), pseudo(co, 15));
            let first = Conv {
                weight: &w1,
                bias: &b1,
                kernel: 3,
                c_in: c1,
                c_out: cm,
                stride: 1,
            };
            let second = Conv {
                weight: &w2,
                bias: &b2,
                kernel: 3,
                c_in: cm,
                c_out: co,
                stride: 1,
            };
            let (oh, ow) = (2 * h, 2 * w);
            let up = upsample(&x, oh, ow);
            let want = conv2d(
                &conv2d(&up, &first, Activation::Relu),
                &second,
                Activation::Identity,
            );
            let got = upsample_conv_conv(&x, oh, ow, &first, &second);
            for y in 0..oh {
                for xx in 0..ow {
                    for c in 0..co {
                        assert_eq!(
                            want.get(y, xx, c),
                            got[(y * co + c) * ow + xx],
                            "{y} {xx} {c}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn spatial_arithmetic() {
        let weight = vec![0.0; 9];
        let conv = Conv {
            weight: &weight,
            bias: &[0.0],
            kernel: 3,
            c_in: 1,
            c_out: 1,
            stride: 2,
        };
        assert_eq!(conv.out_size(256, 384), (128, 192));
        assert_eq!(conv.out_size(7, 5), (4, 3));
    }

    #[test]
    fn constant_response_matches_explicit_channel() {
        let (h, w, cin, cout) = (5, 6, 3, 4);
        let weight = pseudo(9 * cin * cout, 5);
        let zero_bias = vec![0.0; cout];
        let conv = Conv {
            weight: &weight,
            bias: &zero_bias,
            kernel: 3,
            c_in: cin,
            c_out: cout,
            stride: 1,
        };
        let mut data = vec![0.0; h * w * cin];
        for px in data.chunks_exact_mut(cin) {
            px[2] = 1.0;
        }
        let ones = FeatureMap::new(h, w, cin, data).unwrap();
        let explicit = conv2d(&ones, &conv, Activation::Identity);
        let response = constant_channel_response(&conv, 2, h, w);
        for (a, b) in explicit.data().iter().zip(response.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn relu_and_activations() {
        let weight = vec![1.0];
        let conv = Conv {
            weight: &weight,
            bias: &[0.0],
            kernel: 1,
            c_in: 1,
            c_out: 1,
            stride: 1,
        };
        let input = FeatureMap::new(1, 3, 1, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(
            conv2d(&input, &conv, Activation::Relu).data(),
            &[0.0, 0.0, 2.0]
        );
        assert_eq!(logistic(0.0), 0.5);
        assert!((softplus(0.0) - std::f32::consts::LN_2).abs() < 1e-7);
        assert!(softplus(-100.0) >= 0.0);
        assert!((softplus(50.0) - 50.0).abs() < 1e-5);
    }

    #[test]
    fn pooling_and_upsampling() {
        let input = FeatureMap::new(2, 4, 1, vec![1.0, 3.0, 5.0, 7.0, 1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(avg_pool(&input, 2).data(), &[2.0, 6.0]);
        let c = FeatureMap::new(2, 2, 2, vec![0.25; 8]).unwrap();
        assert!(upsample(&c, 8, 8).data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(FeatureMap::new(1, 1, 1, vec![f32::NAN]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
    }
}
