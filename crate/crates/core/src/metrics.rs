//! Image metrics and the evaluation losses: L1, PSNR, SSIM, the mask
//! consistency loss and the depth / MPI / total loss compositions.
//!
//! All reductions accumulate in `f64`.

use crate::error::{MpiError, Result};
use crate::types::{AssignMasks, DepthMap, ImageBuffer, PlaneSpec, ScalarMap};

/// Anything that can be compared sample by sample.
pub trait Samples {
    /// `(height, width, channels)`
    fn shape(&self) -> (usize, usize, usize);
    fn samples(&self) -> &[f32];
}

impl Samples for ImageBuffer {
    fn shape(&self) -> (usize, usize, usize) {
        self.dims()
    }
    fn samples(&self) -> &[f32] {
        self.data()
    }
}

impl Samples for DepthMap {
    fn shape(&self) -> (usize, usize, usize) {
        (self.height(), self.width(), 1)
    }
    fn samples(&self) -> &[f32] {
        self.data()
    }
}

impl Samples for ScalarMap {
    fn shape(&self) -> (usize, usize, usize) {
        (self.height(), self.width(), 1)
    }
    fn samples(&self) -> &[f32] {
        self.data()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricOptions {
    pub lambda_mask: f64,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub ssim_k1: f64,
    pub ssim_k2: f64,
    pub dynamic_range: f64,
    pub psnr_cap_db: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            lambda_mask: 10.0,
            ssim_window: 11,
            ssim_sigma: 1.5,
            ssim_k1: 0.01,
            ssim_k2: 0.03,
            dynamic_range: 1.0,
            psnr_cap_db: 100.0,
        }
    }
}

impl MetricOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_mask > 0.0) {
            return Err(MpiError::ValueOutOfRange(format!(
                "lambda_mask = {}",
                self.lambda_mask
            )));
        }
        if self.ssim_window % 2 == 0 {
            return Err(MpiError::ValueOutOfRange(format!(
                "ssim window {} must be odd",
                self.ssim_window
            )));
        }
        Ok(())
    }
}

fn same_shape<A: Samples, B: Samples>(a: &A, b: &B) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(MpiError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean absolute difference.
pub fn l1<A: Samples, B: Samples>(a: &A, b: &B) -> Result<f64> {
    same_shape(a, b)?;
    let sum: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .sum();
    Ok(sum / a.samples().len() as f64)
}

pub fn mse<A: Samples, B: Samples>(a: &A, b: &B) -> Result<f64> {
    same_shape(a, b)?;
    let sum: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.samples().len() as f64)
}

pub fn psnr<A: Samples, B: Samples>(a: &A, b: &B) -> Result<f64> {
    psnr_with(a, b, &MetricOptions::default())
}

/// `10 log10(range² / MSE)`, capped at `psnr_cap_db`.
pub fn psnr_with<A: Samples, B: Samples>(a: &A, b: &B, opts: &MetricOptions) -> Result<f64> {
    let err = mse(a, b)?;
    if err == 0.0 {
        return Ok(opts.psnr_cap_db);
    }
    let db = 10.0 * (opts.dynamic_range * opts.dynamic_range / err).log10();
    Ok(db.min(opts.psnr_cap_db))
}

/// Normalized 1D Gaussian of odd length `size`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - r;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Window actually used for an `h×w` image: the configured size, shrunk to
/// the largest odd size that fits.
pub fn effective_window(h: usize, w: usize, window: usize) -> usize {
    let fit = h.min(w);
    let size = window.min(fit);
    if size % 2 == 0 {
        size - 1
    } else {
        size
    }
}

/// Valid-mode separable filtering of an `h×w` plane.
fn filter_valid(data: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut horiz = vec![0.0; h * ow];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = k.iter().zip(&row[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for (i, &kv) in k.iter().enumerate() {
            let src = &horiz[(y + i) * ow..(y + i + 1) * ow];
            for (o, &s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += kv * s;
            }
        }
    }
    out
}

pub fn ssim<A: Samples, B: Samples>(a: &A, b: &B) -> Result<f64> {
    ssim_with(a, b, &MetricOptions::default())
}

/// Mean structural similarity over valid window positions, averaged over channels.
pub fn ssim_with<A: Samples, B: Samples>(a: &A, b: &B, opts: &MetricOptions) -> Result<f64> {
    same_shape(a, b)?;
    opts.validate()?;
    let (h, w, ch) = a.shape();
    let win = effective_window(h, w, opts.ssim_window);
    let kernel = gaussian_kernel(win, opts.ssim_sigma);
    let c1 = (opts.ssim_k1 * opts.dynamic_range).powi(2);
    let c2 = (opts.ssim_k2 * opts.dynamic_range).powi(2);

    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..ch {
        let pa: Vec<f64> = a
            .samples()
            .iter()
            .skip(c)
            .step_by(ch)
            .map(|&v| v as f64)
            .collect();
        let pb: Vec<f64> = b
            .samples()
            .iter()
            .skip(c)
            .step_by(ch)
            .map(|&v| v as f64)
            .collect();
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = filter_valid(&pa, h, w, &kernel);
        let mu_b = filter_valid(&pb, h, w, &kernel);
        let e_aa = filter_valid(&aa, h, w, &kernel);
        let e_bb = filter_valid(&bb, h, w, &kernel);
        let e_ab = filter_valid(&ab, h, w, &kernel);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// `(1/HW) Σ_n Σ_xy M_n |D_ref - d_n|`
pub fn mask_loss(masks: &AssignMasks, ref_depth: &DepthMap, spec: &PlaneSpec) -> Result<f64> {
    if masks.height() != ref_depth.height()
        || masks.width() != ref_depth.width()
        || masks.n_planes() != spec.n_planes()
    {
        return Err(MpiError::DimensionMismatch(format!(
            "masks {}x{}x{} vs depth {}x{} and {} planes",
            masks.height(),
            masks.width(),
            masks.n_planes(),
            ref_depth.height(),
            ref_depth.width(),
            spec.n_planes()
        )));
    }
    let planes = spec.disparities();
    let sum: f64 = masks
        .weights()
        .chunks_exact(planes.len())
        .zip(ref_depth.data())
        .map(|(px, &d)| {
            px.iter()
                .zip(planes)
                .map(|(&m, &dn)| m as f64 * (d as f64 - dn).abs())
                .sum::<f64>()
        })
        .sum();
    Ok(sum / (masks.height() * masks.width()) as f64)
}

/// `L1(D_c, D_ref) + L1(D_f, D_ref) + λ L_mask`
pub fn depth_loss(
    d_coarse: &DepthMap,
    d_fine: &DepthMap,
    d_ref: &DepthMap,
    masks: &AssignMasks,
    spec: &PlaneSpec,
    opts: &MetricOptions,
) -> Result<f64> {
    opts.validate()?;
    Ok(l1(d_coarse, d_ref)?
        + l1(d_fine, d_ref)?
        + opts.lambda_mask * mask_loss(masks, d_ref, spec)?)
}

/// Components of the view-synthesis loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpiLoss {
    pub total: f64,
    pub l1: f64,
    /// `1 - SSIM`
    pub ssim_term: f64,
    pub depth_term: f64,
    /// Always `None`: no perceptual feature extractor is bundled.
    pub perceptual: Option<f64>,
}

pub fn mpi_loss(
    pred: &ImageBuffer,
    gt: &ImageBuffer,
    d_pred: &DepthMap,
    d_ref: &DepthMap,
) -> Result<MpiLoss> {
    mpi_loss_with(pred, gt, d_pred, d_ref, &MetricOptions::default())
}

pub fn mpi_loss_with(
    pred: &ImageBuffer,
    gt: &ImageBuffer,
    d_pred: &DepthMap,
    d_ref: &DepthMap,
    opts: &MetricOptions,
) -> Result<MpiLoss> {
    let l1_term = l1(pred, gt)?;
    let ssim_term = 1.0 - ssim_with(pred, gt, opts)?;
    let depth_term = l1(d_pred, d_ref)?;
    Ok(MpiLoss {
        total: l1_term + ssim_term + depth_term,
        l1: l1_term,
        ssim_term,
        depth_term,
        perceptual: None,
    })
}

pub fn total_loss(depth_part: f64, mpi_part: f64) -> f64 {
    depth_part + mpi_part
}
