//! Straightforward scalar implementations used to cross-check the optimized
//! kernels. Slow by design.

use crate::types::{
    AssignMasks, CameraRig, DensityMode, DepthMap, ImageBuffer, PlaneSpec, PlaneStack,
};

fn opacity(stack: &PlaneStack, n: usize, y: usize, x: usize) -> f64 {
    let v = stack.planes()[n].density.get(y, x) as f64;
    match stack.density_mode() {
        DensityMode::DirectAlpha => v,
        DensityMode::RawSigma => {
            let d = stack.spec().disparities();
            let delta = d[0] - d[1];
            1.0 - (-v * delta).exp()
        }
    }
}

/// Per-pixel front-to-back render: every output pixel walks the planes
/// nearest first, sampling each at `x - shift_n`.
pub fn render_view_naive(stack: &PlaneStack, rig: &CameraRig) -> ImageBuffer {
    let (h, w) = (stack.height(), stack.width());
    let mut out = vec![0.0f32; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            let mut color = [0.0f64; 3];
            let mut transmit = 1.0f64;
            for n in 0..stack.n_planes() {
                let shift = rig.shift_scale * stack.spec().disparity(n) * rig.direction.sign();
                let sx = x as f64 - shift;
                let left = sx.floor();
                let t = sx - left;
                let mut a = 0.0;
                let mut c = [0.0f64; 3];
                for (xi, wt) in [(left as i64, 1.0 - t), (left as i64 + 1, t)] {
                    let inside = xi >= 0 && xi < w as i64;
                    if inside {
                        a += wt * opacity(stack, n, y, xi as usize);
                    }
                    let xc = xi.clamp(0, w as i64 - 1) as usize;
                    for (ch, cv) in c.iter_mut().enumerate() {
                        *cv += wt * stack.planes()[n].color.get(y, xc, ch) as f64;
                    }
                }
                for ch in 0..3 {
                    color[ch] += transmit * a * c[ch];
                }
                transmit *= 1.0 - a;
            }
            for ch in 0..3 {
                out[(y * w + x) * 3 + ch] = color[ch].clamp(0.0, 1.0) as f32;
            }
        }
    }
    ImageBuffer::new(h, w, 3, out).expect("valid output")
}

fn samples(img: &ImageBuffer) -> Vec<f64> {
    img.data().iter().map(|&v| v as f64).collect()
}

pub fn l1_naive(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let (a, b) = (samples(a), samples(b));
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]).abs();
    }
    s / a.len() as f64
}

pub fn psnr_naive(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let (a, b) = (samples(a), samples(b));
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    let mse = s / a.len() as f64;
    if mse == 0.0 {
        100.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(100.0)
    }
}

/// Direct 2D Gaussian-window SSIM over valid positions, averaged over channels.
pub fn ssim_naive(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let (h, w, ch) = a.dims();
    let mut win = 11.min(h).min(w);
    if win % 2 == 0 {
        win -= 1;
    }
    let r = (win / 2) as f64;
    let mut g = vec![vec![0.0f64; win]; win];
    let mut norm = 0.0;
    for (i, gr) in g.iter_mut().enumerate() {
        for (j, v) in gr.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - r, j as f64 - r);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            norm += *v;
        }
    }
    let c1 = 0.01f64 * 0.01;
    let c2 = 0.03f64 * 0.03;
    let mut total = 0.0;
    let mut count = 0;
    for c in 0..ch {
        for y in 0..=(h - win) {
            for x in 0..=(w - win) {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..win {
                    for j in 0..win {
                        let k = g[i][j] / norm;
                        let va = a.get(y + i, x + j, c) as f64;
                        let vb = b.get(y + i, x + j, c) as f64;
                        ma += k * va;
                        mb += k * vb;
                        saa += k * va * va;
                        sbb += k * vb * vb;
                        sab += k * va * vb;
                    }
                }
                let va = saa - ma * ma;
                let vb = sbb - mb * mb;
                let cov = sab - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

pub fn mask_loss_naive(masks: &AssignMasks, depth: &DepthMap, spec: &PlaneSpec) -> f64 {
    let (h, w) = (depth.height(), depth.width());
    let mut s = 0.0;
    for y in 0..h {
        for x in 0..w {
            for n in 0..spec.n_planes() {
                s += masks.get(y, x, n) as f64 * (depth.get(y, x) as f64 - spec.disparity(n)).abs();
            }
        }
    }
    s / (h * w) as f64
}
