//! Plane placement and the horizontal-baseline warp.

use crate::error::{MpiError, Result};
use crate::types::{CameraRig, Matrix3, PlaneSpec};

/// N planes uniformly spaced in disparity from `d_max` (nearest) to `d_min`.
pub fn make_plane_spec(n_planes: usize, d_min: f64, d_max: f64) -> Result<PlaneSpec> {
    if !(d_min < d_max) || d_min < 0.0 || d_max > 1.0 {
        return Err(MpiError::BadRange { d_min, d_max });
    }
    if n_planes < 2 {
        return Err(MpiError::ValueOutOfRange(format!(
            "need at least 2 planes, got {n_planes}"
        )));
    }
    let step = (d_max - d_min) / (n_planes - 1) as f64;
    let mut disparities: Vec<f64> = (0..n_planes).map(|n| d_max - n as f64 * step).collect();
    disparities[n_planes - 1] = d_min;
    PlaneSpec::from_disparities(disparities)
}

fn mat_inverse(m: &Matrix3) -> Option<Matrix3> {
    let cof =
        |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let det = m[0][0] * cof(1, 2, 1, 2) - m[0][1] * cof(1, 2, 0, 2) + m[0][2] * cof(1, 2, 0, 1);
    if !det.is_finite() || det.abs() < 1e-12 {
        return None;
    }
    let adj = [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = adj[i][j] / det;
        }
    }
    Some(inv)
}

/// Plane-induced homography `K (I - t nᵀ / z) K⁻¹` for a fronto-parallel
/// plane at depth `z`, mapping target pixels to source pixels.
///
/// `t = [sign * baseline, 0, 0]` and `n = [0, 0, 1]`.
pub fn homography_matrix(rig: &CameraRig, z: f64) -> Result<Matrix3> {
    let k = rig.intrinsics.ok_or(MpiError::SingularIntrinsics)?;
    if !(z > 0.0) {
        return Err(MpiError::ValueOutOfRange(format!("plane depth {z}")));
    }
    let k_inv = mat_inverse(&k).ok_or(MpiError::SingularIntrinsics)?;
    let t = [rig.direction.sign() * rig.baseline, 0.0, 0.0];
    // K (I - t nᵀ/z) K⁻¹ = I - (K t)(nᵀ K⁻¹)/z, and nᵀ K⁻¹ is the last row of K⁻¹.
    let kt: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| k[i][j] * t[j]).sum());
    let n_kinv = k_inv[2];
    let mut h = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for i in 0..3 {
        for j in 0..3 {
            h[i][j] -= kt[i] * n_kinv[j] / z;
        }
    }
    Ok(h)
}

/// Applies a homography to pixel `(x, y)`.
pub fn apply_homography(h: &Matrix3, x: f64, y: f64) -> (f64, f64) {
    let u = h[0][0] * x + h[0][1] * y + h[0][2];
    let v = h[1][0] * x + h[1][1] * y + h[1][2];
    let w = h[2][0] * x + h[2][1] * y + h[2][2];
    (u / w, v / w)
}

/// Per-plane horizontal pixel shift: content of plane n moves by `shifts[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftTable {
    shifts: Vec<f32>,
}

impl ShiftTable {
    pub fn from_shifts(shifts: Vec<f32>) -> Self {
        Self { shifts }
    }

    pub fn zeros(n_planes: usize) -> Self {
        Self::from_shifts(vec![0.0; n_planes])
    }

    pub fn shifts(&self) -> &[f32] {
        &self.shifts
    }

    pub fn get(&self, n: usize) -> f32 {
        self.shifts[n]
    }
}

pub fn make_shift_table(spec: &PlaneSpec, rig: &CameraRig) -> ShiftTable {
    let sign = rig.direction.sign();
    let shifts = spec
        .disparities()
        .iter()
        .map(|&d| (rig.shift_scale * d * sign) as f32)
        .collect();
    ShiftTable { shifts }
}
