//! Shared data model: images, scalar maps, depth maps, plane stacks, masks
//! and the stereo camera rig.
//!
//! Every container stores `f32` samples row-major. Constructors validate their
//! invariants; [`Validate`] re-checks them after in-place mutation through the
//! `data_mut` accessors.

use crate::error::{MpiError, Result};

/// Per-pixel sum tolerance for [`AssignMasks`].
pub const MASK_SUM_TOLERANCE: f32 = 1e-5;

/// Floor used when converting a disparity to a depth.
pub const DISPARITY_EPSILON: f64 = 1e-6;

/// Tolerance on the spacing of plane disparities.
pub const UNIFORM_SPACING_TOLERANCE: f64 = 1e-9;

pub trait Validate {
    fn validate(&self) -> Result<()>;
}

fn check_dims(what: &str, height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(MpiError::ZeroDimension(format!(
            "{what} is {height}x{width}"
        )));
    }
    Ok(())
}

fn check_len(what: &str, len: usize, expected: usize) -> Result<()> {
    if len != expected {
        return Err(MpiError::DimensionMismatch(format!(
            "{what} holds {len} values, expected {expected}"
        )));
    }
    Ok(())
}

fn all_in_chunks(data: &[f32], pred: impl Fn(f32) -> bool) -> bool {
    data.chunks(4096)
        .all(|c| c.iter().fold(true, |ok, &v| ok & pred(v)))
}

fn check_unit_range(what: &str, data: &[f32]) -> Result<()> {
    if all_in_chunks(data, |v| (0.0..=1.0).contains(&v)) {
        return Ok(());
    }
    for (i, &v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(MpiError::NonFinite(format!("{what}[{i}] = {v}")));
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(MpiError::ValueOutOfRange(format!(
                "{what}[{i}] = {v} outside [0, 1]"
            )));
        }
    }
    Ok(())
}

fn check_finite(what: &str, data: &[f32]) -> Result<()> {
    if all_in_chunks(data, f32::is_finite) {
        return Ok(());
    }
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(MpiError::NonFinite(format!("{what}[{i}] = {}", data[i]))),
        None => Ok(()),
    }
}

/// Keeps the top-left `h×w` block of interleaved data in place.
fn crop_in_place(
    data: &mut Vec<f32>,
    dims: (usize, usize, usize),
    h: usize,
    w: usize,
) -> Result<()> {
    let (old_h, old_w, c) = dims;
    if h == 0 || w == 0 || h > old_h || w > old_w {
        return Err(MpiError::DimensionMismatch(format!(
            "cannot crop {old_h}x{old_w} to {h}x{w}"
        )));
    }
    if w != old_w {
        for y in 1..h {
            data.copy_within(y * old_w * c..(y * old_w + w) * c, y * w * c);
        }
    }
    data.truncate(h * w * c);
    Ok(())
}

/// H×W×C image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let image = Self {
            height,
            width,
            channels,
            data,
        };
        image.validate()?;
        Ok(image)
    }

    /// Builds an image clamping every sample into `[0, 1]`. NaN is still rejected.
    pub fn from_vec_clamped(
        height: usize,
        width: usize,
        channels: usize,
        mut data: Vec<f32>,
    ) -> Result<Self> {
        check_finite("image", &data)?;
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Self::new(height, width, channels, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::from_vec_clamped(height, width, channels, data)
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
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

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Top-left `height×width` block, without reallocating.
    pub fn crop(mut self, height: usize, width: usize) -> Result<Self> {
        let dims = self.dims();
        crop_in_place(&mut self.data, dims, height, width)?;
        self.height = height;
        self.width = width;
        Ok(self)
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn row(&self, y: usize) -> &[f32] {
        let stride = self.width * self.channels;
        &self.data[y * stride..(y + 1) * stride]
    }

    /// Three-channel view: gray is replicated, a fourth channel is dropped.
    pub fn to_rgb(&self) -> ImageBuffer {
        match self.channels {
            3 => self.clone(),
            1 => {
                let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
                ImageBuffer::from_raw(self.height, self.width, 3, data)
            }
            _ => {
                let data = self
                    .data
                    .chunks_exact(self.channels)
                    .flat_map(|px| [px[0], px[1], px[2]])
                    .collect();
                ImageBuffer::from_raw(self.height, self.width, 3, data)
            }
        }
    }

    /// Extracts one channel as a scalar map.
    pub fn channel(&self, c: usize) -> ScalarMap {
        let data = self
            .data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        ScalarMap::from_raw(self.height, self.width, data)
    }
}

impl Validate for ImageBuffer {
    fn validate(&self) -> Result<()> {
        check_dims("image", self.height, self.width)?;
        if !matches!(self.channels, 1 | 3 | 4) {
            return Err(MpiError::DimensionMismatch(format!(
                "image has {} channels, expected 1, 3 or 4",
                self.channels
            )));
        }
        check_len(
            "image",
            self.data.len(),
            self.height * self.width * self.channels,
        )?;
        check_unit_range("image", &self.data)
    }
}

/// H×W map of finite values with no range restriction (densities, opacities,
/// blend weights, context regions).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ScalarMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let map = Self {
            height,
            width,
            data,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Top-left `height×width` block, without reallocating.
    pub fn crop(mut self, height: usize, width: usize) -> Result<Self> {
        crop_in_place(&mut self.data, (self.height, self.width, 1), height, width)?;
        self.height = height;
        self.width = width;
        Ok(self)
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f32] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

impl Validate for ScalarMap {
    fn validate(&self) -> Result<()> {
        check_dims("map", self.height, self.width)?;
        check_len("map", self.data.len(), self.height * self.width)?;
        check_finite("map", &self.data)
    }
}

/// Normalized disparity in `[0, 1]`, 1 = nearest to the camera.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let depth = Self {
            height,
            width,
            data,
        };
        depth.validate()?;
        Ok(depth)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    pub(crate) fn from_raw(height: usize, width: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f32] {
        &self.data[y * self.width..(y + 1) * self.width]
    }
}

impl Validate for DepthMap {
    fn validate(&self) -> Result<()> {
        check_dims("depth", self.height, self.width)?;
        check_len("depth", self.data.len(), self.height * self.width)?;
        check_unit_range("depth", &self.data)
    }
}

/// Plane disparities, nearest first, uniformly spaced.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneSpec {
    disparities: Vec<f64>,
}

impl PlaneSpec {
    pub fn from_disparities(disparities: Vec<f64>) -> Result<Self> {
        let spec = Self { disparities };
        spec.validate()?;
        Ok(spec)
    }

    pub fn n_planes(&self) -> usize {
        self.disparities.len()
    }

    pub fn disparities(&self) -> &[f64] {
        &self.disparities
    }

    /// Disparity of plane `n` (0-based, 0 = nearest).
    pub fn disparity(&self, n: usize) -> f64 {
        self.disparities[n]
    }

    pub fn depth(&self, n: usize) -> f64 {
        1.0 / self.disparities[n].max(DISPARITY_EPSILON)
    }

    pub fn d_max(&self) -> f64 {
        self.disparities[0]
    }

    pub fn d_min(&self) -> f64 {
        self.disparities[self.disparities.len() - 1]
    }

    /// Disparity gap between consecutive planes.
    pub fn delta(&self) -> f64 {
        self.disparities[0] - self.disparities[1]
    }
}

impl Validate for PlaneSpec {
    fn validate(&self) -> Result<()> {
        let d = &self.disparities;
        if d.len() < 2 {
            return Err(MpiError::ValueOutOfRange(format!(
                "plane spec needs at least 2 planes, got {}",
                d.len()
            )));
        }
        check_finite(
            "disparities",
            &d.iter().map(|&v| v as f32).collect::<Vec<_>>(),
        )?;
        if d[d.len() - 1] < 0.0 {
            return Err(MpiError::ValueOutOfRange(format!(
                "farthest disparity {} is negative",
                d[d.len() - 1]
            )));
        }
        let step = d[0] - d[1];
        for (n, pair) in d.windows(2).enumerate() {
            let gap = pair[0] - pair[1];
            if gap <= 0.0 {
                return Err(MpiError::ValueOutOfRange(format!(
                    "disparities not strictly decreasing at plane {n}"
                )));
            }
            if (gap - step).abs() > UNIFORM_SPACING_TOLERANCE {
                return Err(MpiError::ValueOutOfRange(format!(
                    "disparities not uniformly spaced at plane {n}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DensityMode {
    /// Volumetric density σ, converted to opacity through the plane gap.
    #[default]
    RawSigma,
    /// The density channel already holds opacity in `[0, 1]`.
    DirectAlpha,
}

impl DensityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DensityMode::RawSigma => "raw_sigma",
            DensityMode::DirectAlpha => "direct_alpha",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "raw_sigma" => Some(DensityMode::RawSigma),
            "direct_alpha" => Some(DensityMode::DirectAlpha),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub color: ImageBuffer,
    pub density: ScalarMap,
}

/// The multiplane image: N planes ordered nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneStack {
    spec: PlaneSpec,
    planes: Vec<Plane>,
    density_mode: DensityMode,
}

impl PlaneStack {
    pub fn new(spec: PlaneSpec, planes: Vec<Plane>, density_mode: DensityMode) -> Result<Self> {
        let stack = Self {
            spec,
            planes,
            density_mode,
        };
        stack.validate()?;
        Ok(stack)
    }

    pub fn spec(&self) -> &PlaneSpec {
        &self.spec
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn planes_mut(&mut self) -> &mut [Plane] {
        &mut self.planes
    }

    /// Crops every plane to its top-left `height×width` block.
    pub fn crop(self, height: usize, width: usize) -> Result<Self> {
        let planes = self
            .planes
            .into_iter()
            .map(|p| {
                Ok(Plane {
                    color: p.color.crop(height, width)?,
                    density: p.density.crop(height, width)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { planes, ..self })
    }

    pub fn density_mode(&self) -> DensityMode {
        self.density_mode
    }

    pub fn n_planes(&self) -> usize {
        self.planes.len()
    }

    pub fn height(&self) -> usize {
        self.planes[0].color.height()
    }

    pub fn width(&self) -> usize {
        self.planes[0].color.width()
    }
}

impl Validate for PlaneStack {
    fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.planes.len() != self.spec.n_planes() {
            return Err(MpiError::DimensionMismatch(format!(
                "stack has {} planes, spec declares {}",
                self.planes.len(),
                self.spec.n_planes()
            )));
        }
        let (h, w) = (self.planes[0].color.height(), self.planes[0].color.width());
        for (n, plane) in self.planes.iter().enumerate() {
            plane.color.validate()?;
            plane.density.validate()?;
            if plane.color.channels() != 3 {
                return Err(MpiError::DimensionMismatch(format!(
                    "plane {n} color has {} channels, expected 3",
                    plane.color.channels()
                )));
            }
            if plane.color.height() != h
                || plane.color.width() != w
                || plane.density.height() != h
                || plane.density.width() != w
            {
                return Err(MpiError::DimensionMismatch(format!(
                    "plane {n} is not {h}x{w}"
                )));
            }
            match self.density_mode {
                DensityMode::DirectAlpha => check_unit_range("alpha", plane.density.data())?,
                DensityMode::RawSigma => {
                    if let Some(i) = plane.density.data().iter().position(|&s| s < 0.0) {
                        return Err(MpiError::ValueOutOfRange(format!(
                            "plane {n} density[{i}] is negative"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-pixel plane weights stored H×W×N, summing to one at every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignMasks {
    height: usize,
    width: usize,
    n_planes: usize,
    weights: Vec<f32>,
}

impl AssignMasks {
    pub fn new(height: usize, width: usize, n_planes: usize, weights: Vec<f32>) -> Result<Self> {
        let masks = Self {
            height,
            width,
            n_planes,
            weights,
        };
        masks.validate()?;
        Ok(masks)
    }

    pub(crate) fn from_raw(
        height: usize,
        width: usize,
        n_planes: usize,
        weights: Vec<f32>,
    ) -> Self {
        debug_assert_eq!(weights.len(), height * width * n_planes);
        Self {
            height,
            width,
            n_planes,
            weights,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_planes(&self) -> usize {
        self.n_planes
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f32] {
        &mut self.weights
    }

    pub fn get(&self, y: usize, x: usize, n: usize) -> f32 {
        self.weights[(y * self.width + x) * self.n_planes + n]
    }

    /// Weights of all planes at one pixel.
    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let start = (y * self.width + x) * self.n_planes;
        &self.weights[start..start + self.n_planes]
    }

    /// Plane `n` as an H×W map.
    pub fn plane(&self, n: usize) -> ScalarMap {
        let data = self
            .weights
            .iter()
            .skip(n)
            .step_by(self.n_planes)
            .copied()
            .collect();
        ScalarMap::from_raw(self.height, self.width, data)
    }
}

impl Validate for AssignMasks {
    fn validate(&self) -> Result<()> {
        check_dims("masks", self.height, self.width)?;
        if self.n_planes == 0 {
            return Err(MpiError::ZeroDimension("masks have 0 planes".into()));
        }
        check_len(
            "masks",
            self.weights.len(),
            self.height * self.width * self.n_planes,
        )?;
        check_finite("masks", &self.weights)?;
        for (p, px) in self.weights.chunks_exact(self.n_planes).enumerate() {
            if let Some(n) = px.iter().position(|&m| m < 0.0) {
                return Err(MpiError::ValueOutOfRange(format!(
                    "mask weight for plane {n} at pixel {p} is negative"
                )));
            }
            let sum: f32 = px.iter().sum();
            if (sum - 1.0).abs() > MASK_SUM_TOLERANCE {
                return Err(MpiError::ValueOutOfRange(format!(
                    "mask weights at pixel {p} sum to {sum}"
                )));
            }
        }
        Ok(())
    }
}

/// Which view is synthesized from which.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    /// Source is the left view, target the right view: content moves left.
    #[default]
    LeftToRight,
    RightToLeft,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::LeftToRight => -1.0,
            Direction::RightToLeft => 1.0,
        }
    }
}

pub type Matrix3 = [[f64; 3]; 3];

/// Horizontal-baseline stereo rig.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    pub focal_px: f64,
    pub baseline: f64,
    /// `focal_px * baseline`: pixel shift of a plane at unit disparity.
    pub shift_scale: f64,
    pub direction: Direction,
    pub intrinsics: Option<Matrix3>,
}

impl CameraRig {
    pub fn from_shift_scale(shift_scale: f64, direction: Direction) -> Result<Self> {
        let rig = Self {
            focal_px: 1.0,
            baseline: shift_scale,
            shift_scale,
            direction,
            intrinsics: None,
        };
        rig.validate()?;
        Ok(rig)
    }

    /// Shift scale chosen so that a plane at `d_max` moves by `max_disparity_px`.
    pub fn from_max_disparity(
        max_disparity_px: f64,
        d_max: f64,
        direction: Direction,
    ) -> Result<Self> {
        if d_max <= 0.0 {
            return Err(MpiError::ValueOutOfRange(format!("d_max = {d_max}")));
        }
        Self::from_shift_scale(max_disparity_px / d_max, direction)
    }

    pub fn with_intrinsics(k: Matrix3, baseline: f64, direction: Direction) -> Result<Self> {
        let focal_px = k[0][0];
        let rig = Self {
            focal_px,
            baseline,
            shift_scale: focal_px * baseline,
            direction,
            intrinsics: Some(k),
        };
        rig.validate()?;
        Ok(rig)
    }
}

impl Validate for CameraRig {
    fn validate(&self) -> Result<()> {
        if !self.shift_scale.is_finite() || !self.baseline.is_finite() {
            return Err(MpiError::NonFinite("camera rig".into()));
        }
        if self.shift_scale < 0.0 {
            return Err(MpiError::ValueOutOfRange(format!(
                "shift_scale = {} is negative",
                self.shift_scale
            )));
        }
        if self.intrinsics.is_some() && self.focal_px <= 0.0 {
            return Err(MpiError::ValueOutOfRange(format!(
                "focal_px = {} must be positive",
                self.focal_px
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn crop_keeps_top_left_block() {
        let img =
            ImageBuffer::from_fn(4, 5, 3, |y, x, c| (y * 100 + x * 10 + c) as f32 / 500.0).unwrap();
        let narrow = img.clone().crop(3, 2).unwrap();
        assert_eq!(narrow.dims(), (3, 2, 3));
        for y in 0..3 {
            for x in 0..2 {
                assert_eq!(narrow.pixel(y, x), img.pixel(y, x));
            }
        }
        let short = img.clone().crop(2, 5).unwrap();
        assert_eq!(short.data(), &img.data()[..2 * 5 * 3]);
        assert!(img.crop(5, 5).is_err());
        let map = ScalarMap::new(2, 3, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(map.crop(2, 2).unwrap().data(), &[0.0, 1.0, 3.0, 4.0]);
    }

    #[test]
    fn constant_image_is_valid() {
        let img = ImageBuffer::filled(2, 2, 3, 0.5).unwrap();
        assert!(img.validate().is_ok());
    }

    #[test]
    fn nan_is_reported_as_non_finite() {
        let mut img = ImageBuffer::filled(2, 2, 3, 0.5).unwrap();
        img.data_mut()[4] = f32::NAN;
        assert!(matches!(img.validate(), Err(MpiError::NonFinite(_))));
        assert!(matches!(
            ImageBuffer::new(2, 2, 3, vec![f32::NAN; 12]),
            Err(MpiError::NonFinite(_))
        ));
    }

    #[test]
    fn clamped_constructor_pulls_values_into_range() {
        let img = ImageBuffer::from_vec_clamped(1, 2, 1, vec![-0.5, 1.5]).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
        assert!(matches!(
            ImageBuffer::new(1, 2, 1, vec![-0.5, 1.5]),
            Err(MpiError::ValueOutOfRange(_))
        ));
    }

    #[test]
    fn wrong_length_is_dimension_mismatch() {
        assert!(matches!(
            ImageBuffer::new(2, 2, 3, vec![0.0; 11]),
            Err(MpiError::DimensionMismatch(_))
        ));
        assert!(matches!(
            ImageBuffer::new(2, 2, 2, vec![0.0; 8]),
            Err(MpiError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn masks_summing_to_point_nine_are_rejected() {
        let weights = vec![0.45, 0.45, 0.5, 0.5];
        assert!(matches!(
            AssignMasks::new(1, 2, 2, weights),
            Err(MpiError::ValueOutOfRange(_))
        ));
        assert!(AssignMasks::new(1, 2, 2, vec![0.5, 0.5, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn plane_spec_rejects_non_uniform_and_unsorted() {
        assert!(PlaneSpec::from_disparities(vec![1.0, 0.5, 0.0]).is_ok());
        assert!(PlaneSpec::from_disparities(vec![1.0, 0.4, 0.0]).is_err());
        assert!(PlaneSpec::from_disparities(vec![0.0, 1.0]).is_err());
        assert!(PlaneSpec::from_disparities(vec![1.0]).is_err());
    }

    #[test]
    fn stack_plane_count_must_match_spec() {
        let spec = PlaneSpec::from_disparities(vec![1.0, 0.0]).unwrap();
        let plane = Plane {
            color: ImageBuffer::filled(2, 2, 3, 0.1).unwrap(),
            density: ScalarMap::filled(2, 2, 1.0).unwrap(),
        };
        assert!(
            PlaneStack::new(spec.clone(), vec![plane.clone()], DensityMode::DirectAlpha).is_err()
        );
        let stack = PlaneStack::new(spec, vec![plane.clone(), plane], DensityMode::DirectAlpha);
        assert!(stack.is_ok());
    }

    #[test]
    fn direct_alpha_stack_rejects_alpha_above_one() {
        let spec = PlaneSpec::from_disparities(vec![1.0, 0.0]).unwrap();
        let plane = Plane {
            color: ImageBuffer::filled(1, 1, 3, 0.1).unwrap(),
            density: ScalarMap::filled(1, 1, 2.0).unwrap(),
        };
        let planes = vec![plane.clone(), plane];
        assert!(PlaneStack::new(spec.clone(), planes.clone(), DensityMode::DirectAlpha).is_err());
        assert!(PlaneStack::new(spec, planes, DensityMode::RawSigma).is_ok());
    }

    #[test]
    fn rig_rejects_negative_shift_scale() {
        assert!(CameraRig::from_shift_scale(-1.0, Direction::LeftToRight).is_err());
        let rig = CameraRig::from_max_disparity(8.0, 0.5, Direction::LeftToRight).unwrap();
        assert_eq!(rig.shift_scale, 16.0);
    }

    proptest! {
        #[test]
        fn constructors_produce_valid_buffers(
            h in 1usize..6, w in 1usize..6, c in prop::sample::select(vec![1usize, 3, 4]),
            seed in prop::collection::vec(-2.0f32..2.0, 150),
        ) {
            let img = ImageBuffer::from_fn(h, w, c, |y, x, ch| seed[(y * w + x) * c + ch]).unwrap();
            prop_assert!(img.validate().is_ok());
            let depth = DepthMap::from_fn(h, w, |y, x| seed[y * w + x].abs().min(1.0)).unwrap();
            prop_assert!(depth.validate().is_ok());
        }
    }
}
