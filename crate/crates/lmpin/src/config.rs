use mpi_stereo_core::{make_plane_spec, PlaneSpec};

use crate::error::{LmpinError, Result};

/// Channel multipliers of the semantic branch, stem first.
pub const SEMANTIC_PLAN: [usize; 6] = [1, 2, 3, 4, 6, 8];

/// Number of stride-2 stages in the semantic branch.
pub const SEMANTIC_DOWNSAMPLES: usize = 5;

/// Convolution kernel size used throughout.
pub const KERNEL: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub base_channels: usize,
    pub detail_downsamples: usize,
    pub semantic_downsamples: usize,
    pub n_planes: usize,
    pub input_h: usize,
    pub input_w: usize,
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            base_channels: 32,
            detail_downsamples: 2,
            semantic_downsamples: SEMANTIC_DOWNSAMPLES,
            n_planes: 16,
            input_h: 256,
            input_w: 384,
            d_min: 0.0,
            d_max: 1.0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LmpinError::InvalidConfig(msg));
        if self.base_channels == 0 {
            return bad("base_channels must be positive".into());
        }
        if self.semantic_downsamples != SEMANTIC_DOWNSAMPLES {
            return bad(format!(
                "semantic_downsamples must be {SEMANTIC_DOWNSAMPLES}, got {}",
                self.semantic_downsamples
            ));
        }
        if self.detail_downsamples == 0 || self.detail_downsamples > SEMANTIC_DOWNSAMPLES {
            return bad(format!(
                "detail_downsamples must be in 1..={SEMANTIC_DOWNSAMPLES}, got {}",
                self.detail_downsamples
            ));
        }
        let unit = 1 << SEMANTIC_DOWNSAMPLES;
        if self.input_h == 0
            || self.input_w == 0
            || self.input_h % unit != 0
            || self.input_w % unit != 0
        {
            return bad(format!(
                "input {}x{} must be a positive multiple of {unit}",
                self.input_h, self.input_w
            ));
        }
        if self.n_planes < 2 {
            return bad(format!(
                "n_planes must be at least 2, got {}",
                self.n_planes
            ));
        }
        self.plane_spec()?;
        Ok(())
    }

    pub fn plane_spec(&self) -> Result<PlaneSpec> {
        Ok(make_plane_spec(self.n_planes, self.d_min, self.d_max)?)
    }

    /// Channels of detail encoder stage `i`.
    pub fn detail_channels(&self, i: usize) -> usize {
        self.base_channels << i
    }

    /// Channels of F_d.
    pub fn fd_channels(&self) -> usize {
        self.detail_channels(self.detail_downsamples - 1)
    }

    pub fn semantic_channels(&self, i: usize) -> usize {
        self.base_channels * SEMANTIC_PLAN[i]
    }

    /// Channels of F_c.
    pub fn fc_channels(&self) -> usize {
        self.semantic_channels(SEMANTIC_DOWNSAMPLES)
    }

    /// `(height, width)` of F_d.
    pub fn fd_size(&self) -> (usize, usize) {
        let f = 1 << self.detail_downsamples;
        (self.input_h / f, self.input_w / f)
    }

    /// `(height, width)` of F_c.
    pub fn fc_size(&self) -> (usize, usize) {
        let f = 1 << SEMANTIC_DOWNSAMPLES;
        (self.input_h / f, self.input_w / f)
    }

    /// `(in, out)` channels of decoder stage `k`.
    pub fn decoder_channels(&self, k: usize) -> (usize, usize) {
        let d = self.detail_downsamples;
        let out = |k: usize| self.base_channels << (d - 1).saturating_sub(k + 1);
        let cin = if k == 0 {
            self.fd_channels()
        } else {
            out(k - 1)
        };
        (cin, out(k))
    }

    /// Every tensor the network reads, with its shape. Convolution weights
    /// are `[kh, kw, c_in, c_out]`; biases are `[c_out]`.
    pub fn expected_tensors(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut conv = |name: String, k: usize, cin: usize, cout: usize| {
            out.push((format!("{name}.weight"), vec![k, k, cin, cout]));
            out.push((format!("{name}.bias"), vec![cout]));
        };
        let mut cin = 3;
        for i in 0..self.detail_downsamples {
            let c = self.detail_channels(i);
            conv(format!("detail.enc{i}.down"), KERNEL, cin, c);
            conv(format!("detail.enc{i}.conv"), KERNEL, c, c);
            cin = c;
        }
        conv("semantic.stem".into(), KERNEL, 3, self.semantic_channels(0));
        for i in 0..SEMANTIC_DOWNSAMPLES {
            let (a, b) = (self.semantic_channels(i), self.semantic_channels(i + 1));
            conv(format!("semantic.down{i}"), KERNEL, a, b);
            conv(format!("semantic.rb{i}.conv1"), KERNEL, b, b);
            conv(format!("semantic.rb{i}.conv2"), KERNEL, b, b);
        }
        let (fc, fd, b) = (self.fc_channels(), self.fd_channels(), self.base_channels);
        conv("deff.gate".into(), 1, fc, fd);
        conv("deff.proj".into(), 1, fc, fd);
        conv("mask.conv1".into(), KERNEL, fd + 1, b);
        conv("mask.conv2".into(), KERNEL, b, 1);
        conv("depth_coarse.conv1".into(), KERNEL, fc, b);
        conv("depth_coarse.conv2".into(), KERNEL, b, 1);
        conv("depth_fine.conv1".into(), KERNEL, fd, b);
        conv("depth_fine.conv2".into(), KERNEL, b, 1);
        for k in 0..self.detail_downsamples {
            let (i, o) = self.decoder_channels(k);
            conv(format!("decoder.stage{k}.conv"), KERNEL, i, o);
        }
        conv("decoder.out".into(), KERNEL, b, 4);
        out
    }
}
