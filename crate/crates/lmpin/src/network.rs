//! The forward graph: detail encoder, depth-semantic branch, gated fusion,
//! plane mask heads, depth heads and the per-plane RGB-σ decoder.

use mpi_stereo_core::simd::dispatch;
use mpi_stereo_core::{
    exp_f32, AssignMasks, DensityMode, DepthMap, ImageBuffer, MpiError, Plane, PlaneSpec,
    PlaneStack, RowCache, RowMagnifier, ScalarMap,
};
use rayon::prelude::*;

use crate::config::{NetworkConfig, SEMANTIC_DOWNSAMPLES};
use crate::error::{LmpinError, Result};
use crate::tensor::{
    constant_channel_response, conv2d, logistic, softplus, upsample, upsample_conv_conv,
    Activation, Conv, FeatureMap,
};
use crate::weights::NetworkWeights;

/// Constant map holding one plane's disparity, appended to F_f by the mask head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneDepthChannel {
    pub height: usize,
    pub width: usize,
    pub value: f32,
}

impl PlaneDepthChannel {
    pub fn to_feature_map(&self) -> FeatureMap {
        FeatureMap::zeros(self.height, self.width, 1).map({
            let v = self.value;
            move |_| v
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Also run both depth heads.
    pub aux_depth: bool,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub stack: PlaneStack,
    pub masks: AssignMasks,
    pub d_coarse: Option<DepthMap>,
    pub d_fine: Option<DepthMap>,
}

/// A validated network: config plus matching weights.
#[derive(Debug, Clone)]
pub struct Lmpin {
    config: NetworkConfig,
    weights: NetworkWeights,
    spec: PlaneSpec,
}

fn image_features(image: &ImageBuffer) -> FeatureMap {
    let rgb = image.to_rgb();
    FeatureMap::new(rgb.height(), rgb.width(), 3, rgb.into_data()).expect("image data is finite")
}

/// `x + conv2(relu(conv1(x)))`
pub fn residual_block(x: &FeatureMap, conv1: &Conv, conv2: &Conv) -> FeatureMap {
    let inner = conv2d(
        &conv2d(x, conv1, Activation::Relu),
        conv2,
        Activation::Identity,
    );
    let data = x
        .data()
        .iter()
        .zip(inner.data())
        .map(|(a, b)| a + b)
        .collect();
    FeatureMap::new(x.height(), x.width(), x.channels(), data).expect("finite residual")
}

impl Lmpin {
    pub fn new(config: NetworkConfig, weights: NetworkWeights) -> Result<Self> {
        weights.validate(&config)?;
        let spec = config.plane_spec()?;
        Ok(Self {
            config,
            weights,
            spec,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn weights(&self) -> &NetworkWeights {
        &self.weights
    }

    pub fn plane_spec(&self) -> &PlaneSpec {
        &self.spec
    }

    fn conv(&self, name: &str, stride: usize) -> Conv<'_> {
        self.weights
            .conv(name, stride)
            .expect("weights validated at construction")
    }

    fn check_input(&self, image: &ImageBuffer) -> Result<()> {
        let (h, w) = (self.config.input_h, self.config.input_w);
        if image.height() != h || image.width() != w {
            return Err(LmpinError::ResolutionMismatch {
                expected_h: h,
                expected_w: w,
                found_h: image.height(),
                found_w: image.width(),
            });
        }
        Ok(())
    }

    /// F_d: `detail_downsamples` stride-2 stages, each followed by a 3×3 conv.
    pub fn detail_encode(&self, image: &ImageBuffer) -> Result<FeatureMap> {
        self.check_input(image)?;
        let mut x = image_features(image);
        for i in 0..self.config.detail_downsamples {
            x = conv2d(
                &x,
                &self.conv(&format!("detail.enc{i}.down"), 2),
                Activation::Relu,
            );
            x = conv2d(
                &x,
                &self.conv(&format!("detail.enc{i}.conv"), 1),
                Activation::Relu,
            );
        }
        Ok(x)
    }

    /// F_c: stem, then five stride-2 convs each followed by a residual block.
    pub fn depth_semantic(&self, image: &ImageBuffer) -> Result<FeatureMap> {
        self.check_input(image)?;
        let mut x = conv2d(
            &image_features(image),
            &self.conv("semantic.stem", 1),
            Activation::Relu,
        );
        for i in 0..SEMANTIC_DOWNSAMPLES {
            x = conv2d(
                &x,
                &self.conv(&format!("semantic.down{i}"), 2),
                Activation::Relu,
            );
            x = residual_block(
                &x,
                &self.conv(&format!("semantic.rb{i}.conv1"), 1),
                &self.conv(&format!("semantic.rb{i}.conv2"), 1),
            );
        }
        Ok(x)
    }

    /// `F_f = F_d ⊙ logistic(gate(u(F_c))) + proj(u(F_c))`.
    ///
    /// Both 1×1 projections run before the bilinear magnification, which
    /// commutes with them because interpolation weights sum to one.
    pub fn deff_fuse(&self, fd: &FeatureMap, fc: &FeatureMap) -> Result<FeatureMap> {
        let (fdh, fdw) = self.config.fd_size();
        let (fch, fcw) = self.config.fc_size();
        if fd.shape() != (fdh, fdw, self.config.fd_channels())
            || fc.shape() != (fch, fcw, self.config.fc_channels())
        {
            return Err(LmpinError::DimensionMismatch(format!(
                "F_d {:?} and F_c {:?} for this config",
                fd.shape(),
                fc.shape()
            )));
        }
        let gate = upsample(
            &conv2d(fc, &self.conv("deff.gate", 1), Activation::Identity),
            fdh,
            fdw,
        );
        let proj = upsample(
            &conv2d(fc, &self.conv("deff.proj", 1), Activation::Identity),
            fdh,
            fdw,
        );
        let data = fd
            .data()
            .par_iter()
            .zip(gate.data().par_iter())
            .zip(proj.data().par_iter())
            .map(|((&d, &g), &p)| d * logistic(g) + p)
            .collect();
        FeatureMap::new(fdh, fdw, fd.channels(), data)
    }

    /// Per-plane mask logits at F_f resolution, one single-channel map each.
    /// [`softmax_planes`] magnifies them to network resolution.
    pub fn mask_logits(&self, ff: &FeatureMap) -> Vec<FeatureMap> {
        let (h, w) = (ff.height(), ff.width());
        let conv1 = self.conv("mask.conv1", 1);
        let conv2 = self.conv("mask.conv2", 1);
        let shared = conv2d(ff, &conv1, Activation::Identity);
        let z_response = constant_channel_response(&conv1, ff.channels(), h, w);
        self.spec
            .disparities()
            .iter()
            .map(|&d| {
                let d = d as f32;
                let hidden: Vec<f32> = shared
                    .data()
                    .iter()
                    .zip(z_response.data())
                    .map(|(&s, &z)| (s + d * z).max(0.0))
                    .collect();
                let hidden =
                    FeatureMap::new(h, w, conv1.c_out, hidden).expect("finite mask features");
                conv2d(&hidden, &conv2, Activation::Identity)
            })
            .collect()
    }

    /// Softmax of the mask logits across planes.
    pub fn mask_heads(&self, ff: &FeatureMap) -> Result<AssignMasks> {
        Ok(softmax_planes(
            &self.mask_logits(ff),
            self.config.input_h,
            self.config.input_w,
        )?)
    }

    /// conv, conv, logistic, then bilinear magnification to network resolution.
    /// `prefix` is `depth_coarse` or `depth_fine`.
    pub fn depth_head(&self, f: &FeatureMap, prefix: &str) -> Result<DepthMap> {
        let x = conv2d(
            f,
            &self.weights.conv(&format!("{prefix}.conv1"), 1)?,
            Activation::Relu,
        );
        let x = conv2d(
            &x,
            &self.weights.conv(&format!("{prefix}.conv2"), 1)?,
            Activation::Identity,
        )
        .map(logistic);
        let up = upsample(&x, self.config.input_h, self.config.input_w);
        let data = up
            .into_data()
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        Ok(DepthMap::new(
            self.config.input_h,
            self.config.input_w,
            data,
        )?)
    }

    /// Context maps pooled to F_d resolution. Pooling is linear, so each
    /// mask is pooled first and the suffix sums are taken at low resolution.
    pub fn pooled_contexts(&self, masks: &AssignMasks) -> Vec<FeatureMap> {
        let f = 1 << self.config.detail_downsamples;
        let (h, w, n) = (masks.height(), masks.width(), masks.n_planes());
        let (oh, ow) = (h / f, w / f);
        let weights = masks.weights();
        let norm = 1.0 / (f * f) as f32;
        let mut pooled = vec![0.0f32; oh * ow * n];
        pooled
            .par_chunks_mut(ow * n)
            .enumerate()
            .for_each(|(oy, row)| {
                for y in oy * f..(oy + 1) * f {
                    for (ox, acc) in row.chunks_exact_mut(n).enumerate() {
                        let start = (y * w + ox * f) * n;
                        for px in weights[start..start + f * n].chunks_exact(n) {
                            for (a, &v) in acc.iter_mut().zip(px) {
                                *a += v;
                            }
                        }
                    }
                }
                row.iter_mut().for_each(|v| *v *= norm);
            });
        let mut ctx = vec![vec![0.0f32; oh * ow]; n];
        for (p, px) in pooled.chunks_exact(n).enumerate() {
            let mut acc = 0.0f64;
            for k in (0..n).rev() {
                acc += px[k] as f64;
                ctx[k][p] = acc as f32;
            }
        }
        ctx.into_iter()
            .map(|c| FeatureMap::from_raw(oh, ow, 1, c))
            .collect()
    }

    /// Decoder output before the final activations, 4 channels at network resolution.
    pub fn decode_raw(&self, fd: &FeatureMap, context: &FeatureMap) -> Result<FeatureMap> {
        let x = self.decoder_features(fd, context, self.config.detail_downsamples)?;
        Ok(conv2d(
            &x,
            &self.conv("decoder.out", 1),
            Activation::Identity,
        ))
    }

    /// Gated F_d through the first `stages` upsampling stages.
    fn decoder_features(
        &self,
        fd: &FeatureMap,
        context: &FeatureMap,
        stages: usize,
    ) -> Result<FeatureMap> {
        if context.shape() != (fd.height(), fd.width(), 1) {
            return Err(LmpinError::DimensionMismatch(format!(
                "context {:?} vs F_d {:?}",
                context.shape(),
                fd.shape()
            )));
        }
        let c = fd.channels();
        let gated: Vec<f32> = fd
            .data()
            .chunks_exact(c)
            .zip(context.data())
            .flat_map(|(px, &g)| px.iter().map(move |&v| v * g))
            .collect();
        let mut x = FeatureMap::new(fd.height(), fd.width(), c, gated)?;
        for k in 0..stages {
            x = upsample(&x, x.height() * 2, x.width() * 2);
            x = conv2d(
                &x,
                &self.conv(&format!("decoder.stage{k}.conv"), 1),
                Activation::Relu,
            );
        }
        Ok(x)
    }

    /// Runs the decoder once per plane and assembles a raw-σ stack.
    pub fn rgba_decode(&self, fd: &FeatureMap, contexts: &[FeatureMap]) -> Result<PlaneStack> {
        if contexts.len() != self.spec.n_planes() {
            return Err(LmpinError::DimensionMismatch(format!(
                "{} contexts for {} planes",
                contexts.len(),
                self.spec.n_planes()
            )));
        }
        let (h, w) = (self.config.input_h, self.config.input_w);
        let planes = contexts
            .iter()
            .map(|ctx| {
                let last = self.config.detail_downsamples - 1;
                let hidden = self.decoder_features(fd, ctx, last)?;
                let raw = upsample_conv_conv(
                    &hidden,
                    h,
                    w,
                    &self.conv(&format!("decoder.stage{last}.conv"), 1),
                    &self.conv("decoder.out", 1),
                );
                let mut color = vec![0.0f32; h * w * 3];
                let mut sigma = vec![0.0f32; h * w];
                color
                    .par_chunks_mut(w * 3)
                    .zip(sigma.par_chunks_mut(w))
                    .zip(raw.par_chunks(w * 4))
                    .for_each_init(
                        || vec![0.0f32; w * 3],
                        |rgb, ((c, s), r)| {
                            dispatch(
                                #[inline(always)]
                                || {
                                    for (o, &v) in rgb.iter_mut().zip(&r[..w * 3]) {
                                        *o = logistic(v);
                                    }
                                    for (x, px) in c.chunks_exact_mut(3).enumerate() {
                                        px[0] = rgb[x];
                                        px[1] = rgb[w + x];
                                        px[2] = rgb[2 * w + x];
                                    }
                                    for (o, &v) in s.iter_mut().zip(&r[w * 3..]) {
                                        *o = softplus(v);
                                    }
                                },
                            )
                        },
                    );
                Ok(Plane {
                    color: ImageBuffer::new(h, w, 3, color)?,
                    density: ScalarMap::new(h, w, sigma)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PlaneStack::new(
            self.spec.clone(),
            planes,
            DensityMode::RawSigma,
        )?)
    }

    /// Full graph on an image already at network resolution.
    pub fn forward(&self, image: &ImageBuffer, opts: ForwardOptions) -> Result<ForwardOutput> {
        let fd = self.detail_encode(image)?;
        let fc = self.depth_semantic(image)?;
        let ff = self.deff_fuse(&fd, &fc)?;
        let masks = self.mask_heads(&ff)?;
        let contexts = self.pooled_contexts(&masks);
        let stack = self.rgba_decode(&fd, &contexts)?;
        let (d_coarse, d_fine) = if opts.aux_depth {
            (
                Some(self.depth_head(&fc, "depth_coarse")?),
                Some(self.depth_head(&ff, "depth_fine")?),
            )
        } else {
            (None, None)
        };
        Ok(ForwardOutput {
            stack,
            masks,
            d_coarse,
            d_fine,
        })
    }
}

/// Per-pixel softmax across single-channel logit maps, each bilinearly
/// magnified to `h×w` first.
pub fn softmax_planes(
    logits: &[FeatureMap],
    h: usize,
    w: usize,
) -> mpi_stereo_core::Result<AssignMasks> {
    let n = logits.len();
    let (lh, lw) = logits.first().map_or((h, w), |l| (l.height(), l.width()));
    if let Some(bad) = logits.iter().find(|l| l.shape() != (lh, lw, 1)) {
        return Err(MpiError::DimensionMismatch(format!(
            "logit maps {:?} and {lh}x{lw}x1",
            bad.shape()
        )));
    }
    let mag = RowMagnifier::new(lh, lw, 1, h, w);
    let mut weights = vec![0.0f32; h * w * n];
    weights.par_chunks_mut(w * n).enumerate().for_each_init(
        || {
            (
                (0..n).map(|_| RowCache::new()).collect::<Vec<_>>(),
                vec![0.0f32; w],
                vec![0.0f32; w],
                vec![0.0f32; w * n],
            )
        },
        |(caches, max, sum, e), (y, out)| {
            dispatch(
                #[inline(always)]
                || {
                    max.fill(f32::NEG_INFINITY);
                    for ((l, cache), er) in logits
                        .iter()
                        .zip(caches.iter_mut())
                        .zip(e.chunks_exact_mut(w))
                    {
                        mag.row(l.data(), y, cache, er);
                        for (m, &v) in max.iter_mut().zip(er.iter()) {
                            *m = m.max(v);
                        }
                    }
                    sum.fill(0.0);
                    for er in e.chunks_exact_mut(w) {
                        for ((v, &m), s) in er.iter_mut().zip(max.iter()).zip(sum.iter_mut()) {
                            *v = exp_f32(*v - m);
                            *s += *v;
                        }
                    }
                    for (k, er) in e.chunks_exact(w).enumerate() {
                        for (x, (&v, &s)) in er.iter().zip(sum.iter()).enumerate() {
                            out[x * n + k] = v / s;
                        }
                    }
                },
            )
        },
    );
    AssignMasks::new(h, w, n, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use crate::weights::{init_weights, zero_weights};

    fn small() -> NetworkConfig {
        NetworkConfig {
            base_channels: 4,
            n_planes: 4,
            input_h: 64,
            input_w: 96,
            ..Default::default()
        }
    }

    fn test_image(h: usize, w: usize) -> ImageBuffer {
        ImageBuffer::from_fn(h, w, 3, |y, x, c| {
            ((x * 5 + y * 3 + c * 7) % 31) as f32 / 30.0
        })
        .unwrap()
    }

    fn with_tensor(weights: &NetworkWeights, name: &str, value: f32) -> NetworkWeights {
        let mut tensors = weights.tensors().clone();
        let t = tensors.get_mut(name).unwrap();
        t.data.iter_mut().for_each(|v| *v = value);
        NetworkWeights::from_tensors(tensors)
    }

    #[test]
    fn default_config_detail_shape() {
        let cfg = NetworkConfig::default();
        let net = Lmpin::new(cfg.clone(), init_weights(&cfg, 0).unwrap()).unwrap();
        let fd = net.detail_encode(&test_image(256, 384)).unwrap();
        assert_eq!(fd.shape(), (64, 96, 64));
    }

    #[test]
    fn small_config_shapes() {
        let cfg = small();
        let net = Lmpin::new(cfg.clone(), init_weights(&cfg, 0).unwrap()).unwrap();
        let img = test_image(64, 96);
        let fd = net.detail_encode(&img).unwrap();
        let fc = net.depth_semantic(&img).unwrap();
        assert_eq!(fd.shape(), (16, 24, 8));
        assert_eq!(fc.shape(), (2, 3, 32));
        let ff = net.deff_fuse(&fd, &fc).unwrap();
        assert_eq!(ff.shape(), fd.shape());
        assert!(fc.data().iter().all(|v| v.is_finite() && v.abs() < 1e6));
    }

    #[test]
    fn wrong_resolution_is_rejected() {
        let cfg = small();
        let net = Lmpin::new(cfg.clone(), zero_weights(&cfg).unwrap()).unwrap();
        assert!(matches!(
            net.detail_encode(&test_image(32, 96)),
            Err(LmpinError::ResolutionMismatch { .. })
        ));
    }

    #[test]
    fn zero_input_and_biases_give_zero_features() {
        let cfg = small();
        let net = Lmpin::new(cfg.clone(), init_weights(&cfg, 3).unwrap()).unwrap();
        let black = ImageBuffer::filled(64, 96, 3, 0.0).unwrap();
        assert!(net
            .detail_encode(&black)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn zero_residual_block_is_identity() {
        let x = FeatureMap::new(3, 4, 2, (0..24).map(|i| i as f32 - 10.0).collect()).unwrap();
        let w = vec![0.0; 9 * 2 * 2];
        let b = vec![0.0; 2];
        let conv = Conv {
            weight: &w,
            bias: &b,
            kernel: 3,
            c_in: 2,
            c_out: 2,
            stride: 1,
        };
        assert_eq!(residual_block(&x, &conv, &conv), x);
    }

    #[test]
    fn deff_pass_through_configurations() {
        let cfg = small();
        let base = init_weights(&cfg, 1).unwrap();
        let img = test_image(64, 96);

        let open = with_tensor(
            &with_tensor(&base, "deff.gate.weight", 0.0),
            "deff.gate.bias",
            100.0,
        );
        let open = with_tensor(
            &with_tensor(&open, "deff.proj.weight", 0.0),
            "deff.proj.bias",
            0.0,
        );
        let net = Lmpin::new(cfg.clone(), open).unwrap();
        let fd = net.detail_encode(&img).unwrap();
        let fc = net.depth_semantic(&img).unwrap();
        assert_eq!(net.deff_fuse(&fd, &fc).unwrap(), fd);

        let closed = with_tensor(
            &with_tensor(&base, "deff.gate.weight", 0.0),
            "deff.gate.bias",
            -100.0,
        );
        let net = Lmpin::new(cfg.clone(), closed).unwrap();
        let ff = net.deff_fuse(&fd, &fc).unwrap();
        let proj = upsample(
            &conv2d(
                &fc,
                &net.weights().conv("deff.proj", 1).unwrap(),
                Activation::Identity,
            ),
            16,
            24,
        );
        assert_eq!(ff, proj);
    }

    #[test]
    fn deff_rejects_mismatched_inputs() {
        let cfg = small();
        let net = Lmpin::new(cfg.clone(), zero_weights(&cfg).unwrap()).unwrap();
        let fd = FeatureMap::zeros(16, 24, 8);
        let fc = FeatureMap::zeros(3, 3, 32);
        assert!(matches!(
            net.deff_fuse(&fd, &fc),
            Err(LmpinError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn mask_head_matches_explicit_concatenation() {
        let cfg = small();
        let net = Lmpin::new(cfg.clone(), init_weights(&cfg, 4).unwrap()).unwrap();
        let img = test_image(64, 96);
        let ff = net
            .deff_fuse(
                &net.detail_encode(&img).unwrap(),
                &net.depth_semantic(&img).unwrap(),
            )
            .unwrap();
        let logits = net.mask_logits(&ff);
        let conv1 = net.weights().conv("mask.conv1", 1).unwrap();
        let conv2 = net.weights().conv("mask.conv2", 1).unwrap();
        for (n, &d) in net.plane_spec().disparities().iter().enumerate() {
            let z = PlaneDepthChannel {
                height: ff.height(),
                width: ff.width(),
                value: d as f32,
            }
            .to_feature_map();
            let c = ff.channels();
            let cat: Vec<f32> = ff
                .data()
                .chunks_exact(c)
                .zip(z.data())
                .flat_map(|(px, &zv)| px.iter().copied().chain(std::iter::once(zv)))
                .collect();
            let cat = FeatureMap::new(ff.height(), ff.width(), c + 1, cat).unwrap();
            let explicit = conv2d(
                &conv2d(&cat, &conv1, Activation::Relu),
                &conv2,
                Activation::Identity,
            );
            for (a, b) in explicit.data().iter().zip(logits[n].data()) {
                assert!((a - b).abs() < 1e-4, "plane {n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn softmax_preserves_argmax_and_sums_to_one() {
        let logits: Vec<FeatureMap> = (0..5)
            .map(|n| {
                FeatureMap::new(
                    2,
                    3,
                    1,
                    (0..6)
                        .map(|i| ((i * 7 + n * 13) % 11) as f32 * 0.7 - 3.0)
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let masks = softmax_planes(&logits, 2, 3).unwrap();
        for i in 0..6 {
            let (y, x) = (i / 3, i % 3);
            let px = masks.pixel(y, x);
            assert!((px.iter().sum::<f32>() - 1.0).abs() < 1e-5);
            let best_logit = (0..5)
                .max_by(|&a, &b| logits[a].data()[i].total_cmp(&logits[b].data()[i]))
                .unwrap();
            let best_mask = (0..5).max_by(|&a, &b| px[a].total_cmp(&px[b])).unwrap();
            assert_eq!(logits[best_logit].data()[i], logits[best_mask].data()[i]);
        }
        let equal = vec![FeatureMap::zeros(2, 2, 1); 4];
        assert!(softmax_planes(&equal, 2, 2)
            .unwrap()
            .weights()
            .iter()
            .all(|&v| v == 0.25));
    }

    #[test]
    fn softmax_magnifies_like_upsample() {
        let logits: Vec<FeatureMap> = (0..3)
            .map(|n| {
                FeatureMap::new(
                    3,
                    4,
                    1,
                    (0..12)
                        .map(|i| ((i * 5 + n * 3) % 7) as f32 - 3.0)
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let up: Vec<FeatureMap> = logits.iter().map(|l| upsample(l, 12, 16)).collect();
        assert_eq!(
            softmax_planes(&logits, 12, 16).unwrap(),
            softmax_planes(&up, 12, 16).unwrap()
        );
        let mixed = vec![logits[0].clone(), up[1].clone()];
        assert!(softmax_planes(&mixed, 12, 16).is_err());
    }

    #[test]
    fn zero_weight_network_is_closed_form() {
        let cfg = small();
        let net = Lmpin::new(cfg.clone(), zero_weights(&cfg).unwrap()).unwrap();
        let out = net
            .forward(&test_image(64, 96), ForwardOptions { aux_depth: true })
            .unwrap();
        assert!(out.masks.weights().iter().all(|&v| v == 0.25));
        assert!(out.d_coarse.unwrap().data().iter().all(|&v| v == 0.5));
        assert!(out.d_fine.unwrap().data().iter().all(|&v| v == 0.5));
        let ln2 = std::f32::consts::LN_2;
        for p in out.stack.planes() {
            assert!(p.density.data().iter().all(|&s| (s - ln2).abs() < 1e-7));
            assert!(p.color.data().iter().all(|&c| c == 0.5));
        }
    }

    #[test]
    fn zero_context_decodes_to_zero() {
        let cfg = small();
        let mut tensors = init_weights(&cfg, 5).unwrap().tensors().clone();
        for (name, t) in tensors.iter_mut() {
            if name.starts_with("decoder.") && name.ends_with(".bias") {
                *t = Tensor::zeros(t.shape.clone());
            }
        }
        let net = Lmpin::new(cfg.clone(), NetworkWeights::from_tensors(tensors)).unwrap();
        let fd = net.detail_encode(&test_image(64, 96)).unwrap();
        let raw = net.decode_raw(&fd, &FeatureMap::zeros(16, 24, 1)).unwrap();
        assert_eq!(raw.shape(), (64, 96, 4));
        assert!(raw.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_invariants_and_determinism() {
        let cfg = small();
        let net = Lmpin::new(cfg.clone(), init_weights(&cfg, 0).unwrap()).unwrap();
        let img = test_image(64, 96);
        let opts = ForwardOptions { aux_depth: true };
        let a = net.forward(&img, opts).unwrap();
        assert_eq!(
            (a.stack.height(), a.stack.width(), a.stack.n_planes()),
            (64, 96, 4)
        );
        assert_eq!(
            (a.masks.height(), a.masks.width(), a.masks.n_planes()),
            (64, 96, 4)
        );
        for px in a.masks.weights().chunks_exact(4) {
            assert!((px.iter().sum::<f32>() - 1.0).abs() <= 1e-5);
        }
        for p in a.stack.planes() {
            assert!(p.density.data().iter().all(|&s| s >= 0.0 && s.is_finite()));
        }
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = single.install(|| net.forward(&img, opts).unwrap());
        assert_eq!(a.stack, b.stack);
        assert_eq!(a.masks, b.masks);
        assert_eq!(a.d_coarse, b.d_coarse);
        assert_eq!(a.d_fine, b.d_fine);
    }

    #[test]
    fn aux_depth_is_optional() {
        let cfg = small();
        let net = Lmpin::new(cfg.clone(), zero_weights(&cfg).unwrap()).unwrap();
        let out = net
            .forward(&test_image(64, 96), ForwardOptions::default())
            .unwrap();
        assert!(out.d_coarse.is_none() && out.d_fine.is_none());
    }

    #[test]
    fn coarse_head_upsamples_from_semantic_resolution() {
        let cfg = NetworkConfig {
            base_channels: 2,
            ..Default::default()
        };
        let net = Lmpin::new(cfg.clone(), init_weights(&cfg, 2).unwrap()).unwrap();
        let fc = FeatureMap::zeros(8, 12, 16).map(|_| 0.3);
        let d = net.depth_head(&fc, "depth_coarse").unwrap();
        assert_eq!((d.height(), d.width()), (256, 384));
        assert!(d.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
