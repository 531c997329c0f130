//! Reference vision encoder: one 3x3 same-padded convolution, leaky
//! ReLU, 2x2 average pooling, and a dense layer to the embedding
//! dimension. The leaky slope keeps every unit on a live gradient path.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::records::Image;

use super::{ImageShape, VisionEncoder};

const LEAKY_SLOPE: f64 = 0.01;

fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvVisionConfig {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub conv_channels: usize,
    pub output_dim: usize,
}

impl ConvVisionConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.height.is_multiple_of(2) || !self.width.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "image height and width must be even for 2x2 pooling, got {}x{}",
                self.height, self.width
            )));
        }
        if self.channels == 0 || self.conv_channels == 0 || self.output_dim == 0 {
            return Err(Error::InvalidConfig("vision dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn pooled_len(&self) -> usize {
        self.conv_channels * (self.height / 2) * (self.width / 2)
    }
}

#[derive(Debug, Clone)]
pub struct ConvVisionEncoder {
    cfg: ConvVisionConfig,
    /// [conv_channels][channels][3][3], flattened.
    pub(crate) w_conv: Vec<f64>,
    pub(crate) b_conv: Vec<f64>,
    /// [output_dim][pooled_len], flattened.
    pub(crate) w_fc: Vec<f64>,
    pub(crate) b_fc: Vec<f64>,
}

/// Per-batch activations the backward pass needs.
pub struct VisionCache {
    inputs: Vec<Image>,
    /// Pre-activation conv maps, one [F*H*W] buffer per image.
    conv_pre: Vec<Vec<f64>>,
    /// Post-activation pooled features, one [pooled_len] buffer per image.
    pooled: Vec<Vec<f64>>,
}

impl ConvVisionEncoder {
    pub fn new(cfg: ConvVisionConfig, rng: &mut ChaCha8Rng) -> Result<ConvVisionEncoder> {
        cfg.validate()?;
        let conv_fan_in = cfg.channels * 9;
        let conv_bound = (6.0 / conv_fan_in as f64).sqrt();
        let fc_fan_in = cfg.pooled_len();
        let fc_bound = (6.0 / fc_fan_in as f64).sqrt();
        let w_conv = (0..cfg.conv_channels * cfg.channels * 9)
            .map(|_| rng.gen_range(-conv_bound..conv_bound))
            .collect();
        let w_fc = (0..cfg.output_dim * fc_fan_in)
            .map(|_| rng.gen_range(-fc_bound..fc_bound))
            .collect();
        Ok(ConvVisionEncoder {
            b_conv: vec![0.0; cfg.conv_channels],
            b_fc: vec![0.0; cfg.output_dim],
            cfg,
            w_conv,
            w_fc,
        })
    }

    pub fn config(&self) -> &ConvVisionConfig {
        &self.cfg
    }

    pub fn n_params(&self) -> usize {
        self.w_conv.len() + self.b_conv.len() + self.w_fc.len() + self.b_fc.len()
    }

    fn check_shape(&self, image: &Image) -> Result<()> {
        if image.channels != self.cfg.channels
            || image.height != self.cfg.height
            || image.width != self.cfg.width
        {
            return Err(Error::ShapeMismatch {
                expected: self.input_shape().to_string(),
                got: format!("{}x{}x{}", image.channels, image.height, image.width),
            });
        }
        image.validate()
    }

    /// Forward pass for one image, optionally filling cache buffers.
    fn forward_one(
        &self,
        image: &Image,
        conv_pre_out: Option<&mut Vec<f64>>,
        pooled_out: Option<&mut Vec<f64>>,
    ) -> Vec<f64> {
        let (c_in, h, w) = (self.cfg.channels, self.cfg.height, self.cfg.width);
        let f_out = self.cfg.conv_channels;
        let mut conv_pre = vec![0.0; f_out * h * w];
        for f in 0..f_out {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = self.b_conv[f];
                    for c in 0..c_in {
                        for dy in 0..3usize {
                            let sy = y as isize + dy as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for dx in 0..3usize {
                                let sx = x as isize + dx as isize - 1;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                let wgt = self.w_conv[((f * c_in + c) * 3 + dy) * 3 + dx];
                                acc += wgt * image.get(c, sy as usize, sx as usize);
                            }
                        }
                    }
                    conv_pre[(f * h + y) * w + x] = acc;
                }
            }
        }

        let (ph, pw) = (h / 2, w / 2);
        let mut pooled = vec![0.0; f_out * ph * pw];
        for f in 0..f_out {
            for py in 0..ph {
                for px in 0..pw {
                    let mut acc = 0.0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let v = conv_pre[(f * h + 2 * py + dy) * w + 2 * px + dx];
                            acc += leaky(v);
                        }
                    }
                    pooled[(f * ph + py) * pw + px] = acc / 4.0;
                }
            }
        }

        let mut out = vec![0.0; self.cfg.output_dim];
        let k = pooled.len();
        for (d, o) in out.iter_mut().enumerate() {
            let row = &self.w_fc[d * k..(d + 1) * k];
            *o = self.b_fc[d] + crate::mat::dot(row, &pooled);
        }

        if let Some(buf) = conv_pre_out {
            *buf = conv_pre;
        }
        if let Some(buf) = pooled_out {
            *buf = pooled;
        }
        out
    }

    /// Batch forward retaining activations for backward.
    pub fn forward_cache(&self, images: &[Image]) -> Result<(Mat, VisionCache)> {
        let mut out = Mat::zeros(images.len(), self.cfg.output_dim);
        let mut cache = VisionCache {
            inputs: images.to_vec(),
            conv_pre: Vec::with_capacity(images.len()),
            pooled: Vec::with_capacity(images.len()),
        };
        for (i, image) in images.iter().enumerate() {
            self.check_shape(image)?;
            let mut conv_pre = Vec::new();
            let mut pooled = Vec::new();
            let row = self.forward_one(image, Some(&mut conv_pre), Some(&mut pooled));
            out.row_mut(i).copy_from_slice(&row);
            cache.conv_pre.push(conv_pre);
            cache.pooled.push(pooled);
        }
        Ok((out, cache))
    }

    /// Accumulate parameter gradients given dL/d(output).
    /// Gradient layout matches [`Self::write_params`].
    pub fn backward(&self, cache: &VisionCache, d_out: &Mat, grads: &mut [f64]) {
        let (c_in, h, w) = (self.cfg.channels, self.cfg.height, self.cfg.width);
        let f_out = self.cfg.conv_channels;
        let (ph, pw) = (h / 2, w / 2);
        let k = self.cfg.pooled_len();
        let (g_wconv, rest) = grads.split_at_mut(self.w_conv.len());
        let (g_bconv, rest) = rest.split_at_mut(self.b_conv.len());
        let (g_wfc, g_bfc) = rest.split_at_mut(self.w_fc.len());

        for i in 0..cache.inputs.len() {
            let delta = d_out.row(i);
            let pooled = &cache.pooled[i];
            let conv_pre = &cache.conv_pre[i];
            let image = &cache.inputs[i];

            // Dense layer.
            let mut d_pooled = vec![0.0; k];
            for (d, &dd) in delta.iter().enumerate() {
                if dd == 0.0 {
                    continue;
                }
                g_bfc[d] += dd;
                let row = &self.w_fc[d * k..(d + 1) * k];
                for (j, (&wgt, &p)) in row.iter().zip(pooled).enumerate() {
                    g_wfc[d * k + j] += dd * p;
                    d_pooled[j] += dd * wgt;
                }
            }

            // Average pool + leaky mask back to conv pre-activations.
            let mut d_pre = vec![0.0; f_out * h * w];
            for f in 0..f_out {
                for py in 0..ph {
                    for px in 0..pw {
                        let g = d_pooled[(f * ph + py) * pw + px] / 4.0;
                        if g == 0.0 {
                            continue;
                        }
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let idx = (f * h + 2 * py + dy) * w + 2 * px + dx;
                                let slope = if conv_pre[idx] > 0.0 { 1.0 } else { LEAKY_SLOPE };
                                d_pre[idx] += g * slope;
                            }
                        }
                    }
                }
            }

            // Convolution parameters.
            for f in 0..f_out {
                let mut db = 0.0;
                for y in 0..h {
                    for x in 0..w {
                        let g = d_pre[(f * h + y) * w + x];
                        if g == 0.0 {
                            continue;
                        }
                        db += g;
                        for c in 0..c_in {
                            for dy in 0..3usize {
                                let sy = y as isize + dy as isize - 1;
                                if sy < 0 || sy >= h as isize {
                                    continue;
                                }
                                for dx in 0..3usize {
                                    let sx = x as isize + dx as isize - 1;
                                    if sx < 0 || sx >= w as isize {
                                        continue;
                                    }
                                    g_wconv[((f * c_in + c) * 3 + dy) * 3 + dx] +=
                                        g * image.get(c, sy as usize, sx as usize);
                                }
                            }
                        }
                    }
                }
                g_bconv[f] += db;
            }
        }
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w_conv);
        out.extend_from_slice(&self.b_conv);
        out.extend_from_slice(&self.w_fc);
        out.extend_from_slice(&self.b_fc);
    }

    pub fn read_params<'a>(&mut self, mut src: &'a [f64]) -> &'a [f64] {
        let take = |src: &mut &'a [f64], n: usize| -> Vec<f64> {
            let (head, tail) = src.split_at(n);
            *src = tail;
            head.to_vec()
        };
        self.w_conv = take(&mut src, self.w_conv.len());
        self.b_conv = take(&mut src, self.b_conv.len());
        self.w_fc = take(&mut src, self.w_fc.len());
        self.b_fc = take(&mut src, self.b_fc.len());
        src
    }
}

impl VisionEncoder for ConvVisionEncoder {
    fn output_dim(&self) -> usize {
        self.cfg.output_dim
    }

    fn input_shape(&self) -> ImageShape {
        ImageShape {
            channels: self.cfg.channels,
            height: self.cfg.height,
            width: self.cfg.width,
        }
    }

    fn encode_image(&self, image: &Image) -> Result<Vec<f64>> {
        self.check_shape(image)?;
        Ok(self.forward_one(image, None, None))
    }
}
