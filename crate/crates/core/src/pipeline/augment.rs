//! Training-time image augmentation: resize, random crop, horizontal
//! flip, brightness/contrast jitter, random affine, clamp.
//!
//! The rng draw order is fixed (crop y, crop x, flip, brightness,
//! contrast, rotation, translate x, translate y, scale); degenerate
//! ranges draw nothing, so a given spec always consumes the stream the
//! same way and outputs are bit-identical for a given rng state.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::Image;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub resize_to: usize,
    pub crop_to: usize,
    pub hflip_prob: f64,
    pub jitter_range: (f64, f64),
    pub affine_degrees: (f64, f64),
    pub max_translate: f64,
    pub affine_scale: (f64, f64),
}

impl Default for AugmentationSpec {
    /// The full-scale recipe: 256 resize, 224 crop, 0.5 flip, jitter in
    /// [0.8, 1.2], rotation in [-10, 10] degrees, translate up to 0.0625,
    /// scale in [0.8, 1.1].
    fn default() -> AugmentationSpec {
        AugmentationSpec {
            resize_to: 256,
            crop_to: 224,
            hflip_prob: 0.5,
            jitter_range: (0.8, 1.2),
            affine_degrees: (-10.0, 10.0),
            max_translate: 0.0625,
            affine_scale: (0.8, 1.1),
        }
    }
}

impl AugmentationSpec {
    /// Same recipe proportions at another crop size (resize keeps the
    /// 8:7 resize-to-crop ratio).
    pub fn scaled_to(crop_to: usize) -> AugmentationSpec {
        AugmentationSpec {
            resize_to: (crop_to * 8).div_ceil(7),
            crop_to,
            ..AugmentationSpec::default()
        }
    }

    /// No-op pipeline at a fixed size.
    pub fn identity(size: usize) -> AugmentationSpec {
        AugmentationSpec {
            resize_to: size,
            crop_to: size,
            hflip_prob: 0.0,
            jitter_range: (1.0, 1.0),
            affine_degrees: (0.0, 0.0),
            max_translate: 0.0,
            affine_scale: (1.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop_to > self.resize_to {
            return Err(Error::InvalidConfig(format!(
                "crop_to {} exceeds resize_to {}",
                self.crop_to, self.resize_to
            )));
        }
        if self.crop_to == 0 {
            return Err(Error::InvalidConfig("crop_to must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::InvalidConfig(format!(
                "hflip_prob must lie in [0,1], got {}",
                self.hflip_prob
            )));
        }
        for (name, (lo, hi)) in [
            ("jitter_range", self.jitter_range),
            ("affine_degrees", self.affine_degrees),
            ("affine_scale", self.affine_scale),
        ] {
            if lo > hi {
                return Err(Error::InvalidConfig(format!("{name} is not ordered: ({lo}, {hi})")));
            }
        }
        if self.max_translate < 0.0 {
            return Err(Error::InvalidConfig("max_translate must be non-negative".into()));
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Apply the pipeline. Output is `crop_to` square with values clamped to
/// [0, 1]; deterministic given the rng state.
pub fn augment(image: &Image, spec: &AugmentationSpec, rng: &mut ChaCha8Rng) -> Image {
    let resized = resize_bilinear(image, spec.resize_to, spec.resize_to);

    // Random crop.
    let margin = spec.resize_to - spec.crop_to;
    let (oy, ox) = if margin > 0 {
        (rng.gen_range(0..=margin), rng.gen_range(0..=margin))
    } else {
        (0, 0)
    };
    let mut out = crop(&resized, oy, ox, spec.crop_to);

    if spec.hflip_prob > 0.0 && rng.gen_bool(spec.hflip_prob) {
        out = hflip(&out);
    }

    let brightness = draw(rng, spec.jitter_range);
    let contrast = draw(rng, spec.jitter_range);
    if brightness != 1.0 || contrast != 1.0 {
        jitter(&mut out, brightness, contrast);
    }

    let degrees = draw(rng, spec.affine_degrees);
    let (tx, ty) = if spec.max_translate > 0.0 {
        let limit = spec.max_translate * spec.crop_to as f64;
        (rng.gen_range(-limit..limit), rng.gen_range(-limit..limit))
    } else {
        (0.0, 0.0)
    };
    let scale = draw(rng, spec.affine_scale);
    if degrees != 0.0 || tx != 0.0 || ty != 0.0 || scale != 1.0 {
        out = affine(&out, degrees.to_radians(), tx, ty, scale);
    }

    for v in &mut out.data {
        *v = v.clamp(0.0, 1.0);
    }
    out
}

fn resize_bilinear(image: &Image, new_h: usize, new_w: usize) -> Image {
    if image.height == new_h && image.width == new_w {
        return image.clone();
    }
    let mut out = Image::zeros(image.channels, new_h, new_w);
    let sy = image.height as f64 / new_h as f64;
    let sx = image.width as f64 / new_w as f64;
    for c in 0..image.channels {
        for y in 0..new_h {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (image.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(image.height - 1);
            let wy = fy - y0 as f64;
            for x in 0..new_w {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (image.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(image.width - 1);
                let wx = fx - x0 as f64;
                let v = image.get(c, y0, x0) * (1.0 - wy) * (1.0 - wx)
                    + image.get(c, y0, x1) * (1.0 - wy) * wx
                    + image.get(c, y1, x0) * wy * (1.0 - wx)
                    + image.get(c, y1, x1) * wy * wx;
                out.set(c, y, x, v);
            }
        }
    }
    out
}

fn crop(image: &Image, oy: usize, ox: usize, size: usize) -> Image {
    let mut out = Image::zeros(image.channels, size, size);
    for c in 0..image.channels {
        for y in 0..size {
            for x in 0..size {
                out.set(c, y, x, image.get(c, oy + y, ox + x));
            }
        }
    }
    out
}

fn hflip(image: &Image) -> Image {
    let mut out = image.clone();
    for c in 0..image.channels {
        for y in 0..image.height {
            for x in 0..image.width {
                out.set(c, y, x, image.get(c, y, image.width - 1 - x));
            }
        }
    }
    out
}

fn jitter(image: &mut Image, brightness: f64, contrast: f64) {
    let mean = image.data.iter().sum::<f64>() / image.data.len() as f64;
    let mean = mean * brightness;
    for v in &mut image.data {
        let b = *v * brightness;
        *v = mean + (b - mean) * contrast;
    }
}

/// Rotate/scale about the center, then translate; bilinear sampling with
/// zero fill outside the frame.
fn affine(image: &Image, theta: f64, tx: f64, ty: f64, scale: f64) -> Image {
    let mut out = Image::zeros(image.channels, image.height, image.width);
    let cy = (image.height as f64 - 1.0) / 2.0;
    let cx = (image.width as f64 - 1.0) / 2.0;
    let cos = theta.cos();
    let sin = theta.sin();
    for c in 0..image.channels {
        for y in 0..image.height {
            for x in 0..image.width {
                // Invert: undo translation, then rotation and scale.
                let dy = (y as f64 - cy - ty) / scale;
                let dx = (x as f64 - cx - tx) / scale;
                let src_y = cy + (sin * dx + cos * dy);
                let src_x = cx + (cos * dx - sin * dy);
                out.set(c, y, x, sample_bilinear(image, c, src_y, src_x));
            }
        }
    }
    out
}

fn sample_bilinear(image: &Image, c: usize, y: f64, x: f64) -> f64 {
    if y < -1.0 || x < -1.0 || y > image.height as f64 || x > image.width as f64 {
        return 0.0;
    }
    let y0 = y.floor();
    let x0 = x.floor();
    let wy = y - y0;
    let wx = x - x0;
    let mut acc = 0.0;
    for (dy, wy) in [(0.0, 1.0 - wy), (1.0, wy)] {
        for (dx, wx) in [(0.0, 1.0 - wx), (1.0, wx)] {
            let sy = y0 + dy;
            let sx = x0 + dx;
            if sy >= 0.0 && sx >= 0.0 && sy < image.height as f64 && sx < image.width as f64 {
                acc += wy * wx * image.get(c, sy as usize, sx as usize);
            }
        }
    }
    acc
}
