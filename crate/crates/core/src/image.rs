//! Planar floating-point images and the resampling operators used by the
//! cascade: box downsampling, half-pixel bilinear upsampling and min pooling.
//!
//! Samples are stored row-major with channels interleaved (channel-fastest).
//! Nominal range is `[0, 1]`, linear light. Every constructor rejects
//! non-finite samples, and every operation here maps finite inputs to finite
//! outputs.
//!
//! Dimensions that are not divisible by a pooling factor are padded by edge
//! replication, so an `n`-wide image pooled by `f` is `ceil(n / f)` wide.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ImageF {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageF {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        check_shape(width, height, channels)?;
        if data.len() != width * height * channels {
            return Err(Error::mismatch(format!(
                "{}x{}x{} image needs {} samples, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        check_shape(width, height, channels)?;
        if !value.is_finite() {
            return Err(Error::invalid("fill value must be finite"));
        }
        Ok(Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        })
    }

    /// Builds an image by evaluating `f(x, y, channel)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        check_shape(width, height, channels)?;
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    /// Callers guarantee the shape and finiteness invariants.
    pub(crate) fn from_parts(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &ImageF) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn same_dims(&self, other: &ImageF) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Copies out a single channel as a one-channel image.
    pub fn channel(&self, c: usize) -> Result<ImageF> {
        if c >= self.channels {
            return Err(Error::invalid(format!(
                "channel {c} out of range for {}-channel image",
                self.channels
            )));
        }
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Ok(ImageF::from_parts(self.width, self.height, 1, data))
    }

    /// Replicates a single-channel image into `channels` identical channels.
    pub fn broadcast(&self, channels: usize) -> Result<ImageF> {
        if self.channels == channels {
            return Ok(self.clone());
        }
        if self.channels != 1 || channels == 0 {
            return Err(Error::mismatch(format!(
                "cannot broadcast {} channels to {channels}",
                self.channels
            )));
        }
        let data = self
            .data
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, channels))
            .collect();
        Ok(ImageF::from_parts(self.width, self.height, channels, data))
    }

    /// Top-left `width` x `height` window.
    pub fn crop(&self, width: usize, height: usize) -> Result<ImageF> {
        if width == 0 || height == 0 || width > self.width || height > self.height {
            return Err(Error::invalid(format!(
                "crop {width}x{height} outside {}x{}",
                self.width, self.height
            )));
        }
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let row = self.width * self.channels;
        let mut data = Vec::with_capacity(width * height * self.channels);
        for y in 0..height {
            data.extend_from_slice(&self.data[y * row..y * row + width * self.channels]);
        }
        Ok(ImageF::from_parts(width, height, self.channels, data))
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Sum of every sample, accumulated in f64.
    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Same image with every sample clamped into `[0, 1]`.
    pub fn clamped_unit(&self) -> ImageF {
        let data = self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        ImageF::from_parts(self.width, self.height, self.channels, data)
    }
}

fn check_shape(width: usize, height: usize, channels: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!("image must be at least 1x1, got {width}x{height}")));
    }
    if channels == 0 {
        return Err(Error::invalid("image needs at least one channel"));
    }
    Ok(())
}

pub(crate) fn check_pow2(factor: usize) -> Result<()> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(Error::invalid(format!("factor must be a power of two, got {factor}")));
    }
    Ok(())
}

/// Block dims after padding by edge replication.
#[inline]
pub(crate) fn pooled_len(n: usize, factor: usize) -> usize {
    n.div_ceil(factor)
}

/// Mean over each `factor` x `factor` block; output is `ceil(dims / factor)`.
pub fn downsample_box(img: &ImageF, factor: usize) -> Result<ImageF> {
    check_pow2(factor)?;
    if factor == 1 {
        return Ok(img.clone());
    }
    let (w, h, ch) = (img.width, img.height, img.channels);
    let (ow, oh) = (pooled_len(w, factor), pooled_len(h, factor));
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = vec![0.0f32; ow * oh * ch];
    out.par_chunks_mut(ow * ch).enumerate().for_each(|(oy, row)| {
        let mut acc = vec![0.0f64; ch];
        for ox in 0..ow {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for dy in 0..factor {
                let sy = (oy * factor + dy).min(h - 1);
                for dx in 0..factor {
                    let sx = (ox * factor + dx).min(w - 1);
                    for (a, &v) in acc.iter_mut().zip(img.pixel(sx, sy)) {
                        *a += v as f64;
                    }
                }
            }
            for (o, a) in row[ox * ch..(ox + 1) * ch].iter_mut().zip(&acc) {
                *o = (a * norm) as f32;
            }
        }
    });
    Ok(ImageF::from_parts(ow, oh, ch, out))
}

/// Bilinear upsampling with half-pixel-aligned sample centers.
pub fn upsample_bilinear(img: &ImageF, factor: usize) -> Result<ImageF> {
    if factor == 0 {
        return Err(Error::invalid("upsampling factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    Ok(upsample_to(img, factor, img.width * factor, img.height * factor))
}

struct Tap {
    i0: usize,
    i1: usize,
    t: f64,
}

fn taps(src: usize, factor: usize, out: usize) -> Vec<Tap> {
    let f = factor as f64;
    let max = (src - 1) as f64;
    (0..out)
        .map(|o| {
            let s = ((o as f64 + 0.5) / f - 0.5).clamp(0.0, max);
            let i0 = s.floor() as usize;
            Tap {
                i0,
                i1: (i0 + 1).min(src - 1),
                t: s - i0 as f64,
            }
        })
        .collect()
}

/// Bilinear upsampling by `factor`, cropped to `out_w` x `out_h`.
///
/// Cropping keeps the top-left alignment, which is how padded cascade levels
/// map back onto the finer grid.
pub(crate) fn upsample_to(img: &ImageF, factor: usize, out_w: usize, out_h: usize) -> ImageF {
    debug_assert!(out_w <= img.width * factor && out_h <= img.height * factor);
    let ch = img.channels;
    let xs = taps(img.width, factor, out_w);
    let ys = taps(img.height, factor, out_h);
    let mut out = vec![0.0f32; out_w * out_h * ch];
    out.par_chunks_mut(out_w * ch).zip(ys.par_iter()).for_each(|(row, ty)| {
        for (ox, tx) in xs.iter().enumerate() {
            let p00 = img.pixel(tx.i0, ty.i0);
            let p01 = img.pixel(tx.i1, ty.i0);
            let p10 = img.pixel(tx.i0, ty.i1);
            let p11 = img.pixel(tx.i1, ty.i1);
            for c in 0..ch {
                let top = p00[c] as f64 * (1.0 - tx.t) + p01[c] as f64 * tx.t;
                let bottom = p10[c] as f64 * (1.0 - tx.t) + p11[c] as f64 * tx.t;
                row[ox * ch + c] = (top * (1.0 - ty.t) + bottom * ty.t) as f32;
            }
        }
    });
    ImageF::from_parts(out_w, out_h, ch, out)
}

/// Minimum over each `factor` x `factor` block, per channel.
pub fn min_pool(field: &ImageF, factor: usize) -> Result<ImageF> {
    check_pow2(factor)?;
    if factor == 1 {
        return Ok(field.clone());
    }
    let (ow, oh) = (pooled_len(field.width, factor), pooled_len(field.height, factor));
    let data = min_pool_plane(&field.data, field.width, field.height, field.channels, factor);
    Ok(ImageF::from_parts(ow, oh, field.channels, data))
}

/// Block minimum over an interleaved `w` x `h` x `ch` buffer. Edge
/// replication padding never changes a minimum, so partial blocks just
/// clamp to the buffer.
pub(crate) fn min_pool_plane<T: Copy + PartialOrd>(
    data: &[T],
    w: usize,
    h: usize,
    ch: usize,
    factor: usize,
) -> Vec<T> {
    let (ow, oh) = (pooled_len(w, factor), pooled_len(h, factor));
    let mut out = Vec::with_capacity(ow * oh * ch);
    for oy in 0..oh {
        let row_start = out.len();
        // seed each block with its top-left sample
        for ox in 0..ow {
            let i = (oy * factor * w + ox * factor) * ch;
            out.extend_from_slice(&data[i..i + ch]);
        }
        let row = &mut out[row_start..];
        for sy in oy * factor..((oy + 1) * factor).min(h) {
            for sx in 0..w {
                let ox = sx / factor;
                let src = &data[(sy * w + sx) * ch..(sy * w + sx + 1) * ch];
                for (o, &v) in row[ox * ch..(ox + 1) * ch].iter_mut().zip(src) {
                    if v < *o {
                        *o = v;
                    }
                }
            }
        }
    }
    out
}

/// Element-wise product. `b` may be single-channel, in which case it is
/// broadcast across the channels of `a`.
pub fn multiply(a: &ImageF, b: &ImageF) -> Result<ImageF> {
    if !a.same_dims(b) {
        return Err(Error::mismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let data = if a.channels == b.channels {
        a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect()
    } else if b.channels == 1 {
        a.data
            .chunks(a.channels)
            .zip(&b.data)
            .flat_map(|(px, &s)| px.iter().map(move |v| v * s))
            .collect()
    } else if a.channels == 1 {
        return multiply(b, a);
    } else {
        return Err(Error::mismatch(format!(
            "{} channels vs {} channels",
            a.channels, b.channels
        )));
    };
    Ok(ImageF::from_parts(a.width, a.height, a.channels.max(b.channels), data))
}
