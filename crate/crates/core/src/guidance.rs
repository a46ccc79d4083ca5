//! Guidance features and the per-edge diffusion coefficients derived from them.
//!
//! For adjacent pixels `p` and `n` with feature vectors `g_p`, `g_n` the
//! coefficient is `kappa^2 / (kappa^2 + |g_p - g_n|^2)`: 1 on identical
//! features, falling towards 0 across strong feature edges. Coefficients are
//! stored once per undirected edge of the 4-neighbourhood graph.
//!
//! Feature maps from an external extractor travel in the GADF container:
//!
//! ```text
//! "GADF" | version u32 = 1 | height u32 | width u32 | channels u32 | kappa f32
//! payload: height * width * channels f32, row-major, channel-fastest
//! ```
//!
//! All fields little-endian, no padding.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{self, ImageF};

/// Suits RGB features in `[0, 1]`: a 0.1 step per channel gives ~0.03,
/// sensor-noise differences (~0.005) stay above 0.97.
pub const DEFAULT_KAPPA: f32 = 0.03;

#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceField {
    features: ImageF,
    kappa: f32,
}

impl GuidanceField {
    pub fn new(features: ImageF, kappa: f32) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(Self { features, kappa })
    }

    pub fn features(&self) -> &ImageF {
        &self.features
    }

    pub fn kappa(&self) -> f32 {
        self.kappa
    }

    pub fn width(&self) -> usize {
        self.features.width()
    }

    pub fn height(&self) -> usize {
        self.features.height()
    }

    pub fn with_kappa(&self, kappa: f32) -> Result<Self> {
        Self::new(self.features.clone(), kappa)
    }
}

fn check_kappa(kappa: f32) -> Result<()> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::invalid(format!("kappa must be positive and finite, got {kappa}")));
    }
    Ok(())
}

/// Coefficients on the horizontal and vertical edges of a `width` x `height`
/// pixel grid. `horizontal[y * (width - 1) + x]` joins `(x, y)` and
/// `(x + 1, y)`; `vertical[y * width + x]` joins `(x, y)` and `(x, y + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    width: usize,
    height: usize,
    horizontal: Vec<f64>,
    vertical: Vec<f64>,
}

impl CoefficientField {
    /// Hand-built fields may use any value in `[0, 1]`, including the fully
    /// blocking 0 that `build_coefficients` never produces.
    pub fn from_parts(
        width: usize,
        height: usize,
        horizontal: Vec<f64>,
        vertical: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("coefficient field needs at least one pixel"));
        }
        if horizontal.len() != height * (width - 1) || vertical.len() != (height - 1) * width {
            return Err(Error::mismatch(format!(
                "edge counts {}/{} do not fit a {width}x{height} grid",
                horizontal.len(),
                vertical.len()
            )));
        }
        if let Some(v) = horizontal
            .iter()
            .chain(&vertical)
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::invalid(format!("coefficient {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            horizontal,
            vertical,
        })
    }

    pub fn uniform(width: usize, height: usize, value: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("coefficient field needs at least one pixel"));
        }
        Self::from_parts(
            width,
            height,
            vec![value; height * (width - 1)],
            vec![value; (height - 1) * width],
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn horizontal(&self) -> &[f64] {
        &self.horizontal
    }

    pub fn vertical(&self) -> &[f64] {
        &self.vertical
    }

    /// Edge between `(x, y)` and `(x + 1, y)`.
    #[inline]
    pub fn h(&self, x: usize, y: usize) -> f64 {
        self.horizontal[y * (self.width - 1) + x]
    }

    /// Edge between `(x, y)` and `(x, y + 1)`.
    #[inline]
    pub fn v(&self, x: usize, y: usize) -> f64 {
        self.vertical[y * self.width + x]
    }

    pub fn edge_count(&self) -> usize {
        self.horizontal.len() + self.vertical.len()
    }

    /// Coarse-level field for a grid downsampled by `factor`.
    ///
    /// Each direction is min-pooled on its own with `factor` x `factor`
    /// blocks, so any blocking edge inside a block blocks the coarse edge.
    /// Coarse horizontal edge `(X, Y)` takes the minimum over fine horizontal
    /// edges in rows `[Y f, Y f + f)` and columns `[X f, X f + f)`, which
    /// includes the fine edge straddling the two coarse pixels.
    pub fn min_pool(&self, factor: usize) -> Result<CoefficientField> {
        image::check_pow2(factor)?;
        if factor == 1 {
            return Ok(self.clone());
        }
        let cw = image::pooled_len(self.width, factor);
        let ch = image::pooled_len(self.height, factor);
        let horizontal = if cw > 1 {
            let pooled = image::min_pool_plane(&self.horizontal, self.width - 1, self.height, 1, factor);
            let pw = image::pooled_len(self.width - 1, factor);
            crop_rows(&pooled, pw, cw - 1)
        } else {
            Vec::new()
        };
        let vertical = if ch > 1 {
            let pooled = image::min_pool_plane(&self.vertical, self.width, self.height - 1, 1, factor);
            pooled[..(ch - 1) * cw].to_vec()
        } else {
            Vec::new()
        };
        Ok(CoefficientField {
            width: cw,
            height: ch,
            horizontal,
            vertical,
        })
    }
}

fn crop_rows(data: &[f64], stride: usize, keep: usize) -> Vec<f64> {
    data.chunks(stride).flat_map(|r| &r[..keep]).copied().collect()
}

#[inline]
pub(crate) fn edge_coefficient(gp: &[f32], gn: &[f32], kappa_sq: f64) -> f64 {
    let dist_sq: f64 = gp
        .iter()
        .zip(gn)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    // clamp keeps the value strictly positive for astronomically large distances
    (kappa_sq / (kappa_sq + dist_sq)).max(f64::MIN_POSITIVE)
}

/// `kappa^2 / (kappa^2 + |gp - gn|^2)`.
pub fn coefficient(gp: &[f32], gn: &[f32], kappa: f32) -> Result<f64> {
    check_kappa(kappa)?;
    if gp.len() != gn.len() {
        return Err(Error::mismatch(format!(
            "feature vectors of length {} and {}",
            gp.len(),
            gn.len()
        )));
    }
    let k = kappa as f64;
    Ok(edge_coefficient(gp, gn, k * k))
}

pub fn build_coefficients(g: &GuidanceField) -> CoefficientField {
    let f = &g.features;
    let (w, h) = (f.width(), f.height());
    let k = g.kappa as f64;
    let kappa_sq = k * k;

    let mut horizontal = vec![0.0f64; h * (w - 1)];
    if w > 1 {
        horizontal
            .par_chunks_mut(w - 1)
            .enumerate()
            .for_each(|(y, row)| {
                for (x, c) in row.iter_mut().enumerate() {
                    *c = edge_coefficient(f.pixel(x, y), f.pixel(x + 1, y), kappa_sq);
                }
            });
    }
    let mut vertical = vec![0.0f64; (h - 1) * w];
    if h > 1 {
        vertical.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, c) in row.iter_mut().enumerate() {
                *c = edge_coefficient(f.pixel(x, y), f.pixel(x, y + 1), kappa_sq);
            }
        });
    }
    CoefficientField {
        width: w,
        height: h,
        horizontal,
        vertical,
    }
}

/// Uses the camera's RGB values directly as 3-vector features.
pub fn rgb_guidance(camera: &ImageF, kappa: f32) -> Result<GuidanceField> {
    if camera.channels() != 3 {
        return Err(Error::invalid(format!(
            "RGB guidance needs a 3-channel image, got {} channels",
            camera.channels()
        )));
    }
    GuidanceField::new(camera.clone(), kappa)
}

const GADF_MAGIC: &[u8; 4] = b"GADF";
const GADF_VERSION: u32 = 1;
const GADF_HEADER_LEN: usize = 24;

pub fn encode_feature_map(g: &GuidanceField) -> Vec<u8> {
    let f = &g.features;
    let mut out = Vec::with_capacity(GADF_HEADER_LEN + f.len() * 4);
    out.extend_from_slice(GADF_MAGIC);
    out.extend_from_slice(&GADF_VERSION.to_le_bytes());
    out.extend_from_slice(&(f.height() as u32).to_le_bytes());
    out.extend_from_slice(&(f.width() as u32).to_le_bytes());
    out.extend_from_slice(&(f.channels() as u32).to_le_bytes());
    out.extend_from_slice(&g.kappa.to_le_bytes());
    for v in f.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_feature_map(bytes: &[u8]) -> Result<GuidanceField> {
    let format = |offset: usize, message: &str| Error::Format {
        offset: offset as u64,
        message: message.to_string(),
    };
    if bytes.len() < 4 || &bytes[..4] != GADF_MAGIC {
        return Err(format(0, "bad magic, expected \"GADF\""));
    }
    if bytes.len() < GADF_HEADER_LEN {
        return Err(format(bytes.len(), "truncated header"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != GADF_VERSION {
        return Err(format(4, &format!("unsupported version {version}")));
    }
    let (height, width, channels) = (word(8) as usize, word(12) as usize, word(16) as usize);
    let kappa = f32::from_le_bytes(bytes[20..24].try_into().unwrap());
    if width == 0 || height == 0 || channels == 0 {
        return Err(Error::Data(format!(
            "empty feature map {width}x{height}x{channels}"
        )));
    }
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::Data(format!("kappa must be positive, got {kappa}")));
    }
    let payload = &bytes[GADF_HEADER_LEN..];
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .and_then(|n| n.checked_mul(4));
    if expected != Some(payload.len()) {
        return Err(Error::Data(format!(
            "header declares {width}x{height}x{channels} samples but payload has {} bytes",
            payload.len()
        )));
    }
    let mut data = Vec::with_capacity(payload.len() / 4);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Data(format!(
                "non-finite sample {i} at byte {}",
                GADF_HEADER_LEN + i * 4
            )));
        }
        data.push(v);
    }
    GuidanceField::new(ImageF::new(width, height, channels, data)?, kappa)
}

pub fn save_feature_map(path: impl AsRef<Path>, g: &GuidanceField) -> Result<()> {
    std::fs::write(path, encode_feature_map(g))?;
    Ok(())
}

pub fn load_feature_map(path: impl AsRef<Path>) -> Result<GuidanceField> {
    decode_feature_map(&std::fs::read(path)?)
}
