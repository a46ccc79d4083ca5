//! Guided anisotropic diffusion.
//!
//! One step updates every pixel from the previous iterate only (Jacobi):
//!
//! ```text
//! y'[p] = y[p] + lambda * sum_{n in N4(p)} (y[n] - y[p]) * c(p, n)
//! ```
//!
//! Missing neighbours at the frame border contribute no flux. With
//! `lambda < 1/4` and coefficients in `[0, 1]` each output is a convex
//! combination of the pixel and its neighbours, so the range never grows and
//! the total mass is conserved.
//!
//! Arithmetic runs in f64 and is rounded to f32 once per step. Rounding to
//! nearest is monotone, so the convex-combination bound survives storage.

use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::guidance::{build_coefficients, CoefficientField, GuidanceField};
use crate::image::{self, ImageF};

pub const DEFAULT_LAMBDA: f32 = 0.24;

/// `16:10,8:15,4:25,2:30`: 10 steps at 1/16 scale up to 30 at 1/2 scale,
/// then upsampled to full resolution.
pub const DEFAULT_SCHEDULE: &str = "16:10,8:15,4:25,2:30";

fn check_lambda(lambda: f32) -> Result<()> {
    if !(lambda > 0.0 && lambda < 0.25) {
        return Err(Error::invalid(format!("lambda must lie in (0, 0.25), got {lambda}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionParams {
    lambda: f32,
    iterations: usize,
}

impl DiffusionParams {
    pub fn new(lambda: f32, iterations: usize) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self { lambda, iterations })
    }

    pub fn lambda(&self) -> f32 {
        self.lambda
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Level {
    /// Resolution divisor relative to the full image (power of two).
    pub divisor: usize,
    pub iterations: usize,
}

/// Coarse-to-fine diffusion plan. Levels run coarsest first with strictly
/// decreasing divisors; `lambda` is shared by every level.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeSchedule {
    levels: Vec<Level>,
    lambda: f32,
}

impl CascadeSchedule {
    pub fn new(levels: Vec<Level>, lambda: f32) -> Result<Self> {
        check_lambda(lambda)?;
        if levels.is_empty() {
            return Err(Error::invalid("schedule needs at least one level"));
        }
        for (i, l) in levels.iter().enumerate() {
            image::check_pow2(l.divisor)?;
            if l.iterations == 0 {
                return Err(Error::invalid(format!("level {i} has zero iterations")));
            }
            if i > 0 && levels[i - 1].divisor <= l.divisor {
                return Err(Error::invalid(format!(
                    "divisors must strictly decrease, got {} then {}",
                    levels[i - 1].divisor,
                    l.divisor
                )));
            }
        }
        Ok(Self { levels, lambda })
    }

    /// Parses `divisor:iterations` pairs separated by commas, e.g.
    /// `16:10,8:15,4:25,2:30`.
    pub fn parse(spec: &str, lambda: f32) -> Result<Self> {
        let levels = spec
            .split(',')
            .map(|pair| {
                let pair = pair.trim();
                let (d, n) = pair
                    .split_once(':')
                    .ok_or_else(|| Error::invalid(format!("schedule entry {pair:?} is not divisor:iterations")))?;
                let divisor = d
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad divisor {d:?}")))?;
                let iterations = n
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad iteration count {n:?}")))?;
                Ok(Level { divisor, iterations })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(levels, lambda)
    }

    /// A plain full-resolution run of `iterations` steps.
    pub fn single(iterations: usize, lambda: f32) -> Result<Self> {
        Self::new(vec![Level { divisor: 1, iterations }], lambda)
    }


    /// The default ladder (10, 15, 25, 30 steps at 32, 64, 128 and 256
    /// pixels across) placed on an image `size` pixels across: divisors are
    /// `size / 32` ... `size / 256` rounded to powers of two, at least 1.
    /// Levels that collapse onto the same divisor merge their steps.
    ///
    /// `size = 512` reproduces [`DEFAULT_SCHEDULE`].
    pub fn ladder_for(size: usize, lambda: f32) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("image size must be positive"));
        }
        let mut levels: Vec<Level> = Vec::new();
        for (px, iterations) in [(32usize, 10usize), (64, 15), (128, 25), (256, 30)] {
            let ratio = size as f64 / px as f64;
            let divisor = if ratio <= 1.0 { 1 } else { 1usize << ratio.log2().round() as u32 };
            match levels.last_mut() {
                Some(last) if last.divisor == divisor => last.iterations += iterations,
                _ => levels.push(Level { divisor, iterations }),
            }
        }
        Self::new(levels, lambda)
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn lambda(&self) -> f32 {
        self.lambda
    }

    pub fn total_steps(&self) -> usize {
        self.levels.iter().map(|l| l.iterations).sum()
    }

    /// Number of diffusion steps that run at full resolution.
    pub fn full_resolution_steps(&self) -> usize {
        self.levels
            .iter()
            .filter(|l| l.divisor == 1)
            .map(|l| l.iterations)
            .sum()
    }
}

/// [`DEFAULT_SCHEDULE`] at [`DEFAULT_LAMBDA`].
impl Default for CascadeSchedule {
    fn default() -> Self {
        Self::parse(DEFAULT_SCHEDULE, DEFAULT_LAMBDA).expect("default schedule is valid")
    }
}

impl fmt::Display for CascadeSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.levels.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", l.divisor, l.iterations)?;
        }
        Ok(())
    }
}

fn check_dims(y: &ImageF, coeffs: &CoefficientField) -> Result<()> {
    if y.width() != coeffs.width() || y.height() != coeffs.height() {
        return Err(Error::mismatch(format!(
            "image {}x{} vs coefficients {}x{}",
            y.width(),
            y.height(),
            coeffs.width(),
            coeffs.height()
        )));
    }
    Ok(())
}

/// One synchronous update from `src` into `dst`.
fn step_into(src: &[f32], dst: &mut [f32], w: usize, ch: usize, coeffs: &CoefficientField, lambda: f64) {
    let h = coeffs.height();
    let stride = w * ch;
    dst.par_chunks_mut(stride).enumerate().for_each(|(y, out)| {
        let row = &src[y * stride..(y + 1) * stride];
        let up = (y > 0).then(|| (&src[(y - 1) * stride..y * stride], &coeffs.vertical()[(y - 1) * w..y * w]));
        let down = (y + 1 < h).then(|| (&src[(y + 1) * stride..(y + 2) * stride], &coeffs.vertical()[y * w..(y + 1) * w]));
        let hrow = &coeffs.horizontal()[y * (w - 1)..(y + 1) * (w - 1)];
        for x in 0..w {
            for c in 0..ch {
                let i = x * ch + c;
                let p = row[i] as f64;
                let mut flux = 0.0f64;
                if x > 0 {
                    flux += (row[i - ch] as f64 - p) * hrow[x - 1];
                }
                if x + 1 < w {
                    flux += (row[i + ch] as f64 - p) * hrow[x];
                }
                if let Some((r, cv)) = up {
                    flux += (r[i] as f64 - p) * cv[x];
                }
                if let Some((r, cv)) = down {
                    flux += (r[i] as f64 - p) * cv[x];
                }
                out[i] = (p + lambda * flux) as f32;
            }
        }
    });
}

/// A single diffusion step. Every channel diffuses under the same coefficients.
pub fn step(y: &ImageF, coeffs: &CoefficientField, lambda: f32) -> Result<ImageF> {
    check_lambda(lambda)?;
    check_dims(y, coeffs)?;
    let mut out = vec![0.0f32; y.len()];
    step_into(y.data(), &mut out, y.width(), y.channels(), coeffs, lambda as f64);
    Ok(ImageF::from_parts(y.width(), y.height(), y.channels(), out))
}

/// `params.iterations` consecutive steps, double-buffered.
pub fn run(y0: &ImageF, coeffs: &CoefficientField, params: DiffusionParams) -> Result<ImageF> {
    check_dims(y0, coeffs)?;
    Ok(run_unchecked(y0, coeffs, params.lambda as f64, params.iterations))
}

fn run_unchecked(y0: &ImageF, coeffs: &CoefficientField, lambda: f64, iterations: usize) -> ImageF {
    if iterations == 0 {
        return y0.clone();
    }
    let (w, ch) = (y0.width(), y0.channels());
    let mut cur = y0.data().to_vec();
    let mut next = vec![0.0f32; cur.len()];
    for _ in 0..iterations {
        step_into(&cur, &mut next, w, ch, coeffs, lambda);
        std::mem::swap(&mut cur, &mut next);
    }
    ImageF::from_parts(w, y0.height(), ch, cur)
}

/// Straightforward oracle for `build_coefficients` + `run`: nested loops,
/// coefficients recomputed from the guidance on every visit, no caching and
/// no parallelism.
pub fn reference_run(y0: &ImageF, guidance: &GuidanceField, params: DiffusionParams) -> Result<ImageF> {
    let g = guidance.features();
    if !y0.same_dims(g) {
        return Err(Error::mismatch(format!(
            "image {}x{} vs guidance {}x{}",
            y0.width(),
            y0.height(),
            g.width(),
            g.height()
        )));
    }
    let (w, h, ch) = (y0.width() as isize, y0.height() as isize, y0.channels());
    let kappa = guidance.kappa() as f64;
    let lambda = params.lambda() as f64;
    let at = |x: isize, y: isize| (y * w + x) as usize;

    let mut cur = y0.data().to_vec();
    for _ in 0..params.iterations() {
        let prev = cur.clone();
        for y in 0..h {
            for x in 0..w {
                for c in 0..ch {
                    let p = prev[at(x, y) * ch + c] as f64;
                    let mut flux = 0.0;
                    for (dx, dy) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let gp = g.pixel(x as usize, y as usize);
                        let gn = g.pixel(nx as usize, ny as usize);
                        let mut dist = 0.0;
                        for k in 0..gp.len() {
                            let d = gp[k] as f64 - gn[k] as f64;
                            dist += d * d;
                        }
                        let coeff = (kappa * kappa / (kappa * kappa + dist)).max(f64::MIN_POSITIVE);
                        flux += (prev[at(nx, ny) * ch + c] as f64 - p) * coeff;
                    }
                    cur[at(x, y) * ch + c] = (p + lambda * flux) as f32;
                }
            }
        }
    }
    ImageF::new(y0.width(), y0.height(), ch, cur)
}

/// Wall-clock split of one cascade run.
#[derive(Clone, Copy, Debug, Default)]
pub struct CascadeProfile {
    pub coefficients: Duration,
    pub resampling: Duration,
    pub diffusion: Duration,
    pub steps: usize,
}

impl CascadeProfile {
    pub fn total(&self) -> Duration {
        self.coefficients + self.resampling + self.diffusion
    }
}

/// Coarse-to-fine diffusion of `y0` under `guidance`.
pub fn cascade(y0: &ImageF, guidance: &GuidanceField, schedule: &CascadeSchedule) -> Result<ImageF> {
    if !y0.same_dims(guidance.features()) {
        return Err(Error::mismatch(format!(
            "image {}x{} vs guidance {}x{}",
            y0.width(),
            y0.height(),
            guidance.width(),
            guidance.height()
        )));
    }
    let coeffs = build_coefficients(guidance);
    cascade_with_coefficients(y0, &coeffs, schedule)
}

/// Cascade against a precomputed full-resolution coefficient field.
pub fn cascade_with_coefficients(
    y0: &ImageF,
    coeffs: &CoefficientField,
    schedule: &CascadeSchedule,
) -> Result<ImageF> {
    cascade_profiled(y0, coeffs, schedule).map(|(img, _)| img)
}

/// As [`cascade_with_coefficients`], also reporting where the time went.
///
/// Per level `(d, n)`: the level grid is `ceil(H / d)` x `ceil(W / d)`, the
/// level coefficients are the full-resolution field min-pooled by `d`, and
/// `n` steps run there. The first level starts from the box-downsampled
/// input; later levels start from the bilinear upsample of the previous one.
/// A final upsample restores full resolution when the last divisor is above 1.
pub fn cascade_profiled(
    y0: &ImageF,
    coeffs: &CoefficientField,
    schedule: &CascadeSchedule,
) -> Result<(ImageF, CascadeProfile)> {
    check_dims(y0, coeffs)?;
    let (w, h) = (y0.width(), y0.height());
    let lambda = schedule.lambda() as f64;
    let mut profile = CascadeProfile::default();

    let mut y: Option<ImageF> = None;
    let mut prev_divisor = 0;
    for level in schedule.levels() {
        let d = level.divisor;
        let (lw, lh) = (image::pooled_len(w, d), image::pooled_len(h, d));

        let t = Instant::now();
        let start = match y.take() {
            None => image::downsample_box(y0, d)?,
            Some(coarse) => image::upsample_to(&coarse, prev_divisor / d, lw, lh),
        };
        profile.resampling += t.elapsed();

        let t = Instant::now();
        let level_coeffs = coeffs.min_pool(d)?;
        profile.coefficients += t.elapsed();

        let t = Instant::now();
        y = Some(run_unchecked(&start, &level_coeffs, lambda, level.iterations));
        profile.diffusion += t.elapsed();
        profile.steps += level.iterations;
        prev_divisor = d;
    }

    let mut out = y.expect("schedule has at least one level");
    if prev_divisor > 1 {
        let t = Instant::now();
        out = image::upsample_to(&out, prev_divisor, w, h);
        profile.resampling += t.elapsed();
    }
    Ok((out, profile))
}
