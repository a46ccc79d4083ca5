//! Analytic test scenes.
//!
//! A tiny ray caster renders spheres, axis-aligned boxes and planes under
//! point and directional lights with Lambertian shading and hard shadows. It
//! produces everything the relighting pipeline consumes plus the exact
//! answer: the camera frame, the relight filter (same shading, unit albedo),
//! the first light's binary visibility and per-pixel hit distance.
//!
//! [`corrupt`] then damages a filter the way a coarse reconstruction does,
//! only in a thin band around depth discontinuities.
//!
//! Scenes serialize to JSON with kebab-case field names:
//!
//! ```json
//! {
//!   "camera": { "position": [0, 1.5, 3], "look-at": [0, 1, 0],
//!               "vertical-fov": 60, "resolution": { "width": 256, "height": 256 } },
//!   "primitives": [ { "type": "sphere", "center": [0, 0.5, 0], "radius": 0.5,
//!                     "albedo": [0.8, 0.3, 0.3] } ],
//!   "lights": [ { "type": "point", "position": [0, 2, 0], "intensity": [3, 3, 3] } ],
//!   "ambient": [0.2, 0.2, 0.2]
//! }
//! ```
//!
//! Primitive types are `sphere` (`center`, `radius`), `box` (`min`, `max`)
//! and `plane` (`point`, `normal`). Light types are `point` (`position`,
//! `intensity`, inverse-square falloff) and `directional` (`direction` of
//! travel, `intensity`).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageF;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3(pub f64, pub f64, pub f64);

pub type Rgb = Vec3;

impl Vec3 {
    pub const fn splat(v: f64) -> Self {
        Vec3(v, v, v)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.0 * o.0 + self.1 * o.1 + self.2 * o.2
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3(
            self.1 * o.2 - self.2 * o.1,
            self.2 * o.0 - self.0 * o.2,
            self.0 * o.1 - self.1 * o.0,
        )
    }

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.length())
    }

    pub fn mul_elem(self, o: Vec3) -> Vec3 {
        Vec3(self.0 * o.0, self.1 * o.1, self.2 * o.2)
    }

    fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.0,
            1 => self.1,
            _ => self.2,
        }
    }

    fn is_finite(self) -> bool {
        self.0.is_finite() && self.1.is_finite() && self.2.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3(self.0 + o.0, self.1 + o.1, self.2 + o.2)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3(self.0 - o.0, self.1 - o.1, self.2 - o.2)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3(self.0 * s, self.1 * s, self.2 * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3(-self.0, -self.1, -self.2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CameraSpec {
    pub position: Vec3,
    pub look_at: Vec3,
    /// Degrees, exclusive range (10, 170).
    pub vertical_fov: f64,
    pub resolution: Resolution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    Box { min: Vec3, max: Vec3 },
    Plane { point: Vec3, normal: Vec3 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    pub albedo: Rgb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Light {
    /// Irradiance falls off with the inverse square of distance.
    Point { position: Vec3, intensity: Rgb },
    /// `direction` is the direction light travels in.
    Directional { direction: Vec3, intensity: Rgb },
}

impl Light {
    pub fn intensity(&self) -> Rgb {
        match self {
            Light::Point { intensity, .. } | Light::Directional { intensity, .. } => *intensity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub camera: CameraSpec,
    pub primitives: Vec<Primitive>,
    pub lights: Vec<Light>,
    pub ambient: Rgb,
}

fn field_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Validation {
        path: path.into(),
        message: message.into(),
    }
}

fn check_vec(path: String, v: Vec3) -> Result<()> {
    if !v.is_finite() {
        return Err(field_err(path, "components must be finite"));
    }
    Ok(())
}

fn check_rgb(path: String, v: Rgb) -> Result<()> {
    check_vec(path.clone(), v)?;
    if v.0 < 0.0 || v.1 < 0.0 || v.2 < 0.0 {
        return Err(field_err(path, "components must be non-negative"));
    }
    Ok(())
}

impl SceneSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let scene: SceneSpec = serde_json::from_str(text)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Full document check: renderable geometry plus at least one light.
    pub fn validate(&self) -> Result<()> {
        self.validate_geometry()?;
        if self.lights.is_empty() {
            return Err(field_err("lights", "scene needs at least one light"));
        }
        Ok(())
    }

    /// Everything [`render`] needs; lights may be empty.
    pub fn validate_geometry(&self) -> Result<()> {
        let cam = &self.camera;
        check_vec("camera.position".into(), cam.position)?;
        check_vec("camera.look-at".into(), cam.look_at)?;
        if !(cam.vertical_fov > 10.0 && cam.vertical_fov < 170.0) {
            return Err(field_err(
                "camera.vertical-fov",
                format!("must lie in (10, 170) degrees, got {}", cam.vertical_fov),
            ));
        }
        if cam.resolution.width == 0 || cam.resolution.height == 0 {
            return Err(field_err("camera.resolution", "width and height must be positive"));
        }
        if self.primitives.is_empty() {
            return Err(field_err("primitives", "scene needs at least one primitive"));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            let at = |f: &str| format!("primitives[{i}].{f}");
            check_rgb(at("albedo"), p.albedo)?;
            if p.albedo.0 > 1.0 || p.albedo.1 > 1.0 || p.albedo.2 > 1.0 {
                return Err(field_err(at("albedo"), "components must not exceed 1"));
            }
            match p.shape {
                Shape::Sphere { center, radius } => {
                    check_vec(at("center"), center)?;
                    if !(radius.is_finite() && radius > 0.0) {
                        return Err(field_err(at("radius"), format!("must be positive, got {radius}")));
                    }
                }
                Shape::Box { min, max } => {
                    check_vec(at("min"), min)?;
                    check_vec(at("max"), max)?;
                    if !(min.0 < max.0 && min.1 < max.1 && min.2 < max.2) {
                        return Err(field_err(at("max"), "must exceed min on every axis"));
                    }
                }
                Shape::Plane { point, normal } => {
                    check_vec(at("point"), point)?;
                    check_vec(at("normal"), normal)?;
                    if normal.length() == 0.0 {
                        return Err(field_err(at("normal"), "must be non-zero"));
                    }
                }
            }
        }
        for (i, l) in self.lights.iter().enumerate() {
            let at = |f: &str| format!("lights[{i}].{f}");
            check_rgb(at("intensity"), l.intensity())?;
            match l {
                Light::Point { position, .. } => check_vec(at("position"), *position)?,
                Light::Directional { direction, .. } => {
                    check_vec(at("direction"), *direction)?;
                    if direction.length() == 0.0 {
                        return Err(field_err(at("direction"), "must be non-zero"));
                    }
                }
            }
        }
        check_rgb("ambient".into(), self.ambient)
    }

    /// Same geometry and camera under a different set of lights.
    pub fn with_lights(&self, lights: Vec<Light>) -> SceneSpec {
        SceneSpec {
            lights,
            ..self.clone()
        }
    }
}

const RAY_EPS: f64 = 1e-6;
/// Shadow rays start this far off the surface along the normal.
pub const SHADOW_OFFSET: f64 = 1e-5;
/// Depth written for rays that leave the scene.
pub const MISS_DEPTH: f32 = 1.0e3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub dir: Vec3,
}

impl Shape {
    /// Nearest hit beyond `RAY_EPS` with the geometric normal.
    pub fn intersect(&self, ray: &Ray) -> Option<(f64, Vec3)> {
        match *self {
            Shape::Sphere { center, radius } => {
                let oc = ray.origin - center;
                let b = oc.dot(ray.dir);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = [-b - sq, -b + sq].into_iter().find(|&t| t > RAY_EPS)?;
                let hit = ray.origin + ray.dir * t;
                Some((t, (hit - center) * (1.0 / radius)))
            }
            Shape::Box { min, max } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                let (mut near_axis, mut far_axis) = (0, 0);
                for a in 0..3 {
                    let (o, d) = (ray.origin.axis(a), ray.dir.axis(a));
                    let (lo, hi) = (min.axis(a), max.axis(a));
                    if d.abs() < 1e-300 {
                        if o < lo || o > hi {
                            return None;
                        }
                        continue;
                    }
                    let (mut t0, mut t1) = ((lo - o) / d, (hi - o) / d);
                    if t0 > t1 {
                        std::mem::swap(&mut t0, &mut t1);
                    }
                    if t0 > t_near {
                        t_near = t0;
                        near_axis = a;
                    }
                    if t1 < t_far {
                        t_far = t1;
                        far_axis = a;
                    }
                }
                if t_near > t_far {
                    return None;
                }
                let (t, axis) = if t_near > RAY_EPS {
                    (t_near, near_axis)
                } else if t_far > RAY_EPS {
                    (t_far, far_axis)
                } else {
                    return None;
                };
                let mut n = [0.0; 3];
                n[axis] = 1.0;
                Some((t, Vec3(n[0], n[1], n[2])))
            }
            Shape::Plane { point, normal } => {
                let denom = normal.dot(ray.dir);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = (point - ray.origin).dot(normal) / denom;
                (t > RAY_EPS).then(|| (t, normal.normalized()))
            }
        }
    }
}

struct Hit {
    t: f64,
    point: Vec3,
    /// Unit normal facing back along the ray.
    normal: Vec3,
    albedo: Rgb,
}

fn trace(primitives: &[Primitive], ray: &Ray) -> Option<Hit> {
    let mut best: Option<(f64, Vec3, Rgb)> = None;
    for p in primitives {
        if let Some((t, n)) = p.shape.intersect(ray) {
            if best.as_ref().is_none_or(|b| t < b.0) {
                best = Some((t, n, p.albedo));
            }
        }
    }
    best.map(|(t, n, albedo)| {
        let n = if n.dot(ray.dir) > 0.0 { -n } else { n };
        Hit {
            t,
            point: ray.origin + ray.dir * t,
            normal: n,
            albedo,
        }
    })
}

fn occluded(primitives: &[Primitive], ray: &Ray, max_t: f64) -> bool {
    primitives
        .iter()
        .any(|p| p.shape.intersect(ray).is_some_and(|(t, _)| t < max_t))
}

/// Direction towards the light, irradiance scale and distance for `point`.
fn light_geometry(light: &Light, point: Vec3) -> (Vec3, f64, f64) {
    match *light {
        Light::Point { position, .. } => {
            let to = position - point;
            let d2 = to.dot(to);
            let d = d2.sqrt();
            (to * (1.0 / d), 1.0 / d2, d)
        }
        Light::Directional { direction, .. } => (-direction.normalized(), 1.0, f64::INFINITY),
    }
}

/// Binary visibility of `light` from a surface point (offset along the normal).
pub(crate) fn visibility(primitives: &[Primitive], light: &Light, point: Vec3, normal: Vec3) -> f64 {
    let (l, _, dist) = light_geometry(light, point);
    let ray = Ray {
        origin: point + normal * SHADOW_OFFSET,
        dir: l,
    };
    if occluded(primitives, &ray, dist) {
        0.0
    } else {
        1.0
    }
}

/// Pinhole camera frame; pixel rays go through pixel centers.
pub struct CameraBasis {
    origin: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    tan_half: f64,
    aspect: f64,
    width: usize,
    height: usize,
}

impl CameraBasis {
    pub fn new(cam: &CameraSpec) -> Result<Self> {
        let to = cam.look_at - cam.position;
        if to.length() < 1e-12 {
            return Err(Error::invalid("degenerate camera basis: look-at equals position"));
        }
        let forward = to.normalized();
        let side = forward.cross(Vec3(0.0, 1.0, 0.0));
        if side.length() < 1e-9 {
            return Err(Error::invalid("degenerate camera basis: view direction is vertical"));
        }
        let right = side.normalized();
        let up = right.cross(forward);
        Ok(Self {
            origin: cam.position,
            forward,
            right,
            up,
            tan_half: (cam.vertical_fov.to_radians() * 0.5).tan(),
            aspect: cam.resolution.width as f64 / cam.resolution.height as f64,
            width: cam.resolution.width,
            height: cam.resolution.height,
        })
    }

    pub fn ray(&self, x: usize, y: usize) -> Ray {
        let u = ((x as f64 + 0.5) / self.width as f64 * 2.0 - 1.0) * self.tan_half * self.aspect;
        let v = (1.0 - (y as f64 + 0.5) / self.height as f64 * 2.0) * self.tan_half;
        Ray {
            origin: self.origin,
            dir: (self.forward + self.right * u + self.up * v).normalized(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    /// `albedo * clamp(ambient + sum of lights)`.
    pub camera: ImageF,
    /// Shading with unit albedo, including every light's shadow.
    pub filter: ImageF,
    /// As `filter` but with the first light treated as unoccluded; the
    /// filter input when shadows travel separately in `shadow`.
    pub unshadowed: ImageF,
    /// Binary visibility of the first light (all ones without lights).
    pub shadow: ImageF,
    /// Ray hit distance, [`MISS_DEPTH`] on misses.
    pub depth: ImageF,
    /// Surface albedo, zero on misses.
    pub albedo: ImageF,
    /// Camera-facing unit normal mapped to `n / 2 + 1/2`; 1/2 on misses.
    pub normal: ImageF,
}

struct PixelSample {
    camera: [f32; 3],
    filter: [f32; 3],
    unshadowed: [f32; 3],
    shadow: f32,
    depth: f32,
    albedo: [f32; 3],
    normal: [f32; 3],
}

fn clamp_unit(v: Vec3) -> [f32; 3] {
    [
        v.0.clamp(0.0, 1.0) as f32,
        v.1.clamp(0.0, 1.0) as f32,
        v.2.clamp(0.0, 1.0) as f32,
    ]
}

fn shade(scene: &SceneSpec, ray: &Ray) -> PixelSample {
    let Some(hit) = trace(&scene.primitives, ray) else {
        let amb = clamp_unit(scene.ambient);
        return PixelSample {
            camera: [0.0; 3],
            filter: amb,
            unshadowed: amb,
            shadow: 1.0,
            depth: MISS_DEPTH,
            albedo: [0.0; 3],
            normal: [0.5; 3],
        };
    };
    let mut lit = scene.ambient;
    let mut lit_open = scene.ambient;
    let mut first_vis = 1.0;
    for (i, light) in scene.lights.iter().enumerate() {
        let (l, falloff, _) = light_geometry(light, hit.point);
        let vis = visibility(&scene.primitives, light, hit.point, hit.normal);
        if i == 0 {
            first_vis = vis;
        }
        let e = light.intensity() * (hit.normal.dot(l).max(0.0) * falloff);
        lit = lit + e * vis;
        lit_open = lit_open + if i == 0 { e } else { e * vis };
    }
    let filter = clamp_unit(lit);
    let camera = [
        (hit.albedo.0 * filter[0] as f64) as f32,
        (hit.albedo.1 * filter[1] as f64) as f32,
        (hit.albedo.2 * filter[2] as f64) as f32,
    ];
    PixelSample {
        camera,
        filter,
        unshadowed: clamp_unit(lit_open),
        shadow: first_vis as f32,
        depth: (hit.t as f32).min(MISS_DEPTH),
        albedo: [hit.albedo.0 as f32, hit.albedo.1 as f32, hit.albedo.2 as f32],
        normal: [
            (hit.normal.0 * 0.5 + 0.5) as f32,
            (hit.normal.1 * 0.5 + 0.5) as f32,
            (hit.normal.2 * 0.5 + 0.5) as f32,
        ],
    }
}

/// Renders one camera sample per pixel center. Rows render in parallel; the
/// output does not depend on the thread count.
pub fn render(scene: &SceneSpec) -> Result<RenderOutput> {
    scene.validate_geometry()?;
    let basis = CameraBasis::new(&scene.camera)?;
    let (w, h) = (basis.width, basis.height);
    let samples: Vec<PixelSample> = (0..w * h)
        .into_par_iter()
        .map(|i| shade(scene, &basis.ray(i % w, i / w)))
        .collect();

    let rgb = |f: fn(&PixelSample) -> [f32; 3]| {
        ImageF::from_parts(w, h, 3, samples.iter().flat_map(f).collect())
    };
    let camera = rgb(|s| s.camera);
    let filter = rgb(|s| s.filter);
    let unshadowed = rgb(|s| s.unshadowed);
    let shadow = ImageF::from_parts(w, h, 1, samples.iter().map(|s| s.shadow).collect());
    let depth = ImageF::from_parts(w, h, 1, samples.iter().map(|s| s.depth).collect());
    Ok(RenderOutput {
        camera,
        filter,
        unshadowed,
        shadow,
        depth,
        albedo: rgb(|s| s.albedo),
        normal: rgb(|s| s.normal),
    })
}

/// Weight of `ln(depth)` in [`geometry_features`].
pub const DEPTH_FEATURE_SCALE: f32 = 0.5;

/// Exact per-pixel scene attributes as a 7-channel feature image: albedo,
/// mapped normal and `DEPTH_FEATURE_SCALE * ln(depth)`. Stands in for a
/// learned feature extractor on synthetic scenes.
pub fn geometry_features(r: &RenderOutput) -> ImageF {
    let (w, h) = (r.depth.width(), r.depth.height());
    let mut data = Vec::with_capacity(w * h * 7);
    for y in 0..h {
        for x in 0..w {
            data.extend_from_slice(r.albedo.pixel(x, y));
            data.extend_from_slice(r.normal.pixel(x, y));
            data.push(DEPTH_FEATURE_SCALE * r.depth.get(x, y, 0).max(RAY_EPS as f32).ln());
        }
    }
    ImageF::from_parts(w, h, 7, data)
}

/// How a reconstructed mesh deviates from the true geometry near silhouettes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ErrorModel {
    /// Horizontal misregistration of the filter inside the band, in pixels.
    pub silhouette_shift: usize,
    /// Foreground objects grow by this many pixels.
    pub dilation: usize,
    /// Uniform noise in `[-a, a]` added inside the band.
    pub boundary_noise_amplitude: f32,
    pub noise_seed: u64,
}

impl ErrorModel {
    pub const NONE: ErrorModel = ErrorModel {
        silhouette_shift: 0,
        dilation: 0,
        boundary_noise_amplitude: 0.0,
        noise_seed: 0,
    };

    pub fn validate(&self) -> Result<()> {
        let a = self.boundary_noise_amplitude;
        if !(a.is_finite() && (0.0..=1.0).contains(&a)) {
            return Err(field_err("error-model.boundary-noise-amplitude", format!("must lie in [0, 1], got {a}")));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.silhouette_shift == 0 && self.dilation == 0 && self.boundary_noise_amplitude == 0.0
    }

    /// Pixels farther than this from a depth discontinuity are never touched.
    pub fn band_radius(&self) -> usize {
        self.silhouette_shift + self.dilation
    }

    pub fn with_seed(self, noise_seed: u64) -> Self {
        Self { noise_seed, ..self }
    }
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self {
            silhouette_shift: 6,
            dilation: 6,
            boundary_noise_amplitude: 1.0,
            noise_seed: 0,
        }
    }
}

/// Relative depth jump between 4-neighbours that counts as a discontinuity.
pub const DEPTH_EDGE_RATIO: f32 = 0.08;

#[inline]
fn depth_jump(a: f32, b: f32) -> bool {
    (a - b).abs() > DEPTH_EDGE_RATIO * a.min(b)
}

/// Pixels with a 4-neighbour across a depth discontinuity (both sides marked).
pub fn depth_edges(depth: &ImageF) -> Vec<bool> {
    let (w, h) = (depth.width(), depth.height());
    let d = |x: usize, y: usize| depth.get(x, y, 0);
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w && depth_jump(d(x, y), d(x + 1, y)) {
                mask[y * w + x] = true;
                mask[y * w + x + 1] = true;
            }
            if y + 1 < h && depth_jump(d(x, y), d(x, y + 1)) {
                mask[y * w + x] = true;
                mask[(y + 1) * w + x] = true;
            }
        }
    }
    mask
}

/// Square (Chebyshev) dilation of a mask by `r`.
fn dilate_mask(mask: &[bool], w: usize, h: usize, r: usize) -> Vec<bool> {
    let mut rows = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let (lo, hi) = (x.saturating_sub(r), (x + r).min(w - 1));
            rows[y * w + x] = (lo..=hi).any(|i| mask[y * w + i]);
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        let (lo, hi) = (y.saturating_sub(r), (y + r).min(h - 1));
        for x in 0..w {
            out[y * w + x] = (lo..=hi).any(|j| rows[j * w + x]);
        }
    }
    out
}

/// Damages `filter` within `model.band_radius()` pixels of depth
/// discontinuities: foreground silhouettes grow by `dilation`, the band is
/// read `silhouette_shift` pixels to the left, then seeded noise is added.
/// Everything outside the band is returned bit-identical.
pub fn corrupt(filter: &ImageF, depth: &ImageF, model: &ErrorModel) -> Result<ImageF> {
    model.validate()?;
    if depth.channels() != 1 || !filter.same_dims(depth) {
        return Err(Error::mismatch(format!(
            "filter {}x{} vs depth {}x{}x{}",
            filter.width(),
            filter.height(),
            depth.width(),
            depth.height(),
            depth.channels()
        )));
    }
    if model.is_identity() {
        return Ok(filter.clone());
    }
    let (w, h, ch) = (filter.width(), filter.height(), filter.channels());
    let band = dilate_mask(&depth_edges(depth), w, h, model.band_radius());
    let src = filter.data();
    let mut out = src.to_vec();

    if model.dilation > 0 {
        let r = model.dilation;
        for y in 0..h {
            for x in 0..w {
                if !band[y * w + x] {
                    continue;
                }
                let here = depth.get(x, y, 0);
                let mut nearest = (here, x, y);
                for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                    for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                        let d = depth.get(xx, yy, 0);
                        if d < nearest.0 {
                            nearest = (d, xx, yy);
                        }
                    }
                }
                let (d, xx, yy) = nearest;
                if depth_jump(d, here) {
                    let (o, s) = ((y * w + x) * ch, (yy * w + xx) * ch);
                    out[o..o + ch].copy_from_slice(&src[s..s + ch]);
                }
            }
        }
    }

    if model.silhouette_shift > 0 {
        let grown = out.clone();
        for y in 0..h {
            for x in 0..w {
                if band[y * w + x] {
                    let sx = x.saturating_sub(model.silhouette_shift);
                    let (o, s) = ((y * w + x) * ch, (y * w + sx) * ch);
                    out[o..o + ch].copy_from_slice(&grown[s..s + ch]);
                }
            }
        }
    }

    let a = model.boundary_noise_amplitude;
    if a > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(model.noise_seed);
        for (i, px) in out.chunks_mut(ch).enumerate() {
            if band[i] {
                for v in px {
                    *v = (*v + a * rng.random_range(-1.0f32..=1.0)).clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(ImageF::from_parts(w, h, ch, out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchmarkKind {
    /// One bright white point light at the room center.
    MeshErrorCorrection,
    /// Two dimmed point lights of clearly different hue.
    MultiLighting,
    /// Random warm key light; compared against the uncorrupted render.
    Fidelity,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 3] = [
        BenchmarkKind::MeshErrorCorrection,
        BenchmarkKind::MultiLighting,
        BenchmarkKind::Fidelity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::MeshErrorCorrection => "mesh-error-correction",
            BenchmarkKind::MultiLighting => "multi-lighting",
            BenchmarkKind::Fidelity => "fidelity",
        }
    }

    fn salt(self) -> u64 {
        match self {
            BenchmarkKind::MeshErrorCorrection => 0x6d65_7368,
            BenchmarkKind::MultiLighting => 0x6d75_6c74,
            BenchmarkKind::Fidelity => 0x6669_6465,
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mesh-error-correction" | "1" => Ok(BenchmarkKind::MeshErrorCorrection),
            "multi-lighting" | "2" => Ok(BenchmarkKind::MultiLighting),
            "fidelity" | "3" => Ok(BenchmarkKind::Fidelity),
            other => Err(Error::invalid(format!("unknown benchmark kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneInstance {
    pub id: usize,
    pub kind: BenchmarkKind,
    pub scene: SceneSpec,
    /// Seed for this instance's boundary noise.
    pub noise_seed: u64,
}

impl SceneInstance {
    pub fn name(&self) -> String {
        format!("{}-{:04}", self.kind, self.id)
    }
}

pub const ROOM_MIN: Vec3 = Vec3(-3.0, -0.05, -3.0);
pub const ROOM_MAX: Vec3 = Vec3(3.0, 2.8, 3.6);

fn random_albedo(rng: &mut ChaCha8Rng) -> Rgb {
    Vec3(
        rng.random_range(0.2..0.95),
        rng.random_range(0.2..0.95),
        rng.random_range(0.2..0.95),
    )
}

/// Hue in degrees to a fully saturated RGB triple.
fn hue_rgb(hue: f64) -> Rgb {
    let h = hue.rem_euclid(360.0) / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    match h as u32 {
        0 => Vec3(1.0, x, 0.0),
        1 => Vec3(x, 1.0, 0.0),
        2 => Vec3(0.0, 1.0, x),
        3 => Vec3(0.0, x, 1.0),
        4 => Vec3(x, 0.0, 1.0),
        _ => Vec3(1.0, 0.0, x),
    }
}

fn room_camera(resolution: usize) -> CameraSpec {
    CameraSpec {
        position: Vec3(0.0, 1.5, 3.3),
        look_at: Vec3(0.0, 0.7, -1.0),
        vertical_fov: 60.0,
        resolution: Resolution {
            width: resolution,
            height: resolution,
        },
    }
}

fn room_scene(rng: &mut ChaCha8Rng, resolution: usize) -> SceneSpec {
    let wall = rng.random_range(0.6..0.9);
    let mut primitives = vec![
        Primitive {
            shape: Shape::Box {
                min: ROOM_MIN,
                max: ROOM_MAX,
            },
            albedo: Vec3(wall, wall * rng.random_range(0.9..1.0), wall * rng.random_range(0.85..1.0)),
        },
        Primitive {
            shape: Shape::Plane {
                point: Vec3(0.0, 0.0, 0.0),
                normal: Vec3(0.0, 1.0, 0.0),
            },
            albedo: Vec3(rng.random_range(0.3..0.6), rng.random_range(0.25..0.45), rng.random_range(0.15..0.35)),
        },
    ];
    let objects = rng.random_range(2..=5);
    for _ in 0..objects {
        let x = rng.random_range(-2.0..2.0);
        let z = rng.random_range(-2.2..1.0);
        let shape = if rng.random_bool(0.5) {
            let r = rng.random_range(0.25..0.7);
            Shape::Sphere {
                center: Vec3(x, r + rng.random_range(0.0..0.6), z),
                radius: r,
            }
        } else {
            let (sx, sy, sz) = (
                rng.random_range(0.3..1.2),
                rng.random_range(0.3..1.4),
                rng.random_range(0.3..1.0),
            );
            Shape::Box {
                min: Vec3(x - sx / 2.0, 0.0, z - sz / 2.0),
                max: Vec3(x + sx / 2.0, sy, z + sz / 2.0),
            }
        };
        primitives.push(Primitive {
            shape,
            albedo: random_albedo(rng),
        });
    }
    let amb = rng.random_range(0.12..0.25);
    SceneSpec {
        camera: room_camera(resolution),
        primitives,
        lights: Vec::new(),
        ambient: Vec3::splat(amb),
    }
}

fn random_light_position(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3(
        rng.random_range(-2.2..2.2),
        rng.random_range(1.6..2.5),
        rng.random_range(-2.2..2.0),
    )
}

/// Seeded family of room scenes for one benchmark kind.
pub fn benchmark_suite(kind: BenchmarkKind, count: usize, seed: u64, resolution: usize) -> Result<Vec<SceneInstance>> {
    if count == 0 {
        return Err(Error::invalid("benchmark suite needs at least one scene"));
    }
    if resolution == 0 {
        return Err(Error::invalid("resolution must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ kind.salt());
    let center = Vec3(
        (ROOM_MIN.0 + ROOM_MAX.0) / 2.0,
        (ROOM_MIN.1 + ROOM_MAX.1) / 2.0,
        (ROOM_MIN.2 + ROOM_MAX.2) / 2.0,
    );
    let mut out = Vec::with_capacity(count);
    for id in 0..count {
        let mut scene = room_scene(&mut rng, resolution);
        scene.lights = match kind {
            BenchmarkKind::MeshErrorCorrection => vec![Light::Point {
                position: center,
                intensity: Vec3::splat(3.0),
            }],
            BenchmarkKind::MultiLighting => {
                let h1 = rng.random_range(0.0..360.0);
                let h2 = h1 + rng.random_range(120.0..240.0);
                let dim = rng.random_range(1.0..1.6);
                vec![
                    Light::Point {
                        position: random_light_position(&mut rng),
                        intensity: hue_rgb(h1) * dim,
                    },
                    Light::Point {
                        position: random_light_position(&mut rng),
                        intensity: hue_rgb(h2) * dim,
                    },
                ]
            }
            BenchmarkKind::Fidelity => vec![Light::Point {
                position: random_light_position(&mut rng),
                intensity: Vec3(1.0, 0.9, 0.75) * rng.random_range(2.5..4.0),
            }],
        };
        out.push(SceneInstance {
            id,
            kind,
            scene,
            noise_seed: rng.random(),
        });
    }
    Ok(out)
}

/// Camera facing a flat wall with one sphere in front of it, lit from
/// behind the camera so the sphere casts no visible shadow in the camera
/// frame; plus a side light whose shadow falls on the bare wall.
pub fn flat_wall_scene(resolution: usize) -> (SceneSpec, Light) {
    let scene = SceneSpec {
        camera: CameraSpec {
            position: Vec3(0.0, 0.0, 4.0),
            look_at: Vec3(0.0, 0.0, 0.0),
            vertical_fov: 50.0,
            resolution: Resolution {
                width: resolution,
                height: resolution,
            },
        },
        primitives: vec![
            Primitive {
                shape: Shape::Plane {
                    point: Vec3(0.0, 0.0, 0.0),
                    normal: Vec3(0.0, 0.0, 1.0),
                },
                albedo: Vec3(0.75, 0.72, 0.68),
            },
            Primitive {
                shape: Shape::Sphere {
                    center: Vec3(-0.3, 0.2, 1.2),
                    radius: 0.4,
                },
                albedo: Vec3(0.6, 0.3, 0.25),
            },
        ],
        lights: vec![Light::Directional {
            direction: Vec3(0.0, 0.0, -1.0),
            intensity: Vec3::splat(0.6),
        }],
        ambient: Vec3::splat(0.3),
    };
    let side = Light::Point {
        position: Vec3(-2.0, 1.6, 3.2),
        intensity: Vec3::splat(8.0),
    };
    (scene, side)
}
