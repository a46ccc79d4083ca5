//! Request model and the per-request render/refine pipeline.
//!
//! Every image that crosses a file boundary in the CLI is quantized here the
//! same way (camera 8-bit, filter 16-bit, shadow 8-bit), so a frame written
//! out with [`Intermediates::write_to`] and fed to `relight relight` comes
//! back bit-identical.

use std::f64::consts::PI;
use std::path::Path;

use relight_core::compose::{composite, relight_with_coefficients, RelightInputs, ShadowParams};
use relight_core::diffusion::{CascadeSchedule, DEFAULT_LAMBDA, DEFAULT_SCHEDULE};
use relight_core::guidance::CoefficientField;
use relight_core::io::{quantize_to, write_png, BitDepth};
use relight_core::synth::{corrupt, render, ErrorModel, Light, SceneSpec, Vec3};
use relight_core::{Error, ImageF, Result};
use serde::{Deserialize, Serialize};

pub const MAX_LIGHTS: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuidanceMode {
    #[default]
    Rgb,
    /// Feature map supplied to the server at startup.
    Gadf,
}

/// Partial [`ErrorModel`]; unset fields keep the default model's values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ErrorModelOverrides {
    pub silhouette_shift: Option<usize>,
    pub dilation: Option<usize>,
    pub boundary_noise_amplitude: Option<f32>,
    pub noise_seed: Option<u64>,
}

impl ErrorModelOverrides {
    pub fn apply(&self, base: ErrorModel) -> ErrorModel {
        ErrorModel {
            silhouette_shift: self.silhouette_shift.unwrap_or(base.silhouette_shift),
            dilation: self.dilation.unwrap_or(base.dilation),
            boundary_noise_amplitude: self.boundary_noise_amplitude.unwrap_or(base.boundary_noise_amplitude),
            noise_seed: self.noise_seed.unwrap_or(base.noise_seed),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct RelightRequest {
    #[serde(default)]
    pub lights: Vec<Light>,
    /// Hours in `[0, 24)`; adds a sun (or moon) light.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_of_day: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
    #[serde(default)]
    pub guidance_mode: GuidanceMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_model: Option<ErrorModelOverrides>,
}

/// Why a request was refused.
#[derive(Debug, Clone, PartialEq)]
pub enum RequestError {
    Invalid { path: String, message: String },
    TooManyLights(usize),
}

impl RequestError {
    fn invalid(path: &str, message: impl Into<String>) -> Self {
        RequestError::Invalid {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for RequestError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RequestError::Invalid { path, message } => write!(f, "{path}: {message}"),
            RequestError::TooManyLights(n) => write!(f, "{n} lights requested, at most {MAX_LIGHTS} allowed"),
        }
    }
}

/// Validated, ready-to-run form of a [`RelightRequest`].
#[derive(Clone, Debug)]
pub struct Plan {
    pub lights: Vec<Light>,
    pub schedule: CascadeSchedule,
    pub guidance: GuidanceMode,
    pub error_model: ErrorModel,
}

impl RelightRequest {
    pub fn plan(&self, scene: &SceneSpec) -> Result<Plan, RequestError> {
        if self.lights.len() > MAX_LIGHTS {
            return Err(RequestError::TooManyLights(self.lights.len()));
        }
        let mut lights = self.lights.clone();
        if let Some(h) = self.time_of_day {
            if !(h.is_finite() && (0.0..24.0).contains(&h)) {
                return Err(RequestError::invalid("time-of-day", format!("hours must lie in [0, 24), got {h}")));
            }
            lights.push(sun_light(h));
        }
        if let Err(e) = scene.with_lights(lights.clone()).validate_geometry() {
            return Err(match e {
                Error::Validation { path, message } => RequestError::Invalid { path, message },
                other => RequestError::invalid("lights", other.to_string()),
            });
        }
        let schedule = CascadeSchedule::parse(self.schedule.as_deref().unwrap_or(DEFAULT_SCHEDULE), DEFAULT_LAMBDA)
            .map_err(|e| RequestError::invalid("schedule", e.to_string()))?;
        let error_model = self.error_model.unwrap_or_default().apply(ErrorModel::default());
        if let Err(e) = error_model.validate() {
            return Err(RequestError::invalid("error-model", e.to_string()));
        }
        Ok(Plan {
            lights,
            schedule,
            guidance: self.guidance_mode,
            error_model,
        })
    }
}

pub const SUN_COLOR: Vec3 = Vec3(1.0, 0.95, 0.85);
pub const MOON_COLOR: Vec3 = Vec3(0.04, 0.05, 0.1);
pub const MAX_SUN_ELEVATION_DEG: f64 = 70.0;

/// Sun elevation in degrees: `70 sin(pi (h - 6) / 14)`, zero at 06:00 and
/// 20:00, peaking at 13:00, negative at night.
pub fn sun_elevation_deg(hours: f64) -> f64 {
    MAX_SUN_ELEVATION_DEG * (PI * (hours - 6.0) / 14.0).sin()
}

/// Directional light for the time of day. The sun rises at +x, passes over
/// the +z side at noon and sets at -x, with intensity `max(0, sin(elevation))`.
/// Between 20:00 and 06:00 a dim blue moon shines from overhead instead.
pub fn sun_light(hours: f64) -> Light {
    let elevation = sun_elevation_deg(hours).to_radians();
    if elevation <= 0.0 {
        return Light::Directional {
            direction: Vec3(0.3, -1.0, -0.4),
            intensity: MOON_COLOR,
        };
    }
    let azimuth = PI * (hours - 6.0) / 14.0;
    let to_sun = Vec3(
        azimuth.cos() * elevation.cos(),
        elevation.sin(),
        azimuth.sin() * elevation.cos(),
    );
    Light::Directional {
        direction: -to_sun,
        intensity: SUN_COLOR * elevation.sin().max(0.0),
    }
}

/// The scene's own camera frame as it would be stored in an 8-bit PNG.
pub fn camera_frame(scene: &SceneSpec) -> Result<ImageF> {
    Ok(quantize_to(&render(scene)?.camera, BitDepth::Eight))
}

/// Filter and shadow map for the plan's lights: the filter renders with the
/// first light unoccluded and then goes through the error model; its
/// shadows travel in the separate map.
pub fn light_buffers(scene: &SceneSpec, plan: &Plan) -> Result<(ImageF, ImageF)> {
    let r = render(&scene.with_lights(plan.lights.clone()))?;
    let filter = corrupt(&r.unshadowed, &r.depth, &plan.error_model)?;
    Ok((quantize_to(&filter, BitDepth::Sixteen), quantize_to(&r.shadow, BitDepth::Eight)))
}

/// The three images a relight consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct Intermediates {
    pub camera: ImageF,
    pub filter: ImageF,
    pub shadow: ImageF,
}

impl Intermediates {
    pub fn build(scene: &SceneSpec, camera: ImageF, plan: &Plan) -> Result<Self> {
        let (filter, shadow) = light_buffers(scene, plan)?;
        Ok(Self { camera, filter, shadow })
    }

    /// Writes `camera.png` (8-bit), `filter.png` (16-bit) and `shadow.png` (8-bit).
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        write_png(dir.join("camera.png"), &self.camera, BitDepth::Eight)?;
        write_png(dir.join("filter.png"), &self.filter, BitDepth::Sixteen)?;
        write_png(dir.join("shadow.png"), &self.shadow, BitDepth::Eight)
    }

    /// Refined composite, or with `raw` the plain product of the three images.
    pub fn relight(
        &self,
        coeffs: &CoefficientField,
        schedule: &CascadeSchedule,
        shadow: &ShadowParams,
        raw: bool,
    ) -> Result<ImageF> {
        if raw {
            return composite(&self.filter, &self.camera, Some(&self.shadow));
        }
        let inputs = RelightInputs::new(self.camera.clone(), self.filter.clone(), Some(self.shadow.clone()))?;
        relight_with_coefficients(&inputs, coeffs, schedule, Some(shadow))
    }
}
