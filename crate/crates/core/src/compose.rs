//! Final frame assembly: `S = refine(R) * C`, optionally times a shadow
//! attenuation map that gets its own short full-resolution diffusion pass.

use crate::diffusion::{self, cascade_with_coefficients, CascadeSchedule, DiffusionParams, DEFAULT_LAMBDA};
use crate::error::{Error, Result};
use crate::guidance::{build_coefficients, CoefficientField, GuidanceField};
use crate::image::{multiply, ImageF};

/// Camera frame `C`, relight filter `R` and an optional single-channel
/// shadow attenuation map (1 = unshadowed).
#[derive(Clone, Debug)]
pub struct RelightInputs {
    camera: ImageF,
    filter: ImageF,
    shadow: Option<ImageF>,
}

impl RelightInputs {
    pub fn new(camera: ImageF, filter: ImageF, shadow: Option<ImageF>) -> Result<Self> {
        if camera.channels() != 3 || filter.channels() != 3 {
            return Err(Error::mismatch(format!(
                "camera and filter must be RGB, got {} and {} channels",
                camera.channels(),
                filter.channels()
            )));
        }
        if !camera.same_dims(&filter) {
            return Err(Error::mismatch(format!(
                "camera {}x{} vs filter {}x{}",
                camera.width(),
                camera.height(),
                filter.width(),
                filter.height()
            )));
        }
        if let Some(s) = &shadow {
            check_shadow(s)?;
            if !s.same_dims(&camera) {
                return Err(Error::mismatch(format!(
                    "shadow {}x{} vs camera {}x{}",
                    s.width(),
                    s.height(),
                    camera.width(),
                    camera.height()
                )));
            }
        }
        for (name, img) in [("camera", &camera), ("filter", &filter)]
            .into_iter()
            .chain(shadow.as_ref().map(|s| ("shadow", s)))
        {
            let (lo, hi) = img.min_max();
            if lo < 0.0 || hi > 1.0 {
                return Err(Error::invalid(format!("{name} samples outside [0, 1]: [{lo}, {hi}]")));
            }
        }
        Ok(Self { camera, filter, shadow })
    }

    pub fn camera(&self) -> &ImageF {
        &self.camera
    }

    pub fn filter(&self) -> &ImageF {
        &self.filter
    }

    pub fn shadow(&self) -> Option<&ImageF> {
        self.shadow.as_ref()
    }
}

fn check_shadow(shadow: &ImageF) -> Result<()> {
    if shadow.channels() != 1 {
        return Err(Error::invalid(format!(
            "shadow map must be single-channel, got {} channels",
            shadow.channels()
        )));
    }
    Ok(())
}

/// Few iterations at full resolution: softens hard shadow-map edges while
/// keeping their shape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShadowParams {
    iterations: usize,
    lambda: f32,
}

impl ShadowParams {
    pub fn new(iterations: usize, lambda: f32) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::invalid("shadow pass needs at least one iteration"));
        }
        DiffusionParams::new(lambda, iterations)?;
        Ok(Self { iterations, lambda })
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn lambda(&self) -> f32 {
        self.lambda
    }
}

impl Default for ShadowParams {
    fn default() -> Self {
        Self {
            iterations: 3,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

/// `filter * camera`, then times `shadow` broadcast over the RGB channels.
pub fn composite(filter: &ImageF, camera: &ImageF, shadow: Option<&ImageF>) -> Result<ImageF> {
    let lit = multiply(filter, camera)?;
    match shadow {
        Some(s) => {
            check_shadow(s)?;
            multiply(&lit, s)
        }
        None => Ok(lit),
    }
}

pub fn shadow_pass(shadow: &ImageF, guidance: &GuidanceField, params: &ShadowParams) -> Result<ImageF> {
    check_shadow(shadow)?;
    if !shadow.same_dims(guidance.features()) {
        return Err(Error::mismatch("shadow and guidance dimensions differ"));
    }
    shadow_pass_with_coefficients(shadow, &build_coefficients(guidance), params)
}

pub fn shadow_pass_with_coefficients(
    shadow: &ImageF,
    coeffs: &CoefficientField,
    params: &ShadowParams,
) -> Result<ImageF> {
    check_shadow(shadow)?;
    diffusion::run(shadow, coeffs, DiffusionParams::new(params.lambda, params.iterations)?)
}

/// Refines the filter with the cascade and composites it with the camera.
///
/// With `shadow_params` set, the shadow map (if any) first goes through
/// [`shadow_pass`]; without it the map is multiplied in as given.
pub fn relight(
    inputs: &RelightInputs,
    guidance: &GuidanceField,
    schedule: &CascadeSchedule,
    shadow_params: Option<&ShadowParams>,
) -> Result<ImageF> {
    if !guidance.features().same_dims(&inputs.camera) {
        return Err(Error::mismatch(format!(
            "guidance {}x{} vs camera {}x{}",
            guidance.width(),
            guidance.height(),
            inputs.camera.width(),
            inputs.camera.height()
        )));
    }
    relight_with_coefficients(inputs, &build_coefficients(guidance), schedule, shadow_params)
}

pub fn relight_with_coefficients(
    inputs: &RelightInputs,
    coeffs: &CoefficientField,
    schedule: &CascadeSchedule,
    shadow_params: Option<&ShadowParams>,
) -> Result<ImageF> {
    let refined = cascade_with_coefficients(&inputs.filter, coeffs, schedule)?;
    let shadow = match (&inputs.shadow, shadow_params) {
        (Some(s), Some(p)) => Some(shadow_pass_with_coefficients(s, coeffs, p)?),
        (Some(s), None) => Some(s.clone()),
        (None, _) => None,
    };
    composite(&refined, &inputs.camera, shadow.as_ref())
}
