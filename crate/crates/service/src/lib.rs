//! HTTP front end: one scene per server, relit per request.
//!
//! - `GET /scene`: the current scene document
//! - `PUT /scene`: replace it (204; 400 names the offending field)
//! - `POST /relight[?raw=true]`: PNG frame for a [`RelightRequest`], with
//!   `X-Refine-Ms` and `X-Total-Ms` timing headers (400 bad request, 422 too
//!   many lights)
//!
//! Renders run on blocking threads behind a semaphore sized to the worker
//! count. The camera frame and its coefficient field are cached per scene;
//! a `PUT` swaps the scene and drops the cache in one write.

pub mod pipeline;

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderName, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use relight_core::compose::ShadowParams;
use relight_core::guidance::{build_coefficients, rgb_guidance, CoefficientField, GuidanceField, DEFAULT_KAPPA};
use relight_core::io::{encode_png, BitDepth};
use relight_core::synth::SceneSpec;
use relight_core::{Error, ImageF};
use serde::Deserialize;
use tokio::sync::Semaphore;
use tower_http::cors::{Any, CorsLayer};

pub use pipeline::{GuidanceMode, Intermediates, Plan, RelightRequest, RequestError, MAX_LIGHTS};

pub const REFINE_MS: &str = "x-refine-ms";
pub const TOTAL_MS: &str = "x-total-ms";

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub workers: usize,
    /// Reuse the camera render and coefficients between requests.
    pub cache: bool,
    pub kappa: f32,
    pub shadow: ShadowParams,
    /// Feature map for `guidance-mode: gadf`.
    pub features: Option<GuidanceField>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cache: true,
            kappa: DEFAULT_KAPPA,
            shadow: ShadowParams::default(),
            features: None,
        }
    }
}

struct Frame {
    camera: ImageF,
    coeffs: CoefficientField,
}

struct Session {
    scene: Arc<SceneSpec>,
    frame: Option<Arc<Frame>>,
}

pub struct AppState {
    session: RwLock<Session>,
    config: ServiceConfig,
    feature_coeffs: Option<CoefficientField>,
    permits: Semaphore,
}

impl AppState {
    pub fn new(scene: SceneSpec, config: ServiceConfig) -> relight_core::Result<Arc<Self>> {
        scene.validate()?;
        let feature_coeffs = config.features.as_ref().map(build_coefficients);
        Ok(Arc::new(Self {
            session: RwLock::new(Session {
                scene: Arc::new(scene),
                frame: None,
            }),
            permits: Semaphore::new(config.workers.max(1)),
            config,
            feature_coeffs,
        }))
    }

    pub fn scene(&self) -> Arc<SceneSpec> {
        self.session.read().unwrap().scene.clone()
    }

    fn snapshot(&self) -> (Arc<SceneSpec>, Option<Arc<Frame>>) {
        let s = self.session.read().unwrap();
        (s.scene.clone(), s.frame.clone())
    }

    fn replace_scene(&self, scene: SceneSpec) {
        let mut s = self.session.write().unwrap();
        s.scene = Arc::new(scene);
        s.frame = None;
    }

    /// Cached frame for `scene`, built on a miss. The cache is only filled
    /// if the scene was not replaced in the meantime.
    fn frame_for(&self, scene: &Arc<SceneSpec>, cached: Option<Arc<Frame>>) -> relight_core::Result<Arc<Frame>> {
        if let (true, Some(f)) = (self.config.cache, cached) {
            return Ok(f);
        }
        let camera = pipeline::camera_frame(scene)?;
        let coeffs = build_coefficients(&rgb_guidance(&camera, self.config.kappa)?);
        let frame = Arc::new(Frame { camera, coeffs });
        if self.config.cache {
            let mut s = self.session.write().unwrap();
            if Arc::ptr_eq(&s.scene, scene) {
                s.frame = Some(frame.clone());
            }
        }
        Ok(frame)
    }
}

/// Router with CORS open to any origin; the timing headers are exposed.
pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(Any)
        .allow_methods(Any)
        .allow_headers(Any)
        .expose_headers([HeaderName::from_static(REFINE_MS), HeaderName::from_static(TOTAL_MS)]);
    Router::new()
        .route("/scene", get(get_scene).put(put_scene))
        .route("/relight", post(post_relight))
        .layer(cors)
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(addr).await
}

fn error_response(status: StatusCode, path: Option<&str>, message: &str) -> Response {
    let body = match path {
        Some(p) => serde_json::json!({ "error": message, "path": p }),
        None => serde_json::json!({ "error": message }),
    };
    (status, Json(body)).into_response()
}

impl IntoResponse for RequestError {
    fn into_response(self) -> Response {
        match &self {
            RequestError::Invalid { path, message } => error_response(StatusCode::BAD_REQUEST, Some(path), message),
            RequestError::TooManyLights(_) => {
                error_response(StatusCode::UNPROCESSABLE_ENTITY, Some("lights"), &self.to_string())
            }
        }
    }
}

fn core_error(e: Error) -> Response {
    match e {
        Error::Validation { path, message } => error_response(StatusCode::BAD_REQUEST, Some(&path), &message),
        Error::InvalidArgument(_) | Error::DimensionMismatch(_) => {
            error_response(StatusCode::BAD_REQUEST, None, &e.to_string())
        }
        other => error_response(StatusCode::INTERNAL_SERVER_ERROR, None, &other.to_string()),
    }
}

/// JSON body into `T`, reporting the failing field as a dotted path.
#[allow(clippy::result_large_err)]
fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, Response> {
    let mut de = serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { None } else { Some(path) };
        error_response(StatusCode::BAD_REQUEST, path.as_deref(), &e.inner().to_string())
    })
}

async fn get_scene(State(state): State<Arc<AppState>>) -> Json<SceneSpec> {
    Json((*state.scene()).clone())
}

async fn put_scene(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let scene: SceneSpec = match parse_body(&body) {
        Ok(s) => s,
        Err(r) => return r,
    };
    if let Err(e) = scene.validate() {
        return core_error(e);
    }
    state.replace_scene(scene);
    StatusCode::NO_CONTENT.into_response()
}

#[derive(Debug, Default, Deserialize)]
struct RelightQuery {
    #[serde(default)]
    raw: bool,
}

async fn post_relight(State(state): State<Arc<AppState>>, Query(q): Query<RelightQuery>, body: Bytes) -> Response {
    let started = Instant::now();
    let request: RelightRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(r) => return r,
    };
    let (scene, cached) = state.snapshot();
    let plan = match request.plan(&scene) {
        Ok(p) => p,
        Err(e) => return e.into_response(),
    };
    if plan.guidance == GuidanceMode::Gadf {
        let Some(f) = &state.config.features else {
            return error_response(StatusCode::BAD_REQUEST, Some("guidance-mode"), "server has no feature map loaded");
        };
        let res = scene.camera.resolution;
        if (f.width(), f.height()) != (res.width, res.height) {
            return error_response(
                StatusCode::BAD_REQUEST,
                Some("guidance-mode"),
                &format!("feature map is {}x{} but the scene renders {}x{}", f.width(), f.height(), res.width, res.height),
            );
        }
    }

    let Ok(_permit) = state.permits.acquire().await else {
        return error_response(StatusCode::SERVICE_UNAVAILABLE, None, "shutting down");
    };
    let worker = state.clone();
    let job = tokio::task::spawn_blocking(move || -> relight_core::Result<(Vec<u8>, f64)> {
        let frame = worker.frame_for(&scene, cached)?;
        let inputs = Intermediates::build(&scene, frame.camera.clone(), &plan)?;
        let coeffs = match plan.guidance {
            GuidanceMode::Rgb => &frame.coeffs,
            GuidanceMode::Gadf => worker.feature_coeffs.as_ref().expect("checked above"),
        };
        let t = Instant::now();
        let out = inputs.relight(coeffs, &plan.schedule, &worker.config.shadow, q.raw)?;
        let refine_ms = t.elapsed().as_secs_f64() * 1e3;
        Ok((encode_png(&out, BitDepth::Eight)?, refine_ms))
    });
    let (png, refine_ms) = match job.await {
        Ok(Ok(v)) => v,
        Ok(Err(e)) => return core_error(e),
        Err(e) => return error_response(StatusCode::INTERNAL_SERVER_ERROR, None, &e.to_string()),
    };
    let total_ms = started.elapsed().as_secs_f64() * 1e3;
    let ms = |v: f64| HeaderValue::from_str(&format!("{v:.3}")).expect("ascii");
    (
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("image/png")),
            (HeaderName::from_static(REFINE_MS), ms(refine_ms)),
            (HeaderName::from_static(TOTAL_MS), ms(total_ms)),
        ],
        png,
    )
        .into_response()
}
