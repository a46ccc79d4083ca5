use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use relight_core::compose::composite;
use relight_core::guidance::GuidanceField;
use relight_core::io::{decode_png, encode_png, quantize_to, BitDepth};
use relight_core::synth::{Light, SceneSpec, Shape, Vec3};
use relight_core::ImageF;
use relight_service::pipeline::camera_frame;
use relight_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn demo_scene() -> SceneSpec {
    let mut s = SceneSpec::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenes/demo.json")).unwrap();
    s.camera.resolution.width = 96;
    s.camera.resolution.height = 72;
    s
}

fn app_with(scene: SceneSpec, config: ServiceConfig) -> (Router, Arc<AppState>) {
    let state = AppState::new(scene, config).unwrap();
    (router(state.clone()), state)
}

fn app() -> Router {
    app_with(demo_scene(), ServiceConfig::default()).0
}

struct Reply {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap()
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

fn lamp(x: f64) -> Value {
    json!({ "type": "point", "position": [x, 1.8, 1.0], "intensity": [2.0, 1.6, 1.2] })
}

#[tokio::test]
async fn get_scene_returns_startup_document() {
    let r = call(&app(), "GET", "/scene", None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.headers["content-type"], "application/json");
    let scene: SceneSpec = serde_json::from_slice(&r.body).unwrap();
    assert_eq!(scene, demo_scene());
}

#[tokio::test]
async fn put_scene_validates_with_field_paths() {
    let app = app();
    let mut doc = serde_json::to_value(demo_scene()).unwrap();
    doc["camera"]["vertical-fov"] = json!(190.0);
    let r = call(&app, "PUT", "/scene", Some(doc)).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["path"], "camera.vertical-fov");

    let mut doc = serde_json::to_value(demo_scene()).unwrap();
    doc["primitives"][3]["radius"] = json!("big");
    let r = call(&app, "PUT", "/scene", Some(doc)).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert!(r.json()["path"].as_str().unwrap().starts_with("primitives[3]"), "{}", r.json());

    let mut doc = serde_json::to_value(demo_scene()).unwrap();
    doc["lights"] = json!([]);
    let r = call(&app, "PUT", "/scene", Some(doc)).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["path"], "lights");

    let r = call(&app, "GET", "/scene", None).await;
    assert_eq!(serde_json::from_slice::<SceneSpec>(&r.body).unwrap(), demo_scene());
}

#[tokio::test]
async fn put_scene_changes_geometry() {
    let app = app();
    let req = json!({ "lights": [lamp(0.0)] });
    let before = call(&app, "POST", "/relight", Some(req.clone())).await;
    assert_eq!(before.status, StatusCode::OK);

    let mut moved = demo_scene();
    if let Shape::Sphere { center, .. } = &mut moved.primitives[3].shape {
        center.0 -= 0.8;
    }
    let r = call(&app, "PUT", "/scene", Some(serde_json::to_value(&moved).unwrap())).await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);
    let got: SceneSpec = serde_json::from_slice(&call(&app, "GET", "/scene", None).await.body).unwrap();
    assert_eq!(got, moved);

    let after = call(&app, "POST", "/relight", Some(req.clone())).await;
    let (a, _) = decode_png(&before.body).unwrap();
    let (b, _) = decode_png(&after.body).unwrap();
    let changed = a.data().iter().zip(b.data()).filter(|(x, y)| x != y).count();
    assert!(changed > 100, "only {changed} samples changed");

    // re-PUT of the same document is idempotent
    call(&app, "PUT", "/scene", Some(serde_json::to_value(&moved).unwrap())).await;
    let again = call(&app, "POST", "/relight", Some(req)).await;
    assert_eq!(again.body, after.body);
}

#[tokio::test]
async fn relight_is_deterministic_png_with_timings() {
    let app = app();
    let req = json!({ "lights": [lamp(-0.5), lamp(0.7)], "time-of-day": 10.5 });
    let a = call(&app, "POST", "/relight", Some(req.clone())).await;
    let b = call(&app, "POST", "/relight", Some(req)).await;
    assert_eq!(a.status, StatusCode::OK);
    assert_eq!(a.headers["content-type"], "image/png");
    for h in ["x-refine-ms", "x-total-ms"] {
        let v: f64 = a.headers[h].to_str().unwrap().parse().unwrap();
        assert!(v >= 0.0);
    }
    assert_eq!(a.body, b.body);
    let (img, depth) = decode_png(&a.body).unwrap();
    assert_eq!((img.width(), img.height(), img.channels(), depth), (96, 72, 3, BitDepth::Eight));
}

#[tokio::test]
async fn zero_lights_give_ambient_composite() {
    let scene = demo_scene();
    let app = app_with(scene.clone(), ServiceConfig::default()).0;
    let req = json!({ "error-model": { "silhouette-shift": 0, "dilation": 0, "boundary-noise-amplitude": 0.0 } });
    let r = call(&app, "POST", "/relight", Some(req)).await;
    assert_eq!(r.status, StatusCode::OK);

    let camera = camera_frame(&scene).unwrap();
    let ambient = ImageF::filled(96, 72, 3, scene.ambient.0 as f32).unwrap();
    let ambient = quantize_to(&ambient, BitDepth::Sixteen);
    let expect = composite(&ambient, &camera, None).unwrap();
    assert_eq!(r.body, encode_png(&expect, BitDepth::Eight).unwrap());
}

#[tokio::test]
async fn raw_skips_refinement() {
    let app = app();
    let req = json!({ "lights": [lamp(0.2)] });
    let refined = call(&app, "POST", "/relight", Some(req.clone())).await;
    let raw = call(&app, "POST", "/relight?raw=true", Some(req.clone())).await;
    assert_eq!(raw.status, StatusCode::OK);
    assert_ne!(raw.body, refined.body);
    let raw_false = call(&app, "POST", "/relight?raw=false", Some(req)).await;
    assert_eq!(raw_false.body, refined.body);
}

#[tokio::test]
async fn bad_requests() {
    let app = app();
    let many: Vec<Value> = (0..17).map(|i| lamp(i as f64 * 0.1)).collect();
    let r = call(&app, "POST", "/relight", Some(json!({ "lights": many }))).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    let sixteen: Vec<Value> = (0..16).map(|i| lamp(i as f64 * 0.1)).collect();
    let r = call(&app, "POST", "/relight", Some(json!({ "lights": sixteen }))).await;
    assert_eq!(r.status, StatusCode::OK);

    for (body, path) in [
        (json!({ "time-of-day": 24.0 }), "time-of-day"),
        (json!({ "time-of-day": -1 }), "time-of-day"),
        (json!({ "schedule": "3:10" }), "schedule"),
        (json!({ "guidance-mode": "gadf" }), "guidance-mode"),
        (json!({ "guidance-mode": "depth" }), "guidance-mode"),
        (json!({ "error-model": { "boundary-noise-amplitude": 2.0 } }), "error-model"),
        (json!({ "lights": [{ "type": "point", "position": [0, 1, 0] }] }), "lights[0]"),
        (json!({ "lights": [{ "type": "directional", "direction": [0, 0, 0], "intensity": [1, 1, 1] }] }), "lights[0].direction"),
        (json!({ "colour": 1 }), ""),
    ] {
        let r = call(&app, "POST", "/relight", Some(body.clone())).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "{body}");
        if !path.is_empty() {
            let got = r.json()["path"].as_str().unwrap_or_default().to_string();
            assert!(got.starts_with(path), "{body}: path {got:?}");
        }
    }

    let r = app
        .clone()
        .oneshot(Request::post("/relight").body(Body::from("{not json")).unwrap())
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn cache_does_not_change_output() {
    let scene = demo_scene();
    let cached = app_with(scene.clone(), ServiceConfig::default()).0;
    let uncached = app_with(scene.clone(), ServiceConfig { cache: false, ..Default::default() }).0;
    let mut moved = scene.clone();
    moved.primitives.pop();
    for req in [json!({ "lights": [lamp(0.3)] }), json!({ "time-of-day": 8.0 }), json!({ "lights": [lamp(-1.0)], "time-of-day": 22.0 })] {
        let a = call(&cached, "POST", "/relight", Some(req.clone())).await;
        let b = call(&uncached, "POST", "/relight", Some(req.clone())).await;
        assert_eq!(a.body, b.body);
    }
    for app in [&cached, &uncached] {
        call(app, "PUT", "/scene", Some(serde_json::to_value(&moved).unwrap())).await;
    }
    let req = json!({ "lights": [lamp(0.3)] });
    assert_eq!(
        call(&cached, "POST", "/relight", Some(req.clone())).await.body,
        call(&uncached, "POST", "/relight", Some(req)).await.body
    );
}

#[tokio::test]
async fn gadf_features_equal_to_camera_match_rgb_mode() {
    let scene = demo_scene();
    let camera = camera_frame(&scene).unwrap();
    let features = GuidanceField::new(camera, relight_core::guidance::DEFAULT_KAPPA).unwrap();
    let app = app_with(scene, ServiceConfig { features: Some(features), ..Default::default() }).0;
    let rgb = call(&app, "POST", "/relight", Some(json!({ "lights": [lamp(0.0)] }))).await;
    let gadf = call(&app, "POST", "/relight", Some(json!({ "lights": [lamp(0.0)], "guidance-mode": "gadf" }))).await;
    assert_eq!(gadf.status, StatusCode::OK);
    assert_eq!(rgb.body, gadf.body);

    let mut bigger = demo_scene();
    bigger.camera.resolution.width = 100;
    call(&app, "PUT", "/scene", Some(serde_json::to_value(&bigger).unwrap())).await;
    let r = call(&app, "POST", "/relight", Some(json!({ "guidance-mode": "gadf" }))).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn cors_exposes_timing_headers() {
    let resp = app()
        .oneshot(
            Request::post("/relight")
                .header("origin", "http://localhost:5173")
                .body(Body::from("{}"))
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
    let exposed = resp.headers()["access-control-expose-headers"].to_str().unwrap().to_ascii_lowercase();
    assert!(exposed.contains("x-refine-ms") && exposed.contains("x-total-ms"));

    let pre = app()
        .oneshot(
            Request::options("/scene")
                .header("origin", "http://localhost:5173")
                .header("access-control-request-method", "PUT")
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert!(pre.status().is_success());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_relights_see_consistent_scenes() {
    let scene = demo_scene();
    let mut moved = scene.clone();
    moved.primitives.remove(2);
    moved.lights = vec![Light::Point { position: Vec3(1.0, 2.0, 1.0), intensity: Vec3::splat(3.0) }];
    let req = json!({ "lights": [lamp(0.4)] });

    let reference = |s: SceneSpec| {
        let req = req.clone();
        async move { call(&app_with(s, ServiceConfig { cache: false, ..Default::default() }).0, "POST", "/relight", Some(req)).await.body }
    };
    let old = reference(scene.clone()).await;
    let new = reference(moved.clone()).await;
    assert_ne!(old, new);

    let (app, _) = app_with(scene, ServiceConfig { workers: 3, ..Default::default() });
    let mut tasks = Vec::new();
    for i in 0..12 {
        let app = app.clone();
        let req = req.clone();
        let moved = moved.clone();
        tasks.push(tokio::spawn(async move {
            if i == 5 {
                let r = call(&app, "PUT", "/scene", Some(serde_json::to_value(&moved).unwrap())).await;
                assert_eq!(r.status, StatusCode::NO_CONTENT);
                None
            } else {
                Some(call(&app, "POST", "/relight", Some(req)).await.body)
            }
        }));
    }
    for t in tasks {
        if let Some(body) = t.await.unwrap() {
            assert!(body == old || body == new, "response matches neither scene");
        }
    }
    assert_eq!(call(&app, "POST", "/relight", Some(req)).await.body, new);
}

#[tokio::test]
async fn serves_over_tcp() {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};

    let state = AppState::new(demo_scene(), ServiceConfig::default()).unwrap();
    let listener = relight_service::bind("127.0.0.1:0".parse().unwrap()).await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(relight_service::serve(listener, state, async {
        let _ = stop_rx.await;
    }));

    let body = serde_json::to_vec(&json!({ "lights": [lamp(0.0)] })).unwrap();
    let mut sock = tokio::net::TcpStream::connect(addr).await.unwrap();
    let head = format!(
        "POST /relight HTTP/1.1\r\nhost: {addr}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
        body.len()
    );
    sock.write_all(head.as_bytes()).await.unwrap();
    sock.write_all(&body).await.unwrap();
    let mut resp = Vec::new();
    sock.read_to_end(&mut resp).await.unwrap();
    let split = resp.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    let head = String::from_utf8_lossy(&resp[..split]).to_ascii_lowercase();
    assert!(head.starts_with("http/1.1 200"), "{head}");
    assert!(head.contains("x-refine-ms:"));
    let png = &resp[split + 4..];
    assert_eq!(&png[1..4], b"PNG");

    stop_tx.send(()).unwrap();
    server.await.unwrap().unwrap();
}
