use std::path::PathBuf;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use decarb_gateway::api::{router, AppState};
use decarb_gateway::GatewayConfig;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn app() -> Router {
    let cfg = GatewayConfig {
        data_dir: data_dir(),
        ..GatewayConfig::default()
    };
    router(AppState::new(cfg))
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>, key: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(k) = key {
        req = req.header("Idempotency-Key", k);
    }
    let body = match body {
        Some(v) => Body::from(v.to_string()),
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    send(app, "GET", uri, None, None).await
}

/// NDJSON lines of a stream response, read to its end.
async fn stream_lines(app: Router, uri: String) -> Vec<Value> {
    let resp = app.oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

async fn create(app: &Router, body: Value) -> String {
    let (s, v) = send(app, "POST", "/v1/runs", Some(body), None).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["state"], "Created");
    v["run_id"].as_str().unwrap().to_string()
}

async fn wait_for(app: &Router, id: &str, state: &str) -> Value {
    let t0 = Instant::now();
    loop {
        let (_, v) = get(app, &format!("/v1/runs/{id}")).await;
        if v["state"] == state {
            return v;
        }
        assert!(t0.elapsed() < Duration::from_secs(120), "run {id} stuck in {}", v["state"]);
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

fn small(extra: Value) -> Value {
    let mut v = json!({ "n_agents": 400, "reference": false });
    for (k, x) in extra.as_object().unwrap() {
        v[k] = x.clone();
    }
    v
}

fn ticks(snaps: &[Value]) -> Vec<u64> {
    snaps.iter().map(|s| s["tick"].as_u64().unwrap()).collect()
}

#[tokio::test(flavor = "multi_thread")]
async fn read_only_endpoints() {
    let app = app();
    let (s, v) = get(&app, "/v1/health").await;
    assert_eq!((s, v["status"].as_str()), (StatusCode::OK, Some("ok")));

    let (s, v) = get(&app, "/v1/levers/bounds").await;
    assert_eq!(s, StatusCode::OK);
    let bounds = v["bounds"].as_array().unwrap();
    assert_eq!(bounds.len(), 5);
    for b in bounds {
        assert!(b["min"].as_f64().unwrap() <= b["default"].as_f64().unwrap());
        assert!(b["default"].as_f64().unwrap() <= b["max"].as_f64().unwrap());
    }

    let (s, v) = get(&app, "/v1/baseline").await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["on_road_total_mtco2e"].as_f64().unwrap() > 0.0);

    for uri in ["/v1/baseline/emissions.geojson", "/v1/equity/tracts.geojson", "/v1/worlds/demo/zones.geojson"] {
        let (s, v) = get(&app, uri).await;
        assert_eq!(s, StatusCode::OK, "{uri}");
        assert_eq!(v["type"], "FeatureCollection", "{uri}");
        let features = v["features"].as_array().unwrap();
        assert!(!features.is_empty(), "{uri}");
        assert!(features.iter().all(|f| f["geometry"].is_object()), "{uri} has features without geometry");
    }

    let (s, v) = get(&app, "/v1/equity/tracts").await;
    assert_eq!((s, v["tracts"].as_u64()), (StatusCode::OK, Some(100)));
    assert_eq!(v["charger_ratios"][0]["display"], "1:22.0");
    assert_eq!(v["charger_ratios"][1]["display"], "1:25.8");

    let (s, v) = get(&app, "/v1/worlds/demo/presets").await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["presets"].as_object().unwrap().contains_key("scenario4-mobility"));
}

#[tokio::test(flavor = "multi_thread")]
async fn scenario_evaluation() {
    let app = app();
    let (s, v) = send(&app, "POST", "/v1/scenarios/evaluate", Some(json!({ "scenarios": ["scenario4", "bau"] })), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let evals = v["evaluations"].as_array().unwrap();
    assert_eq!(evals.len(), 2);
    assert!((evals[0]["final_reduction"].as_f64().unwrap() - 0.70).abs() < 0.005);
    assert!(evals[1]["final_reduction"].as_f64().unwrap() < 0.0);

    let (s, v) = send(&app, "POST", "/v1/scenarios/evaluate", Some(json!({ "scenarios": ["nope"] })), None).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (s, _) = send(&app, "POST", "/v1/scenarios/evaluate", Some(json!({ "scenarios": ["../../etc/passwd"] })), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, v) = send(&app, "POST", "/v1/scenarios/evaluate", Some(json!({})), None).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("validation_failed")));
}

#[tokio::test(flavor = "multi_thread")]
async fn errors_use_the_error_shape() {
    let app = app();
    for (method, uri, body, status) in [
        ("GET", "/v1/runs/run-999", None, StatusCode::NOT_FOUND),
        ("GET", "/v1/nowhere", None, StatusCode::NOT_FOUND),
        ("POST", "/v1/runs", Some(json!({ "warp": 9 })), StatusCode::UNPROCESSABLE_ENTITY),
        ("POST", "/v1/runs", Some(json!({ "world": "atlantis" })), StatusCode::UNPROCESSABLE_ENTITY),
        ("POST", "/v1/runs", Some(json!({ "levers": { "congestion_price": 500.0 } })), StatusCode::UNPROCESSABLE_ENTITY),
        ("GET", "/v1/baseline?dataset=missing", None, StatusCode::NOT_FOUND),
    ] {
        let (s, v) = send(&app, method, uri, body, None).await;
        assert_eq!(s, status, "{method} {uri}: {v}");
        assert!(v["code"].is_string() && v["message"].is_string(), "{v}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn run_lifecycle_and_snapshot_cadence() {
    let app = app();
    let id = create(&app, small(json!({ "cadence": 60 }))).await;
    let (s, v) = send(&app, "POST", &format!("/v1/runs/{id}/pause"), None, None).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("conflict")));

    let (s, v) = send(&app, "POST", &format!("/v1/runs/{id}/start"), None, None).await;
    assert_eq!((s, v["state"].as_str()), (StatusCode::OK, Some("Running")));
    let done = wait_for(&app, &id, "Completed").await;
    assert!(done["summary"]["total_vmt"].as_f64().unwrap() > 0.0);

    let (_, v) = get(&app, &format!("/v1/runs/{id}/snapshots")).await;
    let snaps = v["snapshots"].as_array().unwrap();
    let t = ticks(snaps);
    // 24 hourly snapshots from tick 0, then the final one
    assert_eq!(snaps.len(), 25);
    assert_eq!(&t[..24], &(0..24).map(|h| h * 60).collect::<Vec<_>>()[..]);
    assert!(t[24] >= 1440);
    assert!(snaps[..24].iter().all(|s| s["status"] == "Running"));
    assert_eq!(snaps[24]["status"], "Completed");

    let (_, v) = get(&app, &format!("/v1/runs/{id}/snapshots?since=600")).await;
    let after = ticks(v["snapshots"].as_array().unwrap());
    assert_eq!(after, t.iter().copied().filter(|&x| x > 600).collect::<Vec<_>>());

    // a finished run refuses further changes
    let (s, v) = send(&app, "PATCH", &format!("/v1/runs/{id}/levers"), Some(json!({ "congestion_price": 5.0 })), None).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("conflict")));
    let (s, _) = send(&app, "POST", &format!("/v1/runs/{id}/start"), None, None).await;
    assert_eq!(s, StatusCode::CONFLICT);

    let (s, v) = get(&app, &format!("/v1/runs/{id}/emissions.geojson")).await;
    assert_eq!((s, v["type"].as_str()), (StatusCode::OK, Some("FeatureCollection")));
    let (s, v) = get(&app, &format!("/v1/runs/{id}/result")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["total_vmt"], done["summary"]["total_vmt"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn pause_levers_and_resume() {
    let app = app();
    let id = create(&app, small(json!({ "cadence": 30, "tick_ms": 1 }))).await;
    send(&app, "POST", &format!("/v1/runs/{id}/start"), None, None).await;
    let (_, v) = get(&app, &format!("/v1/runs/{id}/snapshots?since=100&wait_ms=20000")).await;
    assert!(!v["snapshots"].as_array().unwrap().is_empty());
    let (s, _) = send(&app, "POST", &format!("/v1/runs/{id}/pause"), None, None).await;
    assert_eq!(s, StatusCode::OK);
    let (_, a) = get(&app, &format!("/v1/runs/{id}")).await;
    tokio::time::sleep(Duration::from_millis(150)).await;
    let (_, b) = get(&app, &format!("/v1/runs/{id}")).await;
    assert_eq!(a["last_tick"], b["last_tick"], "paused run advanced");
    assert_eq!(b["state"], "Paused");

    let (s, v) = send(&app, "PATCH", &format!("/v1/runs/{id}/levers"), Some(json!({ "congestion_price": "high" })), None).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("validation_failed")));
    let (s, _) = send(&app, "PATCH", &format!("/v1/runs/{id}/levers"), Some(json!({ "parking_search_minutes": -3.0 })), None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, change) = send(&app, "PATCH", &format!("/v1/runs/{id}/levers"), Some(json!({ "congestion_price": 8.0 })), None).await;
    assert_eq!(s, StatusCode::OK, "{change}");
    assert_eq!(change["levers"]["congestion_price"], 8.0);
    assert!(change["effective_tick"].as_u64().unwrap() > 100);

    send(&app, "POST", &format!("/v1/runs/{id}/start"), None, None).await;
    let done = wait_for(&app, &id, "Completed").await;
    let history = done["lever_history"].as_array().unwrap();
    assert_eq!(history.len(), 2);
    assert_eq!(history[1]["levers"]["congestion_price"], 8.0);

    let (_, v) = get(&app, &format!("/v1/runs/{id}/snapshots")).await;
    let snaps = v["snapshots"].as_array().unwrap();
    let eff = change["effective_tick"].as_u64().unwrap();
    for s in snaps {
        let expect = if s["tick"].as_u64().unwrap() >= eff { 8.0 } else { 0.0 };
        assert_eq!(s["levers"]["congestion_price"], expect, "tick {}", s["tick"]);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn two_subscribers_see_the_same_stream() {
    let app = app();
    let id = create(&app, small(json!({ "cadence": 120 }))).await;
    let a = tokio::spawn(stream_lines(app.clone(), format!("/v1/runs/{id}/stream?since=-1")));
    let b = tokio::spawn(stream_lines(app.clone(), format!("/v1/runs/{id}/snapshots?stream=1")));
    tokio::time::sleep(Duration::from_millis(50)).await;
    send(&app, "POST", &format!("/v1/runs/{id}/start"), None, None).await;
    let (a, b) = (a.await.unwrap(), b.await.unwrap());
    assert_eq!(a, b);
    assert_eq!(a.len(), 13);
    assert_eq!(a.last().unwrap()["status"], "Completed");
    let t = ticks(&a);
    assert!(t.windows(2).all(|w| w[0] < w[1]));

    let (_, v) = get(&app, &format!("/v1/runs/{id}/snapshots")).await;
    assert_eq!(Value::Array(a), v["snapshots"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn late_subscriber_catches_up_from_latest() {
    let app = app();
    let id = create(&app, small(json!({ "cadence": 10, "tick_ms": 1 }))).await;
    send(&app, "POST", &format!("/v1/runs/{id}/start"), None, None).await;
    let (_, v) = get(&app, &format!("/v1/runs/{id}/snapshots?since=300&wait_ms=20000")).await;
    let seen = ticks(v["snapshots"].as_array().unwrap())[0];
    let lines = stream_lines(app.clone(), format!("/v1/runs/{id}/stream")).await;
    let t = ticks(&lines);
    assert!(t[0] >= seen, "catch-up frame {} older than {seen}", t[0]);
    assert!(t.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(lines.last().unwrap()["status"], "Completed");

    // after completion a fresh subscriber gets just the final snapshot
    let again = stream_lines(app.clone(), format!("/v1/runs/{id}/stream")).await;
    assert_eq!(again.len(), 1);
    assert_eq!(again[0], *lines.last().unwrap());
}

#[tokio::test(flavor = "multi_thread")]
async fn idempotent_create_and_start() {
    let app = app();
    let body = small(json!({ "seed": 3 }));
    let (s1, v1) = send(&app, "POST", "/v1/runs", Some(body.clone()), Some("k-1")).await;
    let (s2, v2) = send(&app, "POST", "/v1/runs", Some(body.clone()), Some("k-1")).await;
    assert_eq!((s1, s2), (StatusCode::CREATED, StatusCode::CREATED));
    assert_eq!(v1, v2);
    let (_, list) = get(&app, "/v1/runs").await;
    assert_eq!(list["runs"].as_array().unwrap().len(), 1);

    let (s, v) = send(&app, "POST", "/v1/runs", Some(small(json!({ "seed": 4 }))), Some("k-1")).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("conflict")));

    // a retried start is answered from the first attempt, not refused
    let id = v1["run_id"].as_str().unwrap();
    let uri = format!("/v1/runs/{id}/start");
    let (a, _) = send(&app, "POST", &uri, None, Some("k-2")).await;
    let (b, _) = send(&app, "POST", &uri, None, Some("k-2")).await;
    assert_eq!((a, b), (StatusCode::OK, StatusCode::OK));
    let (c, _) = send(&app, "POST", &uri, None, None).await;
    assert_eq!(c, StatusCode::CONFLICT);
    wait_for(&app, id, "Completed").await;
}

#[tokio::test(flavor = "multi_thread")]
async fn vmt_gauge_against_reference() {
    let app = app();
    let id = create(&app, json!({ "n_agents": 400, "cadence": 240, "levers": { "congestion_price": 15.0 } })).await;
    send(&app, "POST", &format!("/v1/runs/{id}/start"), None, None).await;
    wait_for(&app, &id, "Completed").await;
    let (_, v) = get(&app, &format!("/v1/runs/{id}/snapshots")).await;
    let last = v["snapshots"].as_array().unwrap().last().unwrap().clone();
    let g = &last["vmt_gauge"];
    assert!(g["reference_vmt"].as_f64().unwrap() > last["vmt"].as_f64().unwrap());
    assert!(g["reduction"].as_f64().unwrap() > 0.0);
}
