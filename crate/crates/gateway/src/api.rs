//! The `/v1` JSON API. Errors are `{code, message}` bodies; mutating
//! requests honour an `Idempotency-Key` header.

use std::collections::HashMap;
use std::io;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::Router;
use decarb_core::dataset::BaselineDataset;
use decarb_core::{GoalSet, ScenarioSpec};
use decarb_mobsim::LeverPatch;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::watch;

use crate::config::GatewayConfig;
use crate::error::GatewayError;
use crate::ops;
use crate::runs::{CreateRun, RunEvent, RunHandle, RunRegistry, RunState, StoredResponse};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
pub const NDJSON: &str = "application/x-ndjson";
/// Upper bound on a long-poll wait.
pub const MAX_WAIT_MS: u64 = 30_000;

pub struct AppState {
    pub registry: RunRegistry,
    datasets: Mutex<HashMap<String, Arc<BaselineDataset>>>,
}

pub type Shared = Arc<AppState>;

impl AppState {
    pub fn new(config: GatewayConfig) -> Shared {
        Arc::new(AppState {
            registry: RunRegistry::new(config),
            datasets: Mutex::new(HashMap::new()),
        })
    }

    fn config(&self) -> &GatewayConfig {
        &self.registry.config
    }

    fn dataset(&self, name: Option<&str>) -> Result<Arc<BaselineDataset>, GatewayError> {
        let name = name.unwrap_or(&self.config().baseline).to_string();
        plain_name(&name)?;
        if let Some(ds) = self.datasets.lock().expect("dataset cache poisoned").get(&name) {
            return Ok(Arc::clone(ds));
        }
        let ds = Arc::new(ops::load_baseline(self.config(), &name).map_err(|e| match e {
            GatewayError::Io(m) => GatewayError::NotFound(m),
            other => other,
        })?);
        self.datasets.lock().expect("dataset cache poisoned").insert(name, Arc::clone(&ds));
        Ok(ds)
    }
}

/// Names from requests address bundled data only, never arbitrary paths.
fn plain_name(name: &str) -> Result<(), GatewayError> {
    let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(GatewayError::Validation(format!("invalid name {name:?}")))
    }
}

pub struct ApiError(pub GatewayError);

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        ApiError(e)
    }
}

pub fn status_of(e: &GatewayError) -> StatusCode {
    match e {
        GatewayError::Usage(_) => StatusCode::BAD_REQUEST,
        GatewayError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
        GatewayError::NotFound(_) => StatusCode::NOT_FOUND,
        GatewayError::Conflict(_) => StatusCode::CONFLICT,
        GatewayError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

pub fn error_body(e: &GatewayError) -> Value {
    json!({ "code": e.code(), "message": e.to_string() })
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (status_of(&self.0), axum::Json(error_body(&self.0))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn ok_json<T: serde::Serialize>(status: StatusCode, body: &T) -> ApiResult {
    let v = serde_json::to_value(body).map_err(GatewayError::from)?;
    Ok((status, axum::Json(v)).into_response())
}

/// Run blocking work (file loads, whole-day simulations) off the runtime.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, GatewayError> + Send + 'static) -> Result<T, GatewayError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| GatewayError::Io(format!("worker task failed: {e}")))?
}

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, GatewayError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| GatewayError::Validation(format!("invalid request body: {e}")))
}

type Outcome = Result<(StatusCode, Value), GatewayError>;

fn to_response(status: StatusCode, body: Value) -> Response {
    (status, axum::Json(body)).into_response()
}

/// Execute a mutating request at most once per idempotency key. A retry
/// with the same method, path and body gets the stored response; the same
/// key on a different request is a conflict.
async fn idempotent<F>(state: &AppState, headers: &HeaderMap, method: &Method, uri: &Uri, body: &[u8], f: F) -> Response
where
    F: std::future::Future<Output = Outcome>,
{
    let key = headers.get(IDEMPOTENCY_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string);
    let Some(key) = key else {
        return match f.await {
            Ok((s, v)) => to_response(s, v),
            Err(e) => ApiError(e).into_response(),
        };
    };
    let fingerprint = format!("{method} {}\n{}", uri.path(), String::from_utf8_lossy(body));
    let slot = state.registry.idempotency_slot(&key);
    let mut stored = slot.lock().await;
    if let Some(s) = stored.as_ref() {
        if s.fingerprint != fingerprint {
            return ApiError(GatewayError::Conflict(format!("idempotency key {key} was used for a different request"))).into_response();
        }
        let status = StatusCode::from_u16(s.status).unwrap_or(StatusCode::OK);
        return to_response(status, s.body.clone());
    }
    let (status, body) = match f.await {
        Ok(ok) => ok,
        Err(e) => (status_of(&e), error_body(&e)),
    };
    // server faults are worth retrying, so they are not remembered
    if !status.is_server_error() {
        *stored = Some(StoredResponse {
            fingerprint,
            status: status.as_u16(),
            body: body.clone(),
        });
    }
    to_response(status, body)
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/baseline", get(get_baseline))
        .route("/v1/baseline/emissions.geojson", get(baseline_geojson))
        .route("/v1/scenarios", get(list_scenarios))
        .route("/v1/scenarios/evaluate", post(evaluate))
        .route("/v1/equity/tracts", get(equity_tracts))
        .route("/v1/equity/tracts.geojson", get(equity_geojson))
        .route("/v1/levers/bounds", get(lever_bounds))
        .route("/v1/worlds/{name}/zones.geojson", get(world_zones))
        .route("/v1/worlds/{name}/presets", get(world_presets))
        .route("/v1/runs", post(create_run).get(list_runs))
        .route("/v1/runs/{id}", get(get_run))
        .route("/v1/runs/{id}/start", post(start_run))
        .route("/v1/runs/{id}/pause", post(pause_run))
        .route("/v1/runs/{id}/levers", patch(patch_levers))
        .route("/v1/runs/{id}/snapshots", get(snapshots))
        .route("/v1/runs/{id}/stream", get(stream))
        .route("/v1/runs/{id}/result", get(run_result))
        .route("/v1/runs/{id}/emissions.geojson", get(run_geojson))
        .fallback(|| async { ApiError(GatewayError::NotFound("no such endpoint".into())) })
        .with_state(state)
}

async fn health(State(st): State<Shared>) -> ApiResult {
    ok_json(
        StatusCode::OK,
        &json!({ "status": "ok", "runs": st.registry.list().len(), "version": env!("CARGO_PKG_VERSION") }),
    )
}

type Params = Query<HashMap<String, String>>;

async fn get_baseline(State(st): State<Shared>, Query(q): Params) -> ApiResult {
    let report = blocking(move || ops::baseline(&*st.dataset(q.get("dataset").map(String::as_str))?)).await?;
    ok_json(StatusCode::OK, &report)
}

async fn baseline_geojson(State(st): State<Shared>, Query(q): Params) -> ApiResult {
    let geo = blocking(move || ops::baseline_geojson(&*st.dataset(q.get("dataset").map(String::as_str))?)).await?;
    ok_json(StatusCode::OK, &geo)
}

async fn list_scenarios(State(st): State<Shared>, Query(q): Params) -> ApiResult {
    let names = blocking(move || Ok(st.dataset(q.get("dataset").map(String::as_str))?.scenario_names()?)).await?;
    ok_json(StatusCode::OK, &json!({ "scenarios": names }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvaluateRequest {
    baseline: Option<String>,
    scenarios: Vec<String>,
    spec: Option<ScenarioSpec>,
    goals: Option<GoalSet>,
}

async fn evaluate(State(st): State<Shared>, body: Bytes) -> ApiResult {
    let req: EvaluateRequest = parse_body(&body)?;
    let reports = blocking(move || {
        let ds = st.dataset(req.baseline.as_deref())?;
        let mut specs = Vec::new();
        for name in &req.scenarios {
            plain_name(name)?;
            if !ds.scenario_path(name).is_file() {
                return Err(GatewayError::NotFound(format!("no bundled scenario named {name}")));
            }
            specs.push(ds.scenario(name)?);
        }
        specs.extend(req.spec);
        if specs.is_empty() {
            return Err(GatewayError::Validation("give `scenarios` or `spec`".into()));
        }
        specs
            .iter()
            .map(|s| ops::evaluate_scenario(&ds, s, req.goals.as_ref()))
            .collect::<Result<Vec<_>, _>>()
    })
    .await?;
    ok_json(StatusCode::OK, &json!({ "evaluations": reports }))
}

async fn equity_tracts(State(st): State<Shared>, Query(q): Params) -> ApiResult {
    let report = blocking(move || {
        let ds = st.dataset(q.get("dataset").map(String::as_str))?;
        ops::equity(&ds, &Default::default(), &ops::default_ratio_pairs())
    })
    .await?;
    ok_json(StatusCode::OK, &report)
}

async fn equity_geojson(State(st): State<Shared>, Query(q): Params) -> ApiResult {
    let geo = blocking(move || {
        let ds = st.dataset(q.get("dataset").map(String::as_str))?;
        let index = decarb_core::equity::compute_equity_index(&ds.tracts()?, &Default::default())?;
        ops::equity_geojson(&ds, &index)
    })
    .await?;
    ok_json(StatusCode::OK, &geo)
}

async fn lever_bounds(State(st): State<Shared>) -> ApiResult {
    ok_json(StatusCode::OK, &json!({ "bounds": st.config().effective_bounds()? }))
}

fn world_of(st: &AppState, name: &str) -> Result<Arc<decarb_mobsim::SimWorld>, GatewayError> {
    plain_name(name)?;
    st.registry.world(name, None).map_err(|e| match e {
        GatewayError::Io(m) => GatewayError::NotFound(m),
        other => other,
    })
}

async fn world_zones(State(st): State<Shared>, Path(name): Path<String>) -> ApiResult {
    let geo = blocking(move || Ok(ops::world_zones_geojson(&*world_of(&st, &name)?))).await?;
    ok_json(StatusCode::OK, &geo)
}

async fn world_presets(State(st): State<Shared>, Path(name): Path<String>) -> ApiResult {
    let presets = blocking(move || Ok(world_of(&st, &name)?.presets()?)).await?;
    ok_json(StatusCode::OK, &json!({ "presets": presets }))
}

async fn create_run(State(st): State<Shared>, method: Method, uri: Uri, headers: HeaderMap, body: Bytes) -> Response {
    let work = {
        let st = Arc::clone(&st);
        let body = body.clone();
        async move {
            let req: CreateRun = parse_body(&body)?;
            if let Some(w) = &req.world {
                plain_name(w)?;
            }
            let view = blocking(move || st.registry.create(req)).await?;
            Ok((StatusCode::CREATED, serde_json::to_value(view)?))
        }
    };
    idempotent(&st, &headers, &method, &uri, &body, work).await
}

async fn list_runs(State(st): State<Shared>) -> ApiResult {
    ok_json(StatusCode::OK, &json!({ "runs": st.registry.list() }))
}

async fn get_run(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult {
    ok_json(StatusCode::OK, &st.registry.get(&id)?.view())
}

async fn lifecycle(st: Shared, id: String, event: RunEvent, method: Method, uri: Uri, headers: HeaderMap, body: Bytes) -> Response {
    let work = async {
        let h = st.registry.get(&id)?;
        h.fire(event)?;
        Ok((StatusCode::OK, serde_json::to_value(h.view())?))
    };
    idempotent(&st, &headers, &method, &uri, &body, work).await
}

async fn start_run(State(st): State<Shared>, Path(id): Path<String>, method: Method, uri: Uri, headers: HeaderMap, body: Bytes) -> Response {
    lifecycle(st, id, RunEvent::Start, method, uri, headers, body).await
}

async fn pause_run(State(st): State<Shared>, Path(id): Path<String>, method: Method, uri: Uri, headers: HeaderMap, body: Bytes) -> Response {
    lifecycle(st, id, RunEvent::Pause, method, uri, headers, body).await
}

async fn patch_levers(State(st): State<Shared>, Path(id): Path<String>, method: Method, uri: Uri, headers: HeaderMap, body: Bytes) -> Response {
    let work = async {
        let h = st.registry.get(&id)?;
        if h.state().is_terminal() {
            return Err(GatewayError::Conflict(format!("run {id} is {:?}; levers are frozen", h.state())));
        }
        let patch: LeverPatch = serde_json::from_slice(&body).map_err(|e| GatewayError::Validation(format!("invalid lever patch: {e}")))?;
        let levers = h.latest_levers().merged(&patch)?;
        st.config().check_levers(&levers)?;
        let change = h.apply_levers(levers).await?;
        let mut v = serde_json::to_value(change)?;
        v["run_id"] = json!(id);
        Ok((StatusCode::OK, v))
    };
    idempotent(&st, &headers, &method, &uri, &body, work).await
}

fn since_param(q: &HashMap<String, String>) -> Result<Option<i64>, GatewayError> {
    q.get("since")
        .map(|s| s.parse::<i64>().map_err(|_| GatewayError::Validation(format!("since={s} is not an integer tick"))))
        .transpose()
}

fn wants_stream(q: &HashMap<String, String>, headers: &HeaderMap) -> bool {
    let flag = q.get("stream").is_some_and(|v| matches!(v.as_str(), "1" | "true"));
    let accept = headers.get(header::ACCEPT).and_then(|v| v.to_str().ok()).is_some_and(|a| a.contains(NDJSON));
    flag || accept
}

/// Snapshots after `since`. With `wait_ms`, an empty answer waits for the
/// next snapshot; with `stream=1` or an NDJSON accept header, the
/// response is a live stream instead.
async fn snapshots(State(st): State<Shared>, Path(id): Path<String>, Query(q): Params, headers: HeaderMap) -> ApiResult {
    let h = st.registry.get(&id)?;
    let since = since_param(&q)?;
    if wants_stream(&q, &headers) {
        return Ok(ndjson_stream(h, since));
    }
    let wait_ms = match q.get("wait_ms") {
        Some(v) => v
            .parse::<u64>()
            .map_err(|_| GatewayError::Validation(format!("wait_ms={v} is not a duration in ms")))?
            .min(MAX_WAIT_MS),
        None => 0,
    };
    let mut rx = h.subscribe();
    let deadline = tokio::time::Instant::now() + Duration::from_millis(wait_ms);
    loop {
        rx.borrow_and_update();
        let state = h.state();
        let snaps: Vec<_> = h.snapshots_since(since).iter().map(|s| s.as_ref().clone()).collect();
        if !snaps.is_empty() || state.is_terminal() || wait_ms == 0 {
            return ok_json(StatusCode::OK, &json!({ "run_id": id, "state": state, "snapshots": snaps }));
        }
        if tokio::time::timeout_at(deadline, rx.changed()).await.is_err() {
            return ok_json(StatusCode::OK, &json!({ "run_id": id, "state": h.state(), "snapshots": [] }));
        }
    }
}

async fn stream(State(st): State<Shared>, Path(id): Path<String>, Query(q): Params) -> ApiResult {
    let h = st.registry.get(&id)?;
    Ok(ndjson_stream(h, since_param(&q)?))
}

struct Feed {
    handle: Arc<RunHandle>,
    rx: watch::Receiver<u64>,
    last: Option<i64>,
    catch_up: bool,
    done: bool,
}

/// One JSON snapshot per line. A subscriber without `since` first gets the
/// latest snapshot, then everything after it. The stream closes after the
/// Completed snapshot, or after an error frame if the run fails.
fn ndjson_stream(handle: Arc<RunHandle>, since: Option<i64>) -> Response {
    let feed = Feed {
        rx: handle.subscribe(),
        handle,
        last: since,
        catch_up: since.is_none(),
        done: false,
    };
    let frames = futures::stream::unfold(feed, |mut f| async move {
        loop {
            if f.done {
                return None;
            }
            f.rx.borrow_and_update();
            // state first: a terminal state implies every snapshot is stored
            let state = f.handle.state();
            let snaps = if f.catch_up {
                f.catch_up = false;
                f.handle.latest_snapshot().into_iter().collect()
            } else {
                f.handle.snapshots_since(f.last)
            };
            if let Some(last) = snaps.last() {
                f.last = Some(i64::from(last.tick));
                let mut chunk = String::new();
                for s in &snaps {
                    chunk.push_str(&serde_json::to_string(s.as_ref()).expect("snapshot serializes"));
                    chunk.push('\n');
                }
                return Some((Ok::<_, io::Error>(chunk), f));
            }
            match state {
                RunState::Completed => return None,
                RunState::Failed => {
                    f.done = true;
                    let err = GatewayError::Validation(f.handle.error().unwrap_or_else(|| "run failed".into()));
                    let frame = json!({ "run_id": f.handle.id, "error": error_body(&err) });
                    return Some((Ok(format!("{frame}\n")), f));
                }
                _ => {}
            }
            if f.rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Response::builder()
        .status(StatusCode::OK)
        .header(header::CONTENT_TYPE, NDJSON)
        .header(header::CACHE_CONTROL, "no-cache")
        .body(Body::from_stream(frames))
        .expect("static response parts")
}

async fn run_result(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let h = st.registry.get(&id)?;
    match h.result() {
        Some(r) => ok_json(StatusCode::OK, r.as_ref()),
        None => Err(GatewayError::Conflict(format!("run {id} is {:?}; no result yet", h.state())).into()),
    }
}

/// Per-zone emissions of a finished run.
async fn run_geojson(State(st): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let h = st.registry.get(&id)?;
    match h.result() {
        Some(r) => ok_json(StatusCode::OK, &r.emissions_grid.to_geojson(&h.world.zone_geometries)),
        None => Err(GatewayError::Conflict(format!("run {id} is {:?}; no result yet", h.state())).into()),
    }
}

/// Serve until the listener fails.
pub async fn serve(state: Shared) -> Result<(), GatewayError> {
    let addr = format!("{}:{}", state.config().bind, state.config().port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| GatewayError::Io(format!("bind {addr}: {e}")))?;
    serve_on(listener, state).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, state: Shared) -> Result<(), GatewayError> {
    if let Ok(a) = listener.local_addr() {
        eprintln!("decarb: listening on http://{a}/v1");
    }
    axum::serve(listener, router(state)).await.map_err(|e| GatewayError::Io(e.to_string()))
}
