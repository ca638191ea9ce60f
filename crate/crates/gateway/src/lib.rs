//! HTTP front end for the screening engine.
//!
//! The gateway wraps an [`Engine`] in a small axum service meant to sit
//! inline in front of an LLM deployment:
//!
//! - `POST /v1/screen` — screen one prompt, returning the verdict,
//!   per-category scores, evidence, stage latency, and the engine config
//!   version that produced them.
//! - `GET /v1/health` — readiness plus the active config version.
//! - `GET /v1/metrics` — counters and latency histograms in a plain-text
//!   exposition format.
//! - `POST /v1/reload` — validate a config file and swap it in atomically;
//!   a rejected config leaves the running engine untouched.
//!
//! Every request clones one `Arc<Engine>` snapshot up front and uses it for
//! both the verdict and the reported version tag, so a concurrent reload can
//! never produce a response mixing old scores with a new version string.

use std::panic::AssertUnwindSafe;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use sentinel_core::engine::{Engine, EngineConfig, ScreenError};
use sentinel_core::types::{
    AttackCategory, DetectionResult, Evidence, ResultFlags, Stage, StageLatency,
};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

/// One screening request. `client_tag` is an opaque caller-supplied label
/// echoed back in the response so callers can correlate answers under
/// pipelining; the engine never sees it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenRequest {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_tag: Option<String>,
}

/// Wire form of a verdict. Mirrors [`DetectionResult`] minus the raw feature
/// vector (available via the library or `explain`; omitted here to keep the
/// hot-path payload small), plus the config version that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreenResponse {
    pub verdict: AttackCategory,
    pub attack: bool,
    pub category_scores: std::collections::BTreeMap<AttackCategory, f64>,
    pub evidence: Vec<Evidence>,
    pub flags: ResultFlags,
    pub latency: StageLatency,
    pub engine_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub client_tag: Option<String>,
    /// True only when screening itself failed and the gateway was configured
    /// to fail open; the benign verdict then reflects policy, not analysis.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed_open: bool,
}

impl ScreenResponse {
    fn from_result(result: DetectionResult, version: &str, client_tag: Option<String>) -> Self {
        ScreenResponse {
            verdict: result.verdict,
            attack: result.verdict.is_attack(),
            category_scores: result.category_scores,
            evidence: result.evidence,
            flags: result.flags,
            latency: result.latency,
            engine_version: version.to_owned(),
            client_tag,
            failed_open: false,
        }
    }

    fn failed_open(version: &str, client_tag: Option<String>) -> Self {
        ScreenResponse {
            verdict: AttackCategory::Benign,
            attack: false,
            category_scores: std::collections::BTreeMap::new(),
            evidence: Vec::new(),
            flags: ResultFlags::default(),
            latency: StageLatency::default(),
            engine_version: version.to_owned(),
            client_tag,
            failed_open: true,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReloadRequest {
    config_path: Option<PathBuf>,
}

/// Latency histogram with fixed microsecond buckets, updated lock-free from
/// request handlers.
struct Histogram {
    buckets: [AtomicU64; Histogram::BOUNDS.len()],
    overflow: AtomicU64,
    sum_us: AtomicU64,
    count: AtomicU64,
}

impl Histogram {
    const BOUNDS: [u64; 10] = [50, 100, 250, 500, 1_000, 2_500, 5_000, 10_000, 25_000, 50_000];

    fn new() -> Self {
        Histogram {
            buckets: std::array::from_fn(|_| AtomicU64::new(0)),
            overflow: AtomicU64::new(0),
            sum_us: AtomicU64::new(0),
            count: AtomicU64::new(0),
        }
    }

    fn observe(&self, micros: u64) {
        match Self::BOUNDS.iter().position(|&bound| micros <= bound) {
            Some(i) => self.buckets[i].fetch_add(1, Ordering::Relaxed),
            None => self.overflow.fetch_add(1, Ordering::Relaxed),
        };
        self.sum_us.fetch_add(micros, Ordering::Relaxed);
        self.count.fetch_add(1, Ordering::Relaxed);
    }

    /// Renders `name{labels,le="..."}` lines with cumulative counts, plus the
    /// `_sum`/`_count` pair.
    fn render(&self, out: &mut String, name: &str, labels: &str) {
        use std::fmt::Write;
        let sep = if labels.is_empty() { "" } else { "," };
        let mut cumulative = 0;
        for (i, bound) in Self::BOUNDS.iter().enumerate() {
            cumulative += self.buckets[i].load(Ordering::Relaxed);
            let _ = writeln!(out, "{name}_bucket{{{labels}{sep}le=\"{bound}\"}} {cumulative}");
        }
        cumulative += self.overflow.load(Ordering::Relaxed);
        let _ = writeln!(out, "{name}_bucket{{{labels}{sep}le=\"+Inf\"}} {cumulative}");
        let braced = if labels.is_empty() { String::new() } else { format!("{{{labels}}}") };
        let _ = writeln!(out, "{name}_sum{braced} {}", self.sum_us.load(Ordering::Relaxed));
        let _ = writeln!(out, "{name}_count{braced} {}", self.count.load(Ordering::Relaxed));
    }
}

/// Service counters. Everything is a monotonic counter or histogram so the
/// exposition needs no locks and scrapers can rate() freely.
struct Metrics {
    /// Screen requests received, including ones rejected before screening.
    requests: AtomicU64,
    /// Screen requests refused with 400 (malformed body, missing field).
    bad_requests: AtomicU64,
    /// Screen requests refused with 413 (prompt over the size cap).
    too_large: AtomicU64,
    /// Screen requests that hit an internal failure (counted whether the
    /// gateway failed open or closed).
    failures: AtomicU64,
    /// Completed screenings by verdict category, indexable by [`AttackCategory`].
    verdicts: [AtomicU64; AttackCategory::ALL.len()],
    /// Completed screenings whose verdict was any attack category. Together
    /// with `screenings_total` this gives the live flag rate an operator
    /// compares against the deployment's false-positive budget.
    flagged: AtomicU64,
    reloads_ok: AtomicU64,
    reloads_rejected: AtomicU64,
    stage_latency: [Histogram; Stage::ALL.len()],
    screen_latency: Histogram,
}

impl Metrics {
    fn new() -> Self {
        Metrics {
            requests: AtomicU64::new(0),
            bad_requests: AtomicU64::new(0),
            too_large: AtomicU64::new(0),
            failures: AtomicU64::new(0),
            verdicts: std::array::from_fn(|_| AtomicU64::new(0)),
            flagged: AtomicU64::new(0),
            reloads_ok: AtomicU64::new(0),
            reloads_rejected: AtomicU64::new(0),
            stage_latency: std::array::from_fn(|_| Histogram::new()),
            screen_latency: Histogram::new(),
        }
    }

    fn record(&self, result: &DetectionResult) {
        let slot = AttackCategory::ALL
            .iter()
            .position(|&c| c == result.verdict)
            .expect("verdict is always one of the seven categories");
        self.verdicts[slot].fetch_add(1, Ordering::Relaxed);
        if result.is_attack() {
            self.flagged.fetch_add(1, Ordering::Relaxed);
        }
        for (i, stage) in Stage::ALL.into_iter().enumerate() {
            self.stage_latency[i].observe(result.latency.get(stage));
        }
        self.screen_latency.observe(result.latency.total_us());
    }

    fn render(&self) -> String {
        use std::fmt::Write;
        let mut out = String::with_capacity(4096);
        let counter = |out: &mut String, name: &str, help: &str, value: u64| {
            let _ = writeln!(out, "# HELP {name} {help}");
            let _ = writeln!(out, "# TYPE {name} counter");
            let _ = writeln!(out, "{name} {value}");
        };
        counter(
            &mut out,
            "sentinel_requests_total",
            "Screen requests received.",
            self.requests.load(Ordering::Relaxed),
        );
        counter(
            &mut out,
            "sentinel_bad_requests_total",
            "Screen requests rejected as malformed (HTTP 400).",
            self.bad_requests.load(Ordering::Relaxed),
        );
        counter(
            &mut out,
            "sentinel_prompt_too_large_total",
            "Screen requests rejected for exceeding the input size cap (HTTP 413).",
            self.too_large.load(Ordering::Relaxed),
        );
        counter(
            &mut out,
            "sentinel_screen_failures_total",
            "Screenings that failed internally, answered per the fail-open policy.",
            self.failures.load(Ordering::Relaxed),
        );

        let _ = writeln!(out, "# HELP sentinel_verdicts_total Completed screenings by verdict.");
        let _ = writeln!(out, "# TYPE sentinel_verdicts_total counter");
        let mut screenings = 0;
        for (i, category) in AttackCategory::ALL.iter().enumerate() {
            let n = self.verdicts[i].load(Ordering::Relaxed);
            screenings += n;
            let _ = writeln!(out, "sentinel_verdicts_total{{category=\"{}\"}} {n}", category.name());
        }
        counter(
            &mut out,
            "sentinel_screenings_total",
            "Screenings that completed with a verdict.",
            screenings,
        );
        counter(
            &mut out,
            "sentinel_flagged_total",
            "Screenings whose verdict was an attack category; flagged/screenings is the live flag rate.",
            self.flagged.load(Ordering::Relaxed),
        );

        let _ = writeln!(out, "# HELP sentinel_reloads_total Config reload attempts by outcome.");
        let _ = writeln!(out, "# TYPE sentinel_reloads_total counter");
        let _ = writeln!(
            out,
            "sentinel_reloads_total{{outcome=\"success\"}} {}",
            self.reloads_ok.load(Ordering::Relaxed)
        );
        let _ = writeln!(
            out,
            "sentinel_reloads_total{{outcome=\"rejected\"}} {}",
            self.reloads_rejected.load(Ordering::Relaxed)
        );

        let _ = writeln!(
            out,
            "# HELP sentinel_stage_latency_microseconds Wall-clock time per pipeline stage."
        );
        let _ = writeln!(out, "# TYPE sentinel_stage_latency_microseconds histogram");
        for (i, stage) in Stage::ALL.into_iter().enumerate() {
            self.stage_latency[i].render(
                &mut out,
                "sentinel_stage_latency_microseconds",
                &format!("stage=\"{}\"", stage.name()),
            );
        }
        let _ = writeln!(
            out,
            "# HELP sentinel_screen_latency_microseconds End-to-end screening time (sum of stages)."
        );
        let _ = writeln!(out, "# TYPE sentinel_screen_latency_microseconds histogram");
        self.screen_latency.render(&mut out, "sentinel_screen_latency_microseconds", "");
        out
    }
}

/// Shared service state: the hot-swappable engine, the config file it came
/// from (reload re-reads it when the request names no other), and counters.
pub struct GatewayState {
    engine: RwLock<Arc<Engine>>,
    config_path: Mutex<Option<PathBuf>>,
    metrics: Metrics,
    started: Instant,
}

impl GatewayState {
    pub fn new(engine: Engine, config_path: Option<PathBuf>) -> Arc<Self> {
        Arc::new(GatewayState {
            engine: RwLock::new(Arc::new(engine)),
            config_path: Mutex::new(config_path),
            metrics: Metrics::new(),
            started: Instant::now(),
        })
    }

    /// The engine snapshot one request runs against. Holding the `Arc` (not
    /// the lock) for the request's lifetime keeps reloads wait-free while
    /// guaranteeing the version tag matches the scores.
    pub fn snapshot(&self) -> Arc<Engine> {
        self.engine.read().clone()
    }

    /// Validates and swaps in a new engine; the old one drains naturally as
    /// in-flight requests release their snapshots. Returns (old, new) tags.
    pub fn reload_from(&self, path: &std::path::Path) -> Result<(String, String), sentinel_core::engine::ConfigError> {
        let engine = EngineConfig::load(path).and_then(Engine::new)?;
        let fresh = engine.version().to_owned();
        Ok(self.install(engine, Some(path.to_owned()), fresh))
    }

    fn install(&self, engine: Engine, path: Option<PathBuf>, fresh: String) -> (String, String) {
        let previous = {
            let mut slot = self.engine.write();
            let previous = slot.version().to_owned();
            *slot = Arc::new(engine);
            previous
        };
        if let Some(path) = path {
            *self.config_path.lock() = Some(path);
        }
        (previous, fresh)
    }
}

/// Builds the service router. The body limit leaves generous headroom over
/// the prompt cap so that over-cap prompts reach the engine's own length
/// check (a clean 413 with the measured size) instead of dying in transport,
/// while still bounding memory against abusive bodies.
pub fn router(state: Arc<GatewayState>) -> Router {
    let body_limit = state.snapshot().config().max_input_bytes * 4 + 16 * 1024;
    Router::new()
        .route("/v1/screen", post(screen))
        .route("/v1/health", get(health))
        .route("/v1/metrics", get(metrics))
        .route("/v1/reload", post(reload))
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state)
}

pub async fn bind(listen: &str) -> Result<tokio::net::TcpListener, GatewayError> {
    tokio::net::TcpListener::bind(listen).await.map_err(|source| GatewayError::Io {
        context: format!("bind {listen}"),
        source,
    })
}

/// Serves until `shutdown` resolves, then drains in-flight connections
/// before returning.
pub async fn serve(
    state: Arc<GatewayState>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), GatewayError> {
    let context = listener
        .local_addr()
        .map(|a| format!("serve {a}"))
        .unwrap_or_else(|_| "serve".to_owned());
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|source| GatewayError::Io { context, source })
}

fn error_body(status: StatusCode, message: &str) -> Response {
    (status, Json(json!({ "error": message }))).into_response()
}

async fn screen(State(state): State<Arc<GatewayState>>, body: Bytes) -> Response {
    state.metrics.requests.fetch_add(1, Ordering::Relaxed);
    let request: ScreenRequest = match serde_json::from_slice(&body) {
        Ok(request) => request,
        Err(err) => {
            state.metrics.bad_requests.fetch_add(1, Ordering::Relaxed);
            return error_body(StatusCode::BAD_REQUEST, &format!("invalid screen request: {err}"));
        }
    };
    let engine = state.snapshot();
    // The engine is immutable behind its Arc, so a panic inside screen cannot
    // leave shared state inconsistent; catching it lets the fail-open policy
    // decide the answer instead of poisoning the worker.
    let outcome = std::panic::catch_unwind(AssertUnwindSafe(|| engine.screen(&request.prompt)));
    match outcome {
        Ok(Ok(result)) => {
            state.metrics.record(&result);
            let response = ScreenResponse::from_result(result, engine.version(), request.client_tag);
            (StatusCode::OK, Json(response)).into_response()
        }
        Ok(Err(err @ ScreenError::TooLong { .. })) => {
            state.metrics.too_large.fetch_add(1, Ordering::Relaxed);
            error_body(StatusCode::PAYLOAD_TOO_LARGE, &err.to_string())
        }
        Err(_panic) => {
            state.metrics.failures.fetch_add(1, Ordering::Relaxed);
            if engine.config().gateway.fail_open {
                let response = ScreenResponse::failed_open(engine.version(), request.client_tag);
                (StatusCode::OK, Json(response)).into_response()
            } else {
                error_body(
                    StatusCode::SERVICE_UNAVAILABLE,
                    "screening failed and the gateway is configured to fail closed",
                )
            }
        }
    }
}

async fn health(State(state): State<Arc<GatewayState>>) -> Response {
    let engine = state.snapshot();
    Json(json!({
        "ready": true,
        "engine_version": engine.version(),
        "uptime_seconds": state.started.elapsed().as_secs(),
    }))
    .into_response()
}

async fn metrics(State(state): State<Arc<GatewayState>>) -> Response {
    (
        StatusCode::OK,
        [(header::CONTENT_TYPE, "text/plain; version=0.0.4")],
        state.metrics.render(),
    )
        .into_response()
}

async fn reload(State(state): State<Arc<GatewayState>>, body: Bytes) -> Response {
    let request: ReloadRequest = if body.is_empty() {
        ReloadRequest::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(request) => request,
            Err(err) => {
                return error_body(StatusCode::BAD_REQUEST, &format!("invalid reload request: {err}"))
            }
        }
    };
    let Some(path) = request.config_path.or_else(|| state.config_path.lock().clone()) else {
        return error_body(
            StatusCode::BAD_REQUEST,
            "no config to reload: the gateway was started without a config file; pass config_path",
        );
    };
    match state.reload_from(&path) {
        Ok((previous, current)) => {
            state.metrics.reloads_ok.fetch_add(1, Ordering::Relaxed);
            Json(json!({
                "engine_version": current,
                "previous_version": previous,
            }))
            .into_response()
        }
        Err(err) => {
            state.metrics.reloads_rejected.fetch_add(1, Ordering::Relaxed);
            error_body(
                StatusCode::UNPROCESSABLE_ENTITY,
                &format!("config rejected, previous config still active: {err}"),
            )
        }
    }
}
