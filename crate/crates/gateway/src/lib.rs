//! HTTP front end for one live feeder simulation, plus the `feedsim`
//! command line.
//!
//! The gateway plays two roles: the owner's phone (send SMS, read an
//! inbox) and the simulation operator (advance or run the clock, refill
//! the hopper). Device behaviour only ever changes through simulated SMS
//! or simulated time.

pub mod cli;

use std::convert::Infallible;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::watch;
use tower_http::cors::CorsLayer;

use feeder_core::domain::{validate_sms_body, PhoneNumber, MS_PER_SECOND};
use feeder_core::simenv::{DeviceSnapshot, InboxEntry, World};

pub const MAX_RATE: u32 = 3600;
const REALTIME_TICK: Duration = Duration::from_millis(100);

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        ApiError(StatusCode::BAD_REQUEST, msg.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

struct Shared {
    world: Mutex<World>,
    rate: Mutex<u32>,
    trace_len: watch::Sender<u64>,
}

/// One simulation behind an HTTP API. Cheap to clone.
#[derive(Clone)]
pub struct Gateway {
    shared: Arc<Shared>,
}

impl Gateway {
    pub fn new(world: World) -> Self {
        let (trace_len, _) = watch::channel(world.trace().len() as u64);
        Gateway {
            shared: Arc::new(Shared {
                world: Mutex::new(world),
                rate: Mutex::new(0),
                trace_len,
            }),
        }
    }

    fn world(&self) -> MutexGuard<'_, World> {
        self.shared.world.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Runs `f` against the world and wakes stream subscribers.
    pub fn with_world<T>(&self, f: impl FnOnce(&mut World) -> T) -> T {
        let mut world = self.world();
        let out = f(&mut world);
        self.shared
            .trace_len
            .send_replace(world.trace().len() as u64);
        out
    }

    pub fn rate(&self) -> u32 {
        *self.shared.rate.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn set_rate(&self, rate: u32) -> Result<(), ApiError> {
        if rate > MAX_RATE {
            return Err(ApiError::bad_request(format!(
                "rate must be 0..={MAX_RATE}"
            )));
        }
        *self.shared.rate.lock().unwrap_or_else(|p| p.into_inner()) = rate;
        Ok(())
    }

    /// Advances simulated time for `wall_ms` of real time at the current rate.
    pub fn step_realtime(&self, wall_ms: u64) {
        let rate = self.rate() as u64;
        if rate > 0 {
            self.with_world(|w| w.advance_by(rate * wall_ms).expect("forward step"));
        }
    }

    /// Background task that drives realtime mode.
    pub fn spawn_realtime(&self) -> tokio::task::JoinHandle<()> {
        let gw = self.clone();
        tokio::spawn(async move {
            let mut ticker = tokio::time::interval(REALTIME_TICK);
            let mut last = tokio::time::Instant::now();
            loop {
                ticker.tick().await;
                let now = tokio::time::Instant::now();
                gw.step_realtime((now - last).as_millis() as u64);
                last = now;
            }
        })
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/api/sms", post(post_sms))
            .route("/api/phone/{number}/inbox", get(get_inbox))
            .route("/api/device/state", get(get_state))
            .route("/api/device/refill", post(post_refill))
            .route("/api/sim/advance", post(post_advance))
            .route("/api/sim/realtime", post(post_realtime))
            .route("/api/events/stream", get(get_stream))
            .layer(CorsLayer::permissive())
            .with_state(self.clone())
    }
}

#[derive(Deserialize)]
struct SmsRequest {
    from: String,
    body: String,
}

#[derive(Serialize)]
struct SmsAccepted {
    accepted: bool,
    message_id: u64,
}

async fn post_sms(
    State(gw): State<Gateway>,
    req: Result<Json<SmsRequest>, JsonRejection>,
) -> Result<Json<SmsAccepted>, ApiError> {
    let Json(req) = req?;
    let from =
        PhoneNumber::canonicalize(&req.from).map_err(|e| ApiError::bad_request(e.to_string()))?;
    validate_sms_body(&req.body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let id = gw
        .with_world(|w| w.phone_send(&from, &req.body))
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(SmsAccepted {
        accepted: true,
        message_id: id,
    }))
}

#[derive(Deserialize)]
struct Cursor {
    since: Option<u64>,
}

#[derive(Serialize)]
struct InboxPage {
    messages: Vec<InboxEntry>,
    next: u64,
}

async fn get_inbox(
    State(gw): State<Gateway>,
    Path(number): Path<String>,
    Query(cursor): Query<Cursor>,
) -> Result<Json<InboxPage>, ApiError> {
    let number =
        PhoneNumber::canonicalize(&number).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let world = gw.world();
    if !world.knows(&number) {
        return Err(ApiError(
            StatusCode::NOT_FOUND,
            format!("unknown number {number}"),
        ));
    }
    let (messages, next) = world.inbox(&number, cursor.since.unwrap_or(0) as usize);
    Ok(Json(InboxPage {
        messages: messages.to_vec(),
        next: next as u64,
    }))
}

async fn get_state(State(gw): State<Gateway>) -> Json<DeviceSnapshot> {
    Json(gw.world().snapshot())
}

#[derive(Deserialize)]
struct AdvanceRequest {
    seconds: f64,
}

async fn post_advance(
    State(gw): State<Gateway>,
    req: Result<Json<AdvanceRequest>, JsonRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let Json(req) = req?;
    if !(req.seconds >= 0.0 && req.seconds.is_finite()) {
        return Err(ApiError::bad_request(
            "seconds must be a non-negative number",
        ));
    }
    let ms = (req.seconds * MS_PER_SECOND as f64).round() as u64;
    let now = gw.with_world(|w| {
        w.advance_by(ms).expect("forward step");
        w.now()
    });
    Ok(Json(json!({ "sim_now_ms": now })))
}

#[derive(Deserialize)]
struct RealtimeRequest {
    rate: i64,
}

async fn post_realtime(
    State(gw): State<Gateway>,
    req: Result<Json<RealtimeRequest>, JsonRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let Json(req) = req?;
    let rate = u32::try_from(req.rate)
        .map_err(|_| ApiError::bad_request(format!("rate must be 0..={MAX_RATE}")))?;
    gw.set_rate(rate)?;
    Ok(Json(json!({ "rate": rate })))
}

#[derive(Deserialize)]
struct RefillRequest {
    grams: f64,
}

async fn post_refill(
    State(gw): State<Gateway>,
    req: Result<Json<RefillRequest>, JsonRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let Json(req) = req?;
    if !(req.grams > 0.0 && req.grams.is_finite()) {
        return Err(ApiError::bad_request("grams must be positive"));
    }
    let (added, now_g) = gw.with_world(|w| {
        let added = w.refill(req.grams);
        (added, w.hopper().contents_g())
    });
    Ok(Json(json!({ "added_g": added, "hopper_g": now_g })))
}

/// Server-sent trace records. Each event id is the record's `seq`; resume
/// with `?since=` or the `Last-Event-ID` header.
async fn get_stream(
    State(gw): State<Gateway>,
    Query(cursor): Query<Cursor>,
    headers: HeaderMap,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok())
        .map(|id| id + 1);
    let start = cursor.since.or(resume).unwrap_or(0);
    let rx = gw.shared.trace_len.subscribe();
    let stream = futures::stream::unfold((gw, rx, start), |(gw, mut rx, cursor)| async move {
        loop {
            let batch: Vec<Event> = gw
                .world()
                .trace()
                .since(cursor)
                .iter()
                .map(|r| {
                    Event::default()
                        .id(r.seq.to_string())
                        .event("trace")
                        .data(r.to_json())
                })
                .collect();
            if !batch.is_empty() {
                let next = cursor + batch.len() as u64;
                let items = futures::stream::iter(batch.into_iter().map(Ok));
                return Some((items, (gw, rx, next)));
            }
            rx.changed().await.ok()?;
        }
    });
    Sse::new(futures::StreamExt::flatten(stream)).keep_alive(KeepAlive::default())
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(world: World, addr: std::net::SocketAddr) -> anyhow::Result<()> {
    let gw = Gateway::new(world);
    gw.spawn_realtime();
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!(
        "feedsim gateway listening on http://{}",
        listener.local_addr()?
    );
    axum::serve(listener, gw.router()).await?;
    Ok(())
}
