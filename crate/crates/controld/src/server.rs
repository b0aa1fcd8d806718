//! HTTP front end for a running [`Daemon`].
//!
//! One task owns the daemon and runs the poll loop. Handlers never touch it
//! directly: they send a [`Request`] with a reply channel and wait. Committed
//! event records are fanned out on a broadcast channel for the stream
//! endpoint.

use std::convert::Infallible;
use std::future::Future;
use std::time::Duration;

use autohouse_core::controller::{Command, CommandError, CommandReply};
use autohouse_core::daemon::{Daemon, DaemonError, StateSnapshot};
use autohouse_core::events::EventRecord;
use autohouse_core::sim::ScenarioEvent;
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::stream::{self, Stream};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot};

pub enum Request {
    Command(Command, oneshot::Sender<Result<CommandReply, CommandError>>),
    /// Inject a simulator event; `None` time means "now".
    Inject {
        t_ms: Option<u64>,
        event: ScenarioEvent,
        reply: oneshot::Sender<Result<CommandReply, CommandError>>,
    },
    State(oneshot::Sender<StateSnapshot>),
    Events {
        since: u64,
        reply: oneshot::Sender<Vec<EventRecord>>,
    },
}

#[derive(Clone)]
struct AppState {
    requests: mpsc::Sender<Request>,
    events: broadcast::Sender<EventRecord>,
}

pub fn router(requests: mpsc::Sender<Request>, events: broadcast::Sender<EventRecord>) -> Router {
    Router::new()
        .route("/v1/state", get(get_state))
        .route("/v1/zones/{id}/light", post(set_light))
        .route("/v1/alarm/arm", post(arm))
        .route("/v1/alarm/disarm", post(disarm))
        .route("/v1/alarm/reset", post(reset))
        .route("/v1/events", get(get_events))
        .route("/v1/stream", get(stream_events))
        .route("/v1/sim/inject", post(inject))
        .with_state(AppState { requests, events })
}

/// Serve the API on `listener` and run the control loop until `shutdown`
/// resolves or the loop fails.
pub async fn serve(
    daemon: Daemon,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), DaemonError> {
    let (req_tx, req_rx) = mpsc::channel(64);
    let (ev_tx, _) = broadcast::channel(1024);
    let app = router(req_tx, ev_tx.clone());

    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stop_rx.await;
            })
            .await
    });

    let result = control_loop(daemon, req_rx, ev_tx, shutdown).await;
    let _ = stop_tx.send(());
    let _ = server.await;
    result
}

async fn control_loop(
    mut daemon: Daemon,
    mut requests: mpsc::Receiver<Request>,
    events: broadcast::Sender<EventRecord>,
    shutdown: impl Future<Output = ()>,
) -> Result<(), DaemonError> {
    let publish = |daemon: &mut Daemon| {
        for rec in daemon.take_new_records() {
            let _ = events.send(rec);
        }
    };
    publish(&mut daemon);

    let mut interval = tokio::time::interval(Duration::from_millis(daemon.poll_interval_ms()));
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    // The first tick of a tokio interval fires immediately; the poll loop starts one period in.
    interval.tick().await;
    tokio::pin!(shutdown);

    loop {
        tokio::select! {
            _ = &mut shutdown => return Ok(()),
            _ = interval.tick() => {
                let res = daemon.tick();
                publish(&mut daemon);
                res?;
            }
            Some(req) = requests.recv() => {
                match req {
                    Request::Command(cmd, reply) => {
                        let res = daemon.handle(&cmd);
                        publish(&mut daemon);
                        let _ = reply.send(res?);
                    }
                    Request::Inject { t_ms, mut event, reply } => {
                        event.t_ms = t_ms.unwrap_or_else(|| daemon.now_ms());
                        let res = daemon.handle(&Command::Inject { event });
                        publish(&mut daemon);
                        let _ = reply.send(res?);
                    }
                    Request::State(reply) => {
                        let _ = reply.send(daemon.snapshot());
                    }
                    Request::Events { since, reply } => {
                        let _ = reply.send(daemon.events_since(since).to_vec());
                    }
                }
            }
        }
    }
}

fn error_response(status: StatusCode, message: impl Into<String>, violations: Vec<String>) -> Response {
    (
        status,
        Json(json!({ "error": message.into(), "violations": violations })),
    )
        .into_response()
}

fn unavailable() -> Response {
    error_response(StatusCode::SERVICE_UNAVAILABLE, "control loop has stopped", vec![])
}

async fn ask<T>(app: &AppState, make: impl FnOnce(oneshot::Sender<T>) -> Request) -> Result<T, Response> {
    let (tx, rx) = oneshot::channel();
    app.requests.send(make(tx)).await.map_err(|_| unavailable())?;
    rx.await.map_err(|_| unavailable())
}

fn reply_response(reply: Result<CommandReply, CommandError>) -> Response {
    match reply {
        Ok(r) => Json(r).into_response(),
        Err(e @ CommandError::NotFound(_)) => error_response(StatusCode::NOT_FOUND, e.to_string(), vec![]),
        Err(e @ CommandError::Unsupported(_)) => error_response(StatusCode::CONFLICT, e.to_string(), vec![]),
    }
}

async fn command(app: &AppState, cmd: Command) -> Response {
    match ask(app, |tx| Request::Command(cmd, tx)).await {
        Ok(reply) => reply_response(reply),
        Err(resp) => resp,
    }
}

async fn get_state(State(app): State<AppState>) -> Response {
    match ask(&app, Request::State).await {
        Ok(snap) => Json(snap).into_response(),
        Err(resp) => resp,
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LightBody {
    on: bool,
}

async fn set_light(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> Response {
    let body: LightBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => {
            return error_response(
                StatusCode::BAD_REQUEST,
                "malformed light request",
                vec![e.to_string()],
            )
        }
    };
    command(&app, Command::SetLight { zone_id: id, on: body.on }).await
}

async fn arm(State(app): State<AppState>) -> Response {
    command(&app, Command::Arm).await
}

async fn disarm(State(app): State<AppState>) -> Response {
    command(&app, Command::Disarm).await
}

async fn reset(State(app): State<AppState>) -> Response {
    command(&app, Command::Reset).await
}

#[derive(Deserialize)]
struct SinceQuery {
    #[serde(default)]
    since: u64,
}

async fn get_events(State(app): State<AppState>, Query(q): Query<SinceQuery>) -> Response {
    match ask(&app, |reply| Request::Events { since: q.since, reply }).await {
        Ok(recs) => Json(recs).into_response(),
        Err(resp) => resp,
    }
}

async fn stream_events(State(app): State<AppState>) -> Sse<impl Stream<Item = Result<SseEvent, Infallible>>> {
    let rx = app.events.subscribe();
    let s = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(rec) => {
                    let ev = SseEvent::default()
                        .id(rec.seq.to_string())
                        .event(rec.event.kind_name())
                        .data(rec.to_line());
                    return Some((Ok(ev), rx));
                }
                // Slow subscribers skip ahead; clients detect the seq gap.
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(s).keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
}

async fn inject(State(app): State<AppState>, body: Bytes) -> Response {
    let parsed = serde_json::from_slice::<Value>(&body)
        .map_err(|e| e.to_string())
        .and_then(|v| {
            let Value::Object(mut map) = v else {
                return Err("body must be an object".to_string());
            };
            let t_ms = match map.remove("t_ms") {
                None => None,
                Some(t) => Some(t.as_u64().ok_or_else(|| format!("t_ms must be a non-negative integer, got {t}"))?),
            };
            map.insert("t_ms".into(), json!(0));
            ScenarioEvent::from_value(Value::Object(map)).map(|e| (t_ms, e))
        });
    let (t_ms, event) = match parsed {
        Ok(p) => p,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, "malformed inject request", vec![e]),
    };
    match ask(&app, |reply| Request::Inject { t_ms, event, reply }).await {
        Ok(reply) => reply_response(reply),
        Err(resp) => resp,
    }
}
