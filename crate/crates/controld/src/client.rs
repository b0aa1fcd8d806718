//! Blocking HTTP client for a running daemon.

use std::io::{BufRead, BufReader};

use autohouse_core::controller::CommandReply;
use autohouse_core::daemon::StateSnapshot;
use autohouse_core::events::EventRecord;
use reqwest::blocking::{Client as Http, Response};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot reach daemon at {addr}: {message}")]
    Connect { addr: String, message: String },
    #[error("{status}: {message}")]
    Api {
        status: u16,
        message: String,
        violations: Vec<String>,
    },
    #[error("unexpected response: {0}")]
    Decode(String),
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
    #[serde(default)]
    violations: Vec<String>,
}

pub struct Client {
    base: String,
    addr: String,
    http: Http,
}

impl Client {
    /// `addr` is `host:port`, with or without an `http://` prefix.
    pub fn new(addr: &str) -> Client {
        let base = if addr.starts_with("http://") || addr.starts_with("https://") {
            addr.trim_end_matches('/').to_string()
        } else {
            format!("http://{addr}")
        };
        let http = Http::builder().timeout(None).build().expect("http client");
        Client {
            base,
            addr: addr.to_string(),
            http,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    fn check(&self, resp: Result<Response, reqwest::Error>) -> Result<Response, ClientError> {
        let resp = resp.map_err(|e| ClientError::Connect {
            addr: self.addr.clone(),
            message: e.to_string(),
        })?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().unwrap_or_default();
        let (message, violations) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => (b.error, b.violations),
            Err(_) => (text, Vec::new()),
        };
        Err(ClientError::Api {
            status: status.as_u16(),
            message,
            violations,
        })
    }

    fn decode<T: DeserializeOwned>(resp: Response) -> Result<T, ClientError> {
        resp.json().map_err(|e| ClientError::Decode(e.to_string()))
    }

    fn post(&self, path: &str, body: serde_json::Value) -> Result<CommandReply, ClientError> {
        let resp = self.check(self.http.post(self.url(path)).json(&body).send())?;
        Self::decode(resp)
    }

    pub fn state(&self) -> Result<StateSnapshot, ClientError> {
        let resp = self.check(self.http.get(self.url("/v1/state")).send())?;
        Self::decode(resp)
    }

    pub fn set_light(&self, zone_id: &str, on: bool) -> Result<CommandReply, ClientError> {
        self.post(&format!("/v1/zones/{zone_id}/light"), json!({ "on": on }))
    }

    pub fn arm(&self) -> Result<CommandReply, ClientError> {
        self.post("/v1/alarm/arm", json!({}))
    }

    pub fn disarm(&self) -> Result<CommandReply, ClientError> {
        self.post("/v1/alarm/disarm", json!({}))
    }

    pub fn reset(&self) -> Result<CommandReply, ClientError> {
        self.post("/v1/alarm/reset", json!({}))
    }

    pub fn inject(&self, event: serde_json::Value) -> Result<CommandReply, ClientError> {
        self.post("/v1/sim/inject", event)
    }

    pub fn events_since(&self, since: u64) -> Result<Vec<EventRecord>, ClientError> {
        let resp = self.check(self.http.get(self.url(&format!("/v1/events?since={since}"))).send())?;
        Self::decode(resp)
    }

    /// Print-style follow: every record after `since`, then live records as
    /// they arrive. Returns when the daemon closes the stream or `each`
    /// returns false.
    pub fn follow(&self, since: u64, mut each: impl FnMut(&EventRecord) -> bool) -> Result<(), ClientError> {
        // Subscribe before fetching the backlog so nothing falls in between.
        let stream = self.check(self.http.get(self.url("/v1/stream")).send())?;
        let mut last = since;
        for rec in self.events_since(since)? {
            last = rec.seq;
            if !each(&rec) {
                return Ok(());
            }
        }
        for line in BufReader::new(stream).lines() {
            let line = line.map_err(|e| ClientError::Connect {
                addr: self.addr.clone(),
                message: e.to_string(),
            })?;
            let Some(data) = line.strip_prefix("data:") else {
                continue;
            };
            let rec: EventRecord = serde_json::from_str(data.trim()).map_err(|e| ClientError::Decode(e.to_string()))?;
            if rec.seq <= last {
                continue;
            }
            // The stream dropped records under load; fetch what was missed.
            if rec.seq > last + 1 {
                for missed in self.events_since(last)?.iter().take_while(|r| r.seq < rec.seq) {
                    if !each(missed) {
                        return Ok(());
                    }
                }
            }
            last = rec.seq;
            if !each(&rec) {
                return Ok(());
            }
        }
        Ok(())
    }
}
