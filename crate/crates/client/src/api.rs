//! HTTP client for the hub API.

use hub_core::model::{Annotation, EntryKind, PolicyConfig, TimelineEntry};
use hub_core::pipeline::StreamCorrelation;
use hub_core::store::Tombstone;
use hub_core::HubStats;
use reqwest::{Method, RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::ClientError;

/// Timeline filter; empty fields mean "no bound".
#[derive(Debug, Clone, Default)]
pub struct TimelineFilter {
    pub from: Option<u64>,
    pub to: Option<u64>,
    pub kinds: Vec<EntryKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlAck {
    pub seq: u64,
    pub ts: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestInfo {
    pub digest: String,
    pub entries: usize,
}

#[derive(Debug, Clone)]
pub struct ApiClient {
    base: String,
    http: reqwest::Client,
}

impl ApiClient {
    /// `base` is e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        ApiClient { base: base.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn req(&self, method: Method, path: &str) -> RequestBuilder {
        self.http.request(method, format!("{}{path}", self.base))
    }

    async fn send(&self, req: RequestBuilder) -> Result<reqwest::Response, ClientError> {
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let body: Value = resp.json().await.unwrap_or(Value::Null);
        Err(ClientError::Status { status: status.as_u16(), body })
    }

    async fn json<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T, ClientError> {
        Ok(self.send(req).await?.json().await?)
    }

    pub async fn timeline(&self, filter: &TimelineFilter) -> Result<Vec<TimelineEntry>, ClientError> {
        let mut q: Vec<(&str, String)> = Vec::new();
        if let Some(f) = filter.from {
            q.push(("from", f.to_string()));
        }
        if let Some(t) = filter.to {
            q.push(("to", t.to_string()));
        }
        if !filter.kinds.is_empty() {
            q.push(("kinds", filter.kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(",")));
        }
        self.json(self.req(Method::GET, "/api/timeline").query(&q)).await
    }

    /// Payload bytes, or `None` when the entry has none (or was redacted).
    pub async fn payload(&self, seq: u64) -> Result<Option<Vec<u8>>, ClientError> {
        match self.send(self.req(Method::GET, &format!("/api/payloads/{seq}"))).await {
            Ok(resp) => Ok(Some(resp.bytes().await?.to_vec())),
            Err(ClientError::Status { status: 404, .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub async fn redact(&self, seq: u64, actor: &str) -> Result<Tombstone, ClientError> {
        self.json(self.req(Method::DELETE, &format!("/api/entries/{seq}")).json(&json!({ "actor": actor }))).await
    }

    pub async fn annotate(&self, seq: u64, actor: &str, text: &str) -> Result<Annotation, ClientError> {
        let body = json!({ "actor": actor, "text": text });
        self.json(self.req(Method::POST, &format!("/api/entries/{seq}/annotations")).json(&body)).await
    }

    pub async fn modes(&self) -> Result<PolicyConfig, ClientError> {
        self.json(self.req(Method::GET, "/api/modes")).await
    }

    pub async fn put_modes(&self, cfg: &PolicyConfig) -> Result<PolicyConfig, ClientError> {
        self.json(self.req(Method::PUT, "/api/modes").json(cfg)).await
    }

    /// `name` is one of disable, postpone, toggle, extend, capture_after, manual.
    pub async fn control(&self, name: &str, actor: &str) -> Result<ControlAck, ClientError> {
        self.json(self.req(Method::POST, &format!("/api/control/{name}")).json(&json!({ "actor": actor }))).await
    }

    pub async fn export(&self) -> Result<Vec<u8>, ClientError> {
        Ok(self.send(self.req(Method::GET, "/api/export")).await?.bytes().await?.to_vec())
    }

    pub async fn correlate(
        &self,
        seq: u64,
        streams: &[&str],
        window_ms: Option<u64>,
    ) -> Result<Vec<StreamCorrelation>, ClientError> {
        let mut q = vec![("seq", seq.to_string()), ("streams", streams.join(","))];
        if let Some(w) = window_ms {
            q.push(("window_ms", w.to_string()));
        }
        self.json(self.req(Method::GET, "/api/correlate").query(&q)).await
    }

    pub async fn digest(&self) -> Result<DigestInfo, ClientError> {
        self.json(self.req(Method::GET, "/api/digest")).await
    }

    pub async fn stats(&self) -> Result<HubStats, ClientError> {
        self.json(self.req(Method::GET, "/api/stats")).await
    }
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Status { status, .. } => StatusCode::from_u16(*status).ok(),
            _ => None,
        }
    }
}
