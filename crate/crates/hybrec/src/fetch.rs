//! Fetching records from a remote endpoint, one `GET {endpoint}/{id}` per id.

use std::sync::Arc;
use std::time::Duration;

use hybrec_core::PaperRecord;
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use crate::formats::RecordJson;

#[derive(Debug, Clone)]
pub struct FetchConfig {
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub base_delay: Duration,
    pub timeout: Duration,
    pub concurrency: usize,
}

impl Default for FetchConfig {
    fn default() -> Self {
        FetchConfig {
            attempts: 3,
            base_delay: Duration::from_millis(250),
            timeout: Duration::from_secs(30),
            concurrency: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// HTTP 4xx other than 429; not retried.
    Permanent,
    /// Connection errors, timeouts, 429 and 5xx after the last attempt.
    Network,
    /// A 200 response whose body is not a valid record for the id.
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchFailure {
    pub id: String,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct FetchOutcome {
    /// In request order.
    pub records: Vec<PaperRecord>,
    pub failures: Vec<FetchFailure>,
}

enum Attempt {
    Done(PaperRecord),
    Fail(FailureKind, String),
    Retry(String),
}

async fn attempt(client: &reqwest::Client, url: &str, id: &str) -> Attempt {
    let resp = match client.get(url).send().await {
        Ok(r) => r,
        Err(e) => return Attempt::Retry(e.to_string()),
    };
    let status = resp.status();
    if status.as_u16() == 429 || status.is_server_error() {
        return Attempt::Retry(format!("HTTP {status}"));
    }
    if !status.is_success() {
        return Attempt::Fail(FailureKind::Permanent, format!("HTTP {status}"));
    }
    let body = match resp.bytes().await {
        Ok(b) => b,
        Err(e) => return Attempt::Retry(e.to_string()),
    };
    match serde_json::from_slice::<RecordJson>(&body) {
        Ok(r) if r.id == id => Attempt::Done(r.into()),
        Ok(r) => Attempt::Fail(FailureKind::Malformed, format!("response is for id {:?}", r.id)),
        Err(e) => Attempt::Fail(FailureKind::Malformed, e.to_string()),
    }
}

async fn fetch_one(client: reqwest::Client, endpoint: String, id: String, cfg: FetchConfig) -> Result<PaperRecord, FetchFailure> {
    let url = format!("{}/{}", endpoint.trim_end_matches('/'), id);
    let mut delay = cfg.base_delay;
    let mut last = String::new();
    for k in 0..cfg.attempts.max(1) {
        if k > 0 {
            tokio::time::sleep(delay).await;
            delay *= 2;
        }
        match attempt(&client, &url, &id).await {
            Attempt::Done(r) => return Ok(r),
            Attempt::Fail(kind, message) => return Err(FetchFailure { id, kind, message }),
            Attempt::Retry(m) => {
                log::debug!("{url}: attempt {} failed: {m}", k + 1);
                last = m;
            }
        }
    }
    Err(FetchFailure { id, kind: FailureKind::Network, message: last })
}

/// Fetches every id; failures are reported per id and never abort the rest.
pub async fn fetch_records(endpoint: &str, ids: &[String], cfg: &FetchConfig) -> FetchOutcome {
    if ids.is_empty() {
        return FetchOutcome::default();
    }
    let client = match reqwest::Client::builder().timeout(cfg.timeout).build() {
        Ok(c) => c,
        Err(e) => {
            return FetchOutcome {
                records: Vec::new(),
                failures: ids
                    .iter()
                    .map(|id| FetchFailure { id: id.clone(), kind: FailureKind::Network, message: e.to_string() })
                    .collect(),
            }
        }
    };
    let gate = Arc::new(Semaphore::new(cfg.concurrency.max(1)));
    let mut tasks = JoinSet::new();
    for (pos, id) in ids.iter().enumerate() {
        let (client, endpoint, id, cfg, gate) = (client.clone(), endpoint.to_string(), id.clone(), cfg.clone(), gate.clone());
        tasks.spawn(async move {
            let _permit = gate.acquire_owned().await.expect("semaphore never closed");
            (pos, fetch_one(client, endpoint, id, cfg).await)
        });
    }
    let mut results: Vec<Option<Result<PaperRecord, FetchFailure>>> = vec![None; ids.len()];
    while let Some(joined) = tasks.join_next().await {
        match joined {
            Ok((pos, r)) => results[pos] = Some(r),
            Err(e) => log::error!("fetch task failed: {e}"),
        }
    }
    let mut out = FetchOutcome::default();
    for (pos, r) in results.into_iter().enumerate() {
        match r {
            Some(Ok(rec)) => out.records.push(rec),
            Some(Err(f)) => out.failures.push(f),
            None => out.failures.push(FetchFailure {
                id: ids[pos].clone(),
                kind: FailureKind::Network,
                message: "task aborted".into(),
            }),
        }
    }
    out
}

/// Blocking wrapper for synchronous callers.
pub fn fetch_records_blocking(endpoint: &str, ids: &[String], cfg: &FetchConfig) -> std::io::Result<FetchOutcome> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    Ok(rt.block_on(fetch_records(endpoint, ids, cfg)))
}
