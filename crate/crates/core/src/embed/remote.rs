//! Batched remote embedding API client.
//!
//! Wire format: JSON POST `{"model": ..., "input": [texts]}` answered by
//! `{"data": [{"index": i, "embedding": [...]}]}`, index-sorted on
//! receipt; the minimal shape compatible with mainstream embedding APIs.
//!
//! Transient failures (HTTP 429, 5xx, transport timeouts) retry with
//! exponential backoff plus jitter up to the configured budget. A shared
//! sliding-window limiter keeps request starts at or under the configured
//! requests-per-second no matter how many batches are in flight.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::EmbeddingVector;

use super::{EmbedBackend, EmbedError, RemoteConfig};

#[derive(Serialize)]
struct ApiRequest<'a> {
    model: &'a str,
    input: Vec<&'a str>,
}

#[derive(Deserialize)]
struct ApiResponse {
    data: Vec<ApiEmbedding>,
}

#[derive(Deserialize)]
struct ApiEmbedding {
    index: usize,
    embedding: Vec<f32>,
}

/// Rate limiter keeping request starts at or under `rps` in every sliding
/// 1-second window. Starts are paced evenly (minimum gap of 1/rps plus a
/// small guard) rather than released in bursts: even pacing satisfies the
/// window bound by construction and stays verifiable by an external
/// observer whose arrival timestamps carry scheduling noise, which burst
/// releases at window boundaries do not.
pub struct RateLimiter {
    rps: u32,
    min_gap: Duration,
    state: Mutex<LimiterState>,
}

#[derive(Default)]
struct LimiterState {
    starts: VecDeque<Instant>,
    last_start: Option<Instant>,
}

impl RateLimiter {
    pub fn new(rps: u32) -> Self {
        let min_gap = if rps == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs(1) / rps + Duration::from_millis(5)
        };
        RateLimiter {
            rps,
            min_gap,
            state: Mutex::new(LimiterState::default()),
        }
    }

    /// Block until a request may start, then record the start.
    pub fn acquire(&self) {
        if self.rps == 0 {
            return;
        }
        loop {
            let wait = {
                let mut state = self.state.lock().expect("limiter lock");
                let now = Instant::now();
                while let Some(front) = state.starts.front() {
                    if now.duration_since(*front) >= Duration::from_secs(1) {
                        state.starts.pop_front();
                    } else {
                        break;
                    }
                }
                let gap_ready = state
                    .last_start
                    .is_none_or(|last| now.duration_since(last) >= self.min_gap);
                if state.starts.len() < self.rps as usize && gap_ready {
                    state.starts.push_back(now);
                    state.last_start = Some(now);
                    return;
                }
                let window_wait = state.starts.front().map_or(Duration::ZERO, |front| {
                    Duration::from_secs(1).saturating_sub(now.duration_since(*front))
                        + Duration::from_millis(5)
                });
                let gap_wait = state.last_start.map_or(Duration::ZERO, |last| {
                    self.min_gap.saturating_sub(now.duration_since(last))
                });
                let base = if state.starts.len() < self.rps as usize {
                    gap_wait
                } else {
                    window_wait.max(gap_wait)
                };
                base.max(Duration::from_millis(1))
            };
            std::thread::sleep(wait);
        }
    }
}

enum AttemptOutcome {
    Success(Vec<Vec<f32>>),
    Transient(String),
    Fatal(EmbedError),
}

/// Remote embedding backend over HTTP.
pub struct RemoteClient {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

impl RemoteClient {
    pub fn new(cfg: RemoteConfig) -> Result<Self, EmbedError> {
        if cfg.dim == 0 {
            return Err(EmbedError::Config("remote dim must be positive".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = RateLimiter::new(cfg.rate_limit_rps);
        Ok(RemoteClient {
            cfg,
            agent,
            limiter,
        })
    }

    fn auth_header(&self) -> Result<Option<String>, EmbedError> {
        match &self.cfg.auth_env_var {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(token) => Ok(Some(format!("Bearer {token}"))),
                Err(_) => Err(EmbedError::Config(format!(
                    "auth environment variable {var} is not set"
                ))),
            },
        }
    }

    fn attempt(&self, texts: &[&str], auth: Option<&str>) -> AttemptOutcome {
        self.limiter.acquire();
        let body = ApiRequest {
            model: &self.cfg.model_id,
            input: texts.to_vec(),
        };
        let mut request = self.agent.post(&self.cfg.endpoint);
        if let Some(auth) = auth {
            request = request.header("Authorization", auth);
        }
        let mut response = match request.send_json(&body) {
            Ok(r) => r,
            // Transport-level failure: timeout, refused connection, reset.
            Err(e) => return AttemptOutcome::Transient(e.to_string()),
        };
        let status = response.status().as_u16();
        if status == 429 || (500..600).contains(&status) {
            return AttemptOutcome::Transient(format!("HTTP {status}"));
        }
        if status != 200 {
            return AttemptOutcome::Fatal(EmbedError::Protocol(format!(
                "unexpected HTTP status {status}"
            )));
        }
        let parsed: ApiResponse = match response.body_mut().read_json() {
            Ok(p) => p,
            Err(e) => {
                return AttemptOutcome::Fatal(EmbedError::Protocol(format!(
                    "malformed response body: {e}"
                )))
            }
        };
        if parsed.data.len() != texts.len() {
            return AttemptOutcome::Fatal(EmbedError::PartialBatch {
                requested: texts.len(),
                received: parsed.data.len(),
            });
        }
        // Index-sort on receipt; indices must form exactly 0..n.
        let mut rows = parsed.data;
        rows.sort_by_key(|r| r.index);
        if rows.iter().enumerate().any(|(i, r)| r.index != i) {
            return AttemptOutcome::Fatal(EmbedError::Protocol(
                "response indices are not a permutation of the request".into(),
            ));
        }
        for row in &rows {
            if row.embedding.len() != self.cfg.dim {
                return AttemptOutcome::Fatal(EmbedError::DimMismatch {
                    expected: self.cfg.dim,
                    got: row.embedding.len(),
                });
            }
        }
        AttemptOutcome::Success(rows.into_iter().map(|r| r.embedding).collect())
    }
}

impl EmbedBackend for RemoteClient {
    fn model_id(&self) -> String {
        self.cfg.model_id.clone()
    }

    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn embed_batch(
        &self,
        items: &[(String, String)],
    ) -> Result<Vec<(String, EmbeddingVector)>, EmbedError> {
        if items.is_empty() {
            return Ok(Vec::new());
        }
        let auth = self.auth_header()?;
        let texts: Vec<&str> = items.iter().map(|(_, t)| t.as_str()).collect();
        let mut last_failure = String::new();
        let attempts = self.cfg.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                // Exponential backoff with additive jitter; the schedule is
                // a lower bound on the delay.
                let base = self.cfg.backoff_base_ms.saturating_mul(1 << (attempt - 1));
                let jitter = rand::thread_rng().gen_range(0..=self.cfg.backoff_base_ms / 2);
                std::thread::sleep(Duration::from_millis(base + jitter));
            }
            match self.attempt(&texts, auth.as_deref()) {
                AttemptOutcome::Success(rows) => {
                    let out = items
                        .iter()
                        .zip(rows)
                        .map(|((key, _), values)| {
                            EmbeddingVector::new(values, self.cfg.model_id.clone())
                                .map(|v| (key.clone(), v))
                                .map_err(|e| {
                                    EmbedError::Protocol(format!("non-finite embedding: {e}"))
                                })
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    return Ok(out);
                }
                AttemptOutcome::Transient(reason) => last_failure = reason,
                AttemptOutcome::Fatal(err) => return Err(err),
            }
        }
        Err(EmbedError::BackendUnavailable {
            attempts,
            last: last_failure,
        })
    }
}
