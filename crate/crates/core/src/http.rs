//! Blocking JSON POST with bounded retries and exponential backoff.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

/// Environment variable holding the bearer token for remote backends.
pub const API_KEY_ENV: &str = "NARRLENS_API_KEY";

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("request to {endpoint} failed after {attempts} attempt(s): {message}")]
    Exhausted {
        endpoint: String,
        attempts: u32,
        message: String,
    },
    #[error("request to {endpoint} rejected with status {status}")]
    Rejected { endpoint: String, status: u16 },
    #[error("malformed response from {endpoint}: {message}")]
    Decode { endpoint: String, message: String },
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        self.backoff.saturating_mul(1u32 << attempt.min(16))
    }
}

fn retryable(status: u16) -> bool {
    matches!(status, 408 | 429 | 500 | 502 | 503 | 504)
}

pub struct JsonClient {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    policy: RetryPolicy,
}

impl JsonClient {
    pub fn new(endpoint: impl Into<String>, policy: RetryPolicy) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(policy.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.trim().is_empty());
        JsonClient {
            agent,
            endpoint: endpoint.into(),
            api_key,
            policy,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, body: &Req) -> Result<Resp, HttpError> {
        let mut last = String::new();
        let attempts = self.policy.retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.policy.delay(attempt - 1));
            }
            let mut req = self
                .agent
                .post(&self.endpoint)
                .header("Content-Type", "application/json");
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if (200..300).contains(&status) {
                        return resp.body_mut().read_json::<Resp>().map_err(|e| HttpError::Decode {
                            endpoint: self.endpoint.clone(),
                            message: e.to_string(),
                        });
                    }
                    if !retryable(status) {
                        return Err(HttpError::Rejected {
                            endpoint: self.endpoint.clone(),
                            status,
                        });
                    }
                    tracing::warn!(endpoint = %self.endpoint, status, attempt, "retryable status");
                    last = format!("status {status}");
                }
                Err(e) => {
                    tracing::warn!(endpoint = %self.endpoint, error = %e, attempt, "transport error");
                    last = e.to_string();
                }
            }
        }
        Err(HttpError::Exhausted {
            endpoint: self.endpoint.clone(),
            attempts,
            message: last,
        })
    }
}
