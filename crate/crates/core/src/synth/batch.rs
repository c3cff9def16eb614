use std::thread;
use std::time::Duration;

use rand::Rng;

use super::{ChatClient, ChatRequest, ClientError, LlmConfig, SynthError};
use crate::pool::map_ordered;

/// Exponential backoff with full jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay_ms: 500,
            factor: 2.0,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Upper bound of the jitter window before retry number `attempt` (0-based).
    pub fn ceiling_ms(&self, attempt: u32) -> u64 {
        let raw = self.base_delay_ms as f64 * self.factor.powi(attempt as i32);
        raw.min(self.max_delay_ms as f64) as u64
    }

    fn delay(&self, attempt: u32) -> Duration {
        let ceiling = self.ceiling_ms(attempt);
        let ms = if ceiling == 0 {
            0
        } else {
            rand::thread_rng().gen_range(0..=ceiling)
        };
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
}

impl From<&LlmConfig> for BatchOptions {
    fn from(cfg: &LlmConfig) -> Self {
        BatchOptions {
            max_concurrency: cfg.max_concurrency.max(1),
            retry: RetryPolicy {
                max_retries: cfg.max_retries,
                ..RetryPolicy::default()
            },
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error("could not build request: {0}")]
    Build(#[from] SynthError),
    #[error("gave up after {attempts} attempt(s): {last}")]
    Exhausted { attempts: u32, last: ClientError },
}

fn run_one(
    request: &ChatRequest,
    client: &dyn ChatClient,
    retry: &RetryPolicy,
) -> Result<String, BatchError> {
    let mut attempt = 0;
    loop {
        match client.complete(request) {
            Ok(text) => return Ok(text),
            Err(e) if e.is_retryable() && attempt < retry.max_retries => {
                log::debug!(
                    "{}: attempt {} failed ({e}); retrying",
                    request.tag,
                    attempt + 1
                );
                thread::sleep(retry.delay(attempt));
                attempt += 1;
            }
            Err(last) => {
                return Err(BatchError::Exhausted {
                    attempts: attempt + 1,
                    last,
                })
            }
        }
    }
}

/// Sends one request per item with bounded concurrency.
///
/// `out[i]` belongs to `items[i]`. A failing item never aborts the batch.
pub fn run_batch<T, B>(
    items: &[T],
    build: B,
    client: &dyn ChatClient,
    opts: &BatchOptions,
) -> Vec<Result<String, BatchError>>
where
    T: Sync,
    B: Fn(&T) -> Result<ChatRequest, SynthError> + Sync,
{
    map_ordered(items, opts.max_concurrency, |_, item| {
        let request = build(item)?;
        run_one(&request, client, &opts.retry)
    })
}
