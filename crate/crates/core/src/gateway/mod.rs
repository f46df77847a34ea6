//! Uniform completion access over a live chat-completion provider or the
//! offline mock, with caching, retries and a global parallelism bound.

mod cache;
mod lexicon;
mod live;
mod mock;

use std::num::NonZeroUsize;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use tracing::{debug, warn};

pub use cache::{CacheKey, ResponseCache};
pub use lexicon::{LexiconError, MockLexicon};
pub use live::LiveBackend;
pub use mock::{mock_classify, mock_summarize, segments, MockBackend};

use crate::prompt::PromptText;

pub const DEFAULT_API_KEY_ENV: &str = "QUICKCUE_LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Mock,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Live => "live",
            Mode::Mock => "mock",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(Mode::Live),
            "mock" => Ok(Mode::Mock),
            other => Err(format!("unknown mode {other:?}, expected mock or live")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub mode: Mode,
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the credential. The
    /// credential itself never appears in configuration.
    pub api_key_env: String,
    pub max_parallel: NonZeroUsize,
    pub max_retries: u32,
    pub timeout_seconds: f64,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    /// Left to the provider when unset.
    pub temperature: Option<f32>,
    pub cache_enabled: bool,
    pub cache_dir: Option<PathBuf>,
    /// Lexicon for mock mode; the bundled demo lexicon when unset.
    pub lexicon_path: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Mock,
            base_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-4".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            max_parallel: NonZeroUsize::new(4).unwrap(),
            max_retries: 3,
            timeout_seconds: 60.0,
            backoff_base_ms: 500,
            backoff_max_ms: 8_000,
            temperature: None,
            cache_enabled: true,
            cache_dir: None,
            lexicon_path: None,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let invalid = |m: &str| Err(GatewayError::InvalidConfig(m.to_string()));
        if !(self.timeout_seconds.is_finite() && self.timeout_seconds > 0.0) {
            return invalid("timeout_seconds must be a positive number");
        }
        if self.api_key_env.trim().is_empty() {
            return invalid("api_key_env must name an environment variable");
        }
        if self.mode == Mode::Live {
            if self.base_url.trim().is_empty() || self.model_name.trim().is_empty() {
                return invalid("live mode requires base_url and model_name");
            }
            if reqwest::Url::parse(&self.base_url).is_err() {
                return invalid("base_url is not a valid URL");
            }
        }
        Ok(())
    }

    /// The model name recorded in cache keys; mock mode has a fixed one.
    pub fn effective_model_name(&self) -> &str {
        match self.mode {
            Mode::Live => &self.model_name,
            Mode::Mock => "mock-lexicon",
        }
    }
}

/// Failure of a single backend attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("credential environment variable {variable} is not set")]
    CredentialMissing { variable: String },
    #[error("transient provider failure (status {status:?}): {message}")]
    Transient {
        status: Option<u16>,
        message: String,
    },
    #[error("provider error (status {status:?}): {message}")]
    Fatal {
        status: Option<u16>,
        message: String,
    },
    #[error("request timed out")]
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("credential environment variable {variable} is not set")]
    CredentialMissing { variable: String },
    #[error("provider error after {attempts} attempt(s) (status {status:?}): {message}")]
    ProviderError {
        status: Option<u16>,
        attempts: u32,
        message: String,
    },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("invalid gateway configuration: {0}")]
    InvalidConfig(String),
    #[error("mock lexicon: {0}")]
    Lexicon(String),
}

#[async_trait]
pub trait Backend: Send + Sync {
    async fn send(&self, prompt: &PromptText) -> Result<String, BackendError>;

    /// Whether the backend can serve requests without further setup.
    fn is_ready(&self) -> bool {
        true
    }
}

/// Exponential backoff without jitter, so delays are nondecreasing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.min(31)).unwrap_or(u32::MAX);
        self.base_delay
            .checked_mul(factor)
            .unwrap_or(self.max_delay)
            .min(self.max_delay)
    }

    pub fn delays(&self) -> impl Iterator<Item = Duration> + '_ {
        (0..self.max_retries).map(|r| self.delay(r))
    }
}

/// Knobs for a gateway built around an arbitrary backend.
#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub mode: Mode,
    pub model_name: String,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    pub max_parallel: NonZeroUsize,
}

impl GatewayOptions {
    pub fn mock() -> Self {
        Self {
            mode: Mode::Mock,
            model_name: "mock-lexicon".into(),
            retry: RetryPolicy::none(),
            timeout: Duration::from_secs(60),
            max_parallel: NonZeroUsize::new(4).unwrap(),
        }
    }
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    options: GatewayOptions,
    permits: Semaphore,
    cache: Option<ResponseCache>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("options", &self.options)
            .field("cached", &self.cache.as_ref().map(ResponseCache::len))
            .finish()
    }
}

impl Gateway {
    pub fn new(
        backend: Arc<dyn Backend>,
        options: GatewayOptions,
        cache: Option<ResponseCache>,
    ) -> Self {
        let permits = Semaphore::new(options.max_parallel.get());
        Self {
            backend,
            options,
            permits,
            cache,
        }
    }

    /// Build from configuration. `max_bullets` bounds mock summaries.
    pub fn from_config(cfg: &GatewayConfig, max_bullets: usize) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let backend: Arc<dyn Backend> = match cfg.mode {
            Mode::Mock => {
                let lexicon = match &cfg.lexicon_path {
                    Some(path) => {
                        MockLexicon::load(path).map_err(|e| GatewayError::Lexicon(e.to_string()))?
                    }
                    None => MockLexicon::demo(),
                };
                Arc::new(MockBackend::new(lexicon, max_bullets))
            }
            Mode::Live => Arc::new(
                LiveBackend::new(
                    &cfg.base_url,
                    &cfg.model_name,
                    &cfg.api_key_env,
                    cfg.temperature,
                )
                .map_err(|e| GatewayError::InvalidConfig(e.to_string()))?,
            ),
        };
        let options = GatewayOptions {
            mode: cfg.mode,
            model_name: cfg.effective_model_name().to_string(),
            retry: RetryPolicy {
                max_retries: cfg.max_retries,
                base_delay: Duration::from_millis(cfg.backoff_base_ms),
                max_delay: Duration::from_millis(cfg.backoff_max_ms.max(cfg.backoff_base_ms)),
            },
            timeout: Duration::from_secs_f64(cfg.timeout_seconds),
            max_parallel: cfg.max_parallel,
        };
        let cache = cfg.cache_enabled.then(|| match &cfg.cache_dir {
            Some(dir) => ResponseCache::persistent(dir),
            None => ResponseCache::in_memory(),
        });
        Ok(Self::new(backend, options, cache))
    }

    /// Offline gateway over the bundled demo lexicon with an in-memory cache.
    pub fn mock(max_bullets: usize) -> Self {
        Self::new(
            Arc::new(MockBackend::new(MockLexicon::demo(), max_bullets)),
            GatewayOptions::mock(),
            Some(ResponseCache::in_memory()),
        )
    }

    pub fn mode(&self) -> Mode {
        self.options.mode
    }

    pub fn model_name(&self) -> &str {
        &self.options.model_name
    }

    pub fn is_ready(&self) -> bool {
        self.backend.is_ready()
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_ref()
    }

    /// Cached completion.
    pub async fn complete(&self, prompt: &PromptText) -> Result<String, GatewayError> {
        let key = CacheKey::new(prompt, self.options.mode, &self.options.model_name);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            debug!(key = key.as_str(), "completion cache hit");
            return Ok(hit);
        }
        self.fetch_and_store(prompt, &key).await
    }

    /// Completion that skips the cache lookup and overwrites the entry, for
    /// re-asking after an unusable answer.
    pub async fn refresh(&self, prompt: &PromptText) -> Result<String, GatewayError> {
        let key = CacheKey::new(prompt, self.options.mode, &self.options.model_name);
        self.fetch_and_store(prompt, &key).await
    }

    async fn fetch_and_store(
        &self,
        prompt: &PromptText,
        key: &CacheKey,
    ) -> Result<String, GatewayError> {
        let response = self.call_with_retries(prompt).await?;
        if let Some(cache) = &self.cache {
            cache.put(
                key,
                prompt,
                self.options.mode,
                &self.options.model_name,
                &response,
            );
        }
        Ok(response)
    }

    async fn call_with_retries(&self, prompt: &PromptText) -> Result<String, GatewayError> {
        let _permit = self
            .permits
            .acquire()
            .await
            .expect("semaphore never closed");
        let retry = self.options.retry;
        let mut last = BackendError::Timeout;
        for attempt in 0..=retry.max_retries {
            let outcome = tokio::time::timeout(self.options.timeout, self.backend.send(prompt))
                .await
                .unwrap_or(Err(BackendError::Timeout));
            match outcome {
                Ok(text) => return Ok(text),
                Err(BackendError::CredentialMissing { variable }) => {
                    return Err(GatewayError::CredentialMissing { variable })
                }
                Err(BackendError::Fatal { status, message }) => {
                    return Err(GatewayError::ProviderError {
                        status,
                        attempts: attempt + 1,
                        message,
                    })
                }
                Err(e) => {
                    if attempt < retry.max_retries {
                        let delay = retry.delay(attempt);
                        warn!(attempt = attempt + 1, delay_ms = delay.as_millis() as u64, error = %e, "retrying completion");
                        tokio::time::sleep(delay).await;
                    }
                    last = e;
                }
            }
        }
        let attempts = retry.max_retries + 1;
        Err(match last {
            BackendError::Timeout => GatewayError::Timeout { attempts },
            BackendError::Transient { status, message } => GatewayError::ProviderError {
                status,
                attempts,
                message,
            },
            other => GatewayError::ProviderError {
                status: None,
                attempts,
                message: other.to_string(),
            },
        })
    }
}
