//! Model registry loaded from a JSON file:
//!
//! ```json
//! { "models": {
//!     "mock-alpha": { "backend": "mock" },
//!     "hosted": { "backend": "http", "endpoint": "https://example.test/v1/completions",
//!                 "auth_env": "HOSTED_API_KEY", "timeout_ms": 20000 } } }
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::http::DEFAULT_TIMEOUT;
use super::mock::{seed_for_model, FixtureTable, MockBackend, MockStyle};
use super::{HttpBackend, LmBackend, LmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backend: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default)]
    pub timeout_ms: Option<u64>,
    /// Model name sent to the remote API, if different from the local id.
    #[serde(default)]
    pub remote_model: Option<String>,
    #[serde(default)]
    pub mock_seed: Option<u64>,
    #[serde(default)]
    pub mock_style: Option<MockStyle>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelRegistry {
    pub models: BTreeMap<String, ModelConfig>,
}

impl ModelRegistry {
    pub fn load(path: &Path) -> Result<Self, LmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LmError::Config(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LmError::Config(format!("parsing {}: {e}", path.display())))
    }

    /// Builds the backend for `model_id`. Ids absent from the registry whose
    /// name starts with `mock-` fall back to a preset mock.
    pub fn backend(&self, model_id: &str) -> Result<Arc<dyn LmBackend>, LmError> {
        let Some(cfg) = self.models.get(model_id) else {
            if model_id.starts_with("mock-") {
                return Ok(Arc::new(MockBackend::for_model(model_id)));
            }
            return Err(LmError::Config(format!("unknown model id {model_id:?}")));
        };
        match cfg.backend {
            BackendKind::Mock => {
                let base = MockBackend::for_model(model_id);
                if cfg.mock_seed.is_none() && cfg.mock_style.is_none() {
                    return Ok(Arc::new(base));
                }
                let seed = cfg.mock_seed.unwrap_or_else(|| seed_for_model(model_id));
                let style = cfg.mock_style.clone().unwrap_or_else(|| base.style().clone());
                Ok(Arc::new(MockBackend::new(model_id, seed, style, Arc::new(FixtureTable::bundled()))))
            }
            BackendKind::Http => {
                let endpoint = cfg
                    .endpoint
                    .clone()
                    .ok_or_else(|| LmError::Config(format!("model {model_id:?} has no endpoint")))?;
                let api_key = match &cfg.auth_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        LmError::Config(format!("environment variable {var} is not set"))
                    })?),
                    None => None,
                };
                let timeout = cfg.timeout_ms.map(Duration::from_millis).unwrap_or(DEFAULT_TIMEOUT);
                let mut backend = HttpBackend::new(model_id, endpoint, api_key, timeout)?;
                if let Some(name) = &cfg.remote_model {
                    backend = backend.with_remote_model(name.clone());
                }
                Ok(Arc::new(backend))
            }
        }
    }
}
