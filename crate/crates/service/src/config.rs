//! Deployment configuration. Everything lives in one JSON file; secrets
//! such as API keys are named there by environment variable and read from
//! the environment when a backend is built.
//!
//! ```json
//! {
//!   "bind": "127.0.0.1:8080",
//!   "trace_dir": "traces",
//!   "blocklist": null,
//!   "banks_dir": null,
//!   "tasks": { "dialogue_example_count": 4 },
//!   "models": { "mock-alpha": { "backend": "mock" } }
//! }
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use interlace_core::banks::TaskBanks;
use interlace_core::lm::config::ModelRegistry;
use interlace_core::lm::RetryPolicy;
use interlace_core::survey::SurveyBank;
use interlace_core::tasks::{BankAdapter, TaskConfig};
use interlace_core::{Blocklist, LmClient, LmError, TaskKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    pub trace_dir: PathBuf,
    /// Keyword list, one per line. `None` uses the bundled list.
    pub blocklist: Option<PathBuf>,
    /// Directory holding replacement task banks. `None` uses the bundled banks.
    pub banks_dir: Option<PathBuf>,
    pub tasks: TaskConfig,
    #[serde(flatten)]
    pub registry: ModelRegistry,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            trace_dir: PathBuf::from("traces"),
            blocklist: None,
            banks_dir: None,
            tasks: TaskConfig::default(),
            registry: ModelRegistry::default(),
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("parsing {}: {e}", path.display()))
    }
}

/// Shared, read-only resources built from a [`ServiceConfig`].
pub struct Environment {
    pub banks: Arc<TaskBanks>,
    pub surveys: SurveyBank,
    pub tasks: TaskConfig,
    pub blocklist: Blocklist,
    pub registry: ModelRegistry,
    pub retry: RetryPolicy,
}

impl Environment {
    pub fn from_config(cfg: &ServiceConfig) -> anyhow::Result<Self> {
        let banks = match &cfg.banks_dir {
            Some(dir) => TaskBanks::load_dir(dir)?,
            None => TaskBanks::bundled(),
        };
        let blocklist = match &cfg.blocklist {
            Some(path) => Blocklist::load(path)?,
            None => Blocklist::bundled(),
        };
        Ok(Self {
            banks: Arc::new(banks),
            surveys: SurveyBank::bundled(),
            tasks: cfg.tasks.clone(),
            blocklist,
            registry: cfg.registry.clone(),
            retry: RetryPolicy::default(),
        })
    }

    /// Bundled banks, surveys and blocklist with mock models only.
    pub fn bundled() -> Self {
        Self::from_config(&ServiceConfig::default()).expect("bundled resources load")
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn adapter(&self, kind: TaskKind) -> BankAdapter {
        BankAdapter::new(kind, self.banks.clone(), self.tasks.clone())
    }

    pub fn client(&self, model_id: &str) -> Result<LmClient, LmError> {
        let backend = self.registry.backend(model_id)?;
        Ok(LmClient::new(backend, self.blocklist.clone()).with_retry(self.retry.clone()))
    }
}
