use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::gateway::ModelSettings;
use crate::triage::TriageConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budgets {
    pub symptom_questions: u32,
    pub ddx_questions: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        let t = TriageConfig::default();
        Self {
            symptom_questions: t.symptom_question_budget,
            ddx_questions: t.ddx_question_budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    /// `script` is a script file shared by every encounter, or a directory
    /// holding `<vignette_id>.json` with `default.json` as fallback.
    Scripted { script: PathBuf },
    RemoteHttp {
        base_url: String,
        /// Environment variable holding the bearer token.
        #[serde(default)]
        token_env: Option<String>,
        #[serde(default)]
        timeout_secs: Option<u64>,
    },
}

/// Batch run settings, read from YAML. Relative paths are resolved against
/// the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory of vignette JSON files.
    pub dataset: PathBuf,
    #[serde(default)]
    pub ehr_store: Option<PathBuf>,
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub seed: u64,
    pub backend: BackendConfig,
    #[serde(default)]
    pub model: ModelSettings,
    pub output_dir: PathBuf,
    /// Stamp every transcript with this time instead of the wall clock.
    #[serde(default)]
    pub fixed_clock: Option<DateTime<Utc>>,
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing run config: {0}")]
    Parse(#[from] serde_yaml::Error),
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
}

impl RunConfig {
    pub fn from_yaml(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = serde_yaml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config = Self::from_yaml(&text)?;
        Ok(config.resolved_against(path.parent().unwrap_or(Path::new("."))))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.parallelism == 0 {
            return Err(ConfigError::ZeroParallelism);
        }
        Ok(())
    }

    pub fn resolved_against(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset);
        fix(&mut self.output_dir);
        if let Some(p) = self.ehr_store.as_mut() {
            fix(p);
        }
        if let Some(p) = self.corpus.as_mut() {
            fix(p);
        }
        if let BackendConfig::Scripted { script } = &mut self.backend {
            fix(script);
        }
        self
    }

    pub fn triage_config(&self) -> TriageConfig {
        TriageConfig {
            symptom_question_budget: self.budgets.symptom_questions,
            ddx_question_budget: self.budgets.ddx_questions,
            model: self.model.clone(),
        }
    }
}
