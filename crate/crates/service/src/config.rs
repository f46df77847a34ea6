use std::net::IpAddr;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use axum::http::HeaderValue;
use quickcue_core::prompt::{
    default_classification_examples, default_summarization_examples, load_classification_examples,
    load_summarization_examples,
};
use quickcue_core::{
    Gateway, GatewayConfig, Pipeline, PreprocessConfig, PromptEngine, SummarizeConfig,
};
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "QUICKCUE_CONFIG";

/// Demonstration stores replacing the bundled ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExampleStorePaths {
    pub classification: Option<PathBuf>,
    pub summarization: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind_address: IpAddr,
    pub port: u16,
    pub gateway: GatewayConfig,
    pub preprocess: PreprocessConfig,
    pub summarize: SummarizeConfig,
    pub example_store_paths: ExampleStorePaths,
    pub cors_allowed_origins: Vec<String>,
    pub max_reviews_per_request: NonZeroUsize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind_address: IpAddr::from([127, 0, 0, 1]),
            port: 8787,
            gateway: GatewayConfig::default(),
            preprocess: PreprocessConfig::default(),
            summarize: SummarizeConfig::default(),
            example_store_paths: ExampleStorePaths::default(),
            // the content script runs on the map pages, so requests carry their origin
            cors_allowed_origins: vec![
                "https://www.google.com".into(),
                "https://maps.google.com".into(),
            ],
            max_reviews_per_request: NonZeroUsize::new(500).unwrap(),
        }
    }
}

impl ServiceConfig {
    /// Parse TOML. Relative paths are taken relative to `base_dir`.
    pub fn from_toml(raw: &str, base_dir: &Path) -> anyhow::Result<Self> {
        let mut cfg: ServiceConfig = toml::from_str(raw)?;
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut().filter(|p| p.is_relative()) {
                *path = base_dir.join(&*path);
            }
        };
        rebase(&mut cfg.example_store_paths.classification);
        rebase(&mut cfg.example_store_paths.summarization);
        rebase(&mut cfg.gateway.cache_dir);
        rebase(&mut cfg.gateway.lexicon_path);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::from_toml(&raw, base)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The config named on the command line, else the one named by
    /// `QUICKCUE_CONFIG`, else the defaults.
    pub fn resolve(flag: Option<&Path>) -> anyhow::Result<Self> {
        let from_env = std::env::var_os(CONFIG_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from);
        match flag.map(Path::to_path_buf).or(from_env) {
            Some(path) => Self::load(&path),
            None => {
                let cfg = Self::default();
                cfg.validate()?;
                Ok(cfg)
            }
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.port == 0 {
            bail!("port must be in 1..=65535");
        }
        self.gateway.validate()?;
        for path in [
            &self.example_store_paths.classification,
            &self.example_store_paths.summarization,
        ]
        .into_iter()
        .flatten()
        {
            if !path.is_file() {
                bail!("example store {} does not exist", path.display());
            }
        }
        for origin in &self.cors_allowed_origins {
            if origin == "*" {
                bail!("wildcard CORS origin is not allowed; list origins explicitly");
            }
            HeaderValue::from_str(origin)
                .with_context(|| format!("invalid CORS origin {origin:?}"))?;
        }
        Ok(())
    }

    pub fn prompt_engine(&self) -> anyhow::Result<PromptEngine> {
        let stores = &self.example_store_paths;
        let classification = match &stores.classification {
            Some(p) => load_classification_examples(p)?,
            None => default_classification_examples(),
        };
        let summarization = match &stores.summarization {
            Some(p) => load_summarization_examples(p)?,
            None => default_summarization_examples(),
        };
        Ok(PromptEngine::new(classification, summarization)?)
    }

    pub fn build_pipeline(&self) -> anyhow::Result<Pipeline> {
        let gateway = Gateway::from_config(&self.gateway, self.summarize.max_bullets.get())?;
        Ok(Pipeline::new(
            Arc::new(gateway),
            Arc::new(self.prompt_engine()?),
            self.preprocess,
            self.summarize,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use quickcue_core::Mode;

    #[test]
    fn defaults_are_valid() {
        let cfg = ServiceConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.port, 8787);
        assert_eq!(cfg.gateway.mode, Mode::Mock);
        assert_eq!(cfg.max_reviews_per_request.get(), 500);
    }

    #[test]
    fn parses_partial_toml() {
        let raw = r#"
            port = 9000
            cors_allowed_origins = ["https://example.org"]

            [gateway]
            mode = "live"
            model_name = "some-model"
            max_parallel = 2

            [summarize]
            max_bullets = 3

            [example_store_paths]
            classification = "stores/carp.json"
        "#;
        let cfg = ServiceConfig::from_toml(raw, Path::new("/etc/quickcue")).unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.gateway.mode, Mode::Live);
        assert_eq!(cfg.gateway.max_parallel.get(), 2);
        assert_eq!(cfg.summarize.max_bullets.get(), 3);
        assert_eq!(cfg.summarize.max_reviews_per_bucket.get(), 30);
        assert_eq!(
            cfg.example_store_paths.classification.as_deref(),
            Some(Path::new("/etc/quickcue/stores/carp.json"))
        );
        // the store file does not exist
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ServiceConfig::from_toml("prot = 1", Path::new(".")).is_err());
        assert!(ServiceConfig::from_toml("[gateway]\napi_key = \"x\"", Path::new(".")).is_err());
        let zero_port = ServiceConfig::from_toml("port = 0", Path::new(".")).unwrap();
        assert!(zero_port.validate().is_err());
        let wildcard =
            ServiceConfig::from_toml("cors_allowed_origins = [\"*\"]", Path::new(".")).unwrap();
        assert!(wildcard.validate().is_err());
        assert!(ServiceConfig::from_toml("port = 70000", Path::new(".")).is_err());
    }

    #[test]
    fn loads_custom_stores() {
        let dir = tempfile::tempdir().unwrap();
        let store = dir.path().join("carp.json");
        std::fs::write(
            &store,
            r#"[{"input": "Great tacos.", "pairs": [["Food", "Positive"]]}]"#,
        )
        .unwrap();
        let config = dir.path().join("quickcue.toml");
        std::fs::write(
            &config,
            "[example_store_paths]\nclassification = \"carp.json\"\n",
        )
        .unwrap();
        let cfg = ServiceConfig::load(&config).unwrap();
        let engine = cfg.prompt_engine().unwrap();
        assert_eq!(engine.classification_examples().len(), 1);
        assert_ne!(engine.version(), PromptEngine::with_defaults().version());
    }
}
