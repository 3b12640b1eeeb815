//! TOML configuration: backend declarations, seeds, cache directory, and
//! prompt-template overrides. Resolution order for every setting is CLI flag
//! over environment variable over config file over built-in default.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::gateway::BackendConfig;
use crate::simulation::PromptTemplateSet;
use crate::{Error, Result};

pub const CACHE_DIR_ENV: &str = "BOLT_CACHE_DIR";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateOverrides {
    pub therapist_system: Option<String>,
    pub client_persona: Option<String>,
    pub end_token: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    /// Backend used when no `--backend` flag is given.
    pub default_backend: Option<String>,
    #[serde(default, rename = "backend")]
    pub backends: Vec<BackendConfig>,
    pub templates: Option<TemplateOverrides>,
}

pub fn parse_config(text: &str) -> Result<Config> {
    let mut config: Config =
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
    for backend in &mut config.backends {
        // convention: http backends default their key variable to
        // BOLT_API_KEY_<NAME>
        if backend.kind == "http_chat" && backend.api_key_env.is_none() {
            backend.api_key_env = Some(format!(
                "BOLT_API_KEY_{}",
                backend.name.to_uppercase().replace('-', "_")
            ));
        }
        backend.validate()?;
    }
    let mut names: Vec<&str> = config.backends.iter().map(|b| b.name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    if names.len() != config.backends.len() {
        return Err(Error::Config("duplicate backend names in config".into()));
    }
    if let Some(default) = &config.default_backend {
        if !config.backends.iter().any(|b| &b.name == default) {
            return Err(Error::Config(format!(
                "default_backend `{default}` is not declared"
            )));
        }
    }
    Ok(config)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    let text = fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
    parse_config(&text)
}

impl Config {
    pub fn find_backend(&self, name: &str) -> Result<&BackendConfig> {
        self.backends
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| {
                Error::Config(format!(
                    "backend `{name}` is not declared (available: {})",
                    self.backends
                        .iter()
                        .map(|b| b.name.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ))
            })
    }

    /// Pick a backend: explicit flag beats config default.
    pub fn select_backend(&self, flag: Option<&str>) -> Result<&BackendConfig> {
        match flag.or(self.default_backend.as_deref()) {
            Some(name) => self.find_backend(name),
            None => Err(Error::Usage(
                "no backend selected: pass --backend or set default_backend in the config".into(),
            )),
        }
    }

    pub fn templates(&self) -> Result<PromptTemplateSet> {
        let mut set = PromptTemplateSet::default();
        if let Some(overrides) = &self.templates {
            if let Some(t) = &overrides.therapist_system {
                set.therapist_system = t.clone();
            }
            if let Some(c) = &overrides.client_persona {
                set.client_persona = c.clone();
            }
            if let Some(e) = &overrides.end_token {
                set.end_token = e.clone();
            }
        }
        set.validate()?;
        Ok(set)
    }

    /// Cache directory: environment variable beats the config file.
    pub fn cache_dir(&self) -> Option<PathBuf> {
        std::env::var_os(CACHE_DIR_ENV)
            .map(PathBuf::from)
            .or_else(|| self.cache_dir.clone())
    }
}
