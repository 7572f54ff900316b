use std::path::{Path, PathBuf};

use cranio::correspondence::RegistrationParams;
use cranio::validation::Method;
use serde::Deserialize;

use crate::CliError;

/// Experiment record loaded with `--config`. Every field is optional and a
/// command-line flag always takes precedence over the matching field.
/// Relative paths are resolved against the working directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub mesh: Option<PathBuf>,
    pub landmarks: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub tables: Option<PathBuf>,
    pub topology: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub skull: Option<PathBuf>,
    pub spec: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub iterations: Option<usize>,
    pub registration: Option<RegistrationParams>,
    pub method: Option<Method>,
    pub methods: Option<Vec<Method>>,
    pub components: Option<usize>,
    pub max_components: Option<usize>,
    pub bin_width: Option<f64>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| cranio::Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| cranio::Error::format(path.display().to_string(), e.line(), e.to_string()).into())
    }
}

/// `flag`, else `config`, else a usage error naming the flag.
pub fn required<T>(flag: Option<T>, config: Option<T>, name: &str) -> Result<T, CliError> {
    flag.or(config)
        .ok_or_else(|| CliError::Usage(format!("missing --{name} (give the flag or set it in --config)")))
}

/// Checks that an input path exists before any work starts.
pub fn existing(path: PathBuf, name: &str) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Core(cranio::Error::io(
            &path,
            std::io::Error::new(std::io::ErrorKind::NotFound, format!("--{name} does not exist")),
        )))
    }
}
