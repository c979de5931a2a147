//! Command implementations behind the `shared-dof` binary.

pub mod commands;
pub mod server;

use std::path::{Path, PathBuf};

use shared_dof_core::{builtin_scenario, load_scenario, Scenario};

pub const LOG_DIR_ENV: &str = "SHARED_DOF_LOG_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read scenario {path}")]
    ScenarioIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario {path}")]
    Scenario {
        path: PathBuf,
        #[source]
        source: shared_dof_core::ScenarioError,
    },
}

/// Load a scenario file. A missing file whose stem names a built-in
/// scenario (e.g. `canonical.json`) falls back to the built-in.
pub fn resolve_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            match builtin_scenario(stem) {
                Some(t) if path.parent().is_none_or(|p| p.as_os_str().is_empty()) => t.to_string(),
                _ => {
                    return Err(CliError::ScenarioIo {
                        path: path.to_path_buf(),
                        source: e,
                    })
                }
            }
        }
        Err(e) => {
            return Err(CliError::ScenarioIo {
                path: path.to_path_buf(),
                source: e,
            })
        }
    };
    load_scenario(&text).map_err(|source| CliError::Scenario {
        path: path.to_path_buf(),
        source,
    })
}

/// Apply the log-directory override: with it set, only the file name of
/// `path` is kept and placed inside the override directory.
pub fn output_path(path: &Path, log_dir: Option<&Path>) -> PathBuf {
    match (log_dir, path.file_name()) {
        (Some(dir), Some(name)) => dir.join(name),
        _ => path.to_path_buf(),
    }
}

pub fn log_dir_from_env() -> Option<PathBuf> {
    std::env::var_os(LOG_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}
