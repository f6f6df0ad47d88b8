//! Batch commands, artifact files and the live session bridge behind the `cyborg` binary.

mod batch;
pub mod protocol;
mod serve;
mod session;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::scenario::{ScenarioError, CONFIG_BEGIN, CONFIG_END};

pub use batch::{
    analyze, gap_montecarlo, nav_run, stim_dump, AnalyzeOptions, GapOptions, GapRunConfig,
    NavRunOptions, NavRunOutput, StimDumpOptions,
};
pub use serve::{serve, ServeOptions, ServeReport};
pub use session::Session;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Runtime(String),
}

impl ServiceError {
    /// Configuration, I/O and usage problems exit with 2; anything else with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            ServiceError::Runtime(_) => 1,
            _ => 2,
        }
    }
}

impl From<ScenarioError> for ServiceError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { path, source } => ServiceError::Io { path, source },
            e => ServiceError::Config(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |source| ServiceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, ServiceError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

/// `#` comment block that opens every CSV artifact: tool, command, seed,
/// extra keys, then the resolved config between markers.
pub fn artifact_header(
    command: &str,
    seed: u64,
    extra: &[(&str, String)],
    config_toml: &str,
) -> String {
    let mut h = format!("# cyborg {VERSION} {command}\n# seed = {seed}\n");
    for (k, v) in extra {
        h.push_str(&format!("# {k} = {v}\n"));
    }
    h.push_str(CONFIG_BEGIN);
    h.push('\n');
    for line in config_toml.lines() {
        if line.is_empty() {
            h.push_str("#\n");
        } else {
            h.push_str("# ");
            h.push_str(line);
            h.push('\n');
        }
    }
    h.push_str(CONFIG_END);
    h.push('\n');
    h
}

/// Value of a `# key = value` header line.
pub fn header_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .take_while(|l| l.starts_with('#') && *l != CONFIG_BEGIN)
        .find_map(|l| {
            l.strip_prefix("# ")?
                .strip_prefix(key)?
                .trim_start()
                .strip_prefix('=')
                .map(str::trim)
        })
}

/// Artifact content after the `#` header.
pub fn artifact_body(text: &str) -> String {
    text.lines()
        .skip_while(|l| l.starts_with('#'))
        .flat_map(|l| [l, "\n"])
        .collect()
}

/// Renders a CSV writer closure into a string.
pub(crate) fn csv_string<F>(f: F) -> Result<String, ServiceError>
where
    F: FnOnce(&mut Vec<u8>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| ServiceError::Runtime(e.to_string()))?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let h = artifact_header(
            "nav-run",
            9,
            &[("trial", "3".into())],
            "seed = 9\n\n[arena]\nx_min = 0.0\n",
        );
        let text = format!("{h}a,b\n1,2\n");
        assert_eq!(header_value(&text, "seed"), Some("9"));
        assert_eq!(header_value(&text, "trial"), Some("3"));
        assert_eq!(artifact_body(&text), "a,b\n1,2\n");
        assert!(h.contains("#\n# [arena]"));
    }
}
