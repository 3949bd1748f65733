//! File formats: edge lists, count/covariate/latent/chain CSV, run configs,
//! and run manifests.
//!
//! Every format has a pure `parse_*` entry point that takes a string (these
//! are the fuzzing surfaces) plus thin `read_*`/`write_*` path wrappers.
//! CSV files carry a version comment (`# spingarch-csv v1 <kind>`); readers
//! accept files without the comment as current-version but reject unknown
//! versions or mismatched kinds loudly.

mod chains;
mod config;
mod counts;
mod covariates;
mod edges;
mod manifest;

pub use chains::{parse_chains_csv, read_chains_csv, write_chains_csv, ChainsTable};
pub use config::{parse_config, read_config, RunConfig};
pub use counts::{parse_counts_csv, read_counts_csv, write_counts_csv, write_value_csv};
pub use covariates::{parse_covariates_csv, read_covariates_csv, write_covariates_csv, CovariateTable};
pub use edges::{parse_edge_list, read_edge_list, write_edge_list};
pub use manifest::{fnv1a64, parse_manifest, read_manifest, write_manifest, Manifest};

pub(crate) const CSV_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unsupported format version `{found}` (this build reads v{CSV_VERSION})")]
    UnsupportedVersion { line: usize, found: String },
    #[error("file is `{found}` data, expected `{want}`")]
    WrongKind { want: &'static str, found: String },
    #[error("missing key `{key}` in section [{section}]")]
    MissingKey { section: String, key: String },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    BadValue { line: usize, key: String, msg: String },
    #[error("inconsistent table: {0}")]
    Inconsistent(String),
    #[error("manifest hash mismatch: file has been modified")]
    HashMismatch,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
}

/// Shared helper: strip a trailing newline-insensitive version comment check.
/// Returns Err for a recognized-but-wrong version header, Ok(true) if the
/// line is any comment, Ok(false) otherwise.
pub(crate) fn comment_or_version(
    line: &str,
    lineno: usize,
    want_kind: &'static str,
) -> Result<bool, FormatError> {
    let trimmed = line.trim();
    if !trimmed.starts_with('#') {
        return Ok(false);
    }
    let body = trimmed.trim_start_matches('#').trim();
    if let Some(rest) = body.strip_prefix("spingarch-csv") {
        let mut parts = rest.split_whitespace();
        let version = parts.next().unwrap_or("");
        let kind = parts.next().unwrap_or("");
        if version != format!("v{CSV_VERSION}") {
            return Err(FormatError::UnsupportedVersion { line: lineno, found: version.into() });
        }
        if kind != want_kind {
            return Err(FormatError::WrongKind { want: want_kind, found: kind.into() });
        }
    }
    Ok(true)
}
