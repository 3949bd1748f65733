//! Edge-list files.
//!
//! UTF-8 text; `#` starts a comment line; the first non-comment line must be
//! `n=<sites>`; every following line is one undirected edge as two 0-based
//! site indices separated by a comma.

use std::path::Path;

use crate::graph::NeighborhoodGraph;

use super::FormatError;

/// Parse an edge-list document into a validated graph.
pub fn parse_edge_list(text: &str) -> Result<NeighborhoodGraph, FormatError> {
    let mut n_sites: Option<usize> = None;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if n_sites.is_none() {
            let rest = line.strip_prefix("n=").or_else(|| line.strip_prefix("n =")).ok_or(
                FormatError::Syntax {
                    line: lineno,
                    msg: format!("expected `n=<sites>` header, found `{line}`"),
                },
            )?;
            let n = rest.trim().parse::<usize>().map_err(|e| FormatError::Syntax {
                line: lineno,
                msg: format!("bad site count `{}`: {e}", rest.trim()),
            })?;
            n_sites = Some(n);
            continue;
        }
        let (a, b) = line.split_once(',').ok_or_else(|| FormatError::Syntax {
            line: lineno,
            msg: format!("expected `i,j`, found `{line}`"),
        })?;
        let parse = |s: &str| {
            s.trim().parse::<usize>().map_err(|e| FormatError::Syntax {
                line: lineno,
                msg: format!("bad site index `{}`: {e}", s.trim()),
            })
        };
        pairs.push((parse(a)?, parse(b)?));
    }
    let n = n_sites.ok_or(FormatError::Syntax {
        line: text.lines().count().max(1),
        msg: "missing `n=<sites>` header".into(),
    })?;
    Ok(NeighborhoodGraph::from_edge_list(n, &pairs)?)
}

pub fn read_edge_list(path: &Path) -> Result<NeighborhoodGraph, FormatError> {
    parse_edge_list(&std::fs::read_to_string(path)?)
}

/// Serialize a graph in the edge-list format (one line per unordered edge).
pub fn write_edge_list(graph: &NeighborhoodGraph) -> String {
    let mut out = String::new();
    out.push_str(&format!("n={}\n", graph.n_sites()));
    for &(a, b) in graph.edges() {
        out.push_str(&format!("{a},{b}\n"));
    }
    out
}
