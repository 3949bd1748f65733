//! Count-panel CSV: header `site_id,t,count`, one row per (site, time),
//! times 0-based consecutive, written in site-major order.
//!
//! The same layout (with a `value` column) carries latent panels; see
//! [`write_value_csv`].

use std::path::Path;

use nalgebra::DMatrix;

use crate::process::CountPanel;

use super::{comment_or_version, FormatError};

pub fn parse_counts_csv(text: &str) -> Result<CountPanel, FormatError> {
    let rows = parse_long_rows(text, "counts", "count")?;
    let (site_ids, t_len) = infer_shape(&rows)?;
    let n = site_ids.len();
    let mut counts = DMatrix::<u64>::zeros(n, t_len);
    let mut seen = vec![false; n * t_len];
    for row in &rows {
        let i = site_ids.iter().position(|s| s == &row.site).expect("site collected");
        let t = row.t;
        if seen[i * t_len + t] {
            return Err(FormatError::Inconsistent(format!(
                "duplicate cell for site `{}` at t={t}",
                row.site
            )));
        }
        seen[i * t_len + t] = true;
        if row.value < 0.0 || row.value.fract() != 0.0 || row.value > u64::MAX as f64 {
            return Err(FormatError::BadValue {
                line: row.line,
                key: "count".into(),
                msg: format!("`{}` is not a nonnegative integer", row.value),
            });
        }
        counts[(i, t)] = row.value as u64;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        let (i, t) = (missing / t_len, missing % t_len);
        return Err(FormatError::Inconsistent(format!(
            "missing cell for site `{}` at t={t}",
            site_ids[i]
        )));
    }
    CountPanel::new(counts, site_ids, None)
        .map_err(|e| FormatError::Inconsistent(e.to_string()))
}

pub fn read_counts_csv(path: &Path) -> Result<CountPanel, FormatError> {
    parse_counts_csv(&std::fs::read_to_string(path)?)
}

pub fn write_counts_csv(panel: &CountPanel) -> String {
    let mut out = String::new();
    out.push_str("# spingarch-csv v1 counts\n");
    out.push_str("site_id,t,count\n");
    for (i, id) in panel.site_ids().iter().enumerate() {
        for t in 0..panel.n_times() {
            out.push_str(&format!("{id},{t},{}\n", panel.counts()[(i, t)]));
        }
    }
    out
}

/// Write a real-valued panel (latent fields) in the same long layout.
pub fn write_value_csv(
    kind: &str,
    site_ids: &[String],
    values: &DMatrix<f64>,
) -> String {
    let mut out = String::new();
    out.push_str(&format!("# spingarch-csv v1 {kind}\n"));
    out.push_str("site_id,t,value\n");
    for (i, id) in site_ids.iter().enumerate() {
        for t in 0..values.ncols() {
            out.push_str(&format!("{id},{t},{}\n", values[(i, t)]));
        }
    }
    out
}

struct LongRow {
    site: String,
    t: usize,
    value: f64,
    line: usize,
}

/// Shared reader for `site_id,t,<value>` long-format tables.
fn parse_long_rows(
    text: &str,
    kind: &'static str,
    value_col: &str,
) -> Result<Vec<LongRow>, FormatError> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        if comment_or_version(raw, lineno, kind)? {
            continue;
        }
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["site_id", "t", value_col] {
                return Err(FormatError::Syntax {
                    line: lineno,
                    msg: format!("expected header `site_id,t,{value_col}`, found `{line}`"),
                });
            }
            header_seen = true;
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(FormatError::Syntax {
                line: lineno,
                msg: format!("expected 3 fields, found {}", cols.len()),
            });
        }
        let t = cols[1].parse::<usize>().map_err(|e| FormatError::BadValue {
            line: lineno,
            key: "t".into(),
            msg: e.to_string(),
        })?;
        let value = cols[2].parse::<f64>().map_err(|e| FormatError::BadValue {
            line: lineno,
            key: value_col.into(),
            msg: e.to_string(),
        })?;
        if !value.is_finite() {
            return Err(FormatError::BadValue {
                line: lineno,
                key: value_col.into(),
                msg: "non-finite value".into(),
            });
        }
        rows.push(LongRow { site: cols[0].to_string(), t, value, line: lineno });
    }
    if !header_seen {
        return Err(FormatError::Syntax { line: 1, msg: "empty table".into() });
    }
    if rows.is_empty() {
        return Err(FormatError::Inconsistent("table has a header but no rows".into()));
    }
    Ok(rows)
}

/// Site order by first appearance; times must be 0-based and consecutive.
fn infer_shape(rows: &[LongRow]) -> Result<(Vec<String>, usize), FormatError> {
    let mut site_ids: Vec<String> = Vec::new();
    let mut t_max = 0usize;
    for row in rows {
        if !site_ids.contains(&row.site) {
            site_ids.push(row.site.clone());
        }
        t_max = t_max.max(row.t);
    }
    let t_len = t_max + 1;
    let expected = site_ids.len().checked_mul(t_len).ok_or_else(|| {
        FormatError::Inconsistent("table dimensions overflow".into())
    })?;
    if rows.len() != expected {
        return Err(FormatError::Inconsistent(format!(
            "{} rows for {} sites x {} times",
            rows.len(),
            site_ids.len(),
            t_len
        )));
    }
    Ok((site_ids, t_len))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_everything() {
        let counts = DMatrix::from_row_slice(2, 3, &[0u64, 4, 1, 2, 0, 17]);
        let panel = CountPanel::new(counts, vec!["a".into(), "b".into()], None).unwrap();
        let text = write_counts_csv(&panel);
        let back = parse_counts_csv(&text).unwrap();
        assert_eq!(back.counts(), panel.counts());
        assert_eq!(back.site_ids(), panel.site_ids());
    }

    #[test]
    fn missing_cell_detected() {
        let text = "site_id,t,count\na,0,1\na,1,2\nb,0,3\n";
        assert!(matches!(parse_counts_csv(text), Err(FormatError::Inconsistent(_))));
    }

    #[test]
    fn duplicate_cell_detected() {
        let text = "site_id,t,count\na,0,1\na,0,2\n";
        assert!(parse_counts_csv(text).is_err());
    }

    #[test]
    fn unknown_version_rejected() {
        let text = "# spingarch-csv v9 counts\nsite_id,t,count\na,0,1\n";
        assert!(matches!(
            parse_counts_csv(text),
            Err(FormatError::UnsupportedVersion { line: 1, .. })
        ));
    }

    #[test]
    fn wrong_kind_rejected() {
        let text = "# spingarch-csv v1 latents\nsite_id,t,count\na,0,1\n";
        assert!(matches!(parse_counts_csv(text), Err(FormatError::WrongKind { .. })));
    }

    #[test]
    fn fractional_count_rejected_with_line() {
        let text = "site_id,t,count\na,0,1.5\n";
        assert!(matches!(
            parse_counts_csv(text),
            Err(FormatError::BadValue { line: 2, .. })
        ));
    }
}
