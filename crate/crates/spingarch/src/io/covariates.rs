//! Site-covariate CSV: header `site_id,<name1>,<name2>,...`, one row per
//! site.

use std::path::Path;

use nalgebra::DMatrix;

use super::{comment_or_version, FormatError};

/// Parsed covariate table; rows align with `site_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateTable {
    pub site_ids: Vec<String>,
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
}

impl CovariateTable {
    /// Reorder rows to match an external site ordering.
    pub fn aligned_to(&self, site_ids: &[String]) -> Result<DMatrix<f64>, FormatError> {
        let mut out = DMatrix::zeros(site_ids.len(), self.names.len());
        for (row, id) in site_ids.iter().enumerate() {
            let src = self.site_ids.iter().position(|s| s == id).ok_or_else(|| {
                FormatError::Inconsistent(format!("covariates missing site `{id}`"))
            })?;
            for c in 0..self.names.len() {
                out[(row, c)] = self.values[(src, c)];
            }
        }
        Ok(out)
    }
}

pub fn parse_covariates_csv(text: &str) -> Result<CovariateTable, FormatError> {
    let mut names: Option<Vec<String>> = None;
    let mut site_ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        if comment_or_version(raw, lineno, "covariates")? {
            continue;
        }
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        match &names {
            None => {
                if cols.len() < 2 || cols[0] != "site_id" {
                    return Err(FormatError::Syntax {
                        line: lineno,
                        msg: format!("expected header `site_id,<name>,...`, found `{line}`"),
                    });
                }
                names = Some(cols[1..].iter().map(|s| s.to_string()).collect());
            }
            Some(names) => {
                if cols.len() != names.len() + 1 {
                    return Err(FormatError::Syntax {
                        line: lineno,
                        msg: format!("expected {} fields, found {}", names.len() + 1, cols.len()),
                    });
                }
                if site_ids.contains(&cols[0].to_string()) {
                    return Err(FormatError::Inconsistent(format!(
                        "duplicate site `{}`",
                        cols[0]
                    )));
                }
                site_ids.push(cols[0].to_string());
                let mut row = Vec::with_capacity(names.len());
                for (name, field) in names.iter().zip(&cols[1..]) {
                    let v = field.parse::<f64>().map_err(|e| FormatError::BadValue {
                        line: lineno,
                        key: name.clone(),
                        msg: e.to_string(),
                    })?;
                    if !v.is_finite() {
                        return Err(FormatError::BadValue {
                            line: lineno,
                            key: name.clone(),
                            msg: "non-finite value".into(),
                        });
                    }
                    row.push(v);
                }
                rows.push(row);
            }
        }
    }
    let names = names.ok_or(FormatError::Syntax { line: 1, msg: "empty table".into() })?;
    if rows.is_empty() {
        return Err(FormatError::Inconsistent("covariate table has no rows".into()));
    }
    let values = DMatrix::from_fn(rows.len(), names.len(), |i, j| rows[i][j]);
    Ok(CovariateTable { site_ids, names, values })
}

pub fn read_covariates_csv(path: &Path) -> Result<CovariateTable, FormatError> {
    parse_covariates_csv(&std::fs::read_to_string(path)?)
}

pub fn write_covariates_csv(table: &CovariateTable) -> String {
    let mut out = String::new();
    out.push_str("# spingarch-csv v1 covariates\n");
    out.push_str(&format!("site_id,{}\n", table.names.join(",")));
    for (i, id) in table.site_ids.iter().enumerate() {
        let fields: Vec<String> =
            (0..table.names.len()).map(|j| table.values[(i, j)].to_string()).collect();
        out.push_str(&format!("{id},{}\n", fields.join(",")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_alignment() {
        let table = CovariateTable {
            site_ids: vec!["b".into(), "a".into()],
            names: vec!["pop".into(), "unemp".into()],
            values: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
        };
        let text = write_covariates_csv(&table);
        let back = parse_covariates_csv(&text).unwrap();
        assert_eq!(back, table);

        let aligned = back.aligned_to(&["a".into(), "b".into()]).unwrap();
        assert_eq!(aligned[(0, 0)], 3.0);
        assert_eq!(aligned[(1, 1)], 2.0);
        assert!(back.aligned_to(&["zz".into()]).is_err());
    }

    #[test]
    fn ragged_row_rejected() {
        let text = "site_id,pop\na,1.0\nb,2.0,3.0\n";
        assert!(matches!(parse_covariates_csv(text), Err(FormatError::Syntax { line: 3, .. })));
    }
}
