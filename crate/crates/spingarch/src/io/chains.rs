//! Posterior chains CSV: header `chain,iter,<param>,...`, one row per draw.

use std::path::Path;

use super::{comment_or_version, FormatError};

/// Draws in long format: `values[k]` aligns with `param_names` for row `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainsTable {
    pub param_names: Vec<String>,
    pub chain: Vec<u32>,
    pub iter: Vec<u32>,
    pub values: Vec<Vec<f64>>,
}

impl ChainsTable {
    pub fn n_draws(&self) -> usize {
        self.values.len()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.param_names.iter().position(|p| p == name)?;
        Some(self.values.iter().map(|row| row[j]).collect())
    }
}

pub fn parse_chains_csv(text: &str) -> Result<ChainsTable, FormatError> {
    let mut names: Option<Vec<String>> = None;
    let mut chain = Vec::new();
    let mut iter = Vec::new();
    let mut values = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        if comment_or_version(raw, lineno, "chains")? {
            continue;
        }
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        match &names {
            None => {
                if cols.len() < 3 || cols[0] != "chain" || cols[1] != "iter" {
                    return Err(FormatError::Syntax {
                        line: lineno,
                        msg: format!("expected header `chain,iter,<param>,...`, found `{line}`"),
                    });
                }
                names = Some(cols[2..].iter().map(|s| s.to_string()).collect());
            }
            Some(names) => {
                if cols.len() != names.len() + 2 {
                    return Err(FormatError::Syntax {
                        line: lineno,
                        msg: format!("expected {} fields, found {}", names.len() + 2, cols.len()),
                    });
                }
                let c = cols[0].parse::<u32>().map_err(|e| FormatError::BadValue {
                    line: lineno,
                    key: "chain".into(),
                    msg: e.to_string(),
                })?;
                let it = cols[1].parse::<u32>().map_err(|e| FormatError::BadValue {
                    line: lineno,
                    key: "iter".into(),
                    msg: e.to_string(),
                })?;
                let mut row = Vec::with_capacity(names.len());
                for (name, field) in names.iter().zip(&cols[2..]) {
                    let v = field.parse::<f64>().map_err(|e| FormatError::BadValue {
                        line: lineno,
                        key: name.clone(),
                        msg: e.to_string(),
                    })?;
                    if !v.is_finite() {
                        return Err(FormatError::BadValue {
                            line: lineno,
                            key: name.clone(),
                            msg: "non-finite draw".into(),
                        });
                    }
                    row.push(v);
                }
                chain.push(c);
                iter.push(it);
                values.push(row);
            }
        }
    }
    let param_names = names.ok_or(FormatError::Syntax { line: 1, msg: "empty table".into() })?;
    if values.is_empty() {
        return Err(FormatError::Inconsistent("chains table has no draws".into()));
    }
    Ok(ChainsTable { param_names, chain, iter, values })
}

pub fn read_chains_csv(path: &Path) -> Result<ChainsTable, FormatError> {
    parse_chains_csv(&std::fs::read_to_string(path)?)
}

pub fn write_chains_csv(table: &ChainsTable) -> String {
    let mut out = String::new();
    out.push_str("# spingarch-csv v1 chains\n");
    out.push_str(&format!("chain,iter,{}\n", table.param_names.join(",")));
    for k in 0..table.n_draws() {
        let fields: Vec<String> = table.values[k].iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&format!("{},{},{}\n", table.chain[k], table.iter[k], fields.join(",")));
    }
    out
}
