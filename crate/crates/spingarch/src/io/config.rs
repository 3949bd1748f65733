//! Run configuration files: `key = value` lines grouped under `[section]`
//! headers, `#` comments. Values stay strings until a typed getter is
//! called, so errors can point at the exact line.

use std::collections::BTreeMap;
use std::path::Path;

use super::FormatError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    /// section -> key -> (value, line number)
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        parse_config(text)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn sections(&self) -> impl Iterator<Item = &String> {
        self.sections.keys()
    }

    pub fn keys(&self, section: &str) -> Vec<String> {
        self.sections.get(section).map(|m| m.keys().cloned().collect()).unwrap_or_default()
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|m| m.get(key)).map(|(v, _)| v.as_str())
    }

    fn entry(&self, section: &str, key: &str) -> Result<(&str, usize), FormatError> {
        self.sections
            .get(section)
            .and_then(|m| m.get(key))
            .map(|(v, line)| (v.as_str(), *line))
            .ok_or_else(|| FormatError::MissingKey { section: section.into(), key: key.into() })
    }

    pub fn require_str(&self, section: &str, key: &str) -> Result<&str, FormatError> {
        Ok(self.entry(section, key)?.0)
    }

    pub fn require_f64(&self, section: &str, key: &str) -> Result<f64, FormatError> {
        let (v, line) = self.entry(section, key)?;
        v.parse().map_err(|e: std::num::ParseFloatError| FormatError::BadValue {
            line,
            key: key.into(),
            msg: e.to_string(),
        })
    }

    pub fn require_usize(&self, section: &str, key: &str) -> Result<usize, FormatError> {
        let (v, line) = self.entry(section, key)?;
        v.parse().map_err(|e: std::num::ParseIntError| FormatError::BadValue {
            line,
            key: key.into(),
            msg: e.to_string(),
        })
    }

    pub fn require_u64(&self, section: &str, key: &str) -> Result<u64, FormatError> {
        let (v, line) = self.entry(section, key)?;
        v.parse().map_err(|e: std::num::ParseIntError| FormatError::BadValue {
            line,
            key: key.into(),
            msg: e.to_string(),
        })
    }

    pub fn opt_f64(&self, section: &str, key: &str) -> Result<Option<f64>, FormatError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(_) => Ok(Some(self.require_f64(section, key)?)),
        }
    }

    pub fn opt_usize(&self, section: &str, key: &str) -> Result<Option<usize>, FormatError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(_) => Ok(Some(self.require_usize(section, key)?)),
        }
    }

    pub fn opt_str(&self, section: &str, key: &str) -> Option<&str> {
        self.get(section, key)
    }

    /// Comma-separated list of reals.
    pub fn require_f64_list(&self, section: &str, key: &str) -> Result<Vec<f64>, FormatError> {
        let (v, line) = self.entry(section, key)?;
        v.split(',')
            .map(|s| {
                s.trim().parse().map_err(|e: std::num::ParseFloatError| FormatError::BadValue {
                    line,
                    key: key.into(),
                    msg: e.to_string(),
                })
            })
            .collect()
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), (value.to_string(), 0));
    }

    /// Canonical serialization (sections and keys sorted).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (section, map) in &self.sections {
            out.push_str(&format!("[{section}]\n"));
            for (key, (value, _)) in map {
                out.push_str(&format!("{key} = {value}\n"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, FormatError> {
    let mut sections: BTreeMap<String, BTreeMap<String, (String, usize)>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| FormatError::Syntax {
                line: lineno,
                msg: format!("unterminated section header `{line}`"),
            })?;
            let name = name.trim();
            if name.is_empty() {
                return Err(FormatError::Syntax {
                    line: lineno,
                    msg: "empty section name".into(),
                });
            }
            sections.entry(name.to_string()).or_default();
            current = Some(name.to_string());
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| FormatError::Syntax {
            line: lineno,
            msg: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(FormatError::Syntax { line: lineno, msg: "empty key".into() });
        }
        let section = current.clone().ok_or_else(|| FormatError::Syntax {
            line: lineno,
            msg: format!("`{key}` appears before any [section] header"),
        })?;
        let prior = sections
            .get_mut(&section)
            .expect("section inserted on header")
            .insert(key.to_string(), (value.trim().to_string(), lineno));
        if prior.is_some() {
            return Err(FormatError::Syntax {
                line: lineno,
                msg: format!("duplicate key `{key}` in section [{section}]"),
            });
        }
    }
    Ok(RunConfig { sections })
}

pub fn read_config(path: &Path) -> Result<RunConfig, FormatError> {
    parse_config(&std::fs::read_to_string(path)?)
}
