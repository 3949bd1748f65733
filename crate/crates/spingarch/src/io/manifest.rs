//! Run manifests: a flat JSON object of string keys and string values,
//! self-hashed for tamper detection.
//!
//! Every artifact-producing command writes one. The manifest carries the
//! root seed, the tool version, the resolved configuration (so the artifact
//! can be regenerated bit-identically), and statistic-definition metadata.
//! The `content_hash` field is the FNV-1a 64 hash of the canonical
//! serialization with the hash field removed; readers verify it.

use std::collections::BTreeMap;
use std::path::Path;

use super::FormatError;

pub const HASH_KEY: &str = "content_hash";

/// Flat, ordered key/value manifest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, FormatError> {
        self.get(key).ok_or_else(|| FormatError::MissingKey {
            section: "manifest".into(),
            key: key.into(),
        })
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.entries.iter()
    }

    pub fn keys_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a String> {
        self.entries.keys().filter(move |k| k.starts_with(prefix))
    }

    fn canonical_without_hash(&self) -> String {
        let mut out = String::from("{\n");
        let mut first = true;
        for (k, v) in &self.entries {
            if k == HASH_KEY {
                continue;
            }
            if !first {
                out.push_str(",\n");
            }
            first = false;
            out.push_str(&format!("  {}: {}", json_string(k), json_string(v)));
        }
        out.push_str("\n}\n");
        out
    }

    /// Serialize with the self-hash filled in.
    pub fn to_text(&self) -> String {
        let hash = fnv1a64(self.canonical_without_hash().as_bytes());
        let mut hashed = self.clone();
        hashed.entries.insert(HASH_KEY.into(), format!("{hash:016x}"));
        let mut out = String::from("{\n");
        let mut first = true;
        for (k, v) in &hashed.entries {
            if !first {
                out.push_str(",\n");
            }
            first = false;
            out.push_str(&format!("  {}: {}", json_string(k), json_string(v)));
        }
        out.push_str("\n}\n");
        out
    }
}

/// FNV-1a 64-bit hash (tamper detection, not cryptographic).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}

fn json_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Parse and verify a manifest document.
pub fn parse_manifest(text: &str) -> Result<Manifest, FormatError> {
    let mut entries = BTreeMap::new();
    let mut chars = text.chars().peekable();
    skip_ws(&mut chars);
    expect(&mut chars, '{')?;
    skip_ws(&mut chars);
    if chars.peek() == Some(&'}') {
        chars.next();
        return finish(Manifest { entries });
    }
    loop {
        skip_ws(&mut chars);
        let key = parse_string(&mut chars)?;
        skip_ws(&mut chars);
        expect(&mut chars, ':')?;
        skip_ws(&mut chars);
        let value = parse_string(&mut chars)?;
        if entries.insert(key.clone(), value).is_some() {
            return Err(FormatError::Inconsistent(format!("duplicate manifest key `{key}`")));
        }
        skip_ws(&mut chars);
        match chars.next() {
            Some(',') => continue,
            Some('}') => break,
            other => {
                return Err(FormatError::Syntax {
                    line: 0,
                    msg: format!("expected `,` or `}}`, found {other:?}"),
                })
            }
        }
    }
    skip_ws(&mut chars);
    if chars.next().is_some() {
        return Err(FormatError::Syntax { line: 0, msg: "trailing content after manifest".into() });
    }
    finish(Manifest { entries })
}

fn finish(manifest: Manifest) -> Result<Manifest, FormatError> {
    let recorded = manifest.require(HASH_KEY)?.to_string();
    let expected = format!("{:016x}", fnv1a64(manifest.canonical_without_hash().as_bytes()));
    if recorded != expected {
        return Err(FormatError::HashMismatch);
    }
    Ok(manifest)
}

fn skip_ws(chars: &mut std::iter::Peekable<std::str::Chars<'_>>) {
    while matches!(chars.peek(), Some(c) if c.is_whitespace()) {
        chars.next();
    }
}

fn expect(
    chars: &mut std::iter::Peekable<std::str::Chars<'_>>,
    want: char,
) -> Result<(), FormatError> {
    match chars.next() {
        Some(c) if c == want => Ok(()),
        other => Err(FormatError::Syntax {
            line: 0,
            msg: format!("expected `{want}`, found {other:?}"),
        }),
    }
}

fn parse_string(
    chars: &mut std::iter::Peekable<std::str::Chars<'_>>,
) -> Result<String, FormatError> {
    expect(chars, '"')?;
    let mut out = String::new();
    loop {
        match chars.next() {
            None => {
                return Err(FormatError::Syntax { line: 0, msg: "unterminated string".into() })
            }
            Some('"') => return Ok(out),
            Some('\\') => match chars.next() {
                Some('"') => out.push('"'),
                Some('\\') => out.push('\\'),
                Some('n') => out.push('\n'),
                Some('r') => out.push('\r'),
                Some('t') => out.push('\t'),
                Some('u') => {
                    let hex: String = (0..4).filter_map(|_| chars.next()).collect();
                    let code = u32::from_str_radix(&hex, 16).map_err(|e| FormatError::Syntax {
                        line: 0,
                        msg: format!("bad unicode escape `\\u{hex}`: {e}"),
                    })?;
                    out.push(char::from_u32(code).ok_or_else(|| FormatError::Syntax {
                        line: 0,
                        msg: format!("invalid code point {code:#x}"),
                    })?);
                }
                other => {
                    return Err(FormatError::Syntax {
                        line: 0,
                        msg: format!("bad escape {other:?}"),
                    })
                }
            },
            Some(c) => out.push(c),
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), FormatError> {
    std::fs::write(path, manifest.to_text())?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest, FormatError> {
    parse_manifest(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_identity() {
        let mut m = Manifest::new();
        m.set("command", "simulate");
        m.set("seed", 42u64);
        m.set("config.model.eta", 0.2);
        m.set("note", "quotes \" and \\ and\nnewlines");
        let text = m.to_text();
        let back = parse_manifest(&text).unwrap();
        assert_eq!(back.get("seed"), Some("42"));
        assert_eq!(back.get("note"), Some("quotes \" and \\ and\nnewlines"));
        // re-serialization is stable
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn tampered_value_detected() {
        let mut m = Manifest::new();
        m.set("command", "simulate");
        m.set("seed", 42u64);
        let text = m.to_text().replace("\"42\"", "\"43\"");
        assert!(matches!(parse_manifest(&text), Err(FormatError::HashMismatch)));
    }

    #[test]
    fn missing_hash_rejected() {
        assert!(parse_manifest("{\n  \"a\": \"b\"\n}\n").is_err());
    }

    #[test]
    fn garbage_rejected_without_panic() {
        for text in ["", "{", "{\"a\"}", "{\"a\": \"b\",}", "{\"a\": \"b\"} trailing"] {
            assert!(parse_manifest(text).is_err());
        }
    }
}
