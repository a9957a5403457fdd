//! Line-oriented `key = value` files. Used for the pipeline config and the
//! per-corpus metadata; kept free of any structured-format dependency so
//! the files stay hand-editable and diff-friendly.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// Ordered key/value map parsed from a config-style text file.
/// Keys keep their first-seen order through a BTreeMap so serialization
/// is canonical regardless of input order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvFile {
    pub entries: BTreeMap<String, String>,
}

impl KvFile {
    pub fn parse(text: &str, path: &Path) -> Result<KvFile> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: "empty key".into(),
                });
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(KvFile { entries })
    }

    pub fn load(path: &Path) -> Result<KvFile> {
        let text = std::fs::read_to_string(path)
            .map_err(Error::io(format!("reading {}", path.display())))?;
        KvFile::parse(&text, path)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(Error::io(format!("writing {}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[test]
    fn parses_comments_and_blanks() {
        let text = "# header\n\na = 1\n  b.c = two words  \n";
        let kv = KvFile::parse(text, &PathBuf::from("t.conf")).unwrap();
        assert_eq!(kv.get("a"), Some("1"));
        assert_eq!(kv.get("b.c"), Some("two words"));
    }

    #[test]
    fn error_cites_line_number() {
        let text = "a = 1\nnot a pair\n";
        let err = KvFile::parse(text, &PathBuf::from("t.conf")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("t.conf:2"), "missing line number: {msg}");
    }

    #[test]
    fn round_trip_is_canonical() {
        let text = "b = 2\na = 1\n";
        let kv = KvFile::parse(text, &PathBuf::from("t.conf")).unwrap();
        assert_eq!(kv.to_text(), "a = 1\nb = 2\n");
    }
}
