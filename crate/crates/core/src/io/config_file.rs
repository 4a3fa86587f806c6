//! Plain-text `key = value` configuration files; values feed CLI
//! defaults and explicit flags override them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub fn parse_config(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::data(format!("{origin}: line {}: expected `key = value`", line_no + 1))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::data(format!("{origin}: line {}: empty key", line_no + 1)));
        }
        out.insert(key.to_string(), value.trim().to_string());
    }
    Ok(out)
}

pub fn load_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_config(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_and_ignores_comments() {
        let map = parse_config("# defaults\nk = 3\nseed=42\nthreshold = 1e-4 # tight\n", "test")
            .unwrap();
        assert_eq!(map.get("k").map(String::as_str), Some("3"));
        assert_eq!(map.get("seed").map(String::as_str), Some("42"));
        assert_eq!(map.get("threshold").map(String::as_str), Some("1e-4"));
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(parse_config("whatever\n", "test").is_err());
    }
}
