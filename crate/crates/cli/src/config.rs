//! `key = value` configuration files.
//!
//! One assignment per line; blank lines and lines starting with `#` are
//! ignored. Values run to the end of the line and are trimmed.

use std::path::Path;

use crate::failure::{CliResult, Failure};

pub fn parse(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("config line {}: expected key = value, got {line:?}", i + 1)))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Failure::usage(format!("config line {}: empty key", i + 1)));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn load(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines() {
        let kv = parse("# grid\n\nseed = 3\nn=5,10\n").unwrap();
        assert_eq!(kv, vec![("seed".into(), "3".into()), ("n".into(), "5,10".into())]);
    }

    #[test]
    fn rejects_line_without_equals() {
        assert!(parse("seed 3").is_err());
        assert!(parse("= 3").is_err());
    }
}
