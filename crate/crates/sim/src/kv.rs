//! Flat `key = value` text format used for config files and run manifests.
//!
//! One assignment per line, `#` starts a comment, keys are dotted paths
//! (`terrain.kind = rough`). Order-preserving emission keeps manifests
//! diffable.

use std::collections::BTreeMap;

use crate::error::SimError;

/// Parse `key = value` text into a map. Later assignments win.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>, SimError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            SimError::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(SimError::Config(format!("line {}: empty key", lineno + 1)));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Emit assignments in sorted key order.
pub fn emit(map: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in map {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// Typed getters over the parsed map; every accessor names the offending
/// field in its error.
pub struct KvReader<'a> {
    map: &'a BTreeMap<String, String>,
}

impl<'a> KvReader<'a> {
    pub fn new(map: &'a BTreeMap<String, String>) -> Self {
        Self { map }
    }

    pub fn get(&self, key: &str) -> Option<&'a str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, SimError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| SimError::Config(format!("field `{key}`: not a number: `{v}`"))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, SimError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| SimError::Config(format!("field `{key}`: not an integer: `{v}`"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, SimError> {
        Ok(self.u64_or(key, default as u64)? as usize)
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, SimError> {
        match self.map.get(key).map(|s| s.as_str()) {
            None => Ok(default),
            Some("true") | Some("1") => Ok(true),
            Some("false") | Some("0") => Ok(false),
            Some(v) => Err(SimError::Config(format!(
                "field `{key}`: expected true/false, got `{v}`"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_emit_round_trip() {
        let text = "a = 1\n# comment\nb.c = hello world  # trailing\n\nd=  true\n";
        let map = parse(text).unwrap();
        assert_eq!(map["a"], "1");
        assert_eq!(map["b.c"], "hello world");
        assert_eq!(map["d"], "true");
        let emitted = emit(&map);
        assert_eq!(parse(&emitted).unwrap(), map);
    }

    #[test]
    fn bad_line_is_rejected() {
        assert!(parse("just a line\n").is_err());
    }

    #[test]
    fn typed_errors_name_the_field() {
        let map = parse("x = notanumber\n").unwrap();
        let err = KvReader::new(&map).f64_or("x", 0.0).unwrap_err();
        assert!(err.to_string().contains("`x`"));
    }
}
