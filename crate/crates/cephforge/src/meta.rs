//! `key=value` text files: volume/raster sidecars, parameter sets, rigid
//! transforms and CLI config files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Ordered `key=value` map remembering the file it came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
    source: PathBuf,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::format(source, format!("line {}: expected key=value", n + 1))
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::format(source, format!("line {}: empty key", n + 1)));
            }
            if entries
                .insert(k.to_string(), v.trim().to_string())
                .is_some()
            {
                return Err(Error::format(source, format!("duplicate key {k:?}")));
            }
        }
        Ok(Self {
            entries,
            source: source.to_path_buf(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        Self::parse(&text, path)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::write(path, e))
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    pub fn set_list<T: ToString>(&mut self, key: &str, values: &[T]) -> &mut Self {
        let joined = values
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",");
        self.set(key, joined)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::format(&self.source, format!("missing key {key:?}")))
    }

    pub fn parse_value<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::format(&self.source, format!("{key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    pub fn required_value<T: FromStr>(&self, key: &str) -> Result<T> {
        self.require(key)?;
        Ok(self.parse_value(key)?.expect("key checked above"))
    }

    /// Comma-separated list of exactly `N` values.
    pub fn list<T: FromStr + Copy + Default, const N: usize>(&self, key: &str) -> Result<[T; N]> {
        let raw = self.require(key)?;
        let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
        if parts.len() != N {
            return Err(Error::format(
                &self.source,
                format!("{key}: expected {N} comma-separated values, got {raw:?}"),
            ));
        }
        let mut out = [T::default(); N];
        for (slot, p) in out.iter_mut().zip(parts) {
            *slot = p
                .parse()
                .map_err(|_| Error::format(&self.source, format!("{key}: cannot parse {p:?}")))?;
        }
        Ok(out)
    }

    pub fn source(&self) -> &Path {
        &self.source
    }
}

/// Sidecar path for a payload (`scan.raw` → `scan.meta`).
pub fn sidecar_path(payload: &Path) -> PathBuf {
    payload.with_extension("meta")
}

/// Scalar encodings of raw payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    Int16Le,
    Float32Le,
    Uint8,
}

impl Dtype {
    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::Int16Le => "int16le",
            Dtype::Float32Le => "float32le",
            Dtype::Uint8 => "uint8",
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            Dtype::Int16Le => 2,
            Dtype::Float32Le => 4,
            Dtype::Uint8 => 1,
        }
    }
}

impl FromStr for Dtype {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "int16le" => Ok(Dtype::Int16Le),
            "float32le" => Ok(Dtype::Float32Le),
            "uint8" => Ok(Dtype::Uint8),
            _ => Err(format!("unsupported dtype {s:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_render_round_trip() {
        let text = "# volume\ndims=4,5,6\n\nspacing_mm = 0.5,0.5,1\n";
        let kv = KeyValues::parse(text, Path::new("x.meta")).unwrap();
        assert_eq!(kv.list::<usize, 3>("dims").unwrap(), [4, 5, 6]);
        assert_eq!(kv.list::<f64, 3>("spacing_mm").unwrap(), [0.5, 0.5, 1.0]);
        let again = KeyValues::parse(&kv.render(), Path::new("x.meta")).unwrap();
        assert_eq!(again.render(), kv.render());
    }

    #[test]
    fn malformed_files_rejected() {
        let p = Path::new("bad.meta");
        assert!(KeyValues::parse("dims", p).is_err());
        assert!(KeyValues::parse("a=1\na=2", p).is_err());
        assert!(KeyValues::parse("=3", p).is_err());
        let kv = KeyValues::parse("dims=1,2", p).unwrap();
        assert!(kv.list::<usize, 3>("dims").is_err());
        assert!(kv.list::<usize, 2>("spacing").is_err());
    }

    #[test]
    fn sidecar_naming() {
        assert_eq!(
            sidecar_path(Path::new("a/scan.raw")),
            Path::new("a/scan.meta")
        );
        assert_eq!(sidecar_path(Path::new("ceph.png")), Path::new("ceph.meta"));
    }
}
