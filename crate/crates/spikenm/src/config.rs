//! TOML run configuration with dotted-key overrides.
//!
//! Overrides are applied to the parsed document before it is checked against
//! the schema, so `--mask.n_keep=3` is type-checked exactly like the same key
//! written in the file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use spikenm_core::pipeline::RunConfig;

use crate::error::{Error, Result};

/// A validated configuration and its identity hash.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub run: RunConfig,
    pub hash: u64,
}

/// Split `--a.b=value` and `--a.b value` arguments out of an argument list.
/// Everything else is returned untouched for the regular flag parser.
pub fn split_overrides<I: IntoIterator<Item = String>>(args: I) -> (Vec<String>, Vec<(String, String)>) {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter().peekable();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match body.split_once('=') {
            Some((k, v)) => (k, Some(v.to_string())),
            None => (body, None),
        };
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().unwrap_or_default(),
        };
        overrides.push((key.to_string(), value));
    }
    (rest, overrides)
}

/// Parse `key=value` from `--set`.
pub fn parse_set(s: &str) -> Result<(String, String)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::Config(format!("override `{}` is not key=value", s)))
}

/// Values parse as TOML; anything that does not is taken as a bare string.
fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {}", raw)) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

pub fn apply_override(doc: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key `{}`", key)));
    }
    let (last, path) = parts.split_last().unwrap();
    let mut table = doc;
    for p in path {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(Error::Config(format!("override `{}`: `{}` is not a table", key, p))),
        };
    }
    table.insert(last.to_string(), parse_value(raw));
    Ok(())
}

/// Stable identity of a configuration: the first 8 bytes of the SHA-256 of
/// its canonical JSON encoding.
pub fn config_hash(run: &RunConfig) -> u64 {
    let json = serde_json::to_vec(run).expect("config serializes");
    let digest = Sha256::digest(&json);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn to_toml(run: &RunConfig) -> String {
    toml::to_string(run).expect("config serializes")
}

/// Build a configuration from an optional file plus overrides.
///
/// A relative `dataset.source_path` is resolved against the config file's
/// directory (or the working directory without a file).
pub fn load(path: Option<&Path>, overrides: &[(String, String)], seed: Option<u64>) -> Result<ResolvedConfig> {
    let (mut doc, base_dir) = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let doc: toml::Table =
                text.parse().map_err(|e: toml::de::Error| Error::Config(format!("{}: {}", p.display(), e)))?;
            (doc, p.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (toml::Table::new(), PathBuf::new()),
    };
    for (k, v) in overrides {
        apply_override(&mut doc, k, v)?;
    }
    if let Some(s) = seed {
        doc.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    let mut run =
        RunConfig::deserialize(toml::Value::Table(doc)).map_err(|e| Error::Config(e.to_string().trim().to_string()))?;
    if let Some(src) = run.dataset.source_path.as_deref() {
        let p = Path::new(src);
        if !p.is_absolute() {
            let joined = if base_dir.as_os_str().is_empty() { p.to_path_buf() } else { base_dir.join(p) };
            let abs = std::path::absolute(&joined).map_err(|e| Error::io(&joined, e))?;
            run.dataset.source_path = Some(abs.to_string_lossy().into_owned());
        }
    }
    run.validate()?;
    let hash = config_hash(&run);
    Ok(ResolvedConfig { run, hash })
}
