//! `--config file.json` support and the `COLPO_DATA_DIR` data root.
//!
//! A config file is a flat JSON object keyed by the long flag names of the
//! chosen subcommand. Flags given on the command line take precedence.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::Value;

pub const DATA_DIR_VAR: &str = "COLPO_DATA_DIR";

/// Expands `--config` into ordinary flags appended after the explicit ones.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut out = Vec::with_capacity(args.len());
    let mut config = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            config = Some(PathBuf::from(iter.next().context("--config needs a file")?));
        } else if let Some(path) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else {
            out.push(arg);
        }
    }
    let Some(path) = config else { return Ok(out) };
    let path = data_path(&path);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let Value::Object(map) = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))? else {
        bail!("config {} must be a JSON object", path.display());
    };
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        let given = out.iter().any(|a| {
            let a = a.to_string_lossy();
            a == flag || a.starts_with(&format!("{flag}="))
        });
        if given {
            continue;
        }
        match value {
            Value::Bool(true) => out.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => out.extend([flag.into(), s.into()]),
            Value::Number(n) => out.extend([flag.into(), n.to_string().into()]),
            Value::Array(items) => {
                let joined = items
                    .iter()
                    .map(|v| match v {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect::<Vec<_>>()
                    .join(",");
                out.extend([flag.into(), joined.into()]);
            }
            Value::Object(_) => bail!("config key `{key}` must not be an object"),
        }
    }
    Ok(out)
}

/// Relative paths are taken under `COLPO_DATA_DIR` when it is set.
pub fn data_path(p: &Path) -> PathBuf {
    match std::env::var_os(DATA_DIR_VAR) {
        Some(root) if p.is_relative() => Path::new(&root).join(p),
        _ => p.to_path_buf(),
    }
}
