//! `key = value` config files, applied as `MIRSS_*` environment defaults.

use std::path::Path;

use anyhow::{bail, Context};

pub const ENV_PREFIX: &str = "MIRSS_";

/// The `--config` flag value, else `MIRSS_CONFIG`.
pub fn locate(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    std::env::var(format!("{ENV_PREFIX}CONFIG")).ok()
}

/// Parses `key = value` lines; `#` starts a comment, quotes are stripped.
pub fn parse(text: &str) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected key = value", n + 1);
        };
        let key = k.trim();
        if key.is_empty()
            || !key
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            bail!("line {}: invalid key `{key}`", n + 1);
        }
        let v = v.trim();
        let v = v
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .unwrap_or(v);
        out.push((
            format!("{ENV_PREFIX}{}", key.to_ascii_uppercase().replace('-', "_")),
            v.to_string(),
        ));
    }
    Ok(out)
}

/// Exports every config entry whose variable is not already set.
pub fn apply(path: Option<&Path>) -> anyhow::Result<()> {
    let Some(path) = path else { return Ok(()) };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let entries = parse(&text).with_context(|| format!("config {}", path.display()))?;
    for (k, v) in entries {
        if std::env::var_os(&k).is_none() {
            std::env::set_var(k, v);
        }
    }
    Ok(())
}
