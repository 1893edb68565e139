//! Flat `key = value` config files.
//!
//! Keys are the long CLI flag names without dashes (`kappa`, `u-upper`, ...).
//! Lines starting with `#` and blank lines are ignored. `true` turns a switch
//! on, `false` leaves it off.

use std::path::Path;

use crate::error::{Error, Result};

/// Parsed `(key, value)` pairs in file order.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            row: i + 1,
            column: 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                row: i + 1,
                column: 1,
                message: "empty key".into(),
            });
        }
        // trailing comments
        let value = v.split(" #").next().unwrap_or("").trim();
        out.push((key.to_string(), value.to_string()));
    }
    Ok(out)
}

/// Config entries as CLI tokens, to be placed before the real arguments.
pub fn config_args(pairs: &[(String, String)]) -> Vec<String> {
    let mut args = Vec::new();
    for (k, v) in pairs {
        let flag = format!("--{}", k.trim_start_matches('-'));
        match v.as_str() {
            "true" => args.push(flag),
            "false" => {}
            _ => {
                args.push(flag);
                args.push(v.clone());
            }
        }
    }
    args
}

pub fn load_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Splices `--config FILE` contents in front of the remaining flags of the subcommand.
///
/// Returns `argv` unchanged when no config flag is present.
pub fn expand_config_args(argv: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(argv);
    };
    let (path, skip) = match argv[pos].strip_prefix("--config=") {
        Some(p) => (p.to_string(), 1),
        None => (
            argv.get(pos + 1)
                .cloned()
                .ok_or_else(|| Error::Config("--config needs a file path".into()))?,
            2,
        ),
    };
    let pairs = load_config(Path::new(&path))?;
    // file values go right after the subcommand name so later CLI flags win
    let sub = (1..argv.len()).find(|&i| !(pos..pos + skip).contains(&i) && !argv[i].starts_with('-'));
    let mut out: Vec<String> = Vec::with_capacity(argv.len() + 2 * pairs.len());
    let insert_at = sub.map(|s| s + 1).unwrap_or(1);
    for (i, a) in argv.iter().enumerate() {
        if i == insert_at {
            out.extend(config_args(&pairs));
        }
        if i >= pos && i < pos + skip {
            continue;
        }
        out.push(a.clone());
    }
    if insert_at >= argv.len() {
        out.extend(config_args(&pairs));
    }
    Ok(out)
}
