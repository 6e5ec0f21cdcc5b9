//! Flat `key = value` config files merged in front of the command line.
//!
//! Keys are long flag names without the dashes. Each pair becomes
//! `--key value` placed before the real arguments, and since every flag
//! overrides itself, anything given on the command line wins. `true` turns
//! into a bare switch and `false` is dropped.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use crate::CliError;

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k == "config" {
            return Err(CliError::Config(format!("config line {}: invalid key `{k}`", n + 1)));
        }
        out.push((k.replace('_', "-"), v.to_string()));
    }
    Ok(out)
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text)
}

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

/// Inserts config entries right after the subcommand name.
pub fn merge_args(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let pairs = load(Path::new(&path))?;
    if args.len() < 2 {
        return Ok(args);
    }
    let mut out: Vec<OsString> = args[..2].to_vec();
    for (k, v) in pairs {
        match v.as_str() {
            "true" => out.push(format!("--{k}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{k}").into());
                out.push(v.into());
            }
        }
    }
    out.extend_from_slice(&args[2..]);
    Ok(out)
}
