//! `key = value` config files, spliced into the argument list as long flags.
//!
//! Config entries land right after the subcommand name, so anything given on
//! the command line later wins. `true` turns into a bare flag and `false` is
//! dropped.

use std::fs;
use std::path::Path;

pub const SUBCOMMANDS: [&str; 5] = ["attack", "subgroups", "qdegree", "bound", "reduce"];

pub fn parse(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
        let key = key.trim().replace('_', "-");
        if key.is_empty() || key == "config" || key.starts_with('-') {
            return Err(format!("line {}: bad key {:?}", lineno + 1, key));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn as_flags(entries: &[(String, String)]) -> Vec<String> {
    let mut out = Vec::new();
    for (k, v) in entries {
        match v.as_str() {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => {
                out.push(format!("--{k}"));
                out.push(v.clone());
            }
        }
    }
    out
}

/// Pulls `--config FILE` out of `args` and splices its entries in after the subcommand.
pub fn expand(args: Vec<String>) -> Result<Vec<String>, String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or("--config needs a file")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = fs::read_to_string(Path::new(&path)).map_err(|e| format!("reading {path}: {e}"))?;
    let flags = as_flags(&parse(&text)?);
    let at = rest
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .ok_or("a config file needs a subcommand on the command line")?;
    rest.splice(at + 1..at + 1, flags);
    Ok(rest)
}
