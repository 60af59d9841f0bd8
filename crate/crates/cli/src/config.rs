//! Flat `key = value` configuration files merged into the argument list.
//!
//! Entries become `--key value` flags placed ahead of the command-line flags,
//! and since later occurrences override earlier ones, explicit flags win.
//! `true` enables a switch, `false` omits it, and whitespace separates the
//! items of list-valued options.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

const SUBCOMMANDS: [&str; 6] = ["generate", "fit", "replicate", "detect", "cluster", "superpose"];
const GENERATE_MODES: [&str; 3] = ["circles", "sphere", "grf"];
const GLOBAL_VALUED: [&str; 2] = ["--seed", "--config"];

pub fn parse_config(text: &str) -> Result<Vec<OsString>> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key = value, found {line:?}", i + 1);
        };
        let key = key.trim().trim_start_matches("--");
        let value = value.trim();
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        if key == "config" {
            continue;
        }
        match value {
            "true" => args.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                args.push(format!("--{key}").into());
                args.extend(value.split_whitespace().map(OsString::from));
            }
        }
    }
    Ok(args)
}

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
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

fn subcommand_end(argv: &[OsString]) -> usize {
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if SUBCOMMANDS.contains(&a.as_ref()) {
            let mode = argv.get(i + 1).map(|m| m.to_string_lossy().into_owned());
            if a == "generate" && mode.is_some_and(|m| GENERATE_MODES.contains(&m.as_str())) {
                return i + 2;
            }
            return i + 1;
        }
        i += if GLOBAL_VALUED.contains(&a.as_ref()) { 2 } else { 1 };
    }
    argv.len()
}

/// Inserts the flags from `--config FILE` right after the subcommand path.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(Path::new(&path)).with_context(|| format!("reading config {}", path.to_string_lossy()))?;
    let extra = parse_config(&text)?;
    let at = subcommand_end(&argv);
    let mut out = argv[..at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}
