//! Flat `key = value` config files and the resolved-config echo.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::Path;

use clap::CommandFactory;
use serde::Serialize;
use serde_json::Value;

use crate::args::Cli;
use crate::CliError;

/// Parses `key = value` lines; `#` starts a comment line. Keys are flag
/// names without the leading dashes (`_` and `-` are interchangeable).
pub fn parse_config(text: &str, origin: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected `key = value`", i + 1)))?;
        let key = k.trim().replace('_', "-");
        let value = v.trim().to_string();
        if key.is_empty() {
            return Err(CliError::Usage(format!("{origin}:{}: empty key", i + 1)));
        }
        if out.iter().any(|(seen, _)| *seen == key) {
            return Err(CliError::Usage(format!("{origin}:{}: duplicate key {key:?}", i + 1)));
        }
        out.push((key, value));
    }
    Ok(out)
}

/// Long flag names a subcommand accepts from a config file.
fn config_keys(sub: &str) -> Option<BTreeSet<String>> {
    let cmd = Cli::command();
    let sc = cmd.get_subcommands().find(|c| c.get_name() == sub)?;
    Some(
        sc.get_arguments()
            .filter_map(|a| a.get_long())
            .filter(|l| !matches!(*l, "config" | "help" | "version"))
            .map(str::to_string)
            .collect(),
    )
}

fn find_config(rest: &[OsString]) -> Option<OsString> {
    let mut it = rest.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Places config-file values ahead of the command-line flags so that every
/// flag given explicitly overrides the file.
pub fn expand_args(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(sub_pos) = argv.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map(|p| p + 1) else {
        return Ok(argv);
    };
    let sub = argv[sub_pos].to_string_lossy().into_owned();
    let Some(path) = find_config(&argv[sub_pos + 1..]) else {
        return Ok(argv);
    };
    let Some(known) = config_keys(&sub) else {
        return Ok(argv);
    };
    let origin = Path::new(&path).display().to_string();
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read config {origin}: {e}")))?;
    let mut injected = Vec::new();
    for (k, v) in parse_config(&text, &origin)? {
        if !known.contains(&k) {
            return Err(CliError::Usage(format!("{origin}: unknown key {k:?} for {sub}")));
        }
        injected.push(OsString::from(format!("--{k}")));
        injected.push(OsString::from(v));
    }
    let mut out: Vec<OsString> = argv[..=sub_pos].to_vec();
    out.extend(injected);
    out.extend(argv[sub_pos + 1..].iter().cloned());
    Ok(out)
}

fn render(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Array(xs) => Some(xs.iter().filter_map(render).collect::<Vec<_>>().join(",")),
        other => Some(other.to_string()),
    }
}

/// The resolved arguments in config-file syntax, keys sorted.
pub fn echo<A: Serialize>(args: &A) -> String {
    let value = serde_json::to_value(args).expect("arguments serialize");
    let mut out = String::new();
    if let Value::Object(map) = value {
        let mut entries: Vec<_> = map.iter().filter_map(|(k, v)| render(v).map(|s| (k.clone(), s))).collect();
        entries.sort();
        for (k, v) in entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
    }
    out
}
