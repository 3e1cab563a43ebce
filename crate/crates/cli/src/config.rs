//! `--config <file>`: key-value defaults spliced into argv before parsing.

use std::path::Path;

use asyncdepth::descriptor::KeyValues;
use clap::{ArgAction, Command};

use crate::{CliError, CliResult};

/// Removes `--config <file>` from `argv` and appends `--key=value` for every
/// config entry whose flag is not already on the command line.
pub fn apply_config_file(cmd: &Command, argv: Vec<String>) -> CliResult<Vec<String>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        if arg == "--" {
            rest.push(arg);
            rest.extend(it.by_ref());
            break;
        }
        if arg == "--config" {
            config = Some(
                it.next()
                    .ok_or_else(|| CliError::usage("--config needs a file"))?,
            );
        } else if let Some(path) = arg.strip_prefix("--config=") {
            config = Some(path.to_string());
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::new("io", format!("{path}: {e}")))?;
    let kv = KeyValues::parse(&text)?;

    let sub = rest
        .iter()
        .skip(1)
        .find_map(|a| cmd.find_subcommand(a))
        .ok_or_else(|| CliError::usage("--config needs a subcommand"))?;
    let args: Vec<&clap::Arg> = cmd.get_arguments().chain(sub.get_arguments()).collect();

    let mut extra = Vec::new();
    for (key, value) in kv.entries() {
        if key == "config" {
            return Err(CliError::usage("config files cannot nest"));
        }
        let arg = args
            .iter()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| {
                CliError::usage(format!(
                    "unknown config key `{key}` for `{}`",
                    sub.get_name()
                ))
            })?;
        let flag = format!("--{key}");
        let given = rest
            .iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if given {
            continue;
        }
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => extra.push(flag),
                "false" | "no" | "0" | "off" => {}
                other => {
                    return Err(CliError::usage(format!(
                        "`{key}` expects true or false, got `{other}`"
                    )))
                }
            }
        } else if arg.get_value_delimiter().is_some() {
            let joined: Vec<&str> = value.split([',', ' ']).filter(|s| !s.is_empty()).collect();
            extra.push(format!("{flag}={}", joined.join(",")));
        } else {
            extra.push(format!("{flag}={value}"));
        }
    }
    let at = rest.iter().position(|a| a == "--").unwrap_or(rest.len());
    rest.splice(at..at, extra);
    Ok(rest)
}
