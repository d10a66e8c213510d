//! `hypeboy` command-line front end.
//!
//! Every command takes `--config FILE` (flat `key = value` text, or a
//! previous run's `manifest.json`) plus one `--KEY VALUE` flag per setting.
//! Flags override the file, which overrides built-in defaults.

mod commands;
mod config;

use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Arg, ArgMatches, Command};

use commands::{out_dir, write_manifest, COMMANDS};
use config::{read_config_file, Default, Resolved};

fn cli() -> Command {
    let mut app = Command::new("hypeboy")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Self-supervised hypergraph representation learning by hyperedge filling")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for cmd in COMMANDS {
        let mut sub = Command::new(cmd.name).about(cmd.about).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("key = value settings, overridden by flags"),
        );
        for key in cmd.keys {
            let help = match key.default {
                Default::Value(v) => format!("{} [default: {v}]", key.help),
                Default::Required => format!("{} [required]", key.help),
                Default::Optional => key.help.to_string(),
            };
            sub = sub.arg(
                Arg::new(key.name)
                    .long(key.name)
                    .value_name("VALUE")
                    .allow_hyphen_values(true)
                    .help(help),
            );
        }
        app = app.subcommand(sub);
    }
    app
}

fn run(name: &str, matches: &ArgMatches) -> Result<()> {
    let cmd = COMMANDS
        .iter()
        .find(|c| c.name == name)
        .expect("subcommand is registered");
    let file = match matches.get_one::<String>("config") {
        Some(path) => read_config_file(Path::new(path))?,
        None => Vec::new(),
    };
    let flags = cmd
        .keys
        .iter()
        .filter_map(|k| {
            matches
                .get_one::<String>(k.name)
                .map(|v| (k.name.to_string(), v.clone()))
        })
        .collect();
    let resolved = Resolved::resolve(cmd.keys, file, flags)?;
    let out = out_dir(&resolved)?;
    let outputs = (cmd.run)(&resolved, &out).with_context(|| format!("{name} failed"))?;
    write_manifest(&out, name, &resolved, &outputs)?;
    for f in &outputs {
        println!("{}", out.join(f).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    match run(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definitions_are_consistent() {
        cli().debug_assert();
        for cmd in COMMANDS {
            let mut names: Vec<&str> = cmd.keys.iter().map(|k| k.name).collect();
            names.sort_unstable();
            names.dedup();
            assert_eq!(names.len(), cmd.keys.len(), "duplicate key in {}", cmd.name);
            assert!(names.contains(&"out"), "{} has no out key", cmd.name);
        }
    }
}
