//! Command-line front end for the `cellfree` simulator.

pub mod commands;
pub mod config;
pub mod error;

use clap::{Arg, ArgMatches, Command as ClapCommand};

pub use commands::Command;
pub use config::ExperimentConfig;
pub use error::CliError;

const SUBCOMMANDS: [(&str, &str); 5] = [
    ("simulate", "Run all drops and write samples, CDFs and a summary"),
    ("rate", "Evaluate per-user rates on a single drop"),
    ("power", "Solve max-min power control on a single drop"),
    ("pilots", "Compare random and greedy pilot assignment on a single drop"),
    ("validate", "Check the closed-form rate and the power-control solver against oracles"),
];

/// Builds the argument parser. Every config key is also a global
/// `--key value` flag (underscores or hyphens).
pub fn command() -> ClapCommand {
    let mut cmd = ClapCommand::new("cellfree")
        .about("Downlink cell-free massive MIMO simulator")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .after_help("Every config key is also accepted as a flag, e.g. `--tau 20` or `--shadowing correlated`.")
        .arg(Arg::new("config").long("config").value_name("FILE").global(true).help("JSON config file"))
        .arg(
            Arg::new("threads")
                .long("threads")
                .value_name("N")
                .value_parser(clap::value_parser!(usize))
                .global(true)
                .help("Worker threads (default: available cores)"),
        );
    for key in ExperimentConfig::keys() {
        let help = match key.as_str() {
            "out" => "Output directory",
            "seed" => "Master random seed",
            _ => "",
        };
        let mut arg = Arg::new(key.clone()).long(key.clone()).value_name("VALUE").global(true).hide(help.is_empty()).help(help);
        if key.contains('_') {
            arg = arg.alias(key.replace('_', "-"));
        }
        cmd = cmd.arg(arg);
    }
    cmd.subcommands(SUBCOMMANDS.iter().map(|(name, about)| ClapCommand::new(*name).about(*about)))
}

/// Config overrides given as flags, in key order.
pub fn overrides(matches: &ArgMatches) -> Vec<(String, String)> {
    ExperimentConfig::keys()
        .into_iter()
        .filter_map(|k| matches.get_one::<String>(&k).map(|v| (k, v.clone())))
        .collect()
}
