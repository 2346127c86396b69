use cellfree_cli::{command, overrides, Command, ExperimentConfig};
use std::path::Path;
use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = command().get_matches();
    let Some((name, sub)) = matches.subcommand() else {
        unreachable!("clap enforces a subcommand")
    };
    let Some(cmd) = Command::from_name(name) else {
        eprintln!("unknown subcommand `{name}`");
        return ExitCode::from(2);
    };

    if let Some(&threads) = sub.get_one::<usize>("threads") {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let config = match ExperimentConfig::load(sub.get_one::<String>("config").map(Path::new), &overrides(sub)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match cellfree_cli::commands::run(cmd, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
