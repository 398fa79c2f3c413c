//! Command-line pipeline over the `rankmst` library: configuration, staged
//! execution against an output directory, and a hashed manifest of results.

pub mod args;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod stages;
pub mod store;

use args::{Cli, Command};
use config::RunConfig;
use error::CliError;
use manifest::Manifest;
use store::Store;

/// Run one parsed command line. Every command except `validate` finishes by
/// rewriting `manifest.json` in the output directory, also on failure.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = cli.overrides.resolve()?;
    if cli.command == Command::Validate {
        let diagnostics = config.validate();
        if diagnostics.is_empty() {
            println!("configuration is valid");
            return Ok(());
        }
        for d in &diagnostics {
            println!("{d}");
        }
        return Err(CliError::Config(diagnostics));
    }
    let store = Store::new(&config.out);
    let outcome = check(cli.command, &config).and_then(|()| in_pool(&config, || dispatch(cli.command, &config, &store)));
    let manifest = Manifest::new(cli.command.name(), &config, outcome.as_ref().map(|_| ()));
    manifest.scan(store.root())?.write(store.root())?;
    outcome
}

/// Configuration problems that matter for `command`. Stages past `clean`
/// read their inputs from the output directory, so the input files are only
/// checked for `clean` and `run`.
fn check(command: Command, config: &RunConfig) -> Result<(), CliError> {
    let reads_inputs = matches!(command, Command::Clean | Command::Run);
    let relevant: Vec<_> = config
        .validate()
        .into_iter()
        .filter(|d| reads_inputs || !matches!(d.field, "prices" | "sectors"))
        .filter(|d| !matches!(command, Command::Synth(_)) || matches!(d.field, "threads"))
        .collect();
    if relevant.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(relevant))
    }
}

fn in_pool<T: Send>(config: &RunConfig, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError> {
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(CliError::analysis("building thread pool"))?
            .install(f),
        None => f(),
    }
}

fn dispatch(command: Command, config: &RunConfig, store: &Store) -> Result<(), CliError> {
    match command {
        Command::Clean => stages::clean(config, store),
        Command::Correlate => stages::correlate(config, store),
        Command::Mst => stages::mst(config, store),
        Command::Stability => stages::stability(config, store),
        Command::Centrality => stages::centrality(config, store),
        Command::Gaussianity => stages::gaussianity(config, store),
        Command::Portfolio => stages::portfolio(config, store),
        Command::Bootstrap => stages::bootstrap(config, store),
        Command::Report => report::report(config, store),
        Command::Run => stages::run(config, store),
        Command::Synth(args) => stages::synth(&args, config, store),
        Command::Validate => unreachable!("handled before dispatch"),
    }
}
