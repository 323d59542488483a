use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use poolbalance::runner::{print_manifest, resolve, run_experiment, ConfigFile, ExperimentSection, RunError};

/// Simulate and analyse threshold-based load balancing across server pools.
#[derive(Debug, Parser)]
#[command(name = "poolbalance", version)]
struct Cli {
    /// TOML experiment config.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Built-in scenario: fig3-left, fig3-right, fig5-left, fig5-right, fig7, fig8.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR", env = "POOLBALANCE_OUT")]
    out: Option<PathBuf>,
    /// Base seed; replication r uses seed + r.
    #[arg(long, value_name = "N", env = "POOLBALANCE_SEED")]
    seed: Option<u64>,
    #[arg(long, value_name = "N")]
    replications: Option<u32>,
    /// Suppress notices and the manifest summary.
    #[arg(long)]
    quiet: bool,
}

fn load(cli: &Cli) -> Result<(poolbalance::runner::ExperimentSpec, Vec<String>), RunError> {
    let mut file: ConfigFile = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| RunError::config("--config", format!("cannot read {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| RunError::Parse(e.message().to_string()))?
        }
        None if cli.preset.is_some() => ConfigFile::default(),
        None => return Err(RunError::config("--config", "give --config or --preset".into())),
    };
    if cli.preset.is_some() {
        file.experiment.preset = cli.preset.clone();
    }
    let ExperimentSection { seed, replications, .. } = &mut file.experiment;
    if cli.seed.is_some() {
        *seed = cli.seed;
    }
    if cli.replications.is_some() {
        *replications = cli.replications;
    }
    if let Some(dir) = &cli.out {
        file.output.get_or_insert_with(Default::default).dir = Some(dir.clone());
    }
    resolve(file)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (spec, notices) = match load(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if !cli.quiet {
        for n in &notices {
            eprintln!("notice: {n}");
        }
    }
    match run_experiment(&spec) {
        Ok(manifest) => {
            if !cli.quiet {
                let _ = print_manifest(&manifest, std::io::stdout().lock());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
