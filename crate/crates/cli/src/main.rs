use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gids_core::experiment::{
    emit_report, gen_synthetic_dataset, preprocess, run_experiment, Arms, ExperimentConfig, SyntheticSpec,
};
use gids_core::{Error, ErrorKind};
use log::info;

/// S-IDS / G-IDS experiment harness.
#[derive(Debug, Parser)]
#[command(name = "gids", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(short, long)]
    config: PathBuf,
    /// `section.key=value` override, applied after the file; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; beats both the config file and GIDS_OUTPUT_DIR.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut config = ExperimentConfig::load(&self.config, &self.overrides)?;
        if let Some(dir) = &self.output {
            config.protocol.output_dir = dir.clone();
        }
        Ok(config)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the preprocessing pipeline on the whole dataset and write it out.
    Preprocess(ConfigArgs),
    /// Write a Gaussian-mixture dataset and its schema.
    SynthData {
        /// TOML class spec; the built-in desk-scale mixture when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Standalone detector only.
    RunSids(ConfigArgs),
    /// Controller loop with GAN synthesis only.
    RunGids(ConfigArgs),
    /// Both arms over every fraction and seed.
    Experiment(ConfigArgs),
    /// Consolidate a finished output directory.
    Report {
        #[arg(short, long)]
        dir: PathBuf,
    },
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Preprocess(args) => {
            let config = args.load()?;
            let out = config.protocol.output_dir.clone();
            let pipeline = preprocess(&config, &out)?;
            println!(
                "pipeline {} -> {} dims, cumulative explained variance {:.4}, written to {}",
                pipeline.d_in(),
                pipeline.d_out(),
                pipeline.cumulative_explained_variance(),
                out.display()
            );
            for w in &pipeline.warnings {
                println!("warning: {w}");
            }
        }
        Command::SynthData { spec, seed, out } => {
            let mut spec = match spec {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    SyntheticSpec::from_toml(&text)?
                }
                None => SyntheticSpec::desk_scale(0),
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let data = gen_synthetic_dataset(&spec)?;
            fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            write(&out.join("data.csv"), &data.csv)?;
            write(&out.join("schema.txt"), &data.schema)?;
            println!("wrote {} rows to {}", data.csv.lines().count(), out.display());
        }
        Command::RunSids(args) => experiment(&args, Arms::Standalone)?,
        Command::RunGids(args) => experiment(&args, Arms::Gan)?,
        Command::Experiment(args) => experiment(&args, Arms::Both)?,
        Command::Report { dir } => print!("{}", emit_report(&dir)?),
    }
    Ok(())
}

fn experiment(args: &ConfigArgs, arms: Arms) -> Result<(), Error> {
    let config = args.load()?;
    let outcome = run_experiment(&config, arms)?;
    info!("{} run(s) written to {}", outcome.runs.len(), outcome.output_dir.display());
    let problems: Vec<&String> = outcome.runs.iter().flat_map(|r| &r.ledger_problems).collect();
    if !problems.is_empty() {
        return Err(Error::Training(format!("ledger check failed: {}", problems.len())));
    }
    print!("{}", emit_report(&outcome.output_dir)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 1,
                ErrorKind::Data => 2,
                ErrorKind::Runtime => 3,
            })
        }
    }
}
