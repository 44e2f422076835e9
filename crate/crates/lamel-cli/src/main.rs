use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use lamel_cli::commands::{cmd_fingerprint, cmd_fit, cmd_meta, cmd_similarity, EmptyInput};
use lamel_cli::config::{parse_list, ExperimentConfig};
use lamel_cli::experiment::run_experiment;

#[derive(Parser)]
#[command(
    name = "lamel",
    version,
    about = "Linear meta-learning over ridge regression with graphlet fingerprints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fingerprint molecules from a CSV into a sparse feature matrix
    Fingerprint {
        /// input CSV with a SMILES column
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "smiles")]
        smiles_col: String,
        /// optional id column; row index otherwise
        #[arg(long)]
        id_col: Option<String>,
        #[arg(long, default_value_t = 5)]
        max_size: usize,
        #[arg(long, default_value = "fingerprints")]
        out: PathBuf,
        /// also write a dense CSV (small vocabularies only)
        #[arg(long)]
        dense: bool,
    },
    /// Fit a single ridge model on a saved feature matrix
    Fit {
        #[arg(long)]
        features: PathBuf,
        /// CSV with a `value` column (or a single column), one label per row
        #[arg(long)]
        labels: PathBuf,
        /// fixed regularization strength; cross-validated over --grid if absent
        #[arg(long)]
        lambda: Option<f64>,
        /// comma-separated lambda grid for selection
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_intercept: bool,
        #[arg(long)]
        standardize: bool,
        #[arg(long, default_value = "coefficients.txt")]
        out: PathBuf,
    },
    /// Fit one meta model for a named target task and serialize it
    Meta {
        #[command(flatten)]
        shared: SharedConfig,
        /// target task id
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 10)]
        shots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Run the leave-one-task-out few-shot experiment grid
    Experiment {
        #[command(flatten)]
        shared: SharedConfig,
        #[arg(long)]
        max_size: Option<usize>,
        /// comma-separated shot counts
        #[arg(long)]
        shots: Option<String>,
        /// comma-separated seeds
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        min_rows: Option<usize>,
        /// one task id, or "all"
        #[arg(long)]
        target: Option<String>,
        /// comma-separated support-subsample sizes
        #[arg(long)]
        support_subsample: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Correlate fingerprint similarity with regression-vector similarity
    Similarity {
        #[command(flatten)]
        shared: SharedConfig,
        #[arg(long, default_value = "similarity")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SharedConfig {
    /// TOML config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// dataset preset: boobier | bigsoldb | qm9multixc | synthetic
    #[arg(long)]
    preset: Option<String>,
    /// dataset CSV path
    #[arg(long)]
    data: Option<PathBuf>,
}

impl SharedConfig {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_toml_file(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(preset) = &self.preset {
            config.preset = Some(preset.clone());
        }
        if let Some(data) = &self.data {
            config.data_path = Some(data.clone());
        }
        config.apply_preset()?;
        Ok(config)
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Fingerprint {
            input,
            smiles_col,
            id_col,
            max_size,
            out,
            dense,
        } => cmd_fingerprint(
            &input,
            &smiles_col,
            id_col.as_deref(),
            max_size,
            &out,
            dense,
        ),
        Command::Fit {
            features,
            labels,
            lambda,
            grid,
            seed,
            no_intercept,
            standardize,
            out,
        } => {
            let grid = grid.as_deref().map(parse_list::<f64>).transpose()?;
            cmd_fit(
                &features,
                &labels,
                lambda,
                grid,
                seed,
                !no_intercept,
                standardize,
                &out,
            )
        }
        Command::Meta {
            shared,
            target,
            shots,
            seed,
            out,
        } => {
            let config = shared.resolve()?;
            cmd_meta(&config, &target, shots, seed, &out)
        }
        Command::Experiment {
            shared,
            max_size,
            shots,
            seeds,
            min_rows,
            target,
            support_subsample,
            out,
        } => {
            let mut config = shared.resolve()?;
            if let Some(v) = max_size {
                config.max_size = v;
            }
            if let Some(list) = shots.as_deref() {
                config.shots = parse_list(list)?;
            }
            if let Some(list) = seeds.as_deref() {
                config.seeds = parse_list(list)?;
            }
            if let Some(v) = min_rows {
                config.min_rows_per_task = v;
            }
            if let Some(t) = target {
                config.target = t;
            }
            if let Some(list) = support_subsample.as_deref() {
                config.support_subsample = parse_list(list)?;
            }
            if let Some(dir) = out {
                config.out_dir = dir;
            }
            let output = run_experiment(&config)?;
            println!(
                "wrote {} rows to {}",
                output.records.len(),
                output.run_dir.display()
            );
            for line in &output.skipped {
                eprintln!("note: {line}");
            }
            if output.records.is_empty() {
                anyhow::bail!(EmptyInput("no experiment rows produced".to_string()));
            }
            Ok(())
        }
        Command::Similarity { shared, out } => {
            let config = shared.resolve()?;
            cmd_similarity(&config, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error:#}");
            if error.downcast_ref::<EmptyInput>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
