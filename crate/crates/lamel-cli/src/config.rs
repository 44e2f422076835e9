//! Experiment configuration: TOML file, dataset presets, CLI overrides, and
//! the config digest that keys output directories.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use lamel::linmodel::default_lambda_grid;
use lamel::util::fnv1a64;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// dataset preset: boobier | bigsoldb | qm9multixc | synthetic
    pub preset: Option<String>,
    /// CSV path for file-backed presets
    pub data_path: Option<PathBuf>,

    // schema (presets fill these; explicit keys win)
    pub layout: Layout,
    pub smiles_col: String,
    pub task_col: Option<String>,
    pub value_col: Option<String>,
    pub temperature_col: Option<String>,
    /// wide layout: only columns containing this substring become tasks
    pub wide_task_filter: Option<String>,
    /// apply the 290-300 K single-entry window before assembly
    pub temperature_window: bool,

    // featurization
    pub max_size: usize,
    pub min_rows_per_task: usize,

    // experiment grid
    pub shots: Vec<usize>,
    pub seeds: Vec<u64>,
    /// one task id, or "all" for leave-one-task-out over every task
    pub target: String,
    /// support row-count ablation; empty means full support data
    pub support_subsample: Vec<usize>,
    /// keep only support tasks whose id contains this substring
    pub support_pattern: Option<String>,
    /// and sample this many of them per seed
    pub support_count: Option<usize>,
    /// train fraction of each support task (the rest is held out)
    pub support_train_fraction: f64,

    // per-phase regularization grids
    pub support_lambda_grid: Vec<f64>,
    pub parallel_lambda_grid: Vec<f64>,
    pub perpendicular_lambda_grid: Vec<f64>,
    pub baseline_lambda_grid: Vec<f64>,

    // similarity study
    pub similarity_max_size: usize,

    pub synthetic: SyntheticConfig,

    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Long,
    Wide,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_features: usize,
    pub n_tasks: usize,
    pub subspace_rank: usize,
    pub noise: f64,
    pub rows_per_task: usize,
    pub target_rows: usize,
    /// "in-span" | "orthogonal"
    pub target_mode: String,
    pub coefficient_spread: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_features: 50,
            n_tasks: 8,
            subspace_rank: 2,
            noise: 0.1,
            rows_per_task: 1000,
            target_rows: 1000,
            target_mode: "in-span".to_string(),
            coefficient_spread: 1.0,
            seed: 0,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: None,
            data_path: None,
            layout: Layout::Long,
            smiles_col: "smiles".to_string(),
            task_col: None,
            value_col: None,
            temperature_col: None,
            wide_task_filter: None,
            temperature_window: false,
            max_size: 5,
            min_rows_per_task: 0,
            shots: vec![10, 15, 20, 30, 50, 100],
            seeds: (0..10).collect(),
            target: "all".to_string(),
            support_subsample: Vec::new(),
            support_pattern: None,
            support_count: None,
            support_train_fraction: 0.8,
            support_lambda_grid: default_lambda_grid(),
            parallel_lambda_grid: default_lambda_grid(),
            perpendicular_lambda_grid: default_lambda_grid(),
            baseline_lambda_grid: default_lambda_grid(),
            similarity_max_size: 5,
            synthetic: SyntheticConfig::default(),
            out_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.apply_preset()?;
        Ok(config)
    }

    /// Fills unset schema fields from the named preset.
    pub fn apply_preset(&mut self) -> Result<()> {
        let Some(preset) = self.preset.clone() else {
            return Ok(());
        };
        match preset.as_str() {
            "boobier" => {
                self.layout = Layout::Long;
                default_string(&mut self.smiles_col, "smiles", "SMILES");
                self.task_col.get_or_insert_with(|| "Solvent".to_string());
                self.value_col.get_or_insert_with(|| "LogS".to_string());
            }
            "bigsoldb" => {
                self.layout = Layout::Long;
                default_string(&mut self.smiles_col, "smiles", "SMILES");
                self.task_col.get_or_insert_with(|| "Solvent".to_string());
                self.value_col
                    .get_or_insert_with(|| "Solubility".to_string());
                self.temperature_col
                    .get_or_insert_with(|| "T,K".to_string());
                self.temperature_window = true;
            }
            "qm9multixc" => {
                self.layout = Layout::Wide;
            }
            "synthetic" => {}
            other => bail!(
                "unknown preset {other:?} (expected boobier, bigsoldb, qm9multixc, or synthetic)"
            ),
        }
        Ok(())
    }

    pub fn is_synthetic(&self) -> bool {
        self.preset.as_deref() == Some("synthetic")
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots.contains(&0) {
            bail!("shot grid values must be >= 1");
        }
        if self.seeds.is_empty() {
            bail!("at least one seed required");
        }
        if self.max_size == 0 || self.max_size > lamel::graphlets::MAX_GRAPHLET_SIZE {
            bail!(
                "max_size must be in 1..={}",
                lamel::graphlets::MAX_GRAPHLET_SIZE
            );
        }
        if self.support_train_fraction <= 0.0 || self.support_train_fraction >= 1.0 {
            bail!("support_train_fraction must be in (0, 1)");
        }
        if !self.is_synthetic() {
            if self.data_path.is_none() {
                bail!("data_path required for file-backed datasets");
            }
            if self.layout == Layout::Long && (self.task_col.is_none() || self.value_col.is_none())
            {
                bail!("long layout needs task_col and value_col (or a preset)");
            }
        }
        if self.parallel_lambda_grid.iter().any(|&l| l <= 0.0) {
            bail!("parallel lambda grid must be strictly positive");
        }
        Ok(())
    }

    /// Stable digest of the fully resolved config; keys the run directory.
    pub fn digest(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(canonical.as_bytes()))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(format!("run-{}", self.digest()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn default_string(slot: &mut String, default_marker: &str, value: &str) {
    if slot == default_marker {
        *slot = value.to_string();
    }
}

/// Comma-separated list flags.
pub fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("bad list element {p:?}: {e}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates_for_synthetic() {
        let mut config = ExperimentConfig {
            preset: Some("synthetic".to_string()),
            ..ExperimentConfig::default()
        };
        config.apply_preset().unwrap();
        config.validate().unwrap();
    }

    #[test]
    fn digest_changes_with_content() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            max_size: 7,
            ..ExperimentConfig::default()
        };
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), ExperimentConfig::default().digest());
    }

    #[test]
    fn toml_round_trip() {
        let config = ExperimentConfig {
            preset: Some("bigsoldb".to_string()),
            data_path: Some(PathBuf::from("/data/x.csv")),
            ..ExperimentConfig::default()
        };
        let text = config.to_toml();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn bigsoldb_preset_fills_schema() {
        let mut config = ExperimentConfig {
            preset: Some("bigsoldb".to_string()),
            ..ExperimentConfig::default()
        };
        config.apply_preset().unwrap();
        assert_eq!(config.smiles_col, "SMILES");
        assert_eq!(config.task_col.as_deref(), Some("Solvent"));
        assert!(config.temperature_window);
    }

    #[test]
    fn preset_respects_explicit_overrides() {
        let mut config = ExperimentConfig {
            preset: Some("boobier".to_string()),
            task_col: Some("solvent_name".to_string()),
            ..ExperimentConfig::default()
        };
        config.apply_preset().unwrap();
        assert_eq!(config.task_col.as_deref(), Some("solvent_name"));
    }

    #[test]
    fn unknown_preset_rejected() {
        let mut config = ExperimentConfig {
            preset: Some("nope".to_string()),
            ..ExperimentConfig::default()
        };
        assert!(config.apply_preset().is_err());
    }

    #[test]
    fn list_parsing() {
        let shots: Vec<usize> = parse_list("10, 20,30").unwrap();
        assert_eq!(shots, vec![10, 20, 30]);
        assert!(parse_list::<usize>("1,x").is_err());
    }
}
