//! Turns a config into a task collection, through either the synthetic
//! generator or CSV ingestion plus featurization.

use std::fs::File;
use std::io::BufReader;

use anyhow::{bail, Context, Result};

use lamel::meta::Task;
use lamel::taskdata::{
    assemble_tasks, filter_temperature_window, generate_synthetic_tasks, load_records, Reject,
    SchemaDescriptor, SchemaLayout, SyntheticSpec, TargetMode, TemperatureWindow,
};

use crate::config::{ExperimentConfig, Layout};

pub struct LoadedDataset {
    pub tasks: Vec<Task>,
    pub rejects: Vec<Reject>,
    pub dropped_tasks: Vec<(String, usize)>,
    /// records removed by the temperature window (0 when not applied)
    pub window_dropped: usize,
}

pub fn synthetic_spec(config: &ExperimentConfig) -> Result<SyntheticSpec> {
    let mode = match config.synthetic.target_mode.as_str() {
        "in-span" => TargetMode::InSpan,
        "orthogonal" => TargetMode::OrthogonalToSpan,
        other => bail!("unknown synthetic target_mode {other:?}"),
    };
    Ok(SyntheticSpec {
        n_features: config.synthetic.n_features,
        n_tasks: config.synthetic.n_tasks,
        subspace_rank: config.synthetic.subspace_rank,
        noise: config.synthetic.noise,
        rows_per_task: config.synthetic.rows_per_task,
        target_rows: config.synthetic.target_rows,
        target_mode: mode,
        coefficient_spread: config.synthetic.coefficient_spread,
        seed: config.synthetic.seed,
    })
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<LoadedDataset> {
    if config.is_synthetic() {
        let data = generate_synthetic_tasks(&synthetic_spec(config)?)?;
        let mut tasks = data.support_tasks;
        tasks.push(data.target_task);
        return Ok(LoadedDataset {
            tasks,
            rejects: Vec::new(),
            dropped_tasks: Vec::new(),
            window_dropped: 0,
        });
    }

    let path = config
        .data_path
        .as_ref()
        .context("data_path required for file-backed datasets")?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let schema = SchemaDescriptor {
        smiles_col: config.smiles_col.clone(),
        layout: match config.layout {
            Layout::Long => SchemaLayout::Long {
                task_col: config.task_col.clone().context("task_col required")?,
                value_col: config.value_col.clone().context("value_col required")?,
                temperature_col: config.temperature_col.clone(),
            },
            Layout::Wide => SchemaLayout::Wide {
                column_filter: config.wide_task_filter.clone(),
            },
        },
    };
    let (mut records, mut rejects) = load_records(BufReader::new(file), &schema)?;

    let mut window_dropped = 0;
    if config.temperature_window {
        let before = records.len();
        records = filter_temperature_window(records, &TemperatureWindow::default());
        window_dropped = before - records.len();
    }
    if records.is_empty() {
        bail!("no usable records in {}", path.display());
    }

    let assembled = assemble_tasks(&records, config.max_size, config.min_rows_per_task)?;
    rejects.extend(assembled.rejects);
    Ok(LoadedDataset {
        tasks: assembled.tasks,
        rejects,
        dropped_tasks: assembled.dropped_tasks,
        window_dropped,
    })
}

/// Resolves the target selector into task indices.
pub fn target_indices(config: &ExperimentConfig, tasks: &[Task]) -> Result<Vec<usize>> {
    if config.target == "all" {
        if config.is_synthetic() {
            // the generated target task is the designated one
            let index = tasks
                .iter()
                .position(|t| t.id == "target")
                .context("synthetic dataset lacks its target task")?;
            return Ok(vec![index]);
        }
        return Ok((0..tasks.len()).collect());
    }
    let index = tasks
        .iter()
        .position(|t| t.id == config.target)
        .with_context(|| {
            let known: Vec<&str> = tasks.iter().map(|t| t.id.as_str()).collect();
            format!("target {:?} not found; tasks: {known:?}", config.target)
        })?;
    Ok(vec![index])
}
