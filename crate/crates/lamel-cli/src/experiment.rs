//! Leave-one-task-out few-shot experiment harness.
//!
//! For every (target, shot count, seed, support-subsample) cell the harness
//! fits the meta-learner on the sampled shots and a plain ridge baseline on
//! the same shots, evaluates both on the identical held-out remainder of the
//! target task, and records paired metrics. Cells run in parallel; the final
//! table is sorted canonically so scheduling never changes the output bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;

use lamel::analysis::{mae, r2, relative_improvement};
use lamel::linmodel::{choose_lambda, predict, ridge_fit, RidgeConfig, SelectionRule};
use lamel::meta::{assert_no_leakage, fit_support, MetaConfig, Task};
use lamel::taskdata::{sample_shots, train_test_split};
use lamel::util::fnv1a64;

use crate::config::ExperimentConfig;
use crate::dataset::{load_dataset, target_indices, LoadedDataset};

/// One paired evaluation row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub target: String,
    pub n_shots: usize,
    pub seed: u64,
    pub support_subsample: Option<usize>,
    pub mae_meta: f64,
    pub mae_regular: f64,
    pub r2_meta: f64,
    pub r2_regular: f64,
    pub relative_improvement: f64,
    pub lambda_parallel: f64,
    pub lambda_perp: f64,
    pub lambda_baseline: f64,
    /// true when the support ensemble had a single task (collapse path)
    pub degenerate: bool,
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub run_dir: PathBuf,
    pub records: Vec<MetricRecord>,
    pub skipped: Vec<String>,
}

struct Cell {
    target_index: usize,
    seed: u64,
    subsample: Option<usize>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let started = Instant::now();
    let dataset = load_dataset(config)?;
    let targets = target_indices(config, &dataset.tasks)?;

    let subsamples: Vec<Option<usize>> = if config.support_subsample.is_empty() {
        vec![None]
    } else {
        config.support_subsample.iter().map(|&s| Some(s)).collect()
    };
    let mut cells = Vec::new();
    for &target_index in &targets {
        for &seed in &config.seeds {
            for &subsample in &subsamples {
                cells.push(Cell {
                    target_index,
                    seed,
                    subsample,
                });
            }
        }
    }

    let outcomes: Result<Vec<(Vec<MetricRecord>, Vec<String>)>> = cells
        .par_iter()
        .map(|cell| run_cell(config, &dataset.tasks, cell))
        .collect();
    let outcomes = outcomes?;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (cell_records, cell_skipped) in outcomes {
        records.extend(cell_records);
        skipped.extend(cell_skipped);
    }
    records.sort_by(|a, b| {
        (&a.target, a.n_shots, a.seed, a.support_subsample).cmp(&(
            &b.target,
            b.n_shots,
            b.seed,
            b.support_subsample,
        ))
    });
    skipped.sort();

    let run_dir = config.run_dir();
    fs::create_dir_all(&run_dir).with_context(|| format!("creating {}", run_dir.display()))?;
    fs::write(run_dir.join("raw.csv"), raw_csv(&records))?;
    fs::write(run_dir.join("summary.csv"), summary_csv(&records))?;
    fs::write(run_dir.join("config-echo.toml"), config.to_toml())?;
    write_run_info(&run_dir, config, &dataset, &skipped, started.elapsed())?;
    if !dataset.rejects.is_empty() {
        let mut text = String::from("source_row,reason\n");
        for reject in &dataset.rejects {
            let _ = writeln!(text, "{},{}", reject.source_row, csv_escape(&reject.reason));
        }
        fs::write(run_dir.join("rejects.csv"), text)?;
    }

    Ok(ExperimentOutput {
        run_dir,
        records,
        skipped,
    })
}

fn run_cell(
    config: &ExperimentConfig,
    tasks: &[Task],
    cell: &Cell,
) -> Result<(Vec<MetricRecord>, Vec<String>)> {
    let target = &tasks[cell.target_index];

    // support pool: everything but the target, optionally pattern-filtered
    // and seed-sampled down to support_count
    let mut pool: Vec<&Task> = tasks
        .iter()
        .enumerate()
        .filter(|&(i, task)| {
            i != cell.target_index
                && config
                    .support_pattern
                    .as_deref()
                    .is_none_or(|p| task.id.contains(p))
        })
        .map(|(_, task)| task)
        .collect();
    if let Some(count) = config.support_count {
        if count < pool.len() {
            use rand::SeedableRng;
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(cell.seed ^ fnv1a64(b"support-count"));
            let picked = rand::seq::index::sample(&mut rng, pool.len(), count);
            let mut indices: Vec<usize> = picked.into_vec();
            indices.sort_unstable();
            pool = indices.into_iter().map(|i| pool[i]).collect();
        }
    }
    // A dataset with no usable support tasks still gets baseline rows; the
    // meta columns are NaN and the row is marked degenerate.
    let prepared: Vec<Task> = pool
        .iter()
        .map(|task| prepare_support(task, cell.seed, config, cell.subsample))
        .collect();
    assert_no_leakage(target, &prepared)?;

    let cell_seed = cell.seed ^ fnv1a64(target.id.as_bytes());
    let meta_config = MetaConfig {
        support_grid: config.support_lambda_grid.clone(),
        parallel_grid: config.parallel_lambda_grid.clone(),
        perpendicular_grid: config.perpendicular_lambda_grid.clone(),
        support_intercept: false,
        cv_seed: cell_seed,
    };
    let ensemble = if prepared.is_empty() {
        log::warn!("target {:?} has no support tasks; baseline only", target.id);
        None
    } else {
        Some(fit_support(&prepared, &meta_config)?)
    };
    let degenerate = ensemble.as_ref().is_none_or(|e| e.task_count() == 1);

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for &n_shots in &config.shots {
        if n_shots >= target.rows() {
            skipped.push(format!(
                "target={} n_shots={} seed={}: skipped, task has {} rows",
                target.id,
                n_shots,
                cell.seed,
                target.rows()
            ));
            continue;
        }
        let split_seed = cell_seed ^ (n_shots as u64).wrapping_mul(0x9E3779B97F4A7C15);
        let split = sample_shots(target, n_shots, split_seed)?;
        let shots = target.select_rows(&split.train_indices);
        let held_out = target.select_rows(&split.test_indices);
        let x_shots = shots.features.to_dense();
        let x_test = held_out.features.to_dense();
        let y_test: Vec<f64> = held_out.labels.iter().copied().collect();

        let shot_config = MetaConfig {
            cv_seed: split_seed,
            ..meta_config.clone()
        };
        let meta_fit = ensemble
            .as_ref()
            .map(|e| lamel::meta::fit(e, &x_shots, &shots.labels, &shot_config))
            .transpose()?;
        let meta_predictions = meta_fit
            .as_ref()
            .map(|m| predict(&x_test, &m.beta_star))
            .transpose()?;

        let baseline_base = RidgeConfig::with_intercept(0.0);
        let lambda_baseline = choose_lambda(
            &x_shots,
            &shots.labels,
            &config.baseline_lambda_grid,
            split_seed,
            &baseline_base,
            SelectionRule::OneStdError,
        )?;
        let baseline = ridge_fit(
            &x_shots,
            &shots.labels,
            &RidgeConfig {
                lambda: lambda_baseline,
                ..baseline_base
            },
        )?;
        let baseline_predictions = predict(&x_test, &baseline)?;

        let base_pred: Vec<f64> = baseline_predictions.iter().copied().collect();
        let mae_regular = mae(&y_test, &base_pred)?;
        let r2_regular = r2(&y_test, &base_pred).unwrap_or(f64::NAN);

        let (mae_meta, r2_meta) = match &meta_predictions {
            Some(predictions) => {
                let meta_pred: Vec<f64> = predictions.iter().copied().collect();
                (
                    mae(&y_test, &meta_pred)?,
                    r2(&y_test, &meta_pred).unwrap_or(f64::NAN),
                )
            }
            None => (f64::NAN, f64::NAN),
        };
        let improvement = relative_improvement(mae_regular, mae_meta).unwrap_or(f64::NAN);

        records.push(MetricRecord {
            target: target.id.clone(),
            n_shots,
            seed: cell.seed,
            support_subsample: cell.subsample,
            mae_meta,
            mae_regular,
            r2_meta,
            r2_regular,
            relative_improvement: improvement,
            lambda_parallel: meta_fit.as_ref().map_or(f64::NAN, |m| m.lambda_parallel),
            lambda_perp: meta_fit.as_ref().map_or(f64::NAN, |m| m.lambda_perp),
            lambda_baseline,
            degenerate,
        });
    }
    Ok((records, skipped))
}

/// 80/20 train split of a support task, optionally subsampled to a fixed
/// row count.
fn prepare_support(
    task: &Task,
    seed: u64,
    config: &ExperimentConfig,
    subsample: Option<usize>,
) -> Task {
    let split_seed = seed ^ fnv1a64(task.id.as_bytes());
    let split = train_test_split(task, config.support_train_fraction, split_seed);
    let mut rows = split.train_indices;
    if let Some(target_rows) = subsample {
        if target_rows < rows.len() {
            use rand::SeedableRng;
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(split_seed ^ fnv1a64(b"subsample"));
            let picked = rand::seq::index::sample(&mut rng, rows.len(), target_rows);
            let mut indices: Vec<usize> = picked.into_vec();
            indices.sort_unstable();
            rows = indices.into_iter().map(|i| rows[i]).collect();
        }
    }
    task.select_rows(&rows)
}

fn format_float(value: f64) -> String {
    if value.is_nan() {
        "NaN".to_string()
    } else {
        format!("{value}")
    }
}

fn csv_escape(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

pub fn raw_csv(records: &[MetricRecord]) -> String {
    let mut out = String::from(
        "target,n_shots,seed,support_subsample,mae_meta,mae_regular,r2_meta,r2_regular,\
         relative_improvement,lambda_parallel,lambda_perp,lambda_baseline,degenerate\n",
    );
    for r in records {
        let subsample = r
            .support_subsample
            .map(|s| s.to_string())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_escape(&r.target),
            r.n_shots,
            r.seed,
            subsample,
            format_float(r.mae_meta),
            format_float(r.mae_regular),
            format_float(r.r2_meta),
            format_float(r.r2_regular),
            format_float(r.relative_improvement),
            format_float(r.lambda_parallel),
            format_float(r.lambda_perp),
            format_float(r.lambda_baseline),
            r.degenerate,
        );
    }
    out
}

/// Mean and standard error over seeds per (target, n_shots, subsample)
/// group. Carries nothing that is not recomputable from the raw rows.
pub fn summary_csv(records: &[MetricRecord]) -> String {
    let mut out = String::from(
        "target,n_shots,support_subsample,n_seeds,mean_mae_meta,se_mae_meta,\
         mean_mae_regular,se_mae_regular,mean_relative_improvement,se_relative_improvement\n",
    );
    let mut index = 0;
    while index < records.len() {
        let head = &records[index];
        let key = (&head.target, head.n_shots, head.support_subsample);
        let mut group = Vec::new();
        while index < records.len() {
            let r = &records[index];
            if (&r.target, r.n_shots, r.support_subsample) != key {
                break;
            }
            group.push(r);
            index += 1;
        }
        let stats = |f: &dyn Fn(&MetricRecord) -> f64| {
            let values: Vec<f64> = group.iter().map(|r| f(r)).collect();
            mean_se(&values)
        };
        let (m_meta, se_meta) = stats(&|r| r.mae_meta);
        let (m_reg, se_reg) = stats(&|r| r.mae_regular);
        let (m_imp, se_imp) = stats(&|r| r.relative_improvement);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_escape(&head.target),
            head.n_shots,
            head.support_subsample
                .map(|s| s.to_string())
                .unwrap_or_default(),
            group.len(),
            format_float(m_meta),
            format_float(se_meta),
            format_float(m_reg),
            format_float(se_reg),
            format_float(m_imp),
            format_float(se_imp),
        );
    }
    out
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn write_run_info(
    run_dir: &std::path::Path,
    config: &ExperimentConfig,
    dataset: &LoadedDataset,
    skipped: &[String],
    elapsed: std::time::Duration,
) -> Result<()> {
    let mut text = String::new();
    let _ = writeln!(text, "version: {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(text, "config digest: {}", config.digest());
    let _ = writeln!(
        text,
        "unix time: {}",
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    );
    let _ = writeln!(text, "elapsed: {:.3}s", elapsed.as_secs_f64());
    let _ = writeln!(text, "tasks: {}", dataset.tasks.len());
    for task in &dataset.tasks {
        let _ = writeln!(text, "  {} rows={}", task.id, task.rows());
    }
    let _ = writeln!(text, "rejects: {}", dataset.rejects.len());
    let _ = writeln!(text, "window dropped records: {}", dataset.window_dropped);
    if !dataset.dropped_tasks.is_empty() {
        let _ = writeln!(text, "tasks under min_rows_per_task:");
        for (id, rows) in &dataset.dropped_tasks {
            let _ = writeln!(text, "  {id} rows={rows}");
        }
    }
    if !skipped.is_empty() {
        let _ = writeln!(text, "skipped cells:");
        for s in skipped {
            let _ = writeln!(text, "  {s}");
        }
    }
    fs::write(run_dir.join("run-info.txt"), text)?;
    Ok(())
}
