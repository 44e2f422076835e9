//! The fingerprint / fit / meta / similarity subcommands.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use thiserror::Error;

use lamel::analysis::{
    mae, r2, scatter_fit_line, similarity_study, SimilarityEntry, SimilarityMatrix,
};
use lamel::graphlets::{
    build_vocabulary, enumerate_graphlets, featurize, io as matrix_io, GraphletFingerprint,
};
use lamel::linmodel::{
    choose_lambda, default_lambda_grid, predict, ridge_fit, write_coefficients, RidgeConfig,
    SelectionRule,
};
use lamel::meta::{assert_no_leakage, fit_support, write_meta_model, MetaConfig};
use lamel::molgraph::parse_smiles;
use lamel::taskdata::{sample_shots, solvent_smiles, train_test_split};
use lamel::util::fnv1a64;

use crate::config::ExperimentConfig;
use crate::dataset::load_dataset;

/// Distinguishes "nothing to do" (exit code 2) from runtime failures.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct EmptyInput(pub String);

pub fn cmd_fingerprint(
    input: &Path,
    smiles_col: &str,
    id_col: Option<&str>,
    max_size: usize,
    out_dir: &Path,
    dense: bool,
) -> Result<()> {
    let file = fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let headers = reader.headers()?.clone();
    let smiles_idx = headers
        .iter()
        .position(|h| h == smiles_col)
        .with_context(|| format!("missing column {smiles_col:?}"))?;
    let id_idx = match id_col {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .with_context(|| format!("missing column {name:?}"))?,
        ),
        None => None,
    };

    let mut molecules: Vec<(String, String)> = Vec::new();
    for (row_number, row) in reader.records().enumerate() {
        let row = row?;
        let smiles = row.get(smiles_idx).unwrap_or_default().to_string();
        let id = id_idx
            .and_then(|i| row.get(i))
            .map(|s| s.to_string())
            .unwrap_or_else(|| row_number.to_string());
        molecules.push((id, smiles));
    }
    if molecules.is_empty() {
        bail!(EmptyInput(format!(
            "no molecule rows in {}",
            input.display()
        )));
    }

    let outcomes: Vec<(usize, Result<GraphletFingerprint, String>)> = molecules
        .par_iter()
        .enumerate()
        .map(|(i, (_, smiles))| {
            let outcome = parse_smiles(smiles, true)
                .map_err(|e| e.to_string())
                .and_then(|g| enumerate_graphlets(&g, max_size).map_err(|e| e.to_string()));
            (i, outcome)
        })
        .collect();

    let mut fingerprints = Vec::new();
    let mut ids = Vec::new();
    let mut rejects = Vec::new();
    for (i, outcome) in outcomes {
        match outcome {
            Ok(fp) => {
                fingerprints.push(fp);
                ids.push(molecules[i].0.clone());
            }
            Err(reason) => rejects.push((i + 1, molecules[i].1.clone(), reason)),
        }
    }
    for (row, smiles, reason) in &rejects {
        log::warn!("row {row}: {smiles:?} rejected: {reason}");
    }
    if fingerprints.is_empty() {
        bail!(EmptyInput("every molecule was rejected".to_string()));
    }

    let vocab = build_vocabulary(&fingerprints)?;
    let (matrix, oov) = featurize(&fingerprints, &ids, &vocab)?;
    debug_assert_eq!(oov.total_dropped(), 0);

    fs::create_dir_all(out_dir)?;
    let mut features = Vec::new();
    matrix_io::write_sparse(&mut features, &matrix, &vocab)?;
    fs::write(out_dir.join("features.txt"), features)?;

    let mut rows_csv = String::from("row,id\n");
    for (row, id) in matrix.row_ids().iter().enumerate() {
        let _ = writeln!(rows_csv, "{row},{}", csv_quote(id));
    }
    fs::write(out_dir.join("features.rows.csv"), rows_csv)?;

    if !rejects.is_empty() {
        let mut text = String::from("source_row,smiles,reason\n");
        for (row, smiles, reason) in &rejects {
            let _ = writeln!(text, "{row},{},{}", csv_quote(smiles), csv_quote(reason));
        }
        fs::write(out_dir.join("rejects.csv"), text)?;
    }

    if dense {
        let mut dense_out = Vec::new();
        matrix_io::write_dense_csv(&mut dense_out, &matrix, &vocab)?;
        fs::write(out_dir.join("features.csv"), dense_out)?;
    }

    println!(
        "fingerprinted {} molecules at max size {max_size}: V = {}, nnz = {}, rejects = {}",
        matrix.rows(),
        vocab.size(),
        matrix.nnz(),
        rejects.len()
    );
    Ok(())
}

fn csv_quote(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

fn read_labels(path: &Path, expected_rows: usize) -> Result<Vec<f64>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));
    let headers = reader.headers()?.clone();
    let value_idx = headers
        .iter()
        .position(|h| h == "value")
        .unwrap_or(if headers.len() == 1 { 0 } else { usize::MAX });
    if value_idx == usize::MAX {
        bail!("labels file needs a `value` column (or a single column)");
    }
    let mut labels = Vec::new();
    for row in reader.records() {
        let row = row?;
        let text = row.get(value_idx).unwrap_or_default();
        labels.push(
            text.parse::<f64>()
                .with_context(|| format!("bad label {text:?}"))?,
        );
    }
    if labels.len() != expected_rows {
        bail!("{} labels for {} feature rows", labels.len(), expected_rows);
    }
    Ok(labels)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_fit(
    features_path: &Path,
    labels_path: &Path,
    lambda: Option<f64>,
    grid: Option<Vec<f64>>,
    seed: u64,
    fit_intercept: bool,
    standardize: bool,
    out: &Path,
) -> Result<()> {
    let file = fs::File::open(features_path)
        .with_context(|| format!("opening {}", features_path.display()))?;
    let (matrix, _vocab) = matrix_io::read_sparse(BufReader::new(file))?;
    if matrix.rows() == 0 {
        bail!(EmptyInput("feature matrix has no rows".to_string()));
    }
    let labels = read_labels(labels_path, matrix.rows())?;
    let x = matrix.to_dense();
    let y = nalgebra::DVector::from_vec(labels);

    let base = RidgeConfig {
        lambda: 0.0,
        fit_intercept,
        standardize,
        ..RidgeConfig::default()
    };
    let chosen = match lambda {
        Some(l) => l,
        None => {
            let grid = grid.unwrap_or_else(default_lambda_grid);
            choose_lambda(&x, &y, &grid, seed, &base, SelectionRule::MinMse)?
        }
    };
    let coef = ridge_fit(
        &x,
        &y,
        &RidgeConfig {
            lambda: chosen,
            ..base
        },
    )?;
    let predictions = predict(&x, &coef)?;
    let y_vec: Vec<f64> = y.iter().copied().collect();
    let p_vec: Vec<f64> = predictions.iter().copied().collect();

    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut writer = fs::File::create(out)?;
    write_coefficients(&mut writer, &coef)?;
    writer.flush()?;
    println!(
        "fit {} rows x {} features: lambda = {chosen}, train MAE = {}",
        matrix.rows(),
        matrix.cols(),
        mae(&y_vec, &p_vec)?
    );
    Ok(())
}

pub fn cmd_meta(
    config: &ExperimentConfig,
    target_id: &str,
    n_shots: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let dataset = load_dataset(config)?;
    let target_index = dataset
        .tasks
        .iter()
        .position(|t| t.id == target_id)
        .with_context(|| format!("target {target_id:?} not found"))?;
    let target = &dataset.tasks[target_index];
    let support: Vec<lamel::meta::Task> = dataset
        .tasks
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_index)
        .map(|(_, t)| t.clone())
        .collect();
    if support.is_empty() {
        bail!(EmptyInput("no support tasks".to_string()));
    }
    assert_no_leakage(target, &support)?;

    let meta_config = MetaConfig {
        support_grid: config.support_lambda_grid.clone(),
        parallel_grid: config.parallel_lambda_grid.clone(),
        perpendicular_grid: config.perpendicular_lambda_grid.clone(),
        support_intercept: false,
        cv_seed: seed ^ fnv1a64(target.id.as_bytes()),
    };
    let ensemble = fit_support(&support, &meta_config)?;
    let split = sample_shots(target, n_shots, meta_config.cv_seed)?;
    let shots = target.select_rows(&split.train_indices);
    let held_out = target.select_rows(&split.test_indices);

    let model = lamel::meta::fit(
        &ensemble,
        &shots.features.to_dense(),
        &shots.labels,
        &meta_config,
    )?;
    let predictions = predict(&held_out.features.to_dense(), &model.beta_star)?;
    let y: Vec<f64> = held_out.labels.iter().copied().collect();
    let p: Vec<f64> = predictions.iter().copied().collect();

    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut writer = fs::File::create(out)?;
    write_meta_model(&mut writer, &model)?;
    writer.flush()?;
    println!(
        "meta model for {target_id:?}: T = {}, shots = {n_shots}, lambda_par = {}, \
         lambda_perp = {}, held-out MAE = {}, R2 = {}",
        ensemble.task_count(),
        model.lambda_parallel,
        model.lambda_perp,
        mae(&y, &p)?,
        r2(&y, &p).unwrap_or(f64::NAN)
    );
    Ok(())
}

fn write_similarity_matrix(path: &Path, matrix: &SimilarityMatrix) -> Result<()> {
    let mut text = String::from("id");
    for id in &matrix.ids {
        let _ = write!(text, ",{}", csv_quote(id));
    }
    text.push('\n');
    for (i, id) in matrix.ids.iter().enumerate() {
        let _ = write!(text, "{}", csv_quote(id));
        for j in 0..matrix.ids.len() {
            let _ = write!(text, ",{}", matrix.values[i][j]);
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn cmd_similarity(config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let dataset = load_dataset(config)?;
    if dataset.tasks.len() < 3 {
        bail!(EmptyInput(format!(
            "similarity study needs at least 3 tasks, found {}",
            dataset.tasks.len()
        )));
    }

    let mut entries = Vec::new();
    let mut quality = String::from("task,rows,lambda,test_mae,test_r2\n");
    for task in &dataset.tasks {
        // task ids are solvent names or SMILES; resolve to a structure
        let structure = solvent_smiles(&task.id)
            .map(|s| s.to_string())
            .or_else(|| parse_smiles(&task.id, true).ok().map(|_| task.id.clone()));
        let Some(solvent) = structure else {
            log::warn!("no structure known for task {:?}; excluded", task.id);
            continue;
        };
        let graph =
            parse_smiles(&solvent, true).with_context(|| format!("parsing solvent {solvent:?}"))?;
        let fingerprint = enumerate_graphlets(&graph, config.similarity_max_size)?;

        // independent per-task model on the 80/20 convention
        let split = train_test_split(
            task,
            config.support_train_fraction,
            fnv1a64(task.id.as_bytes()),
        );
        let train = task.select_rows(&split.train_indices);
        let test = task.select_rows(&split.test_indices);
        let x = train.features.to_dense();
        let base = RidgeConfig::with_intercept(0.0);
        let lambda = choose_lambda(
            &x,
            &train.labels,
            &config.support_lambda_grid,
            fnv1a64(task.id.as_bytes()),
            &base,
            SelectionRule::MinMse,
        )?;
        let coef = ridge_fit(&x, &train.labels, &RidgeConfig { lambda, ..base })?;
        let predictions = predict(&test.features.to_dense(), &coef)?;
        let y: Vec<f64> = test.labels.iter().copied().collect();
        let p: Vec<f64> = predictions.iter().copied().collect();
        let _ = writeln!(
            quality,
            "{},{},{},{},{}",
            csv_quote(&task.id),
            task.rows(),
            lambda,
            mae(&y, &p)?,
            r2(&y, &p).unwrap_or(f64::NAN)
        );

        entries.push(SimilarityEntry {
            id: task.id.clone(),
            fingerprint,
            // intercept excluded: cosine over mixed units is meaningless
            regression_vector: coef.beta,
        });
    }
    if entries.len() < 3 {
        bail!(EmptyInput(format!(
            "only {} tasks have known structures; need 3",
            entries.len()
        )));
    }

    let study = similarity_study(&entries)?;
    fs::create_dir_all(out_dir)?;
    write_similarity_matrix(
        &out_dir.join("fingerprint_similarity.csv"),
        &study.fingerprint_matrix,
    )?;
    write_similarity_matrix(
        &out_dir.join("regression_similarity.csv"),
        &study.regression_matrix,
    )?;

    let mut pairs = String::from("task_a,task_b,fingerprint_similarity,regression_similarity\n");
    for (a, b, fp, reg) in &study.pairs {
        let _ = writeln!(pairs, "{},{},{},{}", csv_quote(a), csv_quote(b), fp, reg);
    }
    fs::write(out_dir.join("pairs.csv"), pairs)?;

    let mut fit_line = String::from("slope,intercept,pearson_r,r_squared,n_pairs\n");
    let (slope, intercept) = scatter_fit_line(&study.pairs).unwrap_or((f64::NAN, f64::NAN));
    let _ = writeln!(
        fit_line,
        "{},{},{},{},{}",
        slope,
        intercept,
        study.pearson_r,
        study.pearson_r * study.pearson_r,
        study.pairs.len()
    );
    fs::write(out_dir.join("fit_line.csv"), fit_line)?;
    fs::write(out_dir.join("support_models.csv"), quality)?;

    println!(
        "similarity study over {} tasks ({} pairs): Pearson R = {:.4}",
        entries.len(),
        study.pairs.len(),
        study.pearson_r
    );
    Ok(())
}
