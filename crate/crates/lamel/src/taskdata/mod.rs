//! Dataset ingestion: CSV records in long or wide layout, the temperature
//! window filter, task assembly over a shared fingerprint vocabulary, and
//! few-shot splits.

mod solvents;
mod synthetic;

pub use solvents::solvent_smiles;
pub use synthetic::{generate_synthetic_tasks, SyntheticDataset, SyntheticSpec, TargetMode};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::graphlets::{
    build_vocabulary, enumerate_graphlets, featurize, FingerprintVocabulary, GraphletError,
    GraphletFingerprint,
};
use crate::meta::{MetaError, Task};
use crate::molgraph::parse_smiles;

#[derive(Debug, Error)]
pub enum TaskDataError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("no task columns match the wide layout")]
    NoTaskColumns,
    #[error("requested {requested} shots from a task with {rows} rows")]
    ShotsOutOfRange { requested: usize, rows: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSyntheticSpec(String),
    #[error("no records to assemble")]
    NoRecords,
    #[error(transparent)]
    Graphlet(#[from] GraphletError),
    #[error(transparent)]
    Meta(#[from] MetaError),
}

/// One measurement: a solute, the task it belongs to (a solvent or a method
/// label), and the value.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub solute_smiles: String,
    pub task_key: String,
    pub value: f64,
    pub temperature: Option<f64>,
    /// 1-based data row in the source file (header not counted)
    pub source_row: usize,
}

/// A row (or cell) that could not be used, kept for the rejects report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub source_row: usize,
    pub reason: String,
}

/// Column roles for [`load_records`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaDescriptor {
    pub smiles_col: String,
    pub layout: SchemaLayout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemaLayout {
    /// One record per row: a task column and a value column.
    Long {
        task_col: String,
        value_col: String,
        temperature_col: Option<String>,
    },
    /// One record per (row, task column): every non-smiles column whose name
    /// contains `column_filter` (all of them when `None`) is its own task.
    Wide { column_filter: Option<String> },
}

fn parse_value(text: &str) -> Option<f64> {
    let value: f64 = text.trim().parse().ok()?;
    value.is_finite().then_some(value)
}

/// Reads CSV rows into records. Malformed rows are collected as rejects,
/// never silently dropped.
pub fn load_records<R: Read>(
    reader: R,
    schema: &SchemaDescriptor,
) -> Result<(Vec<RawRecord>, Vec<Reject>), TaskDataError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let column = |name: &str| -> Result<usize, TaskDataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TaskDataError::MissingColumn(name.to_string()))
    };

    let smiles_idx = column(&schema.smiles_col)?;
    let mut records = Vec::new();
    let mut rejects = Vec::new();

    match &schema.layout {
        SchemaLayout::Long {
            task_col,
            value_col,
            temperature_col,
        } => {
            let task_idx = column(task_col)?;
            let value_idx = column(value_col)?;
            let temperature_idx = temperature_col.as_ref().map(|c| column(c)).transpose()?;
            for (row_number, row) in csv_reader.records().enumerate() {
                let source_row = row_number + 1;
                let row = row?;
                let smiles = row.get(smiles_idx).unwrap_or_default();
                let task_key = row.get(task_idx).unwrap_or_default();
                if smiles.is_empty() || task_key.is_empty() {
                    rejects.push(Reject {
                        source_row,
                        reason: "empty smiles or task key".to_string(),
                    });
                    continue;
                }
                let Some(value) = row.get(value_idx).and_then(parse_value) else {
                    rejects.push(Reject {
                        source_row,
                        reason: format!("non-numeric value {:?}", row.get(value_idx)),
                    });
                    continue;
                };
                let temperature = match temperature_idx {
                    None => None,
                    Some(idx) => match row.get(idx).and_then(parse_value) {
                        Some(t) if t > 0.0 && t < 1000.0 => Some(t),
                        _ => {
                            rejects.push(Reject {
                                source_row,
                                reason: format!(
                                    "temperature {:?} missing or outside (0, 1000) K",
                                    row.get(idx)
                                ),
                            });
                            continue;
                        }
                    },
                };
                records.push(RawRecord {
                    solute_smiles: smiles.to_string(),
                    task_key: task_key.to_string(),
                    value,
                    temperature,
                    source_row,
                });
            }
        }
        SchemaLayout::Wide { column_filter } => {
            let task_columns: Vec<(usize, String)> = headers
                .iter()
                .enumerate()
                .filter(|&(i, name)| {
                    i != smiles_idx
                        && column_filter
                            .as_deref()
                            .is_none_or(|filter| name.contains(filter))
                })
                .map(|(i, name)| (i, name.to_string()))
                .collect();
            if task_columns.is_empty() {
                return Err(TaskDataError::NoTaskColumns);
            }
            for (row_number, row) in csv_reader.records().enumerate() {
                let source_row = row_number + 1;
                let row = row?;
                let smiles = row.get(smiles_idx).unwrap_or_default();
                if smiles.is_empty() {
                    rejects.push(Reject {
                        source_row,
                        reason: "empty smiles".to_string(),
                    });
                    continue;
                }
                for (idx, task_key) in &task_columns {
                    match row.get(*idx).and_then(parse_value) {
                        Some(value) => records.push(RawRecord {
                            solute_smiles: smiles.to_string(),
                            task_key: task_key.clone(),
                            value,
                            temperature: None,
                            source_row,
                        }),
                        None => rejects.push(Reject {
                            source_row,
                            reason: format!("non-numeric value in column {task_key:?}"),
                        }),
                    }
                }
            }
        }
    }
    Ok((records, rejects))
}

/// Temperature window for deduplicating temperature-scanned measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureWindow {
    pub low: f64,
    pub high: f64,
    pub target: f64,
}

impl Default for TemperatureWindow {
    fn default() -> Self {
        TemperatureWindow {
            low: 290.0,
            high: 300.0,
            target: 298.0,
        }
    }
}

/// Keeps, per (solute, task) pair, the single in-window record whose
/// temperature is nearest the target; exact distance ties break toward the
/// lowest source row. Pairs with no in-window record are dropped, as are
/// records without a temperature.
pub fn filter_temperature_window(
    records: Vec<RawRecord>,
    window: &TemperatureWindow,
) -> Vec<RawRecord> {
    let mut best: BTreeMap<(String, String), RawRecord> = BTreeMap::new();
    for record in records {
        let Some(t) = record.temperature else {
            continue;
        };
        if t < window.low || t > window.high {
            continue;
        }
        let key = (record.solute_smiles.clone(), record.task_key.clone());
        match best.get(&key) {
            Some(current) => {
                let current_t = current.temperature.unwrap();
                let better = (t - window.target).abs() < (current_t - window.target).abs()
                    || ((t - window.target).abs() == (current_t - window.target).abs()
                        && record.source_row < current.source_row);
                if better {
                    best.insert(key, record);
                }
            }
            None => {
                best.insert(key, record);
            }
        }
    }
    let mut kept: Vec<RawRecord> = best.into_values().collect();
    kept.sort_by_key(|r| r.source_row);
    kept
}

/// Tasks grouped by task key over one shared vocabulary, plus the molecules
/// that failed to parse.
#[derive(Debug)]
pub struct AssembledTasks {
    pub tasks: Vec<Task>,
    pub vocabulary: FingerprintVocabulary,
    pub rejects: Vec<Reject>,
    /// tasks dropped by the min-rows filter, with their row counts
    pub dropped_tasks: Vec<(String, usize)>,
}

/// Featurizes every distinct solute once, builds the union vocabulary, and
/// groups records into one task per task key. Tasks with fewer than
/// `min_rows_per_task` rows are dropped (listed in `dropped_tasks`).
pub fn assemble_tasks(
    records: &[RawRecord],
    max_size: usize,
    min_rows_per_task: usize,
) -> Result<AssembledTasks, TaskDataError> {
    if records.is_empty() {
        return Err(TaskDataError::NoRecords);
    }
    let unique_smiles: BTreeSet<&str> = records.iter().map(|r| r.solute_smiles.as_str()).collect();
    let parsed: Vec<(&str, Result<GraphletFingerprint, String>)> = unique_smiles
        .par_iter()
        .map(|&smiles| {
            let outcome = parse_smiles(smiles, true)
                .map_err(|e| e.to_string())
                .and_then(|graph| enumerate_graphlets(&graph, max_size).map_err(|e| e.to_string()));
            (smiles, outcome)
        })
        .collect();

    let mut fingerprints: HashMap<&str, GraphletFingerprint> = HashMap::new();
    let mut failures: HashMap<&str, String> = HashMap::new();
    for (smiles, outcome) in parsed {
        match outcome {
            Ok(fp) => {
                fingerprints.insert(smiles, fp);
            }
            Err(reason) => {
                failures.insert(smiles, reason);
            }
        }
    }

    let mut rejects = Vec::new();
    let mut by_task: BTreeMap<&str, Vec<&RawRecord>> = BTreeMap::new();
    for record in records {
        if let Some(reason) = failures.get(record.solute_smiles.as_str()) {
            rejects.push(Reject {
                source_row: record.source_row,
                reason: format!("smiles {:?}: {reason}", record.solute_smiles),
            });
            continue;
        }
        by_task
            .entry(record.task_key.as_str())
            .or_default()
            .push(record);
    }

    let all_fps: Vec<GraphletFingerprint> = fingerprints.values().cloned().collect();
    let vocabulary = build_vocabulary(&all_fps)?;

    let mut tasks = Vec::new();
    let mut dropped_tasks = Vec::new();
    for (task_key, mut task_records) in by_task {
        task_records.sort_by_key(|r| r.source_row);
        if task_records.len() < min_rows_per_task {
            dropped_tasks.push((task_key.to_string(), task_records.len()));
            continue;
        }
        let fps: Vec<GraphletFingerprint> = task_records
            .iter()
            .map(|r| fingerprints[r.solute_smiles.as_str()].clone())
            .collect();
        let ids: Vec<String> = task_records
            .iter()
            .map(|r| format!("{}|{}|r{}", task_key, r.solute_smiles, r.source_row))
            .collect();
        let (features, _) = featurize(&fps, &ids, &vocabulary)?;
        let labels = task_records.iter().map(|r| r.value).collect();
        tasks.push(Task::new(task_key, features, labels)?);
    }
    Ok(AssembledTasks {
        tasks,
        vocabulary,
        rejects,
        dropped_tasks,
    })
}

/// Train/test split of one task: `n_shots` uniformly sampled training rows,
/// everything else held out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotSplit {
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub n_shots: usize,
    pub seed: u64,
}

/// Samples a reproducible shot split: uniform without replacement, remainder
/// becomes the test set.
pub fn sample_shots(task: &Task, n_shots: usize, seed: u64) -> Result<ShotSplit, TaskDataError> {
    let rows = task.rows();
    if n_shots == 0 || n_shots >= rows {
        return Err(TaskDataError::ShotsOutOfRange {
            requested: n_shots,
            rows,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train: Vec<usize> = rand::seq::index::sample(&mut rng, rows, n_shots).into_vec();
    train.sort_unstable();
    let mut in_train = vec![false; rows];
    for &i in &train {
        in_train[i] = true;
    }
    let test: Vec<usize> = (0..rows).filter(|&i| !in_train[i]).collect();
    Ok(ShotSplit {
        train_indices: train,
        test_indices: test,
        n_shots,
        seed,
    })
}

/// Deterministic 80/20 split used for support-model quality reporting.
pub fn train_test_split(task: &Task, train_fraction: f64, seed: u64) -> ShotSplit {
    let rows = task.rows();
    let train_rows = ((rows as f64) * train_fraction).round() as usize;
    let train_rows = train_rows.clamp(1, rows.saturating_sub(1).max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train: Vec<usize> = rand::seq::index::sample(&mut rng, rows, train_rows).into_vec();
    train.sort_unstable();
    let mut in_train = vec![false; rows];
    for &i in &train {
        in_train[i] = true;
    }
    let test: Vec<usize> = (0..rows).filter(|&i| !in_train[i]).collect();
    ShotSplit {
        train_indices: train,
        test_indices: test,
        n_shots: train_rows,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn long_schema() -> SchemaDescriptor {
        SchemaDescriptor {
            smiles_col: "smiles".to_string(),
            layout: SchemaLayout::Long {
                task_col: "solvent".to_string(),
                value_col: "logS".to_string(),
                temperature_col: None,
            },
        }
    }

    #[test]
    fn toy_csv_three_records() {
        let csv = "smiles,solvent,logS\nC,water,-1.0\nCC,water,-2.0\nCCC,ethanol,0.5\n";
        let (records, rejects) = load_records(csv.as_bytes(), &long_schema()).unwrap();
        assert_eq!(records.len(), 3);
        assert!(rejects.is_empty());
        assert_eq!(records[0].source_row, 1);
        assert_eq!(records[2].task_key, "ethanol");
        assert_eq!(records[2].value, 0.5);
    }

    #[test]
    fn non_numeric_value_rejected_not_dropped() {
        let csv = "smiles,solvent,logS\nC,water,-1.0\nCC,water,oops\nCCC,water,0.5\n";
        let (records, rejects) = load_records(csv.as_bytes(), &long_schema()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(rejects.len(), 1);
        assert_eq!(rejects[0].source_row, 2);
    }

    #[test]
    fn header_only_file() {
        let csv = "smiles,solvent,logS\n";
        let (records, rejects) = load_records(csv.as_bytes(), &long_schema()).unwrap();
        assert!(records.is_empty());
        assert!(rejects.is_empty());
    }

    #[test]
    fn missing_column_is_an_error() {
        let csv = "smiles,solvent\nC,water\n";
        assert!(matches!(
            load_records(csv.as_bytes(), &long_schema()),
            Err(TaskDataError::MissingColumn(c)) if c == "logS"
        ));
    }

    #[test]
    fn wide_layout_one_record_per_cell() {
        let schema = SchemaDescriptor {
            smiles_col: "smiles".to_string(),
            layout: SchemaLayout::Wide {
                column_filter: Some("_SZ".to_string()),
            },
        };
        let csv = "smiles,M06L_SZ,PBE_SZ,PBE_TZP\nC,-1.0,-1.1,-1.2\nCC,-2.0,x,-2.2\n";
        let (records, rejects) = load_records(csv.as_bytes(), &schema).unwrap();
        // PBE_TZP filtered out; one bad cell rejected
        assert_eq!(records.len(), 3);
        assert_eq!(rejects.len(), 1);
        let keys: BTreeSet<&str> = records.iter().map(|r| r.task_key.as_str()).collect();
        assert_eq!(keys, BTreeSet::from(["M06L_SZ", "PBE_SZ"]));
    }

    fn record(smiles: &str, task: &str, t: f64, row: usize) -> RawRecord {
        RawRecord {
            solute_smiles: smiles.to_string(),
            task_key: task.to_string(),
            value: 1.0,
            temperature: Some(t),
            source_row: row,
        }
    }

    #[test]
    fn window_keeps_single_in_window_entry() {
        let records = vec![
            record("C", "water", 285.0, 1),
            record("C", "water", 295.0, 2),
            record("C", "water", 310.0, 3),
        ];
        let kept = filter_temperature_window(records, &TemperatureWindow::default());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].temperature, Some(295.0));
    }

    #[test]
    fn window_prefers_nearest_to_target() {
        let records = vec![
            record("C", "water", 291.0, 1),
            record("C", "water", 299.0, 2),
        ];
        let kept = filter_temperature_window(records, &TemperatureWindow::default());
        assert_eq!(kept.len(), 1);
        // 299 K is 1 K from 298; 291 K is 7 K away
        assert_eq!(kept[0].temperature, Some(299.0));
    }

    #[test]
    fn window_tie_breaks_to_lowest_row() {
        let records = vec![
            record("C", "water", 297.0, 4),
            record("C", "water", 299.0, 2),
        ];
        let kept = filter_temperature_window(records, &TemperatureWindow::default());
        assert_eq!(kept[0].source_row, 2);
    }

    #[test]
    fn window_drops_out_of_window_pairs() {
        let records = vec![record("C", "water", 320.0, 1)];
        assert!(filter_temperature_window(records, &TemperatureWindow::default()).is_empty());
    }

    #[test]
    fn assemble_two_solvents_two_tasks_equal_v() {
        let records = vec![
            RawRecord {
                solute_smiles: "C".into(),
                task_key: "water".into(),
                value: -1.0,
                temperature: None,
                source_row: 1,
            },
            RawRecord {
                solute_smiles: "CC".into(),
                task_key: "water".into(),
                value: -2.0,
                temperature: None,
                source_row: 2,
            },
            RawRecord {
                solute_smiles: "CCO".into(),
                task_key: "ethanol".into(),
                value: 0.3,
                temperature: None,
                source_row: 3,
            },
        ];
        let assembled = assemble_tasks(&records, 3, 0).unwrap();
        assert_eq!(assembled.tasks.len(), 2);
        let v = assembled.vocabulary.size();
        for task in &assembled.tasks {
            assert_eq!(task.dim(), v);
        }
        // deterministic task order by key
        assert_eq!(assembled.tasks[0].id, "ethanol");
        assert_eq!(assembled.tasks[1].id, "water");
    }

    #[test]
    fn assemble_routes_bad_smiles_to_rejects() {
        let records = vec![
            RawRecord {
                solute_smiles: "C(".into(),
                task_key: "water".into(),
                value: -1.0,
                temperature: None,
                source_row: 1,
            },
            RawRecord {
                solute_smiles: "CC".into(),
                task_key: "water".into(),
                value: -2.0,
                temperature: None,
                source_row: 2,
            },
        ];
        let assembled = assemble_tasks(&records, 3, 0).unwrap();
        assert_eq!(assembled.rejects.len(), 1);
        assert_eq!(assembled.tasks.len(), 1);
        assert_eq!(assembled.tasks[0].rows(), 1);
    }

    #[test]
    fn assemble_min_rows_filter() {
        let mut records = Vec::new();
        for i in 0..5 {
            records.push(RawRecord {
                solute_smiles: format!("{}C", "C".repeat(i)),
                task_key: "big".into(),
                value: i as f64,
                temperature: None,
                source_row: i + 1,
            });
        }
        records.push(RawRecord {
            solute_smiles: "O".into(),
            task_key: "small".into(),
            value: 0.0,
            temperature: None,
            source_row: 6,
        });
        let assembled = assemble_tasks(&records, 2, 3).unwrap();
        assert_eq!(assembled.tasks.len(), 1);
        assert_eq!(assembled.tasks[0].id, "big");
        assert_eq!(assembled.dropped_tasks, vec![("small".to_string(), 1)]);
    }

    #[test]
    fn shots_split_disjoint_and_reproducible() {
        let spec = SyntheticSpec {
            n_features: 4,
            n_tasks: 1,
            subspace_rank: 1,
            noise: 0.0,
            rows_per_task: 20,
            target_rows: 20,
            target_mode: TargetMode::InSpan,
            coefficient_spread: 1.0,
            seed: 0,
        };
        let data = generate_synthetic_tasks(&spec).unwrap();
        let task = &data.target_task;
        let a = sample_shots(task, 5, 42).unwrap();
        let b = sample_shots(task, 5, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train_indices.len(), 5);
        assert_eq!(a.test_indices.len(), 15);
        for i in &a.train_indices {
            assert!(!a.test_indices.contains(i));
        }

        let edge = sample_shots(task, 19, 0).unwrap();
        assert_eq!(edge.test_indices.len(), 1);

        assert!(matches!(
            sample_shots(task, 20, 0),
            Err(TaskDataError::ShotsOutOfRange { .. })
        ));
    }

    #[test]
    fn shot_overlap_matches_hypergeometric() {
        // overlap of two independent 10-of-50 samples: mean 2, sd ~1.2
        let spec = SyntheticSpec {
            n_features: 3,
            n_tasks: 1,
            subspace_rank: 1,
            noise: 0.0,
            rows_per_task: 50,
            target_rows: 50,
            target_mode: TargetMode::InSpan,
            coefficient_spread: 1.0,
            seed: 1,
        };
        let data = generate_synthetic_tasks(&spec).unwrap();
        let splits: Vec<ShotSplit> = (0..10)
            .map(|s| sample_shots(&data.target_task, 10, s).unwrap())
            .collect();
        let mut overlaps = Vec::new();
        for i in 0..splits.len() {
            for j in (i + 1)..splits.len() {
                let set: BTreeSet<usize> = splits[i].train_indices.iter().copied().collect();
                let overlap = splits[j]
                    .train_indices
                    .iter()
                    .filter(|x| set.contains(x))
                    .count();
                overlaps.push(overlap as f64);
            }
        }
        let mean = overlaps.iter().sum::<f64>() / overlaps.len() as f64;
        // hypergeometric mean = 10*10/50 = 2, sd of the sample mean over 45
        // correlated pairs is well under 0.6; 3 sigma gives a wide belt
        assert!((mean - 2.0).abs() < 1.8, "mean overlap {mean}");
        // all ten splits distinct
        for i in 0..splits.len() {
            for j in (i + 1)..splits.len() {
                assert_ne!(splits[i].train_indices, splits[j].train_indices);
            }
        }
    }
}
