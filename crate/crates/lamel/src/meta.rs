//! Three-phase linear meta-learning.
//!
//! Phase 1 fits one ridge model per support task and averages them. Phase 2
//! works inside the affine span of the support coefficients around that
//! mean: meta-features are the centered per-task prediction offsets, and a
//! small ridge fit over them mixes the support models into the parallel
//! component. Phase 3 fits a plain ridge model to the remaining residuals
//! over the ordinary features, giving the perpendicular component. The final
//! specialization model is the sum of the two components.
//!
//! Phases run strictly in sequence, which keeps the three regularization
//! searches independent. The intercept is fitted in the perpendicular phase
//! only; support fits default to no intercept so that the parallel component
//! carries none either.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphlets::FeatureMatrix;
use crate::linmodel::{
    choose_lambda, default_lambda_grid, predict, ridge_fit, Coefficients, LinModelError,
    RidgeConfig, SelectionRule,
};
use crate::util::fnv1a64;

#[derive(Debug, Error, PartialEq)]
pub enum MetaError {
    #[error("no support tasks")]
    NoSupportTasks,
    #[error("task {id:?} has feature dimension {actual}, expected {expected}")]
    VocabularyMismatch {
        id: String,
        expected: usize,
        actual: usize,
    },
    #[error("task {id:?} has {rows} feature rows for {labels} labels")]
    RowCountMismatch {
        id: String,
        rows: usize,
        labels: usize,
    },
    #[error("task {id:?} is empty")]
    EmptyTask { id: String },
    #[error("parallel-phase lambda must be strictly positive, got {0}")]
    NonPositiveParallelLambda(f64),
    #[error("meta-feature row count {meta} does not match {labels} labels")]
    MetaShapeMismatch { meta: usize, labels: usize },
    #[error("sample {sample:?} of the target task also appears in support task {task:?}")]
    Leakage { sample: String, task: String },
    #[error(transparent)]
    LinModel(#[from] LinModelError),
}

/// One prediction task: a feature matrix over the shared vocabulary plus
/// labels in property units.
#[derive(Debug, Clone)]
pub struct Task {
    pub id: String,
    pub features: FeatureMatrix,
    pub labels: DVector<f64>,
}

impl Task {
    pub fn new(
        id: impl Into<String>,
        features: FeatureMatrix,
        labels: Vec<f64>,
    ) -> Result<Self, MetaError> {
        let id = id.into();
        if features.rows() == 0 {
            return Err(MetaError::EmptyTask { id });
        }
        if features.rows() != labels.len() {
            return Err(MetaError::RowCountMismatch {
                id,
                rows: features.rows(),
                labels: labels.len(),
            });
        }
        Ok(Task {
            id,
            features,
            labels: DVector::from_vec(labels),
        })
    }

    pub fn rows(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Task restricted to the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Task {
        Task {
            id: self.id.clone(),
            features: self.features.select_rows(rows),
            labels: DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.labels[r])),
        }
    }
}

/// Knobs for the three fits; one grid per phase.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaConfig {
    pub support_grid: Vec<f64>,
    pub parallel_grid: Vec<f64>,
    pub perpendicular_grid: Vec<f64>,
    /// Fit support models with an intercept. Off by default: the intercept
    /// lives in the perpendicular phase.
    pub support_intercept: bool,
    pub cv_seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            support_grid: default_lambda_grid(),
            parallel_grid: default_lambda_grid(),
            perpendicular_grid: default_lambda_grid(),
            support_intercept: false,
            cv_seed: 0,
        }
    }
}

/// One fitted support model.
#[derive(Debug, Clone)]
pub struct SupportModel {
    pub task_id: String,
    pub coefficients: Coefficients,
    pub lambda: f64,
}

/// All fitted support models plus their elementwise mean.
#[derive(Debug, Clone)]
pub struct SupportEnsemble {
    pub models: Vec<SupportModel>,
    pub mean_model: Coefficients,
}

impl SupportEnsemble {
    pub fn task_count(&self) -> usize {
        self.models.len()
    }

    pub fn dim(&self) -> usize {
        self.mean_model.dim()
    }
}

/// Phase 1: ridge-fit every support task with a per-task cross-validated
/// lambda, and average the coefficient vectors.
pub fn fit_support(tasks: &[Task], config: &MetaConfig) -> Result<SupportEnsemble, MetaError> {
    if tasks.is_empty() {
        return Err(MetaError::NoSupportTasks);
    }
    let dim = tasks[0].dim();
    let mut models = Vec::with_capacity(tasks.len());
    for task in tasks {
        if task.dim() != dim {
            return Err(MetaError::VocabularyMismatch {
                id: task.id.clone(),
                expected: dim,
                actual: task.dim(),
            });
        }
        let x = task.features.to_dense();
        let base = RidgeConfig {
            lambda: 0.0,
            fit_intercept: config.support_intercept,
            ..RidgeConfig::default()
        };
        let seed = config.cv_seed ^ fnv1a64(task.id.as_bytes());
        let lambda = choose_lambda(
            &x,
            &task.labels,
            &config.support_grid,
            seed,
            &base,
            SelectionRule::MinMse,
        )?;
        let coefficients = ridge_fit(&x, &task.labels, &RidgeConfig { lambda, ..base })?;
        models.push(SupportModel {
            task_id: task.id.clone(),
            coefficients,
            lambda,
        });
    }

    let count = models.len() as f64;
    let mut mean_beta = DVector::zeros(dim);
    let mut mean_intercept = 0.0;
    for model in &models {
        mean_beta += &model.coefficients.beta;
        mean_intercept += model.coefficients.intercept;
    }
    Ok(SupportEnsemble {
        models,
        mean_model: Coefficients {
            beta: mean_beta / count,
            intercept: mean_intercept / count,
        },
    })
}

/// Centered meta-features of the target samples under the support models.
#[derive(Debug, Clone)]
pub struct MetaFeatures {
    /// shots-by-tasks matrix with entries (beta_tau - mean_beta) . x_i
    pub matrix: DMatrix<f64>,
    /// average support-model prediction per target sample
    pub mean_prediction: DVector<f64>,
}

/// Builds the meta-feature matrix: column tau holds the prediction offset of
/// support model tau from the ensemble mean on each target sample. Every row
/// sums to zero by construction.
pub fn meta_features(
    ensemble: &SupportEnsemble,
    x_star: &DMatrix<f64>,
) -> Result<MetaFeatures, MetaError> {
    if x_star.ncols() != ensemble.dim() {
        return Err(MetaError::VocabularyMismatch {
            id: "target".to_string(),
            expected: ensemble.dim(),
            actual: x_star.ncols(),
        });
    }
    let t = ensemble.task_count();
    let n = x_star.nrows();
    let mut matrix = DMatrix::zeros(n, t);
    let mut mean_prediction = DVector::zeros(n);
    for (tau, model) in ensemble.models.iter().enumerate() {
        let offset = &model.coefficients.beta - &ensemble.mean_model.beta;
        let column = x_star * offset;
        matrix.set_column(tau, &column);
        mean_prediction += predict(x_star, &model.coefficients)?;
    }
    mean_prediction /= t as f64;
    Ok(MetaFeatures {
        matrix,
        mean_prediction,
    })
}

/// Phase-2 output: the subspace mixing weights and the parallel component.
#[derive(Debug, Clone)]
pub struct ParallelFit {
    pub mixing: DVector<f64>,
    pub beta_parallel: Coefficients,
}

/// Phase 2: ridge-fit the mixing weights `c` on the meta-features against
/// the mean-centered labels, then compose the parallel component
/// `mean + sum_tau c_tau (beta_tau - mean)`.
///
/// The meta-feature design is rank-deficient by construction (columns sum to
/// zero), so a strictly positive lambda is required; the composed parallel
/// component is well-defined regardless.
pub fn fit_parallel(
    ensemble: &SupportEnsemble,
    meta: &MetaFeatures,
    y_star: &DVector<f64>,
    lambda_parallel: f64,
) -> Result<ParallelFit, MetaError> {
    if lambda_parallel <= 0.0 || !lambda_parallel.is_finite() {
        return Err(MetaError::NonPositiveParallelLambda(lambda_parallel));
    }
    if meta.matrix.nrows() != y_star.len() {
        return Err(MetaError::MetaShapeMismatch {
            meta: meta.matrix.nrows(),
            labels: y_star.len(),
        });
    }
    let target = y_star - &meta.mean_prediction;
    let fit = ridge_fit(&meta.matrix, &target, &RidgeConfig::plain(lambda_parallel))?;
    let mixing = fit.beta;

    let mut beta = ensemble.mean_model.beta.clone();
    for (tau, model) in ensemble.models.iter().enumerate() {
        beta += mixing[tau] * (&model.coefficients.beta - &ensemble.mean_model.beta);
    }
    // The mixing never touches intercepts: meta-features exclude them, so the
    // parallel model inherits the ensemble-mean intercept unchanged.
    Ok(ParallelFit {
        mixing,
        beta_parallel: Coefficients {
            beta,
            intercept: ensemble.mean_model.intercept,
        },
    })
}

/// Phase 3: plain ridge on the residuals left by the parallel component,
/// with the intercept handled here (and only here).
pub fn fit_perpendicular(
    x_star: &DMatrix<f64>,
    residuals: &DVector<f64>,
    lambda_perp: f64,
) -> Result<Coefficients, MetaError> {
    Ok(ridge_fit(
        x_star,
        residuals,
        &RidgeConfig::with_intercept(lambda_perp),
    )?)
}

/// A fitted specialization model for one target task.
#[derive(Debug, Clone)]
pub struct MetaModel {
    pub task_ids: Vec<String>,
    pub mixing: DVector<f64>,
    pub beta_parallel: Coefficients,
    pub beta_perp: Coefficients,
    pub beta_star: Coefficients,
    pub lambda_parallel: f64,
    pub lambda_perp: f64,
}

impl MetaModel {
    /// Fraction of the perpendicular component lying inside the span of the
    /// centered support coefficients. Diagnostic only; the perpendicular fit
    /// is not constrained to be orthogonal.
    pub fn perp_in_span_fraction(&self, ensemble: &SupportEnsemble) -> f64 {
        let norm = self.beta_perp.beta.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let residual = project_residual(&self.beta_perp.beta, ensemble);
        let in_span = (norm.powi(2) - residual.powi(2)).max(0.0).sqrt();
        in_span / norm
    }
}

/// Norm of the component of `v` outside span{beta_tau - mean}.
pub fn project_residual(v: &DVector<f64>, ensemble: &SupportEnsemble) -> f64 {
    let t = ensemble.task_count();
    let dim = ensemble.dim();
    let mut basis = DMatrix::zeros(dim, t);
    for (tau, model) in ensemble.models.iter().enumerate() {
        basis.set_column(tau, &(&model.coefficients.beta - &ensemble.mean_model.beta));
    }
    // least-squares projection through the minimum-norm solve
    let svd = basis.clone().svd(true, true);
    let coefficients = svd.solve(v, 1e-12).unwrap_or_else(|_| DVector::zeros(t));
    (v - basis * coefficients).norm()
}

/// Runs the three phases in order and composes the final model.
pub fn fit(
    ensemble: &SupportEnsemble,
    x_star: &DMatrix<f64>,
    y_star: &DVector<f64>,
    config: &MetaConfig,
) -> Result<MetaModel, MetaError> {
    if x_star.nrows() == 0 {
        return Err(MetaError::EmptyTask {
            id: "target".to_string(),
        });
    }
    if x_star.nrows() != y_star.len() {
        return Err(MetaError::RowCountMismatch {
            id: "target".to_string(),
            rows: x_star.nrows(),
            labels: y_star.len(),
        });
    }

    // phase 2
    let meta = meta_features(ensemble, x_star)?;
    let centered = y_star - &meta.mean_prediction;
    let parallel_base = RidgeConfig::plain(0.0);
    let lambda_parallel = choose_lambda(
        &meta.matrix,
        &centered,
        &config.parallel_grid,
        config.cv_seed,
        &parallel_base,
        SelectionRule::OneStdError,
    )?;
    let parallel = fit_parallel(ensemble, &meta, y_star, lambda_parallel)?;

    // phase 3
    let residuals = y_star - predict(x_star, &parallel.beta_parallel)?;
    let perp_base = RidgeConfig::with_intercept(0.0);
    let lambda_perp = choose_lambda(
        x_star,
        &residuals,
        &config.perpendicular_grid,
        config.cv_seed.wrapping_add(1),
        &perp_base,
        SelectionRule::OneStdError,
    )?;
    let beta_perp = fit_perpendicular(x_star, &residuals, lambda_perp)?;

    let beta_star = Coefficients {
        beta: &parallel.beta_parallel.beta + &beta_perp.beta,
        intercept: parallel.beta_parallel.intercept + beta_perp.intercept,
    };
    Ok(MetaModel {
        task_ids: ensemble.models.iter().map(|m| m.task_id.clone()).collect(),
        mixing: parallel.mixing,
        beta_parallel: parallel.beta_parallel,
        beta_perp,
        beta_star,
        lambda_parallel,
        lambda_perp,
    })
}

/// Predictions of the composed specialization model.
pub fn predict_meta(model: &MetaModel, x: &DMatrix<f64>) -> Result<DVector<f64>, MetaError> {
    Ok(predict(x, &model.beta_star)?)
}

/// Asserts that no sample identifier of the target task appears in any
/// support task.
pub fn assert_no_leakage(target: &Task, support: &[Task]) -> Result<(), MetaError> {
    let target_ids: HashSet<&String> = target.features.row_ids().iter().collect();
    for task in support {
        for id in task.features.row_ids() {
            if target_ids.contains(id) {
                return Err(MetaError::Leakage {
                    sample: id.clone(),
                    task: task.id.clone(),
                });
            }
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SparseCoefficients {
    intercept: f64,
    entries: Vec<(usize, f64)>,
}

impl SparseCoefficients {
    fn from_coefficients(coef: &Coefficients) -> Self {
        SparseCoefficients {
            intercept: coef.intercept,
            entries: coef
                .beta
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect(),
        }
    }

    fn to_coefficients(&self, dim: usize) -> Coefficients {
        let mut beta = DVector::zeros(dim);
        for &(i, v) in &self.entries {
            beta[i] = v;
        }
        Coefficients {
            beta,
            intercept: self.intercept,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MetaModelFile {
    version: String,
    dim: usize,
    task_ids: Vec<String>,
    mixing: Vec<f64>,
    lambda_parallel: f64,
    lambda_perp: f64,
    beta_parallel: SparseCoefficients,
    beta_perp: SparseCoefficients,
    beta_star: SparseCoefficients,
}

pub const META_MODEL_VERSION: &str = "lamel-model-v1";

#[derive(Debug, Error)]
pub enum MetaModelIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unsupported model version {0:?}")]
    Version(String),
}

pub fn write_meta_model<W: std::io::Write>(
    out: &mut W,
    model: &MetaModel,
) -> Result<(), MetaModelIoError> {
    let file = MetaModelFile {
        version: META_MODEL_VERSION.to_string(),
        dim: model.beta_star.dim(),
        task_ids: model.task_ids.clone(),
        mixing: model.mixing.iter().copied().collect(),
        lambda_parallel: model.lambda_parallel,
        lambda_perp: model.lambda_perp,
        beta_parallel: SparseCoefficients::from_coefficients(&model.beta_parallel),
        beta_perp: SparseCoefficients::from_coefficients(&model.beta_perp),
        beta_star: SparseCoefficients::from_coefficients(&model.beta_star),
    };
    serde_json::to_writer_pretty(out, &file)?;
    Ok(())
}

pub fn read_meta_model<R: std::io::Read>(input: R) -> Result<MetaModel, MetaModelIoError> {
    let file: MetaModelFile = serde_json::from_reader(input)?;
    if file.version != META_MODEL_VERSION {
        return Err(MetaModelIoError::Version(file.version));
    }
    Ok(MetaModel {
        task_ids: file.task_ids,
        mixing: DVector::from_vec(file.mixing),
        beta_parallel: file.beta_parallel.to_coefficients(file.dim),
        beta_perp: file.beta_perp.to_coefficients(file.dim),
        beta_star: file.beta_star.to_coefficients(file.dim),
        lambda_parallel: file.lambda_parallel,
        lambda_perp: file.lambda_perp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::ridge_fit_with_origin;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense_task(id: &str, x: DMatrix<f64>, y: DVector<f64>) -> Task {
        let rows = x.nrows();
        let entries = (0..rows)
            .flat_map(|r| {
                let x = &x;
                (0..x.ncols()).filter_map(move |c| {
                    let value = x[(r, c)];
                    (value != 0.0).then_some(crate::graphlets::SparseEntry {
                        row: r,
                        col: c,
                        count: value as u64,
                    })
                })
            })
            .collect();
        let ids = (0..rows).map(|r| format!("{id}:{r}")).collect();
        let features = FeatureMatrix::new(rows, x.ncols(), entries, ids);
        Task {
            id: id.to_string(),
            features,
            labels: y,
        }
    }

    fn synthetic_task(
        id: &str,
        rng: &mut ChaCha8Rng,
        beta: &DVector<f64>,
        rows: usize,
        noise: f64,
    ) -> Task {
        let v = beta.len();
        // counts in 0..4 keep the FeatureMatrix integer-valued
        let x = DMatrix::from_fn(rows, v, |_, _| rng.random_range(0..4) as f64);
        let mut y = &x * beta;
        for value in y.iter_mut() {
            *value += noise * rng.random_range(-1.0..1.0);
        }
        dense_task(id, x, y)
    }

    #[test]
    fn support_recovery_with_exact_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let beta = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let task = synthetic_task("t", &mut rng, &beta, 200, 0.0);
        let config = MetaConfig {
            support_grid: vec![1e-8],
            ..MetaConfig::default()
        };
        let ensemble = fit_support(std::slice::from_ref(&task), &config).unwrap();
        assert!((&ensemble.models[0].coefficients.beta - &beta).norm() < 1e-4);
    }

    #[test]
    fn mean_model_is_elementwise_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tasks: Vec<Task> = (0..5)
            .map(|i| {
                let beta = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
                synthetic_task(&format!("t{i}"), &mut rng, &beta, 60, 0.05)
            })
            .collect();
        let ensemble = fit_support(&tasks, &MetaConfig::default()).unwrap();
        let mut expected = DVector::zeros(4);
        for model in &ensemble.models {
            expected += &model.coefficients.beta;
        }
        expected /= 5.0;
        assert_relative_eq!(
            (&ensemble.mean_model.beta - expected).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn identical_tasks_mean_equals_each() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let beta = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let base = synthetic_task("a", &mut rng, &beta, 50, 0.0);
        let mut twin = base.clone();
        twin.id = "b".to_string();
        let ensemble = fit_support(&[base, twin], &MetaConfig::default()).unwrap();
        assert_relative_eq!(
            (&ensemble.mean_model.beta - &ensemble.models[0].coefficients.beta).norm(),
            0.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn meta_feature_rows_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tasks: Vec<Task> = (0..4)
            .map(|i| {
                let beta = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
                synthetic_task(&format!("t{i}"), &mut rng, &beta, 40, 0.1)
            })
            .collect();
        let ensemble = fit_support(&tasks, &MetaConfig::default()).unwrap();
        let x_star = DMatrix::from_fn(7, 5, |_, _| rng.random_range(0..4) as f64);
        let meta = meta_features(&ensemble, &x_star).unwrap();
        for i in 0..7 {
            assert!(meta.matrix.row(i).sum().abs() <= 1e-10);
        }
    }

    #[test]
    fn single_task_meta_features_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let beta = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let task = synthetic_task("only", &mut rng, &beta, 30, 0.0);
        let ensemble = fit_support(std::slice::from_ref(&task), &MetaConfig::default()).unwrap();
        let x_star = DMatrix::from_fn(5, 3, |_, _| rng.random_range(0..4) as f64);
        let meta = meta_features(&ensemble, &x_star).unwrap();
        assert_relative_eq!(meta.matrix.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn opposite_pair_columns_mirror() {
        let beta = DVector::from_vec(vec![1.0, -0.5]);
        let x = DMatrix::from_fn(10, 2, |i, j| ((i + j) % 3) as f64);
        let y_pos = &x * &beta;
        let y_neg = &x * (-&beta);
        let t1 = dense_task("plus", x.clone(), y_pos);
        let t2 = dense_task("minus", x.clone(), y_neg);
        let config = MetaConfig {
            support_grid: vec![1e-9],
            ..MetaConfig::default()
        };
        let ensemble = fit_support(&[t1, t2], &config).unwrap();
        assert!(ensemble.mean_model.beta.norm() < 1e-6);
        let x_star = DMatrix::from_fn(4, 2, |i, j| ((2 * i + j) % 3) as f64);
        let meta = meta_features(&ensemble, &x_star).unwrap();
        let expected = &x_star * &ensemble.models[0].coefficients.beta;
        assert_relative_eq!(
            (meta.matrix.column(0) - &expected).norm(),
            0.0,
            epsilon = 1e-6
        );
        assert_relative_eq!(
            (meta.matrix.column(1) + expected).norm(),
            0.0,
            epsilon = 1e-6
        );
    }

    #[test]
    fn parallel_rejects_zero_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let beta = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let task = synthetic_task("t", &mut rng, &beta, 30, 0.1);
        let ensemble = fit_support(std::slice::from_ref(&task), &MetaConfig::default()).unwrap();
        let x_star = DMatrix::from_fn(5, 3, |_, _| rng.random_range(0..4) as f64);
        let meta = meta_features(&ensemble, &x_star).unwrap();
        let y = DVector::zeros(5);
        assert!(matches!(
            fit_parallel(&ensemble, &meta, &y, 0.0),
            Err(MetaError::NonPositiveParallelLambda(_))
        ));
    }

    #[test]
    fn large_parallel_lambda_returns_mean_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tasks: Vec<Task> = (0..3)
            .map(|i| {
                let beta = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
                synthetic_task(&format!("t{i}"), &mut rng, &beta, 40, 0.1)
            })
            .collect();
        let ensemble = fit_support(&tasks, &MetaConfig::default()).unwrap();
        let x_star = DMatrix::from_fn(8, 4, |_, _| rng.random_range(0..4) as f64);
        let meta = meta_features(&ensemble, &x_star).unwrap();
        // target equal to the mean prediction: c must vanish as lambda grows
        let y = meta.mean_prediction.clone();
        let parallel = fit_parallel(&ensemble, &meta, &y, 1e12).unwrap();
        assert!(parallel.mixing.norm() < 1e-6);
        assert_relative_eq!(
            (&parallel.beta_parallel.beta - &ensemble.mean_model.beta).norm(),
            0.0,
            epsilon = 1e-6
        );
    }

    #[test]
    fn parallel_beats_mean_when_target_is_support_task() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let betas: Vec<DVector<f64>> = (0..3)
            .map(|_| DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let tasks: Vec<Task> = betas
            .iter()
            .enumerate()
            .map(|(i, beta)| synthetic_task(&format!("t{i}"), &mut rng, beta, 80, 0.0))
            .collect();
        let config = MetaConfig {
            support_grid: vec![1e-9],
            ..MetaConfig::default()
        };
        let ensemble = fit_support(&tasks, &config).unwrap();
        let x_star = DMatrix::from_fn(30, 5, |_, _| rng.random_range(0..4) as f64);
        let y_star = &x_star * &betas[0];
        let meta = meta_features(&ensemble, &x_star).unwrap();
        let parallel = fit_parallel(&ensemble, &meta, &y_star, 1e-6).unwrap();
        let mse = |coef: &Coefficients| {
            let p = predict(&x_star, coef).unwrap();
            (p - &y_star).norm_squared() / y_star.len() as f64
        };
        assert!(mse(&parallel.beta_parallel) <= mse(&ensemble.mean_model));
    }

    #[test]
    fn perpendicular_zero_residuals_zero_beta() {
        let x = DMatrix::from_fn(6, 3, |i, j| ((i * j) % 4) as f64);
        let residuals = DVector::zeros(6);
        for lambda in [1e-6, 1.0, 1e3] {
            let coef = fit_perpendicular(&x, &residuals, lambda).unwrap();
            assert!(coef.beta.norm() < 1e-12);
            assert!(coef.intercept.abs() < 1e-12);
        }
    }

    #[test]
    fn perpendicular_reduces_training_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(20, 4, |_, _| rng.random_range(0..4) as f64);
        let residuals = DVector::from_fn(20, |_, _| rng.random_range(-1.0..1.0));
        let coef = fit_perpendicular(&x, &residuals, 1e-6).unwrap();
        let after = &residuals - predict(&x, &coef).unwrap();
        assert!(after.norm() <= residuals.norm());
    }

    #[test]
    fn decomposition_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let tasks: Vec<Task> = (0..4)
            .map(|i| {
                let beta = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
                synthetic_task(&format!("t{i}"), &mut rng, &beta, 50, 0.1)
            })
            .collect();
        let ensemble = fit_support(&tasks, &MetaConfig::default()).unwrap();
        let x_star = DMatrix::from_fn(12, 6, |_, _| rng.random_range(0..4) as f64);
        let y_star = DVector::from_fn(12, |_, _| rng.random_range(-2.0..2.0));
        let model = fit(&ensemble, &x_star, &y_star, &MetaConfig::default()).unwrap();
        assert_relative_eq!(
            (&model.beta_star.beta - &model.beta_parallel.beta - &model.beta_perp.beta).norm(),
            0.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            model.beta_star.intercept,
            model.beta_parallel.intercept + model.beta_perp.intercept,
            epsilon = 1e-15
        );
    }

    #[test]
    fn parallel_component_stays_in_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tasks: Vec<Task> = (0..5)
            .map(|i| {
                let beta = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
                synthetic_task(&format!("t{i}"), &mut rng, &beta, 60, 0.1)
            })
            .collect();
        let ensemble = fit_support(&tasks, &MetaConfig::default()).unwrap();
        let x_star = DMatrix::from_fn(15, 8, |_, _| rng.random_range(0..4) as f64);
        let y_star = DVector::from_fn(15, |_, _| rng.random_range(-2.0..2.0));
        let model = fit(&ensemble, &x_star, &y_star, &MetaConfig::default()).unwrap();
        let offset = &model.beta_parallel.beta - &ensemble.mean_model.beta;
        let residual = project_residual(&offset, &ensemble);
        let scale = offset.norm().max(1e-12);
        assert!(residual / scale <= 1e-8);
    }

    #[test]
    fn single_support_task_collapses_to_fit_with_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let beta = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
        let task = synthetic_task("only", &mut rng, &beta, 60, 0.05);
        let ensemble = fit_support(std::slice::from_ref(&task), &MetaConfig::default()).unwrap();
        let x_star = DMatrix::from_fn(10, 4, |_, _| rng.random_range(0..4) as f64);
        let y_star = DVector::from_fn(10, |_, _| rng.random_range(-2.0..2.0));
        let model = fit(&ensemble, &x_star, &y_star, &MetaConfig::default()).unwrap();

        let origin_fit = ridge_fit_with_origin(
            &x_star,
            &y_star,
            &ensemble.mean_model,
            &RidgeConfig::with_intercept(model.lambda_perp),
        )
        .unwrap();
        assert!((&model.beta_star.beta - &origin_fit.beta).norm() <= 1e-8);
        assert!((model.beta_star.intercept - origin_fit.intercept).abs() <= 1e-8);
    }

    #[test]
    fn predict_meta_matches_direct_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let tasks: Vec<Task> = (0..3)
            .map(|i| {
                let beta = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
                synthetic_task(&format!("t{i}"), &mut rng, &beta, 40, 0.1)
            })
            .collect();
        let ensemble = fit_support(&tasks, &MetaConfig::default()).unwrap();
        let x_star = DMatrix::from_fn(9, 5, |_, _| rng.random_range(0..4) as f64);
        let y_star = DVector::from_fn(9, |_, _| rng.random_range(-2.0..2.0));
        let model = fit(&ensemble, &x_star, &y_star, &MetaConfig::default()).unwrap();

        let direct = predict(&x_star, &model.beta_star).unwrap();
        let composed = predict(&x_star, &model.beta_parallel).unwrap()
            + predict(&x_star, &model.beta_perp).unwrap();
        assert_relative_eq!((direct.clone() - composed).norm(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(
            (predict_meta(&model, &x_star).unwrap() - direct).norm(),
            0.0,
            epsilon = 1e-15
        );

        let zero_row = DMatrix::zeros(1, 5);
        let at_zero = predict_meta(&model, &zero_row).unwrap();
        assert_relative_eq!(at_zero[0], model.beta_star.intercept, epsilon = 1e-15);
    }

    #[test]
    fn leakage_guard_fires_on_shared_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let beta = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        let support = synthetic_task("support", &mut rng, &beta, 10, 0.0);
        let mut target = synthetic_task("target", &mut rng, &beta, 10, 0.0);
        assert!(assert_no_leakage(&target, std::slice::from_ref(&support)).is_ok());
        // steal a sample id from the support task
        target.features = FeatureMatrix::new(
            target.features.rows(),
            target.features.cols(),
            target.features.entries().to_vec(),
            {
                let mut ids = target.features.row_ids().to_vec();
                ids[3] = support.features.row_ids()[5].clone();
                ids
            },
        );
        assert!(matches!(
            assert_no_leakage(&target, std::slice::from_ref(&support)),
            Err(MetaError::Leakage { .. })
        ));
    }

    #[test]
    fn model_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let tasks: Vec<Task> = (0..3)
            .map(|i| {
                let beta = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
                synthetic_task(&format!("t{i}"), &mut rng, &beta, 30, 0.1)
            })
            .collect();
        let ensemble = fit_support(&tasks, &MetaConfig::default()).unwrap();
        let x_star = DMatrix::from_fn(8, 4, |_, _| rng.random_range(0..4) as f64);
        let y_star = DVector::from_fn(8, |_, _| rng.random_range(-2.0..2.0));
        let model = fit(&ensemble, &x_star, &y_star, &MetaConfig::default()).unwrap();

        let mut buffer = Vec::new();
        write_meta_model(&mut buffer, &model).unwrap();
        let back = read_meta_model(buffer.as_slice()).unwrap();
        assert_eq!(back.task_ids, model.task_ids);
        assert_eq!(back.lambda_parallel, model.lambda_parallel);
        let p1 = predict_meta(&model, &x_star).unwrap();
        let p2 = predict_meta(&back, &x_star).unwrap();
        for i in 0..8 {
            assert_eq!(p1[i].to_bits(), p2[i].to_bits());
        }
    }

    #[test]
    fn perp_in_span_diagnostic_is_a_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let tasks: Vec<Task> = (0..3)
            .map(|i| {
                let beta = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
                synthetic_task(&format!("t{i}"), &mut rng, &beta, 40, 0.1)
            })
            .collect();
        let ensemble = fit_support(&tasks, &MetaConfig::default()).unwrap();
        let x_star = DMatrix::from_fn(9, 6, |_, _| rng.random_range(0..4) as f64);
        let y_star = DVector::from_fn(9, |_, _| rng.random_range(-2.0..2.0));
        let mut model = fit(&ensemble, &x_star, &y_star, &MetaConfig::default()).unwrap();
        let fraction = model.perp_in_span_fraction(&ensemble);
        assert!((0.0..=1.0 + 1e-12).contains(&fraction));

        // a perpendicular component built inside the span reports ~1
        model.beta_perp.beta =
            &ensemble.models[0].coefficients.beta - &ensemble.mean_model.beta;
        assert!(model.perp_in_span_fraction(&ensemble) > 1.0 - 1e-8);
        // and a zero component reports 0
        model.beta_perp.beta = DVector::zeros(6);
        assert_eq!(model.perp_in_span_fraction(&ensemble), 0.0);
    }

    #[test]
    fn model_version_checked_on_read() {
        let bad = r#"{"version":"lamel-model-v0","dim":1,"task_ids":[],"mixing":[],
            "lambda_parallel":1.0,"lambda_perp":1.0,
            "beta_parallel":{"intercept":0.0,"entries":[]},
            "beta_perp":{"intercept":0.0,"entries":[]},
            "beta_star":{"intercept":0.0,"entries":[]}}"#;
        assert!(matches!(
            read_meta_model(bad.as_bytes()),
            Err(MetaModelIoError::Version(v)) if v == "lamel-model-v0"
        ));
    }

    #[test]
    fn deterministic_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let tasks: Vec<Task> = (0..4)
            .map(|i| {
                let beta = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
                synthetic_task(&format!("t{i}"), &mut rng, &beta, 30, 0.1)
            })
            .collect();
        let x_star = DMatrix::from_fn(10, 5, |_, _| rng.random_range(0..4) as f64);
        let y_star = DVector::from_fn(10, |_, _| rng.random_range(-2.0..2.0));

        let run = || {
            let ensemble = fit_support(&tasks, &MetaConfig::default()).unwrap();
            let model = fit(&ensemble, &x_star, &y_star, &MetaConfig::default()).unwrap();
            predict_meta(&model, &x_star).unwrap()
        };
        let a = run();
        let b = run();
        for i in 0..10 {
            assert_eq!(a[i].to_bits(), b[i].to_bits());
        }
    }
}
