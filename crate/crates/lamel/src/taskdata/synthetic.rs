//! Synthetic task generator: support-task coefficients live on a shared
//! low-rank subspace, the target either inside it or orthogonal to it.
//! Stands in for external datasets in tests and benchmarks.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::graphlets::{FeatureMatrix, SparseEntry};
use crate::meta::Task;

use super::TaskDataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    /// Target coefficients drawn inside the shared subspace.
    InSpan,
    /// Target coefficients orthogonal to the shared subspace and to the
    /// all-ones direction, the negative-transfer regime. Count features have
    /// a positive mean, so without the second condition the target labels
    /// would still share an offset with the support predictions and the
    /// tasks would not be functionally unrelated.
    OrthogonalToSpan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_features: usize,
    pub n_tasks: usize,
    pub subspace_rank: usize,
    /// label noise standard deviation
    pub noise: f64,
    pub rows_per_task: usize,
    pub target_rows: usize,
    pub target_mode: TargetMode,
    /// scale of the task-coefficient cloud around its (zero) mean; zero makes
    /// every support task identical
    pub coefficient_spread: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), TaskDataError> {
        let bad = |what: &str| Err(TaskDataError::InvalidSyntheticSpec(what.to_string()));
        if self.n_features == 0 || self.rows_per_task == 0 || self.target_rows == 0 {
            return bad("zero dimension");
        }
        if self.n_tasks == 0 {
            return bad("zero tasks");
        }
        if self.subspace_rank == 0
            || self.subspace_rank > self.n_tasks
            || self.subspace_rank > self.n_features
        {
            return bad("rank must satisfy 1 <= r <= min(T, V)");
        }
        Ok(())
    }
}

/// Everything the generator knows, kept for oracle checks in tests.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub support_tasks: Vec<Task>,
    pub target_task: Task,
    /// V-by-r orthonormal basis of the shared subspace
    pub basis: DMatrix<f64>,
    pub support_betas: Vec<DVector<f64>>,
    pub target_beta: DVector<f64>,
}

fn count_features(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    id_prefix: &str,
) -> FeatureMatrix {
    // Poisson counts mimic fingerprint sparsity while keeping entries integer.
    let poisson = Poisson::new(1.5).unwrap();
    let mut entries = Vec::new();
    for row in 0..rows {
        for col in 0..cols {
            let count = poisson.sample(rng) as u64;
            if count > 0 {
                entries.push(SparseEntry { row, col, count });
            }
        }
    }
    let ids = (0..rows).map(|r| format!("{id_prefix}:{r}")).collect();
    FeatureMatrix::new(rows, cols, entries, ids)
}

fn labels_for(
    rng: &mut ChaCha8Rng,
    features: &FeatureMatrix,
    beta: &DVector<f64>,
    noise: f64,
) -> Vec<f64> {
    let x = features.to_dense();
    let clean = x * beta;
    clean
        .iter()
        .map(|&y| {
            let eps: f64 = StandardNormal.sample(rng);
            y + noise * eps
        })
        .collect()
}

/// Generates support tasks with coefficients `beta_tau = B a_tau` on a shared
/// orthonormal basis `B`, plus one target task per `target_mode`. The
/// coefficient cloud `{a_tau}` is centered for two or more tasks, so the
/// true task mean sits at the subspace origin.
pub fn generate_synthetic_tasks(spec: &SyntheticSpec) -> Result<SyntheticDataset, TaskDataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let v = spec.n_features;
    let r = spec.subspace_rank;
    let t = spec.n_tasks;

    let gaussian = DMatrix::from_fn(v, r, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z
    });
    let basis = gaussian.qr().q();

    let mut mixes: Vec<DVector<f64>> = (0..t)
        .map(|_| {
            DVector::from_fn(r, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * spec.coefficient_spread
            })
        })
        .collect();
    if t >= 2 {
        let mut mean = DVector::zeros(r);
        for a in &mixes {
            mean += a;
        }
        mean /= t as f64;
        for a in &mut mixes {
            *a -= &mean;
        }
    }
    let support_betas: Vec<DVector<f64>> = mixes.iter().map(|a| &basis * a).collect();

    let target_beta = match spec.target_mode {
        TargetMode::InSpan => {
            let a = DVector::from_fn(r, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            });
            &basis * a
        }
        TargetMode::OrthogonalToSpan => {
            let g = DVector::from_fn(v, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            });
            let mut orth = &g - &basis * (basis.transpose() * &g);
            let ones = DVector::from_element(v, 1.0);
            let ones_residual = &ones - &basis * (basis.transpose() * &ones);
            if ones_residual.norm() > 1e-12 {
                let unit = &ones_residual / ones_residual.norm();
                orth -= &unit * unit.dot(&orth);
            }
            let norm = orth.norm();
            if norm > 0.0 {
                // scale to the expected in-span target norm, sqrt(r)
                orth *= (r as f64).sqrt() / norm;
            }
            orth
        }
    };

    let mut support_tasks = Vec::with_capacity(t);
    for (tau, beta) in support_betas.iter().enumerate() {
        let id = format!("syn{tau}");
        let features = count_features(&mut rng, spec.rows_per_task, v, &id);
        let labels = labels_for(&mut rng, &features, beta, spec.noise);
        support_tasks.push(Task::new(id, features, labels)?);
    }
    let target_features = count_features(&mut rng, spec.target_rows, v, "target");
    let target_labels = labels_for(&mut rng, &target_features, &target_beta, spec.noise);
    let target_task = Task::new("target", target_features, target_labels)?;

    Ok(SyntheticDataset {
        support_tasks,
        target_task,
        basis,
        support_betas,
        target_beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::{ridge_fit, RidgeConfig};

    fn base_spec() -> SyntheticSpec {
        SyntheticSpec {
            n_features: 12,
            n_tasks: 4,
            subspace_rank: 2,
            noise: 0.0,
            rows_per_task: 400,
            target_rows: 50,
            target_mode: TargetMode::InSpan,
            coefficient_spread: 1.0,
            seed: 7,
        }
    }

    #[test]
    fn noiseless_ridge_recovers_task_coefficients() {
        let data = generate_synthetic_tasks(&base_spec()).unwrap();
        for (task, beta) in data.support_tasks.iter().zip(&data.support_betas) {
            let x = task.features.to_dense();
            let fitted = ridge_fit(&x, &task.labels, &RidgeConfig::plain(1e-10)).unwrap();
            assert!(
                (&fitted.beta - beta).norm() < 1e-6,
                "recovery failed for {}",
                task.id
            );
        }
    }

    #[test]
    fn zero_spread_makes_tasks_identical() {
        let spec = SyntheticSpec {
            coefficient_spread: 0.0,
            subspace_rank: 1,
            ..base_spec()
        };
        let data = generate_synthetic_tasks(&spec).unwrap();
        for beta in &data.support_betas {
            assert_eq!(beta, &data.support_betas[0]);
        }
    }

    #[test]
    fn orthogonal_target_is_orthogonal_to_basis_and_ones() {
        let spec = SyntheticSpec {
            target_mode: TargetMode::OrthogonalToSpan,
            ..base_spec()
        };
        let data = generate_synthetic_tasks(&spec).unwrap();
        let projection = data.basis.transpose() * &data.target_beta;
        assert!(projection.norm() < 1e-10);
        assert!(data.target_beta.sum().abs() < 1e-10);
        assert!((data.target_beta.norm() - (2.0f64).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn in_span_target_lies_in_basis() {
        let data = generate_synthetic_tasks(&base_spec()).unwrap();
        let reconstructed = &data.basis * (data.basis.transpose() * &data.target_beta);
        assert!((reconstructed - &data.target_beta).norm() < 1e-10);
    }

    #[test]
    fn deterministic_per_seed_and_unique_ids() {
        let a = generate_synthetic_tasks(&base_spec()).unwrap();
        let b = generate_synthetic_tasks(&base_spec()).unwrap();
        assert_eq!(a.target_task.labels, b.target_task.labels);
        assert_eq!(
            a.support_tasks[1].features.entries(),
            b.support_tasks[1].features.entries()
        );
        let mut ids: Vec<&String> = a
            .support_tasks
            .iter()
            .flat_map(|t| t.features.row_ids().iter())
            .chain(a.target_task.features.row_ids().iter())
            .collect();
        let before = ids.len();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), before);
    }

    #[test]
    fn invalid_shapes_rejected() {
        let mut spec = base_spec();
        spec.subspace_rank = 9;
        assert!(generate_synthetic_tasks(&spec).is_err());
        spec.subspace_rank = 2;
        spec.n_features = 0;
        assert!(generate_synthetic_tasks(&spec).is_err());
    }

    #[test]
    fn support_coefficient_cloud_is_centered() {
        let data = generate_synthetic_tasks(&base_spec()).unwrap();
        let mut mean = DVector::zeros(12);
        for beta in &data.support_betas {
            mean += beta;
        }
        mean /= data.support_betas.len() as f64;
        assert!(mean.norm() < 1e-12);
    }
}
