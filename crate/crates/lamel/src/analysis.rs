//! Metrics and task-similarity analysis: MAE, R², relative improvement,
//! cosine similarity, and the fingerprint-versus-regression-vector
//! similarity study with its Pearson correlation.

use nalgebra::DVector;
use thiserror::Error;

use crate::graphlets::GraphletFingerprint;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("zero-variance ground truth; R^2 undefined")]
    ZeroVariance,
    #[error("zero vector; cosine undefined")]
    ZeroVector,
    #[error("meta MAE is zero; relative improvement undefined")]
    ZeroMae,
    #[error("need at least {0} tasks")]
    TooFewTasks(usize),
    #[error("degenerate similarity values; correlation undefined")]
    DegenerateCorrelation,
    #[error("no fingerprint for task {0:?}")]
    MissingFingerprint(String),
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64, AnalysisError> {
    if y_true.len() != y_pred.len() {
        return Err(AnalysisError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(AnalysisError::Empty);
    }
    Ok(y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p).abs())
        .sum::<f64>()
        / y_true.len() as f64)
}

pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64, AnalysisError> {
    if y_true.len() != y_pred.len() {
        return Err(AnalysisError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Percent MAE improvement of the meta model over the baseline:
/// `100 * (mae_regular - mae_meta) / mae_meta`. Negative values mean
/// negative transfer.
pub fn relative_improvement(mae_regular: f64, mae_meta: f64) -> Result<f64, AnalysisError> {
    if mae_meta <= 0.0 {
        return Err(AnalysisError::ZeroMae);
    }
    Ok(100.0 * (mae_regular - mae_meta) / mae_meta)
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, AnalysisError> {
    if u.len() != v.len() {
        return Err(AnalysisError::LengthMismatch(u.len(), v.len()));
    }
    if u.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(AnalysisError::ZeroVector);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(AnalysisError::Empty);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sx == 0.0 || sy == 0.0 {
        return Err(AnalysisError::DegenerateCorrelation);
    }
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(cov / (sx.sqrt() * sy.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityKind {
    Fingerprint,
    RegressionVector,
}

/// Symmetric matrix of pairwise cosine similarities with task ids attached.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub kind: SimilarityKind,
}

impl SimilarityMatrix {
    // symmetric fill needs values[i][j] and values[j][i] at once
    #[allow(clippy::needless_range_loop)]
    fn from_pairwise<F>(
        ids: Vec<String>,
        kind: SimilarityKind,
        mut pair: F,
    ) -> Result<Self, AnalysisError>
    where
        F: FnMut(usize, usize) -> Result<f64, AnalysisError>,
    {
        let n = ids.len();
        let mut values = vec![vec![0.0; n]; n];
        for (i, row) in values.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let s = pair(i, j)?;
                values[i][j] = s;
                values[j][i] = s;
            }
        }
        let matrix = SimilarityMatrix { ids, values, kind };
        matrix.check_invariants();
        Ok(matrix)
    }

    fn check_invariants(&self) {
        let n = self.ids.len();
        for i in 0..n {
            assert_eq!(self.values[i][i], 1.0);
            for j in 0..n {
                assert!(self.values[i][j] >= -1.0 && self.values[i][j] <= 1.0);
                assert_eq!(self.values[i][j], self.values[j][i]);
            }
        }
    }

    /// Upper-triangle entries (i < j) with their id pairs.
    pub fn pairs(&self) -> Vec<(String, String, f64)> {
        let n = self.ids.len();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push((self.ids[i].clone(), self.ids[j].clone(), self.values[i][j]));
            }
        }
        out
    }
}

/// One task's inputs to the similarity study: the task molecule's own
/// fingerprint and the coefficients of its individually fitted ridge model
/// (intercept excluded; coefficients in the shared vocabulary basis).
#[derive(Debug, Clone)]
pub struct SimilarityEntry {
    pub id: String,
    pub fingerprint: GraphletFingerprint,
    pub regression_vector: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct SimilarityStudy {
    pub fingerprint_matrix: SimilarityMatrix,
    pub regression_matrix: SimilarityMatrix,
    /// Pearson correlation between the two similarity measures over unique
    /// pairs
    pub pearson_r: f64,
    /// (pair ids, fingerprint similarity, regression similarity)
    pub pairs: Vec<(String, String, f64, f64)>,
}

/// Correlates structural similarity (cosine between task-molecule
/// fingerprints) with functional similarity (cosine between per-task
/// regression vectors) over unique task pairs.
pub fn similarity_study(entries: &[SimilarityEntry]) -> Result<SimilarityStudy, AnalysisError> {
    if entries.len() < 3 {
        return Err(AnalysisError::TooFewTasks(3));
    }
    let ids: Vec<String> = entries.iter().map(|e| e.id.clone()).collect();
    let fingerprint_matrix =
        SimilarityMatrix::from_pairwise(ids.clone(), SimilarityKind::Fingerprint, |i, j| {
            entries[i]
                .fingerprint
                .cosine(&entries[j].fingerprint)
                .ok_or(AnalysisError::ZeroVector)
        })?;
    let regression_matrix =
        SimilarityMatrix::from_pairwise(ids, SimilarityKind::RegressionVector, |i, j| {
            cosine_similarity(
                entries[i].regression_vector.as_slice(),
                entries[j].regression_vector.as_slice(),
            )
        })?;

    let fp_pairs = fingerprint_matrix.pairs();
    let reg_pairs = regression_matrix.pairs();
    let fp_values: Vec<f64> = fp_pairs.iter().map(|&(_, _, v)| v).collect();
    let reg_values: Vec<f64> = reg_pairs.iter().map(|&(_, _, v)| v).collect();
    let pearson_r = pearson(&fp_values, &reg_values)?;

    let pairs = fp_pairs
        .into_iter()
        .zip(reg_values)
        .map(|((a, b, fp), reg)| (a, b, fp, reg))
        .collect();
    Ok(SimilarityStudy {
        fingerprint_matrix,
        regression_matrix,
        pearson_r,
        pairs,
    })
}

/// Slope and intercept of the least-squares line through the similarity
/// scatter, for plot emission.
pub fn scatter_fit_line(pairs: &[(String, String, f64, f64)]) -> Option<(f64, f64)> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.2).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.3).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.2 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pairs.iter().map(|p| (p.2 - mx) * (p.3 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphlets::enumerate_graphlets;
    use crate::molgraph::parse_smiles;
    use approx::assert_relative_eq;

    #[test]
    fn perfect_prediction() {
        let y = [1.0, 2.0, 3.0];
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn mean_prediction_gives_zero_r2() {
        let y = [1.0, 2.0, 3.0];
        let mean = [2.0, 2.0, 2.0];
        assert_relative_eq!(r2(&y, &mean).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mae_basic() {
        assert_eq!(mae(&[0.0, 2.0], &[1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn r2_zero_variance_signaled() {
        assert_eq!(
            r2(&[1.0, 1.0], &[1.0, 2.0]),
            Err(AnalysisError::ZeroVariance)
        );
    }

    #[test]
    fn relative_improvement_formula() {
        assert_relative_eq!(
            relative_improvement(1.2, 1.0).unwrap(),
            20.0,
            epsilon = 1e-12
        );
        assert_eq!(relative_improvement(1.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(
            relative_improvement(0.9, 1.0).unwrap(),
            -10.0,
            epsilon = 1e-12
        );
        assert_eq!(relative_improvement(1.0, 0.0), Err(AnalysisError::ZeroMae));
    }

    #[test]
    fn improvement_sign_matches_difference() {
        for (regular, meta) in [(2.0, 1.0), (1.0, 2.0), (1.5, 1.5), (0.1, 3.0)] {
            let sign = relative_improvement(regular, meta).unwrap().signum();
            let expected = (regular - meta).signum();
            if regular != meta {
                assert_eq!(sign, expected);
            }
        }
    }

    #[test]
    fn cosine_basics() {
        let v = [1.0, 2.0, 3.0];
        assert_relative_eq!(cosine_similarity(&v, &v).unwrap(), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert_relative_eq!(cosine_similarity(&v, &neg).unwrap(), -1.0, epsilon = 1e-12);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(AnalysisError::ZeroVector)
        );
    }

    #[test]
    fn cosine_scale_invariant() {
        let u = [0.3, -1.2, 2.0];
        let v = [1.0, 0.4, -0.2];
        let base = cosine_similarity(&u, &v).unwrap();
        let scaled: Vec<f64> = u.iter().map(|x| 7.5 * x).collect();
        assert_relative_eq!(
            cosine_similarity(&scaled, &v).unwrap(),
            base,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pearson_affine_invariant() {
        let x = [0.1, 0.5, 0.9, 0.2, 0.7];
        let y = [1.0, 2.2, 2.9, 1.4, 2.5];
        let base = pearson(&x, &y).unwrap();
        let rescaled: Vec<f64> = x.iter().map(|v| 3.0 * v + 11.0).collect();
        assert_relative_eq!(pearson(&rescaled, &y).unwrap(), base, epsilon = 1e-12);
    }

    fn entry(id: &str, smiles: &str, coefficients: Vec<f64>) -> SimilarityEntry {
        let graph = parse_smiles(smiles, true).unwrap();
        SimilarityEntry {
            id: id.to_string(),
            fingerprint: enumerate_graphlets(&graph, 3).unwrap(),
            regression_vector: DVector::from_vec(coefficients),
        }
    }

    #[test]
    fn study_produces_symmetric_bounded_matrices() {
        let entries = vec![
            entry("water", "O", vec![1.0, 0.2, -0.3]),
            entry("ethanol", "CCO", vec![0.8, 0.4, -0.1]),
            entry("benzene", "c1ccccc1", vec![-0.5, 1.0, 0.6]),
            entry("acetone", "CC(=O)C", vec![0.7, 0.5, 0.0]),
        ];
        let study = similarity_study(&entries).unwrap();
        assert_eq!(study.pairs.len(), 6);
        assert!(study.pearson_r.abs() <= 1.0);
        // invariants are asserted internally; spot-check symmetry
        assert_eq!(
            study.fingerprint_matrix.values[0][2],
            study.fingerprint_matrix.values[2][0]
        );
    }

    #[test]
    fn identical_tasks_degenerate_correlation_signaled() {
        let entries = vec![
            entry("a", "CCO", vec![1.0, 2.0]),
            entry("b", "CCO", vec![1.0, 2.0]),
            entry("c", "CCO", vec![1.0, 2.0]),
        ];
        assert!(matches!(
            similarity_study(&entries),
            Err(AnalysisError::DegenerateCorrelation)
        ));
    }

    #[test]
    fn too_few_tasks_rejected() {
        let entries = vec![entry("a", "CCO", vec![1.0]), entry("b", "CC", vec![0.5])];
        assert!(matches!(
            similarity_study(&entries),
            Err(AnalysisError::TooFewTasks(3))
        ));
    }

    #[test]
    fn fit_line_recovers_exact_affine_relation() {
        let pairs: Vec<(String, String, f64, f64)> = (0..5)
            .map(|i| {
                let x = i as f64 * 0.2;
                (format!("a{i}"), format!("b{i}"), x, 2.0 * x + 0.5)
            })
            .collect();
        let (slope, intercept) = scatter_fit_line(&pairs).unwrap();
        assert_relative_eq!(slope, 2.0, epsilon = 1e-12);
        assert_relative_eq!(intercept, 0.5, epsilon = 1e-12);
    }
}
