//! Ridge regression: closed-form solves on either the feature-space normal
//! equations or the sample-space dual, a shifted regularization center for
//! fitting toward a prior, and cross-validated regularization selection.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinModelError {
    #[error("{what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("empty problem: no samples")]
    EmptySamples,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("negative regularization strength {0}")]
    NegativeLambda(f64),
    #[error("rank-deficient design with lambda = 0")]
    RankDeficient,
    #[error("matrix factorization failed")]
    Factorization,
    #[error("{samples} samples are too few for {folds}-fold cross-validation")]
    TooFewSamples { samples: usize, folds: usize },
    #[error("empty lambda grid")]
    EmptyGrid,
}

/// Fitted linear model: per-feature weights plus an unpenalized intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub beta: DVector<f64>,
    pub intercept: f64,
}

impl Coefficients {
    pub fn zeros(dim: usize) -> Self {
        Coefficients {
            beta: DVector::zeros(dim),
            intercept: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }
}

/// What to do when lambda is zero and the design is rank-deficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SingularPolicy {
    /// Take the minimum-norm least-squares solution and log a warning.
    #[default]
    MinimumNorm,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeConfig {
    pub lambda: f64,
    pub fit_intercept: bool,
    /// Scale columns to unit sample standard deviation before fitting.
    /// Off by default: graphlet counts share one natural scale.
    pub standardize: bool,
    pub on_singular: SingularPolicy,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig {
            lambda: 1.0,
            fit_intercept: true,
            standardize: false,
            on_singular: SingularPolicy::default(),
        }
    }
}

impl RidgeConfig {
    pub fn plain(lambda: f64) -> Self {
        RidgeConfig {
            lambda,
            fit_intercept: false,
            ..RidgeConfig::default()
        }
    }

    pub fn with_intercept(lambda: f64) -> Self {
        RidgeConfig {
            lambda,
            fit_intercept: true,
            ..RidgeConfig::default()
        }
    }
}

fn check_inputs(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(), LinModelError> {
    if x.nrows() == 0 {
        return Err(LinModelError::EmptySamples);
    }
    if x.nrows() != y.len() {
        return Err(LinModelError::DimensionMismatch {
            what: "label count",
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(LinModelError::NonFinite);
    }
    Ok(())
}

/// Minimizes `||X b - y||^2 + lambda ||b||^2` in closed form.
///
/// With `fit_intercept`, columns and labels are centered first and the
/// intercept recovers the means; the intercept itself is never penalized.
pub fn ridge_fit(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    config: &RidgeConfig,
) -> Result<Coefficients, LinModelError> {
    check_inputs(x, y)?;
    if config.lambda < 0.0 || !config.lambda.is_finite() {
        return Err(LinModelError::NegativeLambda(config.lambda));
    }

    let n = x.nrows();
    let v = x.ncols();

    let (mut xc, mut yc) = (x.clone(), y.clone());
    let mut x_means = DVector::zeros(v);
    let mut y_mean = 0.0;
    if config.fit_intercept {
        y_mean = yc.mean();
        yc.add_scalar_mut(-y_mean);
        for j in 0..v {
            let mean = xc.column(j).mean();
            x_means[j] = mean;
            for i in 0..n {
                xc[(i, j)] -= mean;
            }
        }
    }

    let mut scales = DVector::from_element(v, 1.0);
    if config.standardize {
        for j in 0..v {
            let col = xc.column(j);
            let mean = col.mean();
            let var = col.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
                / (n.saturating_sub(1).max(1)) as f64;
            let sd = var.sqrt();
            if sd > 0.0 {
                scales[j] = sd;
                for i in 0..n {
                    xc[(i, j)] /= sd;
                }
            }
        }
    }

    let mut beta = solve_ridge(&xc, &yc, config.lambda, config.on_singular)?;
    for j in 0..v {
        beta[j] /= scales[j];
    }

    let intercept = if config.fit_intercept {
        y_mean - x_means.dot(&beta)
    } else {
        0.0
    };
    Ok(Coefficients { beta, intercept })
}

/// Core solve on already-centered data. Shape picks the factorization: the
/// feature-space normal equations when V is comparable to n, otherwise the
/// n-by-n dual form, which is what makes fingerprint dimensions far above
/// the sample count affordable.
fn solve_ridge(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    on_singular: SingularPolicy,
) -> Result<DVector<f64>, LinModelError> {
    let n = x.nrows();
    let v = x.ncols();
    if v == 0 {
        return Ok(DVector::zeros(0));
    }

    if lambda > 0.0 {
        if v <= 4 * n {
            let mut gram = x.transpose() * x;
            for j in 0..v {
                gram[(j, j)] += lambda;
            }
            let rhs = x.transpose() * y;
            if let Some(chol) = gram.clone().cholesky() {
                return Ok(chol.solve(&rhs));
            }
        } else {
            let mut kernel = x * x.transpose();
            for i in 0..n {
                kernel[(i, i)] += lambda;
            }
            if let Some(chol) = kernel.cholesky() {
                let alpha = chol.solve(y);
                return Ok(x.transpose() * alpha);
            }
        }
        // Cholesky lost positive definiteness numerically; the SVD route
        // computes the same estimator.
        return svd_ridge(x, y, lambda, on_singular);
    }

    svd_ridge(x, y, lambda, on_singular)
}

/// Ridge (or, at lambda = 0, minimum-norm least squares) through the SVD of X.
fn svd_ridge(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    on_singular: SingularPolicy,
) -> Result<DVector<f64>, LinModelError> {
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().ok_or(LinModelError::Factorization)?;
    let vt = svd.v_t.as_ref().ok_or(LinModelError::Factorization)?;
    let singular = &svd.singular_values;

    let tolerance = singular.max() * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON;
    if lambda == 0.0 {
        let rank = singular.iter().filter(|&&s| s > tolerance).count();
        if rank < x.ncols() {
            match on_singular {
                SingularPolicy::Error => return Err(LinModelError::RankDeficient),
                SingularPolicy::MinimumNorm => {
                    log::warn!(
                        "rank-deficient design ({} of {} columns) at lambda = 0; \
                         returning the minimum-norm solution",
                        rank,
                        x.ncols()
                    );
                }
            }
        }
    }

    let uty = u.transpose() * y;
    let mut shrunk = DVector::zeros(singular.len());
    for i in 0..singular.len() {
        let s = singular[i];
        if lambda == 0.0 {
            if s > tolerance {
                shrunk[i] = uty[i] / s;
            }
        } else {
            shrunk[i] = s * uty[i] / (s * s + lambda);
        }
    }
    Ok(vt.transpose() * shrunk)
}

/// Ridge fit that penalizes distance to `origin` instead of to zero:
/// equivalent to `origin + ridge_fit(X, y - X*origin)`.
pub fn ridge_fit_with_origin(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    origin: &Coefficients,
    config: &RidgeConfig,
) -> Result<Coefficients, LinModelError> {
    if origin.dim() != x.ncols() {
        return Err(LinModelError::DimensionMismatch {
            what: "origin length",
            expected: x.ncols(),
            actual: origin.dim(),
        });
    }
    let shifted = y - x * &origin.beta - DVector::from_element(y.len(), origin.intercept);
    let residual_fit = ridge_fit(x, &shifted, config)?;
    Ok(Coefficients {
        beta: &origin.beta + residual_fit.beta,
        intercept: origin.intercept + residual_fit.intercept,
    })
}

pub fn predict(x: &DMatrix<f64>, coef: &Coefficients) -> Result<DVector<f64>, LinModelError> {
    if x.ncols() != coef.dim() {
        return Err(LinModelError::DimensionMismatch {
            what: "feature count",
            expected: coef.dim(),
            actual: x.ncols(),
        });
    }
    let mut out = x * &coef.beta;
    out.add_scalar_mut(coef.intercept);
    Ok(out)
}

/// Relative residual of the normal equations `(X'X + lambda I) b = X'y`,
/// evaluated on centered data when the fit used an intercept.
pub fn normal_equation_residual(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    coef: &Coefficients,
    config: &RidgeConfig,
) -> f64 {
    let (mut xc, mut yc) = (x.clone(), y.clone());
    if config.fit_intercept {
        let y_mean = yc.mean();
        yc.add_scalar_mut(-y_mean);
        for j in 0..xc.ncols() {
            let mean = xc.column(j).mean();
            for i in 0..xc.nrows() {
                xc[(i, j)] -= mean;
            }
        }
    }
    let rhs = xc.transpose() * &yc;
    let lhs = xc.transpose() * (&xc * &coef.beta) + config.lambda * &coef.beta;
    let denom = rhs.norm();
    if denom == 0.0 {
        (lhs - rhs).norm()
    } else {
        (lhs - rhs).norm() / denom
    }
}

/// Cross-validation layout for [`select_lambda`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvPolicy {
    KFold(usize),
    LeaveOneOut,
}

/// Leave-one-out below 30 samples, where k-fold loses too much training
/// data; 5-fold otherwise.
pub fn default_cv_policy(samples: usize) -> CvPolicy {
    if samples < 30 {
        CvPolicy::LeaveOneOut
    } else {
        CvPolicy::KFold(5)
    }
}

/// Thirteen log-spaced points, 1e-6 through 1e6.
pub fn default_lambda_grid() -> Vec<f64> {
    (-6..=6).map(|e| 10f64.powi(e)).collect()
}

/// How to read the cross-validation curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionRule {
    /// The lambda with the smallest mean CV error; ties toward larger lambda.
    #[default]
    MinMse,
    /// The largest lambda whose mean CV error stays within one standard
    /// error of the minimum. Protects tiny-sample selections from spurious
    /// CV minima at the cost of extra shrinkage.
    OneStdError,
}

/// One grid point of a cross-validation sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaScore {
    pub lambda: f64,
    /// mean over folds of the fold mean squared error
    pub mean_mse: f64,
    /// standard error of that mean across folds
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub scores: Vec<LambdaScore>,
}

/// Cross-validates every grid lambda and picks one per `rule`. Exact ties
/// break toward the larger lambda.
pub fn select_lambda(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    grid: &[f64],
    cv: CvPolicy,
    seed: u64,
    base: &RidgeConfig,
    rule: SelectionRule,
) -> Result<LambdaSelection, LinModelError> {
    check_inputs(x, y)?;
    if grid.is_empty() {
        return Err(LinModelError::EmptyGrid);
    }
    let n = x.nrows();
    let folds = match cv {
        CvPolicy::LeaveOneOut => n,
        CvPolicy::KFold(k) => k,
    };
    if folds < 2 || n < folds {
        return Err(LinModelError::TooFewSamples { samples: n, folds });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    // fold f takes every folds-th index from the shuffled order
    let assignments: Vec<Vec<usize>> = (0..folds)
        .map(|f| order.iter().copied().skip(f).step_by(folds).collect())
        .collect();

    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(LinModelError::NegativeLambda(lambda));
        }
        let mut fold_means = Vec::with_capacity(folds);
        for held_out in &assignments {
            let train: Vec<usize> = (0..n).filter(|i| !held_out.contains(i)).collect();
            let x_train = x.select_rows(train.iter());
            let y_train = y.select_rows(train.iter());
            let config = RidgeConfig {
                lambda,
                ..base.clone()
            };
            let coef = ridge_fit(&x_train, &y_train, &config)?;
            let x_test = x.select_rows(held_out.iter());
            let predictions = predict(&x_test, &coef)?;
            let mut squared_error = 0.0;
            for (pos, &i) in held_out.iter().enumerate() {
                squared_error += (predictions[pos] - y[i]).powi(2);
            }
            fold_means.push(squared_error / held_out.len() as f64);
        }
        let k = fold_means.len() as f64;
        let mean_mse = fold_means.iter().sum::<f64>() / k;
        let se = if fold_means.len() < 2 {
            0.0
        } else {
            let var = fold_means
                .iter()
                .map(|m| (m - mean_mse).powi(2))
                .sum::<f64>()
                / (k - 1.0);
            (var / k).sqrt()
        };
        scores.push(LambdaScore {
            lambda,
            mean_mse,
            se,
        });
    }

    let mut best = scores[0];
    for &score in &scores[1..] {
        if score.mean_mse < best.mean_mse
            || (score.mean_mse == best.mean_mse && score.lambda > best.lambda)
        {
            best = score;
        }
    }
    let lambda = match rule {
        SelectionRule::MinMse => best.lambda,
        SelectionRule::OneStdError => {
            let threshold = best.mean_mse + best.se;
            scores
                .iter()
                .filter(|s| s.mean_mse <= threshold)
                .map(|s| s.lambda)
                .fold(best.lambda, f64::max)
        }
    };
    Ok(LambdaSelection { lambda, scores })
}

/// Selection with the default fold policy and a fallback for degenerate
/// sample counts: below two samples no cross-validation is possible and the
/// strongest grid value wins.
pub fn choose_lambda(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    grid: &[f64],
    seed: u64,
    base: &RidgeConfig,
    rule: SelectionRule,
) -> Result<f64, LinModelError> {
    if grid.is_empty() {
        return Err(LinModelError::EmptyGrid);
    }
    if x.nrows() < 2 {
        let max = grid.iter().cloned().fold(f64::MIN, f64::max);
        return Ok(max);
    }
    let cv = match default_cv_policy(x.nrows()) {
        CvPolicy::KFold(k) if x.nrows() < k => CvPolicy::LeaveOneOut,
        policy => policy,
    };
    Ok(select_lambda(x, y, grid, cv, seed, base, rule)?.lambda)
}

/// Writes coefficients as sparse `index value` lines behind `dim` and
/// `intercept` headers. Values use shortest round-trip formatting, so a
/// read-back is bit-exact.
pub fn write_coefficients<W: std::io::Write>(
    out: &mut W,
    coef: &Coefficients,
) -> std::io::Result<()> {
    writeln!(out, "dim {}", coef.dim())?;
    writeln!(out, "intercept {}", coef.intercept)?;
    for (i, &value) in coef.beta.iter().enumerate() {
        if value != 0.0 {
            writeln!(out, "{} {}", i, value)?;
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum CoefficientsIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {0}: malformed coefficients file")]
    Malformed(usize),
}

pub fn read_coefficients<R: std::io::BufRead>(
    input: R,
) -> Result<Coefficients, CoefficientsIoError> {
    let mut dim: Option<usize> = None;
    let mut intercept = 0.0;
    let mut pairs: Vec<(usize, f64)> = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (head, tail) = line
            .split_once(' ')
            .ok_or(CoefficientsIoError::Malformed(lineno + 1))?;
        match head {
            "dim" => {
                dim = Some(
                    tail.parse()
                        .map_err(|_| CoefficientsIoError::Malformed(lineno + 1))?,
                )
            }
            "intercept" => {
                intercept = tail
                    .parse()
                    .map_err(|_| CoefficientsIoError::Malformed(lineno + 1))?
            }
            index => {
                let index: usize = index
                    .parse()
                    .map_err(|_| CoefficientsIoError::Malformed(lineno + 1))?;
                let value: f64 = tail
                    .parse()
                    .map_err(|_| CoefficientsIoError::Malformed(lineno + 1))?;
                pairs.push((index, value));
            }
        }
    }
    let dim = dim.ok_or(CoefficientsIoError::Malformed(0))?;
    let mut beta = DVector::zeros(dim);
    for (index, value) in pairs {
        if index >= dim {
            return Err(CoefficientsIoError::Malformed(0));
        }
        beta[index] = value;
    }
    Ok(Coefficients { beta, intercept })
}
