//! Variable screening on the in-half of a sample split: Lasso with
//! cross-validated regularization, support capped to keep the screened set
//! smaller than half the total sample.
//!
//! The objective is (1/(2n))‖y − Xβ‖² + λ‖β‖₁, solved by cyclic coordinate
//! descent with an active-set strategy and a duality-gap stopping rule, so
//! λ_max = max_j |xⱼᵀy|/n and the cross-validation grid is relative to it.

use crate::matrix::{dot, sq_norm, Matrix};
use crate::tree::intersect_count;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScreeningError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("need at least {k} rows for {k}-fold cross-validation, got {n}")]
    TooFewRows { n: usize, k: usize },
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("response carries no signal: lambda_max is zero")]
    DegenerateResponse,
}

const GRID_POINTS: usize = 100;
const GRID_RATIO: f64 = 1e-3;
const MAX_PASSES: usize = 20_000;

/// Stopping policy for one coordinate-descent solve.
#[derive(Debug, Clone, Copy)]
struct SolveOpts {
    /// Converged when max_j ‖x_j‖²/n · (Δβ_j)² drops below this times the
    /// response variance (the glmnet criterion).
    thresh: f64,
    /// Total pass budget for this λ.
    pass_cap: usize,
    /// When set, additionally certify the solution by the duality gap at
    /// this relative tolerance.
    certify_gap: Option<f64>,
}

/// Exact solves for the public single-λ fit.
const OPTS_EXACT: SolveOpts =
    SolveOpts { thresh: 1e-16, pass_cap: MAX_PASSES, certify_gap: Some(1e-7) };
/// Screening-path fits (cross-validation folds and the support fit at the
/// chosen λ): solved to the duality-gap tolerance reference coordinate
/// descent implementations use for cross-validated screening.
const OPTS_PATH: SolveOpts =
    SolveOpts { thresh: 1e-12, pass_cap: 3000, certify_gap: Some(2e-4) };

/// A single Lasso solution.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub lambda: f64,
    pub coefficients: Vec<f64>,
    /// Indices with nonzero coefficients, ascending.
    pub support: Vec<usize>,
    /// Coordinate passes performed.
    pub n_iter: usize,
    /// False when the pass cap was hit; the best iterate is still returned.
    pub converged: bool,
}

/// Cross-validation summary; `lambda_grid` is decreasing and
/// `chosen_lambda` minimizes the mean held-out squared error.
#[derive(Debug, Clone)]
pub struct CvResult {
    pub lambda_grid: Vec<f64>,
    pub cv_error: Vec<f64>,
    pub chosen_lambda: f64,
    pub fold_assignment: Vec<usize>,
}

#[inline]
fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Coordinate descent state shared along a warm-started path. Columns are
/// copied into contiguous storage once; every update then runs over plain
/// slices.
struct CdSolver<'a> {
    cols: Vec<Vec<f64>>,
    y: &'a [f64],
    n: f64,
    col_sq_over_n: Vec<f64>,
    beta: Vec<f64>,
    residual: Vec<f64>,
    obj_scale: f64,
    /// max_j |xⱼᵀy|/n; below this λ the zero vector is already optimal.
    corr0: f64,
}

impl<'a> CdSolver<'a> {
    fn new(x: &'a Matrix, y: &'a [f64], warm: Option<&[f64]>) -> Self {
        let n = x.rows() as f64;
        let p = x.cols();
        let cols: Vec<Vec<f64>> = (0..p).map(|j| x.col(j)).collect();
        let col_sq_over_n = cols.iter().map(|c| sq_norm(c) / n).collect();
        let corr0 = cols.iter().map(|c| (dot(c, y) / n).abs()).fold(0.0, f64::max);
        let mut s = Self {
            cols,
            y,
            n,
            col_sq_over_n,
            beta: vec![0.0; p],
            residual: y.to_vec(),
            obj_scale: (sq_norm(y) / (2.0 * n)).max(1e-12),
            corr0,
        };
        if let Some(w) = warm {
            for (j, &b) in w.iter().enumerate() {
                if b != 0.0 {
                    s.set_coef(j, b);
                }
            }
        }
        s
    }

    fn set_coef(&mut self, j: usize, value: f64) {
        let delta = value - self.beta[j];
        if delta == 0.0 {
            return;
        }
        for (r, x) in self.residual.iter_mut().zip(&self.cols[j]) {
            *r -= delta * x;
        }
        self.beta[j] = value;
    }

    fn objective(&self, lambda: f64) -> f64 {
        sq_norm(&self.residual) / (2.0 * self.n)
            + lambda * self.beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Duality gap with the scaled residual as the dual point; an upper
    /// bound on the objective suboptimality.
    fn duality_gap(&self, lambda: f64) -> f64 {
        let corr_inf = self
            .cols
            .iter()
            .map(|c| (dot(c, &self.residual) / self.n).abs())
            .fold(0.0, f64::max);
        let s = if corr_inf > lambda { lambda / corr_inf } else { 1.0 };
        let mut shifted = 0.0;
        for (r, y) in self.residual.iter().zip(self.y) {
            let d = s * r - y;
            shifted += d * d;
        }
        self.objective(lambda) + (shifted - sq_norm(self.y)) / (2.0 * self.n)
    }

    fn beta_is_zero(&self) -> bool {
        self.beta.iter().all(|&b| b == 0.0)
    }

    /// Recomputes the residual from scratch, clearing the drift that
    /// incremental updates accumulate; matters when certifying tight gaps.
    fn resync_residual(&mut self) {
        self.residual.copy_from_slice(self.y);
        for (j, &b) in self.beta.iter().enumerate() {
            if b != 0.0 {
                for (r, x) in self.residual.iter_mut().zip(&self.cols[j]) {
                    *r -= b * x;
                }
            }
        }
    }

    /// Largest weighted squared change of one pass, the glmnet convergence
    /// measure.
    fn weighted_pass(&mut self, lambda: f64, coords: &[usize]) -> f64 {
        let mut worst = 0.0f64;
        for &j in coords {
            let denom = self.col_sq_over_n[j];
            if denom <= 0.0 {
                continue;
            }
            let corr = dot(&self.cols[j], &self.residual) / self.n;
            let z = self.beta[j] * denom + corr;
            let new = soft_threshold(z, lambda) / denom;
            let change = new - self.beta[j];
            if change != 0.0 {
                self.set_coef(j, new);
                worst = worst.max(denom * change * change);
            }
        }
        worst
    }

    /// Solves at `lambda` from the current state: stabilize the active set
    /// with cheap passes, then run one admission sweep over every
    /// coordinate. With a gap tolerance set, convergence means the duality
    /// gap dropped below it; otherwise the admission sweep must move
    /// nothing beyond the threshold.
    fn solve(&mut self, lambda: f64, opts: SolveOpts) -> (usize, bool) {
        if lambda >= self.corr0 && self.beta_is_zero() {
            return (0, true);
        }
        let p = self.cols.len();
        let all: Vec<usize> = (0..p).collect();
        let y_var = 2.0 * self.obj_scale;
        let tol = opts.thresh * y_var;
        let gap_tol = opts.certify_gap.map(|g| g * self.obj_scale);
        let mut passes = 0;
        loop {
            let active: Vec<usize> = (0..p).filter(|&j| self.beta[j] != 0.0).collect();
            if !active.is_empty() {
                loop {
                    let worst = self.weighted_pass(lambda, &active);
                    passes += 1;
                    if worst <= tol || passes >= opts.pass_cap {
                        break;
                    }
                }
            }
            let worst_full = self.weighted_pass(lambda, &all);
            passes += 1;
            let settled = worst_full <= tol;
            match gap_tol {
                Some(gt) => {
                    self.resync_residual();
                    if self.duality_gap(lambda) <= gt {
                        return (passes, true);
                    }
                    if settled || passes >= opts.pass_cap {
                        // cannot improve further at this threshold
                        return (passes, false);
                    }
                }
                None => {
                    if settled {
                        return (passes, true);
                    }
                    if passes >= opts.pass_cap {
                        return (passes, false);
                    }
                }
            }
        }
    }

    fn fit(&self, lambda: f64, n_iter: usize, converged: bool) -> LassoFit {
        LassoFit {
            lambda,
            coefficients: self.beta.clone(),
            support: (0..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect(),
            n_iter,
            converged,
        }
    }
}

/// Lasso at a single regularization value; deterministic given inputs.
pub fn lasso_fit(
    x: &Matrix,
    y: &[f64],
    lambda: f64,
    warm_start: Option<&[f64]>,
) -> Result<LassoFit, ScreeningError> {
    if x.rows() != y.len() {
        return Err(ScreeningError::DimensionMismatch(format!(
            "{} rows vs response of length {}",
            x.rows(),
            y.len()
        )));
    }
    if lambda <= 0.0 {
        return Err(ScreeningError::NonPositiveLambda(lambda));
    }
    let mut solver = CdSolver::new(x, y, warm_start);
    let (n_iter, converged) = solver.solve(lambda, OPTS_EXACT);
    if !converged {
        log::warn!("lasso did not converge after {n_iter} passes at lambda {lambda}");
    }
    Ok(solver.fit(lambda, n_iter, converged))
}

/// max_j |xⱼᵀy| / n, the smallest λ with an all-zero solution.
pub fn lambda_max(x: &Matrix, y: &[f64]) -> f64 {
    x.t_matvec(y).iter().fold(0.0f64, |m, v| m.max(v.abs() / x.rows() as f64))
}

/// Decreasing log-spaced grid from λ_max down to λ_max · 1e-3.
pub fn lambda_grid(lambda_max: f64) -> Vec<f64> {
    (0..GRID_POINTS)
        .map(|i| lambda_max * GRID_RATIO.powf(i as f64 / (GRID_POINTS - 1) as f64))
        .collect()
}

/// Warm-started fits down a decreasing lambda sequence; the callback sees
/// each fit in grid order.
fn path_fits(
    x: &Matrix,
    y: &[f64],
    lambdas: &[f64],
    opts: SolveOpts,
    mut visit: impl FnMut(usize, &CdSolver),
) {
    let mut solver = CdSolver::new(x, y, None);
    for (i, &lam) in lambdas.iter().enumerate() {
        solver.solve(lam, opts);
        visit(i, &solver);
    }
}

/// Picks λ by k-fold cross-validation: folds come from a seeded
/// permutation, the error is mean squared prediction error over held-out
/// points, and the largest λ wins ties.
pub fn cv_select_lambda(
    x: &Matrix,
    y: &[f64],
    k: usize,
    seed: u64,
) -> Result<CvResult, ScreeningError> {
    let n = x.rows();
    if y.len() != n {
        return Err(ScreeningError::DimensionMismatch(format!(
            "{n} rows vs response of length {}",
            y.len()
        )));
    }
    if k < 2 || n < k {
        return Err(ScreeningError::TooFewRows { n, k });
    }
    let lam_max = lambda_max(x, y);
    if lam_max <= 0.0 {
        return Err(ScreeningError::DegenerateResponse);
    }
    let grid = lambda_grid(lam_max);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut fold_assignment = vec![0usize; n];
    for (pos, &row) in perm.iter().enumerate() {
        fold_assignment[row] = pos % k;
    }

    let mut total_sq_err = vec![0.0f64; grid.len()];
    for fold in 0..k {
        let train: Vec<usize> =
            (0..n).filter(|&i| fold_assignment[i] != fold).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_assignment[i] == fold).collect();
        let x_train = x.select_rows(&train);
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let x_test = x.select_rows(&test);
        let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        path_fits(&x_train, &y_train, &grid, OPTS_PATH, |i, solver| {
            let pred = x_test.matvec(&solver.beta);
            let err: f64 = pred
                .iter()
                .zip(&y_test)
                .map(|(p, t)| (p - t) * (p - t))
                .sum();
            total_sq_err[i] += err;
        });
    }
    let cv_error: Vec<f64> = total_sq_err.iter().map(|e| e / n as f64).collect();
    let best = cv_error
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.partial_cmp(b).unwrap().then(ia.cmp(ib)))
        .map(|(i, _)| i)
        .unwrap();
    Ok(CvResult {
        chosen_lambda: grid[best],
        lambda_grid: grid,
        cv_error,
        fold_assignment,
    })
}

/// Standardizes columns to mean zero and unit (1/n) variance; columns that
/// are constant on these rows become all-zero and can never be selected.
fn standardize_allowing_constants(x: &Matrix) -> Matrix {
    let means = x.column_means();
    let sds = x.column_sds();
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let v = if sds[j] > 0.0 { (x.get(i, j) - means[j]) / sds[j] } else { 0.0 };
            out.set(i, j, v);
        }
    }
    out
}

/// Screens variables on the in-half of a split: standardize on these rows,
/// pick λ by 10-fold CV, fit the path down to the chosen λ, and keep the
/// support. When the support exceeds `cap` (⌊n_total/2⌋ − 1, supplied by
/// the caller), only the `cap` largest |coefficient| survive, with ties
/// going to the lower index.
pub fn screen(x_in: &Matrix, y_in: &[f64], seed: u64, cap: usize) -> Vec<usize> {
    let x = standardize_allowing_constants(x_in);
    let mut y = y_in.to_vec();
    crate::matrix::center(&mut y);

    let cv = match cv_select_lambda(&x, &y, 10, seed) {
        Ok(cv) => cv,
        Err(ScreeningError::DegenerateResponse) => return vec![],
        Err(e) => {
            log::warn!("screening failed: {e}; returning empty set");
            return vec![];
        }
    };
    let chosen_idx = cv
        .lambda_grid
        .iter()
        .position(|&l| l == cv.chosen_lambda)
        .expect("chosen lambda is on the grid");

    let mut support = vec![];
    let mut coefficients = vec![];
    path_fits(&x, &y, &cv.lambda_grid[..=chosen_idx], OPTS_PATH, |i, solver| {
        if i == chosen_idx {
            support = (0..solver.beta.len()).filter(|&j| solver.beta[j] != 0.0).collect();
            coefficients = solver.beta.clone();
        }
    });

    if support.len() > cap {
        support.sort_by(|&a, &b| {
            coefficients[b]
                .abs()
                .partial_cmp(&coefficients[a].abs())
                .unwrap()
                .then(a.cmp(&b))
        });
        support.truncate(cap);
        support.sort_unstable();
    }
    support
}

/// True when the screened set covers every index of `s0`.
pub fn covers(s_hat: &[usize], s0: &[usize]) -> bool {
    intersect_count(s_hat, s0) == s0.len()
}
