//! Least squares with rank handling, the partial F-test, and the
//! noncentrality diagnostic for misspecified screened models.

use crate::fdist::f_cdf;
use crate::matrix::{dot, sq_norm, Matrix};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("need more observations than fitted columns ({rows} rows, {cols} columns)")]
    TooFewRows { rows: usize, cols: usize },
    #[error("drop set must be a nonempty subset of the full column set")]
    BadDropSet,
    #[error("Gram matrix is singular: rank condition violated")]
    SingularGram,
    #[error("contrast matrix is not of full row rank")]
    RankDeficientContrast,
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
}

/// Pivot columns whose diagonal falls below this fraction of the leading
/// pivot are treated as linearly dependent and dropped.
const PIVOT_REL_TOL: f64 = 1e-8;

/// Least squares fit, possibly on a column subset chosen by rank revealing
/// pivoting. `coefficients[i]` belongs to original column `kept_columns[i]`.
#[derive(Debug, Clone)]
pub struct LeastSquaresFit {
    pub coefficients: Vec<f64>,
    pub rss: f64,
    pub df_resid: usize,
    pub rank: usize,
    pub kept_columns: Vec<usize>,
}

/// Householder QR with column pivoting; returns coefficients in pivot
/// order together with the pivot permutation prefix that was kept.
fn pivoted_qr_solve(x: &Matrix, y: &[f64]) -> (Vec<f64>, Vec<usize>, usize, f64) {
    let n = x.rows();
    let c = x.cols();
    let mut cols: Vec<Vec<f64>> = (0..c).map(|j| x.col(j)).collect();
    let mut perm: Vec<usize> = (0..c).collect();
    let mut qty = y.to_vec();
    let mut leading_pivot = 0.0;
    let mut rank = 0;

    for k in 0..c.min(n) {
        // pivot on the largest remaining column norm (rows k..)
        let mut best = k;
        let mut best_norm = sq_norm(&cols[k][k..]);
        for j in (k + 1)..c {
            let nj = sq_norm(&cols[j][k..]);
            if nj > best_norm {
                best_norm = nj;
                best = j;
            }
        }
        let pivot = best_norm.sqrt();
        if k == 0 {
            leading_pivot = pivot;
        }
        if pivot <= PIVOT_REL_TOL * leading_pivot || pivot == 0.0 {
            break;
        }
        cols.swap(k, best);
        perm.swap(k, best);

        // Householder reflector for cols[k][k..]
        let alpha = -cols[k][k].signum() * pivot;
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        v[0] -= alpha;
        let v_sq = sq_norm(&v);
        cols[k][k] = alpha; // R[k,k]
        for t in (k + 1)..n {
            cols[k][t] = 0.0;
        }
        if v_sq > 0.0 {
            let beta = 2.0 / v_sq;
            for col in cols.iter_mut().skip(k + 1) {
                let proj = beta * dot(&v, &col[k..]);
                for (vi, ci) in v.iter().zip(col[k..].iter_mut()) {
                    *ci -= proj * vi;
                }
            }
            let proj = beta * dot(&v, &qty[k..]);
            for (vi, qi) in v.iter().zip(qty[k..].iter_mut()) {
                *qi -= proj * vi;
            }
        }
        rank += 1;
    }

    // back substitution on the leading rank x rank triangle;
    // R[i][j] lives in cols[j][i] for i <= j < rank
    let mut coef = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = qty[i];
        for j in (i + 1)..rank {
            s -= cols[j][i] * coef[j];
        }
        coef[i] = s / cols[i][i];
    }
    let rss = sq_norm(&qty[rank..]);
    (coef, perm, rank, rss)
}

/// Ordinary least squares of `y` on the columns of `x_sub`.
///
/// Rank-deficient inputs are handled by dropping pivot-deficient columns;
/// `kept_columns` records (in increasing order) which columns were fitted.
/// A zero-column matrix yields the empty model with rss = ‖y‖².
pub fn ols_fit(x_sub: &Matrix, y: &[f64]) -> Result<LeastSquaresFit, LinalgError> {
    if x_sub.rows() != y.len() {
        return Err(LinalgError::DimensionMismatch(format!(
            "{} rows vs response of length {}",
            x_sub.rows(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    if x_sub.rows() <= x_sub.cols() {
        return Err(LinalgError::TooFewRows { rows: x_sub.rows(), cols: x_sub.cols() });
    }
    if x_sub.cols() == 0 {
        return Ok(LeastSquaresFit {
            coefficients: vec![],
            rss: sq_norm(y),
            df_resid: x_sub.rows(),
            rank: 0,
            kept_columns: vec![],
        });
    }

    let (coef_piv, perm, rank, rss) = pivoted_qr_solve(x_sub, y);
    let mut pairs: Vec<(usize, f64)> =
        perm[..rank].iter().copied().zip(coef_piv).collect();
    pairs.sort_by_key(|&(j, _)| j);
    let kept_columns: Vec<usize> = pairs.iter().map(|&(j, _)| j).collect();
    let coefficients: Vec<f64> = pairs.iter().map(|&(_, c)| c).collect();
    Ok(LeastSquaresFit {
        coefficients,
        rss,
        df_resid: x_sub.rows() - rank,
        rank,
        kept_columns,
    })
}

/// F-test p-value from the fitted full and nested sub-model, with the
/// numerator degrees of freedom taken as the rank actually removed.
///
/// `y_sq` fixes the scale for deciding when a residual sum of squares is
/// numerically zero; a perfect fit in both models returns 1.
pub fn f_test_pvalue(
    rss_sub: f64,
    rank_sub: usize,
    rss_full: f64,
    rank_full: usize,
    n_obs: usize,
    y_sq: f64,
) -> f64 {
    let q = rank_full.saturating_sub(rank_sub);
    if q == 0 {
        return 1.0;
    }
    let df_full = n_obs - rank_full;
    let zero = |rss: f64| rss <= y_sq * 1e-20;
    if zero(rss_full) {
        return if zero(rss_sub) { 1.0 } else { 0.0 };
    }
    let f = ((rss_sub - rss_full).max(0.0) / q as f64) / (rss_full / df_full as f64);
    1.0 - f_cdf(f, q, df_full)
}

/// Partial F-test of H0: the coefficients on `drop_cols` are zero, inside
/// the model spanned by `full_cols`.
pub fn partial_f_pvalue(
    x_out: &Matrix,
    y_out: &[f64],
    full_cols: &[usize],
    drop_cols: &[usize],
) -> Result<f64, LinalgError> {
    if drop_cols.is_empty() || !drop_cols.iter().all(|j| full_cols.contains(j)) {
        return Err(LinalgError::BadDropSet);
    }
    if full_cols.len() >= x_out.rows() {
        return Err(LinalgError::TooFewRows { rows: x_out.rows(), cols: full_cols.len() });
    }
    let mut full: Vec<usize> = full_cols.to_vec();
    full.sort_unstable();
    full.dedup();
    let sub: Vec<usize> = full.iter().copied().filter(|j| !drop_cols.contains(j)).collect();

    let fit_full = ols_fit(&x_out.select_cols(&full), y_out)?;
    let fit_sub = ols_fit(&x_out.select_cols(&sub), y_out)?;
    Ok(f_test_pvalue(
        fit_sub.rss,
        fit_sub.rank,
        fit_full.rss,
        fit_full.rank,
        x_out.rows(),
        sq_norm(y_out),
    ))
}

/// Cholesky factor (lower) of a symmetric positive definite matrix stored
/// densely; fails when a pivot collapses relative to the largest diagonal.
fn cholesky(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, LinalgError> {
    let n = m.len();
    let max_diag = (0..n).map(|i| m[i][i]).fold(0.0f64, f64::max);
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 1e-12 * max_diag {
                    return Err(LinalgError::SingularGram);
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix.
/// Returns (eigenvalues, eigenvectors as columns).
fn jacobi_eigen(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + a.iter().enumerate().map(|(i, r)| r[i].abs()).fold(0.0, f64::max)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let vals = (0..n).map(|i| a[i][i]).collect();
    (vals, v)
}

/// Bias vector and noncentrality of the partial F numerator when screening
/// may have missed active variables.
#[derive(Debug, Clone)]
pub struct NoncentralityReport {
    pub bias: Vec<f64>,
    pub lambda_noncentral: f64,
    pub q: usize,
    pub df2: usize,
}

/// Computes BIAS = (1/σ) (A G Aᵀ)^{-1/2} A G Xᵀ X_compl β_compl with
/// G = (XᵀX)⁻¹ on the screened columns, and λ = Σ BIASᵢ².
pub fn noncentrality_report(
    x_i2: &Matrix,
    s_hat: &[usize],
    a: &Matrix,
    beta0: &[f64],
    sigma: f64,
) -> Result<NoncentralityReport, LinalgError> {
    if sigma <= 0.0 {
        return Err(LinalgError::NonPositiveSigma(sigma));
    }
    if beta0.len() != x_i2.cols() {
        return Err(LinalgError::DimensionMismatch(format!(
            "beta0 length {} vs {} columns",
            beta0.len(),
            x_i2.cols()
        )));
    }
    let s = s_hat.len();
    let q = a.rows();
    if a.cols() != s || q >= s || q == 0 {
        return Err(LinalgError::DimensionMismatch(format!(
            "contrast must be q x |s_hat| with 0 < q < {s}, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }

    let x_s = x_i2.select_cols(s_hat);
    // Gram = XᵀX on the screened columns
    let mut gram = vec![vec![0.0; s]; s];
    for i in 0..x_i2.rows() {
        let r = x_s.row(i);
        for j in 0..s {
            for k in j..s {
                gram[j][k] += r[j] * r[k];
            }
        }
    }
    for j in 0..s {
        for k in 0..j {
            gram[j][k] = gram[k][j];
        }
    }
    let l = cholesky(&gram)?; // fails iff rank(XᵀX) < |s_hat|

    // w = X_compl β_compl over columns outside s_hat
    let in_s = {
        let mut mask = vec![false; x_i2.cols()];
        for &j in s_hat {
            mask[j] = true;
        }
        mask
    };
    let mut w = vec![0.0; x_i2.rows()];
    for (j, &b) in beta0.iter().enumerate() {
        if in_s[j] || b == 0.0 {
            continue;
        }
        for (wi, ri) in w.iter_mut().zip(0..x_i2.rows()) {
            *wi += b * x_i2.get(ri, j);
        }
    }

    let u = x_s.t_matvec(&w);
    let t = cholesky_solve(&l, &u); // G u
    let z: Vec<f64> = (0..q).map(|i| dot(a.row(i), &t)).collect();

    // M = A G Aᵀ, then its symmetric inverse square root
    let ga: Vec<Vec<f64>> = (0..q).map(|i| cholesky_solve(&l, a.row(i))).collect();
    let mut m = vec![vec![0.0; q]; q];
    for i in 0..q {
        for j in 0..q {
            m[i][j] = dot(a.row(i), &ga[j]);
        }
    }
    let (vals, vecs) = jacobi_eigen(&m);
    let max_val = vals.iter().copied().fold(0.0f64, f64::max);
    if vals.iter().any(|&v| v <= 1e-12 * max_val.max(f64::MIN_POSITIVE)) {
        return Err(LinalgError::RankDeficientContrast);
    }

    // bias = (1/sigma) V diag(1/sqrt(val)) Vᵀ z
    let mut vtz = vec![0.0; q];
    for j in 0..q {
        vtz[j] = (0..q).map(|i| vecs[i][j] * z[i]).sum();
    }
    let mut bias = vec![0.0; q];
    for i in 0..q {
        bias[i] = (0..q)
            .map(|j| vecs[i][j] * vtz[j] / vals[j].sqrt())
            .sum::<f64>()
            / sigma;
    }
    let lambda_noncentral = sq_norm(&bias);
    Ok(NoncentralityReport { bias, lambda_noncentral, q, df2: x_i2.rows() - s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, n: usize, p: usize) -> Matrix {
        let data: Vec<f64> = (0..n * p)
            .map(|_| rand_distr::StandardNormal.sample(rng))
            .collect();
        Matrix::new(n, p, data).unwrap()
    }

    #[test]
    fn constant_column_fits_the_mean() {
        let x = Matrix::new(4, 1, vec![1.0; 4]).unwrap();
        let fit = ols_fit(&x, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((fit.coefficients[0] - 2.5).abs() < 1e-12);
        assert!((fit.rss - 5.0).abs() < 1e-12);
        assert_eq!(fit.df_resid, 3);
        assert_eq!(fit.rank, 1);
    }

    #[test]
    fn empty_model_returns_response_norm() {
        let x = Matrix::zeros(2, 0);
        let fit = ols_fit(&x, &[3.0, 4.0]).unwrap();
        assert_eq!(fit.rss, 25.0);
        assert_eq!(fit.df_resid, 2);
        assert!(fit.coefficients.is_empty());
    }

    #[test]
    fn recovers_exact_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(&mut rng, 20, 3);
        let beta = [1.5, -2.0, 0.25];
        let y = x.matvec(&beta);
        let fit = ols_fit(&x, &y).unwrap();
        assert!(fit.rss < 1e-9);
        for (c, b) in fit.coefficients.iter().zip(beta) {
            assert!((c - b).abs() < 1e-9);
        }
        assert_eq!(fit.kept_columns, vec![0, 1, 2]);
    }

    #[test]
    fn duplicated_column_is_dropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = random_matrix(&mut rng, 12, 2);
        let mut rows = Vec::new();
        for i in 0..12 {
            let r = base.row(i);
            rows.push(vec![r[0], r[1], r[0]]); // col 2 duplicates col 0
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = (0..12).map(|_| rng.gen::<f64>()).collect();
        let fit = ols_fit(&x, &y).unwrap();
        assert_eq!(fit.rank, 2);
        assert_eq!(fit.df_resid, 10);
        assert_eq!(fit.kept_columns.len(), 2);
        assert!(fit.kept_columns.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn residuals_orthogonal_to_kept_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 30, 6);
        let y: Vec<f64> = (0..30).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let fit = ols_fit(&x, &y).unwrap();
        let fitted = x.select_cols(&fit.kept_columns).matvec(&fit.coefficients);
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        let y_norm = sq_norm(&y).sqrt();
        for &j in &fit.kept_columns {
            let col = x.col(j);
            let bound = 1e-8 * y_norm * sq_norm(&col).sqrt();
            assert!(dot(&resid, &col).abs() < bound);
        }
    }

    #[test]
    fn dropping_everything_with_orthogonal_response_gives_p_one() {
        // y orthogonal to both columns: no explained variance, F ~ 0
        let x = Matrix::new(4, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let y = [1.0, -1.0, 1.0, -1.0];
        let p = partial_f_pvalue(&x, &y, &[0, 1], &[0, 1]).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_drop_matches_t_test() {
        // F(1, d) is the square of t(d); compare p against an independent
        // t CDF computed by adaptive Simpson quadrature of the density.
        fn t_density(x: f64, df: f64) -> f64 {
            let ln_c = crate::fdist::ln_gamma((df + 1.0) / 2.0)
                - crate::fdist::ln_gamma(df / 2.0)
                - 0.5 * (df * std::f64::consts::PI).ln();
            (ln_c - 0.5 * (df + 1.0) * (1.0 + x * x / df).ln()).exp()
        }
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                s += f(a + i as f64 * h) * if i % 2 == 0 { 2.0 } else { 4.0 };
            }
            s * h / 3.0
        }

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_matrix(&mut rng, 25, 4);
        let y: Vec<f64> = (0..25).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let full = [0usize, 1, 2, 3];
        let p = partial_f_pvalue(&x, &y, &full, &[2]).unwrap();

        // t statistic of the dropped coefficient in the full fit
        let fit_full = ols_fit(&x.select_cols(&full), &y).unwrap();
        let fit_sub = ols_fit(&x.select_cols(&[0, 1, 3]), &y).unwrap();
        let df = fit_full.df_resid as f64;
        let f_stat = (fit_sub.rss - fit_full.rss) / (fit_full.rss / df);
        let t_stat = f_stat.sqrt();
        let tail = 0.5 - simpson(&|u| t_density(u, df), 0.0, t_stat, 20_000);
        let p_t = 2.0 * tail;
        assert!((p - p_t).abs() < 1e-9, "{p} vs {p_t}");
    }

    #[test]
    fn f_test_invariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random_matrix(&mut rng, 40, 6);
        let y: Vec<f64> = (0..40).map(|_| rng.gen::<f64>()).collect();
        let p1 = partial_f_pvalue(&x, &y, &[0, 1, 2, 3, 4], &[1, 3]).unwrap();
        let p2 = partial_f_pvalue(&x, &y, &[4, 2, 0, 3, 1], &[3, 1]).unwrap();
        assert_eq!(p1, p2);
        let y_scaled: Vec<f64> = y.iter().map(|v| v * 37.5).collect();
        let p3 = partial_f_pvalue(&x, &y_scaled, &[0, 1, 2, 3, 4], &[1, 3]).unwrap();
        assert!((p1 - p3).abs() < 1e-12);
    }

    #[test]
    fn null_pvalues_are_uniform() {
        // zero true coefficient on the dropped column: p ~ U(0,1)
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = random_matrix(&mut rng, 30, 4);
        let n_sims = 2000;
        let mut pvals = Vec::with_capacity(n_sims);
        for _ in 0..n_sims {
            let noise: Vec<f64> =
                (0..30).map(|_| rand_distr::StandardNormal.sample(&mut rng)).collect();
            let signal = x.col(0);
            let y: Vec<f64> =
                signal.iter().zip(&noise).map(|(s, e)| 0.8 * s + e).collect();
            pvals.push(partial_f_pvalue(&x, &y, &[0, 1, 2, 3], &[2]).unwrap());
        }
        pvals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = pvals
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let hi = (i + 1) as f64 / n_sims as f64 - p;
                let lo = p - i as f64 / n_sims as f64;
                hi.max(lo)
            })
            .fold(0.0f64, f64::max);
        assert!(ks < 0.05, "KS statistic {ks}");
    }

    #[test]
    fn noncentrality_zero_when_support_screened() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = random_matrix(&mut rng, 12, 5);
        let mut beta0 = vec![0.0; 5];
        beta0[1] = 1.0;
        beta0[3] = -2.0;
        let a = Matrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        let rep = noncentrality_report(&x, &[1, 3], &a, &beta0, 1.0).unwrap();
        assert_eq!(rep.bias, vec![0.0]);
        assert_eq!(rep.lambda_noncentral, 0.0);
        assert_eq!(rep.q, 1);
        assert_eq!(rep.df2, 10);
    }

    #[test]
    fn noncentrality_scales_inversely_with_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let x = random_matrix(&mut rng, 12, 5);
        let beta0 = vec![0.5, 1.0, -1.0, 0.0, 2.0];
        let a = Matrix::new(1, 2, vec![1.0, -1.0]).unwrap();
        let r1 = noncentrality_report(&x, &[1, 2], &a, &beta0, 1.0).unwrap();
        let r2 = noncentrality_report(&x, &[1, 2], &a, &beta0, 2.0).unwrap();
        for (b1, b2) in r1.bias.iter().zip(&r2.bias) {
            assert!((b1 / 2.0 - b2).abs() < 1e-12);
        }
        assert!((r1.lambda_noncentral / 4.0 - r2.lambda_noncentral).abs() < 1e-10);
    }

    #[test]
    fn noncentrality_invariant_under_row_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let x = random_matrix(&mut rng, 14, 5);
        let beta0 = vec![0.0, 1.0, -1.0, 0.7, 0.0];
        let a = Matrix::new(1, 2, vec![0.3, 1.1]).unwrap();
        let r1 = noncentrality_report(&x, &[0, 2], &a, &beta0, 0.8).unwrap();
        let mut order: Vec<usize> = (0..14).collect();
        order.shuffle(&mut rng);
        let xp = x.select_rows(&order);
        let r2 = noncentrality_report(&xp, &[0, 2], &a, &beta0, 0.8).unwrap();
        assert!((r1.lambda_noncentral - r2.lambda_noncentral).abs() < 1e-9);
    }

    #[test]
    fn noncentrality_rejects_bad_inputs() {
        let x = Matrix::new(4, 3, vec![1.0; 12]).unwrap();
        let a = Matrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        let beta0 = vec![0.0; 3];
        assert!(matches!(
            noncentrality_report(&x, &[0, 1], &a, &beta0, 0.0),
            Err(LinalgError::NonPositiveSigma(_))
        ));
        // identical columns: Gram singular
        assert!(matches!(
            noncentrality_report(&x, &[0, 1], &a, &beta0, 1.0),
            Err(LinalgError::SingularGram)
        ));
    }
}
