//! Least squares on submodels of a fixed design.
//!
//! Everything here is deterministic: fits, targets `X_M^+ mu`, residual
//! projectors and the standard errors that feed the interval constructors.
//! Solves go through a thin QR factorization of `X_M` after a singular value
//! rank check, never through an explicit inverse of the Gram matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PosiError, Result};

/// Relative tolerance on `sigma_min / sigma_max` below which `X_M` is treated as
/// rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// A fixed `n x d` design with cached column norms.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    entries: DMatrix<f64>,
    col_norms: Vec<f64>,
    l2inf_norm: f64,
    linf_norm: f64,
}

impl DesignMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(PosiError::EmptyInput("design matrix"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(PosiError::InvalidParameter(
                "design matrix has non-finite entries".into(),
            ));
        }
        let col_norms: Vec<f64> = entries.column_iter().map(|c| c.norm()).collect();
        let l2inf_norm = col_norms.iter().copied().fold(0.0, f64::max);
        let linf_norm = entries.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(Self {
            entries,
            col_norms,
            l2inf_norm,
            linf_norm,
        })
    }

    /// Builds a design from row-major rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(PosiError::EmptyInput("design matrix"));
        }
        let d = rows[0].len();
        for r in rows {
            if r.len() != d {
                return Err(PosiError::DimensionMismatch {
                    what: "design row length",
                    expected: d,
                    got: r.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn d(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn column(&self, j: usize) -> nalgebra::DVectorView<'_, f64> {
        self.entries.column(j)
    }

    pub fn col_norms(&self) -> &[f64] {
        &self.col_norms
    }

    /// `max_j ||X_j||_2`.
    pub fn l2inf_norm(&self) -> f64 {
        self.l2inf_norm
    }

    /// Largest absolute entry.
    pub fn linf_norm(&self) -> f64 {
        self.linf_norm
    }

    /// Columns of `M` as a dense `n x |M|` matrix.
    pub fn submatrix(&self, model: &ModelSet) -> DMatrix<f64> {
        self.entries.select_columns(model.indices())
    }

    /// The design restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        Self::new(self.entries.select_rows(rows))
    }

    /// `X theta`.
    pub fn mul_vec(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_len("coefficient vector", self.d(), theta.len())?;
        let t = DVector::from_column_slice(theta);
        Ok((&self.entries * t).as_slice().to_vec())
    }

    /// `X^T v`.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("response vector", self.n(), v.len())?;
        let v = DVector::from_column_slice(v);
        Ok(self.entries.tr_mul(&v).as_slice().to_vec())
    }
}

/// An ordered set of distinct feature indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ModelSet {
    indices: Vec<usize>,
}

impl ModelSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Sorts the indices; fails on duplicates or on an index `>= d`.
    pub fn new(mut indices: Vec<usize>, d: usize) -> Result<Self> {
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(PosiError::InvalidParameter(format!(
                    "duplicate feature index {} in model",
                    w[0]
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= d {
                return Err(PosiError::InvalidParameter(format!(
                    "feature index {last} out of range for d = {d}"
                )));
            }
        }
        Ok(Self { indices })
    }

    /// `{0, 1, ..., d-1}`.
    pub fn full(d: usize) -> Self {
        Self {
            indices: (0..d).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    /// `M \ {j}`.
    pub fn without(&self, j: usize) -> Self {
        Self {
            indices: self.indices.iter().copied().filter(|&i| i != j).collect(),
        }
    }
}

/// OLS coefficients of a submodel together with their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: ModelSet,
    pub coefficients: Vec<f64>,
    pub stderrs: Vec<f64>,
}

/// Thin QR factorization of `X_M`, computed once and reused for fits,
/// targets and standard errors on the same submodel.
#[derive(Debug, Clone)]
pub struct SubmodelQr {
    n: usize,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl SubmodelQr {
    pub fn new(x: &DesignMatrix, model: &ModelSet) -> Result<Self> {
        let n = x.n();
        let m = model.len();
        if m == 0 {
            return Ok(Self {
                n,
                q: DMatrix::zeros(n, 0),
                r: DMatrix::zeros(0, 0),
            });
        }
        if m > n {
            return Err(PosiError::RankDeficient { ratio: 0.0 });
        }
        let xm = x.submatrix(model);
        let sv = xm.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
        if !(ratio > RANK_TOL) {
            return Err(PosiError::RankDeficient { ratio });
        }
        let qr = xm.qr();
        Ok(Self {
            n,
            q: qr.q(),
            r: qr.r(),
        })
    }

    pub fn len(&self) -> usize {
        self.r.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `X_M^+ v`.
    pub fn pseudo_solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("response vector", self.n, v.len())?;
        if self.is_empty() {
            return Ok(Vec::new());
        }
        let qtv = self.q.tr_mul(&DVector::from_column_slice(v));
        let beta = self
            .r
            .solve_upper_triangular(&qtv)
            .ok_or(PosiError::RankDeficient { ratio: 0.0 })?;
        Ok(beta.as_slice().to_vec())
    }

    /// Diagonal of `(X_M^T X_M)^{-1}`, via the squared row norms of `R^{-1}`.
    pub fn inverse_gram_diagonal(&self) -> Result<Vec<f64>> {
        let m = self.len();
        if m == 0 {
            return Ok(Vec::new());
        }
        let rinv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(m, m))
            .ok_or(PosiError::RankDeficient { ratio: 0.0 })?;
        Ok(rinv.row_iter().map(|row| row.norm_squared()).collect())
    }

    /// `P_M^perp = I - Q Q^T`, symmetrized.
    pub fn residual_projector(&self) -> DMatrix<f64> {
        let mut p = DMatrix::identity(self.n, self.n);
        if !self.is_empty() {
            p -= &self.q * self.q.transpose();
        }
        let pt = p.transpose();
        (p + pt) * 0.5
    }
}

/// OLS estimate `(X_M^T X_M)^{-1} X_M^T y`.
pub fn ols_fit(x: &DesignMatrix, model: &ModelSet, y: &[f64]) -> Result<Vec<f64>> {
    check_len("response vector", x.n(), y.len())?;
    SubmodelQr::new(x, model)?.pseudo_solve(y)
}

/// Projection target `beta_M = X_M^+ mu`. Same code path as [`ols_fit`].
pub fn target_coefficients(x: &DesignMatrix, model: &ModelSet, mu: &[f64]) -> Result<Vec<f64>> {
    ols_fit(x, model, mu)
}

pub fn residual_projector(x: &DesignMatrix, model: &ModelSet) -> Result<DMatrix<f64>> {
    Ok(SubmodelQr::new(x, model)?.residual_projector())
}

/// `sigma * sqrt((X_M^T X_M)^{-1}_{jj})` for each `j` in `M`.
pub fn stderr_known_sigma(x: &DesignMatrix, model: &ModelSet, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(PosiError::InvalidParameter(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    let diag = SubmodelQr::new(x, model)?.inverse_gram_diagonal()?;
    Ok(diag.into_iter().map(|g| sigma * g.sqrt()).collect())
}

/// `(sqrt(RSS / (n - d)), n - d)` from the full-model OLS fit.
pub fn sigma_hat_full_model(x: &DesignMatrix, y: &[f64]) -> Result<(f64, usize)> {
    check_len("response vector", x.n(), y.len())?;
    let (n, d) = (x.n(), x.d());
    if n <= d {
        return Err(PosiError::InsufficientSamples { n, d });
    }
    let full = ModelSet::full(d);
    let beta = ols_fit(x, &full, y)?;
    let fitted = x.mul_vec(&beta)?;
    let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
    let dof = n - d;
    Ok(((rss / dof as f64).sqrt(), dof))
}

/// Fits `M` by OLS and attaches standard errors `scale * sqrt(diag((X_M^T X_M)^{-1}))`,
/// where `scale` is either the known sigma or an estimate of it.
pub fn fit_with_scale(
    x: &DesignMatrix,
    model: &ModelSet,
    y: &[f64],
    scale: f64,
) -> Result<FitResult> {
    check_len("response vector", x.n(), y.len())?;
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(PosiError::InvalidParameter(format!(
            "noise scale must be nonnegative and finite, got {scale}"
        )));
    }
    let qr = SubmodelQr::new(x, model)?;
    let coefficients = qr.pseudo_solve(y)?;
    let stderrs = qr
        .inverse_gram_diagonal()?
        .into_iter()
        .map(|g| scale * g.sqrt())
        .collect();
    Ok(FitResult {
        model: model.clone(),
        coefficients,
        stderrs,
    })
}

/// Incrementally grown orthonormal basis of selected columns.
///
/// Projecting onto the orthocomplement costs `O(n k)` per vector instead of
/// forming the `n x n` projector.
#[derive(Debug, Clone, Default)]
pub struct OrthoBasis {
    basis: Vec<DVector<f64>>,
}

impl OrthoBasis {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// `P^perp v` using two passes of modified Gram-Schmidt.
    pub fn project_out(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &self.basis {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        r
    }

    /// Adds `v` to the span. Returns the normalized new direction, or `None`
    /// if `v` is numerically inside the current span (relative tolerance `tol`).
    pub fn push(&mut self, v: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
        let r = self.project_out(v);
        let rn = r.norm();
        if !(rn > tol * v.norm()) || rn == 0.0 {
            return None;
        }
        let q = r / rn;
        self.basis.push(q.clone());
        Some(q)
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(PosiError::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn three_by_two() -> DesignMatrix {
        DesignMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap()
    }

    #[test]
    fn identity_design_returns_response() {
        let x = DesignMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let b = ols_fit(&x, &ModelSet::full(3), &[1.0, 2.0, 3.0]).unwrap();
        for (got, want) in b.iter().zip([1.0, 2.0, 3.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn intercept_only_is_mean() {
        let x = DesignMatrix::new(DMatrix::from_element(5, 1, 1.0)).unwrap();
        let y = [1.0, 4.0, -2.0, 7.5, 0.5];
        let b = ols_fit(&x, &ModelSet::full(1), &y).unwrap();
        assert_abs_diff_eq!(b[0], y.iter().sum::<f64>() / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn two_column_fit_matches_normal_equations() {
        // Gram = [[3,3],[3,5]], X^T y = (3,5) -> (0,1).
        let b = ols_fit(&three_by_two(), &ModelSet::full(2), &[0.0, 1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(b[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn targets_recover_span_coordinates() {
        let x = three_by_two();
        let mu = x.mul_vec(&[2.0, -1.0]).unwrap();
        let t = target_coefficients(&x, &ModelSet::full(2), &mu).unwrap();
        assert_abs_diff_eq!(t[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t[1], -1.0, epsilon = 1e-12);

        let zero = target_coefficients(&x, &ModelSet::full(2), &[0.0; 3]).unwrap();
        assert!(zero.iter().all(|v| v.abs() < 1e-15));

        let m0 = ModelSet::new(vec![0], 2).unwrap();
        let t0 = target_coefficients(&x, &m0, &[0.0, 1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(t0[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn projector_edge_cases() {
        let x = DesignMatrix::new(DMatrix::identity(4, 4)).unwrap();
        let p = residual_projector(&x, &ModelSet::empty()).unwrap();
        assert_eq!(p, DMatrix::identity(4, 4));
        let p = residual_projector(&x, &ModelSet::full(4)).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-12));

        let x = DesignMatrix::new(DMatrix::from_element(2, 1, 1.0)).unwrap();
        let p = residual_projector(&x, &ModelSet::full(1)).unwrap();
        let want = [[0.5, -0.5], [-0.5, 0.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(p[(i, j)], want[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn stderr_examples() {
        let x = DesignMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let se = stderr_known_sigma(&x, &ModelSet::full(3), 1.0).unwrap();
        assert!(se.iter().all(|s| (s - 1.0).abs() < 1e-12));

        let x = DesignMatrix::from_rows(&[vec![2.0], vec![0.0]]).unwrap();
        let se = stderr_known_sigma(&x, &ModelSet::full(1), 3.0).unwrap();
        assert_abs_diff_eq!(se[0], 1.5, epsilon = 1e-12);

        // Gram^{-1} = [[5,-3],[-3,3]]/6 -> entry (1,1) = 1/2.
        let se = stderr_known_sigma(&three_by_two(), &ModelSet::full(2), 1.0).unwrap();
        assert_abs_diff_eq!(se[1], 0.5_f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(se[0], (5.0_f64 / 6.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn sigma_hat_examples() {
        let x = DesignMatrix::new(DMatrix::from_element(3, 1, 1.0)).unwrap();
        let (s, dof) = sigma_hat_full_model(&x, &[0.0, 0.0, 3.0]).unwrap();
        assert_abs_diff_eq!(s, 3.0_f64.sqrt(), epsilon = 1e-12);
        assert_eq!(dof, 2);

        let x = three_by_two();
        let (s, dof) = sigma_hat_full_model(&x, &[1.0, 2.0, 3.0]).unwrap();
        assert!(s < 1e-12);
        assert_eq!(dof, 1);

        let x = DesignMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert!(matches!(
            sigma_hat_full_model(&x, &[1.0, 2.0, 3.0]),
            Err(PosiError::InsufficientSamples { n: 3, d: 3 })
        ));
    }

    #[test]
    fn error_paths() {
        let x = three_by_two();
        assert!(matches!(
            ols_fit(&x, &ModelSet::full(2), &[1.0, 2.0]),
            Err(PosiError::DimensionMismatch { .. })
        ));
        let dup = DesignMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![0.0, 0.0]])
            .unwrap();
        assert!(matches!(
            ols_fit(&dup, &ModelSet::full(2), &[1.0, 2.0, 3.0]),
            Err(PosiError::RankDeficient { .. })
        ));
        assert!(ModelSet::new(vec![1, 1], 3).is_err());
        assert!(ModelSet::new(vec![3], 3).is_err());
        assert!(DesignMatrix::from_rows(&[vec![f64::NAN]]).is_err());
    }

    #[test]
    fn empty_model_fit_is_empty() {
        let x = three_by_two();
        let f = fit_with_scale(&x, &ModelSet::empty(), &[1.0, 2.0, 3.0], 1.0).unwrap();
        assert!(f.coefficients.is_empty() && f.stderrs.is_empty());
    }

    #[test]
    fn design_norms() {
        let x = DesignMatrix::from_rows(&[vec![3.0, -1.0], vec![4.0, 0.5]]).unwrap();
        assert_abs_diff_eq!(x.col_norms()[0], 5.0);
        assert_abs_diff_eq!(x.l2inf_norm(), 5.0);
        assert_abs_diff_eq!(x.linf_norm(), 4.0);
    }
}
