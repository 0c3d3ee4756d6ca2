//! Dense symmetric linear algebra used by the solvers.
//!
//! Factorizations come from `faer`; the Sylvester-type solve and the PSD
//! clamping rules live here.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigendecomposition `S = Q diag(values) Qᵀ` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SymEig<T> {
    vectors: Mat<T>,
    values: Vec<T>,
}

impl<T: Scalar> SymEig<T> {
    pub fn vectors(&self) -> MatRef<'_, T> {
        self.vectors.as_ref()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn max_abs_value(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    /// Eigenvalues with round-off negatives clamped to zero.
    ///
    /// Values below `-tol * max|λ|` (tol = 1e-10 in double precision) mean the
    /// input was not PSD and produce [`Error::NotPsd`].
    pub fn psd_values(&self) -> Result<Vec<T>> {
        let max = self.max_abs_value();
        let threshold = T::tolerance_floor(1e-10) * max;
        self.values
            .iter()
            .map(|&v| {
                if v >= T::zero() {
                    Ok(v)
                } else if -v <= threshold {
                    Ok(T::zero())
                } else {
                    Err(Error::NotPsd {
                        value: v.to_f64_lossless(),
                        max: max.to_f64_lossless(),
                    })
                }
            })
            .collect()
    }

    /// `Q diag(values) Qᵀ`.
    pub fn reconstruct(&self) -> Mat<T> {
        let q = self.vectors.as_ref();
        let scaled = Mat::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * self.values[j]);
        scaled.as_ref() * q.transpose()
    }
}

/// Largest absolute entry.
pub fn max_abs<T: Scalar>(m: MatRef<'_, T>) -> T {
    let mut out = T::zero();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)].abs();
            if v > out || v.is_nan() {
                out = v;
            }
        }
    }
    out
}

pub fn frobenius<T: Scalar>(m: MatRef<'_, T>) -> T {
    let mut acc = T::zero();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            acc = acc + v * v;
        }
    }
    acc.sqrt()
}

pub fn all_finite<T: Scalar>(m: MatRef<'_, T>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].is_finite()))
}

/// Relative asymmetry `max|S - Sᵀ| / max|S|`.
pub fn asymmetry<T: Scalar>(s: MatRef<'_, T>) -> T {
    let scale = max_abs(s);
    if scale == T::zero() {
        return T::zero();
    }
    let n = s.nrows();
    let mut worst = T::zero();
    for j in 0..n {
        for i in (j + 1)..n {
            let d = (s[(i, j)] - s[(j, i)]).abs();
            if d > worst {
                worst = d;
            }
        }
    }
    worst / scale
}

/// `(S + Sᵀ) / 2`.
pub fn symmetrize<T: Scalar>(s: MatRef<'_, T>) -> Mat<T> {
    let half = T::lit(0.5);
    Mat::from_fn(s.nrows(), s.ncols(), |i, j| {
        if i == j {
            s[(i, j)]
        } else {
            (s[(i, j)] + s[(j, i)]) * half
        }
    })
}

pub fn sym_eig<T: Scalar>(s: MatRef<'_, T>) -> Result<SymEig<T>> {
    if s.nrows() != s.ncols() {
        return Err(Error::dim(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    if !all_finite(s) {
        return Err(Error::NonFinite("eigendecomposition input".into()));
    }
    let asym = asymmetry(s);
    if asym > T::tolerance_floor(1e-12) {
        return Err(Error::NotSymmetric(asym.to_f64_lossless()));
    }
    let n = s.nrows();
    if n == 0 {
        return Ok(SymEig {
            vectors: Mat::zeros(0, 0),
            values: Vec::new(),
        });
    }
    let evd = s
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition did not converge: {e:?}")))?;
    let diag = evd.S().column_vector();
    let raw: Vec<T> = (0..n).map(|i| diag[i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw[a].partial_cmp(&raw[b]).expect("finite eigenvalues"));
    let u = evd.U();
    let vectors = Mat::from_fn(n, n, |i, j| u[(i, order[j])]);
    let values = order.iter().map(|&k| raw[k]).collect();
    Ok(SymEig { vectors, values })
}

fn check_lambda<T: Scalar>(lam: T) -> Result<()> {
    if lam > T::zero() && lam.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "regularization parameter must be positive, got {lam}"
        )))
    }
}

/// Solves `A X = B` for symmetric positive definite `A` by Cholesky, followed
/// by one step of iterative refinement.
pub fn spd_solve<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>) -> Result<Mat<T>> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::dim(format!(
            "system {}x{} with right-hand side {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let llt = a
        .llt(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Cholesky factorization failed: {e:?}")))?;
    let mut x = llt.solve(b);
    let residual = b - a * x.as_ref();
    let correction = llt.solve(residual.as_ref());
    x += correction;
    if !all_finite(x.as_ref()) {
        return Err(Error::NonFinite("linear solve produced non-finite values".into()));
    }
    Ok(x)
}

/// Ridge regression `argmin_b ‖y - G b‖² + lam ‖b‖²`, i.e. the solution of
/// `(GᵀG + lam I) b = Gᵀ y`.
pub fn ridge_solve<T: Scalar>(g: MatRef<'_, T>, y: &[T], lam: T) -> Result<Vec<T>> {
    if g.nrows() != y.len() {
        return Err(Error::dim(format!(
            "design has {} rows but target has {} entries",
            g.nrows(),
            y.len()
        )));
    }
    let rhs = Mat::from_fn(y.len(), 1, |i, _| y[i]);
    let b = ridge_solve_multi(g, rhs.as_ref(), lam)?;
    Ok((0..b.nrows()).map(|i| b[(i, 0)]).collect())
}

/// [`ridge_solve`] for several right-hand sides sharing one design matrix.
pub fn ridge_solve_multi<T: Scalar>(g: MatRef<'_, T>, y: MatRef<'_, T>, lam: T) -> Result<Mat<T>> {
    check_lambda(lam)?;
    if g.nrows() != y.nrows() {
        return Err(Error::dim(format!(
            "design has {} rows but targets have {}",
            g.nrows(),
            y.nrows()
        )));
    }
    let p = g.ncols();
    let mut normal = g.transpose() * g;
    for i in 0..p {
        normal[(i, i)] = normal[(i, i)] + lam;
    }
    let normal = symmetrize(normal.as_ref());
    let rhs = g.transpose() * y;
    spd_solve(normal.as_ref(), rhs.as_ref())
}

/// Solves `K A S + lam A = R` given eigendecompositions of the PSD matrices
/// `K` (ℓ×ℓ) and `S` (p×p).
///
/// In the eigenbases the system is diagonal:
/// `A = Q_K [ (Q_Kᵀ R Q_S)_ij / (lam + μ_i ν_j) ] Q_Sᵀ`.
pub fn solve_sylvester_ridge<T: Scalar>(
    k_eig: &SymEig<T>,
    s_eig: &SymEig<T>,
    lam: T,
    r: MatRef<'_, T>,
) -> Result<Mat<T>> {
    check_lambda(lam)?;
    if r.nrows() != k_eig.dim() || r.ncols() != s_eig.dim() {
        return Err(Error::dim(format!(
            "right-hand side is {}x{}, expected {}x{}",
            r.nrows(),
            r.ncols(),
            k_eig.dim(),
            s_eig.dim()
        )));
    }
    let mu = k_eig.psd_values()?;
    let nu = s_eig.psd_values()?;
    let qk = k_eig.vectors();
    let qs = s_eig.vectors();
    let mut core = (qk.transpose() * r) * qs;
    for j in 0..core.ncols() {
        for i in 0..core.nrows() {
            core[(i, j)] = core[(i, j)] / (lam + mu[i] * nu[j]);
        }
    }
    Ok((qk * core.as_ref()) * qs.transpose())
}
