use faer::{Mat, MatRef};

use super::{CalendarPoint, KernelExpr};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Kernel evaluations between two point sets.
#[derive(Debug, Clone)]
pub struct GramMatrix<T> {
    values: Mat<T>,
    symmetric: bool,
}

impl<T: Scalar> GramMatrix<T> {
    pub fn values(&self) -> MatRef<'_, T> {
        self.values.as_ref()
    }

    pub fn into_values(self) -> Mat<T> {
        self.values
    }

    /// True when built from a single point set with the upper triangle mirrored.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Copies out the sub-block `K[rows, cols]`.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Mat<T> {
        let v = self.values.as_ref();
        Mat::from_fn(rows.len(), cols.len(), |i, j| v[(rows[i], cols[j])])
    }

    /// Principal sub-block `K[idx, idx]`, still exactly symmetric.
    pub fn principal(&self, idx: &[usize]) -> GramMatrix<T> {
        GramMatrix {
            values: self.select(idx, idx),
            symmetric: self.symmetric,
        }
    }
}

/// Gram matrix with entry `(i, j) = expr(rows[i], cols[j])`.
///
/// When `rows` and `cols` hold the same points the upper triangle is computed
/// and mirrored, so the result is exactly symmetric.
pub fn gram<T: Scalar>(
    expr: &KernelExpr,
    rows: &[CalendarPoint],
    cols: &[CalendarPoint],
) -> Result<GramMatrix<T>> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::invalid("Gram matrix needs non-empty point lists"));
    }
    if rows == cols {
        return gram_symmetric(expr, rows);
    }
    let values = Mat::from_fn(rows.len(), cols.len(), |i, j| {
        expr.eval::<T>(&rows[i], &cols[j])
    });
    Ok(GramMatrix {
        values,
        symmetric: false,
    })
}

pub fn gram_symmetric<T: Scalar>(
    expr: &KernelExpr,
    points: &[CalendarPoint],
) -> Result<GramMatrix<T>> {
    if points.is_empty() {
        return Err(Error::invalid("Gram matrix needs a non-empty point list"));
    }
    let n = points.len();
    let mut values = Mat::<T>::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            values[(i, j)] = expr.eval::<T>(&points[i], &points[j]);
        }
    }
    for j in 0..n {
        for i in (j + 1)..n {
            values[(i, j)] = values[(j, i)];
        }
    }
    Ok(GramMatrix {
        values,
        symmetric: true,
    })
}
