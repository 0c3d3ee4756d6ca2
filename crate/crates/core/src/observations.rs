use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Demand readings of `m` tasks over `ℓ` shared slots, with an observation mask.
///
/// Unobserved cells hold zero in [`values`](Self::values) and are never read by
/// the solvers.
#[derive(Debug, Clone)]
pub struct ObservationMatrix<T> {
    values: Mat<T>,
    mask: Vec<bool>,
}

impl<T: Scalar> ObservationMatrix<T> {
    /// Builds from dense values and a column-major mask (`mask[j * ℓ + i]`).
    ///
    /// Observed readings must be finite and non-negative.
    pub fn new(values: Mat<T>, mask: Vec<bool>) -> Result<Self> {
        let (rows, cols) = (values.nrows(), values.ncols());
        if mask.len() != rows * cols {
            return Err(Error::dim(format!(
                "mask has {} entries for a {rows}x{cols} matrix",
                mask.len()
            )));
        }
        let mut values = values;
        for j in 0..cols {
            for i in 0..rows {
                if mask[j * rows + i] {
                    let v = values[(i, j)];
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "reading {v} for task {j} at slot {i}"
                        )));
                    }
                    if v < T::zero() {
                        return Err(Error::domain(format!(
                            "negative reading {v} for task {j} at slot {i}"
                        )));
                    }
                } else {
                    values[(i, j)] = T::zero();
                }
            }
        }
        Ok(ObservationMatrix { values, mask })
    }

    /// Every cell observed.
    pub fn fully_observed(values: Mat<T>) -> Result<Self> {
        let n = values.nrows() * values.ncols();
        Self::new(values, vec![true; n])
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut cell: impl FnMut(usize, usize) -> Option<T>,
    ) -> Result<Self> {
        let mut mask = vec![false; rows * cols];
        let values = Mat::from_fn(rows, cols, |i, j| match cell(i, j) {
            Some(v) => {
                mask[j * rows + i] = true;
                v
            }
            None => T::zero(),
        });
        Self::new(values, mask)
    }

    /// Number of slots ℓ.
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    /// Number of tasks m.
    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> MatRef<'_, T> {
        self.values.as_ref()
    }

    #[inline]
    pub fn is_observed(&self, slot: usize, task: usize) -> bool {
        self.mask[task * self.nrows() + slot]
    }

    pub fn get(&self, slot: usize, task: usize) -> Option<T> {
        self.is_observed(slot, task)
            .then(|| self.values[(slot, task)])
    }

    /// Slot indices observed for one task, ascending.
    pub fn observed_slots(&self, task: usize) -> Vec<usize> {
        let rows = self.nrows();
        let col = &self.mask[task * rows..(task + 1) * rows];
        col.iter()
            .enumerate()
            .filter_map(|(i, &seen)| seen.then_some(i))
            .collect()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// Fraction of missing cells.
    pub fn sparsity(&self) -> f64 {
        if self.mask.is_empty() {
            return 0.0;
        }
        1.0 - self.observed_count() as f64 / self.mask.len() as f64
    }

    /// Restriction to a subset of slots, in the given order.
    pub fn select_slots(&self, slots: &[usize]) -> Self {
        let rows = self.nrows();
        let mut mask = Vec::with_capacity(slots.len() * self.ncols());
        for j in 0..self.ncols() {
            mask.extend(slots.iter().map(|&i| self.mask[j * rows + i]));
        }
        let values = Mat::from_fn(slots.len(), self.ncols(), |i, j| self.values[(slots[i], j)]);
        ObservationMatrix { values, mask }
    }

    /// Restriction to a subset of tasks, in the given order.
    pub fn select_tasks(&self, tasks: &[usize]) -> Self {
        let rows = self.nrows();
        let mut mask = Vec::with_capacity(rows * tasks.len());
        for &j in tasks {
            mask.extend_from_slice(&self.mask[j * rows..(j + 1) * rows]);
        }
        let values = Mat::from_fn(rows, tasks.len(), |i, j| self.values[(i, tasks[j])]);
        ObservationMatrix { values, mask }
    }

    /// Converts to another precision.
    pub fn cast<U: Scalar>(&self) -> ObservationMatrix<U> {
        ObservationMatrix {
            values: Mat::from_fn(self.nrows(), self.ncols(), |i, j| {
                U::lit(self.values[(i, j)].to_f64_lossless())
            }),
            mask: self.mask.clone(),
        }
    }
}
