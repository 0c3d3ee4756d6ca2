//! Independent kernel ridge regression, one problem per task.
//!
//! Task `j` with observed slot set `Ω_j` solves `(K[Ω_j, Ω_j] + λ I) c_j = y_j`
//! and predicts `f_j(x) = Σ_{i ∈ Ω_j} c_ij K(x_i, x)`. Missing readings are
//! handled by restriction. Tasks sharing an observation pattern share one
//! Cholesky factorization.

use std::collections::BTreeMap;

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::kernels::{gram, gram_symmetric, CalendarPoint, GramMatrix, KernelExpr};
use crate::numlin::spd_solve;
use crate::observations::ObservationMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct KrrTask<T> {
    /// Indices into the model's slot list, ascending.
    pub observed: Vec<usize>,
    pub coef: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct KrrModel<T> {
    pub kernel: KernelExpr,
    pub lam: T,
    pub slots: Vec<CalendarPoint>,
    pub tasks: Vec<KrrTask<T>>,
}

impl<T: Scalar> KrrModel<T> {
    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// Tasks fitted without any observation; they predict zero.
    pub fn empty_tasks(&self) -> Vec<usize> {
        self.tasks
            .iter()
            .enumerate()
            .filter_map(|(j, t)| t.observed.is_empty().then_some(j))
            .collect()
    }

    /// Stored coefficients, `Σ_j |Ω_j|`.
    pub fn parameter_count(&self) -> usize {
        self.tasks.iter().map(|t| t.coef.len()).sum()
    }

    /// Dense ℓ×m coefficient matrix, zero on unobserved slots.
    pub fn coefficient_matrix(&self) -> Mat<T> {
        let mut c = Mat::zeros(self.slots.len(), self.tasks.len());
        for (j, task) in self.tasks.iter().enumerate() {
            for (&i, &v) in task.observed.iter().zip(&task.coef) {
                c[(i, j)] = v;
            }
        }
        c
    }

    pub fn predict(&self, query: &[CalendarPoint]) -> Result<Mat<T>> {
        predict_krr(self, query)
    }
}

pub fn fit_krr<T: Scalar>(
    kernel: &KernelExpr,
    slots: &[CalendarPoint],
    obs: &ObservationMatrix<T>,
    lam: T,
) -> Result<KrrModel<T>> {
    let k = gram_symmetric::<T>(kernel, slots)?;
    fit_krr_with_gram(kernel, slots, &k, obs, lam)
}

/// [`fit_krr`] against a precomputed Gram matrix over `slots`.
pub fn fit_krr_with_gram<T: Scalar>(
    kernel: &KernelExpr,
    slots: &[CalendarPoint],
    k: &GramMatrix<T>,
    obs: &ObservationMatrix<T>,
    lam: T,
) -> Result<KrrModel<T>> {
    if !(lam > T::zero() && lam.is_finite()) {
        return Err(Error::invalid(format!(
            "regularization parameter must be positive, got {lam}"
        )));
    }
    let l = slots.len();
    if k.nrows() != l || k.ncols() != l {
        return Err(Error::dim(format!(
            "Gram matrix is {}x{} for {l} slots",
            k.nrows(),
            k.ncols()
        )));
    }
    if obs.nrows() != l {
        return Err(Error::dim(format!(
            "observations cover {} slots, model has {l}",
            obs.nrows()
        )));
    }

    let m = obs.ncols();
    let mut patterns: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for j in 0..m {
        patterns.entry(obs.observed_slots(j)).or_default().push(j);
    }

    let mut tasks = vec![
        KrrTask {
            observed: Vec::new(),
            coef: Vec::new(),
        };
        m
    ];
    let y = obs.values();
    for (omega, members) in patterns {
        if omega.is_empty() {
            log::warn!("{} task(s) without observations will predict zero", members.len());
            continue;
        }
        let mut system = k.select(&omega, &omega);
        for d in 0..omega.len() {
            system[(d, d)] = system[(d, d)] + lam;
        }
        let rhs = Mat::from_fn(omega.len(), members.len(), |i, c| y[(omega[i], members[c])]);
        let coef = spd_solve(system.as_ref(), rhs.as_ref())?;
        for (c, &j) in members.iter().enumerate() {
            tasks[j] = KrrTask {
                observed: omega.clone(),
                coef: (0..omega.len()).map(|i| coef[(i, c)]).collect(),
            };
        }
    }

    Ok(KrrModel {
        kernel: kernel.clone(),
        lam,
        slots: slots.to_vec(),
        tasks,
    })
}

/// Column `j` is `K(query, slots[Ω_j]) c_j`; empty tasks give a zero column.
pub fn predict_krr<T: Scalar>(model: &KrrModel<T>, query: &[CalendarPoint]) -> Result<Mat<T>> {
    if query.is_empty() {
        return Ok(Mat::zeros(0, model.num_tasks()));
    }
    let cross = gram::<T>(&model.kernel, query, &model.slots)?;
    predict_krr_with_cross(model, cross.values())
}

/// Prediction from a precomputed cross-Gram `K(query, slots)`.
pub fn predict_krr_with_cross<T: Scalar>(model: &KrrModel<T>, cross: MatRef<'_, T>) -> Result<Mat<T>> {
    if cross.ncols() != model.slots.len() {
        return Err(Error::dim(format!(
            "cross-Gram has {} columns, model has {} slots",
            cross.ncols(),
            model.slots.len()
        )));
    }
    Ok(cross * model.coefficient_matrix())
}

/// In-sample fitted values `K[Ω_j, Ω_j] c_j` of one task.
pub fn fitted_values<T: Scalar>(model: &KrrModel<T>, k: &GramMatrix<T>, task: usize) -> Vec<T> {
    let t = &model.tasks[task];
    let block = k.select(&t.observed, &t.observed);
    let c = Mat::from_fn(t.coef.len(), 1, |i, _| t.coef[i]);
    let f = block * c;
    (0..f.nrows()).map(|i| f[(i, 0)]).collect()
}
