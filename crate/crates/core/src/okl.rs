//! Low-rank output kernel learning.
//!
//! Every task predictor is a mix of `p` latent functions shared by all tasks:
//!
//! ```text
//! f_j(x) = Σ_k B[j,k] g_k(x),   g_k(x) = Σ_i A[i,k] K(x_i, x)
//! ```
//!
//! so the output kernel is `L = B Bᵀ` with rank at most `p`, and only
//! `(ℓ + m) p` numbers are stored. Writing the vector-valued coefficients as
//! `C` with `A = C B`, the RKHS norm `tr(L Cᵀ K C)` becomes `tr(Aᵀ K A)` and
//! `tr(L) = ‖B‖²_F`, so the trace-regularized problem over the rank-`p` cone
//! is
//!
//! ```text
//! J(A, B) = Σ_{observed (i,j)} (Y_ij - (K A Bᵀ)_ij)² + λ tr(Aᵀ K A) + λ ‖B‖²_F
//! ```
//!
//! [`fit_okl`] minimizes `J` by block-coordinate descent. The `A` block fills
//! unobserved cells with the current predictions (a majorizer of the masked
//! loss) and solves the resulting Sylvester-type system exactly in the
//! eigenbasis of `K`; the `B` block is an exact masked ridge regression per
//! task. Both steps decrease `J`, so the objective trace is monotone.

use std::collections::BTreeMap;

use faer::{Mat, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{gram, gram_symmetric, CalendarPoint, GramMatrix, KernelExpr};
use crate::numlin::{
    all_finite, frobenius, ridge_solve_multi, solve_sylvester_ridge, spd_solve, sym_eig, symmetrize, SymEig,
};
pub use crate::observations::ObservationMatrix;
use crate::scalar::Scalar;

/// Allowed relative objective increase before a sweep is declared broken.
const MONOTONE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OklOptions<T> {
    pub max_iters: usize,
    /// Stop once the relative objective decrease of a sweep falls below this.
    pub rel_tol: f64,
    /// Seed of the Gaussian initialization of `B`.
    pub seed: u64,
    /// Explicit initial `B` (m×p) instead of the seeded draw.
    pub init_b: Option<Mat<T>>,
    /// When false, `B` stays at its initial value.
    pub update_b: bool,
}

impl<T> Default for OklOptions<T> {
    fn default() -> Self {
        OklOptions {
            max_iters: 100,
            rel_tol: 1e-6,
            seed: 0,
            init_b: None,
            update_b: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OklModel<T> {
    pub kernel: KernelExpr,
    pub lam: T,
    pub rank: usize,
    /// Shared training inputs x_1..x_ℓ.
    pub slots: Vec<CalendarPoint>,
    /// ℓ×p latent-function coefficients.
    pub a: Mat<T>,
    /// m×p mixing coefficients; `L = B Bᵀ`.
    pub b: Mat<T>,
    /// Objective at initialization followed by its value after every sweep.
    pub trace: Vec<T>,
    pub converged: bool,
}

impl<T: Scalar> OklModel<T> {
    pub fn num_tasks(&self) -> usize {
        self.b.nrows()
    }

    pub fn sweeps(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }

    /// `(ℓ + m) p`.
    pub fn parameter_count(&self) -> usize {
        self.a.nrows() * self.a.ncols() + self.b.nrows() * self.b.ncols()
    }

    pub fn predict(&self, query: &[CalendarPoint]) -> Result<Mat<T>> {
        predict_okl(self, query)
    }
}

/// Intermediate states exposed to [`fit_okl_observed`].
#[derive(Debug)]
pub enum SweepEvent<'a, T> {
    /// After the `A` block: `imputed` is the completed target used by the solve.
    AUpdated {
        a: MatRef<'a, T>,
        b: MatRef<'a, T>,
        imputed: MatRef<'a, T>,
    },
    /// After the `B` block; `latent` is `K A`.
    BUpdated {
        a: MatRef<'a, T>,
        b: MatRef<'a, T>,
        latent: MatRef<'a, T>,
    },
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

/// `J(A, B)` evaluated on the true observation mask.
pub fn okl_objective<T: Scalar>(
    a: MatRef<'_, T>,
    b: MatRef<'_, T>,
    k: MatRef<'_, T>,
    obs: &ObservationMatrix<T>,
    lam: T,
) -> Result<T> {
    check_lambda(lam)?;
    let (l, m) = (obs.nrows(), obs.ncols());
    if k.nrows() != l || k.ncols() != l || a.nrows() != l || b.nrows() != m || a.ncols() != b.ncols() {
        return Err(Error::dim(format!(
            "K {}x{}, A {}x{}, B {}x{}, Y {l}x{m}",
            k.nrows(),
            k.ncols(),
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let latent = k * a;
    objective_from_latent(a, b, latent.as_ref(), obs, lam)
}

fn objective_from_latent<T: Scalar>(
    a: MatRef<'_, T>,
    b: MatRef<'_, T>,
    latent: MatRef<'_, T>,
    obs: &ObservationMatrix<T>,
    lam: T,
) -> Result<T> {
    let fit = latent * b.transpose();
    let y = obs.values();
    let mut loss = T::zero();
    for j in 0..obs.ncols() {
        for i in 0..obs.nrows() {
            if obs.is_observed(i, j) {
                let r = y[(i, j)] - fit[(i, j)];
                loss = loss + r * r;
            }
        }
    }
    let mut norm = T::zero();
    for k in 0..a.ncols() {
        for i in 0..a.nrows() {
            norm = norm + a[(i, k)] * latent[(i, k)];
        }
    }
    let mut trace_l = T::zero();
    for k in 0..b.ncols() {
        for j in 0..b.nrows() {
            trace_l = trace_l + b[(j, k)] * b[(j, k)];
        }
    }
    let value = loss + lam * norm + lam * trace_l;
    if !value.is_finite() {
        return Err(Error::NonFinite("objective".into()));
    }
    Ok(value)
}

/// Seeded standard-normal `B` scaled by `1/√p`.
pub fn initial_mixing<T: Scalar>(tasks: usize, rank: usize, seed: u64) -> Mat<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (rank as f64).sqrt();
    Mat::from_fn(tasks, rank, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::lit(z * scale)
    })
}

pub fn fit_okl<T: Scalar>(
    kernel: &KernelExpr,
    slots: &[CalendarPoint],
    obs: &ObservationMatrix<T>,
    lam: T,
    rank: usize,
    opts: &OklOptions<T>,
) -> Result<OklModel<T>> {
    let k = gram_symmetric::<T>(kernel, slots)?;
    let k_eig = sym_eig(k.values())?;
    fit_okl_with_gram(kernel, slots, &k, &k_eig, obs, lam, rank, opts)
}

/// [`fit_okl`] reusing a Gram matrix over `slots` and its eigendecomposition.
///
/// Fully observed data is fitted in the eigenbasis of `K`, where a sweep
/// costs `O(ℓ m p)` instead of `O(ℓ² p)`; the iterates are the same as those
/// of [`fit_okl_observed`] up to rounding.
#[allow(clippy::too_many_arguments)]
pub fn fit_okl_with_gram<T: Scalar>(
    kernel: &KernelExpr,
    slots: &[CalendarPoint],
    k: &GramMatrix<T>,
    k_eig: &SymEig<T>,
    obs: &ObservationMatrix<T>,
    lam: T,
    rank: usize,
    opts: &OklOptions<T>,
) -> Result<OklModel<T>> {
    if obs.is_fully_observed() {
        let b = check_inputs(slots, k, k_eig, obs, lam, rank, opts)?;
        let (a, b, trace, converged) = sweeps_in_eigenbasis(k_eig, obs, lam, b, opts)?;
        return Ok(OklModel {
            kernel: kernel.clone(),
            lam,
            rank,
            slots: slots.to_vec(),
            a,
            b,
            trace,
            converged,
        });
    }
    fit_okl_observed(kernel, slots, k, k_eig, obs, lam, rank, opts, &mut |_| {})
}

/// Validates the problem and returns the initial `B`.
fn check_inputs<T: Scalar>(
    slots: &[CalendarPoint],
    k: &GramMatrix<T>,
    k_eig: &SymEig<T>,
    obs: &ObservationMatrix<T>,
    lam: T,
    rank: usize,
    opts: &OklOptions<T>,
) -> Result<Mat<T>> {
    check_lambda(lam)?;
    let l = slots.len();
    let m = obs.ncols();
    if k.nrows() != l || k.ncols() != l || k_eig.dim() != l {
        return Err(Error::dim(format!(
            "Gram matrix {}x{} (eigendecomposition {}) for {l} slots",
            k.nrows(),
            k.ncols(),
            k_eig.dim()
        )));
    }
    if obs.nrows() != l {
        return Err(Error::dim(format!(
            "observations cover {} slots, model has {l}",
            obs.nrows()
        )));
    }
    if rank == 0 || rank > m {
        return Err(Error::invalid(format!(
            "rank must lie in [1, {m}], got {rank}"
        )));
    }
    match &opts.init_b {
        Some(init) => {
            if init.nrows() != m || init.ncols() != rank {
                return Err(Error::dim(format!(
                    "initial B is {}x{}, expected {m}x{rank}",
                    init.nrows(),
                    init.ncols()
                )));
            }
            Ok(init.clone())
        }
        None => Ok(initial_mixing(m, rank, opts.seed)),
    }
}

/// Appends a sweep's objective, enforcing monotonicity; true once converged.
fn push_objective<T: Scalar>(trace: &mut Vec<T>, value: T, rel_tol: f64) -> Result<bool> {
    let prev = *trace.last().expect("trace starts non-empty");
    if value > prev + T::tolerance_floor(MONOTONE_SLACK) * prev.abs() {
        return Err(Error::Internal(format!(
            "objective increased from {prev} to {value}"
        )));
    }
    trace.push(value);
    let decrease = if prev > T::zero() {
        ((prev - value) / prev).to_f64_lossless()
    } else {
        0.0
    };
    Ok(decrease < rel_tol)
}

type Fitted<T> = (Mat<T>, Mat<T>, Vec<T>, bool);

/// Block-coordinate descent on fully observed data, with `A = U Â` kept in
/// the eigenbasis `K = U diag(μ) Uᵀ`. Then `K A = U diag(μ) Â`, and every
/// quantity of a sweep only involves `Uᵀ Y`, computed once.
fn sweeps_in_eigenbasis<T: Scalar>(
    k_eig: &SymEig<T>,
    obs: &ObservationMatrix<T>,
    lam: T,
    mut b: Mat<T>,
    opts: &OklOptions<T>,
) -> Result<Fitted<T>> {
    let mu = k_eig.psd_values()?;
    let u = k_eig.vectors();
    let y = obs.values();
    let (l, rank) = (y.nrows(), b.ncols());
    let y_hat = u.transpose() * y;
    let y_sq = frobenius(y).powi(2);

    let objective = |a_hat: MatRef<'_, T>, b: MatRef<'_, T>| -> Result<T> {
        let g = Mat::from_fn(l, rank, |i, c| mu[i] * a_hat[(i, c)]);
        let gtg = g.transpose() * g.as_ref();
        let gty = g.transpose() * y_hat.as_ref();
        let btb = b.transpose() * b;
        let mut loss = y_sq;
        for c in 0..rank {
            for j in 0..b.nrows() {
                loss = loss - T::lit(2.0) * gty[(c, j)] * b[(j, c)];
            }
            for d in 0..rank {
                loss = loss + gtg[(c, d)] * btb[(c, d)];
            }
        }
        let mut norm = T::zero();
        for c in 0..rank {
            for i in 0..l {
                norm = norm + mu[i] * a_hat[(i, c)] * a_hat[(i, c)];
            }
        }
        let value = loss.max(T::zero()) + lam * norm + lam * frobenius(b).powi(2);
        if !value.is_finite() {
            return Err(Error::NonFinite("objective".into()));
        }
        Ok(value)
    };

    let mut a_hat = Mat::<T>::zeros(l, rank);
    let mut trace = vec![objective(a_hat.as_ref(), b.as_ref())?];
    let mut converged = false;
    for _ in 0..opts.max_iters {
        let s_eig = sym_eig(symmetrize((b.transpose() * b.as_ref()).as_ref()).as_ref())?;
        let nu = s_eig.psd_values()?;
        let q = s_eig.vectors();
        let mut core = (y_hat.as_ref() * b.as_ref()) * q;
        for c in 0..rank {
            for i in 0..l {
                core[(i, c)] = core[(i, c)] / (lam + mu[i] * nu[c]);
            }
        }
        a_hat = core.as_ref() * q.transpose();

        if opts.update_b {
            let g = Mat::from_fn(l, rank, |i, c| mu[i] * a_hat[(i, c)]);
            let mut normal = g.transpose() * g.as_ref();
            for c in 0..rank {
                normal[(c, c)] = normal[(c, c)] + lam;
            }
            let normal = symmetrize(normal.as_ref());
            let rhs = g.transpose() * y_hat.as_ref();
            b = spd_solve(normal.as_ref(), rhs.as_ref())?.transpose().to_owned();
        }
        if !all_finite(a_hat.as_ref()) || !all_finite(b.as_ref()) {
            return Err(Error::NonFinite("OKL iterate".into()));
        }
        let value = objective(a_hat.as_ref(), b.as_ref())?;
        if push_objective(&mut trace, value, opts.rel_tol)? {
            converged = true;
            break;
        }
    }
    Ok((u * a_hat.as_ref(), b, trace, converged))
}

/// [`fit_okl_with_gram`] reporting the iterate after every block update.
///
/// Always runs the masked algorithm in the original coordinates.
#[allow(clippy::too_many_arguments)]
pub fn fit_okl_observed<T: Scalar>(
    kernel: &KernelExpr,
    slots: &[CalendarPoint],
    k: &GramMatrix<T>,
    k_eig: &SymEig<T>,
    obs: &ObservationMatrix<T>,
    lam: T,
    rank: usize,
    opts: &OklOptions<T>,
    observer: &mut dyn FnMut(SweepEvent<'_, T>),
) -> Result<OklModel<T>> {
    let mut b = check_inputs(slots, k, k_eig, obs, lam, rank, opts)?;
    let l = slots.len();
    let m = obs.ncols();
    let mut a = Mat::<T>::zeros(l, rank);
    let kv = k.values();
    let y = obs.values();
    let full = obs.is_fully_observed();

    let mut patterns: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for j in 0..m {
        patterns.entry(obs.observed_slots(j)).or_default().push(j);
    }

    let mut latent = Mat::<T>::zeros(l, rank);
    let mut trace = vec![objective_from_latent(a.as_ref(), b.as_ref(), latent.as_ref(), obs, lam)?];
    let mut converged = false;

    for _ in 0..opts.max_iters {
        // A block on the completed targets.
        let imputed = if full {
            y.to_owned()
        } else {
            let fit = latent.as_ref() * b.transpose();
            Mat::from_fn(l, m, |i, j| {
                if obs.is_observed(i, j) {
                    y[(i, j)]
                } else {
                    fit[(i, j)]
                }
            })
        };
        let gram_b = symmetrize((b.transpose() * b.as_ref()).as_ref());
        let s_eig = sym_eig(gram_b.as_ref())?;
        let rhs = imputed.as_ref() * b.as_ref();
        a = solve_sylvester_ridge(k_eig, &s_eig, lam, rhs.as_ref())?;
        observer(SweepEvent::AUpdated {
            a: a.as_ref(),
            b: b.as_ref(),
            imputed: imputed.as_ref(),
        });
        latent = kv * a.as_ref();

        // B block: masked ridge regression per observation pattern.
        if opts.update_b {
            for (omega, members) in &patterns {
                if omega.is_empty() {
                    for &j in members {
                        for c in 0..rank {
                            b[(j, c)] = T::zero();
                        }
                    }
                    continue;
                }
                let design = Mat::from_fn(omega.len(), rank, |i, c| latent[(omega[i], c)]);
                let targets = Mat::from_fn(omega.len(), members.len(), |i, c| y[(omega[i], members[c])]);
                let coef = ridge_solve_multi(design.as_ref(), targets.as_ref(), lam)?;
                for (c_idx, &j) in members.iter().enumerate() {
                    for c in 0..rank {
                        b[(j, c)] = coef[(c, c_idx)];
                    }
                }
            }
            observer(SweepEvent::BUpdated {
                a: a.as_ref(),
                b: b.as_ref(),
                latent: latent.as_ref(),
            });
        }
        if !all_finite(a.as_ref()) || !all_finite(b.as_ref()) {
            return Err(Error::NonFinite("OKL iterate".into()));
        }

        let value = objective_from_latent(a.as_ref(), b.as_ref(), latent.as_ref(), obs, lam)?;
        if push_objective(&mut trace, value, opts.rel_tol)? {
            converged = true;
            break;
        }
    }

    Ok(OklModel {
        kernel: kernel.clone(),
        lam,
        rank,
        slots: slots.to_vec(),
        a,
        b,
        trace,
        converged,
    })
}

/// `K(query, slots) A`: the latent profiles `g_k` at the query points.
pub fn latent_profiles<T: Scalar>(model: &OklModel<T>, query: &[CalendarPoint]) -> Result<Mat<T>> {
    if query.is_empty() {
        return Ok(Mat::zeros(0, model.rank));
    }
    let cross = gram::<T>(&model.kernel, query, &model.slots)?;
    latent_profiles_with_cross(model, cross.values())
}

pub fn latent_profiles_with_cross<T: Scalar>(model: &OklModel<T>, cross: MatRef<'_, T>) -> Result<Mat<T>> {
    if cross.ncols() != model.a.nrows() {
        return Err(Error::dim(format!(
            "cross-Gram has {} columns, model has {} slots",
            cross.ncols(),
            model.a.nrows()
        )));
    }
    Ok(cross * model.a.as_ref())
}

/// `K(query, slots) A Bᵀ`.
pub fn predict_okl<T: Scalar>(model: &OklModel<T>, query: &[CalendarPoint]) -> Result<Mat<T>> {
    let g = latent_profiles(model, query)?;
    Ok(g.as_ref() * model.b.transpose())
}

pub fn predict_okl_with_cross<T: Scalar>(model: &OklModel<T>, cross: MatRef<'_, T>) -> Result<Mat<T>> {
    let g = latent_profiles_with_cross(model, cross)?;
    Ok(g.as_ref() * model.b.transpose())
}

/// Learned task-similarity matrix `L = B Bᵀ`.
pub fn output_kernel<T: Scalar>(model: &OklModel<T>) -> Mat<T> {
    symmetrize((model.b.as_ref() * model.b.transpose()).as_ref())
}

/// Latent profiles rotated to the principal directions of the fitted surface.
///
/// `A` and `B` are only identified up to an invertible `p×p` mixing, so raw
/// columns of [`latent_profiles`] are not comparable across fits. This returns
/// the leading left singular vectors of `K(query, slots) A Bᵀ`, scaled by the
/// singular values, together with those singular values.
pub fn principal_profiles<T: Scalar>(
    model: &OklModel<T>,
    query: &[CalendarPoint],
) -> Result<(Mat<T>, Vec<T>)> {
    let f = predict_okl(model, query)?;
    let svd = f
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let keep = model.rank.min(f.nrows()).min(f.ncols());
    let s = svd.S().column_vector();
    let u = svd.U();
    let values: Vec<T> = (0..keep).map(|k| s[k]).collect();
    let profiles = Mat::from_fn(f.nrows(), keep, |i, k| u[(i, k)] * values[k]);
    Ok((profiles, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Preset;
    use crate::numlin::{frobenius, max_abs};
    use rand::{Rng, SeedableRng};

    fn slots(n: usize) -> Vec<CalendarPoint> {
        (0..n)
            .map(|i| {
                let day = i / 8;
                CalendarPoint::new(1.5 + 3.0 * (i % 8) as f64, 1.0 + (day * 3 % 366) as f64, (day % 7) as u8)
                    .unwrap()
            })
            .collect()
    }

    fn mat(rows: &[&[f64]]) -> Mat<f64> {
        Mat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn objective_examples() {
        let k = mat(&[&[1.0]]);
        let obs = ObservationMatrix::fully_observed(mat(&[&[2.0]])).unwrap();
        let one = mat(&[&[1.0]]);
        let j = okl_objective(one.as_ref(), one.as_ref(), k.as_ref(), &obs, 1.0).unwrap();
        assert_eq!(j, 3.0);

        let y = mat(&[&[1.0, 2.0], &[3.0, 0.5]]);
        let obs = ObservationMatrix::fully_observed(y).unwrap();
        let z = Mat::<f64>::zeros(2, 1);
        let k = Mat::<f64>::identity(2, 2);
        let j = okl_objective(z.as_ref(), z.as_ref(), k.as_ref(), &obs, 0.7).unwrap();
        assert_eq!(j, 1.0 + 4.0 + 9.0 + 0.25);

        let none = ObservationMatrix::from_fn(2, 2, |_, _| None::<f64>).unwrap();
        let j = okl_objective(z.as_ref(), z.as_ref(), k.as_ref(), &none, 0.7).unwrap();
        assert_eq!(j, 0.0);
    }

    #[test]
    fn objective_shape_checks() {
        let obs = ObservationMatrix::fully_observed(Mat::<f64>::zeros(3, 2)).unwrap();
        let k = Mat::<f64>::identity(3, 3);
        let a = Mat::<f64>::zeros(3, 1);
        let b = Mat::<f64>::zeros(3, 1);
        assert!(matches!(
            okl_objective(a.as_ref(), b.as_ref(), k.as_ref(), &obs, 1.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn rank_and_lambda_validation() {
        let s = slots(8);
        let obs = ObservationMatrix::fully_observed(Mat::<f64>::zeros(8, 2)).unwrap();
        let k = Preset::Mm2.kernel();
        let o = OklOptions::default();
        assert!(matches!(fit_okl(&k, &s, &obs, 1.0, 0, &o), Err(Error::Validation(_))));
        assert!(matches!(fit_okl(&k, &s, &obs, 1.0, 3, &o), Err(Error::Validation(_))));
        assert!(matches!(fit_okl(&k, &s, &obs, 0.0, 1, &o), Err(Error::Validation(_))));
        assert!(matches!(fit_okl(&k, &slots(9), &obs, 1.0, 1, &o), Err(Error::Dimension(_))));
    }

    #[test]
    fn output_kernel_examples() {
        let mut model = OklModel {
            kernel: Preset::Mm2.kernel(),
            lam: 1.0,
            rank: 2,
            slots: slots(3),
            a: Mat::zeros(3, 2),
            b: Mat::identity(2, 2),
            trace: vec![],
            converged: true,
        };
        let l = output_kernel(&model);
        assert_eq!((l[(0, 0)], l[(0, 1)], l[(1, 1)]), (1.0, 0.0, 1.0));
        model.rank = 1;
        model.a = Mat::zeros(3, 1);
        model.b = mat(&[&[1.0], &[2.0]]);
        let l = output_kernel(&model);
        assert_eq!((l[(0, 0)], l[(0, 1)], l[(1, 0)], l[(1, 1)]), (1.0, 2.0, 2.0, 4.0));
        assert_eq!(model.parameter_count(), 3 + 2);
        let p = latent_profiles(&model, &slots(5)).unwrap();
        assert!(max_abs(p.as_ref()) == 0.0);
    }

    #[test]
    fn zero_mixing_predicts_zero_and_duplicates_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = OklModel {
            kernel: Preset::Sam1.kernel(),
            lam: 1.0f64,
            rank: 2,
            slots: slots(6),
            a: Mat::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0)),
            b: Mat::zeros(3, 2),
            trace: vec![],
            converged: true,
        };
        let q = slots(4);
        assert_eq!(max_abs(model.predict(&q).unwrap().as_ref()), 0.0);
        let model = OklModel {
            b: Mat::from_fn(3, 2, |i, j| (i + 2 * j) as f64 - 1.5),
            ..model
        };
        let dup = [q[2], q[2]];
        let pred = model.predict(&dup).unwrap();
        for j in 0..3 {
            assert_eq!(pred[(0, j)].to_bits(), pred[(1, j)].to_bits());
        }
        let g = latent_profiles(&model, &q).unwrap();
        let direct = g.as_ref() * model.b.transpose();
        let pred = model.predict(&q).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                assert_eq!(pred[(i, j)].to_bits(), direct[(i, j)].to_bits());
            }
        }
    }

    #[test]
    fn identical_tasks_share_a_positive_similarity() {
        let s = slots(32);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let col: Vec<f64> = (0..32).map(|_| rng.random_range(0.5..3.0)).collect();
        let obs = ObservationMatrix::from_fn(32, 2, |i, _| (i % 5 != 0).then_some(col[i])).unwrap();
        let model = fit_okl(&Preset::Mm2.kernel(), &s, &obs, 0.1, 1, &OklOptions { seed: 3, ..Default::default() }).unwrap();
        let l = output_kernel(&model);
        assert_eq!(l[(0, 0)], l[(1, 1)]);
        assert!(l[(0, 1)] > 0.0);
    }

    #[test]
    fn trace_is_monotone_with_missing_data() {
        let s = slots(48);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let obs = ObservationMatrix::from_fn(48, 6, |_, _| {
            rng.random_bool(0.8).then(|| rng.random_range(0.0f64..4.0))
        })
        .unwrap();
        for rank in [1, 3, 6] {
            let opts = OklOptions {
                seed: rank as u64,
                max_iters: 40,
                rel_tol: 0.0,
                ..Default::default()
            };
            let model = fit_okl(&Preset::Sam2.kernel(), &s, &obs, 0.05, rank, &opts).unwrap();
            assert_eq!(model.sweeps(), 40);
            for w in model.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-10 * w[0].abs(), "rank {rank}: {} -> {}", w[0], w[1]);
            }
            assert_eq!(model.parameter_count(), (48 + 6) * rank);
        }
    }

    #[test]
    fn block_updates_are_stationary() {
        let s = slots(40);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let obs = ObservationMatrix::from_fn(40, 5, |_, _| {
            rng.random_bool(0.85).then(|| rng.random_range(0.0..4.0))
        })
        .unwrap();
        let kernel = Preset::Mm2.kernel();
        let k = gram_symmetric::<f64>(&kernel, &s).unwrap();
        let k_eig = sym_eig(k.values()).unwrap();
        let lam = 0.2f64;
        let opts = OklOptions {
            max_iters: 5,
            rel_tol: 0.0,
            ..Default::default()
        };
        let mut checks = 0;
        fit_okl_observed(&kernel, &s, &k, &k_eig, &obs, lam, 3, &opts, &mut |ev| match ev {
            SweepEvent::AUpdated { a, b, imputed } => {
                let rhs = imputed * b;
                let res = (k.values() * a) * (b.transpose() * b) + a * lam - &rhs;
                assert!(frobenius(res.as_ref()) <= 1e-8 * frobenius(rhs.as_ref()));
                checks += 1;
            }
            SweepEvent::BUpdated { b, latent, .. } => {
                for j in 0..obs.ncols() {
                    let omega = obs.observed_slots(j);
                    let g = Mat::from_fn(omega.len(), 3, |i, c| latent[(omega[i], c)]);
                    let y = Mat::from_fn(omega.len(), 1, |i, _| obs.values()[(omega[i], j)]);
                    let bj = Mat::from_fn(3, 1, |c, _| b[(j, c)]);
                    let gty = g.transpose() * y.as_ref();
                    let res = g.transpose() * (g.as_ref() * bj.as_ref()) + bj.as_ref() * lam - &gty;
                    assert!(frobenius(res.as_ref()) <= 1e-10 * frobenius(gty.as_ref()));
                }
                checks += 1;
            }
        })
        .unwrap();
        assert_eq!(checks, 10);
    }

    #[test]
    fn eigenbasis_path_matches_masked_path() {
        let s = slots(64);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let obs = ObservationMatrix::from_fn(64, 7, |_, _| Some(rng.random_range(0.0f64..3.0))).unwrap();
        let kernel = Preset::Mm2.kernel();
        let k = gram_symmetric::<f64>(&kernel, &s).unwrap();
        let k_eig = sym_eig(k.values()).unwrap();
        for update_b in [true, false] {
            let opts = OklOptions {
                max_iters: 15,
                rel_tol: 0.0,
                seed: 4,
                update_b,
                ..Default::default()
            };
            let fast = fit_okl_with_gram(&kernel, &s, &k, &k_eig, &obs, 0.1, 4, &opts).unwrap();
            let slow = fit_okl_observed(&kernel, &s, &k, &k_eig, &obs, 0.1, 4, &opts, &mut |_| {}).unwrap();
            assert_eq!(fast.trace.len(), slow.trace.len());
            for (x, y) in fast.trace.iter().zip(&slow.trace) {
                assert!((x - y).abs() <= 1e-9 * y.abs(), "{x} vs {y}");
            }
            let (pf, ps) = (fast.predict(&s).unwrap(), slow.predict(&s).unwrap());
            assert!(max_abs((&pf - &ps).as_ref()) <= 1e-8 * max_abs(ps.as_ref()));
        }
    }

    #[test]
    fn seeded_fits_are_bit_identical() {
        let s = slots(24);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let obs = ObservationMatrix::from_fn(24, 4, |_, _| {
            rng.random_bool(0.9).then(|| rng.random_range(0.0f64..2.0))
        })
        .unwrap();
        let opts = OklOptions { seed: 99, ..Default::default() };
        let m1 = fit_okl(&Preset::Mm2.kernel(), &s, &obs, 0.3, 2, &opts).unwrap();
        let m2 = fit_okl(&Preset::Mm2.kernel(), &s, &obs, 0.3, 2, &opts).unwrap();
        for (x, y) in [(&m1.a, &m2.a), (&m1.b, &m2.b)] {
            for j in 0..x.ncols() {
                for i in 0..x.nrows() {
                    assert_eq!(x[(i, j)].to_bits(), y[(i, j)].to_bits());
                }
            }
        }
    }

    #[test]
    fn single_precision_fit_runs() {
        let s = slots(24);
        let obs = ObservationMatrix::<f32>::from_fn(24, 3, |i, j| Some(1.0 + ((i * (j + 1)) % 5) as f32)).unwrap();
        let model = fit_okl(&Preset::Mm2.kernel(), &s, &obs, 0.5f32, 2, &OklOptions::default()).unwrap();
        for w in model.trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-5));
        }
    }
}
