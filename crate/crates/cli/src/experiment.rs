//! Regularization selection on a validation split and refitting.

use std::fmt;
use std::str::FromStr;

use faer::{Mat, MatRef};
use loadcast::data::{make_split, Group, MeterDataset, SplitSpec};
use loadcast::kernels::{gram, gram_symmetric, CalendarPoint, GramMatrix, KernelExpr};
use loadcast::krr::{fit_krr_with_gram, predict_krr_with_cross, KrrModel};
use loadcast::metrics::{slot_values, summarize, Metric};
use loadcast::numlin::{sym_eig, SymEig};
use loadcast::okl::{fit_okl_with_gram, predict_okl_with_cross, OklModel, OklOptions};
use loadcast::{Error, ObservationMatrix, Result};

/// 13 points, logarithmically spaced from 1e-4 to 1e2.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..13).map(|k| 10f64.powf(-4.0 + 0.5 * f64::from(k))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Krr,
    Okl,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Krr => "krr",
            Method::Okl => "okl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "krr" => Ok(Method::Krr),
            "okl" => Ok(Method::Okl),
            _ => Err(Error::Validation(format!("unknown method `{s}` (expected krr or okl)"))),
        }
    }
}

/// Meter groups to train on; `all` or a comma-separated list of groups.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroupFilter(Option<Vec<Group>>);

impl GroupFilter {
    pub fn all() -> Self {
        GroupFilter(None)
    }

    pub fn of(groups: &[Group]) -> Self {
        GroupFilter(Some(groups.to_vec()))
    }

    pub fn members(&self, ds: &MeterDataset) -> Vec<usize> {
        (0..ds.num_meters())
            .filter(|&j| match &self.0 {
                None => true,
                Some(gs) => gs.contains(&ds.meters()[j].group),
            })
            .collect()
    }
}

impl fmt::Display for GroupFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            None => f.write_str("all"),
            Some(gs) => {
                let names: Vec<&str> = gs.iter().map(|g| g.name()).collect();
                f.write_str(&names.join(","))
            }
        }
    }
}

impl FromStr for GroupFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(GroupFilter::all());
        }
        let mut groups = Vec::new();
        for part in s.split(',') {
            let g: Group = part.parse().map_err(|e: Error| Error::Validation(e.to_string()))?;
            if !groups.contains(&g) {
                groups.push(g);
            }
        }
        Ok(GroupFilter(Some(groups)))
    }
}

/// Estimator and its solver settings.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Krr,
    Okl {
        rank: usize,
        max_iters: usize,
        tol: f64,
        seed: u64,
    },
}

impl Estimator {
    pub fn method(&self) -> Method {
        match self {
            Estimator::Krr => Method::Krr,
            Estimator::Okl { .. } => Method::Okl,
        }
    }

    fn okl_options(&self, init_b: Option<Mat<f64>>) -> OklOptions<f64> {
        match *self {
            Estimator::Okl {
                max_iters, tol, seed, ..
            } => OklOptions {
                max_iters,
                rel_tol: tol,
                seed,
                init_b,
                update_b: true,
            },
            Estimator::Krr => OklOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kernel: KernelExpr,
    pub method: Method,
    /// Required for OKL, rejected for KRR.
    pub rank: Option<usize>,
    pub lambda_grid: Vec<f64>,
    pub group: GroupFilter,
    pub train_days: usize,
    pub val_frac: f64,
    /// Seeds both the validation draw and the OKL initialization.
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl ExperimentConfig {
    pub fn new(kernel: KernelExpr, method: Method, rank: Option<usize>) -> Self {
        ExperimentConfig {
            kernel,
            method,
            rank,
            lambda_grid: default_lambda_grid(),
            group: GroupFilter::all(),
            train_days: 365,
            val_frac: 0.2,
            seed: 0,
            max_iters: 100,
            tol: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_grid(&self.lambda_grid)?;
        match (self.method, self.rank) {
            (Method::Okl, None) => Err(Error::Validation("okl requires --rank".into())),
            (Method::Krr, Some(_)) => Err(Error::Validation("--rank only applies to okl".into())),
            (Method::Okl, Some(0)) => Err(Error::Validation("rank must be positive".into())),
            _ => Ok(()),
        }
    }

    pub fn estimator(&self) -> Estimator {
        match (self.method, self.rank) {
            (Method::Okl, Some(rank)) => Estimator::Okl {
                rank,
                max_iters: self.max_iters,
                tol: self.tol,
                seed: self.seed,
            },
            _ => Estimator::Krr,
        }
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Validation("lambda grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::Validation(format!("lambda {bad} is not positive")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Krr(KrrModel<f64>),
    Okl(OklModel<f64>),
}

impl FittedModel {
    pub fn method(&self) -> Method {
        match self {
            FittedModel::Krr(_) => Method::Krr,
            FittedModel::Okl(_) => Method::Okl,
        }
    }

    pub fn kernel(&self) -> &KernelExpr {
        match self {
            FittedModel::Krr(m) => &m.kernel,
            FittedModel::Okl(m) => &m.kernel,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            FittedModel::Krr(m) => m.lam,
            FittedModel::Okl(m) => m.lam,
        }
    }

    pub fn slots(&self) -> &[CalendarPoint] {
        match self {
            FittedModel::Krr(m) => &m.slots,
            FittedModel::Okl(m) => &m.slots,
        }
    }

    pub fn num_tasks(&self) -> usize {
        match self {
            FittedModel::Krr(m) => m.num_tasks(),
            FittedModel::Okl(m) => m.num_tasks(),
        }
    }

    /// Stored coefficients: `Σ_j |Ω_j|` for KRR, `(ℓ + m) p` for OKL.
    pub fn parameter_count(&self) -> usize {
        match self {
            FittedModel::Krr(m) => m.parameter_count(),
            FittedModel::Okl(m) => m.parameter_count(),
        }
    }

    pub fn predict(&self, query: &[CalendarPoint]) -> Result<Mat<f64>> {
        if query.is_empty() {
            return Ok(Mat::zeros(0, self.num_tasks()));
        }
        let cross = gram::<f64>(self.kernel(), query, self.slots())?;
        self.predict_with_cross(cross.values())
    }

    pub fn predict_with_cross(&self, cross: MatRef<'_, f64>) -> Result<Mat<f64>> {
        match self {
            FittedModel::Krr(m) => predict_krr_with_cross(m, cross),
            FittedModel::Okl(m) => predict_okl_with_cross(m, cross),
        }
    }
}

/// Gram matrices of one kernel over the train and train ∪ validation slots.
pub struct Prepared {
    kernel: KernelExpr,
    split: SplitSpec,
    fit_points: Vec<CalendarPoint>,
    train_points: Vec<CalendarPoint>,
    train_in_fit: Vec<usize>,
    val_in_fit: Vec<usize>,
    k_fit: GramMatrix<f64>,
    k_train: GramMatrix<f64>,
    eig_fit: Option<SymEig<f64>>,
    eig_train: Option<SymEig<f64>>,
}

impl Prepared {
    /// `points` are all dataset slots; `split` holds positions into them.
    pub fn new(kernel: &KernelExpr, points: &[CalendarPoint], split: &SplitSpec) -> Result<Self> {
        let fit = split.fit_slots();
        if split.train.is_empty() {
            return Err(Error::Validation("training split is empty".into()));
        }
        let pos = |slots: &[usize]| -> Vec<usize> {
            slots
                .iter()
                .map(|s| fit.binary_search(s).expect("split slots lie in the fit set"))
                .collect()
        };
        let train_in_fit = pos(&split.train);
        let val_in_fit = pos(&split.validation);
        let fit_points: Vec<CalendarPoint> = fit.iter().map(|&i| points[i]).collect();
        let train_points: Vec<CalendarPoint> = split.train.iter().map(|&i| points[i]).collect();
        let k_fit = gram_symmetric::<f64>(kernel, &fit_points)?;
        let k_train = k_fit.principal(&train_in_fit);
        Ok(Prepared {
            kernel: kernel.clone(),
            split: split.clone(),
            fit_points,
            train_points,
            train_in_fit,
            val_in_fit,
            k_fit,
            k_train,
            eig_fit: None,
            eig_train: None,
        })
    }

    pub fn split(&self) -> &SplitSpec {
        &self.split
    }

    fn eig_train(&mut self) -> Result<&SymEig<f64>> {
        if self.eig_train.is_none() {
            self.eig_train = Some(sym_eig(self.k_train.values())?);
        }
        Ok(self.eig_train.as_ref().expect("just computed"))
    }

    fn eig_fit(&mut self) -> Result<&SymEig<f64>> {
        if self.eig_fit.is_none() {
            self.eig_fit = Some(sym_eig(self.k_fit.values())?);
        }
        Ok(self.eig_fit.as_ref().expect("just computed"))
    }

    /// Fits on the training slots. `obs` covers train ∪ validation slots.
    pub fn fit_train(
        &mut self,
        est: &Estimator,
        obs: &ObservationMatrix<f64>,
        lam: f64,
        init_b: Option<Mat<f64>>,
    ) -> Result<FittedModel> {
        let train_obs = obs.select_slots(&self.train_in_fit);
        match est {
            Estimator::Krr => fit_krr_with_gram(&self.kernel, &self.train_points, &self.k_train, &train_obs, lam)
                .map(FittedModel::Krr),
            Estimator::Okl { rank, .. } => {
                let opts = est.okl_options(init_b);
                self.eig_train()?;
                let eig = self.eig_train.as_ref().expect("computed above");
                fit_okl_with_gram(&self.kernel, &self.train_points, &self.k_train, eig, &train_obs, lam, *rank, &opts)
                    .map(FittedModel::Okl)
            }
        }
    }

    /// Fits on train ∪ validation slots.
    pub fn fit_all(
        &mut self,
        est: &Estimator,
        obs: &ObservationMatrix<f64>,
        lam: f64,
        init_b: Option<Mat<f64>>,
    ) -> Result<FittedModel> {
        match est {
            Estimator::Krr => fit_krr_with_gram(&self.kernel, &self.fit_points, &self.k_fit, obs, lam)
                .map(FittedModel::Krr),
            Estimator::Okl { rank, .. } => {
                let opts = est.okl_options(init_b);
                self.eig_fit()?;
                let eig = self.eig_fit.as_ref().expect("computed above");
                fit_okl_with_gram(&self.kernel, &self.fit_points, &self.k_fit, eig, obs, lam, *rank, &opts)
                    .map(FittedModel::Okl)
            }
        }
    }

    /// Mean validation NMAE over all tasks of a model fitted on the training slots.
    pub fn validation_nmae(&self, model: &FittedModel, obs: &ObservationMatrix<f64>) -> Result<Option<f64>> {
        let cross = self.k_fit.select(&self.val_in_fit, &self.train_in_fit);
        let pred = model.predict_with_cross(cross.as_ref())?;
        let val_obs = obs.select_slots(&self.val_in_fit);
        let rows: Vec<usize> = (0..val_obs.nrows()).collect();
        let tasks: Vec<usize> = (0..val_obs.ncols()).collect();
        let values = slot_values(Metric::Nmae, &rows, &tasks, &val_obs, pred.as_ref());
        Ok(summarize(&values).mean)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionEntry {
    pub lambda: f64,
    pub validation_nmae: Option<f64>,
    /// OKL only.
    pub sweeps: Option<usize>,
    pub converged: Option<bool>,
}

pub const SELECTION_RULE: &str = "minimum mean validation NMAE; ties go to the larger lambda";

/// Result of a grid search: the log in grid order and the model trained on
/// the training slots at the chosen λ.
pub struct Selection {
    pub entries: Vec<SelectionEntry>,
    pub lambda: f64,
    pub train_model: FittedModel,
}

/// Index of the entry with the smallest validation NMAE; ties go to the
/// larger λ. Entries without a defined NMAE are never chosen.
pub fn choose_lambda(entries: &[SelectionEntry]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (g, e) in entries.iter().enumerate() {
        let Some(v) = e.validation_nmae else { continue };
        let better = match best {
            None => true,
            Some((bg, bv)) => v < bv || (v == bv && e.lambda > entries[bg].lambda),
        };
        if better {
            best = Some((g, v));
        }
    }
    best.map(|(g, _)| g)
}

/// Fits every λ on the training slots and keeps the one chosen by
/// [`choose_lambda`]. `obs` covers train ∪ validation slots of the trained
/// tasks. A single-point grid is taken as is.
pub fn select_lambda(
    prep: &mut Prepared,
    est: &Estimator,
    obs: &ObservationMatrix<f64>,
    grid: &[f64],
) -> Result<Selection> {
    validate_grid(grid)?;
    let mut entries = Vec::with_capacity(grid.len());
    let mut models = Vec::with_capacity(grid.len());
    for &lam in grid {
        let model = prep.fit_train(est, obs, lam, None)?;
        let nmae = if grid.len() > 1 { prep.validation_nmae(&model, obs)? } else { None };
        let (sweeps, converged) = match &model {
            FittedModel::Okl(m) => (Some(m.sweeps()), Some(m.converged)),
            FittedModel::Krr(_) => (None, None),
        };
        log::info!(
            "lambda {lam:e}: validation NMAE {}",
            nmae.map_or("NA".to_string(), |v| format!("{v:.6}"))
        );
        entries.push(SelectionEntry {
            lambda: lam,
            validation_nmae: nmae,
            sweeps,
            converged,
        });
        models.push(model);
    }
    let g = if grid.len() == 1 {
        0
    } else {
        choose_lambda(&entries).ok_or_else(|| {
            Error::Data("no validation slot with observed demand; cannot select lambda".into())
        })?
    };
    Ok(Selection {
        lambda: grid[g],
        train_model: models.swap_remove(g),
        entries,
    })
}

/// Selection followed by a refit on train ∪ validation; OKL refits start
/// from the mixing matrix selected on the training slots.
pub fn select_and_refit(
    prep: &mut Prepared,
    est: &Estimator,
    obs: &ObservationMatrix<f64>,
    grid: &[f64],
) -> Result<(FittedModel, Selection)> {
    let selection = select_lambda(prep, est, obs, grid)?;
    let init_b = match &selection.train_model {
        FittedModel::Okl(m) => Some(m.b.clone()),
        FittedModel::Krr(_) => None,
    };
    let model = prep.fit_all(est, obs, selection.lambda, init_b)?;
    Ok((model, selection))
}

pub struct TrainOutcome {
    pub model: FittedModel,
    pub selection: Selection,
    pub split: SplitSpec,
    /// Dataset meter positions of the trained tasks.
    pub members: Vec<usize>,
}

pub fn train(ds: &MeterDataset, cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let members = cfg.group.members(ds);
    if members.is_empty() {
        return Err(Error::Data(format!("no meters in group {}", cfg.group)));
    }
    if let Some(p) = cfg.rank {
        if p > members.len() {
            return Err(Error::Validation(format!(
                "rank {p} exceeds the {} meters being trained",
                members.len()
            )));
        }
    }
    let split = make_split(ds.num_slots(), cfg.train_days, cfg.val_frac, cfg.seed)?;
    if cfg.lambda_grid.len() > 1 && split.validation.is_empty() {
        return Err(Error::Validation(
            "a lambda grid needs a non-empty validation split".into(),
        ));
    }
    let mut prep = Prepared::new(&cfg.kernel, &ds.points(), &split)?;
    let obs = ds
        .observations()
        .select_tasks(&members)
        .select_slots(&split.fit_slots());
    let (model, selection) = select_and_refit(&mut prep, &cfg.estimator(), &obs, &cfg.lambda_grid)?;
    Ok(TrainOutcome {
        model,
        selection,
        split,
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use loadcast::data::{synth_gen, SynthParams};
    use loadcast::kernels::Preset;

    fn small() -> MeterDataset {
        synth_gen(&SynthParams {
            meters_per_group: [3, 2, 2],
            n_days: 40,
            seed: 2,
            ..Default::default()
        })
        .unwrap()
        .dataset
    }

    #[test]
    fn default_grid() {
        let g = default_lambda_grid();
        assert_eq!(g.len(), 13);
        assert!((g[0] - 1e-4).abs() < 1e-18);
        assert!((g[12] - 1e2).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn config_validation() {
        let k = Preset::Mm2.kernel();
        assert!(ExperimentConfig::new(k.clone(), Method::Okl, None).validate().is_err());
        assert!(ExperimentConfig::new(k.clone(), Method::Krr, Some(2)).validate().is_err());
        let mut c = ExperimentConfig::new(k, Method::Krr, None);
        c.lambda_grid = vec![];
        assert!(c.validate().is_err());
        c.lambda_grid = vec![1.0, -1.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn group_filters() {
        let ds = small();
        assert_eq!(GroupFilter::all().members(&ds).len(), 7);
        let f: GroupFilter = "Residential,others".parse().unwrap();
        assert_eq!(f.to_string(), "Residential,Others");
        assert_eq!(f.members(&ds), vec![0, 1, 2, 5, 6]);
        assert!("nope".parse::<GroupFilter>().is_err());
    }

    #[test]
    fn training_selects_from_grid() {
        let ds = small();
        let mut cfg = ExperimentConfig::new(Preset::Mm2.kernel(), Method::Krr, None);
        cfg.train_days = 30;
        cfg.lambda_grid = vec![1e-3, 1e-1, 10.0];
        let out = train(&ds, &cfg).unwrap();
        assert_eq!(out.selection.entries.len(), 3);
        assert!(cfg.lambda_grid.contains(&out.selection.lambda));
        let best = out
            .selection
            .entries
            .iter()
            .filter_map(|e| e.validation_nmae)
            .fold(f64::INFINITY, f64::min);
        let chosen = out.selection.entries.iter().find(|e| e.lambda == out.selection.lambda).unwrap();
        assert_eq!(chosen.validation_nmae, Some(best));
        assert_eq!(out.model.slots().len(), 240);
        assert_eq!(out.model.parameter_count(), 240 * 7);

        let mut okl = cfg.clone();
        okl.method = Method::Okl;
        okl.rank = Some(8);
        assert!(matches!(train(&ds, &okl), Err(Error::Validation(_))));
        okl.rank = Some(2);
        let out = train(&ds, &okl).unwrap();
        assert_eq!(out.model.parameter_count(), (240 + 7) * 2);
    }

    #[test]
    fn ties_go_to_larger_lambda() {
        let e = |lambda: f64, v: Option<f64>| SelectionEntry {
            lambda,
            validation_nmae: v,
            sweeps: None,
            converged: None,
        };
        assert_eq!(choose_lambda(&[e(0.1, Some(0.5)), e(1.0, Some(0.5)), e(0.01, Some(0.5))]), Some(1));
        assert_eq!(choose_lambda(&[e(10.0, Some(0.6)), e(0.1, Some(0.4)), e(1.0, None)]), Some(1));
        assert_eq!(choose_lambda(&[e(1.0, None)]), None);
    }

    #[test]
    fn undefined_validation_is_a_data_error() {
        let ds = small();
        let zero = MeterDataset::new(
            ds.meters().to_vec(),
            ds.slots().to_vec(),
            ObservationMatrix::fully_observed(Mat::zeros(ds.num_slots(), ds.num_meters())).unwrap(),
        )
        .unwrap();
        let mut cfg = ExperimentConfig::new(Preset::Am1.kernel(), Method::Krr, None);
        cfg.train_days = 30;
        cfg.lambda_grid = vec![0.1, 1.0];
        assert!(matches!(train(&zero, &cfg), Err(Error::Data(_))));
        cfg.lambda_grid = vec![0.1];
        assert!(train(&zero, &cfg).is_ok());
    }
}
