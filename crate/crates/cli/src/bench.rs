//! Comparison of the six kernel presets under independent KRR against
//! multi-task OKL with the fully multiplicative kernel.
//!
//! KRR fits every meter independently, with one λ per preset selected over
//! all meters. OKL trains two models, one on Residential ∪ Others and one on
//! SME, each with its own λ. All forecasts are scored on the test slots for
//! every group.

use std::fmt::Write as _;

use faer::Mat;
use loadcast::data::{make_split, Group, MeterDataset};
use loadcast::kernels::{CalendarPoint, Preset};
use loadcast::metrics::{evaluate, Metric, MetricsReport, Summary};
use loadcast::{Error, Result};

use crate::experiment::{default_lambda_grid, select_and_refit, Estimator, Prepared};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub lambda_grid: Vec<f64>,
    pub train_days: usize,
    pub val_frac: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    /// Rank cap of the Residential ∪ Others model.
    pub residential_rank: usize,
    /// Rank of the SME model; `None` is full rank.
    pub sme_rank: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            lambda_grid: default_lambda_grid(),
            train_days: 365,
            val_frac: 0.2,
            seed: 0,
            max_iters: 100,
            tol: 1e-6,
            residential_rank: 200,
            sme_rank: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    /// Table heading of the row's family, e.g. "Additive Models".
    pub family: String,
    pub kernel: String,
    /// `Some` for the KRR rows.
    pub preset: Option<Preset>,
    /// Selected λ per trained model, labelled by the meters it covers.
    pub lambdas: Vec<(String, f64)>,
    pub parameters: usize,
    pub report: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub groups: Vec<String>,
}

pub const OKL_FAMILY: &str = "Multi-Task OKL";

impl BenchReport {
    pub fn krr(&self, preset: Preset) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.preset == Some(preset))
    }

    pub fn okl(&self) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.family == OKL_FAMILY)
    }

    /// `method,kernel,group,metric,mean,std,evaluated_slots,skipped_slots,parameters`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,kernel,group,metric,mean,std,evaluated_slots,skipped_slots,parameters\n");
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        for row in &self.rows {
            for r in &row.report.rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    row.family,
                    row.kernel,
                    r.group,
                    r.metric,
                    fmt(r.summary.mean),
                    fmt(r.summary.std),
                    r.summary.evaluated,
                    r.summary.skipped,
                    row.parameters
                );
            }
        }
        out
    }

    /// One table per group, rows grouped by model family.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let cell = |s: Option<&Summary>, f: fn(&Summary) -> Option<f64>| {
            s.and_then(f).map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
        };
        for group in &self.groups {
            let title = if group == "All" {
                "Overall accuracy".to_string()
            } else {
                format!("Accuracy on the {group} group")
            };
            let _ = writeln!(out, "{title}");
            let _ = writeln!(
                out,
                "{:<22} {:<14} {:>8} {:>8}   {:>8} {:>8}",
                "Method", "Kernel", "NMAE", "", "MAPE", ""
            );
            let _ = writeln!(
                out,
                "{:<22} {:<14} {:>8} {:>8}   {:>8} {:>8}",
                "", "", "Mean", "Std", "Mean", "Std"
            );
            let mut last_family = "";
            for row in &self.rows {
                let family = if row.family == last_family {
                    ""
                } else {
                    if !last_family.is_empty() {
                        out.push('\n');
                    }
                    row.family.as_str()
                };
                last_family = &row.family;
                let n = row.report.get(group, Metric::Nmae);
                let m = row.report.get(group, Metric::Mape);
                let _ = writeln!(
                    out,
                    "{:<22} {:<14} {:>8} {:>8}   {:>8} {:>8}",
                    family,
                    row.kernel,
                    cell(n, |s| s.mean),
                    cell(n, |s| s.std),
                    cell(m, |s| s.mean),
                    cell(m, |s| s.std)
                );
            }
            out.push('\n');
        }
        out.push_str("Stored coefficients\n");
        for row in &self.rows {
            let lambdas: Vec<String> = row.lambdas.iter().map(|(g, l)| format!("{g}: {l:e}")).collect();
            let _ = writeln!(
                out,
                "{:<22} {:<14} {:>12}   lambda {}",
                row.family,
                row.kernel,
                row.parameters,
                lambdas.join(", ")
            );
        }
        out
    }
}

/// Evaluation groups present in the dataset: All, then each non-empty group.
pub fn evaluation_groups(ds: &MeterDataset) -> Vec<(String, Vec<usize>)> {
    let mut groups = vec![("All".to_string(), (0..ds.num_meters()).collect())];
    for g in Group::ALL {
        let members = ds.group_members(g);
        if !members.is_empty() {
            groups.push((g.name().to_string(), members));
        }
    }
    groups
}

pub fn run_bench(ds: &MeterDataset, cfg: &BenchConfig) -> Result<BenchReport> {
    let split = make_split(ds.num_slots(), cfg.train_days, cfg.val_frac, cfg.seed)?;
    if split.test.is_empty() {
        return Err(Error::Validation("benchmark needs a non-empty test period".into()));
    }
    if split.validation.is_empty() && cfg.lambda_grid.len() > 1 {
        return Err(Error::Validation(
            "a lambda grid needs a non-empty validation split".into(),
        ));
    }
    let points = ds.points();
    let fit = split.fit_slots();
    let test_points: Vec<CalendarPoint> = split.test.iter().map(|&i| points[i]).collect();
    let obs_fit = ds.observations().select_slots(&fit);
    let obs_test = ds.observations().select_slots(&split.test);
    let groups = evaluation_groups(ds);
    let test_rows: Vec<usize> = (0..split.test.len()).collect();
    let score = |forecast: &Mat<f64>| evaluate(&obs_test, forecast.as_ref(), &test_rows, &groups);

    let mut rows = Vec::new();
    let mut mm2 = None;
    for preset in Preset::ALL {
        log::info!("bench: KRR with {}", preset.label());
        let mut prep = Prepared::new(&preset.kernel(), &points, &split)?;
        let (model, selection) = select_and_refit(&mut prep, &Estimator::Krr, &obs_fit, &cfg.lambda_grid)?;
        let forecast = model.predict(&test_points)?;
        rows.push(BenchRow {
            family: preset.family().to_string(),
            kernel: preset.label().to_string(),
            preset: Some(preset),
            lambdas: vec![("All".to_string(), selection.lambda)],
            parameters: model.parameter_count(),
            report: score(&forecast),
        });
        if preset == Preset::Mm2 {
            mm2 = Some(prep);
        }
    }

    let mut prep = mm2.expect("presets include the multiplicative kernel");
    let mut forecast = Mat::<f64>::zeros(split.test.len(), ds.num_meters());
    let mut lambdas = Vec::new();
    let mut parameters = 0;
    let residential: Vec<usize> = (0..ds.num_meters())
        .filter(|&j| ds.meters()[j].group != Group::Sme)
        .collect();
    let sme = ds.group_members(Group::Sme);
    for (label, members, rank) in [
        ("Residential+Others", residential, Some(cfg.residential_rank)),
        ("SME", sme, cfg.sme_rank),
    ] {
        if members.is_empty() {
            continue;
        }
        let rank = rank.unwrap_or(members.len()).min(members.len()).max(1);
        log::info!("bench: OKL on {label}, {} meters, rank {rank}", members.len());
        let est = Estimator::Okl {
            rank,
            max_iters: cfg.max_iters,
            tol: cfg.tol,
            seed: cfg.seed,
        };
        let obs = obs_fit.select_tasks(&members);
        let (model, selection) = select_and_refit(&mut prep, &est, &obs, &cfg.lambda_grid)?;
        let part = model.predict(&test_points)?;
        for (c, &j) in members.iter().enumerate() {
            for i in 0..part.nrows() {
                forecast[(i, j)] = part[(i, c)];
            }
        }
        lambdas.push((label.to_string(), selection.lambda));
        parameters += model.parameter_count();
    }
    rows.push(BenchRow {
        family: OKL_FAMILY.to_string(),
        kernel: Preset::Mm2.label().to_string(),
        preset: None,
        lambdas,
        parameters,
        report: score(&forecast),
    });

    Ok(BenchReport {
        rows,
        groups: groups.into_iter().map(|(g, _)| g).collect(),
    })
}
