//! Forecast accuracy over groups of meters.
//!
//! For a slot `i` and a group `G`, let `G_i` be the members observed at `i`.
//! Both metrics are normalized by the group demand `Σ_{G_i} y`:
//!
//! * aggregated MAPE: `100 |Σ y - Σ f| / Σ y`, the error of the summed forecast;
//! * NMAE: `Σ |y - f| / Σ y`, which equals 1 for the all-zero forecast.
//!
//! A slot where `G_i` is empty or the demand sums to zero is undefined and
//! skipped by the summaries.

use std::fmt;

use faer::MatRef;

use crate::observations::ObservationMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Nmae,
    Mape,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Nmae, Metric::Mape];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Nmae => "NMAE",
            Metric::Mape => "MAPE",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Observed demand and forecast sums needed by both metrics.
struct SlotSums<T> {
    demand: T,
    forecast: T,
    abs_error: T,
}

fn slot_sums<T: Scalar>(
    slot: usize,
    group: &[usize],
    obs: &ObservationMatrix<T>,
    forecast: MatRef<'_, T>,
) -> Option<SlotSums<T>> {
    let y = obs.values();
    let mut any = false;
    let mut sums = SlotSums {
        demand: T::zero(),
        forecast: T::zero(),
        abs_error: T::zero(),
    };
    for &j in group {
        if !obs.is_observed(slot, j) {
            continue;
        }
        any = true;
        let (yv, fv) = (y[(slot, j)], forecast[(slot, j)]);
        sums.demand = sums.demand + yv;
        sums.forecast = sums.forecast + fv;
        sums.abs_error = sums.abs_error + (yv - fv).abs();
    }
    (any && sums.demand > T::zero()).then_some(sums)
}

/// Aggregated MAPE at one slot, in percent.
pub fn slot_mape<T: Scalar>(
    slot: usize,
    group: &[usize],
    obs: &ObservationMatrix<T>,
    forecast: MatRef<'_, T>,
) -> Option<T> {
    slot_sums(slot, group, obs, forecast)
        .map(|s| T::lit(100.0) * (s.demand - s.forecast).abs() / s.demand)
}

pub fn slot_nmae<T: Scalar>(
    slot: usize,
    group: &[usize],
    obs: &ObservationMatrix<T>,
    forecast: MatRef<'_, T>,
) -> Option<T> {
    slot_sums(slot, group, obs, forecast).map(|s| s.abs_error / s.demand)
}

/// Mean and population standard deviation over the defined slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    /// `None` when no slot was defined.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub evaluated: usize,
    pub skipped: usize,
}

pub fn summarize<T: Scalar>(values: &[Option<T>]) -> Summary {
    let defined: Vec<f64> = values
        .iter()
        .flatten()
        .map(|v| v.to_f64_lossless())
        .collect();
    let skipped = values.len() - defined.len();
    if defined.is_empty() {
        return Summary {
            mean: None,
            std: None,
            evaluated: 0,
            skipped,
        };
    }
    let n = defined.len() as f64;
    let mean = defined.iter().sum::<f64>() / n;
    let var = defined.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Summary {
        mean: Some(mean),
        std: Some(var.sqrt()),
        evaluated: defined.len(),
        skipped,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub group: String,
    pub metric: Metric,
    pub summary: Summary,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<ReportRow>,
}

impl MetricsReport {
    pub fn get(&self, group: &str, metric: Metric) -> Option<&Summary> {
        self.rows
            .iter()
            .find(|r| r.group == group && r.metric == metric)
            .map(|r| &r.summary)
    }

    pub const CSV_HEADER: &'static str = "group,metric,mean,std,evaluated_slots,skipped_slots";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.group,
                r.metric,
                fmt(r.summary.mean),
                fmt(r.summary.std),
                r.summary.evaluated,
                r.summary.skipped
            ));
        }
        out
    }

    /// Aligned text table, one line per group with NMAE and MAPE side by side.
    pub fn to_text(&self) -> String {
        let mut groups: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !groups.contains(&r.group.as_str()) {
                groups.push(&r.group);
            }
        }
        let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
        let mut out = format!(
            "{:<14} {:>9} {:>9}   {:>9} {:>9}   {:>6} {:>6}\n",
            "Group", "NMAE mean", "NMAE std", "MAPE mean", "MAPE std", "slots", "skip"
        );
        for g in groups {
            let n = self.get(g, Metric::Nmae);
            let m = self.get(g, Metric::Mape);
            out.push_str(&format!(
                "{:<14} {:>9} {:>9}   {:>9} {:>9}   {:>6} {:>6}\n",
                g,
                cell(n.and_then(|s| s.mean)),
                cell(n.and_then(|s| s.std)),
                cell(m.and_then(|s| s.mean)),
                cell(m.and_then(|s| s.std)),
                n.map_or(0, |s| s.evaluated),
                n.map_or(0, |s| s.skipped),
            ));
        }
        out
    }
}

/// Per-slot metric values of one group over the given slots.
pub fn slot_values<T: Scalar>(
    metric: Metric,
    slots: &[usize],
    group: &[usize],
    obs: &ObservationMatrix<T>,
    forecast: MatRef<'_, T>,
) -> Vec<Option<T>> {
    slots
        .iter()
        .map(|&i| match metric {
            Metric::Nmae => slot_nmae(i, group, obs, forecast),
            Metric::Mape => slot_mape(i, group, obs, forecast),
        })
        .collect()
}

/// One row per `(group, metric)`, summarizing over `slots`.
///
/// `forecast` must have the shape of `obs`.
pub fn evaluate<T: Scalar>(
    obs: &ObservationMatrix<T>,
    forecast: MatRef<'_, T>,
    slots: &[usize],
    groups: &[(String, Vec<usize>)],
) -> MetricsReport {
    assert_eq!(
        (forecast.nrows(), forecast.ncols()),
        (obs.nrows(), obs.ncols()),
        "forecast shape must match observations"
    );
    let mut rows = Vec::new();
    for (name, members) in groups {
        for metric in Metric::ALL {
            let values = slot_values(metric, slots, members, obs, forecast);
            rows.push(ReportRow {
                group: name.clone(),
                metric,
                summary: summarize(&values),
            });
        }
    }
    MetricsReport { rows }
}
