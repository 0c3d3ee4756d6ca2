//! Synthetic meter data with multiplicative seasonal structure.
//!
//! Each of `r` latent profiles factorizes as
//! `g_k(t, d, c) = daily_k(t) · yearly_k(d) · level_k(c)`; meter `j` reads
//! `Σ_k w_jk g_k + ε`, clipped at zero. Mixing weights are drawn per group and
//! perturbed per meter.

use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate};
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::calendar::{calendar_point, SLOTS_PER_DAY};
use super::{Group, Meter, MeterDataset, Slot};
use crate::error::{Error, Result};
use crate::kernels::{CalendarPoint, DAY_HOURS, YEAR_DAYS};
use crate::observations::ObservationMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    /// Meters per group, in the order Residential, SME, Others.
    pub meters_per_group: [usize; 3],
    pub n_days: usize,
    pub rank: usize,
    pub noise_sigma: f64,
    pub missing_rate: f64,
    /// Relative per-meter perturbation of the group weights, in `[0, 1]`.
    pub weight_jitter: f64,
    pub start: NaiveDate,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            meters_per_group: [20, 20, 20],
            n_days: 540,
            rank: 3,
            noise_sigma: 0.1,
            missing_rate: 0.0,
            weight_jitter: 0.3,
            start: NaiveDate::from_ymd_opt(2009, 7, 14).expect("valid date"),
            seed: 0,
        }
    }
}

/// One planted latent profile.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentProfile {
    pub base: f64,
    /// `(center hour, width hours, amplitude)` of the daily peaks.
    pub peaks: Vec<(f64, f64, f64)>,
    pub yearly_amplitude: f64,
    pub yearly_phase: f64,
    /// Multiplier per day type, Monday 0 through Sunday 6, holiday 7.
    pub levels: [f64; 8],
}

impl LatentProfile {
    pub fn daily(&self, t: f64) -> f64 {
        self.base
            + self
                .peaks
                .iter()
                .map(|&(mu, w, a)| {
                    let x = (t - mu).rem_euclid(DAY_HOURS);
                    let h = x.min(DAY_HOURS - x);
                    a * (-0.5 * (h / w) * (h / w)).exp()
                })
                .sum::<f64>()
    }

    pub fn yearly(&self, d: f64) -> f64 {
        1.0 + self.yearly_amplitude
            * (2.0 * std::f64::consts::PI * (d - self.yearly_phase) / YEAR_DAYS).cos()
    }

    pub fn level(&self, c: u8) -> f64 {
        self.levels[usize::from(c)]
    }

    pub fn value(&self, x: &CalendarPoint) -> f64 {
        self.daily(x.t) * self.yearly(x.d) * self.level(x.c)
    }
}

/// Generating parameters, for oracles.
#[derive(Debug, Clone)]
pub struct SynthTruth {
    pub profiles: Vec<LatentProfile>,
    /// m×r non-negative mixing weights.
    pub weights: Mat<f64>,
    /// ℓ×m readings before noise, clipping and masking.
    pub noiseless: Mat<f64>,
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: MeterDataset,
    pub truth: SynthTruth,
}

fn draw_profile(rng: &mut ChaCha8Rng) -> LatentProfile {
    let base = rng.random_range(0.2..0.5);
    let peaks = (0..2)
        .map(|_| {
            (
                rng.random_range(0.0..DAY_HOURS),
                rng.random_range(1.5..4.0),
                rng.random_range(0.5..1.5),
            )
        })
        .collect();
    let yearly_amplitude = rng.random_range(0.2..0.6);
    let yearly_phase = rng.random_range(0.0..YEAR_DAYS);
    let mut levels = [1.0; 8];
    for l in levels.iter_mut().take(5) {
        *l = rng.random_range(0.9..1.1);
    }
    levels[5] = rng.random_range(0.4..0.9);
    levels[6] = rng.random_range(0.4..0.9);
    levels[7] = levels[6];
    LatentProfile {
        base,
        peaks,
        yearly_amplitude,
        yearly_phase,
        levels,
    }
}

pub fn synth_gen(params: &SynthParams) -> Result<Synthetic> {
    if !(0.0..1.0).contains(&params.missing_rate) {
        return Err(Error::invalid(format!(
            "missing rate {} outside [0, 1)",
            params.missing_rate
        )));
    }
    if !(0.0..=1.0).contains(&params.weight_jitter) {
        return Err(Error::invalid(format!(
            "weight jitter {} outside [0, 1]",
            params.weight_jitter
        )));
    }
    if !(params.noise_sigma >= 0.0 && params.noise_sigma.is_finite()) {
        return Err(Error::invalid("noise sigma must be finite and non-negative"));
    }
    if params.rank == 0 || params.n_days == 0 {
        return Err(Error::invalid("rank and day count must be positive"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let r = params.rank;
    let profiles: Vec<LatentProfile> = (0..r).map(|_| draw_profile(&mut rng)).collect();

    let mut meters = Vec::new();
    let mut weight_rows: Vec<Vec<f64>> = Vec::new();
    for (g, &count) in Group::ALL.iter().zip(&params.meters_per_group) {
        let base: Vec<f64> = (0..r).map(|_| rng.random_range(0.1..1.0)).collect();
        let prefix = &g.name()[..1];
        for n in 0..count {
            meters.push(Meter {
                id: format!("{prefix}{:04}", n + 1),
                group: *g,
            });
            weight_rows.push(
                base.iter()
                    .map(|&b| b * (1.0 + params.weight_jitter * rng.random_range(-1.0..=1.0)))
                    .collect(),
            );
        }
    }
    let m = meters.len();
    let weights = Mat::from_fn(m, r, |j, k| weight_rows[j][k]);

    let holidays = BTreeSet::new();
    let mut slots = Vec::with_capacity(params.n_days * SLOTS_PER_DAY);
    for day in 0..params.n_days {
        let date = params.start + Duration::days(day as i64);
        for s in 0..SLOTS_PER_DAY {
            slots.push(Slot {
                index: slots.len(),
                date,
                slot_of_day: s as u8,
                point: calendar_point(date, s, &holidays)?,
            });
        }
    }
    let ell = slots.len();
    let latent = Mat::from_fn(ell, r, |i, k| profiles[k].value(&slots[i].point));
    let noiseless = &latent * weights.transpose();

    let mut values = Mat::<f64>::zeros(ell, m);
    let mut mask = vec![false; ell * m];
    for j in 0..m {
        for i in 0..ell {
            let eps: f64 = rng.sample(StandardNormal);
            let observed = !rng.random_bool(params.missing_rate);
            values[(i, j)] = (noiseless[(i, j)] + params.noise_sigma * eps).max(0.0);
            mask[j * ell + i] = observed;
        }
    }

    let dataset = MeterDataset::new(meters, slots, ObservationMatrix::new(values, mask)?)?;
    Ok(Synthetic {
        dataset,
        truth: SynthTruth {
            profiles,
            weights,
            noiseless,
        },
    })
}
