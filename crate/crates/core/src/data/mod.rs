//! Smart-meter data: ingestion of raw half-hourly readings, daylight-saving
//! repair, downsampling to 3-hour slots, splitting and synthetic generation.

pub mod calendar;
pub mod ingest;
pub mod io;
pub mod split;
pub mod synth;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::kernels::CalendarPoint;
use crate::observations::ObservationMatrix;

pub use calendar::{DayKind, DstCalendar, SLOTS_PER_DAY};
pub use ingest::{
    decode_timestamp, downsample_3h, filter_meters, ingest, read_raw, repair_dst, IngestOptions,
    RawReadings, RecordIssue, RejectionReport, Timestamp,
};
pub use split::{make_split, SplitSpec};
pub use synth::{synth_gen, SynthParams, SynthTruth, Synthetic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    Residential,
    Sme,
    Others,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Residential, Group::Sme, Group::Others];

    pub fn name(self) -> &'static str {
        match self {
            Group::Residential => "Residential",
            Group::Sme => "SME",
            Group::Others => "Others",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Group::ALL
            .into_iter()
            .find(|g| g.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::data(format!("unknown meter group `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Meter {
    pub id: String,
    pub group: Group,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    pub index: usize,
    pub date: NaiveDate,
    /// 0..8, the 3-hour window of the day.
    pub slot_of_day: u8,
    pub point: CalendarPoint,
}

/// Meters × downsampled slots, with missing cells masked.
#[derive(Debug, Clone)]
pub struct MeterDataset {
    meters: Vec<Meter>,
    slots: Vec<Slot>,
    observations: ObservationMatrix<f64>,
}

impl MeterDataset {
    /// Slots must come in whole days of eight, in increasing index and date
    /// order; meter ids must be unique.
    pub fn new(meters: Vec<Meter>, slots: Vec<Slot>, observations: ObservationMatrix<f64>) -> Result<Self> {
        if observations.nrows() != slots.len() || observations.ncols() != meters.len() {
            return Err(Error::dim(format!(
                "observations are {}x{} for {} slots and {} meters",
                observations.nrows(),
                observations.ncols(),
                slots.len(),
                meters.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(m) = meters.iter().find(|m| !seen.insert(m.id.as_str())) {
            return Err(Error::data(format!("duplicate meter id `{}`", m.id)));
        }
        if !slots.len().is_multiple_of(SLOTS_PER_DAY) {
            return Err(Error::data(format!(
                "{} slots is not a whole number of days",
                slots.len()
            )));
        }
        for (pos, s) in slots.iter().enumerate() {
            if usize::from(s.slot_of_day) != pos % SLOTS_PER_DAY {
                return Err(Error::data(format!(
                    "slot {} has slot_of_day {}, expected {}",
                    s.index,
                    s.slot_of_day,
                    pos % SLOTS_PER_DAY
                )));
            }
            if pos > 0 {
                let prev = &slots[pos - 1];
                let date_ok = if s.slot_of_day == 0 {
                    s.date > prev.date
                } else {
                    s.date == prev.date
                };
                if s.index <= prev.index || !date_ok {
                    return Err(Error::data(format!(
                        "slot {} ({}) out of order after slot {} ({})",
                        s.index, s.date, prev.index, prev.date
                    )));
                }
            }
            s.point.validate()?;
        }
        Ok(MeterDataset {
            meters,
            slots,
            observations,
        })
    }

    pub fn meters(&self) -> &[Meter] {
        &self.meters
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn observations(&self) -> &ObservationMatrix<f64> {
        &self.observations
    }

    pub fn num_meters(&self) -> usize {
        self.meters.len()
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn num_days(&self) -> usize {
        self.slots.len() / SLOTS_PER_DAY
    }

    pub fn points(&self) -> Vec<CalendarPoint> {
        self.slots.iter().map(|s| s.point).collect()
    }

    pub fn meter_index(&self, id: &str) -> Option<usize> {
        self.meters.iter().position(|m| m.id == id)
    }

    pub fn group_members(&self, group: Group) -> Vec<usize> {
        (0..self.meters.len())
            .filter(|&j| self.meters[j].group == group)
            .collect()
    }

    pub fn select_meters(&self, idx: &[usize]) -> MeterDataset {
        MeterDataset {
            meters: idx.iter().map(|&j| self.meters[j].clone()).collect(),
            slots: self.slots.clone(),
            observations: self.observations.select_tasks(idx),
        }
    }

    /// Meter count and mask sparsity per group, then for all meters.
    pub fn group_summary(&self) -> Vec<(String, usize, f64)> {
        let mut rows = Vec::new();
        for g in Group::ALL {
            let members = self.group_members(g);
            if members.is_empty() {
                continue;
            }
            let sub = self.observations.select_tasks(&members);
            rows.push((g.name().to_string(), members.len(), sub.sparsity()));
        }
        rows.push((
            "All".to_string(),
            self.num_meters(),
            self.observations.sparsity(),
        ));
        rows
    }

    /// Text table of [`group_summary`](Self::group_summary).
    pub fn summary_table(&self) -> String {
        let mut out = format!(
            "{:<12} {:>8} {:>8} {:>10}\n",
            "Group", "meters", "slots", "sparsity"
        );
        for (g, m, sp) in self.group_summary() {
            out.push_str(&format!(
                "{:<12} {:>8} {:>8} {:>9.3}%\n",
                g,
                m,
                self.num_slots(),
                100.0 * sp
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use calendar::calendar_point;
    use faer::Mat;
    use std::collections::BTreeSet;

    fn day_slots(dates: &[NaiveDate]) -> Vec<Slot> {
        let mut out = Vec::new();
        for &date in dates {
            for s in 0..SLOTS_PER_DAY {
                out.push(Slot {
                    index: out.len(),
                    date,
                    slot_of_day: s as u8,
                    point: calendar_point(date, s, &BTreeSet::new()).unwrap(),
                });
            }
        }
        out
    }

    #[test]
    fn validation() {
        let d = NaiveDate::from_ymd_opt(2009, 7, 14).unwrap();
        let meters = vec![
            Meter { id: "a".into(), group: Group::Sme },
            Meter { id: "b".into(), group: Group::Residential },
        ];
        let obs = ObservationMatrix::fully_observed(Mat::<f64>::zeros(16, 2)).unwrap();
        let slots = day_slots(&[d, d.succ_opt().unwrap()]);
        let ds = MeterDataset::new(meters.clone(), slots.clone(), obs.clone()).unwrap();
        assert_eq!(ds.group_members(Group::Sme), vec![0]);
        assert_eq!(ds.num_days(), 2);
        assert_eq!(ds.group_summary().len(), 3);

        let dup = vec![meters[0].clone(), meters[0].clone()];
        assert!(MeterDataset::new(dup, slots.clone(), obs.clone()).is_err());
        let same_day = day_slots(&[d, d]);
        assert!(MeterDataset::new(meters.clone(), same_day, obs.clone()).is_err());
        assert!(MeterDataset::new(meters, slots[..8].to_vec(), obs).is_err());
    }

    #[test]
    fn group_names() {
        assert_eq!("sme".parse::<Group>().unwrap(), Group::Sme);
        assert_eq!("Residential".parse::<Group>().unwrap(), Group::Residential);
        assert!("x".parse::<Group>().is_err());
    }
}
