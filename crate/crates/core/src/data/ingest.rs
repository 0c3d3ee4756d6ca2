//! Raw half-hourly readings to a downsampled [`MeterDataset`].
//!
//! Pipeline: parse lines, decode timestamps, drop meters with impossible
//! half-hour indices, repair daylight-saving days to 48 logical half-hours,
//! average into eight 3-hour slots.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;

use chrono::NaiveDate;
use faer::Mat;

use super::calendar::{calendar_point, day_number_to_date, DayKind, DstCalendar, SLOTS_PER_DAY};
use super::{Group, Meter, MeterDataset, Slot};
use crate::error::{Error, Result};
use crate::observations::ObservationMatrix;

/// Half-hours in a regular day.
pub const HALF_HOURS: u8 = 48;
/// Largest half-hour index that can occur, on the day clocks go back.
pub const MAX_HALF_HOUR: u8 = 50;
const HALF_HOURS_PER_SLOT: u8 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp {
    /// Day number, 1 = 2009-01-01.
    pub day: u32,
    /// Half-hour of the day, 1-based.
    pub half_hour: u8,
}

/// A reading that cannot be used as recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordIssue {
    NotFiveDigits(u32),
    ZeroDay,
    ZeroHalfHour,
    /// 49 or 50 on a day without a clock change.
    BeyondDay(u8),
    /// Above 50: the whole meter is discarded.
    Beyond50(u8),
}

impl fmt::Display for RecordIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordIssue::NotFiveDigits(c) => write!(f, "timestamp {c} has more than five digits"),
            RecordIssue::ZeroDay => f.write_str("day number 0"),
            RecordIssue::ZeroHalfHour => f.write_str("half-hour index 0"),
            RecordIssue::BeyondDay(h) => write!(f, "half-hour index {h} on a day without clock change"),
            RecordIssue::Beyond50(h) => write!(f, "half-hour index {h} above 50"),
        }
    }
}

/// Splits a five-digit code into day number (first three digits) and
/// half-hour (last two).
pub fn decode_timestamp(code: u32) -> std::result::Result<Timestamp, RecordIssue> {
    if code > 99_999 {
        return Err(RecordIssue::NotFiveDigits(code));
    }
    let day = code / 100;
    let half_hour = (code % 100) as u8;
    if day == 0 {
        return Err(RecordIssue::ZeroDay);
    }
    match half_hour {
        0 => Err(RecordIssue::ZeroHalfHour),
        h if h > MAX_HALF_HOUR => Err(RecordIssue::Beyond50(h)),
        h => Ok(Timestamp { day, half_hour: h }),
    }
}

/// Readings of one day after repair, with the records that were dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct RepairedDay {
    /// Ascending half-hour indices in `1..=48`, one reading each.
    pub records: Vec<(u8, f64)>,
    pub dropped: Vec<(u8, RecordIssue)>,
}

/// Maps the half-hours of one day onto 48 logical half-hours.
///
/// When clocks go back, the recorded sequence 1..50 covers wall-clock
/// half-hours 1, 2, 3, 4, 3, 4, 5, ..., 48; the repeated pair is averaged.
/// When clocks go forward, 3 and 4 are simply absent.
pub fn repair_dst(records: &[(u8, f64)], kind: DayKind) -> RepairedDay {
    let mut sums: BTreeMap<u8, (f64, usize)> = BTreeMap::new();
    let mut dropped = Vec::new();
    for &(h, v) in records {
        let target = match (kind, h) {
            (_, 0) => Err(RecordIssue::ZeroHalfHour),
            (_, h) if h > MAX_HALF_HOUR => Err(RecordIssue::Beyond50(h)),
            (DayKind::DstEnd, h) if h <= 4 => Ok(h),
            // 5, 6 repeat wall-clock 3, 4; everything later shifts by two
            (DayKind::DstEnd, h) => Ok(h - 2),
            (_, h) if h > HALF_HOURS => Err(RecordIssue::BeyondDay(h)),
            (_, h) => Ok(h),
        };
        match target {
            Ok(t) => {
                let e = sums.entry(t).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
            Err(issue) => dropped.push((h, issue)),
        }
    }
    RepairedDay {
        records: sums
            .into_iter()
            .map(|(h, (s, n))| (h, s / n as f64))
            .collect(),
        dropped,
    }
}

/// Averages repaired half-hours into eight 3-hour slots; a slot without
/// readings is missing.
pub fn downsample_3h(records: &[(u8, f64)]) -> [Option<f64>; SLOTS_PER_DAY] {
    let mut sums = [(0.0f64, 0usize); SLOTS_PER_DAY];
    for &(h, v) in records {
        debug_assert!((1..=HALF_HOURS).contains(&h));
        let s = usize::from((h - 1) / HALF_HOURS_PER_SLOT);
        sums[s].0 += v;
        sums[s].1 += 1;
    }
    sums.map(|(s, n)| (n > 0).then(|| s / n as f64))
}

/// Readings grouped by meter, in order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawReadings {
    pub meter_ids: Vec<String>,
    /// `(code, kWh)` per meter.
    pub readings: Vec<Vec<(u32, f64)>>,
}

impl RawReadings {
    pub fn record_count(&self) -> usize {
        self.readings.iter().map(Vec::len).sum()
    }
}

fn parse_code(field: &str) -> Option<u32> {
    (field.len() == 5 && field.bytes().all(|b| b.is_ascii_digit()))
        .then(|| field.parse().ok())
        .flatten()
}

/// Reads `meter_id SEP code SEP value` lines, SEP being whitespace or a comma.
///
/// Blank lines are skipped, and so is a first line whose code field is not
/// numeric (a header).
pub fn read_raw(reader: impl BufRead, path: &str) -> Result<RawReadings> {
    let mut raw = RawReadings::default();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        let err = |message: String| Error::Parse {
            path: path.to_string(),
            line: no + 1,
            message,
        };
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        }
        if no == 0 && !fields[1].bytes().all(|b| b.is_ascii_digit()) {
            continue;
        }
        let code = parse_code(fields[1])
            .ok_or_else(|| err(format!("timestamp `{}` is not a five-digit code", fields[1])))?;
        let value: f64 = fields[2]
            .parse()
            .map_err(|_| err(format!("reading `{}` is not a number", fields[2])))?;
        if !value.is_finite() || value < 0.0 {
            return Err(err(format!("reading {value} must be finite and non-negative")));
        }
        let id = fields[0];
        let j = match index.get(id) {
            Some(&j) => j,
            None => {
                index.insert(id.to_string(), raw.meter_ids.len());
                raw.meter_ids.push(id.to_string());
                raw.readings.push(Vec::new());
                raw.meter_ids.len() - 1
            }
        };
        raw.readings[j].push((code, value));
    }
    Ok(raw)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedMeter {
    pub id: String,
    pub records: Vec<(Timestamp, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroppedRecord {
    pub meter_id: String,
    pub code: u32,
    pub issue: RecordIssue,
}

/// Meters and records removed during ingestion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RejectionReport {
    /// `(meter_id, reason)` of every discarded meter.
    pub removed: Vec<(String, String)>,
    pub dropped_records: Vec<DroppedRecord>,
}

impl RejectionReport {
    /// CSV with columns `kind,meter_id,code,reason`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,meter_id,code,reason\n");
        for (id, reason) in &self.removed {
            out.push_str(&format!("meter,{id},,{reason}\n"));
        }
        for r in &self.dropped_records {
            out.push_str(&format!("record,{},{:05},{}\n", r.meter_id, r.code, r.issue));
        }
        out
    }
}

/// Decodes timestamps and discards every meter with a half-hour index above 50.
///
/// Records with other undecodable codes are dropped and reported; the meter
/// is kept.
pub fn filter_meters(raw: &RawReadings) -> (Vec<DecodedMeter>, RejectionReport) {
    let mut report = RejectionReport::default();
    let mut kept = Vec::new();
    for (id, readings) in raw.meter_ids.iter().zip(&raw.readings) {
        let mut records = Vec::with_capacity(readings.len());
        let mut dropped = Vec::new();
        let mut worst: Option<u8> = None;
        for &(code, v) in readings {
            match decode_timestamp(code) {
                Ok(ts) => records.push((ts, v)),
                Err(RecordIssue::Beyond50(h)) => worst = Some(worst.map_or(h, |w| w.max(h))),
                Err(issue) => dropped.push(DroppedRecord {
                    meter_id: id.clone(),
                    code,
                    issue,
                }),
            }
        }
        if let Some(h) = worst {
            report
                .removed
                .push((id.clone(), format!("half-hour index {h} above 50")));
            continue;
        }
        report.dropped_records.extend(dropped);
        kept.push(DecodedMeter {
            id: id.clone(),
            records,
        });
    }
    (kept, report)
}

/// Calendar context needed to turn decoded records into slots.
#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub dst: DstCalendar,
    pub holidays: BTreeSet<NaiveDate>,
    /// Meter groups; unlisted meters are [`Group::Others`].
    pub groups: HashMap<String, Group>,
}

impl IngestOptions {
    pub fn ireland() -> Self {
        IngestOptions {
            dst: DstCalendar::ireland(),
            ..Default::default()
        }
    }
}

/// Repairs and downsamples filtered meters over the contiguous range of days
/// spanned by their readings.
pub fn build_dataset(
    meters: &[DecodedMeter],
    opts: &IngestOptions,
    report: &mut RejectionReport,
) -> Result<MeterDataset> {
    let days = meters.iter().flat_map(|m| m.records.iter().map(|(ts, _)| ts.day));
    let (first, last) = days.fold((u32::MAX, 0), |(lo, hi), d| (lo.min(d), hi.max(d)));
    if meters.is_empty() || first > last {
        return Err(Error::data("no readings left after filtering"));
    }
    let n_days = (last - first + 1) as usize;
    let mut slots = Vec::with_capacity(n_days * SLOTS_PER_DAY);
    let mut kinds = Vec::with_capacity(n_days);
    for k in 0..n_days {
        let date = day_number_to_date(first + k as u32)?;
        kinds.push(opts.dst.kind(date));
        for s in 0..SLOTS_PER_DAY {
            slots.push(Slot {
                index: slots.len(),
                date,
                slot_of_day: s as u8,
                point: calendar_point(date, s, &opts.holidays)?,
            });
        }
    }

    let ell = slots.len();
    let mut values = Mat::<f64>::zeros(ell, meters.len());
    let mut mask = vec![false; ell * meters.len()];
    for (j, meter) in meters.iter().enumerate() {
        let mut by_day: BTreeMap<u32, Vec<(u8, f64)>> = BTreeMap::new();
        for &(ts, v) in &meter.records {
            by_day.entry(ts.day).or_default().push((ts.half_hour, v));
        }
        for (day, records) in by_day {
            let k = (day - first) as usize;
            let repaired = repair_dst(&records, kinds[k]);
            for (h, issue) in repaired.dropped {
                report.dropped_records.push(DroppedRecord {
                    meter_id: meter.id.clone(),
                    code: day * 100 + u32::from(h),
                    issue,
                });
            }
            for (s, v) in downsample_3h(&repaired.records).into_iter().enumerate() {
                if let Some(v) = v {
                    let i = k * SLOTS_PER_DAY + s;
                    values[(i, j)] = v;
                    mask[j * ell + i] = true;
                }
            }
        }
    }

    let meters = meters
        .iter()
        .map(|m| Meter {
            id: m.id.clone(),
            group: opts.groups.get(&m.id).copied().unwrap_or(Group::Others),
        })
        .collect();
    MeterDataset::new(meters, slots, ObservationMatrix::new(values, mask)?)
}

/// [`filter_meters`] followed by [`build_dataset`].
pub fn ingest(raw: &RawReadings, opts: &IngestOptions) -> Result<(MeterDataset, RejectionReport)> {
    let (meters, mut report) = filter_meters(raw);
    let dataset = build_dataset(&meters, opts, &mut report)?;
    Ok((dataset, report))
}
