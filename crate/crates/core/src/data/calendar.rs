use std::collections::BTreeSet;

use chrono::{Datelike, Duration, NaiveDate};

use crate::error::{Error, Result};
use crate::kernels::{CalendarPoint, HOLIDAY_CLASS};

/// Downsampled slots per day.
pub const SLOTS_PER_DAY: usize = 8;
/// Width of one downsampled slot, in hours.
pub const SLOT_HOURS: f64 = 3.0;

/// Date of day number 1 in meter timestamps.
pub fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2009, 1, 1).expect("valid epoch")
}

/// Calendar date of a 1-based day number.
pub fn day_number_to_date(day: u32) -> Result<NaiveDate> {
    if day == 0 {
        return Err(Error::domain("day numbers start at 1"));
    }
    Ok(epoch() + Duration::days(i64::from(day) - 1))
}

pub fn date_to_day_number(date: NaiveDate) -> Result<u32> {
    let n = (date - epoch()).num_days() + 1;
    u32::try_from(n)
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::domain(format!("{date} precedes the day-number epoch")))
}

/// Monday 0 through Sunday 6; listed holidays map to class 7.
pub fn day_type(date: NaiveDate, holidays: &BTreeSet<NaiveDate>) -> u8 {
    if holidays.contains(&date) {
        HOLIDAY_CLASS
    } else {
        date.weekday().num_days_from_monday() as u8
    }
}

/// Midpoint of a 3-hour slot, in hours.
pub fn slot_midpoint(slot_of_day: usize) -> f64 {
    SLOT_HOURS * slot_of_day as f64 + SLOT_HOURS / 2.0
}

pub fn calendar_point(
    date: NaiveDate,
    slot_of_day: usize,
    holidays: &BTreeSet<NaiveDate>,
) -> Result<CalendarPoint> {
    if slot_of_day >= SLOTS_PER_DAY {
        return Err(Error::domain(format!("slot of day {slot_of_day} outside 0..8")));
    }
    CalendarPoint::new(
        slot_midpoint(slot_of_day),
        f64::from(date.ordinal()),
        day_type(date, holidays),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DayKind {
    Normal,
    /// Clocks go forward: half-hours 3 and 4 do not exist.
    DstStart,
    /// Clocks go back: two extra half-hours, up to 50 in total.
    DstEnd,
}

/// Daylight-saving transition dates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DstCalendar {
    starts: BTreeSet<NaiveDate>,
    ends: BTreeSet<NaiveDate>,
}

fn last_sunday(year: i32, month: u32) -> NaiveDate {
    let first_next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)
    }
    .expect("valid month");
    let last = first_next.pred_opt().expect("valid date");
    let back = last.weekday().num_days_from_sunday();
    last - Duration::days(i64::from(back))
}

impl DstCalendar {
    /// European rule: last Sunday of March and of October.
    pub fn eu(years: impl IntoIterator<Item = i32>) -> Self {
        let mut cal = DstCalendar::default();
        for y in years {
            cal.starts.insert(last_sunday(y, 3));
            cal.ends.insert(last_sunday(y, 10));
        }
        cal
    }

    /// Transitions in Ireland over the years covered by the CER trial and
    /// its neighbours.
    pub fn ireland() -> Self {
        Self::eu(2008..=2012)
    }

    pub fn add_start(&mut self, date: NaiveDate) {
        self.ends.remove(&date);
        self.starts.insert(date);
    }

    pub fn add_end(&mut self, date: NaiveDate) {
        self.starts.remove(&date);
        self.ends.insert(date);
    }

    /// Replaces the transitions of every year mentioned in `other`.
    pub fn override_with(&mut self, other: &DstCalendar) {
        let years: BTreeSet<i32> = other.starts.iter().chain(&other.ends).map(|d| d.year()).collect();
        self.starts.retain(|d| !years.contains(&d.year()));
        self.ends.retain(|d| !years.contains(&d.year()));
        self.starts.extend(&other.starts);
        self.ends.extend(&other.ends);
    }

    pub fn kind(&self, date: NaiveDate) -> DayKind {
        if self.starts.contains(&date) {
            DayKind::DstStart
        } else if self.ends.contains(&date) {
            DayKind::DstEnd
        } else {
            DayKind::Normal
        }
    }

    /// Parses `YYYY-MM-DD start|end` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut cal = DstCalendar::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_string(),
                line: no + 1,
                message,
            };
            let mut parts = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty());
            let (Some(date), Some(kind), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(format!("expected `date start|end`, got `{line}`")));
            };
            let date = NaiveDate::parse_from_str(date, "%Y-%m-%d")
                .map_err(|e| err(format!("bad date `{date}`: {e}")))?;
            match kind.to_ascii_lowercase().as_str() {
                "start" => cal.add_start(date),
                "end" => cal.add_end(date),
                other => return Err(err(format!("unknown transition `{other}`"))),
            }
        }
        Ok(cal)
    }
}

/// Parses a holiday list: one ISO date per line, `#` comments allowed.
pub fn parse_holidays(text: &str, path: &str) -> Result<BTreeSet<NaiveDate>> {
    let mut out = BTreeSet::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let date = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|e| Error::Parse {
            path: path.to_string(),
            line: no + 1,
            message: format!("bad date `{line}`: {e}"),
        })?;
        out.insert(date);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn day_numbers() {
        assert_eq!(day_number_to_date(1).unwrap(), ymd(2009, 1, 1));
        assert_eq!(day_number_to_date(195).unwrap(), ymd(2009, 7, 14));
        assert_eq!(day_number_to_date(366).unwrap(), ymd(2010, 1, 1));
        assert_eq!(date_to_day_number(ymd(2010, 12, 31)).unwrap(), 730);
        assert!(day_number_to_date(0).is_err());
        assert!(date_to_day_number(ymd(2008, 12, 31)).is_err());
    }

    #[test]
    fn day_types() {
        let none = BTreeSet::new();
        // 2009-07-14 was a Tuesday
        assert_eq!(day_type(ymd(2009, 7, 14), &none), 1);
        assert_eq!(day_type(ymd(2009, 7, 19), &none), 6);
        let hol: BTreeSet<_> = [ymd(2009, 12, 25)].into();
        assert_eq!(day_type(ymd(2009, 12, 25), &hol), HOLIDAY_CLASS);
        let p = calendar_point(ymd(2009, 7, 14), 7, &none).unwrap();
        assert_eq!((p.t, p.d, p.c), (22.5, 195.0, 1));
        assert!(calendar_point(ymd(2009, 7, 14), 8, &none).is_err());
    }

    #[test]
    fn eu_transitions() {
        let cal = DstCalendar::ireland();
        assert_eq!(cal.kind(ymd(2009, 3, 29)), DayKind::DstStart);
        assert_eq!(cal.kind(ymd(2009, 10, 25)), DayKind::DstEnd);
        assert_eq!(cal.kind(ymd(2010, 3, 28)), DayKind::DstStart);
        assert_eq!(cal.kind(ymd(2010, 10, 31)), DayKind::DstEnd);
        assert_eq!(cal.kind(ymd(2010, 10, 24)), DayKind::Normal);
    }

    #[test]
    fn override_replaces_year() {
        let mut cal = DstCalendar::ireland();
        let custom = DstCalendar::parse("# test\n2010-04-04 start\n2010-10-24, end\n", "dst").unwrap();
        cal.override_with(&custom);
        assert_eq!(cal.kind(ymd(2010, 3, 28)), DayKind::Normal);
        assert_eq!(cal.kind(ymd(2010, 4, 4)), DayKind::DstStart);
        assert_eq!(cal.kind(ymd(2010, 10, 24)), DayKind::DstEnd);
        assert_eq!(cal.kind(ymd(2009, 10, 25)), DayKind::DstEnd);
        assert!(matches!(
            DstCalendar::parse("2010-04-04 sideways", "dst"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn holidays_file() {
        let h = parse_holidays("2009-12-25\n\n2010-01-01 # new year\n", "h").unwrap();
        assert_eq!(h.len(), 2);
        assert!(matches!(parse_holidays("x", "h"), Err(Error::Parse { line: 1, .. })));
    }
}
