//! Processed dataset files: `slots.csv`, `meters.csv` and `observations.csv`
//! (long format, observed cells only), plus the meter-group file.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use faer::Mat;

use super::{Group, Meter, MeterDataset, Slot};
use crate::error::{Error, Result};
use crate::kernels::CalendarPoint;
use crate::observations::ObservationMatrix;

pub const SLOTS_FILE: &str = "slots.csv";
pub const METERS_FILE: &str = "meters.csv";
pub const OBSERVATIONS_FILE: &str = "observations.csv";

pub fn slots_csv(ds: &MeterDataset) -> String {
    let mut out = String::from("slot_index,date,slot_of_day,t,d,c\n");
    for s in ds.slots() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.index,
            s.date.format("%Y-%m-%d"),
            s.slot_of_day,
            s.point.t,
            s.point.d,
            s.point.c
        );
    }
    out
}

pub fn meters_csv(ds: &MeterDataset) -> String {
    let mut out = String::from("meter_id,group\n");
    for m in ds.meters() {
        let _ = writeln!(out, "{},{}", m.id, m.group);
    }
    out
}

/// Observed cells ordered by slot, then by meter.
pub fn observations_csv(ds: &MeterDataset) -> String {
    let obs = ds.observations();
    let mut out = String::from("slot_index,meter_id,value\n");
    for (i, s) in ds.slots().iter().enumerate() {
        for (j, m) in ds.meters().iter().enumerate() {
            if let Some(v) = obs.get(i, j) {
                let _ = writeln!(out, "{},{},{}", s.index, m.id, v);
            }
        }
    }
    out
}

pub fn write_processed(ds: &MeterDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(SLOTS_FILE), slots_csv(ds))?;
    fs::write(dir.join(METERS_FILE), meters_csv(ds))?;
    fs::write(dir.join(OBSERVATIONS_FILE), observations_csv(ds))?;
    Ok(())
}

/// Data lines of a CSV file with the expected header, as `(line_no, fields)`.
fn records<'a>(text: &'a str, path: &str, header: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_string(),
                line: 1,
                message: format!("expected header `{header}`"),
            })
        }
    }
    let width = header.split(',').count();
    let mut out = Vec::new();
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != width {
            return Err(Error::Parse {
                path: path.to_string(),
                line: no + 1,
                message: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        out.push((no + 1, fields));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(value: &str, name: &str, path: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        path: path.to_string(),
        line,
        message: format!("bad {name} `{value}`"),
    })
}

pub fn parse_slots(text: &str, path: &str) -> Result<Vec<Slot>> {
    records(text, path, "slot_index,date,slot_of_day,t,d,c")?
        .into_iter()
        .map(|(line, f)| {
            let date = NaiveDate::parse_from_str(f[1], "%Y-%m-%d").map_err(|e| Error::Parse {
                path: path.to_string(),
                line,
                message: format!("bad date `{}`: {e}", f[1]),
            })?;
            let point = CalendarPoint {
                t: field(f[3], "t", path, line)?,
                d: field(f[4], "d", path, line)?,
                c: field(f[5], "c", path, line)?,
            };
            point.validate().map_err(|e| Error::Parse {
                path: path.to_string(),
                line,
                message: e.to_string(),
            })?;
            Ok(Slot {
                index: field(f[0], "slot_index", path, line)?,
                date,
                slot_of_day: field(f[2], "slot_of_day", path, line)?,
                point,
            })
        })
        .collect()
}

pub fn parse_meters(text: &str, path: &str) -> Result<Vec<Meter>> {
    records(text, path, "meter_id,group")?
        .into_iter()
        .map(|(line, f)| {
            let group = f[1].parse().map_err(|e: Error| Error::Parse {
                path: path.to_string(),
                line,
                message: e.to_string(),
            })?;
            Ok(Meter {
                id: f[0].to_string(),
                group,
            })
        })
        .collect()
}

pub fn parse_observations(
    text: &str,
    path: &str,
    slots: &[Slot],
    meters: &[Meter],
) -> Result<ObservationMatrix<f64>> {
    let slot_pos: HashMap<usize, usize> = slots.iter().enumerate().map(|(i, s)| (s.index, i)).collect();
    let meter_pos: HashMap<&str, usize> = meters.iter().enumerate().map(|(j, m)| (m.id.as_str(), j)).collect();
    let ell = slots.len();
    let mut values = Mat::<f64>::zeros(ell, meters.len());
    let mut mask = vec![false; ell * meters.len()];
    for (line, f) in records(text, path, "slot_index,meter_id,value")? {
        let err = |message: String| Error::Parse {
            path: path.to_string(),
            line,
            message,
        };
        let idx: usize = field(f[0], "slot_index", path, line)?;
        let i = *slot_pos.get(&idx).ok_or_else(|| err(format!("unknown slot {idx}")))?;
        let j = *meter_pos
            .get(f[1])
            .ok_or_else(|| err(format!("unknown meter `{}`", f[1])))?;
        let v: f64 = field(f[2], "value", path, line)?;
        if !v.is_finite() || v < 0.0 {
            return Err(err(format!("reading {v} must be finite and non-negative")));
        }
        if mask[j * ell + i] {
            return Err(err(format!("duplicate cell ({idx}, {})", f[1])));
        }
        values[(i, j)] = v;
        mask[j * ell + i] = true;
    }
    ObservationMatrix::new(values, mask)
}

fn read(dir: &Path, name: &str) -> Result<(String, String)> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    Ok((text, path.display().to_string()))
}

pub fn read_processed(dir: &Path) -> Result<MeterDataset> {
    let (text, path) = read(dir, SLOTS_FILE)?;
    let slots = parse_slots(&text, &path)?;
    let (text, path) = read(dir, METERS_FILE)?;
    let meters = parse_meters(&text, &path)?;
    let (text, path) = read(dir, OBSERVATIONS_FILE)?;
    let obs = parse_observations(&text, &path, &slots, &meters)?;
    MeterDataset::new(meters, slots, obs)
}

/// `meter_id,group` lines; an optional `meter_id,group` header is skipped.
pub fn parse_groups(text: &str, path: &str) -> Result<HashMap<String, Group>> {
    let mut out = HashMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (no == 0 && line.eq_ignore_ascii_case("meter_id,group")) {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_string(),
            line: no + 1,
            message,
        };
        let (id, group) = line
            .split_once(',')
            .ok_or_else(|| err(format!("expected `meter_id,group`, got `{line}`")))?;
        let group: Group = group.parse().map_err(|e: Error| err(e.to_string()))?;
        out.insert(id.trim().to_string(), group);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_gen, SynthParams};

    #[test]
    fn round_trip() {
        let params = SynthParams {
            meters_per_group: [2, 1, 1],
            n_days: 3,
            missing_rate: 0.3,
            ..SynthParams::default()
        };
        let ds = synth_gen(&params).unwrap().dataset;
        let slots = parse_slots(&slots_csv(&ds), "s").unwrap();
        let meters = parse_meters(&meters_csv(&ds), "m").unwrap();
        let obs = parse_observations(&observations_csv(&ds), "o", &slots, &meters).unwrap();
        let back = MeterDataset::new(meters, slots, obs).unwrap();
        assert_eq!(slots_csv(&back), slots_csv(&ds));
        assert_eq!(meters_csv(&back), meters_csv(&ds));
        assert_eq!(observations_csv(&back), observations_csv(&ds));
        for i in 0..ds.num_slots() {
            for j in 0..ds.num_meters() {
                assert_eq!(back.observations().get(i, j), ds.observations().get(i, j));
            }
        }
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(parse_meters("id,grp\n", "m"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_meters("meter_id,group\na,Nope\n", "m"),
            Err(Error::Parse { line: 2, .. })
        ));
        let groups = parse_groups("meter_id,group\n1000,SME\n1001, residential\n", "g").unwrap();
        assert_eq!(groups["1000"], Group::Sme);
        assert_eq!(groups["1001"], Group::Residential);
        assert!(parse_groups("1000\n", "g").is_err());
    }
}
