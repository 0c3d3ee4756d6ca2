use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use chrono::NaiveDate;
use faer::Mat;
use loadcast::data::calendar::{parse_holidays, DstCalendar};
use loadcast::data::io::{parse_groups, parse_slots, read_processed, write_processed};
use loadcast::data::{ingest, make_split, read_raw, synth_gen, IngestOptions, MeterDataset, SynthParams};
use loadcast::kernels::{CalendarPoint, KernelExpr, Preset};
use loadcast::metrics::evaluate;
use loadcast::{Error, Result};

use crate::artifact::{dataset_digest, ModelArtifact, Manifest, SelectionRecord, SolverRecord, SplitRecord, FORMAT_VERSION};
use crate::bench::{run_bench, BenchConfig};
use crate::cli::{BenchArgs, EvaluateArgs, ForecastArgs, PreprocessArgs, SolverArgs, SynthArgs, TrainArgs};
use crate::experiment::{default_lambda_grid, train, ExperimentConfig, FittedModel, GroupFilter, Method, SELECTION_RULE};

/// Meter id of the aggregate rows written by `forecast --aggregate`.
pub const TOTAL_ID: &str = "__total__";

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))
}

fn grid(solver: &SolverArgs) -> Vec<f64> {
    solver.lambda_grid.clone().unwrap_or_else(default_lambda_grid)
}

pub fn preprocess(args: &PreprocessArgs) -> Result<()> {
    let mut opts = IngestOptions::ireland();
    opts.groups = parse_groups(&read_text(&args.groups)?, &args.groups.display().to_string())?;
    if let Some(p) = &args.holidays {
        opts.holidays = parse_holidays(&read_text(p)?, &p.display().to_string())?;
    }
    if let Some(p) = &args.dst {
        let custom = DstCalendar::parse(&read_text(p)?, &p.display().to_string())?;
        opts.dst.override_with(&custom);
    }
    let file = fs::File::open(&args.raw)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", args.raw.display())))?;
    let raw = read_raw(BufReader::new(file), &args.raw.display().to_string())?;
    let (ds, report) = ingest(&raw, &opts)?;
    write_processed(&ds, &args.out)?;
    fs::write(args.out.join("rejections.csv"), report.to_csv())?;
    println!(
        "{} records, {} meters kept, {} removed, {} records dropped; {} days, {} slots",
        raw.record_count(),
        ds.num_meters(),
        report.removed.len(),
        report.dropped_records.len(),
        ds.num_days(),
        ds.num_slots()
    );
    print!("{}", ds.summary_table());
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let sizes = match &args.group_sizes {
        Some(s) if s.len() == 3 => [s[0], s[1], s[2]],
        Some(s) => {
            return Err(Error::Validation(format!(
                "--group-sizes takes three counts (residential,sme,others), got {}",
                s.len()
            )))
        }
        None => {
            let base = args.meters / 3;
            let rem = args.meters % 3;
            [base + usize::from(rem > 0), base + usize::from(rem > 1), base]
        }
    };
    let start = NaiveDate::parse_from_str(&args.start, "%Y-%m-%d")
        .map_err(|e| Error::Validation(format!("bad --start `{}`: {e}", args.start)))?;
    let params = SynthParams {
        meters_per_group: sizes,
        n_days: args.days,
        rank: args.rank,
        noise_sigma: args.noise,
        missing_rate: args.missing_rate,
        weight_jitter: args.weight_jitter,
        start,
        seed: args.seed,
    };
    let ds = synth_gen(&params)?.dataset;
    write_processed(&ds, &args.out)?;
    println!("{} meters, {} slots", ds.num_meters(), ds.num_slots());
    print!("{}", ds.summary_table());
    Ok(())
}

pub fn parse_kernel(kernel: Option<&str>, preset: Option<&str>) -> Result<KernelExpr> {
    match (kernel, preset) {
        (Some(k), None) => KernelExpr::parse(k),
        (None, Some(p)) => Ok(Preset::from_name(p)?.kernel()),
        _ => Err(Error::Validation("give exactly one of --kernel and --preset".into())),
    }
}

/// Runs λ selection and the refit, and assembles the artifact to persist.
pub fn train_artifact(ds: &MeterDataset, cfg: &ExperimentConfig, digest: String) -> Result<ModelArtifact> {
    let out = train(ds, cfg)?;
    let (trace, solver) = match &out.model {
        FittedModel::Okl(m) => (
            m.trace.clone(),
            Some(SolverRecord {
                max_iters: cfg.max_iters,
                tol: cfg.tol,
                sweeps: m.sweeps(),
                converged: m.converged,
                init: "mixing matrix selected on the training slots".into(),
            }),
        ),
        FittedModel::Krr(_) => (Vec::new(), None),
    };
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        method: cfg.method.name().into(),
        kernel: cfg.kernel.to_string(),
        lambda: out.selection.lambda,
        rank: cfg.rank,
        seed: cfg.seed,
        group: cfg.group.to_string(),
        num_slots: out.model.slots().len(),
        parameter_count: out.model.parameter_count(),
        dataset_digest: digest,
        task_ids: out.members.iter().map(|&j| ds.meters()[j].id.clone()).collect(),
        objective_trace: trace,
        selection_rule: SELECTION_RULE.into(),
        split: SplitRecord {
            train_days: cfg.train_days,
            val_frac: cfg.val_frac,
            seed: cfg.seed,
            train_slots: out.split.train.len(),
            validation_slots: out.split.validation.len(),
            test_slots: out.split.test.len(),
            refit_on: "train+validation".into(),
        },
        solver,
        selection: out.selection.entries.iter().map(SelectionRecord::from).collect(),
    };
    Ok(ModelArtifact {
        manifest,
        model: out.model,
    })
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    let kernel = parse_kernel(args.kernel.as_deref(), args.preset.as_deref())?;
    let method: Method = args.method.parse()?;
    let mut cfg = ExperimentConfig::new(kernel, method, args.rank);
    cfg.lambda_grid = grid(&args.solver);
    cfg.group = args.group.parse()?;
    cfg.train_days = args.split.train_days;
    cfg.val_frac = args.split.val_frac;
    cfg.seed = args.split.seed;
    cfg.max_iters = args.solver.max_iters;
    cfg.tol = args.solver.tol;
    cfg.validate()?;

    let ds = read_processed(&args.dataset)?;
    let artifact = train_artifact(&ds, &cfg, dataset_digest(&args.dataset)?)?;
    artifact.save(&args.out)?;

    println!("lambda      validation NMAE");
    for e in &artifact.manifest.selection {
        let mark = if e.lambda == artifact.manifest.lambda { "  <- selected" } else { "" };
        println!(
            "{:<11e} {}{mark}",
            e.lambda,
            e.validation_nmae.map_or("NA".to_string(), |v| format!("{v:.6}"))
        );
    }
    println!(
        "{} model, {} tasks, {} stored coefficients",
        method,
        artifact.manifest.task_ids.len(),
        artifact.manifest.parameter_count
    );
    Ok(())
}

/// Forecasts as `(slot_index, meter_id, value)` rows.
pub fn forecast_rows(
    artifact: &ModelArtifact,
    slot_indices: &[usize],
    points: &[CalendarPoint],
    aggregate: bool,
) -> Result<String> {
    let pred = artifact.model.predict(points)?;
    let ids = &artifact.manifest.task_ids;
    let mut out = String::from("slot_index,meter_id,forecast\n");
    for (i, &s) in slot_indices.iter().enumerate() {
        for (j, id) in ids.iter().enumerate() {
            let _ = writeln!(out, "{s},{id},{}", pred[(i, j)]);
        }
    }
    if aggregate {
        for (i, &s) in slot_indices.iter().enumerate() {
            let total: f64 = (0..ids.len()).map(|j| pred[(i, j)]).sum();
            let _ = writeln!(out, "{s},{TOTAL_ID},{total}");
        }
    }
    Ok(out)
}

pub fn forecast(args: &ForecastArgs) -> Result<()> {
    let artifact = ModelArtifact::load(&args.model)?;
    let (indices, points) = if let Some(dir) = &args.dataset {
        let ds = read_processed(dir)?;
        if let Some(id) = artifact
            .manifest
            .task_ids
            .iter()
            .find(|id| ds.meter_index(id).is_none())
        {
            return Err(Error::Data(format!("model meter `{id}` is not in the dataset")));
        }
        let sp = &artifact.manifest.split;
        let positions: Vec<usize> = match args.range.as_str() {
            "all" => (0..ds.num_slots()).collect(),
            "test" | "fit" => {
                let split = make_split(ds.num_slots(), sp.train_days, sp.val_frac, sp.seed)?;
                if args.range == "test" {
                    split.test
                } else {
                    split.fit_slots()
                }
            }
            other => {
                return Err(Error::Validation(format!(
                    "unknown --range `{other}` (expected test, fit or all)"
                )))
            }
        };
        let slots = ds.slots();
        (
            positions.iter().map(|&i| slots[i].index).collect::<Vec<_>>(),
            positions.iter().map(|&i| slots[i].point).collect::<Vec<_>>(),
        )
    } else {
        let path = args.slots.as_ref().expect("clap requires a query");
        let slots = parse_slots(&read_text(path)?, &path.display().to_string())?;
        (
            slots.iter().map(|s| s.index).collect(),
            slots.iter().map(|s| s.point).collect(),
        )
    };
    let text = forecast_rows(&artifact, &indices, &points, args.aggregate)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&args.out, text)?;
    println!("{} slots x {} meters", indices.len(), artifact.manifest.task_ids.len());
    Ok(())
}

/// Parses a forecast CSV against a dataset: returns dataset slot positions,
/// meter positions and the forecast matrix over them.
pub fn load_forecast(text: &str, path: &str, ds: &MeterDataset) -> Result<(Vec<usize>, Vec<usize>, Mat<f64>)> {
    let slot_pos: HashMap<usize, usize> = ds.slots().iter().enumerate().map(|(i, s)| (s.index, i)).collect();
    let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "slot_index,meter_id,forecast" => {}
        _ => {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                message: "expected header `slot_index,meter_id,forecast`".into(),
            })
        }
    }
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.into(),
            line: no + 1,
            message,
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", f.len())));
        }
        if f[1] == TOTAL_ID {
            continue;
        }
        let idx: usize = f[0].parse().map_err(|_| err(format!("bad slot index `{}`", f[0])))?;
        let i = *slot_pos
            .get(&idx)
            .ok_or_else(|| err(format!("slot {idx} is not in the dataset")))?;
        let j = ds
            .meter_index(f[1])
            .ok_or_else(|| err(format!("meter `{}` is not in the dataset", f[1])))?;
        let v: f64 = f[2].parse().map_err(|_| err(format!("bad forecast `{}`", f[2])))?;
        if !v.is_finite() {
            return Err(err(format!("forecast {v} is not finite")));
        }
        cells.insert((i, j), v);
    }
    let mut slots: Vec<usize> = cells.keys().map(|&(i, _)| i).collect();
    slots.sort_unstable();
    slots.dedup();
    let mut meters: Vec<usize> = cells.keys().map(|&(_, j)| j).collect();
    meters.sort_unstable();
    meters.dedup();

    let obs = ds.observations();
    let mut gaps = Vec::new();
    let mut f = Mat::<f64>::zeros(slots.len(), meters.len());
    for (r, &i) in slots.iter().enumerate() {
        for (c, &j) in meters.iter().enumerate() {
            match cells.get(&(i, j)) {
                Some(&v) => f[(r, c)] = v,
                None if obs.is_observed(i, j) => gaps.push((ds.slots()[i].index, ds.meters()[j].id.clone())),
                None => {}
            }
        }
    }
    if !gaps.is_empty() {
        let shown: Vec<String> = gaps.iter().take(10).map(|(s, m)| format!("({s}, {m})")).collect();
        return Err(Error::Data(format!(
            "{} observed cells have no forecast, e.g. {}",
            gaps.len(),
            shown.join(" ")
        )));
    }
    Ok((slots, meters, f))
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let ds = read_processed(&args.dataset)?;
    let text = read_text(&args.forecast)?;
    let (slots, meters, f) = load_forecast(&text, &args.forecast.display().to_string(), &ds)?;
    let obs = ds.observations().select_slots(&slots).select_tasks(&meters);
    let mut groups = Vec::new();
    for name in &args.groups {
        let (label, filter) = if name.eq_ignore_ascii_case("all") {
            ("All".to_string(), GroupFilter::all())
        } else {
            let g: loadcast::data::Group = name.parse().map_err(|e: Error| Error::Validation(e.to_string()))?;
            (g.name().to_string(), GroupFilter::of(&[g]))
        };
        let all = filter.members(&ds);
        let members: Vec<usize> = (0..meters.len()).filter(|c| all.contains(&meters[*c])).collect();
        if members.is_empty() {
            log::warn!("no forecast meters in group {label}; skipped");
            continue;
        }
        groups.push((label, members));
    }
    let rows: Vec<usize> = (0..slots.len()).collect();
    let report = evaluate(&obs, f.as_ref(), &rows, &groups);
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("report.csv"), report.to_csv())?;
    let text = report.to_text();
    fs::write(args.out.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let ds = read_processed(&args.dataset)?;
    let cfg = BenchConfig {
        lambda_grid: grid(&args.solver),
        train_days: args.split.train_days,
        val_frac: args.split.val_frac,
        seed: args.split.seed,
        max_iters: args.solver.max_iters,
        tol: args.solver.tol,
        residential_rank: args.residential_rank,
        sme_rank: args.sme_rank,
    };
    crate::experiment::validate_grid(&cfg.lambda_grid)?;
    let report = run_bench(&ds, &cfg)?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("bench.csv"), report.to_csv())?;
    let text = report.to_text();
    fs::write(args.out.join("bench.txt"), &text)?;
    print!("{text}");
    Ok(())
}
