use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use bgpburst::burstiness::{
    check_null_windows, joint_distribution, monte_carlo_null_test, BurstinessResult, NullTestConfig,
};
use bgpburst::detector::{detect_events_traced, detect_volume_traced, AnomalyReport, DetectorConfig, DetectorKind};
use bgpburst::evaluation::{
    builtin_incidents, evaluate_incident, parse_incidents, write_results_csv, Binning, IncidentWindow,
};
use bgpburst::ingest::{
    build_series, build_volume_series, parse_event_lines, parse_mrt_updates, write_event_lines, ParseStats,
};
use bgpburst::synth::SimulationSpec;
use bgpburst::time::{format_rfc3339, parse_rfc3339};
use bgpburst::{AnnouncementEvent, Asn, EventSeries, TimeWindow};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::manifest::RunManifest;
use crate::{AnalyzeArgs, Cli, Command, DetectArgs, EvaluateArgs, IngestArgs, SimulateArgs};

pub fn run(cli: &Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("configuring worker threads")?;
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let started = Instant::now();
    let (manifest, failures) = match &cli.command {
        Command::Ingest(a) => ingest(cli, a)?,
        Command::Analyze(a) => analyze(cli, a)?,
        Command::Detect(a) => detect(cli, a)?,
        Command::Evaluate(a) => evaluate(cli, a)?,
        Command::Simulate(a) => simulate(cli, a)?,
    };
    let path = manifest.write(&cli.out, started.elapsed())?;
    log::info!("wrote {}", path.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("{} failure(s):\n  {}", failures.len(), failures.join("\n  ")))
    }
}

/// A manifest plus the per-input failures that did not stop the run.
type Outcome = (RunManifest, Vec<String>);

fn write_file(manifest: &mut RunManifest, path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    write(&mut out).and_then(|_| out.flush()).with_context(|| format!("writing {}", path.display()))?;
    manifest.output(path)
}

fn write_json<T: Serialize + ?Sized>(manifest: &mut RunManifest, path: &Path, value: &T) -> Result<()> {
    write_file(manifest, path, |out| {
        serde_json::to_writer_pretty(&mut *out, value)?;
        writeln!(out)
    })
}

/// Collector names made safe for file names.
fn tag(collector: &str) -> String {
    collector
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

fn read_events(paths: &[PathBuf], manifest: &mut RunManifest) -> Result<Vec<AnnouncementEvent>> {
    let mut events = Vec::new();
    for path in paths {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        events.extend(parse_event_lines(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?);
        manifest.input(path)?;
    }
    Ok(events)
}

type SeriesKey = (String, Asn);

/// Announcements usable for series, grouped by (collector, origin).
fn group_events<'a>(
    events: &'a [AnnouncementEvent],
    asns: &[u32],
    collectors: &[String],
) -> BTreeMap<SeriesKey, Vec<&'a AnnouncementEvent>> {
    let mut groups: BTreeMap<SeriesKey, Vec<&AnnouncementEvent>> = BTreeMap::new();
    for e in events {
        let Some(origin) = e.origin_asn else { continue };
        if !e.is_announcement() || e.origin_as_set {
            continue;
        }
        if (!asns.is_empty() && !asns.contains(&origin.0)) || (!collectors.is_empty() && !collectors.contains(&e.collector)) {
            continue;
        }
        groups.entry((e.collector.clone(), origin)).or_default().push(e);
    }
    groups
}

fn parse_window(start: &str, end: &str) -> Result<TimeWindow> {
    let w = TimeWindow::new(parse_rfc3339(start)?, parse_rfc3339(end)?)?;
    Ok(w)
}

fn load_incidents(path: Option<&Path>, manifest: &mut RunManifest) -> Result<Vec<IncidentWindow>> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            manifest.input(p)?;
            parse_incidents(&text).with_context(|| format!("incident file {}", p.display()))
        }
        None => Ok(builtin_incidents()),
    }
}

fn window_json(w: &TimeWindow) -> serde_json::Value {
    json!({ "start_utc": format_rfc3339(w.start), "end_utc": format_rfc3339(w.end) })
}

fn ingest(cli: &Cli, args: &IngestArgs) -> Result<Outcome> {
    let mut manifest = RunManifest::new(
        "ingest",
        json!({ "collector": args.collector, "asn": args.asn, "output": args.output }),
    );
    let parsed: Vec<_> = args
        .inputs
        .par_iter()
        .map(|path| -> Result<_> {
            let raw = fs::read(path).with_context(|| format!("{}: unreadable", path.display()))?;
            let out = parse_mrt_updates(&raw, &args.collector).with_context(|| format!("{}", path.display()))?;
            Ok((path, out))
        })
        .collect();

    let mut failures = Vec::new();
    let mut events = Vec::new();
    let mut per_file = Vec::new();
    let mut totals = ParseStats::default();
    for result in parsed {
        match result {
            Ok((path, out)) => {
                manifest.input(path)?;
                totals.merge(&out.stats);
                per_file.push(json!({ "path": path, "stats": out.stats }));
                events.extend(out.events);
            }
            Err(e) => failures.push(format!("{e:#}")),
        }
    }
    events.sort_by_key(|e| e.timestamp);
    let emitted = events.len();
    if !args.asn.is_empty() {
        events.retain(|e| e.origin_asn.is_some_and(|a| args.asn.contains(&a.0)));
    }
    let withdrawals = events.iter().filter(|e| !e.is_announcement()).count();

    write_file(&mut manifest, &cli.out.join(&args.output), |out| write_event_lines(&events, out))?;
    let summary = json!({
        "files": per_file,
        "totals": totals,
        "events_emitted": emitted,
        "events_written": events.len(),
        "withdrawals_written": withdrawals,
        "filtered_out": emitted - events.len(),
        "failed_inputs": failures.len(),
    });
    write_json(&mut manifest, &cli.out.join("ingest_summary.json"), &summary)?;
    eprintln!(
        "ingest: {} records, {} events emitted, {} dropped, {} written",
        totals.records,
        totals.events_emitted,
        totals.dropped(),
        events.len()
    );
    Ok((manifest, failures))
}

fn parse_null_windows(args: &AnalyzeArgs, manifest: &mut RunManifest) -> Result<Vec<TimeWindow>> {
    let mut specs: Vec<String> = args.null_windows.clone();
    if let Some(p) = &args.null_windows_file {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        manifest.input(p)?;
        specs.extend(text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(String::from));
    }
    specs
        .iter()
        .map(|s| {
            let (a, b) = s.split_once('/').ok_or_else(|| anyhow!("null window {s:?} is not START/END"))?;
            parse_window(a.trim(), b.trim()).with_context(|| format!("null window {s:?}"))
        })
        .collect()
}

fn analyze(cli: &Cli, args: &AnalyzeArgs) -> Result<Outcome> {
    let window = parse_window(&args.start, &args.end)?;
    let config = NullTestConfig { samples: args.samples, alpha: args.alpha, min_events: args.min_events };
    let mut manifest = RunManifest::new("analyze", serde_json::Value::Null);
    let null_windows = parse_null_windows(args, &mut manifest)?;
    let incidents = load_incidents(args.incidents.as_deref(), &mut manifest)?;
    let incident_windows: Vec<TimeWindow> = incidents.iter().map(|i| i.window).collect();
    check_null_windows(&null_windows, &incident_windows)?;
    manifest.config = json!({
        "window": window_json(&window),
        "null_windows": null_windows.iter().map(window_json).collect::<Vec<_>>(),
        "null_test": config,
        "asn": args.asn,
        "collector": args.collector,
    });

    let events = read_events(&args.events, &mut manifest)?;
    let groups = group_events(&events, &[], &args.collector);
    let mut by_collector: BTreeMap<&str, Vec<EventSeries>> = BTreeMap::new();
    for ((collector, asn), evs) in &groups {
        by_collector.entry(collector).or_default().push(build_series(evs.iter().copied(), *asn, collector));
    }

    let mut failures = Vec::new();
    for (collector, corpus) in &by_collector {
        match joint_distribution(corpus, window, args.min_events) {
            Ok(table) => {
                let base = format!("joint_{}", tag(collector));
                write_file(&mut manifest, &cli.out.join(format!("{base}.csv")), |out| table.write_csv(out))?;
                write_json(&mut manifest, &cli.out.join(format!("{base}.json")), &table.sidecar_json())?;
            }
            Err(e) => failures.push(format!("collector {collector}: {e}")),
        }
    }

    for &asn in &args.asn {
        let asn = Asn(asn);
        let mut found = false;
        for (collector, corpus) in &by_collector {
            let Some(series) = corpus.iter().find(|s| s.origin_asn == asn) else { continue };
            found = true;
            let observed = match BurstinessResult::of_series(&series.window(window.start, window.end), args.min_events) {
                Ok(o) => o,
                Err(e) => {
                    failures.push(format!("{asn} at {collector}: {e}"));
                    continue;
                }
            };
            let nulls: Vec<EventSeries> = null_windows.iter().map(|w| series.window(w.start, w.end)).collect();
            match monte_carlo_null_test(&nulls, &observed, &config) {
                Ok(result) => {
                    let doc = json!({
                        "asn": asn,
                        "collector": collector,
                        "window": window_json(&window),
                        "observed": observed,
                        "result": result,
                    });
                    let path = cli.out.join(format!("significance_AS{}_{}.json", asn.0, tag(collector)));
                    write_json(&mut manifest, &path, &doc)?;
                }
                Err(e) => failures.push(format!("{asn} at {collector}: {e}")),
            }
        }
        if !found {
            failures.push(format!("{asn}: no announcements in the input"));
        }
    }
    Ok((manifest, failures))
}

fn detector_config(cli: &Cli, args: &DetectArgs, manifest: &mut RunManifest) -> Result<DetectorConfig> {
    let mut config = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            manifest.input(p)?;
            DetectorConfig::parse(&text).with_context(|| format!("config {}", p.display()))?
        }
        None => DetectorConfig::default(),
    };
    let overrides = [
        ("r", args.r.clone()),
        ("omega", args.omega.map(|v| v.to_string())),
        ("delta", args.delta.map(|v| v.to_string())),
        ("warmup", args.warmup.map(|v| v.to_string())),
        ("variance_floor", args.variance_floor.map(|v| v.to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            config.set(key, &v)?;
        }
    }
    config.validate()?;
    Ok(config)
}

fn detect(cli: &Cli, args: &DetectArgs) -> Result<Outcome> {
    let mut manifest = RunManifest::new("detect", serde_json::Value::Null);
    let config = detector_config(cli, args, &mut manifest)?;
    let kinds = match args.detector.as_str() {
        "both" => vec![DetectorKind::Burstiness, DetectorKind::Volume],
        other => vec![other.parse::<DetectorKind>().map_err(|e| anyhow!(e))?],
    };
    manifest.config = json!({
        "detector": config,
        "detectors": kinds,
        "asn": args.asn,
        "collector": args.collector,
    });

    let events = read_events(&args.events, &mut manifest)?;
    let groups = group_events(&events, &args.asn, &args.collector);
    if groups.is_empty() {
        log::warn!("no announcement series match the filters; writing empty outputs");
    }
    let jobs: Vec<(&SeriesKey, &Vec<&AnnouncementEvent>, DetectorKind)> = groups
        .iter()
        .flat_map(|(key, evs)| kinds.iter().map(move |&k| (key, evs, k)))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&((collector, asn), evs, kind)| match kind {
            DetectorKind::Burstiness => {
                detect_events_traced(&build_series(evs.iter().copied(), *asn, collector), &config)
            }
            DetectorKind::Volume => {
                detect_volume_traced(&build_volume_series(evs.iter().copied(), *asn, collector), &config)
            }
        })
        .collect::<Result<Vec<AnomalyReport>, _>>()?;

    let mut summaries = Vec::with_capacity(reports.len());
    for mut report in reports {
        let path = cli.out.join(format!("trace_{}_AS{}_{}.csv", report.detector.name(), report.asn.0, tag(&report.collector)));
        write_file(&mut manifest, &path, |out| report.write_trace_csv(out))?;
        report.trace = None;
        summaries.push(report);
    }
    write_json(&mut manifest, &cli.out.join("reports.json"), &summaries)?;
    let flagged: usize = summaries.iter().map(|r| r.anomalous_timestamps.len()).sum();
    eprintln!("detect: {} report(s), {flagged} flagged timestamp(s)", summaries.len());
    Ok((manifest, Vec::new()))
}

fn evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<Outcome> {
    let mut manifest = RunManifest::new("evaluate", serde_json::Value::Null);
    let binning = match (&args.start, &args.end) {
        (Some(start), Some(end)) => Binning::new(parse_window(start, end)?, args.bin_seconds)?,
        _ if !args.events.is_empty() => {
            let events = read_events(&args.events, &mut manifest)?;
            Binning::covering(events.iter().map(|e| e.timestamp), args.bin_seconds)
                .ok_or_else(|| anyhow!("configuration error: event files are empty"))??
        }
        _ => bail!("configuration error: give --start and --end, or --events"),
    };
    let bounds = binning.bounds();
    manifest.config =
        json!({ "bounds": window_json(&bounds), "bin_seconds": args.bin_seconds, "incident": args.incident });
    let text = fs::read_to_string(&args.reports).with_context(|| format!("reading {}", args.reports.display()))?;
    manifest.input(&args.reports)?;
    let reports: Vec<AnomalyReport> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.reports.display()))?;
    let incidents = load_incidents(args.incidents.as_deref(), &mut manifest)?;

    let selected: Vec<&IncidentWindow> = if args.incident.is_empty() {
        let asns: BTreeSet<Asn> = reports.iter().map(|r| r.asn).collect();
        incidents
            .iter()
            .filter(|i| bounds.contains_window(&i.window) && asns.contains(&i.perpetrator_asn))
            .collect()
    } else {
        args.incident
            .iter()
            .map(|name| incidents.iter().find(|i| &i.name == name).ok_or_else(|| anyhow!("unknown incident {name:?}")))
            .collect::<Result<_>>()?
    };
    if selected.is_empty() {
        bail!("configuration error: no incident inside the study period matches any report's origin");
    }

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for incident in selected {
        let relevant: Vec<AnomalyReport> =
            reports.iter().filter(|r| r.asn == incident.perpetrator_asn).cloned().collect();
        if relevant.is_empty() {
            failures.push(format!("{}: no report for {}", incident.name, incident.perpetrator_asn));
            continue;
        }
        match evaluate_incident(&relevant, incident, &binning) {
            Ok(r) => rows.extend(r),
            Err(e) => failures.push(format!("{}: configuration error: {e}", incident.name)),
        }
    }
    write_file(&mut manifest, &cli.out.join("results.csv"), |out| write_results_csv(&rows, out))?;
    write_json(&mut manifest, &cli.out.join("results.json"), &rows)?;
    Ok((manifest, failures))
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<Outcome> {
    let mut manifest = RunManifest::new("simulate", serde_json::Value::Null);
    let mut failures = Vec::new();
    let mut used = Vec::new();
    for (i, path) in args.specs.iter().enumerate() {
        let spec = fs::read_to_string(path)
            .with_context(|| format!("{}: unreadable", path.display()))
            .and_then(|text| {
                serde_json::from_str::<SimulationSpec>(&text).with_context(|| format!("{}: invalid spec", path.display()))
            });
        let mut spec = match spec {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("{e:#}"));
                continue;
            }
        };
        manifest.input(path)?;
        if let Some(seed) = cli.seed {
            spec.stream.seed = seed.wrapping_add(i as u64);
        }
        match spec.run() {
            Ok(stream) => {
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("spec{i}"));
                let out = cli.out.join(format!("simulated_{}.jsonl", tag(&stem)));
                write_file(&mut manifest, &out, |w| write_event_lines(&stream.events, w))?;
                used.push(spec);
            }
            Err(e) => failures.push(format!("{}: {e}", path.display())),
        }
    }
    manifest.config = json!({ "specs": used });
    Ok((manifest, failures))
}
