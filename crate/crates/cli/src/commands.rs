//! The four runner commands. Each writes into an output directory and
//! returns the paths it produced, in the order they were written.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use qsens_core::estimation::{
    estimate_affinity, estimate_ks, AffinityEstimate, ExperimentDataset, KsEstimate, KsSamples, NoiseMode, Summary,
};
use qsens_core::photon_stats::{dt_classical, dt_quantum, set_statistics, ProbeModel};
use qsens_core::simulation::{
    bin_grid, dataset_from_streams, simulate_dataset, simulate_timetag_dataset, transmission_curve,
};
use qsens_core::spr_optics::write_sweep_csv;
use qsens_core::timetag::{merge_streams, read_timetag_csv, split_streams, write_timetag_csv};
use serde_json::json;

use crate::config::{RunConfig, TransmissionSection, VERSION};
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const RESULTS_FILE: &str = "results.csv";
pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const RESULTS_HEADER: &str = "parameter,mode,mean,std,n";
pub const COMPARE_HEADER: &str = "time_s,dT_measured,dT_quantum_theory,dT_classical_theory,enhancement";

const SWEEP_POINTS: usize = 2000;

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path.display(), e))
}

fn prepare_out(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out.display(), e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path.display(), e))
}

fn write_manifest(cfg: &RunConfig, out: &Path) -> CliResult<PathBuf> {
    let path = out.join(MANIFEST_FILE);
    write_text(&path, &cfg.manifest_toml())?;
    Ok(path)
}

fn write_dataset(ds: &ExperimentDataset, path: &Path) -> CliResult<()> {
    let mut w = create(path)?;
    ds.write_csv(&mut w).map_err(|e| CliError::data(path.display(), e))?;
    w.flush().map_err(|e| CliError::io(path.display(), e))
}

fn write_sensorgram(ds: &ExperimentDataset, path: &Path) -> CliResult<()> {
    let s = ds.sensorgram().map_err(|e| CliError::data(path.display(), e))?;
    let mut w = create(path)?;
    s.write_csv(&mut w).map_err(|e| CliError::data(path.display(), e))?;
    w.flush().map_err(|e| CliError::io(path.display(), e))
}

pub fn read_dataset(path: &Path, nu: u64) -> CliResult<ExperimentDataset> {
    let file = File::open(path).map_err(|e| CliError::io(path.display(), e))?;
    let ds = ExperimentDataset::read_csv(BufReader::new(file), nu).map_err(|e| CliError::data(path.display(), e))?;
    ds.validate().map_err(|e| CliError::data(path.display(), e))?;
    Ok(ds)
}

/// Synthesises one dataset per configured injection, plus its sensorgram.
///
/// Outputs `dataset_<k>.csv` and `sensorgram_<k>.csv` for `k = 1..`, the
/// raw `timetags_<k>.csv` when the time-tag path is enabled, `sweep.csv`
/// for the optical path, and the manifest.
pub fn simulate(cfg: &RunConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    prepare_out(out)?;
    let time = bin_grid(cfg.sampling.duration_s, cfg.sampling.bin_seconds).map_err(|e| CliError::Config(e.to_string()))?;
    let path = cfg.transmission_path()?;
    let plan = cfg.sampling.plan();
    let mut written = Vec::new();

    if cfg.timetag.enabled && cfg.probe.model != ProbeModel::HeraldedSinglePhoton {
        log::warn!("time-tag streams are always heralded; probe.model is ignored");
    }

    for (i, l0) in cfg.concentrations()?.into_iter().enumerate() {
        let k = i + 1;
        let params = cfg.truth(l0)?;
        let curve = transmission_curve(&params, &path, &time).map_err(|e| CliError::Config(e.to_string()))?;
        log::info!("dataset {k}: L0 = {l0:.4e} M, ks = {:.5} s^-1", params.ks);
        let ds = if cfg.timetag.enabled {
            let source = cfg.timetag.source(plan.nu);
            let run = simulate_timetag_dataset(
                &time,
                &curve,
                plan.bin_seconds,
                l0,
                &source,
                plan.mu,
                cfg.seed,
                i as u32,
            )
            .map_err(|e| CliError::data(format!("time-tag simulation of dataset {k}"), e))?;
            let tags = out.join(format!("timetags_{k}.csv"));
            let mut w = create(&tags)?;
            write_timetag_csv(&merge_streams(&run.stream_a, &run.stream_b), &mut w)
                .map_err(|e| CliError::data(tags.display(), e))?;
            w.flush().map_err(|e| CliError::io(tags.display(), e))?;
            written.push(tags);
            run.dataset
        } else {
            simulate_dataset(&time, &curve, l0, &plan, cfg.probe.model, cfg.seed, i as u32)
                .map_err(|e| CliError::Config(e.to_string()))?
        };
        let ds_path = out.join(format!("dataset_{k}.csv"));
        write_dataset(&ds, &ds_path)?;
        let sg_path = out.join(format!("sensorgram_{k}.csv"));
        write_sensorgram(&ds, &sg_path)?;
        written.extend([ds_path, sg_path]);
    }

    if let TransmissionSection::Stack(s) = &cfg.transmission {
        let stack = s.layer_stack();
        let lo = stack.critical_angle();
        let hi = 89f64.to_radians();
        let angles: Vec<f64> =
            (0..SWEEP_POINTS).map(|j| lo + (hi - lo) * (j as f64 + 0.5) / SWEEP_POINTS as f64).collect();
        let sweep = out.join("sweep.csv");
        let mut w = create(&sweep)?;
        write_sweep_csv(&stack, &angles, &mut w).map_err(|e| CliError::data(sweep.display(), e))?;
        w.flush().map_err(|e| CliError::io(sweep.display(), e))?;
        written.push(sweep);
    }

    written.push(write_manifest(cfg, out)?);
    Ok(written)
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub parameter: String,
    pub mode: NoiseMode,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub rows: Vec<ResultRow>,
    pub ks: Vec<(f64, KsEstimate)>,
    pub affinity: Vec<AffinityEstimate>,
}

fn ks_label(l0: f64) -> String {
    format!("ks[L0={l0:.3e}]")
}

/// Bootstrap estimates of `ks` for every dataset and, given at least three
/// concentrations, of `kd`, `ka` and `KA`.
pub fn estimate(cfg: &RunConfig, inputs: &[PathBuf], out: &Path) -> CliResult<EstimateReport> {
    if inputs.is_empty() {
        return Err(CliError::Config("no datasets given".into()));
    }
    prepare_out(out)?;
    let mut datasets = Vec::with_capacity(inputs.len());
    let mut alignments = Vec::new();
    for path in inputs {
        let ds = read_dataset(path, cfg.sampling.nu)?;
        let ds = match cfg.estimate.injection_time {
            Some(t_inj) => {
                let baseline = cfg.estimate.aligned_baseline.unwrap_or_else(|| {
                    let first = ds.time.iter().position(|&t| t >= t_inj).unwrap_or(0);
                    ds.bin_means().get(first).copied().unwrap_or(0.0)
                });
                let (aligned, a) = ds.align(t_inj, baseline).map_err(|e| CliError::data(path.display(), e))?;
                alignments.push(json!({
                    "input": path.display().to_string(),
                    "time_shift": a.time_shift,
                    "baseline_shift": a.baseline_shift,
                    "dropped_bins": a.dropped_bins,
                }));
                aligned
            }
            None => ds,
        };
        datasets.push(ds);
    }

    let boot = cfg.bootstrap_config();
    let modes = cfg.estimate.mode.modes();
    let mut report = EstimateReport { rows: Vec::new(), ks: Vec::new(), affinity: Vec::new() };
    for &mode in &modes {
        for (path, ds) in inputs.iter().zip(&datasets) {
            let est = estimate_ks(ds, &boot, mode).map_err(|e| CliError::estimation(path.display(), e))?;
            log::info!("{} {}: {:.5} +/- {:.5}", ks_label(ds.l0), mode.as_str(), est.summary.mean, est.summary.std);
            report.rows.push(ResultRow { parameter: ks_label(ds.l0), mode, summary: est.summary });
            report.ks.push((ds.l0, est));
        }
    }

    if datasets.len() >= 3 {
        let top = datasets
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.l0.total_cmp(&b.1.l0))
            .map(|(i, _)| i)
            .expect("non-empty");
        let acfg = cfg.affinity_config();
        for (mi, &mode) in modes.iter().enumerate() {
            let ks = &report.ks[mi * datasets.len() + top];
            let samples = KsSamples { l0: ks.0, values: &ks.1.distribution };
            let est = estimate_affinity(&datasets, samples, &acfg, mode)
                .map_err(|e| CliError::estimation("affinity bootstrap", e))?;
            for (name, s) in [("kd", est.kd), ("ka", est.ka), ("KA", est.affinity)] {
                report.rows.push(ResultRow { parameter: name.into(), mode, summary: s });
            }
            report.affinity.push(est);
        }
    } else {
        log::warn!("fewer than 3 concentrations: skipping the affinity estimate");
    }

    let mut csv = format!("{RESULTS_HEADER}\n");
    for r in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.parameter,
            r.mode.as_str(),
            r.summary.mean,
            r.summary.std,
            r.summary.n
        ));
    }
    write_text(&out.join(RESULTS_FILE), &csv)?;

    let manifest = json!({
        "version": VERSION,
        "seed": cfg.seed,
        "config": cfg,
        "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "alignment": alignments,
        "ks": report.ks.iter().map(|(l0, e)| json!({
            "L0_M": l0,
            "mode": e.mode,
            "attempted": e.attempted,
            "failed": e.failed,
        })).collect::<Vec<_>>(),
        "affinity": report.affinity.iter().map(|e| json!({
            "mode": e.mode,
            "attempted": e.attempted,
            "discarded": e.discarded,
        })).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
    write_text(&out.join(RUN_MANIFEST_FILE), &text)?;
    write_manifest(cfg, out)?;
    Ok(report)
}

/// Human-readable summary in the layout of the results table: one line per
/// parameter with both modes side by side when available.
pub fn format_table(report: &EstimateReport) -> String {
    let mut params: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !params.contains(&r.parameter.as_str()) {
            params.push(&r.parameter);
        }
    }
    let find = |p: &str, m: NoiseMode| report.rows.iter().find(|r| r.parameter == p && r.mode == m);
    let cell = |r: Option<&ResultRow>| r.map_or("-".to_string(), |r| format!("{:.4e} ± {:.2e}", r.summary.mean, r.summary.std));
    let mut s = format!("{:<20} {:>24} {:>24} {:>12}\n", "parameter", "quantum", "classical", "improvement");
    for p in params {
        let (q, c) = (find(p, NoiseMode::Quantum), find(p, NoiseMode::Classical));
        let gain = match (q, c) {
            (Some(q), Some(c)) if c.summary.std > 0.0 => format!("{:.1}%", 100.0 * (1.0 - q.summary.std / c.summary.std)),
            _ => "-".into(),
        };
        s.push_str(&format!("{:<20} {:>24} {:>24} {:>12}\n", p, cell(q), cell(c), gain));
    }
    s
}

/// Measured per-bin spread against both shot-noise laws. Writes
/// `compare_<stem>.csv` per input.
pub fn compare(cfg: &RunConfig, inputs: &[PathBuf], out: &Path) -> CliResult<Vec<PathBuf>> {
    if inputs.is_empty() {
        return Err(CliError::Config("no datasets given".into()));
    }
    prepare_out(out)?;
    let mut written = Vec::new();
    for path in inputs {
        let ds = read_dataset(path, cfg.sampling.nu)?;
        let mut text = format!("{COMPARE_HEADER}\n");
        for (t, bin) in ds.time.iter().zip(&ds.bins) {
            let st = set_statistics(bin).map_err(|e| CliError::data(path.display(), e))?;
            let tq = dt_quantum(st.mean_t.min(1.0), ds.nu).map_err(|e| CliError::data(path.display(), e))?;
            let tc = dt_classical(st.mean_t, ds.nu).map_err(|e| CliError::data(path.display(), e))?;
            let enhancement = tc / st.std_t;
            text.push_str(&format!("{t},{},{tq},{tc},{enhancement}\n", st.std_t));
        }
        let stem = path.file_stem().map_or("dataset".into(), |s| s.to_string_lossy().into_owned());
        let target = out.join(format!("compare_{stem}.csv"));
        write_text(&target, &text)?;
        written.push(target);
    }
    written.push(write_manifest(cfg, out)?);
    Ok(written)
}

/// Where the raw detector events come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TimetagInput {
    /// One `channel,timestamp_ps` file.
    Merged(PathBuf),
    /// One `timestamp_ps` file per channel.
    PerChannel { a: PathBuf, b: PathBuf },
}

fn read_channel_file(path: &Path) -> CliResult<Vec<u64>> {
    let file = File::open(path).map_err(|e| CliError::io(path.display(), e))?;
    let parse = |line: u64, message: String| CliError::data(path.display(), qsens_core::Error::Parse { line, message });
    let mut stamps = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path.display(), e))?;
        let n = i as u64 + 1;
        let field = line.trim();
        if i == 0 {
            if field != "timestamp_ps" {
                return Err(parse(n, format!("expected header `timestamp_ps`, found `{field}`")));
            }
            continue;
        }
        if field.is_empty() {
            continue;
        }
        let t: u64 = field.parse().map_err(|_| parse(n, format!("invalid timestamp `{field}`")))?;
        if stamps.last().is_some_and(|&prev| t < prev) {
            return Err(parse(n, "timestamps are not sorted".into()));
        }
        stamps.push(t);
    }
    Ok(stamps)
}

/// Converts raw detector streams into a dataset at concentration `l0`.
/// Writes `dataset.csv`, `sensorgram.csv` and the manifest.
pub fn ingest_timetags(cfg: &RunConfig, input: &TimetagInput, l0: f64, out: &Path) -> CliResult<Vec<PathBuf>> {
    if !(l0 >= 0.0) {
        return Err(CliError::Config("L0 must be >= 0".into()));
    }
    let (a, b) = match input {
        TimetagInput::Merged(path) => {
            let file = File::open(path).map_err(|e| CliError::io(path.display(), e))?;
            let events = read_timetag_csv(BufReader::new(file)).map_err(|e| CliError::data(path.display(), e))?;
            split_streams(&events)
        }
        TimetagInput::PerChannel { a, b } => (read_channel_file(a)?, read_channel_file(b)?),
    };
    prepare_out(out)?;
    let coincidence = cfg.timetag.coincidence(cfg.sampling.nu);
    let ds = dataset_from_streams(&a, &b, cfg.sampling.bin_seconds, l0, &coincidence, None)
        .map_err(|e| CliError::data("time-tag streams", e))?;
    let ds_path = out.join("dataset.csv");
    write_dataset(&ds, &ds_path)?;
    let sg_path = out.join("sensorgram.csv");
    write_sensorgram(&ds, &sg_path)?;
    Ok(vec![ds_path, sg_path, write_manifest(cfg, out)?])
}
