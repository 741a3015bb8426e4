//! Scenario files, experiment presets and output directories.
//!
//! Everything here returns errors instead of exiting; `main` maps them to an
//! exit status.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::calibration::{self, CalibrationReport};
use crate::engine::{run_with, RunOptions, SimError};
use crate::metrics::{
    bimodality_fraction, export_cdf, export_violin, mean, percentile, write_tasks_csv, ExportError,
    MetricsReport, Percentiles, TaskRecord,
};
use crate::types::{validate_scenario, ControllerMode, Scenario, Violation};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{}", format_violations(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Export { path: PathBuf, source: ExportError },
    #[error("unknown preset {0:?} (expected fig2, fig3, fig4, fig5 or calibrate)")]
    UnknownPreset(String),
    #[error("could not start worker pool: {0}")]
    Workers(String),
    #[error("calibration failed:\n{0}")]
    Calibration(String),
}

fn format_violations(v: &[Violation]) -> String {
    let lines: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("{} violation(s):\n{}", v.len(), lines.join("\n"))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads and parses a scenario document. Parse errors carry the line and
/// column, and name missing or unknown fields.
pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_scenario(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_scenario(text: &str) -> Result<Scenario, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn scenario_json(s: &Scenario) -> String {
    serde_json::to_string_pretty(s).expect("scenario serializes")
}

/// Files written for every run.
pub const RUN_MANIFEST: [&str; 4] = ["tasks.csv", "sched_cdf.csv", "exec_cdf.csv", "summary.txt"];

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(io_err(path))
}

fn write_cdf(path: &Path, samples: &[f64]) -> Result<(), CliError> {
    let mut w = create(path)?;
    match export_cdf(samples, &mut w) {
        // An empty sample set still gets a header so the manifest holds.
        Err(ExportError::Empty) => writeln!(w, "value,fraction").map_err(io_err(path))?,
        other => other.map_err(|source| CliError::Export {
            path: path.to_path_buf(),
            source,
        })?,
    }
    w.flush().map_err(io_err(path))
}

pub fn write_run_outputs(
    dir: &Path,
    report: &MetricsReport,
    records: &[TaskRecord],
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tasks = dir.join("tasks.csv");
    let mut w = create(&tasks)?;
    write_tasks_csv(records, &mut w).map_err(io_err(&tasks))?;
    w.flush().map_err(io_err(&tasks))?;
    write_cdf(&dir.join("sched_cdf.csv"), &report.sched_latency)?;
    write_cdf(&dir.join("exec_cdf.csv"), &report.exec_time)?;
    let summary = dir.join("summary.txt");
    fs::write(&summary, report.summary_text()).map_err(io_err(&summary))
}

pub fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let s = load_scenario(path)?;
    let v = validate_scenario(&s);
    if v.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invalid(v))
    }
}

pub fn cmd_run(
    path: &Path,
    seed: Option<u64>,
    out: &Path,
    trace: bool,
) -> Result<MetricsReport, CliError> {
    let mut s = load_scenario(path)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let v = validate_scenario(&s);
    if !v.is_empty() {
        return Err(CliError::Invalid(v));
    }
    let output = run_with(
        &s,
        RunOptions {
            trace,
            audit_selections: false,
        },
    )?;
    write_run_outputs(out, &output.report, &output.records)?;
    if trace {
        let p = out.join("trace.csv");
        fs::write(&p, output.trace.to_text()).map_err(io_err(&p))?;
    }
    Ok(output.report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetName {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Calibrate,
}

impl std::str::FromStr for PresetName {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "fig2" => Ok(Self::Fig2),
            "fig3" => Ok(Self::Fig3),
            "fig4" => Ok(Self::Fig4),
            "fig5" => Ok(Self::Fig5),
            "calibrate" => Ok(Self::Calibrate),
            other => Err(CliError::UnknownPreset(other.to_string())),
        }
    }
}

pub const FIG3_FLEETS: [usize; 7] = [12, 100, 500, 1000, 2000, 5000, 10_000];
pub const FIG5_MULTIPLIERS: [f64; 3] = [1.0, 0.5, 0.25];
pub const FIG5_AGENTS: [usize; 4] = [1, 2, 4, 8];

fn mode_tag(m: ControllerMode) -> &'static str {
    match m {
        ControllerMode::Centralized => "cent",
        ControllerMode::Distributed => "dist",
    }
}

/// Homogeneous, failure-free scenario with committed defaults.
pub fn base_scenario(mode: ControllerMode, fleet: usize, seed: u64) -> Scenario {
    let mut s = Scenario::with_fleet(fleet);
    s.controller_mode = mode;
    s.seed = seed;
    s
}

pub fn heterogeneous_scenario(
    mode: ControllerMode,
    fleet: usize,
    failures: bool,
    seed: u64,
) -> Scenario {
    let mut s = base_scenario(mode, fleet, seed);
    s.heterogeneity.enabled = true;
    s.failures.enabled = failures;
    s
}

pub fn fig5_scenario(multiplier: f64, agents: usize, seed: u64) -> Scenario {
    let mut s = base_scenario(ControllerMode::Centralized, 1000, seed);
    s.net_latency_multiplier = multiplier;
    s.scheduler_agents = agents;
    s
}

/// One preset cell: a label shared by its repeats and the scenario for the
/// base seed.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetCell {
    pub label: String,
    pub scenario: Scenario,
}

/// Cells of a sweep preset, in a fixed order. `calibrate` has no cells of its
/// own; it runs the calibration targets.
pub fn preset_cells(name: PresetName, seed: u64) -> Vec<PresetCell> {
    let modes = [ControllerMode::Centralized, ControllerMode::Distributed];
    let mut cells = Vec::new();
    match name {
        PresetName::Fig2 => {
            for fleet in [12, 1000] {
                for m in modes {
                    cells.push(PresetCell {
                        label: format!("{}-{fleet}", mode_tag(m)),
                        scenario: base_scenario(m, fleet, seed),
                    });
                }
            }
        }
        PresetName::Fig3 => {
            for fleet in FIG3_FLEETS {
                cells.push(PresetCell {
                    label: format!("cent-{fleet}"),
                    scenario: base_scenario(ControllerMode::Centralized, fleet, seed),
                });
            }
        }
        PresetName::Fig4 => {
            for fleet in [12, 1000] {
                for failures in [false, true] {
                    for m in modes {
                        let tag = if failures { "het-fail" } else { "het" };
                        cells.push(PresetCell {
                            label: format!("{}-{fleet}-{tag}", mode_tag(m)),
                            scenario: heterogeneous_scenario(m, fleet, failures, seed),
                        });
                    }
                }
            }
        }
        PresetName::Fig5 => {
            for mult in FIG5_MULTIPLIERS {
                for k in FIG5_AGENTS {
                    cells.push(PresetCell {
                        label: format!("mult{mult}-k{k}"),
                        scenario: fig5_scenario(mult, k, seed),
                    });
                }
            }
        }
        PresetName::Calibrate => {}
    }
    cells
}

/// Runs `f` over `items` on a pool of at most `workers` threads (all cores
/// when `None`).
pub fn par_map<T, R, F>(items: Vec<T>, workers: Option<usize>, f: F) -> Result<Vec<R>, CliError>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n.max(1));
    }
    let pool = b.build().map_err(|e| CliError::Workers(e.to_string()))?;
    Ok(pool.install(|| items.into_par_iter().map(f).collect()))
}

/// Aggregated samples of one cell across its repeats.
#[derive(Debug, Clone)]
pub struct CellSummary {
    pub label: String,
    pub runs: usize,
    pub sched: Vec<f64>,
    pub exec: Vec<f64>,
    pub completed: u64,
    pub total: u64,
    pub incomplete_fraction: f64,
    pub network_fraction: Option<f64>,
}

impl CellSummary {
    fn from_reports(label: &str, reports: &[&MetricsReport]) -> Self {
        let mut c = CellSummary {
            label: label.to_string(),
            runs: reports.len(),
            sched: Vec::new(),
            exec: Vec::new(),
            completed: 0,
            total: 0,
            incomplete_fraction: 0.0,
            network_fraction: None,
        };
        let mut inc = Vec::new();
        let mut net = Vec::new();
        for r in reports {
            c.sched.extend_from_slice(&r.sched_latency);
            c.exec.extend_from_slice(&r.exec_time);
            c.completed += r.completed;
            c.total += r.total_tasks;
            inc.push(r.incomplete_fraction());
            net.extend(r.controller.network_fraction());
        }
        c.incomplete_fraction = mean(&inc).unwrap_or(0.0);
        c.network_fraction = mean(&net);
        c
    }
}

pub const SUMMARY_HEADER: &str =
    "cell,runs,tasks,completed,sched_p50,sched_p90,sched_p95,sched_p99,\
exec_p50,exec_mean,slow_fraction,incomplete_fraction,network_fraction";

fn summary_row(c: &CellSummary) -> String {
    let na = || "na".to_string();
    let f = |v: Option<f64>| v.map_or_else(na, |x| format!("{x}"));
    let sp = Percentiles::of(&c.sched);
    let median_exec = percentile(&c.exec, 0.5);
    let slow = median_exec.map(|m| bimodality_fraction(&c.sched, m));
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        c.label,
        c.runs,
        c.total,
        c.completed,
        f(sp.map(|p| p.p50)),
        f(sp.map(|p| p.p90)),
        f(sp.map(|p| p.p95)),
        f(sp.map(|p| p.p99)),
        f(median_exec),
        f(mean(&c.exec)),
        f(slow),
        c.incomplete_fraction,
        f(c.network_fraction),
    )
}

#[derive(Debug)]
pub struct PresetOutcome {
    pub cells: Vec<CellSummary>,
    pub calibration: Option<CalibrationReport>,
}

/// Runs every cell of `name` for `repeats` consecutive seeds starting at
/// `seed`. Per-run outputs go to `out/<cell>/seed-<n>/`; the combined
/// tables and the summary go to `out/`.
pub fn cmd_preset(
    name: PresetName,
    seed: u64,
    repeats: u32,
    out: &Path,
    workers: Option<usize>,
) -> Result<PresetOutcome, CliError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    if name == PresetName::Calibrate {
        let seeds: Vec<u64> = (0..repeats.max(1) as u64).map(|i| seed + i).collect();
        let report =
            calibration::run_calibration(&calibration::default_targets(), &seeds, workers)?;
        let p = out.join("calibration.csv");
        fs::write(&p, report.to_csv()).map_err(io_err(&p))?;
        if !report.passed() {
            return Err(CliError::Calibration(report.to_csv()));
        }
        return Ok(PresetOutcome {
            cells: Vec::new(),
            calibration: Some(report),
        });
    }

    let cells = preset_cells(name, seed);
    let mut jobs = Vec::new();
    for (ci, cell) in cells.iter().enumerate() {
        for r in 0..repeats.max(1) as u64 {
            let mut s = cell.scenario.clone();
            s.seed = seed + r;
            jobs.push((ci, s));
        }
    }
    let results = par_map(
        jobs,
        workers,
        |(ci, s)| -> Result<(usize, MetricsReport), CliError> {
            let dir = out.join(&cells[ci].label).join(format!("seed-{}", s.seed));
            let output = run_with(&s, RunOptions::default())?;
            write_run_outputs(&dir, &output.report, &output.records)?;
            let p = dir.join("scenario.json");
            fs::write(&p, scenario_json(&s)).map_err(io_err(&p))?;
            Ok((ci, output.report))
        },
    )?;
    let mut reports: Vec<(usize, MetricsReport)> = Vec::new();
    for r in results {
        reports.push(r?);
    }

    let summaries: Vec<CellSummary> = cells
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            let rs: Vec<&MetricsReport> = reports
                .iter()
                .filter(|(i, _)| *i == ci)
                .map(|(_, r)| r)
                .collect();
            CellSummary::from_reports(&c.label, &rs)
        })
        .collect();

    let sched_sets: Vec<(String, Vec<f64>)> = summaries
        .iter()
        .map(|c| (c.label.clone(), c.sched.clone()))
        .collect();
    let exec_sets: Vec<(String, Vec<f64>)> = summaries
        .iter()
        .map(|c| (c.label.clone(), c.exec.clone()))
        .collect();
    for (file, sets) in [
        ("sched_long.csv", &sched_sets),
        ("exec_long.csv", &exec_sets),
    ] {
        let p = out.join(file);
        let mut w = create(&p)?;
        export_violin(sets, &mut w).map_err(|source| CliError::Export {
            path: p.clone(),
            source,
        })?;
        w.flush().map_err(io_err(&p))?;
    }
    let mut text = String::from(SUMMARY_HEADER);
    text.push('\n');
    for c in &summaries {
        text.push_str(&summary_row(c));
        text.push('\n');
    }
    let p = out.join("summary.csv");
    fs::write(&p, text).map_err(io_err(&p))?;
    Ok(PresetOutcome {
        cells: summaries,
        calibration: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_fleet_size_is_named() {
        let err = parse_scenario("{\"seed\": 3}").unwrap_err().to_string();
        assert!(err.contains("fleet_size"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse_scenario("{\"fleet_size\": 3, \"flet\": 1}")
            .unwrap_err()
            .to_string();
        assert!(err.contains("flet"), "{err}");
        let err = parse_scenario("{\"fleet_size\": 3, \"network\": {\"rtt\": 1}}")
            .unwrap_err()
            .to_string();
        assert!(err.contains("rtt"), "{err}");
    }

    #[test]
    fn defaults_round_trip() {
        let s = parse_scenario("{\"fleet_size\": 12}").unwrap();
        assert_eq!(s, Scenario::with_fleet(12));
        assert_eq!(parse_scenario(&scenario_json(&s)).unwrap(), s);
    }

    #[test]
    fn preset_cell_counts() {
        assert_eq!(preset_cells(PresetName::Fig2, 0).len(), 4);
        assert_eq!(preset_cells(PresetName::Fig3, 0).len(), 7);
        assert_eq!(preset_cells(PresetName::Fig4, 0).len(), 8);
        assert_eq!(preset_cells(PresetName::Fig5, 0).len(), 12);
    }

    #[test]
    fn presets_are_pure() {
        for name in [
            PresetName::Fig2,
            PresetName::Fig3,
            PresetName::Fig4,
            PresetName::Fig5,
        ] {
            assert_eq!(preset_cells(name, 7), preset_cells(name, 7));
        }
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(
            "fig9".parse::<PresetName>(),
            Err(CliError::UnknownPreset(_))
        ));
    }
}
