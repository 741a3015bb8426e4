//! Calibration targets for the committed default constants.
//!
//! Each target names a statistic of one or more runs, a reference value and
//! a tolerance. Adjusting defaults is manual: change a constant, rerun
//! `preset calibrate`, commit both.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::cli::{base_scenario, heterogeneous_scenario, par_map, scenario_json, CliError};
use crate::engine::{run_with, RunOptions};
use crate::metrics::{mean, MetricsReport};
use crate::types::{ControllerMode, Scenario};

/// The statistic a target measures. Each variant fixes the scenarios it needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    /// Network share of controller busy time, centralized fleet-1000
    /// homogeneous run without failures.
    NetworkShare,
    /// Distributed fleet-1000, heterogeneous with failures: share of taken-on
    /// tasks lost with their drone.
    LostFraction,
    /// Same setting, both modes: distributed over centralized mean execution
    /// time of completed tasks.
    ExecRatio,
}

impl Statistic {
    pub fn scenarios(self, seed: u64) -> Vec<Scenario> {
        match self {
            Statistic::NetworkShare => vec![base_scenario(ControllerMode::Centralized, 1000, seed)],
            Statistic::LostFraction => {
                vec![heterogeneous_scenario(
                    ControllerMode::Distributed,
                    1000,
                    true,
                    seed,
                )]
            }
            Statistic::ExecRatio => vec![
                heterogeneous_scenario(ControllerMode::Distributed, 1000, true, seed),
                heterogeneous_scenario(ControllerMode::Centralized, 1000, true, seed),
            ],
        }
    }

    /// `reports` in the order of [`Statistic::scenarios`].
    pub fn measure(self, reports: &[&MetricsReport]) -> Option<f64> {
        match self {
            Statistic::NetworkShare => reports[0].controller.network_fraction(),
            Statistic::LostFraction => Some(reports[0].lost_fraction()),
            Statistic::ExecRatio => Some(reports[0].mean_exec()? / reports[1].mean_exec()?),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTarget {
    pub name: &'static str,
    pub statistic: Statistic,
    pub reference: f64,
    pub tolerance: f64,
}

impl CalibrationTarget {
    pub fn accepts(&self, value: f64) -> bool {
        (value - self.reference).abs() <= self.tolerance
    }
}

pub fn default_targets() -> Vec<CalibrationTarget> {
    vec![
        CalibrationTarget {
            name: "network_share",
            statistic: Statistic::NetworkShare,
            reference: 0.34,
            tolerance: 0.10,
        },
        CalibrationTarget {
            name: "incompletion",
            statistic: Statistic::LostFraction,
            reference: 0.18,
            tolerance: 0.08,
        },
        CalibrationTarget {
            name: "elongation",
            statistic: Statistic::ExecRatio,
            reference: 1.56,
            tolerance: 0.15,
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub target: CalibrationTarget,
    pub per_seed: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<CalibrationRow>,
}

impl CalibrationReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("target,reference,tolerance,mean,per_seed,result\n");
        for r in &self.rows {
            let per: Vec<String> = r
                .per_seed
                .iter()
                .map(|v| v.map_or_else(|| "na".into(), |x| format!("{x:.4}")))
                .collect();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.target.name,
                r.target.reference,
                r.target.tolerance,
                r.mean.map_or_else(|| "na".into(), |x| format!("{x:.4}")),
                per.join(";"),
                if r.pass { "pass" } else { "fail" }
            );
        }
        s
    }
}

/// Runs every scenario the targets need on each seed (shared scenarios run
/// once) and scores the seed-mean of each statistic.
pub fn run_calibration(
    targets: &[CalibrationTarget],
    seeds: &[u64],
    workers: Option<usize>,
) -> Result<CalibrationReport, CliError> {
    let mut unique: BTreeMap<String, Scenario> = BTreeMap::new();
    for t in targets {
        for &seed in seeds {
            for s in t.statistic.scenarios(seed) {
                unique.entry(scenario_json(&s)).or_insert(s);
            }
        }
    }
    let jobs: Vec<(String, Scenario)> = unique.into_iter().collect();
    let results = par_map(jobs, workers, |(key, s)| {
        run_with(&s, RunOptions::default()).map(|o| (key, o.report))
    })?;
    let mut reports = BTreeMap::new();
    for r in results {
        let (k, rep) = r?;
        reports.insert(k, rep);
    }

    let rows = targets
        .iter()
        .map(|t| {
            let per_seed: Vec<Option<f64>> = seeds
                .iter()
                .map(|&seed| {
                    let rs: Vec<&MetricsReport> = t
                        .statistic
                        .scenarios(seed)
                        .iter()
                        .map(|s| &reports[&scenario_json(s)])
                        .collect();
                    t.statistic.measure(&rs)
                })
                .collect();
            let vals: Option<Vec<f64>> = per_seed.iter().copied().collect();
            let m = vals.and_then(|v| mean(&v));
            CalibrationRow {
                pass: m.is_some_and(|x| t.accepts(x)),
                target: t.clone(),
                per_seed,
                mean: m,
            }
        })
        .collect();
    Ok(CalibrationReport {
        seeds: seeds.to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_is_inclusive() {
        let t = &default_targets()[0];
        assert!(t.accepts(0.34));
        assert!(t.accepts(0.25));
        assert!(!t.accepts(0.20));
    }

    #[test]
    fn ratio_needs_both_runs() {
        assert_eq!(Statistic::ExecRatio.scenarios(1).len(), 2);
        let modes: Vec<_> = Statistic::ExecRatio
            .scenarios(1)
            .iter()
            .map(|s| s.controller_mode)
            .collect();
        assert_eq!(
            modes,
            vec![ControllerMode::Distributed, ControllerMode::Centralized]
        );
    }
}
