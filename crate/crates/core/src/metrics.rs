//! Per-task timelines, aggregated distributions and file exports.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::types::{DroneId, IncompleteReason, TaskId, TaskKind, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Completed,
    Incomplete(IncompleteReason),
    /// Still waiting in the pool when the run ended.
    Pending,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Completed => "completed",
            Outcome::Incomplete(r) => r.name(),
            Outcome::Pending => "pending",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub id: TaskId,
    pub kind: TaskKind,
    pub parent: Option<TaskId>,
    pub arrival_time: f64,
    pub first_assign_time: Option<f64>,
    pub final_assign_time: Option<f64>,
    pub exec_start: Option<f64>,
    pub completion_time: Option<f64>,
    pub outcome: Outcome,
    pub reschedules: u32,
    pub conflicts_encountered: u32,
    pub messages: u32,
    pub drones: Vec<DroneId>,
    /// Time the task spent waiting on the scheduler while a drone was free
    /// for it, summed over every (re)assignment.
    pub sched_latency: Option<f64>,
    requeued_at: Option<f64>,
}

impl TaskRecord {
    fn new(spec: &TaskSpec) -> Self {
        Self {
            id: spec.id,
            kind: spec.kind,
            parent: spec.parent_task,
            arrival_time: spec.arrival_time,
            first_assign_time: None,
            final_assign_time: None,
            exec_start: None,
            completion_time: None,
            outcome: Outcome::Pending,
            reschedules: 0,
            conflicts_encountered: 0,
            messages: 0,
            drones: Vec::new(),
            sched_latency: None,
            requeued_at: None,
        }
    }

    pub fn exec_time(&self) -> Option<f64> {
        Some(self.completion_time? - self.final_assign_time?)
    }

    /// Scheduling latency plus execution time, for completed tasks.
    pub fn end_to_end(&self) -> Option<f64> {
        Some(self.sched_latency? + self.exec_time()?)
    }
}

/// Collects task timelines during a run. Task ids are dense from 0.
#[derive(Debug, Clone, Default)]
pub struct Recorder {
    pub tasks: Vec<TaskRecord>,
}

impl Recorder {
    pub fn on_enqueue(&mut self, spec: &TaskSpec) {
        assert_eq!(spec.id as usize, self.tasks.len(), "task ids must be dense");
        self.tasks.push(TaskRecord::new(spec));
    }

    fn rec(&mut self, task: TaskId) -> &mut TaskRecord {
        &mut self.tasks[task as usize]
    }

    /// The drone learned it owns `task` at `now`. `drone_free_since` is when
    /// the drone last became able to take work.
    pub fn on_assigned(
        &mut self,
        task: TaskId,
        drone: DroneId,
        now: f64,
        drone_free_since: f64,
        conflicts: u32,
        messages: u32,
    ) {
        let r = self.rec(task);
        let since = r
            .requeued_at
            .unwrap_or(r.arrival_time)
            .max(drone_free_since);
        let wait = (now - since).max(0.0);
        r.sched_latency = Some(r.sched_latency.unwrap_or(0.0) + wait);
        r.first_assign_time.get_or_insert(now);
        r.final_assign_time = Some(now);
        r.exec_start = None;
        r.drones.push(drone);
        r.conflicts_encountered += conflicts;
        r.messages += messages;
    }

    pub fn on_requeue(&mut self, task: TaskId, now: f64) {
        let r = self.rec(task);
        r.reschedules += 1;
        r.requeued_at = Some(now);
    }

    pub fn on_exec_start(&mut self, task: TaskId, now: f64) {
        self.rec(task).exec_start = Some(now);
    }

    pub fn on_message(&mut self, task: TaskId) {
        self.rec(task).messages += 1;
    }

    pub fn on_completed(&mut self, task: TaskId, now: f64) {
        let r = self.rec(task);
        r.completion_time = Some(now);
        r.outcome = Outcome::Completed;
    }

    pub fn set_outcome(&mut self, task: TaskId, outcome: Outcome) {
        self.rec(task).outcome = outcome;
    }
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(p * n)` of the
/// sorted samples, rank 1 for `p = 0`. `None` for no samples.
pub fn percentile(samples: &[f64], p: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Some(percentile_sorted(&v, p))
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

pub fn mean(samples: &[f64]) -> Option<f64> {
    (!samples.is_empty()).then(|| samples.iter().sum::<f64>() / samples.len() as f64)
}

/// Fraction of samples strictly above `threshold`.
pub fn bimodality_fraction(samples: &[f64], threshold: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|&&s| s > threshold).count() as f64 / samples.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Percentiles {
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
}

impl Percentiles {
    pub fn of(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            p50: percentile_sorted(&v, 0.50),
            p90: percentile_sorted(&v, 0.90),
            p95: percentile_sorted(&v, 0.95),
            p99: percentile_sorted(&v, 0.99),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ControllerSplit {
    pub busy_network: f64,
    pub busy_compute: f64,
    pub busy_total: f64,
    pub busy_network_ns: u64,
    pub busy_compute_ns: u64,
    pub busy_total_ns: u64,
    pub dispatches: u64,
    pub scans: u64,
    pub skips: u64,
    pub drone_conflicts: u64,
}

impl ControllerSplit {
    pub fn network_fraction(&self) -> Option<f64> {
        (self.busy_total_ns > 0).then(|| self.busy_network_ns as f64 / self.busy_total_ns as f64)
    }

    pub fn compute_fraction(&self) -> Option<f64> {
        (self.busy_total_ns > 0).then(|| self.busy_compute_ns as f64 / self.busy_total_ns as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mode: &'static str,
    pub fleet_size: usize,
    pub seed: u64,
    pub duration: f64,
    pub total_tasks: u64,
    pub completed: u64,
    pub incomplete_run_end: u64,
    pub incomplete_holder_lost: u64,
    pub incomplete_unassignable: u64,
    pub residual_pending: u64,
    /// Per assigned task, in id order.
    pub sched_latency: Vec<f64>,
    /// Per completed task, in id order.
    pub exec_time: Vec<f64>,
    pub end_to_end: Vec<f64>,
    pub claims: u64,
    pub conflicts: u64,
    pub requeues: u64,
    pub reschedules: u64,
    pub controller: ControllerSplit,
    pub assignments: u64,
    pub disconnects: u64,
    pub permanent_losses: u64,
}

impl MetricsReport {
    pub fn from_records(records: &[TaskRecord]) -> Self {
        let mut r = Self {
            mode: "",
            fleet_size: 0,
            seed: 0,
            duration: 0.0,
            total_tasks: records.len() as u64,
            completed: 0,
            incomplete_run_end: 0,
            incomplete_holder_lost: 0,
            incomplete_unassignable: 0,
            residual_pending: 0,
            sched_latency: Vec::new(),
            exec_time: Vec::new(),
            end_to_end: Vec::new(),
            claims: 0,
            conflicts: 0,
            requeues: 0,
            reschedules: 0,
            controller: ControllerSplit::default(),
            assignments: 0,
            disconnects: 0,
            permanent_losses: 0,
        };
        for t in records {
            match t.outcome {
                Outcome::Completed => r.completed += 1,
                Outcome::Pending => r.residual_pending += 1,
                Outcome::Incomplete(IncompleteReason::RunEnd) => r.incomplete_run_end += 1,
                Outcome::Incomplete(IncompleteReason::HolderLost) => r.incomplete_holder_lost += 1,
                Outcome::Incomplete(IncompleteReason::Unassignable) => {
                    r.incomplete_unassignable += 1
                }
            }
            r.reschedules += t.reschedules as u64;
            r.assignments += t.drones.len() as u64;
            if let Some(s) = t.sched_latency {
                r.sched_latency.push(s);
            }
            if let Some(e) = t.exec_time() {
                r.exec_time.push(e);
            }
            if let Some(e) = t.end_to_end() {
                r.end_to_end.push(e);
            }
        }
        r
    }

    pub fn incomplete(&self) -> u64 {
        self.incomplete_run_end + self.incomplete_holder_lost + self.incomplete_unassignable
    }

    fn frac(&self, n: u64) -> f64 {
        if self.total_tasks == 0 {
            0.0
        } else {
            n as f64 / self.total_tasks as f64
        }
    }

    pub fn completion_fraction(&self) -> f64 {
        self.frac(self.completed)
    }

    pub fn incomplete_fraction(&self) -> f64 {
        self.frac(self.incomplete())
    }

    pub fn residual_fraction(&self) -> f64 {
        self.frac(self.residual_pending)
    }

    /// Among tasks whose fate was decided by a drone (completed or lost with
    /// their holder), the share that never completed.
    pub fn lost_fraction(&self) -> f64 {
        let decided = self.completed + self.incomplete_holder_lost;
        if decided == 0 {
            0.0
        } else {
            self.incomplete_holder_lost as f64 / decided as f64
        }
    }

    /// Lost claims over claim attempts.
    pub fn conflict_rate(&self) -> f64 {
        let attempts = self.claims + self.conflicts;
        if attempts == 0 {
            0.0
        } else {
            self.conflicts as f64 / attempts as f64
        }
    }

    pub fn throughput(&self) -> f64 {
        if self.duration > 0.0 {
            self.assignments as f64 / self.duration
        } else {
            0.0
        }
    }

    pub fn sched_percentiles(&self) -> Option<Percentiles> {
        Percentiles::of(&self.sched_latency)
    }

    pub fn exec_percentiles(&self) -> Option<Percentiles> {
        Percentiles::of(&self.exec_time)
    }

    pub fn median_sched(&self) -> Option<f64> {
        percentile(&self.sched_latency, 0.5)
    }

    pub fn median_exec(&self) -> Option<f64> {
        percentile(&self.exec_time, 0.5)
    }

    pub fn mean_exec(&self) -> Option<f64> {
        mean(&self.exec_time)
    }

    /// Share of scheduling latencies above the median task execution time.
    pub fn slow_fraction(&self) -> Option<f64> {
        Some(bimodality_fraction(
            &self.sched_latency,
            self.median_exec()?,
        ))
    }

    /// `key = value` lines with a fixed key set and order.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or_else(|| "na".to_string(), |x| format!("{x}"));
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("mode", self.mode.to_string());
        kv("fleet_size", self.fleet_size.to_string());
        kv("seed", self.seed.to_string());
        kv("duration", format!("{}", self.duration));
        kv("tasks_total", self.total_tasks.to_string());
        kv("tasks_completed", self.completed.to_string());
        kv(
            "tasks_incomplete_run_end",
            self.incomplete_run_end.to_string(),
        );
        kv(
            "tasks_incomplete_holder_lost",
            self.incomplete_holder_lost.to_string(),
        );
        kv(
            "tasks_incomplete_unassignable",
            self.incomplete_unassignable.to_string(),
        );
        kv("tasks_residual_pending", self.residual_pending.to_string());
        kv(
            "completion_fraction",
            format!("{}", self.completion_fraction()),
        );
        kv(
            "incomplete_fraction",
            format!("{}", self.incomplete_fraction()),
        );
        kv("residual_fraction", format!("{}", self.residual_fraction()));
        kv("lost_fraction", format!("{}", self.lost_fraction()));
        let sp = self.sched_percentiles();
        kv("sched_samples", self.sched_latency.len().to_string());
        kv("sched_mean", opt(mean(&self.sched_latency)));
        kv("sched_p50", opt(sp.map(|p| p.p50)));
        kv("sched_p90", opt(sp.map(|p| p.p90)));
        kv("sched_p95", opt(sp.map(|p| p.p95)));
        kv("sched_p99", opt(sp.map(|p| p.p99)));
        let ep = self.exec_percentiles();
        kv("exec_samples", self.exec_time.len().to_string());
        kv("exec_mean", opt(self.mean_exec()));
        kv("exec_p50", opt(ep.map(|p| p.p50)));
        kv("exec_p90", opt(ep.map(|p| p.p90)));
        kv("exec_p95", opt(ep.map(|p| p.p95)));
        kv("exec_p99", opt(ep.map(|p| p.p99)));
        kv("end_to_end_p50", opt(percentile(&self.end_to_end, 0.5)));
        kv("slow_fraction", opt(self.slow_fraction()));
        kv("claims", self.claims.to_string());
        kv("conflicts", self.conflicts.to_string());
        kv("conflict_rate", format!("{}", self.conflict_rate()));
        kv("requeues", self.requeues.to_string());
        kv("disconnects", self.disconnects.to_string());
        kv("permanent_losses", self.permanent_losses.to_string());
        kv("assignments", self.assignments.to_string());
        kv("throughput", format!("{}", self.throughput()));
        let c = &self.controller;
        kv("controller_busy_network", format!("{}", c.busy_network));
        kv("controller_busy_compute", format!("{}", c.busy_compute));
        kv("controller_busy_total", format!("{}", c.busy_total));
        kv("controller_network_fraction", opt(c.network_fraction()));
        kv("controller_compute_fraction", opt(c.compute_fraction()));
        kv("controller_dispatches", c.dispatches.to_string());
        kv("controller_scans", c.scans.to_string());
        kv("controller_skips", c.skips.to_string());
        kv("controller_drone_conflicts", c.drone_conflicts.to_string());
        s
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn write_tasks_csv<W: Write>(records: &[TaskRecord], mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "id,kind,parent,arrival_time,first_assign_time,final_assign_time,exec_start,completion_time,outcome,reschedules,conflicts,messages,sched_latency,exec_time,drones"
    )?;
    for t in records {
        let drones: Vec<String> = t.drones.iter().map(|d| d.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            t.id,
            t.kind.name(),
            t.parent.map(|p| p.to_string()).unwrap_or_default(),
            t.arrival_time,
            opt_cell(t.first_assign_time),
            opt_cell(t.final_assign_time),
            opt_cell(t.exec_start),
            opt_cell(t.completion_time),
            t.outcome.label(),
            t.reschedules,
            t.conflicts_encountered,
            t.messages,
            opt_cell(t.sched_latency),
            opt_cell(t.exec_time()),
            drones.join(";"),
        )?;
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("no samples to export")]
    Empty,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// `value,fraction` rows over the sorted samples; the last fraction is 1.
pub fn export_cdf<W: Write>(samples: &[f64], mut w: W) -> Result<(), ExportError> {
    if samples.is_empty() {
        return Err(ExportError::Empty);
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    writeln!(w, "value,fraction")?;
    for (i, x) in v.iter().enumerate() {
        let frac = if i + 1 == n {
            1.0
        } else {
            (i + 1) as f64 / n as f64
        };
        writeln!(w, "{x},{frac}")?;
    }
    Ok(())
}

/// Long-format `label,value` rows, grouped by label in the given order.
pub fn export_violin<W: Write>(sets: &[(String, Vec<f64>)], mut w: W) -> Result<(), ExportError> {
    if sets.is_empty() {
        return Err(ExportError::Empty);
    }
    writeln!(w, "label,value")?;
    for (label, values) in sets {
        for v in values {
            writeln!(w, "{label},{v}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelParams;
    use crate::types::Position;

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.5), Some(2.0));
        for p in [0.0, 0.3, 1.0] {
            assert_eq!(percentile(&[7.0], p), Some(7.0));
        }
        let fives = vec![5.0; 1000];
        for p in [0.0, 0.01, 0.5, 0.99, 1.0] {
            assert_eq!(percentile(&fives, p), Some(5.0));
        }
        assert_eq!(percentile(&[], 0.5), None);
    }

    #[test]
    fn percentile_ends() {
        let v = [3.0, 9.0, 1.0, 4.0];
        assert_eq!(percentile(&v, 0.0), Some(1.0));
        assert_eq!(percentile(&v, 1.0), Some(9.0));
    }

    #[test]
    fn cdf_export() {
        let mut out = Vec::new();
        export_cdf(&[2.0, 1.0], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "value,fraction\n1,0.5\n2,1\n"
        );
        assert!(matches!(
            export_cdf(&[], Vec::new()),
            Err(ExportError::Empty)
        ));
    }

    #[test]
    fn large_cdf_is_strictly_increasing() {
        let samples: Vec<f64> = (0..100_000)
            .map(|i| ((i * 7919) % 100_003) as f64)
            .collect();
        let mut out = Vec::new();
        export_cdf(&samples, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let fracs: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(fracs.len(), 100_000);
        assert!(fracs.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*fracs.last().unwrap(), 1.0);
        let mut again = Vec::new();
        export_cdf(&samples, &mut again).unwrap();
        assert_eq!(text.as_bytes(), &again[..]);
    }

    #[test]
    fn violin_export() {
        let sets = vec![
            ("b".to_string(), vec![1.0, 2.0, 3.0]),
            ("a".to_string(), vec![4.0, 5.0, 6.0]),
        ];
        let mut out = Vec::new();
        export_violin(&sets, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let labels: Vec<&str> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(labels, vec!["b", "b", "b", "a", "a", "a"]);
        assert!(matches!(
            export_violin(&[], Vec::new()),
            Err(ExportError::Empty)
        ));
    }

    #[test]
    fn bimodality_examples() {
        assert_eq!(bimodality_fraction(&[1.0, 2.0], 5.0), 0.0);
        assert_eq!(bimodality_fraction(&[1.0, 2.0, 8.0, 9.0], 5.0), 0.5);
    }

    #[test]
    fn requeue_accumulates_latency() {
        let p = ModelParams::default();
        let spec = TaskSpec::new(0, TaskKind::Routing, Position::ORIGIN, 10.0, &p);
        let mut rec = Recorder::default();
        rec.on_enqueue(&spec);
        rec.on_assigned(0, 1, 12.0, 11.0, 0, 2);
        rec.on_requeue(0, 20.0);
        rec.on_assigned(0, 2, 21.5, 5.0, 0, 2);
        rec.on_completed(0, 40.0);
        let t = &rec.tasks[0];
        assert_eq!(t.sched_latency, Some(1.0 + 1.5));
        assert_eq!(t.first_assign_time, Some(12.0));
        assert_eq!(t.exec_time(), Some(18.5));
        assert_eq!(t.drones, vec![1, 2]);
    }

    proptest::proptest! {
        #[test]
        fn percentile_monotone_in_p(v in proptest::collection::vec(-1e3f64..1e3, 1..100), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(percentile(&v, lo).unwrap() <= percentile(&v, hi).unwrap());
            let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            proptest::prop_assert_eq!(percentile(&v, 1.0).unwrap(), max);
        }
    }
}
