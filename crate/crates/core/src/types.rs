//! Domain types shared by the controllers, the engine and the reporting code.
//!
//! Everything in here is a plain value type. Scenario validation is the only
//! behavior; it is total and returns every violation it finds.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::models::ModelParams;

pub type DroneId = u32;
pub type TaskId = u64;

/// A point in the arena, meters. `z` is altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const ORIGIN: Position = Position {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Euclidean distance in meters.
pub fn distance(a: Position, b: Position) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SensorKind {
    CameraPeople,
    CameraBuilding,
    CameraTree,
    CameraDrone,
    Rangefinder,
    Gps,
}

impl SensorKind {
    pub const ALL: [SensorKind; 6] = [
        SensorKind::CameraPeople,
        SensorKind::CameraBuilding,
        SensorKind::CameraTree,
        SensorKind::CameraDrone,
        SensorKind::Rangefinder,
        SensorKind::Gps,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }
}

/// Set of sensors as a bitmask over `SensorKind` ordinals. Iteration is in
/// ordinal order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "Vec<SensorKind>", from = "Vec<SensorKind>")]
pub struct SensorSet(u8);

impl SensorSet {
    pub const EMPTY: SensorSet = SensorSet(0);

    pub fn all() -> Self {
        SensorKind::ALL.into_iter().collect()
    }

    pub fn only(kind: SensorKind) -> Self {
        SensorSet(1 << kind.ordinal())
    }

    pub fn contains(self, kind: SensorKind) -> bool {
        self.0 & (1 << kind.ordinal()) != 0
    }

    pub fn insert(&mut self, kind: SensorKind) {
        self.0 |= 1 << kind.ordinal();
    }

    pub fn remove(&mut self, kind: SensorKind) {
        self.0 &= !(1 << kind.ordinal());
    }

    pub fn is_subset(self, other: SensorSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = SensorKind> {
        SensorKind::ALL
            .into_iter()
            .filter(move |k| self.contains(*k))
    }
}

impl FromIterator<SensorKind> for SensorSet {
    fn from_iter<I: IntoIterator<Item = SensorKind>>(iter: I) -> Self {
        let mut set = SensorSet::EMPTY;
        for k in iter {
            set.insert(k);
        }
        set
    }
}

impl From<Vec<SensorKind>> for SensorSet {
    fn from(v: Vec<SensorKind>) -> Self {
        v.into_iter().collect()
    }
}

impl From<SensorSet> for Vec<SensorKind> {
    fn from(s: SensorSet) -> Self {
        s.iter().collect()
    }
}

impl fmt::Debug for SensorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    Routing,
    RecognizePeople,
    RecognizeBuilding,
    RecognizeTree,
    RecognizeDrone,
    ObstacleAvoidance,
}

impl TaskKind {
    pub const ALL: [TaskKind; 6] = [
        TaskKind::Routing,
        TaskKind::RecognizePeople,
        TaskKind::RecognizeBuilding,
        TaskKind::RecognizeTree,
        TaskKind::RecognizeDrone,
        TaskKind::ObstacleAvoidance,
    ];

    pub fn required_sensors(self) -> SensorSet {
        SensorSet::only(match self {
            TaskKind::Routing => SensorKind::Gps,
            TaskKind::RecognizePeople => SensorKind::CameraPeople,
            TaskKind::RecognizeBuilding => SensorKind::CameraBuilding,
            TaskKind::RecognizeTree => SensorKind::CameraTree,
            TaskKind::RecognizeDrone => SensorKind::CameraDrone,
            TaskKind::ObstacleAvoidance => SensorKind::Rangefinder,
        })
    }

    pub fn is_recognition(self) -> bool {
        matches!(
            self,
            TaskKind::RecognizePeople
                | TaskKind::RecognizeBuilding
                | TaskKind::RecognizeTree
                | TaskKind::RecognizeDrone
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Routing => "routing",
            TaskKind::RecognizePeople => "recognize_people",
            TaskKind::RecognizeBuilding => "recognize_building",
            TaskKind::RecognizeTree => "recognize_tree",
            TaskKind::RecognizeDrone => "recognize_drone",
            TaskKind::ObstacleAvoidance => "obstacle_avoidance",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DroneStatus {
    Idle,
    Busy(TaskId),
    Disconnected {
        since: f64,
        permanent: bool,
        saved: Box<DroneStatus>,
    },
}

impl DroneStatus {
    pub fn is_idle(&self) -> bool {
        matches!(self, DroneStatus::Idle)
    }

    pub fn is_connected(&self) -> bool {
        !matches!(self, DroneStatus::Disconnected { .. })
    }

    /// Task held by the drone, looking through a disconnection.
    pub fn held_task(&self) -> Option<TaskId> {
        match self {
            DroneStatus::Idle => None,
            DroneStatus::Busy(t) => Some(*t),
            DroneStatus::Disconnected { saved, .. } => saved.held_task(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroneState {
    pub id: DroneId,
    pub position: Position,
    pub speed: f64,
    pub sensors: SensorSet,
    pub battery_capacity: f64,
    pub battery_level: f64,
    pub cpu_scale: f64,
    pub status: DroneStatus,
}

impl DroneState {
    /// A fully equipped, fully charged idle drone.
    pub fn new(id: DroneId, position: Position, speed: f64, battery_capacity: f64) -> Self {
        Self {
            id,
            position,
            speed,
            sensors: SensorSet::all(),
            battery_capacity,
            battery_level: battery_capacity,
            cpu_scale: 1.0,
            status: DroneStatus::Idle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub kind: TaskKind,
    pub location: Position,
    pub required_sensors: SensorSet,
    pub compute_work: f64,
    pub payload_bytes: f64,
    pub arrival_time: f64,
    pub parent_task: Option<TaskId>,
}

impl TaskSpec {
    /// Builds a task whose sensors, work and payload come from the kind tables
    /// in `params`.
    pub fn new(
        id: TaskId,
        kind: TaskKind,
        location: Position,
        arrival_time: f64,
        params: &ModelParams,
    ) -> Self {
        Self {
            id,
            kind,
            location,
            required_sensors: kind.required_sensors(),
            compute_work: params.work_for(kind),
            payload_bytes: params.payload_for(kind),
            arrival_time,
            parent_task: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IncompleteReason {
    RunEnd,
    HolderLost,
    Unassignable,
}

impl IncompleteReason {
    pub fn name(self) -> &'static str {
        match self {
            IncompleteReason::RunEnd => "run_end",
            IncompleteReason::HolderLost => "holder_lost",
            IncompleteReason::Unassignable => "unassignable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TaskPhase {
    Pending,
    Claimed { drone: DroneId, at: f64 },
    Executing { drone: DroneId, at: f64 },
    Completed { at: f64 },
    Incomplete(IncompleteReason),
}

impl TaskPhase {
    pub fn label(&self) -> &'static str {
        match self {
            TaskPhase::Pending => "pending",
            TaskPhase::Claimed { .. } => "claimed",
            TaskPhase::Executing { .. } => "executing",
            TaskPhase::Completed { .. } => "completed",
            TaskPhase::Incomplete(_) => "incomplete",
        }
    }

    pub fn holder(&self) -> Option<DroneId> {
        match self {
            TaskPhase::Claimed { drone, .. } | TaskPhase::Executing { drone, .. } => Some(*drone),
            _ => None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, TaskPhase::Completed { .. } | TaskPhase::Incomplete(_))
    }
}

/// Whether `from -> to` is a legal task transition. Requeue (back to
/// Pending) is only legal when `allow_requeue` is set (centralized mode).
pub fn legal_transition(from: &TaskPhase, to: &TaskPhase, allow_requeue: bool) -> bool {
    use TaskPhase::*;
    match (from, to) {
        (Pending, Claimed { .. }) => true,
        (Claimed { drone: a, .. }, Executing { drone: b, .. }) => a == b,
        (Executing { .. }, Completed { .. }) => true,
        (Claimed { .. } | Executing { .. }, Pending) => allow_requeue,
        (Claimed { .. } | Executing { .. } | Pending, Incomplete(_)) => true,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStatus {
    pub phase: TaskPhase,
    pub version: u64,
    pub reschedule_count: u32,
}

impl TaskStatus {
    pub fn pending() -> Self {
        Self {
            phase: TaskPhase::Pending,
            version: 0,
            reschedule_count: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControllerMode {
    Centralized,
    Distributed,
}

impl ControllerMode {
    pub fn name(self) -> &'static str {
        match self {
            ControllerMode::Centralized => "centralized",
            ControllerMode::Distributed => "distributed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecutionSite {
    Edge,
    CloudNative,
    CloudServerless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeterogeneityConfig {
    pub enabled: bool,
    pub sensor_drop_prob: f64,
    pub battery_init_range: (f64, f64),
    pub cpu_scale_choices: Vec<(f64, f64)>,
}

impl Default for HeterogeneityConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            sensor_drop_prob: 0.3,
            battery_init_range: (0.4, 1.0),
            cpu_scale_choices: vec![(0.5, 1.0), (0.75, 1.0), (1.0, 1.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureConfig {
    pub enabled: bool,
    pub interval: f64,
    pub fraction: f64,
    pub outage_duration: f64,
    pub permanent_prob: f64,
    pub detect_timeout: f64,
}

impl Default for FailureConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            interval: 5.0,
            fraction: 0.10,
            outage_duration: 10.0,
            permanent_prob: 0.09,
            detect_timeout: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    /// Pending tasks the generator keeps in the pool; `None` means twice the
    /// fleet size.
    pub backlog_target: Option<usize>,
    pub include_tree: bool,
    pub obstacle_prob: f64,
    pub tick_period: f64,
    /// Stop generating after this many tasks in total.
    pub task_limit: Option<u64>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            backlog_target: None,
            include_tree: false,
            obstacle_prob: 0.3,
            tick_period: 1.0,
            task_limit: None,
        }
    }
}

impl WorkloadConfig {
    pub fn backlog_for(&self, fleet_size: usize) -> usize {
        self.backlog_target.unwrap_or(2 * fleet_size)
    }

    pub fn kind_mix(&self) -> Vec<TaskKind> {
        let mut kinds = vec![
            TaskKind::Routing,
            TaskKind::RecognizePeople,
            TaskKind::RecognizeBuilding,
            TaskKind::RecognizeDrone,
        ];
        if self.include_tree {
            kinds.push(TaskKind::RecognizeTree);
        }
        kinds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub rtt_median: f64,
    pub rtt_sigma: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            rtt_median: 0.011,
            rtt_sigma: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub per_drone_scan_cost: f64,
    /// Pending tasks the dispatcher may skip past before it sleeps until
    /// the fleet changes.
    pub lookahead: usize,
    /// Keep the dispatcher busy until the drone acknowledges the mission.
    pub await_ack: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            per_drone_scan_cost: 21e-6,
            lookahead: 64,
            await_ack: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub snapshot_limit: usize,
    pub backoff_interval: f64,
    /// Agents power on at a uniform offset in `[0, start_jitter)`.
    pub start_jitter: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            snapshot_limit: 64,
            backoff_interval: 0.5,
            start_jitter: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub fleet_size: usize,
    #[serde(default)]
    pub arena_radius: Option<f64>,
    #[serde(default = "default_altitude")]
    pub arena_altitude: f64,
    #[serde(default = "default_mode")]
    pub controller_mode: ControllerMode,
    #[serde(default = "default_agents")]
    pub scheduler_agents: usize,
    #[serde(default = "default_multiplier")]
    pub net_latency_multiplier: f64,
    #[serde(default = "default_site")]
    pub execution_site: ExecutionSite,
    #[serde(default)]
    pub heterogeneity: HeterogeneityConfig,
    #[serde(default)]
    pub failures: FailureConfig,
    #[serde(default)]
    pub workload: WorkloadConfig,
    #[serde(default)]
    pub model_params: ModelParams,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_altitude() -> f64 {
    20.0
}
fn default_mode() -> ControllerMode {
    ControllerMode::Centralized
}
fn default_agents() -> usize {
    1
}
fn default_multiplier() -> f64 {
    1.0
}
fn default_site() -> ExecutionSite {
    ExecutionSite::Edge
}
fn default_duration() -> f64 {
    600.0
}

impl Default for Scenario {
    fn default() -> Self {
        Self::with_fleet(1000)
    }
}

impl Scenario {
    pub fn with_fleet(fleet_size: usize) -> Self {
        Self {
            fleet_size,
            arena_radius: None,
            arena_altitude: default_altitude(),
            controller_mode: default_mode(),
            scheduler_agents: default_agents(),
            net_latency_multiplier: default_multiplier(),
            execution_site: default_site(),
            heterogeneity: HeterogeneityConfig::default(),
            failures: FailureConfig::default(),
            workload: WorkloadConfig::default(),
            model_params: ModelParams::default(),
            network: NetworkConfig::default(),
            controller: ControllerConfig::default(),
            agent: AgentConfig::default(),
            duration: default_duration(),
            seed: 0,
        }
    }

    /// Arena radius: explicit, or 50 m at 12 drones scaled by
    /// `sqrt(fleet / 12)` so drone density stays constant.
    pub fn radius(&self) -> f64 {
        self.arena_radius
            .unwrap_or_else(|| 50.0 * (self.fleet_size.max(12) as f64 / 12.0).sqrt())
    }

    pub fn backlog_target(&self) -> usize {
        self.workload.backlog_for(self.fleet_size)
    }
}

/// One failed constraint: the offending field path and what it must satisfy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

struct Checker(Vec<Violation>);

impl Checker {
    fn check(&mut self, ok: bool, field: &str, constraint: &str) {
        if !ok {
            self.0.push(Violation {
                field: field.to_string(),
                constraint: constraint.to_string(),
            });
        }
    }

    fn positive(&mut self, v: f64, field: &str) {
        self.check(v.is_finite() && v > 0.0, field, "must be finite and > 0");
    }

    fn prob(&mut self, v: f64, field: &str) {
        self.check((0.0..=1.0).contains(&v), field, "must be in [0, 1]");
    }
}

/// Every violated field invariant of `s`; empty when the scenario is valid.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut c = Checker(Vec::new());
    c.check(s.fleet_size >= 1, "fleet_size", "must be >= 1");
    if let Some(r) = s.arena_radius {
        c.positive(r, "arena_radius");
    }
    c.positive(s.arena_altitude, "arena_altitude");
    c.check(s.scheduler_agents >= 1, "scheduler_agents", "must be >= 1");
    c.check(
        s.net_latency_multiplier > 0.0 && s.net_latency_multiplier <= 1.0,
        "net_latency_multiplier",
        "must be in (0, 1]",
    );
    c.check(
        s.duration.is_finite() && s.duration >= 0.0,
        "duration",
        "must be finite and >= 0",
    );

    let h = &s.heterogeneity;
    c.prob(h.sensor_drop_prob, "heterogeneity.sensor_drop_prob");
    let (lo, hi) = h.battery_init_range;
    c.check(
        (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi,
        "heterogeneity.battery_init_range",
        "must satisfy 0 <= lo <= hi <= 1",
    );
    c.check(
        !h.cpu_scale_choices.is_empty(),
        "heterogeneity.cpu_scale_choices",
        "must not be empty",
    );
    c.check(
        h.cpu_scale_choices
            .iter()
            .all(|&(scale, w)| scale > 0.0 && scale <= 1.0 && w >= 0.0 && w.is_finite()),
        "heterogeneity.cpu_scale_choices",
        "scales must be in (0, 1] and weights >= 0",
    );
    c.check(
        h.cpu_scale_choices.iter().map(|c| c.1).sum::<f64>() > 0.0,
        "heterogeneity.cpu_scale_choices",
        "weights must not all be zero",
    );

    let f = &s.failures;
    c.positive(f.interval, "failures.interval");
    c.prob(f.fraction, "failures.fraction");
    c.positive(f.outage_duration, "failures.outage_duration");
    c.prob(f.permanent_prob, "failures.permanent_prob");
    c.positive(f.detect_timeout, "failures.detect_timeout");

    let w = &s.workload;
    c.check(
        s.backlog_target() >= s.fleet_size,
        "workload.backlog_target",
        "must be >= fleet_size",
    );
    c.prob(w.obstacle_prob, "workload.obstacle_prob");
    c.positive(w.tick_period, "workload.tick_period");

    for (field, constraint) in s.model_params.violations() {
        c.check(false, &format!("model_params.{field}"), constraint);
    }

    c.positive(s.network.rtt_median, "network.rtt_median");
    c.check(
        s.network.rtt_sigma.is_finite() && s.network.rtt_sigma >= 0.0,
        "network.rtt_sigma",
        "must be finite and >= 0",
    );
    c.positive(
        s.controller.per_drone_scan_cost,
        "controller.per_drone_scan_cost",
    );
    c.check(
        s.controller.lookahead >= 1,
        "controller.lookahead",
        "must be >= 1",
    );
    c.check(
        s.agent.snapshot_limit >= 1,
        "agent.snapshot_limit",
        "must be >= 1",
    );
    c.positive(s.agent.backoff_interval, "agent.backoff_interval");
    c.check(
        s.agent.start_jitter.is_finite() && s.agent.start_jitter >= 0.0,
        "agent.start_jitter",
        "must be finite and >= 0",
    );
    c.0
}
