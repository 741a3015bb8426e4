//! Discrete-event simulation of one scenario.
//!
//! The kernel owns the clock, the pool, the fleet and every drone's current
//! timed activity. Controllers make decisions; the kernel turns them into
//! timed messages, flights and computations.
//!
//! Every drone has at most one timed activity. Disconnecting freezes the
//! activities that need the link (all of them under the centralized
//! controller, messages and cloud-side work under the distributed one) by
//! saving the remaining time and bumping the drone's token so the queued
//! event goes stale. Reconnecting reschedules the remainder.

pub mod failures;
pub mod fleet;
pub mod kernel;
pub mod network;
pub mod rng;
pub mod workload;

use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::central::{secs, CentralController, ControllerOutput, ServiceTimeModel};
use crate::dist::{pick_task, AgentPhase, DroneAgentState};
use crate::metrics::{ControllerSplit, MetricsReport, Outcome, Recorder, TaskRecord};
use crate::models::{battery_cost, exec_time, travel_time, ModelParams};
use crate::taskpool::{ClaimOutcome, ClaimRequest, PoolError, TaskPool};
use crate::types::{
    validate_scenario, ControllerMode, DroneId, DroneState, DroneStatus, ExecutionSite,
    IncompleteReason, Scenario, TaskId, TaskPhase, TaskSpec, Violation,
};

use kernel::{EventKind, EventQueue, MsgTag};
use network::{NetworkModel, NetworkSampler};
use rand::Rng;
use rng::RngStreams;
use workload::Workload;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("t={time}: pool invariant violated after {events} events: {source}")]
    Pool {
        time: f64,
        events: u64,
        source: PoolError,
    },
    #[error("t={time}: invariant violated after {events} events: {what}")]
    Invariant {
        time: f64,
        events: u64,
        what: String,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Record the event trace.
    pub trace: bool,
    /// Record the fleet view behind every centralized drone selection.
    pub audit_selections: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceKind {
    Selected {
        agent: usize,
        task: TaskId,
        drone: Option<DroneId>,
    },
    Claim {
        task: TaskId,
        drone: DroneId,
        observed: u64,
        won: bool,
    },
    Transition {
        task: TaskId,
        to: &'static str,
        drone: Option<DroneId>,
    },
    Message {
        drone: DroneId,
        tag: MsgTag,
    },
    Debit {
        drone: DroneId,
        task: TaskId,
        cost: f64,
        level: f64,
    },
    Disconnect {
        drone: DroneId,
        permanent: bool,
    },
    Reconnect {
        drone: DroneId,
    },
    Requeue {
        task: TaskId,
        drone: DroneId,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub kind: TraceKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One line per record; stable across runs.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            let _ = write!(s, "{},", r.time);
            let _ = match &r.kind {
                TraceKind::Selected { agent, task, drone } => writeln!(
                    s,
                    "select,{agent},{task},{}",
                    drone.map_or_else(|| "-".to_string(), |d| d.to_string())
                ),
                TraceKind::Claim {
                    task,
                    drone,
                    observed,
                    won,
                } => {
                    writeln!(
                        s,
                        "claim,{task},{drone},{observed},{}",
                        if *won { "won" } else { "lost" }
                    )
                }
                TraceKind::Transition { task, to, drone } => writeln!(
                    s,
                    "transition,{task},{to},{}",
                    drone.map_or_else(|| "-".to_string(), |d| d.to_string())
                ),
                TraceKind::Message { drone, tag } => writeln!(s, "message,{drone},{}", tag.name()),
                TraceKind::Debit {
                    drone,
                    task,
                    cost,
                    level,
                } => {
                    writeln!(s, "debit,{drone},{task},{cost},{level}")
                }
                TraceKind::Disconnect { drone, permanent } => {
                    writeln!(s, "disconnect,{drone},{permanent}")
                }
                TraceKind::Reconnect { drone } => writeln!(s, "reconnect,{drone}"),
                TraceKind::Requeue { task, drone } => writeln!(s, "requeue,{task},{drone}"),
            };
        }
        s
    }
}

/// Fleet view and decision behind one centralized selection.
#[derive(Debug, Clone)]
pub struct SelectionAudit {
    pub time: f64,
    pub task: TaskSpec,
    pub fleet: Vec<DroneState>,
    pub choice: Option<DroneId>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub trace: Trace,
    pub records: Vec<TaskRecord>,
    pub report: MetricsReport,
    pub fleet: Vec<DroneState>,
    pub initial_battery: Vec<f64>,
    /// Battery debits per drone, in order.
    pub debits: Vec<Vec<f64>>,
    pub pool: TaskPool,
    pub selections: Vec<SelectionAudit>,
    pub events: u64,
}

pub fn run(s: &Scenario) -> Result<(Trace, MetricsReport), SimError> {
    let out = run_with(
        s,
        RunOptions {
            trace: true,
            ..Default::default()
        },
    )?;
    Ok((out.trace, out.report))
}

pub fn run_with(s: &Scenario, opts: RunOptions) -> Result<RunOutput, SimError> {
    let violations = validate_scenario(s);
    if !violations.is_empty() {
        return Err(SimError::Invalid(violations));
    }
    let mut sim = Sim::new(s, opts)?;
    sim.run_loop()?;
    sim.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ActKind {
    Msg(MsgTag),
    Travel(TaskId),
    Exec(TaskId),
    /// Agent timer: power-on delay or empty-pick backoff.
    Timer,
}

#[derive(Debug, Clone, Copy)]
struct Activity {
    kind: ActKind,
    end: f64,
    /// Remaining duration while frozen by a disconnection.
    frozen: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    task: TaskId,
    cost: f64,
}

#[derive(Debug, Clone, Default)]
struct DroneRt {
    token: u64,
    activity: Option<Activity>,
    episode: u64,
    free_since: f64,
    job: Option<Job>,
    /// Return leg of the round trip in progress.
    half: f64,
    claim_won: Option<bool>,
}

struct Sim<'a> {
    s: &'a Scenario,
    p: ModelParams,
    site: ExecutionSite,
    mode: ControllerMode,
    opts: RunOptions,
    q: EventQueue,
    pool: TaskPool,
    fleet: Vec<DroneState>,
    rt: Vec<DroneRt>,
    agents: Vec<DroneAgentState>,
    ctrl: Option<CentralController>,
    net: NetworkSampler,
    workload: Workload,
    failure_rng: ChaCha8Rng,
    rec: Recorder,
    trace: Vec<TraceRecord>,
    selections: Vec<SelectionAudit>,
    claim_batch: Vec<ClaimRequest>,
    batch_at: Option<f64>,
    initial_battery: Vec<f64>,
    debits: Vec<Vec<f64>>,
    disconnects: u64,
    permanent_losses: u64,
    events: u64,
}

impl<'a> Sim<'a> {
    fn new(s: &'a Scenario, opts: RunOptions) -> Result<Self, SimError> {
        let mut streams = RngStreams::new(s.seed);
        let fleet = fleet::generate_fleet(s, &mut streams.topology, &mut streams.heterogeneity);
        let n = fleet.len();
        let workload = Workload::new(
            s.workload.clone(),
            s.backlog_target(),
            s.radius(),
            s.arena_altitude,
            streams.workload.clone(),
            streams.obstacle.clone(),
        );
        let ctrl = (s.controller_mode == ControllerMode::Centralized).then(|| {
            CentralController::new(
                s.scheduler_agents,
                n,
                ServiceTimeModel {
                    per_drone_scan_cost: s.controller.per_drone_scan_cost,
                    await_ack: s.controller.await_ack,
                },
                s.controller.lookahead,
            )
        });
        let agents = if s.controller_mode == ControllerMode::Distributed {
            (0..n as DroneId)
                .map(|d| DroneAgentState::new(d, s.agent.snapshot_limit))
                .collect()
        } else {
            Vec::new()
        };
        let mut sim = Sim {
            s,
            p: s.model_params.clone(),
            site: s.execution_site,
            mode: s.controller_mode,
            opts,
            q: EventQueue::new(),
            pool: TaskPool::new(),
            initial_battery: fleet.iter().map(|d| d.battery_level).collect(),
            debits: vec![Vec::new(); n],
            rt: vec![DroneRt::default(); n],
            fleet,
            agents,
            ctrl,
            net: NetworkSampler::new(NetworkModel::from_scenario(s), streams.network.clone()),
            workload,
            failure_rng: streams.failures.clone(),
            rec: Recorder::default(),
            trace: Vec::new(),
            selections: Vec::new(),
            claim_batch: Vec::new(),
            batch_at: None,
            disconnects: 0,
            permanent_losses: 0,
            events: 0,
        };
        sim.top_up()?;
        sim.q.push(s.workload.tick_period, EventKind::GeneratorTick);
        if s.failures.enabled {
            sim.q.push(s.failures.interval, EventKind::FailureWave);
        }
        match sim.mode {
            ControllerMode::Centralized => {
                for agent in 0..s.scheduler_agents {
                    sim.q.push(0.0, EventKind::ControllerWake { agent });
                }
            }
            ControllerMode::Distributed => {
                let mut jitter = streams.agents.clone();
                for d in 0..n {
                    let delay = if s.agent.start_jitter > 0.0 {
                        jitter.random::<f64>() * s.agent.start_jitter
                    } else {
                        0.0
                    };
                    sim.rt[d].free_since = delay;
                    sim.start(d as DroneId, ActKind::Timer, delay);
                }
            }
        }
        Ok(sim)
    }

    fn now(&self) -> f64 {
        self.q.now()
    }

    fn pool_err(&self, source: PoolError) -> SimError {
        SimError::Pool {
            time: self.now(),
            events: self.events,
            source,
        }
    }

    fn invariant(&self, what: String) -> SimError {
        SimError::Invariant {
            time: self.now(),
            events: self.events,
            what,
        }
    }

    fn log(&mut self, kind: TraceKind) {
        if self.opts.trace {
            self.trace.push(TraceRecord {
                time: self.q.now(),
                kind,
            });
        }
    }

    fn spec(&self, task: TaskId) -> TaskSpec {
        self.pool.get(task).expect("task exists").spec.clone()
    }

    fn needs_link(&self, kind: ActKind) -> bool {
        match kind {
            ActKind::Msg(_) => true,
            ActKind::Travel(_) => self.mode == ControllerMode::Centralized,
            ActKind::Exec(_) => {
                self.mode == ControllerMode::Centralized || self.site != ExecutionSite::Edge
            }
            ActKind::Timer => false,
        }
    }

    fn event_for(drone: DroneId, kind: ActKind, token: u64) -> EventKind {
        match kind {
            ActKind::Msg(tag) => EventKind::MessageArrive { drone, tag, token },
            ActKind::Travel(task) => EventKind::TravelDone { drone, task, token },
            ActKind::Exec(task) => EventKind::ExecDone { drone, task, token },
            ActKind::Timer => EventKind::AgentWake { drone, token },
        }
    }

    /// Begins `kind` on drone `d`, lasting `dur` of connected time where the
    /// link matters.
    fn start(&mut self, d: DroneId, kind: ActKind, dur: f64) {
        let now = self.now();
        let frozen = !self.fleet[d as usize].status.is_connected() && self.needs_link(kind);
        let rt = &mut self.rt[d as usize];
        rt.token += 1;
        if frozen {
            rt.activity = Some(Activity {
                kind,
                end: f64::NAN,
                frozen: Some(dur),
            });
            if let Some(a) = self.agents.get_mut(d as usize) {
                a.stalled = true;
            }
        } else {
            let end = now + dur;
            rt.activity = Some(Activity {
                kind,
                end,
                frozen: None,
            });
            let ev = Self::event_for(d, kind, rt.token);
            self.q.push(end, ev);
        }
    }

    /// Clears the activity if `token` is current; false for stale events.
    fn take_activity(&mut self, d: DroneId, token: u64) -> bool {
        let rt = &mut self.rt[d as usize];
        if rt.token != token || rt.activity.is_none_or(|a| a.frozen.is_some()) {
            return false;
        }
        rt.activity = None;
        true
    }

    fn top_up(&mut self) -> Result<usize, SimError> {
        let now = self.now();
        let ids = self
            .workload
            .top_up(&mut self.pool, now, &self.p)
            .map_err(|e| self.pool_err(e))?;
        for id in &ids {
            let spec = self.spec(*id);
            self.rec.on_enqueue(&spec);
        }
        Ok(ids.len())
    }

    fn run_loop(&mut self) -> Result<(), SimError> {
        let horizon = self.s.duration;
        while let Some(t) = self.q.peek_time() {
            if t >= horizon {
                break;
            }
            let ev = self.q.pop().expect("peeked");
            self.events += 1;
            self.handle(ev.kind)?;
        }
        Ok(())
    }

    fn handle(&mut self, kind: EventKind) -> Result<(), SimError> {
        match kind {
            EventKind::ControllerWake { agent } => self.controller_wake(agent),
            EventKind::MessageArrive { drone, tag, token } => {
                if self.take_activity(drone, token) {
                    self.log(TraceKind::Message { drone, tag });
                    self.message(drone, tag)?;
                }
                Ok(())
            }
            EventKind::TravelDone { drone, task, token } => {
                if self.take_activity(drone, token) {
                    self.travel_done(drone, task)?;
                }
                Ok(())
            }
            EventKind::ExecDone { drone, task, token } => {
                if self.take_activity(drone, token) {
                    self.exec_done(drone, task)?;
                }
                Ok(())
            }
            EventKind::AgentWake { drone, token } => {
                if self.take_activity(drone, token) {
                    self.start_fetch(drone);
                }
                Ok(())
            }
            EventKind::Disconnect { drone, permanent } => {
                self.disconnect(drone, permanent);
                Ok(())
            }
            EventKind::Reconnect { drone } => self.reconnect(drone),
            EventKind::GeneratorTick => {
                let added = self.top_up()?;
                if added > 0 {
                    let now = self.now();
                    if let Some(c) = self.ctrl.as_mut() {
                        let outs = c.on_new_tasks(now);
                        self.apply_ctrl(outs)?;
                    }
                }
                let next = self.now() + self.s.workload.tick_period;
                self.q.push(next, EventKind::GeneratorTick);
                Ok(())
            }
            EventKind::FailureWave => {
                let now = self.now();
                let wave = failures::inject_failures(
                    &self.s.failures,
                    &self.fleet,
                    now,
                    &mut self.failure_rng,
                );
                for o in wave {
                    self.q.push(
                        now,
                        EventKind::Disconnect {
                            drone: o.drone,
                            permanent: o.permanent,
                        },
                    );
                    if let Some(at) = o.reconnect_at {
                        self.q.push(at, EventKind::Reconnect { drone: o.drone });
                    }
                }
                self.q
                    .push(now + self.s.failures.interval, EventKind::FailureWave);
                Ok(())
            }
            EventKind::TimeoutCheck {
                task,
                drone,
                episode,
            } => self.timeout_check(task, drone, episode),
            EventKind::ClaimBatch => self.claim_batch(),
        }
    }

    // ---- centralized ----

    fn controller_wake(&mut self, agent: usize) -> Result<(), SimError> {
        let now = self.now();
        let Some(ctrl) = self.ctrl.as_mut() else {
            return Ok(());
        };
        let outs = ctrl
            .dispatch_step(
                agent,
                &mut self.pool,
                &mut self.fleet,
                now,
                &mut self.net,
                self.site,
                &self.p,
            )
            .map_err(|e| SimError::Pool {
                time: now,
                events: self.events,
                source: e,
            })?;
        self.apply_ctrl(outs)
    }

    fn apply_ctrl(&mut self, outs: Vec<ControllerOutput>) -> Result<(), SimError> {
        let now = self.now();
        for o in outs {
            match o {
                ControllerOutput::Schedule(t, k) => self.q.push(t, k),
                ControllerOutput::Selected {
                    agent,
                    task,
                    choice,
                } => {
                    self.log(TraceKind::Selected {
                        agent,
                        task,
                        drone: choice,
                    });
                    if self.opts.audit_selections {
                        let audit = SelectionAudit {
                            time: now,
                            task: self.spec(task),
                            fleet: self.fleet.clone(),
                            choice,
                        };
                        self.selections.push(audit);
                    }
                }
                ControllerOutput::Assigned {
                    task,
                    drone,
                    arrives,
                    ..
                } => {
                    let version = self.pool.get(task).map_or(0, |e| e.status.version);
                    self.log(TraceKind::Claim {
                        task,
                        drone,
                        observed: version - 1,
                        won: true,
                    });
                    self.log(TraceKind::Transition {
                        task,
                        to: "claimed",
                        drone: Some(drone),
                    });
                    if self.rt[drone as usize].job.is_some() {
                        return Err(self.invariant(format!(
                            "drone {drone} assigned task {task} while holding another"
                        )));
                    }
                    let spec = self.spec(task);
                    let cost = battery_cost(&self.fleet[drone as usize], &spec, self.site, &self.p);
                    self.rt[drone as usize].job = Some(Job { task, cost });
                    self.start(drone, ActKind::Msg(MsgTag::Mission), arrives - now);
                }
            }
        }
        Ok(())
    }

    fn fleet_changed(&mut self) -> Result<(), SimError> {
        let now = self.now();
        if let Some(c) = self.ctrl.as_mut() {
            let outs = c.on_fleet_change(now);
            self.apply_ctrl(outs)?;
        }
        Ok(())
    }

    fn timeout_check(
        &mut self,
        task: TaskId,
        drone: DroneId,
        episode: u64,
    ) -> Result<(), SimError> {
        let d = drone as usize;
        let still_out = self.rt[d].episode == episode && !self.fleet[d].status.is_connected();
        let holds = self.pool.get(task).and_then(|e| e.status.phase.holder()) == Some(drone);
        if !(still_out && holds) {
            return Ok(());
        }
        self.pool.requeue(task).map_err(|e| self.pool_err(e))?;
        let now = self.now();
        self.rec.on_requeue(task, now);
        if let DroneStatus::Disconnected { saved, .. } = &mut self.fleet[d].status {
            **saved = DroneStatus::Idle;
        }
        let rt = &mut self.rt[d];
        rt.activity = None;
        rt.token += 1;
        rt.job = None;
        self.log(TraceKind::Requeue { task, drone });
        self.log(TraceKind::Transition {
            task,
            to: "pending",
            drone: None,
        });
        self.fleet_changed()
    }

    // ---- distributed ----

    fn start_fetch(&mut self, d: DroneId) {
        self.agents[d as usize].enter(AgentPhase::Fetching);
        let rtt = self.net.rtt();
        self.rt[d as usize].half = rtt / 2.0;
        self.start(d, ActKind::Msg(MsgTag::FetchRequest), rtt / 2.0);
    }

    fn claim_batch(&mut self) -> Result<(), SimError> {
        self.batch_at = None;
        let batch = std::mem::take(&mut self.claim_batch);
        let results = self
            .pool
            .resolve_claims(batch)
            .map_err(|e| self.pool_err(e))?;
        for (req, outcome) in results {
            let won = outcome == ClaimOutcome::Won;
            let d = req.drone;
            self.log(TraceKind::Claim {
                task: req.task,
                drone: d,
                observed: req.observed_version,
                won,
            });
            if won {
                self.log(TraceKind::Transition {
                    task: req.task,
                    to: "claimed",
                    drone: Some(d),
                });
                match &mut self.fleet[d as usize].status {
                    DroneStatus::Idle => {
                        self.fleet[d as usize].status = DroneStatus::Busy(req.task)
                    }
                    DroneStatus::Disconnected { saved, .. } if **saved == DroneStatus::Idle => {
                        **saved = DroneStatus::Busy(req.task)
                    }
                    other => {
                        let what = format!("drone {d} won task {} while {other:?}", req.task);
                        return Err(self.invariant(what));
                    }
                }
            }
            self.rt[d as usize].claim_won = Some(won);
            let half = self.rt[d as usize].half;
            self.start(d, ActKind::Msg(MsgTag::ClaimResponse), half);
        }
        Ok(())
    }

    fn message(&mut self, d: DroneId, tag: MsgTag) -> Result<(), SimError> {
        let i = d as usize;
        if let Some(a) = self.agents.get_mut(i) {
            if tag != MsgTag::Report {
                a.messages_pending += 1;
            }
        }
        match tag {
            MsgTag::Mission => {
                let job = self.rt[i]
                    .job
                    .ok_or_else(|| self.invariant(format!("mission to idle drone {d}")))?;
                let now = self.now();
                self.rec
                    .on_assigned(job.task, d, now, self.rt[i].free_since, 0, 1);
                self.begin_travel(d, job.task);
            }
            MsgTag::FetchRequest => {
                let limit = self.agents[i].snapshot_limit;
                self.agents[i].snapshot = self.pool.snapshot_pending(limit);
                let half = self.rt[i].half;
                self.start(d, ActKind::Msg(MsgTag::FetchResponse), half);
            }
            MsgTag::FetchResponse => {
                let snapshot = std::mem::take(&mut self.agents[i].snapshot);
                match pick_task(&snapshot, &self.fleet[i], self.site, &self.p) {
                    Some((task, version)) => {
                        self.agents[i].enter(AgentPhase::Claiming { task, version });
                        let rtt = self.net.rtt();
                        self.rt[i].half = rtt / 2.0;
                        self.start(d, ActKind::Msg(MsgTag::ClaimRequest), rtt / 2.0);
                    }
                    None => {
                        self.agents[i].enter(AgentPhase::Backoff);
                        self.start(d, ActKind::Timer, self.s.agent.backoff_interval);
                    }
                }
            }
            MsgTag::ClaimRequest => {
                let AgentPhase::Claiming { task, version } = self.agents[i].phase else {
                    return Err(
                        self.invariant(format!("claim request from agent {d} not claiming"))
                    );
                };
                let now = self.now();
                self.claim_batch.push(ClaimRequest {
                    task,
                    drone: d,
                    observed_version: version,
                    time: now,
                });
                if self.batch_at != Some(now) {
                    self.batch_at = Some(now);
                    self.q.push(now, EventKind::ClaimBatch);
                }
            }
            MsgTag::ClaimResponse => {
                let AgentPhase::Claiming { task, .. } = self.agents[i].phase else {
                    return Err(self.invariant(format!("claim response to agent {d} not claiming")));
                };
                if self.rt[i].claim_won.take() == Some(true) {
                    let (conflicts, messages) = self.agents[i].take_attribution();
                    let now = self.now();
                    self.rec
                        .on_assigned(task, d, now, self.rt[i].free_since, conflicts, messages);
                    let spec = self.spec(task);
                    let cost = battery_cost(&self.fleet[i], &spec, self.site, &self.p);
                    self.rt[i].job = Some(Job { task, cost });
                    self.agents[i].enter(AgentPhase::Traveling);
                    self.begin_travel(d, task);
                } else {
                    self.agents[i].lost_claim();
                    self.start_fetch(d);
                }
            }
            MsgTag::Report => self.report_arrived(d)?,
        }
        Ok(())
    }

    // ---- drone side, both modes ----

    fn begin_travel(&mut self, d: DroneId, task: TaskId) {
        let spec = self.spec(task);
        let drone = &self.fleet[d as usize];
        let dur = travel_time(drone.position, spec.location, drone.speed);
        self.start(d, ActKind::Travel(task), dur);
    }

    fn travel_done(&mut self, d: DroneId, task: TaskId) -> Result<(), SimError> {
        let now = self.now();
        let spec = self.spec(task);
        self.fleet[d as usize].position = spec.location;
        self.pool
            .start_execution(task, d, now)
            .map_err(|e| self.pool_err(e))?;
        self.rec.on_exec_start(task, now);
        self.log(TraceKind::Transition {
            task,
            to: "executing",
            drone: Some(d),
        });
        if let Some(a) = self.agents.get_mut(d as usize) {
            a.enter(AgentPhase::Executing);
        }
        let dur = exec_time(&spec, self.site, &self.fleet[d as usize], &self.p);
        self.start(d, ActKind::Exec(task), dur);
        Ok(())
    }

    fn exec_done(&mut self, d: DroneId, task: TaskId) -> Result<(), SimError> {
        let i = d as usize;
        let job = self.rt[i].job.filter(|j| j.task == task);
        let Some(job) = job else {
            return Err(self.invariant(format!("drone {d} finished task {task} it does not hold")));
        };
        let level = self.fleet[i].battery_level - job.cost;
        if level < 0.0 {
            return Err(self.invariant(format!("drone {d} battery would go negative ({level})")));
        }
        self.fleet[i].battery_level = level;
        self.debits[i].push(job.cost);
        self.log(TraceKind::Debit {
            drone: d,
            task,
            cost: job.cost,
            level,
        });
        self.rt[i].free_since = self.now();
        if let Some(a) = self.agents.get_mut(i) {
            a.enter(AgentPhase::Reporting);
        }
        let dur = self.net.one_way();
        self.start(d, ActKind::Msg(MsgTag::Report), dur);
        Ok(())
    }

    fn report_arrived(&mut self, d: DroneId) -> Result<(), SimError> {
        let i = d as usize;
        let now = self.now();
        let job = self.rt[i]
            .job
            .take()
            .ok_or_else(|| self.invariant(format!("report from idle drone {d}")))?;
        self.pool
            .complete(job.task, d, now)
            .map_err(|e| self.pool_err(e))?;
        self.rec.on_message(job.task);
        self.rec.on_completed(job.task, now);
        self.log(TraceKind::Transition {
            task: job.task,
            to: "completed",
            drone: Some(d),
        });
        self.fleet[i].status = DroneStatus::Idle;
        let spec = self.spec(job.task);
        if let Some(child) = self
            .workload
            .on_completion(&mut self.pool, &spec, now, &self.p)
            .map_err(|e| SimError::Pool {
                time: now,
                events: self.events,
                source: e,
            })?
        {
            let child_spec = self.spec(child);
            self.rec.on_enqueue(&child_spec);
        }
        self.top_up()?;
        match self.mode {
            ControllerMode::Centralized => {
                let outs = self
                    .ctrl
                    .as_mut()
                    .map(|c| c.on_new_tasks(now))
                    .unwrap_or_default();
                self.apply_ctrl(outs)?;
                self.fleet_changed()?;
            }
            ControllerMode::Distributed => self.start_fetch(d),
        }
        Ok(())
    }

    fn disconnect(&mut self, d: DroneId, permanent: bool) {
        let i = d as usize;
        if !self.fleet[i].status.is_connected() {
            return;
        }
        let now = self.now();
        let old = std::mem::replace(&mut self.fleet[i].status, DroneStatus::Idle);
        let held = old.held_task();
        self.fleet[i].status = DroneStatus::Disconnected {
            since: now,
            permanent,
            saved: Box::new(old),
        };
        self.disconnects += 1;
        if permanent {
            self.permanent_losses += 1;
        }
        self.rt[i].episode += 1;
        if let Some(act) = self.rt[i].activity {
            if act.frozen.is_none() && self.needs_link(act.kind) {
                let rt = &mut self.rt[i];
                rt.activity = Some(Activity {
                    frozen: Some(act.end - now),
                    ..act
                });
                rt.token += 1;
                if let Some(a) = self.agents.get_mut(i) {
                    a.stalled = true;
                }
            }
        }
        self.log(TraceKind::Disconnect {
            drone: d,
            permanent,
        });
        if self.mode == ControllerMode::Centralized {
            if let Some(task) = held {
                let episode = self.rt[i].episode;
                self.q.push(
                    now + self.s.failures.detect_timeout,
                    EventKind::TimeoutCheck {
                        task,
                        drone: d,
                        episode,
                    },
                );
            }
        }
    }

    fn reconnect(&mut self, d: DroneId) -> Result<(), SimError> {
        let i = d as usize;
        let DroneStatus::Disconnected {
            saved, permanent, ..
        } = &self.fleet[i].status
        else {
            return Ok(());
        };
        if *permanent {
            return Ok(());
        }
        let restored = (**saved).clone();
        let now = self.now();
        if restored.is_idle() && self.rt[i].job.is_none() {
            self.rt[i].free_since = self.rt[i].free_since.max(now);
        }
        self.fleet[i].status = restored;
        self.log(TraceKind::Reconnect { drone: d });
        if let Some(act) = self.rt[i].activity {
            if let Some(rem) = act.frozen {
                let rt = &mut self.rt[i];
                rt.token += 1;
                let end = now + rem;
                rt.activity = Some(Activity {
                    kind: act.kind,
                    end,
                    frozen: None,
                });
                let ev = Self::event_for(d, act.kind, rt.token);
                self.q.push(end, ev);
            }
        }
        if let Some(a) = self.agents.get_mut(i) {
            a.stalled = false;
        }
        self.fleet_changed()
    }

    // ---- run end ----

    fn finish(mut self) -> Result<RunOutput, SimError> {
        let ids: Vec<TaskId> = self.pool.entries().map(|e| e.spec.id).collect();
        for id in ids {
            let entry = self.pool.get(id).expect("listed");
            let reason = match entry.status.phase {
                TaskPhase::Claimed { drone, .. } | TaskPhase::Executing { drone, .. } => {
                    let lost = self.mode == ControllerMode::Distributed
                        && matches!(
                            self.fleet[drone as usize].status,
                            DroneStatus::Disconnected {
                                permanent: true,
                                ..
                            }
                        );
                    Some(if lost {
                        IncompleteReason::HolderLost
                    } else {
                        IncompleteReason::RunEnd
                    })
                }
                TaskPhase::Pending => {
                    let need = entry.spec.required_sensors;
                    let anyone = self.fleet.iter().any(|d| need.is_subset(d.sensors));
                    (!anyone).then_some(IncompleteReason::Unassignable)
                }
                _ => None,
            };
            if let Some(r) = reason {
                self.pool
                    .mark_incomplete(id, r)
                    .map_err(|e| self.pool_err(e))?;
                self.rec.set_outcome(id, Outcome::Incomplete(r));
            }
        }
        self.pool.check_invariants();

        let mut report = MetricsReport::from_records(&self.rec.tasks);
        report.mode = self.mode.name();
        report.fleet_size = self.s.fleet_size;
        report.seed = self.s.seed;
        report.duration = self.s.duration;
        let c = self.pool.counters();
        report.claims = c.claims;
        report.conflicts = c.conflicts;
        report.requeues = c.requeues;
        report.disconnects = self.disconnects;
        report.permanent_losses = self.permanent_losses;
        if let Some(ctrl) = &self.ctrl {
            let a = ctrl.accounting;
            report.controller = ControllerSplit {
                busy_network: secs(a.busy_network_ns),
                busy_compute: secs(a.busy_compute_ns),
                busy_total: secs(a.busy_total_ns),
                busy_network_ns: a.busy_network_ns,
                busy_compute_ns: a.busy_compute_ns,
                busy_total_ns: a.busy_total_ns,
                dispatches: a.dispatches,
                scans: a.scans,
                skips: a.skips,
                drone_conflicts: a.drone_conflicts,
            };
        }
        Ok(RunOutput {
            trace: Trace {
                records: self.trace,
            },
            records: self.rec.tasks,
            report,
            fleet: self.fleet,
            initial_battery: self.initial_battery,
            debits: self.debits,
            pool: self.pool,
            selections: self.selections,
            events: self.events,
        })
    }
}
