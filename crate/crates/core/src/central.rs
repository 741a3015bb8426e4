//! Centralized push controller.
//!
//! One or more scheduling agents walk the pool in FIFO order. For each task
//! an agent pays a scan over the whole fleet view, picks the feasible drone
//! with the smallest battery cost, claims the task on that drone's behalf and
//! pushes the mission over an already open connection. Agents are modeled
//! inside the event kernel; the only thing that makes them slow is the
//! service time charged for every scan and every mission message.

use std::collections::BTreeSet;

use crate::engine::kernel::EventKind;
use crate::engine::network::NetworkSampler;
use crate::models::{battery_cost, feasible, ModelParams};
use crate::taskpool::{ClaimOutcome, PoolError, TaskPool};
use crate::types::{distance, DroneId, DroneState, ExecutionSite, TaskId, TaskSpec};

/// Feasible drone with the smallest battery cost; ties go to the shorter
/// trip, then to the smaller id.
pub fn select_drone(
    task: &TaskSpec,
    fleet: &[DroneState],
    site: ExecutionSite,
    p: &ModelParams,
) -> Option<DroneId> {
    let mut best: Option<(f64, f64, DroneId)> = None;
    for d in fleet.iter().filter(|d| feasible(d, task, site, p)) {
        let key = (
            battery_cost(d, task, site, p),
            distance(d.position, task.location),
            d.id,
        );
        let better = match best {
            None => true,
            Some(b) => key
                .0
                .total_cmp(&b.0)
                .then(key.1.total_cmp(&b.1))
                .then(key.2.cmp(&b.2))
                .is_lt(),
        };
        if better {
            best = Some(key);
        }
    }
    best.map(|b| b.2)
}

/// Service time model: per-drone scan cost. Mission latency comes from the
/// network sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceTimeModel {
    pub per_drone_scan_cost: f64,
    /// Hold the agent until the drone acknowledges the mission (a full round
    /// trip) instead of releasing it once the mission is sent.
    pub await_ack: bool,
}

impl ServiceTimeModel {
    pub fn scan_nanos(&self, fleet_size: usize) -> u64 {
        (fleet_size as f64 * self.per_drone_scan_cost * 1e9).round() as u64
    }
}

pub(crate) fn nanos(secs: f64) -> u64 {
    (secs * 1e9).round() as u64
}

pub(crate) fn secs(nanos: u64) -> f64 {
    nanos as f64 * 1e-9
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentJob {
    Scanning {
        task: TaskId,
        choice: Option<DroneId>,
    },
    Sending {
        task: TaskId,
    },
}

#[derive(Debug, Clone, Default)]
pub struct AgentSlot {
    pub busy_until: f64,
    pub job: Option<AgentJob>,
    pub asleep: bool,
}

/// Controller busy-time accounting in integer nanoseconds so that the
/// network/compute split adds up exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ControllerAccounting {
    pub busy_network_ns: u64,
    pub busy_compute_ns: u64,
    pub busy_total_ns: u64,
    pub dispatches: u64,
    pub scans: u64,
    pub skips: u64,
    pub drone_conflicts: u64,
}

impl ControllerAccounting {
    fn charge_scan(&mut self, ns: u64) {
        self.busy_compute_ns += ns;
        self.busy_total_ns += ns;
        self.scans += 1;
    }

    fn charge_send(&mut self, ns: u64) {
        self.busy_network_ns += ns;
        self.busy_total_ns += ns;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerOutput {
    Schedule(f64, EventKind),
    /// Selection made at the start of a scan, against the fleet at that instant.
    Selected {
        agent: usize,
        task: TaskId,
        choice: Option<DroneId>,
    },
    /// Task claimed for `drone`; the mission reaches the drone at `arrives`.
    Assigned {
        agent: usize,
        task: TaskId,
        drone: DroneId,
        decided: f64,
        arrives: f64,
    },
}

#[derive(Debug, Clone)]
pub struct CentralController {
    pub agents: Vec<AgentSlot>,
    cursor: Option<TaskId>,
    skipped: usize,
    in_service: BTreeSet<TaskId>,
    pub service: ServiceTimeModel,
    pub lookahead: usize,
    pub fleet_size: usize,
    pub accounting: ControllerAccounting,
}

impl CentralController {
    pub fn new(
        agent_count: usize,
        fleet_size: usize,
        service: ServiceTimeModel,
        lookahead: usize,
    ) -> Self {
        Self {
            agents: vec![AgentSlot::default(); agent_count.max(1)],
            cursor: None,
            skipped: 0,
            in_service: BTreeSet::new(),
            service,
            lookahead,
            fleet_size,
            accounting: ControllerAccounting::default(),
        }
    }

    /// A drone turned idle, reconnected, or a task was requeued: restart the
    /// FIFO walk from the head and wake sleeping agents.
    pub fn on_fleet_change(&mut self, now: f64) -> Vec<ControllerOutput> {
        self.cursor = None;
        self.skipped = 0;
        self.wake_sleepers(now)
    }

    /// New tasks arrived at the tail.
    pub fn on_new_tasks(&mut self, now: f64) -> Vec<ControllerOutput> {
        self.wake_sleepers(now)
    }

    fn wake_sleepers(&mut self, now: f64) -> Vec<ControllerOutput> {
        let mut out = Vec::new();
        for (i, a) in self.agents.iter_mut().enumerate() {
            if a.asleep {
                a.asleep = false;
                out.push(ControllerOutput::Schedule(
                    now,
                    EventKind::ControllerWake { agent: i },
                ));
            }
        }
        out
    }

    /// Advance agent `agent` at time `now`: finish whatever it was doing and,
    /// if it is free, start on the next pending task.
    #[allow(clippy::too_many_arguments)]
    pub fn dispatch_step(
        &mut self,
        agent: usize,
        pool: &mut TaskPool,
        fleet: &mut [DroneState],
        now: f64,
        net: &mut NetworkSampler,
        site: ExecutionSite,
        p: &ModelParams,
    ) -> Result<Vec<ControllerOutput>, PoolError> {
        let mut out = Vec::new();
        if self.agents[agent].busy_until > now {
            // Stale wake; the real one is still queued.
            return Ok(out);
        }
        loop {
            match self.agents[agent].job {
                None => {
                    self.start_next(agent, pool, fleet, now, site, p, &mut out);
                    return Ok(out);
                }
                Some(AgentJob::Sending { task }) => {
                    self.in_service.remove(&task);
                    self.agents[agent].job = None;
                }
                Some(AgentJob::Scanning { task, choice: None }) => {
                    self.accounting.skips += 1;
                    self.skipped += 1;
                    self.in_service.remove(&task);
                    self.agents[agent].job = None;
                }
                Some(AgentJob::Scanning {
                    task,
                    choice: Some(d),
                }) => {
                    let spec = &pool.get(task).ok_or(PoolError::UnknownTask(task))?.spec;
                    if feasible(&fleet[d as usize], spec, site, p) {
                        let version = pool.get(task).map(|e| e.status.version).unwrap_or(0);
                        match pool.claim(task, d, version, now)? {
                            ClaimOutcome::Won => {}
                            ClaimOutcome::Lost(_) => {
                                return Err(PoolError::NotHolder { task, drone: d });
                            }
                        }
                        fleet[d as usize].status = crate::types::DroneStatus::Busy(task);
                        let rtt = net.rtt();
                        let arrives = now + rtt / 2.0;
                        let send = nanos(if self.service.await_ack {
                            rtt
                        } else {
                            rtt / 2.0
                        });
                        self.accounting.charge_send(send);
                        self.accounting.dispatches += 1;
                        let free_at = now + secs(send);
                        let slot = &mut self.agents[agent];
                        slot.job = Some(AgentJob::Sending { task });
                        slot.busy_until = free_at;
                        out.push(ControllerOutput::Assigned {
                            agent,
                            task,
                            drone: d,
                            decided: now,
                            arrives,
                        });
                        out.push(ControllerOutput::Schedule(
                            free_at,
                            EventKind::ControllerWake { agent },
                        ));
                    } else {
                        // Another agent (or a disconnect) took the drone while
                        // we were scanning: rescan.
                        self.accounting.drone_conflicts += 1;
                        let spec = spec.clone();
                        self.begin_scan(agent, &spec, fleet, now, site, p, &mut out);
                    }
                    return Ok(out);
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn start_next(
        &mut self,
        agent: usize,
        pool: &TaskPool,
        fleet: &[DroneState],
        now: f64,
        site: ExecutionSite,
        p: &ModelParams,
        out: &mut Vec<ControllerOutput>,
    ) {
        let any_idle = fleet.iter().any(|d| d.status.is_idle());
        let next = if any_idle && self.skipped < self.lookahead {
            pool.pending_after(self.cursor)
                .find(|id| !self.in_service.contains(id))
        } else {
            None
        };
        let Some(task) = next else {
            self.agents[agent].asleep = true;
            return;
        };
        self.cursor = Some(task);
        self.in_service.insert(task);
        let spec = pool
            .get(task)
            .expect("pending id is in the pool")
            .spec
            .clone();
        self.begin_scan(agent, &spec, fleet, now, site, p, out);
    }

    #[allow(clippy::too_many_arguments)]
    fn begin_scan(
        &mut self,
        agent: usize,
        spec: &TaskSpec,
        fleet: &[DroneState],
        now: f64,
        site: ExecutionSite,
        p: &ModelParams,
        out: &mut Vec<ControllerOutput>,
    ) {
        let choice = select_drone(spec, fleet, site, p);
        out.push(ControllerOutput::Selected {
            agent,
            task: spec.id,
            choice,
        });
        let scan = self.service.scan_nanos(self.fleet_size);
        self.accounting.charge_scan(scan);
        let done = now + secs(scan);
        let slot = &mut self.agents[agent];
        slot.job = Some(AgentJob::Scanning {
            task: spec.id,
            choice,
        });
        slot.busy_until = done;
        out.push(ControllerOutput::Schedule(
            done,
            EventKind::ControllerWake { agent },
        ));
    }

    pub fn network_fraction(&self) -> Option<f64> {
        let a = &self.accounting;
        (a.busy_total_ns > 0).then(|| a.busy_network_ns as f64 / a.busy_total_ns as f64)
    }
}
