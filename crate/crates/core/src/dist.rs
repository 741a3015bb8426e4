//! Distributed pull controller: per-drone agent state and task choice.
//!
//! The agent's timed steps (fetch, claim, travel, execute, report) are driven
//! by the engine, which owns the clock and the message latencies. This module
//! holds the decision rule and the phase bookkeeping.

use crate::models::capable;
use crate::models::ModelParams;
use crate::types::{DroneId, DroneState, ExecutionSite, TaskId, TaskSpec};

/// First entry of a FIFO snapshot the drone can do, judged on sensors and
/// battery only (the agent only looks when it is idle).
pub fn pick_task(
    snapshot: &[(TaskSpec, u64)],
    drone: &DroneState,
    site: ExecutionSite,
    p: &ModelParams,
) -> Option<(TaskId, u64)> {
    snapshot
        .iter()
        .find(|(t, _)| capable(drone, t, site, p))
        .map(|(t, v)| (t.id, *v))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentPhase {
    Idle,
    Fetching,
    Claiming { task: TaskId, version: u64 },
    Traveling,
    Executing,
    Reporting,
    Backoff,
}

impl AgentPhase {
    pub fn name(&self) -> &'static str {
        match self {
            AgentPhase::Idle => "idle",
            AgentPhase::Fetching => "fetching",
            AgentPhase::Claiming { .. } => "claiming",
            AgentPhase::Traveling => "traveling",
            AgentPhase::Executing => "executing",
            AgentPhase::Reporting => "reporting",
            AgentPhase::Backoff => "backoff",
        }
    }

    fn may_follow(&self, prev: &AgentPhase) -> bool {
        use AgentPhase::*;
        matches!(
            (prev, self),
            (Idle, Fetching)
                | (Fetching, Claiming { .. })
                | (Fetching, Backoff)
                | (Backoff, Fetching)
                | (Claiming { .. }, Fetching)
                | (Claiming { .. }, Traveling)
                | (Traveling, Executing)
                | (Executing, Reporting)
                | (Reporting, Fetching)
                | (Reporting, Idle)
        )
    }
}

#[derive(Debug, Clone)]
pub struct DroneAgentState {
    pub drone: DroneId,
    pub phase: AgentPhase,
    /// Set while a disconnection holds up the current phase.
    pub stalled: bool,
    pub retry_count: u64,
    pub snapshot: Vec<(TaskSpec, u64)>,
    pub snapshot_limit: usize,
    /// Lost claims since the agent last became idle.
    pub conflicts_pending: u32,
    /// Messages sent or received since the agent last became idle.
    pub messages_pending: u32,
}

impl DroneAgentState {
    pub fn new(drone: DroneId, snapshot_limit: usize) -> Self {
        Self {
            drone,
            phase: AgentPhase::Idle,
            stalled: false,
            retry_count: 0,
            snapshot: Vec::new(),
            snapshot_limit,
            conflicts_pending: 0,
            messages_pending: 0,
        }
    }

    /// Moves to `next`, panicking on a phase change the agent protocol does
    /// not allow.
    pub fn enter(&mut self, next: AgentPhase) {
        assert!(
            next.may_follow(&self.phase),
            "agent {}: illegal phase change {} -> {}",
            self.drone,
            self.phase.name(),
            next.name()
        );
        self.phase = next;
    }

    pub fn holds_claim(&self) -> bool {
        matches!(
            self.phase,
            AgentPhase::Traveling | AgentPhase::Executing | AgentPhase::Reporting
        )
    }

    pub fn lost_claim(&mut self) {
        self.retry_count += 1;
        self.conflicts_pending += 1;
    }

    /// Counters attributed to the task just won; resets them.
    pub fn take_attribution(&mut self) -> (u32, u32) {
        let out = (self.conflicts_pending, self.messages_pending);
        self.conflicts_pending = 0;
        self.messages_pending = 0;
        out
    }
}
