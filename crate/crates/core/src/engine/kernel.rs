//! Event queue ordered by `(time, seq)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::types::{DroneId, TaskId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MsgTag {
    Mission,
    FetchRequest,
    FetchResponse,
    ClaimRequest,
    ClaimResponse,
    Report,
}

impl MsgTag {
    pub fn name(self) -> &'static str {
        match self {
            MsgTag::Mission => "mission",
            MsgTag::FetchRequest => "fetch_req",
            MsgTag::FetchResponse => "fetch_resp",
            MsgTag::ClaimRequest => "claim_req",
            MsgTag::ClaimResponse => "claim_resp",
            MsgTag::Report => "report",
        }
    }
}

/// What happens. Drone-side timers carry the drone's activity token; a token
/// that no longer matches means the activity was frozen or cancelled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    ControllerWake {
        agent: usize,
    },
    MessageArrive {
        drone: DroneId,
        tag: MsgTag,
        token: u64,
    },
    TravelDone {
        drone: DroneId,
        task: TaskId,
        token: u64,
    },
    ExecDone {
        drone: DroneId,
        task: TaskId,
        token: u64,
    },
    Disconnect {
        drone: DroneId,
        permanent: bool,
    },
    Reconnect {
        drone: DroneId,
    },
    GeneratorTick,
    FailureWave,
    TimeoutCheck {
        task: TaskId,
        drone: DroneId,
        episode: u64,
    },
    AgentWake {
        drone: DroneId,
        token: u64,
    },
    /// Resolve every claim that reached the pool at this instant.
    ClaimBatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so the std max-heap pops the earliest event.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<SimEvent>,
    next_seq: u64,
    now: f64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Schedules `kind` at `time`. Times in the past are a kernel bug.
    pub fn push(&mut self, time: f64, kind: EventKind) {
        assert!(
            time >= self.now && time.is_finite(),
            "event scheduled at {time} before now {}",
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent { time, seq, kind });
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        let ev = self.heap.pop()?;
        self.now = ev.time;
        Some(ev)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
