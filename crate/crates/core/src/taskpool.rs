//! The global task pool: FIFO by task id, versioned optimistic claims.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::types::{
    legal_transition, DroneId, IncompleteReason, TaskId, TaskPhase, TaskSpec, TaskStatus,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoolError {
    #[error("task {0} already enqueued")]
    DuplicateId(TaskId),
    #[error("task {id} enqueued after {last}; ids must increase")]
    NonMonotoneId { id: TaskId, last: TaskId },
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("illegal transition for task {task}: {from} -> {to}")]
    IllegalTransition {
        task: TaskId,
        from: &'static str,
        to: &'static str,
    },
    #[error("drone {drone} does not hold task {task}")]
    NotHolder { task: TaskId, drone: DroneId },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClaimOutcome {
    Won,
    Lost(TaskPhase),
}

/// A claim as it arrives at the pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaimRequest {
    pub task: TaskId,
    pub drone: DroneId,
    pub observed_version: u64,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PoolCounters {
    pub claims: u64,
    pub conflicts: u64,
    pub requeues: u64,
    pub completions: u64,
}

#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub spec: TaskSpec,
    pub status: TaskStatus,
}

#[derive(Debug, Default)]
pub struct TaskPool {
    tasks: BTreeMap<TaskId, PoolEntry>,
    pending: BTreeSet<TaskId>,
    counters: PoolCounters,
}

impl TaskPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enqueue(&mut self, spec: TaskSpec) -> Result<(), PoolError> {
        if self.tasks.contains_key(&spec.id) {
            return Err(PoolError::DuplicateId(spec.id));
        }
        if let Some((&last, _)) = self.tasks.last_key_value() {
            if spec.id < last {
                return Err(PoolError::NonMonotoneId { id: spec.id, last });
            }
        }
        self.pending.insert(spec.id);
        self.tasks.insert(
            spec.id,
            PoolEntry {
                spec,
                status: TaskStatus::pending(),
            },
        );
        Ok(())
    }

    /// First `limit` pending tasks in FIFO order with their versions.
    pub fn snapshot_pending(&self, limit: usize) -> Vec<(TaskSpec, u64)> {
        self.pending
            .iter()
            .take(limit)
            .map(|id| {
                let e = &self.tasks[id];
                (e.spec.clone(), e.status.version)
            })
            .collect()
    }

    /// Pending ids strictly after `after` (all of them when `None`), FIFO.
    pub fn pending_after(&self, after: Option<TaskId>) -> impl Iterator<Item = TaskId> + '_ {
        let range = match after {
            Some(a) => self.pending.range(a + 1..),
            None => self.pending.range(..),
        };
        range.copied()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, id: TaskId) -> Option<&PoolEntry> {
        self.tasks.get(&id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &PoolEntry> {
        self.tasks.values()
    }

    pub fn counters(&self) -> PoolCounters {
        self.counters
    }

    pub fn next_id(&self) -> TaskId {
        self.tasks.last_key_value().map_or(0, |(k, _)| k + 1)
    }

    /// Optimistic claim: wins iff the task is still Pending at the version the
    /// claimant observed.
    pub fn claim(
        &mut self,
        task: TaskId,
        drone: DroneId,
        observed_version: u64,
        time: f64,
    ) -> Result<ClaimOutcome, PoolError> {
        let entry = self
            .tasks
            .get_mut(&task)
            .ok_or(PoolError::UnknownTask(task))?;
        if entry.status.phase == TaskPhase::Pending && entry.status.version == observed_version {
            entry.status.phase = TaskPhase::Claimed { drone, at: time };
            entry.status.version += 1;
            self.pending.remove(&task);
            self.counters.claims += 1;
            Ok(ClaimOutcome::Won)
        } else {
            self.counters.conflicts += 1;
            Ok(ClaimOutcome::Lost(entry.status.phase))
        }
    }

    /// Serializes claims by `(time, drone id)` and applies them in that order.
    pub fn resolve_claims(
        &mut self,
        mut requests: Vec<ClaimRequest>,
    ) -> Result<Vec<(ClaimRequest, ClaimOutcome)>, PoolError> {
        requests.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.drone.cmp(&b.drone)));
        requests
            .into_iter()
            .map(|r| Ok((r, self.claim(r.task, r.drone, r.observed_version, r.time)?)))
            .collect()
    }

    fn transition(
        &mut self,
        task: TaskId,
        to: TaskPhase,
        allow_requeue: bool,
    ) -> Result<&mut PoolEntry, PoolError> {
        let entry = self
            .tasks
            .get_mut(&task)
            .ok_or(PoolError::UnknownTask(task))?;
        if !legal_transition(&entry.status.phase, &to, allow_requeue) {
            return Err(PoolError::IllegalTransition {
                task,
                from: entry.status.phase.label(),
                to: to.label(),
            });
        }
        entry.status.phase = to;
        entry.status.version += 1;
        Ok(entry)
    }

    fn check_holder(&self, task: TaskId, drone: DroneId) -> Result<(), PoolError> {
        let entry = self.tasks.get(&task).ok_or(PoolError::UnknownTask(task))?;
        match entry.status.phase.holder() {
            Some(h) if h == drone => Ok(()),
            _ => Err(PoolError::NotHolder { task, drone }),
        }
    }

    pub fn start_execution(
        &mut self,
        task: TaskId,
        drone: DroneId,
        time: f64,
    ) -> Result<(), PoolError> {
        self.check_holder(task, drone)?;
        self.transition(task, TaskPhase::Executing { drone, at: time }, false)?;
        Ok(())
    }

    /// Returns a claimed or executing task to Pending at its original FIFO
    /// position.
    pub fn requeue(&mut self, task: TaskId) -> Result<(), PoolError> {
        let entry = self.transition(task, TaskPhase::Pending, true)?;
        entry.status.reschedule_count += 1;
        self.pending.insert(task);
        self.counters.requeues += 1;
        Ok(())
    }

    pub fn complete(&mut self, task: TaskId, drone: DroneId, time: f64) -> Result<(), PoolError> {
        let entry = self.tasks.get(&task).ok_or(PoolError::UnknownTask(task))?;
        if !matches!(entry.status.phase, TaskPhase::Executing { drone: d, .. } if d == drone) {
            return Err(PoolError::NotHolder { task, drone });
        }
        self.transition(task, TaskPhase::Completed { at: time }, false)?;
        self.counters.completions += 1;
        Ok(())
    }

    pub fn mark_incomplete(
        &mut self,
        task: TaskId,
        reason: IncompleteReason,
    ) -> Result<(), PoolError> {
        self.transition(task, TaskPhase::Incomplete(reason), false)?;
        self.pending.remove(&task);
        Ok(())
    }

    /// Full O(n) consistency check between the pending index and the task
    /// table.
    pub fn check_invariants(&self) {
        for id in &self.pending {
            assert_eq!(self.tasks[id].status.phase, TaskPhase::Pending);
        }
        assert_eq!(
            self.pending.len(),
            self.tasks
                .values()
                .filter(|e| e.status.phase == TaskPhase::Pending)
                .count()
        );
    }
}
