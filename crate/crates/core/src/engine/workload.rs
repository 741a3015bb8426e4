//! Closed-loop task generator: keeps the pending backlog topped up.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::fleet::random_position;
use crate::models::ModelParams;
use crate::taskpool::{PoolError, TaskPool};
use crate::types::{TaskId, TaskKind, TaskSpec, WorkloadConfig};

#[derive(Debug, Clone)]
pub struct Workload {
    pub cfg: WorkloadConfig,
    kinds: Vec<TaskKind>,
    target: usize,
    radius: f64,
    altitude: f64,
    next_id: TaskId,
    rng: ChaCha8Rng,
    obstacle_rng: ChaCha8Rng,
}

impl Workload {
    pub fn new(
        cfg: WorkloadConfig,
        target: usize,
        radius: f64,
        altitude: f64,
        rng: ChaCha8Rng,
        obstacle_rng: ChaCha8Rng,
    ) -> Self {
        Self {
            kinds: cfg.kind_mix(),
            cfg,
            target,
            radius,
            altitude,
            next_id: 0,
            rng,
            obstacle_rng,
        }
    }

    pub fn generated(&self) -> u64 {
        self.next_id
    }

    fn exhausted(&self) -> bool {
        self.cfg.task_limit.is_some_and(|n| self.next_id >= n)
    }

    fn push(&mut self, pool: &mut TaskPool, spec: TaskSpec) -> Result<TaskId, PoolError> {
        let id = spec.id;
        pool.enqueue(spec)?;
        self.next_id += 1;
        Ok(id)
    }

    /// Enqueue fresh tasks until the pending count reaches the target.
    pub fn top_up(
        &mut self,
        pool: &mut TaskPool,
        now: f64,
        p: &ModelParams,
    ) -> Result<Vec<TaskId>, PoolError> {
        let mut out = Vec::new();
        while pool.pending_len() < self.target && !self.exhausted() {
            let kind = self.kinds[self.rng.random_range(0..self.kinds.len())];
            let loc = random_position(self.radius, self.altitude, &mut self.rng);
            let spec = TaskSpec::new(self.next_id, kind, loc, now, p);
            out.push(self.push(pool, spec)?);
        }
        Ok(out)
    }

    /// After a recognition task completes, maybe spawn an obstacle-avoidance
    /// task at the same spot.
    pub fn on_completion(
        &mut self,
        pool: &mut TaskPool,
        parent: &TaskSpec,
        now: f64,
        p: &ModelParams,
    ) -> Result<Option<TaskId>, PoolError> {
        if !parent.kind.is_recognition() {
            return Ok(None);
        }
        if self.obstacle_rng.random::<f64>() >= self.cfg.obstacle_prob || self.exhausted() {
            return Ok(None);
        }
        let mut spec = TaskSpec::new(
            self.next_id,
            TaskKind::ObstacleAvoidance,
            parent.location,
            now,
            p,
        );
        spec.parent_task = Some(parent.id);
        self.push(pool, spec).map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::rng::stream;
    use crate::types::Position;

    fn workload(cfg: WorkloadConfig, target: usize) -> Workload {
        Workload::new(
            cfg,
            target,
            50.0,
            20.0,
            stream(1, "workload"),
            stream(1, "obstacle"),
        )
    }

    #[test]
    fn full_backlog_enqueues_nothing() {
        let p = ModelParams::default();
        let mut pool = TaskPool::new();
        let mut w = workload(WorkloadConfig::default(), 10);
        assert_eq!(w.top_up(&mut pool, 0.0, &p).unwrap().len(), 10);
        assert!(w.top_up(&mut pool, 1.0, &p).unwrap().is_empty());
    }

    #[test]
    fn kinds_are_uniform_over_the_mix() {
        let p = ModelParams::default();
        let mut pool = TaskPool::new();
        let mut w = workload(WorkloadConfig::default(), 40_000);
        w.top_up(&mut pool, 0.0, &p).unwrap();
        for k in WorkloadConfig::default().kind_mix() {
            let n = pool.entries().filter(|e| e.spec.kind == k).count() as f64;
            assert!((n / 40_000.0 - 0.25).abs() < 0.01, "{k:?}");
        }
        assert_eq!(
            pool.entries()
                .filter(|e| e.spec.kind == TaskKind::RecognizeTree)
                .count(),
            0
        );
    }

    #[test]
    fn obstacle_children_follow_probability() {
        let p = ModelParams::default();
        let mut pool = TaskPool::new();
        let mut w = workload(WorkloadConfig::default(), 0);
        let parent = TaskSpec::new(
            999_999,
            TaskKind::RecognizePeople,
            Position::ORIGIN,
            0.0,
            &p,
        );
        let mut children = 0;
        for _ in 0..10_000 {
            if let Some(id) = w.on_completion(&mut pool, &parent, 1.0, &p).unwrap() {
                let e = pool.get(id).unwrap();
                assert_eq!(e.spec.parent_task, Some(999_999));
                assert_eq!(e.spec.location, parent.location);
                children += 1;
            }
        }
        assert!((children as f64 / 10_000.0 - 0.3).abs() < 0.02);
    }

    #[test]
    fn zero_obstacle_prob_spawns_nothing() {
        let p = ModelParams::default();
        let mut pool = TaskPool::new();
        let cfg = WorkloadConfig {
            obstacle_prob: 0.0,
            ..Default::default()
        };
        let mut w = workload(cfg, 0);
        let parent = TaskSpec::new(0, TaskKind::RecognizeDrone, Position::ORIGIN, 0.0, &p);
        for _ in 0..1000 {
            assert!(w
                .on_completion(&mut pool, &parent, 1.0, &p)
                .unwrap()
                .is_none());
        }
    }
}
