//! Connectivity failure waves.

use rand::seq::index::sample;
use rand::Rng;

use crate::types::{DroneId, DroneState, FailureConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedOutage {
    pub drone: DroneId,
    pub permanent: bool,
    /// `None` for permanent losses.
    pub reconnect_at: Option<f64>,
}

/// One wave at `now`: `floor(fraction * fleet_size)` distinct connected drones,
/// or every connected drone if fewer remain.
pub fn inject_failures<R: Rng + ?Sized>(
    cfg: &FailureConfig,
    fleet: &[DroneState],
    now: f64,
    rng: &mut R,
) -> Vec<PlannedOutage> {
    if !cfg.enabled {
        return Vec::new();
    }
    let connected: Vec<DroneId> = fleet
        .iter()
        .filter(|d| d.status.is_connected())
        .map(|d| d.id)
        .collect();
    let want = ((cfg.fraction * fleet.len() as f64).floor() as usize).min(connected.len());
    let mut picked: Vec<DroneId> = sample(rng, connected.len(), want)
        .into_iter()
        .map(|i| connected[i])
        .collect();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|drone| {
            let permanent = rng.random::<f64>() < cfg.permanent_prob;
            PlannedOutage {
                drone,
                permanent,
                reconnect_at: (!permanent).then_some(now + cfg.outage_duration),
            }
        })
        .collect()
}
