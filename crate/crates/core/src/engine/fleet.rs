//! Initial fleet and task placement.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;

use crate::types::{DroneState, Position, Scenario, SensorKind};

/// Uniform point in the arena cylinder.
pub fn random_position<R: Rng + ?Sized>(radius: f64, altitude: f64, rng: &mut R) -> Position {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = rng.random::<f64>() * std::f64::consts::TAU;
    Position::new(
        r * theta.cos(),
        r * theta.sin(),
        rng.random::<f64>() * altitude,
    )
}

/// Positions come from `topology`; sensors, charge and CPU scale from
/// `heterogeneity`. Gps is never dropped.
pub fn generate_fleet<R: Rng + ?Sized, H: Rng + ?Sized>(
    s: &Scenario,
    topology: &mut R,
    heterogeneity: &mut H,
) -> Vec<DroneState> {
    let radius = s.radius();
    let cap = s.model_params.battery_capacity;
    let speed = s.model_params.drone_speed;
    let h = &s.heterogeneity;
    let weights = WeightedIndex::new(h.cpu_scale_choices.iter().map(|c| c.1))
        .expect("validated scenario has positive cpu weights");
    (0..s.fleet_size)
        .map(|i| {
            let pos = random_position(radius, s.arena_altitude, topology);
            let mut d = DroneState::new(i as u32, pos, speed, cap);
            if h.enabled {
                for k in SensorKind::ALL {
                    if k != SensorKind::Gps && heterogeneity.random::<f64>() < h.sensor_drop_prob {
                        d.sensors.remove(k);
                    }
                }
                let (lo, hi) = h.battery_init_range;
                d.battery_level = cap * (lo + (hi - lo) * heterogeneity.random::<f64>());
                d.cpu_scale = h.cpu_scale_choices[weights.sample(heterogeneity)].0;
            }
            d
        })
        .collect()
}
