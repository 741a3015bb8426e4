//! Round-trip latency model.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::types::Scenario;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkModel {
    pub rtt_median: f64,
    /// Standard deviation of ln(RTT).
    pub rtt_sigma: f64,
    pub multiplier: f64,
}

impl NetworkModel {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            rtt_median: s.network.rtt_median,
            rtt_sigma: s.network.rtt_sigma,
            multiplier: s.net_latency_multiplier,
        }
    }
}

/// Lognormal RTT with the given median, times the multiplier. Always draws
/// exactly one normal variate so stream positions line up across multipliers.
pub fn sample_rtt<R: Rng + ?Sized>(net: &NetworkModel, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    let base = if net.rtt_sigma == 0.0 {
        net.rtt_median
    } else {
        net.rtt_median * (net.rtt_sigma * z).exp()
    };
    base * net.multiplier
}

#[derive(Debug, Clone)]
pub struct NetworkSampler {
    pub model: NetworkModel,
    rng: ChaCha8Rng,
    pub samples: u64,
}

impl NetworkSampler {
    pub fn new(model: NetworkModel, rng: ChaCha8Rng) -> Self {
        Self {
            model,
            rng,
            samples: 0,
        }
    }

    pub fn rtt(&mut self) -> f64 {
        self.samples += 1;
        sample_rtt(&self.model, &mut self.rng)
    }

    pub fn one_way(&mut self) -> f64 {
        self.rtt() / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::rng::stream;

    fn model(multiplier: f64, sigma: f64) -> NetworkModel {
        NetworkModel {
            rtt_median: 0.012,
            rtt_sigma: sigma,
            multiplier,
        }
    }

    #[test]
    fn empirical_median_near_configured() {
        let mut rng = stream(11, "network");
        let m = model(1.0, 0.5);
        let mut v: Vec<f64> = (0..1_000_000).map(|_| sample_rtt(&m, &mut rng)).collect();
        v.sort_by(f64::total_cmp);
        let med = v[v.len() / 2];
        assert!((med / 0.012 - 1.0).abs() < 0.05, "median {med}");
        assert!(v[0] > 0.0);
    }

    #[test]
    fn multiplier_scales_each_sample() {
        let mut a = stream(5, "network");
        let mut b = stream(5, "network");
        for _ in 0..1000 {
            let x = sample_rtt(&model(1.0, 0.5), &mut a);
            let y = sample_rtt(&model(0.25, 0.5), &mut b);
            assert_eq!(y, x * 0.25);
        }
    }

    #[test]
    fn zero_sigma_is_constant() {
        let mut rng = stream(5, "network");
        for _ in 0..100 {
            assert_eq!(sample_rtt(&model(1.0, 0.0), &mut rng), 0.012);
        }
    }
}
