//! Binary gate over the logits `(0, f_adv)`.
//!
//! `z = 1` sends a pair to the adversarial loss, `z = 0` to the
//! correspondence loss. The hard sampler is Gumbel-max: for two logits the
//! argmax is Bernoulli(σ(f_adv)) whatever the temperature, and the tempered
//! softmax of the perturbed logits is kept as `soft_weight` for the
//! straight-through gradient.

use rand::Rng;
use rand_distr::{Distribution, Gumbel};
use serde::{Deserialize, Serialize};

use super::text_enum;
use crate::error::{Result, WalError};
use crate::linalg::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    GumbelHard,
    SoftmaxSoft,
}

text_enum!(SamplerKind {
    GumbelHard => "gumbel_hard",
    SoftmaxSoft => "softmax_soft",
});

/// Gumbel(0, 1) perturbations of the two logits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateNoise {
    pub g0: f64,
    pub g1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateSample {
    pub z: u8,
    /// Probability mass on `z = 1`.
    pub soft_weight: f64,
}

/// Everything the discriminator decided for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    pub p_lvc: f64,
    pub p_adv: f64,
    pub f_adv: f64,
    pub z: u8,
    pub soft_weight: f64,
}

pub fn sample_gate_noise<R: Rng + ?Sized>(rng: &mut R) -> GateNoise {
    let g = Gumbel::new(0.0, 1.0).expect("standard gumbel");
    GateNoise {
        g0: g.sample(rng),
        g1: g.sample(rng),
    }
}

/// Deterministic part of [`sample_gate`]. The soft sampler ignores `noise`
/// and reports `z = 1` when more than half the mass is on it.
pub fn gate_from_noise(f_adv: f64, tau: f64, sampler: SamplerKind, noise: GateNoise) -> GateSample {
    match sampler {
        SamplerKind::GumbelHard => {
            let l0 = noise.g0 / tau;
            let l1 = (f_adv + noise.g1) / tau;
            GateSample {
                z: u8::from(l1 > l0),
                soft_weight: sigmoid(l1 - l0),
            }
        }
        SamplerKind::SoftmaxSoft => {
            let w = sigmoid(f_adv / tau);
            GateSample {
                z: u8::from(w > 0.5),
                soft_weight: w,
            }
        }
    }
}

pub fn sample_gate<R: Rng + ?Sized>(f_adv: f64, tau: f64, sampler: SamplerKind, rng: &mut R) -> Result<GateSample> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(WalError::invalid("tau", format!("must be positive, got {tau}")));
    }
    if !f_adv.is_finite() {
        return Err(WalError::invalid("f_adv", "non-finite gate logit"));
    }
    let noise = match sampler {
        SamplerKind::GumbelHard => sample_gate_noise(rng),
        SamplerKind::SoftmaxSoft => GateNoise { g0: 0.0, g1: 0.0 },
    };
    Ok(gate_from_noise(f_adv, tau, sampler, noise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rate(f: f64, tau: f64, n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ones: usize = (0..n)
            .map(|_| sample_gate(f, tau, SamplerKind::GumbelHard, &mut rng).unwrap().z as usize)
            .sum();
        ones as f64 / n as f64
    }

    #[test]
    fn saturated_negative_logit_never_gates_out() {
        assert_eq!(rate(-50.0, 1.0, 100_000, 0), 0.0);
    }

    #[test]
    fn zero_logit_is_a_fair_coin() {
        let n = 100_000;
        let se = (0.25 / n as f64).sqrt();
        assert!((rate(0.0, 1.0, n, 1) - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn unit_logit_matches_sigmoid() {
        let n = 100_000;
        let p = sigmoid(1.0);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((rate(1.0, 1.0, n, 2) - p).abs() < 3.0 * se);
    }

    #[test]
    fn soft_sampler_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = sample_gate(2.0, 2.0, SamplerKind::SoftmaxSoft, &mut rng).unwrap();
        assert_eq!(g.soft_weight, sigmoid(1.0));
        assert_eq!(g.z, 1);
    }

    #[test]
    fn weight_is_a_probability_and_z_is_binary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..1000 {
            let f = (i as f64 - 500.0) / 25.0;
            let g = sample_gate(f, 0.3, SamplerKind::GumbelHard, &mut rng).unwrap();
            assert!((0.0..=1.0).contains(&g.soft_weight));
            assert!(g.z <= 1);
            // hard choice and soft mass agree on which side is heavier
            assert_eq!(g.z == 1, g.soft_weight > 0.5);
        }
    }

    #[test]
    fn nonpositive_tau_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_gate(0.0, 0.0, SamplerKind::GumbelHard, &mut rng).is_err());
        assert!(sample_gate(0.0, -1.0, SamplerKind::SoftmaxSoft, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_decisions() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100)
                .map(|_| sample_gate(0.3, 1.0, SamplerKind::GumbelHard, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }
}
