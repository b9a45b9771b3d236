//! The three per-step reward functions and their episode-sum fitness.
//!
//! - speed: per-step forward displacement, so the episode sum telescopes to
//!   net x displacement;
//! - gym: forward velocity penalized by control effort and contact load,
//!   `V_x - 0.5 |S| - 0.0005 |F|`;
//! - kernels: a weighted sum of RBF kernels targeting 0.5 m/s forward
//!   velocity, zero lateral/vertical velocity and 0.2 m body elevation,
//!   bounded in (0, 1] per step.

use serde::{Deserialize, Serialize};

use crate::env::EpisodeTrace;
use crate::{Error, Result};

/// Quantities produced by one environment step, as consumed by the rewards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutputs {
    /// Body velocity (V_x, V_y, V_z) in m/s.
    pub velocity: [f64; 3],
    /// Body elevation in meters.
    pub z: f64,
    /// L2 norm of the control signal (the 8 hinge targets).
    pub control_norm: f64,
    /// L2 norm of the per-foot normal-load surrogates.
    pub contact_norm: f64,
    /// Forward displacement over the step: V_x / control_rate.
    pub dx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Speed,
    Gym,
    Kernels,
}

impl RewardKind {
    pub const ALL: [RewardKind; 3] = [RewardKind::Speed, RewardKind::Gym, RewardKind::Kernels];

    pub fn name(self) -> &'static str {
        match self {
            RewardKind::Speed => "speed",
            RewardKind::Gym => "gym",
            RewardKind::Kernels => "kernels",
        }
    }
}

impl std::str::FromStr for RewardKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "speed" => Ok(RewardKind::Speed),
            "gym" => Ok(RewardKind::Gym),
            "kernels" => Ok(RewardKind::Kernels),
            other => Err(Error::UnknownReward(other.to_string())),
        }
    }
}

impl std::fmt::Display for RewardKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-step forward displacement x(t+1) - x(t).
pub fn reward_speed(step: &StepOutputs) -> f64 {
    step.dx
}

/// V_x - 0.5 |S| - 0.0005 |F|.
pub fn reward_gym(step: &StepOutputs) -> f64 {
    step.velocity[0] - 0.5 * step.control_norm - 0.0005 * step.contact_norm
}

/// RBF kernel exp(-c (v - target)^2).
pub fn rbf_kernel(v: f64, target: f64, slope: f64) -> f64 {
    (-slope * (v - target) * (v - target)).exp()
}

/// `5/8 K(V_x, 0.5, 25) + 1/8 K(V_y, 0, 5) + 1/8 K(V_z, 0, 5) + 1/8 K(z, 0.2, 0.002)`.
/// The elevation slope 0.002 is kept verbatim even though it is nearly
/// flat over plausible z.
pub fn reward_kernels(step: &StepOutputs) -> f64 {
    let [vx, vy, vz] = step.velocity;
    5.0 / 8.0 * rbf_kernel(vx, 0.5, 25.0)
        + 1.0 / 8.0 * rbf_kernel(vy, 0.0, 5.0)
        + 1.0 / 8.0 * rbf_kernel(vz, 0.0, 5.0)
        + 1.0 / 8.0 * rbf_kernel(step.z, 0.2, 0.002)
}

pub fn reward(kind: RewardKind, step: &StepOutputs) -> f64 {
    match kind {
        RewardKind::Speed => reward_speed(step),
        RewardKind::Gym => reward_gym(step),
        RewardKind::Kernels => reward_kernels(step),
    }
}

/// Episode fitness: the sum of the trace's reward column. Rejects traces
/// that did not run to the configured episode length.
pub fn fitness(trace: &EpisodeTrace) -> Result<f64> {
    if trace.steps.len() != trace.expected_len {
        return Err(Error::IncompleteTrace {
            got: trace.steps.len(),
            expected: trace.expected_len,
        });
    }
    Ok(trace.steps.iter().map(|s| s.reward).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn step(vx: f64, vy: f64, vz: f64, z: f64, control: f64, contact: f64) -> StepOutputs {
        StepOutputs {
            velocity: [vx, vy, vz],
            z,
            control_norm: control,
            contact_norm: contact,
            dx: vx / 20.0,
        }
    }

    #[test]
    fn speed_is_displacement() {
        assert_eq!(reward_speed(&step(0.0, 0.0, 0.0, 0.2, 0.0, 0.0)), 0.0);
        let s = StepOutputs {
            dx: 0.025,
            ..step(0.5, 0.0, 0.0, 0.2, 0.0, 0.0)
        };
        assert_eq!(reward_speed(&s), 0.025);
        // constant 0.5 m/s for 200 steps covers 5 m
        let total: f64 = (0..200)
            .map(|_| reward_speed(&step(0.5, 0.0, 0.0, 0.2, 0.0, 0.0)))
            .sum();
        assert!((total - 5.0).abs() < 1e-12);
    }

    #[test]
    fn gym_coefficients() {
        assert_eq!(reward_gym(&step(0.0, 0.0, 0.0, 0.2, 0.0, 0.0)), 0.0);
        assert!((reward_gym(&step(1.0, 0.0, 0.0, 0.2, 1.0, 0.0)) - 0.5).abs() < 1e-15);
        let r = reward_gym(&step(0.3, 0.0, 0.0, 0.2, 0.2, 100.0));
        assert!((r - 0.15).abs() < 1e-15); // 0.3 - 0.1 - 0.05
    }

    #[test]
    fn gym_linearity_by_finite_differencing() {
        // slope in each input recovered by central differences
        let base = step(0.3, 0.1, -0.2, 0.18, 0.7, 42.0);
        let h = 1e-4;
        let d_vx = (reward_gym(&StepOutputs {
            velocity: [base.velocity[0] + h, base.velocity[1], base.velocity[2]],
            ..base
        }) - reward_gym(&StepOutputs {
            velocity: [base.velocity[0] - h, base.velocity[1], base.velocity[2]],
            ..base
        })) / (2.0 * h);
        let d_ctrl = (reward_gym(&StepOutputs {
            control_norm: base.control_norm + h,
            ..base
        }) - reward_gym(&StepOutputs {
            control_norm: base.control_norm - h,
            ..base
        })) / (2.0 * h);
        let d_contact = (reward_gym(&StepOutputs {
            contact_norm: base.contact_norm + h,
            ..base
        }) - reward_gym(&StepOutputs {
            contact_norm: base.contact_norm - h,
            ..base
        })) / (2.0 * h);
        assert!((d_vx - 1.0).abs() < 1e-9);
        assert!((d_ctrl + 0.5).abs() < 1e-9);
        assert!((d_contact + 0.0005).abs() < 1e-9);
    }

    #[test]
    fn kernels_peak_and_rest_values() {
        // all four kernels at their peak
        assert_eq!(reward_kernels(&step(0.5, 0.0, 0.0, 0.2, 0.0, 0.0)), 1.0);
        // standing still: 5/8 e^{-6.25} + 3/8
        let rest = reward_kernels(&step(0.0, 0.0, 0.0, 0.2, 0.0, 0.0));
        let expected = 5.0 / 8.0 * (-6.25f64).exp() + 3.0 / 8.0;
        assert!((rest - expected).abs() < 1e-12);
        assert!((rest - 0.37621).abs() < 1e-5);
        // single kernel spot check: K(0.7, 0.5, 25) = e^{-1}
        assert!((rbf_kernel(0.7, 0.5, 25.0) - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn kernels_bounded_and_match_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let s = step(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..3.0),
                rng.random_range(0.0..200.0),
            );
            let r = reward_kernels(&s);
            assert!(r > 0.0 && r <= 1.0);
            let direct = 0.625 * (-25.0 * (s.velocity[0] - 0.5).powi(2)).exp()
                + 0.125 * (-5.0 * s.velocity[1].powi(2)).exp()
                + 0.125 * (-5.0 * s.velocity[2].powi(2)).exp()
                + 0.125 * (-0.002 * (s.z - 0.2).powi(2)).exp();
            assert!((r - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn kernels_equal_one_only_at_targets() {
        let off = step(0.5, 0.0, 0.0, 0.21, 0.0, 0.0);
        assert!(reward_kernels(&off) < 1.0);
    }

    #[test]
    fn kernels_fitness_caps_at_episode_length() {
        // an episode pinned at all kernel peaks scores exactly 200
        let peak = step(0.5, 0.0, 0.0, 0.2, 0.0, 0.0);
        let steps: Vec<crate::env::TraceStep> = (0..200)
            .map(|k| crate::env::TraceStep {
                t: k as f64 * 0.05,
                obs: [0.0; 8],
                action: [0.0; 8],
                body_vel: peak.velocity,
                body_z: peak.z,
                control_norm: 0.0,
                contact_norm: 0.0,
                foot_pos: [[0.0; 3]; 4],
                reward: reward_kernels(&peak),
            })
            .collect();
        let trace = EpisodeTrace {
            steps,
            expected_len: 200,
            dt: 0.05,
        };
        assert_eq!(fitness(&trace).unwrap(), 200.0);
    }
}
