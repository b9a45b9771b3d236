//! Post-training analytics: Parameter Impact, cross-reward performance,
//! sinusoid gait descriptors and their PCA diversity projection.

pub mod pca;
pub mod sinefit;

pub use pca::{pca_project, PcaProjection};
pub use sinefit::{fit_foot_sinusoid, SineFit};

use serde::{Deserialize, Serialize};

use crate::env::{self, EnvConfig, EpisodeTrace};
use crate::record::{RunRecord, TrainerKind};
use crate::rewards::RewardKind;
use crate::{Error, Result};

/// The three trainer/controller groups under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    CmaCpg,
    CmaMlp,
    PpoMlp,
}

impl Group {
    pub fn label(self) -> &'static str {
        match self {
            Group::CmaCpg => "CMA/CPG",
            Group::CmaMlp => "CMA/MLP",
            Group::PpoMlp => "PPO/MLP",
        }
    }

    pub fn of_record(record: &RunRecord) -> Option<Group> {
        let is_cpg = record.config.controller.starts_with('c');
        match (record.config.trainer, is_cpg) {
            (TrainerKind::Cmaes, true) => Some(Group::CmaCpg),
            (TrainerKind::Cmaes, false) => Some(Group::CmaMlp),
            (TrainerKind::Ppo, false) => Some(Group::PpoMlp),
            _ => None,
        }
    }
}

impl std::fmt::Display for Group {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// One performance observation: a champion's fitness with its group,
/// sub-architecture and parameter count.
#[derive(Debug, Clone, PartialEq)]
pub struct PerfRow {
    pub group: Group,
    pub arch: String,
    pub reward: RewardKind,
    pub replicate: usize,
    pub fitness: f64,
    pub params: usize,
}

/// Collects performance rows from trained records (baseline and degenerate
/// records are skipped).
pub fn performance_table(records: &[RunRecord]) -> Vec<PerfRow> {
    let mut rows = Vec::new();
    for r in records {
        let (Some(group), Some(champion), Some(fitness)) =
            (Group::of_record(r), r.champion.as_ref(), r.champion_fitness)
        else {
            continue;
        };
        rows.push(PerfRow {
            group,
            arch: r.config.controller.clone(),
            reward: r.config.reward,
            replicate: r.config.replicate,
            fitness,
            params: champion.param_count(),
        });
    }
    rows
}

/// Fitness-pool normalization used by Parameter Impact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Uniform scaling of the pool onto [0, 1] (the default reading).
    MinMax,
    ZScore,
    Rank,
}

impl std::str::FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(Normalization::MinMax),
            "zscore" => Ok(Normalization::ZScore),
            "rank" => Ok(Normalization::Rank),
            other => Err(Error::InvalidConfig(format!(
                "unknown normalization '{other}' (expected minmax, zscore or rank)"
            ))),
        }
    }
}

/// Normalizes `f` against the pooled fitness distribution of the same
/// reward function.
pub fn normalize(f: f64, distribution: &[f64], method: Normalization) -> Result<f64> {
    if distribution.len() < 2 {
        return Err(Error::DegenerateDistribution(format!(
            "needs at least 2 values, got {}",
            distribution.len()
        )));
    }
    let min = distribution.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = distribution
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max.is_finite() && min.is_finite() && max > min) {
        return Err(Error::DegenerateDistribution("max == min".into()));
    }
    Ok(match method {
        Normalization::MinMax => (f - min) / (max - min),
        Normalization::ZScore => {
            let n = distribution.len() as f64;
            let mean = distribution.iter().sum::<f64>() / n;
            let std = (distribution
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / n)
                .sqrt();
            (f - mean) / std
        }
        Normalization::Rank => {
            let below = distribution.iter().filter(|v| **v < f).count() as f64;
            below / (distribution.len() - 1) as f64
        }
    })
}

/// Parameter Impact of an already-normalized fitness: f_hat / log10(p).
pub fn impact_of_normalized(f_hat: f64, params: usize) -> Result<f64> {
    if params < 2 {
        return Err(Error::DegenerateParamCount(params));
    }
    Ok(f_hat / (params as f64).log10())
}

/// Parameter Impact with the default min-max pooling: normalizes `f`
/// against the distribution of fitnesses trained on the same reward, then
/// divides by log10 of the parameter count.
pub fn parameter_impact(f: f64, params: usize, distribution: &[f64]) -> Result<f64> {
    let f_hat = normalize(f, distribution, Normalization::MinMax)?;
    impact_of_normalized(f_hat, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactRow {
    pub group: Group,
    pub arch: String,
    pub reward: RewardKind,
    pub replicate: usize,
    pub fitness: f64,
    pub normalized: f64,
    pub params: usize,
    pub impact: f64,
}

/// Parameter Impact table; normalization pools all individuals trained
/// with the same reward, across groups and replicates.
pub fn impact_table(rows: &[PerfRow], method: Normalization) -> Result<Vec<ImpactRow>> {
    let mut out = Vec::with_capacity(rows.len());
    for reward in RewardKind::ALL {
        let pool: Vec<f64> = rows
            .iter()
            .filter(|r| r.reward == reward)
            .map(|r| r.fitness)
            .collect();
        if pool.is_empty() {
            continue;
        }
        for r in rows.iter().filter(|r| r.reward == reward) {
            let normalized = normalize(r.fitness, &pool, method)?;
            out.push(ImpactRow {
                group: r.group,
                arch: r.arch.clone(),
                reward: r.reward,
                replicate: r.replicate,
                fitness: r.fitness,
                normalized,
                params: r.params,
                impact: impact_of_normalized(normalized, r.params)?,
            });
        }
    }
    Ok(out)
}

/// Scores a champion under a reward other than the one it was trained on
/// (a deterministic rollout; the same-reward case is plain performance and
/// is rejected).
pub fn cross_evaluate(
    champion: &crate::controller::ControllerGenome,
    trained_on: RewardKind,
    evaluated_on: RewardKind,
    env_config: &EnvConfig,
) -> Result<f64> {
    if trained_on == evaluated_on {
        return Err(Error::SameReward(trained_on.name().to_string()));
    }
    env::rollout(champion, evaluated_on, env_config).map(|(_, f)| f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossRow {
    pub group: Group,
    pub arch: String,
    pub replicate: usize,
    pub trained_on: RewardKind,
    pub evaluated_on: RewardKind,
    pub value: f64,
}

/// Cross-performance of every champion on the two rewards it was not
/// trained with.
pub fn cross_table(records: &[RunRecord]) -> Result<Vec<CrossRow>> {
    let mut rows = Vec::new();
    for r in records {
        let (Some(group), Some(champion)) = (Group::of_record(r), r.champion.as_ref()) else {
            continue;
        };
        for evaluated_on in RewardKind::ALL {
            if evaluated_on == r.config.reward {
                continue;
            }
            rows.push(CrossRow {
                group,
                arch: r.config.controller.clone(),
                replicate: r.config.replicate,
                trained_on: r.config.reward,
                evaluated_on,
                value: cross_evaluate(champion, r.config.reward, evaluated_on, &r.config.env)?,
            });
        }
    }
    Ok(rows)
}

/// Best cross value per (group, trained reward, evaluated reward), with
/// the sub-architecture that achieved it.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSummaryCell {
    pub group: Group,
    pub trained_on: RewardKind,
    pub evaluated_on: RewardKind,
    pub best_value: f64,
    pub best_arch: String,
}

pub fn cross_summary(rows: &[CrossRow]) -> Vec<CrossSummaryCell> {
    let mut cells = Vec::new();
    for group in [Group::CmaCpg, Group::CmaMlp, Group::PpoMlp] {
        for trained_on in RewardKind::ALL {
            for evaluated_on in RewardKind::ALL {
                if trained_on == evaluated_on {
                    continue;
                }
                let best = rows
                    .iter()
                    .filter(|r| {
                        r.group == group
                            && r.trained_on == trained_on
                            && r.evaluated_on == evaluated_on
                    })
                    .max_by(|a, b| {
                        a.value
                            .partial_cmp(&b.value)
                            .unwrap_or(std::cmp::Ordering::Equal)
                    });
                if let Some(b) = best {
                    cells.push(CrossSummaryCell {
                        group,
                        trained_on,
                        evaluated_on,
                        best_value: b.value,
                        best_arch: b.arch.clone(),
                    });
                }
            }
        }
    }
    cells
}

/// 16-D gait descriptor: fitted sinusoid parameters of each foot's height
/// trajectory, (A, w, phi, c) per foot. Constraint-violating feet are all
/// zeros.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitDescriptor {
    pub feet: [SineFit; 4],
}

impl GaitDescriptor {
    pub fn flat(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for (leg, fit) in self.feet.iter().enumerate() {
            out[4 * leg..4 * leg + 4].copy_from_slice(&fit.to_array());
        }
        out
    }
}

/// Fits the four foot-height trajectories of one episode trace.
pub fn gait_descriptor(trace: &EpisodeTrace) -> Result<GaitDescriptor> {
    let mut feet = [SineFit::ZERO; 4];
    for (leg, fit) in feet.iter_mut().enumerate() {
        *fit = fit_foot_sinusoid(&trace.foot_height(leg), trace.dt)?;
    }
    Ok(GaitDescriptor { feet })
}

/// Deterministic rollout of a record's champion on its training reward,
/// reduced to the gait descriptor.
pub fn descriptor_for_record(record: &RunRecord) -> Result<GaitDescriptor> {
    let champion = record
        .champion
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("record has no champion".into()))?;
    let (trace, _) = env::rollout(champion, record.config.reward, &record.config.env)?;
    gait_descriptor(&trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ControllerGenome;
    use crate::cpg::{CpgGenome, CpgRange};
    use crate::morphology::SpiderModel;
    use crate::rewards;

    #[test]
    fn impact_examples() {
        // f_hat = 0.5 at p = 100: log10(100) = 2
        assert!((impact_of_normalized(0.5, 100).unwrap() - 0.25).abs() < 1e-15);
        // pool minimum normalizes to zero impact
        let pool = vec![1.0, 2.0, 5.0];
        assert_eq!(parameter_impact(1.0, 36, &pool).unwrap(), 0.0);
        // p < 2 rejected
        assert!(impact_of_normalized(1.0, 1).is_err());
        assert!(impact_of_normalized(1.0, 0).is_err());
        // degenerate pool rejected
        assert!(parameter_impact(1.0, 36, &[2.0, 2.0]).is_err());
        assert!(parameter_impact(1.0, 36, &[2.0]).is_err());
    }

    #[test]
    fn impact_ratio_between_small_and_large_policies() {
        let a = impact_of_normalized(1.0, 36).unwrap();
        let b = impact_of_normalized(1.0, 10065).unwrap();
        let expected = (10065f64).log10() / (36f64).log10();
        assert!((a / b - expected).abs() < 1e-12);
        assert!((a / b - 2.572).abs() < 1e-3);
    }

    #[test]
    fn impact_invariant_under_affine_rescaling() {
        let pool = vec![-3.0, 1.0, 4.0, 10.0];
        let f = 4.0;
        let i1 = parameter_impact(f, 72, &pool).unwrap();
        let rescaled: Vec<f64> = pool.iter().map(|v| 7.5 * v - 11.0).collect();
        let i2 = parameter_impact(7.5 * f - 11.0, 72, &rescaled).unwrap();
        assert!((i1 - i2).abs() < 1e-12);
    }

    #[test]
    fn impact_decreasing_in_params_at_fixed_fitness() {
        let mut last = f64::INFINITY;
        for p in [8, 18, 36, 72, 216, 10065] {
            let i = impact_of_normalized(0.8, p).unwrap();
            assert!(i < last);
            last = i;
        }
    }

    #[test]
    fn normalization_variants() {
        let pool = vec![0.0, 1.0, 2.0, 3.0];
        assert!((normalize(3.0, &pool, Normalization::MinMax).unwrap() - 1.0).abs() < 1e-15);
        assert!((normalize(1.5, &pool, Normalization::MinMax).unwrap() - 0.5).abs() < 1e-15);
        let z = normalize(1.5, &pool, Normalization::ZScore).unwrap();
        assert!(z.abs() < 1e-12); // 1.5 is the pool mean
        assert!((normalize(2.5, &pool, Normalization::Rank).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(normalize(0.0, &pool, Normalization::Rank).unwrap(), 0.0);
    }

    #[test]
    fn cross_eval_guards_same_reward() {
        let dm = SpiderModel::new().hinge_distance();
        let genome = ControllerGenome::Cpg(CpgGenome::zeros(CpgRange::R0, &dm));
        let err = cross_evaluate(
            &genome,
            RewardKind::Speed,
            RewardKind::Speed,
            &EnvConfig::default(),
        );
        assert!(matches!(err, Err(Error::SameReward(_))));
    }

    #[test]
    fn zero_controller_cross_value_on_kernels() {
        let dm = SpiderModel::new().hinge_distance();
        let genome = ControllerGenome::Cpg(CpgGenome::zeros(CpgRange::R0, &dm));
        let cfg = EnvConfig::default();
        let value = cross_evaluate(&genome, RewardKind::Speed, RewardKind::Kernels, &cfg).unwrap();
        // standing still: every step scores the rest-state kernel value
        let rest = rewards::StepOutputs {
            velocity: [0.0; 3],
            z: 0.2,
            control_norm: 0.0,
            contact_norm: 0.0,
            dx: 0.0,
        };
        let expected = 200.0 * rewards::reward_kernels(&rest);
        assert!((value - expected).abs() < 1e-6, "{value} vs {expected}");
    }

    #[test]
    fn descriptor_flattening_order() {
        let mut feet = [SineFit::ZERO; 4];
        feet[1] = SineFit {
            amplitude: 0.1,
            omega: 0.2,
            phase: 0.3,
            offset: 0.4,
        };
        let d = GaitDescriptor { feet };
        let flat = d.flat();
        assert_eq!(&flat[4..8], &[0.1, 0.2, 0.3, 0.4]);
        assert!(flat[..4].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn descriptor_from_still_trace_is_constant_fits() {
        let dm = SpiderModel::new().hinge_distance();
        let genome = ControllerGenome::Cpg(CpgGenome::zeros(CpgRange::R0, &dm));
        let (trace, _) = env::rollout(&genome, RewardKind::Speed, &EnvConfig::default()).unwrap();
        let d = gait_descriptor(&trace).unwrap();
        for fit in d.feet {
            assert_eq!(fit.amplitude, 0.0);
            assert!(fit.offset.abs() < 1e-9); // feet rest on the ground
        }
    }
}
