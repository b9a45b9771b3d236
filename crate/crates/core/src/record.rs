//! Persisted training runs.
//!
//! A [`RunRecord`] holds everything needed to reproduce and analyse a run:
//! the configuration snapshot, the effective seed, per-generation (or
//! per-update) history rows, the champion genome and its fitness. Records
//! serialize to JSON with full round-trip float precision, so re-evaluating
//! a stored champion reproduces its fitness exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::ControllerGenome;
use crate::env::EnvConfig;
use crate::ppo::PpoConfig;
use crate::rewards::RewardKind;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerKind {
    Cmaes,
    Ppo,
    /// Random-search control with the same budget accounting as CMA-ES.
    Baseline,
}

impl TrainerKind {
    pub fn name(self) -> &'static str {
        match self {
            TrainerKind::Cmaes => "cmaes",
            TrainerKind::Ppo => "ppo",
            TrainerKind::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for TrainerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cmaes" => Ok(TrainerKind::Cmaes),
            "ppo" => Ok(TrainerKind::Ppo),
            "baseline" => Ok(TrainerKind::Baseline),
            other => Err(Error::UnknownTrainer(other.to_string())),
        }
    }
}

impl std::fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One history row; the same shape for every trainer so records stay
/// interchangeable downstream.
///
/// Semantics per trainer:
/// - cmaes: step = cumulative evaluations, best = best-so-far fitness,
///   mean/median = this generation's fitness mean/median;
/// - ppo: step = cumulative timesteps, best = best deterministic
///   evaluation so far, mean = buffer mean episode reward, median = this
///   update's deterministic evaluation;
/// - baseline: step = evaluations so far, best = best-so-far, mean = this
///   sample's fitness, median = median of all samples so far.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub best: f64,
    pub mean: f64,
    pub median: f64,
}

/// CMA-ES knobs worth snapshotting (the rest derives from the dimension).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaSettings {
    pub initial_sigma: f64,
    pub population: usize,
}

/// Verbatim configuration snapshot stored inside every record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub controller: String,
    pub trainer: TrainerKind,
    pub reward: RewardKind,
    pub budget: usize,
    pub seed: u64,
    pub replicate: usize,
    pub env: EnvConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cma: Option<CmaSettings>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ppo: Option<PpoConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format_version: u32,
    pub config: RunConfig,
    /// Effective seed of this replicate (config.seed + replicate index).
    pub seed: u64,
    pub history: Vec<HistoryRow>,
    /// Absent only for degenerate runs (zero budget).
    pub champion: Option<ControllerGenome>,
    pub champion_fitness: Option<f64>,
    /// Rollouts for cmaes/baseline, environment timesteps for ppo.
    pub evaluations: usize,
    pub wall_clock_secs: f64,
    pub warnings: Vec<String>,
}

impl RunRecord {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: RunRecord = serde_json::from_str(text)?;
        if record.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                got: record.format_version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(record)
    }

    /// Identifier used for output directories: `<trainer>-<controller>-<reward>`.
    pub fn condition_label(&self) -> String {
        format!(
            "{}-{}-{}",
            self.config.trainer, self.config.controller, self.config.reward
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpg::{CpgGenome, CpgRange};
    use crate::morphology::SpiderModel;

    fn record() -> RunRecord {
        let dm = SpiderModel::new().hinge_distance();
        RunRecord {
            format_version: FORMAT_VERSION,
            config: RunConfig {
                controller: "c2".into(),
                trainer: TrainerKind::Cmaes,
                reward: RewardKind::Speed,
                budget: 100,
                seed: 7,
                replicate: 1,
                env: EnvConfig::default(),
                cma: Some(CmaSettings {
                    initial_sigma: 0.5,
                    population: 12,
                }),
                ppo: None,
            },
            seed: 8,
            history: vec![HistoryRow {
                step: 12,
                best: 1.0,
                mean: 0.5,
                median: 0.25,
            }],
            champion: Some(ControllerGenome::Cpg(CpgGenome::zeros(CpgRange::R2, &dm))),
            champion_fitness: Some(1.0),
            evaluations: 12,
            wall_clock_secs: 0.25,
            warnings: vec![],
        }
    }

    #[test]
    fn json_round_trip() {
        let r = record();
        let js = r.to_json().unwrap();
        let back = RunRecord::from_json(&js).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut r = record();
        r.format_version = 999;
        let js = serde_json::to_string(&r).unwrap();
        assert!(matches!(
            RunRecord::from_json(&js),
            Err(Error::FormatVersion { got: 999, .. })
        ));
    }

    #[test]
    fn condition_label_format() {
        assert_eq!(record().condition_label(), "cmaes-c2-speed");
    }

    #[test]
    fn save_load_round_trip() {
        let dir = std::env::temp_dir().join("gaitbench-record-test");
        let path = dir.join("rep0/record.json");
        let r = record();
        r.save(&path).unwrap();
        let back = RunRecord::load(&path).unwrap();
        assert_eq!(back, r);
        std::fs::remove_dir_all(&dir).ok();
    }
}
