//! Controller genomes and their runtime instantiation.
//!
//! A [`ControllerGenome`] is the serializable artifact produced by training;
//! [`Controller`] is the per-episode runtime (CPGs carry oscillator state,
//! MLPs are stateless). [`ControllerSpec`] names a sub-architecture
//! ("c0".."c6", "m0_0".."m2_128") and handles decoding optimizer vectors
//! into genomes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cpg::{self, CpgGenome, CpgRange, CpgState, WEIGHT_BOUND};
use crate::mlp::{MlpArchitecture, MlpGenome};
use crate::morphology::DistanceMatrix;
use crate::{Error, HingeVector, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ControllerGenome {
    Cpg(CpgGenome),
    Mlp(MlpGenome),
}

impl ControllerGenome {
    pub fn label(&self) -> String {
        match self {
            ControllerGenome::Cpg(g) => format!("c{}", g.range.as_u32()),
            ControllerGenome::Mlp(g) => g.arch.label(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            ControllerGenome::Cpg(g) => g.weights.len(),
            ControllerGenome::Mlp(g) => g.params.len(),
        }
    }

    pub fn instantiate(&self, dm: &DistanceMatrix) -> Result<Controller> {
        match self {
            ControllerGenome::Cpg(g) => Ok(Controller::Cpg {
                system: g.build_system(dm)?,
                state: CpgState::initial(),
            }),
            ControllerGenome::Mlp(g) => Ok(Controller::Mlp(g.clone())),
        }
    }
}

/// Per-episode controller runtime. `act` is queried once per control step;
/// the CPG advances its oscillators by dt after emitting each action, so
/// the action at step k reflects the state at time k * dt.
pub enum Controller {
    Cpg {
        system: DMatrix<f64>,
        state: CpgState,
    },
    Mlp(MlpGenome),
}

impl Controller {
    pub fn act(&mut self, obs: &HingeVector, dt: f64) -> Result<HingeVector> {
        match self {
            Controller::Cpg { system, state } => {
                // open loop: observations are ignored
                let action = cpg::cpg_act(state);
                *state = cpg::step(state, system, dt)?;
                Ok(action)
            }
            Controller::Mlp(genome) => genome.act_deterministic(obs),
        }
    }
}

/// Architecture descriptor used by configs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerSpec {
    Cpg(CpgRange),
    Mlp { depth: u32, width: u32 },
}

impl ControllerSpec {
    /// Number of optimized parameters for this spec under the given
    /// trainer variant.
    pub fn param_count(&self, actor_critic: bool, dm: &DistanceMatrix) -> Result<usize> {
        match self {
            ControllerSpec::Cpg(range) => {
                if actor_critic {
                    return Err(Error::PpoRequiresMlp);
                }
                Ok(range.param_count(dm))
            }
            ControllerSpec::Mlp { depth, width } => {
                Ok(MlpArchitecture::new(*depth, *width, actor_critic)?.param_count())
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ControllerSpec::Cpg(range) => format!("c{}", range.as_u32()),
            ControllerSpec::Mlp { depth, width } => format!("m{depth}_{width}"),
        }
    }

    /// Decodes a flat optimizer vector into a genome. CPG weights are
    /// clamped to the search domain; MLP parameters are unconstrained.
    pub fn decode(
        &self,
        x: &[f64],
        actor_critic: bool,
        dm: &DistanceMatrix,
    ) -> Result<ControllerGenome> {
        match self {
            ControllerSpec::Cpg(range) => {
                if actor_critic {
                    return Err(Error::PpoRequiresMlp);
                }
                let weights = x
                    .iter()
                    .map(|w| w.clamp(-WEIGHT_BOUND, WEIGHT_BOUND))
                    .collect();
                Ok(ControllerGenome::Cpg(CpgGenome::new(*range, weights, dm)?))
            }
            ControllerSpec::Mlp { depth, width } => {
                let arch = MlpArchitecture::new(*depth, *width, actor_critic)?;
                Ok(ControllerGenome::Mlp(MlpGenome::new(arch, x.to_vec())?))
            }
        }
    }

    /// The sub-architectures whose covariance matrices exhaust a naive
    /// CMA-ES implementation; runs are allowed but flagged.
    pub fn is_large_for_cmaes(&self) -> bool {
        matches!(
            self,
            ControllerSpec::Mlp {
                depth: 1,
                width: 128
            } | ControllerSpec::Mlp {
                depth: 2,
                width: 64
            } | ControllerSpec::Mlp {
                depth: 2,
                width: 128
            }
        )
    }
}

impl std::str::FromStr for ControllerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = || Error::UnknownController(s.to_string());
        if let Some(rest) = s.strip_prefix('c') {
            let range: u32 = rest.parse().map_err(|_| err())?;
            return Ok(ControllerSpec::Cpg(CpgRange::try_from(range)?));
        }
        if let Some(rest) = s.strip_prefix('m') {
            let (d, w) = rest.split_once('_').ok_or_else(err)?;
            let depth: u32 = d.parse().map_err(|_| err())?;
            let width: u32 = w.parse().map_err(|_| err())?;
            MlpArchitecture::new(depth, width, false)?;
            return Ok(ControllerSpec::Mlp { depth, width });
        }
        Err(err())
    }
}

impl std::fmt::Display for ControllerSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::SpiderModel;

    fn dm() -> DistanceMatrix {
        SpiderModel::new().hinge_distance()
    }

    #[test]
    fn spec_parsing_round_trips() {
        for label in ["c0", "c2", "c4", "c6", "m0_0", "m1_16", "m2_128"] {
            let spec: ControllerSpec = label.parse().unwrap();
            assert_eq!(spec.label(), label);
        }
        for bad in ["c1", "c8", "m3_4", "m1_3", "x", "m1", ""] {
            assert!(bad.parse::<ControllerSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn decode_clamps_cpg_weights() {
        let dm = dm();
        let spec: ControllerSpec = "c0".parse().unwrap();
        let x = vec![5.0, -5.0, 0.25, 0.0, 1.0, -1.0, 2.0, -2.0];
        let genome = spec.decode(&x, false, &dm).unwrap();
        match genome {
            ControllerGenome::Cpg(g) => {
                assert_eq!(g.weights[0], WEIGHT_BOUND);
                assert_eq!(g.weights[1], -WEIGHT_BOUND);
                assert_eq!(g.weights[2], 0.25);
            }
            _ => panic!("expected cpg"),
        }
    }

    #[test]
    fn ppo_rejects_cpg_specs() {
        let dm = dm();
        let spec: ControllerSpec = "c6".parse().unwrap();
        assert!(matches!(
            spec.param_count(true, &dm),
            Err(Error::PpoRequiresMlp)
        ));
    }

    #[test]
    fn large_cmaes_specs_flagged() {
        for (label, large) in [
            ("m1_128", true),
            ("m2_64", true),
            ("m2_128", true),
            ("m2_8", false),
            ("m1_64", false),
            ("c6", false),
        ] {
            let spec: ControllerSpec = label.parse().unwrap();
            assert_eq!(spec.is_large_for_cmaes(), large, "{label}");
        }
    }

    #[test]
    fn genome_json_tags() {
        let dm = dm();
        let g = ControllerGenome::Cpg(CpgGenome::zeros(CpgRange::R2, &dm));
        let js = serde_json::to_string(&g).unwrap();
        assert!(js.starts_with("{\"type\":\"cpg\""));
        let back: ControllerGenome = serde_json::from_str(&js).unwrap();
        assert_eq!(back, g);

        let arch = MlpArchitecture::new(1, 2, true).unwrap();
        let g = ControllerGenome::Mlp(MlpGenome::zeros(arch));
        let js = serde_json::to_string(&g).unwrap();
        assert!(js.starts_with("{\"type\":\"mlp\""));
        assert!(js.contains("\"width\":2"));
        let back: ControllerGenome = serde_json::from_str(&js).unwrap();
        assert_eq!(back, g);
    }
}
