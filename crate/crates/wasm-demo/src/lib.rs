//! Browser bindings for the gait benchmark: three interactive operations
//! exposed to a static page.
//!
//! 1. [`simulate_cpg`] / [`simulate_genome`]: roll an episode and return
//!    the trace as JSON for plotting (body path, foot heights, rewards).
//! 2. [`Trainer`]: an incremental CMA-ES session; the page calls
//!    `step_generation` in a timer loop and plots the learning curve, then
//!    animates the champion.
//! 3. [`reward_point`]: evaluate the three reward functions at a chosen
//!    operating point (velocity, elevation, norms) for the explorer plot.
//!
//! Everything returns JSON strings; the page stays framework-free.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use gaitbench::cmaes::{CmaConfig, CmaEs};
use gaitbench::controller::{ControllerGenome, ControllerSpec};
use gaitbench::cpg::{CpgGenome, CpgRange, WEIGHT_BOUND};
use gaitbench::env::{rollout, EnvConfig, EpisodeTrace};
use gaitbench::morphology::SpiderModel;
use gaitbench::rewards::{self, RewardKind, StepOutputs};

fn err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn parse_reward(name: &str) -> Result<RewardKind, JsValue> {
    name.parse().map_err(err)
}

fn trace_json(
    genome: &ControllerGenome,
    trace: &EpisodeTrace,
    fitness: f64,
    reward: RewardKind,
) -> String {
    let steps = &trace.steps;
    // feet are world-frame; the body centre for drawing is their mean xy
    let body: Vec<[f64; 3]> = steps
        .iter()
        .map(|s| [body_proxy(s, 0), body_proxy(s, 1), s.body_z])
        .collect();
    serde_json::json!({
        "label": genome.label(),
        "reward": reward.name(),
        "fitness": fitness,
        "dt": trace.dt,
        "t": steps.iter().map(|s| s.t).collect::<Vec<_>>(),
        "body": body,
        "foot_pos": steps.iter().map(|s| s.foot_pos).collect::<Vec<_>>(),
        "foot_height": (0..4).map(|l| trace.foot_height(l)).collect::<Vec<_>>(),
        "obs": steps.iter().map(|s| s.obs).collect::<Vec<_>>(),
        "reward_per_step": steps.iter().map(|s| s.reward).collect::<Vec<_>>(),
    })
    .to_string()
}

fn body_proxy(s: &gaitbench::env::TraceStep, axis: usize) -> f64 {
    s.foot_pos.iter().map(|f| f[axis]).sum::<f64>() / 4.0
}

/// Rolls out a seeded random CPG of the given neighbourhood range.
/// `scale` in [0, 1] maps to the weight search domain.
#[wasm_bindgen]
pub fn simulate_cpg(range: u32, seed: u32, scale: f64, reward: &str) -> Result<String, JsValue> {
    let reward = parse_reward(reward)?;
    let range = CpgRange::try_from(range).map_err(err)?;
    let dm = SpiderModel::new().hinge_distance();
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let bound = (scale.clamp(0.0, 1.0)) * WEIGHT_BOUND;
    let weights: Vec<f64> = (0..range.param_count(&dm))
        .map(|_| {
            if bound > 0.0 {
                rng.random_range(-bound..=bound)
            } else {
                0.0
            }
        })
        .collect();
    let genome = ControllerGenome::Cpg(CpgGenome::new(range, weights, &dm).map_err(err)?);
    let (trace, fitness) = rollout(&genome, reward, &EnvConfig::default()).map_err(err)?;
    Ok(trace_json(&genome, &trace, fitness, reward))
}

/// Rolls out a genome pasted as JSON (the `champion` field of a run
/// record, or the output of `champion_genome`).
#[wasm_bindgen]
pub fn simulate_genome(genome_json: &str, reward: &str) -> Result<String, JsValue> {
    let reward = parse_reward(reward)?;
    let genome: ControllerGenome = serde_json::from_str(genome_json).map_err(err)?;
    let (trace, fitness) = rollout(&genome, reward, &EnvConfig::default()).map_err(err)?;
    Ok(trace_json(&genome, &trace, fitness, reward))
}

/// The three reward functions at one operating point.
#[wasm_bindgen]
pub fn reward_point(
    vx: f64,
    vy: f64,
    vz: f64,
    z: f64,
    control_norm: f64,
    contact_norm: f64,
) -> String {
    let step = StepOutputs {
        velocity: [vx, vy, vz],
        z,
        control_norm,
        contact_norm,
        dx: vx / 20.0,
    };
    serde_json::json!({
        "speed": rewards::reward_speed(&step),
        "gym": rewards::reward_gym(&step),
        "kernels": rewards::reward_kernels(&step),
    })
    .to_string()
}

/// The compiled-in morphology (for drawing the skeleton).
#[wasm_bindgen]
pub fn morphology_json() -> String {
    SpiderModel::new().to_json().to_string()
}

/// Incremental CMA-ES training session over the spider environment.
#[wasm_bindgen]
pub struct Trainer {
    spec: ControllerSpec,
    reward: RewardKind,
    env: EnvConfig,
    es: CmaEs,
    budget: usize,
}

#[wasm_bindgen]
impl Trainer {
    /// `controller` is "c0".."c6" or `m<d>_<w>`; training is gradient-free
    /// (the browser session mirrors the CLI's cmaes trainer).
    #[wasm_bindgen(constructor)]
    pub fn new(
        controller: &str,
        reward: &str,
        seed: u32,
        budget: usize,
    ) -> Result<Trainer, JsValue> {
        let spec: ControllerSpec = controller.parse().map_err(err)?;
        let reward = parse_reward(reward)?;
        let dm = SpiderModel::new().hinge_distance();
        let dim = spec.param_count(false, &dm).map_err(err)?;
        let mut config = CmaConfig::for_dimension(dim);
        config.seed = seed as u64;
        config.budget = budget;
        let es = CmaEs::new(&config).map_err(err)?;
        Ok(Trainer {
            spec,
            reward,
            env: EnvConfig::default(),
            es,
            budget,
        })
    }

    /// Runs one generation; returns learning-curve JSON with a `done` flag.
    pub fn step_generation(&mut self) -> Result<String, JsValue> {
        if self.es.evaluations() + self.es.population() > self.budget {
            return Ok(serde_json::json!({ "done": true }).to_string());
        }
        let dm = SpiderModel::new().hinge_distance();
        let candidates = self.es.ask().map_err(err)?;
        let mut fitnesses = Vec::with_capacity(candidates.len());
        for x in &candidates {
            let genome = self.spec.decode(x, false, &dm).map_err(err)?;
            let (_, f) = rollout(&genome, self.reward, &self.env).map_err(err)?;
            fitnesses.push(f);
        }
        self.es.tell(&candidates, &fitnesses).map_err(err)?;
        let mean = fitnesses.iter().sum::<f64>() / fitnesses.len() as f64;
        let done = self.es.evaluations() + self.es.population() > self.budget;
        Ok(serde_json::json!({
            "done": done,
            "generation": self.es.generation(),
            "evaluations": self.es.evaluations(),
            "best": self.es.best().map(|(_, f)| *f),
            "gen_mean": mean,
            "sigma": self.es.sigma(),
        })
        .to_string())
    }

    /// Episode trace of the best genome found so far.
    pub fn champion_trace(&self) -> Result<String, JsValue> {
        let dm = SpiderModel::new().hinge_distance();
        let (x, _) = self
            .es
            .best()
            .ok_or_else(|| JsValue::from_str("no generations trained yet"))?;
        let genome = self.spec.decode(x, false, &dm).map_err(err)?;
        let (trace, fitness) = rollout(&genome, self.reward, &self.env).map_err(err)?;
        Ok(trace_json(&genome, &trace, fitness, self.reward))
    }

    /// Champion genome JSON, compatible with `simulate_genome` and with
    /// the CLI's record format.
    pub fn champion_genome(&self) -> Result<String, JsValue> {
        let dm = SpiderModel::new().hinge_distance();
        let (x, _) = self
            .es
            .best()
            .ok_or_else(|| JsValue::from_str("no generations trained yet"))?;
        let genome = self.spec.decode(x, false, &dm).map_err(err)?;
        serde_json::to_string(&genome).map_err(err)
    }
}
