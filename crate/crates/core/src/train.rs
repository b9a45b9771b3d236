//! Experiment orchestration: runs one (controller, trainer, reward)
//! replicate end to end and produces a [`RunRecord`] plus a per-generation
//! statistics CSV.
//!
//! Budgets follow the source protocols: CMA-ES counts episode evaluations
//! (default 10'000), PPO counts environment timesteps (default 2'000'000)
//! with resets every episode. The random-search baseline shares the CMA-ES
//! accounting and sampling domains.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cmaes::{default_population, CmaConfig, CmaEs};
use crate::controller::{ControllerGenome, ControllerSpec};
use crate::cpg::WEIGHT_BOUND;
use crate::env::{self, EnvConfig, EpisodeTrace};
use crate::mlp::{self, MlpArchitecture};
use crate::morphology::SpiderModel;
use crate::ppo::{PpoConfig, PpoTrainer, SpiderTimestepEnv};
use crate::record::{CmaSettings, HistoryRow, RunConfig, RunRecord, TrainerKind, FORMAT_VERSION};
use crate::rewards::RewardKind;
use crate::{ordered_map, wall_clock, Error, Result};

/// Full description of one training replicate.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub controller: ControllerSpec,
    pub trainer: TrainerKind,
    pub reward: RewardKind,
    /// Evaluations (cmaes, baseline) or timesteps (ppo).
    pub budget: usize,
    pub seed: u64,
    pub replicate: usize,
    pub env: EnvConfig,
    pub cma_sigma: f64,
    pub cma_population: Option<usize>,
    /// PPO hyperparameters; `total_timesteps` and `seed` are overridden by
    /// `budget` and the effective seed.
    pub ppo: PpoConfig,
}

impl RunSpec {
    pub fn new(controller: ControllerSpec, trainer: TrainerKind, reward: RewardKind) -> Self {
        let budget = match trainer {
            TrainerKind::Ppo => 2_000_000,
            _ => 10_000,
        };
        Self {
            controller,
            trainer,
            reward,
            budget,
            seed: 0,
            replicate: 0,
            env: EnvConfig::default(),
            cma_sigma: 0.5,
            cma_population: None,
            ppo: PpoConfig::default(),
        }
    }

    /// Seed of this replicate: base seed plus replicate index.
    pub fn effective_seed(&self) -> u64 {
        self.seed.wrapping_add(self.replicate as u64)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.trainer == TrainerKind::Ppo && matches!(self.controller, ControllerSpec::Cpg(_)) {
            return Err(Error::PpoRequiresMlp);
        }
        Ok(())
    }

    fn run_config(&self) -> RunConfig {
        RunConfig {
            controller: self.controller.label(),
            trainer: self.trainer,
            reward: self.reward,
            budget: self.budget,
            seed: self.seed,
            replicate: self.replicate,
            env: self.env.clone(),
            cma: match self.trainer {
                TrainerKind::Cmaes => Some(CmaSettings {
                    initial_sigma: self.cma_sigma,
                    population: self.cma_population.unwrap_or_else(|| {
                        let dm = SpiderModel::new().hinge_distance();
                        default_population(
                            self.controller.param_count(false, &dm).unwrap_or(1).max(1),
                        )
                    }),
                }),
                _ => None,
            },
            ppo: match self.trainer {
                TrainerKind::Ppo => {
                    let mut p = self.ppo.clone();
                    p.total_timesteps = self.budget;
                    p.seed = self.effective_seed();
                    Some(p)
                }
                _ => None,
            },
        }
    }
}

/// A finished run: the persistable record and the trainer-specific
/// statistics CSV body.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub record: RunRecord,
    pub stats_csv: String,
}

/// Dispatches on the configured trainer.
pub fn train(spec: &RunSpec) -> Result<TrainOutput> {
    match spec.trainer {
        TrainerKind::Cmaes => run_cmaes(spec),
        TrainerKind::Ppo => run_ppo(spec),
        TrainerKind::Baseline => random_search(spec),
    }
}

fn median_of(values: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn degenerate_record(spec: &RunSpec, warning: String) -> TrainOutput {
    log::warn!("{warning}");
    TrainOutput {
        record: RunRecord {
            format_version: FORMAT_VERSION,
            config: spec.run_config(),
            seed: spec.effective_seed(),
            history: Vec::new(),
            champion: None,
            champion_fitness: None,
            evaluations: 0,
            wall_clock_secs: 0.0,
            warnings: vec![warning],
        },
        stats_csv: String::new(),
    }
}

/// Gradient-free training of either controller family.
pub fn run_cmaes(spec: &RunSpec) -> Result<TrainOutput> {
    spec.validate()?;
    let started = wall_clock();
    let dm = SpiderModel::new().hinge_distance();
    let dim = spec.controller.param_count(false, &dm)?;

    let mut warnings = Vec::new();
    if spec.controller.is_large_for_cmaes() {
        let w = format!(
            "{} spans {dim} parameters; the naive CMA-ES implementation tends to converge \
             prematurely and its covariance matrix becomes very large at this scale",
            spec.controller.label()
        );
        log::warn!("{w}");
        warnings.push(w);
    }

    let mut config = CmaConfig::for_dimension(dim);
    config.initial_sigma = spec.cma_sigma;
    if let Some(population) = spec.cma_population {
        config.population = population;
    }
    config.budget = spec.budget;
    config.seed = spec.effective_seed();

    if spec.budget < config.population {
        let mut out = degenerate_record(
            spec,
            format!(
                "budget {} is below one generation (population {}); no evaluations performed",
                spec.budget, config.population
            ),
        );
        out.record.warnings.extend(warnings);
        return Ok(out);
    }

    let mut es = CmaEs::new(&config)?;
    let mut history = Vec::new();
    let mut stats =
        String::from("generation,evaluations,best,gen_best,gen_median,gen_mean,sigma\n");

    while es.evaluations() + es.population() <= spec.budget {
        let candidates = es.ask()?;
        let genomes = candidates
            .iter()
            .map(|x| spec.controller.decode(x, false, &dm))
            .collect::<Result<Vec<_>>>()?;
        let fitnesses = ordered_map(&genomes, |g| {
            env::rollout(g, spec.reward, &spec.env).map(|(_, f)| f)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        es.tell(&candidates, &fitnesses)?;

        let best_so_far = es.best().map(|(_, f)| *f).unwrap_or(f64::NAN);
        let gen_best = fitnesses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let gen_median = median_of(&fitnesses);
        let gen_mean = fitnesses.iter().sum::<f64>() / fitnesses.len() as f64;
        history.push(HistoryRow {
            step: es.evaluations(),
            best: best_so_far,
            mean: gen_mean,
            median: gen_median,
        });
        stats.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            es.generation(),
            es.evaluations(),
            best_so_far,
            gen_best,
            gen_median,
            gen_mean,
            es.sigma()
        ));
    }

    let (champion, champion_fitness) = match es.best() {
        Some((x, f)) => (Some(spec.controller.decode(x, false, &dm)?), Some(*f)),
        None => (None, None),
    };
    Ok(TrainOutput {
        record: RunRecord {
            format_version: FORMAT_VERSION,
            config: spec.run_config(),
            seed: spec.effective_seed(),
            history,
            champion,
            champion_fitness,
            evaluations: es.evaluations(),
            wall_clock_secs: wall_clock() - started,
            warnings,
        },
        stats_csv: stats,
    })
}

/// PPO training of actor-critic MLPs. The champion is the best
/// deterministic evaluation observed across updates.
pub fn run_ppo(spec: &RunSpec) -> Result<TrainOutput> {
    spec.validate()?;
    let started = wall_clock();
    let arch = match spec.controller {
        ControllerSpec::Mlp { depth, width } => MlpArchitecture::new(depth, width, true)?,
        ControllerSpec::Cpg(_) => return Err(Error::PpoRequiresMlp),
    };

    if spec.budget == 0 {
        return Ok(degenerate_record(
            spec,
            "total timestep budget is 0; no training performed".into(),
        ));
    }

    let mut config = spec.ppo.clone();
    config.total_timesteps = spec.budget;
    config.seed = spec.effective_seed();
    config.validate()?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(spec.effective_seed());
    let genome = mlp::init_actor_critic(arch, &mut init_rng)?;
    let env = SpiderTimestepEnv::new(spec.env.clone(), spec.reward)?;
    let mut trainer = PpoTrainer::new(genome, env, config)?;

    let mut history = Vec::new();
    let mut stats = String::from(
        "update,timesteps,mean_episode_reward,det_eval,best_det_eval,\
         policy_loss,value_loss,entropy,clip_fraction,approx_kl\n",
    );
    let mut champion: Option<(ControllerGenome, f64)> = None;
    let mut update = 0usize;

    while trainer.remaining() > 0 {
        let (mean_ep, upd) = trainer.step()?;
        update += 1;
        let candidate = ControllerGenome::Mlp(trainer.genome.clone());
        let (_, det_eval) = env::rollout(&candidate, spec.reward, &spec.env)?;
        if champion
            .as_ref()
            .map(|(_, f)| det_eval > *f)
            .unwrap_or(true)
        {
            champion = Some((candidate, det_eval));
        }
        let best = champion.as_ref().map(|(_, f)| *f).unwrap_or(f64::NAN);
        history.push(HistoryRow {
            step: trainer.timesteps(),
            best,
            mean: mean_ep,
            median: det_eval,
        });
        stats.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            update,
            trainer.timesteps(),
            mean_ep,
            det_eval,
            best,
            upd.policy_loss,
            upd.value_loss,
            upd.entropy,
            upd.clip_fraction,
            upd.approx_kl
        ));
    }

    let (champion, champion_fitness) = match champion {
        Some((g, f)) => (Some(g), Some(f)),
        None => (None, None),
    };
    Ok(TrainOutput {
        record: RunRecord {
            format_version: FORMAT_VERSION,
            config: spec.run_config(),
            seed: spec.effective_seed(),
            history,
            champion,
            champion_fitness,
            evaluations: trainer.timesteps(),
            wall_clock_secs: wall_clock() - started,
            warnings: Vec::new(),
        },
        stats_csv: stats,
    })
}

/// Equal-budget random-search control. CPG genomes are drawn uniformly
/// from the weight domain; MLP parameters from N(0, 0.5^2), matching the
/// CMA-ES initial sampling distribution.
pub fn random_search(spec: &RunSpec) -> Result<TrainOutput> {
    spec.validate()?;
    let started = wall_clock();
    let dm = SpiderModel::new().hinge_distance();
    let dim = spec.controller.param_count(false, &dm)?;

    if spec.budget == 0 {
        return Ok(degenerate_record(
            spec,
            "budget is 0; no evaluations performed".into(),
        ));
    }

    // candidates are drawn sequentially so the sample stream is seeded and
    // worker-count independent; evaluation fans out order-preserving
    let mut rng = ChaCha8Rng::seed_from_u64(spec.effective_seed());
    let mut genomes = Vec::with_capacity(spec.budget);
    for _ in 0..spec.budget {
        let x: Vec<f64> = (0..dim)
            .map(|_| match spec.controller {
                ControllerSpec::Cpg(_) => rng.random_range(-WEIGHT_BOUND..=WEIGHT_BOUND),
                ControllerSpec::Mlp { .. } => {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    0.5 * e
                }
            })
            .collect();
        genomes.push(spec.controller.decode(&x, false, &dm)?);
    }
    let fitnesses = ordered_map(&genomes, |g| {
        env::rollout(g, spec.reward, &spec.env).map(|(_, f)| f)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;

    let mut history = Vec::with_capacity(spec.budget);
    let mut stats = String::from("evaluation,fitness,best_so_far,median_so_far\n");
    let mut best: Option<(usize, f64)> = None;
    let mut sorted: Vec<f64> = Vec::with_capacity(spec.budget);
    for (i, &f) in fitnesses.iter().enumerate() {
        if best.map(|(_, bf)| f > bf).unwrap_or(true) {
            best = Some((i, f));
        }
        let pos = sorted.partition_point(|v| *v < f);
        sorted.insert(pos, f);
        let median = if sorted.len() % 2 == 1 {
            sorted[sorted.len() / 2]
        } else {
            0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
        };
        let (_, bf) = best.unwrap();
        history.push(HistoryRow {
            step: i + 1,
            best: bf,
            mean: f,
            median,
        });
        stats.push_str(&format!("{},{},{},{}\n", i + 1, f, bf, median));
    }

    let (best_index, best_fitness) = best.unwrap();
    Ok(TrainOutput {
        record: RunRecord {
            format_version: FORMAT_VERSION,
            config: spec.run_config(),
            seed: spec.effective_seed(),
            history,
            champion: Some(genomes[best_index].clone()),
            champion_fitness: Some(best_fitness),
            evaluations: spec.budget,
            wall_clock_secs: wall_clock() - started,
            warnings: Vec::new(),
        },
        stats_csv: stats,
    })
}

/// Deterministic re-evaluation of a stored champion under any reward.
pub fn evaluate_champion(record: &RunRecord, reward: RewardKind) -> Result<(EpisodeTrace, f64)> {
    let champion = record
        .champion
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("record has no champion (degenerate run)".into()))?;
    env::rollout(champion, reward, &record.config.env)
}
