//! `gaitbench` command-line front end.
//!
//! Subcommands: train, evaluate, cross-eval, analyze, diversity, baseline,
//! morphology. All outputs are plain JSON/CSV; every emitted number is
//! recomputable from the stored run records alone.

mod analyze;
mod logger;

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use gaitbench::controller::ControllerSpec;
use gaitbench::env::EnvConfig;
use gaitbench::record::{RunRecord, TrainerKind};
use gaitbench::rewards::RewardKind;
use gaitbench::train::{self, RunSpec};
use gaitbench::{analysis, morphology, with_worker_pool};

#[derive(Parser)]
#[command(
    name = "gaitbench",
    about = "Train and analyse CPG/MLP locomotion controllers for the 8-hinge spider",
    version
)]
struct Cli {
    /// Worker threads for rollout evaluation (default: all cores).
    /// Results are independent of this setting.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct EnvArgs {
    /// Control frequency in Hz.
    #[arg(long)]
    control_rate: Option<f64>,
    /// Episode duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// First-order servo gain, 1/s.
    #[arg(long)]
    servo_gain: Option<f64>,
}

impl EnvArgs {
    fn apply(&self, env: &mut EnvConfig) {
        if let Some(v) = self.control_rate {
            env.control_rate = v;
        }
        if let Some(v) = self.duration {
            env.duration = v;
        }
        if let Some(v) = self.servo_gain {
            env.servo_gain = v;
        }
    }
}

#[derive(Args, Clone)]
struct PpoArgs {
    /// Rollout horizon per update.
    #[arg(long)]
    ppo_n_steps: Option<usize>,
    /// Minibatch size (must divide the horizon).
    #[arg(long)]
    ppo_minibatch: Option<usize>,
    /// Epochs per update.
    #[arg(long)]
    ppo_epochs: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    ppo_lr: Option<f64>,
    /// Entropy bonus coefficient.
    #[arg(long)]
    ppo_entropy_coef: Option<f64>,
}

impl PpoArgs {
    fn apply(&self, ppo: &mut gaitbench::ppo::PpoConfig) {
        if let Some(v) = self.ppo_n_steps {
            ppo.n_steps = v;
        }
        if let Some(v) = self.ppo_minibatch {
            ppo.minibatch_size = v;
        }
        if let Some(v) = self.ppo_epochs {
            ppo.epochs = v;
        }
        if let Some(v) = self.ppo_lr {
            ppo.learning_rate = v;
        }
        if let Some(v) = self.ppo_entropy_coef {
            ppo.entropy_coef = v;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a controller for several replicates and persist the runs.
    Train {
        /// Controller spec: c0/c2/c4/c6 or m<depth>_<width>.
        #[arg(long)]
        controller: String,
        /// Trainer: cmaes or ppo.
        #[arg(long)]
        trainer: String,
        /// Reward: speed, gym or kernels.
        #[arg(long)]
        reward: String,
        /// Evaluations (cmaes) or timesteps (ppo); trainer default if omitted.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "runs")]
        outdir: PathBuf,
        /// CMA-ES initial step size.
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        /// CMA-ES population size (default 4 + floor(3 ln n)).
        #[arg(long)]
        population: Option<usize>,
        #[command(flatten)]
        ppo: PpoArgs,
        #[command(flatten)]
        env: EnvArgs,
    },
    /// Re-evaluate a stored champion deterministically.
    Evaluate {
        /// Path to a record.json.
        #[arg(long)]
        run: PathBuf,
        /// Reward to score with (defaults to the training reward).
        #[arg(long)]
        reward: Option<String>,
        /// Deterministic evaluation; always on, the flag is accepted for
        /// explicitness.
        #[arg(long)]
        deterministic: bool,
        /// Write the episode trace CSV here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Cross-performance of every stored champion on the rewards it was
    /// not trained with.
    CrossEval {
        /// Directory containing record.json files (searched recursively).
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value = "reports")]
        outdir: PathBuf,
    },
    /// Full report: performance, parameter impact, cross-performance,
    /// gait descriptors and PCA projection.
    Analyze {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value = "reports")]
        outdir: PathBuf,
        /// Fitness normalization for parameter impact: minmax, zscore, rank.
        #[arg(long, default_value = "minmax")]
        normalization: String,
    },
    /// Gait descriptors and PCA projection only.
    Diversity {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, default_value = "reports")]
        outdir: PathBuf,
    },
    /// Equal-budget random-search control run.
    Baseline {
        #[arg(long)]
        controller: String,
        #[arg(long)]
        reward: String,
        #[arg(long, default_value_t = 500)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long, default_value = "runs")]
        outdir: PathBuf,
        #[command(flatten)]
        env: EnvArgs,
    },
    /// Print the compiled-in morphology (hinges + tree distances) as JSON.
    Morphology,
}

fn main() {
    logger::install();
    let cli = Cli::parse();
    let workers = cli.workers;
    let code = with_worker_pool(workers, move || match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    });
    std::process::exit(code);
}

fn run(command: Command) -> gaitbench::Result<()> {
    match command {
        Command::Train {
            controller,
            trainer,
            reward,
            budget,
            replicates,
            seed,
            outdir,
            sigma,
            population,
            ppo,
            env,
        } => {
            let trainer = TrainerKind::from_str(&trainer)?;
            let mut spec = RunSpec::new(
                ControllerSpec::from_str(&controller)?,
                trainer,
                RewardKind::from_str(&reward)?,
            );
            if let Some(b) = budget {
                spec.budget = b;
            }
            spec.seed = seed;
            spec.cma_sigma = sigma;
            spec.cma_population = population;
            ppo.apply(&mut spec.ppo);
            env.apply(&mut spec.env);
            if replicates == 0 {
                return Err(gaitbench::Error::InvalidConfig(
                    "replicates must be >= 1".into(),
                ));
            }
            spec.validate()?;
            for replicate in 0..replicates {
                spec.replicate = replicate;
                let out = train::train(&spec)?;
                let dir = outdir
                    .join(out.record.condition_label())
                    .join(format!("rep{replicate}"));
                out.record.save(&dir.join("record.json"))?;
                std::fs::write(dir.join("stats.csv"), &out.stats_csv)?;
                println!(
                    "{} rep{replicate}: champion {} after {} {}",
                    out.record.condition_label(),
                    out.record
                        .champion_fitness
                        .map(|f| format!("{f:.6}"))
                        .unwrap_or_else(|| "n/a".into()),
                    out.record.evaluations,
                    match trainer {
                        TrainerKind::Ppo => "timesteps",
                        _ => "evaluations",
                    }
                );
                for w in &out.record.warnings {
                    eprintln!("warning: {w}");
                }
            }
            Ok(())
        }

        Command::Evaluate {
            run,
            reward,
            deterministic: _,
            trace,
        } => {
            let record = RunRecord::load(&run)?;
            let reward = match reward {
                Some(r) => RewardKind::from_str(&r)?,
                None => record.config.reward,
            };
            let (episode, fitness) = train::evaluate_champion(&record, reward)?;
            println!(
                "{} champion on {reward}: {fitness:.9}",
                record.condition_label()
            );
            if let Some(path) = trace {
                let mut buf = Vec::new();
                episode.write_csv(&mut buf)?;
                std::fs::write(&path, buf)?;
                println!("trace written to {}", path.display());
            }
            Ok(())
        }

        Command::CrossEval { runs, outdir } => {
            let records = analyze::load_records(&runs)?;
            analyze::write_cross(&records, &outdir)
        }

        Command::Analyze {
            runs,
            outdir,
            normalization,
        } => {
            let normalization = analysis::Normalization::from_str(&normalization)?;
            let records = analyze::load_records(&runs)?;
            analyze::write_all(&records, &outdir, normalization)
        }

        Command::Diversity { runs, outdir } => {
            let records = analyze::load_records(&runs)?;
            analyze::write_diversity(&records, &outdir)
        }

        Command::Baseline {
            controller,
            reward,
            budget,
            seed,
            replicates,
            outdir,
            env,
        } => {
            let mut spec = RunSpec::new(
                ControllerSpec::from_str(&controller)?,
                TrainerKind::Baseline,
                RewardKind::from_str(&reward)?,
            );
            spec.budget = budget;
            spec.seed = seed;
            env.apply(&mut spec.env);
            for replicate in 0..replicates.max(1) {
                spec.replicate = replicate;
                let out = train::random_search(&spec)?;
                let dir = outdir
                    .join(out.record.condition_label())
                    .join(format!("rep{replicate}"));
                out.record.save(&dir.join("record.json"))?;
                std::fs::write(dir.join("stats.csv"), &out.stats_csv)?;
                let median = out
                    .record
                    .history
                    .last()
                    .map(|h| format!("{:.6}", h.median))
                    .unwrap_or_else(|| "n/a".into());
                println!(
                    "{} rep{replicate}: best {} median {median} over {} evaluations",
                    out.record.condition_label(),
                    out.record
                        .champion_fitness
                        .map(|f| format!("{f:.6}"))
                        .unwrap_or_else(|| "n/a".into()),
                    out.record.evaluations
                );
            }
            Ok(())
        }

        Command::Morphology => {
            let model = morphology::SpiderModel::new();
            println!("{}", serde_json::to_string_pretty(&model.to_json())?);
            Ok(())
        }
    }
}
