//! Covariance Matrix Adaptation Evolution Strategy over flat parameter
//! vectors, maximization convention, with the standard rank-mu update,
//! cumulative step-size adaptation and log-decreasing recombination
//! weights. Deliberately a plain implementation: no restarts, no
//! large-scale variants.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaConfig {
    pub dimension: usize,
    /// Start of the search distribution; defaults to the origin.
    pub initial_mean: Vec<f64>,
    /// Initial global step size.
    pub initial_sigma: f64,
    /// Population size lambda; defaults to 4 + floor(3 ln n).
    pub population: usize,
    /// Maximum number of fitness evaluations.
    pub budget: usize,
    pub seed: u64,
}

impl CmaConfig {
    pub fn for_dimension(dimension: usize) -> Self {
        Self {
            dimension,
            initial_mean: vec![0.0; dimension],
            initial_sigma: 0.5,
            population: default_population(dimension),
            budget: 10_000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::InvalidConfig("dimension must be > 0".into()));
        }
        if self.initial_mean.len() != self.dimension {
            return Err(Error::InvalidConfig(format!(
                "initial mean has {} entries for dimension {}",
                self.initial_mean.len(),
                self.dimension
            )));
        }
        if self.population < 2 {
            return Err(Error::InvalidConfig("population must be >= 2".into()));
        }
        if !(self.initial_sigma > 0.0 && self.initial_sigma.is_finite()) {
            return Err(Error::InvalidConfig("initial sigma must be > 0".into()));
        }
        Ok(())
    }
}

pub fn default_population(dimension: usize) -> usize {
    4 + (3.0 * (dimension as f64).ln()).floor() as usize
}

/// Optimizer state; create with [`CmaEs::new`], then alternate
/// [`CmaEs::ask`] / [`CmaEs::tell`].
pub struct CmaEs {
    dim: usize,
    lambda: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    expected_norm: f64,

    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,

    generation: usize,
    evaluations: usize,
    best: Option<(Vec<f64>, f64)>,
    rng: ChaCha8Rng,
}

impl CmaEs {
    pub fn new(config: &CmaConfig) -> Result<Self> {
        config.validate()?;
        let n = config.dimension as f64;
        let lambda = config.population;
        let mu = lambda / 2;

        // log-decreasing recombination weights, normalized to sum 1
        let raw: Vec<f64> = (0..mu)
            .map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (n + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (n + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n);
        let c_1 = 2.0 / ((n + 1.3).powi(2) + mu_eff);
        let c_mu =
            (2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0).powi(2) + mu_eff)).min(1.0 - c_1);
        let expected_norm = n.sqrt() * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

        Ok(Self {
            dim: config.dimension,
            lambda,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            expected_norm,
            mean: DVector::from_column_slice(&config.initial_mean),
            sigma: config.initial_sigma,
            cov: DMatrix::identity(config.dimension, config.dimension),
            p_sigma: DVector::zeros(config.dimension),
            p_c: DVector::zeros(config.dimension),
            generation: 0,
            evaluations: 0,
            best: None,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }

    pub fn population(&self) -> usize {
        self.lambda
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Best (candidate, fitness) seen so far.
    pub fn best(&self) -> Option<&(Vec<f64>, f64)> {
        self.best.as_ref()
    }

    #[cfg(test)]
    fn poison_covariance(&mut self, c: DMatrix<f64>) {
        self.cov = c;
    }

    /// Eigendecomposition of the covariance with a positive-definiteness
    /// check; eigenvalues within numerical noise of zero are repaired,
    /// anything worse aborts.
    fn decompose(&self) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let eigen = self.cov.clone().symmetric_eigen();
        let max_eig = eigen.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
        if max_eig <= 0.0 {
            return Err(Error::CovarianceNotPositiveDefinite(max_eig));
        }
        let floor = max_eig * 1e-14;
        let mut eigenvalues = eigen.eigenvalues.clone();
        for v in eigenvalues.iter_mut() {
            if *v < -max_eig * 1e-10 || !v.is_finite() {
                return Err(Error::CovarianceNotPositiveDefinite(*v));
            }
            if *v < floor {
                *v = floor;
            }
        }
        Ok((eigen.eigenvectors, eigenvalues))
    }

    /// Samples lambda candidates from N(mean, sigma^2 C).
    pub fn ask(&mut self) -> Result<Vec<Vec<f64>>> {
        let (b, eigenvalues) = self.decompose()?;
        let d_sqrt: Vec<f64> = eigenvalues.iter().map(|v| v.sqrt()).collect();
        let mut out = Vec::with_capacity(self.lambda);
        for _ in 0..self.lambda {
            let z = DVector::from_fn(self.dim, |_, _| {
                let e: f64 = StandardNormal.sample(&mut self.rng);
                e
            });
            // x = mean + sigma * B * D * z
            let mut scaled = z;
            for (i, s) in scaled.iter_mut().enumerate() {
                *s *= d_sqrt[i];
            }
            let x = &self.mean + self.sigma * &b * scaled;
            out.push(x.iter().copied().collect());
        }
        Ok(out)
    }

    /// Rank-based update from the evaluated generation. Fitness is
    /// maximized; non-finite fitnesses are ranked worst and logged.
    pub fn tell(&mut self, candidates: &[Vec<f64>], fitnesses: &[f64]) -> Result<()> {
        if candidates.len() != self.lambda || fitnesses.len() != self.lambda {
            return Err(Error::FitnessCount {
                got: fitnesses.len().min(candidates.len()),
                expected: self.lambda,
            });
        }
        if fitnesses.iter().any(|f| !f.is_finite()) {
            log::warn!(
                "generation {}: non-finite fitness ranked worst",
                self.generation
            );
        }

        // sort descending, NaN last
        let mut order: Vec<usize> = (0..self.lambda).collect();
        order.sort_by(|&a, &b| {
            let fa = if fitnesses[a].is_finite() {
                fitnesses[a]
            } else {
                f64::NEG_INFINITY
            };
            let fb = if fitnesses[b].is_finite() {
                fitnesses[b]
            } else {
                f64::NEG_INFINITY
            };
            fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal)
        });

        // track best-so-far
        let top = order[0];
        if fitnesses[top].is_finite()
            && self
                .best
                .as_ref()
                .map(|(_, f)| fitnesses[top] > *f)
                .unwrap_or(true)
        {
            self.best = Some((candidates[top].clone(), fitnesses[top]));
        }

        let old_mean = self.mean.clone();
        let mut new_mean = DVector::zeros(self.dim);
        for (w, &idx) in self.weights.iter().zip(order.iter()) {
            new_mean += *w * DVector::from_column_slice(&candidates[idx]);
        }

        // C^{-1/2} (m_new - m_old) / sigma for the step-size path
        let (b, eigenvalues) = self.decompose()?;
        let inv_sqrt = DMatrix::from_fn(self.dim, self.dim, |i, j| {
            let mut acc = 0.0;
            for k in 0..self.dim {
                acc += b[(i, k)] * b[(j, k)] / eigenvalues[k].sqrt();
            }
            acc
        });
        let mean_step = (&new_mean - &old_mean) / self.sigma;

        self.p_sigma = (1.0 - self.c_sigma) * &self.p_sigma
            + (self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff).sqrt() * &inv_sqrt * &mean_step;

        let p_sigma_norm = self.p_sigma.norm();
        let gen_decay = 1.0 - (1.0 - self.c_sigma).powi(2 * (self.generation as i32 + 1));
        let h_sigma = if p_sigma_norm / gen_decay.sqrt()
            < (1.4 + 2.0 / (self.dim as f64 + 1.0)) * self.expected_norm
        {
            1.0
        } else {
            0.0
        };

        self.p_c = (1.0 - self.c_c) * &self.p_c
            + h_sigma * (self.c_c * (2.0 - self.c_c) * self.mu_eff).sqrt() * &mean_step;

        let mut rank_mu = DMatrix::zeros(self.dim, self.dim);
        for (w, &idx) in self.weights.iter().zip(order.iter()) {
            let y = (DVector::from_column_slice(&candidates[idx]) - &old_mean) / self.sigma;
            rank_mu += *w * &y * y.transpose();
        }

        let delta_h = (1.0 - h_sigma) * self.c_c * (2.0 - self.c_c);
        self.cov = (1.0 - self.c_1 - self.c_mu + self.c_1 * delta_h) * &self.cov
            + self.c_1 * &self.p_c * self.p_c.transpose()
            + self.c_mu * rank_mu;
        // symmetrize against floating-point drift
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;

        self.sigma *=
            ((self.c_sigma / self.d_sigma) * (p_sigma_norm / self.expected_norm - 1.0)).exp();
        if !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "step size diverged to {} at generation {}",
                self.sigma, self.generation
            )));
        }

        self.mean = new_mean;
        self.generation += 1;
        self.evaluations += self.lambda;
        Ok(())
    }
}
