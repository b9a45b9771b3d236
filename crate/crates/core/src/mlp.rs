//! Feed-forward controllers with depth d in {0, 1, 2} and width w in
//! {1, 2, 4, ..., 128}, stored as a flat parameter vector.
//!
//! Two variants share the layout machinery:
//! - plain: a deterministic network for gradient-free training;
//! - actor-critic: the same actor plus a state-independent log-std vector
//!   and an independent critic of matching depth/width, for PPO.
//!
//! Hidden layers use tanh; the output layer is linear and the resulting
//! hinge targets are clamped to [-1, 1]. During training the actor output
//! parameterizes a diagonal Gaussian, which collapses to the identity for
//! deterministic evaluation.
//!
//! Flat layout: actor layers (weights row-major, then biases, per layer),
//! then the 8-entry log-std vector and the critic layers when actor-critic.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::morphology::HINGE_COUNT;
use crate::{Error, HingeVector, Result};

pub const OBS_DIM: usize = HINGE_COUNT;
pub const ACT_DIM: usize = HINGE_COUNT;

pub const SUPPORTED_WIDTHS: [u32; 8] = [1, 2, 4, 8, 16, 32, 64, 128];

const LN_TWO_PI: f64 = 1.837877066409345483560659472811;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    /// Hidden layer count, 0..=2.
    pub depth: u32,
    /// Hidden layer width; ignored (and stored as 0) when depth = 0.
    pub width: u32,
    /// Adds the Gaussian head and the independent critic.
    pub actor_critic: bool,
}

impl MlpArchitecture {
    pub fn new(depth: u32, width: u32, actor_critic: bool) -> Result<Self> {
        let valid = match depth {
            0 => true,
            1 | 2 => SUPPORTED_WIDTHS.contains(&width),
            _ => false,
        };
        if !valid {
            return Err(Error::InvalidArchitecture { depth, width });
        }
        Ok(Self {
            depth,
            width: if depth == 0 { 0 } else { width },
            actor_critic,
        })
    }

    /// Total number of optimized parameters.
    ///
    /// Plain: 72 / 17w+8 / (18+w)w+8 for depths 0/1/2.
    /// Actor-critic: 89 / 27w+17 / (29+2w)w+17.
    pub fn param_count(&self) -> usize {
        let w = self.width as usize;
        let actor = match self.depth {
            0 => 72,
            1 => 17 * w + 8,
            _ => (18 + w) * w + 8,
        };
        if !self.actor_critic {
            return actor;
        }
        let critic = match self.depth {
            0 => OBS_DIM + 1,
            1 => 10 * w + 1,
            _ => w * w + 11 * w + 1,
        };
        actor + ACT_DIM + critic
    }

    /// Sub-architecture label, e.g. "m0_0" or "m2_8".
    pub fn label(&self) -> String {
        format!("m{}_{}", self.depth, self.width)
    }

    fn hidden_dims(&self) -> Vec<usize> {
        (0..self.depth).map(|_| self.width as usize).collect()
    }
}

/// One dense layer's location inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerShape {
    pub inp: usize,
    pub out: usize,
    pub weight_off: usize,
    pub bias_off: usize,
}

impl LayerShape {
    fn len(&self) -> usize {
        self.inp * self.out + self.out
    }
}

fn layout(dims: &[usize], mut offset: usize) -> (Vec<LayerShape>, usize) {
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for k in 0..dims.len() - 1 {
        let shape = LayerShape {
            inp: dims[k],
            out: dims[k + 1],
            weight_off: offset,
            bias_off: offset + dims[k] * dims[k + 1],
        };
        offset += shape.len();
        layers.push(shape);
    }
    (layers, offset)
}

pub(crate) fn actor_layout(arch: &MlpArchitecture) -> Vec<LayerShape> {
    let mut dims = vec![OBS_DIM];
    dims.extend(arch.hidden_dims());
    dims.push(ACT_DIM);
    layout(&dims, 0).0
}

/// Offset of the log-std vector (actor-critic layouts only).
pub(crate) fn log_std_offset(arch: &MlpArchitecture) -> usize {
    let dims: Vec<usize> = std::iter::once(OBS_DIM)
        .chain(arch.hidden_dims())
        .chain(std::iter::once(ACT_DIM))
        .collect();
    layout(&dims, 0).1
}

pub(crate) fn critic_layout(arch: &MlpArchitecture) -> Vec<LayerShape> {
    let mut dims = vec![OBS_DIM];
    dims.extend(arch.hidden_dims());
    dims.push(1);
    layout(&dims, log_std_offset(arch) + ACT_DIM).0
}

/// Dense forward pass over a layer stack; tanh on all but the last layer.
/// When `cache` is provided, post-activation values of every layer input
/// are recorded for backpropagation.
pub(crate) fn forward(
    params: &[f64],
    layers: &[LayerShape],
    input: &[f64],
    mut cache: Option<&mut Vec<Vec<f64>>>,
) -> Vec<f64> {
    let mut current = input.to_vec();
    if let Some(c) = cache.as_deref_mut() {
        c.clear();
        c.push(current.clone());
    }
    for (k, layer) in layers.iter().enumerate() {
        let mut next = vec![0.0; layer.out];
        for (o, n) in next.iter_mut().enumerate() {
            let row =
                &params[layer.weight_off + o * layer.inp..layer.weight_off + (o + 1) * layer.inp];
            let mut acc = params[layer.bias_off + o];
            for (wi, xi) in row.iter().zip(current.iter()) {
                acc += wi * xi;
            }
            *n = acc;
        }
        if k + 1 < layers.len() {
            for v in next.iter_mut() {
                *v = v.tanh();
            }
        }
        if let Some(c) = cache.as_deref_mut() {
            c.push(next.clone());
        }
        current = next;
    }
    current
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpGenome {
    #[serde(flatten)]
    pub arch: MlpArchitecture,
    pub params: Vec<f64>,
}

impl MlpGenome {
    pub fn new(arch: MlpArchitecture, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::GenomeLength {
                got: params.len(),
                expected: arch.param_count(),
            });
        }
        Ok(Self { arch, params })
    }

    pub fn zeros(arch: MlpArchitecture) -> Self {
        Self {
            params: vec![0.0; arch.param_count()],
            arch,
        }
    }

    /// Actor forward pass returning the unclamped Gaussian mean.
    pub fn actor_mean(&self, obs: &[f64]) -> Result<HingeVector> {
        if obs.len() != OBS_DIM {
            return Err(Error::ObservationDim {
                got: obs.len(),
                expected: OBS_DIM,
            });
        }
        let out = forward(&self.params, &actor_layout(&self.arch), obs, None);
        let mut mean = [0.0; ACT_DIM];
        mean.copy_from_slice(&out);
        Ok(mean)
    }

    /// Deterministic action: clamp(mean, -1, 1). Identity head, no rng.
    pub fn act_deterministic(&self, obs: &[f64]) -> Result<HingeVector> {
        let mut a = self.actor_mean(obs)?;
        for v in a.iter_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
        Ok(a)
    }

    /// Stochastic action: mean + exp(log_std) * eps, eps ~ N(0, I), then
    /// clamp for the environment. Returns (clamped action, raw sample,
    /// log-probability of the raw sample).
    pub fn act_stochastic<R: Rng>(
        &self,
        obs: &[f64],
        rng: &mut R,
    ) -> Result<(HingeVector, HingeVector, f64)> {
        if !self.arch.actor_critic {
            return Err(Error::NotActorCritic("stochastic action"));
        }
        let mean = self.actor_mean(obs)?;
        let log_std = self.log_std();
        let mut raw = [0.0; ACT_DIM];
        for i in 0..ACT_DIM {
            let eps: f64 = StandardNormal.sample(rng);
            raw[i] = mean[i] + log_std[i].exp() * eps;
        }
        let lp = gaussian_log_prob(&mean, log_std, &raw);
        let mut clamped = raw;
        for v in clamped.iter_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
        Ok((clamped, raw, lp))
    }

    /// State-independent log standard deviations (actor-critic only).
    pub fn log_std(&self) -> &[f64] {
        debug_assert!(self.arch.actor_critic);
        let off = log_std_offset(&self.arch);
        &self.params[off..off + ACT_DIM]
    }

    /// Critic forward pass: scalar state value.
    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        if !self.arch.actor_critic {
            return Err(Error::NotActorCritic("value"));
        }
        if obs.len() != OBS_DIM {
            return Err(Error::ObservationDim {
                got: obs.len(),
                expected: OBS_DIM,
            });
        }
        Ok(forward(&self.params, &critic_layout(&self.arch), obs, None)[0])
    }
}

/// Diagonal Gaussian log-density of `sample` under (mean, exp(log_std)).
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], sample: &[f64]) -> f64 {
    let mut lp = 0.0;
    for i in 0..mean.len() {
        let z = (sample[i] - mean[i]) / log_std[i].exp();
        lp += -0.5 * z * z - log_std[i] - 0.5 * LN_TWO_PI;
    }
    lp
}

/// Closed-form entropy of the diagonal Gaussian policy:
/// sum_i (log_std_i + 0.5 ln(2 pi e)).
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 * (LN_TWO_PI + 1.0)).sum()
}

/// Orthogonal-style weight initialization for PPO genomes.
///
/// Hidden layers use gain sqrt(2), the policy head 0.01, the value head
/// 1.0; biases and log-std start at 0. This is the documented harness
/// convention; the source method leaves initialization unspecified.
pub fn init_actor_critic<R: Rng>(arch: MlpArchitecture, rng: &mut R) -> Result<MlpGenome> {
    if !arch.actor_critic {
        return Err(Error::NotActorCritic("PPO initialization"));
    }
    let mut genome = MlpGenome::zeros(arch);
    let actor = actor_layout(&arch);
    let critic = critic_layout(&arch);
    for (layers, head_gain) in [(&actor, 0.01), (&critic, 1.0)] {
        for (k, layer) in layers.iter().enumerate() {
            let gain = if k + 1 < layers.len() {
                std::f64::consts::SQRT_2
            } else {
                head_gain
            };
            let w = orthogonal(layer.out, layer.inp, gain, rng);
            genome.params[layer.weight_off..layer.weight_off + layer.out * layer.inp]
                .copy_from_slice(&w);
        }
    }
    Ok(genome)
}

/// Row-major (rows x cols) orthogonal matrix scaled by `gain`.
fn orthogonal<R: Rng>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    use nalgebra::DMatrix;
    let transpose = rows < cols;
    let (r, c) = if transpose {
        (cols, rows)
    } else {
        (rows, cols)
    };
    let m: DMatrix<f64> = DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng));
    let qr = m.qr();
    let mut q = qr.q();
    let rr = qr.r();
    // sign-fix against the R diagonal so the factorization is unique
    for j in 0..c {
        if rr[(j, j)] < 0.0 {
            for i in 0..r {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let v = if transpose { q[(j, i)] } else { q[(i, j)] };
            out[i * cols + j] = gain * v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn arch(d: u32, w: u32, ac: bool) -> MlpArchitecture {
        MlpArchitecture::new(d, w, ac).unwrap()
    }

    fn random_genome(a: MlpArchitecture, rng: &mut ChaCha8Rng) -> MlpGenome {
        let params = (0..a.param_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        MlpGenome::new(a, params).unwrap()
    }

    /// Independent forward-pass oracle: rebuilds each layer as an nalgebra
    /// matrix straight from the documented flat layout and multiplies.
    fn oracle_forward(genome: &MlpGenome, obs: &[f64], critic: bool) -> Vec<f64> {
        use nalgebra::{DMatrix, DVector};
        let w = genome.arch.width as usize;
        let mut dims = vec![8usize];
        for _ in 0..genome.arch.depth {
            dims.push(w);
        }
        dims.push(if critic { 1 } else { 8 });
        let mut off = 0;
        if critic {
            // skip the actor block and the log-std vector
            let mut adims = dims.clone();
            *adims.last_mut().unwrap() = 8;
            for k in 0..adims.len() - 1 {
                off += adims[k] * adims[k + 1] + adims[k + 1];
            }
            off += 8;
        }
        let mut x = DVector::from_column_slice(obs);
        for k in 0..dims.len() - 1 {
            let (ni, no) = (dims[k], dims[k + 1]);
            let wmat = DMatrix::from_row_slice(no, ni, &genome.params[off..off + ni * no]);
            off += ni * no;
            let b = DVector::from_column_slice(&genome.params[off..off + no]);
            off += no;
            x = wmat * x + b;
            if k + 1 < dims.len() - 1 {
                x = x.map(f64::tanh);
            }
        }
        x.iter().copied().collect()
    }

    #[test]
    fn param_counts_match_tables() {
        // plain column
        assert_eq!(arch(0, 0, false).param_count(), 72);
        for w in SUPPORTED_WIDTHS {
            assert_eq!(arch(1, w, false).param_count(), (17 * w + 8) as usize);
            assert_eq!(arch(2, w, false).param_count(), ((18 + w) * w + 8) as usize);
        }
        // actor-critic column
        assert_eq!(arch(0, 0, true).param_count(), 89);
        for w in SUPPORTED_WIDTHS {
            assert_eq!(arch(1, w, true).param_count(), (27 * w + 17) as usize);
            assert_eq!(
                arch(2, w, true).param_count(),
                ((29 + 2 * w) * w + 17) as usize
            );
        }
        // the two values called out in the text
        assert_eq!(arch(2, 8, false).param_count(), 216);
        assert_eq!(arch(2, 64, true).param_count(), 10065);
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(MlpArchitecture::new(3, 8, false).is_err());
        assert!(MlpArchitecture::new(1, 3, false).is_err());
        assert!(MlpArchitecture::new(2, 0, true).is_err());
    }

    #[test]
    fn zero_genome_acts_zero() {
        let g = MlpGenome::zeros(arch(1, 4, false));
        let obs = [0.3; 8];
        assert_eq!(g.act_deterministic(&obs).unwrap(), [0.0; 8]);
    }

    #[test]
    fn identity_perceptron() {
        let mut g = MlpGenome::zeros(arch(0, 0, false));
        for i in 0..8 {
            g.params[i * 8 + i] = 1.0;
        }
        let mut obs = [0.0; 8];
        obs[3] = 1.0;
        assert_eq!(g.act_deterministic(&obs).unwrap(), obs);
    }

    #[test]
    fn forward_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (d, w) in [(0, 0), (1, 2), (1, 16), (2, 4), (2, 8)] {
            let g = random_genome(arch(d, w, false), &mut rng);
            let obs: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mine = g.actor_mean(&obs).unwrap();
            let oracle = oracle_forward(&g, &obs, false);
            for i in 0..8 {
                assert!((mine[i] - oracle[i]).abs() < 1e-12, "d={d} w={w} i={i}");
            }
        }
    }

    #[test]
    fn critic_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (d, w) in [(0, 0), (1, 2), (2, 8)] {
            let g = random_genome(arch(d, w, true), &mut rng);
            let obs: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mine = g.value(&obs).unwrap();
            let oracle = oracle_forward(&g, &obs, true)[0];
            assert!((mine - oracle).abs() < 1e-12, "d={d} w={w}");
        }
    }

    #[test]
    fn zero_critic_is_zero_and_d0_critic_is_affine() {
        let g = MlpGenome::zeros(arch(0, 0, true));
        assert_eq!(g.value(&[0.5; 8]).unwrap(), 0.0);

        // d = 0 critic has exactly 9 parameters: w . obs + b
        let mut g = MlpGenome::zeros(arch(0, 0, true));
        let off = log_std_offset(&g.arch) + 8;
        assert_eq!(g.params.len() - off, 9);
        for (k, p) in g.params[off..off + 8].iter_mut().enumerate() {
            *p = (k + 1) as f64 * 0.1;
        }
        g.params[off + 8] = -0.25;
        let obs = [0.5, -0.5, 1.0, 0.0, 0.25, -1.0, 0.75, 0.125];
        let expected: f64 = obs
            .iter()
            .enumerate()
            .map(|(k, o)| (k + 1) as f64 * 0.1 * o)
            .sum::<f64>()
            - 0.25;
        assert!((g.value(&obs).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn plain_genome_has_no_gaussian_head() {
        let g = MlpGenome::zeros(arch(1, 2, false));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(g.act_stochastic(&[0.0; 8], &mut rng).is_err());
        assert!(g.value(&[0.0; 8]).is_err());
    }

    #[test]
    fn deterministic_ignores_rng_and_small_std_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = random_genome(arch(1, 4, true), &mut rng);
        let obs = [0.1; 8];
        let det = g.act_deterministic(&obs).unwrap();
        // push log-std towards -inf: samples collapse onto the mean
        let off = log_std_offset(&g.arch);
        for p in g.params[off..off + 8].iter_mut() {
            *p = -40.0;
        }
        let (sample, _, _) = g.act_stochastic(&obs, &mut rng).unwrap();
        for i in 0..8 {
            assert!((sample[i] - det[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn actions_always_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let g = random_genome(arch(2, 8, true), &mut rng);
            let obs: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            for v in g.act_deterministic(&obs).unwrap() {
                assert!((-1.0..=1.0).contains(&v));
            }
            let (a, _, _) = g.act_stochastic(&obs, &mut rng).unwrap();
            for v in a {
                assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn entropy_closed_form() {
        let log_std = [0.0, -0.5, 0.25, 0.0, 0.1, -1.0, 0.0, 0.5];
        let expected: f64 = log_std
            .iter()
            .map(|ls| ls + 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln())
            .sum();
        assert!((gaussian_entropy(&log_std) - expected).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_init_shapes_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let g = init_actor_critic(arch(2, 8, true), &mut rng).unwrap();
        assert_eq!(g.params.len(), g.arch.param_count());
        // log-std init to zero
        assert!(g.log_std().iter().all(|v| *v == 0.0));
        // first hidden layer rows orthonormal up to the sqrt(2) gain
        let layers = actor_layout(&g.arch);
        let l = layers[0];
        for o in 0..l.out {
            let row = &g.params[l.weight_off + o * l.inp..l.weight_off + (o + 1) * l.inp];
            let norm: f64 = row.iter().map(|v| v * v).sum::<f64>();
            assert!((norm - 2.0).abs() < 1e-9, "row norm^2 {norm}");
        }
        // biases zero
        assert!(g.params[l.bias_off..l.bias_off + l.out]
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn genome_json_round_trip_text_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let g = random_genome(arch(2, 4, true), &mut rng);
        let js = serde_json::to_string(&g).unwrap();
        let back: MlpGenome = serde_json::from_str(&js).unwrap();
        // serde_json emits shortest round-trip decimals: bit-exact restore
        assert_eq!(back, g);
        assert!(js.contains("\"depth\":2"));
        assert!(js.contains("\"actor_critic\":true"));
    }
}
