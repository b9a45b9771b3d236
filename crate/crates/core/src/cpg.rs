//! Paired-oscillator CPG networks with neighbourhood coupling.
//!
//! Each hinge i owns an oscillator pair (x_i, y_i) evolving as
//!
//! ```text
//! dy_i/dt = -w_i x_i
//! dx_i/dt =  w_i y_i + sum over neighbours j of w_ij x_j,   w_ji = -w_ij
//! ```
//!
//! Stacking z = (x, y) gives a linear system dz/dt = A z with A
//! skew-symmetric, so the flow conserves |z| exactly and the dynamics stay
//! bounded and periodic. Hinge targets are the x values clamped to [-1, 1];
//! CPGs take no sensory input.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::morphology::{DistanceMatrix, HINGE_COUNT};
use crate::{Error, HingeVector, Result};

/// State dimension of the stacked system z = (x, y).
pub const SYSTEM_DIM: usize = 2 * HINGE_COUNT;

/// Per-weight search domain handed to the optimizers; decoded genomes are
/// clamped to it.
pub const WEIGHT_BOUND: f64 = 2.0;

/// Neighbourhood range: maximum tree distance at which two hinges are
/// coupled. Range 1 would equal range 0 (no hinges are adjacent), so only
/// the even ranges are exposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum CpgRange {
    R0,
    R2,
    R4,
    R6,
}

impl CpgRange {
    pub const ALL: [CpgRange; 4] = [CpgRange::R0, CpgRange::R2, CpgRange::R4, CpgRange::R6];

    pub fn as_u32(self) -> u32 {
        match self {
            CpgRange::R0 => 0,
            CpgRange::R2 => 2,
            CpgRange::R4 => 4,
            CpgRange::R6 => 6,
        }
    }

    /// Genome length: 8 intra weights plus one coupling weight per pair.
    pub fn param_count(self, dm: &DistanceMatrix) -> usize {
        HINGE_COUNT + dm.pairs_within(self.as_u32()).len()
    }
}

impl TryFrom<u32> for CpgRange {
    type Error = Error;
    fn try_from(v: u32) -> Result<Self> {
        match v {
            0 => Ok(CpgRange::R0),
            2 => Ok(CpgRange::R2),
            4 => Ok(CpgRange::R4),
            6 => Ok(CpgRange::R6),
            other => Err(Error::InvalidRange(other)),
        }
    }
}

impl From<CpgRange> for u32 {
    fn from(r: CpgRange) -> u32 {
        r.as_u32()
    }
}

/// Flat CPG genome: 8 intra weights w_i followed by one coupling weight
/// w_ij per neighbourhood pair in canonical (i, j) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpgGenome {
    pub range: CpgRange,
    pub weights: Vec<f64>,
}

impl CpgGenome {
    pub fn new(range: CpgRange, weights: Vec<f64>, dm: &DistanceMatrix) -> Result<Self> {
        let expected = range.param_count(dm);
        if weights.len() != expected {
            return Err(Error::GenomeLength {
                got: weights.len(),
                expected,
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("CPG genome weights"));
        }
        Ok(Self { range, weights })
    }

    pub fn zeros(range: CpgRange, dm: &DistanceMatrix) -> Self {
        Self {
            range,
            weights: vec![0.0; range.param_count(dm)],
        }
    }

    pub fn intra_weights(&self) -> &[f64] {
        &self.weights[..HINGE_COUNT]
    }

    pub fn coupling_weights(&self) -> &[f64] {
        &self.weights[HINGE_COUNT..]
    }

    /// Assembles the skew-symmetric system matrix over z = (x, y).
    pub fn build_system(&self, dm: &DistanceMatrix) -> Result<DMatrix<f64>> {
        let pairs = dm.neighbourhood_pairs(self.range.as_u32())?;
        let expected = HINGE_COUNT + pairs.len();
        if self.weights.len() != expected {
            return Err(Error::GenomeLength {
                got: self.weights.len(),
                expected,
            });
        }
        let mut a = DMatrix::zeros(SYSTEM_DIM, SYSTEM_DIM);
        for i in 0..HINGE_COUNT {
            let w = self.weights[i];
            a[(i, HINGE_COUNT + i)] = w; // dx_i/dt += w_i y_i
            a[(HINGE_COUNT + i, i)] = -w; // dy_i/dt  = -w_i x_i
        }
        for (k, &(i, j)) in pairs.iter().enumerate() {
            let w = self.weights[HINGE_COUNT + k];
            a[(i, j)] = w; // dx_i/dt += w_ij x_j
            a[(j, i)] = -w; // w_ji = -w_ij
        }
        Ok(a)
    }
}

/// Oscillator state: external nodes x (read as hinge targets), internal
/// nodes y, and simulated time.
#[derive(Debug, Clone, PartialEq)]
pub struct CpgState {
    pub x: HingeVector,
    pub y: HingeVector,
    pub t: f64,
}

impl CpgState {
    /// Episode-start state: x = 0, y = 1. The nonzero y guarantees
    /// oscillation onset for any nonzero intra weight, and a fixed init
    /// keeps evaluation deterministic.
    pub fn initial() -> Self {
        Self {
            x: [0.0; HINGE_COUNT],
            y: [1.0; HINGE_COUNT],
            t: 0.0,
        }
    }

    fn to_vec(&self) -> [f64; SYSTEM_DIM] {
        let mut z = [0.0; SYSTEM_DIM];
        z[..HINGE_COUNT].copy_from_slice(&self.x);
        z[HINGE_COUNT..].copy_from_slice(&self.y);
        z
    }

    fn from_vec(z: &[f64; SYSTEM_DIM], t: f64) -> Self {
        let mut s = Self {
            x: [0.0; HINGE_COUNT],
            y: [0.0; HINGE_COUNT],
            t,
        };
        s.x.copy_from_slice(&z[..HINGE_COUNT]);
        s.y.copy_from_slice(&z[HINGE_COUNT..]);
        s
    }

    fn is_finite(&self) -> bool {
        self.x.iter().chain(self.y.iter()).all(|v| v.is_finite()) && self.t.is_finite()
    }
}

fn mat_vec(a: &DMatrix<f64>, z: &[f64; SYSTEM_DIM]) -> [f64; SYSTEM_DIM] {
    let mut out = [0.0; SYSTEM_DIM];
    for (r, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, zc) in z.iter().enumerate() {
            acc += a[(r, c)] * zc;
        }
        *o = acc;
    }
    out
}

/// Advances the oscillator state by `dt` with classic RK4.
///
/// The step is split into substeps sized so that |A|*h stays small; a
/// single RK4 step at the full control period would drift the conserved
/// norm by far more than the 1e-6 budget once weights approach the search
/// bound.
pub fn step(state: &CpgState, a: &DMatrix<f64>, dt: f64) -> Result<CpgState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt must be > 0, got {dt}")));
    }
    if !state.is_finite() {
        return Err(Error::NonFinite("CPG state"));
    }
    let norm_a = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let substeps = ((norm_a * dt / 0.05).ceil() as usize).max(1);
    let h = dt / substeps as f64;

    let mut z = state.to_vec();
    for _ in 0..substeps {
        let k1 = mat_vec(a, &z);
        let mut tmp = z;
        for i in 0..SYSTEM_DIM {
            tmp[i] = z[i] + 0.5 * h * k1[i];
        }
        let k2 = mat_vec(a, &tmp);
        for i in 0..SYSTEM_DIM {
            tmp[i] = z[i] + 0.5 * h * k2[i];
        }
        let k3 = mat_vec(a, &tmp);
        for i in 0..SYSTEM_DIM {
            tmp[i] = z[i] + h * k3[i];
        }
        let k4 = mat_vec(a, &tmp);
        for i in 0..SYSTEM_DIM {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let next = CpgState::from_vec(&z, state.t + dt);
    if !next.is_finite() {
        return Err(Error::NonFinite("CPG state after step"));
    }
    Ok(next)
}

/// Hinge targets: x clamped to [-1, 1]. Open loop; observations are ignored.
pub fn cpg_act(state: &CpgState) -> HingeVector {
    let mut action = [0.0; HINGE_COUNT];
    for (a, x) in action.iter_mut().zip(state.x.iter()) {
        *a = x.clamp(-1.0, 1.0);
    }
    action
}
