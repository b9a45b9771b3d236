//! Per-foot sinusoid fitting for gait descriptors.
//!
//! Fits f(t) = A sin(w t + phi) + c to a 200-sample foot-height trajectory
//! by nonlinear least squares: a coarse frequency scan (each candidate
//! frequency costs only a 3-parameter linear solve) seeds a
//! Levenberg-Marquardt refinement. Fits violating the descriptor
//! constraints (A < 0.5, |c| < 0.5, w/2pi < 0.25 Hz) are zeroed out, which
//! keeps immobile feet from being described by wild parameter values.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Samples expected per trajectory (10 s at 20 Hz).
pub const EXPECTED_SAMPLES: usize = 200;

const AMPLITUDE_LIMIT: f64 = 0.5;
const OFFSET_LIMIT: f64 = 0.5;
const FREQUENCY_LIMIT_HZ: f64 = 0.25;

/// Canonicalized sinusoid parameters: A >= 0, w >= 0, phi in [-pi, pi).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineFit {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
    pub offset: f64,
}

impl SineFit {
    pub const ZERO: SineFit = SineFit {
        amplitude: 0.0,
        omega: 0.0,
        phase: 0.0,
        offset: 0.0,
    };

    pub fn to_array(self) -> [f64; 4] {
        [self.amplitude, self.omega, self.phase, self.offset]
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t + self.phase).sin() + self.offset
    }

    /// True when the fit satisfies the descriptor constraints.
    pub fn within_constraints(&self) -> bool {
        self.amplitude.abs() < AMPLITUDE_LIMIT
            && self.offset.abs() < OFFSET_LIMIT
            && (self.omega / std::f64::consts::TAU).abs() < FREQUENCY_LIMIT_HZ
    }
}

/// Internal parametrization a sin(wt) + b cos(wt) + c, linear in (a, b, c)
/// at fixed w, which makes the frequency scan cheap and spares LM the
/// phase-wrapping ambiguity.
#[derive(Clone, Copy)]
struct LinForm {
    a: f64,
    b: f64,
    omega: f64,
    c: f64,
}

impl LinForm {
    fn residual_sq(&self, ts: &[f64], ys: &[f64]) -> f64 {
        ts.iter()
            .zip(ys)
            .map(|(&t, &y)| {
                let r =
                    self.a * (self.omega * t).sin() + self.b * (self.omega * t).cos() + self.c - y;
                r * r
            })
            .sum()
    }
}

/// Least-squares (a, b, c) for a fixed frequency via the 3x3 normal
/// equations.
fn linear_fit(omega: f64, ts: &[f64], ys: &[f64]) -> Option<LinForm> {
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for (&t, &y) in ts.iter().zip(ys) {
        let basis = [(omega * t).sin(), (omega * t).cos(), 1.0];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += basis[i] * basis[j];
            }
            atb[i] += basis[i] * y;
        }
    }
    solve3(ata, atb).map(|x| LinForm {
        a: x[0],
        b: x[1],
        omega,
        c: x[2],
    })
}

fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| {
            m[a][col]
                .abs()
                .partial_cmp(&m[b][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in (col + 1)..3 {
            let factor = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..3 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

/// Levenberg-Marquardt on (a, b, w, c).
fn refine(start: LinForm, ts: &[f64], ys: &[f64]) -> LinForm {
    let n = ts.len();
    let mut p = start;
    let mut lambda = 1e-3;
    let mut cost = p.residual_sq(ts, ys);
    for _ in 0..100 {
        // J^T J and J^T r over parameters (a, b, w, c)
        let mut jtj = [[0.0f64; 4]; 4];
        let mut jtr = [0.0f64; 4];
        for k in 0..n {
            let (t, y) = (ts[k], ys[k]);
            let (s, co) = (p.omega * t).sin_cos();
            let r = p.a * s + p.b * co + p.c - y;
            let j = [s, co, t * (p.a * co - p.b * s), 1.0];
            for i in 0..4 {
                for l in 0..4 {
                    jtj[i][l] += j[i] * j[l];
                }
                jtr[i] += j[i] * r;
            }
        }
        let mut damped = jtj;
        for (i, row) in damped.iter_mut().enumerate() {
            row[i] += lambda * jtj[i][i].max(1e-12);
        }
        let Some(delta) = solve4(damped, jtr) else {
            break;
        };
        let trial = LinForm {
            a: p.a - delta[0],
            b: p.b - delta[1],
            omega: p.omega - delta[2],
            c: p.c - delta[3],
        };
        let trial_cost = trial.residual_sq(ts, ys);
        if trial_cost < cost {
            let improvement = cost - trial_cost;
            p = trial;
            cost = trial_cost;
            lambda = (lambda * 0.3).max(1e-12);
            if improvement < 1e-15 * (1.0 + cost) {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e10 {
                break;
            }
        }
    }
    p
}

fn solve4(m: [[f64; 4]; 4], rhs: [f64; 4]) -> Option<[f64; 4]> {
    let mut a = m;
    let mut b = rhs;
    for col in 0..4 {
        let pivot = (col..4).max_by(|&x, &y| {
            a[x][col]
                .abs()
                .partial_cmp(&a[y][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() < 1e-15 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..4 {
            let factor = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in (row + 1)..4 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Converts the linear form to the canonical (A, w, phi, c) quadruple:
/// A >= 0, w >= 0, phi in [-pi, pi); zero-amplitude fits collapse to
/// (0, 0, 0, c).
fn canonicalize(p: LinForm) -> SineFit {
    let amplitude = p.a.hypot(p.b);
    if amplitude < 1e-9 {
        return SineFit {
            amplitude: 0.0,
            omega: 0.0,
            phase: 0.0,
            offset: p.c,
        };
    }
    // a sin(wt) + b cos(wt) = A sin(wt + phi), phi = atan2(b, a)
    let mut omega = p.omega;
    let mut phase = p.b.atan2(p.a);
    if omega < 0.0 {
        // A sin(-wt + phi) = A sin(wt + (pi - phi))
        omega = -omega;
        phase = std::f64::consts::PI - phase;
    }
    phase = phase.rem_euclid(std::f64::consts::TAU);
    if phase >= std::f64::consts::PI {
        phase -= std::f64::consts::TAU;
    }
    SineFit {
        amplitude,
        omega,
        phase,
        offset: p.c,
    }
}

/// Fits one foot-height trajectory sampled at `dt` seconds. Returns the
/// canonicalized parameters, or all zeros when the best fit violates the
/// descriptor constraints.
pub fn fit_foot_sinusoid(samples: &[f64], dt: f64) -> Result<SineFit> {
    if samples.len() != EXPECTED_SAMPLES {
        return Err(Error::FitSampleCount {
            got: samples.len(),
            expected: EXPECTED_SAMPLES,
        });
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("foot trajectory"));
    }
    let ts: Vec<f64> = (0..samples.len()).map(|k| k as f64 * dt).collect();

    // frequency scan over (0, pi * rate / 2]
    let omega_max = std::f64::consts::PI / (2.0 * dt);
    let grid = 512;
    let mut best: Option<(f64, LinForm)> = None;
    for g in 1..=grid {
        let omega = omega_max * g as f64 / grid as f64;
        if let Some(fit) = linear_fit(omega, &ts, samples) {
            let cost = fit.residual_sq(&ts, samples);
            if best.map(|(c, _)| cost < c).unwrap_or(true) {
                best = Some((cost, fit));
            }
        }
    }
    let Some((_, seed)) = best else {
        // all scans degenerate: flat data
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let fit = SineFit {
            amplitude: 0.0,
            omega: 0.0,
            phase: 0.0,
            offset: mean,
        };
        return Ok(if fit.within_constraints() {
            fit
        } else {
            SineFit::ZERO
        });
    };

    let refined = refine(seed, &ts, samples);
    let fit = canonicalize(refined);
    Ok(if fit.within_constraints() {
        fit
    } else {
        SineFit::ZERO
    })
}
