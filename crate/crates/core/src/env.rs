//! Deterministic reduced-order locomotion simulator.
//!
//! This is a surrogate, not a physics replica: it preserves the controller
//! interface (8-D observation = hinge positions, 8-D action = hinge targets,
//! clipped to [-1, 1]), the 20 Hz / 10 s episode structure, and the
//! qualitative property that rhythmic out-of-phase hinge motion produces net
//! displacement. Per step:
//!
//! 1. a first-order servo drives each hinge toward its target;
//! 2. forward kinematics place the four feet from hinge angles and segment
//!    lengths (hips yaw the leg in the horizontal plane, knees pitch the
//!    distal segment);
//! 3. feet near the ground grip while raised feet slip (anisotropic
//!    friction): the body is propelled against the weighted mean tangential
//!    foot velocity;
//! 4. body elevation relaxes toward the mean stance-leg extension, with
//!    V_z by finite difference;
//! 5. outputs carry body velocity, elevation, the L2 control norm and an
//!    L2 contact-load proxy (per-foot descent speed into contact).

use serde::{Deserialize, Serialize};

use crate::controller::ControllerGenome;
use crate::morphology::{LimbGeometry, SpiderModel, HINGE_COUNT, LEG_COUNT};
use crate::rewards::{self, RewardKind, StepOutputs};
use crate::{Error, HingeVector, Result};

/// Simulator configuration. All defaults are plain numbers chosen for a
/// hobby-servo-grade quadruped of roughly 0.5 m span; geometry is in meters
/// and seconds so velocity and elevation targets in the rewards are
/// meaningful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Control frequency in Hz.
    pub control_rate: f64,
    /// Episode duration in seconds.
    pub duration: f64,
    /// First-order servo gain toward the target position, 1/s.
    pub servo_gain: f64,
    /// Tangential-velocity transfer for feet in ground contact.
    pub stance_grip: f64,
    /// Tangential-velocity transfer for raised feet (slip).
    pub swing_slip: f64,
    /// Relaxation rate of body elevation toward stance support, 1/s.
    pub settle_rate: f64,
    /// Feet within this height of the ground count as in contact, meters.
    pub contact_tolerance: f64,
    /// Segment lengths.
    pub geometry: LimbGeometry,
    /// Body elevation at the rest pose, meters.
    pub rest_height: f64,
    /// Hip yaw at |action| = 1, radians.
    pub hip_sweep: f64,
    /// Knee pitch offset at |action| = 1, radians.
    pub knee_sweep: f64,
    /// Reserved for stochastic extensions; the dynamics are deterministic
    /// and ignore it.
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            control_rate: 20.0,
            duration: 10.0,
            servo_gain: 10.0,
            stance_grip: 1.0,
            swing_slip: 0.1,
            settle_rate: 10.0,
            contact_tolerance: 0.01,
            geometry: LimbGeometry::default(),
            rest_height: 0.2,
            hip_sweep: std::f64::consts::FRAC_PI_4,
            knee_sweep: 0.6,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.control_rate.is_finite() && self.control_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "control_rate must be > 0, got {}",
                self.control_rate
            )));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "duration must be > 0, got {}",
                self.duration
            )));
        }
        if !(self.rest_height.is_finite()
            && self.rest_height > 0.0
            && self.rest_height < self.geometry.lower_len)
        {
            return Err(Error::InvalidConfig(format!(
                "rest_height {} must lie in (0, lower_len = {})",
                self.rest_height, self.geometry.lower_len
            )));
        }
        let rest_pitch = (self.rest_height / self.geometry.lower_len).asin();
        if rest_pitch - self.knee_sweep <= 0.0
            || rest_pitch + self.knee_sweep >= std::f64::consts::FRAC_PI_2
        {
            return Err(Error::InvalidConfig(format!(
                "knee pitch range [{:.3}, {:.3}] must stay within (0, pi/2)",
                rest_pitch - self.knee_sweep,
                rest_pitch + self.knee_sweep
            )));
        }
        if self.servo_gain <= 0.0 || self.settle_rate <= 0.0 {
            return Err(Error::InvalidConfig(
                "servo_gain and settle_rate must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    /// Episode length in control steps.
    pub fn episode_steps(&self) -> usize {
        (self.duration * self.control_rate).round() as usize
    }

    fn rest_pitch(&self) -> f64 {
        (self.rest_height / self.geometry.lower_len).asin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// Normalized joint coordinates, always in [-1, 1].
    pub hinge_pos: HingeVector,
    /// Realized joint rates, 1/s.
    pub hinge_vel: HingeVector,
    /// Body centre (x, y, z) in meters; z >= 0.
    pub body_pos: [f64; 3],
    /// Body velocity (V_x, V_y, V_z) in m/s.
    pub body_vel: [f64; 3],
    pub step_index: usize,
    /// World-frame foot positions.
    pub foot_pos: [[f64; 3]; 4],
}

impl EnvState {
    /// Observation exposed to controllers: the hinge positions.
    pub fn observation(&self) -> HingeVector {
        self.hinge_pos
    }
}

/// Per-leg kinematics in the body frame.
struct FootFrame {
    /// Horizontal offset of the foot from the body centre.
    xy: [f64; 2],
    /// Depth of the foot below the body plane (always > 0 within the
    /// validated pitch range).
    drop: f64,
}

/// Base leg directions at 45/135/225/315 degrees, stored with exact
/// component symmetry so leg permutations are exact rotations.
const LEG_DIR: [[f64; 2]; LEG_COUNT] = {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [[s, s], [-s, s], [-s, -s], [s, -s]]
};

fn forward_kinematics(hinge_pos: &HingeVector, cfg: &EnvConfig) -> [FootFrame; 4] {
    let g = &cfg.geometry;
    let rest_pitch = cfg.rest_pitch();
    std::array::from_fn(|leg| {
        let hip = hinge_pos[2 * leg];
        let knee = hinge_pos[2 * leg + 1];
        let yaw = hip * cfg.hip_sweep;
        let (sin_yaw, cos_yaw) = yaw.sin_cos();
        let base = LEG_DIR[leg];
        // leg direction = R(yaw) * base
        let dir = [
            cos_yaw * base[0] - sin_yaw * base[1],
            sin_yaw * base[0] + cos_yaw * base[1],
        ];
        let pitch = rest_pitch + knee * cfg.knee_sweep;
        let (sin_p, cos_p) = pitch.sin_cos();
        let reach = g.upper_len + g.lower_len * cos_p;
        FootFrame {
            xy: [
                g.body_radius * base[0] + reach * dir[0],
                g.body_radius * base[1] + reach * dir[1],
            ],
            drop: g.lower_len * sin_p,
        }
    })
}

/// Canonical standing pose: hinges at zero, body at rest height over the
/// origin, all velocities zero. Bitwise deterministic for a given config.
///
/// The elevation is taken from the forward kinematics of the zero pose
/// (equal to `rest_height` up to one rounding of sin(asin(x))), which makes
/// the rest pose an exact fixed point of [`env_step`] under zero actions.
pub fn reset(cfg: &EnvConfig) -> Result<EnvState> {
    cfg.validate()?;
    let hinge_pos = [0.0; HINGE_COUNT];
    let feet = forward_kinematics(&hinge_pos, cfg);
    let body_z = feet[0].drop;
    let foot_pos = std::array::from_fn(|l| [feet[l].xy[0], feet[l].xy[1], body_z - feet[l].drop]);
    Ok(EnvState {
        hinge_pos,
        hinge_vel: [0.0; HINGE_COUNT],
        body_pos: [0.0, 0.0, body_z],
        body_vel: [0.0; 3],
        step_index: 0,
        foot_pos,
    })
}

/// Advances the simulator by one control step. Fully deterministic.
pub fn env_step(
    state: &EnvState,
    action: &HingeVector,
    cfg: &EnvConfig,
) -> Result<(EnvState, StepOutputs)> {
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("action"));
    }
    let dt = cfg.dt();
    let mut act = *action;
    for a in act.iter_mut() {
        *a = a.clamp(-1.0, 1.0);
    }

    // 1. servo toward targets
    let mut hinge_pos = [0.0; HINGE_COUNT];
    let mut hinge_vel = [0.0; HINGE_COUNT];
    for i in 0..HINGE_COUNT {
        let raw = state.hinge_pos[i] + cfg.servo_gain * (act[i] - state.hinge_pos[i]) * dt;
        hinge_pos[i] = raw.clamp(-1.0, 1.0);
        hinge_vel[i] = (hinge_pos[i] - state.hinge_pos[i]) / dt;
    }

    // 2. foot kinematics before and after the joint motion
    let feet_old = forward_kinematics(&state.hinge_pos, cfg);
    let feet_new = forward_kinematics(&hinge_pos, cfg);

    // 3. contact and propulsion
    let z_old = state.body_pos[2];
    let contact: [bool; LEG_COUNT] =
        std::array::from_fn(|l| z_old - feet_new[l].drop <= cfg.contact_tolerance);
    let mut weight_sum = 0.0;
    let mut vx_acc = 0.0;
    let mut vy_acc = 0.0;
    for l in 0..LEG_COUNT {
        let w = if contact[l] {
            cfg.stance_grip
        } else {
            cfg.swing_slip
        };
        let vx_foot = (feet_new[l].xy[0] - feet_old[l].xy[0]) / dt;
        let vy_foot = (feet_new[l].xy[1] - feet_old[l].xy[1]) / dt;
        weight_sum += w;
        vx_acc += w * vx_foot;
        vy_acc += w * vy_foot;
    }
    let (vx, vy) = if weight_sum > 1e-12 {
        (-vx_acc / weight_sum, -vy_acc / weight_sum)
    } else {
        (0.0, 0.0)
    };

    // 4. elevation follows stance support
    let stance_count = contact.iter().filter(|c| **c).count();
    let z_target = if stance_count > 0 {
        contact
            .iter()
            .zip(feet_new.iter())
            .filter(|(c, _)| **c)
            .map(|(_, f)| f.drop)
            .sum::<f64>()
            / stance_count as f64
    } else {
        feet_new.iter().map(|f| f.drop).fold(f64::MIN, f64::max)
    };
    let z_new = z_old + cfg.settle_rate * (z_target - z_old) * dt;
    let vz = (z_new - z_old) / dt;

    let body_pos = [
        state.body_pos[0] + vx * dt,
        state.body_pos[1] + vy * dt,
        z_new,
    ];

    // 5. per-foot normal-load surrogate: descent speed into contact
    let mut load_sq = 0.0;
    for l in 0..LEG_COUNT {
        if contact[l] {
            let foot_z_old = z_old - feet_old[l].drop;
            let foot_z_new = z_new - feet_new[l].drop;
            let descend = -(foot_z_new - foot_z_old) / dt;
            if descend > 0.0 {
                load_sq += descend * descend;
            }
        }
    }
    let contact_norm = load_sq.sqrt();
    let control_norm = act.iter().map(|a| a * a).sum::<f64>().sqrt();

    let foot_pos = std::array::from_fn(|l| {
        [
            body_pos[0] + feet_new[l].xy[0],
            body_pos[1] + feet_new[l].xy[1],
            z_new - feet_new[l].drop,
        ]
    });

    let next = EnvState {
        hinge_pos,
        hinge_vel,
        body_pos,
        body_vel: [vx, vy, vz],
        step_index: state.step_index + 1,
        foot_pos,
    };
    let outputs = StepOutputs {
        velocity: [vx, vy, vz],
        z: z_new,
        control_norm,
        contact_norm,
        dx: vx * dt,
    };
    Ok((next, outputs))
}

/// One recorded control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: f64,
    pub obs: HingeVector,
    pub action: HingeVector,
    pub body_vel: [f64; 3],
    pub body_z: f64,
    pub control_norm: f64,
    pub contact_norm: f64,
    pub foot_pos: [[f64; 3]; 4],
    pub reward: f64,
}

/// Full episode record; `expected_len = duration * control_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub expected_len: usize,
    pub dt: f64,
}

impl EpisodeTrace {
    /// CSV export; column order:
    /// t, obs0..obs7, act0..act7, vx, vy, vz, z, control_norm, contact_norm,
    /// foot0_x, foot0_y, foot0_z, ..., foot3_z, reward.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        write!(w, "t")?;
        for i in 0..HINGE_COUNT {
            write!(w, ",obs{i}")?;
        }
        for i in 0..HINGE_COUNT {
            write!(w, ",act{i}")?;
        }
        write!(w, ",vx,vy,vz,z,control_norm,contact_norm")?;
        for l in 0..LEG_COUNT {
            write!(w, ",foot{l}_x,foot{l}_y,foot{l}_z")?;
        }
        writeln!(w, ",reward")?;
        for s in &self.steps {
            write!(w, "{}", s.t)?;
            for v in s.obs.iter().chain(s.action.iter()) {
                write!(w, ",{v}")?;
            }
            write!(
                w,
                ",{},{},{},{},{},{}",
                s.body_vel[0],
                s.body_vel[1],
                s.body_vel[2],
                s.body_z,
                s.control_norm,
                s.contact_norm
            )?;
            for f in &s.foot_pos {
                write!(w, ",{},{},{}", f[0], f[1], f[2])?;
            }
            writeln!(w, ",{}", s.reward)?;
        }
        Ok(())
    }

    /// Height trajectory of one foot, for gait descriptor fitting.
    pub fn foot_height(&self, leg: usize) -> Vec<f64> {
        self.steps.iter().map(|s| s.foot_pos[leg][2]).collect()
    }
}

/// Runs a full episode: reset followed by `episode_steps` control steps,
/// querying the controller at the control rate. Returns the trace and the
/// summed reward.
pub fn rollout(
    genome: &ControllerGenome,
    reward: RewardKind,
    cfg: &EnvConfig,
) -> Result<(EpisodeTrace, f64)> {
    let model = SpiderModel::new();
    let mut controller = genome.instantiate(&model.hinge_distance())?;
    let mut state = reset(cfg)?;
    let dt = cfg.dt();
    let n = cfg.episode_steps();
    let mut steps = Vec::with_capacity(n);
    let mut total = 0.0;
    for k in 0..n {
        let obs = state.observation();
        let action = controller.act(&obs, dt)?;
        let (next, outputs) = env_step(&state, &action, cfg)?;
        let r = rewards::reward(reward, &outputs);
        total += r;
        steps.push(TraceStep {
            t: k as f64 * dt,
            obs,
            action,
            body_vel: outputs.velocity,
            body_z: outputs.z,
            control_norm: outputs.control_norm,
            contact_norm: outputs.contact_norm,
            foot_pos: next.foot_pos,
            reward: r,
        });
        state = next;
    }
    Ok((
        EpisodeTrace {
            steps,
            expected_len: n,
            dt,
        },
        total,
    ))
}
