//! Asymmetric coupled single-mass fold model.
//!
//! Each fold is a unit oscillator with a van-der-Pol-type damping term and
//! a shared aerodynamic coupling through the fold velocities:
//!
//! ```text
//! x_l' = v_l
//! v_l' = alpha (v_l + v_r) - beta (1 + x_l^2) v_l - (1 - delta/2) x_l
//! x_r' = v_r
//! v_r' = alpha (v_l + v_r) - beta (1 + x_r^2) v_r - (1 + delta/2) x_r
//! ```
//!
//! delta > 0 makes the right fold stiffer. Time is dimensionless with one
//! oscillation cycle near 2*pi units.

use serde::{Deserialize, Serialize};

use crate::dsp::GlottalFlowSignal;
use crate::error::{Error, Result};

use super::integrate::{integrate_rk4, TrajectorySet};

/// Largest step the one-mass model is integrated with.
pub const ONE_MASS_MAX_DT: f64 = 0.05;

/// Parameters of the coupled single-mass model. `alpha`, `beta` and `delta`
/// are the decision variables of the flow fit; initial conditions and the
/// rest half-width stay fixed during estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneMassParams {
    /// Glottal pressure coupling.
    pub alpha: f64,
    /// Damping / nonlinearity strength, must be positive.
    pub beta: f64,
    /// Left-right stiffness asymmetry.
    pub delta: f64,
    pub x0_l: f64,
    pub v0_l: f64,
    pub x0_r: f64,
    pub v0_r: f64,
    /// Baseline glottal half-width at rest.
    pub rest_gap: f64,
}

impl Default for OneMassParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.32,
            delta: 0.0,
            x0_l: 0.1,
            v0_l: 0.0,
            x0_r: 0.1,
            v0_r: 0.0,
            rest_gap: 0.1,
        }
    }
}

impl OneMassParams {
    pub fn new(alpha: f64, beta: f64, delta: f64) -> Self {
        Self {
            alpha,
            beta,
            delta,
            ..Self::default()
        }
    }

    pub fn initial_state(&self) -> [f64; 4] {
        [self.x0_l, self.v0_l, self.x0_r, self.v0_r]
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [
            self.alpha,
            self.beta,
            self.delta,
            self.x0_l,
            self.v0_l,
            self.x0_r,
            self.v0_r,
            self.rest_gap,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite || self.beta <= 0.0 || self.rest_gap <= 0.0 {
            return Err(Error::InvalidArgument(
                "one-mass params require beta > 0, rest_gap > 0, all finite".into(),
            ));
        }
        Ok(())
    }
}

/// State derivative of the coupled single-mass model.
/// State layout: [x_l, v_l, x_r, v_r].
pub fn one_mass_rhs(state: &[f64], p: &OneMassParams, out: &mut [f64]) {
    let (x_l, v_l, x_r, v_r) = (state[0], state[1], state[2], state[3]);
    // shared coupling term keeps the delta = 0 case arithmetically symmetric
    let vsum = v_l + v_r;
    out[0] = v_l;
    out[1] = p.alpha * vsum - p.beta * (1.0 + x_l * x_l) * v_l - (1.0 - 0.5 * p.delta) * x_l;
    out[2] = v_r;
    out[3] = p.alpha * vsum - p.beta * (1.0 + x_r * x_r) * v_r - (1.0 + 0.5 * p.delta) * x_r;
}

/// Integrate the one-mass model with RK4.
pub fn simulate_one_mass(p: &OneMassParams, dt: f64, n_steps: usize) -> Result<TrajectorySet> {
    p.validate()?;
    if !(dt > 0.0 && dt <= ONE_MASS_MAX_DT) {
        return Err(Error::InvalidArgument(format!(
            "one-mass dt must be in (0, {ONE_MASS_MAX_DT}]"
        )));
    }
    integrate_rk4(
        |s, out| one_mass_rhs(s, p, out),
        &p.initial_state(),
        dt,
        n_steps,
    )
}

/// Specialized recording RK4 for the parameter-estimation hot path: same
/// scheme as [`integrate_rk4`] but with fixed-size state registers, no
/// per-step scratch and direct row-major output.
pub(crate) fn integrate_one_mass_records(
    p: &OneMassParams,
    dt: f64,
    n_steps: usize,
) -> Result<TrajectorySet> {
    p.validate()?;
    let mut flat = Vec::with_capacity((n_steps + 1) * 4);
    let mut s = p.initial_state();
    flat.extend_from_slice(&s);

    let mut k1 = [0.0; 4];
    let mut k2 = [0.0; 4];
    let mut k3 = [0.0; 4];
    let mut k4 = [0.0; 4];
    let mut stage = [0.0; 4];

    for step in 0..n_steps {
        one_mass_rhs(&s, p, &mut k1);
        for i in 0..4 {
            stage[i] = s[i] + 0.5 * dt * k1[i];
        }
        one_mass_rhs(&stage, p, &mut k2);
        for i in 0..4 {
            stage[i] = s[i] + 0.5 * dt * k2[i];
        }
        one_mass_rhs(&stage, p, &mut k3);
        for i in 0..4 {
            stage[i] = s[i] + dt * k3[i];
        }
        one_mass_rhs(&stage, p, &mut k4);
        let mut finite = true;
        for i in 0..4 {
            s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            finite &= s[i].is_finite();
        }
        if !finite {
            let rows = flat.len() / 4;
            let traj = TrajectorySet {
                times: (0..rows).map(|i| i as f64 * dt).collect(),
                states: crate::matrix::Matrix::from_vec(flat, rows, 4),
                dt,
                complete: false,
            };
            return Err(Error::NumericalOverflow {
                step,
                partial: Box::new(traj),
            });
        }
        flat.extend_from_slice(&s);
    }

    Ok(TrajectorySet {
        times: (0..=n_steps).map(|i| i as f64 * dt).collect(),
        states: crate::matrix::Matrix::from_vec(flat, n_steps + 1, 4),
        dt,
        complete: true,
    })
}

/// Raw (unnormalized) glottal flow of a one-mass trajectory:
/// u = max(0, rest_gap + x_l + x_r).
pub(crate) fn raw_flow(traj: &TrajectorySet, rest_gap: f64) -> Vec<f64> {
    (0..traj.len())
        .map(|i| {
            let s = traj.state(i);
            (rest_gap + s[0] + s[2]).max(0.0)
        })
        .collect()
}

/// Glottal flow generated by a one-mass trajectory, clipped at zero
/// (glottal closure) and amplitude-normalized to max 1. The signal's
/// "sample rate" is steps per unit model time, 1/dt.
pub fn model_flow(traj: &TrajectorySet, p: &OneMassParams) -> Result<GlottalFlowSignal> {
    assert_eq!(traj.dim(), 4, "model_flow expects a one-mass trajectory");
    let u = raw_flow(traj, p.rest_gap);
    let peak = u.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Err(Error::DegenerateFlow);
    }
    let flow: Vec<f64> = u.iter().map(|v| v / peak).collect();
    Ok(GlottalFlowSignal::from_flow(flow, 1.0 / traj.dt, true))
}

/// Measure the oscillation period of a one-mass trajectory from upward
/// mean-crossings of x_l over `[t_from, t_to]`. Returns None when fewer
/// than two crossings are found (decayed or non-oscillating trajectory).
pub fn cycle_period(traj: &TrajectorySet, t_from: f64, t_to: f64) -> Option<f64> {
    let i0 = ((t_from / traj.dt).ceil() as usize).min(traj.len().saturating_sub(1));
    let i1 = ((t_to / traj.dt).floor() as usize).min(traj.len().saturating_sub(1));
    if i1 <= i0 + 1 {
        return None;
    }
    let xs: Vec<f64> = (i0..=i1).map(|i| traj.states.get(i, 0)).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;

    let mut crossings = Vec::new();
    for i in 0..xs.len() - 1 {
        let (a, b) = (xs[i] - mean, xs[i + 1] - mean);
        if a < 0.0 && b >= 0.0 {
            let frac = a / (a - b);
            crossings.push((i0 + i) as f64 * traj.dt + frac * traj.dt);
        }
    }
    if crossings.len() < 2 {
        return None;
    }
    let span = crossings.last().unwrap() - crossings.first().unwrap();
    Some(span / (crossings.len() - 1) as f64)
}
