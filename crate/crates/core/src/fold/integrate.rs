//! Classical fixed-step RK4 with full state recording.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Integrated state time series. `states` holds one row per recorded step
/// (including the initial state), `dt` is the uniform step.
#[derive(Debug, Clone)]
pub struct TrajectorySet {
    pub times: Vec<f64>,
    pub states: Matrix,
    pub dt: f64,
    /// False when integration aborted on a non-finite state.
    pub complete: bool,
}

impl TrajectorySet {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.cols()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        self.states.row(i)
    }

    /// One state component over time.
    pub fn component(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.states.get(i, j)).collect()
    }
}

/// One RK4 step. `scratch` must hold 5 slices of the state dimension; the
/// stage slopes k1..k4 are left in the first four on return.
pub fn rk4_step(
    rhs: &impl Fn(&[f64], &mut [f64]),
    state: &[f64],
    dt: f64,
    next: &mut [f64],
    scratch: &mut [Vec<f64>; 5],
) {
    let dim = state.len();
    let [k1, k2, k3, k4, stage] = scratch;

    rhs(state, k1);
    for i in 0..dim {
        stage[i] = state[i] + 0.5 * dt * k1[i];
    }
    rhs(stage, k2);
    for i in 0..dim {
        stage[i] = state[i] + 0.5 * dt * k2[i];
    }
    rhs(stage, k3);
    for i in 0..dim {
        stage[i] = state[i] + dt * k3[i];
    }
    rhs(stage, k4);
    for i in 0..dim {
        next[i] = state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrate `n_steps` RK4 steps from `state0`, recording every state
/// including the initial one. A non-finite state aborts the run; the error
/// carries the partial trajectory flagged incomplete.
pub fn integrate_rk4(
    rhs: impl Fn(&[f64], &mut [f64]),
    state0: &[f64],
    dt: f64,
    n_steps: usize,
) -> Result<TrajectorySet> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("dt must be positive".into()));
    }
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
    }
    if state0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite initial state".into()));
    }

    let dim = state0.len();
    let mut states = Matrix::zeros(n_steps + 1, dim);
    states.row_mut(0).copy_from_slice(state0);
    let mut scratch = [
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
    ];

    let mut current = state0.to_vec();
    let mut next = vec![0.0; dim];
    for step in 0..n_steps {
        rk4_step(&rhs, &current, dt, &mut next, &mut scratch);
        if next.iter().any(|v| !v.is_finite()) {
            let mut partial = Matrix::zeros(step + 1, dim);
            for i in 0..=step {
                partial.row_mut(i).copy_from_slice(states.row(i));
            }
            let traj = TrajectorySet {
                times: (0..=step).map(|i| i as f64 * dt).collect(),
                states: partial,
                dt,
                complete: false,
            };
            return Err(Error::NumericalOverflow {
                step,
                partial: Box::new(traj),
            });
        }
        states.row_mut(step + 1).copy_from_slice(&next);
        std::mem::swap(&mut current, &mut next);
    }

    Ok(TrajectorySet {
        times: (0..=n_steps).map(|i| i as f64 * dt).collect(),
        states,
        dt,
        complete: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(state: &[f64], out: &mut [f64]) {
        out[0] = state[1];
        out[1] = -state[0];
    }

    #[test]
    fn harmonic_full_period() {
        // n * dt = 2*pi exactly so the analytic solution returns to x = 1.
        let n = 628;
        let dt = 2.0 * std::f64::consts::PI / n as f64;
        let traj = integrate_rk4(harmonic, &[1.0, 0.0], dt, n).unwrap();
        assert_eq!(traj.len(), n + 1);
        assert!((traj.state(n)[0] - 1.0).abs() < 1e-6);
        assert!(traj.state(n)[1].abs() < 1e-6);
    }

    #[test]
    fn fourth_order_convergence() {
        let err_at = |n: usize| {
            let dt = 2.0 * std::f64::consts::PI / n as f64;
            let traj = integrate_rk4(harmonic, &[1.0, 0.0], dt, n).unwrap();
            let mut max_err: f64 = 0.0;
            for i in 0..=n {
                let t = i as f64 * dt;
                let e = (traj.state(i)[0] - t.cos()).abs();
                max_err = max_err.max(e);
            }
            max_err
        };
        let ratio = err_at(400) / err_at(800);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn single_step_bookkeeping() {
        let traj = integrate_rk4(harmonic, &[1.0, 0.0], 0.01, 1).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj.state(0), &[1.0, 0.0]);
    }

    #[test]
    fn overflow_aborts_with_partial() {
        // dx/dt = x^2 blows up in finite time from x0 = 1 at t = 1.
        let blow = |s: &[f64], out: &mut [f64]| {
            out[0] = s[0] * s[0];
        };
        let err = integrate_rk4(blow, &[1.0], 0.05, 1000).unwrap_err();
        match err {
            Error::NumericalOverflow { partial, .. } => {
                assert!(!partial.complete);
                assert!(partial.len() >= 1);
                assert!(partial.state(partial.len() - 1)[0].is_finite());
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
