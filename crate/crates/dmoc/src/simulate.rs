//! Forward variational integration.
//!
//! Given controls, the forced discrete Euler-Lagrange equations are solved
//! step by step with Newton iterations (exact dual-number Jacobians), and
//! node momenta and energies are reconstructed through the forced discrete
//! Legendre transforms.

use crate::diff::{D1, Real};
use crate::discmech::{self, DiscreteTrajectory, Side};
use crate::linalg::{self, Lu, Mat};
use crate::model::{self, LagrangianSystem, ModelError};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:.3e}) at step {step}")]
    NewtonNonConvergence { step: usize, iterations: usize, residual: f64 },
    #[error("{expected} controls required, got {got}")]
    ControlCount { expected: usize, got: usize },
}

/// Result of a rollout: the trajectory plus reconstructed node momenta and
/// energies.
#[derive(Debug, Clone)]
pub struct RolloutResult {
    pub trajectory: DiscreteTrajectory,
    pub momenta: Vec<Vec<f64>>,
    pub energies: Vec<f64>,
}

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_ACCEPT: f64 = 1e-10;
const NEWTON_MAX: usize = 50;

/// Newton solve of residual(q) = 0 in the unknown configuration, with the
/// Jacobian assembled from dual sweeps of the residual closure.
fn newton_solve<R, J>(
    n: usize,
    start: Vec<f64>,
    scale: f64,
    step: usize,
    residual: R,
    jacobian_sweep: J,
) -> Result<Vec<f64>, SimulateError>
where
    R: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Mat,
{
    let mut q = start;
    let mut best = f64::INFINITY;
    for _ in 0..NEWTON_MAX {
        let r = residual(&q);
        let norm = linalg::inf_norm(&r);
        best = best.min(norm);
        if norm <= NEWTON_TOL * scale {
            return Ok(q);
        }
        let jac = jacobian_sweep(&q);
        let lu = Lu::factor(&jac).map_err(|_| ModelError::SingularMass)?;
        let mut rhs = r;
        for v in rhs.iter_mut() {
            *v = -*v;
        }
        let delta = lu.solve(&rhs);
        for i in 0..n {
            q[i] += delta[i];
        }
    }
    let r = residual(&q);
    let norm = linalg::inf_norm(&r);
    if norm <= NEWTON_ACCEPT * scale {
        Ok(q)
    } else {
        Err(SimulateError::NewtonNonConvergence {
            step,
            iterations: NEWTON_MAX,
            residual: norm,
        })
    }
}

/// First configuration step: solve the initial momentum constraint
/// D₂L(q⁰, q̇⁰) + D₁L_d(q0, q1) + f⁻(q0, q1, u) = 0 for q1,
/// starting Newton at q0 + h·q̇0.
pub fn initial_step(
    sys: &LagrangianSystem,
    q0: &[f64],
    qdot0: &[f64],
    u_mid: &[f64],
    h: f64,
) -> Result<Vec<f64>, SimulateError> {
    let n = sys.n;
    let p0 = model::legendre(sys, q0, qdot0)?;
    let scale = linalg::inf_norm(&p0).max(1.0);
    let start: Vec<f64> = q0.iter().zip(qdot0).map(|(q, v)| q + h * v).collect();

    let q0l: Vec<D1> = q0.iter().map(|&v| D1::constant(v)).collect();
    let ul: Vec<D1> = u_mid.iter().map(|&v| D1::constant(v)).collect();

    let residual = |q1: &[f64]| -> Vec<f64> {
        let mut d1 = vec![0.0; n];
        let mut f = vec![0.0; n];
        discmech::d1_ld(sys, q0, q1, h, &mut d1);
        discmech::forces_generic(sys, q0, q1, u_mid, h, &mut f);
        (0..n).map(|i| p0[i] + d1[i] + f[i]).collect()
    };
    let jacobian_sweep = |q1: &[f64]| -> Mat {
        let mut jac = Mat::zeros(n, n);
        let mut q1l: Vec<D1> = q1.iter().map(|&v| D1::constant(v)).collect();
        let mut d1 = vec![D1::constant(0.0); n];
        let mut f = vec![D1::constant(0.0); n];
        for j in 0..n {
            q1l[j].dot = 1.0;
            discmech::d1_ld(sys, &q0l, &q1l, h, &mut d1);
            discmech::forces_generic(sys, &q0l, &q1l, &ul, h, &mut f);
            q1l[j].dot = 0.0;
            for i in 0..n {
                jac[(i, j)] = d1[i].dot + f[i].dot;
            }
        }
        jac
    };
    newton_solve(n, start, scale, 0, residual, jacobian_sweep)
}

/// One forced discrete Euler-Lagrange step: solve the DEL residual at node q
/// for q_next, starting Newton at 2q − q_prev.
pub fn del_step(
    sys: &LagrangianSystem,
    q_prev: &[f64],
    q: &[f64],
    u_prev: &[f64],
    u: &[f64],
    h: f64,
) -> Result<Vec<f64>, SimulateError> {
    del_step_at(sys, q_prev, q, u_prev, u, h, 0)
}

fn del_step_at(
    sys: &LagrangianSystem,
    q_prev: &[f64],
    q: &[f64],
    u_prev: &[f64],
    u: &[f64],
    h: f64,
    step: usize,
) -> Result<Vec<f64>, SimulateError> {
    let n = sys.n;
    // Transported momentum sets the residual scale.
    let p = discmech::dlegendre(sys, q_prev, q, u_prev, h, Side::Plus);
    let scale = linalg::inf_norm(&p).max(1.0);
    let start: Vec<f64> = q.iter().zip(q_prev).map(|(a, b)| 2.0 * a - b).collect();

    let ql: Vec<D1> = q.iter().map(|&v| D1::constant(v)).collect();
    let ul: Vec<D1> = u.iter().map(|&v| D1::constant(v)).collect();

    let residual = |q_next: &[f64]| -> Vec<f64> {
        discmech::del_residual(sys, q_prev, q, q_next, u_prev, u, h)
    };
    // Only the D₁L_d(q, q_next) + f⁻ part depends on the unknown.
    let jacobian_sweep = |q_next: &[f64]| -> Mat {
        let mut jac = Mat::zeros(n, n);
        let mut qnl: Vec<D1> = q_next.iter().map(|&v| D1::constant(v)).collect();
        let mut d1 = vec![D1::constant(0.0); n];
        let mut f = vec![D1::constant(0.0); n];
        for j in 0..n {
            qnl[j].dot = 1.0;
            discmech::d1_ld(sys, &ql, &qnl, h, &mut d1);
            discmech::forces_generic(sys, &ql, &qnl, &ul, h, &mut f);
            qnl[j].dot = 0.0;
            for i in 0..n {
                jac[(i, j)] = d1[i].dot + f[i].dot;
            }
        }
        jac
    };
    newton_solve(n, start, scale, step, residual, jacobian_sweep)
}

/// Chain `initial_step` and `del_step` over all intervals, reconstructing
/// node momenta (plus-side transport) and energies along the way.
pub fn rollout(
    sys: &LagrangianSystem,
    q0: &[f64],
    qdot0: &[f64],
    controls: &[Vec<f64>],
    h: f64,
) -> Result<RolloutResult, SimulateError> {
    let n_intervals = controls.len();
    if n_intervals == 0 {
        return Err(SimulateError::ControlCount { expected: 1, got: 0 });
    }
    let mut q = Vec::with_capacity(n_intervals + 1);
    q.push(q0.to_vec());
    q.push(initial_step(sys, q0, qdot0, &controls[0], h)?);
    for k in 1..n_intervals {
        let next = del_step_at(
            sys,
            &q[k - 1],
            &q[k],
            &controls[k - 1],
            &controls[k],
            h,
            k,
        )?;
        q.push(next);
    }

    let mut momenta = Vec::with_capacity(n_intervals + 1);
    momenta.push(discmech::dlegendre(sys, &q[0], &q[1], &controls[0], h, Side::Minus));
    for k in 0..n_intervals {
        momenta.push(discmech::dlegendre(sys, &q[k], &q[k + 1], &controls[k], h, Side::Plus));
    }

    let mut energies = Vec::with_capacity(n_intervals + 1);
    for (qk, pk) in q.iter().zip(&momenta) {
        let qdot = model::legendre_inverse(sys, qk, pk)?;
        energies.push(model::hamiltonian(sys, qk, &qdot)?);
    }

    let trajectory = DiscreteTrajectory::new(h, q, controls.to_vec());
    Ok(RolloutResult { trajectory, momenta, energies })
}

/// Energy statistics of a rollout: the largest deviation from the initial
/// energy and the least-squares drift slope per step.
pub fn energy_series(result: &RolloutResult) -> (f64, f64) {
    let e = &result.energies;
    let e0 = e[0];
    let max_dev = e.iter().fold(0.0f64, |m, v| m.max((v - e0).abs()));
    let n = e.len() as f64;
    let kbar = (n - 1.0) / 2.0;
    let ebar = e.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, ek) in e.iter().enumerate() {
        let dk = k as f64 - kbar;
        num += dk * (ek - ebar);
        den += dk * dk;
    }
    (max_dev, num / den)
}
