//! Benchmark problems and small test systems.
//!
//! Two benchmarks ship with documented constants: a planar low-thrust
//! orbit transfer in polar coordinates and a two-link manipulator swing-up.
//! The pendulum and free particle serve as fixtures for integrator and
//! solver tests.

use crate::diff::{map, Program, Real, SmoothMap};
use crate::model::LagrangianSystem;
use crate::ocp::Ocp;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Parameters of the orbit-transfer benchmark.
///
/// The default uses normalized units (γM = 1, radii 1 → 11, preserving the
/// 1:11 radius ratio of the reference setup); `paper_scale` selects the
/// literal 30 → 330 radii instead.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OrbitalParams {
    pub m: f64,
    pub gamma_m: f64,
    pub r0: f64,
    pub r_t: f64,
    pub revolutions: u32,
}

impl Default for OrbitalParams {
    fn default() -> Self {
        OrbitalParams { m: 1.0, gamma_m: 1.0, r0: 1.0, r_t: 11.0, revolutions: 2 }
    }
}

impl OrbitalParams {
    pub fn paper_scale() -> Self {
        OrbitalParams { m: 1.0, gamma_m: 1.0, r0: 30.0, r_t: 330.0, revolutions: 2 }
    }

    /// Transfer horizon T = d·sqrt(4π²(r⁰+r^T)³/(8γM)).
    pub fn horizon(&self) -> f64 {
        self.revolutions as f64
            * (4.0 * PI * PI * (self.r0 + self.r_t).powi(3) / (8.0 * self.gamma_m)).sqrt()
    }

    /// Angular rate of the circular orbit with radius r.
    pub fn circular_rate(&self, r: f64) -> f64 {
        (self.gamma_m / r.powi(3)).sqrt()
    }
}

/// Parameters of the two-link manipulator benchmark (uniform rods).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TwoLinkParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub j1: f64,
    pub j2: f64,
    pub g: f64,
}

impl Default for TwoLinkParams {
    fn default() -> Self {
        // Uniform rods: J = m l² / 12.
        TwoLinkParams {
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            l2: 1.0,
            j1: 1.0 / 12.0,
            j2: 1.0 / 12.0,
            g: 9.81,
        }
    }
}

struct OrbitalLagrangian {
    m: f64,
    gamma_m: f64,
}

impl Program for OrbitalLagrangian {
    fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
        // x = [r, φ, ṙ, φ̇]; L = ½ m (ṙ² + r² φ̇²) + γMm / r.
        let (r, rdot, phidot) = (x[0], x[2], x[3]);
        let half_m = T::constant(0.5 * self.m);
        let mu = T::constant(self.gamma_m * self.m);
        out[0] = half_m * (rdot * rdot + r * r * phidot * phidot) + mu / r;
    }
}

struct OrbitalForce;

impl Program for OrbitalForce {
    fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
        // Thrust along the direction of motion: f_L = (0, r u).
        let (r, u) = (x[0], x[4]);
        out[0] = T::constant(0.0);
        out[1] = r * u;
    }
}

struct TwoLinkLagrangian {
    p: TwoLinkParams,
}

impl Program for TwoLinkLagrangian {
    fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
        let (t1, t2, w1, w2) = (x[0], x[1], x[2], x[3]);
        let p = &self.p;
        let k = T::constant(0.125 * (p.m1 + 4.0 * p.m2) * p.l1 * p.l1) * w1 * w1
            + T::constant(0.125 * p.m2 * p.l2 * p.l2) * w2 * w2
            + T::constant(0.5 * p.m2 * p.l1 * p.l2) * (t1 - t2).cos() * w1 * w2
            + T::constant(0.5 * p.j1) * w1 * w1
            + T::constant(0.5 * p.j2) * w2 * w2;
        let v = T::constant((0.5 * p.m1 + p.m2) * p.g * p.l1) * t1.sin()
            + T::constant(0.5 * p.m2 * p.g * p.l2) * t2.sin();
        out[0] = k - v;
    }
}

struct TwoLinkForce;

impl Program for TwoLinkForce {
    fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
        // Torques at the base and the joint: f_L = (τ₁ − τ₂, τ₂).
        let (tau1, tau2) = (x[4], x[5]);
        out[0] = tau1 - tau2;
        out[1] = tau2;
    }
}

struct PendulumLagrangian;

impl Program for PendulumLagrangian {
    fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
        let (q, qdot) = (x[0], x[1]);
        out[0] = T::constant(0.5) * qdot * qdot - (T::constant(1.0) - q.cos());
    }
}

struct DirectForce {
    n: usize,
}

impl Program for DirectForce {
    fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
        // f_L = u, one control per configuration component.
        for i in 0..self.n {
            out[i] = x[2 * self.n + i];
        }
    }
}

struct FreeParticleLagrangian {
    n: usize,
}

impl Program for FreeParticleLagrangian {
    fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
        let mut acc = T::constant(0.0);
        for i in 0..self.n {
            let v = x[self.n + i];
            acc = acc + v * v;
        }
        out[0] = T::constant(0.5) * acc;
    }
}

struct ConstantVector {
    n: usize,
    values: Vec<f64>,
}

impl Program for ConstantVector {
    fn run<T: Real>(&self, _x: &[T], out: &mut [T]) {
        for (o, &v) in out.iter_mut().zip(&self.values).take(self.n) {
            *o = T::constant(v);
        }
    }
}

struct ControlEffort {
    n: usize,
    m: usize,
    weight: f64,
}

impl Program for ControlEffort {
    fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
        let mut acc = T::constant(0.0);
        for i in 0..self.m {
            let u = x[2 * self.n + i];
            acc = acc + u * u;
        }
        out[0] = T::constant(self.weight) * acc;
    }
}

/// Constant symmetry generator ξ_Q = e_axis.
pub fn constant_generator(n: usize, axis: usize) -> Arc<dyn SmoothMap> {
    let mut values = vec![0.0; n];
    values[axis] = 1.0;
    map(n, n, ConstantVector { n, values })
}

/// Orbital system in polar coordinates (r, φ) with tangential thrust.
pub fn orbital_system(params: &OrbitalParams) -> LagrangianSystem {
    LagrangianSystem::new(
        2,
        1,
        map(4, 1, OrbitalLagrangian { m: params.m, gamma_m: params.gamma_m }),
        map(5, 2, OrbitalForce),
    )
    .with_generator(constant_generator(2, 1))
    .with_labels(&["r", "phi"], &["u"])
}

/// Two-link manipulator with torques at the base and the joint.
pub fn two_link_system(params: &TwoLinkParams) -> LagrangianSystem {
    LagrangianSystem::new(
        2,
        2,
        map(4, 1, TwoLinkLagrangian { p: params.clone() }),
        map(6, 2, TwoLinkForce),
    )
    .with_labels(&["theta1", "theta2"], &["tau1", "tau2"])
}

/// Pendulum L = ½q̇² − (1 − cos q) with direct torque control.
pub fn pendulum() -> LagrangianSystem {
    LagrangianSystem::new(1, 1, map(2, 1, PendulumLagrangian), map(3, 1, DirectForce { n: 1 }))
        .with_labels(&["q"], &["u"])
}

/// Free particle L = ½‖q̇‖² with one direct force channel per coordinate.
pub fn free_particle(n: usize) -> LagrangianSystem {
    LagrangianSystem::new(
        n,
        n,
        map(2 * n, 1, FreeParticleLagrangian { n }),
        map(3 * n, n, DirectForce { n }),
    )
}

/// The orbit-transfer optimal control problem: minimize ∫u² while moving
/// between circular orbits in a fixed number of revolutions.
///
/// The final angle is pinned to the d-revolution branch, φ(T) = 2πd.
pub fn orbital_transfer(params: &OrbitalParams, intervals: usize) -> Ocp {
    let sys = orbital_system(params);
    let q0 = vec![params.r0, 0.0];
    let qdot0 = vec![0.0, params.circular_rate(params.r0)];
    let q_t = vec![params.r_t, 2.0 * PI * params.revolutions as f64];
    let qdot_t = vec![0.0, params.circular_rate(params.r_t)];
    Ocp::new(
        sys,
        q0,
        qdot0,
        q_t,
        qdot_t,
        map(5, 1, ControlEffort { n: 2, m: 1, weight: 1.0 }),
        params.horizon(),
        intervals,
    )
}

/// The two-link swing-up problem: steer from the hanging equilibrium to the
/// upright one in unit time at minimum control effort ∫½(τ₁² + τ₂²).
pub fn two_link(params: &TwoLinkParams, intervals: usize) -> Ocp {
    let sys = two_link_system(params);
    Ocp::new(
        sys,
        vec![-PI / 2.0, -PI / 2.0],
        vec![0.0, 0.0],
        vec![PI / 2.0, PI / 2.0],
        vec![0.0, 0.0],
        map(6, 1, ControlEffort { n: 2, m: 2, weight: 0.5 }),
        1.0,
        intervals,
    )
}

/// Parameters of the free-particle fixed-endpoint test problem.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FreeParticleParams {
    pub dim: usize,
    pub q0: Vec<f64>,
    pub qdot0: Vec<f64>,
    pub q_t: Vec<f64>,
    pub qdot_t: Vec<f64>,
    pub t_horizon: f64,
}

impl Default for FreeParticleParams {
    fn default() -> Self {
        // Boundary data on a straight line: the optimal control is zero.
        FreeParticleParams {
            dim: 1,
            q0: vec![0.0],
            qdot0: vec![1.0],
            q_t: vec![1.0],
            qdot_t: vec![1.0],
            t_horizon: 1.0,
        }
    }
}

/// Fixed-endpoint free-particle problem with control-effort cost.
pub fn free_particle_transfer(params: &FreeParticleParams, intervals: usize) -> Ocp {
    let n = params.dim;
    let sys = free_particle(n);
    Ocp::new(
        sys,
        params.q0.clone(),
        params.qdot0.clone(),
        params.q_t.clone(),
        params.qdot_t.clone(),
        map(3 * n, 1, ControlEffort { n, m: n, weight: 1.0 }),
        params.t_horizon,
        intervals,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff;
    use crate::model;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orbital_horizon_reduces_to_circular_period() {
        // r⁰ = r^T = r, d = 1 gives the plain circular period 2π√(r³/γM).
        let p = OrbitalParams { r0: 2.0, r_t: 2.0, revolutions: 1, ..Default::default() };
        let period = 2.0 * PI * (2.0f64.powi(3) / p.gamma_m).sqrt();
        assert!((p.horizon() - period).abs() < 1e-12);
    }

    #[test]
    fn orbital_boundary_data_is_circular() {
        let p = OrbitalParams::default();
        let ocp = orbital_transfer(&p, 8);
        assert_eq!(ocp.q0, vec![1.0, 0.0]);
        assert_eq!(ocp.q_t[0], 11.0);
        assert!((ocp.q_t[1] - 4.0 * PI).abs() < 1e-14);
        // Both boundary states satisfy the unforced equations of motion.
        for (q, qdot) in [(&ocp.q0, &ocp.qdot0), (&ocp.q_t, &ocp.qdot_t)] {
            let res =
                model::forced_el_residual(&ocp.sys, q, qdot, &[0.0, 0.0], &[0.0]).unwrap();
            assert!(crate::linalg::inf_norm(&res) < 1e-12);
        }
    }

    #[test]
    fn orbital_lagrangian_is_rotation_invariant() {
        // ⟨∂L/∂q, ξ_Q⟩ = 0 exactly for ξ_Q = (0, 1) with constant generator.
        let sys = orbital_system(&OrbitalParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x = [
                rng.gen_range(0.5..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let grad = diff::gradient(sys.lagrangian.as_ref(), &x).unwrap();
            assert_eq!(grad[1], 0.0);
        }
    }

    #[test]
    fn two_link_kinetic_energy_value() {
        // K at q̇ = (1, 0), q = (0, 0) is ⅛(m₁+4m₂)l₁² + ½J₁.
        let p = TwoLinkParams::default();
        let sys = two_link_system(&p);
        let expected = 0.125 * (p.m1 + 4.0 * p.m2) * p.l1 * p.l1 + 0.5 * p.j1;
        // V(0, 0) = 0, so L = K there.
        let l = sys.lagrangian_value(&[0.0, 0.0], &[1.0, 0.0]);
        assert!((l - expected).abs() < 1e-14);
    }

    #[test]
    fn two_link_boundary_points_are_equilibria() {
        let p = TwoLinkParams::default();
        let sys = two_link_system(&p);
        for q in [[-PI / 2.0, -PI / 2.0], [PI / 2.0, PI / 2.0]] {
            let res = model::forced_el_residual(&sys, &q, &[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0])
                .unwrap();
            assert!(crate::linalg::inf_norm(&res) < 1e-12, "q = {q:?}");
        }
    }

    #[test]
    fn two_link_control_effort() {
        let ocp = two_link(&TwoLinkParams::default(), 4);
        let mut out = [0.0];
        // C(q, q̇, τ) = ½(τ₁² + τ₂²).
        ocp.running_cost.eval_real(&[0.0, 0.0, 0.0, 0.0, 3.0, 4.0], &mut out);
        assert!((out[0] - 12.5).abs() < 1e-14);
    }

    #[test]
    fn free_particle_discrete_dynamics_is_uniform_motion() {
        let sys = free_particle(1);
        let q_next = crate::simulate::del_step(&sys, &[0.0], &[0.1], &[0.0], &[0.0], 0.1).unwrap();
        assert!((q_next[0] - 0.2).abs() < 1e-12);
    }
}
