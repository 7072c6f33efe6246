//! Discrete mechanics with midpoint quadrature.
//!
//! The discrete Lagrangian L_d(q0, q1) = h·L((q0+q1)/2, (q1−q0)/h) and the
//! discrete forces f⁻ = f⁺ = (h/2)·f_L(midpoint state, midpoint control)
//! generate the forced discrete Euler-Lagrange equations, the forced
//! discrete Legendre transforms and the discrete momentum maps. The
//! slope derivatives D₁L_d, D₂L_d are always taken by dual sweeps on the
//! same code path that evaluates L_d, so there is a single source of truth;
//! the hand-derived formulas appear only in tests as oracles.
//!
//! [`consistency_order`] measures the variational error |L_d − L_d^E| and
//! ‖f_d^± − f_d^{E,±}‖ against a high-accuracy exact-discrete oracle and
//! fits the order of consistency.

use crate::diff::{Dual, Real};
use crate::linalg;
use crate::model::{LagrangianSystem, ModelError};
use thiserror::Error;

mod exact;

pub use exact::{consistency_order, ConsistencyReport, OrderEstimate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscMechError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("trajectory has {got} control samples, expected {expected}")]
    ControlCount { expected: usize, got: usize },
    #[error("oracle integration failed: {0}")]
    Oracle(String),
}

/// The one-stage midpoint quadrature scheme: control point c₁ = 1/2 and
/// weight b₁ = 1. These coefficients satisfy the partitioned Runge-Kutta
/// symplecticity conditions with a = 1/2, b = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidpointScheme {
    pub stages: usize,
    pub control_point: f64,
    pub weight: f64,
}

impl Default for MidpointScheme {
    fn default() -> Self {
        MidpointScheme { stages: 1, control_point: 0.5, weight: 1.0 }
    }
}

/// Discrete trajectory: N+1 node configurations and N midpoint controls.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTrajectory {
    pub h: f64,
    pub q: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

impl DiscreteTrajectory {
    pub fn new(h: f64, q: Vec<Vec<f64>>, u: Vec<Vec<f64>>) -> Self {
        assert!(h > 0.0, "step size must be positive");
        assert!(q.len() >= 2, "need at least one interval");
        assert_eq!(u.len(), q.len() - 1, "one control sample per interval");
        assert!(
            q.iter().flatten().chain(u.iter().flatten()).all(|v| v.is_finite()),
            "trajectory entries must be finite"
        );
        DiscreteTrajectory { h, q, u }
    }

    pub fn intervals(&self) -> usize {
        self.q.len() - 1
    }
}

/// Left and right discrete forces of one interval. Under midpoint
/// quadrature both sides carry the same covector (h/2)·f_L(midpoint).
#[derive(Debug, Clone, PartialEq)]
pub struct StepForces {
    pub f_minus: Vec<f64>,
    pub f_plus: Vec<f64>,
}

/// Which discrete Legendre transform to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
}

/// Midpoint discrete Lagrangian at any scalar depth.
pub fn ld_generic<T: Real>(sys: &LagrangianSystem, q0: &[T], q1: &[T], h: f64) -> T {
    debug_assert!(h != 0.0);
    let n = sys.n;
    let half = T::constant(0.5);
    let inv_h = T::constant(1.0 / h);
    let mut mid = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        mid.push((q0[i] + q1[i]) * half);
        v.push((q1[i] - q0[i]) * inv_h);
    }
    T::constant(h) * sys.lagrangian_generic(&mid, &v)
}

/// Midpoint discrete forces at any scalar depth; both sides are equal.
pub fn forces_generic<T: Real>(
    sys: &LagrangianSystem,
    q0: &[T],
    q1: &[T],
    u_mid: &[T],
    h: f64,
    out: &mut [T],
) {
    debug_assert!(h != 0.0);
    let n = sys.n;
    let half = T::constant(0.5);
    let inv_h = T::constant(1.0 / h);
    let mut mid = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        mid.push((q0[i] + q1[i]) * half);
        v.push((q1[i] - q0[i]) * inv_h);
    }
    sys.force_generic(&mid, &v, u_mid, out);
    let scale = T::constant(0.5 * h);
    for o in out.iter_mut() {
        *o = *o * scale;
    }
}

/// Slope derivative D₁L_d(q0, q1) (with respect to the first argument)
/// computed by a dual sweep one level above `T`.
pub fn d1_ld<T>(sys: &LagrangianSystem, q0: &[T], q1: &[T], h: f64, out: &mut [T])
where
    T: Real,
    Dual<T>: Real,
{
    let zero = T::constant(0.0);
    let mut a: Vec<Dual<T>> = q0.iter().map(|&v| Dual::new(v, zero)).collect();
    let b: Vec<Dual<T>> = q1.iter().map(|&v| Dual::new(v, zero)).collect();
    for i in 0..sys.n {
        a[i].dot = T::constant(1.0);
        let ld = ld_generic(sys, &a, &b, h);
        a[i].dot = zero;
        out[i] = ld.dot;
    }
}

/// Slope derivative D₂L_d(q0, q1) (with respect to the second argument).
pub fn d2_ld<T>(sys: &LagrangianSystem, q0: &[T], q1: &[T], h: f64, out: &mut [T])
where
    T: Real,
    Dual<T>: Real,
{
    let zero = T::constant(0.0);
    let a: Vec<Dual<T>> = q0.iter().map(|&v| Dual::new(v, zero)).collect();
    let mut b: Vec<Dual<T>> = q1.iter().map(|&v| Dual::new(v, zero)).collect();
    for i in 0..sys.n {
        b[i].dot = T::constant(1.0);
        let ld = ld_generic(sys, &a, &b, h);
        b[i].dot = zero;
        out[i] = ld.dot;
    }
}

/// Discrete Lagrangian L_d(q0, q1) = h·L((q0+q1)/2, (q1−q0)/h).
pub fn discrete_lagrangian(sys: &LagrangianSystem, q0: &[f64], q1: &[f64], h: f64) -> f64 {
    ld_generic(sys, q0, q1, h)
}

/// Discrete forces of one interval at plain values.
pub fn discrete_forces(
    sys: &LagrangianSystem,
    q0: &[f64],
    q1: &[f64],
    u_mid: &[f64],
    h: f64,
) -> StepForces {
    let mut f = vec![0.0; sys.n];
    forces_generic(sys, q0, q1, u_mid, h, &mut f);
    StepForces { f_minus: f.clone(), f_plus: f }
}

/// Forced discrete Euler-Lagrange residual at node q:
/// D₂L_d(q_prev, q) + D₁L_d(q, q_next) + f⁺(q_prev, q, u_prev) + f⁻(q, q_next, u).
pub fn del_residual_generic<T>(
    sys: &LagrangianSystem,
    q_prev: &[T],
    q: &[T],
    q_next: &[T],
    u_prev: &[T],
    u: &[T],
    h: f64,
    out: &mut [T],
) where
    T: Real,
    Dual<T>: Real,
{
    let n = sys.n;
    let mut d2 = vec![T::constant(0.0); n];
    let mut d1 = vec![T::constant(0.0); n];
    let mut f_plus = vec![T::constant(0.0); n];
    let mut f_minus = vec![T::constant(0.0); n];
    d2_ld(sys, q_prev, q, h, &mut d2);
    d1_ld(sys, q, q_next, h, &mut d1);
    forces_generic(sys, q_prev, q, u_prev, h, &mut f_plus);
    forces_generic(sys, q, q_next, u, h, &mut f_minus);
    for i in 0..n {
        out[i] = d2[i] + d1[i] + f_plus[i] + f_minus[i];
    }
}

/// [`del_residual_generic`] at plain values.
pub fn del_residual(
    sys: &LagrangianSystem,
    q_prev: &[f64],
    q: &[f64],
    q_next: &[f64],
    u_prev: &[f64],
    u: &[f64],
    h: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; sys.n];
    del_residual_generic(sys, q_prev, q, q_next, u_prev, u, h, &mut out);
    out
}

/// Forced discrete Legendre transform of one interval at any scalar depth.
pub fn dlegendre_generic<T>(
    sys: &LagrangianSystem,
    q0: &[T],
    q1: &[T],
    u_mid: &[T],
    h: f64,
    side: Side,
    out: &mut [T],
) where
    T: Real,
    Dual<T>: Real,
{
    let n = sys.n;
    let mut f = vec![T::constant(0.0); n];
    forces_generic(sys, q0, q1, u_mid, h, &mut f);
    match side {
        Side::Minus => {
            d1_ld(sys, q0, q1, h, out);
            for i in 0..n {
                out[i] = -(out[i] + f[i]);
            }
        }
        Side::Plus => {
            d2_ld(sys, q0, q1, h, out);
            for i in 0..n {
                out[i] = out[i] + f[i];
            }
        }
    }
}

/// Forced discrete Legendre transform at plain values:
/// minus side −D₁L_d − f⁻ gives p₀, plus side D₂L_d + f⁺ gives p₁.
pub fn dlegendre(
    sys: &LagrangianSystem,
    q0: &[f64],
    q1: &[f64],
    u_mid: &[f64],
    h: f64,
    side: Side,
) -> Vec<f64> {
    let mut out = vec![0.0; sys.n];
    dlegendre_generic(sys, q0, q1, u_mid, h, side, &mut out);
    out
}

/// Discrete momentum map: the discrete Legendre output contracted with the
/// generator at q1 (plus side) or q0 (minus side).
pub fn discrete_momentum(
    sys: &LagrangianSystem,
    q0: &[f64],
    q1: &[f64],
    u_mid: &[f64],
    h: f64,
    generator: usize,
    side: Side,
) -> Result<f64, DiscMechError> {
    let gen = sys
        .generators
        .get(generator)
        .ok_or(ModelError::MissingGenerator(generator))?;
    let p = dlegendre(sys, q0, q1, u_mid, h, side);
    let at = match side {
        Side::Plus => q1,
        Side::Minus => q0,
    };
    let xi = crate::diff::eval(gen.as_ref(), at).map_err(ModelError::from)?;
    Ok(linalg::dot(&p, &xi))
}

/// Per-step discrete Noether balance along a trajectory.
#[derive(Debug, Clone)]
pub struct NoetherAudit {
    /// Δ_k — momentum-map increment minus the applied discrete force work.
    pub deltas: Vec<f64>,
    /// Telescoped total Σ Δ_k.
    pub total: f64,
    /// Scale of the node momenta involved, for relative comparisons.
    pub momentum_scale: f64,
}

/// Audit the balance between the change in the discrete momentum map and
/// the applied discrete forces, step by step.
///
/// Node momenta are reconstructed with the discrete Legendre transforms
/// (minus side of the first interval, plus side of the preceding interval
/// afterwards). For a trajectory satisfying the discrete Euler-Lagrange
/// equations with a symmetry-invariant L_d, each Δ_k vanishes to the
/// feasibility tolerance; for trajectories produced by other schemes the
/// per-step residual measures their momentum-balance defect.
pub fn noether_audit(
    sys: &LagrangianSystem,
    trajectory: &DiscreteTrajectory,
    generator: usize,
) -> Result<NoetherAudit, DiscMechError> {
    let gen = sys
        .generators
        .get(generator)
        .ok_or(ModelError::MissingGenerator(generator))?;
    let n_int = trajectory.intervals();
    let h = trajectory.h;

    // Node momenta: p_0 from the minus transform of interval 0, then the
    // plus transform of each interval transports the momentum forward.
    let mut p = Vec::with_capacity(n_int + 1);
    p.push(dlegendre(
        sys,
        &trajectory.q[0],
        &trajectory.q[1],
        &trajectory.u[0],
        h,
        Side::Minus,
    ));
    for k in 0..n_int {
        p.push(dlegendre(
            sys,
            &trajectory.q[k],
            &trajectory.q[k + 1],
            &trajectory.u[k],
            h,
            Side::Plus,
        ));
    }

    let xi: Vec<Vec<f64>> = trajectory
        .q
        .iter()
        .map(|q| crate::diff::eval(gen.as_ref(), q).map_err(ModelError::from))
        .collect::<Result<_, _>>()?;

    let mut deltas = Vec::with_capacity(n_int);
    let mut momentum_scale = 0.0f64;
    for k in 0..n_int {
        let forces = discrete_forces(sys, &trajectory.q[k], &trajectory.q[k + 1], &trajectory.u[k], h);
        let j_next = linalg::dot(&p[k + 1], &xi[k + 1]);
        let j_here = linalg::dot(&p[k], &xi[k]);
        let work = linalg::dot(&forces.f_minus, &xi[k]) + linalg::dot(&forces.f_plus, &xi[k + 1]);
        deltas.push(j_next - j_here - work);
        momentum_scale = momentum_scale.max(j_here.abs()).max(j_next.abs());
    }
    let total = deltas.iter().sum();
    Ok(NoetherAudit { deltas, total, momentum_scale: momentum_scale.max(1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn discrete_lagrangian_examples() {
        // Velocity-only L: h·½((q1−q0)/h)² = 5.0 for q0=0, q1=1, h=0.1.
        let free = problems::free_particle(1);
        assert!((discrete_lagrangian(&free, &[0.0], &[1.0], 0.1) - 5.0).abs() < 1e-12);

        // Harmonic oscillator by hand: h[½v² − ½mid²] = 1·(0.5 − 0.125).
        let ho = harmonic_oscillator();
        assert!((discrete_lagrangian(&ho, &[0.0], &[1.0], 1.0) - 0.375).abs() < 1e-14);

        // Zero difference quotient: L_d = −h·V(q0) for kinetic-minus-potential L.
        let pend = problems::pendulum();
        let q = [0.7];
        let v_q = 1.0 - q[0].cos();
        assert!(
            (discrete_lagrangian(&pend, &q, &q, 0.3) + 0.3 * v_q).abs() < 1e-14
        );
    }

    fn harmonic_oscillator() -> crate::model::LagrangianSystem {
        struct Ho;
        impl crate::diff::Program for Ho {
            fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
                let half = T::constant(0.5);
                out[0] = half * x[1] * x[1] - half * x[0] * x[0];
            }
        }
        struct NoForce;
        impl crate::diff::Program for NoForce {
            fn run<T: Real>(&self, _x: &[T], out: &mut [T]) {
                out[0] = T::constant(0.0);
            }
        }
        crate::model::LagrangianSystem::new(
            1,
            1,
            crate::diff::map(2, 1, Ho),
            crate::diff::map(3, 1, NoForce),
        )
    }

    #[test]
    fn discrete_forces_examples() {
        // Zero control and force linear in u: zero forces.
        let free = problems::free_particle(2);
        let f = discrete_forces(&free, &[0.0, 0.0], &[1.0, 1.0], &[0.0, 0.0], 0.1);
        assert!(linalg::inf_norm(&f.f_minus) == 0.0 && linalg::inf_norm(&f.f_plus) == 0.0);

        // Orbital: f = (0, r u) with r_mid = 1, u = 2, h = 0.1 → (0, 0.1).
        let orbital = problems::orbital_system(&problems::OrbitalParams::default());
        let f = discrete_forces(
            &orbital,
            &[1.0, 0.0],
            &[1.0, std::f64::consts::PI / 8.0],
            &[2.0],
            0.1,
        );
        assert!(f.f_minus[0].abs() < 1e-14 && (f.f_minus[1] - 0.1).abs() < 1e-14);
        assert_eq!(f.f_minus, f.f_plus);

        // Two-link: f = (τ₁−τ₂, τ₂), τ = (1,1), h = 0.2 → (0, 0.1).
        let two_link = problems::two_link_system(&problems::TwoLinkParams::default());
        let f = discrete_forces(&two_link, &[0.1, 0.2], &[0.2, 0.1], &[1.0, 1.0], 0.2);
        assert!(f.f_plus[0].abs() < 1e-14 && (f.f_plus[1] - 0.1).abs() < 1e-14);
    }

    #[test]
    fn del_residual_matches_hand_formula() {
        // Free particle on equally spaced points solves the DEL exactly.
        let free = problems::free_particle(1);
        let r = del_residual(&free, &[0.0], &[1.0], &[2.0], &[0.0], &[0.0], 0.5);
        assert!(r[0].abs() < 1e-12);

        // Harmonic oscillator: the independent symbolic expansion of the
        // midpoint quadrature gives
        // (q1−q0)/h − (q2−q1)/h − (h/4)(q0 + 2q1 + q2).
        let ho = harmonic_oscillator();
        let (q0, q1, q2, h) = (0.0, 0.1, 0.19, 0.1);
        let hand = (q1 - q0) / h - (q2 - q1) / h - h / 4.0 * (q0 + 2.0 * q1 + q2);
        let r = del_residual(&ho, &[q0], &[q1], &[q2], &[0.0], &[0.0], h);
        assert!((r[0] - hand).abs() < 1e-13, "{} vs {hand}", r[0]);
    }

    #[test]
    fn dlegendre_examples() {
        let free = problems::free_particle(1);
        let plus = dlegendre(&free, &[0.0], &[1.0], &[0.0], 0.1, Side::Plus);
        let minus = dlegendre(&free, &[0.0], &[1.0], &[0.0], 0.1, Side::Minus);
        assert!((plus[0] - 10.0).abs() < 1e-10);
        assert!((minus[0] - 10.0).abs() < 1e-10);
    }

    #[test]
    fn momentum_matching_along_feasible_triples() {
        // At a DEL-feasible triple the plus momentum of the first interval
        // equals the minus momentum of the second (the discrete Hamiltonian
        // map rearranged). Build feasible triples with the implicit step.
        let pend = problems::pendulum();
        let orbital = problems::orbital_system(&problems::OrbitalParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let q0 = [rng.gen_range(-0.5..0.5)];
            let q1 = [q0[0] + rng.gen_range(-0.05..0.05)];
            let (u0, u1) = ([rng.gen_range(-0.3..0.3)], [rng.gen_range(-0.3..0.3)]);
            let h = 0.1;
            let q2 = crate::simulate::del_step(&pend, &q0, &q1, &u0, &u1, h).unwrap();
            let plus = dlegendre(&pend, &q0, &q1, &u0, h, Side::Plus);
            let minus = dlegendre(&pend, &q1, &q2, &u1, h, Side::Minus);
            assert!((plus[0] - minus[0]).abs() < 1e-9);
        }
        // Orbital with zero control: the φ momentum transports exactly.
        let h = 0.05;
        let q0 = [1.0, 0.0];
        let q1 = [1.0 - 1.2e-4, 0.05];
        let q2 = crate::simulate::del_step(&orbital, &q0, &q1, &[0.0], &[0.0], h).unwrap();
        let plus = dlegendre(&orbital, &q0, &q1, &[0.0], h, Side::Plus);
        let minus = dlegendre(&orbital, &q1, &q2, &[0.0], h, Side::Minus);
        assert!((plus[1] - minus[1]).abs() < 1e-10);
    }

    #[test]
    fn discrete_momentum_examples() {
        let free = problems::free_particle(1).with_generator(problems::constant_generator(1, 0));
        let j = discrete_momentum(&free, &[0.0], &[1.0], &[0.0], 0.1, 0, Side::Plus).unwrap();
        assert!((j - 10.0).abs() < 1e-10);

        // Unforced limit h → 0 recovers the continuous momentum map of the
        // reconstructed velocity (Richardson comparison at h = 1e-4).
        let params = problems::OrbitalParams::default();
        let orbital = problems::orbital_system(&params);
        let h = 1e-4;
        let (r, phidot) = (1.3, 0.7);
        let q0 = [r, 0.0];
        let q1 = [r, phidot * h];
        let j_disc = discrete_momentum(&orbital, &q0, &q1, &[0.0], h, 0, Side::Plus).unwrap();
        let j_cont = crate::model::momentum_map(&orbital, &q0, &[0.0, phidot], 0).unwrap();
        assert!((j_disc - j_cont).abs() < 1e-6, "{j_disc} vs {j_cont}");

        // Zero-velocity data: only the potential-gradient term remains,
        // −(h/2)·∂V/∂q·ξ on each side.
        let pendg = {
            let p = problems::pendulum();
            p.with_generator(problems::constant_generator(1, 0))
        };
        let q = [0.6];
        let h = 0.2;
        let j = discrete_momentum(&pendg, &q, &q, &[0.0], h, 0, Side::Plus).unwrap();
        let dv = q[0].sin(); // V' = sin q for V = 1 − cos q
        assert!((j + 0.5 * h * dv).abs() < 1e-13, "{j}");
    }

    #[test]
    fn noether_audit_unforced_is_exact() {
        // Unforced rotation-invariant system: all Δ_k vanish to roundoff on
        // a DEL-feasible trajectory.
        let params = problems::OrbitalParams::default();
        let orbital = problems::orbital_system(&params);
        let r = 1.0;
        let rollout = crate::simulate::rollout(
            &orbital,
            &[r, 0.0],
            &[0.0, params.circular_rate(r)],
            &vec![vec![0.0]; 200],
            0.05,
        )
        .unwrap();
        let audit = noether_audit(&orbital, &rollout.trajectory, 0).unwrap();
        for d in &audit.deltas {
            assert!(d.abs() < 1e-11 * audit.momentum_scale);
        }
        assert!(audit.total.abs() < 1e-9 * audit.momentum_scale);
    }

    #[test]
    fn noether_single_step_identity() {
        // One step, constant generator, ξ-invariant L_d: Δ_0 = 0 identically
        // for any (q0, q1), feasible or not.
        let params = problems::OrbitalParams::default();
        let orbital = problems::orbital_system(&params);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let q0 = vec![rng.gen_range(0.6..2.0), rng.gen_range(-1.0..1.0)];
            let q1 = vec![rng.gen_range(0.6..2.0), rng.gen_range(-1.0..1.0)];
            let u = vec![rng.gen_range(-0.5..0.5)];
            let traj = DiscreteTrajectory::new(0.2, vec![q0, q1], vec![u]);
            let audit = noether_audit(&orbital, &traj, 0).unwrap();
            assert!(audit.deltas[0].abs() < 1e-12 * audit.momentum_scale);
        }
    }

    #[test]
    fn midpoint_time_reversal_identities() {
        let pend = problems::pendulum();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let q0 = [rng.gen_range(-1.0..1.0)];
            let q1 = [rng.gen_range(-1.0..1.0)];
            let h = rng.gen_range(0.05..0.5);
            let fwd = discrete_lagrangian(&pend, &q0, &q1, h);
            let bwd = discrete_lagrangian(&pend, &q1, &q0, -h);
            assert!((fwd + bwd).abs() < 1e-13);

            let mut d1 = [0.0];
            let mut d2_rev = [0.0];
            d1_ld(&pend, &q0, &q1, h, &mut d1);
            d2_ld(&pend, &q1, &q0, -h, &mut d2_rev);
            assert!((d2_rev[0] + d1[0]).abs() < 1e-13);
        }
    }
}
