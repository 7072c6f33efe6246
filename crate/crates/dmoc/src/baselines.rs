//! Collocation baselines: implicit midpoint on the Hamiltonian (q, p) form
//! and on the tangent-space (q, v) form, emitted as the same structured NLP
//! type so the SQP solver and the comparison tooling treat all three
//! transcriptions uniformly.
//!
//! For the one-stage midpoint scheme the internal collocation stage is the
//! node average, so the stage equations fold analytically into node form:
//!
//! - Hamiltonian form: (p_k + p_{k+1})/2 = ∂L/∂q̇(M_k, Δq_k/h) and
//!   (p_{k+1} − p_k)/h = ∂L/∂q(M_k, Δq_k/h) + f_L(M_k, Δq_k/h, u_k),
//!   which has exactly the solution set of the forced implicit-midpoint
//!   discretization of Hamilton's equations (the Legendre transform is a
//!   bijection between stage velocity and stage momentum).
//! - Tangent-space form: (q_{k+1} − q_k)/h = V̄_k and
//!   (v_{k+1} − v_k)/h = a(M_k, V̄_k, u_k), with the acceleration obtained
//!   by a mass-matrix solve of the forced Euler-Lagrange equations.

use crate::diff::{self, Real, SmoothMap};
use crate::linalg;
use crate::model::{self, LagrangianSystem};
use crate::ocp::{Block, Nlp, Ocp, OcpError, RowLabel, Term, VarGroup, VarKind, VariableLayout};
use crate::sqp::SqpResult;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("instances discretize different interval counts ({0} vs {1})")]
    MismatchedIntervals(usize, usize),
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
}

/// Hamiltonian side of a regular Lagrangian system: H(q, p) and the
/// Hamiltonian control force f_H(q, p, u) = f_L(q, q̇(q, p), u).
///
/// The Legendre inversion inside the callbacks runs Newton on the value
/// channel and then re-runs the correction in dual arithmetic, which makes
/// H differentiable up to second order.
pub struct HamiltonianForm {
    pub sys: LagrangianSystem,
    pub energy: Arc<dyn SmoothMap>,
    pub force: Arc<dyn SmoothMap>,
}

/// Invert the Legendre transform at any scalar depth with two dual levels
/// of headroom: solve on values, then polish in jet arithmetic (each Newton
/// correction is exact one jet order further).
fn legendre_inverse_generic<T>(
    sys: &LagrangianSystem,
    q: &[T],
    p: &[T],
) -> Result<Vec<T>, model::ModelError>
where
    T: Real,
    diff::Dual<T>: Real,
    diff::Dual<diff::Dual<T>>: Real,
{
    let n = sys.n;
    let q_val: Vec<f64> = q.iter().map(|v| v.value()).collect();
    let p_val: Vec<f64> = p.iter().map(|v| v.value()).collect();
    let qdot_val = model::legendre_inverse(sys, &q_val, &p_val)?;
    let mut qdot: Vec<T> = qdot_val.iter().map(|&v| T::constant(v)).collect();
    for _ in 0..3 {
        let (_, lv) = model::l_gradients_generic(sys, q, &qdot);
        let (_, mut mass) = model::l_velocity_blocks_generic(sys, q, &qdot);
        let mut rhs: Vec<T> = lv.iter().zip(p).map(|(l, pi)| *pi - *l).collect();
        linalg::solve_in_place(&mut mass, &mut rhs, n)
            .map_err(|_| model::ModelError::SingularMass)?;
        for (v, d) in qdot.iter_mut().zip(&rhs) {
            *v = *v + *d;
        }
    }
    Ok(qdot)
}

struct EnergyMap {
    sys: LagrangianSystem,
}

impl diff::Depth2Program for EnergyMap {
    fn run<T>(&self, x: &[T], out: &mut [T])
    where
        T: Real,
        diff::Dual<T>: Real,
        diff::Dual<diff::Dual<T>>: Real,
    {
        let n = self.sys.n;
        let (q, p) = x.split_at(n);
        let qdot = legendre_inverse_generic(&self.sys, q, p)
            .expect("Legendre inversion failed inside H evaluation");
        let mut acc = T::constant(0.0);
        for i in 0..n {
            acc = acc + p[i] * qdot[i];
        }
        out[0] = acc - self.sys.lagrangian_generic(q, &qdot);
    }
}

struct HamiltonianForce {
    sys: LagrangianSystem,
}

impl diff::Depth2Program for HamiltonianForce {
    fn run<T>(&self, x: &[T], out: &mut [T])
    where
        T: Real,
        diff::Dual<T>: Real,
        diff::Dual<diff::Dual<T>>: Real,
    {
        let n = self.sys.n;
        let m = self.sys.m;
        let (q, rest) = x.split_at(n);
        let (p, u) = rest.split_at(n);
        debug_assert_eq!(u.len(), m);
        let qdot = legendre_inverse_generic(&self.sys, q, p)
            .expect("Legendre inversion failed inside f_H evaluation");
        self.sys.force_generic(q, &qdot, u, out);
    }
}

/// Build the Hamiltonian form of a regular system.
pub fn hamiltonian_form(sys: &LagrangianSystem) -> HamiltonianForm {
    let n = sys.n;
    let m = sys.m;
    HamiltonianForm {
        sys: sys.clone(),
        energy: diff::map_depth2(2 * n, 1, EnergyMap { sys: sys.clone() }),
        force: diff::map_depth2(2 * n + m, n, HamiltonianForce { sys: sys.clone() }),
    }
}

struct AffineShift {
    target: Vec<f64>,
}

impl diff::Program for AffineShift {
    fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
        for (i, (xi, t)) in x.iter().zip(&self.target).enumerate() {
            out[i] = *xi - T::constant(*t);
        }
    }
}

/// Stage-momentum row: (p_k + p_{k+1})/2 − ∂L/∂q̇(M_k, Δq_k/h) = 0.
struct StageMomentumRow {
    sys: LagrangianSystem,
    h: f64,
}

impl diff::Depth3Program for StageMomentumRow {
    fn run<T>(&self, x: &[T], out: &mut [T])
    where
        T: Real,
        diff::Dual<T>: Real,
    {
        let n = self.sys.n;
        let (q0, rest) = x.split_at(n);
        let (q1, rest) = rest.split_at(n);
        let (p0, p1) = rest.split_at(n);
        let half = T::constant(0.5);
        let inv_h = T::constant(1.0 / self.h);
        let mid: Vec<T> = q0.iter().zip(q1).map(|(a, b)| (*a + *b) * half).collect();
        let vel: Vec<T> = q0.iter().zip(q1).map(|(a, b)| (*b - *a) * inv_h).collect();
        let (_, lv) = model::l_gradients_generic(&self.sys, &mid, &vel);
        for i in 0..n {
            out[i] = (p0[i] + p1[i]) * half - lv[i];
        }
    }
}

/// Momentum-update row: (p_{k+1} − p_k)/h − ∂L/∂q(M_k, Δq_k/h) − f_L = 0.
struct MomentumUpdateRow {
    sys: LagrangianSystem,
    h: f64,
}

impl diff::Depth3Program for MomentumUpdateRow {
    fn run<T>(&self, x: &[T], out: &mut [T])
    where
        T: Real,
        diff::Dual<T>: Real,
    {
        let n = self.sys.n;
        let m = self.sys.m;
        let (q0, rest) = x.split_at(n);
        let (q1, rest) = rest.split_at(n);
        let (p0, rest) = rest.split_at(n);
        let (p1, u) = rest.split_at(n);
        debug_assert_eq!(u.len(), m);
        let half = T::constant(0.5);
        let inv_h = T::constant(1.0 / self.h);
        let mid: Vec<T> = q0.iter().zip(q1).map(|(a, b)| (*a + *b) * half).collect();
        let vel: Vec<T> = q0.iter().zip(q1).map(|(a, b)| (*b - *a) * inv_h).collect();
        let (lq, _) = model::l_gradients_generic(&self.sys, &mid, &vel);
        let mut f = vec![T::constant(0.0); n];
        self.sys.force_generic(&mid, &vel, u, &mut f);
        for i in 0..n {
            out[i] = (p1[i] - p0[i]) * inv_h - lq[i] - f[i];
        }
    }
}

/// Configuration-update row of the tangent-space form:
/// (q_{k+1} − q_k)/h − (v_k + v_{k+1})/2 = 0.
struct ConfigUpdateRow {
    n: usize,
    h: f64,
}

impl diff::Program for ConfigUpdateRow {
    fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
        let n = self.n;
        let (q0, rest) = x.split_at(n);
        let (q1, rest) = rest.split_at(n);
        let (v0, v1) = rest.split_at(n);
        let half = T::constant(0.5);
        let inv_h = T::constant(1.0 / self.h);
        for i in 0..n {
            out[i] = (q1[i] - q0[i]) * inv_h - (v0[i] + v1[i]) * half;
        }
    }
}

/// Velocity-update row: (v_{k+1} − v_k)/h − a(M_k, V̄_k, u_k) = 0 with the
/// acceleration from a mass-matrix solve.
struct VelocityUpdateRow {
    sys: LagrangianSystem,
    h: f64,
}

impl diff::Depth2Program for VelocityUpdateRow {
    fn run<T>(&self, x: &[T], out: &mut [T])
    where
        T: Real,
        diff::Dual<T>: Real,
        diff::Dual<diff::Dual<T>>: Real,
    {
        let n = self.sys.n;
        let m = self.sys.m;
        let (q0, rest) = x.split_at(n);
        let (q1, rest) = rest.split_at(n);
        let (v0, rest) = rest.split_at(n);
        let (v1, u) = rest.split_at(n);
        debug_assert_eq!(u.len(), m);
        let half = T::constant(0.5);
        let inv_h = T::constant(1.0 / self.h);
        let mid: Vec<T> = q0.iter().zip(q1).map(|(a, b)| (*a + *b) * half).collect();
        let vbar: Vec<T> = v0.iter().zip(v1).map(|(a, b)| (*a + *b) * half).collect();
        let acc = model::acceleration_generic(&self.sys, &mid, &vbar, u)
            .expect("mass matrix singular inside velocity-form row");
        for i in 0..n {
            out[i] = (v1[i] - v0[i]) * inv_h - acc[i];
        }
    }
}

/// Stage running cost h·C(stage q, stage velocity, u) over
/// [q_k, q_{k+1}, s_k, s_{k+1}, u_k], where s is the co-state kind (p or v)
/// and the stage velocity is supplied by `velocity`.
struct StageCostTerm {
    cost: Arc<dyn SmoothMap>,
    n: usize,
    m: usize,
    h: f64,
    /// Stage velocity from node values: difference quotient of q (Hamiltonian
    /// form, where the stage-momentum row makes it equal the stage velocity)
    /// or the average of node velocities (tangent-space form).
    average_second_block: bool,
}

impl diff::Program for StageCostTerm {
    fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
        let n = self.n;
        let (q0, rest) = x.split_at(n);
        let (q1, rest) = rest.split_at(n);
        let (s0, rest) = rest.split_at(n);
        let (s1, u) = rest.split_at(n);
        debug_assert_eq!(u.len(), self.m);
        let half = T::constant(0.5);
        let inv_h = T::constant(1.0 / self.h);
        let mut arg = Vec::with_capacity(2 * n + self.m);
        for i in 0..n {
            arg.push((q0[i] + q1[i]) * half);
        }
        if self.average_second_block {
            for i in 0..n {
                arg.push((s0[i] + s1[i]) * half);
            }
        } else {
            for i in 0..n {
                arg.push((q1[i] - q0[i]) * inv_h);
            }
        }
        arg.extend_from_slice(u);
        let mut c = [T::constant(0.0)];
        T::eval_map(self.cost.as_ref(), &arg, &mut c);
        out[0] = T::constant(self.h) * c[0];
    }
}

fn node_range(layout: &VariableLayout, kind: VarKind, node: usize) -> Vec<usize> {
    let o = layout.kind_offset(kind, node);
    (o..o + layout.n).collect()
}

fn control_range(layout: &VariableLayout, interval: usize) -> Vec<usize> {
    let o = layout.control_offset(interval);
    (o..o + layout.m).collect()
}

fn second_kind_layout(ocp: &Ocp, kind: VarKind) -> (VariableLayout, usize) {
    let n = ocp.sys.n;
    let m = ocp.sys.m;
    let nodes = ocp.intervals;
    let mut groups = Vec::with_capacity(3 * nodes + 2);
    for k in 0..=nodes {
        groups.push(VarGroup { kind: VarKind::Config, index: k, offset: k * n, len: n });
    }
    let second_base = (nodes + 1) * n;
    for k in 0..=nodes {
        groups.push(VarGroup { kind, index: k, offset: second_base + k * n, len: n });
    }
    let control_base = 2 * (nodes + 1) * n;
    for k in 0..nodes {
        groups.push(VarGroup {
            kind: VarKind::Control,
            index: k,
            offset: control_base + k * m,
            len: m,
        });
    }
    let dimension = 2 * (nodes + 1) * n + nodes * m;
    (VariableLayout { n, m, intervals: nodes, groups }, dimension)
}

fn stage_cost_terms(ocp: &Ocp, layout: &VariableLayout, kind: VarKind) -> Vec<Term> {
    let n = ocp.sys.n;
    let m = ocp.sys.m;
    let h = ocp.step_size();
    let mut terms = Vec::with_capacity(ocp.intervals + 1);
    for k in 0..ocp.intervals {
        let mut vars = node_range(layout, VarKind::Config, k);
        vars.extend(node_range(layout, VarKind::Config, k + 1));
        vars.extend(node_range(layout, kind, k));
        vars.extend(node_range(layout, kind, k + 1));
        vars.extend(control_range(layout, k));
        terms.push(Term {
            vars,
            map: diff::map(
                4 * n + m,
                1,
                StageCostTerm {
                    cost: ocp.running_cost.clone(),
                    n,
                    m,
                    h,
                    average_second_block: kind == VarKind::Velocity,
                },
            ),
        });
    }
    if let Some(phi) = &ocp.mayer {
        struct MayerTerm {
            phi: Arc<dyn SmoothMap>,
        }
        impl diff::Program for MayerTerm {
            fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
                T::eval_map(self.phi.as_ref(), x, out);
            }
        }
        terms.push(Term {
            vars: node_range(layout, VarKind::Config, ocp.intervals),
            map: diff::map(n, 1, MayerTerm { phi: phi.clone() }),
        });
    }
    terms
}

/// Implicit-midpoint collocation of the Hamiltonian form, stage variables
/// eliminated: decision vector [q_0..q_N, p_0..p_N, u_0..u_{N−1}] of size
/// 2n(N+1) + mN.
pub fn transcribe_hamiltonian_midpoint(ocp: &Ocp) -> Result<Nlp, BaselineError> {
    if ocp.inequalities.is_some() {
        return Err(OcpError::InequalityConstraintsUnsupported.into());
    }
    if ocp.intervals < 2 {
        return Err(OcpError::TooFewIntervals(ocp.intervals).into());
    }
    let n = ocp.sys.n;
    let m = ocp.sys.m;
    let nodes = ocp.intervals;
    let h = ocp.step_size();
    let (layout, dimension) = second_kind_layout(ocp, VarKind::Momentum);

    let p0 = model::legendre(&ocp.sys, &ocp.q0, &ocp.qdot0)?;
    let p_t = model::legendre(&ocp.sys, &ocp.q_t, &ocp.qdot_t)?;

    let objective_terms = stage_cost_terms(ocp, &layout, VarKind::Momentum);

    let mut blocks = Vec::new();
    let mut row = 0usize;
    let mut push = |blocks: &mut Vec<Block>, label, vars, rows, map| {
        blocks.push(Block { label, vars, row_offset: row, rows, map });
        row += rows;
    };

    push(
        &mut blocks,
        RowLabel::InitialConfig,
        node_range(&layout, VarKind::Config, 0),
        n,
        diff::map(n, n, AffineShift { target: ocp.q0.clone() }),
    );
    push(
        &mut blocks,
        RowLabel::InitialMomentumValue,
        node_range(&layout, VarKind::Momentum, 0),
        n,
        diff::map(n, n, AffineShift { target: p0 }),
    );
    for k in 0..nodes {
        let mut vars = node_range(&layout, VarKind::Config, k);
        vars.extend(node_range(&layout, VarKind::Config, k + 1));
        vars.extend(node_range(&layout, VarKind::Momentum, k));
        vars.extend(node_range(&layout, VarKind::Momentum, k + 1));
        push(
            &mut blocks,
            RowLabel::ConfigStep { interval: k },
            vars.clone(),
            n,
            diff::map_depth3(4 * n, n, StageMomentumRow { sys: ocp.sys.clone(), h }),
        );
        vars.extend(control_range(&layout, k));
        push(
            &mut blocks,
            RowLabel::MomentumStep { interval: k },
            vars,
            n,
            diff::map_depth3(4 * n + m, n, MomentumUpdateRow { sys: ocp.sys.clone(), h }),
        );
    }
    push(
        &mut blocks,
        RowLabel::FinalConfig,
        node_range(&layout, VarKind::Config, nodes),
        n,
        diff::map(n, n, AffineShift { target: ocp.q_t.clone() }),
    );
    push(
        &mut blocks,
        RowLabel::FinalMomentumValue,
        node_range(&layout, VarKind::Momentum, nodes),
        n,
        diff::map(n, n, AffineShift { target: p_t }),
    );

    Ok(Nlp {
        name: "ham-midpoint".into(),
        dimension,
        constraint_count: row,
        layout,
        objective_terms,
        constraint_blocks: blocks,
    })
}

/// Implicit-midpoint collocation of the tangent-space form: decision vector
/// [q_0..q_N, v_0..v_N, u_0..u_{N−1}] of size 2n(N+1) + mN.
pub fn transcribe_velocity_midpoint(ocp: &Ocp) -> Result<Nlp, BaselineError> {
    if ocp.inequalities.is_some() {
        return Err(OcpError::InequalityConstraintsUnsupported.into());
    }
    if ocp.intervals < 2 {
        return Err(OcpError::TooFewIntervals(ocp.intervals).into());
    }
    let n = ocp.sys.n;
    let m = ocp.sys.m;
    let nodes = ocp.intervals;
    let h = ocp.step_size();
    let (layout, dimension) = second_kind_layout(ocp, VarKind::Velocity);

    let objective_terms = stage_cost_terms(ocp, &layout, VarKind::Velocity);

    let mut blocks = Vec::new();
    let mut row = 0usize;
    let mut push = |blocks: &mut Vec<Block>, label, vars, rows, map| {
        blocks.push(Block { label, vars, row_offset: row, rows, map });
        row += rows;
    };

    push(
        &mut blocks,
        RowLabel::InitialConfig,
        node_range(&layout, VarKind::Config, 0),
        n,
        diff::map(n, n, AffineShift { target: ocp.q0.clone() }),
    );
    push(
        &mut blocks,
        RowLabel::InitialVelocity,
        node_range(&layout, VarKind::Velocity, 0),
        n,
        diff::map(n, n, AffineShift { target: ocp.qdot0.clone() }),
    );
    for k in 0..nodes {
        let mut vars = node_range(&layout, VarKind::Config, k);
        vars.extend(node_range(&layout, VarKind::Config, k + 1));
        vars.extend(node_range(&layout, VarKind::Velocity, k));
        vars.extend(node_range(&layout, VarKind::Velocity, k + 1));
        push(
            &mut blocks,
            RowLabel::ConfigStep { interval: k },
            vars.clone(),
            n,
            diff::map(4 * n, n, ConfigUpdateRow { n, h }),
        );
        vars.extend(control_range(&layout, k));
        push(
            &mut blocks,
            RowLabel::VelocityStep { interval: k },
            vars,
            n,
            diff::map_depth2(4 * n + m, n, VelocityUpdateRow { sys: ocp.sys.clone(), h }),
        );
    }
    push(
        &mut blocks,
        RowLabel::FinalConfig,
        node_range(&layout, VarKind::Config, nodes),
        n,
        diff::map(n, n, AffineShift { target: ocp.q_t.clone() }),
    );
    push(
        &mut blocks,
        RowLabel::FinalVelocity,
        node_range(&layout, VarKind::Velocity, nodes),
        n,
        diff::map(n, n, AffineShift { target: ocp.qdot_t.clone() }),
    );

    Ok(Nlp {
        name: "vel-midpoint".into(),
        dimension,
        constraint_count: row,
        layout,
        objective_terms,
        constraint_blocks: blocks,
    })
}

/// Initial guess for the Hamiltonian baseline with the same (q, u)
/// projection as the direct transcription: configurations interpolated
/// linearly, controls zero, momenta from the Legendre transform of the
/// constant average velocity.
pub fn hamiltonian_initial_guess(ocp: &Ocp, nlp: &Nlp) -> Vec<f64> {
    let mut x = vec![0.0; nlp.dimension];
    let nodes = ocp.intervals;
    let vbar: Vec<f64> = ocp
        .q_t
        .iter()
        .zip(&ocp.q0)
        .map(|(a, b)| (a - b) / ocp.t_horizon)
        .collect();
    for k in 0..=nodes {
        let s = k as f64 / nodes as f64;
        let q: Vec<f64> = ocp
            .q0
            .iter()
            .zip(&ocp.q_t)
            .map(|(a, b)| (1.0 - s) * a + s * b)
            .collect();
        let o = nlp.layout.config_offset(k);
        x[o..o + ocp.sys.n].copy_from_slice(&q);
        let p = model::legendre(&ocp.sys, &q, &vbar).expect("guess momenta");
        let o = nlp.layout.kind_offset(VarKind::Momentum, k);
        x[o..o + ocp.sys.n].copy_from_slice(&p);
    }
    x
}

/// Initial guess for the tangent-space baseline: configurations interpolated
/// linearly, node velocities at the constant average, controls zero.
pub fn velocity_initial_guess(ocp: &Ocp, nlp: &Nlp) -> Vec<f64> {
    let mut x = vec![0.0; nlp.dimension];
    let nodes = ocp.intervals;
    let vbar: Vec<f64> = ocp
        .q_t
        .iter()
        .zip(&ocp.q0)
        .map(|(a, b)| (a - b) / ocp.t_horizon)
        .collect();
    for k in 0..=nodes {
        let s = k as f64 / nodes as f64;
        let o = nlp.layout.config_offset(k);
        for i in 0..ocp.sys.n {
            x[o + i] = (1.0 - s) * ocp.q0[i] + s * ocp.q_t[i];
        }
        let o = nlp.layout.kind_offset(VarKind::Velocity, k);
        x[o..o + ocp.sys.n].copy_from_slice(&vbar);
    }
    x
}

/// A solved transcription bundled with everything needed for comparisons.
pub struct SolvedInstance {
    pub method: String,
    pub ocp: Ocp,
    pub nlp: Nlp,
    pub result: SqpResult,
}

impl SolvedInstance {
    pub fn trajectory(&self) -> crate::discmech::DiscreteTrajectory {
        self.nlp.layout.trajectory(&self.result.solution, self.ocp.step_size())
    }

    /// Node velocities: direct for the tangent-space form, Legendre-inverted
    /// momenta for the Hamiltonian form, reconstructed through the forced
    /// discrete Legendre transforms for the direct transcription.
    pub fn node_velocities(&self) -> Result<Vec<Vec<f64>>, BaselineError> {
        let x = &self.result.solution;
        let layout = &self.nlp.layout;
        if let Some(v) = layout.node_states(x, VarKind::Velocity) {
            return Ok(v);
        }
        if let Some(p_nodes) = layout.node_states(x, VarKind::Momentum) {
            let q_nodes = layout.config_nodes(x);
            return q_nodes
                .iter()
                .zip(&p_nodes)
                .map(|(q, p)| model::legendre_inverse(&self.ocp.sys, q, p).map_err(Into::into))
                .collect();
        }
        let traj = self.trajectory();
        let h = traj.h;
        let mut momenta = Vec::with_capacity(traj.q.len());
        momenta.push(crate::discmech::dlegendre(
            &self.ocp.sys,
            &traj.q[0],
            &traj.q[1],
            &traj.u[0],
            h,
            crate::discmech::Side::Minus,
        ));
        for k in 0..traj.intervals() {
            momenta.push(crate::discmech::dlegendre(
                &self.ocp.sys,
                &traj.q[k],
                &traj.q[k + 1],
                &traj.u[k],
                h,
                crate::discmech::Side::Plus,
            ));
        }
        traj.q
            .iter()
            .zip(&momenta)
            .map(|(q, p)| model::legendre_inverse(&self.ocp.sys, q, p).map_err(Into::into))
            .collect()
    }

    pub fn objective(&self) -> f64 {
        self.nlp.objective(&self.result.solution)
    }
}

/// Node-wise gaps between two solved instances of the same problem.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonReport {
    /// max_k ‖(q_k, q̇_k) − (q'_k, q̇'_k)‖∞ with velocities reconstructed
    /// per method.
    pub max_state_gap: f64,
    /// max_k ‖u_k − u'_k‖∞ over interval midpoints.
    pub max_control_gap: f64,
    pub objective_gap: f64,
}

/// Align two solved instances by node index and report the largest gaps.
pub fn compare_solutions(
    a: &SolvedInstance,
    b: &SolvedInstance,
) -> Result<ComparisonReport, BaselineError> {
    let ta = a.trajectory();
    let tb = b.trajectory();
    if ta.intervals() != tb.intervals() {
        return Err(BaselineError::MismatchedIntervals(ta.intervals(), tb.intervals()));
    }
    let va = a.node_velocities()?;
    let vb = b.node_velocities()?;
    let mut state_gap = 0.0f64;
    for k in 0..=ta.intervals() {
        for i in 0..ta.q[k].len() {
            state_gap = state_gap.max((ta.q[k][i] - tb.q[k][i]).abs());
            state_gap = state_gap.max((va[k][i] - vb[k][i]).abs());
        }
    }
    let mut control_gap = 0.0f64;
    for k in 0..ta.intervals() {
        for i in 0..ta.u[k].len() {
            control_gap = control_gap.max((ta.u[k][i] - tb.u[k][i]).abs());
        }
    }
    Ok(ComparisonReport {
        max_state_gap: state_gap,
        max_control_gap: control_gap,
        objective_gap: (a.objective() - b.objective()).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discmech;
    use crate::problems;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hamiltonian_dimension_formulas() {
        let ocp = problems::orbital_transfer(&problems::OrbitalParams::default(), 10);
        let nlp = transcribe_hamiltonian_midpoint(&ocp).unwrap();
        assert_eq!(nlp.dimension, 54); // 2·2·11 + 10 vs DMOC's 32

        let ocp = problems::two_link(&problems::TwoLinkParams::default(), 10);
        let nlp = transcribe_hamiltonian_midpoint(&ocp).unwrap();
        assert_eq!(nlp.dimension, 64); // 4·11 + 20 vs DMOC's 42

        // Asymptotic variable ratios: 3/5 (orbital), 2/3 (two-link).
        let big = 400;
        let orbital = problems::orbital_transfer(&problems::OrbitalParams::default(), big);
        let dmoc = crate::ocp::transcribe(&orbital).unwrap();
        let ham = transcribe_hamiltonian_midpoint(&orbital).unwrap();
        let ratio = dmoc.dimension as f64 / ham.dimension as f64;
        assert!((ratio - 0.6).abs() < 0.01, "orbital ratio {ratio}");

        let two = problems::two_link(&problems::TwoLinkParams::default(), big);
        let dmoc = crate::ocp::transcribe(&two).unwrap();
        let ham = transcribe_hamiltonian_midpoint(&two).unwrap();
        let ratio = dmoc.dimension as f64 / ham.dimension as f64;
        assert!((ratio - 2.0 / 3.0).abs() < 0.01, "two-link ratio {ratio}");
    }

    #[test]
    fn straight_line_feasible_for_both_baselines() {
        let params = problems::FreeParticleParams::default();
        let ocp = problems::free_particle_transfer(&params, 4);
        let ham = transcribe_hamiltonian_midpoint(&ocp).unwrap();
        let x = hamiltonian_initial_guess(&ocp, &ham);
        assert!(linalg::inf_norm(&ham.constraints(&x)) < 1e-12);

        let vel = transcribe_velocity_midpoint(&ocp).unwrap();
        let x = velocity_initial_guess(&ocp, &vel);
        assert!(linalg::inf_norm(&vel.constraints(&x)) < 1e-12);
    }

    #[test]
    fn pendulum_equilibrium_feasible_for_velocity_form() {
        let pend = problems::pendulum();
        let ocp = crate::ocp::Ocp::new(
            pend,
            vec![0.0],
            vec![0.0],
            vec![0.0],
            vec![0.0],
            crate::diff::map(3, 1, ZeroCost),
            1.0,
            4,
        );
        let vel = transcribe_velocity_midpoint(&ocp).unwrap();
        let x = velocity_initial_guess(&ocp, &vel);
        assert!(linalg::inf_norm(&vel.constraints(&x)) < 1e-13);
    }

    struct ZeroCost;
    impl diff::Program for ZeroCost {
        fn run<T: Real>(&self, _x: &[T], out: &mut [T]) {
            out[0] = T::constant(0.0);
        }
    }

    #[test]
    fn hamiltonian_form_reproduces_forced_el_dynamics() {
        // ∂H/∂p = q̇ and −∂H/∂q + f_H = d/dt ∂L/∂q̇ at Legendre-matched
        // points, for both benchmark systems.
        let orbital = problems::orbital_system(&problems::OrbitalParams::default());
        let two_link = problems::two_link_system(&problems::TwoLinkParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        for sys in [&orbital, &two_link] {
            let form = hamiltonian_form(sys);
            for _ in 0..10 {
                let q: Vec<f64> = (0..sys.n)
                    .map(|i| if i == 0 { rng.gen_range(0.8..2.0) } else { rng.gen_range(-1.0..1.0) })
                    .collect();
                let qdot: Vec<f64> = (0..sys.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let u: Vec<f64> = (0..sys.m).map(|_| rng.gen_range(-0.5..0.5)).collect();
                let p = model::legendre(sys, &q, &qdot).unwrap();
                let x: Vec<f64> = q.iter().chain(p.iter()).copied().collect();
                let grad = crate::diff::gradient(form.energy.as_ref(), &x).unwrap();
                for i in 0..sys.n {
                    assert!((grad[sys.n + i] - qdot[i]).abs() < 1e-9, "∂H/∂p mismatch");
                }
                // −∂H/∂q + f_H equals L_q + f_L (the momentum equation).
                let xu: Vec<f64> = x.iter().chain(u.iter()).copied().collect();
                let fh = crate::diff::eval(form.force.as_ref(), &xu).unwrap();
                let state: Vec<f64> = q.iter().chain(qdot.iter()).copied().collect();
                let lgrad = crate::diff::gradient(sys.lagrangian.as_ref(), &state).unwrap();
                let fl = sys.force_value(&q, &qdot, &u);
                for i in 0..sys.n {
                    let ham_side = -grad[i] + fh[i];
                    let lag_side = lgrad[i] + fl[i];
                    assert!(
                        (ham_side - lag_side).abs() < 1e-8,
                        "momentum equation mismatch: {ham_side} vs {lag_side}"
                    );
                }
            }
        }
    }

    #[test]
    fn feasible_points_map_between_dmoc_and_hamiltonian_rows() {
        // Forward: DEL-feasible q-sequences with discrete-Legendre momenta
        // satisfy the folded collocation rows. Backward: stepping the folded
        // rows directly reproduces q-sequences satisfying the DEL rows.
        let params = problems::OrbitalParams::default();
        let orbital = problems::orbital_system(&params);
        let two_link = problems::two_link_system(&problems::TwoLinkParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(67);

        for sys in [&orbital, &two_link] {
            for _ in 0..20 {
                let h = 0.05;
                let q0: Vec<f64> = (0..sys.n)
                    .map(|i| if i == 0 { rng.gen_range(0.9..1.4) } else { rng.gen_range(-0.3..0.3) })
                    .collect();
                let qdot0: Vec<f64> = (0..sys.n).map(|_| rng.gen_range(-0.3..0.3)).collect();
                let controls: Vec<Vec<f64>> =
                    (0..3).map(|_| (0..sys.m).map(|_| rng.gen_range(-0.2..0.2)).collect()).collect();
                let roll = crate::simulate::rollout(sys, &q0, &qdot0, &controls, h).unwrap();
                let traj = &roll.trajectory;

                // Forward direction: check the folded rows on (q, p, u).
                let ham_row = StageMomentumRow { sys: sys.clone(), h };
                let upd_row = MomentumUpdateRow { sys: sys.clone(), h };
                for k in 0..traj.intervals() {
                    let mut x: Vec<f64> = traj.q[k].clone();
                    x.extend_from_slice(&traj.q[k + 1]);
                    x.extend_from_slice(&roll.momenta[k]);
                    x.extend_from_slice(&roll.momenta[k + 1]);
                    let mut out = vec![0.0; sys.n];
                    diff::Depth3Program::run(&ham_row, &x, &mut out);
                    assert!(linalg::inf_norm(&out) < 1e-8, "stage row {out:?}");
                    x.extend_from_slice(&traj.u[k]);
                    diff::Depth3Program::run(&upd_row, &x, &mut out);
                    assert!(linalg::inf_norm(&out) < 1e-8, "update row {out:?}");
                }

                // Backward direction: Newton-solve the folded rows for
                // (q_{k+1}, p_{k+1}) and check the DEL rows on the result.
                let mut q_seq = vec![traj.q[0].clone()];
                let mut p = roll.momenta[0].clone();
                for k in 0..traj.intervals() {
                    let (q_next, p_next) =
                        ham_step(sys, &q_seq[k], &p, &traj.u[k], h, &traj.q[k + 1]);
                    q_seq.push(q_next);
                    p = p_next;
                }
                for k in 1..traj.intervals() {
                    let res = discmech::del_residual(
                        sys,
                        &q_seq[k - 1],
                        &q_seq[k],
                        &q_seq[k + 1],
                        &traj.u[k - 1],
                        &traj.u[k],
                        h,
                    );
                    assert!(linalg::inf_norm(&res) < 1e-8, "DEL residual {res:?}");
                }
            }
        }
    }

    /// Newton solve of the folded midpoint rows for one interval.
    fn ham_step(
        sys: &LagrangianSystem,
        q0: &[f64],
        p0: &[f64],
        u: &[f64],
        h: f64,
        q1_seed: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let n = sys.n;
        let stage = StageMomentumRow { sys: sys.clone(), h };
        let update = MomentumUpdateRow { sys: sys.clone(), h };
        let mut z: Vec<f64> = q1_seed.iter().chain(p0.iter()).copied().collect();
        for _ in 0..50 {
            let x: Vec<f64> = q0
                .iter()
                .chain(z[..n].iter())
                .chain(p0.iter())
                .chain(z[n..].iter())
                .chain(u.iter())
                .copied()
                .collect();
            let mut r = vec![0.0; 2 * n];
            diff::Depth3Program::run(&stage, &x[..4 * n], &mut r[..n]);
            diff::Depth3Program::run(&update, &x, &mut r[n..]);
            if linalg::inf_norm(&r) < 1e-12 {
                break;
            }
            // Jacobian w.r.t. (q1, p1) by dual sweeps.
            let mut jac = crate::linalg::Mat::zeros(2 * n, 2 * n);
            let mut xd: Vec<crate::diff::D1> =
                x.iter().map(|&v| crate::diff::D1::constant(v)).collect();
            for col in 0..2 * n {
                let slot = if col < n { n + col } else { 2 * n + col };
                xd[slot].dot = 1.0;
                let mut rd = vec![crate::diff::D1::constant(0.0); 2 * n];
                diff::Depth3Program::run(&stage, &xd[..4 * n], &mut rd[..n]);
                diff::Depth3Program::run(&update, &xd, &mut rd[n..]);
                xd[slot].dot = 0.0;
                for rr in 0..2 * n {
                    jac[(rr, col)] = rd[rr].dot;
                }
            }
            let lu = crate::linalg::Lu::factor(&jac).unwrap();
            let mut rhs = r;
            for v in rhs.iter_mut() {
                *v = -*v;
            }
            let step = lu.solve(&rhs);
            for i in 0..2 * n {
                z[i] += step[i];
            }
        }
        (z[..n].to_vec(), z[n..].to_vec())
    }
}
