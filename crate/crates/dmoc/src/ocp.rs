//! Optimal control problems and their NLP transcription.
//!
//! [`transcribe`] turns an [`Ocp`] into an equality-constrained NLP over
//! node configurations and midpoint controls: fixed boundary
//! configurations, momentum-level boundary conditions, and the forced
//! discrete Euler-Lagrange equations at the interior nodes. The
//! [`Nlp`] keeps per-term / per-block structure so that gradients,
//! Jacobians and Lagrangian Hessians assemble from small dual-number
//! sweeps instead of full-dimensional ones.
//!
//! [`to_mayer`] re-expresses the same problem with running-cost
//! accumulator variables; [`kkt_check`] evaluates first-order optimality
//! residuals; [`extract_adjoints`] reads discrete costates out of the
//! multipliers of a solved instance and checks the midpoint adjoint
//! recursion.

use crate::diff::{self, Dual, Real, SmoothMap};
use crate::discmech::{self, DiscreteTrajectory};
use crate::linalg::{self, Mat};
use crate::model::{self, LagrangianSystem};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcpError {
    #[error("inequality path constraints are out of scope and rejected at transcription")]
    InequalityConstraintsUnsupported,
    #[error("interval count must be at least 2, got {0}")]
    TooFewIntervals(usize),
    #[error("multiplier vector length {got} does not match constraint count {expected}")]
    MultiplierMismatch { expected: usize, got: usize },
    #[error("NLP does not carry the node-momentum row structure needed for adjoint extraction")]
    NoAdjointStructure,
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Diff(#[from] diff::DiffError),
}

/// Terminal condition of the problem.
#[derive(Clone)]
pub enum FinalCondition {
    /// Fixed final configuration and velocity, imposed as q_N = q^T plus the
    /// momentum-level row −D₂L(q^T, q̇^T) + D₂L_d(q_{N−1}, q_N) + f⁺ = 0.
    FixedState,
    /// General terminal constraint on [q_{N−1}, q_N, u_{N−1}]; replaces both
    /// fixed-state rows. Shipped as a hook; only `FixedState` is exercised
    /// by the benchmarks.
    Custom { map: Arc<dyn SmoothMap>, label: String },
}

/// Placeholder for inequality path constraints. They are representable in
/// the data model but rejected at transcription time.
#[derive(Clone)]
pub struct PathInequalities {
    pub map: Arc<dyn SmoothMap>,
}

/// Optimal control problem over a forced Lagrangian system with fixed
/// boundary states: minimize ∫C(q, q̇, u)dt (+ optional terminal cost on
/// the final configuration) subject to the controlled dynamics.
#[derive(Clone)]
pub struct Ocp {
    pub sys: LagrangianSystem,
    pub q0: Vec<f64>,
    pub qdot0: Vec<f64>,
    pub q_t: Vec<f64>,
    pub qdot_t: Vec<f64>,
    /// Running cost C(q, q̇, u), input layout [q, q̇, u].
    pub running_cost: Arc<dyn SmoothMap>,
    /// Optional terminal cost Φ(q_N).
    pub mayer: Option<Arc<dyn SmoothMap>>,
    pub t_horizon: f64,
    pub intervals: usize,
    pub final_condition: FinalCondition,
    pub inequalities: Option<PathInequalities>,
}

impl Ocp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sys: LagrangianSystem,
        q0: Vec<f64>,
        qdot0: Vec<f64>,
        q_t: Vec<f64>,
        qdot_t: Vec<f64>,
        running_cost: Arc<dyn SmoothMap>,
        t_horizon: f64,
        intervals: usize,
    ) -> Self {
        assert!(t_horizon > 0.0, "horizon must be positive");
        assert_eq!(q0.len(), sys.n);
        assert_eq!(qdot0.len(), sys.n);
        assert_eq!(q_t.len(), sys.n);
        assert_eq!(qdot_t.len(), sys.n);
        assert_eq!(running_cost.input_dim(), 2 * sys.n + sys.m);
        Ocp {
            sys,
            q0,
            qdot0,
            q_t,
            qdot_t,
            running_cost,
            mayer: None,
            t_horizon,
            intervals,
            final_condition: FinalCondition::FixedState,
            inequalities: None,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.t_horizon / self.intervals as f64
    }
}

/// What a slice of the decision vector represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarKind {
    /// Node configuration q_k.
    Config,
    /// Node momentum p_k (Hamiltonian-form baseline).
    Momentum,
    /// Node velocity v_k (tangent-space baseline).
    Velocity,
    /// Midpoint control u_{k+1/2} of interval k.
    Control,
    /// Running-cost accumulator z_k (Mayer form).
    CostAccumulator,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VarGroup {
    pub kind: VarKind,
    /// Node index for node-owned groups, interval index for controls.
    pub index: usize,
    pub offset: usize,
    pub len: usize,
}

/// Ownership map of the packed decision vector.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VariableLayout {
    pub n: usize,
    pub m: usize,
    pub intervals: usize,
    pub groups: Vec<VarGroup>,
}

impl VariableLayout {
    fn offset_of(&self, kind: VarKind, index: usize) -> usize {
        self.groups
            .iter()
            .find(|g| g.kind == kind && g.index == index)
            .map(|g| g.offset)
            .unwrap_or_else(|| panic!("no {kind:?} group with index {index}"))
    }

    pub fn config_offset(&self, node: usize) -> usize {
        self.offset_of(VarKind::Config, node)
    }

    pub fn control_offset(&self, interval: usize) -> usize {
        self.offset_of(VarKind::Control, interval)
    }

    pub fn has_kind(&self, kind: VarKind) -> bool {
        self.groups.iter().any(|g| g.kind == kind)
    }

    pub fn kind_offset(&self, kind: VarKind, index: usize) -> usize {
        self.offset_of(kind, index)
    }

    pub fn config_nodes(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..=self.intervals)
            .map(|k| {
                let o = self.config_offset(k);
                x[o..o + self.n].to_vec()
            })
            .collect()
    }

    pub fn controls(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.intervals)
            .map(|k| {
                let o = self.control_offset(k);
                x[o..o + self.m].to_vec()
            })
            .collect()
    }

    /// Decode a decision vector into a discrete trajectory.
    pub fn trajectory(&self, x: &[f64], h: f64) -> DiscreteTrajectory {
        DiscreteTrajectory::new(h, self.config_nodes(x), self.controls(x))
    }

    /// Extra per-node state (momenta or velocities) when present.
    pub fn node_states(&self, x: &[f64], kind: VarKind) -> Option<Vec<Vec<f64>>> {
        if !self.has_kind(kind) {
            return None;
        }
        Some(
            (0..=self.intervals)
                .map(|k| {
                    let o = self.kind_offset(kind, k);
                    x[o..o + self.n].to_vec()
                })
                .collect(),
        )
    }
}

/// Role of a constraint block, used for multiplier bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowLabel {
    InitialConfig,
    InitialMomentum,
    /// Forced discrete Euler-Lagrange row at an interior node.
    Del { node: usize },
    FinalConfig,
    FinalMomentum,
    /// Baseline collocation rows.
    ConfigStep { interval: usize },
    MomentumStep { interval: usize },
    VelocityStep { interval: usize },
    InitialMomentumValue,
    FinalMomentumValue,
    InitialVelocity,
    FinalVelocity,
    /// Mayer accumulator rows.
    CostInit,
    CostStep { interval: usize },
    Custom { name: String },
}

/// One additive objective contribution touching a few variables.
pub struct Term {
    pub vars: Vec<usize>,
    pub map: Arc<dyn SmoothMap>,
}

/// One contiguous group of equality-constraint rows touching a few variables.
pub struct Block {
    pub label: RowLabel,
    pub vars: Vec<usize>,
    pub row_offset: usize,
    pub rows: usize,
    pub map: Arc<dyn SmoothMap>,
}

/// Structured equality-constrained NLP: a sum of objective terms and a
/// stack of constraint blocks over a packed decision vector.
pub struct Nlp {
    pub name: String,
    pub dimension: usize,
    pub constraint_count: usize,
    pub layout: VariableLayout,
    pub objective_terms: Vec<Term>,
    pub constraint_blocks: Vec<Block>,
}

impl Nlp {
    fn gather<T: Real>(x: &[T], vars: &[usize], buf: &mut Vec<T>) {
        buf.clear();
        buf.extend(vars.iter().map(|&i| x[i]));
    }

    pub fn objective_generic<T: Real>(&self, x: &[T]) -> T {
        let mut acc = T::constant(0.0);
        let mut local = Vec::new();
        let mut out = [T::constant(0.0)];
        for term in &self.objective_terms {
            Self::gather(x, &term.vars, &mut local);
            T::eval_map(term.map.as_ref(), &local, &mut out);
            acc = acc + out[0];
        }
        acc
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.objective_generic(x)
    }

    pub fn constraints_generic<T: Real>(&self, x: &[T], out: &mut [T]) {
        let mut local = Vec::new();
        let mut rows: Vec<T> = Vec::new();
        for block in &self.constraint_blocks {
            Self::gather(x, &block.vars, &mut local);
            rows.resize(block.rows, T::constant(0.0));
            T::eval_map(block.map.as_ref(), &local, &mut rows);
            out[block.row_offset..block.row_offset + block.rows].copy_from_slice(&rows);
        }
    }

    pub fn constraints(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.constraint_count];
        self.constraints_generic(x, &mut out);
        out
    }

    /// Objective gradient assembled from per-term dual sweeps.
    pub fn objective_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.dimension];
        let mut local: Vec<diff::D1> = Vec::new();
        let mut out = [diff::D1::constant(0.0)];
        for term in &self.objective_terms {
            local.clear();
            local.extend(term.vars.iter().map(|&i| diff::D1::constant(x[i])));
            for (j, &gi) in term.vars.iter().enumerate() {
                local[j].dot = 1.0;
                term.map.eval_d1(&local, &mut out);
                local[j].dot = 0.0;
                grad[gi] += out[0].dot;
            }
        }
        grad
    }

    /// Dense constraint Jacobian assembled from per-block dual sweeps.
    pub fn constraint_jacobian(&self, x: &[f64]) -> Mat {
        let mut jac = Mat::zeros(self.constraint_count, self.dimension);
        let mut local: Vec<diff::D1> = Vec::new();
        let mut rows: Vec<diff::D1> = Vec::new();
        for block in &self.constraint_blocks {
            local.clear();
            local.extend(block.vars.iter().map(|&i| diff::D1::constant(x[i])));
            rows.resize(block.rows, diff::D1::constant(0.0));
            for (j, &gj) in block.vars.iter().enumerate() {
                local[j].dot = 1.0;
                block.map.eval_d1(&local, &mut rows);
                local[j].dot = 0.0;
                for (r, v) in rows.iter().enumerate() {
                    jac[(block.row_offset + r, gj)] = v.dot;
                }
            }
        }
        jac
    }

    /// Hessian of the NLP Lagrangian σ·φ(ξ) − λᵀa(ξ), from nested dual
    /// sweeps over each term and block.
    pub fn lagrangian_hessian(&self, x: &[f64], lambda: &[f64], sigma: f64) -> Mat {
        assert_eq!(lambda.len(), self.constraint_count);
        let mut w = Mat::zeros(self.dimension, self.dimension);
        let mut local: Vec<diff::D2> = Vec::new();
        let mut out = [diff::D2::constant(0.0)];
        for term in &self.objective_terms {
            local.clear();
            local.extend(term.vars.iter().map(|&v| diff::D2::constant(x[v])));
            let k = term.vars.len();
            for i in 0..k {
                local[i].val.dot = 1.0;
                for j in 0..=i {
                    local[j].dot.val = 1.0;
                    term.map.eval_d2(&local, &mut out);
                    local[j].dot.val = 0.0;
                    let hij = sigma * out[0].dot.dot;
                    let (gi, gj) = (term.vars[i], term.vars[j]);
                    w[(gi, gj)] += hij;
                    if gi != gj {
                        w[(gj, gi)] += hij;
                    }
                }
                local[i].val.dot = 0.0;
            }
        }
        let mut rows: Vec<diff::D2> = Vec::new();
        for block in &self.constraint_blocks {
            local.clear();
            local.extend(block.vars.iter().map(|&v| diff::D2::constant(x[v])));
            rows.resize(block.rows, diff::D2::constant(0.0));
            let lam = &lambda[block.row_offset..block.row_offset + block.rows];
            if lam.iter().all(|v| *v == 0.0) {
                continue;
            }
            let k = block.vars.len();
            for i in 0..k {
                local[i].val.dot = 1.0;
                for j in 0..=i {
                    local[j].dot.val = 1.0;
                    block.map.eval_d2(&local, &mut rows);
                    local[j].dot.val = 0.0;
                    let mut hij = 0.0;
                    for (r, lr) in lam.iter().enumerate() {
                        hij += lr * rows[r].dot.dot;
                    }
                    let (gi, gj) = (block.vars[i], block.vars[j]);
                    w[(gi, gj)] -= hij;
                    if gi != gj {
                        w[(gj, gi)] -= hij;
                    }
                }
                local[i].val.dot = 0.0;
            }
        }
        w
    }

    /// Find a constraint block by label.
    pub fn block(&self, label: &RowLabel) -> Option<&Block> {
        self.constraint_blocks.iter().find(|b| &b.label == label)
    }
}

/// Whole-objective view for finite-difference checks.
pub struct ObjectiveMap<'a>(pub &'a Nlp);

impl SmoothMap for ObjectiveMap<'_> {
    fn input_dim(&self) -> usize {
        self.0.dimension
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval_real(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.0.objective_generic(x);
    }
    fn eval_d1(&self, x: &[diff::D1], out: &mut [diff::D1]) {
        out[0] = self.0.objective_generic(x);
    }
    fn eval_d2(&self, x: &[diff::D2], out: &mut [diff::D2]) {
        out[0] = self.0.objective_generic(x);
    }
    fn eval_d3(&self, x: &[diff::D3], out: &mut [diff::D3]) {
        out[0] = self.0.objective_generic(x);
    }
    fn eval_d4(&self, x: &[diff::D4], out: &mut [diff::D4]) {
        out[0] = self.0.objective_generic(x);
    }
}

/// Whole-constraint-map view for finite-difference checks.
pub struct ConstraintMap<'a>(pub &'a Nlp);

impl SmoothMap for ConstraintMap<'_> {
    fn input_dim(&self) -> usize {
        self.0.dimension
    }
    fn output_dim(&self) -> usize {
        self.0.constraint_count
    }
    fn eval_real(&self, x: &[f64], out: &mut [f64]) {
        self.0.constraints_generic(x, out);
    }
    fn eval_d1(&self, x: &[diff::D1], out: &mut [diff::D1]) {
        self.0.constraints_generic(x, out);
    }
    fn eval_d2(&self, x: &[diff::D2], out: &mut [diff::D2]) {
        self.0.constraints_generic(x, out);
    }
    fn eval_d3(&self, x: &[diff::D3], out: &mut [diff::D3]) {
        self.0.constraints_generic(x, out);
    }
    fn eval_d4(&self, x: &[diff::D4], out: &mut [diff::D4]) {
        self.0.constraints_generic(x, out);
    }
}

// Constraint-block and objective-term programs. All momentum-level rows are
// scaled by 1/h so residual magnitudes stay comparable across step sizes.

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

struct InitialMomentumRow {
    sys: LagrangianSystem,
    p0: Vec<f64>,
    h: f64,
}

impl diff::Depth3Program for InitialMomentumRow {
    fn run<T>(&self, x: &[T], out: &mut [T])
    where
        T: Real,
        Dual<T>: Real,
    {
        let n = self.sys.n;
        let m = self.sys.m;
        let (q0, rest) = x.split_at(n);
        let (q1, u) = rest.split_at(n);
        debug_assert_eq!(u.len(), m);
        let mut d1 = vec![T::constant(0.0); n];
        let mut f = vec![T::constant(0.0); n];
        discmech::d1_ld(&self.sys, q0, q1, self.h, &mut d1);
        discmech::forces_generic(&self.sys, q0, q1, u, self.h, &mut f);
        let inv_h = T::constant(1.0 / self.h);
        for i in 0..n {
            out[i] = (T::constant(self.p0[i]) + d1[i] + f[i]) * inv_h;
        }
    }
}

struct DelRow {
    sys: LagrangianSystem,
    h: f64,
}

impl diff::Depth3Program for DelRow {
    fn run<T>(&self, x: &[T], out: &mut [T])
    where
        T: Real,
        Dual<T>: Real,
    {
        let n = self.sys.n;
        let m = self.sys.m;
        let (q_prev, rest) = x.split_at(n);
        let (q, rest) = rest.split_at(n);
        let (q_next, rest) = rest.split_at(n);
        let (u_prev, u) = rest.split_at(m);
        discmech::del_residual_generic(&self.sys, q_prev, q, q_next, u_prev, u, self.h, out);
        let inv_h = T::constant(1.0 / self.h);
        for o in out.iter_mut() {
            *o = *o * inv_h;
        }
    }
}

struct FinalMomentumRow {
    sys: LagrangianSystem,
    p_t: Vec<f64>,
    h: f64,
}

impl diff::Depth3Program for FinalMomentumRow {
    fn run<T>(&self, x: &[T], out: &mut [T])
    where
        T: Real,
        Dual<T>: Real,
    {
        let n = self.sys.n;
        let (q_prev, rest) = x.split_at(n);
        let (q_last, u) = rest.split_at(n);
        let mut d2 = vec![T::constant(0.0); n];
        let mut f = vec![T::constant(0.0); n];
        discmech::d2_ld(&self.sys, q_prev, q_last, self.h, &mut d2);
        discmech::forces_generic(&self.sys, q_prev, q_last, u, self.h, &mut f);
        let inv_h = T::constant(1.0 / self.h);
        for i in 0..n {
            out[i] = (d2[i] + f[i] - T::constant(self.p_t[i])) * inv_h;
        }
    }
}

/// Midpoint-quadrature running cost of one interval: h·C(mid, Δq/h, u).
struct RunningCostTerm {
    cost: Arc<dyn SmoothMap>,
    n: usize,
    m: usize,
    h: f64,
}

impl diff::Program for RunningCostTerm {
    fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
        let n = self.n;
        let (q0, rest) = x.split_at(n);
        let (q1, u) = rest.split_at(n);
        debug_assert_eq!(u.len(), self.m);
        let half = T::constant(0.5);
        let inv_h = T::constant(1.0 / self.h);
        let mut arg = Vec::with_capacity(2 * n + self.m);
        for i in 0..n {
            arg.push((q0[i] + q1[i]) * half);
        }
        for i in 0..n {
            arg.push((q1[i] - q0[i]) * inv_h);
        }
        arg.extend_from_slice(u);
        let mut c = [T::constant(0.0)];
        T::eval_map(self.cost.as_ref(), &arg, &mut c);
        out[0] = T::constant(self.h) * c[0];
    }
}

struct MayerTerm {
    phi: Arc<dyn SmoothMap>,
}

impl diff::Program for MayerTerm {
    fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
        T::eval_map(self.phi.as_ref(), x, out);
    }
}

/// Mayer-form accumulator row z_{k+1} − z_k − C_d(q_k, q_{k+1}, u_k) = 0.
struct CostStepRow {
    cost: Arc<dyn SmoothMap>,
    n: usize,
    m: usize,
    h: f64,
}

impl diff::Program for CostStepRow {
    fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
        let n = self.n;
        let m = self.m;
        let term = RunningCostTerm { cost: self.cost.clone(), n, m, h: self.h };
        let mut cd = [T::constant(0.0)];
        term.run(&x[..2 * n + m], &mut cd);
        let z0 = x[2 * n + m];
        let z1 = x[2 * n + m + 1];
        out[0] = z1 - z0 - cd[0];
    }
}

struct PinScalar;

impl diff::Program for PinScalar {
    fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
        out[0] = x[0];
    }
}

fn config_range(layout: &VariableLayout, node: usize) -> Vec<usize> {
    let o = layout.config_offset(node);
    (o..o + layout.n).collect()
}

fn control_range(layout: &VariableLayout, interval: usize) -> Vec<usize> {
    let o = layout.control_offset(interval);
    (o..o + layout.m).collect()
}

/// Direct transcription of the optimal control problem into an
/// equality-constrained NLP over [q_0..q_N, u_{1/2}..u_{N−1/2}].
///
/// Constraint stack (momentum-level rows scaled by 1/h):
/// initial configuration, initial momentum, interior DEL rows, final
/// configuration, final momentum. The final configuration row pins
/// q_N = q^T; together with the momentum row this realizes the fixed
/// final state exactly like the collocation transcriptions, which is what
/// makes the solution-equivalence comparison meaningful.
pub fn transcribe(ocp: &Ocp) -> Result<Nlp, OcpError> {
    if ocp.inequalities.is_some() {
        return Err(OcpError::InequalityConstraintsUnsupported);
    }
    if ocp.intervals < 2 {
        return Err(OcpError::TooFewIntervals(ocp.intervals));
    }
    let n = ocp.sys.n;
    let m = ocp.sys.m;
    let ni = ocp.intervals;
    let h = ocp.step_size();

    let mut groups = Vec::with_capacity(2 * ni + 1);
    for k in 0..=ni {
        groups.push(VarGroup { kind: VarKind::Config, index: k, offset: k * n, len: n });
    }
    let control_base = (ni + 1) * n;
    for k in 0..ni {
        groups.push(VarGroup {
            kind: VarKind::Control,
            index: k,
            offset: control_base + k * m,
            len: m,
        });
    }
    let layout = VariableLayout { n, m, intervals: ni, groups };
    let dimension = (ni + 1) * n + ni * m;

    let mut objective_terms = Vec::with_capacity(ni + 1);
    for k in 0..ni {
        let mut vars = config_range(&layout, k);
        vars.extend(config_range(&layout, k + 1));
        vars.extend(control_range(&layout, k));
        objective_terms.push(Term {
            vars,
            map: diff::map(
                2 * n + m,
                1,
                RunningCostTerm { cost: ocp.running_cost.clone(), n, m, h },
            ),
        });
    }
    if let Some(phi) = &ocp.mayer {
        objective_terms.push(Term {
            vars: config_range(&layout, ni),
            map: diff::map(n, 1, MayerTerm { phi: phi.clone() }),
        });
    }

    let p0 = model::legendre(&ocp.sys, &ocp.q0, &ocp.qdot0)?;
    let p_t = model::legendre(&ocp.sys, &ocp.q_t, &ocp.qdot_t)?;

    let mut blocks = Vec::new();
    let mut row = 0usize;
    let mut push = |blocks: &mut Vec<Block>, label, vars, rows, map| {
        blocks.push(Block { label, vars, row_offset: row, rows, map });
        row += rows;
    };

    push(
        &mut blocks,
        RowLabel::InitialConfig,
        config_range(&layout, 0),
        n,
        diff::map(n, n, AffineShift { target: ocp.q0.clone() }),
    );
    {
        let mut vars = config_range(&layout, 0);
        vars.extend(config_range(&layout, 1));
        vars.extend(control_range(&layout, 0));
        push(
            &mut blocks,
            RowLabel::InitialMomentum,
            vars,
            n,
            diff::map_depth3(2 * n + m, n, InitialMomentumRow { sys: ocp.sys.clone(), p0, h }),
        );
    }
    for k in 1..ni {
        let mut vars = config_range(&layout, k - 1);
        vars.extend(config_range(&layout, k));
        vars.extend(config_range(&layout, k + 1));
        vars.extend(control_range(&layout, k - 1));
        vars.extend(control_range(&layout, k));
        push(
            &mut blocks,
            RowLabel::Del { node: k },
            vars,
            n,
            diff::map_depth3(3 * n + 2 * m, n, DelRow { sys: ocp.sys.clone(), h }),
        );
    }
    match &ocp.final_condition {
        FinalCondition::FixedState => {
            push(
                &mut blocks,
                RowLabel::FinalConfig,
                config_range(&layout, ni),
                n,
                diff::map(n, n, AffineShift { target: ocp.q_t.clone() }),
            );
            let mut vars = config_range(&layout, ni - 1);
            vars.extend(config_range(&layout, ni));
            vars.extend(control_range(&layout, ni - 1));
            push(
                &mut blocks,
                RowLabel::FinalMomentum,
                vars,
                n,
                diff::map_depth3(2 * n + m, n, FinalMomentumRow { sys: ocp.sys.clone(), p_t, h }),
            );
        }
        FinalCondition::Custom { map, label } => {
            let mut vars = config_range(&layout, ni - 1);
            vars.extend(config_range(&layout, ni));
            vars.extend(control_range(&layout, ni - 1));
            let rows = map.output_dim();
            push(
                &mut blocks,
                RowLabel::Custom { name: label.clone() },
                vars,
                rows,
                map.clone(),
            );
        }
    }

    Ok(Nlp {
        name: "dmoc".into(),
        dimension,
        constraint_count: row,
        layout,
        objective_terms,
        constraint_blocks: blocks,
    })
}

/// Midpoint-quadrature objective of a discrete trajectory,
/// Σ_k h·C(mid_k, Δq_k/h, u_k) plus the terminal cost.
pub fn discrete_objective(ocp: &Ocp, trajectory: &DiscreteTrajectory) -> f64 {
    let n = ocp.sys.n;
    let h = trajectory.h;
    let mut total = 0.0;
    for k in 0..trajectory.intervals() {
        let q0 = &trajectory.q[k];
        let q1 = &trajectory.q[k + 1];
        let mut arg = Vec::with_capacity(2 * n + ocp.sys.m);
        for i in 0..n {
            arg.push(0.5 * (q0[i] + q1[i]));
        }
        for i in 0..n {
            arg.push((q1[i] - q0[i]) / h);
        }
        arg.extend_from_slice(&trajectory.u[k]);
        let mut c = [0.0];
        ocp.running_cost.eval_real(&arg, &mut c);
        total += h * c[0];
    }
    if let Some(phi) = &ocp.mayer {
        let mut out = [0.0];
        phi.eval_real(trajectory.q.last().unwrap(), &mut out);
        total += out[0];
    }
    total
}

/// Rephrase the transcription in Mayer form: cost accumulators z_0..z_N with
/// z_0 = 0 and z_{k+1} − z_k − C_d = 0, objective z_N (+ terminal cost).
/// Solutions project 1:1 onto [`transcribe`] solutions in (q, u).
pub fn to_mayer(ocp: &Ocp) -> Result<Nlp, OcpError> {
    let base = transcribe(ocp)?;
    let n = ocp.sys.n;
    let m = ocp.sys.m;
    let ni = ocp.intervals;
    let h = ocp.step_size();

    let mut layout = base.layout.clone();
    let z_base = base.dimension;
    for k in 0..=ni {
        layout.groups.push(VarGroup {
            kind: VarKind::CostAccumulator,
            index: k,
            offset: z_base + k,
            len: 1,
        });
    }
    let dimension = base.dimension + ni + 1;

    // Objective: z_N plus any terminal cost; running-cost terms move into
    // the accumulator rows.
    let mut objective_terms = vec![Term {
        vars: vec![z_base + ni],
        map: diff::map(1, 1, PinScalar),
    }];
    if let Some(phi) = &ocp.mayer {
        objective_terms.push(Term {
            vars: config_range(&layout, ni),
            map: diff::map(n, 1, MayerTerm { phi: phi.clone() }),
        });
    }

    let mut blocks = base.constraint_blocks;
    let mut row = base.constraint_count;
    blocks.push(Block {
        label: RowLabel::CostInit,
        vars: vec![z_base],
        row_offset: row,
        rows: 1,
        map: diff::map(1, 1, PinScalar),
    });
    row += 1;
    for k in 0..ni {
        let mut vars = config_range(&layout, k);
        vars.extend(config_range(&layout, k + 1));
        vars.extend(control_range(&layout, k));
        vars.push(z_base + k);
        vars.push(z_base + k + 1);
        blocks.push(Block {
            label: RowLabel::CostStep { interval: k },
            vars,
            row_offset: row,
            rows: 1,
            map: diff::map(
                2 * n + m + 2,
                1,
                CostStepRow { cost: ocp.running_cost.clone(), n, m, h },
            ),
        });
        row += 1;
    }

    Ok(Nlp {
        name: "dmoc-mayer".into(),
        dimension,
        constraint_count: row,
        layout,
        objective_terms,
        constraint_blocks: blocks,
    })
}

/// Midpoint running cost of one interval at plain values.
fn interval_cost(ocp: &Ocp, q0: &[f64], q1: &[f64], u: &[f64], h: f64) -> f64 {
    let n = ocp.sys.n;
    let mut arg = Vec::with_capacity(2 * n + ocp.sys.m);
    for i in 0..n {
        arg.push(0.5 * (q0[i] + q1[i]));
    }
    for i in 0..n {
        arg.push((q1[i] - q0[i]) / h);
    }
    arg.extend_from_slice(u);
    let mut c = [0.0];
    ocp.running_cost.eval_real(&arg, &mut c);
    h * c[0]
}

/// Deterministic initial guess: configurations interpolated linearly from
/// q⁰ to q^T, controls zero. Mayer accumulators, when present, start on the
/// telescoped running cost of that guess path.
pub fn initial_guess(ocp: &Ocp, nlp: &Nlp) -> Vec<f64> {
    let mut x = vec![0.0; nlp.dimension];
    let nodes = ocp.intervals;
    let h = ocp.step_size();
    for k in 0..=nodes {
        let s = k as f64 / nodes as f64;
        let o = nlp.layout.config_offset(k);
        for i in 0..ocp.sys.n {
            x[o + i] = (1.0 - s) * ocp.q0[i] + s * ocp.q_t[i];
        }
    }
    if nlp.layout.has_kind(VarKind::CostAccumulator) {
        let zero_u = vec![0.0; ocp.sys.m];
        let mut acc = 0.0;
        for k in 0..=nodes {
            let o = nlp.layout.kind_offset(VarKind::CostAccumulator, k);
            x[o] = acc;
            if k < nodes {
                let a = nlp.layout.config_offset(k);
                let b = nlp.layout.config_offset(k + 1);
                let q0 = x[a..a + ocp.sys.n].to_vec();
                let q1 = x[b..b + ocp.sys.n].to_vec();
                acc += interval_cost(ocp, &q0, &q1, &zero_u, h);
            }
        }
    }
    x
}

/// First-order optimality report: stationarity ‖∇φ − Aᵀλ‖∞ and
/// feasibility ‖a(ξ)‖∞. No inequalities are in scope, so complementarity
/// is vacuous.
#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    pub stationarity: f64,
    pub feasibility: f64,
}

pub fn kkt_check(nlp: &Nlp, x: &[f64], lambda: &[f64]) -> Result<KktReport, OcpError> {
    if lambda.len() != nlp.constraint_count {
        return Err(OcpError::MultiplierMismatch {
            expected: nlp.constraint_count,
            got: lambda.len(),
        });
    }
    let grad = nlp.objective_gradient(x);
    let jac = nlp.constraint_jacobian(x);
    let jt_lambda = jac.mul_vec_transposed(lambda);
    let mut stat = 0.0f64;
    for i in 0..nlp.dimension {
        stat = stat.max((grad[i] - jt_lambda[i]).abs());
    }
    let feas = linalg::inf_norm(&nlp.constraints(x));
    Ok(KktReport { stationarity: stat, feasibility: feas })
}

/// Discrete costates extracted from the multipliers of a solved DMOC
/// instance, with the midpoint adjoint-recursion residuals.
#[derive(Debug, Clone)]
pub struct AdjointExtract {
    /// Node costates ψ^p_k, k = 0..N, read off the momentum-level rows.
    pub psi: Vec<Vec<f64>>,
    /// Stage costates Ψ^q_k, k = 0..N−1, reconstructed through the stage
    /// relation of the scheme.
    pub psi_q_stage: Vec<Vec<f64>>,
    /// ‖recursion residual‖∞ per interior node (length N−1).
    pub scheme_residuals: Vec<f64>,
    /// Scale of the extracted costates, max(1, ‖ψ‖∞).
    pub scale: f64,
}

impl AdjointExtract {
    pub fn max_residual(&self) -> f64 {
        self.scheme_residuals.iter().fold(0.0f64, |m, v| m.max(*v))
    }
}

/// Map the equality multipliers of the momentum-level rows to discrete
/// costate samples and evaluate the midpoint adjoint recursion
/// (stage coefficient 1/2, weight 1) they must satisfy at a KKT point.
///
/// The multiplier of the momentum-level row at node k corresponds to the
/// costate sample ψ^p_k = −μ_k/h (the 1/h accounts for the row scaling).
/// The ν-row of the adjoint system determines the stage costates
/// Ψ^q_k = −Δ_k·L_vv − Ψ^p_k·(L_qv + f_v) − C_v with Δ_k = (ψ^p_{k+1} −
/// ψ^p_k)/h, and the remaining content of the adjoint scheme is the stage
/// recursion Ψ^q_j − Ψ^q_{j−1} = (h/2)(φ^q_{j−1} + φ^q_j), whose residual
/// is reported per interior node.
pub fn extract_adjoints(
    ocp: &Ocp,
    nlp: &Nlp,
    x: &[f64],
    lambda: &[f64],
) -> Result<AdjointExtract, OcpError> {
    if lambda.len() != nlp.constraint_count {
        return Err(OcpError::MultiplierMismatch {
            expected: nlp.constraint_count,
            got: lambda.len(),
        });
    }
    let n = ocp.sys.n;
    let nodes = ocp.intervals;
    let h = ocp.step_size();

    // Momentum-level multipliers μ_0..μ_N in node order.
    let mut mu: Vec<Vec<f64>> = Vec::with_capacity(nodes + 1);
    let init = nlp.block(&RowLabel::InitialMomentum).ok_or(OcpError::NoAdjointStructure)?;
    mu.push(lambda[init.row_offset..init.row_offset + n].to_vec());
    for k in 1..nodes {
        let del = nlp.block(&RowLabel::Del { node: k }).ok_or(OcpError::NoAdjointStructure)?;
        mu.push(lambda[del.row_offset..del.row_offset + n].to_vec());
    }
    let fin = nlp.block(&RowLabel::FinalMomentum).ok_or(OcpError::NoAdjointStructure)?;
    mu.push(lambda[fin.row_offset..fin.row_offset + n].to_vec());

    let psi: Vec<Vec<f64>> = mu
        .iter()
        .map(|m| m.iter().map(|v| -v / h).collect())
        .collect();
    let mut scale = 1.0f64;
    for p in &psi {
        scale = scale.max(linalg::inf_norm(p));
    }

    // Stage data per interval: midpoint state, L and f derivative blocks,
    // running-cost gradients.
    let traj = nlp.layout.trajectory(x, h);
    let mut psi_q_stage = Vec::with_capacity(nodes);
    let mut phi_q = Vec::with_capacity(nodes);
    for k in 0..nodes {
        let q0 = &traj.q[k];
        let q1 = &traj.q[k + 1];
        let u = &traj.u[k];
        let mid: Vec<f64> = q0.iter().zip(q1).map(|(a, b)| 0.5 * (a + b)).collect();
        let vel: Vec<f64> = q0.iter().zip(q1).map(|(a, b)| (b - a) / h).collect();

        let state: Vec<f64> = mid.iter().chain(vel.iter()).copied().collect();
        let l_hess = diff::hessian(ocp.sys.lagrangian.as_ref(), &state)?;
        let arg: Vec<f64> = state.iter().chain(u.iter()).copied().collect();
        let f_jac = diff::jacobian(ocp.sys.force.as_ref(), &arg)?;
        let c_grad = diff::gradient(ocp.running_cost.as_ref(), &arg)?;

        let psi_stage: Vec<f64> = (0..n).map(|i| 0.5 * (psi[k][i] + psi[k + 1][i])).collect();
        let delta: Vec<f64> = (0..n).map(|i| (psi[k + 1][i] - psi[k][i]) / h).collect();

        // Ψ^q_r = −(Δ·L_vv)_r − Σ_i Ψ^p_i (L_qv + f_v)_{ir} − C_v_r.
        let mut psi_q = vec![0.0; n];
        for r in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc -= delta[j] * l_hess[(n + j, n + r)];
            }
            for i in 0..n {
                acc -= psi_stage[i] * (l_hess[(i, n + r)] + f_jac[(i, n + r)]);
            }
            acc -= c_grad[n + r];
            psi_q[r] = acc;
        }

        // φ^q_r = −(Δ·L_vq)_r − Σ_i Ψ^p_i (L_qq + f_q)_{ir} − C_q_r.
        let mut phi = vec![0.0; n];
        for r in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc -= delta[j] * l_hess[(n + j, r)];
            }
            for i in 0..n {
                acc -= psi_stage[i] * (l_hess[(i, r)] + f_jac[(i, r)]);
            }
            acc -= c_grad[r];
            phi[r] = acc;
        }
        psi_q_stage.push(psi_q);
        phi_q.push(phi);
    }

    let mut scheme_residuals = Vec::with_capacity(nodes.saturating_sub(1));
    for j in 1..nodes {
        let mut worst = 0.0f64;
        for r in 0..n {
            let res = psi_q_stage[j][r]
                - psi_q_stage[j - 1][r]
                - 0.5 * h * (phi_q[j - 1][r] + phi_q[j][r]);
            worst = worst.max(res.abs());
        }
        scheme_residuals.push(worst);
    }

    Ok(AdjointExtract { psi, psi_q_stage, scheme_residuals, scale })
}
