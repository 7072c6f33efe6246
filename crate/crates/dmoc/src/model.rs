//! Continuous forced Lagrangian mechanics.
//!
//! A [`LagrangianSystem`] packages the Lagrangian L(q, q̇), the control
//! force f_L(q, q̇, u) and optional symmetry generators. Everything the
//! discrete layer and the transcriptions need — Legendre transforms,
//! Euler-Lagrange residuals, momentum maps, energy — is derived from those
//! callbacks with dual-number sweeps, so a system definition never has to
//! supply derivatives by hand.

use crate::diff::{self, Real, SmoothMap};
use crate::linalg::{self, Mat};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Diff(#[from] diff::DiffError),
    #[error("mass matrix ∂²L/∂q̇² is singular at the evaluation point")]
    SingularMass,
    #[error("Newton iteration for the velocity did not converge after {0} steps")]
    NewtonNonConvergence(usize),
    #[error("symmetry generator {0} is not registered")]
    MissingGenerator(usize),
}

/// State of the continuous system: configuration and velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

impl State {
    pub fn new(q: Vec<f64>, qdot: Vec<f64>) -> Self {
        assert_eq!(q.len(), qdot.len());
        State { q, qdot }
    }
}

/// Forced Lagrangian system on a flat configuration space.
///
/// `lagrangian` maps [q, q̇] (length 2n) to a scalar; `force` maps
/// [q, q̇, u] (length 2n + m) to a covector in Rⁿ. The force with u = 0
/// need not vanish, so velocity-dependent dissipation is representable.
#[derive(Clone)]
pub struct LagrangianSystem {
    pub n: usize,
    pub m: usize,
    pub lagrangian: Arc<dyn SmoothMap>,
    pub force: Arc<dyn SmoothMap>,
    pub generators: Vec<Arc<dyn SmoothMap>>,
    pub q_labels: Vec<String>,
    pub u_labels: Vec<String>,
}

impl LagrangianSystem {
    pub fn new(
        n: usize,
        m: usize,
        lagrangian: Arc<dyn SmoothMap>,
        force: Arc<dyn SmoothMap>,
    ) -> Self {
        assert_eq!(lagrangian.input_dim(), 2 * n);
        assert_eq!(lagrangian.output_dim(), 1);
        assert_eq!(force.input_dim(), 2 * n + m);
        assert_eq!(force.output_dim(), n);
        LagrangianSystem {
            n,
            m,
            lagrangian,
            force,
            generators: Vec::new(),
            q_labels: (0..n).map(|i| format!("q{i}")).collect(),
            u_labels: (0..m).map(|i| format!("u{i}")).collect(),
        }
    }

    pub fn with_generator(mut self, generator: Arc<dyn SmoothMap>) -> Self {
        assert_eq!(generator.input_dim(), self.n);
        assert_eq!(generator.output_dim(), self.n);
        self.generators.push(generator);
        self
    }

    pub fn with_labels(mut self, q: &[&str], u: &[&str]) -> Self {
        self.q_labels = q.iter().map(|s| s.to_string()).collect();
        self.u_labels = u.iter().map(|s| s.to_string()).collect();
        self
    }

    /// Evaluate L at plain values.
    pub fn lagrangian_value(&self, q: &[f64], qdot: &[f64]) -> f64 {
        let mut x = Vec::with_capacity(2 * self.n);
        x.extend_from_slice(q);
        x.extend_from_slice(qdot);
        let mut out = [0.0];
        self.lagrangian.eval_real(&x, &mut out);
        out[0]
    }

    /// Evaluate f_L at plain values.
    pub fn force_value(&self, q: &[f64], qdot: &[f64], u: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(2 * self.n + self.m);
        x.extend_from_slice(q);
        x.extend_from_slice(qdot);
        x.extend_from_slice(u);
        let mut out = vec![0.0; self.n];
        self.force.eval_real(&x, &mut out);
        out
    }

    /// Generic evaluation of L, usable inside other dual computations.
    pub fn lagrangian_generic<T: Real>(&self, q: &[T], qdot: &[T]) -> T {
        let mut x = Vec::with_capacity(2 * self.n);
        x.extend_from_slice(q);
        x.extend_from_slice(qdot);
        let mut out = [T::constant(0.0)];
        T::eval_map(self.lagrangian.as_ref(), &x, &mut out);
        out[0]
    }

    /// Generic evaluation of f_L.
    pub fn force_generic<T: Real>(&self, q: &[T], qdot: &[T], u: &[T], out: &mut [T]) {
        let mut x = Vec::with_capacity(2 * self.n + self.m);
        x.extend_from_slice(q);
        x.extend_from_slice(qdot);
        x.extend_from_slice(u);
        T::eval_map(self.force.as_ref(), &x, out);
    }
}

/// Legendre transform: p = ∂L/∂q̇(q, q̇).
pub fn legendre(sys: &LagrangianSystem, q: &[f64], qdot: &[f64]) -> Result<Vec<f64>, ModelError> {
    let n = sys.n;
    let mut x: Vec<diff::D1> = q
        .iter()
        .chain(qdot.iter())
        .map(|&v| diff::D1::constant(v))
        .collect();
    let mut p = vec![0.0; n];
    let mut out = [diff::D1::constant(0.0)];
    for i in 0..n {
        x[n + i].dot = 1.0;
        sys.lagrangian.eval_d1(&x, &mut out);
        x[n + i].dot = 0.0;
        if !out[0].val.is_finite() || !out[0].dot.is_finite() {
            return Err(diff::DiffError::NonFinite { context: "legendre" }.into());
        }
        p[i] = out[0].dot;
    }
    Ok(p)
}

/// Mass matrix ∂²L/∂q̇²(q, q̇).
pub fn mass_matrix(sys: &LagrangianSystem, q: &[f64], qdot: &[f64]) -> Result<Mat, ModelError> {
    let n = sys.n;
    let x: Vec<f64> = q.iter().chain(qdot.iter()).copied().collect();
    let h = diff::hessian(sys.lagrangian.as_ref(), &x)?;
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = h[(n + i, n + j)];
        }
    }
    Ok(m)
}

/// Invert the Legendre transform: find q̇ with ∂L/∂q̇(q, q̇) = p.
///
/// Newton iteration from q̇ = 0 with the exact mass matrix as Jacobian.
pub fn legendre_inverse(
    sys: &LagrangianSystem,
    q: &[f64],
    p: &[f64],
) -> Result<Vec<f64>, ModelError> {
    let n = sys.n;
    let mut qdot = vec![0.0; n];
    let scale = linalg::inf_norm(p).max(1.0);
    let max_iters = 50;
    for _ in 0..max_iters {
        let current = legendre(sys, q, &qdot)?;
        let mut residual: Vec<f64> = current.iter().zip(p).map(|(c, t)| c - t).collect();
        if linalg::inf_norm(&residual) <= 1e-13 * scale {
            return Ok(qdot);
        }
        let m = mass_matrix(sys, q, &qdot)?;
        let lu = linalg::Lu::factor(&m).map_err(|_| ModelError::SingularMass)?;
        for r in residual.iter_mut() {
            *r = -*r;
        }
        let step = lu.solve(&residual);
        for (v, s) in qdot.iter_mut().zip(&step) {
            *v += s;
        }
    }
    // Accept the looser contract tolerance before giving up.
    let current = legendre(sys, q, &qdot)?;
    let residual: Vec<f64> = current.iter().zip(p).map(|(c, t)| c - t).collect();
    if linalg::inf_norm(&residual) <= 1e-12 * scale {
        Ok(qdot)
    } else {
        Err(ModelError::NewtonNonConvergence(max_iters))
    }
}

/// Residual of the forced Euler-Lagrange equations,
/// ∂L/∂q − d/dt(∂L/∂q̇) + f_L, with the total time derivative expanded as
/// ∂²L/∂q̇∂q · q̇ + ∂²L/∂q̇² · q̈ through second derivatives of L.
pub fn forced_el_residual(
    sys: &LagrangianSystem,
    q: &[f64],
    qdot: &[f64],
    qddot: &[f64],
    u: &[f64],
) -> Result<Vec<f64>, ModelError> {
    let n = sys.n;
    let x: Vec<f64> = q.iter().chain(qdot.iter()).copied().collect();
    let grad = diff::gradient(sys.lagrangian.as_ref(), &x)?;
    let hess = diff::hessian(sys.lagrangian.as_ref(), &x)?;
    let f = sys.force_value(q, qdot, u);
    let mut res = vec![0.0; n];
    for i in 0..n {
        let mut dt_term = 0.0;
        for j in 0..n {
            dt_term += hess[(n + i, j)] * qdot[j] + hess[(n + i, n + j)] * qddot[j];
        }
        res[i] = grad[i] - dt_term + f[i];
    }
    if !res.iter().all(|v| v.is_finite()) {
        return Err(diff::DiffError::NonFinite { context: "forced_el_residual" }.into());
    }
    Ok(res)
}

/// First derivatives of L with respect to q and q̇, one dual level above `T`.
pub fn l_gradients_generic<T>(
    sys: &LagrangianSystem,
    q: &[T],
    v: &[T],
) -> (Vec<T>, Vec<T>)
where
    T: Real,
    diff::Dual<T>: Real,
{
    let n = sys.n;
    let zero = T::constant(0.0);
    let mut ql: Vec<diff::Dual<T>> = q.iter().map(|&x| diff::Dual::new(x, zero)).collect();
    let mut vl: Vec<diff::Dual<T>> = v.iter().map(|&x| diff::Dual::new(x, zero)).collect();
    let mut lq = Vec::with_capacity(n);
    let mut lv = Vec::with_capacity(n);
    for i in 0..n {
        ql[i].dot = T::constant(1.0);
        lq.push(sys.lagrangian_generic(&ql, &vl).dot);
        ql[i].dot = zero;
    }
    for i in 0..n {
        vl[i].dot = T::constant(1.0);
        lv.push(sys.lagrangian_generic(&ql, &vl).dot);
        vl[i].dot = zero;
    }
    (lq, lv)
}

/// Second-derivative blocks ∂²L/∂q̇∂q and ∂²L/∂q̇² (row-major n×n), two dual
/// levels above `T`.
pub fn l_velocity_blocks_generic<T>(
    sys: &LagrangianSystem,
    q: &[T],
    v: &[T],
) -> (Vec<T>, Vec<T>)
where
    T: Real,
    diff::Dual<T>: Real,
    diff::Dual<diff::Dual<T>>: Real,
{
    type DD<T> = diff::Dual<diff::Dual<T>>;
    let n = sys.n;
    let zero: DD<T> = Real::constant(0.0);
    let one_outer = |x: &mut DD<T>| x.val.dot = T::constant(1.0);
    let zero_outer = |x: &mut DD<T>| x.val.dot = T::constant(0.0);
    let mut ql: Vec<DD<T>> = q
        .iter()
        .map(|&x| DD::<T> { val: diff::Dual::new(x, T::constant(0.0)), dot: zero.dot })
        .collect();
    let mut vl: Vec<DD<T>> = v
        .iter()
        .map(|&x| DD::<T> { val: diff::Dual::new(x, T::constant(0.0)), dot: zero.dot })
        .collect();
    let mut vq = vec![T::constant(0.0); n * n];
    let mut vv = vec![T::constant(0.0); n * n];
    for i in 0..n {
        one_outer(&mut vl[i]);
        for j in 0..n {
            ql[j].dot.val = T::constant(1.0);
            let l = sys.lagrangian_generic(&ql, &vl);
            ql[j].dot.val = T::constant(0.0);
            vq[i * n + j] = l.dot.dot;
        }
        for j in 0..n {
            vl[j].dot.val = T::constant(1.0);
            let l = sys.lagrangian_generic(&ql, &vl);
            vl[j].dot.val = T::constant(0.0);
            vv[i * n + j] = l.dot.dot;
        }
        zero_outer(&mut vl[i]);
    }
    (vq, vv)
}

/// Acceleration of the forced Euler-Lagrange equations,
/// q̈ = M(q, q̇)⁻¹ [∂L/∂q + f_L − ∂²L/∂q̇∂q · q̇], at any scalar depth that
/// leaves two dual levels of headroom for the internal second derivatives.
pub fn acceleration_generic<T>(
    sys: &LagrangianSystem,
    q: &[T],
    v: &[T],
    u: &[T],
) -> Result<Vec<T>, ModelError>
where
    T: Real,
    diff::Dual<T>: Real,
    diff::Dual<diff::Dual<T>>: Real,
{
    let n = sys.n;
    let (lq, _) = l_gradients_generic(sys, q, v);
    let (vq, mut vv) = l_velocity_blocks_generic(sys, q, v);
    let mut f = vec![T::constant(0.0); n];
    sys.force_generic(q, v, u, &mut f);
    let mut rhs = Vec::with_capacity(n);
    for i in 0..n {
        let mut coriolis = T::constant(0.0);
        for j in 0..n {
            coriolis = coriolis + vq[i * n + j] * v[j];
        }
        rhs.push(lq[i] + f[i] - coriolis);
    }
    linalg::solve_in_place(&mut vv, &mut rhs, n).map_err(|_| ModelError::SingularMass)?;
    Ok(rhs)
}

/// Momentum map ⟨∂L/∂q̇(q, q̇), ξ_Q(q)⟩ for the registered generator.
pub fn momentum_map(
    sys: &LagrangianSystem,
    q: &[f64],
    qdot: &[f64],
    generator: usize,
) -> Result<f64, ModelError> {
    let gen = sys
        .generators
        .get(generator)
        .ok_or(ModelError::MissingGenerator(generator))?;
    let p = legendre(sys, q, qdot)?;
    let xi = diff::eval(gen.as_ref(), q)?;
    Ok(linalg::dot(&p, &xi))
}

/// Energy H(q, q̇) = ⟨∂L/∂q̇, q̇⟩ − L(q, q̇).
pub fn hamiltonian(sys: &LagrangianSystem, q: &[f64], qdot: &[f64]) -> Result<f64, ModelError> {
    let p = legendre(sys, q, qdot)?;
    let e = linalg::dot(&p, qdot) - sys.lagrangian_value(q, qdot);
    if !e.is_finite() {
        return Err(diff::DiffError::NonFinite { context: "hamiltonian" }.into());
    }
    Ok(e)
}
