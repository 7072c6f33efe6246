//! Equality-constrained SQP with dense linear algebra.
//!
//! Each major iteration solves the Newton-KKT saddle system assembled from
//! the exact Lagrangian Hessian (nested duals) and the exact constraint
//! Jacobian, regularized until the inertia certifies a descent-generating
//! subproblem, then globalizes with a backtracking line search on the
//! l1 merit function. A second-order correction step reuses the current
//! factorization when the full step is rejected near the constraint
//! manifold.
//!
//! Minor work is counted in KKT-dimension units per factorization: the
//! closest observable analogue of QP-subproblem iteration counts, and the
//! quantity the cross-transcription efficiency comparisons report.

use crate::linalg::{self, Ldlt, Mat};
use crate::ocp::Nlp;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SqpError {
    #[error("initial guess length {got} does not match NLP dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in problem callbacks at iteration {0}")]
    NonFinite(usize),
}

/// Solver options. Defaults match the benchmark runs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SqpOptions {
    pub stationarity_tol: f64,
    pub feasibility_tol: f64,
    pub max_major_iterations: usize,
    /// Smallest nonzero Hessian regularization tried.
    pub regularization_floor: f64,
    /// Backtracking contraction factor in (0, 1).
    pub linesearch_contraction: f64,
    /// Armijo sufficient-decrease constant.
    pub sufficient_decrease: f64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        SqpOptions {
            stationarity_tol: 1e-8,
            feasibility_tol: 1e-10,
            max_major_iterations: 200,
            regularization_floor: 1e-8,
            linesearch_contraction: 0.5,
            sufficient_decrease: 1e-4,
        }
    }
}

impl SqpOptions {
    fn validate(&self) {
        assert!(self.stationarity_tol > 0.0);
        assert!(self.feasibility_tol > 0.0);
        assert!(self.regularization_floor > 0.0);
        assert!((0.0..1.0).contains(&self.linesearch_contraction) && self.linesearch_contraction > 0.0);
        assert!(self.sufficient_decrease > 0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SqpStatus {
    Converged,
    MaxIterations,
    LinesearchFailure,
    SingularKkt,
}

/// One line of the iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub merit: f64,
    pub stationarity: f64,
    pub feasibility: f64,
    pub step_length: f64,
}

impl IterationRecord {
    pub fn format_line(&self) -> String {
        format!(
            "iter {:4}  merit {:24.16e}  stationarity {:12.5e}  feasibility {:12.5e}  step {:8.3e}",
            self.iteration, self.merit, self.stationarity, self.feasibility, self.step_length
        )
    }
}

#[derive(Debug, Clone)]
pub struct SqpResult {
    pub solution: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub status: SqpStatus,
    pub major_iterations: usize,
    /// Σ over factorizations of the KKT dimension.
    pub minor_work: u64,
    pub stationarity: f64,
    pub feasibility: f64,
    pub log: Vec<IterationRecord>,
}

impl SqpResult {
    pub fn converged(&self) -> bool {
        self.status == SqpStatus::Converged
    }
}

/// Solution of one Newton-KKT system.
pub struct KktStep {
    pub step: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// Regularization that produced correct inertia.
    pub regularization: f64,
    /// Factorizations spent (inertia corrections included).
    pub factorizations: usize,
    factors: Ldlt,
    dim: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KktError {
    #[error("KKT system singular after regularization up to {0:.3e}")]
    Singular(f64),
}

/// Solve the saddle system [[W + σI, Aᵀ], [A, 0]] [d; −λ⁺] = [−g; −c] by
/// symmetric-indefinite factorization, raising σ geometrically from zero
/// until the inertia is (n, m, 0).
pub fn kkt_system_solve(
    hessian: &Mat,
    jacobian: &Mat,
    gradient: &[f64],
    constraints: &[f64],
    regularization_floor: f64,
) -> Result<KktStep, KktError> {
    kkt_system_solve_from(hessian, jacobian, gradient, constraints, regularization_floor, 0.0)
}

/// [`kkt_system_solve`] with a starting regularization (used to warm-start
/// the inertia correction from the previous major iteration).
///
/// When the primal regularization ladder alone cannot produce the inertia
/// (n, m, 0) — a rank-deficient constraint Jacobian at the current iterate —
/// a small dual regularization −δI enters the (2,2) block and the ladder is
/// retried.
pub fn kkt_system_solve_from(
    hessian: &Mat,
    jacobian: &Mat,
    gradient: &[f64],
    constraints: &[f64],
    regularization_floor: f64,
    initial_regularization: f64,
) -> Result<KktStep, KktError> {
    let n = hessian.rows();
    let m = jacobian.rows();
    assert_eq!(hessian.cols(), n);
    assert_eq!(jacobian.cols(), n);
    assert_eq!(gradient.len(), n);
    assert_eq!(constraints.len(), m);
    let dim = n + m;

    let mut factorizations = 0usize;
    let mut delta = 0.0f64;
    loop {
        let mut sigma = initial_regularization;
        loop {
            let mut k = Mat::zeros(dim, dim);
            for i in 0..n {
                for j in 0..=i {
                    k[(i, j)] = hessian[(i, j)];
                }
                k[(i, i)] += sigma;
            }
            for r in 0..m {
                for c in 0..n {
                    k[(n + r, c)] = jacobian[(r, c)];
                }
                k[(n + r, n + r)] = -delta;
            }
            factorizations += 1;
            if let Ok(f) = Ldlt::factor(&k) {
                if f.inertia() == (n, m, 0) {
                    let mut rhs = vec![0.0; dim];
                    for i in 0..n {
                        rhs[i] = -gradient[i];
                    }
                    for r in 0..m {
                        rhs[n + r] = -constraints[r];
                    }
                    let sol = f.solve(&rhs);
                    let step = sol[..n].to_vec();
                    let multipliers: Vec<f64> = sol[n..].iter().map(|v| -v).collect();
                    return Ok(KktStep {
                        step,
                        multipliers,
                        regularization: sigma,
                        factorizations,
                        factors: f,
                        dim,
                    });
                }
            }
            sigma = if sigma == 0.0 { regularization_floor } else { sigma * 10.0 };
            if sigma > 1e6 {
                break;
            }
        }
        delta = if delta == 0.0 { 1e-10 } else { delta * 1e3 };
        if delta > 1e-2 {
            return Err(KktError::Singular(1e6));
        }
    }
}

impl KktStep {
    /// Re-solve with a different right-hand side, reusing the factorization.
    fn resolve(&self, gradient: &[f64], constraints: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.step.len();
        let m = self.multipliers.len();
        let mut rhs = vec![0.0; self.dim];
        for i in 0..n {
            rhs[i] = -gradient[i];
        }
        for r in 0..m {
            rhs[n + r] = -constraints[r];
        }
        let sol = self.factors.solve(&rhs);
        (sol[..n].to_vec(), sol[n..].iter().map(|v| -v).collect())
    }
}

fn merit(objective: f64, constraints: &[f64], rho: f64) -> f64 {
    objective + rho * constraints.iter().map(|c| c.abs()).sum::<f64>()
}

/// Armijo test for one trial step length of the l1 merit.
fn merit_accepts(
    nlp: &Nlp,
    x: &[f64],
    step: &[f64],
    alpha: f64,
    m0: f64,
    descent: f64,
    rho: f64,
    options: &SqpOptions,
) -> bool {
    let mut trial = vec![0.0; x.len()];
    for i in 0..x.len() {
        trial[i] = x[i] + alpha * step[i];
    }
    let ft = nlp.objective(&trial);
    if !ft.is_finite() {
        return false;
    }
    let mt = merit(ft, &nlp.constraints(&trial), rho);
    mt <= m0 + options.sufficient_decrease * alpha * descent.min(0.0)
}

/// Backtracking line search on the l1 merit function φ + ρ‖a‖₁.
///
/// Returns the accepted step length and the (possibly raised) penalty; the
/// penalty is raised to 2‖λ⁺‖∞ before the search so the step is a descent
/// direction for the merit. Fails if the minimal step does not decrease
/// the merit.
pub fn merit_linesearch(
    nlp: &Nlp,
    x: &[f64],
    step: &[f64],
    new_multipliers: &[f64],
    rho: f64,
    options: &SqpOptions,
) -> Result<(f64, f64), ()> {
    let rho = rho.max(2.0 * linalg::inf_norm(new_multipliers)).max(1.0);
    let f0 = nlp.objective(x);
    let c0 = nlp.constraints(x);
    let m0 = merit(f0, &c0, rho);
    let g = nlp.objective_gradient(x);
    // Directional derivative bound of the l1 merit along an SQP step:
    // gᵀd − ρ‖a‖₁ (the linearized constraints cancel the violation).
    let descent = linalg::dot(&g, step) - rho * c0.iter().map(|c| c.abs()).sum::<f64>();

    let mut alpha = 1.0f64;
    for _ in 0..60 {
        if merit_accepts(nlp, x, step, alpha, m0, descent, rho, options) {
            return Ok((alpha, rho));
        }
        alpha *= options.linesearch_contraction;
        if alpha < 1e-12 {
            break;
        }
    }
    Err(())
}

/// Solve an equality-constrained NLP from the given start.
///
/// Deterministic: identical inputs produce identical iteration logs.
pub fn solve(nlp: &Nlp, initial_guess: &[f64], options: &SqpOptions) -> Result<SqpResult, SqpError> {
    options.validate();
    if initial_guess.len() != nlp.dimension {
        return Err(SqpError::DimensionMismatch {
            expected: nlp.dimension,
            got: initial_guess.len(),
        });
    }
    let mut x = initial_guess.to_vec();
    let mut lambda = vec![0.0; nlp.constraint_count];
    let mut rho = 1.0f64;
    let mut minor_work: u64 = 0;
    let mut log = Vec::new();
    // Warm-start the inertia correction near the previous iteration's value;
    // re-climbing from zero every time both wastes factorizations and makes
    // consecutive steps erratically different in scale.
    let mut sigma_start = 0.0f64;

    for iter in 0..options.max_major_iterations {
        let g = nlp.objective_gradient(&x);
        let c = nlp.constraints(&x);
        let a = nlp.constraint_jacobian(&x);
        if !g.iter().all(|v| v.is_finite()) || !c.iter().all(|v| v.is_finite()) {
            return Err(SqpError::NonFinite(iter));
        }
        let at_lambda = a.mul_vec_transposed(&lambda);
        let stationarity = g
            .iter()
            .zip(&at_lambda)
            .fold(0.0f64, |m, (gi, ai)| m.max((gi - ai).abs()));
        let feasibility = linalg::inf_norm(&c);

        if stationarity <= options.stationarity_tol && feasibility <= options.feasibility_tol {
            let record = IterationRecord {
                iteration: iter,
                merit: merit(nlp.objective(&x), &c, rho),
                stationarity,
                feasibility,
                step_length: 0.0,
            };
            log.push(record);
            return Ok(SqpResult {
                solution: x,
                multipliers: lambda,
                status: SqpStatus::Converged,
                major_iterations: iter,
                minor_work,
                stationarity,
                feasibility,
                log,
            });
        }

        let w = nlp.lagrangian_hessian(&x, &lambda, 1.0);
        // Retry with heavier damping when the subproblem returns absurd
        // steps or multipliers (near-singular reduced Hessian).
        let step_cap = 1e8 * linalg::inf_norm(&x).max(1.0);
        let lambda_cap = 1e7 * linalg::inf_norm(&g).max(1.0);
        let mut attempt_sigma = sigma_start;
        let kkt = loop {
            match kkt_system_solve_from(
                &w,
                &a,
                &g,
                &c,
                options.regularization_floor,
                attempt_sigma,
            ) {
                Ok(k) => {
                    minor_work += (k.factorizations as u64) * (k.dim as u64);
                    let sane = k.step.iter().chain(k.multipliers.iter()).all(|v| v.is_finite())
                        && linalg::inf_norm(&k.step) <= step_cap
                        && linalg::inf_norm(&k.multipliers) <= lambda_cap;
                    if sane {
                        break k;
                    }
                    attempt_sigma = (k.regularization * 100.0).max(options.regularization_floor);
                    if attempt_sigma > 1e6 {
                        return Ok(SqpResult {
                            solution: x,
                            multipliers: lambda,
                            status: SqpStatus::SingularKkt,
                            major_iterations: iter,
                            minor_work,
                            stationarity,
                            feasibility,
                            log,
                        });
                    }
                }
                Err(KktError::Singular(_)) => {
                    return Ok(SqpResult {
                        solution: x,
                        multipliers: lambda,
                        status: SqpStatus::SingularKkt,
                        major_iterations: iter,
                        minor_work,
                        stationarity,
                        feasibility,
                        log,
                    });
                }
            }
        };

        // Penalty update: raise to the exactness bound 2‖λ⁺‖∞; reset down
        // when the bound has fallen far below the current value, so a
        // transient multiplier spike cannot freeze later progress.
        let rho_bound = (2.0 * linalg::inf_norm(&kkt.multipliers)).max(1.0);
        if rho > 10.0 * rho_bound {
            rho = rho_bound;
        } else {
            rho = rho.max(rho_bound);
        }

        let f0 = nlp.objective(&x);
        let m0 = merit(f0, &c, rho);
        let violation = c.iter().map(|v| v.abs()).sum::<f64>();
        let descent = linalg::dot(&g, &kkt.step) - rho * violation;

        // Full step, then a second-order correction (reusing the
        // factorization), then plain backtracking.
        let mut accepted = None;
        if merit_accepts(nlp, &x, &kkt.step, 1.0, m0, descent, rho, options) {
            accepted = Some((1.0, kkt.step.clone()));
        } else {
            let mut trial = vec![0.0; x.len()];
            for i in 0..x.len() {
                trial[i] = x[i] + kkt.step[i];
            }
            let c_trial = nlp.constraints(&trial);
            let zero_g = vec![0.0; nlp.dimension];
            let (corr, _) = kkt.resolve(&zero_g, &c_trial);
            let soc_step: Vec<f64> = kkt.step.iter().zip(&corr).map(|(s, d)| s + d).collect();
            if merit_accepts(nlp, &x, &soc_step, 1.0, m0, descent, rho, options) {
                accepted = Some((1.0, soc_step));
            } else {
                let mut alpha = options.linesearch_contraction;
                for _ in 0..60 {
                    if merit_accepts(nlp, &x, &kkt.step, alpha, m0, descent, rho, options) {
                        accepted = Some((alpha, kkt.step.clone()));
                        break;
                    }
                    alpha *= options.linesearch_contraction;
                    if alpha < 1e-12 {
                        break;
                    }
                }
            }
        }

        // Regularization doubles as adaptive damping: grow it when steps
        // are being cut hard, relax it toward zero on full steps so the
        // endgame is exact Newton.
        if let Some((alpha, _)) = accepted {
            sigma_start = if alpha >= 0.99 {
                let relaxed = kkt.regularization / 3.0;
                if relaxed < options.regularization_floor {
                    0.0
                } else {
                    relaxed
                }
            } else if alpha < 0.3 {
                (kkt.regularization * 5.0).max(options.regularization_floor)
            } else {
                (kkt.regularization * 2.0).max(options.regularization_floor)
            };
        }

        let Some((alpha, step)) = accepted else {
            log.push(IterationRecord {
                iteration: iter,
                merit: merit(nlp.objective(&x), &c, rho),
                stationarity,
                feasibility,
                step_length: 0.0,
            });
            return Ok(SqpResult {
                solution: x,
                multipliers: lambda,
                status: SqpStatus::LinesearchFailure,
                major_iterations: iter,
                minor_work,
                stationarity,
                feasibility,
                log,
            });
        };

        for i in 0..x.len() {
            x[i] += alpha * step[i];
        }
        lambda.copy_from_slice(&kkt.multipliers);
        log.push(IterationRecord {
            iteration: iter,
            merit: merit(nlp.objective(&x), &nlp.constraints(&x), rho),
            stationarity,
            feasibility,
            step_length: alpha,
        });
    }

    let c = nlp.constraints(&x);
    let g = nlp.objective_gradient(&x);
    let a = nlp.constraint_jacobian(&x);
    let at_lambda = a.mul_vec_transposed(&lambda);
    let stationarity = g
        .iter()
        .zip(&at_lambda)
        .fold(0.0f64, |m, (gi, ai)| m.max((gi - ai).abs()));
    Ok(SqpResult {
        solution: x,
        multipliers: lambda,
        status: SqpStatus::MaxIterations,
        major_iterations: options.max_major_iterations,
        minor_work,
        stationarity,
        feasibility: linalg::inf_norm(&c),
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{self, Real};
    use crate::ocp::{Block, Nlp, RowLabel, Term, VariableLayout};

    fn toy_layout() -> VariableLayout {
        VariableLayout { n: 0, m: 0, intervals: 0, groups: vec![] }
    }

    fn unconstrained(dim: usize, term: Term) -> Nlp {
        Nlp {
            name: "toy".into(),
            dimension: dim,
            constraint_count: 0,
            layout: toy_layout(),
            objective_terms: vec![term],
            constraint_blocks: vec![],
        }
    }

    struct ShiftSq;
    impl diff::Program for ShiftSq {
        fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
            let d = x[0] - T::constant(2.0);
            out[0] = d * d;
        }
    }

    #[test]
    fn solves_unconstrained_quadratic_in_one_step() {
        let nlp = unconstrained(1, Term { vars: vec![0], map: diff::map(1, 1, ShiftSq) });
        let res = solve(&nlp, &[-7.0], &SqpOptions::default()).unwrap();
        assert!(res.converged());
        assert!((res.solution[0] - 2.0).abs() < 1e-10);
        assert!(res.major_iterations <= 2);
    }

    struct NormSq;
    impl diff::Program for NormSq {
        fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
            out[0] = x[0] * x[0] + x[1] * x[1];
        }
    }
    struct SumMinusTwo;
    impl diff::Program for SumMinusTwo {
        fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
            out[0] = x[0] + x[1] - T::constant(2.0);
        }
    }

    fn symmetric_qp() -> Nlp {
        Nlp {
            name: "qp".into(),
            dimension: 2,
            constraint_count: 1,
            layout: toy_layout(),
            objective_terms: vec![Term { vars: vec![0, 1], map: diff::map(2, 1, NormSq) }],
            constraint_blocks: vec![Block {
                label: RowLabel::Custom { name: "sum".into() },
                vars: vec![0, 1],
                row_offset: 0,
                rows: 1,
                map: diff::map(2, 1, SumMinusTwo),
            }],
        }
    }

    #[test]
    fn solves_equality_qp_in_one_newton_step() {
        let nlp = symmetric_qp();
        for start in [[5.0, -3.0], [0.0, 0.0], [100.0, 100.0]] {
            let res = solve(&nlp, &start, &SqpOptions::default()).unwrap();
            assert!(res.converged());
            assert!((res.solution[0] - 1.0).abs() < 1e-9);
            assert!((res.solution[1] - 1.0).abs() < 1e-9);
            assert!((res.multipliers[0] - 2.0).abs() < 1e-9);
            assert_eq!(res.major_iterations, 1, "quadratic: one major iteration");
        }
    }

    #[test]
    fn kkt_solve_restores_feasibility() {
        // H = 2I (objective x² + y²), A = [1 1], from the origin: the step
        // lands on (1, 1) with multiplier 2 under the ∇φ = Aᵀλ convention.
        let mut h = Mat::zeros(2, 2);
        h[(0, 0)] = 2.0;
        h[(1, 1)] = 2.0;
        let mut a = Mat::zeros(1, 2);
        a[(0, 0)] = 1.0;
        a[(0, 1)] = 1.0;
        let sol = kkt_system_solve(&h, &a, &[0.0, 0.0], &[-2.0], 1e-8).unwrap();
        assert!((sol.step[0] - 1.0).abs() < 1e-12);
        assert!((sol.step[1] - 1.0).abs() < 1e-12);
        assert!((sol.multipliers[0] - 2.0).abs() < 1e-12);
        assert_eq!(sol.regularization, 0.0);

        // Identity Hessian and the same constraint: the step is unchanged
        // (it is the only feasible minimizer direction), multiplier 1.
        let id = Mat::identity(2);
        let sol = kkt_system_solve(&id, &a, &[0.0, 0.0], &[-2.0], 1e-8).unwrap();
        assert!((sol.step[0] - 1.0).abs() < 1e-12);
        assert!((sol.multipliers[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kkt_solve_unconstrained_reduces_to_newton() {
        let mut h = Mat::zeros(2, 2);
        h[(0, 0)] = 4.0;
        h[(1, 1)] = 9.0;
        let a = Mat::zeros(0, 2);
        let sol = kkt_system_solve(&h, &a, &[4.0, -9.0], &[], 1e-8).unwrap();
        assert!((sol.step[0] + 1.0).abs() < 1e-12);
        assert!((sol.step[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kkt_solve_random_instance_has_small_residual() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let (n, m) = (14, 6);
        let mut h = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = rng.gen_range(-1.0..1.0);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
            h[(i, i)] += 4.0;
        }
        let mut a = Mat::zeros(m, n);
        for r in 0..m {
            for c in 0..n {
                a[(r, c)] = rng.gen_range(-1.0..1.0);
            }
        }
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sol = kkt_system_solve(&h, &a, &g, &c, 1e-8).unwrap();
        // Substitute back: W d − Aᵀλ + g = 0 and A d + c = 0.
        let wd = h.mul_vec(&sol.step);
        let at_l = a.mul_vec_transposed(&sol.multipliers);
        for i in 0..n {
            assert!((wd[i] - at_l[i] + g[i]).abs() < 1e-10);
        }
        let ad = a.mul_vec(&sol.step);
        for r in 0..m {
            assert!((ad[r] + c[r]).abs() < 1e-10);
        }
    }

    #[test]
    fn linesearch_accepts_full_newton_step_on_quadratic() {
        let nlp = unconstrained(1, Term { vars: vec![0], map: diff::map(1, 1, ShiftSq) });
        // From x = 0 the Newton step is +2 exactly.
        let (alpha, _) =
            merit_linesearch(&nlp, &[0.0], &[2.0], &[], 1.0, &SqpOptions::default()).unwrap();
        assert_eq!(alpha, 1.0);
    }

    struct Rosenbrock;
    impl diff::Program for Rosenbrock {
        fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
            let one = T::constant(1.0);
            let hundred = T::constant(100.0);
            let a = one - x[0];
            let b = x[1] - x[0] * x[0];
            out[0] = a * a + hundred * b * b;
        }
    }

    #[test]
    fn linesearch_backtracks_on_overshoot() {
        let nlp = unconstrained(2, Term { vars: vec![0, 1], map: diff::map(2, 1, Rosenbrock) });
        // Triple the Newton step from a standard start: guaranteed overshoot.
        let x = [-1.2, 1.0];
        let g = nlp.objective_gradient(&x);
        let w = nlp.lagrangian_hessian(&x, &[], 1.0);
        let a = Mat::zeros(0, 2);
        let kkt = kkt_system_solve(&w, &a, &g, &[], 1e-8).unwrap();
        let big_step: Vec<f64> = kkt.step.iter().map(|s| 3.0 * s).collect();
        let (alpha, _) =
            merit_linesearch(&nlp, &x, &big_step, &[], 1.0, &SqpOptions::default()).unwrap();
        assert!(alpha < 1.0, "overshoot must backtrack, got {alpha}");
    }

    #[test]
    fn rosenbrock_converges() {
        let nlp = unconstrained(2, Term { vars: vec![0, 1], map: diff::map(2, 1, Rosenbrock) });
        let res = solve(&nlp, &[-1.2, 1.0], &SqpOptions::default()).unwrap();
        assert!(res.converged(), "status {:?}", res.status);
        assert!((res.solution[0] - 1.0).abs() < 1e-7);
        assert!((res.solution[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn deterministic_replay() {
        let nlp = unconstrained(2, Term { vars: vec![0, 1], map: diff::map(2, 1, Rosenbrock) });
        let a = solve(&nlp, &[-1.2, 1.0], &SqpOptions::default()).unwrap();
        let b = solve(&nlp, &[-1.2, 1.0], &SqpOptions::default()).unwrap();
        assert_eq!(a.log.len(), b.log.len());
        for (ra, rb) in a.log.iter().zip(&b.log) {
            assert_eq!(ra.format_line(), rb.format_line());
        }
    }
}
