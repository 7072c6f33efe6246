//! Forward-mode automatic differentiation over dual numbers.
//!
//! All derivative needs of the crate route through here: gradients and
//! Jacobians come from single dual sweeps, Hessians from nested duals
//! (dual-over-dual), and a central finite-difference oracle cross-checks
//! any map independently of the dual path.
//!
//! Maps are written once, generically over the [`Real`] scalar, and then
//! evaluated at any nesting depth through the object-safe [`SmoothMap`]
//! trait. Depth 4 exists because some constraint rows solve a small linear
//! system whose matrix is itself a second derivative; differentiating such
//! a row twice needs duals four levels deep.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },
}

/// Scalar usable in smooth-map evaluations: `f64` or a dual number of any
/// supported nesting depth.
pub trait Real:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
    + 'static
{
    fn constant(c: f64) -> Self;
    /// Value channel, all derivative information stripped.
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, k: i32) -> Self;
    /// Evaluate a dynamically-typed map at this scalar's nesting depth.
    fn eval_map(map: &dyn SmoothMap, x: &[Self], out: &mut [Self]);
}

/// Dual number: value plus directional sensitivity. Nesting `Dual<Dual<..>>`
/// yields higher derivative orders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub val: T,
    pub dot: T,
}

pub type D1 = Dual<f64>;
pub type D2 = Dual<D1>;
pub type D3 = Dual<D2>;
pub type D4 = Dual<D3>;

impl<T: Real> Dual<T> {
    pub fn new(val: T, dot: T) -> Self {
        Dual { val, dot }
    }

    pub fn variable(val: T) -> Self {
        Dual { val, dot: T::constant(1.0) }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Dual { val: self.val + rhs.val, dot: self.dot + rhs.dot }
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Dual { val: self.val - rhs.val, dot: self.dot - rhs.dot }
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Dual {
            val: self.val * rhs.val,
            dot: self.val * rhs.dot + self.dot * rhs.val,
        }
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let val = self.val / rhs.val;
        Dual {
            val,
            dot: (self.dot - val * rhs.dot) / rhs.val,
        }
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual { val: -self.val, dot: -self.dot }
    }
}

macro_rules! dual_real_impl {
    ($depth:ty, $inner:ty, $eval:ident) => {
        impl Real for $depth {
            fn constant(c: f64) -> Self {
                Dual { val: <$inner>::constant(c), dot: <$inner>::constant(0.0) }
            }
            fn value(self) -> f64 {
                self.val.value()
            }
            fn sin(self) -> Self {
                Dual { val: self.val.sin(), dot: self.val.cos() * self.dot }
            }
            fn cos(self) -> Self {
                Dual { val: self.val.cos(), dot: -self.val.sin() * self.dot }
            }
            fn exp(self) -> Self {
                let e = self.val.exp();
                Dual { val: e, dot: e * self.dot }
            }
            fn ln(self) -> Self {
                Dual { val: self.val.ln(), dot: self.dot / self.val }
            }
            fn sqrt(self) -> Self {
                let s = self.val.sqrt();
                Dual { val: s, dot: self.dot / (s + s) }
            }
            fn powi(self, k: i32) -> Self {
                Dual {
                    val: self.val.powi(k),
                    dot: <$inner>::constant(k as f64) * self.val.powi(k - 1) * self.dot,
                }
            }
            fn eval_map(map: &dyn SmoothMap, x: &[Self], out: &mut [Self]) {
                map.$eval(x, out)
            }
        }
    };
}

impl Real for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, k: i32) -> Self {
        f64::powi(self, k)
    }
    fn eval_map(map: &dyn SmoothMap, x: &[Self], out: &mut [Self]) {
        map.eval_real(x, out)
    }
}

dual_real_impl!(D1, f64, eval_d1);
dual_real_impl!(D2, D1, eval_d2);
dual_real_impl!(D3, D2, eval_d3);
dual_real_impl!(D4, D3, eval_d4);

/// A pure vector map evaluatable over plain reals and dual numbers.
///
/// Evaluation must be side-effect free: identical inputs give identical
/// outputs at every nesting depth.
pub trait SmoothMap: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval_real(&self, x: &[f64], out: &mut [f64]);
    fn eval_d1(&self, x: &[D1], out: &mut [D1]);
    fn eval_d2(&self, x: &[D2], out: &mut [D2]);
    fn eval_d3(&self, x: &[D3], out: &mut [D3]);
    fn eval_d4(&self, x: &[D4], out: &mut [D4]);
}

/// Scalar-generic program body; implement this once and wrap it with
/// [`map`] to obtain a [`SmoothMap`] usable at every derivative depth.
pub trait Program: Send + Sync + 'static {
    fn run<T: Real>(&self, input: &[T], output: &mut [T]);
}

struct ProgramMap<P> {
    input: usize,
    output: usize,
    program: P,
}

impl<P: Program> SmoothMap for ProgramMap<P> {
    fn input_dim(&self) -> usize {
        self.input
    }
    fn output_dim(&self) -> usize {
        self.output
    }
    fn eval_real(&self, x: &[f64], out: &mut [f64]) {
        self.program.run(x, out)
    }
    fn eval_d1(&self, x: &[D1], out: &mut [D1]) {
        self.program.run(x, out)
    }
    fn eval_d2(&self, x: &[D2], out: &mut [D2]) {
        self.program.run(x, out)
    }
    fn eval_d3(&self, x: &[D3], out: &mut [D3]) {
        self.program.run(x, out)
    }
    fn eval_d4(&self, x: &[D4], out: &mut [D4]) {
        self.program.run(x, out)
    }
}

/// Wrap a [`Program`] into a shareable [`SmoothMap`] with declared dimensions.
pub fn map<P: Program>(input: usize, output: usize, program: P) -> Arc<dyn SmoothMap> {
    Arc::new(ProgramMap { input, output, program })
}

/// Program body that takes one derivative internally (one dual level of
/// headroom), so it can be evaluated externally up to depth 3.
pub trait Depth3Program: Send + Sync + 'static {
    fn run<T>(&self, input: &[T], output: &mut [T])
    where
        T: Real,
        Dual<T>: Real;
}

struct Depth3Map<P> {
    input: usize,
    output: usize,
    program: P,
}

impl<P: Depth3Program> SmoothMap for Depth3Map<P> {
    fn input_dim(&self) -> usize {
        self.input
    }
    fn output_dim(&self) -> usize {
        self.output
    }
    fn eval_real(&self, x: &[f64], out: &mut [f64]) {
        self.program.run(x, out)
    }
    fn eval_d1(&self, x: &[D1], out: &mut [D1]) {
        self.program.run(x, out)
    }
    fn eval_d2(&self, x: &[D2], out: &mut [D2]) {
        self.program.run(x, out)
    }
    fn eval_d3(&self, x: &[D3], out: &mut [D3]) {
        self.program.run(x, out)
    }
    fn eval_d4(&self, _x: &[D4], _out: &mut [D4]) {
        unimplemented!("this map supports external derivative depth <= 3")
    }
}

/// Wrap a [`Depth3Program`] into a shareable [`SmoothMap`].
pub fn map_depth3<P: Depth3Program>(
    input: usize,
    output: usize,
    program: P,
) -> Arc<dyn SmoothMap> {
    Arc::new(Depth3Map { input, output, program })
}

/// Program body that takes two derivatives internally (two dual levels of
/// headroom), so it can be evaluated externally up to depth 2.
pub trait Depth2Program: Send + Sync + 'static {
    fn run<T>(&self, input: &[T], output: &mut [T])
    where
        T: Real,
        Dual<T>: Real,
        Dual<Dual<T>>: Real;
}

struct Depth2Map<P> {
    input: usize,
    output: usize,
    program: P,
}

impl<P: Depth2Program> SmoothMap for Depth2Map<P> {
    fn input_dim(&self) -> usize {
        self.input
    }
    fn output_dim(&self) -> usize {
        self.output
    }
    fn eval_real(&self, x: &[f64], out: &mut [f64]) {
        self.program.run(x, out)
    }
    fn eval_d1(&self, x: &[D1], out: &mut [D1]) {
        self.program.run(x, out)
    }
    fn eval_d2(&self, x: &[D2], out: &mut [D2]) {
        self.program.run(x, out)
    }
    fn eval_d3(&self, _x: &[D3], _out: &mut [D3]) {
        unimplemented!("this map supports external derivative depth <= 2")
    }
    fn eval_d4(&self, _x: &[D4], _out: &mut [D4]) {
        unimplemented!("this map supports external derivative depth <= 2")
    }
}

/// Wrap a [`Depth2Program`] into a shareable [`SmoothMap`].
pub fn map_depth2<P: Depth2Program>(
    input: usize,
    output: usize,
    program: P,
) -> Arc<dyn SmoothMap> {
    Arc::new(Depth2Map { input, output, program })
}

fn check_input(f: &dyn SmoothMap, x: &[f64], what: &'static str) -> Result<(), DiffError> {
    if x.len() != f.input_dim() {
        return Err(DiffError::DimensionMismatch {
            what,
            expected: f.input_dim(),
            got: x.len(),
        });
    }
    Ok(())
}

fn ensure_finite(values: &[f64], context: &'static str) -> Result<(), DiffError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DiffError::NonFinite { context })
    }
}

/// Evaluate a map over plain reals.
pub fn eval(f: &dyn SmoothMap, x: &[f64]) -> Result<Vec<f64>, DiffError> {
    check_input(f, x, "eval input")?;
    let mut out = vec![0.0; f.output_dim()];
    f.eval_real(x, &mut out);
    ensure_finite(&out, "eval")?;
    Ok(out)
}

/// ∇f(x)·v for scalar-valued f, computed in a single dual sweep seeded with v.
pub fn directional_derivative(
    f: &dyn SmoothMap,
    x: &[f64],
    v: &[f64],
) -> Result<f64, DiffError> {
    check_input(f, x, "directional_derivative input")?;
    if v.len() != x.len() {
        return Err(DiffError::DimensionMismatch {
            what: "directional_derivative seed",
            expected: x.len(),
            got: v.len(),
        });
    }
    if f.output_dim() != 1 {
        return Err(DiffError::DimensionMismatch {
            what: "directional_derivative output",
            expected: 1,
            got: f.output_dim(),
        });
    }
    let input: Vec<D1> = x.iter().zip(v).map(|(&xi, &vi)| D1::new(xi, vi)).collect();
    let mut out = [D1::constant(0.0)];
    f.eval_d1(&input, &mut out);
    ensure_finite(&[out[0].val, out[0].dot], "directional_derivative")?;
    Ok(out[0].dot)
}

/// Gradient of a scalar-valued map: one dual sweep per coordinate.
pub fn gradient(f: &dyn SmoothMap, x: &[f64]) -> Result<Vec<f64>, DiffError> {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut input: Vec<D1> = x.iter().map(|&xi| D1::constant(xi)).collect();
    check_input(f, x, "gradient input")?;
    if f.output_dim() != 1 {
        return Err(DiffError::DimensionMismatch {
            what: "gradient output",
            expected: 1,
            got: f.output_dim(),
        });
    }
    let mut out = [D1::constant(0.0)];
    for i in 0..n {
        input[i].dot = 1.0;
        f.eval_d1(&input, &mut out);
        input[i].dot = 0.0;
        if !out[0].val.is_finite() {
            return Err(DiffError::NonFinite { context: "gradient" });
        }
        g[i] = out[0].dot;
    }
    ensure_finite(&g, "gradient")?;
    Ok(g)
}

/// Jacobian of a vector map; column j is the forward sweep seeded with e_j.
/// Shape: output_dim × input_dim.
pub fn jacobian(f: &dyn SmoothMap, x: &[f64]) -> Result<crate::linalg::Mat, DiffError> {
    check_input(f, x, "jacobian input")?;
    let (n, m) = (f.input_dim(), f.output_dim());
    let mut jac = crate::linalg::Mat::zeros(m, n);
    let mut input: Vec<D1> = x.iter().map(|&xi| D1::constant(xi)).collect();
    let mut out = vec![D1::constant(0.0); m];
    for j in 0..n {
        input[j].dot = 1.0;
        f.eval_d1(&input, &mut out);
        input[j].dot = 0.0;
        for i in 0..m {
            if !out[i].val.is_finite() || !out[i].dot.is_finite() {
                return Err(DiffError::NonFinite { context: "jacobian" });
            }
            jac[(i, j)] = out[i].dot;
        }
    }
    Ok(jac)
}

/// Hessian of a scalar-valued map via nested dual sweeps, symmetrized by
/// averaging.
pub fn hessian(f: &dyn SmoothMap, x: &[f64]) -> Result<crate::linalg::Mat, DiffError> {
    check_input(f, x, "hessian input")?;
    if f.output_dim() != 1 {
        return Err(DiffError::DimensionMismatch {
            what: "hessian output",
            expected: 1,
            got: f.output_dim(),
        });
    }
    let n = x.len();
    let mut h = crate::linalg::Mat::zeros(n, n);
    let mut input: Vec<D2> = x
        .iter()
        .map(|&xi| D2::constant(xi))
        .collect();
    let mut out = [D2::constant(0.0)];
    for i in 0..n {
        input[i].val.dot = 1.0; // outer seed e_i
        for j in 0..=i {
            input[j].dot.val = 1.0; // inner seed e_j
            f.eval_d2(&input, &mut out);
            input[j].dot.val = 0.0;
            let hij = out[0].dot.dot;
            if !hij.is_finite() {
                return Err(DiffError::NonFinite { context: "hessian" });
            }
            h[(i, j)] = hij;
            h[(j, i)] = hij;
        }
        input[i].val.dot = 0.0;
    }
    // Off-diagonal pairs were evaluated once each; averaging with the mirror
    // is exact here, but re-symmetrize defensively against future edits.
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = avg;
            h[(j, i)] = avg;
        }
    }
    Ok(h)
}

/// Outcome of comparing the dual-number Jacobian against central finite
/// differences. A failed comparison is a report, not an error.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_relative_deviation: f64,
    pub worst_row: usize,
    pub worst_col: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Central-difference step: cbrt(eps) · max(1, ‖x‖).
pub fn fd_step(x: &[f64]) -> f64 {
    f64::EPSILON.cbrt() * crate::linalg::two_norm(x).max(1.0)
}

/// Compare `jacobian(f, x)` against central finite differences.
pub fn fd_check(f: &dyn SmoothMap, x: &[f64], tolerance: f64) -> Result<FdReport, DiffError> {
    assert!(tolerance > 0.0, "tolerance must be positive");
    check_input(f, x, "fd_check input")?;
    let jac = jacobian(f, x)?;
    let h = fd_step(x);
    let (n, m) = (f.input_dim(), f.output_dim());
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    let mut worst = (0.0, 0usize, 0usize);
    for j in 0..n {
        let orig = xp[j];
        xp[j] = orig + h;
        f.eval_real(&xp, &mut fp);
        xp[j] = orig - h;
        f.eval_real(&xp, &mut fm);
        xp[j] = orig;
        for i in 0..m {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            let ad = jac[(i, j)];
            let dev = (fd - ad).abs() / ad.abs().max(fd.abs()).max(1.0);
            if dev > worst.0 {
                worst = (dev, i, j);
            }
        }
    }
    Ok(FdReport {
        max_relative_deviation: worst.0,
        worst_row: worst.1,
        worst_col: worst.2,
        tolerance,
        pass: worst.0 <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Square;
    impl Program for Square {
        fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
            out[0] = x[0] * x[0];
        }
    }

    struct Constant(f64);
    impl Program for Constant {
        fn run<T: Real>(&self, _x: &[T], out: &mut [T]) {
            out[0] = T::constant(self.0);
        }
    }

    struct Product;
    impl Program for Product {
        fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
            out[0] = x[0] * x[1];
        }
    }

    struct HalfNormSq;
    impl Program for HalfNormSq {
        fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
            let mut acc = T::constant(0.0);
            for &xi in x {
                acc = acc + xi * xi;
            }
            out[0] = T::constant(0.5) * acc;
        }
    }

    struct Identity(usize);
    impl Program for Identity {
        fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
            out.copy_from_slice(x);
        }
    }

    struct SumDiff;
    impl Program for SumDiff {
        fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
            out[0] = x[0] + x[1];
            out[1] = x[0] - x[1];
        }
    }

    struct Cube;
    impl Program for Cube {
        fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
            out[0] = x[0].powi(3);
        }
    }

    struct Linear {
        rows: usize,
        cols: usize,
        a: Vec<f64>,
    }
    impl Program for Linear {
        fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
            for r in 0..self.rows {
                let mut acc = T::constant(0.0);
                for c in 0..self.cols {
                    acc = acc + T::constant(self.a[r * self.cols + c]) * x[c];
                }
                out[r] = acc;
            }
        }
    }

    struct Chained {
        first: Arc<dyn SmoothMap>,
        second: Arc<dyn SmoothMap>,
    }
    impl Program for Chained {
        fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
            let mut mid = vec![T::constant(0.0); self.first.output_dim()];
            T::eval_map(self.first.as_ref(), x, &mut mid);
            T::eval_map(self.second.as_ref(), &mid, out);
        }
    }

    struct Transcendental;
    impl Program for Transcendental {
        fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
            // Smooth on all of R²: the sqrt argument stays >= 1.
            let guarded = x[1].sin().exp() + x[0] * x[0] + T::constant(1.0);
            out[0] = guarded.sqrt() * x[0].cos() + (x[0] * x[0] + T::constant(1.0)).ln();
        }
    }

    #[test]
    fn directional_derivative_examples() {
        let sq = map(1, 1, Square);
        assert_eq!(directional_derivative(sq.as_ref(), &[3.0], &[1.0]).unwrap(), 6.0);

        let c = map(1, 1, Constant(4.2));
        assert_eq!(directional_derivative(c.as_ref(), &[1.7], &[2.5]).unwrap(), 0.0);

        let prod = map(2, 1, Product);
        assert_eq!(
            directional_derivative(prod.as_ref(), &[2.0, 3.0], &[1.0, 0.0]).unwrap(),
            3.0
        );
    }

    #[test]
    fn gradient_examples() {
        let f = map(2, 1, HalfNormSq);
        assert_eq!(gradient(f.as_ref(), &[1.0, -2.0]).unwrap(), vec![1.0, -2.0]);

        let prod = map(2, 1, Product);
        assert_eq!(gradient(prod.as_ref(), &[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn jacobian_examples() {
        let id = map(3, 3, Identity(3));
        let j = jacobian(id.as_ref(), &[0.3, -0.7, 2.0]).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                assert_eq!(j[(i, k)], if i == k { 1.0 } else { 0.0 });
            }
        }

        let sd = map(2, 2, SumDiff);
        let j = jacobian(sd.as_ref(), &[0.0, 0.0]).unwrap();
        assert_eq!((j[(0, 0)], j[(0, 1)], j[(1, 0)], j[(1, 1)]), (1.0, 1.0, 1.0, -1.0));
    }

    #[test]
    fn hessian_examples() {
        // f = ½ xᵀ A x with symmetric A has Hessian A.
        struct QuadForm;
        impl Program for QuadForm {
            fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
                let a00 = T::constant(2.0);
                let a01 = T::constant(-1.0);
                let a11 = T::constant(3.0);
                out[0] = T::constant(0.5)
                    * (a00 * x[0] * x[0]
                        + a01 * x[0] * x[1]
                        + a01 * x[1] * x[0]
                        + a11 * x[1] * x[1]);
            }
        }
        let f = map(2, 1, QuadForm);
        let h = hessian(f.as_ref(), &[0.4, -1.1]).unwrap();
        assert!((h[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((h[(0, 1)] + 1.0).abs() < 1e-12);
        assert!((h[(1, 0)] + 1.0).abs() < 1e-12);
        assert!((h[(1, 1)] - 3.0).abs() < 1e-12);

        let cube = map(1, 1, Cube);
        let h = hessian(cube.as_ref(), &[2.0]).unwrap();
        assert!((h[(0, 0)] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn fd_check_examples() {
        let lin = map(
            3,
            2,
            Linear { rows: 2, cols: 3, a: vec![1.0, -2.0, 0.5, 0.0, 3.0, 1.0] },
        );
        let rep = fd_check(lin.as_ref(), &[0.2, -0.4, 1.1], 1e-6).unwrap();
        assert!(rep.pass);
        assert!(rep.max_relative_deviation < 1e-9);

        struct Exp;
        impl Program for Exp {
            fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
                out[0] = x[0].exp();
            }
        }
        let e = map(1, 1, Exp);
        assert!(fd_check(e.as_ref(), &[0.0], 1e-6).unwrap().pass);

        let t = map(2, 1, Transcendental);
        assert!(fd_check(t.as_ref(), &[0.3, -0.2], 1e-6).unwrap().pass);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let sq = map(1, 1, Square);
        let err = directional_derivative(sq.as_ref(), &[1.0, 2.0], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, DiffError::DimensionMismatch { .. }));
    }

    #[test]
    fn non_finite_is_reported() {
        struct LogMap;
        impl Program for LogMap {
            fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
                out[0] = x[0].ln();
            }
        }
        let f = map(1, 1, LogMap);
        let err = gradient(f.as_ref(), &[-1.0]).unwrap_err();
        assert!(matches!(err, DiffError::NonFinite { .. }));
    }

    #[test]
    fn fourth_depth_nested_duals_recover_known_derivatives() {
        // d⁴/dx⁴ of x⁴ is 24; reach it by seeding all four nesting levels.
        struct Quartic;
        impl Program for Quartic {
            fn run<T: Real>(&self, x: &[T], out: &mut [T]) {
                out[0] = x[0].powi(4);
            }
        }
        let f = map(1, 1, Quartic);
        let mut x = D4::constant(1.3);
        x.val.val.val.dot = 1.0;
        x.val.val.dot.val = 1.0;
        x.val.dot.val.val = 1.0;
        x.dot.val.val.val = 1.0;
        let mut out = [D4::constant(0.0)];
        f.eval_d4(&[x], &mut out);
        assert!((out[0].dot.dot.dot.dot - 24.0).abs() < 1e-10);
        // Value channel untouched by seeding.
        assert_eq!(out[0].val.val.val.val, 1.3f64.powi(4));
    }

    proptest! {
        /// Value channel of dual arithmetic is identical to plain evaluation.
        #[test]
        fn value_channel_matches_plain(a in -5.0..5.0f64, b in -5.0..5.0f64) {
            let t = map(2, 1, Transcendental);
            let plain = eval(t.as_ref(), &[a, b]).unwrap()[0];
            let input = [D1::constant(a), D1::constant(b)];
            let mut out = [D1::constant(0.0)];
            t.eval_d1(&input, &mut out);
            prop_assert_eq!(plain.to_bits(), out[0].val.to_bits());
        }

        /// gradient agrees with directional_derivative against basis vectors.
        #[test]
        fn gradient_is_contraction_of_directional(x0 in -3.0..3.0f64, x1 in -3.0..3.0f64) {
            let f = map(2, 1, Product);
            let g = gradient(f.as_ref(), &[x0, x1]).unwrap();
            for i in 0..2 {
                let mut e = [0.0; 2];
                e[i] = 1.0;
                let d = directional_derivative(f.as_ref(), &[x0, x1], &e).unwrap();
                prop_assert_eq!(g[i], d);
            }
        }

        /// Chain rule: the Jacobian of a composition of linear maps is the
        /// matrix product of the Jacobians.
        #[test]
        fn jacobian_of_composition_is_product(
            a in proptest::collection::vec(-2.0..2.0f64, 6),
            b in proptest::collection::vec(-2.0..2.0f64, 6),
            x in proptest::collection::vec(-2.0..2.0f64, 3),
        ) {
            let first = map(3, 2, Linear { rows: 2, cols: 3, a: a.clone() });
            let second = map(2, 3, Linear { rows: 3, cols: 2, a: b.clone() });
            let composed = map(3, 3, Chained { first: first.clone(), second: second.clone() });

            let ja = jacobian(first.as_ref(), &x).unwrap();
            let jb = jacobian(second.as_ref(), &[0.0, 0.0]).unwrap();
            let jc = jacobian(composed.as_ref(), &x).unwrap();
            let prod = jb.matmul(&ja);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((jc[(i, j)] - prod[(i, j)]).abs() < 1e-12);
                }
            }
        }
    }
}
