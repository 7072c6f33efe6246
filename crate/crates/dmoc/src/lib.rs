//! Direct optimal control of mechanical systems via discrete variational
//! mechanics (DMOC).
//!
//! The library discretizes the Lagrange-d'Alembert principle with midpoint
//! quadrature, transcribes the resulting forced discrete Euler-Lagrange
//! equations into an equality-constrained NLP, and solves it with a dense
//! SQP method. Two collocation baselines (implicit midpoint on the
//! Hamiltonian form and on the tangent-space form) share the same NLP
//! machinery, which makes structural comparisons — momentum-force balance,
//! variable counts, adjoint structure, convergence order — sharp.
//!
//! Module map:
//!
//! - [`diff`]: forward-mode automatic differentiation over dual numbers,
//!   plus a finite-difference oracle.
//! - [`linalg`]: dense factorizations (LU, symmetric-indefinite LDLᵀ).
//! - [`model`]: continuous forced Lagrangian mechanics.
//! - [`discmech`]: discrete Lagrangian, discrete forces, discrete
//!   Euler-Lagrange residuals, discrete Legendre transforms, momentum
//!   audits, order-of-consistency checks.
//! - [`simulate`]: forward variational integration (rollouts).
//! - [`ocp`]: optimal control problems and their NLP transcription,
//!   Mayer transform, KKT checks and discrete-adjoint extraction.
//! - [`sqp`]: equality-constrained SQP with an l1 merit line search.
//! - [`baselines`]: the two collocation transcriptions and solution
//!   comparison helpers.
//! - [`problems`]: benchmark problems (low-thrust orbit transfer,
//!   two-link manipulator) and small test systems.
//! - [`runner`]: configuration-driven batch runs behind the `dmoc` binary
//!   (solve / converge / audit / compare).

pub mod baselines;
pub mod diff;
pub mod discmech;
pub mod linalg;
pub mod model;
pub mod ocp;
pub mod problems;
pub mod runner;
pub mod simulate;
pub mod sqp;
