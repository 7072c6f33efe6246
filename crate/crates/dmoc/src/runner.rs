//! Configuration-driven batch runs: solve, convergence studies, audits and
//! cross-method comparisons, with machine-readable reports.
//!
//! Every run is a deterministic function of its configuration; reports
//! embed the fully resolved configuration (defaults included) and isolate
//! wall-clock information to a single metadata field.

use crate::baselines::{self, SolvedInstance};
use crate::discmech::{self, OrderEstimate};
use crate::model;
use crate::ocp::{self, Nlp, Ocp};
use crate::problems;
use crate::simulate;
use crate::sqp::{self, SqpOptions, SqpStatus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failed with status {0:?}")]
    SolverFailure(SqpStatus),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

impl RunnerError {
    /// Process exit code contract: 1 solver failure, 2 configuration error.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io { path: path.to_path_buf(), source }
}

/// Transcription method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Dmoc,
    HamMidpoint,
    VelMidpoint,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Dmoc, Method::HamMidpoint, Method::VelMidpoint];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Dmoc => "dmoc",
            Method::HamMidpoint => "ham-midpoint",
            Method::VelMidpoint => "vel-midpoint",
        }
    }

    pub fn parse(s: &str) -> Result<Method, RunnerError> {
        match s {
            "dmoc" => Ok(Method::Dmoc),
            "ham-midpoint" => Ok(Method::HamMidpoint),
            "vel-midpoint" => Ok(Method::VelMidpoint),
            other => Err(RunnerError::Config(format!(
                "unknown method `{other}`; valid methods: dmoc, ham-midpoint, vel-midpoint"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Problem selection with parameters. Unset parameters resolve to the
/// documented defaults.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ProblemConfig {
    Orbital {
        #[serde(default)]
        params: problems::OrbitalParams,
    },
    TwoLink {
        #[serde(default)]
        params: problems::TwoLinkParams,
    },
    FreeParticle {
        #[serde(default)]
        params: problems::FreeParticleParams,
    },
    /// Rollout-only fixture for audits; has no optimal control problem.
    Pendulum {
        #[serde(default)]
        params: PendulumRollout,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PendulumRollout {
    pub q0: f64,
    pub qdot0: f64,
    pub h: f64,
    pub steps: usize,
}

impl Default for PendulumRollout {
    fn default() -> Self {
        PendulumRollout { q0: 0.0, qdot0: 1.0, h: 0.1, steps: 10_000 }
    }
}

impl ProblemConfig {
    pub fn label(&self) -> &'static str {
        match self {
            ProblemConfig::Orbital { .. } => "orbital",
            ProblemConfig::TwoLink { .. } => "two-link",
            ProblemConfig::FreeParticle { .. } => "free-particle",
            ProblemConfig::Pendulum { .. } => "pendulum",
        }
    }

    pub fn build_ocp(&self, intervals: usize) -> Result<Ocp, RunnerError> {
        match self {
            ProblemConfig::Orbital { params } => Ok(problems::orbital_transfer(params, intervals)),
            ProblemConfig::TwoLink { params } => Ok(problems::two_link(params, intervals)),
            ProblemConfig::FreeParticle { params } => {
                Ok(problems::free_particle_transfer(params, intervals))
            }
            ProblemConfig::Pendulum { .. } => Err(RunnerError::Config(
                "problem `pendulum` is a rollout fixture; only `audit` accepts it".into(),
            )),
        }
    }
}

/// One batch run: problem, method, grid size, solver options, output paths.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_intervals")]
    pub intervals: usize,
    #[serde(default)]
    pub solver: SqpOptions,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Grid for convergence studies; the largest entry is the reference.
    #[serde(default)]
    pub grid: Vec<usize>,
}

fn default_method() -> Method {
    Method::Dmoc
}

fn default_intervals() -> usize {
    32
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, RunnerError> {
        serde_json::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, RunnerError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }
}

/// Transcribe with the method's layout and documented initial guess.
pub fn transcription(
    ocp: &Ocp,
    method: Method,
) -> Result<(Nlp, Vec<f64>), RunnerError> {
    match method {
        Method::Dmoc => {
            let nlp = ocp::transcribe(ocp).map_err(|e| RunnerError::Other(e.to_string()))?;
            let guess = ocp::initial_guess(ocp, &nlp);
            Ok((nlp, guess))
        }
        Method::HamMidpoint => {
            let nlp = baselines::transcribe_hamiltonian_midpoint(ocp)
                .map_err(|e| RunnerError::Other(e.to_string()))?;
            let guess = baselines::hamiltonian_initial_guess(ocp, &nlp);
            Ok((nlp, guess))
        }
        Method::VelMidpoint => {
            let nlp = baselines::transcribe_velocity_midpoint(ocp)
                .map_err(|e| RunnerError::Other(e.to_string()))?;
            let guess = baselines::velocity_initial_guess(ocp, &nlp);
            Ok((nlp, guess))
        }
    }
}

/// Solve one instance from the documented initial guess (or a supplied one).
pub fn solve_instance(
    config: &RunConfig,
    intervals: usize,
    warm_start: Option<&[f64]>,
) -> Result<SolvedInstance, RunnerError> {
    let ocp = config.problem.build_ocp(intervals)?;
    let (nlp, guess) = transcription(&ocp, config.method)?;
    let x0 = match warm_start {
        Some(x) if x.len() == nlp.dimension => x.to_vec(),
        Some(_) => return Err(RunnerError::Other("warm start has wrong dimension".into())),
        None => guess,
    };
    let result =
        sqp::solve(&nlp, &x0, &config.solver).map_err(|e| RunnerError::Other(e.to_string()))?;
    Ok(SolvedInstance { method: config.method.name().to_string(), ocp, nlp, result })
}

/// Counts reported for every transcription.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeReport {
    pub variables: usize,
    pub constraints: usize,
}

/// JSON report of a solve run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub config: RunConfig,
    pub metadata: Metadata,
    pub method: Method,
    pub status: SqpStatus,
    pub objective: f64,
    pub major_iterations: usize,
    pub minor_work: u64,
    pub kkt: KktResiduals,
    /// Telescoped Noether balance when the system has a symmetry generator.
    pub noether_total: Option<f64>,
    pub counts: SizeReport,
    pub layout: ocp::VariableLayout,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub feasibility: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metadata {
    /// The only field that varies between identical runs.
    pub created_at: String,
    pub tool: String,
}

impl Metadata {
    fn now() -> Metadata {
        let seconds = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Metadata { created_at: format!("unix:{seconds}"), tool: format!("dmoc {}", env!("CARGO_PKG_VERSION")) }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunnerError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

/// Full round-trip precision for CSV numbers (17 significant digits).
fn fmt_g17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write the trajectory CSV: t, configurations, controls (interval starting
/// at the row's node; empty on the last row), reconstructed momenta.
fn trajectory_csv(instance: &SolvedInstance) -> Result<String, RunnerError> {
    let traj = instance.trajectory();
    let sys = &instance.ocp.sys;
    let h = traj.h;
    let velocities = instance
        .node_velocities()
        .map_err(|e| RunnerError::Other(e.to_string()))?;
    let mut out = String::new();
    out.push('t');
    for l in &sys.q_labels {
        out.push_str(&format!(",{l}"));
    }
    for l in &sys.u_labels {
        out.push_str(&format!(",{l}"));
    }
    for l in &sys.q_labels {
        out.push_str(&format!(",p_{l}"));
    }
    out.push('\n');
    for k in 0..traj.q.len() {
        out.push_str(&fmt_g17(h * k as f64));
        for v in &traj.q[k] {
            out.push(',');
            out.push_str(&fmt_g17(*v));
        }
        if k < traj.intervals() {
            for v in &traj.u[k] {
                out.push(',');
                out.push_str(&fmt_g17(*v));
            }
        } else {
            for _ in 0..sys.m {
                out.push(',');
            }
        }
        let p = model::legendre(sys, &traj.q[k], &velocities[k])
            .map_err(|e| RunnerError::Other(e.to_string()))?;
        for v in &p {
            out.push(',');
            out.push_str(&fmt_g17(*v));
        }
        out.push('\n');
    }
    Ok(out)
}

fn noether_total(instance: &SolvedInstance) -> Option<f64> {
    if instance.ocp.sys.generators.is_empty() {
        return None;
    }
    discmech::noether_audit(&instance.ocp.sys, &instance.trajectory(), 0)
        .ok()
        .map(|a| a.total)
}

/// Run `solve`: solve the configured instance and persist report.json,
/// trajectory.csv and iterations.log into the output directory.
pub fn run_solve(config: &RunConfig) -> Result<SolveReport, RunnerError> {
    let instance = solve_instance(config, config.intervals, None)?;
    let report = SolveReport {
        config: config.clone(),
        metadata: Metadata::now(),
        method: config.method,
        status: instance.result.status,
        objective: instance.objective(),
        major_iterations: instance.result.major_iterations,
        minor_work: instance.result.minor_work,
        kkt: KktResiduals {
            stationarity: instance.result.stationarity,
            feasibility: instance.result.feasibility,
        },
        noether_total: noether_total(&instance),
        counts: SizeReport {
            variables: instance.nlp.dimension,
            constraints: instance.nlp.constraint_count,
        },
        layout: instance.nlp.layout.clone(),
    };

    let dir = &config.output_dir;
    write_file(
        &dir.join("report.json"),
        &serde_json::to_string_pretty(&report).map_err(|e| RunnerError::Other(e.to_string()))?,
    )?;
    write_file(&dir.join("trajectory.csv"), &trajectory_csv(&instance)?)?;
    let log: String = instance
        .result
        .log
        .iter()
        .map(|r| r.format_line() + "\n")
        .collect();
    write_file(&dir.join("iterations.log"), &log)?;

    if !instance.result.converged() {
        return Err(RunnerError::SolverFailure(instance.result.status));
    }
    Ok(report)
}

/// One row of a convergence table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub intervals: usize,
    pub h: f64,
    pub state_error: f64,
    pub control_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config: RunConfig,
    pub metadata: Metadata,
    pub reference_intervals: usize,
    pub rows: Vec<ConvergenceRow>,
    /// Fitted slopes of log error against log h; `None` when the errors sit
    /// at roundoff and the discretization is exact for the problem.
    pub state_slope: Option<f64>,
    pub control_slope: Option<f64>,
    pub exact: bool,
}

fn fit_slope(rows: &[(f64, f64)]) -> f64 {
    let n = rows.len() as f64;
    let xbar = rows.iter().map(|r| r.0.ln()).sum::<f64>() / n;
    let ybar = rows.iter().map(|r| r.1.max(1e-300).ln()).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (h, e) in rows {
        let dx = h.ln() - xbar;
        num += dx * (e.max(1e-300).ln() - ybar);
        den += dx * dx;
    }
    num / den
}

/// Run `converge`: solve the grid against the finest entry as reference and
/// fit self-convergence slopes of the state and control errors.
///
/// Grid entries must divide the reference so nodes align. Runs fan out over
/// a worker pool; each run starts from the documented guess interpolated
/// from the next-coarser solve (deterministic continuation).
pub fn run_converge(config: &RunConfig) -> Result<ConvergenceReport, RunnerError> {
    let mut grid = config.grid.clone();
    if grid.is_empty() {
        grid = vec![8, 16, 32, 64, 128, 512];
    }
    grid.sort_unstable();
    grid.dedup();
    if grid.len() < 3 {
        return Err(RunnerError::Config("grid needs at least 3 entries".into()));
    }
    let reference_n = *grid.last().unwrap();
    for &g in &grid {
        if reference_n % g != 0 {
            return Err(RunnerError::Config(format!(
                "grid entry {g} does not divide the reference {reference_n}"
            )));
        }
    }

    // Continuation ladder: solve in increasing order, warm-starting each run
    // from the interpolated previous solution. Deterministic and documented.
    let mut solved: Vec<SolvedInstance> = Vec::with_capacity(grid.len());
    for (i, &n_i) in grid.iter().enumerate() {
        let warm = if i == 0 {
            None
        } else {
            Some(interpolate_solution(&solved[i - 1], grid[i - 1], n_i, config)?)
        };
        let inst = solve_instance(config, n_i, warm.as_deref())?;
        if !inst.result.converged() {
            return Err(RunnerError::SolverFailure(inst.result.status));
        }
        solved.push(inst);
    }

    let reference = solved.last().unwrap();
    let ref_traj = reference.trajectory();
    let horizon = reference.ocp.t_horizon;

    let rows: Vec<ConvergenceRow> = solved[..solved.len() - 1]
        .par_iter()
        .map(|inst| {
            let traj = inst.trajectory();
            let n_i = traj.intervals();
            let stride = reference_n / n_i;
            let mut state_error = 0.0f64;
            for k in 0..=n_i {
                let qa = &traj.q[k];
                let qb = &ref_traj.q[k * stride];
                let mut norm2 = 0.0;
                for i in 0..qa.len() {
                    norm2 += (qa[i] - qb[i]).powi(2);
                }
                state_error = state_error.max(norm2.sqrt());
            }
            // Controls live at interval midpoints; interpolate the reference
            // control linearly between its midpoint samples.
            let mut control_error = 0.0f64;
            let h_ref = ref_traj.h;
            for k in 0..n_i {
                let t_mid = (k as f64 + 0.5) * traj.h;
                let u_ref = interp_controls(&ref_traj.u, h_ref, t_mid);
                let mut norm2 = 0.0;
                for i in 0..traj.u[k].len() {
                    norm2 += (traj.u[k][i] - u_ref[i]).powi(2);
                }
                control_error = control_error.max(norm2.sqrt());
            }
            ConvergenceRow {
                intervals: n_i,
                h: horizon / n_i as f64,
                state_error,
                control_error,
            }
        })
        .collect();

    let state_scale = ref_traj
        .q
        .iter()
        .flatten()
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let exact = rows
        .iter()
        .all(|r| r.state_error <= 1e-12 * state_scale && r.control_error <= 1e-12);
    let (state_slope, control_slope) = if exact {
        (None, None)
    } else {
        (
            Some(fit_slope(
                &rows.iter().map(|r| (r.h, r.state_error)).collect::<Vec<_>>(),
            )),
            Some(fit_slope(
                &rows.iter().map(|r| (r.h, r.control_error)).collect::<Vec<_>>(),
            )),
        )
    };

    let report = ConvergenceReport {
        config: config.clone(),
        metadata: Metadata::now(),
        reference_intervals: reference_n,
        rows,
        state_slope,
        control_slope,
        exact,
    };
    write_file(
        &config.output_dir.join("report.json"),
        &serde_json::to_string_pretty(&report).map_err(|e| RunnerError::Other(e.to_string()))?,
    )?;
    Ok(report)
}

/// Piecewise-linear interpolation of midpoint control samples.
fn interp_controls(u: &[Vec<f64>], h: f64, t: f64) -> Vec<f64> {
    let m = u[0].len();
    let pos = t / h - 0.5;
    if pos <= 0.0 {
        return u[0].clone();
    }
    let last = u.len() - 1;
    if pos >= last as f64 {
        return u[last].clone();
    }
    let k = pos.floor() as usize;
    let w = pos - k as f64;
    (0..m).map(|i| (1.0 - w) * u[k][i] + w * u[k + 1][i]).collect()
}

/// Interpolate a coarse solution onto a finer grid in the same layout.
fn interpolate_solution(
    coarse: &SolvedInstance,
    coarse_n: usize,
    fine_n: usize,
    config: &RunConfig,
) -> Result<Vec<f64>, RunnerError> {
    let ocp = config.problem.build_ocp(fine_n)?;
    let (nlp, mut x) = transcription(&ocp, config.method)?;
    let traj = coarse.trajectory();
    let layout = &nlp.layout;
    let ratio = coarse_n as f64 / fine_n as f64;
    // Configurations: linear interpolation of coarse nodes.
    for k in 0..=fine_n {
        let s = k as f64 * ratio;
        let i0 = (s.floor() as usize).min(coarse_n - 1);
        let w = s - i0 as f64;
        let o = layout.config_offset(k);
        for c in 0..ocp.sys.n {
            x[o + c] = (1.0 - w) * traj.q[i0][c] + w * traj.q[i0 + 1][c];
        }
    }
    // Controls: nearest-midpoint sample of the coarse grid.
    for k in 0..fine_n {
        let t_mid = (k as f64 + 0.5) * ocp.step_size();
        let u = interp_controls(&traj.u, traj.h, t_mid);
        let o = layout.control_offset(k);
        x[o..o + ocp.sys.m].copy_from_slice(&u);
    }
    // Secondary node states: reuse the coarse reconstruction.
    let vels = coarse
        .node_velocities()
        .map_err(|e| RunnerError::Other(e.to_string()))?;
    for kind in [ocp::VarKind::Momentum, ocp::VarKind::Velocity] {
        if !layout.has_kind(kind) {
            continue;
        }
        for k in 0..=fine_n {
            let s = k as f64 * ratio;
            let i0 = (s.floor() as usize).min(coarse_n - 1);
            let w = s - i0 as f64;
            let v: Vec<f64> = (0..ocp.sys.n)
                .map(|c| (1.0 - w) * vels[i0][c] + w * vels[i0 + 1][c])
                .collect();
            let o = layout.kind_offset(kind, k);
            match kind {
                ocp::VarKind::Velocity => x[o..o + ocp.sys.n].copy_from_slice(&v),
                ocp::VarKind::Momentum => {
                    let qk: Vec<f64> = (0..ocp.sys.n)
                        .map(|c| x[layout.config_offset(k) + c])
                        .collect();
                    let p = model::legendre(&ocp.sys, &qk, &v)
                        .map_err(|e| RunnerError::Other(e.to_string()))?;
                    x[o..o + ocp.sys.n].copy_from_slice(&p);
                }
                _ => unreachable!(),
            }
        }
    }
    Ok(x)
}

/// Momentum-balance (or energy) audit report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub config: RunConfig,
    pub metadata: Metadata,
    /// Per-step Noether balance residuals (absent for systems without a
    /// symmetry generator).
    pub deltas: Option<Vec<f64>>,
    pub total: Option<f64>,
    pub momentum_scale: Option<f64>,
    /// Energy statistics (max deviation, least-squares drift per step) for
    /// rollout fixtures.
    pub energy_max_deviation: Option<f64>,
    pub energy_drift_slope: Option<f64>,
}

/// Run `audit`: solve (or roll out) the configured problem and report the
/// per-step Noether balance, or the energy series for generator-free
/// fixtures.
pub fn run_audit(config: &RunConfig) -> Result<AuditReport, RunnerError> {
    let report = match &config.problem {
        ProblemConfig::Pendulum { params } => {
            let sys = problems::pendulum();
            let controls = vec![vec![0.0]; params.steps];
            let rollout = simulate::rollout(&sys, &[params.q0], &[params.qdot0], &controls, params.h)
                .map_err(|e| RunnerError::Other(e.to_string()))?;
            let (max_dev, slope) = simulate::energy_series(&rollout);
            AuditReport {
                config: config.clone(),
                metadata: Metadata::now(),
                deltas: None,
                total: None,
                momentum_scale: None,
                energy_max_deviation: Some(max_dev),
                energy_drift_slope: Some(slope),
            }
        }
        _ => {
            let instance = solve_instance(config, config.intervals, None)?;
            if !instance.result.converged() {
                return Err(RunnerError::SolverFailure(instance.result.status));
            }
            if instance.ocp.sys.generators.is_empty() {
                return Err(RunnerError::Config(format!(
                    "problem `{}` has no symmetry generator to audit",
                    config.problem.label()
                )));
            }
            let audit = discmech::noether_audit(&instance.ocp.sys, &instance.trajectory(), 0)
                .map_err(|e| RunnerError::Other(e.to_string()))?;
            AuditReport {
                config: config.clone(),
                metadata: Metadata::now(),
                deltas: Some(audit.deltas.clone()),
                total: Some(audit.total),
                momentum_scale: Some(audit.momentum_scale),
                energy_max_deviation: None,
                energy_drift_slope: None,
            }
        }
    };
    write_file(
        &config.output_dir.join("report.json"),
        &serde_json::to_string_pretty(&report).map_err(|e| RunnerError::Other(e.to_string()))?,
    )?;
    Ok(report)
}

/// Cross-method equivalence report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub config_a: RunConfig,
    pub config_b: RunConfig,
    pub metadata: Metadata,
    pub max_state_gap: f64,
    pub max_control_gap: f64,
    pub objective_gap: f64,
    pub variables: (usize, usize),
    pub variable_ratio: f64,
    pub minor_work: (u64, u64),
    pub minor_work_ratio: f64,
}

/// Run `compare`: solve two configurations of the same problem and grid and
/// report node-wise gaps, size counts and minor-work units.
pub fn run_compare(a: &RunConfig, b: &RunConfig) -> Result<CompareReport, RunnerError> {
    if a.problem != b.problem {
        return Err(RunnerError::Config(
            "compare requires identical problems in both configurations".into(),
        ));
    }
    if a.intervals != b.intervals {
        return Err(RunnerError::Config(
            "compare requires identical interval counts in both configurations".into(),
        ));
    }
    let ia = solve_instance(a, a.intervals, None)?;
    if !ia.result.converged() {
        return Err(RunnerError::SolverFailure(ia.result.status));
    }
    let ib = solve_instance(b, b.intervals, None)?;
    if !ib.result.converged() {
        return Err(RunnerError::SolverFailure(ib.result.status));
    }
    let gaps = baselines::compare_solutions(&ia, &ib)
        .map_err(|e| RunnerError::Other(e.to_string()))?;
    let report = CompareReport {
        config_a: a.clone(),
        config_b: b.clone(),
        metadata: Metadata::now(),
        max_state_gap: gaps.max_state_gap,
        max_control_gap: gaps.max_control_gap,
        objective_gap: gaps.objective_gap,
        variables: (ia.nlp.dimension, ib.nlp.dimension),
        variable_ratio: ia.nlp.dimension as f64 / ib.nlp.dimension as f64,
        minor_work: (ia.result.minor_work, ib.result.minor_work),
        minor_work_ratio: ia.result.minor_work as f64 / ib.result.minor_work.max(1) as f64,
    };
    write_file(
        &a.output_dir.join("report.json"),
        &serde_json::to_string_pretty(&report).map_err(|e| RunnerError::Other(e.to_string()))?,
    )?;
    Ok(report)
}

/// Consistency-order driver used by the examples and the acceptance suite.
pub fn consistency_summary() -> Result<Vec<(String, OrderEstimate, OrderEstimate)>, RunnerError> {
    let grid = [0.4, 0.2, 0.1, 0.05];
    let pend = problems::pendulum();
    let rep_p = discmech::consistency_order(&pend, &[0.4], &[0.3], &[0.25], &grid)
        .map_err(|e| RunnerError::Other(e.to_string()))?;
    let orbital = problems::orbital_system(&problems::OrbitalParams::default());
    let rep_o = discmech::consistency_order(&orbital, &[1.0, 0.0], &[0.1, 1.0], &[0.2], &grid)
        .map_err(|e| RunnerError::Other(e.to_string()))?;
    Ok(vec![
        ("pendulum".into(), rep_p.ld_order, rep_p.f_plus_order),
        ("orbital".into(), rep_o.ld_order, rep_o.f_plus_order),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_parsing_names_valid_set() {
        assert_eq!(Method::parse("dmoc").unwrap(), Method::Dmoc);
        assert_eq!(Method::parse("ham-midpoint").unwrap(), Method::HamMidpoint);
        assert_eq!(Method::parse("vel-midpoint").unwrap(), Method::VelMidpoint);
        let err = Method::parse("simpson").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("dmoc, ham-midpoint, vel-midpoint"));
    }

    #[test]
    fn config_defaults_resolve() {
        let cfg = RunConfig::from_json(
            r#"{ "problem": { "name": "orbital" }, "intervals": 8 }"#,
        )
        .unwrap();
        assert_eq!(cfg.method, Method::Dmoc);
        assert_eq!(cfg.intervals, 8);
        match cfg.problem {
            ProblemConfig::Orbital { params } => {
                assert_eq!(params, problems::OrbitalParams::default());
            }
            _ => panic!("wrong problem"),
        }
    }

    #[test]
    fn pendulum_rejected_outside_audit() {
        let cfg = RunConfig::from_json(r#"{ "problem": { "name": "pendulum" } }"#).unwrap();
        let Err(err) = cfg.problem.build_ocp(8) else {
            panic!("pendulum must be rejected outside audit");
        };
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn control_interpolation_is_piecewise_linear() {
        let u = vec![vec![0.0], vec![1.0], vec![3.0]];
        let h = 1.0;
        assert_eq!(interp_controls(&u, h, 0.2)[0], 0.0); // clamped before first midpoint
        assert!((interp_controls(&u, h, 1.0)[0] - 0.5).abs() < 1e-15);
        assert!((interp_controls(&u, h, 2.0)[0] - 2.0).abs() < 1e-15);
        assert_eq!(interp_controls(&u, h, 2.9)[0], 3.0); // clamped after last midpoint
    }
}
