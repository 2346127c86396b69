//! Max-min fair power control.
//!
//! The smallest user SINR is quasi-concave in the square-root power
//! coefficients, so the optimum is found by bisection on a target SINR `t`,
//! each step deciding a convex feasibility problem: does some allocation
//! give every user SINR at least `t` while each AP stays within its power
//! budget?
//!
//! Each feasibility problem is posed as a second-order cone program in the
//! variables `u_mk = √(γ_mk η_mk)` (so the per-AP budget is `‖u_m‖ ≤ ϑ_m ≤ 1`)
//! and handed to the Clarabel interior-point solver. The coherent
//! interference slacks `ϱ_k'k` enter the cones through their tight value
//! `Σ_m γ_mk' (β_mk / β_mk') ς_mk'`; since they only ever appear squared
//! with positive weights this is the same feasible set. Rather than asking
//! for any feasible point, the program maximizes a common margin `λ`
//! subtracted from every user's cone; `λ ≥ 0` exactly when `t` is
//! achievable, and the program itself is always feasible and bounded.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::DMatrix;
use serde::Serialize;
use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::linkmodel::{sinr_closed_form, LinkStats, PowerAllocation};
use crate::pilots::PilotBook;
use crate::propagation::LargeScale;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct SolveOptions {
    /// Stop when `t_high - t_low ≤ bisection_tol · (1 + t_low)`.
    pub bisection_tol: f64,
    /// Largest SINR shortfall accepted from a feasible point.
    pub feas_tol: f64,
    pub max_bisection_iters: usize,
    /// Interior-point iteration cap per feasibility problem.
    pub solver_max_iter: u32,
    /// Gap and residual tolerance passed to the interior-point solver.
    pub solver_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            bisection_tol: 1e-3,
            feas_tol: 1e-7,
            max_bisection_iters: 50,
            solver_max_iter: 200,
            solver_tol: 1e-9,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.bisection_tol > 0.0 && self.feas_tol > 0.0 && self.solver_tol > 0.0) {
            return Err(invalid("solver tolerances must be positive"));
        }
        if self.max_bisection_iters == 0 || self.solver_max_iter == 0 {
            return Err(invalid("iteration limits must be positive"));
        }
        Ok(())
    }
}

/// One target-SINR feasibility question.
#[derive(Debug, Clone)]
pub struct FeasibilityInstance {
    pub gamma: DMatrix<f64>,
    pub beta: DMatrix<f64>,
    /// `|φ_k'ᴴ φ_k|²`, K×K.
    pub gram_sq: DMatrix<f64>,
    pub rho_d: f64,
    pub target_sinr: f64,
}

impl FeasibilityInstance {
    pub fn new(beta: &LargeScale, stats: &LinkStats, book: &PilotBook, rho_d: f64, target_sinr: f64) -> Result<Self> {
        let inst = Self {
            gamma: stats.matrix().clone(),
            beta: beta.matrix().clone(),
            gram_sq: book.gram_sq(),
            rho_d,
            target_sinr,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let (m, k) = self.beta.shape();
        if m == 0 || k == 0 || self.gamma.shape() != (m, k) || self.gram_sq.shape() != (k, k) {
            return Err(invalid("inconsistent instance shapes"));
        }
        if !(self.target_sinr >= 0.0 && self.target_sinr.is_finite()) {
            return Err(invalid("target SINR must be finite and non-negative"));
        }
        if !(self.rho_d > 0.0) {
            return Err(invalid("ρ_d must be positive"));
        }
        if self.beta.iter().chain(self.gamma.iter()).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("β and γ must be positive and finite"));
        }
        for a in 0..k {
            if (self.gram_sq[(a, a)] - 1.0).abs() > 1e-9 {
                return Err(invalid("gram_sq must have a unit diagonal"));
            }
            for b in 0..k {
                let g = self.gram_sq[(a, b)];
                if !(-1e-12..=1.0 + 1e-9).contains(&g) || (g - self.gram_sq[(b, a)]).abs() > 1e-9 {
                    return Err(invalid("gram_sq must be symmetric with entries in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    fn with_target(&self, t: f64) -> Self {
        Self {
            target_sinr: t,
            ..self.clone()
        }
    }

    fn stats(&self) -> LinkStats {
        LinkStats::from_matrix(self.gamma.clone())
    }

    fn sinr(&self, eta: &DMatrix<f64>) -> Vec<f64> {
        sinr_closed_form(&self.beta, &self.gamma, &self.gram_sq, eta, self.rho_d)
    }
}

/// Bracket top for bisection: `min_k ρ_d (Σ_m √γ_mk)²`.
///
/// With `η_mk γ_mk ≤ 1` the desired-signal amplitude of user `k` is at most
/// `Σ_m √γ_mk` while the SINR denominator is at least 1, so no user, and
/// hence not the worst one, can exceed this value.
pub fn sinr_upper_bound(gamma: &DMatrix<f64>, rho_d: f64) -> f64 {
    gamma
        .column_iter()
        .map(|c| {
            let s: f64 = c.iter().map(|g| g.sqrt()).sum();
            rho_d * s * s
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone)]
pub struct FeasiblePoint {
    pub allocation: PowerAllocation,
    /// Closed-form SINR of each user under `allocation`.
    pub sinr: Vec<f64>,
    /// `max_k max(0, t - SINR_k)`.
    pub violation: f64,
    /// Accepted between `feas_tol` and `10·feas_tol` after a tighter retry.
    pub boundary: bool,
}

#[derive(Debug, Clone)]
pub enum Feasibility {
    Feasible(FeasiblePoint),
    Infeasible { violation: f64, margin: f64 },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

struct Attempt {
    status: SolverStatus,
    margin: f64,
    eta: DMatrix<f64>,
    sinr: Vec<f64>,
    violation: f64,
}

impl Attempt {
    fn converged(&self) -> bool {
        matches!(self.status, SolverStatus::Solved | SolverStatus::AlmostSolved)
    }
}

/// Decides whether every user can reach SINR `target_sinr`.
///
/// "Infeasible" is operational: the max-margin point misses the target by
/// more than `10·feas_tol` with a negative margin. Violations between
/// `feas_tol` and `10·feas_tol` trigger one retry with tighter solver
/// settings and are then accepted as boundary points.
pub fn feasible(instance: &FeasibilityInstance, opts: &SolveOptions) -> Result<Feasibility> {
    instance.validate()?;
    opts.validate()?;
    let stats = instance.stats();
    let (m, k) = instance.beta.shape();
    if instance.target_sinr == 0.0 {
        return Ok(Feasibility::Feasible(FeasiblePoint {
            allocation: PowerAllocation::silent(m, k),
            sinr: vec![0.0; k],
            violation: 0.0,
            boundary: false,
        }));
    }

    let accept = |a: Attempt, boundary: bool| {
        Ok(Feasibility::Feasible(FeasiblePoint {
            allocation: PowerAllocation::from_parts(a.eta, &stats),
            sinr: a.sinr,
            violation: a.violation,
            boundary,
        }))
    };

    let first = solve_margin_program(instance, opts.solver_tol, opts.solver_max_iter)?;
    if first.converged() {
        if first.violation <= opts.feas_tol {
            return accept(first, false);
        }
        if first.violation > 10.0 * opts.feas_tol && first.margin < 0.0 {
            return Ok(Feasibility::Infeasible {
                violation: first.violation,
                margin: first.margin,
            });
        }
    }

    let retry = solve_margin_program(instance, opts.solver_tol * 1e-2, opts.solver_max_iter * 2)?;
    let best = if retry.violation <= first.violation { retry } else { first };
    if best.violation <= opts.feas_tol {
        accept(best, false)
    } else if best.violation <= 10.0 * opts.feas_tol {
        accept(best, true)
    } else if best.margin < 0.0 {
        Ok(Feasibility::Infeasible {
            violation: best.violation,
            margin: best.margin,
        })
    } else {
        Err(Error::SolverFailure {
            message: format!(
                "no convergent solve at t={} (status {:?}, violation {:e}, margin {:e})",
                instance.target_sinr, best.status, best.violation, best.margin
            ),
            t_low: f64::NAN,
            t_high: f64::NAN,
        })
    }
}

/// Builds and solves the max-margin cone program for the instance target.
fn solve_margin_program(inst: &FeasibilityInstance, tol: f64, max_iter: u32) -> Result<Attempt> {
    let (num_aps, num_users) = inst.beta.shape();
    let t = inst.target_sinr;
    let rho_d = inst.rho_d;
    let u = |m: usize, k: usize| k * num_aps + m;
    let theta = |m: usize| num_aps * num_users + m;
    let lambda = num_aps * num_users + num_aps;
    let n = lambda + 1;

    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    let mut push = |r: usize, c: usize, v: f64| {
        rows.push(r);
        cols.push(c);
        vals.push(v);
    };

    // u ≥ 0 and ϑ ≤ 1
    for m in 0..num_aps {
        for k in 0..num_users {
            push(b.len(), u(m, k), -1.0);
            b.push(0.0);
        }
    }
    for m in 0..num_aps {
        push(b.len(), theta(m), 1.0);
        b.push(1.0);
    }
    cones.push(SupportedConeT::NonnegativeConeT(num_aps * (num_users + 1)));

    // per-AP budget: ‖u_m‖ ≤ ϑ_m
    for m in 0..num_aps {
        push(b.len(), theta(m), -1.0);
        b.push(0.0);
        for k in 0..num_users {
            push(b.len(), u(m, k), -1.0);
            b.push(0.0);
        }
        cones.push(SupportedConeT::SecondOrderConeT(num_users + 1));
    }

    // per-user SINR target, each cone scaled by its largest possible signal
    let amp = inst.gamma.map(|g| (rho_d * g).sqrt());
    for k in 0..num_users {
        let scale: f64 = amp.column(k).sum();
        let start = b.len();
        for m in 0..num_aps {
            push(start, u(m, k), -amp[(m, k)] / scale);
        }
        push(start, lambda, 1.0 / scale);
        b.push(0.0);
        for kp in (0..num_users).filter(|&kp| kp != k) {
            let g = inst.gram_sq[(kp, k)];
            if g <= 0.0 {
                continue;
            }
            let row = b.len();
            let w = (t * g).sqrt() / scale;
            for m in 0..num_aps {
                let c = amp[(m, kp)] * inst.beta[(m, k)] / inst.beta[(m, kp)];
                push(row, u(m, kp), -w * c);
            }
            b.push(0.0);
        }
        for m in 0..num_aps {
            let row = b.len();
            push(row, theta(m), -(t * rho_d * inst.beta[(m, k)]).sqrt() / scale);
            b.push(0.0);
        }
        b.push(t.sqrt() / scale);
        cones.push(SupportedConeT::SecondOrderConeT(b.len() - start));
    }

    let a = CscMatrix::new_from_triplets(b.len(), n, rows, cols, vals);
    let p = CscMatrix::zeros((n, n));
    let mut q = vec![0.0; n];
    q[lambda] = -1.0;
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(max_iter)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(tol)
        .build()
        .map_err(|e| invalid(format!("solver settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
        .map_err(|e| Error::Numeric(format!("cone program setup: {e}")))?;
    solver.solve();
    let x = &solver.solution.x;

    // recover η, clipping sign noise and rescaling any AP that overshoots
    let mut eta = DMatrix::zeros(num_aps, num_users);
    for m in 0..num_aps {
        let load: f64 = (0..num_users).map(|k| x[u(m, k)].max(0.0).powi(2)).sum();
        let shrink = if load > 1.0 { 1.0 / load } else { 1.0 };
        for k in 0..num_users {
            let uu = x[u(m, k)].max(0.0);
            eta[(m, k)] = uu * uu * shrink / inst.gamma[(m, k)];
        }
    }
    if eta.iter().any(|e| !e.is_finite()) {
        eta.fill(0.0);
    }
    let sinr = inst.sinr(&eta);
    let violation = sinr.iter().map(|s| (t - s).max(0.0)).fold(0.0, f64::max);
    Ok(Attempt {
        status: solver.solution.status,
        margin: x[lambda],
        eta,
        sinr,
        violation,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BisectionStep {
    pub iteration: usize,
    pub t_low: f64,
    pub t_high: f64,
    pub t_mid: f64,
    pub feasible: bool,
    pub violation: f64,
}

#[derive(Debug, Clone)]
pub struct MaxMinSolution {
    pub allocation: PowerAllocation,
    /// Largest target proven feasible; the achieved min SINR is at least
    /// `t_low - 10·feas_tol`.
    pub t_low: f64,
    pub t_high: f64,
    pub iterations: usize,
    pub trace: Vec<BisectionStep>,
}

impl MaxMinSolution {
    /// Writes the bisection trace as JSON lines.
    pub fn write_trace<W: Write>(&self, mut w: W) -> Result<()> {
        for step in &self.trace {
            serde_json::to_writer(&mut w, step)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Max-min SINR power control by bisection over cone feasibility problems.
pub fn solve_maxmin(
    beta: &LargeScale,
    stats: &LinkStats,
    book: &PilotBook,
    rho_d: f64,
    opts: &SolveOptions,
) -> Result<MaxMinSolution> {
    let base = FeasibilityInstance::new(beta, stats, book, rho_d, 0.0)?;
    opts.validate()?;
    let mut t_low = 0.0;
    let mut t_high = sinr_upper_bound(stats.matrix(), rho_d);
    let mut best = PowerAllocation::silent(beta.num_aps(), beta.num_users());
    let mut trace = Vec::new();
    let mut iterations = 0;

    while t_high - t_low > opts.bisection_tol * (1.0 + t_low) && iterations < opts.max_bisection_iters {
        let t_mid = 0.5 * (t_low + t_high);
        let verdict = feasible(&base.with_target(t_mid), opts).map_err(|e| match e {
            Error::SolverFailure { message, .. } => Error::SolverFailure { message, t_low, t_high },
            other => other,
        })?;
        let (is_feasible, violation) = match verdict {
            Feasibility::Feasible(point) => {
                best = point.allocation;
                (true, point.violation)
            }
            Feasibility::Infeasible { violation, .. } => (false, violation),
        };
        trace.push(BisectionStep {
            iteration: iterations,
            t_low,
            t_high,
            t_mid,
            feasible: is_feasible,
            violation,
        });
        if is_feasible {
            t_low = t_mid;
        } else {
            t_high = t_mid;
        }
        iterations += 1;
    }
    log::debug!("max-min bisection: t in [{t_low}, {t_high}] after {iterations} steps");
    Ok(MaxMinSolution {
        allocation: best,
        t_low,
        t_high,
        iterations,
        trace,
    })
}
