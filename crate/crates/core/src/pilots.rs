//! Pilot books, random and greedy pilot assignment.
//!
//! The greedy scheme repeatedly hands the worst-served user the unit vector
//! that minimizes its pilot contamination summed over all APs. That vector
//! is the eigenvector for the smallest eigenvalue of the weighted sum of the
//! other users' pilot projectors.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use std::io::Write;

use crate::error::{invalid, Result};
use crate::propagation::LargeScale;

const UNIT_NORM_TOL: f64 = 1e-12;

/// Pilot sequences (τ×K, column `k` is user `k`'s pilot) and their Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    sequences: DMatrix<Complex64>,
    gram: DMatrix<Complex64>,
}

impl PilotBook {
    /// Validates unit norms and caches the Gram matrix `gram[(k', k)] = φ_k'ᴴ φ_k`.
    pub fn new(sequences: DMatrix<Complex64>) -> Result<Self> {
        if sequences.nrows() == 0 || sequences.ncols() == 0 {
            return Err(invalid("pilot book needs τ ≥ 1 and K ≥ 1"));
        }
        for (k, col) in sequences.column_iter().enumerate() {
            let n2 = col.norm_squared();
            if (n2 - 1.0).abs() > UNIT_NORM_TOL {
                return Err(invalid(format!("pilot of user {k} has squared norm {n2}")));
            }
        }
        let gram = sequences.adjoint() * &sequences;
        Ok(Self { sequences, gram })
    }

    pub fn tau(&self) -> usize {
        self.sequences.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.sequences.ncols()
    }

    pub fn sequences(&self) -> &DMatrix<Complex64> {
        &self.sequences
    }

    pub fn gram(&self) -> &DMatrix<Complex64> {
        &self.gram
    }

    pub fn pilot(&self, k: usize) -> DVector<Complex64> {
        self.sequences.column(k).into_owned()
    }

    /// `|φ_k'ᴴ φ_k|²` for all pairs.
    pub fn gram_sq(&self) -> DMatrix<f64> {
        self.gram.map(|g| g.norm_sqr())
    }

    /// Replaces user `k`'s pilot, renormalizing it to unit length.
    pub fn set_pilot(&mut self, k: usize, pilot: &DVector<Complex64>) -> Result<()> {
        if k >= self.num_users() || pilot.len() != self.tau() {
            return Err(invalid("pilot index or length out of range"));
        }
        let norm = pilot.norm();
        if !(norm > 0.0) {
            return Err(invalid("pilot must be non-zero"));
        }
        self.sequences.set_column(k, &(pilot / Complex64::new(norm, 0.0)));
        self.gram = self.sequences.adjoint() * &self.sequences;
        Ok(())
    }

    /// Writes one CSV row per user: `user,re0,im0,re1,im1,...`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["user".to_string()];
        for t in 0..self.tau() {
            header.push(format!("re{t}"));
            header.push(format!("im{t}"));
        }
        out.write_record(&header)?;
        for (k, col) in self.sequences.column_iter().enumerate() {
            let mut rec = vec![k.to_string()];
            for c in col.iter() {
                rec.push(format!("{:e}", c.re));
                rec.push(format!("{:e}", c.im));
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// The canonical basis of `C^τ`, one sequence per column.
pub fn orthonormal_base(tau: usize) -> Result<DMatrix<Complex64>> {
    if tau == 0 {
        return Err(invalid("τ must be at least 1"));
    }
    Ok(DMatrix::identity(tau, tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomAssignment {
    /// Each user draws a base sequence independently and uniformly.
    Uniform,
    /// K distinct base sequences (needs τ ≥ K), i.e. no contamination.
    OrthogonalBound,
}

pub fn assign_random<R: Rng + ?Sized>(
    num_users: usize,
    tau: usize,
    mode: RandomAssignment,
    rng: &mut R,
) -> Result<PilotBook> {
    if num_users == 0 {
        return Err(invalid("K must be at least 1"));
    }
    let base = orthonormal_base(tau)?;
    let indices: Vec<usize> = match mode {
        RandomAssignment::Uniform => (0..num_users).map(|_| rng.random_range(0..tau)).collect(),
        RandomAssignment::OrthogonalBound => {
            if tau < num_users {
                return Err(invalid(format!(
                    "orthogonal pilots need τ ≥ K (τ={tau}, K={num_users})"
                )));
            }
            (0..num_users).collect()
        }
    };
    let mut seq = DMatrix::zeros(tau, num_users);
    for (k, &i) in indices.iter().enumerate() {
        seq.set_column(k, &base.column(i));
    }
    PilotBook::new(seq)
}

/// `A_k = Σ_{k'≠k} (Σ_m β_mk') φ_k' φ_k'ᴴ`, a τ×τ Hermitian PSD matrix.
pub fn contamination_matrix(beta: &LargeScale, book: &PilotBook, k: usize) -> DMatrix<Complex64> {
    let tau = book.tau();
    let mut a = DMatrix::zeros(tau, tau);
    for kp in (0..book.num_users()).filter(|&kp| kp != k) {
        let weight: f64 = beta.matrix().column(kp).sum();
        let phi = book.sequences().column(kp);
        a += (phi * phi.adjoint()) * Complex64::new(weight, 0.0);
    }
    a
}

/// Pilot contamination seen by user `k` if it used `pilot`: `vᴴ A_k v`.
pub fn contamination_objective(beta: &LargeScale, book: &PilotBook, k: usize, pilot: &DVector<Complex64>) -> f64 {
    rayleigh_quotient(&contamination_matrix(beta, book, k), pilot)
}

pub(crate) fn rayleigh_quotient(h: &DMatrix<Complex64>, v: &DVector<Complex64>) -> f64 {
    (v.adjoint() * h * v)[(0, 0)].re / v.norm_squared()
}

/// Unit eigenvector for the smallest eigenvalue of a Hermitian matrix.
///
/// Inputs whose anti-Hermitian part exceeds `1e-10 · max(1, ‖H‖)` are
/// rejected. The phase of the returned vector is unspecified.
pub fn smallest_eigenvector(h: &DMatrix<Complex64>) -> Result<DVector<Complex64>> {
    if h.nrows() == 0 || !h.is_square() {
        return Err(invalid("expected a non-empty square matrix"));
    }
    let skew = (h - h.adjoint()).camax();
    if skew > 1e-10 * h.camax().max(1.0) {
        return Err(invalid(format!("matrix is not Hermitian (skew {skew:e})")));
    }
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    let v = eig.eigenvectors.column(idx).into_owned();
    let n = v.norm();
    Ok(v / Complex64::new(n, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyOptions {
    pub max_iters: usize,
    /// Minimum improvement of the smallest rate (bits/s/Hz) per iteration.
    pub tol: f64,
}

impl GreedyOptions {
    /// `10·K` iterations and a 1e-4 bits/s/Hz improvement threshold.
    pub fn for_users(num_users: usize) -> Self {
        Self {
            max_iters: 10 * num_users,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GreedyStep {
    pub iteration: usize,
    pub user: usize,
    pub objective_before: f64,
    pub objective_after: f64,
    pub min_rate: f64,
}

#[derive(Debug, Clone)]
pub struct GreedyOutcome {
    /// Best book seen, by smallest user rate.
    pub book: PilotBook,
    pub min_rate: f64,
    pub initial_min_rate: f64,
    pub steps: Vec<GreedyStep>,
}

fn argmin(rates: &[f64]) -> (usize, f64) {
    rates
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (k, r)| if r < best.1 { (k, r) } else { best })
}

/// Greedy pilot assignment starting from `initial`.
///
/// `rates_of` returns the per-user rate under a candidate book. Each round
/// the worst user (lowest index on ties) moves to the smallest eigenvector of
/// its contamination matrix; the loop ends after `max_iters` rounds, when the
/// smallest rate improves by less than `tol`, or when the worst user already
/// sits at its optimum.
pub fn greedy_assign<F>(beta: &LargeScale, initial: PilotBook, mut rates_of: F, opts: &GreedyOptions) -> Result<GreedyOutcome>
where
    F: FnMut(&PilotBook) -> Result<Vec<f64>>,
{
    if beta.num_users() != initial.num_users() {
        return Err(invalid("pilot book and β disagree on K"));
    }
    let mut book = initial;
    let (mut worst, mut prev_min) = argmin(&rates_of(&book)?);
    let initial_min_rate = prev_min;
    let mut best = (book.clone(), prev_min);
    let mut steps = Vec::new();

    for iteration in 0..opts.max_iters {
        let a = contamination_matrix(beta, &book, worst);
        let before = rayleigh_quotient(&a, &book.pilot(worst));
        let candidate = smallest_eigenvector(&a)?;
        let after = rayleigh_quotient(&a, &candidate);
        let scale = a.camax().max(f64::MIN_POSITIVE);
        if after >= before - 1e-12 * scale {
            break;
        }
        book.set_pilot(worst, &candidate)?;
        let (next_worst, min_rate) = argmin(&rates_of(&book)?);
        steps.push(GreedyStep {
            iteration,
            user: worst,
            objective_before: before,
            objective_after: after,
            min_rate,
        });
        if min_rate > best.1 {
            best = (book.clone(), min_rate);
        }
        if min_rate - prev_min < opts.tol {
            break;
        }
        prev_min = min_rate;
        worst = next_worst;
    }
    Ok(GreedyOutcome {
        book: best.0,
        min_rate: best.1,
        initial_min_rate,
        steps,
    })
}

/// Draws a uniform random book and runs [`greedy_assign`] from it.
pub fn greedy_assign_random<F, R>(beta: &LargeScale, tau: usize, rates_of: F, opts: &GreedyOptions, rng: &mut R) -> Result<GreedyOutcome>
where
    F: FnMut(&PilotBook) -> Result<Vec<f64>>,
    R: Rng + ?Sized,
{
    let initial = assign_random(beta.num_users(), tau, RandomAssignment::Uniform, rng)?;
    greedy_assign(beta, initial, rates_of, opts)
}
