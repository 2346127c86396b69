//! Small-cell baseline: every user is served by one dedicated AP.
//!
//! Users pick, in random order, the still-available AP with the largest
//! β toward them. Each serving AP sends a downlink pilot; the user's MMSE
//! channel estimate has variance `μ`, and the rate is averaged over the
//! Rayleigh-distributed estimate with the other serving APs as interference.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{invalid, Result};
use crate::linkmodel::RateReport;
use crate::pilots::PilotBook;
use crate::propagation::LargeScale;

/// Serving AP of every user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApSelection {
    pub serving_ap: Vec<usize>,
}

/// Serving APs together with the estimate variances `μ_{m_k k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallCellAssignment {
    pub serving_ap: Vec<usize>,
    pub mu: Vec<f64>,
}

/// Greedy AP selection with users served in a uniformly random order.
pub fn assign_aps<R: Rng + ?Sized>(beta: &LargeScale, rng: &mut R) -> Result<ApSelection> {
    let mut order: Vec<usize> = (0..beta.num_users()).collect();
    order.shuffle(rng);
    assign_aps_in_order(beta, &order)
}

/// Greedy AP selection with a given user order.
pub fn assign_aps_in_order(beta: &LargeScale, order: &[usize]) -> Result<ApSelection> {
    let (num_aps, num_users) = (beta.num_aps(), beta.num_users());
    if num_aps < num_users {
        return Err(invalid(format!("small cells need M ≥ K (M={num_aps}, K={num_users})")));
    }
    let mut seen = vec![false; num_users];
    if order.len() != num_users || order.iter().any(|&k| k >= num_users || std::mem::replace(&mut seen[k], true)) {
        return Err(invalid("order must be a permutation of the users"));
    }
    let mut available = vec![true; num_aps];
    let mut serving_ap = vec![0; num_users];
    for &k in order {
        let m = (0..num_aps)
            .filter(|&m| available[m])
            .max_by(|&a, &b| beta.get(a, k).total_cmp(&beta.get(b, k)).then(b.cmp(&a)))
            .expect("M ≥ K leaves an AP for every user");
        available[m] = false;
        serving_ap[k] = m;
    }
    Ok(ApSelection { serving_ap })
}

/// Downlink-pilot MMSE estimate variance of each user's serving link.
///
/// With `sqrt_variant` the numerator uses `√(τρ_p)` instead of `τρ_p`; the
/// result is capped at β so the remaining estimation error stays
/// non-negative.
pub fn estimate_variance_mu(
    beta: &LargeScale,
    book: &PilotBook,
    rho_p: f64,
    selection: &ApSelection,
    sqrt_variant: bool,
) -> Result<SmallCellAssignment> {
    let num_users = beta.num_users();
    if book.num_users() != num_users || selection.serving_ap.len() != num_users {
        return Err(invalid("β, pilot book and AP selection disagree on K"));
    }
    if !(rho_p > 0.0) {
        return Err(invalid("ρ_p must be positive"));
    }
    let tp = book.tau() as f64 * rho_p;
    let numerator_gain = if sqrt_variant { tp.sqrt() } else { tp };
    let gram_sq = book.gram_sq();
    let mu = (0..num_users)
        .map(|k| {
            let b = beta.get(selection.serving_ap[k], k);
            let contamination: f64 = (0..num_users)
                .map(|kp| beta.get(selection.serving_ap[kp], k) * gram_sq[(k, kp)])
                .sum();
            (numerator_gain * b * b / (tp * contamination + 1.0)).min(b)
        })
        .collect();
    Ok(SmallCellAssignment {
        serving_ap: selection.serving_ap.clone(),
        mu,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMethod {
    /// `log2(e) · e^{1/c} · E1(1/c)`.
    ClosedForm,
    /// Sample average over `samples` exponential draws.
    MonteCarlo { samples: usize },
}

/// Per-user small-cell rate; the reported SINR is `2^rate - 1`.
pub fn rate_sc<R: Rng + ?Sized>(
    beta: &LargeScale,
    assignment: &SmallCellAssignment,
    rho_d: f64,
    method: RateMethod,
    rng: &mut R,
) -> Result<RateReport> {
    let num_users = beta.num_users();
    if assignment.serving_ap.len() != num_users || assignment.mu.len() != num_users {
        return Err(invalid("assignment does not match β"));
    }
    let rates = (0..num_users)
        .map(|k| {
            let m = assignment.serving_ap[k];
            let mu = assignment.mu[k];
            let interference: f64 = (0..num_users)
                .filter(|&kp| kp != k)
                .map(|kp| beta.get(assignment.serving_ap[kp], k))
                .sum();
            let denom = rho_d * (beta.get(m, k) - mu) + rho_d * interference + 1.0;
            let c = rho_d * mu / denom;
            match method {
                RateMethod::ClosedForm => expected_log2_1p_exp(c),
                RateMethod::MonteCarlo { samples } => {
                    let n = samples.max(1);
                    let acc: f64 = (0..n)
                        .map(|_| {
                            let x: f64 = Exp1.sample(rng);
                            (c * x).ln_1p()
                        })
                        .sum();
                    acc / n as f64 / std::f64::consts::LN_2
                }
            }
        })
        .collect::<Vec<f64>>();
    let sinr = rates.iter().map(|r| r.exp2() - 1.0).collect();
    Ok(RateReport { rates, sinr })
}

/// `E[log2(1 + c·X)]` for `X ~ Exp(1)`.
pub fn expected_log2_1p_exp(c: f64) -> f64 {
    if !(c > 0.0) {
        return 0.0;
    }
    std::f64::consts::LOG2_E * exp_e1(1.0 / c)
}

/// Exponential integral `E1(x) = ∫_x^∞ e^{-t}/t dt` for `x > 0`.
pub fn expint_e1(x: f64) -> f64 {
    if x <= 1.0 {
        e1_series(x)
    } else {
        (-x).exp() * e1_scaled_cf(x)
    }
}

/// `e^x · E1(x)`, stable for large `x`.
pub fn exp_e1(x: f64) -> f64 {
    if x <= 1.0 {
        x.exp() * e1_series(x)
    } else {
        e1_scaled_cf(x)
    }
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn e1_series(x: f64) -> f64 {
    // E1(x) = -γ - ln x - Σ_{n≥1} (-x)^n / (n · n!)
    let mut sum = 0.0;
    let mut term = 1.0;
    for n in 1..200 {
        term *= -x / n as f64;
        let add = term / n as f64;
        sum += add;
        if add.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

fn e1_scaled_cf(x: f64) -> f64 {
    // modified Lentz on the continued fraction of e^x E1(x)
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}
