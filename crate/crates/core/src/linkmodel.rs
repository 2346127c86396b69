//! Channel-estimate statistics and the closed-form downlink rate under
//! conjugate beamforming, plus a Monte-Carlo estimator that rebuilds the
//! same effective SINR from simulated channels, pilots and MMSE estimates.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

use crate::error::{invalid, Result};
use crate::pilots::PilotBook;
use crate::propagation::LargeScale;

/// Slack allowed on the per-AP power constraint.
pub const POWER_CONSTRAINT_TOL: f64 = 1e-9;

/// `gamma[(m, k)] = E|ĝ_mk|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkStats {
    gamma: DMatrix<f64>,
}

impl LinkStats {
    pub(crate) fn from_matrix(gamma: DMatrix<f64>) -> Self {
        Self { gamma }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.gamma[(m, k)]
    }
}

/// Power-control coefficients η (M×K).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    eta: DMatrix<f64>,
}

impl PowerAllocation {
    /// Checks non-negativity and `Σ_k η_mk γ_mk ≤ 1 + tol` at every AP.
    pub fn new(eta: DMatrix<f64>, stats: &LinkStats, tol: f64) -> Result<Self> {
        if eta.shape() != stats.gamma.shape() {
            return Err(invalid("η and γ shapes differ"));
        }
        if eta.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(invalid("η entries must be finite and non-negative"));
        }
        let alloc = Self { eta };
        let worst = alloc.max_ap_load(stats);
        if worst > 1.0 + tol {
            return Err(invalid(format!("per-AP power constraint violated: load {worst}")));
        }
        Ok(alloc)
    }

    // Caller guarantees the constraint already holds.
    pub(crate) fn from_parts(eta: DMatrix<f64>, stats: &LinkStats) -> Self {
        debug_assert!(eta.shape() == stats.gamma.shape());
        Self { eta }
    }

    /// Zero transmit power everywhere.
    pub fn silent(num_aps: usize, num_users: usize) -> Self {
        Self {
            eta: DMatrix::zeros(num_aps, num_users),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.eta
    }

    /// `Σ_k η_mk γ_mk` for each AP.
    pub fn ap_loads(&self, stats: &LinkStats) -> Vec<f64> {
        self.eta
            .component_mul(&stats.gamma)
            .row_iter()
            .map(|r| r.sum())
            .collect()
    }

    pub fn max_ap_load(&self, stats: &LinkStats) -> f64 {
        self.ap_loads(stats).into_iter().fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { eta: &self.eta * c }
    }

    /// Writes `ap,user,eta` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["ap", "user", "eta"])?;
        for m in 0..self.eta.nrows() {
            for k in 0..self.eta.ncols() {
                out.write_record([m.to_string(), k.to_string(), format!("{:e}", self.eta[(m, k)])])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Per-user achievable rates (bits/s/Hz) and effective SINRs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub rates: Vec<f64>,
    pub sinr: Vec<f64>,
}

impl RateReport {
    pub fn from_sinr(sinr: Vec<f64>) -> Self {
        let rates = sinr.iter().map(|s| (1.0 + s).log2()).collect();
        Self { rates, sinr }
    }

    pub fn min_rate(&self) -> f64 {
        self.rates.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_sinr(&self) -> f64 {
        self.sinr.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Writes `user,sinr,rate` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["user", "sinr", "rate"])?;
        for (k, (s, r)) in self.sinr.iter().zip(&self.rates).enumerate() {
            out.write_record([k.to_string(), format!("{s:e}"), format!("{r:e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_shapes(beta: &LargeScale, book: &PilotBook) -> Result<()> {
    if beta.num_users() != book.num_users() {
        return Err(invalid(format!(
            "β has {} users but the pilot book has {}",
            beta.num_users(),
            book.num_users()
        )));
    }
    Ok(())
}

/// `Σ_k' β_mk' |φ_kᴴ φ_k'|²` for every (m, k).
fn contamination_load(beta: &LargeScale, book: &PilotBook) -> DMatrix<f64> {
    beta.matrix() * book.gram_sq()
}

/// Mean-square channel-estimate magnitudes for MMSE estimation from
/// projected pilots with pilot SNR `rho_p` and length `book.tau()`.
pub fn gamma(beta: &LargeScale, book: &PilotBook, rho_p: f64) -> Result<LinkStats> {
    check_shapes(beta, book)?;
    if !(rho_p > 0.0) {
        return Err(invalid("ρ_p must be positive"));
    }
    let tp = book.tau() as f64 * rho_p;
    let load = contamination_load(beta, book);
    let gamma = DMatrix::from_fn(beta.num_aps(), beta.num_users(), |m, k| {
        let b = beta.get(m, k);
        tp * b * b / (tp * load[(m, k)] + 1.0)
    });
    Ok(LinkStats { gamma })
}

/// Equal power split at each AP: `η_mk = 1 / Σ_k' γ_mk'`.
pub fn full_power_allocation(stats: &LinkStats) -> PowerAllocation {
    let mut eta = stats.gamma.clone();
    for (mut row, g) in eta.row_iter_mut().zip(stats.gamma.row_iter()) {
        row.fill(1.0 / g.sum());
    }
    PowerAllocation { eta }
}

/// Closed-form effective SINR and rate of every user.
///
/// The denominator carries the coherent interference from users whose
/// pilots overlap with user `k`'s, the beamforming-gain uncertainty summed
/// over all users (including `k`), and unit noise.
pub fn rate_cf(
    beta: &LargeScale,
    stats: &LinkStats,
    book: &PilotBook,
    alloc: &PowerAllocation,
    rho_d: f64,
) -> Result<RateReport> {
    check_shapes(beta, book)?;
    if alloc.eta.shape() != stats.gamma.shape() || stats.gamma.shape() != beta.matrix().shape() {
        return Err(invalid("β, γ and η shapes differ"));
    }
    let load = alloc.max_ap_load(stats);
    if load > 1.0 + POWER_CONSTRAINT_TOL {
        return Err(invalid(format!("per-AP power constraint violated: load {load}")));
    }
    Ok(RateReport::from_sinr(sinr_closed_form(
        beta.matrix(),
        &stats.gamma,
        &book.gram_sq(),
        &alloc.eta,
        rho_d,
    )))
}

/// Same expression as [`rate_cf`] on raw matrices, no constraint checks.
pub(crate) fn sinr_closed_form(
    beta: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    gram_sq: &DMatrix<f64>,
    eta: &DMatrix<f64>,
    rho_d: f64,
) -> Vec<f64> {
    let (num_aps, num_users) = beta.shape();
    let sqrt_eta_gamma = DMatrix::from_fn(num_aps, num_users, |m, k| eta[(m, k)].sqrt() * gamma[(m, k)]);
    // coherent[(k', k)] = Σ_m √η_mk' γ_mk' β_mk / β_mk'
    let ratio = sqrt_eta_gamma.component_div(beta);
    let coherent = ratio.transpose() * beta;
    // Σ_k' η_mk' γ_mk' per AP, then weighted by β_mk
    let ap_power: Vec<f64> = eta.component_mul(gamma).row_iter().map(|r| r.sum()).collect();

    (0..num_users)
        .map(|k| {
            let signal: f64 = sqrt_eta_gamma.column(k).sum();
            let interference: f64 = (0..num_users)
                .filter(|&kp| kp != k && gram_sq[(kp, k)] > 0.0)
                .map(|kp| coherent[(kp, k)].powi(2) * gram_sq[(kp, k)])
                .sum();
            let uncertainty: f64 = (0..num_aps).map(|m| ap_power[m] * beta[(m, k)]).sum();
            rho_d * signal * signal / (rho_d * interference + rho_d * uncertainty + 1.0)
        })
        .collect()
}

/// Rates under [`full_power_allocation`] for a given pilot book.
pub fn full_power_rates(beta: &LargeScale, book: &PilotBook, rho_p: f64, rho_d: f64) -> Result<RateReport> {
    let stats = gamma(beta, book, rho_p)?;
    let alloc = full_power_allocation(&stats);
    rate_cf(beta, &stats, book, &alloc, rho_d)
}

/// Result of the Monte-Carlo effective-SINR estimator.
#[derive(Debug, Clone)]
pub struct MonteCarloSinr {
    /// `|DS_k|² / Var(EN_k)` per user.
    pub sinr: Vec<f64>,
    /// Estimated deterministic gain `DS_k`.
    pub desired: Vec<Complex64>,
    /// Estimated effective-noise variance.
    pub effective_noise: Vec<f64>,
    /// Empirical `E|ĝ_mk|²`.
    pub gamma: DMatrix<f64>,
    pub samples: usize,
}

const MC_CHUNK: usize = 1 << 14;

struct ChunkResult {
    // a_kk for every sample of the chunk, sample-major
    own_gain: Vec<Complex64>,
    // Σ_samples Σ_{k'≠k} |a_kk'|² per user
    cross_power: Vec<f64>,
    est_power: DMatrix<f64>,
}

/// Monte-Carlo estimate of the effective SINR from first principles.
///
/// Each sample draws Rayleigh small-scale fading and pilot noise, forms the
/// received pilots, projects them on each user's pilot and applies the MMSE
/// scaling. With `a_kk' = √ρ_d Σ_m √η_mk' g_mk ĝ*_mk'`, the received signal
/// is `r_k = Σ_k' a_kk' s_k' + n_k`; the average over the unit-power data
/// symbols and noise is taken in closed form, the channel average
/// empirically. `DS_k` is the sample mean of `a_kk`, and `Var(EN_k)` is
/// accumulated in a second pass over the stored `a_kk` values.
///
/// Chunks of samples use independent ChaCha streams derived from one draw
/// of `rng`, and are reduced in chunk order, so the result does not depend
/// on the thread count.
pub fn mc_effective_sinr<R: Rng + ?Sized>(
    beta: &LargeScale,
    book: &PilotBook,
    alloc: &PowerAllocation,
    rho_p: f64,
    rho_d: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<MonteCarloSinr> {
    check_shapes(beta, book)?;
    if n_samples == 0 {
        return Err(invalid("need at least one sample"));
    }
    if alloc.eta.shape() != beta.matrix().shape() {
        return Err(invalid("η and β shapes differ"));
    }
    let base_seed: u64 = rng.random();
    let (num_aps, num_users) = (beta.num_aps(), beta.num_users());
    let tau = book.tau();
    let tp = tau as f64 * rho_p;
    let load = contamination_load(beta, book);
    let est_scale = DMatrix::from_fn(num_aps, num_users, |m, k| tp.sqrt() * beta.get(m, k) / (tp * load[(m, k)] + 1.0));
    let sqrt_beta = beta.matrix().map(f64::sqrt);
    let sqrt_eta = alloc.eta.map(f64::sqrt);
    let phi = book.sequences();

    let chunks = n_samples.div_ceil(MC_CHUNK);
    let results: Vec<ChunkResult> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
            rng.set_stream(c as u64);
            let len = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let mut out = ChunkResult {
                own_gain: Vec::with_capacity(len * num_users),
                cross_power: vec![0.0; num_users],
                est_power: DMatrix::zeros(num_aps, num_users),
            };
            let mut g = DMatrix::<Complex64>::zeros(num_aps, num_users);
            let mut g_hat = DMatrix::<Complex64>::zeros(num_aps, num_users);
            let mut y = vec![Complex64::new(0.0, 0.0); tau];
            let half = 0.5f64.sqrt();
            let cn = |rng: &mut ChaCha8Rng| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re * half, im * half)
            };
            for _ in 0..len {
                for m in 0..num_aps {
                    for k in 0..num_users {
                        g[(m, k)] = cn(&mut rng) * sqrt_beta[(m, k)];
                    }
                    // received pilot block at AP m
                    for (t, yt) in y.iter_mut().enumerate() {
                        let mut acc = cn(&mut rng);
                        for k in 0..num_users {
                            acc += phi[(t, k)] * g[(m, k)] * tp.sqrt();
                        }
                        *yt = acc;
                    }
                    for k in 0..num_users {
                        let proj: Complex64 = (0..tau).map(|t| phi[(t, k)].conj() * y[t]).sum();
                        let est = proj * est_scale[(m, k)];
                        g_hat[(m, k)] = est;
                        out.est_power[(m, k)] += est.norm_sqr();
                    }
                }
                for k in 0..num_users {
                    for kp in 0..num_users {
                        let a: Complex64 = (0..num_aps)
                            .map(|m| g[(m, k)] * g_hat[(m, kp)].conj() * sqrt_eta[(m, kp)])
                            .sum::<Complex64>()
                            * rho_d.sqrt();
                        if kp == k {
                            out.own_gain.push(a);
                        } else {
                            out.cross_power[k] += a.norm_sqr();
                        }
                    }
                }
            }
            out
        })
        .collect();

    let n = n_samples as f64;
    let mut desired = vec![Complex64::new(0.0, 0.0); num_users];
    let mut cross = vec![0.0; num_users];
    let mut est_power = DMatrix::zeros(num_aps, num_users);
    for r in &results {
        for (i, a) in r.own_gain.iter().enumerate() {
            desired[i % num_users] += a;
        }
        for (c, x) in cross.iter_mut().zip(&r.cross_power) {
            *c += x;
        }
        est_power += &r.est_power;
    }
    for d in desired.iter_mut() {
        *d /= n;
    }
    // second pass: spread of a_kk around DS_k
    let mut own_var = vec![0.0; num_users];
    for r in &results {
        for (i, a) in r.own_gain.iter().enumerate() {
            own_var[i % num_users] += (a - desired[i % num_users]).norm_sqr();
        }
    }
    let effective_noise: Vec<f64> = (0..num_users).map(|k| (own_var[k] + cross[k]) / n + 1.0).collect();
    let sinr = desired
        .iter()
        .zip(&effective_noise)
        .map(|(d, v)| d.norm_sqr() / v)
        .collect();
    Ok(MonteCarloSinr {
        sinr,
        desired,
        effective_noise,
        gamma: est_power / n,
        samples: n_samples,
    })
}
