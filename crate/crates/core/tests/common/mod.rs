//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use cellfree::linkmodel::{gamma, LinkStats, PowerAllocation};
use cellfree::pilots::{assign_random, orthonormal_base, PilotBook, RandomAssignment};
use cellfree::propagation::{large_scale, LargeScale, PathLossParams, RadioConfig, ShadowingParams};
use cellfree::topology::NetworkDrop;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn rho() -> (f64, f64) {
    let radio = RadioConfig::default();
    (radio.rho_p().unwrap(), radio.rho_d().unwrap())
}

/// β for a random drop with the default radio and iid shadowing.
pub fn random_beta<R: Rng>(m: usize, k: usize, rng: &mut R) -> LargeScale {
    let drop = NetworkDrop::random(m, k, 1000.0, rng).unwrap();
    large_scale(&drop, &PathLossParams::default(), &ShadowingParams::default(), rng).unwrap()
}

pub fn random_unit_vector<R: Rng>(tau: usize, rng: &mut R) -> DVector<Complex64> {
    let v = DVector::from_fn(tau, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let n = v.norm();
    v / Complex64::new(n, 0.0)
}

/// Mixture of shared and orthogonal pilots: base vectors picked at random,
/// and with `continuous` one user gets a random unit vector instead.
pub fn mixed_book<R: Rng>(k: usize, tau: usize, continuous: bool, rng: &mut R) -> PilotBook {
    let mut book = assign_random(k, tau, RandomAssignment::Uniform, rng).unwrap();
    if continuous {
        let user = rng.random_range(0..k);
        book.set_pilot(user, &random_unit_vector(tau, rng)).unwrap();
    }
    book
}

/// Random allocation whose AP loads lie in [0.3, 1].
pub fn random_allocation<R: Rng>(stats: &LinkStats, rng: &mut R) -> PowerAllocation {
    let g = stats.matrix();
    let (m, k) = g.shape();
    let mut eta = DMatrix::zeros(m, k);
    for i in 0..m {
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let load: f64 = (0..k).map(|j| w[j] * g[(i, j)]).sum();
        let target = rng.random_range(0.3..1.0);
        for j in 0..k {
            eta[(i, j)] = w[j] * target / load;
        }
    }
    PowerAllocation::new(eta, stats, 1e-9).unwrap()
}

pub struct Instance {
    pub beta: LargeScale,
    pub book: PilotBook,
    pub stats: LinkStats,
}

pub fn random_instance<R: Rng>(m: usize, k: usize, tau: usize, rng: &mut R) -> Instance {
    let beta = random_beta(m, k, rng);
    let book = mixed_book(k, tau, rng.random_bool(0.5), rng);
    let stats = gamma(&beta, &book, rho().0).unwrap();
    Instance { beta, book, stats }
}

/// Direct transcription of the closed-form SINR, one user at a time.
pub fn sinr_oracle(beta: &DMatrix<f64>, gamma: &DMatrix<f64>, gram: &DMatrix<Complex64>, eta: &DMatrix<f64>, rho_d: f64) -> Vec<f64> {
    let (m, k) = beta.shape();
    (0..k)
        .map(|user| {
            let mut signal = 0.0;
            for ap in 0..m {
                signal += eta[(ap, user)].sqrt() * gamma[(ap, user)];
            }
            let mut coherent = 0.0;
            for other in (0..k).filter(|&o| o != user) {
                let mut s = 0.0;
                for ap in 0..m {
                    s += eta[(ap, other)].sqrt() * gamma[(ap, other)] * beta[(ap, user)] / beta[(ap, other)];
                }
                coherent += s * s * gram[(other, user)].norm_sqr();
            }
            let mut leakage = 0.0;
            for other in 0..k {
                for ap in 0..m {
                    leakage += eta[(ap, other)] * gamma[(ap, other)] * beta[(ap, user)];
                }
            }
            rho_d * signal * signal / (rho_d * coherent + rho_d * leakage + 1.0)
        })
        .collect()
}

/// Smallest and largest eigenvalue of a Hermitian matrix via cyclic Jacobi
/// on its real symmetric embedding `[[A, -B], [B, A]]`.
pub fn jacobi_extreme_eigenvalues(h: &DMatrix<Complex64>) -> (f64, f64) {
    let n = h.nrows();
    let mut a = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            a[(i, j)] = z.re;
            a[(i + n, j + n)] = z.re;
            a[(i, j + n)] = -z.im;
            a[(i + n, j)] = z.im;
        }
    }
    let size = 2 * n;
    for _sweep in 0..100 {
        let off: f64 = (0..size).flat_map(|i| (0..size).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off.sqrt() <= 1e-15 * a.norm().max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..size {
            for q in p + 1..size {
                if a[(p, q)] == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..size {
                    let (arp, arq) = (a[(r, p)], a[(r, q)]);
                    a[(r, p)] = c * arp - s * arq;
                    a[(r, q)] = s * arp + c * arq;
                }
                for r in 0..size {
                    let (apr, aqr) = (a[(p, r)], a[(q, r)]);
                    a[(p, r)] = c * apr - s * aqr;
                    a[(q, r)] = s * apr + c * aqr;
                }
            }
        }
    }
    let d: Vec<f64> = (0..size).map(|i| a[(i, i)]).collect();
    (d.iter().copied().fold(f64::INFINITY, f64::min), d.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

pub fn random_hermitian<R: Rng>(n: usize, rng: &mut R) -> DMatrix<Complex64> {
    let x = DMatrix::from_fn(n, n, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    (&x + x.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Best min-SINR over a polar grid on each AP's power budget, followed by a
/// shrinking local pattern search. Only for two APs and two users.
///
/// With `u_mk = √(η_mk γ_mk)`, AP m's budget is the quarter disk
/// `u_m1² + u_m2² ≤ 1`, parametrized by radius and angle.
pub fn grid_maxmin_2x2(beta: &DMatrix<f64>, gamma: &DMatrix<f64>, gram: &DMatrix<Complex64>, rho_d: f64, n: usize) -> f64 {
    assert_eq!(beta.shape(), (2, 2));
    let eval = |p: [f64; 4]| -> f64 {
        // p = [r0, a0, r1, a1]
        let mut eta = DMatrix::zeros(2, 2);
        for ap in 0..2 {
            let (r, a) = (p[2 * ap], p[2 * ap + 1]);
            let u = [r * a.cos(), r * a.sin()];
            for user in 0..2 {
                eta[(ap, user)] = u[user] * u[user] / gamma[(ap, user)];
            }
        }
        let s = sinr_oracle(beta, gamma, gram, &eta, rho_d);
        s[0].min(s[1])
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let radii: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
    let angles: Vec<f64> = (0..n).map(|i| half_pi * i as f64 / (n - 1) as f64).collect();
    let mut best = (f64::NEG_INFINITY, [0.0; 4]);
    for &r0 in &radii {
        for &a0 in &angles {
            for &r1 in &radii {
                for &a1 in &angles {
                    let p = [r0, a0, r1, a1];
                    let v = eval(p);
                    if v > best.0 {
                        best = (v, p);
                    }
                }
            }
        }
    }
    let clamp = |p: [f64; 4]| [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, half_pi), p[2].clamp(0.0, 1.0), p[3].clamp(0.0, half_pi)];
    let mut step = [1.0 / n as f64, half_pi / n as f64, 1.0 / n as f64, half_pi / n as f64];
    for _ in 0..200 {
        let mut improved = false;
        for dim in 0..4 {
            for sign in [-1.0, 1.0] {
                let mut p = best.1;
                p[dim] += sign * step[dim];
                let p = clamp(p);
                let v = eval(p);
                if v > best.0 {
                    best = (v, p);
                    improved = true;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    best.0
}

pub fn orthonormal_book(k: usize) -> PilotBook {
    PilotBook::new(orthonormal_base(k).unwrap()).unwrap()
}
