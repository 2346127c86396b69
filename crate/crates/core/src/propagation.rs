//! Large-scale fading: three-slope path loss anchored on COST231-Hata, and
//! log-normal shadowing with optional AP-side and user-side spatial
//! correlation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::topology::{torus_distance, NetworkDrop, Point};

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380649e-23;

/// Largest diagonal jitter tried before a covariance factorization is
/// declared a numeric failure.
pub const MAX_COVARIANCE_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams {
    /// Breakpoint below which the loss is flat (m).
    pub d0: f64,
    /// Breakpoint above which the exponent is 3.5 (m).
    pub d1: f64,
    pub carrier_frequency_mhz: f64,
    pub ap_height: f64,
    pub user_height: f64,
    /// COST231-Hata constant term `L` in dB.
    pub fixed_loss_db: f64,
}

impl PathLossParams {
    /// Builds the parameters with `L` taken from the COST231-Hata formula.
    pub fn cost231(d0: f64, d1: f64, carrier_frequency_mhz: f64, ap_height: f64, user_height: f64) -> Result<Self> {
        let p = Self {
            d0,
            d1,
            carrier_frequency_mhz,
            ap_height,
            user_height,
            fixed_loss_db: cost231_constant(carrier_frequency_mhz, ap_height, user_height),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0 && self.d0 < self.d1 && self.d1.is_finite()) {
            return Err(invalid(format!(
                "breakpoints must satisfy 0 < d0 < d1, got d0={} d1={}",
                self.d0, self.d1
            )));
        }
        if !(self.carrier_frequency_mhz > 0.0 && self.ap_height > 0.0 && self.user_height > 0.0) {
            return Err(invalid("frequency and antenna heights must be positive"));
        }
        if !self.fixed_loss_db.is_finite() {
            return Err(invalid("fixed loss must be finite"));
        }
        Ok(())
    }
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self::cost231(10.0, 50.0, 1900.0, 15.0, 1.65).expect("default path-loss parameters are valid")
    }
}

/// COST231-Hata constant part (dB) for frequency in MHz and heights in m.
pub fn cost231_constant(f_mhz: f64, h_ap: f64, h_user: f64) -> f64 {
    let lf = f_mhz.log10();
    46.3 + 33.9 * lf - 13.82 * h_ap.log10() - (1.1 * lf - 0.7) * h_user + (1.56 * lf - 0.8)
}

/// Three-slope channel gain in dB (a negative number) at distance `d` meters.
///
/// Exponent 3.5 beyond `d1`, 2 between `d0` and `d1`, 0 below `d0`; the
/// pieces join continuously at both breakpoints.
pub fn path_loss_db(d: f64, params: &PathLossParams) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(invalid(format!("distance must be non-negative, got {d}")));
    }
    Ok(gain_db(d, params))
}

fn gain_db(d: f64, p: &PathLossParams) -> f64 {
    let km = |x: f64| (x / 1000.0).log10();
    if d > p.d1 {
        -p.fixed_loss_db - 35.0 * km(d)
    } else if d > p.d0 {
        -p.fixed_loss_db - 15.0 * km(p.d1) - 20.0 * km(d)
    } else {
        -p.fixed_loss_db - 15.0 * km(p.d1) - 20.0 * km(p.d0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShadowingMode {
    None,
    Iid,
    Correlated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowingParams {
    /// Shadow-fading standard deviation in dB.
    pub sigma_sh: f64,
    /// Share of the shadowing variance carried by the AP-side term.
    pub rho1: f64,
    /// Distance (m) at which spatial correlation halves.
    pub d_decorr: f64,
    pub mode: ShadowingMode,
}

impl ShadowingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_sh >= 0.0 && self.sigma_sh.is_finite()) {
            return Err(invalid("sigma_sh must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.rho1) {
            return Err(invalid(format!("rho1 must lie in [0, 1], got {}", self.rho1)));
        }
        if !(self.d_decorr > 0.0) {
            return Err(invalid("d_decorr must be positive"));
        }
        Ok(())
    }
}

impl Default for ShadowingParams {
    fn default() -> Self {
        Self {
            sigma_sh: 8.0,
            rho1: 0.5,
            d_decorr: 100.0,
            mode: ShadowingMode::Iid,
        }
    }
}

/// Large-scale fading coefficients, `beta[(m, k)]` for AP `m` and user `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeScale {
    beta: DMatrix<f64>,
}

impl LargeScale {
    pub fn new(beta: DMatrix<f64>) -> Result<Self> {
        if beta.nrows() == 0 || beta.ncols() == 0 {
            return Err(invalid("beta matrix is empty"));
        }
        if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(invalid(format!("beta entries must be positive and finite, found {b}")));
        }
        Ok(Self { beta })
    }

    /// Builds β from path loss and a given standard-normal shadowing matrix.
    pub fn from_shadowing(
        drop: &NetworkDrop,
        pl: &PathLossParams,
        sigma_sh: f64,
        z: Option<&DMatrix<f64>>,
    ) -> Result<Self> {
        pl.validate()?;
        let (m, k) = (drop.num_aps(), drop.num_users());
        if let Some(z) = z {
            if z.shape() != (m, k) {
                return Err(invalid("shadowing matrix shape does not match the drop"));
            }
        }
        let beta = DMatrix::from_fn(m, k, |i, j| {
            let shadow_db = z.map_or(0.0, |z| sigma_sh * z[(i, j)]);
            10f64.powf((gain_db(drop.ap_user_distance(i, j), pl) + shadow_db) / 10.0)
        });
        Self::new(beta)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.beta
    }

    pub fn num_aps(&self) -> usize {
        self.beta.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.beta.ncols()
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.beta[(m, k)]
    }

    /// Writes β as CSV: one row per AP, one column per user.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in self.beta.row_iter() {
            out.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Draws the standard-normal shadowing matrix `z` (M×K).
pub fn sample_shadowing<R: Rng + ?Sized>(
    drop: &NetworkDrop,
    params: &ShadowingParams,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    params.validate()?;
    let (m, k) = (drop.num_aps(), drop.num_users());
    match params.mode {
        ShadowingMode::None => Err(invalid("shadowing mode `none` has nothing to sample")),
        ShadowingMode::Iid => Ok(DMatrix::from_fn(m, k, |_, _| rng.sample(StandardNormal))),
        ShadowingMode::Correlated => {
            let ap_factor = covariance_factor(&drop.ap_positions, drop.extent, params.d_decorr)?;
            let user_factor = covariance_factor(&drop.user_positions, drop.extent, params.d_decorr)?;
            let a = &ap_factor * standard_normal_vector(m, rng);
            let b = &user_factor * standard_normal_vector(k, rng);
            let (wa, wb) = (params.rho1.sqrt(), (1.0 - params.rho1).sqrt());
            Ok(DMatrix::from_fn(m, k, |i, j| wa * a[i] + wb * b[j]))
        }
    }
}

/// Samples shadowing (if any) and returns β for the drop.
pub fn large_scale<R: Rng + ?Sized>(
    drop: &NetworkDrop,
    pl: &PathLossParams,
    sh: &ShadowingParams,
    rng: &mut R,
) -> Result<LargeScale> {
    sh.validate()?;
    match sh.mode {
        ShadowingMode::None => LargeScale::from_shadowing(drop, pl, 0.0, None),
        _ => {
            let z = sample_shadowing(drop, sh, rng)?;
            LargeScale::from_shadowing(drop, pl, sh.sigma_sh, Some(&z))
        }
    }
}

fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Spatial correlation `2^(-d/d_decorr)` over wrap-around distances.
pub fn spatial_covariance(points: &[Point], extent: f64, d_decorr: f64) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (-torus_distance(&points[i], &points[j], extent) / d_decorr).exp2()
        }
    })
}

/// Lower Cholesky factor of the spatial covariance, with a bounded diagonal
/// jitter for numerically singular layouts (e.g. coincident points).
fn covariance_factor(points: &[Point], extent: f64, d_decorr: f64) -> Result<DMatrix<f64>> {
    let cov = spatial_covariance(points, extent, d_decorr);
    for jitter in [0.0, 1e-12, 1e-11, MAX_COVARIANCE_JITTER] {
        let mut c = cov.clone();
        for i in 0..c.nrows() {
            c[(i, i)] += jitter;
        }
        if let Some(chol) = c.cholesky() {
            return Ok(chol.unpack());
        }
    }
    Err(Error::Numeric(format!(
        "spatial covariance of {} points is not positive definite",
        points.len()
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    /// AP radiated power (W).
    pub ap_power: f64,
    /// User pilot power (W).
    pub pilot_power: f64,
    pub bandwidth: f64,
    pub noise_figure_db: f64,
    pub noise_temperature: f64,
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [self.ap_power, self.pilot_power, self.bandwidth, self.noise_temperature]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !all_positive || !self.noise_figure_db.is_finite() {
            return Err(invalid("radio powers, bandwidth and noise temperature must be positive"));
        }
        Ok(())
    }

    /// Thermal noise power at the receiver, including the noise figure (W).
    pub fn noise_power(&self) -> f64 {
        BOLTZMANN * self.noise_temperature * self.bandwidth * 10f64.powf(self.noise_figure_db / 10.0)
    }

    /// Normalized downlink SNR ρ_d.
    pub fn rho_d(&self) -> Result<f64> {
        normalized_snr(self.ap_power, self)
    }

    /// Normalized pilot SNR ρ_p.
    pub fn rho_p(&self) -> Result<f64> {
        normalized_snr(self.pilot_power, self)
    }
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            ap_power: 0.2,
            pilot_power: 0.1,
            bandwidth: 20e6,
            noise_figure_db: 9.0,
            noise_temperature: 290.0,
        }
    }
}

/// Transmit power divided by the receiver noise power.
pub fn normalized_snr(power: f64, radio: &RadioConfig) -> Result<f64> {
    radio.validate()?;
    if !(power > 0.0) {
        return Err(invalid("power must be positive"));
    }
    Ok(power / radio.noise_power())
}
