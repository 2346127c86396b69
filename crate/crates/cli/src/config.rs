//! Flat JSON configuration and `--key value` overrides.

use cellfree::experiment::{PilotScheme, PowerScheme, Scenario, SmallCellRate, SystemSelection};
use cellfree::maxmin::SolveOptions;
use cellfree::propagation::{cost231_constant, PathLossParams, RadioConfig, ShadowingMode, ShadowingParams};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::Path;

use crate::error::CliError;

/// Every tunable of a run. Field names double as flag names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub num_aps: usize,
    pub num_users: usize,
    pub tau: usize,
    pub coherence_samples: usize,
    /// Side of the square area (m).
    pub extent: f64,
    /// Hz.
    pub bandwidth: f64,
    /// W.
    pub ap_power: f64,
    /// W.
    pub pilot_power: f64,
    pub noise_figure_db: f64,
    /// K.
    pub noise_temperature: f64,
    pub carrier_frequency_mhz: f64,
    pub ap_height: f64,
    pub user_height: f64,
    pub d0: f64,
    pub d1: f64,
    /// Hata-COST231 constant L in dB; derived from frequency and heights when absent.
    pub fixed_loss_db: Option<f64>,
    pub shadowing: ShadowingMode,
    pub sigma_sh: f64,
    pub rho1: f64,
    /// m.
    pub d_decorr: f64,
    pub pilot_scheme: PilotScheme,
    pub power_scheme: PowerScheme,
    pub system: SystemSelection,
    pub n_drops: usize,
    pub seed: u64,
    /// Drop index used by the single-drop commands.
    pub drop: usize,
    pub greedy_max_iters: Option<usize>,
    pub greedy_tol: f64,
    pub bisection_tol: f64,
    pub feas_tol: f64,
    pub max_bisection_iters: usize,
    pub solver_max_iter: u32,
    pub solver_tol: f64,
    pub small_cell_rate: SmallCellRate,
    pub small_cell_mc_samples: usize,
    pub mu_sqrt_variant: bool,
    /// Samples per Monte-Carlo oracle run in `validate`.
    pub mc_samples: usize,
    pub out: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::from_scenario(&Scenario::default(), "out")
    }
}

impl ExperimentConfig {
    fn from_scenario(s: &Scenario, out: &str) -> Self {
        Self {
            num_aps: s.num_aps,
            num_users: s.num_users,
            tau: s.tau,
            coherence_samples: s.coherence_samples,
            extent: s.extent,
            bandwidth: s.radio.bandwidth,
            ap_power: s.radio.ap_power,
            pilot_power: s.radio.pilot_power,
            noise_figure_db: s.radio.noise_figure_db,
            noise_temperature: s.radio.noise_temperature,
            carrier_frequency_mhz: s.path_loss.carrier_frequency_mhz,
            ap_height: s.path_loss.ap_height,
            user_height: s.path_loss.user_height,
            d0: s.path_loss.d0,
            d1: s.path_loss.d1,
            fixed_loss_db: None,
            shadowing: s.shadowing.mode,
            sigma_sh: s.shadowing.sigma_sh,
            rho1: s.shadowing.rho1,
            d_decorr: s.shadowing.d_decorr,
            pilot_scheme: s.pilot_scheme,
            power_scheme: s.power_scheme,
            system: s.system,
            n_drops: s.n_drops,
            seed: s.seed,
            drop: 0,
            greedy_max_iters: s.greedy_max_iters,
            greedy_tol: s.greedy_tol,
            bisection_tol: s.solve.bisection_tol,
            feas_tol: s.solve.feas_tol,
            max_bisection_iters: s.solve.max_bisection_iters,
            solver_max_iter: s.solve.solver_max_iter,
            solver_tol: s.solve.solver_tol,
            small_cell_rate: s.small_cell_rate,
            small_cell_mc_samples: s.small_cell_mc_samples,
            mu_sqrt_variant: s.mu_sqrt_variant,
            mc_samples: 1_000_000,
            out: out.to_string(),
        }
    }

    /// Config keys in declaration order.
    pub fn keys() -> Vec<String> {
        match serde_json::to_value(Self::default()) {
            Ok(Value::Object(map)) => map.keys().cloned().collect(),
            _ => Vec::new(),
        }
    }

    /// Reads `path` (if any), applies `overrides` on top and validates.
    ///
    /// An empty file is the default configuration. Override values are read
    /// as JSON when they parse as such and as plain strings otherwise, so
    /// `--tau 20` and `--shadowing correlated` both work.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut map = match path {
            None => Map::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config {
                    key: p.display().to_string(),
                    message: e.to_string(),
                })?;
                if text.trim().is_empty() {
                    Map::new()
                } else {
                    match serde_json::from_str::<Value>(&text) {
                        Ok(Value::Object(m)) => m,
                        Ok(_) => return Err(config_err("<root>", "expected a JSON object")),
                        Err(e) => return Err(config_err("<root>", e)),
                    }
                }
            }
        };
        let known = Self::keys();
        if let Some(key) = map.keys().chain(overrides.iter().map(|(k, _)| k)).find(|k| !known.contains(k)) {
            return Err(config_err(key, "unknown key"));
        }
        for (key, raw) in overrides {
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            map.insert(key.clone(), value);
        }
        let config: Self = serde_path_to_error::deserialize(Value::Object(map)).map_err(|e| CliError::Config {
            key: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |key: &str, msg: String| Err(config_err(key, msg));
        if self.tau >= self.coherence_samples {
            return fail("tau", format!("tau must be smaller than coherence_samples ({} ≥ {})", self.tau, self.coherence_samples));
        }
        if self.drop >= self.n_drops {
            return fail("drop", format!("drop index {} is outside 0..{}", self.drop, self.n_drops));
        }
        if self.mc_samples == 0 {
            return fail("mc_samples", "must be positive".into());
        }
        self.scenario()
            .validate()
            .or_else(|e| fail("scenario", e.to_string()))
    }

    pub fn resolved_fixed_loss_db(&self) -> f64 {
        self.fixed_loss_db
            .unwrap_or_else(|| cost231_constant(self.carrier_frequency_mhz, self.ap_height, self.user_height))
    }

    /// Copy with every derived default filled in, as echoed next to outputs.
    pub fn resolved(&self) -> Self {
        Self {
            fixed_loss_db: Some(self.resolved_fixed_loss_db()),
            greedy_max_iters: Some(self.scenario().greedy_options().max_iters),
            ..self.clone()
        }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            num_aps: self.num_aps,
            num_users: self.num_users,
            tau: self.tau,
            coherence_samples: self.coherence_samples,
            extent: self.extent,
            radio: RadioConfig {
                ap_power: self.ap_power,
                pilot_power: self.pilot_power,
                bandwidth: self.bandwidth,
                noise_figure_db: self.noise_figure_db,
                noise_temperature: self.noise_temperature,
            },
            path_loss: PathLossParams {
                d0: self.d0,
                d1: self.d1,
                carrier_frequency_mhz: self.carrier_frequency_mhz,
                ap_height: self.ap_height,
                user_height: self.user_height,
                fixed_loss_db: self.resolved_fixed_loss_db(),
            },
            shadowing: ShadowingParams {
                sigma_sh: self.sigma_sh,
                rho1: self.rho1,
                d_decorr: self.d_decorr,
                mode: self.shadowing,
            },
            pilot_scheme: self.pilot_scheme,
            power_scheme: self.power_scheme,
            system: self.system,
            n_drops: self.n_drops,
            seed: self.seed,
            greedy_max_iters: self.greedy_max_iters,
            greedy_tol: self.greedy_tol,
            solve: SolveOptions {
                bisection_tol: self.bisection_tol,
                feas_tol: self.feas_tol,
                max_bisection_iters: self.max_bisection_iters,
                solver_max_iter: self.solver_max_iter,
                solver_tol: self.solver_tol,
            },
            small_cell_rate: self.small_cell_rate,
            small_cell_mc_samples: self.small_cell_mc_samples,
            mu_sqrt_variant: self.mu_sqrt_variant,
        }
    }
}

fn config_err(key: &str, message: impl ToString) -> CliError {
    CliError::Config {
        key: key.to_string(),
        message: message.to_string(),
    }
}
