//! Monte-Carlo harness over network drops.
//!
//! Every drop derives its own random streams from the master seed, one per
//! purpose (geometry, shadowing, pilots, AP order, small-cell sampling).
//! Two scenarios that differ only in a scheme therefore see the same APs,
//! users and initial pilots, and results never depend on thread count or
//! execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::linkmodel::{full_power_allocation, full_power_rates, gamma, rate_cf, LinkStats, RateReport};
use crate::maxmin::{solve_maxmin, MaxMinSolution, SolveOptions};
use crate::pilots::{assign_random, greedy_assign, GreedyOptions, GreedyOutcome, PilotBook, RandomAssignment};
use crate::propagation::{large_scale, LargeScale, PathLossParams, RadioConfig, ShadowingParams};
use crate::smallcell::{assign_aps, estimate_variance_mu, rate_sc, RateMethod};
use crate::topology::NetworkDrop;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotScheme {
    Random,
    Greedy,
    /// K mutually orthogonal pilots of length `max(τ, K)`.
    OrthogonalBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerScheme {
    Full,
    Maxmin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemSelection {
    Cellfree,
    Smallcell,
    Both,
}

impl SystemSelection {
    fn includes(self, system: System) -> bool {
        matches!(
            (self, system),
            (SystemSelection::Both, _)
                | (SystemSelection::Cellfree, System::Cellfree)
                | (SystemSelection::Smallcell, System::Smallcell)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Cellfree,
    Smallcell,
}

impl System {
    pub fn tag(self) -> &'static str {
        match self {
            System::Cellfree => "cellfree",
            System::Smallcell => "smallcell",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallCellRate {
    ClosedForm,
    MonteCarlo,
}

/// Everything needed to reproduce a batch of drops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub num_aps: usize,
    pub num_users: usize,
    pub tau: usize,
    /// Coherence interval length T in samples.
    pub coherence_samples: usize,
    /// Side of the square area (m).
    pub extent: f64,
    pub radio: RadioConfig,
    pub path_loss: PathLossParams,
    pub shadowing: ShadowingParams,
    pub pilot_scheme: PilotScheme,
    pub power_scheme: PowerScheme,
    pub system: SystemSelection,
    pub n_drops: usize,
    pub seed: u64,
    /// Defaults to `10·K`.
    pub greedy_max_iters: Option<usize>,
    pub greedy_tol: f64,
    pub solve: SolveOptions,
    pub small_cell_rate: SmallCellRate,
    pub small_cell_mc_samples: usize,
    pub mu_sqrt_variant: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            num_aps: 60,
            num_users: 20,
            tau: 10,
            coherence_samples: 200,
            extent: 1000.0,
            radio: RadioConfig::default(),
            path_loss: PathLossParams::default(),
            shadowing: ShadowingParams::default(),
            pilot_scheme: PilotScheme::Greedy,
            power_scheme: PowerScheme::Maxmin,
            system: SystemSelection::Both,
            n_drops: 100,
            seed: 1,
            greedy_max_iters: None,
            greedy_tol: 1e-4,
            solve: SolveOptions::default(),
            small_cell_rate: SmallCellRate::ClosedForm,
            small_cell_mc_samples: 100_000,
            mu_sqrt_variant: false,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.num_aps == 0 || self.num_users == 0 {
            return Err(invalid("num_aps and num_users must be at least 1"));
        }
        if self.tau == 0 || self.tau >= self.coherence_samples {
            return Err(invalid(format!(
                "need 1 ≤ tau < coherence_samples (tau={}, T={})",
                self.tau, self.coherence_samples
            )));
        }
        if self.n_drops == 0 {
            return Err(invalid("n_drops must be at least 1"));
        }
        if !(self.extent > 0.0) {
            return Err(invalid("extent must be positive"));
        }
        if self.system != SystemSelection::Cellfree && self.num_aps < self.num_users {
            return Err(invalid("the small-cell system needs num_aps ≥ num_users"));
        }
        if !(self.greedy_tol >= 0.0) {
            return Err(invalid("greedy_tol must be non-negative"));
        }
        if self.small_cell_rate == SmallCellRate::MonteCarlo && self.small_cell_mc_samples == 0 {
            return Err(invalid("small_cell_mc_samples must be positive"));
        }
        self.radio.validate()?;
        self.path_loss.validate()?;
        self.shadowing.validate()?;
        self.solve.validate()
    }

    pub fn rho_d(&self) -> Result<f64> {
        self.radio.rho_d()
    }

    pub fn rho_p(&self) -> Result<f64> {
        self.radio.rho_p()
    }

    pub fn greedy_options(&self) -> GreedyOptions {
        GreedyOptions {
            max_iters: self.greedy_max_iters.unwrap_or(10 * self.num_users),
            tol: self.greedy_tol,
        }
    }

    /// Throughput per unit rate, `B (1 - τ/T) / 2` in Hz.
    pub fn throughput_factor(&self) -> f64 {
        self.radio.bandwidth * (1.0 - self.tau as f64 / self.coherence_samples as f64) / 2.0
    }
}

/// Per-user throughput `B (1 - τ/T)/2 · R` in bits/s.
pub fn throughput(rate: f64, bandwidth: f64, tau: usize, coherence_samples: usize) -> Result<f64> {
    if tau >= coherence_samples {
        return Err(invalid("throughput needs tau < T"));
    }
    Ok(bandwidth * (1.0 - tau as f64 / coherence_samples as f64) / 2.0 * rate)
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Geometry = 0,
    Shadowing = 1,
    Pilots = 2,
    ApOrder = 3,
    SmallCellSamples = 4,
}

fn drop_rng(seed: u64, drop: usize, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(drop as u64 * 8 + stream as u64);
    rng
}

/// Geometry, large-scale fading and pilots of one drop.
#[derive(Debug, Clone)]
pub struct PreparedDrop {
    pub index: usize,
    pub geometry: NetworkDrop,
    pub beta: LargeScale,
    /// Uniform random book drawn for the drop (the greedy starting point).
    pub random_book: PilotBook,
    /// Book selected by the scenario's pilot scheme.
    pub book: PilotBook,
    pub stats: LinkStats,
    pub greedy: Option<GreedyOutcome>,
}

pub fn prepare_drop(scenario: &Scenario, index: usize) -> Result<PreparedDrop> {
    let rho_p = scenario.rho_p()?;
    let rho_d = scenario.rho_d()?;
    let geometry = NetworkDrop::random(
        scenario.num_aps,
        scenario.num_users,
        scenario.extent,
        &mut drop_rng(scenario.seed, index, Stream::Geometry),
    )?;
    let beta = large_scale(
        &geometry,
        &scenario.path_loss,
        &scenario.shadowing,
        &mut drop_rng(scenario.seed, index, Stream::Shadowing),
    )?;
    let random_book = assign_random(
        scenario.num_users,
        scenario.tau,
        RandomAssignment::Uniform,
        &mut drop_rng(scenario.seed, index, Stream::Pilots),
    )?;
    let (book, greedy) = match scenario.pilot_scheme {
        PilotScheme::Random => (random_book.clone(), None),
        PilotScheme::OrthogonalBound => {
            let len = scenario.tau.max(scenario.num_users);
            let mut unused = drop_rng(scenario.seed, index, Stream::Pilots);
            (assign_random(scenario.num_users, len, RandomAssignment::OrthogonalBound, &mut unused)?, None)
        }
        PilotScheme::Greedy => {
            let out = greedy_assign(
                &beta,
                random_book.clone(),
                |b| Ok(full_power_rates(&beta, b, rho_p, rho_d)?.rates),
                &scenario.greedy_options(),
            )?;
            (out.book.clone(), Some(out))
        }
    };
    let stats = gamma(&beta, &book, rho_p)?;
    Ok(PreparedDrop {
        index,
        geometry,
        beta,
        random_book,
        book,
        stats,
        greedy,
    })
}

#[derive(Debug, Clone)]
pub struct CellFreeOutcome {
    pub report: RateReport,
    pub maxmin: Option<MaxMinSolution>,
}

pub fn cell_free_rates(scenario: &Scenario, drop: &PreparedDrop) -> Result<CellFreeOutcome> {
    let rho_d = scenario.rho_d()?;
    match scenario.power_scheme {
        PowerScheme::Full => {
            let alloc = full_power_allocation(&drop.stats);
            let report = rate_cf(&drop.beta, &drop.stats, &drop.book, &alloc, rho_d)?;
            Ok(CellFreeOutcome { report, maxmin: None })
        }
        PowerScheme::Maxmin => {
            let sol = solve_maxmin(&drop.beta, &drop.stats, &drop.book, rho_d, &scenario.solve)?;
            let report = rate_cf(&drop.beta, &drop.stats, &drop.book, &sol.allocation, rho_d)?;
            Ok(CellFreeOutcome {
                report,
                maxmin: Some(sol),
            })
        }
    }
}

pub fn small_cell_rates(scenario: &Scenario, drop: &PreparedDrop) -> Result<RateReport> {
    let selection = assign_aps(&drop.beta, &mut drop_rng(scenario.seed, drop.index, Stream::ApOrder))?;
    let assignment = estimate_variance_mu(
        &drop.beta,
        &drop.book,
        scenario.rho_p()?,
        &selection,
        scenario.mu_sqrt_variant,
    )?;
    let method = match scenario.small_cell_rate {
        SmallCellRate::ClosedForm => RateMethod::ClosedForm,
        SmallCellRate::MonteCarlo => RateMethod::MonteCarlo {
            samples: scenario.small_cell_mc_samples,
        },
    };
    rate_sc(
        &drop.beta,
        &assignment,
        scenario.rho_d()?,
        method,
        &mut drop_rng(scenario.seed, drop.index, Stream::SmallCellSamples),
    )
}

#[derive(Debug, Clone)]
pub struct DropOutcome {
    pub index: usize,
    pub cell_free: Option<RateReport>,
    pub small_cell: Option<RateReport>,
    /// Bisection lower end when max-min power control ran.
    pub maxmin_t: Option<f64>,
}

/// Runs the configured systems on drop `index`.
pub fn evaluate_drop(scenario: &Scenario, index: usize) -> Result<DropOutcome> {
    let drop = prepare_drop(scenario, index)?;
    let (cell_free, maxmin_t) = if scenario.system.includes(System::Cellfree) {
        let out = cell_free_rates(scenario, &drop)?;
        (Some(out.report), out.maxmin.map(|s| s.t_low))
    } else {
        (None, None)
    };
    let small_cell = if scenario.system.includes(System::Smallcell) {
        Some(small_cell_rates(scenario, &drop)?)
    } else {
        None
    };
    Ok(DropOutcome {
        index,
        cell_free,
        small_cell,
        maxmin_t,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRecord {
    pub drop: usize,
    pub user: usize,
    pub system: System,
    /// bits/s/Hz, without the training pre-log penalty.
    pub rate: f64,
    /// bits/s.
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropRecord {
    pub drop: usize,
    pub system: System,
    pub min_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropFailure {
    pub drop: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub records: Vec<SampleRecord>,
    pub drops: Vec<DropRecord>,
    pub failures: Vec<DropFailure>,
}

impl SampleSet {
    pub fn rates(&self, system: System) -> Vec<f64> {
        self.records.iter().filter(|r| r.system == system).map(|r| r.rate).collect()
    }

    pub fn throughputs(&self, system: System) -> Vec<f64> {
        self.records.iter().filter(|r| r.system == system).map(|r| r.throughput).collect()
    }

    pub fn min_rates(&self, system: System) -> Vec<f64> {
        self.drops.iter().filter(|d| d.system == system).map(|d| d.min_rate).collect()
    }

    /// Min rate per successful drop, indexed by drop number.
    pub fn min_rate_by_drop(&self, system: System) -> Vec<(usize, f64)> {
        self.drops
            .iter()
            .filter(|d| d.system == system)
            .map(|d| (d.drop, d.min_rate))
            .collect()
    }

    pub fn systems(&self) -> Vec<System> {
        let mut s: Vec<System> = self.drops.iter().map(|d| d.system).collect();
        s.sort();
        s.dedup();
        s
    }
}

/// Runs every drop of the scenario in parallel and gathers the samples in
/// drop order. A drop that fails is logged, listed in `failures` and
/// contributes no samples.
pub fn run_drops(scenario: &Scenario) -> Result<SampleSet> {
    scenario.validate()?;
    let factor = scenario.throughput_factor();
    let outcomes: Vec<Result<DropOutcome>> = (0..scenario.n_drops)
        .into_par_iter()
        .map(|i| evaluate_drop(scenario, i))
        .collect();

    let mut set = SampleSet {
        records: Vec::new(),
        drops: Vec::new(),
        failures: Vec::new(),
    };
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(out) => {
                for (system, report) in [(System::Cellfree, &out.cell_free), (System::Smallcell, &out.small_cell)] {
                    let Some(report) = report else { continue };
                    for (user, &rate) in report.rates.iter().enumerate() {
                        set.records.push(SampleRecord {
                            drop: i,
                            user,
                            system,
                            rate,
                            throughput: factor * rate,
                        });
                    }
                    set.drops.push(DropRecord {
                        drop: i,
                        system,
                        min_rate: report.min_rate(),
                    });
                }
            }
            Err(e) => {
                let e = Error::Drop {
                    drop: i,
                    source: Box::new(e),
                };
                log::warn!("{e}");
                set.failures.push(DropFailure {
                    drop: i,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(set)
}

/// Sorted `(value, i/n)` pairs.
pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(invalid("empirical CDF of an empty sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, (i + 1) as f64 / n))
        .collect())
}

/// Nearest-rank percentile: the `ceil(p·n)`-th smallest sample.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("percentile of an empty sample"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("percentile fraction must lie in (0, 1), got {p}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // guard against p·n landing a hair above an integer
    let rank = ((p * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    Ok(sorted[rank - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Statistic {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// 95%-likely value.
    pub p5: f64,
}

impl Statistic {
    pub fn of(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        Some(Self {
            count: samples.len(),
            mean: samples.iter().sum::<f64>() / samples.len() as f64,
            median: percentile(samples, 0.5).ok()?,
            p5: percentile(samples, 0.05).ok()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemSummary {
    pub system: System,
    pub rate: Option<Statistic>,
    pub throughput: Option<Statistic>,
    pub min_rate: Option<Statistic>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub pilot_scheme: PilotScheme,
    pub power_scheme: PowerScheme,
    pub n_drops: usize,
    pub failures: usize,
    pub systems: Vec<SystemSummary>,
}

pub fn summarize(scenario: &Scenario, set: &SampleSet) -> Summary {
    let systems = [System::Cellfree, System::Smallcell]
        .into_iter()
        .filter(|s| scenario.system.includes(*s))
        .map(|system| SystemSummary {
            system,
            rate: Statistic::of(&set.rates(system)),
            throughput: Statistic::of(&set.throughputs(system)),
            min_rate: Statistic::of(&set.min_rates(system)),
        })
        .collect();
    Summary {
        pilot_scheme: scenario.pilot_scheme,
        power_scheme: scenario.power_scheme,
        n_drops: scenario.n_drops,
        failures: set.failures.len(),
        systems,
    }
}

/// Writes `samples.csv`, `cdf_<system>_throughput.csv`,
/// `cdf_<system>_min_rate.csv` and `summary.json` under `dir`.
pub fn write_outputs(dir: &Path, scenario: &Scenario, set: &SampleSet) -> Result<Summary> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("samples.csv"))?));
    w.write_record(["drop", "user", "system", "rate", "throughput"])?;
    for r in &set.records {
        w.write_record([
            r.drop.to_string(),
            r.user.to_string(),
            r.system.tag().to_string(),
            r.rate.to_string(),
            r.throughput.to_string(),
        ])?;
    }
    w.flush()?;

    for system in set.systems() {
        for (tag, values) in [("throughput", set.throughputs(system)), ("min_rate", set.min_rates(system))] {
            let path = dir.join(format!("cdf_{}_{tag}.csv", system.tag()));
            let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
            w.write_record(["value", "probability"])?;
            for (v, p) in empirical_cdf(&values)? {
                w.write_record([v.to_string(), p.to_string()])?;
            }
            w.flush()?;
        }
    }

    let summary = summarize(scenario, set);
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("summary.json"))?), &summary)?;
    Ok(summary)
}
