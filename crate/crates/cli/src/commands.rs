//! Subcommand implementations. Human-readable reports go to stdout,
//! machine-readable results to files under the output directory.

use cellfree::experiment::{
    cell_free_rates, prepare_drop, run_drops, small_cell_rates, write_outputs, PilotScheme, Scenario, SystemSelection,
};
use cellfree::linkmodel::{full_power_allocation, full_power_rates, gamma, mc_effective_sinr, rate_cf, PowerAllocation, RateReport};
use cellfree::maxmin::solve_maxmin;
use cellfree::pilots::{assign_random, contamination_objective, orthonormal_base, PilotBook, RandomAssignment};
use cellfree::propagation::{large_scale, LargeScale};
use cellfree::topology::NetworkDrop;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Rate,
    Power,
    Pilots,
    Validate,
}

impl Command {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "simulate" => Command::Simulate,
            "rate" => Command::Rate,
            "power" => Command::Power,
            "pilots" => Command::Pilots,
            "validate" => Command::Validate,
            _ => return None,
        })
    }
}

pub fn run(command: Command, config: &ExperimentConfig) -> Result<(), CliError> {
    let out = PathBuf::from(&config.out);
    std::fs::create_dir_all(&out)?;
    serde_json::to_writer_pretty(create(&out, "config.json")?, &config.resolved())?;
    match command {
        Command::Simulate => simulate(config, &out),
        Command::Rate => rate(config, &out),
        Command::Power => power(config, &out),
        Command::Pilots => pilots(config, &out),
        Command::Validate => validate(config, &out),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn print_report(label: &str, report: &RateReport) {
    println!("{label}: min rate {:.4} bit/s/Hz", report.min_rate());
    println!("  user        sinr    rate");
    for (k, (s, r)) in report.sinr.iter().zip(&report.rates).enumerate() {
        println!("  {k:>4} {s:>11.4e} {r:>7.4}");
    }
}

fn simulate(config: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let scenario = config.scenario();
    log::info!("running {} drops (M={}, K={}, τ={})", scenario.n_drops, scenario.num_aps, scenario.num_users, scenario.tau);
    let set = run_drops(&scenario)?;
    let summary = write_outputs(out, &scenario, &set)?;
    for s in &summary.systems {
        let (Some(tp), Some(mr)) = (&s.throughput, &s.min_rate) else { continue };
        println!(
            "{:<9} throughput p5 {:>8.3} Mbit/s  median {:>8.3} Mbit/s | min-rate p5 {:.4} bit/s/Hz",
            s.system.tag(),
            tp.p5 / 1e6,
            tp.median / 1e6,
            mr.p5
        );
    }
    log::info!("outputs written to {}", out.display());
    if set.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::DropFailures {
            failed: set.failures.len(),
            total: scenario.n_drops,
        })
    }
}

fn rate(config: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let scenario = config.scenario();
    let drop = prepare_drop(&scenario, config.drop)?;
    drop.beta.write_csv(create(out, "beta.csv")?)?;
    drop.book.write_csv(create(out, "pilots.csv")?)?;
    if scenario.system != SystemSelection::Smallcell {
        let cf = cell_free_rates(&scenario, &drop)?;
        print_report(&format!("cell-free ({:?} power)", scenario.power_scheme), &cf.report);
        cf.report.write_csv(create(out, "rates_cellfree.csv")?)?;
    }
    if scenario.system != SystemSelection::Cellfree {
        let sc = small_cell_rates(&scenario, &drop)?;
        print_report("small-cell", &sc);
        sc.write_csv(create(out, "rates_smallcell.csv")?)?;
    }
    Ok(())
}

fn power(config: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let scenario = config.scenario();
    let drop = prepare_drop(&scenario, config.drop)?;
    let rho_d = scenario.rho_d()?;
    let sol = solve_maxmin(&drop.beta, &drop.stats, &drop.book, rho_d, &scenario.solve)?;
    let report = rate_cf(&drop.beta, &drop.stats, &drop.book, &sol.allocation, rho_d)?;
    println!(
        "t* in [{:.6}, {:.6}] after {} bisection steps; max AP load {:.6}",
        sol.t_low,
        sol.t_high,
        sol.iterations,
        sol.allocation.max_ap_load(&drop.stats)
    );
    print_report("max-min", &report);
    sol.allocation.write_csv(create(out, "allocation.csv")?)?;
    sol.write_trace(create(out, "bisection_trace.jsonl")?)?;
    report.write_csv(create(out, "rates.csv")?)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct PilotComparison {
    scheme: &'static str,
    total_contamination: f64,
    min_rate: f64,
}

fn pilots(config: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let scenario = Scenario {
        pilot_scheme: PilotScheme::Greedy,
        ..config.scenario()
    };
    let drop = prepare_drop(&scenario, config.drop)?;
    let (rho_p, rho_d) = (scenario.rho_p()?, scenario.rho_d()?);
    let mut rows = Vec::new();
    for (scheme, book) in [("random", &drop.random_book), ("greedy", &drop.book)] {
        let total: f64 = (0..book.num_users())
            .map(|k| contamination_objective(&drop.beta, book, k, &book.pilot(k)))
            .sum();
        let min_rate = full_power_rates(&drop.beta, book, rho_p, rho_d)?.min_rate();
        println!("{scheme:<7} contamination {total:.4e}  full-power min rate {min_rate:.4} bit/s/Hz");
        book.write_csv(create(out, &format!("pilots_{scheme}.csv"))?)?;
        rows.push(PilotComparison {
            scheme,
            total_contamination: total,
            min_rate,
        });
    }
    if let Some(g) = &drop.greedy {
        println!("greedy updates: {}", g.steps.len());
    }
    serde_json::to_writer_pretty(create(out, "pilots_comparison.json")?, &rows)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Check {
    name: String,
    passed: bool,
    detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

fn validate(config: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let scenario = config.scenario();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut checks = Vec::new();

    // single link, β = 1, τρ_p = 1, ρ_d = 1: γ = 1/2, η = 2, SINR = 1/4
    let beta = LargeScale::new(DMatrix::from_element(1, 1, 1.0))?;
    let book = PilotBook::new(orthonormal_base(1)?)?;
    let stats = gamma(&beta, &book, 1.0)?;
    let alloc = full_power_allocation(&stats);
    let closed = rate_cf(&beta, &stats, &book, &alloc, 1.0)?.sinr[0];
    checks.push(Check::new("single-link closed form", (closed - 0.25).abs() < 1e-12, format!("sinr {closed}")));
    let mc = mc_effective_sinr(&beta, &book, &alloc, 1.0, 1.0, config.mc_samples, &mut rng)?.sinr[0];
    checks.push(Check::new(
        "single-link Monte-Carlo",
        (mc - 0.25).abs() <= 0.01 * 0.25,
        format!("sinr {mc} at {} samples", config.mc_samples),
    ));
    let sol = solve_maxmin(&beta, &stats, &book, 1.0, &scenario.solve)?;
    checks.push(Check::new(
        "single-link max-min",
        (sol.t_low - 0.25).abs() <= scenario.solve.bisection_tol,
        format!("t* in [{}, {}]", sol.t_low, sol.t_high),
    ));

    let (rho_p, rho_d) = (scenario.rho_p()?, scenario.rho_d()?);
    for i in 0..3 {
        let (m, k, tau) = (rng.random_range(2..=20), rng.random_range(2..=4), rng.random_range(1..=2));
        let (beta, book) = random_instance(&scenario, m, k, tau, &mut rng)?;
        let stats = gamma(&beta, &book, rho_p)?;
        let alloc = full_power_allocation(&stats);
        let closed = rate_cf(&beta, &stats, &book, &alloc, rho_d)?.sinr;
        let mc = mc_effective_sinr(&beta, &book, &alloc, rho_p, rho_d, config.mc_samples, &mut rng)?.sinr;
        let worst = closed.iter().zip(&mc).map(|(c, e)| (c - e).abs() / c).fold(0.0, f64::max);
        checks.push(Check::new(
            format!("closed form vs Monte-Carlo #{i} (M={m}, K={k}, τ={tau})"),
            worst <= 0.02,
            format!("max relative gap {worst:.4}"),
        ));
    }

    for i in 0..2 {
        let tau = rng.random_range(1..=2);
        let (beta, book) = random_instance(&scenario, 2, 2, tau, &mut rng)?;
        let stats = gamma(&beta, &book, rho_p)?;
        let opts = cellfree::maxmin::SolveOptions {
            bisection_tol: 1e-6,
            ..scenario.solve
        };
        let sol = solve_maxmin(&beta, &stats, &book, rho_d, &opts)?;
        let grid = brute_force_maxmin_2x2(&beta, &stats, &book, rho_d, 24)?;
        let gap = (sol.t_low - grid).abs() / grid;
        checks.push(Check::new(
            format!("max-min vs brute force #{i} (τ={tau})"),
            gap <= 0.02,
            format!("solver {:.6e}, grid {grid:.6e}", sol.t_low),
        ));
    }

    for c in &checks {
        println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    serde_json::to_writer_pretty(create(out, "validate.json")?, &checks)?;
    match checks.iter().filter(|c| !c.passed).count() {
        0 => Ok(()),
        n => Err(CliError::ValidationFailed(n)),
    }
}

fn random_instance<R: Rng>(scenario: &Scenario, m: usize, k: usize, tau: usize, rng: &mut R) -> Result<(LargeScale, PilotBook), CliError> {
    let geometry = NetworkDrop::random(m, k, scenario.extent, rng)?;
    let beta = large_scale(&geometry, &scenario.path_loss, &scenario.shadowing, rng)?;
    let book = assign_random(k, tau, RandomAssignment::Uniform, rng)?;
    Ok((beta, book))
}

/// Best min-SINR on a polar grid over both APs' power budgets, refined by a
/// shrinking coordinate search.
fn brute_force_maxmin_2x2(beta: &LargeScale, stats: &cellfree::linkmodel::LinkStats, book: &PilotBook, rho_d: f64, n: usize) -> Result<f64, CliError> {
    let g = stats.matrix();
    let eval = |p: &[f64; 4]| -> Result<f64, CliError> {
        let eta = DMatrix::from_fn(2, 2, |ap, user| {
            let (r, a) = (p[2 * ap], p[2 * ap + 1]);
            let u = if user == 0 { r * a.cos() } else { r * a.sin() };
            u * u / g[(ap, user)]
        });
        let alloc = PowerAllocation::new(eta, stats, 1e-9)?;
        Ok(rate_cf(beta, stats, book, &alloc, rho_d)?.min_sinr())
    };
    let quarter = std::f64::consts::FRAC_PI_2;
    let mut best = (f64::NEG_INFINITY, [0.0; 4]);
    for i in 0..n.pow(4) {
        let idx = [i % n, (i / n) % n, (i / n / n) % n, i / n / n / n];
        let p = [
            (idx[0] + 1) as f64 / n as f64,
            quarter * idx[1] as f64 / (n - 1) as f64,
            (idx[2] + 1) as f64 / n as f64,
            quarter * idx[3] as f64 / (n - 1) as f64,
        ];
        let v = eval(&p)?;
        if v > best.0 {
            best = (v, p);
        }
    }
    let upper = [1.0, quarter, 1.0, quarter];
    let mut step = [1.0 / n as f64, quarter / n as f64, 1.0 / n as f64, quarter / n as f64];
    for _ in 0..120 {
        let mut moved = false;
        for d in 0..4 {
            for sign in [-1.0, 1.0] {
                let mut p = best.1;
                p[d] = (p[d] + sign * step[d]).clamp(0.0, upper[d]);
                let v = eval(&p)?;
                if v > best.0 {
                    best = (v, p);
                    moved = true;
                }
            }
        }
        if !moved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    Ok(best.0)
}
