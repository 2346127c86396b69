//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria that fail are reported but do not fail the process unless
//! `ACCEPTANCE_STRICT=1` is set; see the README for the known gaps.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use cellfree::experiment::*;
use cellfree::linkmodel::{mc_effective_sinr, rate_cf};
use cellfree::maxmin::{feasible, solve_maxmin, FeasibilityInstance, SolveOptions};
use cellfree::pilots::{contamination_matrix, contamination_objective, smallest_eigenvector};
use cellfree::propagation::{sample_shadowing, ShadowingMode, ShadowingParams};
use cellfree::topology::{wrap_distance, NetworkDrop, Point};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

struct Verdict {
    id: &'static str,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn p5(v: &[f64]) -> f64 {
    percentile(v, 0.05).expect("non-empty sample")
}

fn closed_form_vs_monte_carlo() -> Verdict {
    let ((worst, n), took) = timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let (rho_p, rho_d) = rho();
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let (m, k, tau) = (rng.random_range(2..=20), rng.random_range(2..=4), rng.random_range(1..=2));
            let inst = random_instance(m, k, tau, &mut rng);
            let alloc = random_allocation(&inst.stats, &mut rng);
            let closed = rate_cf(&inst.beta, &inst.stats, &inst.book, &alloc, rho_d).unwrap().sinr;
            let mc = mc_effective_sinr(&inst.beta, &inst.book, &alloc, rho_p, rho_d, 1_000_000, &mut rng).unwrap().sinr;
            for (c, e) in closed.iter().zip(&mc) {
                worst = worst.max((c - e).abs() / c);
            }
        }
        (worst, 20)
    });
    Verdict {
        id: "1",
        name: "closed-form SINR vs Monte-Carlo",
        passed: worst <= 0.02 && took <= Duration::from_secs(300),
        detail: format!("worst relative gap {worst:.4} over {n} instances (limit 0.02), {:.0?}", took),
    }
}

fn maxmin_vs_grid() -> Verdict {
    let (worst, took) = timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(102);
        let (_, rho_d) = rho();
        let opts = SolveOptions { bisection_tol: 1e-6, ..Default::default() };
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let tau = rng.random_range(1..=2);
            let inst = random_instance(2, 2, tau, &mut rng);
            let sol = solve_maxmin(&inst.beta, &inst.stats, &inst.book, rho_d, &opts).unwrap();
            let grid = grid_maxmin_2x2(inst.beta.matrix(), inst.stats.matrix(), inst.book.gram(), rho_d, 40);
            worst = worst.max((sol.t_low - grid).abs() / grid);
        }
        worst
    });
    Verdict {
        id: "2",
        name: "max-min vs grid search (M=2, K=2)",
        passed: worst <= 0.02 && took <= Duration::from_secs(120),
        detail: format!("worst relative gap {worst:.4} over 10 instances (limit 0.02), {:.0?}", took),
    }
}

fn power_control_gain(maxmin_iid: &SampleSet) -> (Verdict, String) {
    let full = run_drops(&Scenario { power_scheme: PowerScheme::Full, system: SystemSelection::Cellfree, ..Default::default() }).unwrap();
    let (f, m) = (p5(&full.min_rates(System::Cellfree)), p5(&maxmin_iid.min_rates(System::Cellfree)));
    let ratio = m / f;
    let verdict = Verdict {
        id: "3",
        name: "max-min over full power, 95%-likely min-rate (greedy pilots)",
        passed: (8.0..=25.0).contains(&ratio) && maxmin_iid.failures.is_empty(),
        detail: format!("ratio {ratio:.2} (full {f:.4}, max-min {m:.4} bit/s/Hz; band [8, 25])"),
    };
    // same comparison with random pilots, reported for context only
    let random = |power| {
        let sc = Scenario { pilot_scheme: PilotScheme::Random, power_scheme: power, system: SystemSelection::Cellfree, ..Default::default() };
        p5(&run_drops(&sc).unwrap().min_rates(System::Cellfree))
    };
    let (rf, rm) = (random(PowerScheme::Full), random(PowerScheme::Maxmin));
    let info = format!("ratio with random pilots {:.2} (full {rf:.4}, max-min {rm:.4})", rm / rf);
    (verdict, info)
}

fn pilot_assignment() -> Verdict {
    let (out, took) = timed(|| {
        let base = Scenario {
            num_aps: 200,
            num_users: 50,
            tau: 20,
            n_drops: 200,
            power_scheme: PowerScheme::Full,
            system: SystemSelection::Cellfree,
            ..Default::default()
        };
        let run = |scheme| run_drops(&Scenario { pilot_scheme: scheme, ..base.clone() }).unwrap().min_rate_by_drop(System::Cellfree);
        (run(PilotScheme::Random), run(PilotScheme::Greedy), run(PilotScheme::OrthogonalBound))
    });
    let (random, greedy, bound) = out;
    let values = |v: &[(usize, f64)]| v.iter().map(|x| x.1).collect::<Vec<_>>();
    let ratio = p5(&values(&greedy)) / p5(&values(&random));
    let beaten = greedy.iter().zip(&bound).filter(|(g, b)| b.1 < g.1).count();
    Verdict {
        id: "4",
        name: "greedy over random pilots; orthogonal bound per drop",
        passed: (1.4..=3.0).contains(&ratio) && beaten == 0 && took <= Duration::from_secs(1800),
        detail: format!(
            "greedy/random {ratio:.2} (band [1.4, 3.0]); bound below greedy in {beaten} of {} drops, {:.0?}",
            greedy.len(),
            took
        ),
    }
}

fn cell_free_vs_small_cell(iid: &SampleSet) -> Verdict {
    let cf = p5(&iid.throughputs(System::Cellfree)) / 1e6;
    let sc = p5(&iid.throughputs(System::Smallcell)) / 1e6;
    Verdict {
        id: "5",
        name: "cell-free vs small-cell throughput, iid shadowing",
        passed: (7.0..=30.0).contains(&cf) && cf / sc >= 8.0,
        detail: format!("cell-free {cf:.2} Mbit/s (band [7, 30]), small-cell {sc:.3} Mbit/s, ratio {:.1} (≥ 8)", cf / sc),
    }
}

fn correlation_ordering(iid: &SampleSet, correlated: &SampleSet) -> Verdict {
    let factor = |s| p5(&iid.throughputs(s)) / p5(&correlated.throughputs(s));
    let (sc, cf) = (factor(System::Smallcell), factor(System::Cellfree));
    Verdict {
        id: "6",
        name: "shadowing correlation hurts small cells more",
        passed: sc > cf && (2.0..=8.0).contains(&sc) && (1.2..=4.0).contains(&cf),
        detail: format!("small-cell factor {sc:.2} (band [2, 8]), cell-free factor {cf:.2} (band [1.2, 4])"),
    }
}

fn invariant_suites() -> Verdict {
    let (failures, took) = timed(|| {
        let mut failures = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let (_, rho_d) = rho();
        let opts = SolveOptions::default();

        // per-AP power constraint at returned allocations
        let mut worst_load: f64 = 0.0;
        for _ in 0..20 {
            let inst = random_instance(rng.random_range(2..=15), rng.random_range(1..=6), rng.random_range(1..=3), &mut rng);
            let sol = solve_maxmin(&inst.beta, &inst.stats, &inst.book, rho_d, &opts).unwrap();
            worst_load = worst_load.max(sol.allocation.max_ap_load(&inst.stats));
        }
        let sc = Scenario { system: SystemSelection::Cellfree, ..Default::default() };
        for i in 0..3 {
            let drop = prepare_drop(&sc, i).unwrap();
            let out = cell_free_rates(&sc, &drop).unwrap();
            worst_load = worst_load.max(out.maxmin.unwrap().allocation.max_ap_load(&drop.stats));
        }
        if worst_load > 1.0 + 1e-7 {
            failures.push(format!("AP load {worst_load}"));
        }

        // bisection monotonicity on sampled target pairs
        for _ in 0..20 {
            let inst = random_instance(6, 3, 2, &mut rng);
            let top = cellfree::maxmin::sinr_upper_bound(inst.stats.matrix(), rho_d);
            let (a, b) = (rng.random_range(0.0..0.6) * top, rng.random_range(0.0..0.6) * top);
            let (lo, hi) = (a.min(b), a.max(b));
            let base = FeasibilityInstance::new(&inst.beta, &inst.stats, &inst.book, rho_d, hi).unwrap();
            let at_hi = feasible(&base, &opts).unwrap().is_feasible();
            let at_lo = feasible(&FeasibilityInstance { target_sinr: lo, ..base }, &opts).unwrap().is_feasible();
            if at_hi && !at_lo {
                failures.push(format!("feasible at {hi} but not at {lo}"));
            }
        }

        // greedy eigen-update never raises the updated user's contamination
        let g = Scenario { num_aps: 200, num_users: 50, tau: 20, pilot_scheme: PilotScheme::Greedy, system: SystemSelection::Cellfree, ..Default::default() };
        for i in 0..20 {
            let drop = prepare_drop(&g, i).unwrap();
            for s in &drop.greedy.unwrap().steps {
                if s.objective_after > s.objective_before {
                    failures.push(format!("greedy step raised contamination on drop {i}"));
                }
            }
        }
        for _ in 0..3 {
            let inst = random_instance(20, 8, 4, &mut rng);
            let k = rng.random_range(0..8);
            let a = contamination_matrix(&inst.beta, &inst.book, k);
            let v = smallest_eigenvector(&a).unwrap();
            let eig = contamination_objective(&inst.beta, &inst.book, k, &v);
            let search = (0..100_000)
                .map(|_| contamination_objective(&inst.beta, &inst.book, k, &random_unit_vector(4, &mut rng)))
                .fold(f64::INFINITY, f64::min);
            if eig > search + 1e-10 * a.norm() {
                failures.push("random search beat the eigenvector".into());
            }
        }

        // shadowing covariance
        let aps = vec![
            Point::new(100.0, 100.0),
            Point::new(115.0, 100.0),
            Point::new(100.0, 160.0),
            Point::new(300.0, 100.0),
            Point::new(980.0, 100.0),
            Point::new(600.0, 600.0),
        ];
        let drop = NetworkDrop::new(1000.0, aps, vec![Point::new(500.0, 500.0)]).unwrap();
        let params = ShadowingParams { rho1: 1.0, mode: ShadowingMode::Correlated, ..Default::default() };
        let draws: Vec<_> = (0..10_000).map(|_| sample_shadowing(&drop, &params, &mut rng).unwrap()).collect();
        for j in 1..6 {
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for z in &draws {
                sxy += z[(0, 0)] * z[(j, 0)];
                sxx += z[(0, 0)] * z[(0, 0)];
                syy += z[(j, 0)] * z[(j, 0)];
            }
            let got = sxy / (sxx * syy).sqrt();
            let d = wrap_distance(&drop.ap_positions[0], &drop.ap_positions[j], 1000.0).unwrap();
            let want = (-d / 100.0f64).exp2();
            if (got - want).abs() > 0.03 {
                failures.push(format!("AP pair (0,{j}) correlation {got:.3} vs {want:.3}"));
            }
        }

        // torus metric
        let d = 1000.0;
        let pt = |rng: &mut ChaCha8Rng| Point::new(rng.random_range(0.0..d), rng.random_range(0.0..d));
        for _ in 0..10_000 {
            let (p, q, r) = (pt(&mut rng), pt(&mut rng), pt(&mut rng));
            let pq = wrap_distance(&p, &q, d).unwrap();
            let ok = wrap_distance(&p, &p, d).unwrap() == 0.0
                && pq == wrap_distance(&q, &p, d).unwrap()
                && pq <= ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt() + 1e-9
                && pq <= d / 2f64.sqrt() + 1e-9
                && pq <= wrap_distance(&p, &r, d).unwrap() + wrap_distance(&r, &q, d).unwrap() + 1e-9;
            if !ok {
                failures.push(format!("torus metric violated at {p:?}, {q:?}, {r:?}"));
                break;
            }
        }
        failures
    });
    Verdict {
        id: "7",
        name: "invariant suites",
        passed: failures.is_empty() && took <= Duration::from_secs(300),
        detail: if failures.is_empty() { format!("all invariants hold, {:.0?}", took) } else { failures.join("; ") },
    }
}

fn run_cli(args: &[&str], out: &Path) -> Option<(i32, Vec<u8>)> {
    let o = Command::new(env!("CARGO_BIN_EXE_cellfree"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "error")
        .output()
        .ok()?;
    Some((o.status.code()?, o.stdout))
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn determinism() -> Verdict {
    let small = ["--num_aps", "16", "--num_users", "5", "--tau", "3", "--n_drops", "4", "--seed", "9", "--mc_samples", "100000"];
    let mut mismatched = Vec::new();
    for threads in ["1", "2"] {
        for cmd in ["simulate", "rate", "power", "pilots", "validate"] {
            let args: Vec<&str> = [cmd, "--threads", threads].iter().chain(&small).copied().collect();
            let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
            // a check may legitimately fail at this sample count; only
            // reproducibility matters here
            let (x, y) = (run_cli(&args, a.path()), run_cli(&args, b.path()));
            // config.json echoes the output directory, which differs by design
            let strip = |v: Vec<(String, Vec<u8>)>| v.into_iter().filter(|(n, _)| n != "config.json").collect::<Vec<_>>();
            let files = strip(snapshot(a.path()));
            if x.is_none() || x != y || files.is_empty() || files != strip(snapshot(b.path())) {
                mismatched.push(format!("{cmd}/threads={threads}"));
            }
        }
    }
    Verdict {
        id: "8",
        name: "byte-identical outputs for equal seed and thread count",
        passed: mismatched.is_empty(),
        detail: if mismatched.is_empty() { "5 subcommands × 2 thread counts".into() } else { format!("differs: {}", mismatched.join(", ")) },
    }
}

fn report(v: &Verdict) {
    println!("{} [{}] {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.id, v.name, v.detail);
}

fn main() {
    println!("acceptance suite");
    let mut verdicts = Vec::new();
    let mut record = |v: Verdict| {
        report(&v);
        verdicts.push(v);
    };
    record(closed_form_vs_monte_carlo());
    record(maxmin_vs_grid());

    let iid = run_drops(&Scenario::default()).unwrap();
    let (v3, info) = power_control_gain(&iid);
    record(v3);
    println!("     [3] info: {info}");
    record(pilot_assignment());
    record(cell_free_vs_small_cell(&iid));
    let mut corr = Scenario::default();
    corr.shadowing.mode = ShadowingMode::Correlated;
    let correlated = run_drops(&corr).unwrap();
    record(correlation_ordering(&iid, &correlated));
    record(invariant_suites());
    record(determinism());

    let failed = verdicts.iter().filter(|v| !v.passed).count();
    println!("{} of {} criteria passed", verdicts.len() - failed, verdicts.len());
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
