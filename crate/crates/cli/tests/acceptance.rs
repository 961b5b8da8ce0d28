//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swent::bounds::{self, AnalyzeOptions};
use swent::estimator::{self, EstimationConfig};
use swent::lie::{self, StructureOptions};
use swent::signals::SubexpVerdict;
use swent::{linalg, Classification, ModeSet, SwitchedSystem, SwitchingSignal};

const RATE_SLACK: f64 = 0.15;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn system(modes: Vec<DMatrix<f64>>, signal: SwitchingSignal) -> SwitchedSystem {
    SwitchedSystem::new(ModeSet::new(modes).unwrap(), signal).unwrap()
}

fn alternating() -> SwitchingSignal {
    SwitchingSignal::periodic(2, vec![(1, 1.0), (2, 1.0)]).unwrap()
}

fn diag(a: f64, b: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_upper(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            0.0,
            rng.gen_range(-1.0..1.0),
        ],
    )
}

fn random_periodic(rng: &mut ChaCha8Rng) -> SwitchingSignal {
    let segs = (0..rng.gen_range(2..5))
        .map(|i| (i % 2 + 1, rng.gen_range(0.2..1.5)))
        .collect();
    SwitchingSignal::periodic(2, segs).unwrap()
}

fn fractions(sys: &SwitchedSystem) -> Vec<f64> {
    sys.signal()
        .activation_fractions(1.0, 0.5)
        .unwrap()
        .iter()
        .map(|f| f.value)
        .collect()
}

fn example_reproduction() -> Verdict {
    let opts = AnalyzeOptions::default();
    let b1 = bounds::analyze(&system(vec![diag(2.0, 0.0), diag(2.0, -1.0)], alternating()), opts)
        .unwrap()
        .bounds;
    let b2 = bounds::analyze(&system(vec![diag(2.0, 0.0), diag(-1.0, 2.0)], alternating()), opts)
        .unwrap()
        .bounds;
    let near = |x: Option<f64>, want: f64| x.is_some_and(|v| (v - want).abs() <= 1e-12);
    let pass = near(b1.lower, 2.0) && near(b1.upper, 2.0) && near(b2.lower, 1.0) && near(b2.upper, 1.5);
    verdict(
        pass,
        format!(
            "system 1 [{:?}, {:?}], system 2 [{:?}, {:?}]",
            b1.lower, b1.upper, b2.lower, b2.upper
        ),
    )
}

fn scalar_law() -> Verdict {
    let sys = system(
        vec![DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, -1.0)],
        alternating(),
    );
    let cfg = EstimationConfig {
        horizons: vec![4.0, 8.0, 12.0, 16.0],
        epsilons: vec![0.5, 0.25],
        grid_resolution: 64,
        ..EstimationConfig::default()
    };
    let rate = estimator::entropy_rate(&sys, None, &cfg).unwrap().rate;
    verdict((rate - 0.5).abs() <= 0.1, format!("rate {rate:.4}, want 0.5 +- 0.1"))
}

fn lti_rates() -> Verdict {
    let cfg = EstimationConfig {
        horizons: vec![4.0, 8.0, 12.0],
        ..EstimationConfig::default()
    };
    let constant = |a: DMatrix<f64>| system(vec![a], SwitchingSignal::constant());
    let saddle = estimator::entropy_rate(&constant(diag(1.0, -1.0)), None, &cfg)
        .unwrap()
        .rate;
    let jordan_block = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    let jordan = estimator::entropy_rate(&constant(jordan_block), None, &cfg)
        .unwrap()
        .rate;
    verdict(
        (saddle - 1.0).abs() <= 0.1 && (jordan - 2.0).abs() <= 0.2,
        format!("diag(1,-1) {saddle:.4} (1 +- 0.1), Jordan {jordan:.4} (2 +- 0.2)"),
    )
}

fn volume_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let sys = system(
            vec![random_matrix(&mut rng, 2), random_matrix(&mut rng, 2)],
            random_periodic(&mut rng),
        );
        for t in [1.0, 5.0, 10.0] {
            let tau = sys.signal().activation_times(t).unwrap();
            let exponent: f64 = sys
                .modes()
                .matrices()
                .iter()
                .zip(&tau)
                .map(|(a, s)| a.trace() * s)
                .sum();
            let det = sys.transition_matrix(t).unwrap().determinant();
            worst = worst.max((det - exponent.exp()).abs() / exponent.exp());
        }
    }
    verdict(
        worst <= 1e-9,
        format!("max relative gap {worst:.2e} over 60 cases (<= 1e-9)"),
    )
}

fn classifier() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let opts = StructureOptions::default();
    let e12 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let mut wrong = 0;
    let mut trials = 0;
    if lie::classify(&ModeSet::new(vec![e12.clone(), e12.transpose()]).unwrap(), opts).classification
        != Classification::Unstructured
    {
        wrong += 1;
    }
    trials += 1;
    for _ in 0..50 {
        let d = |rng: &mut ChaCha8Rng| diag(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let pair = ModeSet::new(vec![d(&mut rng), d(&mut rng)]).unwrap();
        if lie::classify(&pair, opts).classification != Classification::CommutingDiagonalizable {
            wrong += 1;
        }
        let tri = ModeSet::new(vec![random_upper(&mut rng), random_upper(&mut rng)]).unwrap();
        let rep = lie::classify(&tri, opts);
        if rep.classification != Classification::Solvable || rep.residual > 1e-8 * tri.scale() {
            wrong += 1;
        }
        trials += 2;
    }
    verdict(wrong == 0, format!("{wrong} misclassified of {trials}"))
}

/// Random simultaneously triangularizable pairs: upper-triangular pairs
/// conjugated by a common well-conditioned change of basis.
fn triangularizable_systems() -> Vec<SwitchedSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut out = Vec::new();
    while out.len() < 10 {
        let p = DMatrix::<f64>::identity(2, 2) + random_matrix(&mut rng, 2) * 0.4;
        if linalg::condition(&linalg::to_complex(&p)) > 5.0 {
            continue;
        }
        let pinv = p.clone().try_inverse().unwrap();
        let modes = vec![&p * random_upper(&mut rng) * &pinv, &p * random_upper(&mut rng) * &pinv];
        out.push(system(modes, random_periodic(&mut rng)));
    }
    out
}

struct TriangularRun {
    rate: f64,
    upper: f64,
    trace: f64,
    subexp: SubexpVerdict,
    classification: Classification,
}

fn triangular_runs() -> Vec<TriangularRun> {
    triangularizable_systems()
        .into_iter()
        .map(|sys| {
            let s = lie::classify(sys.modes(), StructureOptions::default());
            let fr = fractions(&sys);
            let p = sys.signal().period();
            let subexp = sys
                .signal()
                .subexponential_check(&[10.0 * p, 100.0 * p, 1000.0 * p])
                .unwrap()
                .verdict;
            let upper = bounds::triangular_upper_bound(&sys, &s, &fr, subexp)
                .unwrap()
                .upper
                .unwrap();
            let trace = bounds::trace_lower_bound(&sys, &fr).unwrap();
            let rate = estimator::entropy_rate(&sys, None, &EstimationConfig::default())
                .unwrap()
                .rate;
            TriangularRun {
                rate,
                upper,
                trace,
                subexp,
                classification: s.classification,
            }
        })
        .collect()
}

fn triangular_sandwich(runs: &[TriangularRun]) -> Verdict {
    let bad: Vec<String> = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| {
            r.subexp != SubexpVerdict::Pass
                || r.classification == Classification::Unstructured
                || r.rate > r.upper + RATE_SLACK
        })
        .map(|(i, r)| format!("#{i}: rate {:.3} > {:.3}", r.rate, r.upper))
        .collect();
    let margin = runs.iter().map(|r| r.upper - r.rate).fold(f64::INFINITY, f64::min);
    verdict(
        bad.is_empty(),
        format!(
            "10 systems, min(upper - rate) = {margin:.3} (>= -{RATE_SLACK}) {}",
            bad.join("; ")
        ),
    )
}

fn trace_lower(runs: &[TriangularRun]) -> Verdict {
    let margin = runs
        .iter()
        .map(|r| r.rate - r.trace.max(0.0))
        .fold(f64::INFINITY, f64::min);
    verdict(
        margin >= -RATE_SLACK,
        format!("10 systems, min(rate - max(0, trace)) = {margin:.3} (>= -{RATE_SLACK})"),
    )
}

/// `||exp(N t)||_inf` for the nilpotent part of an n x n Jordan block.
fn nilpotent_norm(n: usize, t: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..n {
        term *= t / k as f64;
        sum += term;
    }
    sum
}

/// Last time in `[0, 100]` at which the polynomial factor exceeds `e^{delta t}`.
fn crossover(n: usize, delta: f64) -> f64 {
    let excess = |t: f64| nilpotent_norm(n, t) - (delta * t).exp();
    let grid: Vec<f64> = (0..=100_000).map(|i| i as f64 * 1e-3).collect();
    let Some(last) = grid.iter().rposition(|&t| excess(t) > 0.0) else {
        return 0.0;
    };
    if last + 1 == grid.len() {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (grid[last], grid[last + 1]);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn jordan_growth() -> Verdict {
    let mut cases = 0;
    let mut failures = Vec::new();
    let mut latest: f64 = 0.0;
    for n in [2usize, 3] {
        for re in [-1.0, 0.0, 1.0] {
            for delta in [0.1, 0.5] {
                let t_star = crossover(n, delta);
                latest = latest.max(t_star);
                if !t_star.is_finite() {
                    failures.push(format!("n={n} delta={delta}: no crossover before 100"));
                    continue;
                }
                let a = DMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        re
                    } else if j == i + 1 {
                        1.0
                    } else {
                        0.0
                    }
                });
                for i in 1..=1000 {
                    let t = 0.1 * i as f64;
                    if t <= t_star {
                        continue;
                    }
                    let norm = linalg::norm_inf(&swent::flow::exp_step(&a, t));
                    if norm > ((re + delta) * t).exp() * (1.0 + 1e-12) {
                        failures.push(format!("n={n} re={re} delta={delta} t={t}"));
                        break;
                    }
                }
                cases += 1;
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!("{cases} blocks, latest crossover {latest:.2} {}", failures.join("; ")),
    )
}

fn packing_sandwich() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = EstimationConfig::default();
    let eps = 0.25;
    let mut bad = Vec::new();
    for i in 0..10 {
        let d = |rng: &mut ChaCha8Rng| diag(rng.gen_range(-1.0..1.5), rng.gen_range(-1.0..1.5));
        let sys = system(vec![d(&mut rng), d(&mut rng)], random_periodic(&mut rng));
        let t = rng.gen_range(1.0..8.0);
        let wide = estimator::separated_count(&sys, t, 2.0 * eps, &cfg).unwrap();
        let span = estimator::spanning_count(&sys, t, eps, &cfg).unwrap();
        let narrow = estimator::separated_count(&sys, t, eps, &cfg).unwrap();
        if !(wide <= span && span <= 4 * narrow) {
            bad.push(format!("#{i}: {wide} <= {span} <= 4*{narrow} fails"));
        }
    }
    verdict(bad.is_empty(), format!("10 systems {}", bad.join("; ")))
}

fn run_estimate(config: &Path, out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_switched-entropy"))
        .args(["estimate", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("system.json");
    std::fs::write(
        &config,
        r#"{"modes": [[[0.6, 1.0], [0.0, -0.4]], [[-0.3, 0.5], [0.0, 0.8]]],
            "signal": {"k": 2, "repeat": "periodic", "segments": [[1, 0.7], [2, 1.1]]},
            "estimation": {"horizons": [4, 8, 12], "epsilons": [0.5, 0.25]}}"#,
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let codes = (run_estimate(&config, &a), run_estimate(&config, &b));
    let same = ["counts.csv", "estimate.json", "bounds.json"]
        .iter()
        .filter(|f| {
            let x = std::fs::read(a.join(f));
            x.is_ok() && x.ok() == std::fs::read(b.join(f)).ok()
        })
        .count();
    verdict(
        codes == (0, 0) && same == 3,
        format!("exit codes {codes:?}, {same}/3 output files byte-identical"),
    )
}

fn main() {
    let started = Instant::now();
    let mut failed = 0;
    let mut report = |id: u32, name: &str, limit: Option<Duration>, run: &mut dyn FnMut() -> Verdict| {
        let t0 = Instant::now();
        let v = run();
        let elapsed = t0.elapsed();
        let in_time = limit.is_none_or(|l| elapsed < l);
        let pass = v.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = limit.map_or(String::new(), |l| format!(" < {:.0} s", l.as_secs_f64()));
        println!(
            "{} criterion {id:>2} {name}: {} [{:.2} s{budget}]",
            if pass { "PASS" } else { "FAIL" },
            v.detail.trim_end(),
            elapsed.as_secs_f64()
        );
    };
    let secs = |s| Some(Duration::from_secs(s));

    report(1, "diagonal example bounds", secs(1), &mut example_reproduction);
    report(2, "scalar entropy law", secs(10), &mut scalar_law);
    report(3, "LTI eigenvalue formula", secs(30), &mut lti_rates);
    report(4, "volume identity", secs(5), &mut volume_identity);
    report(5, "solvability classifier", secs(5), &mut classifier);
    let mut runs = Vec::new();
    report(6, "triangular upper bound", secs(60), &mut || {
        runs = triangular_runs();
        triangular_sandwich(&runs)
    });
    report(7, "trace lower bound", None, &mut || trace_lower(&runs));
    report(8, "Jordan block growth", None, &mut jordan_growth);
    report(9, "spanning/separated sandwich", None, &mut packing_sandwich);
    report(10, "estimate determinism", None, &mut determinism);

    println!(
        "{} of 10 criteria failed ({:.2} s)",
        failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
