use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use swent::bounds::{self, Analysis, AnalyzeOptions, BoundReport, RULE_LTI};
use swent::estimator::{self, EstimationConfig, EstimationResult};
use swent::lie::StructureOptions;
use swent::{Classification, ModeSet, SwitchedSystem, SwitchingSignal};

use crate::config::{FlowTimes, RunConfig};
use crate::exit::{ExitKind, Failure, Outcome, WithExit};

/// Slack allowed between an estimated rate and the analytic bounds.
pub const RATE_TOLERANCE: f64 = 0.15;
/// Horizon for activation fractions when the config gives none.
const DEFAULT_HORIZON: f64 = 100.0;

#[derive(Clone, Debug)]
pub struct Settings {
    pub out: PathBuf,
    pub structure: StructureOptions,
    pub tail_fraction: f64,
}

impl Settings {
    fn analyze_options(&self, horizon: Option<f64>) -> AnalyzeOptions {
        AnalyzeOptions {
            horizon: horizon.unwrap_or(DEFAULT_HORIZON),
            tail_fraction: self.tail_fraction,
            structure: self.structure,
        }
    }

    fn prepare_out(&self) -> Outcome<()> {
        fs::create_dir_all(&self.out)
            .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", self.out.display()))
            .exit(ExitKind::Io)
    }

    fn write(&self, name: &str, contents: &str) -> Outcome<()> {
        let path = self.out.join(name);
        fs::write(&path, contents)
            .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))
            .exit(ExitKind::Io)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Outcome<()> {
        let mut text = serde_json::to_string_pretty(value).exit(ExitKind::Io)?;
        text.push('\n');
        self.write(name, &text)
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: String,
    partial: Option<&'a BoundReport>,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |v| format!("{v}"))
}

/// Human-readable summary of an analysis.
pub fn summary(analysis: &Analysis) -> String {
    let b = &analysis.bounds;
    let s = &analysis.structure;
    let mut out = String::new();
    let depth = s.derived_depth.map_or_else(|| "none".to_string(), |d| d.to_string());
    let _ = writeln!(
        out,
        "classification: {} (closure dim {}, derived depth {depth})",
        s.classification, s.closure_dim
    );
    let fr: Vec<String> = analysis.fractions.iter().map(|f| format!("{f}")).collect();
    let _ = writeln!(out, "activation fractions: {}", fr.join(", "));
    if !b.kappa_bars.is_empty() {
        let _ = writeln!(out, "  i  kappa_bar");
        for (i, k) in b.kappa_bars.iter().enumerate() {
            let _ = writeln!(out, "  {:<2} {k}", i + 1);
        }
    }
    let _ = writeln!(out, "trace bound: {} (trace-lower)", fmt_opt(b.trace_bound));
    if b.rules.iter().any(|r| r == RULE_LTI) {
        let _ = writeln!(out, "LTI: h = sum max(0, Re lambda) = {}", fmt_opt(b.upper));
    } else if b.exact {
        let _ = writeln!(out, "exact h = {}", fmt_opt(b.upper));
    } else if s.classification == Classification::Unstructured && b.upper.is_none() {
        let _ = writeln!(
            out,
            "unstructured; lower >= {} (trace); no upper bound",
            fmt_opt(b.lower)
        );
    } else {
        let _ = writeln!(out, "bounds: {} <= h <= {}", fmt_opt(b.lower), fmt_opt(b.upper));
    }
    let _ = writeln!(out, "rules: {}", b.rules.join(", "));
    for w in &b.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

fn run_analysis(cfg: &RunConfig, settings: &Settings) -> Outcome<Analysis> {
    match bounds::analyze(&cfg.system, settings.analyze_options(cfg.horizon)) {
        Ok(a) => Ok(a),
        Err(e) => {
            let failure = Failure::from(e);
            if failure.kind == ExitKind::Numerical {
                settings.write_json(
                    "bounds.json",
                    &ErrorReport {
                        error: failure.to_string(),
                        partial: None,
                    },
                )?;
            }
            Err(failure)
        }
    }
}

pub fn analyze(cfg: &RunConfig, settings: &Settings) -> Outcome<()> {
    settings.prepare_out()?;
    let analysis = run_analysis(cfg, settings)?;
    settings.write_json("bounds.json", &analysis.bounds)?;
    print!("{}", summary(&analysis));
    Ok(())
}

#[derive(Serialize)]
struct BoundWindow {
    lower: f64,
    upper: Option<f64>,
    tolerance: f64,
    within: Option<bool>,
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    rate: f64,
    rates: &'a [estimator::EpsRate],
    method: estimator::Method,
    bounds: BoundWindow,
    diagnostics: &'a estimator::FitDiagnostics,
}

pub fn counts_csv(result: &EstimationResult) -> String {
    let mut out = String::from("T,eps,count,log_count_over_T\n");
    for c in &result.counts {
        let _ = writeln!(out, "{},{},{},{:.16e}", c.t, c.eps, c.count, c.log_count_over_t);
    }
    out
}

/// Whether `rate` lies within the tolerance window around the bounds; `None`
/// when there is no upper bound to compare against.
pub fn rate_within(rate: f64, bounds: &BoundReport) -> Option<bool> {
    let upper = bounds.upper?;
    Some(rate >= bounds.effective_lower() - RATE_TOLERANCE && rate <= upper + RATE_TOLERANCE)
}

fn estimate_with(system: &SwitchedSystem, analysis: &Analysis, est: &EstimationConfig) -> Outcome<EstimationResult> {
    Ok(estimator::entropy_rate(system, Some(&analysis.structure), est)?)
}

pub fn estimate(cfg: &RunConfig, settings: &Settings) -> Outcome<()> {
    let est = cfg
        .estimation
        .clone()
        .ok_or_else(|| Failure::config("estimation: block is required for the estimate command"))?;
    if cfg.system.n() > estimator::MAX_DIM {
        return Err(Failure::config(format!(
            "modes: dimension {} exceeds the estimator cap of {}",
            cfg.system.n(),
            estimator::MAX_DIM
        )));
    }
    settings.prepare_out()?;
    let analysis = run_analysis(cfg, settings)?;
    let result = estimate_with(&cfg.system, &analysis, &est)?;
    let within = rate_within(result.rate, &analysis.bounds);
    settings.write_json("bounds.json", &analysis.bounds)?;
    settings.write("counts.csv", &counts_csv(&result))?;
    settings.write_json(
        "estimate.json",
        &EstimateReport {
            rate: result.rate,
            rates: &result.rates,
            method: result.method,
            bounds: BoundWindow {
                lower: analysis.bounds.effective_lower(),
                upper: analysis.bounds.upper,
                tolerance: RATE_TOLERANCE,
                within,
            },
            diagnostics: &result.diagnostics,
        },
    )?;

    println!("{:>10} {:>14} {:>12}", "eps", "slope", "rms resid");
    for r in &result.rates {
        println!("{:>10} {:>14.6} {:>12.3e}", r.eps, r.slope, r.residual);
    }
    println!(
        "rate {:.6}  vs  bounds [{}, {}]  ({})",
        result.rate,
        analysis.bounds.effective_lower(),
        fmt_opt(analysis.bounds.upper),
        match within {
            Some(true) => "within tolerance",
            Some(false) => "OUTSIDE tolerance",
            None => "no upper bound",
        }
    );
    if within == Some(false) {
        return Err(Failure::new(
            ExitKind::BoundViolation,
            anyhow::anyhow!(
                "estimated rate {} lies outside [{} - {RATE_TOLERANCE}, {} + {RATE_TOLERANCE}]",
                result.rate,
                analysis.bounds.effective_lower(),
                fmt_opt(analysis.bounds.upper)
            ),
        ));
    }
    Ok(())
}

pub fn flow(cfg: &RunConfig, settings: &Settings) -> Outcome<()> {
    let spec = cfg
        .flow
        .as_ref()
        .ok_or_else(|| Failure::config("flow: block is required for the flow command"))?;
    settings.prepare_out()?;
    let times = match &spec.times {
        FlowTimes::Explicit(t) => t.clone(),
        FlowTimes::Sampled { horizon, density } => cfg.system.sample_times(*horizon, *density)?,
    };
    let traj = cfg.system.solve(&DVector::from_column_slice(&spec.x0), &times)?;
    let n = cfg.system.n();
    let mut csv = String::from("t");
    for i in 1..=n {
        let _ = write!(csv, ",x{i}");
    }
    csv.push('\n');
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let _ = write!(csv, "{t:.16e}");
        for v in x.iter() {
            let _ = write!(csv, ",{v:.16e}");
        }
        csv.push('\n');
    }
    settings.write("trajectory.csv", &csv)?;
    let last = traj.states.last().expect("at least one time");
    println!(
        "wrote {} samples to {}; |x(T)|_inf = {:e}",
        traj.times.len(),
        settings.out.join("trajectory.csv").display(),
        last.amax()
    );
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub actual: f64,
    pub pass: bool,
}

#[derive(Serialize)]
struct ExampleRow {
    name: String,
    modes: Vec<String>,
    individual_entropies: Vec<f64>,
    lower: Option<f64>,
    upper: Option<f64>,
    exact: bool,
    rate: f64,
}

#[derive(Serialize)]
struct Reproduction {
    systems: Vec<ExampleRow>,
    checks: Vec<Check>,
    passed: bool,
}

fn diag(a: f64, b: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
}

fn label(m: &DMatrix<f64>) -> String {
    format!("diag({},{})", m[(0, 0)], m[(1, 1)])
}

/// The two diagonal example families: equal individual entropies, different
/// switched entropies under the same alternating unit-period signal.
pub fn example_systems(perturb: f64) -> Vec<(String, SwitchedSystem)> {
    let signal = SwitchingSignal::periodic(2, vec![(1, 1.0), (2, 1.0)]).expect("valid signal");
    let families = [
        ("system 1", vec![diag(2.0 + perturb, 0.0), diag(2.0, -1.0)]),
        ("system 2", vec![diag(2.0, 0.0), diag(-1.0, 2.0)]),
    ];
    families
        .into_iter()
        .map(|(name, modes)| {
            let sys = SwitchedSystem::new(ModeSet::new(modes).expect("valid modes"), signal.clone())
                .expect("consistent system");
            (name.to_string(), sys)
        })
        .collect()
}

fn near(name: &str, actual: Option<f64>, want: f64) -> Check {
    let value = actual.unwrap_or(f64::NAN);
    Check {
        name: name.to_string(),
        expected: format!("{want} (tol 1e-12)"),
        actual: value,
        pass: (value - want).abs() <= 1e-12,
    }
}

pub fn reproduce_example(settings: &Settings, perturb: f64) -> Outcome<()> {
    settings.prepare_out()?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let expected = [(2.0, 2.0), (1.0, 1.5)];
    for ((name, sys), (lo, hi)) in example_systems(perturb).into_iter().zip(expected) {
        let analysis = bounds::analyze(&sys, settings.analyze_options(None))?;
        let rate = match estimate_with(&sys, &analysis, &EstimationConfig::default()) {
            Ok(r) => r.rate,
            Err(e) => {
                eprintln!("{name}: estimation failed: {e}");
                f64::NAN
            }
        };
        let individual = sys
            .modes()
            .matrices()
            .iter()
            .map(bounds::lti_entropy)
            .collect::<swent::Result<Vec<f64>>>()?;
        for (m, h) in sys.modes().matrices().iter().zip(&individual) {
            checks.push(near(&format!("{name}: h({})", label(m)), Some(*h), 2.0));
        }
        checks.push(near(&format!("{name}: lower"), analysis.bounds.lower, lo));
        checks.push(near(&format!("{name}: upper"), analysis.bounds.upper, hi));
        checks.push(Check {
            name: format!("{name}: estimated rate"),
            expected: format!("[{lo} - {RATE_TOLERANCE}, {hi} + {RATE_TOLERANCE}]"),
            actual: rate,
            pass: rate >= lo - RATE_TOLERANCE && rate <= hi + RATE_TOLERANCE,
        });
        rows.push(ExampleRow {
            name,
            modes: sys.modes().matrices().iter().map(label).collect(),
            individual_entropies: individual,
            lower: analysis.bounds.lower,
            upper: analysis.bounds.upper,
            exact: analysis.bounds.exact,
            rate,
        });
    }
    let passed = checks.iter().all(|c| c.pass);
    let table = reproduction_table(&rows, &checks);
    settings.write_json(
        "reproduction.json",
        &Reproduction {
            systems: rows,
            checks: checks.clone(),
            passed,
        },
    )?;
    print!("{table}");
    if !passed {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(Failure::new(
            ExitKind::Reproduction,
            anyhow::anyhow!("reproduction failed: {}", failed.join("; ")),
        ));
    }
    Ok(())
}

fn reproduction_table(rows: &[ExampleRow], checks: &[Check]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<9} {:<24} {:>7} {:>7} {:>7} {:>7} {:>9}",
        "system", "modes", "h(A1)", "h(A2)", "lower", "upper", "estimate"
    );
    for row in rows {
        let h = |i: usize| row.individual_entropies.get(i).copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{:<9} {:<24} {:>7} {:>7} {:>7} {:>7} {:>9.4}",
            row.name,
            row.modes.join(", "),
            h(0),
            h(1),
            fmt_opt(row.lower),
            fmt_opt(row.upper),
            row.rate
        );
    }
    let same_individual = rows
        .iter()
        .flat_map(|r| r.individual_entropies.iter())
        .all(|h| Some(h) == rows[0].individual_entropies.first());
    let different_bounds = rows
        .windows(2)
        .any(|w| w[0].lower != w[1].lower || w[0].upper != w[1].upper);
    if same_individual && different_bounds {
        let _ = writeln!(out, "every mode has the same entropy, yet the switched bounds differ");
    }
    for c in checks {
        let _ = writeln!(
            out,
            "[{}] {}: {} (expected {})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.actual,
            c.expected
        );
    }
    out
}
