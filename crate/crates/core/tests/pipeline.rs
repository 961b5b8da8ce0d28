use approx::assert_abs_diff_eq;
use nalgebra::{dvector, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swent::bounds::{analyze, AnalyzeOptions};
use swent::estimator::{entropy_rate, EstimationConfig, Execution};
use swent::{Classification, ModeSet, SwitchedSystem, SwitchingSignal};

fn alternating() -> SwitchingSignal {
    SwitchingSignal::periodic(2, vec![(1, 1.0), (2, 1.0)]).unwrap()
}

fn diag_system(a: [f64; 2], b: [f64; 2]) -> SwitchedSystem {
    let modes = ModeSet::new(vec![
        DMatrix::from_diagonal(&dvector![a[0], a[1]]),
        DMatrix::from_diagonal(&dvector![b[0], b[1]]),
    ])
    .unwrap();
    SwitchedSystem::new(modes, alternating()).unwrap()
}

#[test]
fn diagonal_estimate_lies_between_bounds() {
    let system = diag_system([2.0, -1.0], [0.0, 2.0]);
    let analysis = analyze(&system, AnalyzeOptions::default()).unwrap();
    assert_eq!(
        analysis.structure.classification,
        Classification::CommutingDiagonalizable
    );
    let upper = analysis.bounds.upper.unwrap();
    let result = entropy_rate(&system, Some(&analysis.structure), &EstimationConfig::default()).unwrap();
    assert!(
        result.rate >= analysis.bounds.effective_lower() - 0.15,
        "{}",
        result.rate
    );
    assert!(result.rate <= upper + 0.15, "{} > {}", result.rate, upper);
}

#[test]
fn exact_case_is_recovered() {
    let system = diag_system([2.0, 0.0], [2.0, 0.0]);
    let analysis = analyze(&system, AnalyzeOptions::default()).unwrap();
    assert!(analysis.bounds.exact);
    assert_abs_diff_eq!(analysis.bounds.lower.unwrap(), 2.0, epsilon = 1e-12);
    let result = entropy_rate(&system, None, &EstimationConfig::default()).unwrap();
    assert_abs_diff_eq!(result.rate, 2.0, epsilon = 0.15);
}

#[test]
fn execution_modes_agree_on_random_systems() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..4 {
        let mut mat = || DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-0.8..0.8));
        let modes = ModeSet::new(vec![mat(), mat()]).unwrap();
        let system = SwitchedSystem::new(modes, alternating()).unwrap();
        let config = EstimationConfig {
            horizons: vec![2.0, 4.0, 6.0],
            ..Default::default()
        };
        let par = entropy_rate(
            &system,
            None,
            &EstimationConfig {
                execution: Execution::Parallel,
                ..config.clone()
            },
        )
        .unwrap();
        let seq = entropy_rate(
            &system,
            None,
            &EstimationConfig {
                execution: Execution::Sequential,
                ..config
            },
        )
        .unwrap();
        let counts = |r: &swent::estimator::EstimationResult| r.counts.iter().map(|c| c.count).collect::<Vec<_>>();
        assert_eq!(counts(&par), counts(&seq));
        assert_eq!(par.rate, seq.rate);
    }
}

#[test]
fn signal_round_trips_through_json() {
    let signal = SwitchingSignal::truncated(3, vec![(1, 0.5), (3, 1.25), (2, 2.0)]).unwrap();
    let json = serde_json::to_string(&signal).unwrap();
    let back: SwitchingSignal = serde_json::from_str(&json).unwrap();
    assert_eq!(signal, back);
    assert!(serde_json::from_str::<SwitchingSignal>(r#"{"k":2,"repeat":"periodic","segments":[]}"#).is_err());
}
