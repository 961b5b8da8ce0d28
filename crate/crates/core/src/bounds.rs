//! Closed-form entropy formulas and their assembly into a [`BoundReport`].

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::SwitchedSystem;
use crate::lie::{self, Classification, StructureOptions, StructureReport};
use crate::linalg;
use crate::signals::{Repeat, SubexpVerdict};
use nalgebra::DMatrix;

/// Slack for comparing bounds that are equal in exact arithmetic.
pub const EXACT_TOL: f64 = 1e-12;

pub const RULE_TRACE: &str = "trace-lower";
pub const RULE_DIAG_LOWER: &str = "diag-lower";
pub const RULE_DIAG_UPPER: &str = "diag-upper";
pub const RULE_TRI_UPPER: &str = "tri-upper";
pub const RULE_LTI: &str = "lti-exact";
pub const RULE_SCALAR: &str = "scalar-exact";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    /// Globally exponentially stable.
    Ges,
    NotConcluded,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub exact: bool,
    pub rules: Vec<String>,
    pub kappa_bars: Vec<f64>,
    /// 1-based coordinate order used for the reported triangular bound.
    pub ordering: Vec<usize>,
    pub warnings: Vec<String>,
    pub classification: Option<Classification>,
    /// Raw `sum_i tr(A_i) tau_bar_i`; may be negative.
    pub trace_bound: Option<f64>,
    /// Triangular bound under each coordinate order that was evaluated.
    pub ordering_bounds: Vec<OrderingBound>,
    /// Set when activation fractions are finite-horizon estimates.
    pub estimated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderingBound {
    pub ordering: Vec<usize>,
    pub value: f64,
}

impl BoundReport {
    fn empty() -> Self {
        BoundReport {
            lower: None,
            upper: None,
            exact: false,
            rules: Vec::new(),
            kappa_bars: Vec::new(),
            ordering: Vec::new(),
            warnings: Vec::new(),
            classification: None,
            trace_bound: None,
            ordering_bounds: Vec::new(),
            estimated: false,
        }
    }

    /// The best lower bound on entropy: the structural bound combined with
    /// the clamped trace bound.
    pub fn effective_lower(&self) -> f64 {
        let trace = self.trace_bound.map_or(0.0, |t| t.max(0.0));
        self.lower.unwrap_or(0.0).max(trace)
    }

    fn finish(&mut self) {
        self.exact = matches!((self.lower, self.upper), (Some(l), Some(u)) if (u - l).abs() <= EXACT_TOL);
    }
}

fn check_lengths(rates: &[f64], fractions: &[f64]) -> Result<()> {
    if rates.len() != fractions.len() {
        return Err(Error::LengthMismatch {
            expected: rates.len(),
            actual: fractions.len(),
        });
    }
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::InvalidArgument("fractions must lie in [0, 1]".into()));
    }
    Ok(())
}

fn weighted(rates: &[f64], fractions: &[f64]) -> f64 {
    rates.iter().zip(fractions).map(|(a, f)| a * f).sum()
}

/// Scalar switched system `x' = a_sigma x`: exponentially stable whenever the
/// average exponent is negative. The converse is not claimed.
pub fn scalar_stability(rates: &[f64], fractions: &[f64]) -> Result<Stability> {
    check_lengths(rates, fractions)?;
    Ok(if weighted(rates, fractions) < 0.0 {
        Stability::Ges
    } else {
        Stability::NotConcluded
    })
}

/// Entropy of a scalar switched system: the positive part of the average exponent.
pub fn scalar_switched_entropy(rates: &[f64], fractions: &[f64]) -> Result<f64> {
    check_lengths(rates, fractions)?;
    Ok(weighted(rates, fractions).max(0.0))
}

/// Entropy of `x' = A x`: sum of the positive real parts of the eigenvalues.
pub fn lti_entropy(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension("lti_entropy needs a square matrix".into()));
    }
    Ok(linalg::eigenvalues(a)?.iter().map(|l| l.re.max(0.0)).sum())
}

/// `sum_i tr(A_i) * fractions_i`, a lower bound on entropy from volume growth.
pub fn trace_lower_bound(system: &SwitchedSystem, fractions: &[f64]) -> Result<f64> {
    let modes = system.modes().matrices();
    if fractions.len() != modes.len() {
        return Err(Error::LengthMismatch {
            expected: modes.len(),
            actual: fractions.len(),
        });
    }
    Ok(modes.iter().zip(fractions).map(|(a, f)| a.trace() * f).sum())
}

/// Average exponent of each coordinate of the transformed modes:
/// `kappa_bar_i = sum_j Re(T_j)_ii * fractions_j`.
pub fn coordinate_kappa_bars(structure: &StructureReport, fractions: &[f64]) -> Result<Vec<f64>> {
    let k = structure.transformed_modes.len();
    if fractions.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            actual: fractions.len(),
        });
    }
    let n = structure.transformed_modes.first().map_or(0, |m| m.nrows());
    let mut out = vec![0.0; n];
    for (j, f) in fractions.iter().enumerate() {
        for (i, a) in structure.diagonal_rates(j).into_iter().enumerate() {
            out[i] += a * f;
        }
    }
    Ok(out)
}

/// Two-sided bound for commuting diagonalizable modes:
/// `max_i kappa_bar_i^+ <= h <= sum_i kappa_bar_i^+`.
pub fn diagonal_bounds(system: &SwitchedSystem, structure: &StructureReport, fractions: &[f64]) -> Result<BoundReport> {
    if structure.classification != Classification::CommutingDiagonalizable {
        return Err(Error::WrongStructure(format!(
            "diagonal bounds need commuting_diagonalizable modes, got {}",
            structure.classification
        )));
    }
    let kb = coordinate_kappa_bars(structure, fractions)?;
    let mut rep = BoundReport::empty();
    rep.lower = Some(kb.iter().map(|k| k.max(0.0)).fold(0.0, f64::max));
    rep.upper = Some(kb.iter().map(|k| k.max(0.0)).sum());
    rep.rules = vec![RULE_DIAG_LOWER.into(), RULE_DIAG_UPPER.into()];
    rep.ordering = (1..=kb.len()).collect();
    rep.kappa_bars = kb;
    rep.classification = Some(structure.classification);
    rep.trace_bound = Some(trace_lower_bound(system, fractions)?);
    rep.finish();
    Ok(rep)
}

/// `sum_{i=1}^n sum_{m<=i} kappa_bar_m^+`, i.e. `n k_1^+ + (n-1) k_2^+ + ... + k_n^+`.
pub fn triangular_sum(kappa_bars: &[f64]) -> f64 {
    let n = kappa_bars.len();
    kappa_bars
        .iter()
        .enumerate()
        .map(|(m, k)| (n - m) as f64 * k.max(0.0))
        .sum()
}

/// Upper bound for simultaneously triangularizable modes. Requires the
/// switching rate to be subexponential; any other verdict is reported as a
/// warning. For families that are in fact diagonal in the computed basis the
/// reversed coordinate order is also valid and the smaller value is kept.
pub fn triangular_upper_bound(
    system: &SwitchedSystem,
    structure: &StructureReport,
    fractions: &[f64],
    switch_diag: SubexpVerdict,
) -> Result<BoundReport> {
    if structure.classification == Classification::Unstructured {
        return Err(Error::WrongStructure(
            "triangular bound needs solvable or commuting_diagonalizable modes".into(),
        ));
    }
    let kb = coordinate_kappa_bars(structure, fractions)?;
    let n = kb.len();
    let natural: Vec<usize> = (1..=n).collect();
    let mut rep = BoundReport::empty();
    rep.ordering_bounds.push(OrderingBound {
        ordering: natural.clone(),
        value: triangular_sum(&kb),
    });
    let diagonal = structure.classification == Classification::CommutingDiagonalizable
        || structure.is_diagonal(system.modes().scale());
    if diagonal && n > 1 {
        let reversed: Vec<f64> = kb.iter().rev().copied().collect();
        rep.ordering_bounds.push(OrderingBound {
            ordering: natural.iter().rev().copied().collect(),
            value: triangular_sum(&reversed),
        });
    }
    let best = rep
        .ordering_bounds
        .iter()
        .min_by(|a, b| a.value.partial_cmp(&b.value).expect("finite"))
        .expect("at least one ordering")
        .clone();
    rep.upper = Some(best.value);
    rep.ordering = best.ordering;
    rep.rules = vec![RULE_TRI_UPPER.into()];
    rep.kappa_bars = kb;
    rep.classification = Some(structure.classification);
    rep.trace_bound = Some(trace_lower_bound(system, fractions)?);
    if switch_diag != SubexpVerdict::Pass {
        rep.warnings.push(format!(
            "subexponential switching not confirmed ({switch_diag:?}); triangular bound hypothesis unverified"
        ));
    }
    rep.finish();
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyzeOptions {
    /// Horizon for estimated activation fractions (ignored for periodic signals).
    pub horizon: f64,
    pub tail_fraction: f64,
    pub structure: StructureOptions,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            horizon: 100.0,
            tail_fraction: 0.5,
            structure: StructureOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Analysis {
    pub bounds: BoundReport,
    pub structure: StructureReport,
    pub fractions: Vec<f64>,
}

/// Horizons used to probe the switching rate before applying the triangular bound.
fn switch_probe_horizons(system: &SwitchedSystem, horizon: f64) -> Vec<f64> {
    let sig = system.signal();
    match sig.repeat() {
        Repeat::Periodic => vec![10.0 * sig.period(), 100.0 * sig.period(), 1000.0 * sig.period()],
        Repeat::Truncated => {
            let h = horizon.min(sig.period());
            vec![h / 4.0, h / 2.0, h]
        }
    }
}

/// Computes fractions, classifies the modes and returns the tightest
/// applicable bounds, recording every rule used.
pub fn analyze(system: &SwitchedSystem, opts: AnalyzeOptions) -> Result<Analysis> {
    let sig = system.signal();
    let horizon = match sig.end() {
        Some(end) => opts.horizon.min(end),
        None => opts.horizon,
    };
    let fr = sig.activation_fractions(horizon, opts.tail_fraction)?;
    let estimated = fr.iter().any(|f| !f.exact);
    let fractions: Vec<f64> = fr.iter().map(|f| f.value).collect();
    let trace = trace_lower_bound(system, &fractions)?;
    let structure = lie::classify(system.modes(), opts.structure);
    let n = system.n();
    let k = system.modes().k();

    let mut rep = if k == 1 {
        let h = lti_entropy(system.modes().get(0))?;
        let mut r = BoundReport::empty();
        r.lower = Some(h);
        r.upper = Some(h);
        r.rules.push(RULE_LTI.into());
        r
    } else if n == 1 {
        let rates: Vec<f64> = system.modes().matrices().iter().map(|m| m[(0, 0)]).collect();
        let h = scalar_switched_entropy(&rates, &fractions)?;
        let mut r = BoundReport::empty();
        r.lower = Some(h);
        r.upper = Some(h);
        r.rules.push(RULE_SCALAR.into());
        r
    } else {
        match structure.classification {
            Classification::CommutingDiagonalizable => diagonal_bounds(system, &structure, &fractions)?,
            Classification::Solvable => {
                let probe = sig.subexponential_check(&switch_probe_horizons(system, horizon))?;
                let mut r = triangular_upper_bound(system, &structure, &fractions, probe.verdict)?;
                r.lower = Some(trace.max(0.0));
                r.rules.insert(0, RULE_TRACE.into());
                r
            }
            Classification::Unstructured => {
                let mut r = BoundReport::empty();
                r.lower = Some(trace.max(0.0));
                r.rules.push(RULE_TRACE.into());
                r.warnings
                    .push("no structural upper bound for unstructured modes".into());
                r
            }
        }
    };

    if !rep.rules.iter().any(|r| r == RULE_TRACE) {
        rep.rules.push(RULE_TRACE.into());
    }
    if rep.kappa_bars.is_empty() {
        if let Ok(kb) = coordinate_kappa_bars(&structure, &fractions) {
            rep.kappa_bars = kb;
            rep.ordering = (1..=n).collect();
        }
    }
    rep.classification = Some(structure.classification);
    rep.trace_bound = Some(trace);
    if estimated {
        rep.estimated = true;
        rep.warnings
            .push(format!("activation fractions estimated over horizon {horizon}"));
    }
    for d in &structure.diagnostics {
        rep.warnings.push(format!("structure: {d}"));
    }
    rep.finish();
    Ok(Analysis {
        bounds: rep,
        structure,
        fractions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::ModeSet;
    use crate::signals::SwitchingSignal;
    use proptest::prelude::*;

    fn diag2(a: f64, b: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
    }

    fn fifty_fifty(modes: Vec<DMatrix<f64>>) -> SwitchedSystem {
        SwitchedSystem::new(
            ModeSet::new(modes).unwrap(),
            SwitchingSignal::periodic(2, vec![(1, 1.0), (2, 1.0)]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn scalar_stability_examples() {
        assert_eq!(
            scalar_stability(&[2.0, -1.0], &[0.5, 0.5]).unwrap(),
            Stability::NotConcluded
        );
        assert_eq!(scalar_stability(&[-1.0, -2.0], &[0.3, 0.7]).unwrap(), Stability::Ges);
        assert_eq!(scalar_stability(&[2.0, -3.0], &[0.5, 0.5]).unwrap(), Stability::Ges);
        assert!(scalar_stability(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn scalar_entropy_examples() {
        assert_eq!(scalar_switched_entropy(&[2.0, -1.0], &[0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(scalar_switched_entropy(&[-1.0, -1.0], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(scalar_switched_entropy(&[1.7], &[1.0]).unwrap(), 1.7);
        assert_eq!(scalar_switched_entropy(&[-1.7], &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn lti_entropy_examples() {
        assert!((lti_entropy(&diag2(1.0, -1.0)).unwrap() - 1.0).abs() < 1e-14);
        let jordan = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!((lti_entropy(&jordan).unwrap() - 2.0).abs() < 1e-12);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(lti_entropy(&rot).unwrap().abs() < 1e-14);
    }

    #[test]
    fn trace_bound_examples() {
        let sys = fifty_fifty(vec![diag2(2.0, 0.0), diag2(2.0, -1.0)]);
        assert_eq!(trace_lower_bound(&sys, &[0.5, 0.5]).unwrap(), 1.5);
        let e12 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e21 = e12.transpose();
        let sl2 = fifty_fifty(vec![e12, e21]);
        assert_eq!(trace_lower_bound(&sl2, &[0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_bound_examples() {
        let sys1 = fifty_fifty(vec![diag2(2.0, 0.0), diag2(2.0, -1.0)]);
        let s1 = lie::classify(sys1.modes(), StructureOptions::default());
        let r = diagonal_bounds(&sys1, &s1, &[0.5, 0.5]).unwrap();
        assert_eq!((r.lower, r.upper, r.exact), (Some(2.0), Some(2.0), true));
        assert_eq!(r.kappa_bars, vec![2.0, -0.5]);

        let sys2 = fifty_fifty(vec![diag2(2.0, 0.0), diag2(-1.0, 2.0)]);
        let s2 = lie::classify(sys2.modes(), StructureOptions::default());
        let r = diagonal_bounds(&sys2, &s2, &[0.5, 0.5]).unwrap();
        assert_eq!((r.lower, r.upper, r.exact), (Some(1.0), Some(1.5), false));

        let single = SwitchedSystem::new(
            ModeSet::new(vec![diag2(0.7, 1.2)]).unwrap(),
            SwitchingSignal::constant(),
        )
        .unwrap();
        let s = lie::classify(single.modes(), StructureOptions::default());
        let r = diagonal_bounds(&single, &s, &[1.0]).unwrap();
        assert!((r.lower.unwrap() - 1.2).abs() < 1e-14);
        assert!((r.upper.unwrap() - lti_entropy(&diag2(0.7, 1.2)).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn diagonal_bounds_reject_other_structures() {
        let e12 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let sl2 = fifty_fifty(vec![e12.clone(), e12.transpose()]);
        let s = lie::classify(sl2.modes(), StructureOptions::default());
        assert!(matches!(
            diagonal_bounds(&sl2, &s, &[0.5, 0.5]),
            Err(Error::WrongStructure(_))
        ));
        assert!(triangular_upper_bound(&sl2, &s, &[0.5, 0.5], SubexpVerdict::Pass).is_err());
    }

    #[test]
    fn triangular_bound_examples() {
        assert_eq!(triangular_sum(&[0.5]), 0.5);
        assert_eq!(triangular_sum(&[2.0, -0.5]), 4.0);

        let sys1 = fifty_fifty(vec![diag2(2.0, 0.0), diag2(2.0, -1.0)]);
        let s1 = lie::classify(sys1.modes(), StructureOptions::default());
        let r = triangular_upper_bound(&sys1, &s1, &[0.5, 0.5], SubexpVerdict::Pass).unwrap();
        assert_eq!(r.ordering_bounds[0].value, 4.0);
        assert_eq!(r.ordering_bounds[1].value, 2.0);
        assert_eq!(r.upper, Some(2.0));
        assert_eq!(r.ordering, vec![2, 1]);
        assert!(r.warnings.is_empty());

        let tri = fifty_fifty(vec![
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, -2.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]),
        ]);
        let s = lie::classify(tri.modes(), StructureOptions::default());
        assert_eq!(s.classification, Classification::Solvable);
        let r = triangular_upper_bound(&tri, &s, &[0.5, 0.5], SubexpVerdict::Inconclusive).unwrap();
        assert!((r.upper.unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(r.ordering_bounds.len(), 1);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn analyze_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 3.0, -1.0, 0.2]);
        let lti = SwitchedSystem::new(ModeSet::new(vec![a.clone()]).unwrap(), SwitchingSignal::constant()).unwrap();
        let r = analyze(&lti, AnalyzeOptions::default()).unwrap().bounds;
        assert!(r.exact);
        assert!((r.upper.unwrap() - lti_entropy(&a).unwrap()).abs() < 1e-12);

        let sys1 = fifty_fifty(vec![diag2(2.0, 0.0), diag2(2.0, -1.0)]);
        let r = analyze(&sys1, AnalyzeOptions::default()).unwrap().bounds;
        assert_eq!((r.lower, r.upper, r.exact), (Some(2.0), Some(2.0), true));
        assert_eq!(r.trace_bound, Some(1.5));

        let e12 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let sl2 = fifty_fifty(vec![e12.clone(), e12.transpose()]);
        let r = analyze(&sl2, AnalyzeOptions::default()).unwrap().bounds;
        assert_eq!(r.classification, Some(Classification::Unstructured));
        assert_eq!(r.lower, Some(0.0));
        assert_eq!(r.upper, None);
    }

    #[test]
    fn analyze_scalar_switched() {
        let sys = SwitchedSystem::new(
            ModeSet::new(vec![
                DMatrix::from_element(1, 1, 2.0),
                DMatrix::from_element(1, 1, -1.0),
            ])
            .unwrap(),
            SwitchingSignal::periodic(2, vec![(1, 1.0), (2, 1.0)]).unwrap(),
        )
        .unwrap();
        let r = analyze(&sys, AnalyzeOptions::default()).unwrap().bounds;
        assert!(r.exact);
        assert_eq!(r.upper, Some(0.5));
        assert!(r.rules.contains(&RULE_SCALAR.to_string()));
    }

    #[test]
    fn analyze_flags_estimated_fractions() {
        let sys = SwitchedSystem::new(
            ModeSet::new(vec![diag2(1.0, 0.0), diag2(0.0, 1.0)]).unwrap(),
            SwitchingSignal::truncated(2, vec![(1, 1.0), (2, 2.0), (1, 1.0)]).unwrap(),
        )
        .unwrap();
        let r = analyze(&sys, AnalyzeOptions::default()).unwrap().bounds;
        assert!(r.estimated);
        assert!(!r.warnings.is_empty());
    }

    fn arb_diag_system() -> impl Strategy<Value = SwitchedSystem> {
        (prop::collection::vec(-2.0f64..2.0, 6), 0.1f64..2.0, 0.1f64..2.0).prop_map(|(d, t1, t2)| {
            let modes = vec![
                DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&d[..3])),
                DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&d[3..])),
            ];
            SwitchedSystem::new(
                ModeSet::new(modes).unwrap(),
                SwitchingSignal::periodic(2, vec![(1, t1), (2, t2)]).unwrap(),
            )
            .unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn diagonal_bound_ordering(sys in arb_diag_system()) {
            let fr: Vec<f64> = sys.signal().activation_fractions(1.0, 0.5).unwrap().iter().map(|f| f.value).collect();
            let s = lie::classify(sys.modes(), StructureOptions::default());
            prop_assert_eq!(s.classification, Classification::CommutingDiagonalizable);
            let d = diagonal_bounds(&sys, &s, &fr).unwrap();
            prop_assert!(d.lower.unwrap() <= d.upper.unwrap() + EXACT_TOL);
            let t = triangular_upper_bound(&sys, &s, &fr, SubexpVerdict::Pass).unwrap();
            for ob in &t.ordering_bounds {
                prop_assert!(ob.value >= d.upper.unwrap() - EXACT_TOL);
            }
        }

        #[test]
        fn scale_covariance(sys in arb_diag_system(), c in 0.1f64..5.0) {
            let a = analyze(&sys, AnalyzeOptions::default()).unwrap().bounds;
            let b = analyze(&sys.scaled(c), AnalyzeOptions::default()).unwrap().bounds;
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(1.0);
            prop_assert!(close(c * a.lower.unwrap(), b.lower.unwrap()));
            prop_assert!(close(c * a.upper.unwrap(), b.upper.unwrap()));
            prop_assert!(close(c * a.trace_bound.unwrap(), b.trace_bound.unwrap()));
        }

        #[test]
        fn lti_consistency(e in prop::collection::vec(-2.0f64..2.0, 4)) {
            let a = DMatrix::from_row_slice(2, 2, &e);
            let sys = SwitchedSystem::new(ModeSet::new(vec![a.clone()]).unwrap(), SwitchingSignal::constant()).unwrap();
            let h = lti_entropy(&a).unwrap();
            let tr = trace_lower_bound(&sys, &[1.0]).unwrap();
            prop_assert!(tr <= h + 1e-10);
            let s = lie::classify(sys.modes(), StructureOptions::default());
            if s.classification == Classification::CommutingDiagonalizable {
                let d = diagonal_bounds(&sys, &s, &[1.0]).unwrap();
                prop_assert!((d.upper.unwrap() - h).abs() <= 1e-10);
            }
            if s.classification != Classification::Unstructured {
                // single-mode triangular bound under the deflation order is an upper bound on h
                let t = triangular_upper_bound(&sys, &s, &[1.0], SubexpVerdict::Pass).unwrap();
                prop_assert!(t.upper.unwrap() >= h - 1e-10);
            }
        }
    }
}
