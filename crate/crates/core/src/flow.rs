//! Exact evolution of `x' = A_sigma(t) x` by products of per-segment matrix
//! exponentials.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lie::ModeSet;
use crate::linalg;
use crate::signals::{Repeat, SwitchingSignal};

/// Largest `||A||_1 * dt` handed to a single exponential; longer steps are split.
const MAX_EXP_NORM: f64 = 50.0;

/// Default number of uniform samples per signal segment when approximating
/// a supremum over `[0, T]`.
pub const DEFAULT_SAMPLE_DENSITY: usize = 20;

#[derive(Clone, Debug)]
pub struct SwitchedSystem {
    modes: ModeSet,
    signal: SwitchingSignal,
    // e^{A_mode * duration} for each entry of the segment list
    segment_exp: Vec<DMatrix<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub x0: DVector<f64>,
}

/// Walk position inside the segment list.
#[derive(Clone, Copy, Debug)]
struct Cursor {
    segment: usize,
    offset: f64,
    time: f64,
}

impl SwitchedSystem {
    pub fn new(modes: ModeSet, signal: SwitchingSignal) -> Result<Self> {
        if modes.k() != signal.k() {
            return Err(Error::Dimension(format!(
                "signal has k = {} modes but {} matrices were given",
                signal.k(),
                modes.k()
            )));
        }
        let segment_exp = signal
            .segments()
            .iter()
            .map(|s| exp_step(modes.get(s.mode - 1), s.duration))
            .collect();
        Ok(SwitchedSystem {
            modes,
            signal,
            segment_exp,
        })
    }

    pub fn n(&self) -> usize {
        self.modes.n()
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn signal(&self) -> &SwitchingSignal {
        &self.signal
    }

    /// Same signal, modes scaled by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.modes.scaled(c), self.signal.clone()).expect("same shape")
    }

    fn advance<F: FnMut(Cow<'_, DMatrix<f64>>)>(&self, cur: &mut Cursor, to: f64, mut apply: F) {
        let segs = self.signal.segments();
        let fuzz = 1e-12 * to.max(1.0);
        while cur.time < to - fuzz {
            let seg = &segs[cur.segment];
            let left = seg.duration - cur.offset;
            let want = to - cur.time;
            if want >= left - fuzz {
                if cur.offset == 0.0 {
                    apply(Cow::Borrowed(&self.segment_exp[cur.segment]));
                } else {
                    apply(Cow::Owned(exp_step(self.modes.get(seg.mode - 1), left)));
                }
                cur.time += left;
                cur.offset = 0.0;
                cur.segment += 1;
                if cur.segment == segs.len() {
                    if self.signal.repeat() == Repeat::Truncated {
                        break;
                    }
                    cur.segment = 0;
                }
            } else {
                apply(Cow::Owned(exp_step(self.modes.get(seg.mode - 1), want)));
                cur.offset += want;
                cur.time = to;
            }
        }
        cur.time = to;
    }

    fn check_times(&self, times: &[f64]) -> Result<()> {
        for w in times.windows(2) {
            if !(w[1] >= w[0]) {
                return Err(Error::InvalidArgument("times must be nondecreasing".into()));
            }
        }
        for &t in times {
            self.signal.check_time(t)?;
        }
        Ok(())
    }

    /// State transition matrix `Phi(t)` with `x(t) = Phi(t) x(0)`.
    pub fn transition_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        self.signal.check_time(t)?;
        let n = self.n();
        let mut phi = DMatrix::identity(n, n);
        let mut cur = Cursor {
            segment: 0,
            offset: 0.0,
            time: 0.0,
        };
        self.advance(&mut cur, t, |e| phi = e.as_ref() * &phi);
        Ok(phi)
    }

    /// Transition matrices at each of the (nondecreasing) `times`, computed
    /// incrementally along the signal.
    pub fn transitions_at(&self, times: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.check_times(times)?;
        let n = self.n();
        let mut phi = DMatrix::identity(n, n);
        let mut cur = Cursor {
            segment: 0,
            offset: 0.0,
            time: 0.0,
        };
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            self.advance(&mut cur, t, |e| phi = e.as_ref() * &phi);
            out.push(phi.clone());
        }
        Ok(out)
    }

    /// Trajectory from `x0` sampled at the (nondecreasing) `times`.
    pub fn solve(&self, x0: &DVector<f64>, times: &[f64]) -> Result<Trajectory> {
        if x0.len() != self.n() {
            return Err(Error::LengthMismatch {
                expected: self.n(),
                actual: x0.len(),
            });
        }
        self.check_times(times)?;
        let mut x = x0.clone();
        let mut cur = Cursor {
            segment: 0,
            offset: 0.0,
            time: 0.0,
        };
        let mut states = Vec::with_capacity(times.len());
        for &t in times {
            self.advance(&mut cur, t, |e| x = e.as_ref() * &x);
            states.push(x.clone());
        }
        Ok(Trajectory {
            times: times.to_vec(),
            states,
            x0: x0.clone(),
        })
    }

    /// Sample grid on `[0, t]`: zero, every segment boundary, `t`, and
    /// `density` uniform subintervals inside each segment.
    pub fn sample_times(&self, t: f64, density: usize) -> Result<Vec<f64>> {
        let density = density.max(1);
        let mut out = vec![0.0];
        for p in self.signal.pieces(t)? {
            for j in 1..=density {
                out.push(p.start + p.duration * j as f64 / density as f64);
            }
        }
        if let Some(last) = out.last_mut() {
            // guard against accumulated rounding at the horizon
            if (*last - t).abs() <= 1e-12 * t.max(1.0) {
                *last = t;
            }
        }
        if *out.last().expect("non-empty") < t {
            out.push(t);
        }
        out.dedup();
        Ok(out)
    }

    /// `max ||phi(s, x) - phi(s, y)||_inf` over `sample_times`, which must lie
    /// in `[0, t]` and include 0 and `t`.
    pub fn separation(&self, x: &DVector<f64>, y: &DVector<f64>, t: f64, sample_times: &[f64]) -> Result<f64> {
        if sample_times.first() != Some(&0.0) || sample_times.last() != Some(&t) {
            return Err(Error::InvalidArgument(
                "sample times must start at 0 and end at T".into(),
            ));
        }
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: x.len(),
                actual: y.len(),
            });
        }
        let traj = self.solve(&(x - y), sample_times)?;
        Ok(traj.states.iter().map(|s| s.amax()).fold(0.0, f64::max))
    }

    /// `(exp(sum_i tr(A_i) tau_i(t)), det Phi(t))`; the two agree by the
    /// Liouville trace formula.
    pub fn volume_growth(&self, t: f64) -> Result<(f64, f64)> {
        let tau = self.signal.activation_times(t)?;
        let exponent: f64 = self.modes.matrices().iter().zip(&tau).map(|(a, s)| a.trace() * s).sum();
        Ok((exponent.exp(), self.transition_matrix(t)?.determinant()))
    }
}

/// `exp(a * dt)`, split into equal substeps when `||a|| dt` is large.
pub fn exp_step(a: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    let norm = linalg::norm1(a) * dt;
    if norm <= MAX_EXP_NORM {
        return linalg::expm(&(a * dt));
    }
    let pieces = (norm / MAX_EXP_NORM).ceil() as u32;
    let step = linalg::expm(&(a * (dt / pieces as f64)));
    let mut out = step.clone();
    for _ in 1..pieces {
        out = &step * &out;
    }
    out
}
