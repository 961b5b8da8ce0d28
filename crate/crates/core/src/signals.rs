//! Piecewise-constant switching signals and the time statistics derived from
//! them: activation times and fractions, weighted exponents, switch counts
//! and window (folding) diagnostics.
//!
//! Mode indices are 1-based throughout the public API, matching the JSON
//! representation `{"k": 2, "repeat": "periodic", "segments": [[1, 1.0], [2, 1.0]]}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when comparing times against segment boundaries.
const TIME_FUZZ: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Repeat {
    Periodic,
    Truncated,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub mode: usize,
    pub duration: f64,
}

/// One maximal interval of constant mode, clipped to a query horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece {
    pub mode: usize,
    pub start: f64,
    pub duration: f64,
    /// Index of the originating entry in the segment list.
    pub segment: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SignalSpec {
    k: usize,
    repeat: Repeat,
    segments: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalSpec", into = "SignalSpec")]
pub struct SwitchingSignal {
    k: usize,
    repeat: Repeat,
    segments: Vec<Segment>,
    starts: Vec<f64>,
    period: f64,
    per_period: Vec<f64>,
}

impl TryFrom<SignalSpec> for SwitchingSignal {
    type Error = Error;

    fn try_from(spec: SignalSpec) -> Result<Self> {
        SwitchingSignal::new(spec.k, spec.segments, spec.repeat)
    }
}

impl From<SwitchingSignal> for SignalSpec {
    fn from(s: SwitchingSignal) -> Self {
        SignalSpec {
            k: s.k,
            repeat: s.repeat,
            segments: s.segments.iter().map(|g| (g.mode, g.duration)).collect(),
        }
    }
}

/// An activation fraction together with whether it is exact (periodic
/// signal) or a finite-horizon tail estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fraction {
    pub value: f64,
    pub exact: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SubexpVerdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubexpReport {
    pub verdict: SubexpVerdict,
    /// `(T, log N(T) / T)` for each requested horizon.
    pub samples: Vec<(f64, f64)>,
    pub note: &'static str,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldVerdict {
    LimitLikely,
    LimitUnlikely,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldReport {
    pub verdict: FoldVerdict,
    /// Per-window exponent increments `kappa((n+1)w) - kappa(n w)`.
    pub window_values: Vec<f64>,
    /// Largest pairwise gap among windows after the first 10%.
    pub tail_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActivationStats {
    pub horizon: f64,
    pub tau: Vec<f64>,
    pub tau_bar: Vec<Fraction>,
    pub kappa: f64,
    pub kappa_bar: f64,
    pub kappa_bar_exact: bool,
    pub switch_count: usize,
}

impl SwitchingSignal {
    pub fn new(k: usize, segments: Vec<(usize, f64)>, repeat: Repeat) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidSignal("mode count k must be positive".into()));
        }
        if segments.is_empty() {
            return Err(Error::InvalidSignal("segment list is empty".into()));
        }
        let mut segs = Vec::with_capacity(segments.len());
        let mut starts = Vec::with_capacity(segments.len());
        let mut per_period = vec![0.0; k];
        let mut acc = 0.0;
        for (i, &(mode, duration)) in segments.iter().enumerate() {
            if mode == 0 || mode > k {
                return Err(Error::InvalidMode { mode, k });
            }
            if !(duration.is_finite() && duration > 0.0) {
                return Err(Error::InvalidSignal(format!(
                    "segment {i} has non-positive or non-finite duration {duration}"
                )));
            }
            starts.push(acc);
            acc += duration;
            per_period[mode - 1] += duration;
            segs.push(Segment { mode, duration });
        }
        if !acc.is_finite() {
            return Err(Error::InvalidSignal("total duration is not finite".into()));
        }
        Ok(SwitchingSignal {
            k,
            repeat,
            segments: segs,
            starts,
            period: acc,
            per_period,
        })
    }

    pub fn periodic(k: usize, segments: Vec<(usize, f64)>) -> Result<Self> {
        Self::new(k, segments, Repeat::Periodic)
    }

    pub fn truncated(k: usize, segments: Vec<(usize, f64)>) -> Result<Self> {
        Self::new(k, segments, Repeat::Truncated)
    }

    /// A constant signal on mode 1 with unit period.
    pub fn constant() -> Self {
        Self::periodic(1, vec![(1, 1.0)]).expect("valid constant signal")
    }

    /// Two-mode signal that is not periodic but has identical activation in
    /// every unit window: window `n` is split into `2^(n+1)` alternating
    /// pieces of length `2^-(n+1)`. Generated for windows `0..depth`.
    pub fn dyadic(depth: u32) -> Result<Self> {
        if depth == 0 || depth > 20 {
            return Err(Error::InvalidArgument(format!(
                "dyadic depth must be in 1..=20, got {depth}"
            )));
        }
        let mut segs = Vec::new();
        for n in 0..depth {
            let pieces = 1usize << (n + 1);
            let len = 1.0 / pieces as f64;
            for p in 0..pieces {
                segs.push((1 + p % 2, len));
            }
        }
        Self::truncated(2, segs)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn repeat(&self) -> Repeat {
        self.repeat
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Sum of segment durations (the period for periodic signals).
    pub fn period(&self) -> f64 {
        self.period
    }

    /// Right end of the domain, or `None` when the signal repeats forever.
    pub fn end(&self) -> Option<f64> {
        match self.repeat {
            Repeat::Periodic => None,
            Repeat::Truncated => Some(self.period),
        }
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let end = self.end().unwrap_or(f64::INFINITY);
        if !(t >= 0.0) || !t.is_finite() || t > end * (1.0 + TIME_FUZZ) {
            return Err(Error::OutOfDomain { t, end });
        }
        Ok(())
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode == 0 || mode > self.k {
            Err(Error::InvalidMode { mode, k: self.k })
        } else {
            Ok(())
        }
    }

    fn check_rates(&self, rates: &[f64]) -> Result<()> {
        if rates.len() != self.k {
            Err(Error::LengthMismatch {
                expected: self.k,
                actual: rates.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Mode active at time `t` (right-continuous; at the end of a truncated
    /// signal the last mode is reported).
    pub fn mode_at(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        let local = match self.repeat {
            Repeat::Periodic => t - (t / self.period).floor() * self.period,
            Repeat::Truncated => t.min(self.period),
        };
        let idx = match self.starts.binary_search_by(|s| s.partial_cmp(&local).expect("finite")) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        Ok(self.segments[idx.min(self.segments.len() - 1)].mode)
    }

    /// Maximal constant-mode pieces covering `[0, t]`, in time order. The last
    /// piece is clipped at `t`. Adjacent segments of the same mode are kept
    /// separate.
    pub fn pieces(&self, t: f64) -> Result<Vec<Piece>> {
        self.check_time(t)?;
        let mut out = Vec::new();
        if t == 0.0 {
            return Ok(out);
        }
        let fuzz = TIME_FUZZ * t.max(1.0);
        let mut cycle = 0usize;
        loop {
            let offset = cycle as f64 * self.period;
            for (i, seg) in self.segments.iter().enumerate() {
                let start = offset + self.starts[i];
                if start >= t - fuzz {
                    return Ok(out);
                }
                let end = start + seg.duration;
                let stop = if end >= t - fuzz { t } else { end };
                out.push(Piece {
                    mode: seg.mode,
                    start,
                    duration: stop - start,
                    segment: i,
                });
                if stop == t {
                    return Ok(out);
                }
            }
            if self.repeat == Repeat::Truncated {
                return Ok(out);
            }
            cycle += 1;
        }
    }

    /// Cumulative time `mode` has been active on `[0, t]`, by segment arithmetic.
    pub fn activation_time(&self, mode: usize, t: f64) -> Result<f64> {
        self.check_mode(mode)?;
        self.check_time(t)?;
        let (cycles, rem) = match self.repeat {
            Repeat::Periodic => {
                let c = (t / self.period).floor();
                (c, t - c * self.period)
            }
            Repeat::Truncated => (0.0, t.min(self.period)),
        };
        let mut tau = cycles * self.per_period[mode - 1];
        for (i, seg) in self.segments.iter().enumerate() {
            let start = self.starts[i];
            if start >= rem {
                break;
            }
            if seg.mode == mode {
                tau += (start + seg.duration).min(rem) - start;
            }
        }
        Ok(tau)
    }

    /// Activation times of every mode at `t`.
    pub fn activation_times(&self, t: f64) -> Result<Vec<f64>> {
        (1..=self.k).map(|m| self.activation_time(m, t)).collect()
    }

    /// Long-run fraction of time `mode` is active. Exact for periodic signals;
    /// otherwise the maximum of `tau(t)/t` over `t` in
    /// `[tail_start_fraction * horizon, horizon]`.
    pub fn activation_fraction(&self, mode: usize, horizon: f64, tail_start_fraction: f64) -> Result<Fraction> {
        self.check_mode(mode)?;
        if self.repeat == Repeat::Periodic {
            return Ok(Fraction {
                value: self.per_period[mode - 1] / self.period,
                exact: true,
            });
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if !(tail_start_fraction > 0.0 && tail_start_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tail start fraction must lie in (0,1), got {tail_start_fraction}"
            )));
        }
        self.check_time(horizon)?;
        let from = tail_start_fraction * horizon;
        // tau/t is monotone between switches, so the maximum sits at the
        // window start, a segment boundary, or the horizon.
        let mut best = self.activation_time(mode, from)? / from;
        for &b in &self.starts {
            if b > from && b < horizon {
                best = best.max(self.activation_time(mode, b)? / b);
            }
        }
        best = best.max(self.activation_time(mode, horizon)? / horizon);
        Ok(Fraction {
            value: best.clamp(0.0, 1.0),
            exact: false,
        })
    }

    /// Activation fractions for all modes.
    pub fn activation_fractions(&self, horizon: f64, tail_start_fraction: f64) -> Result<Vec<Fraction>> {
        (1..=self.k)
            .map(|m| self.activation_fraction(m, horizon, tail_start_fraction))
            .collect()
    }

    /// Weighted exponent `sum_j rates[j] * tau_j(t)`.
    pub fn kappa(&self, rates: &[f64], t: f64) -> Result<f64> {
        self.check_rates(rates)?;
        let tau = self.activation_times(t)?;
        Ok(rates.iter().zip(&tau).map(|(a, t)| a * t).sum())
    }

    /// Average exponent `sum_j rates[j] * tau_bar_j`, with an exactness flag.
    pub fn kappa_bar(&self, rates: &[f64], horizon: f64, tail_start_fraction: f64) -> Result<(f64, bool)> {
        self.check_rates(rates)?;
        let fr = self.activation_fractions(horizon, tail_start_fraction)?;
        let value = rates.iter().zip(&fr).map(|(a, f)| a * f.value).sum();
        Ok((value, fr.iter().all(|f| f.exact)))
    }

    /// Largest value of `kappa(rates, s)` for `s` in `[0, t]`. The exponent is
    /// piecewise linear, so only segment boundaries and `t` need checking.
    pub fn running_max_kappa(&self, rates: &[f64], t: f64) -> Result<f64> {
        self.check_rates(rates)?;
        let mut k = 0.0;
        let mut best: f64 = 0.0;
        for p in self.pieces(t)? {
            k += rates[p.mode - 1] * p.duration;
            best = best.max(k);
        }
        Ok(best)
    }

    /// Number of switching instants in `[0, t]`. The instant `t = 0` always
    /// counts; every later segment boundary counts when the mode changes.
    pub fn switch_count(&self, t: f64) -> Result<usize> {
        self.check_time(t)?;
        let n = self.segments.len();
        let is_switch = |i: usize| -> bool {
            // boundary at the start of segment i (i >= 1 within a period,
            // i == 0 for the wrap between periods)
            let prev = if i == 0 { n - 1 } else { i - 1 };
            self.segments[prev].mode != self.segments[i].mode
        };
        let limit = t * (1.0 + TIME_FUZZ) + TIME_FUZZ;
        let mut count = 1usize;
        match self.repeat {
            Repeat::Truncated => {
                for i in 1..n {
                    if self.starts[i] <= limit && is_switch(i) {
                        count += 1;
                    }
                }
            }
            Repeat::Periodic => {
                let per_cycle = (0..n).filter(|&i| is_switch(i)).count();
                let cycles = (limit / self.period).floor();
                // complete cycles contribute boundaries at offsets in (0, P]
                let full = cycles as usize;
                count += full * per_cycle;
                let base = cycles * self.period;
                for i in 1..n {
                    if base + self.starts[i] <= limit && is_switch(i) {
                        count += 1;
                    }
                }
            }
        }
        Ok(count)
    }

    /// Heuristic test of whether the switching rate is subexponential, i.e.
    /// whether `log N(T) / T` decreases toward zero over the given horizons.
    pub fn subexponential_check(&self, horizons: &[f64]) -> Result<SubexpReport> {
        if horizons.len() < 2 {
            return Err(Error::InvalidArgument(
                "subexponential check needs at least two horizons".into(),
            ));
        }
        if horizons.windows(2).any(|w| !(w[1] > w[0])) || !(horizons[0] > 0.0) {
            return Err(Error::InvalidArgument(
                "horizons must be positive and strictly increasing".into(),
            ));
        }
        let mut samples = Vec::with_capacity(horizons.len());
        for &h in horizons {
            let n = self.switch_count(h)?;
            samples.push((h, (n as f64).ln() / h));
        }
        let vals: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let tail = &vals[vals.len() / 2..];
        let tail = if tail.len() < 2 { &vals[vals.len() - 2..] } else { tail };
        let last = *vals.last().expect("non-empty");
        let decreasing = tail.windows(2).all(|w| w[1] <= w[0] + 1e-15);
        let increasing = tail.windows(2).all(|w| w[1] > w[0]);
        let verdict = if decreasing && last < 0.1 {
            SubexpVerdict::Pass
        } else if increasing {
            SubexpVerdict::Fail
        } else {
            SubexpVerdict::Inconclusive
        };
        Ok(SubexpReport {
            verdict,
            samples,
            note: "heuristic: finite-horizon samples of log N(T)/T",
        })
    }

    /// Window diagnostic for existence of the limit of `kappa(t)/t`.
    ///
    /// Splits `[0, horizon]` into complete windows of length `window`, takes
    /// the exponent increment over each, and ignores the first 10% of
    /// windows. `LimitLikely` if every remaining pair differs by less than
    /// `eps`; `LimitUnlikely` if the two halves of the remaining windows have
    /// means at least `eps` apart (a drifting average); otherwise
    /// `Inconclusive`.
    pub fn fold_diagnostic(&self, rates: &[f64], window: f64, horizon: f64, eps: f64) -> Result<FoldReport> {
        self.check_rates(rates)?;
        if !(window > 0.0) || !(eps > 0.0) {
            return Err(Error::InvalidArgument("window and eps must be positive".into()));
        }
        let windows = (horizon / window + 1e-9).floor().max(0.0) as usize;
        if windows < 10 {
            return Err(Error::TooFewWindows { windows });
        }
        self.check_time(windows as f64 * window)?;
        let mut values = Vec::with_capacity(windows);
        let mut prev = 0.0;
        for n in 0..windows {
            let t = ((n + 1) as f64 * window).min(self.end().unwrap_or(f64::INFINITY));
            let k = self.kappa(rates, t)?;
            values.push(k - prev);
            prev = k;
        }
        let skip = (windows as f64 * 0.1).ceil() as usize;
        let tail = &values[skip..];
        let (lo, hi) = tail
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let gap = hi - lo;
        let half = tail.len() / 2;
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let drift = (mean(&tail[half..]) - mean(&tail[..half])).abs();
        let verdict = if gap < eps {
            FoldVerdict::LimitLikely
        } else if drift >= eps {
            FoldVerdict::LimitUnlikely
        } else {
            FoldVerdict::Inconclusive
        };
        Ok(FoldReport {
            verdict,
            window_values: values,
            tail_gap: gap,
        })
    }

    /// All activation statistics for a rate table at a horizon.
    pub fn activation_stats(&self, rates: &[f64], horizon: f64, tail_start_fraction: f64) -> Result<ActivationStats> {
        let tau = self.activation_times(horizon)?;
        let tau_bar = self.activation_fractions(horizon, tail_start_fraction)?;
        let kappa = self.kappa(rates, horizon)?;
        let (kappa_bar, kappa_bar_exact) = self.kappa_bar(rates, horizon, tail_start_fraction)?;
        Ok(ActivationStats {
            horizon,
            tau,
            tau_bar,
            kappa,
            kappa_bar,
            kappa_bar_exact,
            switch_count: self.switch_count(horizon)?,
        })
    }
}
