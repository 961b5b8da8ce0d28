//! Empirical entropy estimation from (T, eps)-spanning and separated sets
//! over the unit cube of initial conditions.
//!
//! Separation is linear in the difference of initial conditions, so whether
//! lattice point `p` covers `q` depends only on the offset `q - p`. The
//! covered offsets form a symmetric convex set `B = {d : max_s |Phi(s) d| < eps}`
//! which is computed once per (T, eps) as one interval per lattice line.
//!
//! Lattice axes follow the right singular vectors of `Phi(T)`, so `B` is
//! roughly axis-aligned in lattice coordinates; the counted region is the
//! parallelepiped spanned by the bounding box of the cube in that frame. When
//! `Phi(T)` is diagonal up to a signed permutation the frame is the identity
//! and the region is the unit cube itself.
//!
//! The region is split into identical axis-aligned tiles, each carrying a
//! `grid_resolution`-point lattice per axis whose spacing is a fixed fraction
//! of the extent of `B`. The greedy cover (or packing) of one tile is
//! translated to every tile, so a count is `tile_count * tiles`. When a single
//! tile spans an axis the lattice is the literal grid over that axis.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::SwitchedSystem;
use crate::lie::{Classification, StructureReport};

pub const MAX_DIM: usize = 3;
pub const MIN_RESOLUTION: usize = 3;
pub const MAX_RESOLUTION: usize = 64;
/// Lattice steps across the half-extent of the covered-offset set; coarser in
/// three dimensions to keep neighbourhoods near a thousand points.
fn steps_per_extent(n: usize) -> f64 {
    if n <= 2 {
        8.0
    } else {
        4.0
    }
}
const MAX_REFINEMENTS: usize = 200;
/// Largest tile multiplier accepted before the count is considered meaningless.
const MAX_TILES: f64 = 1e18;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    SpanningGreedy,
    SeparatedGreedy,
    GridFormula,
}

/// Whether lattice evaluations may use the rayon pool. Without the
/// `parallel` feature both variants run sequentially.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub horizons: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub grid_resolution: usize,
    pub sample_density: usize,
    pub method: Method,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            horizons: vec![4.0, 8.0, 12.0, 16.0],
            epsilons: vec![0.5, 0.25],
            grid_resolution: MAX_RESOLUTION,
            sample_density: crate::flow::DEFAULT_SAMPLE_DENSITY,
            method: Method::SpanningGreedy,
            execution: Execution::Parallel,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::Config("horizons must not be empty".into()));
        }
        if !(self.horizons[0] > 0.0) || self.horizons.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "horizons must be positive and strictly increasing".into(),
            ));
        }
        if self.epsilons.is_empty() {
            return Err(Error::Config("epsilons must not be empty".into()));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(Error::Config("epsilons must lie in (0, 1)".into()));
        }
        if self.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("epsilons must be strictly decreasing".into()));
        }
        if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&self.grid_resolution) {
            return Err(Error::Config(format!(
                "grid_resolution must lie in {MIN_RESOLUTION}..={MAX_RESOLUTION}, got {}",
                self.grid_resolution
            )));
        }
        if self.sample_density == 0 {
            return Err(Error::Config("sample_density must be at least 1".into()));
        }
        Ok(())
    }

    fn smallest_eps(&self) -> f64 {
        self.epsilons.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn check_system(system: &SwitchedSystem) -> Result<()> {
    if system.n() > MAX_DIM {
        return Err(Error::Config(format!(
            "state dimension {} exceeds the estimator cap of {MAX_DIM}",
            system.n()
        )));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn map_indexed<T, F>(len: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    match exec {
        Execution::Parallel => (0..len).into_par_iter().map(f).collect(),
        Execution::Sequential => (0..len).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_indexed<T, F>(len: usize, _exec: Execution, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..len).map(f).collect()
}

/// Lattice layout shared by every eps at one horizon.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Geometry {
    /// Lattice points per axis inside one tile.
    pub points: Vec<usize>,
    /// Tiles per axis.
    pub tiles: Vec<u64>,
    /// Lattice spacing per axis.
    pub spacing: Vec<f64>,
}

impl Geometry {
    fn from_extents(extents: &[f64], resolution: usize) -> Result<Self> {
        let span = (resolution - 1) as f64;
        let mut g = Geometry {
            points: Vec::new(),
            tiles: Vec::new(),
            spacing: Vec::new(),
        };
        let steps = steps_per_extent(extents.len());
        for &e in extents {
            let target = e.min(1.0) / steps;
            if !(target > 0.0) {
                return Err(Error::LatticeTooCoarse(format!("degenerate offset extent {e}")));
            }
            if span * target >= 1.0 {
                let r = ((1.0 / target).ceil() as usize + 1).clamp(MIN_RESOLUTION, resolution);
                g.points.push(r);
                g.tiles.push(1);
                g.spacing.push(1.0 / (r - 1) as f64);
            } else {
                let m = (1.0 / (span * target)).ceil();
                if m > MAX_TILES {
                    return Err(Error::Numerical(format!(
                        "covered offsets of width {e:e} need more than {MAX_TILES:e} tiles"
                    )));
                }
                g.points.push(resolution);
                g.tiles.push(m as u64);
                g.spacing.push(1.0 / (m * span));
            }
        }
        Ok(g)
    }

    fn len(&self) -> usize {
        self.points.iter().product()
    }

    fn tile_multiplier(&self) -> Result<u64> {
        self.tiles
            .iter()
            .try_fold(1u64, |acc, &t| acc.checked_mul(t))
            .ok_or_else(|| Error::Numerical("tile count overflows u64".into()))
    }

    /// Offset range `[-(r_i - 1), r_i - 1]` on axis `i`, 0 for missing axes.
    fn reach(&self, axis: usize) -> i64 {
        self.points.get(axis).map_or(0, |&r| r as i64 - 1)
    }
}

/// Offsets `(o_1, rest)` with `o_1` in `[lo, hi]` that lie in the covered set.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Line {
    rest: [i64; 2],
    lo: i64,
    hi: i64,
}

/// The covered-offset set of one (T, eps) pair on a given geometry.
#[derive(Clone, Debug)]
struct Coverage {
    lines: Vec<Line>,
}

/// Lattice frame `W diag(b)`: `W` holds the right singular vectors of `phi`
/// and `b_i` is the width of the unit cube along column `i` of `W`.
fn lattice_frame(phi: &DMatrix<f64>) -> DMatrix<f64> {
    let n = phi.nrows();
    let svd = phi.clone().svd(false, true);
    let Some(v_t) = svd.v_t else {
        return DMatrix::identity(n, n);
    };
    let w = v_t.transpose();
    let signed_permutation = w
        .column_iter()
        .all(|c| c.iter().filter(|x| x.abs() > 1.0 - 1e-9).count() == 1);
    if signed_permutation || w.iter().any(|x| !x.is_finite()) {
        return DMatrix::identity(n, n);
    }
    let mut frame = w;
    for mut c in frame.column_iter_mut() {
        let width: f64 = c.iter().map(|x| x.abs()).sum();
        c *= width;
    }
    frame
}

/// Rows of `Phi(s) * frame` for every sample time, padded to three columns.
fn constraint_rows(system: &SwitchedSystem, t: f64, density: usize, frame: &DMatrix<f64>) -> Result<Vec<[f64; 3]>> {
    let times = system.sample_times(t, density)?;
    let mats = system.transitions_at(&times)?;
    let n = system.n();
    let mut rows = Vec::with_capacity(mats.len() * n);
    for m in &mats {
        let m = m * frame;
        for i in 0..n {
            let mut r = [0.0; 3];
            for j in 0..n {
                r[j] = m[(i, j)];
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!("transition matrix overflow at T = {t}")));
            }
            rows.push(r);
        }
    }
    Ok(rows)
}

fn line_interval(rows: &[[f64; 3]], geom: &Geometry, eps: f64, rest: [i64; 2]) -> Option<(i64, i64)> {
    let r1 = geom.reach(0);
    let (mut lo, mut hi) = (-r1, r1);
    let h = [
        geom.spacing[0],
        geom.spacing.get(1).copied().unwrap_or(0.0),
        geom.spacing.get(2).copied().unwrap_or(0.0),
    ];
    for g in rows {
        let a = g[0] * h[0];
        let c = g[1] * h[1] * rest[0] as f64 + g[2] * h[2] * rest[1] as f64;
        if a == 0.0 {
            if c.abs() >= eps {
                return None;
            }
            continue;
        }
        let (mut from, mut to) = ((-eps - c) / a, (eps - c) / a);
        if a < 0.0 {
            std::mem::swap(&mut from, &mut to);
        }
        // strict inequalities: from < o < to
        lo = lo.max(from.floor() as i64 + 1);
        hi = hi.min(to.ceil() as i64 - 1);
        if lo > hi {
            return None;
        }
    }
    Some((lo, hi))
}

fn coverage(rows: &[[f64; 3]], geom: &Geometry, eps: f64, exec: Execution) -> Coverage {
    let (r2, r3) = (geom.reach(1), geom.reach(2));
    let w2 = (2 * r2 + 1) as usize;
    let count = w2 * (2 * r3 + 1) as usize;
    let lines = map_indexed(count, exec, |idx| {
        let rest = [(idx % w2) as i64 - r2, (idx / w2) as i64 - r3];
        line_interval(rows, geom, eps, rest).map(|(lo, hi)| Line { rest, lo, hi })
    });
    Coverage {
        lines: lines.into_iter().flatten().collect(),
    }
}

impl Coverage {
    /// Largest covered offset per axis, in lattice steps.
    fn observed_reach(&self, dim: usize) -> Vec<i64> {
        let mut out = vec![0i64; dim];
        for l in &self.lines {
            out[0] = out[0].max(l.lo.abs()).max(l.hi.abs());
            for (o, r) in out[1..].iter_mut().zip(&l.rest) {
                *o = (*o).max(r.abs());
            }
        }
        out
    }

    /// Calls `f(start, len)` for every contiguous run of lattice indices
    /// covered from point `p`.
    fn for_each_run(&self, geom: &Geometry, p: usize, mut f: impl FnMut(usize, usize)) {
        let r = [
            geom.points[0] as i64,
            geom.points.get(1).copied().unwrap_or(1) as i64,
            geom.points.get(2).copied().unwrap_or(1) as i64,
        ];
        let p = p as i64;
        let (x, y, z) = (p % r[0], (p / r[0]) % r[1], p / (r[0] * r[1]));
        for l in &self.lines {
            let (yy, zz) = (y + l.rest[0], z + l.rest[1]);
            if yy < 0 || yy >= r[1] || zz < 0 || zz >= r[2] {
                continue;
            }
            let from = (x + l.lo).max(0);
            let to = (x + l.hi).min(r[0] - 1);
            if from > to {
                continue;
            }
            let base = r[0] * (yy + r[1] * zz);
            f((base + from) as usize, (to - from + 1) as usize);
        }
    }
}

/// Picks lattice spacing so the covered-offset set spans about
/// [`steps_per_extent`] steps per half-axis, growing the extent estimates until
/// the observed extents agree with them.
fn fit_geometry(rows: &[[f64; 3]], n: usize, eps: f64, resolution: usize, exec: Execution) -> Result<Geometry> {
    let mut extents: Vec<f64> = (0..n)
        .map(|j| {
            let gmax = rows.iter().map(|r| r[j].abs()).fold(0.0, f64::max);
            if gmax > 0.0 {
                (eps / gmax).min(1.0)
            } else {
                1.0
            }
        })
        .collect();
    for _ in 0..MAX_REFINEMENTS {
        let geom = Geometry::from_extents(&extents, resolution)?;
        let cov = coverage(rows, &geom, eps, exec);
        let seen = cov.observed_reach(n);
        let mut changed = false;
        for i in 0..n {
            if extents[i] >= 1.0 {
                continue;
            }
            if geom.tiles[i] > 1 && seen[i] >= geom.reach(i) {
                extents[i] = (extents[i] * 4.0).min(1.0);
                changed = true;
            } else {
                let estimate = (seen[i] + 1) as f64 * geom.spacing[i];
                if estimate > 1.25 * extents[i] {
                    extents[i] = estimate.min(1.0);
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(geom);
        }
    }
    Err(Error::LatticeTooCoarse(
        "lattice spacing did not settle; covered offsets are too anisotropic".into(),
    ))
}

fn greedy_cover(geom: &Geometry, cov: &Coverage, exec: Execution) -> u64 {
    let total = geom.len();
    let mut covered = vec![false; total];
    let gain = |p: usize, covered: &[bool]| -> usize {
        let mut g = 0;
        cov.for_each_run(geom, p, |s, len| {
            g += covered[s..s + len].iter().filter(|c| !**c).count();
        });
        g
    };
    // nothing is covered yet, so the first gains are neighbourhood sizes
    let initial = map_indexed(total, exec, |p| {
        let mut g = 0;
        cov.for_each_run(geom, p, |_, len| g += len);
        g
    });
    let mut heap: BinaryHeap<(usize, Reverse<usize>)> =
        initial.into_iter().enumerate().map(|(p, g)| (g, Reverse(p))).collect();
    let mut remaining = total;
    let mut selected = 0u64;
    while remaining > 0 {
        let Some((_, Reverse(p))) = heap.pop() else {
            break;
        };
        let g = gain(p, &covered);
        if g == 0 {
            continue;
        }
        let best = heap.peek().is_none_or(|top| (g, Reverse(p)) >= *top);
        if best {
            cov.for_each_run(geom, p, |s, len| covered[s..s + len].fill(true));
            remaining -= g;
            selected += 1;
        } else {
            heap.push((g, Reverse(p)));
        }
    }
    selected
}

fn greedy_packing(geom: &Geometry, cov: &Coverage) -> u64 {
    let total = geom.len();
    let mut blocked = vec![false; total];
    let mut selected = 0u64;
    for p in 0..total {
        if blocked[p] {
            continue;
        }
        selected += 1;
        cov.for_each_run(geom, p, |s, len| blocked[s..s + len].fill(true));
    }
    selected
}

/// Lattice and constraint data for one horizon, reusable across eps.
pub struct HorizonLattice {
    rows: Vec<[f64; 3]>,
    frame: DMatrix<f64>,
    geometry: Geometry,
    execution: Execution,
}

impl HorizonLattice {
    /// Builds the lattice at horizon `t` sized for the smallest eps in `config`
    /// (or `eps`, if smaller).
    pub fn new(system: &SwitchedSystem, t: f64, eps: f64, config: &EstimationConfig) -> Result<Self> {
        check_system(system)?;
        check_eps(eps)?;
        config.validate()?;
        system.signal().check_time(t)?;
        let frame = lattice_frame(&system.transition_matrix(t)?);
        let rows = constraint_rows(system, t, config.sample_density, &frame)?;
        let reference = eps.min(config.smallest_eps());
        let geometry = fit_geometry(&rows, system.n(), reference, config.grid_resolution, config.execution)?;
        Ok(HorizonLattice {
            rows,
            frame,
            geometry,
            execution: config.execution,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// Maps lattice coordinates to state-space offsets.
    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    fn coverage(&self, eps: f64) -> Result<Coverage> {
        check_eps(eps)?;
        let cov = coverage(&self.rows, &self.geometry, eps, self.execution);
        if cov.lines.is_empty() {
            return Err(Error::LatticeTooCoarse(format!("no lattice offset is within {eps}")));
        }
        Ok(cov)
    }

    pub fn spanning(&self, eps: f64) -> Result<u64> {
        let cov = self.coverage(eps)?;
        let tile = greedy_cover(&self.geometry, &cov, self.execution);
        tile.checked_mul(self.geometry.tile_multiplier()?)
            .ok_or_else(|| Error::Numerical("spanning count overflows u64".into()))
    }

    pub fn separated(&self, eps: f64) -> Result<u64> {
        let cov = self.coverage(eps)?;
        let tile = greedy_packing(&self.geometry, &cov);
        tile.checked_mul(self.geometry.tile_multiplier()?)
            .ok_or_else(|| Error::Numerical("separated count overflows u64".into()))
    }
}

/// Greedy (T, eps)-spanning set size; an upper-bound estimate of `s(T, eps)`.
pub fn spanning_count(system: &SwitchedSystem, t: f64, eps: f64, config: &EstimationConfig) -> Result<u64> {
    HorizonLattice::new(system, t, eps, config)?.spanning(eps)
}

/// Greedy (T, eps)-separated set size from a lattice scan in index order.
pub fn separated_count(system: &SwitchedSystem, t: f64, eps: f64, config: &EstimationConfig) -> Result<u64> {
    HorizonLattice::new(system, t, eps, config)?.separated(eps)
}

/// Closed-form product lattice count for diagonal structure:
/// `prod_i ceil(max(1, exp(max_{s<=T} kappa_i(s))) / (2 eps))`.
pub fn grid_formula_count(system: &SwitchedSystem, structure: &StructureReport, t: f64, eps: f64) -> Result<u64> {
    check_eps(eps)?;
    if structure.classification != Classification::CommutingDiagonalizable
        || !structure.is_diagonal(system.modes().scale())
    {
        return Err(Error::WrongStructure(format!(
            "grid formula needs diagonal structure, got {}",
            structure.classification
        )));
    }
    let sig = system.signal();
    let k = system.modes().k();
    let mut count = 1u64;
    for i in 0..system.n() {
        let rates: Vec<f64> = (0..k).map(|j| structure.diagonal_rates(j)[i]).collect();
        let peak = sig.running_max_kappa(&rates, t)?;
        let axis = (peak.exp().max(1.0) / (2.0 * eps)).ceil();
        if !(axis < u64::MAX as f64) {
            return Err(Error::Numerical(format!("grid count overflows at T = {t}")));
        }
        count = count
            .checked_mul(axis as u64)
            .ok_or_else(|| Error::Numerical("grid count overflows u64".into()))?;
    }
    Ok(count)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountEntry {
    #[serde(rename = "T")]
    pub t: f64,
    pub eps: f64,
    pub count: u64,
    pub log_count_over_t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsRate {
    pub eps: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeInfo {
    #[serde(rename = "T")]
    pub t: f64,
    pub geometry: Geometry,
    /// Row-major lattice frame.
    pub frame: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub tail_horizons: Vec<f64>,
    /// Largest minus smallest per-eps slope.
    pub slope_spread: f64,
    /// Slopes between consecutive horizons at the smallest eps.
    pub window_slopes: Vec<f64>,
    pub window_slope_variance: f64,
    /// Table entries lowered (spanning) or raised (separated) to restore
    /// monotonicity in T and eps.
    pub monotone_adjustments: usize,
    pub lattices: Vec<LatticeInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimationResult {
    pub method: Method,
    pub counts: Vec<CountEntry>,
    pub rates: Vec<EpsRate>,
    pub rate: f64,
    pub diagnostics: FitDiagnostics,
}

/// Least-squares line through `(x, y)`: `(slope, intercept, rms residual)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::DegenerateFit(format!("{} points, need at least 2", x.len())));
    }
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("horizons are not distinct".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok((slope, intercept, (rss / m).sqrt()))
}

/// Makes the table monotone using the inclusions between covering numbers.
/// `counts[ti][ei]` with horizons increasing and eps decreasing.
fn enforce_monotone(counts: &mut [Vec<u64>], method: Method) -> usize {
    let before: Vec<Vec<u64>> = counts.to_vec();
    let (nt, ne) = (counts.len(), counts.first().map_or(0, Vec::len));
    match method {
        Method::SpanningGreedy => {
            // a (T', eps')-spanning set with T' >= T, eps' <= eps also spans (T, eps)
            for ti in (0..nt).rev() {
                for ei in (0..ne).rev() {
                    let mut c = counts[ti][ei];
                    if ti + 1 < nt {
                        c = c.min(counts[ti + 1][ei]);
                    }
                    if ei + 1 < ne {
                        c = c.min(counts[ti][ei + 1]);
                    }
                    counts[ti][ei] = c;
                }
            }
        }
        Method::SeparatedGreedy => {
            // a (T', eps')-separated set with T' <= T, eps' >= eps is (T, eps)-separated
            for ti in 0..nt {
                for ei in 0..ne {
                    let mut c = counts[ti][ei];
                    if ti > 0 {
                        c = c.max(counts[ti - 1][ei]);
                    }
                    if ei > 0 {
                        c = c.max(counts[ti][ei - 1]);
                    }
                    counts[ti][ei] = c;
                }
            }
        }
        Method::GridFormula => {}
    }
    before
        .iter()
        .flatten()
        .zip(counts.iter().flatten())
        .filter(|(a, b)| a != b)
        .count()
}

/// Fills the (T, eps) count table and fits the growth rate of `log count`
/// over the tail half of the horizons.
pub fn entropy_rate(
    system: &SwitchedSystem,
    structure: Option<&StructureReport>,
    config: &EstimationConfig,
) -> Result<EstimationResult> {
    config.validate()?;
    check_system(system)?;
    if config.horizons.len() < 3 {
        return Err(Error::Config("entropy_rate needs at least 3 horizons".into()));
    }
    if config.epsilons.len() < 2 {
        return Err(Error::Config("entropy_rate needs at least 2 epsilons".into()));
    }
    let eps_min = config.smallest_eps();
    let mut table: Vec<Vec<u64>> = Vec::with_capacity(config.horizons.len());
    let mut lattices = Vec::new();
    for &t in &config.horizons {
        let row = match config.method {
            Method::GridFormula => {
                let s =
                    structure.ok_or_else(|| Error::WrongStructure("grid formula needs a structure report".into()))?;
                config
                    .epsilons
                    .iter()
                    .map(|&e| grid_formula_count(system, s, t, e))
                    .collect::<Result<Vec<_>>>()?
            }
            Method::SpanningGreedy | Method::SeparatedGreedy => {
                let lat = HorizonLattice::new(system, t, eps_min, config)?;
                let f = lat.frame();
                lattices.push(LatticeInfo {
                    t,
                    geometry: lat.geometry().clone(),
                    frame: (0..f.nrows()).map(|i| f.row(i).iter().copied().collect()).collect(),
                });
                config
                    .epsilons
                    .iter()
                    .map(|&e| {
                        if config.method == Method::SpanningGreedy {
                            lat.spanning(e)
                        } else {
                            lat.separated(e)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        table.push(row);
    }
    let adjustments = enforce_monotone(&mut table, config.method);

    let mut counts = Vec::new();
    for (ti, &t) in config.horizons.iter().enumerate() {
        for (ei, &e) in config.epsilons.iter().enumerate() {
            let c = table[ti][ei];
            counts.push(CountEntry {
                t,
                eps: e,
                count: c,
                log_count_over_t: (c as f64).ln() / t,
            });
        }
    }

    let start = config.horizons.len() / 2;
    let tail_t = &config.horizons[start..];
    let mut rates = Vec::new();
    for (ei, &e) in config.epsilons.iter().enumerate() {
        let y: Vec<f64> = table[start..].iter().map(|row| (row[ei] as f64).ln()).collect();
        let (slope, intercept, residual) = fit_line(tail_t, &y)?;
        rates.push(EpsRate {
            eps: e,
            slope,
            intercept,
            residual,
        });
    }
    let last = config.epsilons.len() - 1;
    let rate = rates[last].slope;
    let slopes = rates.iter().map(|r| r.slope);
    let slope_spread = slopes.clone().fold(f64::NEG_INFINITY, f64::max) - slopes.fold(f64::INFINITY, f64::min);
    let window_slopes: Vec<f64> = config
        .horizons
        .windows(2)
        .zip(table.windows(2))
        .map(|(h, c)| ((c[1][last] as f64).ln() - (c[0][last] as f64).ln()) / (h[1] - h[0]))
        .collect();
    let wm = window_slopes.iter().sum::<f64>() / window_slopes.len() as f64;
    let window_slope_variance =
        window_slopes.iter().map(|s| (s - wm).powi(2)).sum::<f64>() / window_slopes.len() as f64;

    Ok(EstimationResult {
        method: config.method,
        counts,
        rates,
        rate,
        diagnostics: FitDiagnostics {
            tail_horizons: tail_t.to_vec(),
            slope_spread,
            window_slopes,
            window_slope_variance,
            monotone_adjustments: adjustments,
            lattices,
        },
    })
}
