//! Lie-algebraic structure of a finite set of mode matrices.
//!
//! The generated Lie algebra decides which entropy bounds apply: commuting
//! diagonalizable families admit a common eigenbasis, solvable families a
//! common triangularizing basis, and anything else gets no structural bound.
//! All eigenvector work happens over the complex field.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};

pub const DEFAULT_TOL_RANK: f64 = 1e-9;
pub const DEFAULT_TOL_CLASSIFY: f64 = 1e-8;

/// Residual allowed for transformed modes, relative to the largest mode norm.
pub const RESIDUAL_TOL: f64 = 1e-8;
const MAX_EIGVEC_CONDITION: f64 = 1e8;

/// The mode matrices `A_1, ..., A_k` of a switched system.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSet {
    matrices: Vec<DMatrix<f64>>,
    n: usize,
}

impl ModeSet {
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::Dimension("mode set is empty".into()))?;
        let n = first.nrows();
        if n == 0 {
            return Err(Error::Dimension("modes[0]: zero-dimensional matrix".into()));
        }
        for (i, m) in matrices.iter().enumerate() {
            if m.nrows() != m.ncols() {
                return Err(Error::Dimension(format!(
                    "modes[{i}]: matrix is {}x{}, not square",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.nrows() != n {
                return Err(Error::Dimension(format!(
                    "modes[{i}]: dimension {} differs from {n}",
                    m.nrows()
                )));
            }
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::Dimension(format!("modes[{i}]: non-finite entry")));
            }
        }
        Ok(ModeSet { matrices, n })
    }

    /// Convenience constructor from row-major nested slices.
    pub fn from_rows(rows: &[Vec<Vec<f64>>]) -> Result<Self> {
        let mut mats = Vec::with_capacity(rows.len());
        for (i, m) in rows.iter().enumerate() {
            let r = m.len();
            let c = m.first().map_or(0, Vec::len);
            if m.iter().any(|row| row.len() != c) {
                return Err(Error::Dimension(format!("modes[{i}]: ragged rows")));
            }
            mats.push(DMatrix::from_row_iterator(r, c, m.iter().flatten().copied()));
        }
        Self::new(mats)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn get(&self, i: usize) -> &DMatrix<f64> {
        &self.matrices[i]
    }

    /// Largest Frobenius norm among the modes.
    pub fn scale(&self) -> f64 {
        self.matrices.iter().map(linalg::frobenius).fold(0.0, f64::max)
    }

    /// Same family with every matrix multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        ModeSet {
            matrices: self.matrices.iter().map(|m| m * c).collect(),
            n: self.n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    CommutingDiagonalizable,
    Solvable,
    Unstructured,
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::CommutingDiagonalizable => "commuting_diagonalizable",
            Classification::Solvable => "solvable",
            Classification::Unstructured => "unstructured",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructureOptions {
    pub tol_rank: f64,
    pub tol_classify: f64,
}

impl Default for StructureOptions {
    fn default() -> Self {
        StructureOptions {
            tol_rank: DEFAULT_TOL_RANK,
            tol_classify: DEFAULT_TOL_CLASSIFY,
        }
    }
}

/// Outcome of [`classify`]. `transform` maps each mode to
/// `transform * A_i * transform^-1 = transformed_modes[i]`.
#[derive(Clone, Debug, Serialize)]
pub struct StructureReport {
    pub classification: Classification,
    pub closure_dim: usize,
    pub derived_depth: Option<usize>,
    #[serde(serialize_with = "ser_cmatrix")]
    pub transform: CMatrix,
    #[serde(serialize_with = "ser_cmatrices")]
    pub transformed_modes: Vec<CMatrix>,
    /// Largest entry outside the target pattern (strictly lower part for
    /// triangular, off-diagonal for diagonal) after the transform.
    pub residual: f64,
    pub diagnostics: Vec<String>,
}

impl StructureReport {
    /// Real parts of the diagonal of transformed mode `j`, in coordinate order.
    pub fn diagonal_rates(&self, j: usize) -> Vec<f64> {
        let m = &self.transformed_modes[j];
        (0..m.nrows()).map(|i| m[(i, i)].re).collect()
    }

    /// Whether every transformed mode is diagonal within the residual budget.
    pub fn is_diagonal(&self, scale: f64) -> bool {
        let limit = RESIDUAL_TOL * scale.max(1.0);
        self.transformed_modes.iter().all(|m| off_diagonal(m) <= limit)
    }
}

fn cmatrix_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn ser_cmatrix<S: Serializer>(m: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    cmatrix_rows(m).serialize(s)
}

fn ser_cmatrices<S: Serializer>(ms: &[CMatrix], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(ms.len()))?;
    for m in ms {
        seq.serialize_element(&cmatrix_rows(m))?;
    }
    seq.end()
}

/// Matrix commutator `AB - BA`.
pub fn bracket(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "bracket of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a * b - b * a)
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Adds `m` to the orthonormal (Frobenius) basis if its residual after
/// projection exceeds `tol`. Returns whether it was added.
fn push_independent(basis: &mut Vec<DMatrix<f64>>, m: &DMatrix<f64>, tol: f64) -> bool {
    let mut r = m.clone();
    for _ in 0..2 {
        for b in basis.iter() {
            let c = inner(b, &r);
            r -= b * c;
        }
    }
    let norm = linalg::frobenius(&r);
    if norm > tol {
        basis.push(r / norm);
        true
    } else {
        false
    }
}

/// Orthonormal basis of `span(mats)` with an absolute rank threshold.
fn orthonormalize(mats: &[DMatrix<f64>], tol: f64) -> Vec<DMatrix<f64>> {
    let mut basis = Vec::new();
    for m in mats {
        push_independent(&mut basis, m, tol);
    }
    basis
}

/// Generators rescaled to unit norm; zero matrices are dropped.
fn normalized(mats: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    mats.iter()
        .filter_map(|m| {
            let norm = linalg::frobenius(m);
            (norm > 0.0).then(|| m / norm)
        })
        .collect()
}

/// Orthonormal basis of the smallest bracket-closed subspace containing the
/// modes, with matrices viewed as vectors under the Frobenius inner product.
pub fn lie_closure(modes: &ModeSet, tol: f64) -> Vec<DMatrix<f64>> {
    let n = modes.n();
    let mut basis = orthonormalize(&normalized(modes.matrices()), tol);
    let mut next = 0;
    // Every new element is bracketed with everything before it; earlier pairs
    // were handled when the later element arrived.
    while next < basis.len() && basis.len() < n * n {
        let x = basis[next].clone();
        for i in 0..next {
            let c = bracket(&basis[i], &x).expect("same shape");
            push_independent(&mut basis, &c, tol);
            if basis.len() == n * n {
                break;
            }
        }
        next += 1;
    }
    basis
}

/// Number of derived-algebra steps until the zero subspace, or `None` when
/// the series stalls at a nonzero subspace (the algebra is not solvable).
pub fn derived_series_depth(basis: &[DMatrix<f64>], tol: f64) -> Option<usize> {
    let mut current = orthonormalize(&normalized(basis), tol);
    let mut depth = 0;
    loop {
        if current.is_empty() {
            return Some(depth);
        }
        let mut brackets = Vec::new();
        for i in 0..current.len() {
            for j in 0..i {
                brackets.push(bracket(&current[j], &current[i]).expect("same shape"));
            }
        }
        let next = orthonormalize(&brackets, tol);
        depth += 1;
        if next.len() >= current.len() {
            return None;
        }
        current = next;
    }
}

fn strictly_lower(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..i {
            worst = worst.max(m[(i, j)].norm());
        }
    }
    worst
}

fn off_diagonal(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                worst = worst.max(m[(i, j)].norm());
            }
        }
    }
    worst
}

fn cnorm_scale(m: &CMatrix) -> f64 {
    linalg::cfrobenius(m).max(1.0)
}

/// Groups eigenvalues that agree to within `radius`, in descending real part.
fn cluster_eigenvalues(mut ev: Vec<Complex64>, radius: f64) -> Vec<(Complex64, usize, f64)> {
    ev.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .expect("finite")
            .then(b.im.partial_cmp(&a.im).expect("finite"))
    });
    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for z in ev {
        match clusters.iter_mut().find(|c| c.iter().any(|w| (w - z).norm() <= radius)) {
            Some(c) => c.push(z),
            None => clusters.push(vec![z]),
        }
    }
    clusters
        .into_iter()
        .map(|c| {
            let center = c.iter().sum::<Complex64>() / c.len() as f64;
            let spread = c.iter().map(|z| (z - center).norm()).fold(0.0, f64::max);
            (center, c.len(), spread)
        })
        .collect()
}

/// Eigenspace decomposition of a diagonalizable matrix: one orthonormal
/// basis per eigenvalue cluster. `None` if some cluster is defective.
fn eigenspaces(a: &CMatrix, tol: f64) -> Result<Option<Vec<(Complex64, CMatrix)>>> {
    let n = a.nrows();
    let scale = cnorm_scale(a);
    let ev = linalg::ceigenvalues(a)?;
    let clusters = cluster_eigenvalues(ev, 1e-6 * scale);
    let mut out = Vec::with_capacity(clusters.len());
    for (center, mult, spread) in clusters {
        let shifted = a - CMatrix::identity(n, n) * center;
        let (basis, _) = linalg::null_space(&shifted, tol * scale + 10.0 * spread);
        if basis.ncols() != mult {
            return Ok(None);
        }
        out.push((center, basis));
    }
    Ok(Some(out))
}

/// Diagonalizability test: eigenvector residual and conditioning.
pub fn is_diagonalizable(a: &DMatrix<f64>, tol: f64) -> Result<bool> {
    let ca = linalg::to_complex(a);
    let Some(spaces) = eigenspaces(&ca, tol)? else {
        return Ok(false);
    };
    let cols: Vec<CVector> = spaces
        .iter()
        .flat_map(|(_, b)| b.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
        .collect();
    let v = CMatrix::from_columns(&cols);
    let lambda: Vec<Complex64> = spaces
        .iter()
        .flat_map(|(c, b)| std::iter::repeat_n(*c, b.ncols()))
        .collect();
    let av = &ca * &v;
    let mut vl = v.clone();
    for (j, l) in lambda.iter().enumerate() {
        let mut col = vl.column_mut(j);
        col *= *l;
    }
    let resid = linalg::cfrobenius(&(av - vl));
    let scale = cnorm_scale(&ca);
    Ok(resid <= tol.max(1e-12) * scale * 1e3 && linalg::condition(&v) <= MAX_EIGVEC_CONDITION)
}

/// A common eigenbasis for a commuting diagonalizable family: columns of the
/// returned matrix are joint eigenvectors, grouped by joint eigenvalue.
fn simultaneous_diagonalizer(modes: &[CMatrix], tol: f64) -> Result<Option<CMatrix>> {
    let n = modes[0].nrows();
    let mut spaces = vec![CMatrix::identity(n, n)];
    for a in modes {
        let mut refined = Vec::new();
        for w in &spaces {
            let restricted = w.adjoint() * a * w;
            let Some(parts) = eigenspaces(&restricted, tol)? else {
                return Ok(None);
            };
            for (_, basis) in parts {
                refined.push(w * basis);
            }
        }
        spaces = refined;
    }
    let cols: Vec<CVector> = spaces
        .iter()
        .flat_map(|b| b.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
        .collect();
    if cols.len() != n {
        return Ok(None);
    }
    Ok(Some(CMatrix::from_columns(&cols)))
}

/// Depth-first search for a joint eigenvector of `blocks`. `w` is an
/// orthonormal basis of the subspace still in play.
fn common_eigenvector(blocks: &[CMatrix], j: usize, w: CMatrix, tol: f64) -> Option<CVector> {
    if j == blocks.len() {
        return Some(w.column(0).into_owned());
    }
    let b = &blocks[j];
    let m = b.nrows();
    let scale = cnorm_scale(b);
    let threshold = tol * scale;
    let ev = linalg::ceigenvalues(b).ok()?;
    let clusters = cluster_eigenvalues(ev, 1e-6 * scale);

    let mut candidates: Vec<(f64, CMatrix)> = Vec::new();
    for (mu, _, _) in clusters {
        let shifted = b - CMatrix::identity(m, m) * mu;
        let restricted = &shifted * &w;
        // One Rayleigh-quotient refinement of the shift within span(w).
        let svd = restricted.clone().svd(false, true);
        let v_t = svd.v_t.expect("requested V^H");
        let smallest = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
            .map(|(i, _)| i)?;
        let coeff: CVector = v_t.row(smallest).adjoint();
        let x = &w * coeff;
        let mu_ref = x.dotc(&(b * &x)) / x.dotc(&x);
        let shifted = b - CMatrix::identity(m, m) * mu_ref;
        let (ns, sv) = linalg::null_space(&(&shifted * &w), threshold);
        if ns.ncols() > 0 {
            let quality = sv.iter().copied().filter(|&s| s <= threshold).fold(0.0, f64::max);
            candidates.push((quality, &w * ns));
        }
    }
    if j > 0 {
        // Later modes: cleanest intersection first.
        candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    }
    for (_, sub) in candidates {
        if let Some(v) = common_eigenvector(blocks, j + 1, sub, tol) {
            return Some(v);
        }
    }
    None
}

/// Unitary `U` with `U^H A_i U` upper triangular for every mode, found by
/// repeated common-eigenvector deflation.
fn triangularize(modes: &[CMatrix], tol: f64) -> Result<CMatrix> {
    let n = modes[0].nrows();
    let mut u = CMatrix::identity(n, n);
    let mut blocks: Vec<CMatrix> = modes.to_vec();
    for step in 0..n.saturating_sub(1) {
        let m = n - step;
        let v =
            common_eigenvector(&blocks, 0, CMatrix::identity(m, m), tol).ok_or(Error::NoCommonEigenvector { tol })?;
        let q = linalg::unitary_completion(&v);
        if q.ncols() != m {
            return Err(Error::IllConditioned(
                "could not complete common eigenvector to a unitary basis".into(),
            ));
        }
        blocks = blocks
            .iter()
            .map(|b| {
                let t = q.adjoint() * b * &q;
                t.view((1, 1), (m - 1, m - 1)).into_owned()
            })
            .collect();
        let mut embed = CMatrix::identity(n, n);
        embed.view_mut((step, step), (m, m)).copy_from(&q);
        u *= embed;
    }
    Ok(u)
}

/// Simultaneous triangularizing transform `P` (unitary), so that
/// `P A_i P^H` is upper triangular for every mode. Retries once with a
/// tolerance ten times looser before giving up.
pub fn simultaneous_triangularizer(modes: &ModeSet, tol: f64) -> Result<CMatrix> {
    let cm: Vec<CMatrix> = modes.matrices().iter().map(linalg::to_complex).collect();
    let scale = modes.scale().max(1.0);
    let mut last_err = Error::NoCommonEigenvector { tol };
    for attempt_tol in [tol, tol * 10.0] {
        match triangularize(&cm, attempt_tol) {
            Ok(u) => {
                let p = u.adjoint();
                let resid = cm.iter().map(|a| strictly_lower(&(&p * a * &u))).fold(0.0, f64::max);
                if resid <= RESIDUAL_TOL * scale {
                    return Ok(p);
                }
                last_err = Error::IllConditioned(format!(
                    "triangularized residual {resid:e} exceeds {:e}",
                    RESIDUAL_TOL * scale
                ));
            }
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

fn commuting(modes: &ModeSet, tol: f64) -> bool {
    let scale = modes.scale().max(f64::MIN_POSITIVE);
    let m = modes.matrices();
    for i in 0..m.len() {
        for j in 0..i {
            let c = bracket(&m[i], &m[j]).expect("validated");
            if linalg::frobenius(&c) > tol * scale * scale {
                return false;
            }
        }
    }
    true
}

/// Classifies the Lie structure of the modes and produces the transform the
/// structural bounds need. Numerical failures degrade to `Unstructured` with
/// a diagnostic rather than an error.
pub fn classify(modes: &ModeSet, opts: StructureOptions) -> StructureReport {
    let closure = lie_closure(modes, opts.tol_rank);
    let depth = derived_series_depth(&closure, opts.tol_rank);
    let scale = modes.scale().max(1.0);
    let cm: Vec<CMatrix> = modes.matrices().iter().map(linalg::to_complex).collect();
    let mut diagnostics = Vec::new();

    let report =
        |classification, transform: CMatrix, inverse: CMatrix, diagnostics, residual_fn: fn(&CMatrix) -> f64| {
            let transformed: Vec<CMatrix> = cm.iter().map(|a| &transform * a * &inverse).collect();
            let residual = transformed.iter().map(residual_fn).fold(0.0, f64::max);
            StructureReport {
                classification,
                closure_dim: closure.len(),
                derived_depth: depth,
                transform,
                transformed_modes: transformed,
                residual,
                diagnostics,
            }
        };

    let commutes = commuting(modes, opts.tol_classify);
    if commutes {
        let mut all_diag = true;
        for (i, a) in modes.matrices().iter().enumerate() {
            match is_diagonalizable(a, opts.tol_classify) {
                Ok(true) => {}
                Ok(false) => {
                    all_diag = false;
                    diagnostics.push(format!("mode {} is not diagonalizable", i + 1));
                }
                Err(e) => {
                    all_diag = false;
                    diagnostics.push(format!("mode {}: {e}", i + 1));
                }
            }
        }
        if all_diag {
            match simultaneous_diagonalizer(&cm, opts.tol_rank) {
                Ok(Some(v)) if linalg::condition(&v) <= MAX_EIGVEC_CONDITION => {
                    if let Some(inv) = v.clone().try_inverse() {
                        let r = report(
                            Classification::CommutingDiagonalizable,
                            inv,
                            v,
                            diagnostics.clone(),
                            off_diagonal,
                        );
                        if r.residual <= RESIDUAL_TOL * scale {
                            return r;
                        }
                        diagnostics.push(format!(
                            "simultaneous diagonalization residual {:e} too large",
                            r.residual
                        ));
                    }
                }
                Ok(_) => diagnostics.push("no well-conditioned common eigenbasis".into()),
                Err(e) => diagnostics.push(format!("common eigenbasis: {e}")),
            }
        }
    }

    if commutes || depth.is_some() {
        match simultaneous_triangularizer(modes, opts.tol_rank) {
            Ok(p) => {
                let inv = p.adjoint();
                return report(Classification::Solvable, p, inv, diagnostics, strictly_lower);
            }
            Err(e) => diagnostics.push(format!("triangularization failed: {e}")),
        }
    }

    let n = modes.n();
    report(
        Classification::Unstructured,
        CMatrix::identity(n, n),
        CMatrix::identity(n, n),
        diagnostics,
        strictly_lower,
    )
}
