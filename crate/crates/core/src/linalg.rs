//! Dense linear-algebra helpers shared by the flow, structure and bound code.
//!
//! Real matrices are `DMatrix<f64>`; anything touching eigenvectors is done
//! over the complex field with `CMatrix`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;

// Padé(13,13) numerator coefficients for exp.
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

pub fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn norm_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if n == 1 {
        return DMatrix::from_element(1, 1, a[(0, 0)].exp());
    }

    let norm = norm1(a);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-squarings);

    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let u_inner = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u_tail = &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = &scaled * (&a6 * u_inner + u_tail);

    let v_inner = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v_tail = &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    let v = &a6 * v_inner + v_tail;

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular for scaled inputs");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

pub fn to_complex(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cfrobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigenvalues of a complex square matrix via the complex Schur form.
pub fn ceigenvalues(a: &CMatrix) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entry".into()));
    }
    let schur = a
        .clone()
        .try_schur(SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    ceigenvalues(&to_complex(a))
}

/// Orthonormal basis for the numerical null space of `m`: right singular
/// vectors whose singular value is at most `threshold`. Also returns the
/// largest singular value not counted in the null space (the gap witness).
pub fn null_space(m: &CMatrix, threshold: f64) -> (CMatrix, Vec<f64>) {
    let cols = m.ncols();
    if cols == 0 {
        return (CMatrix::zeros(m.nrows(), 0), Vec::new());
    }
    // Pad to at least as many rows as columns so the SVD yields a full V.
    let padded;
    let work = if m.nrows() < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        padded = p;
        &padded
    } else {
        m
    };
    let svd = work.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^H");
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let idx: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= threshold).collect();
    let mut basis = CMatrix::zeros(cols, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        for r in 0..cols {
            basis[(r, c)] = v_t[(i, r)].conj();
        }
    }
    (basis, sv)
}

/// Extends a unit vector to a unitary matrix whose first column is `v`.
pub fn unitary_completion(v: &CVector) -> CMatrix {
    let n = v.len();
    let mut cols: Vec<CVector> = vec![v.normalize()];
    for e in 0..n {
        if cols.len() == n {
            break;
        }
        let mut w = CVector::zeros(n);
        w[e] = Complex64::new(1.0, 0.0);
        // Two passes of classical Gram-Schmidt keep orthogonality at machine level.
        for _ in 0..2 {
            for c in &cols {
                let proj = c.dotc(&w);
                w -= c * proj;
            }
        }
        let nw = w.norm();
        if nw > 1e-6 {
            cols.push(w / Complex64::new(nw, 0.0));
        }
    }
    CMatrix::from_columns(&cols)
}

/// 2-norm condition number of a complex matrix.
pub fn condition(a: &CMatrix) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
