//! Dense kernels for small real matrices.
//!
//! Iwasawa factors come from a Householder QR with the triangular factor
//! normalized to a positive diagonal; polar factors from an SVD. Long
//! products are never formed explicitly by the spectral routines: they are
//! swept factor by factor with re-orthonormalization at every step.

use nalgebra::{DMatrix, DVector, Schur, SVD};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::liealg::CartanVector;
use crate::tol::Tolerances;

/// Smallest and largest supported matrix dimension.
pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 12;

/// Square real matrix; a group element of `SL(d)` or an element of `sl(d)`
/// depending on which validating constructor produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix(DMatrix<f64>);

impl Matrix {
    /// Wraps a square nalgebra matrix with `MIN_DIM <= d <= MAX_DIM`.
    pub fn from_na(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if !(MIN_DIM..=MAX_DIM).contains(&m.nrows()) {
            return Err(Error::IndexError(format!(
                "matrix dimension {} outside {MIN_DIM}..={MAX_DIM}",
                m.nrows()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::DecompositionFailure("non-finite matrix entry".into()));
        }
        Ok(Matrix(m))
    }

    pub(crate) fn wrap(m: DMatrix<f64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Matrix(m)
    }

    /// Builds a matrix from row-major nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
        }
        Self::from_na(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    /// Group element: validates `|det - 1| <= 1e-9`.
    pub fn group(m: DMatrix<f64>) -> Result<Self> {
        let m = Self::from_na(m)?;
        m.check_unit_det()?;
        Ok(m)
    }

    /// Algebra element: validates `|trace| <= 1e-9`.
    pub fn algebra(m: DMatrix<f64>) -> Result<Self> {
        let m = Self::from_na(m)?;
        m.check_traceless()?;
        Ok(m)
    }

    pub fn identity(d: usize) -> Self {
        Matrix(DMatrix::identity(d, d))
    }

    pub fn zeros(d: usize) -> Self {
        Matrix(DMatrix::zeros(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Matrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_na(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_na(self) -> DMatrix<f64> {
        self.0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn det(&self) -> f64 {
        self.0.determinant()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn transpose(&self) -> Self {
        Matrix(self.0.transpose())
    }

    pub fn scale(&self, s: f64) -> Self {
        Matrix(&self.0 * s)
    }

    pub fn inverse(&self) -> Result<Self> {
        self.0
            .clone()
            .try_inverse()
            .map(Matrix)
            .ok_or(Error::SingularInput {
                index: 0,
                pivot: 0.0,
            })
    }

    pub fn frobenius(&self) -> f64 {
        self.0.norm()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }

    pub fn check_unit_det(&self) -> Result<()> {
        let det = self.det();
        let tol = Tolerances::DEFAULT.det;
        if (det - 1.0).abs() > tol || !det.is_finite() {
            return Err(Error::DeterminantError { det, tol });
        }
        Ok(())
    }

    pub fn check_traceless(&self) -> Result<()> {
        let trace = self.trace();
        let tol = Tolerances::DEFAULT.trace;
        if trace.abs() > tol || !trace.is_finite() {
            return Err(Error::TraceError { trace, tol });
        }
        Ok(())
    }

    /// Relative Frobenius distance `|self - other| / max(|other|, 1e-300)`.
    pub fn rel_dist(&self, other: &Matrix) -> f64 {
        (&self.0 - &other.0).norm() / other.0.norm().max(1e-300)
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        Matrix(&self.0 * &rhs.0)
    }
}

impl Mul for Matrix {
    type Output = Matrix;
    fn mul(self, rhs: Matrix) -> Matrix {
        Matrix(self.0 * rhs.0)
    }
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        Matrix(&self.0 + &rhs.0)
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        Matrix(&self.0 - &rhs.0)
    }
}

impl Neg for &Matrix {
    type Output = Matrix;
    fn neg(self) -> Matrix {
        Matrix(-&self.0)
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// `g = k · exp(a) · n` with `k` special orthogonal, `a` traceless diagonal
/// and `n` unit upper triangular.
#[derive(Clone, Debug)]
pub struct IwasawaFactors {
    pub k: Matrix,
    pub a: CartanVector,
    pub n: Matrix,
}

impl IwasawaFactors {
    pub fn recompose(&self) -> Matrix {
        let ea = Matrix::from_diagonal(&self.a.values().iter().map(|v| v.exp()).collect::<Vec<_>>());
        &(&self.k * &ea) * &self.n
    }
}

/// `g = k1 · exp(h_plus) · k2` with `h_plus` sorted non-increasing.
#[derive(Clone, Debug)]
pub struct PolarFactors {
    pub k1: Matrix,
    pub h_plus: CartanVector,
    pub k2: Matrix,
}

impl PolarFactors {
    pub fn recompose(&self) -> Matrix {
        let eh = Matrix::from_diagonal(
            &self.h_plus.values().iter().map(|v| v.exp()).collect::<Vec<_>>(),
        );
        &(&self.k1 * &eh) * &self.k2
    }
}

/// Householder QR `a = q r` with `r` normalized to a positive diagonal.
///
/// Fails with [`Error::SingularInput`] if a diagonal entry of `r` is at most
/// the pivot tolerance.
pub(crate) fn qr_positive(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = a.nrows();
    let mut r = a.clone();
    let mut q = DMatrix::<f64>::identity(d, d);
    let mut v = vec![0.0; d];
    for j in 0..d.saturating_sub(1) {
        let mut norm2 = 0.0;
        for i in j..d {
            norm2 += r[(i, j)] * r[(i, j)];
        }
        let norm = norm2.sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = r[(j, j)];
        let alpha = if x0 >= 0.0 { -norm } else { norm };
        for i in j..d {
            v[i] = r[(i, j)];
        }
        v[j] -= alpha;
        let vnorm2: f64 = (j..d).map(|i| v[i] * v[i]).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        for c in j..d {
            let s: f64 = (j..d).map(|i| v[i] * r[(i, c)]).sum();
            let s = s * beta;
            for i in j..d {
                r[(i, c)] -= s * v[i];
            }
        }
        for row in 0..d {
            let s: f64 = (j..d).map(|i| q[(row, i)] * v[i]).sum();
            let s = s * beta;
            for i in j..d {
                q[(row, i)] -= s * v[i];
            }
        }
        for i in j + 1..d {
            r[(i, j)] = 0.0;
        }
    }
    for i in 0..d {
        if r[(i, i)] < 0.0 {
            for c in 0..d {
                r[(i, c)] = -r[(i, c)];
            }
            for row in 0..d {
                q[(row, i)] = -q[(row, i)];
            }
        }
        let pivot = r[(i, i)];
        if pivot <= Tolerances::DEFAULT.pivot || !pivot.is_finite() {
            return Err(Error::SingularInput { index: i, pivot });
        }
    }
    Ok((q, r))
}

/// Iwasawa decomposition `g = k exp(a) n` of a unit-determinant matrix.
pub fn iwasawa(g: &Matrix) -> Result<IwasawaFactors> {
    let d = g.dim();
    let (q, r) = qr_positive(g.as_na())?;
    let mut logs: Vec<f64> = (0..d).map(|i| r[(i, i)].ln()).collect();
    let mean = logs.iter().sum::<f64>() / d as f64;
    logs.iter_mut().for_each(|v| *v -= mean);
    let n = DMatrix::from_fn(d, d, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Less => r[(i, j)] / r[(i, i)],
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => 0.0,
    });
    Ok(IwasawaFactors {
        k: Matrix(q),
        a: CartanVector::from_raw(logs),
        n: Matrix(n),
    })
}

/// Polar (Cartan) decomposition with the chamber component sorted.
pub fn polar_chamber(g: &Matrix) -> Result<PolarFactors> {
    let d = g.dim();
    let svd = SVD::try_new(g.as_na().clone(), true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::DecompositionFailure("SVD did not converge".into()))?;
    let u = svd
        .u
        .ok_or_else(|| Error::DecompositionFailure("missing left vectors".into()))?;
    let vt = svd
        .v_t
        .ok_or_else(|| Error::DecompositionFailure("missing right vectors".into()))?;
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let mut k1 = DMatrix::from_fn(d, d, |i, j| u[(i, order[j])]);
    let mut k2 = DMatrix::from_fn(d, d, |i, j| vt[(order[i], j)]);
    if sv.iter().any(|s| *s <= 0.0 || !s.is_finite()) {
        return Err(Error::DecompositionFailure("zero singular value".into()));
    }
    if k1.determinant() < 0.0 {
        for i in 0..d {
            k1[(i, d - 1)] = -k1[(i, d - 1)];
            k2[(d - 1, i)] = -k2[(d - 1, i)];
        }
    }
    let mut logs: Vec<f64> = order.iter().map(|&i| sv[i].ln()).collect();
    let mean = logs.iter().sum::<f64>() / d as f64;
    logs.iter_mut().for_each(|v| *v -= mean);
    Ok(PolarFactors {
        k1: Matrix(k1),
        h_plus: CartanVector::from_raw(logs),
        k2: Matrix(k2),
    })
}

/// Sorted (non-increasing) logarithms of the eigenvalue moduli of `g`,
/// read off the real Schur form.
pub fn eig_log_moduli(g: &Matrix) -> Result<Vec<f64>> {
    let schur = Schur::try_new(g.as_na().clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::DecompositionFailure("Schur iteration did not converge".into()))?;
    let mut logs: Vec<f64> = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm().ln())
        .collect();
    if logs.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularInput {
            index: 0,
            pivot: 0.0,
        });
    }
    logs.sort_by(|a, b| b.total_cmp(a));
    Ok(logs)
}

/// Budget of single-factor QR steps spent by [`product_log_moduli`].
const PERIODIC_STEP_BUDGET: usize = 40_000;
const PERIODIC_MIN_SWEEPS: usize = 60;

/// Sorted log-moduli of the eigenvalues of `factors[L-1] ··· factors[0]`,
/// computed without forming the product.
///
/// Runs cyclic orthogonal iteration: each sweep pushes an orthonormal frame
/// through every factor with a positive-diagonal QR. Once a nested frame
/// subspace is invariant under the period map, the summed log-diagonals of
/// one sweep are the log-moduli, accurate to roundoff in each factor.
/// Indices whose subspaces never settle (equal-modulus groups such as complex
/// pairs) are reported as the mean over their block, which is exact for
/// equal moduli.
pub fn product_log_moduli(factors: &[Matrix]) -> Result<Vec<f64>> {
    let Some(first) = factors.first() else {
        return Err(Error::IndexError("empty factor list".into()));
    };
    let d = first.dim();
    if let Some(bad) = factors.iter().find(|f| f.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.dim(),
        });
    }
    let max_sweeps = (PERIODIC_STEP_BUDGET / factors.len()).max(PERIODIC_MIN_SWEEPS);
    let mut q0 = DMatrix::<f64>::identity(d, d);
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut sums = vec![0.0; d];
    let mut coupling = vec![f64::INFINITY; d.saturating_sub(1)];
    for _ in 0..max_sweeps {
        let mut q = q0.clone();
        sums.iter_mut().for_each(|s| *s = 0.0);
        for f in factors {
            let (qn, r) = qr_positive(&(f.as_na() * &q))?;
            for (i, s) in sums.iter_mut().enumerate() {
                *s += r[(i, i)].ln();
            }
            q = qn;
        }
        let m = q0.transpose() * &q;
        for k in 1..d {
            coupling[k - 1] = m.view((k, 0), (d - k, k)).norm();
        }
        q0 = q;
        let worst = coupling.iter().cloned().fold(0.0, f64::max);
        if worst < 1e-12 {
            break;
        }
        if worst < 0.5 * best {
            best = worst;
            since_best = 0;
        } else {
            since_best += 1;
            if worst < 1e-10 && since_best > 20 {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(d);
    let mut start = 0;
    for k in 1..=d {
        let boundary = k == d || coupling[k - 1] < 1e-10;
        if boundary {
            let block = &sums[start..k];
            let mean = block.iter().sum::<f64>() / block.len() as f64;
            if block.len() == 1 {
                out.push(block[0]);
            } else {
                out.extend(std::iter::repeat_n(mean, block.len()));
            }
            start = k;
        }
    }
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}

/// Matrix exponential by scaling and squaring a degree-18 Taylor polynomial.
pub fn mat_exp(z: &Matrix) -> Matrix {
    let d = z.dim();
    let norm1 = (0..d)
        .map(|j| (0..d).map(|i| z.0[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if norm1 == 0.0 {
        return Matrix::identity(d);
    }
    let mut squarings = 0i32;
    while norm1 / 2f64.powi(squarings) > 0.25 {
        squarings += 1;
    }
    let a = &z.0 / 2f64.powi(squarings);
    let mut result = DMatrix::<f64>::identity(d, d);
    let mut term = DMatrix::<f64>::identity(d, d);
    for k in 1..=18 {
        term = &term * &a / k as f64;
        if term.amax() == 0.0 {
            break;
        }
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Matrix(result)
}

fn check_index_set(set: &[usize], d: usize, what: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::IndexError(format!("{what} index set is empty")));
    }
    if set.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::IndexError(format!(
            "{what} indices {set:?} not strictly increasing"
        )));
    }
    if set[set.len() - 1] >= d {
        return Err(Error::IndexError(format!(
            "{what} index {} out of range for dimension {d}",
            set[set.len() - 1]
        )));
    }
    Ok(())
}

/// Determinant of the submatrix with the given (0-based) rows and columns.
pub fn minor(g: &Matrix, rows: &[usize], cols: &[usize]) -> Result<f64> {
    check_index_set(rows, g.dim(), "row")?;
    check_index_set(cols, g.dim(), "column")?;
    if rows.len() != cols.len() {
        return Err(Error::IndexError(format!(
            "row set has {} indices but column set has {}",
            rows.len(),
            cols.len()
        )));
    }
    let k = rows.len();
    let sub = DMatrix::from_fn(k, k, |i, j| g.0[(rows[i], cols[j])]);
    Ok(sub.determinant())
}

/// All strictly increasing `k`-subsets of `0..d`, in lexicographic order.
pub fn index_subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k == 0 || k > d {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == d - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Positive definiteness of a symmetric matrix: every leading principal
/// minor must exceed the positive-minor tolerance.
pub fn is_positive_definite(m: &Matrix) -> Result<bool> {
    let d = m.dim();
    let tol = Tolerances::DEFAULT;
    let scale = m.max_abs().max(1.0);
    let asymmetry = (&m.0 - m.0.transpose()).amax();
    if asymmetry > tol.symmetry * scale {
        return Err(Error::AsymmetricInput { asymmetry });
    }
    // LDL^T without pivoting; the k-th leading minor is the product of the
    // first k pivots.
    let a = (&m.0 + m.0.transpose()) * 0.5;
    let mut l = DMatrix::<f64>::identity(d, d);
    let mut pivots = vec![0.0; d];
    let mut leading = 1.0;
    for j in 0..d {
        let mut dj = a[(j, j)];
        for k in 0..j {
            dj -= l[(j, k)] * l[(j, k)] * pivots[k];
        }
        pivots[j] = dj;
        leading *= dj;
        if !(leading > tol.positive_minor) {
            return Ok(false);
        }
        for i in j + 1..d {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)] * pivots[k];
            }
            l[(i, j)] = v / dj;
        }
    }
    Ok(true)
}

/// Largest singular value; zero for an empty block.
pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().amax()
}

pub(crate) fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.singular_values().min()
}
