//! Root and weight data of `sl(d)`.
//!
//! Simple roots are `α_i = λ_i − λ_{i+1}` for `i = 1..d−1` and fundamental
//! weights are `ω_i = λ_1 + ⋯ + λ_i`. Root indices are 1-based throughout to
//! match the usual labelling; matrix and point indices are 0-based.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::matkit::Matrix;
use crate::tol::Tolerances;

/// Element of the diagonal traceless subalgebra, stored as its diagonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CartanVector(Vec<f64>);

impl CartanVector {
    /// Validates `|Σ values| <= 1e-9`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let trace: f64 = values.iter().sum();
        let tol = Tolerances::DEFAULT.trace;
        if trace.abs() > tol || !trace.is_finite() {
            return Err(Error::TraceError { trace, tol });
        }
        Ok(CartanVector(values))
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        CartanVector(values)
    }

    pub fn zeros(d: usize) -> Self {
        CartanVector(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        CartanVector(self.0.iter().map(|v| v * s).collect())
    }

    pub fn add(&self, other: &CartanVector) -> Self {
        CartanVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn max_abs_diff(&self, other: &CartanVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Simple-root values `α_i(H)` for `i = 1..d−1`.
    pub fn gaps(&self) -> Vec<f64> {
        self.0.windows(2).map(|w| w[0] - w[1]).collect()
    }

    pub fn is_sorted_desc(&self) -> bool {
        self.0.windows(2).all(|w| w[0] >= w[1])
    }
}

/// Linear functional `ω(H) = Σ c_i H_i` on the Cartan subalgebra, stored with
/// `c_d = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    coeffs: Vec<f64>,
}

impl WeightVector {
    /// Normalizes an arbitrary coefficient representative so `c_d = 0`.
    pub fn from_coeffs(mut coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::IndexError("weight needs at least two coefficients".into()));
        }
        let last = coeffs[coeffs.len() - 1];
        coeffs.iter_mut().for_each(|c| *c -= last);
        Ok(WeightVector { coeffs })
    }

    /// `Σ m_i ω_i` from coefficients `m_1..m_{d−1}` in the fundamental-weight
    /// basis.
    pub fn from_fundamental(d: usize, m: &[f64]) -> Result<Self> {
        if m.len() + 1 != d {
            return Err(Error::DimensionMismatch {
                expected: d - 1,
                got: m.len(),
            });
        }
        let mut coeffs = vec![0.0; d];
        for i in (0..d - 1).rev() {
            coeffs[i] = coeffs[i + 1] + m[i];
        }
        Ok(WeightVector { coeffs })
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coordinates `m_i = c_i − c_{i+1}` in the fundamental-weight basis.
    pub fn fundamental_coords(&self) -> Vec<f64> {
        self.coeffs.windows(2).map(|w| w[0] - w[1]).collect()
    }

    pub fn eval(&self, h: &CartanVector) -> f64 {
        self.coeffs.iter().zip(h.values()).map(|(c, v)| c * v).sum()
    }

    /// Evaluates on a raw diagonal (e.g. the diagonal of an algebra element).
    pub fn eval_slice(&self, h: &[f64]) -> f64 {
        self.coeffs.iter().zip(h).map(|(c, v)| c * v).sum()
    }

    /// Largest flag type `Θ` with `ω ∈ span(Ω∖Ω_Θ)`: the roots whose
    /// fundamental coordinate vanishes.
    pub fn admissible_theta(&self) -> ThetaSet {
        let tol = Tolerances::DEFAULT.admissible;
        let d = self.dim();
        let coords = self.fundamental_coords();
        let idx = coords
            .iter()
            .enumerate()
            .filter(|(_, m)| m.abs() <= tol)
            .map(|(i, _)| i + 1);
        ThetaSet {
            d,
            indices: idx.collect(),
        }
    }

    /// Whether `ω ∈ span(Ω∖Ω_Θ)`.
    pub fn is_admissible(&self, theta: &ThetaSet) -> bool {
        theta.is_subset(&self.admissible_theta())
    }

    pub fn check_admissible(&self, theta: &ThetaSet) -> Result<()> {
        if theta.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: theta.dim(),
                got: self.dim(),
            });
        }
        if !self.is_admissible(theta) {
            return Err(Error::WeightNotAdmissible {
                weight: self.coeffs.clone(),
                theta: theta.indices(),
            });
        }
        Ok(())
    }
}

/// Subset of simple-root indices `{1..d−1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThetaSet {
    d: usize,
    indices: BTreeSet<usize>,
}

impl ThetaSet {
    pub fn new(d: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for i in indices {
            if i == 0 || i >= d {
                return Err(Error::IndexError(format!(
                    "root index {i} outside 1..={}",
                    d - 1
                )));
            }
            if !set.insert(i) {
                return Err(Error::IndexError(format!("duplicate root index {i}")));
            }
        }
        Ok(ThetaSet { d, indices: set })
    }

    /// `Θ = ∅`: the full flag manifold.
    pub fn empty(d: usize) -> Self {
        ThetaSet {
            d,
            indices: BTreeSet::new(),
        }
    }

    /// `Θ = Σ`: the one-point flag manifold.
    pub fn full(d: usize) -> Self {
        ThetaSet {
            d,
            indices: (1..d).collect(),
        }
    }

    /// `Σ∖{i}`: the Grassmannian of `i`-planes.
    pub fn grassmannian(d: usize, i: usize) -> Result<Self> {
        Self::new(d, (1..d).filter(|&j| j != i))
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.contains(&i)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.indices.iter().copied().collect()
    }

    pub fn is_subset(&self, other: &ThetaSet) -> bool {
        self.d == other.d && self.indices.is_subset(&other.indices)
    }

    /// Subspace dimensions of a flag of this type: `{k : k ∉ Θ}`.
    pub fn boundaries(&self) -> Vec<usize> {
        (1..self.d).filter(|k| !self.indices.contains(k)).collect()
    }

    /// Dual type under `i ↦ d − i`.
    pub fn dual(&self) -> Self {
        ThetaSet {
            d: self.d,
            indices: self.indices.iter().map(|i| self.d - i).collect(),
        }
    }

    pub fn union(&self, other: &ThetaSet) -> Self {
        ThetaSet {
            d: self.d,
            indices: self.indices.union(&other.indices).copied().collect(),
        }
    }
}

fn check_root_index(i: usize, d: usize) -> Result<()> {
    if i == 0 || i >= d {
        return Err(Error::IndexError(format!(
            "root index {i} outside 1..={}",
            d.saturating_sub(1)
        )));
    }
    Ok(())
}

/// `α_i(H) = H_i − H_{i+1}` (1-based `i`).
pub fn simple_root_value(i: usize, h: &CartanVector) -> Result<f64> {
    check_root_index(i, h.dim())?;
    Ok(h.values()[i - 1] - h.values()[i])
}

/// `ω_i = λ_1 + ⋯ + λ_i`.
pub fn fundamental_weight(d: usize, i: usize) -> Result<WeightVector> {
    check_root_index(i, d)?;
    Ok(WeightVector {
        coeffs: (0..d).map(|j| if j < i { 1.0 } else { 0.0 }).collect(),
    })
}

/// Coefficient vector of `α_i` (1-based).
pub fn simple_root_coeffs(d: usize, i: usize) -> Result<Vec<f64>> {
    check_root_index(i, d)?;
    Ok((0..d)
        .map(|j| {
            if j + 1 == i {
                1.0
            } else if j == i {
                -1.0
            } else {
                0.0
            }
        })
        .collect())
}

/// Inner product of two functionals restricted to the traceless subspace.
pub fn traceless_inner(a: &[f64], b: &[f64]) -> f64 {
    let d = a.len() as f64;
    let ma = a.iter().sum::<f64>() / d;
    let mb = b.iter().sum::<f64>() / d;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum()
}

/// Flag type read off a sorted vector: `{i : |H_i − H_{i+1}| <= eps}`.
pub fn theta_of(h: &CartanVector, eps: f64) -> Result<ThetaSet> {
    let v = h.values();
    for (i, w) in v.windows(2).enumerate() {
        let rise = w[1] - w[0];
        if rise > eps {
            return Err(Error::UnsortedInput { index: i + 1, rise });
        }
    }
    ThetaSet::new(
        h.dim(),
        v.windows(2)
            .enumerate()
            .filter(|(_, w)| (w[0] - w[1]).abs() <= eps)
            .map(|(i, _)| i + 1),
    )
}

/// Default gap tolerance: `max(1e−6 · largest simple-root gap, 1e−9)`.
pub fn default_gap_eps(h: &CartanVector) -> f64 {
    let tol = Tolerances::DEFAULT;
    let max_gap = h.gaps().iter().map(|g| g.abs()).fold(0.0, f64::max);
    (tol.gap_relative * max_gap).max(tol.gap_floor)
}

/// `{ω_i : i ∉ Θ}` in increasing `i`.
pub fn weights_outside(theta: &ThetaSet) -> Vec<WeightVector> {
    theta
        .boundaries()
        .into_iter()
        .map(|i| fundamental_weight(theta.dim(), i).expect("boundary index in range"))
        .collect()
}

/// Basis of `𝔞(Θ) = {H traceless : α(H) = 0 for α ∈ Θ}`: one vector per
/// boundary `k`, constant `1/k` on the first `k` entries and `−1/(d−k)` on
/// the rest.
pub fn a_theta_basis(theta: &ThetaSet) -> Vec<CartanVector> {
    let d = theta.dim();
    theta
        .boundaries()
        .into_iter()
        .map(|k| {
            CartanVector::from_raw(
                (0..d)
                    .map(|j| {
                        if j < k {
                            1.0 / k as f64
                        } else {
                            -1.0 / (d - k) as f64
                        }
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Basis of the subspace annihilated by `span(Ω∖Ω_Θ)`: for every root
/// `i ∈ Θ`, the coroot direction `e_i − e_{i+1}`.
pub fn annihilated_basis(theta: &ThetaSet) -> Vec<CartanVector> {
    theta
        .indices()
        .into_iter()
        .map(|i| CartanVector::from_raw(simple_root_coeffs(theta.dim(), i).unwrap()))
        .collect()
}

/// `𝔞`-component of `Z` in `𝔤 = 𝔨 ⊕ 𝔞 ⊕ 𝔫`: its diagonal.
pub fn a_projection(z: &Matrix) -> Result<CartanVector> {
    z.check_traceless()?;
    Ok(CartanVector::from_raw(
        (0..z.dim()).map(|i| z.get(i, i)).collect(),
    ))
}

/// `Ad(g) Z = g Z g^{-1}`.
pub fn ad_action(g: &Matrix, z: &Matrix) -> Result<Matrix> {
    if g.dim() != z.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: z.dim(),
        });
    }
    let inv = g.inverse()?;
    Ok(&(g * z) * &inv)
}

/// Permutation of `0..d`, `w[i]` the image of `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &v in &images {
            if v >= n {
                return Err(Error::MalformedPermutation(format!(
                    "image {v} out of range for length {n}"
                )));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::MalformedPermutation(format!("image {v} repeated")));
            }
        }
        Ok(Permutation(images))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn images(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &w) in self.0.iter().enumerate() {
            inv[w] = i;
        }
        Permutation(inv)
    }

    /// All permutations of `0..n` in lexicographic order.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..n).collect();
        loop {
            out.push(Permutation(cur.clone()));
            // next lexicographic permutation
            let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
                return out;
            };
            let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
    }
}

/// Weyl group action `(wH)_i = H_{w^{-1}(i)}`.
pub fn weyl_apply(w: &Permutation, h: &CartanVector) -> Result<CartanVector> {
    if w.len() != h.dim() {
        return Err(Error::MalformedPermutation(format!(
            "permutation of length {} applied to vector of length {}",
            w.len(),
            h.dim()
        )));
    }
    let mut out = vec![0.0; h.dim()];
    for (i, &wi) in w.images().iter().enumerate() {
        out[wi] = h.values()[i];
    }
    Ok(CartanVector::from_raw(out))
}

/// The permutation that sorts `h` into non-increasing order under
/// [`weyl_apply`].
pub fn sorting_permutation(h: &CartanVector) -> Permutation {
    let mut order: Vec<usize> = (0..h.dim()).collect();
    order.sort_by(|&a, &b| h.values()[b].total_cmp(&h.values()[a]));
    // order[rank] = source index; w maps source index to rank.
    let mut w = vec![0; h.dim()];
    for (rank, &src) in order.iter().enumerate() {
        w[src] = rank;
    }
    Permutation(w)
}
