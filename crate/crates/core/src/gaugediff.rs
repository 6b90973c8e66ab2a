//! Gauge perturbations `x ↦ exp(tY(x)) ρ(1,x)`, the derivative of the
//! spectrum functionals at `t = 0`, and finite-difference checks of it.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::basedyn::{perturb, Cocycle};
use crate::error::{Error, Result};
use crate::flagdyn::{attractor_section, repeller_section, Section, SolverOptions};
use crate::liealg::{default_gap_eps, theta_of, ThetaSet, WeightVector};
use crate::matkit::{mat_exp, qr_positive, Matrix};
use crate::spectra::{mean_spectrum, spectrum_functional};
use crate::tol::Tolerances;

/// A table `x ↦ Y(x)` of traceless matrices.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct GaugeDirection {
    table: Vec<Matrix>,
}

impl GaugeDirection {
    pub fn new(table: Vec<Matrix>) -> Result<Self> {
        let Some(first) = table.first() else {
            return Err(Error::InvalidBase("empty gauge table".into()));
        };
        let d = first.dim();
        for y in &table {
            if y.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: y.dim(),
                });
            }
            y.check_traceless()?;
        }
        Ok(GaugeDirection { table })
    }

    /// Like [`GaugeDirection::new`], additionally requiring every `Y(x)` to
    /// lie in the symplectic algebra `{X : XᵀJ + JX = 0}`.
    pub fn symplectic(table: Vec<Matrix>) -> Result<Self> {
        let dir = GaugeDirection::new(table)?;
        let d = dir.dim();
        if d % 2 != 0 {
            return Err(Error::DimensionMismatch {
                expected: d + 1,
                got: d,
            });
        }
        let j = symplectic_j(d / 2);
        for y in &dir.table {
            let defect = (&(&y.transpose() * &j) + &(&j * y)).max_abs();
            if defect > Tolerances::DEFAULT.symplectic {
                return Err(Error::NotSymplectic { defect });
            }
        }
        Ok(dir)
    }

    pub fn zeros(n_points: usize, d: usize) -> Self {
        GaugeDirection {
            table: vec![Matrix::zeros(d); n_points],
        }
    }

    pub fn constant(n_points: usize, y: Matrix) -> Result<Self> {
        GaugeDirection::new(vec![y; n_points])
    }

    /// Gaussian entries scaled by `scale`, projected to trace zero.
    pub fn random(n_points: usize, d: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = (0..n_points)
            .map(|_| {
                let mut m = DMatrix::from_fn(d, d, |_, _| { let z: f64 = StandardNormal.sample(&mut rng); scale * z });
                let shift = m.trace() / d as f64;
                for i in 0..d {
                    m[(i, i)] -= shift;
                }
                Matrix::wrap(m)
            })
            .collect();
        GaugeDirection { table }
    }

    /// Random elements `[[A, B], [C, −Aᵀ]]` of the symplectic algebra of
    /// size `2n`, with `B` and `C` symmetric.
    pub fn random_symplectic(n_points: usize, n: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = (0..n_points)
            .map(|_| {
                let mut gauss = |_: usize, _: usize| { let z: f64 = StandardNormal.sample(&mut rng); scale * z };
                let a = DMatrix::from_fn(n, n, &mut gauss);
                let b = DMatrix::from_fn(n, n, &mut gauss);
                let c = DMatrix::from_fn(n, n, &mut gauss);
                Matrix::wrap(hamiltonian_blocks(&a, &(&b + b.transpose()), &(&c + c.transpose())))
            })
            .collect();
        GaugeDirection { table }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.table[0].dim()
    }

    pub fn get(&self, x: usize) -> &Matrix {
        &self.table[x]
    }

    pub fn table(&self) -> &[Matrix] {
        &self.table
    }

    pub fn scaled(&self, s: f64) -> Self {
        GaugeDirection {
            table: self.table.iter().map(|y| y.scale(s)).collect(),
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &GaugeDirection, b: f64) -> Result<Self> {
        if self.len() != other.len() || self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.len() * self.dim(),
                got: other.len() * other.dim(),
            });
        }
        Ok(GaugeDirection {
            table: self
                .table
                .iter()
                .zip(&other.table)
                .map(|(y1, y2)| &y1.scale(a) + &y2.scale(b))
                .collect(),
        })
    }

    fn check_against(&self, c: &Cocycle) -> Result<()> {
        if self.len() != c.base().n_points() {
            return Err(Error::InvalidBase(format!(
                "gauge table has {} entries for {} points",
                self.len(),
                c.base().n_points()
            )));
        }
        if self.dim() != c.dim() {
            return Err(Error::DimensionMismatch {
                expected: c.dim(),
                got: self.dim(),
            });
        }
        Ok(())
    }
}

/// `J = [[0, I], [−I, 0]]` of size `2n`.
pub fn symplectic_j(n: usize) -> Matrix {
    let mut j = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    Matrix::wrap(j)
}

pub(crate) fn hamiltonian_blocks(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut x = DMatrix::<f64>::zeros(2 * n, 2 * n);
    x.view_mut((0, 0), (n, n)).copy_from(a);
    x.view_mut((0, n), (n, n)).copy_from(b);
    x.view_mut((n, 0), (n, n)).copy_from(c);
    x.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    x
}

/// `x ↦ exp(t Y(x))`.
pub fn gauge_exp(y: &GaugeDirection, t: f64) -> Vec<Matrix> {
    y.table.iter().map(|m| mat_exp(&m.scale(t))).collect()
}

/// `Λ_ω` of the cocycle `x ↦ exp(tY(x)) ρ(1,x)`, by the exact oracle.
pub fn perturbed_spectrum(c: &Cocycle, omega: &WeightVector, y: &GaugeDirection, t: f64) -> Result<f64> {
    y.check_against(c)?;
    spectrum_functional(&perturb(c, &gauge_exp(y, t))?, omega)
}

/// `Σ_x ν(x) ω(𝔞-part of Ad(u_x⁻¹) Y(x))`, with `u_x` the `K`-part of
/// `ρ(1,x) k_x` and `k_x` any frame of the section at `x`.
///
/// This is the Iwasawa-projection formula. It is the true differential only
/// when each attracting subspace is orthogonal to the complementary
/// repelling one (e.g. normal generators); see [`analytic_differential`].
pub fn iwasawa_over_section(c: &Cocycle, omega: &WeightVector, y: &GaugeDirection, s: &Section) -> Result<f64> {
    y.check_against(c)?;
    omega.check_admissible(&s.theta)?;
    let mut total = 0.0;
    for x in 0..c.base().n_points() {
        let moved = c.generator(x) * &s.flags[x].frame;
        let (u, _) = qr_positive(moved.as_na())?;
        // u is orthogonal, so Ad(u⁻¹)Y = uᵀ Y u, and the 𝔞-projection
        // keeps its diagonal.
        let conj = u.transpose() * y.get(x).as_na() * &u;
        total += c.base().nu(x) * omega.eval_slice(conj.diagonal().as_slice());
    }
    Ok(total)
}

/// The flag type on which the differential of `Λ_ω` is evaluated: the
/// maximal type admissible for `ω`, after checking that the estimated flag
/// type of `c` is contained in it.
pub fn differential_theta(c: &Cocycle, omega: &WeightVector) -> Result<ThetaSet> {
    if omega.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            got: omega.dim(),
        });
    }
    let admissible = omega.admissible_theta();
    let mean = mean_spectrum(c)?;
    let estimate = theta_of(&mean, default_gap_eps(&mean))?;
    if !estimate.is_subset(&admissible) {
        return Err(Error::WeightNotAdmissible {
            weight: omega.coeffs().to_vec(),
            theta: estimate.indices(),
        });
    }
    Ok(admissible)
}

/// Iwasawa-projection formula on the attractor section.
pub fn iwasawa_differential(c: &Cocycle, omega: &WeightVector, y: &GaugeDirection, opts: &SolverOptions) -> Result<f64> {
    y.check_against(c)?;
    let theta = differential_theta(c, omega)?;
    let sol = attractor_section(c, &theta, opts)?;
    iwasawa_over_section(c, omega, y, &sol.section)
}

/// `Σ_x ν(x) Σ_k m_k tr(P_k(τx) Y(x))`, where `m_k` are the fundamental
/// coordinates of `ω` and `P_k(y)` projects onto the `k`-dimensional
/// attracting subspace at `y` along the `(d−k)`-dimensional repelling one.
pub fn split_over_sections(
    c: &Cocycle,
    omega: &WeightVector,
    y: &GaugeDirection,
    attractor: &Section,
    repeller: &Section,
) -> Result<f64> {
    y.check_against(c)?;
    omega.check_admissible(&attractor.theta)?;
    if repeller.theta != attractor.theta.dual() {
        return Err(Error::TypeMismatch(format!(
            "repeller type {:?} is not dual to {:?}",
            repeller.theta.indices(),
            attractor.theta.indices()
        )));
    }
    let d = c.dim();
    let m = omega.fundamental_coords();
    let mut total = 0.0;
    for x in 0..c.base().n_points() {
        let tx = c.base().tau(x);
        let a = attractor.flags[tx].frame.as_na();
        let r = repeller.flags[tx].frame.as_na();
        let mut sum = 0.0;
        for k in attractor.theta.boundaries() {
            if m[k - 1] == 0.0 {
                continue;
            }
            let mut split = DMatrix::<f64>::zeros(d, d);
            split.columns_mut(0, k).copy_from(&a.columns(0, k));
            split.columns_mut(k, d - k).copy_from(&r.columns(0, d - k));
            let inv = split.clone().lu().try_inverse().ok_or_else(|| {
                Error::DecompositionFailure(format!("attractor and repeller are not transversal at point {tx}"))
            })?;
            // tr(P_k Y) with P_k = [A_k 0] split⁻¹
            let t = (inv.rows(0, k) * y.get(x).as_na() * a.columns(0, k)).trace();
            sum += m[k - 1] * t;
        }
        total += c.base().nu(x) * sum;
    }
    Ok(total)
}

/// `dΛ_ω(Y)` at the identity, from the attractor section of the maximal
/// `ω`-admissible type and the repeller section of the dual type.
pub fn analytic_differential(c: &Cocycle, omega: &WeightVector, y: &GaugeDirection, opts: &SolverOptions) -> Result<f64> {
    y.check_against(c)?;
    let theta = differential_theta(c, omega)?;
    let att = attractor_section(c, &theta, opts)?;
    let rep = repeller_section(c, &theta, opts)?;
    split_over_sections(c, omega, y, &att.section, &rep.section)
}

/// `Σ_x ν(x) ⟨Y(x)v, η⟩ / ⟨v, η⟩` with `v = ρ(1,x) σ̄(x)`, `σ̄` the
/// attracting line field and `η` the normal of the repelling hyperplane at
/// `τx`.
pub fn ruelle_differential(c: &Cocycle, y: &GaugeDirection, opts: &SolverOptions) -> Result<f64> {
    y.check_against(c)?;
    let d = c.dim();
    let proj = ThetaSet::grassmannian(d, 1)?;
    let att = attractor_section(c, &proj, opts)?;
    let rep = repeller_section(c, &proj, opts)?;
    let mut total = 0.0;
    for x in 0..c.base().n_points() {
        let line = att.section.flags[x].frame.as_na().column(0).into_owned();
        let v = c.generator(x).as_na() * line;
        let normal = rep.section.flags[c.base().tau(x)].frame.as_na().column(d - 1).into_owned();
        let yv = y.get(x).as_na() * &v;
        total += c.base().nu(x) * yv.dot(&normal) / v.dot(&normal);
    }
    Ok(total)
}

/// `Σ_x ν(x) ⟨Y(x)v, v⟩ / ‖v‖²`: the projective case of the Iwasawa
/// formula.
pub fn ruelle_differential_orthogonal(c: &Cocycle, y: &GaugeDirection, opts: &SolverOptions) -> Result<f64> {
    y.check_against(c)?;
    let proj = ThetaSet::grassmannian(c.dim(), 1)?;
    let sol = attractor_section(c, &proj, opts)?;
    let mut total = 0.0;
    for x in 0..c.base().n_points() {
        let line = sol.section.flags[x].frame.as_na().column(0).into_owned();
        let v = c.generator(x).as_na() * line;
        let yv = y.get(x).as_na() * &v;
        total += c.base().nu(x) * yv.dot(&v) / v.norm_squared();
    }
    Ok(total)
}

#[derive(Clone, Debug, Serialize)]
pub struct FiniteDifference {
    /// Richardson combination of the central differences at `h` and `h/2`.
    pub slope: f64,
    /// `log2` of the ratio of successive corrections (about 2 for central
    /// differences); absent when a correction vanishes.
    pub order_estimate: Option<f64>,
    /// `(step, central difference)` at `h`, `h/2`, `h/4`.
    pub levels: Vec<(f64, f64)>,
}

pub const DEFAULT_STEP: f64 = 1e-4;

pub fn finite_difference(c: &Cocycle, omega: &WeightVector, y: &GaugeDirection, h: f64) -> Result<FiniteDifference> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::IndexError(format!("finite-difference step must be positive, got {h}")));
    }
    let steps = [h, h / 2.0, h / 4.0];
    let levels = steps
        .iter()
        .map(|&s| {
            let up = perturbed_spectrum(c, omega, y, s)?;
            let down = perturbed_spectrum(c, omega, y, -s)?;
            Ok((s, (up - down) / (2.0 * s)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (d1, d2, d3) = (levels[0].1, levels[1].1, levels[2].1);
    let slope = (4.0 * d2 - d1) / 3.0;
    let (c1, c2) = (d2 - d1, d3 - d2);
    let order_estimate = if c1 != 0.0 && c2 != 0.0 && (c1 / c2) > 0.0 {
        Some((c1 / c2).log2())
    } else {
        None
    };
    Ok(FiniteDifference {
        slope,
        order_estimate,
        levels,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub t: f64,
    pub value: f64,
    /// Simple-root gaps of the perturbed mean spectrum.
    pub gaps: Vec<f64>,
}

/// `t ↦ Λ_ω(exp(tY)φ)` on a grid, with the mean-spectrum gaps at each `t`.
pub fn smoothness_scan(c: &Cocycle, omega: &WeightVector, y: &GaugeDirection, grid: &[f64]) -> Result<Vec<ScanRow>> {
    y.check_against(c)?;
    if let Some(t) = grid.iter().find(|t| !t.is_finite()) {
        return Err(Error::IndexError(format!("non-finite grid value {t}")));
    }
    grid.par_iter()
        .map(|&t| {
            let p = perturb(c, &gauge_exp(y, t))?;
            let mean = mean_spectrum(&p)?;
            Ok(ScanRow {
                t,
                value: omega.eval(&mean),
                gaps: mean.gaps(),
            })
        })
        .collect()
}
