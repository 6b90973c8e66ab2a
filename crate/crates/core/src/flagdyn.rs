//! Flags, the induced action of cocycles on flag bundles, and the
//! attractor/repeller section solvers.
//!
//! A flag of type `Θ` is carried by a full orthonormal frame; its subspaces
//! are the spans of the first `k` columns for every `k ∉ Θ`. Two frames
//! represent the same flag when they differ by a block-orthogonal factor on
//! the right, which only [`flag_distance`] needs to know about.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::basedyn::{cycle_decomposition, Cocycle};
use crate::error::{Error, Result};
use crate::liealg::{CartanVector, ThetaSet, WeightVector};
use crate::matkit::{product_log_moduli, qr_positive, smallest_singular_value, spectral_norm, Matrix};
use crate::tol::Tolerances;

/// Number of fresh random starts tried after the first one fails.
const RESTARTS: usize = 3;
const MIN_MAX_ITER: usize = 500;
const MAX_MAX_ITER: usize = 200_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlagPoint {
    pub theta: ThetaSet,
    pub frame: Matrix,
}

impl FlagPoint {
    /// Validates `frameᵀ frame = I` to 1e−10.
    pub fn new(theta: ThetaSet, frame: Matrix) -> Result<Self> {
        if theta.dim() != frame.dim() {
            return Err(Error::DimensionMismatch {
                expected: theta.dim(),
                got: frame.dim(),
            });
        }
        let defect = (&(&frame.transpose() * &frame) - &Matrix::identity(frame.dim())).max_abs();
        if defect > 1e-10 {
            return Err(Error::DecompositionFailure(format!(
                "frame is not orthonormal (defect {defect:e})"
            )));
        }
        Ok(FlagPoint { theta, frame })
    }

    /// The origin `b_Θ`: identity frame.
    pub fn standard(theta: ThetaSet) -> Self {
        let d = theta.dim();
        FlagPoint {
            theta,
            frame: Matrix::identity(d),
        }
    }

    /// Opposite of the origin: frame `(e_d, …, e_1)` on the dual type.
    pub fn opposite_standard(theta: &ThetaSet) -> Self {
        let d = theta.dim();
        let mut m = DMatrix::<f64>::zeros(d, d);
        for j in 0..d {
            m[(d - 1 - j, j)] = 1.0;
        }
        FlagPoint {
            theta: theta.dual(),
            frame: Matrix::wrap(m),
        }
    }

    /// Builds a flag from arbitrary independent columns: orthonormalized in
    /// order by a positive-diagonal QR.
    pub fn from_columns(theta: ThetaSet, columns: &Matrix) -> Result<Self> {
        let (q, _) = qr_positive(columns.as_na())?;
        let mut q = q;
        fix_orientation(&mut q);
        FlagPoint::new(theta, Matrix::wrap(q))
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    /// Same flag, different type (coarsening or refining the bookkeeping).
    pub fn with_theta(&self, theta: ThetaSet) -> Self {
        FlagPoint {
            theta,
            frame: self.frame.clone(),
        }
    }

    pub fn random(theta: ThetaSet, rng: &mut ChaCha8Rng) -> Self {
        let d = theta.dim();
        FlagPoint {
            theta,
            frame: random_rotation(d, rng),
        }
    }
}

/// Flips the last column if needed so the frame is special orthogonal.
fn fix_orientation(q: &mut DMatrix<f64>) {
    if q.determinant() < 0.0 {
        let d = q.nrows();
        for i in 0..d {
            q[(i, d - 1)] = -q[(i, d - 1)];
        }
    }
}

/// Haar-distributed element of `SO(d)`.
pub fn random_rotation(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    // Gaussian matrices are almost surely nonsingular.
    let (mut q, _) = qr_positive(&g).expect("gaussian matrix is nonsingular");
    fix_orientation(&mut q);
    Matrix::wrap(q)
}

/// Random element of the block-orthogonal stabilizer of the origin of type
/// `Θ`, with unit determinant.
pub fn random_stabilizer(theta: &ThetaSet, rng: &mut ChaCha8Rng) -> Matrix {
    let d = theta.dim();
    let mut cuts = vec![0];
    cuts.extend(theta.boundaries());
    cuts.push(d);
    let mut m = DMatrix::<f64>::zeros(d, d);
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let size = hi - lo;
        if size == 1 {
            m[(lo, lo)] = 1.0;
            continue;
        }
        let g = DMatrix::from_fn(size, size, |_, _| StandardNormal.sample(rng));
        let (q, _) = qr_positive(&g).expect("gaussian matrix is nonsingular");
        m.view_mut((lo, lo), (size, size)).copy_from(&q);
    }
    // Block determinants are ±1; restore det = +1.
    fix_orientation(&mut m);
    Matrix::wrap(m)
}

/// `g · ξ`: the `K`-component of the Iwasawa decomposition of `g · frame`.
pub fn act(g: &Matrix, xi: &FlagPoint) -> Result<FlagPoint> {
    if g.dim() != xi.dim() {
        return Err(Error::DimensionMismatch {
            expected: xi.dim(),
            got: g.dim(),
        });
    }
    let (q, _) = qr_positive(&(g.as_na() * xi.frame.as_na()))?;
    Ok(FlagPoint {
        theta: xi.theta.clone(),
        frame: Matrix::wrap(q),
    })
}

/// Largest chordal distance (sine of the largest principal angle) between
/// corresponding subspaces of two flags of the same type; lies in `[0, 1]`.
pub fn flag_distance(a: &FlagPoint, b: &FlagPoint) -> Result<f64> {
    if a.theta != b.theta {
        return Err(Error::TypeMismatch(format!(
            "flag types {:?} and {:?} differ",
            a.theta.indices(),
            b.theta.indices()
        )));
    }
    let d = a.dim();
    let fa = a.frame.as_na();
    let fb = b.frame.as_na();
    let mut dist: f64 = 0.0;
    for k in a.theta.boundaries() {
        let cross = fa.columns(k, d - k).transpose() * fb.columns(0, k);
        dist = dist.max(spectral_norm(&cross));
    }
    Ok(dist.min(1.0))
}

/// The `𝔞`-valued additive cocycle `𝖺(n, x, ξ)`, accumulated one step at a
/// time with re-orthonormalization.
pub fn cocycle_a(c: &Cocycle, n: usize, x: usize, xi: &FlagPoint) -> Result<CartanVector> {
    c.base().check_point(x)?;
    if xi.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            got: xi.dim(),
        });
    }
    let d = c.dim();
    let mut acc = vec![0.0; d];
    let mut frame = xi.frame.as_na().clone();
    for g in c.orbit_generators(n, x) {
        let (q, r) = qr_positive(&(g.as_na() * &frame))?;
        for (i, a) in acc.iter_mut().enumerate() {
            *a += r[(i, i)].ln();
        }
        frame = q;
    }
    Ok(CartanVector::from_raw(acc))
}

/// `ω ∘ 𝖺(n, x, ξ)` for a flag of type `Θ`; requires `ω ∈ span(Ω∖Ω_Θ)`.
pub fn cocycle_omega(
    c: &Cocycle,
    omega: &WeightVector,
    n: usize,
    x: usize,
    xi: &FlagPoint,
) -> Result<f64> {
    omega.check_admissible(&xi.theta)?;
    Ok(omega.eval(&cocycle_a(c, n, x, xi)?))
}

/// Table `x ↦ σ(x)` of flags sharing one type.
#[derive(Clone, Debug, Serialize)]
pub struct Section {
    pub theta: ThetaSet,
    pub flags: Vec<FlagPoint>,
}

impl Section {
    pub fn new(theta: ThetaSet, flags: Vec<FlagPoint>) -> Result<Self> {
        if let Some(f) = flags.iter().find(|f| f.theta != theta) {
            return Err(Error::TypeMismatch(format!(
                "section of type {:?} holds a flag of type {:?}",
                theta.indices(),
                f.theta.indices()
            )));
        }
        Ok(Section { theta, flags })
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }
}

/// `sup_x dist(σ(τx), ρ(1,x)·σ(x))`.
pub fn invariance_residual(c: &Cocycle, s: &Section) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in 0..c.base().n_points() {
        let image = act(c.generator(x), &s.flags[x])?;
        worst = worst.max(flag_distance(&s.flags[c.base().tau(x)], &image)?);
    }
    Ok(worst)
}

/// Solver settings; `max_iter = None` selects the gap-based default.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: Option<usize>,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: Tolerances::DEFAULT.section,
            max_iter: None,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SectionSolution {
    pub section: Section,
    /// Invariance residual of the returned section.
    pub residual: f64,
    /// Residual before each graph-transform sweep of the successful start.
    pub history: Vec<f64>,
    pub restarts: usize,
    pub max_iter: usize,
}

/// Smallest mean-spectrum gap `α_k` over the boundaries of `Θ`, from the
/// exact per-cycle spectra. Negative or zero when no gap exists.
pub fn min_boundary_gap(c: &Cocycle, theta: &ThetaSet) -> Result<f64> {
    let d = c.dim();
    let mut mean = vec![0.0; d];
    for cyc in cycle_decomposition(c.base()) {
        let factors = c.period_factors(cyc.points[0]);
        let logs = product_log_moduli(&factors)?;
        let w = cyc.total_weight() / cyc.len() as f64;
        for (m, v) in mean.iter_mut().zip(&logs) {
            *m += w * v;
        }
    }
    Ok(theta
        .boundaries()
        .into_iter()
        .map(|k| mean[k - 1] - mean[k])
        .fold(f64::INFINITY, f64::min))
}

/// `10·⌈ln(1/tol)/gap⌉`, at least 500 and at most 200 000 sweeps.
pub fn default_max_iter(c: &Cocycle, theta: &ThetaSet, tol: f64) -> Result<usize> {
    let gap = min_boundary_gap(c, theta)?;
    if !(gap > 0.0) || !gap.is_finite() {
        return Ok(MIN_MAX_ITER);
    }
    let est = 10.0 * ((1.0 / tol).ln() / gap).ceil();
    Ok((est.min(MAX_MAX_ITER as f64) as usize).max(MIN_MAX_ITER))
}

/// Fixed point of the graph transform `σ ↦ (x ↦ ρ(1,τ^{-1}x)·σ(τ^{-1}x))`
/// on the flag bundle of type `Θ`, started from seeded random sections.
pub fn attractor_section(c: &Cocycle, theta: &ThetaSet, opts: &SolverOptions) -> Result<SectionSolution> {
    if theta.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            got: theta.dim(),
        });
    }
    let max_iter = match opts.max_iter {
        Some(m) => m,
        None => default_max_iter(c, theta, opts.tol)?,
    };
    let n = c.base().n_points();
    let mut last = Err(Error::NoConvergence {
        max_iter,
        last_residual: f64::INFINITY,
        history: Vec::new(),
    });
    for attempt in 0..=RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(attempt as u64));
        let mut sigma: Vec<FlagPoint> = (0..n).map(|_| FlagPoint::random(theta.clone(), &mut rng)).collect();
        let mut history = Vec::new();
        let mut next = sigma.clone();
        let mut converged = None;
        for _ in 0..max_iter {
            let mut residual: f64 = 0.0;
            for x in 0..n {
                let image = act(c.generator(x), &sigma[x])?;
                let tx = c.base().tau(x);
                residual = residual.max(flag_distance(&sigma[tx], &image)?);
                next[tx] = image;
            }
            history.push(residual);
            if residual <= opts.tol {
                converged = Some(residual);
                break;
            }
            std::mem::swap(&mut sigma, &mut next);
        }
        match converged {
            Some(residual) => {
                return Ok(SectionSolution {
                    section: Section::new(theta.clone(), sigma)?,
                    residual,
                    history,
                    restarts: attempt,
                    max_iter,
                })
            }
            None => {
                last = Err(Error::NoConvergence {
                    max_iter,
                    last_residual: history.last().copied().unwrap_or(f64::INFINITY),
                    history,
                });
            }
        }
    }
    last
}

/// Attractor of the inverse cocycle over `τ^{-1}`, on the dual flag type.
pub fn repeller_section(c: &Cocycle, theta: &ThetaSet, opts: &SolverOptions) -> Result<SectionSolution> {
    let inv = c.inverse()?;
    attractor_section(&inv, &theta.dual(), opts)
}

/// Per point: whether every subspace of `s` meets the complementary-dimension
/// subspace of `s_dual` trivially.
pub fn transversality_check(s: &Section, s_dual: &Section) -> Result<Vec<bool>> {
    if s_dual.theta != s.theta.dual() {
        return Err(Error::TypeMismatch(format!(
            "dual section has type {:?}, expected {:?}",
            s_dual.theta.indices(),
            s.theta.dual().indices()
        )));
    }
    if s.len() != s_dual.len() {
        return Err(Error::TypeMismatch(format!(
            "sections over {} and {} points",
            s.len(),
            s_dual.len()
        )));
    }
    let tol = Tolerances::DEFAULT.transversality;
    let d = s.theta.dim();
    s.flags
        .iter()
        .zip(&s_dual.flags)
        .map(|(a, b)| {
            let ok = s.theta.boundaries().into_iter().all(|k| {
                let mut stacked = DMatrix::<f64>::zeros(d, d);
                stacked.columns_mut(0, k).copy_from(&a.frame.as_na().columns(0, k));
                stacked
                    .columns_mut(k, d - k)
                    .copy_from(&b.frame.as_na().columns(0, d - k));
                smallest_singular_value(&stacked) > tol
            });
            Ok(ok)
        })
        .collect()
}

/// Least-squares contraction factor per sweep fitted to the part of a
/// residual history between `floor` and 0.1; `None` with fewer than three
/// points in range.
pub fn contraction_rate(history: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = history
        .iter()
        .enumerate()
        .filter(|(_, r)| **r <= 0.1 && **r > floor)
        .map(|(i, r)| (i as f64, r.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some((sxy / sxx).exp())
}
