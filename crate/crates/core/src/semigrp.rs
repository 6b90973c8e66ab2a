//! Semigroups with nonempty interior, membership tests for their interiors,
//! samplers, and checks of the spectral gaps their flag types predict.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basedyn::{BaseSystem, Cocycle};
use crate::error::{Error, Result};
use crate::flagdyn::SolverOptions;
use crate::gaugediff::{analytic_differential, finite_difference, hamiltonian_blocks, symplectic_j, GaugeDirection, DEFAULT_STEP};
use crate::liealg::{default_gap_eps, fundamental_weight, theta_of, ThetaSet};
use crate::matkit::{index_subsets, is_positive_definite, mat_exp, minor, Matrix};
use crate::spectra::{cycle_spectra, mean_spectrum};
use crate::tol::Tolerances;

const MAX_REJECTIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum SemigroupSpec {
    /// Matrices with strictly positive entries (the cone of the positive
    /// orthant).
    ConePositive { d: usize },
    /// Totally positive matrices: every minor is positive.
    TotallyPositive { d: usize },
    /// Minors of the listed orders are positive.
    MinorPositive { d: usize, orders: Vec<usize> },
    /// Symplectic matrices of size `2n` strictly increasing the form
    /// `Q(v) = vᵀ M v`, `M = [[0, I], [I, 0]]`.
    SymplecticQ { n: usize },
}

impl SemigroupSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !(2..=12).contains(&d) {
            return Err(Error::DimensionMismatch { expected: 2, got: d });
        }
        if let SemigroupSpec::MinorPositive { orders, .. } = self {
            if orders.is_empty() {
                return Err(Error::IndexError("empty set of minor orders".into()));
            }
            for w in orders.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::IndexError(format!("minor orders {orders:?} not strictly increasing")));
                }
            }
            if orders[0] < 1 || *orders.last().unwrap() >= d {
                return Err(Error::IndexError(format!("minor orders {orders:?} outside 1..{}", d - 1)));
            }
        }
        Ok(())
    }

    /// Ambient matrix size.
    pub fn dim(&self) -> usize {
        match self {
            SemigroupSpec::ConePositive { d }
            | SemigroupSpec::TotallyPositive { d }
            | SemigroupSpec::MinorPositive { d, .. } => *d,
            SemigroupSpec::SymplecticQ { n } => 2 * n,
        }
    }

    pub fn name(&self) -> String {
        match self {
            SemigroupSpec::ConePositive { d } => format!("cone-positive(d={d})"),
            SemigroupSpec::TotallyPositive { d } => format!("totally-positive(d={d})"),
            SemigroupSpec::MinorPositive { d, orders } => format!("minor-positive(d={d}, k={orders:?})"),
            SemigroupSpec::SymplecticQ { n } => format!("symplectic-q(n={n})"),
        }
    }
}

/// `M = [[0, I], [I, 0]]` of size `2n`.
pub fn form_m(n: usize) -> Matrix {
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, n + i)] = 1.0;
        m[(n + i, i)] = 1.0;
    }
    Matrix::from_na(m).expect("valid size")
}

/// `max |gᵀJg − J|`.
pub fn symplectic_defect(g: &Matrix) -> f64 {
    let j = symplectic_j(g.dim() / 2);
    (&(&(&g.transpose() * &j) * g) - &j).max_abs()
}

fn minors_positive(g: &Matrix, orders: impl IntoIterator<Item = usize>) -> Result<bool> {
    let d = g.dim();
    let floor = Tolerances::DEFAULT.positive_minor;
    for k in orders {
        let sets = index_subsets(d, k);
        for rows in &sets {
            for cols in &sets {
                if minor(g, rows, cols)? <= floor {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Whether `g` lies in the interior of the semigroup (strictness proxied by
/// the 1e−12 threshold).
pub fn interior_membership(spec: &SemigroupSpec, g: &Matrix) -> Result<bool> {
    spec.validate()?;
    if g.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: g.dim(),
        });
    }
    g.check_unit_det()?;
    let floor = Tolerances::DEFAULT.membership;
    match spec {
        SemigroupSpec::ConePositive { .. } => Ok(g.as_na().iter().all(|&v| v > floor)),
        SemigroupSpec::TotallyPositive { d } => minors_positive(g, 1..=*d),
        SemigroupSpec::MinorPositive { orders, .. } => minors_positive(g, orders.iter().copied()),
        SemigroupSpec::SymplecticQ { n } => {
            let defect = symplectic_defect(g);
            if defect > Tolerances::DEFAULT.symplectic {
                return Err(Error::NotSymplectic { defect });
            }
            let m = form_m(*n);
            let diff = &(&(&g.transpose() * &m) * g) - &m;
            // symmetrize away roundoff before the definiteness test
            let sym = Matrix::from_na((diff.as_na() + diff.as_na().transpose()) * 0.5)?;
            is_positive_definite(&sym)
        }
    }
}

/// Strict sign regularity: for each order `k` all `k×k` minors are nonzero
/// and share one sign.
pub fn is_strictly_sign_regular(g: &Matrix) -> Result<bool> {
    let d = g.dim();
    let floor = Tolerances::DEFAULT.positive_minor;
    for k in 1..=d {
        let sets = index_subsets(d, k);
        let mut sign = 0.0;
        for rows in &sets {
            for cols in &sets {
                let v = minor(g, rows, cols)?;
                if v.abs() <= floor {
                    return Ok(false);
                }
                if sign == 0.0 {
                    sign = v.signum();
                } else if v.signum() != sign {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Flag type of the semigroup, in `SL` root coordinates.
pub fn predicted_theta(spec: &SemigroupSpec) -> ThetaSet {
    let d = spec.dim();
    let all: Vec<usize> = (1..d).collect();
    let without = |gone: &[usize]| {
        ThetaSet::new(d, all.iter().copied().filter(|i| !gone.contains(i))).expect("indices in range")
    };
    match spec {
        SemigroupSpec::ConePositive { .. } => without(&[1]),
        SemigroupSpec::TotallyPositive { .. } => ThetaSet::empty(d),
        SemigroupSpec::MinorPositive { orders, .. } => without(orders),
        SemigroupSpec::SymplecticQ { n } => without(&[*n]),
    }
}

fn elementary(d: usize, i: usize, upper: bool, t: f64) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::identity(d, d);
    if upper {
        m[(i, i + 1)] = t;
    } else {
        m[(i + 1, i)] = t;
    }
    m
}

/// Product of bidiagonal factors along a reduced word of the longest Weyl
/// element, on both sides of a positive unit-determinant diagonal, padded
/// with extra factors to `d²` factors in total.
fn totally_positive_candidate(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut word = Vec::new();
    for k in 1..d {
        for i in (0..k).rev() {
            word.push(i);
        }
    }
    let mut g = DMatrix::<f64>::identity(d, d);
    for &i in &word {
        g *= elementary(d, i, false, rng.random_range(0.3..1.5));
    }
    let logs: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mean = logs.iter().sum::<f64>() / d as f64;
    g *= DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(d, logs.iter().map(|l| (l - mean).exp())));
    for &i in word.iter().rev() {
        g *= elementary(d, i, true, rng.random_range(0.3..1.5));
    }
    let used = 2 * word.len() + 1;
    for _ in used..d * d {
        let i = rng.random_range(0..d - 1);
        let upper = rng.random_bool(0.5);
        g *= elementary(d, i, upper, rng.random_range(0.1..0.5));
    }
    g
}

fn positive_definite_sample(n: usize, rng: &mut ChaCha8Rng, scale: f64) -> DMatrix<f64> {
    let r = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (r.transpose() * r + DMatrix::identity(n, n) * 0.2) * scale
}

fn candidate(spec: &SemigroupSpec, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    match spec {
        SemigroupSpec::ConePositive { d } => {
            let d = *d;
            let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(0.05..1.0));
            let det = m.determinant();
            if det <= 1e-3 {
                return Err(Error::SingularInput { index: 0, pivot: det });
            }
            Matrix::from_na(m / det.powf(1.0 / d as f64))
        }
        SemigroupSpec::TotallyPositive { d } | SemigroupSpec::MinorPositive { d, .. } => {
            Matrix::from_na(totally_positive_candidate(*d, rng))
        }
        SemigroupSpec::SymplecticQ { n } => {
            let n = *n;
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.2..0.2));
            let b = positive_definite_sample(n, rng, 0.4);
            let c = positive_definite_sample(n, rng, 0.4);
            Ok(mat_exp(&Matrix::from_na(hamiltonian_blocks(&a, &b, &c))?))
        }
    }
}

/// Seeded element of the interior, verified by [`interior_membership`].
pub fn sample_interior(spec: &SemigroupSpec, seed: u64) -> Result<Matrix> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(spec, &mut rng)
}

fn sample_with(spec: &SemigroupSpec, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    for _ in 0..MAX_REJECTIONS {
        let Ok(g) = candidate(spec, rng) else { continue };
        if let Ok(true) = interior_membership(spec, &g) {
            return Ok(g);
        }
    }
    Err(Error::SamplerExhausted {
        attempts: MAX_REJECTIONS,
    })
}

/// Cocycle over `base` whose generators are independent interior samples.
pub fn sample_cocycle(spec: &SemigroupSpec, base: BaseSystem, seed: u64) -> Result<Cocycle> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gens = (0..base.n_points())
        .map(|_| sample_with(spec, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Cocycle::new(base, gens)
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyOptions {
    /// Required lower bound on every predicted gap.
    pub gap_floor: f64,
    /// Tolerance on `H_i + H_{d+1−i}` for symplectic cocycles.
    pub pairing_tol: f64,
    /// Random gauge directions per weight in the differentiability check;
    /// zero skips it.
    pub directions: usize,
    pub step: f64,
    /// Bound on `|analytic − finite difference| / (1 + |analytic|)`.
    pub derivative_tol: f64,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            gap_floor: 1e-8,
            pairing_tol: 1e-8,
            directions: 10,
            step: DEFAULT_STEP,
            derivative_tol: 1e-5,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RootGap {
    pub root: usize,
    pub min_gap: f64,
    pub at_point: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DerivativeCheck {
    /// Index `i` of the fundamental weight `ω_i`.
    pub weight: usize,
    pub directions: usize,
    pub max_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub spec: SemigroupSpec,
    pub predicted_theta: ThetaSet,
    pub estimated_theta: ThetaSet,
    pub contained: bool,
    /// Simple-root gaps of `H⁺(x)`, one row per point.
    pub per_point_gaps: Vec<Vec<f64>>,
    pub predicted_gaps: Vec<RootGap>,
    pub pairing_defect: Option<f64>,
    pub derivatives: Vec<DerivativeCheck>,
}

/// Checks the gaps predicted by the flag type of `spec` on a cocycle with
/// interior-valued generators, and the differentiability of the weights
/// those gaps make admissible.
pub fn verify_gap_predictions(c: &Cocycle, spec: &SemigroupSpec, opts: &VerifyOptions) -> Result<GapReport> {
    for (x, g) in c.generators().iter().enumerate() {
        if !interior_membership(spec, g)? {
            return Err(Error::InvalidBase(format!(
                "generator at point {x} is not in the interior of {}",
                spec.name()
            )));
        }
    }
    let d = c.dim();
    let predicted = predicted_theta(spec);
    let n_points = c.base().n_points();
    let mut per_point = vec![Vec::new(); n_points];
    let mut h_plus = vec![Vec::new(); n_points];
    for (cyc, h) in cycle_spectra(c)? {
        for &x in &cyc.points {
            per_point[x] = h.gaps();
            h_plus[x] = h.values().to_vec();
        }
    }
    let mut predicted_gaps = Vec::new();
    for i in (1..d).filter(|i| !predicted.contains(*i)) {
        let (at_point, min_gap) = per_point
            .iter()
            .enumerate()
            .map(|(x, g)| (x, g[i - 1]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty base");
        if !(min_gap > opts.gap_floor) {
            return Err(Error::PredictionViolated {
                point: at_point,
                root: i,
                detail: format!("gap {min_gap:e} not above {:e}", opts.gap_floor),
            });
        }
        predicted_gaps.push(RootGap {
            root: i,
            min_gap,
            at_point,
        });
    }
    let mean = mean_spectrum(c)?;
    let estimated = theta_of(&mean, default_gap_eps(&mean))?;
    let contained = estimated.is_subset(&predicted);
    if !contained {
        let root = estimated.indices().into_iter().find(|i| !predicted.contains(*i)).unwrap();
        return Err(Error::PredictionViolated {
            point: 0,
            root,
            detail: format!("estimated flag type {:?} not contained in {:?}", estimated.indices(), predicted.indices()),
        });
    }
    let pairing_defect = match spec {
        SemigroupSpec::SymplecticQ { .. } => {
            let mut worst: f64 = 0.0;
            for (x, h) in h_plus.iter().enumerate() {
                let defect = (0..d).map(|i| (h[i] + h[d - 1 - i]).abs()).fold(0.0, f64::max);
                if defect > opts.pairing_tol {
                    return Err(Error::PredictionViolated {
                        point: x,
                        root: d / 2,
                        detail: format!("spectrum not paired: defect {defect:e}"),
                    });
                }
                worst = worst.max(defect);
            }
            Some(worst)
        }
        _ => None,
    };
    let mut derivatives = Vec::new();
    if opts.directions > 0 {
        for i in (1..d).filter(|i| !predicted.contains(*i)) {
            let omega = fundamental_weight(d, i)?;
            let mut max_residual: f64 = 0.0;
            for k in 0..opts.directions {
                let seed = opts.seed.wrapping_mul(1_000_003).wrapping_add((i * 1000 + k) as u64);
                let y = match spec {
                    SemigroupSpec::SymplecticQ { n } => GaugeDirection::random_symplectic(n_points, *n, 1.0, seed),
                    _ => GaugeDirection::random(n_points, d, 1.0, seed),
                };
                let a = analytic_differential(c, &omega, &y, &opts.solver)?;
                let fd = finite_difference(c, &omega, &y, opts.step)?;
                let residual = (a - fd.slope).abs() / (1.0 + a.abs());
                if !(residual <= opts.derivative_tol) {
                    return Err(Error::PredictionViolated {
                        point: 0,
                        root: i,
                        detail: format!("differential {a} vs finite difference {} (residual {residual:e})", fd.slope),
                    });
                }
                max_residual = max_residual.max(residual);
            }
            derivatives.push(DerivativeCheck {
                weight: i,
                directions: opts.directions,
                max_residual,
            });
        }
    }
    Ok(GapReport {
        spec: spec.clone(),
        predicted_theta: predicted,
        estimated_theta: estimated,
        contained,
        per_point_gaps: per_point,
        predicted_gaps,
        pairing_defect,
        derivatives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn families() -> Vec<SemigroupSpec> {
        vec![
            SemigroupSpec::ConePositive { d: 3 },
            SemigroupSpec::TotallyPositive { d: 3 },
            SemigroupSpec::MinorPositive { d: 4, orders: vec![1, 3] },
            SemigroupSpec::SymplecticQ { n: 2 },
        ]
    }

    #[test]
    fn membership_examples() {
        let g = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(interior_membership(&SemigroupSpec::ConePositive { d: 2 }, &g).unwrap());
        assert!(!interior_membership(&SemigroupSpec::TotallyPositive { d: 3 }, &Matrix::identity(3)).unwrap());
        // n = 1: gᵀMg − M = [[4,2],[2,2]]
        assert!(interior_membership(&SemigroupSpec::SymplecticQ { n: 1 }, &g).unwrap());
        let m = form_m(1);
        let diff = &(&(&g.transpose() * &m) * &g) - &m;
        assert_eq!(diff.rows(), vec![vec![4.0, 2.0], vec![2.0, 2.0]]);

        let not_sp = Matrix::from_diagonal(&[2.0, 0.5, 1.0, 1.0]);
        assert!(matches!(
            interior_membership(&SemigroupSpec::SymplecticQ { n: 2 }, &not_sp),
            Err(Error::NotSymplectic { .. })
        ));
        let rot = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        assert!(!interior_membership(&SemigroupSpec::ConePositive { d: 2 }, &rot).unwrap());
    }

    #[test]
    fn predicted_examples() {
        assert_eq!(predicted_theta(&SemigroupSpec::ConePositive { d: 3 }).indices(), vec![2]);
        assert!(predicted_theta(&SemigroupSpec::TotallyPositive { d: 4 }).indices().is_empty());
        assert_eq!(
            predicted_theta(&SemigroupSpec::MinorPositive { d: 4, orders: vec![1, 3] }).indices(),
            vec![2]
        );
        assert_eq!(predicted_theta(&SemigroupSpec::SymplecticQ { n: 2 }).indices(), vec![1, 3]);
    }

    #[test]
    fn spec_validation() {
        assert!(SemigroupSpec::MinorPositive { d: 4, orders: vec![3, 1] }.validate().is_err());
        assert!(SemigroupSpec::MinorPositive { d: 4, orders: vec![4] }.validate().is_err());
        assert!(SemigroupSpec::ConePositive { d: 1 }.validate().is_err());
    }

    #[test]
    fn totally_positive_sample_has_all_19_minors_positive() {
        let g = sample_interior(&SemigroupSpec::TotallyPositive { d: 3 }, 5).unwrap();
        let mut count = 0;
        for k in 1..=3 {
            for r in index_subsets(3, k) {
                for c in index_subsets(3, k) {
                    assert!(minor(&g, &r, &c).unwrap() > 0.0);
                    count += 1;
                }
            }
        }
        assert_eq!(count, 19);
        assert!(is_strictly_sign_regular(&g).unwrap());
    }

    #[test]
    fn symplectic_sample_checks() {
        let g = sample_interior(&SemigroupSpec::SymplecticQ { n: 2 }, 9).unwrap();
        assert!(symplectic_defect(&g) <= 1e-8);
        let m = form_m(2);
        let diff = &(&(&g.transpose() * &m) * &g) - &m;
        // leading principal minors
        for k in 1..=4 {
            let idx: Vec<usize> = (0..k).collect();
            assert!(minor(&diff, &idx, &idx).unwrap() > 0.0);
        }
    }

    #[test]
    fn sign_regular_reversal() {
        // reversing columns of a TP matrix gives a sign-regular, non-TP one
        let g = sample_interior(&SemigroupSpec::TotallyPositive { d: 3 }, 1).unwrap();
        let mut r = g.as_na().clone();
        r.swap_columns(0, 2);
        let r = Matrix::from_na(-r).unwrap();
        assert!(is_strictly_sign_regular(&r).unwrap());
        assert!(!interior_membership(&SemigroupSpec::TotallyPositive { d: 3 }, &r).unwrap());
    }

    #[test]
    fn sampled_cocycles_meet_predictions() {
        let opts = VerifyOptions {
            directions: 2,
            ..VerifyOptions::default()
        };
        for (k, spec) in families().into_iter().enumerate() {
            let base = BaseSystem::random(6, k as u64);
            let c = sample_cocycle(&spec, base, 40 + k as u64).unwrap();
            let report = verify_gap_predictions(&c, &spec, &opts).unwrap();
            assert!(report.contained);
            assert!(report.predicted_gaps.iter().all(|g| g.min_gap > 1e-8));
            if let SemigroupSpec::SymplecticQ { .. } = spec {
                assert!(report.pairing_defect.unwrap() <= 1e-8);
            }
            assert!(!report.derivatives.is_empty());
        }
    }

    #[test]
    fn non_interior_generator_rejected() {
        let c = Cocycle::constant(BaseSystem::cyclic(2), Matrix::identity(3)).unwrap();
        assert!(verify_gap_predictions(&c, &SemigroupSpec::ConePositive { d: 3 }, &VerifyOptions::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn samples_are_interior_and_closed_under_products(seed in any::<u64>(), fam in 0usize..4) {
            let spec = &families()[fam];
            let a = sample_interior(spec, seed).unwrap();
            let b = sample_interior(spec, seed.wrapping_add(1)).unwrap();
            prop_assert!(interior_membership(spec, &a).unwrap());
            prop_assert!(interior_membership(spec, &(&a * &b)).unwrap());
        }
    }
}
