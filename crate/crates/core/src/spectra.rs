//! Polar exponents, weight functionals of the spectrum, and flag-type
//! estimation.
//!
//! The reference method is exact: on a finite permutation every orbit is
//! periodic, so the polar exponent at `x` is `1/L` times the sorted log
//! eigenvalue moduli of the period map. Finite-`n` estimates exist for
//! convergence studies.

use nalgebra::Schur;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::basedyn::{cocycle_step, cycle_decomposition, Cocycle, Cycle};
use crate::error::{Error, Result};
use crate::flagdyn::{attractor_section, cocycle_a, cocycle_omega, FlagPoint, Section, SolverOptions};
use crate::liealg::{default_gap_eps, theta_of, CartanVector, Permutation, ThetaSet, WeightVector};
use crate::matkit::{product_log_moduli, Matrix};

fn recentered(mut v: Vec<f64>, scale: f64) -> CartanVector {
    v.iter_mut().for_each(|x| *x *= scale);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    CartanVector::new(v).expect("recentred vector is traceless")
}

/// `(1/n) log σ(ρ(n,x))`, sorted, without forming `ρ(n,x)`: the squared
/// singular values are the eigenvalues of `ρ(n,x)ᵀρ(n,x)`, swept factor by
/// factor.
pub fn polar_exponent_finite(c: &Cocycle, x: usize, n: usize) -> Result<CartanVector> {
    c.base().check_point(x)?;
    if n == 0 {
        return Err(Error::IndexError("polar exponent needs n >= 1".into()));
    }
    let forward: Vec<Matrix> = c.orbit_generators(n, x).into_iter().cloned().collect();
    let mut factors = forward.clone();
    factors.extend(forward.iter().rev().map(Matrix::transpose));
    let logs = product_log_moduli(&factors)?;
    Ok(recentered(logs, 0.5 / n as f64))
}

/// Exact polar exponent: `(1/L)` times the sorted log eigenvalue moduli of
/// the period map at `x`.
pub fn polar_exponent_exact(c: &Cocycle, x: usize) -> Result<CartanVector> {
    c.base().check_point(x)?;
    let factors = c.period_factors(x);
    let l = factors.len();
    Ok(recentered(product_log_moduli(&factors)?, 1.0 / l as f64))
}

/// Exact polar exponent of every cycle (all points of a cycle share it).
pub fn cycle_spectra(c: &Cocycle) -> Result<Vec<(Cycle, CartanVector)>> {
    cycle_decomposition(c.base())
        .into_par_iter()
        .map(|cyc| {
            let h = polar_exponent_exact(c, cyc.points[0])?;
            Ok((cyc, h))
        })
        .collect()
}

/// `∫ H⁺ dν`, summed in cycle order.
pub fn mean_spectrum(c: &Cocycle) -> Result<CartanVector> {
    let mut mean = vec![0.0; c.dim()];
    for (cyc, h) in cycle_spectra(c)? {
        let w = cyc.total_weight();
        for (m, v) in mean.iter_mut().zip(h.values()) {
            *m += w * v;
        }
    }
    Ok(recentered(mean, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpectrumMethod {
    FiniteN { n: usize },
    ExactPeriodic,
}

#[derive(Clone, Debug, Serialize)]
pub struct GapEntry {
    /// 1-based simple root index.
    pub root: usize,
    pub value: f64,
    /// Whether the gap is at most the estimation tolerance.
    pub closed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub method: SpectrumMethod,
    pub per_point: Vec<CartanVector>,
    pub mean: CartanVector,
    pub theta: ThetaSet,
    pub eps: f64,
    pub gaps: Vec<GapEntry>,
}

fn build_report(method: SpectrumMethod, per_point: Vec<CartanVector>, c: &Cocycle, eps: Option<f64>) -> Result<SpectrumReport> {
    let d = c.dim();
    let mut mean = vec![0.0; d];
    for (x, h) in per_point.iter().enumerate() {
        for (m, v) in mean.iter_mut().zip(h.values()) {
            *m += c.base().nu(x) * v;
        }
    }
    let mean = recentered(mean, 1.0);
    let eps = eps.unwrap_or_else(|| default_gap_eps(&mean));
    let theta = theta_of(&mean, eps)?;
    let gaps = mean
        .gaps()
        .into_iter()
        .enumerate()
        .map(|(i, value)| GapEntry {
            root: i + 1,
            value,
            closed: value.abs() <= eps,
        })
        .collect();
    Ok(SpectrumReport {
        method,
        per_point,
        mean,
        theta,
        eps,
        gaps,
    })
}

/// Exact per-point spectrum, mean, gap table and flag type.
pub fn spectrum_report(c: &Cocycle, eps: Option<f64>) -> Result<SpectrumReport> {
    let mut per_point = vec![CartanVector::zeros(c.dim()); c.base().n_points()];
    for (cyc, h) in cycle_spectra(c)? {
        for &x in &cyc.points {
            per_point[x] = h.clone();
        }
    }
    build_report(SpectrumMethod::ExactPeriodic, per_point, c, eps)
}

/// Finite-`n` per-point spectrum.
pub fn spectrum_report_finite(c: &Cocycle, n: usize, eps: Option<f64>) -> Result<SpectrumReport> {
    let per_point = (0..c.base().n_points())
        .into_par_iter()
        .map(|x| polar_exponent_finite(c, x, n))
        .collect::<Result<Vec<_>>>()?;
    build_report(SpectrumMethod::FiniteN { n }, per_point, c, eps)
}

/// `Λ_ω = Σ_x ν(x) ω(H⁺(x))`.
pub fn spectrum_functional(c: &Cocycle, omega: &WeightVector) -> Result<f64> {
    if omega.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            got: omega.dim(),
        });
    }
    Ok(omega.eval(&mean_spectrum(c)?))
}

/// `Σ_x ν(x) 𝖺_ω(1, σ(x))` over a given section.
pub fn integrate_over_section(c: &Cocycle, omega: &WeightVector, s: &Section) -> Result<f64> {
    omega.check_admissible(&s.theta)?;
    let mut total = 0.0;
    for (x, flag) in s.flags.iter().enumerate() {
        total += c.base().nu(x) * cocycle_omega(c, omega, 1, x, flag)?;
    }
    Ok(total)
}

/// The same functional as [`spectrum_functional`], integrated over the
/// attractor section on the flag bundle of type `Θ`.
pub fn spectrum_via_section(c: &Cocycle, omega: &WeightVector, theta: &ThetaSet, opts: &SolverOptions) -> Result<f64> {
    omega.check_admissible(theta)?;
    let sol = attractor_section(c, theta, opts)?;
    integrate_over_section(c, omega, &sol.section)
}

/// `(1/n) 𝖺(n, x, ξ)`.
pub fn lyapunov_of_flag(c: &Cocycle, x: usize, xi: &FlagPoint, n: usize) -> Result<CartanVector> {
    if n == 0 {
        return Err(Error::IndexError("Lyapunov exponent needs n >= 1".into()));
    }
    Ok(cocycle_a(c, n, x, xi)?.scaled(1.0 / n as f64))
}

/// Flag type of the mean exact spectrum at gap tolerance `eps`.
pub fn flag_type_estimate(c: &Cocycle, eps: f64) -> Result<ThetaSet> {
    theta_of(&mean_spectrum(c)?, eps)
}

#[derive(Clone, Debug, Serialize)]
pub struct WeylCheck {
    pub passed: bool,
    pub max_error: f64,
    /// Flag orderings tested (column `j` of the flag is the eigenvector of
    /// the `w[j]`-th largest modulus) with the exponent each realized.
    pub realized: Vec<(Permutation, CartanVector)>,
    pub h_plus: CartanVector,
    pub steps: usize,
}

const WEYL_TOL: f64 = 1e-6;
const WEYL_EXHAUSTIVE_MAX_DIM: usize = 4;
const WEYL_SAMPLES: usize = 10;

/// Real eigenpairs of `p` sorted by decreasing modulus; fails unless the
/// moduli are real and pairwise distinct.
fn sorted_real_eigenvectors(p: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let d = p.dim();
    let schur = Schur::try_new(p.as_na().clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::DecompositionFailure("Schur iteration did not converge".into()))?;
    let eigs = schur.complex_eigenvalues();
    if let Some(z) = eigs.iter().find(|z| z.im.abs() > 1e-12 * z.norm().max(1.0)) {
        return Err(Error::DegenerateSpectrum(format!("complex eigenvalue {z}")));
    }
    let mut vals: Vec<f64> = eigs.iter().map(|z| z.re).collect();
    vals.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    for w in vals.windows(2) {
        if (w[0].abs().ln() - w[1].abs().ln()).abs() <= 1e-8 {
            return Err(Error::DegenerateSpectrum(format!(
                "repeated modulus {} in period map",
                w[0].abs()
            )));
        }
    }
    let mut vecs = nalgebra::DMatrix::<f64>::zeros(d, d);
    for (j, &lam) in vals.iter().enumerate() {
        let shifted = p.as_na() - nalgebra::DMatrix::<f64>::identity(d, d) * lam;
        let svd = shifted.svd(false, true);
        let vt = svd
            .v_t
            .ok_or_else(|| Error::DecompositionFailure("missing right singular vectors".into()))?;
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        for i in 0..d {
            vecs[(i, j)] = vt[(imin, i)];
        }
    }
    let logs = vals.iter().map(|v| v.abs().ln()).collect();
    Ok((logs, Matrix::from_na(vecs)?))
}

/// Checks that eigenvector flags of the period map at `x`, in every order,
/// realize exactly the Weyl orbit of `H⁺(x)`.
///
/// `n` is rounded up to a whole number of periods. Flags other than the
/// attracting one are unstable, so `n` should stay a small multiple of the
/// period: roundoff in the initial flag grows like the spectral spread.
pub fn weyl_relation_check(c: &Cocycle, x: usize, n: usize, seed: u64) -> Result<WeylCheck> {
    c.base().check_point(x)?;
    let d = c.dim();
    let l = c.base().period(x);
    let steps = n.max(1).div_ceil(l) * l;
    let period_map = cocycle_step(c, l, x)?;
    let (_, vecs) = sorted_real_eigenvectors(&period_map)?;
    let h_plus = polar_exponent_exact(c, x)?;
    let perms = if d <= WEYL_EXHAUSTIVE_MAX_DIM {
        Permutation::all(d)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut all: Vec<Permutation> = Vec::new();
        for _ in 0..WEYL_SAMPLES {
            let mut p: Vec<usize> = (0..d).collect();
            p.shuffle(&mut rng);
            all.push(Permutation::new(p)?);
        }
        all
    };
    let theta = ThetaSet::empty(d);
    let mut max_error: f64 = 0.0;
    let mut realized = Vec::with_capacity(perms.len());
    for w in perms {
        let cols = nalgebra::DMatrix::from_fn(d, d, |i, j| vecs.get(i, w.images()[j]));
        let xi = FlagPoint::from_columns(theta.clone(), &Matrix::from_na(cols)?)?;
        let lyap = lyapunov_of_flag(c, x, &xi, steps)?;
        let expected: Vec<f64> = w.images().iter().map(|&k| h_plus.values()[k]).collect();
        let err = lyap
            .values()
            .iter()
            .zip(&expected)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        max_error = max_error.max(err);
        realized.push((w, lyap));
    }
    // With distinct entries every ordering is a distinct Weyl image, so the
    // realized set covers the whole orbit when all d! orderings were tried.
    Ok(WeylCheck {
        passed: max_error <= WEYL_TOL,
        max_error,
        realized,
        h_plus,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basedyn::BaseSystem;
    use crate::flagdyn::{attractor_section, FlagPoint};
    use crate::liealg::{fundamental_weight, weyl_apply};
    use crate::matkit::eig_log_moduli;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    fn positive_sl(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
        loop {
            let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(0.1..1.0));
            let det: f64 = m.determinant();
            if det > 0.01 {
                return Matrix::from_na(m / det.powf(1.0 / d as f64)).unwrap();
            }
        }
    }

    fn positive_cocycle(n: usize, d: usize, seed: u64) -> Cocycle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = BaseSystem::random(n, seed);
        Cocycle::new(base, (0..n).map(|_| positive_sl(d, &mut rng)).collect()).unwrap()
    }

    fn diag3() -> Matrix {
        Matrix::from_diagonal(&[3.0, 1.0, 1.0 / 3.0])
    }

    fn rotation(a: f64) -> Matrix {
        Matrix::from_rows(&[vec![a.cos(), -a.sin()], vec![a.sin(), a.cos()]]).unwrap()
    }

    #[test]
    fn finite_exponent_examples() {
        let c = Cocycle::constant(BaseSystem::cyclic(2), diag3()).unwrap();
        for n in [1, 4, 9] {
            let h = polar_exponent_finite(&c, 0, n).unwrap();
            assert!((h.values()[0] - 3f64.ln()).abs() < 1e-12);
            assert!(h.values()[1].abs() < 1e-12);
        }
        let rot = Cocycle::constant(BaseSystem::fixed_points(1), rotation(0.4)).unwrap();
        let h = polar_exponent_finite(&rot, 0, 25).unwrap();
        assert!(h.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn finite_exponent_matches_explicit_svd_for_short_products() {
        let c = positive_cocycle(5, 3, 2);
        for x in 0..5 {
            for n in 1..6 {
                let p = cocycle_step(&c, n, x).unwrap();
                let direct = crate::matkit::polar_chamber(&p).unwrap().h_plus.scaled(1.0 / n as f64);
                let swept = polar_exponent_finite(&c, x, n).unwrap();
                // the explicit product loses relative accuracy in its
                // smallest singular value, hence the loose tolerance
                assert!(direct.max_abs_diff(&swept) < 1e-8, "{x} {n} {direct:?} {swept:?}");
            }
        }
    }

    #[test]
    fn finite_converges_to_exact() {
        let c = positive_cocycle(4, 3, 7);
        for x in 0..4 {
            let exact = polar_exponent_exact(&c, x).unwrap();
            let l = c.base().period(x);
            let e10 = polar_exponent_finite(&c, x, 10 * l).unwrap().max_abs_diff(&exact);
            let e50 = polar_exponent_finite(&c, x, 50 * l).unwrap().max_abs_diff(&exact);
            assert!(e50 < e10 || e50 < 1e-12);
            assert!(e50 < 0.05, "error {e50}");
        }
    }

    #[test]
    fn exact_examples() {
        let c = Cocycle::constant(BaseSystem::fixed_points(1), diag3()).unwrap();
        let h = polar_exponent_exact(&c, 0).unwrap();
        assert!((h.values()[0] - 3f64.ln()).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = positive_sl(3, &mut rng);
        let c = Cocycle::new(BaseSystem::cyclic(2), vec![g.clone(), g.inverse().unwrap()]).unwrap();
        assert!(polar_exponent_exact(&c, 0).unwrap().values().iter().all(|v| v.abs() < 1e-12));

        let g0 = positive_sl(3, &mut rng);
        let g1 = positive_sl(3, &mut rng);
        let c = Cocycle::new(BaseSystem::cyclic(2), vec![g0.clone(), g1.clone()]).unwrap();
        let oracle: Vec<f64> = eig_log_moduli(&(&g1 * &g0)).unwrap().iter().map(|v| v / 2.0).collect();
        let h = polar_exponent_exact(&c, 0).unwrap();
        for (a, b) in h.values().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10);
        }
        // both points of the cycle share the exponent
        assert!(polar_exponent_exact(&c, 1).unwrap().max_abs_diff(&h) < 1e-10);
    }

    #[test]
    fn functional_examples() {
        let c = Cocycle::constant(BaseSystem::fixed_points(1), Matrix::from_diagonal(&[2.0, 0.5])).unwrap();
        let w1 = fundamental_weight(2, 1).unwrap();
        assert!((spectrum_functional(&c, &w1).unwrap() - 2f64.ln()).abs() < 1e-14);

        let c = positive_cocycle(6, 3, 1);
        let ones = WeightVector::from_coeffs(vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(spectrum_functional(&c, &ones).unwrap(), 0.0);

        let w1 = fundamental_weight(3, 1).unwrap();
        let val = spectrum_functional(&c, &w1).unwrap();
        // Perron-root oracle: power iteration on each period product.
        let mut oracle = 0.0;
        for cyc in cycle_decomposition(c.base()) {
            let p = cocycle_step(&c, cyc.len(), cyc.points[0]).unwrap();
            let mut v = DVector::from_element(3, 1.0);
            let mut root = 0.0;
            for _ in 0..2000 {
                let w = p.as_na() * &v;
                root = w.norm() / v.norm();
                v = w.normalize();
            }
            oracle += cyc.total_weight() * root.ln() / cyc.len() as f64;
        }
        assert!(val > 0.0);
        assert!((val - oracle).abs() < 1e-9, "{val} vs {oracle}");
    }

    #[test]
    fn section_route_agrees() {
        let c = Cocycle::constant(BaseSystem::cyclic(3), diag3()).unwrap();
        let w1 = fundamental_weight(3, 1).unwrap();
        let proj = ThetaSet::grassmannian(3, 1).unwrap();
        let v = spectrum_via_section(&c, &w1, &proj, &SolverOptions::default()).unwrap();
        assert!((v - 3f64.ln()).abs() < 1e-12);

        for seed in 0..4 {
            let c = positive_cocycle(5, 3, seed);
            let a = spectrum_functional(&c, &w1).unwrap();
            let b = spectrum_via_section(&c, &w1, &proj, &SolverOptions::default()).unwrap();
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        let w2 = fundamental_weight(3, 2).unwrap();
        assert!(matches!(
            spectrum_via_section(&c, &w2, &proj, &SolverOptions::default()),
            Err(Error::WeightNotAdmissible { .. })
        ));
    }

    #[test]
    fn flag_lyapunov_at_attractor_is_polar() {
        let c = positive_cocycle(3, 3, 11);
        let full = ThetaSet::empty(3);
        // positive 3x3 cocycles need not have a full-flag gap; use the
        // projective coordinate only
        let proj = ThetaSet::grassmannian(3, 1).unwrap();
        let sol = attractor_section(&c, &proj, &SolverOptions::default()).unwrap();
        let x = 0;
        let l = c.base().period(x);
        let xi = sol.section.flags[x].with_theta(full);
        let lam = lyapunov_of_flag(&c, x, &xi, 40 * l).unwrap();
        let h = polar_exponent_exact(&c, x).unwrap();
        assert!((lam.values()[0] - h.values()[0]).abs() < 1e-8);

        let d = Cocycle::constant(BaseSystem::fixed_points(1), diag3()).unwrap();
        let lam = lyapunov_of_flag(&d, 0, &FlagPoint::standard(ThetaSet::empty(3)), 3).unwrap();
        assert!((lam.values()[2] + 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn weyl_examples() {
        let g = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let c = Cocycle::constant(BaseSystem::fixed_points(1), g).unwrap();
        let chk = weyl_relation_check(&c, 0, 1, 0).unwrap();
        assert!(chk.passed, "{chk:?}");
        let lam = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        let values: Vec<Vec<f64>> = chk.realized.iter().map(|(_, v)| v.values().to_vec()).collect();
        assert!(values.iter().any(|v| (v[0] - lam).abs() < 1e-9 && (v[1] + lam).abs() < 1e-9));
        assert!(values.iter().any(|v| (v[0] + lam).abs() < 1e-9 && (v[1] - lam).abs() < 1e-9));

        let rot = Cocycle::constant(BaseSystem::fixed_points(1), rotation(1.0)).unwrap();
        assert!(matches!(weyl_relation_check(&rot, 0, 1, 0), Err(Error::DegenerateSpectrum(_))));
    }

    #[test]
    fn weyl_orbit_covered_for_d3() {
        let c = positive_cocycle(3, 3, 4);
        for x in 0..3 {
            let Ok(chk) = weyl_relation_check(&c, x, 1, 0) else { continue };
            assert!(chk.passed, "{}", chk.max_error);
            assert_eq!(chk.realized.len(), 6);
            for (w, v) in &chk.realized {
                // expected value equals the Weyl image w^{-1} H⁺
                let img = weyl_apply(&w.inverse(), &chk.h_plus).unwrap();
                assert!(img.max_abs_diff(v) < 1e-6);
            }
        }
    }

    #[test]
    fn flag_type_examples() {
        let rot = Cocycle::constant(BaseSystem::cyclic(2), rotation(0.3)).unwrap();
        assert_eq!(flag_type_estimate(&rot, 1e-8).unwrap(), ThetaSet::full(2));
        for seed in 0..5 {
            let c = positive_cocycle(5, 3, seed);
            assert!(!flag_type_estimate(&c, 1e-8).unwrap().contains(1));
        }
    }

    #[test]
    fn report_invariants() {
        for seed in 0..5 {
            let c = positive_cocycle(8, 4, seed);
            let r = spectrum_report(&c, None).unwrap();
            assert!(r.mean.values().iter().sum::<f64>().abs() < 1e-8);
            for h in &r.per_point {
                assert!(h.is_sorted_desc());
                assert!(h.values().iter().sum::<f64>().abs() < 1e-8);
            }
            // inverse cocycle has the negated reversed spectrum
            let inv = mean_spectrum(&c.inverse().unwrap()).unwrap();
            for i in 0..4 {
                assert!((inv.values()[i] + r.mean.values()[3 - i]).abs() < 1e-8);
            }
        }
    }
}
