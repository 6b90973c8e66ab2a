//! The acceptance suite: ten seeded property checks over the whole stack,
//! each reporting a measured worst case against its threshold.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basedyn::{cocycle_step, BaseSystem, Cocycle};
use crate::error::{Error, Result};
use crate::flagdyn::{
    act, attractor_section, cocycle_a, cocycle_omega, contraction_rate, random_stabilizer, repeller_section,
    transversality_check, FlagPoint, Section, SolverOptions,
};
use crate::gaugediff::{
    finite_difference, iwasawa_over_section, ruelle_differential, split_over_sections, GaugeDirection, DEFAULT_STEP,
};
use crate::liealg::{fundamental_weight, ThetaSet, WeightVector};
use crate::matkit::{iwasawa, polar_chamber, Matrix};
use crate::semigrp::{predicted_theta, sample_cocycle, verify_gap_predictions, SemigroupSpec, VerifyOptions};
use crate::spectra::{spectrum_functional, spectrum_via_section, weyl_relation_check};

/// Thresholds and sample sizes; every field may be overridden from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    pub decomposition_samples: usize,
    pub decomposition_tol: f64,
    pub decomposition_seconds: f64,
    pub cocycle_tol: f64,
    pub section_identity_tol: f64,
    pub fiber_tol: f64,
    pub weyl_tol: f64,
    pub derivative_tol: f64,
    pub derivative_seconds: f64,
    pub ruelle_tol: f64,
    pub gap_floor: f64,
    pub pairing_tol: f64,
    pub residual_tol: f64,
    pub linearity_tol: f64,
    pub representative_tol: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 20240501,
            decomposition_samples: 1000,
            decomposition_tol: 1e-10,
            decomposition_seconds: 5.0,
            cocycle_tol: 1e-9,
            section_identity_tol: 1e-8,
            fiber_tol: 1e-10,
            weyl_tol: 1e-6,
            derivative_tol: 1e-5,
            derivative_seconds: 60.0,
            ruelle_tol: 1e-10,
            gap_floor: 1e-8,
            pairing_tol: 1e-8,
            residual_tol: 1e-10,
            linearity_tol: 1e-10,
            representative_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
    /// Wall time; left out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} {}: measured {:.3e}, threshold {:.1e}, {:.2}s; {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub all_passed: bool,
    pub criteria: Vec<CriterionResult>,
}

/// Runs every criterion in order.
pub fn run_suite(cfg: &SuiteConfig) -> SuiteReport {
    let runners: [fn(&SuiteConfig) -> CriterionResult; 10] = [
        decomposition,
        cocycle_algebra,
        oracle_equivalence,
        fiber_constancy,
        weyl_relation,
        differential_check,
        ruelle_consistency,
        gap_predictions,
        section_solver,
        linearity_and_representatives,
    ];
    let criteria: Vec<CriterionResult> = runners.iter().map(|run| run(cfg)).collect();
    SuiteReport {
        config: cfg.clone(),
        all_passed: criteria.iter().all(|c| c.passed),
        criteria,
    }
}

/// Runs one criterion by id (1-based).
pub fn run_criterion(cfg: &SuiteConfig, id: u8) -> Option<CriterionResult> {
    let run: fn(&SuiteConfig) -> CriterionResult = match id {
        1 => decomposition,
        2 => cocycle_algebra,
        3 => oracle_equivalence,
        4 => fiber_constancy,
        5 => weyl_relation,
        6 => differential_check,
        7 => ruelle_consistency,
        8 => gap_predictions,
        9 => section_solver,
        10 => linearity_and_representatives,
        _ => return None,
    };
    Some(run(cfg))
}

fn finish(id: u8, name: &str, start: Instant, outcome: Result<(bool, f64, String)>, threshold: f64) -> CriterionResult {
    let elapsed = start.elapsed();
    match outcome {
        Ok((passed, measured, detail)) => CriterionResult {
            id,
            name: name.into(),
            passed,
            measured,
            threshold,
            detail,
            elapsed,
        },
        Err(e) => CriterionResult {
            id,
            name: name.into(),
            passed: false,
            measured: f64::NAN,
            threshold,
            detail: format!("error: {e}"),
            elapsed,
        },
    }
}

fn rng_for(cfg: &SuiteConfig, id: u8) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(id as u64 + 1)))
}

/// Gaussian matrix rescaled to determinant one.
fn random_unit_det(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    loop {
        let mut m = DMatrix::from_fn(d, d, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            z
        });
        let det = m.determinant();
        if det.abs() < 1e-3 {
            continue;
        }
        m /= det.abs().powf(1.0 / d as f64);
        if det < 0.0 {
            m.row_mut(0).neg_mut();
        }
        if let Ok(g) = Matrix::from_na(m) {
            return g;
        }
    }
}

/// The semigroup families with the sizes used throughout the suite.
fn families() -> Vec<SemigroupSpec> {
    vec![
        SemigroupSpec::ConePositive { d: 3 },
        SemigroupSpec::TotallyPositive { d: 3 },
        SemigroupSpec::MinorPositive { d: 4, orders: vec![1, 3] },
        SemigroupSpec::SymplecticQ { n: 2 },
    ]
}

fn admissible_indices(spec: &SemigroupSpec) -> Vec<usize> {
    let theta = predicted_theta(spec);
    (1..spec.dim()).filter(|i| !theta.contains(*i)).collect()
}

fn decomposition(cfg: &SuiteConfig) -> CriterionResult {
    let start = Instant::now();
    let mut rng = rng_for(cfg, 1);
    let outcome = (|| {
        let mut worst: f64 = 0.0;
        for d in 2..=6 {
            for _ in 0..cfg.decomposition_samples {
                let g = random_unit_det(d, &mut rng);
                worst = worst.max(iwasawa(&g)?.recompose().rel_dist(&g));
                worst = worst.max(polar_chamber(&g)?.recompose().rel_dist(&g));
            }
        }
        let secs = start.elapsed().as_secs_f64();
        let passed = worst <= cfg.decomposition_tol && secs < cfg.decomposition_seconds;
        Ok((
            passed,
            worst,
            format!(
                "{} matrices per d in 2..=6, runtime limit {}s",
                cfg.decomposition_samples, cfg.decomposition_seconds
            ),
        ))
    })();
    finish(1, "decomposition reconstruction", start, outcome, cfg.decomposition_tol)
}

fn cocycle_algebra(cfg: &SuiteConfig) -> CriterionResult {
    let start = Instant::now();
    let mut rng = rng_for(cfg, 2);
    let outcome = (|| {
        let mut flow: f64 = 0.0;
        let mut additive: f64 = 0.0;
        for k in 0..50 {
            let d = rng.random_range(2..=5);
            let n_points = rng.random_range(2..=16);
            let base = BaseSystem::random(n_points, cfg.seed.wrapping_add(k));
            let gens = (0..n_points).map(|_| random_unit_det(d, &mut rng)).collect();
            let c = Cocycle::new(base, gens)?;
            for _ in 0..4 {
                let total = rng.random_range(1..=20);
                let m = rng.random_range(0..=total);
                let n = total - m;
                let x = rng.random_range(0..n_points);
                let lhs = cocycle_step(&c, n + m, x)?;
                let rhs = &cocycle_step(&c, n, c.base().tau_pow(m, x))? * &cocycle_step(&c, m, x)?;
                flow = flow.max(rhs.rel_dist(&lhs));

                let xi = FlagPoint::random(ThetaSet::empty(d), &mut rng);
                let whole = cocycle_a(&c, n + m, x, &xi)?;
                let first = cocycle_a(&c, m, x, &xi)?;
                let mut moved = xi.clone();
                for g in c.orbit_generators(m, x) {
                    moved = act(g, &moved)?;
                }
                let second = cocycle_a(&c, n, c.base().tau_pow(m, x), &moved)?;
                additive = additive.max(whole.max_abs_diff(&first.add(&second)));
            }
        }
        let worst = flow.max(additive);
        Ok((
            worst <= cfg.cocycle_tol,
            worst,
            format!("flow property {flow:.2e}, additive cocycle {additive:.2e}; 50 cocycles, n+m <= 20"),
        ))
    })();
    finish(2, "cocycle algebra", start, outcome, cfg.cocycle_tol)
}

fn sampled(cfg: &SuiteConfig, id: u8, k: usize, spec: &SemigroupSpec, max_points: usize) -> Result<Cocycle> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1000 * id as u64 + k as u64));
    let n_points = rng.random_range(2..=max_points);
    let base = BaseSystem::random(n_points, rng.random());
    sample_cocycle(spec, base, rng.random())
}

fn oracle_equivalence(cfg: &SuiteConfig) -> CriterionResult {
    let start = Instant::now();
    let outcome = (|| {
        let fams = families();
        let mut worst: f64 = 0.0;
        let opts = SolverOptions::default();
        for k in 0..20 {
            let spec = &fams[k % fams.len()];
            let c = sampled(cfg, 3, k, spec, 16)?;
            for i in admissible_indices(spec) {
                let omega = fundamental_weight(spec.dim(), i)?;
                let direct = spectrum_functional(&c, &omega)?;
                let via = spectrum_via_section(&c, &omega, &omega.admissible_theta(), &opts)?;
                worst = worst.max((direct - via).abs());
            }
        }
        Ok((
            worst <= cfg.section_identity_tol,
            worst,
            "20 semigroup-sampled cocycles, every predicted fundamental weight".into(),
        ))
    })();
    finish(3, "spectrum vs section integral", start, outcome, cfg.section_identity_tol)
}

fn fiber_constancy(cfg: &SuiteConfig) -> CriterionResult {
    let start = Instant::now();
    let mut rng = rng_for(cfg, 4);
    let outcome = (|| {
        let mut worst: f64 = 0.0;
        let mut cases = 0;
        for k in 0..10 {
            let d = rng.random_range(2..=5);
            let n_points = rng.random_range(1..=8);
            let base = BaseSystem::random(n_points, cfg.seed.wrapping_add(400 + k));
            let gens = (0..n_points).map(|_| random_unit_det(d, &mut rng)).collect();
            let c = Cocycle::new(base, gens)?;
            let theta = ThetaSet::new(d, (1..d).filter(|_| rng.random_bool(0.5)))?;
            // random combination of the weights admissible for theta
            let m: Vec<f64> = (1..d)
                .map(|i| if theta.contains(i) { 0.0 } else { rng.random_range(-2.0..2.0) })
                .collect();
            let omega = WeightVector::from_fundamental(d, &m)?;
            let xi = FlagPoint::random(theta.clone(), &mut rng);
            let x = rng.random_range(0..n_points);
            let n = rng.random_range(1..=10);
            let reference = cocycle_omega(&c, &omega, n, x, &xi)?;
            for _ in 0..20 {
                let lift = FlagPoint::new(theta.clone(), &xi.frame * &random_stabilizer(&theta, &mut rng))?;
                worst = worst.max((cocycle_omega(&c, &omega, n, x, &lift)? - reference).abs());
                cases += 1;
            }
        }
        Ok((worst <= cfg.fiber_tol, worst, format!("{cases} lifts over 10 random configurations")))
    })();
    finish(4, "fiber constancy", start, outcome, cfg.fiber_tol)
}

fn weyl_relation(cfg: &SuiteConfig) -> CriterionResult {
    let start = Instant::now();
    let outcome = (|| {
        let specs = [
            SemigroupSpec::ConePositive { d: 2 },
            SemigroupSpec::TotallyPositive { d: 2 },
            SemigroupSpec::TotallyPositive { d: 3 },
        ];
        let mut worst: f64 = 0.0;
        let mut maps = 0;
        let mut all_passed = true;
        for (s, spec) in specs.iter().enumerate() {
            for k in 0..4 {
                let len = k % 3 + 1;
                let c = sample_cocycle(spec, BaseSystem::cyclic(len), cfg.seed.wrapping_add(500 + 10 * s as u64 + k as u64))?;
                let chk = weyl_relation_check(&c, 0, len, cfg.seed)?;
                let d = spec.dim();
                let factorial: usize = (1..=d).product();
                all_passed &= chk.realized.len() == factorial && chk.max_error <= cfg.weyl_tol;
                worst = worst.max(chk.max_error);
                maps += 1;
            }
        }
        Ok((
            all_passed,
            worst,
            format!("{maps} hyperbolic period maps with d <= 3, every ordering of eigenvectors"),
        ))
    })();
    finish(5, "Weyl relation", start, outcome, cfg.weyl_tol)
}

/// Relative residuals of the corrected and of the Iwasawa-projection
/// differential against Richardson central differences.
fn derivative_residuals(c: &Cocycle, spec: &SemigroupSpec, directions: usize, seed: u64) -> Result<(f64, f64)> {
    let opts = SolverOptions::default();
    let n_points = c.base().n_points();
    let mut split_worst: f64 = 0.0;
    let mut iwasawa_worst: f64 = 0.0;
    for i in admissible_indices(spec) {
        let omega = fundamental_weight(spec.dim(), i)?;
        let theta = omega.admissible_theta();
        let att = attractor_section(c, &theta, &opts)?.section;
        let rep = repeller_section(c, &theta, &opts)?.section;
        for k in 0..directions {
            let s = seed.wrapping_add((100 * i + k) as u64);
            let y = match spec {
                SemigroupSpec::SymplecticQ { n } => GaugeDirection::random_symplectic(n_points, *n, 1.0, s),
                _ => GaugeDirection::random(n_points, spec.dim(), 1.0, s),
            };
            let fd = finite_difference(c, &omega, &y, DEFAULT_STEP)?.slope;
            let a = split_over_sections(c, &omega, &y, &att, &rep)?;
            split_worst = split_worst.max((a - fd).abs() / (1.0 + a.abs()));
            let iw = iwasawa_over_section(c, &omega, &y, &att)?;
            iwasawa_worst = iwasawa_worst.max((iw - fd).abs() / (1.0 + iw.abs()));
        }
    }
    Ok((split_worst, iwasawa_worst))
}

fn differential_check(cfg: &SuiteConfig) -> CriterionResult {
    let start = Instant::now();
    let outcome = (|| {
        let mut worst: f64 = 0.0;
        let mut iwasawa_worst: f64 = 0.0;
        for spec in families() {
            for k in 0..5 {
                let c = sampled(cfg, 6, k, &spec, 8)?;
                let (s, iw) = derivative_residuals(&c, &spec, 10, cfg.seed.wrapping_add(k as u64))?;
                worst = worst.max(s);
                iwasawa_worst = iwasawa_worst.max(iw);
            }
        }
        let secs = start.elapsed().as_secs_f64();
        Ok((
            worst <= cfg.derivative_tol && secs < cfg.derivative_seconds,
            worst,
            format!(
                "4 families x 5 cocycles x 10 directions, h = {DEFAULT_STEP:e}, runtime limit {}s; \
                 Iwasawa-projection formula residual {iwasawa_worst:.2e} for comparison",
                cfg.derivative_seconds
            ),
        ))
    })();
    finish(6, "differential vs finite differences", start, outcome, cfg.derivative_tol)
}

fn ruelle_consistency(cfg: &SuiteConfig) -> CriterionResult {
    let start = Instant::now();
    let outcome = (|| {
        let opts = SolverOptions::default();
        let mut worst: f64 = 0.0;
        for k in 0..9 {
            let d = 2 + k % 3;
            let spec = SemigroupSpec::ConePositive { d };
            let c = sampled(cfg, 7, k, &spec, 12)?;
            let omega = fundamental_weight(d, 1)?;
            let proj = ThetaSet::grassmannian(d, 1)?;
            let att = attractor_section(&c, &proj, &opts)?.section;
            let rep = repeller_section(&c, &proj, &opts)?.section;
            for j in 0..5 {
                let y = GaugeDirection::random(c.base().n_points(), d, 1.0, cfg.seed.wrapping_add(70 + 5 * k as u64 + j));
                let r = ruelle_differential(&c, &y, &opts)?;
                let a = split_over_sections(&c, &omega, &y, &att, &rep)?;
                worst = worst.max((r - a).abs());
            }
        }
        Ok((
            worst <= cfg.ruelle_tol,
            worst,
            "9 cone-positive cocycles (d = 2..4) x 5 directions".into(),
        ))
    })();
    finish(7, "Ruelle formula consistency", start, outcome, cfg.ruelle_tol)
}

fn gap_predictions(cfg: &SuiteConfig) -> CriterionResult {
    let start = Instant::now();
    let outcome = (|| {
        let specs = [
            SemigroupSpec::ConePositive { d: 2 },
            SemigroupSpec::ConePositive { d: 5 },
            SemigroupSpec::TotallyPositive { d: 3 },
            SemigroupSpec::TotallyPositive { d: 5 },
            SemigroupSpec::MinorPositive { d: 4, orders: vec![1, 3] },
            SemigroupSpec::MinorPositive { d: 5, orders: vec![2] },
            SemigroupSpec::SymplecticQ { n: 1 },
            SemigroupSpec::SymplecticQ { n: 2 },
        ];
        let opts = VerifyOptions {
            gap_floor: cfg.gap_floor,
            pairing_tol: cfg.pairing_tol,
            directions: 0,
            ..VerifyOptions::default()
        };
        let mut min_gap = f64::INFINITY;
        let mut pairing: f64 = 0.0;
        let mut failures = Vec::new();
        for (s, spec) in specs.iter().enumerate() {
            for k in 0..20 {
                let c = sampled(cfg, 8, 100 * s + k, spec, 16)?;
                match verify_gap_predictions(&c, spec, &opts) {
                    Ok(r) => {
                        for g in &r.predicted_gaps {
                            min_gap = min_gap.min(g.min_gap);
                        }
                        if let Some(p) = r.pairing_defect {
                            pairing = pairing.max(p);
                        }
                    }
                    Err(e @ Error::PredictionViolated { .. }) => failures.push(format!("{}: {e}", spec.name())),
                    Err(e) => return Err(e),
                }
            }
        }
        let passed = failures.is_empty() && min_gap > cfg.gap_floor && pairing <= cfg.pairing_tol;
        let mut detail = format!(
            "8 families x 20 cocycles; smallest predicted gap {min_gap:.3e}, symplectic pairing defect {pairing:.2e}"
        );
        if !failures.is_empty() {
            detail.push_str(&format!("; violations: {}", failures.join("; ")));
        }
        Ok((passed, min_gap, detail))
    })();
    finish(8, "gap predictions", start, outcome, cfg.gap_floor)
}

fn section_solver(cfg: &SuiteConfig) -> CriterionResult {
    let start = Instant::now();
    let outcome = (|| {
        let opts = SolverOptions {
            tol: cfg.residual_tol,
            ..SolverOptions::default()
        };
        let mut worst: f64 = 0.0;
        let mut slowest: f64 = 0.0;
        let mut transversal = true;
        for (s, spec) in families().iter().enumerate() {
            for k in 0..5 {
                let c = sampled(cfg, 9, 10 * s + k, spec, 16)?;
                let theta = predicted_theta(spec);
                let att = attractor_section(&c, &theta, &opts)?;
                let rep = repeller_section(&c, &theta, &opts)?;
                worst = worst.max(att.residual).max(rep.residual);
                for h in [&att.history, &rep.history] {
                    match contraction_rate(h, cfg.residual_tol) {
                        Some(r) => slowest = slowest.max(r),
                        // converged before leaving the fitting window
                        None => {}
                    }
                }
                transversal &= transversality_check(&att.section, &rep.section)?.iter().all(|&t| t);
            }
        }
        let rotation = Matrix::from_rows(&[vec![0.6, -0.8], vec![0.8, 0.6]])?;
        let rot = Cocycle::constant(BaseSystem::cyclic(3), rotation)?;
        let rot_fails = matches!(
            attractor_section(&rot, &ThetaSet::empty(2), &SolverOptions { max_iter: Some(2000), ..opts.clone() }),
            Err(Error::NoConvergence { .. })
        );
        let passed = worst <= cfg.residual_tol && slowest < 1.0 && transversal && rot_fails;
        Ok((
            passed,
            worst,
            format!(
                "20 sampled cocycles; worst contraction factor per sweep {slowest:.3}, transversal {transversal}, \
                 rotation gives NoConvergence {rot_fails}"
            ),
        ))
    })();
    finish(9, "section solver", start, outcome, cfg.residual_tol)
}

fn linearity_and_representatives(cfg: &SuiteConfig) -> CriterionResult {
    let start = Instant::now();
    let mut rng = rng_for(cfg, 10);
    let outcome = (|| {
        let opts = SolverOptions::default();
        let mut linear: f64 = 0.0;
        let mut representative: f64 = 0.0;
        for (s, spec) in families().iter().enumerate() {
            for k in 0..3 {
                let c = sampled(cfg, 10, 10 * s + k, spec, 10)?;
                let n_points = c.base().n_points();
                for i in admissible_indices(spec) {
                    let omega = fundamental_weight(spec.dim(), i)?;
                    let theta = omega.admissible_theta();
                    let att = attractor_section(&c, &theta, &opts)?.section;
                    let rep = repeller_section(&c, &theta, &opts)?.section;
                    let y1 = GaugeDirection::random(n_points, spec.dim(), 1.0, rng.random());
                    let y2 = GaugeDirection::random(n_points, spec.dim(), 1.0, rng.random());
                    let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                    let combo = y1.combine(a, &y2, b)?;
                    let lhs = split_over_sections(&c, &omega, &combo, &att, &rep)?;
                    let rhs = a * split_over_sections(&c, &omega, &y1, &att, &rep)?
                        + b * split_over_sections(&c, &omega, &y2, &att, &rep)?;
                    linear = linear.max((lhs - rhs).abs());

                    let base_split = split_over_sections(&c, &omega, &y1, &att, &rep)?;
                    let base_iw = iwasawa_over_section(&c, &omega, &y1, &att)?;
                    for _ in 0..5 {
                        let att2 = relabel(&att, &mut rng)?;
                        let rep2 = relabel(&rep, &mut rng)?;
                        let v = split_over_sections(&c, &omega, &y1, &att2, &rep2)?;
                        let w = iwasawa_over_section(&c, &omega, &y1, &att2)?;
                        representative = representative.max((v - base_split).abs()).max((w - base_iw).abs());
                    }
                }
            }
        }
        let passed = linear <= cfg.linearity_tol && representative <= cfg.representative_tol;
        Ok((
            passed,
            linear.max(representative),
            format!(
                "linearity defect {linear:.2e} (limit {:.0e}), stabilizer change {representative:.2e} (limit {:.0e})",
                cfg.linearity_tol, cfg.representative_tol
            ),
        ))
    })();
    finish(10, "differential linearity and frame independence", start, outcome, cfg.linearity_tol)
}

fn relabel(s: &Section, rng: &mut ChaCha8Rng) -> Result<Section> {
    let flags = s
        .flags
        .iter()
        .map(|f| FlagPoint::new(s.theta.clone(), &f.frame * &random_stabilizer(&s.theta, rng)))
        .collect::<Result<Vec<_>>>()?;
    Section::new(s.theta.clone(), flags)
}
