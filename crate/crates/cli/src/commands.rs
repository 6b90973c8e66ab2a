use std::path::{Path, PathBuf};

use lyapgauge::flagdyn::{attractor_section, contraction_rate, repeller_section, transversality_check, SectionSolution};
use lyapgauge::gaugediff::{
    analytic_differential, differential_theta, finite_difference, iwasawa_differential, smoothness_scan,
    FiniteDifference,
};
use lyapgauge::liealg::{ThetaSet, WeightVector};
use lyapgauge::semigrp::{verify_gap_predictions, GapReport, SemigroupSpec, VerifyOptions};
use lyapgauge::spectra::{flag_type_estimate, spectrum_functional, spectrum_report, spectrum_report_finite, SpectrumReport};
use lyapgauge::suite::{run_criterion, CriterionResult, SuiteConfig, SuiteReport};
use lyapgauge::Error as CoreError;
use serde::Serialize;

use crate::config::{parse_json, read_file, ExperimentConfig, GeneratorSource, Resolved};
use crate::error::CliError;

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(&path, e))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn write_csv(dir: &Path, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e))?;
    w.write_record(header).map_err(|e| CliError::io(&path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| CliError::io(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Serialize)]
struct WeightValue {
    fundamental: Vec<f64>,
    value: f64,
}

#[derive(Serialize)]
struct SpectrumOutput<'a> {
    config: &'a ExperimentConfig,
    report: SpectrumReport,
    functionals: Vec<WeightValue>,
}

pub fn spectrum(r: &Resolved) -> Result<Vec<PathBuf>, CliError> {
    let c = &r.cocycle;
    let report = match r.config.spectrum.n {
        Some(n) => spectrum_report_finite(c, n, r.config.spectrum.eps)?,
        None => spectrum_report(c, r.config.spectrum.eps)?,
    };
    let functionals = r
        .weights
        .iter()
        .map(|w| {
            Ok(WeightValue {
                fundamental: w.fundamental_coords(),
                value: w.eval(&report.mean),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let d = r.dim();
    let mut header = vec!["x".to_string()];
    header.extend((1..=d).map(|i| format!("h_{i}")));
    header.extend((1..d).map(|i| format!("gap_{i}")));
    let rows: Vec<Vec<String>> = report
        .per_point
        .iter()
        .enumerate()
        .map(|(x, h)| {
            let mut row = vec![x.to_string()];
            row.extend(h.values().iter().map(|v| fmt(*v)));
            row.extend(h.gaps().into_iter().map(fmt));
            row
        })
        .collect();
    println!(
        "mean spectrum {:?}, flag type {:?}",
        report.mean.values(),
        report.theta.indices()
    );
    let dir = &r.config.output.dir;
    let csv = write_csv(dir, "spectrum.csv", &header, &rows)?;
    let json = write_json(
        dir,
        "spectrum.json",
        &SpectrumOutput {
            config: &r.config,
            report,
            functionals,
        },
    )?;
    Ok(vec![json, csv])
}

#[derive(Serialize)]
struct SectionOutput<'a> {
    config: &'a ExperimentConfig,
    theta: Vec<usize>,
    dual_theta: Vec<usize>,
    attractor: SectionSolution,
    attractor_contraction: Option<f64>,
    repeller: SectionSolution,
    repeller_contraction: Option<f64>,
    transversal: Vec<bool>,
    all_transversal: bool,
}

#[derive(Serialize)]
struct FailureOutput<'a> {
    config: &'a ExperimentConfig,
    status: &'static str,
    stage: &'static str,
    max_iter: usize,
    last_residual: f64,
    history: &'a [f64],
}

fn section_type(r: &Resolved) -> Result<ThetaSet, CliError> {
    match r.theta()? {
        Some(t) => Ok(t),
        None => Ok(flag_type_estimate(&r.cocycle, r.config.spectrum.eps.unwrap_or(0.0).max(1e-9))?),
    }
}

/// Writes the residual history next to the other outputs before the error
/// propagates.
fn record_failure(r: &Resolved, stage: &'static str, e: CoreError) -> CliError {
    if let CoreError::NoConvergence {
        max_iter,
        last_residual,
        history,
    } = &e
    {
        let out = FailureOutput {
            config: &r.config,
            status: "no-convergence",
            stage,
            max_iter: *max_iter,
            last_residual: *last_residual,
            history,
        };
        if let Err(io) = write_json(&r.config.output.dir, "section_failure.json", &out) {
            return io;
        }
    }
    CliError::Core(e)
}

pub fn section(r: &Resolved) -> Result<Vec<PathBuf>, CliError> {
    let c = &r.cocycle;
    let theta = section_type(r)?;
    let floor = r.solver.tol;
    let attractor = attractor_section(c, &theta, &r.solver).map_err(|e| record_failure(r, "attractor", e))?;
    let repeller = repeller_section(c, &theta, &r.solver).map_err(|e| record_failure(r, "repeller", e))?;
    let transversal = transversality_check(&attractor.section, &repeller.section)?;
    let all_transversal = transversal.iter().all(|t| *t);
    println!(
        "flag type {:?}: attractor residual {:.3e} after {} sweeps, repeller residual {:.3e}, transversal {}",
        theta.indices(),
        attractor.residual,
        attractor.history.len(),
        repeller.residual,
        all_transversal
    );
    let out = SectionOutput {
        config: &r.config,
        theta: theta.indices(),
        dual_theta: theta.dual().indices(),
        attractor_contraction: contraction_rate(&attractor.history, floor),
        repeller_contraction: contraction_rate(&repeller.history, floor),
        attractor,
        repeller,
        transversal,
        all_transversal,
    };
    Ok(vec![write_json(&r.config.output.dir, "section.json", &out)?])
}

#[derive(Serialize)]
struct WeightDerivative {
    fundamental: Vec<f64>,
    theta: Vec<usize>,
    value: f64,
    analytic: f64,
    iwasawa_formula: f64,
    finite_differences: Vec<FiniteDifference>,
    /// `|analytic − slope| / (1 + |analytic|)` at the first step.
    residual: f64,
}

#[derive(Serialize)]
struct DerivativeOutput<'a> {
    config: &'a ExperimentConfig,
    weights: Vec<WeightDerivative>,
}

fn one_weight(r: &Resolved, w: &WeightVector) -> Result<WeightDerivative, CliError> {
    let c = &r.cocycle;
    let theta = differential_theta(c, w)?;
    let analytic = analytic_differential(c, w, &r.gauge, &r.solver).map_err(|e| record_failure(r, "differential", e))?;
    let iwasawa = iwasawa_differential(c, w, &r.gauge, &r.solver)?;
    let finite_differences = r
        .config
        .derivative
        .steps
        .iter()
        .map(|&h| finite_difference(c, w, &r.gauge, h))
        .collect::<Result<Vec<_>, _>>()?;
    let residual = (analytic - finite_differences[0].slope).abs() / (1.0 + analytic.abs());
    Ok(WeightDerivative {
        fundamental: w.fundamental_coords(),
        theta: theta.indices(),
        value: spectrum_functional(c, w)?,
        analytic,
        iwasawa_formula: iwasawa,
        finite_differences,
        residual,
    })
}

pub fn derivative(r: &Resolved) -> Result<Vec<PathBuf>, CliError> {
    let weights = r
        .weights
        .iter()
        .map(|w| one_weight(r, w))
        .collect::<Result<Vec<_>, _>>()?;
    for w in &weights {
        println!(
            "weight {:?}: analytic {:.12e}, finite difference {:.12e}, residual {:.2e}",
            w.fundamental, w.analytic, w.finite_differences[0].slope, w.residual
        );
    }
    let grid = r.config.derivative.scan.grid();
    let d = r.dim();
    let mut header = vec!["t".to_string()];
    header.extend((0..r.weights.len()).map(|k| format!("value_{k}")));
    header.extend((1..d).map(|i| format!("gap_{i}")));
    let scans = r
        .weights
        .iter()
        .map(|w| smoothness_scan(&r.cocycle, w, &r.gauge, &grid))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<Vec<String>> = (0..grid.len())
        .map(|i| {
            let mut row = vec![fmt(grid[i])];
            row.extend(scans.iter().map(|s| fmt(s[i].value)));
            if let Some(first) = scans.first() {
                row.extend(first[i].gaps.iter().map(|g| fmt(*g)));
            }
            row
        })
        .collect();
    let dir = &r.config.output.dir;
    let json = write_json(
        dir,
        "derivative.json",
        &DerivativeOutput {
            config: &r.config,
            weights,
        },
    )?;
    let csv = write_csv(dir, "derivative_scan.csv", &header, &rows)?;
    Ok(vec![json, csv])
}

#[derive(Serialize)]
struct SemigroupOutput<'a> {
    config: &'a ExperimentConfig,
    report: GapReport,
}

pub fn semigroup(r: &Resolved) -> Result<Vec<PathBuf>, CliError> {
    let spec: SemigroupSpec = match (&r.config.semigroup, &r.config.generators) {
        (Some(s), _) => s.clone(),
        (None, GeneratorSource::Sampler { family, .. }) => family.clone(),
        _ => {
            return Err(CliError::Invalid(
                "semigroup: explicit generators need a `semigroup` family to check against".into(),
            ))
        }
    };
    let opts = VerifyOptions {
        step: r.config.derivative.steps[0],
        seed: r.config.seed,
        solver: r.solver.clone(),
        ..VerifyOptions::default()
    };
    let report = verify_gap_predictions(&r.cocycle, &spec, &opts)?;
    println!(
        "{}: predicted {:?}, estimated {:?}, contained {}",
        spec.name(),
        report.predicted_theta.indices(),
        report.estimated_theta.indices(),
        report.contained
    );
    Ok(vec![write_json(
        &r.config.output.dir,
        "semigroup.json",
        &SemigroupOutput { config: &r.config, report },
    )?])
}

pub struct VerifyRequest {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub out: PathBuf,
    pub criteria: Vec<u8>,
}

pub fn verify(req: &VerifyRequest) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg: SuiteConfig = match &req.config {
        Some(p) => parse_json(p, &read_file(p)?)?,
        None => SuiteConfig::default(),
    };
    if let Some(seed) = req.seed {
        cfg.seed = seed;
    }
    if let Some(tol) = req.tol {
        cfg.residual_tol = tol;
    }
    let ids: Vec<u8> = if req.criteria.is_empty() {
        (1..=10).collect()
    } else {
        req.criteria.clone()
    };
    let mut results: Vec<CriterionResult> = Vec::new();
    for id in ids {
        let res = run_criterion(&cfg, id).ok_or_else(|| CliError::Usage(format!("no criterion {id}; ids are 1..=10")))?;
        println!("{}", res.line());
        results.push(res);
    }
    let failed: Vec<u8> = results.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    let report = SuiteReport {
        config: cfg,
        all_passed: failed.is_empty(),
        criteria: results,
    };
    let path = write_json(&req.out, "verify.json", &report)?;
    if failed.is_empty() {
        Ok(vec![path])
    } else {
        Err(CliError::SuiteFailed(failed))
    }
}
