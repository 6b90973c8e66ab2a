//! Experiment configuration: JSON schema, parsing with line diagnostics, and
//! resolution into core objects.

use std::path::{Path, PathBuf};

use lyapgauge::basedyn::{BaseSystem, Cocycle};
use lyapgauge::flagdyn::SolverOptions;
use lyapgauge::gaugediff::GaugeDirection;
use lyapgauge::liealg::{ThetaSet, WeightVector};
use lyapgauge::matkit::Matrix;
use lyapgauge::semigrp::{sample_cocycle, SemigroupSpec};
use serde::{Deserialize, Serialize};

use crate::error::{context, CliError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Master seed; sampler and gauge seeds default to values derived from it.
    #[serde(default)]
    pub seed: u64,
    pub base: BaseConfig,
    pub generators: GeneratorSource,
    #[serde(default)]
    pub ambient: Option<Ambient>,
    /// Weights as fundamental-weight coefficients `m_1..m_{d-1}`; defaults
    /// to `[[1, 0, ...]]` (the top exponent).
    #[serde(default)]
    pub weights: Vec<Vec<f64>>,
    #[serde(default)]
    pub gauge: GaugeSource,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Flag type for `section` (1-based simple roots); defaults to the
    /// estimated flag type.
    #[serde(default)]
    pub theta: Option<Vec<usize>>,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub derivative: DerivativeConfig,
    /// Semigroup family checked by `semigroup` when generators are explicit.
    #[serde(default)]
    pub semigroup: Option<SemigroupSpec>,
    /// Not echoed into reports, so identical runs into different
    /// directories produce identical files.
    #[serde(default, skip_serializing)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseConfig {
    pub n_points: usize,
    /// Permutation as a list of cycles; unlisted points are fixed.
    #[serde(default)]
    pub cycles: Vec<Vec<usize>>,
    /// Per-point measure weights (normalized); uniform when absent.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSource {
    /// One row-major matrix per point.
    Explicit { matrices: Vec<Matrix> },
    /// The same matrix at every point.
    Constant { matrix: Matrix },
    /// Independent interior samples of a semigroup.
    Sampler {
        family: SemigroupSpec,
        #[serde(default)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Ambient {
    /// `SL(d)`.
    D(usize),
    /// `Sp(2n)` inside `SL(2n)`.
    SymplecticN(usize),
}

impl Ambient {
    fn dim(&self) -> usize {
        match self {
            Ambient::D(d) => *d,
            Ambient::SymplecticN(n) => 2 * n,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GaugeSource {
    Zero,
    Explicit {
        matrices: Vec<Matrix>,
    },
    #[default]
    Random,
    #[serde(rename = "random-seeded")]
    RandomSeeded {
        seed: u64,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: Option<usize>,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        SolverConfig {
            tol: d.tol,
            max_iter: d.max_iter,
            seed: d.seed,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Finite horizon; the exact periodic spectrum is used when absent.
    pub n: Option<usize>,
    /// Gap tolerance for the flag type estimate.
    pub eps: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DerivativeConfig {
    pub steps: Vec<f64>,
    pub scan: ScanConfig,
}

impl Default for DerivativeConfig {
    fn default() -> Self {
        DerivativeConfig {
            steps: vec![1e-4],
            scan: ScanConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            t_min: -0.05,
            t_max: 0.05,
            points: 11,
        }
    }
}

impl ScanConfig {
    pub fn grid(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.t_min],
            n => (0..n)
                .map(|k| self.t_min + (self.t_max - self.t_min) * k as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
}

pub fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path, ov: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg: ExperimentConfig = parse_json(path, &read_file(path)?)?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::Invalid(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &ov.out {
        cfg.output.dir = out.clone();
    }
    if let Some(tol) = ov.tol {
        cfg.solver.tol = tol;
    }
    Ok(cfg)
}

/// A validated configuration with every seed made explicit.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub cocycle: Cocycle,
    pub weights: Vec<WeightVector>,
    pub gauge: GaugeDirection,
    pub solver: SolverOptions,
    pub symplectic: bool,
}

impl Resolved {
    pub fn dim(&self) -> usize {
        self.cocycle.dim()
    }

    pub fn theta(&self) -> Result<Option<ThetaSet>, CliError> {
        match &self.config.theta {
            None => Ok(None),
            Some(idx) => ThetaSet::new(self.dim(), idx.iter().copied())
                .map(Some)
                .map_err(context("theta")),
        }
    }
}

pub fn resolve(mut cfg: ExperimentConfig) -> Result<Resolved, CliError> {
    if !(cfg.solver.tol > 0.0) {
        return Err(CliError::Invalid(format!("solver.tol must be positive, got {}", cfg.solver.tol)));
    }
    let base = BaseSystem::from_cycles(cfg.base.n_points, &cfg.base.cycles, cfg.base.weights.as_deref())
        .map_err(context("base"))?;
    let master = cfg.seed;
    let cocycle = match &mut cfg.generators {
        GeneratorSource::Explicit { matrices } => Cocycle::new(base, matrices.clone()).map_err(context("generators"))?,
        GeneratorSource::Constant { matrix } => Cocycle::constant(base, matrix.clone()).map_err(context("generators"))?,
        GeneratorSource::Sampler { family, seed } => {
            let s = *seed.get_or_insert(master);
            sample_cocycle(family, base, s).map_err(context("generators"))?
        }
    };
    let d = cocycle.dim();
    if let Some(amb) = &cfg.ambient {
        if amb.dim() != d {
            return Err(CliError::Invalid(format!(
                "ambient: dimension {} does not match generators of size {d}",
                amb.dim()
            )));
        }
    }
    let symplectic = matches!(cfg.ambient, Some(Ambient::SymplecticN(_)))
        || matches!(
            cfg.generators,
            GeneratorSource::Sampler {
                family: SemigroupSpec::SymplecticQ { .. },
                ..
            }
        );
    if symplectic {
        for (x, g) in cocycle.generators().iter().enumerate() {
            let defect = lyapgauge::semigrp::symplectic_defect(g);
            if defect > 1e-8 {
                return Err(CliError::Invalid(format!(
                    "generators[{x}]: not symplectic (defect {defect:e})"
                )));
            }
        }
    }
    if cfg.weights.is_empty() {
        let mut m = vec![0.0; d - 1];
        m[0] = 1.0;
        cfg.weights.push(m);
    }
    let weights = cfg
        .weights
        .iter()
        .enumerate()
        .map(|(k, m)| {
            if m.len() != d - 1 {
                return Err(CliError::Invalid(format!(
                    "weights[{k}]: expected {} fundamental coefficients, got {}",
                    d - 1,
                    m.len()
                )));
            }
            WeightVector::from_fundamental(d, m).map_err(|e| CliError::Invalid(format!("weights[{k}]: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n_points = cocycle.base().n_points();
    if matches!(cfg.gauge, GaugeSource::Random) {
        cfg.gauge = GaugeSource::RandomSeeded {
            seed: master.wrapping_add(1),
            scale: 1.0,
        };
    }
    let gauge = match &cfg.gauge {
        GaugeSource::Zero => GaugeDirection::zeros(n_points, d),
        GaugeSource::Explicit { matrices } => {
            if matrices.len() != n_points {
                return Err(CliError::Invalid(format!(
                    "gauge: {} matrices for {n_points} points",
                    matrices.len()
                )));
            }
            if symplectic {
                GaugeDirection::symplectic(matrices.clone()).map_err(context("gauge"))?
            } else {
                GaugeDirection::new(matrices.clone()).map_err(context("gauge"))?
            }
        }
        GaugeSource::RandomSeeded { seed, scale } => {
            if symplectic {
                GaugeDirection::random_symplectic(n_points, d / 2, *scale, *seed)
            } else {
                GaugeDirection::random(n_points, d, *scale, *seed)
            }
        }
        GaugeSource::Random => unreachable!("resolved above"),
    };
    if gauge.dim() != d {
        return Err(CliError::Invalid(format!("gauge: matrices of size {} for d = {d}", gauge.dim())));
    }
    for (k, h) in cfg.derivative.steps.iter().enumerate() {
        if !(*h > 0.0) || !h.is_finite() {
            return Err(CliError::Invalid(format!("derivative.steps[{k}]: step must be positive, got {h}")));
        }
    }
    if cfg.derivative.steps.is_empty() {
        return Err(CliError::Invalid("derivative.steps: at least one step is required".into()));
    }
    let scan = &cfg.derivative.scan;
    if !scan.t_min.is_finite() || !scan.t_max.is_finite() || scan.t_min > scan.t_max {
        return Err(CliError::Invalid(format!(
            "derivative.scan: bad interval [{}, {}]",
            scan.t_min, scan.t_max
        )));
    }
    if cfg.spectrum.n == Some(0) {
        return Err(CliError::Invalid("spectrum.n: horizon must be at least 1".into()));
    }
    if let Some(eps) = cfg.spectrum.eps {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(CliError::Invalid(format!("spectrum.eps: must be non-negative, got {eps}")));
        }
    }
    if let Some(spec) = &cfg.semigroup {
        spec.validate().map_err(context("semigroup"))?;
    }
    let solver = SolverOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        seed: cfg.solver.seed,
    };
    Ok(Resolved {
        config: cfg,
        cocycle,
        weights,
        gauge,
        solver,
        symplectic,
    })
}
