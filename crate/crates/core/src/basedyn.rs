//! Finite measured base systems and matrix cocycles over them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::Matrix;

/// Relative tolerance for `τ`-invariance of the measure.
const INVARIANCE_TOL: f64 = 1e-12;

/// Permutation `τ` of `{0..N−1}` with a strictly positive invariant
/// probability vector `ν`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BaseRepr", into = "BaseRepr")]
pub struct BaseSystem {
    tau: Vec<usize>,
    nu: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BaseRepr {
    tau: Vec<usize>,
    nu: Vec<f64>,
}

impl TryFrom<BaseRepr> for BaseSystem {
    type Error = Error;
    fn try_from(r: BaseRepr) -> Result<Self> {
        BaseSystem::new(r.tau, r.nu)
    }
}

impl From<BaseSystem> for BaseRepr {
    fn from(b: BaseSystem) -> Self {
        BaseRepr {
            tau: b.tau,
            nu: b.nu,
        }
    }
}

/// One `τ`-orbit: points in visiting order `x, τx, τ²x, …`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cycle {
    pub points: Vec<usize>,
    /// Measure of each point on the cycle.
    pub point_weight: f64,
}

impl Cycle {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.point_weight * self.points.len() as f64
    }
}

impl BaseSystem {
    /// Validates the permutation and the measure; `nu` is normalized to sum 1.
    pub fn new(tau: Vec<usize>, nu: Vec<f64>) -> Result<Self> {
        let n = tau.len();
        if n == 0 {
            return Err(Error::InvalidBase("empty base".into()));
        }
        if nu.len() != n {
            return Err(Error::InvalidBase(format!(
                "measure has {} entries for {n} points",
                nu.len()
            )));
        }
        let mut seen = vec![false; n];
        for &t in &tau {
            if t >= n || std::mem::replace(&mut seen[t], true) {
                return Err(Error::MalformedPermutation(format!(
                    "tau = {tau:?} is not a permutation of 0..{n}"
                )));
            }
        }
        if let Some((x, w)) = nu.iter().enumerate().find(|(_, w)| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidBase(format!(
                "measure must be strictly positive; nu[{x}] = {w}"
            )));
        }
        let total: f64 = nu.iter().sum();
        let nu: Vec<f64> = nu.iter().map(|w| w / total).collect();
        for x in 0..n {
            let (a, b) = (nu[x], nu[tau[x]]);
            if (a - b).abs() > INVARIANCE_TOL * a.max(b) {
                return Err(Error::InvalidBase(format!(
                    "measure is not tau-invariant: nu[{x}] = {a} but nu[{}] = {b}",
                    tau[x]
                )));
            }
        }
        Ok(BaseSystem { tau, nu })
    }

    /// Base from a cycle list; points not listed are fixed points. `weights`
    /// gives the per-point measure on each cycle (uniform if `None`).
    pub fn from_cycles(n_points: usize, cycles: &[Vec<usize>], weights: Option<&[f64]>) -> Result<Self> {
        let mut tau: Vec<usize> = (0..n_points).collect();
        let mut used = vec![false; n_points];
        for c in cycles {
            for &p in c {
                if p >= n_points || std::mem::replace(&mut used[p], true) {
                    return Err(Error::MalformedPermutation(format!(
                        "cycle list {cycles:?} repeats or exceeds point {p}"
                    )));
                }
            }
            for (i, &p) in c.iter().enumerate() {
                tau[p] = c[(i + 1) % c.len()];
            }
        }
        let nu = match weights {
            Some(w) => w.to_vec(),
            None => vec![1.0; n_points],
        };
        Self::new(tau, nu)
    }

    /// Single `n`-cycle `x ↦ x+1 mod n` with uniform measure.
    pub fn cyclic(n: usize) -> Self {
        Self::new((0..n).map(|x| (x + 1) % n).collect(), vec![1.0; n]).expect("valid cycle")
    }

    /// `n` fixed points with uniform measure.
    pub fn fixed_points(n: usize) -> Self {
        Self::new((0..n).collect(), vec![1.0; n]).expect("valid identity")
    }

    /// Random permutation of `n` points with a random invariant measure.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tau: Vec<usize> = (0..n).collect();
        tau.shuffle(&mut rng);
        let mut nu = vec![0.0; n];
        let mut visited = vec![false; n];
        for start in 0..n {
            if visited[start] {
                continue;
            }
            let w = rng.random_range(0.5..2.0);
            let mut x = start;
            while !visited[x] {
                visited[x] = true;
                nu[x] = w;
                x = tau[x];
            }
        }
        Self::new(tau, nu).expect("constructed invariant")
    }

    pub fn n_points(&self) -> usize {
        self.tau.len()
    }

    pub fn tau(&self, x: usize) -> usize {
        self.tau[x]
    }

    pub fn tau_table(&self) -> &[usize] {
        &self.tau
    }

    pub fn nu(&self, x: usize) -> f64 {
        self.nu[x]
    }

    pub fn nu_table(&self) -> &[f64] {
        &self.nu
    }

    /// `τⁿ(x)`.
    pub fn tau_pow(&self, n: usize, mut x: usize) -> usize {
        for _ in 0..n {
            x = self.tau[x];
        }
        x
    }

    pub fn tau_inverse_table(&self) -> Vec<usize> {
        let mut inv = vec![0; self.tau.len()];
        for (x, &t) in self.tau.iter().enumerate() {
            inv[t] = x;
        }
        inv
    }

    /// The base over `τ^{-1}` with the same measure.
    pub fn inverse(&self) -> Self {
        BaseSystem {
            tau: self.tau_inverse_table(),
            nu: self.nu.clone(),
        }
    }

    pub fn check_point(&self, x: usize) -> Result<()> {
        if x >= self.n_points() {
            return Err(Error::IndexError(format!(
                "point {x} outside base of {} points",
                self.n_points()
            )));
        }
        Ok(())
    }

    /// Length of the `τ`-cycle through `x`.
    pub fn period(&self, x: usize) -> usize {
        let mut y = self.tau[x];
        let mut l = 1;
        while y != x {
            y = self.tau[y];
            l += 1;
        }
        l
    }
}

/// Disjoint cycles covering `X`, each starting at its smallest point.
pub fn cycle_decomposition(b: &BaseSystem) -> Vec<Cycle> {
    let n = b.n_points();
    let mut visited = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if visited[start] {
            continue;
        }
        let mut points = Vec::new();
        let mut x = start;
        while !visited[x] {
            visited[x] = true;
            points.push(x);
            x = b.tau(x);
        }
        out.push(Cycle {
            point_weight: b.nu(start),
            points,
        });
    }
    out
}

/// Cocycle over a base system, generated by `x ↦ ρ(1,x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CocycleRepr", into = "CocycleRepr")]
pub struct Cocycle {
    base: BaseSystem,
    gens: Vec<Matrix>,
}

#[derive(Serialize, Deserialize)]
struct CocycleRepr {
    base: BaseSystem,
    generators: Vec<Matrix>,
}

impl TryFrom<CocycleRepr> for Cocycle {
    type Error = Error;
    fn try_from(r: CocycleRepr) -> Result<Self> {
        Cocycle::new(r.base, r.generators)
    }
}

impl From<Cocycle> for CocycleRepr {
    fn from(c: Cocycle) -> Self {
        CocycleRepr {
            base: c.base,
            generators: c.gens,
        }
    }
}

impl Cocycle {
    /// Every generator must have unit determinant and a common dimension.
    pub fn new(base: BaseSystem, gens: Vec<Matrix>) -> Result<Self> {
        if gens.len() != base.n_points() {
            return Err(Error::InvalidBase(format!(
                "{} generators for {} points",
                gens.len(),
                base.n_points()
            )));
        }
        let d = gens[0].dim();
        for g in &gens {
            if g.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: g.dim(),
                });
            }
            g.check_unit_det()?;
        }
        Ok(Cocycle { base, gens })
    }

    /// Same generator at every point.
    pub fn constant(base: BaseSystem, g: Matrix) -> Result<Self> {
        let n = base.n_points();
        Self::new(base, vec![g; n])
    }

    pub fn base(&self) -> &BaseSystem {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.gens[0].dim()
    }

    pub fn generator(&self, x: usize) -> &Matrix {
        &self.gens[x]
    }

    pub fn generators(&self) -> &[Matrix] {
        &self.gens
    }

    /// Generators met along the orbit of `x` for `n` steps, in order.
    pub fn orbit_generators(&self, n: usize, x: usize) -> Vec<&Matrix> {
        let mut out = Vec::with_capacity(n);
        let mut y = x;
        for _ in 0..n {
            out.push(&self.gens[y]);
            y = self.base.tau(y);
        }
        out
    }

    /// Generators of the period map at `x`, first factor first.
    pub fn period_factors(&self, x: usize) -> Vec<Matrix> {
        let l = self.base.period(x);
        self.orbit_generators(l, x).into_iter().cloned().collect()
    }

    /// Cocycle over `τ^{-1}` generated by `x ↦ ρ(1, τ^{-1}x)^{-1}`.
    pub fn inverse(&self) -> Result<Self> {
        let inv_tau = self.base.tau_inverse_table();
        let gens = (0..self.base.n_points())
            .map(|x| self.gens[inv_tau[x]].inverse())
            .collect::<Result<Vec<_>>>()?;
        Cocycle::new(self.base.inverse(), gens)
    }
}

/// `ρ(n,x) = ρ(1,τ^{n−1}x) ··· ρ(1,x)`, formed explicitly.
pub fn cocycle_step(c: &Cocycle, n: usize, x: usize) -> Result<Matrix> {
    c.base.check_point(x)?;
    Ok(c
        .orbit_generators(n, x)
        .into_iter()
        .fold(Matrix::identity(c.dim()), |acc, g| g * &acc))
}

/// Cocycle generated by `x ↦ f(x) ρ(1,x)`.
pub fn perturb(c: &Cocycle, f: &[Matrix]) -> Result<Cocycle> {
    if f.len() != c.base.n_points() {
        return Err(Error::InvalidBase(format!(
            "gauge table has {} entries for {} points",
            f.len(),
            c.base.n_points()
        )));
    }
    for m in f {
        if m.dim() != c.dim() {
            return Err(Error::DimensionMismatch {
                expected: c.dim(),
                got: m.dim(),
            });
        }
        m.check_unit_det()?;
    }
    let gens = f.iter().zip(&c.gens).map(|(fx, g)| fx * g).collect();
    Cocycle::new(c.base.clone(), gens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkit::mat_exp;
    use nalgebra::DMatrix;

    fn random_sl(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
        loop {
            let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let det: f64 = m.determinant();
            if det > 0.05 {
                return Matrix::from_na(m / det.powf(1.0 / d as f64)).unwrap();
            }
        }
    }

    fn random_cocycle(n: usize, d: usize, seed: u64) -> Cocycle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = BaseSystem::random(n, seed);
        let gens = (0..n).map(|_| random_sl(d, &mut rng)).collect();
        Cocycle::new(base, gens).unwrap()
    }

    #[test]
    fn step_examples() {
        let c = random_cocycle(3, 3, 1);
        assert_eq!(cocycle_step(&c, 0, 1).unwrap(), Matrix::identity(3));
        let g = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let c = Cocycle::constant(BaseSystem::fixed_points(1), g.clone()).unwrap();
        let g3 = &(&g * &g) * &g;
        assert!(cocycle_step(&c, 3, 0).unwrap().rel_dist(&g3) < 1e-15);
        let g0 = Matrix::from_diagonal(&[2.0, 0.5]);
        let g1 = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let c = Cocycle::new(BaseSystem::cyclic(2), vec![g0.clone(), g1.clone()]).unwrap();
        assert_eq!(cocycle_step(&c, 2, 0).unwrap(), &g1 * &g0);
    }

    #[test]
    fn flow_property() {
        for seed in 0..10 {
            let c = random_cocycle(6, 3, seed);
            for x in 0..6 {
                for n in 0..8 {
                    for m in 0..8 {
                        let lhs = cocycle_step(&c, n + m, x).unwrap();
                        let rhs = &cocycle_step(&c, n, c.base().tau_pow(m, x)).unwrap()
                            * &cocycle_step(&c, m, x).unwrap();
                        assert!(lhs.rel_dist(&rhs) < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn perturb_examples() {
        let c = random_cocycle(4, 3, 2);
        let ids = vec![Matrix::identity(3); 4];
        assert_eq!(perturb(&c, &ids).unwrap(), c);

        let h = Matrix::from_diagonal(&[2.0, 0.5]);
        let g = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let c2 = Cocycle::constant(BaseSystem::cyclic(3), g.clone()).unwrap();
        let p = perturb(&c2, &vec![h.clone(); 3]).unwrap();
        assert_eq!(p.generator(1), &(&h * &g));

        let f: Vec<Matrix> = (0..4)
            .map(|x| {
                let z = Matrix::from_diagonal(&[0.1 * x as f64, 0.2, -0.2 - 0.1 * x as f64]);
                let off = Matrix::from_rows(&[
                    vec![0.0, 0.3, 0.0],
                    vec![0.0, 0.0, -0.4],
                    vec![0.5, 0.0, 0.0],
                ])
                .unwrap();
                mat_exp(&(&z + &off))
            })
            .collect();
        let finv: Vec<Matrix> = f.iter().map(|m| m.inverse().unwrap()).collect();
        let back = perturb(&perturb(&c, &f).unwrap(), &finv).unwrap();
        for x in 0..4 {
            assert!((&back.generators()[x] - c.generator(x)).max_abs() < 1e-12);
        }
        assert!(matches!(
            perturb(&c, &vec![Matrix::from_diagonal(&[2.0, 1.0, 1.0]); 4]),
            Err(Error::DeterminantError { .. })
        ));
    }

    #[test]
    fn cycles() {
        let cs = cycle_decomposition(&BaseSystem::fixed_points(3));
        assert_eq!(cs.len(), 3);
        assert!(cs.iter().all(|c| c.len() == 1));
        let cs = cycle_decomposition(&BaseSystem::cyclic(5));
        assert_eq!(cs.len(), 1);
        assert_eq!(cs[0].points, vec![0, 1, 2, 3, 4]);
        assert!((cs[0].point_weight - 0.2).abs() < 1e-15);
        let b = BaseSystem::new(vec![1, 0, 2], vec![1.0, 1.0, 2.0]).unwrap();
        let cs = cycle_decomposition(&b);
        assert_eq!(cs[0].points, vec![0, 1]);
        assert_eq!(cs[1].points, vec![2]);
        assert!((cs[0].total_weight() - 0.5).abs() < 1e-15);
        assert!((cs[1].total_weight() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn base_validation() {
        assert!(matches!(
            BaseSystem::new(vec![0, 0], vec![1.0, 1.0]),
            Err(Error::MalformedPermutation(_))
        ));
        assert!(matches!(
            BaseSystem::new(vec![1, 0], vec![1.0, 2.0]),
            Err(Error::InvalidBase(_))
        ));
        assert!(BaseSystem::new(vec![0, 1], vec![1.0, 0.0]).is_err());
        assert!(BaseSystem::from_cycles(4, &[vec![0, 1], vec![1, 2]], None).is_err());
        let b = BaseSystem::from_cycles(4, &[vec![0, 2]], None).unwrap();
        assert_eq!(b.tau_table(), &[2, 1, 0, 3]);
        assert_eq!(b.period(0), 2);
        assert_eq!(b.period(3), 1);
        for seed in 0..20 {
            let b = BaseSystem::random(16, seed);
            for x in 0..16 {
                assert!((b.nu(x) - b.nu(b.tau(x))).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn serde_round_trip_validates() {
        let c = random_cocycle(3, 2, 9);
        let s = serde_json::to_string(&c).unwrap();
        let back: Cocycle = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let bad = r#"{"base":{"tau":[1,0],"nu":[0.5,0.5]},"generators":[[[2,0],[0,1]],[[1,0],[0,1]]]}"#;
        assert!(serde_json::from_str::<Cocycle>(bad).is_err());
    }

    #[test]
    fn inverse_cocycle_undoes_steps() {
        let c = random_cocycle(5, 3, 4);
        let inv = c.inverse().unwrap();
        for x in 0..5 {
            let fwd = cocycle_step(&c, 3, x).unwrap();
            let y = c.base().tau_pow(3, x);
            let back = cocycle_step(&inv, 3, y).unwrap();
            assert!((&(&back * &fwd) - &Matrix::identity(3)).max_abs() < 1e-9);
        }
    }
}
