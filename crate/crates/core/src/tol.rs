//! Numerical thresholds shared by every module.

/// Central record of the tolerances used throughout the crate.
///
/// Functions that take an explicit tolerance argument ignore the matching
/// field here; everything else reads [`Tolerances::DEFAULT`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// `|det g - 1|` allowed for group elements.
    pub det: f64,
    /// `|trace Z|` allowed for algebra elements.
    pub trace: f64,
    /// Smallest admissible diagonal entry of a triangular QR factor.
    pub pivot: f64,
    /// Entrywise symmetry tolerance for positive-definiteness tests.
    pub symmetry: f64,
    /// Leading principal minors must exceed this to count as positive.
    pub positive_minor: f64,
    /// Strict-positivity proxy for semigroup interior membership.
    pub membership: f64,
    /// Defect allowed in `g^T J g = J`.
    pub symplectic: f64,
    /// Smallest singular value separating transversal subspace pairs.
    pub transversality: f64,
    /// Default invariance residual for section solvers.
    pub section: f64,
    /// Coefficient tolerance when testing weight admissibility.
    pub admissible: f64,
    /// Absolute floor for the gap tolerance used to read off flag types.
    pub gap_floor: f64,
    /// Relative part of the gap tolerance (times the largest simple-root gap).
    pub gap_relative: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        det: 1e-9,
        trace: 1e-9,
        pivot: 1e-14,
        symmetry: 1e-10,
        positive_minor: 1e-12,
        membership: 1e-12,
        symplectic: 1e-8,
        transversality: 1e-8,
        section: 1e-10,
        admissible: 1e-12,
        gap_floor: 1e-9,
        gap_relative: 1e-6,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}
