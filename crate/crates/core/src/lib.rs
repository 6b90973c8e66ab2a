//! Vector-valued Lyapunov spectra of matrix cocycles over finite measured
//! permutations, attractor sections on flag bundles, and the differential of
//! weight functionals of the spectrum under gauge perturbations.

pub mod basedyn;
pub mod error;
pub mod flagdyn;
pub mod gaugediff;
pub mod liealg;
pub mod matkit;
pub mod semigrp;
pub mod spectra;
pub mod suite;
pub mod tol;

pub use error::{Error, Result};
