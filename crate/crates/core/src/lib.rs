//! Numerical laboratory for the constructive weak factorization of the
//! Hardy space `H^1(R^n)` through multilinear fractional integrals on
//! weighted Lebesgue spaces.
//!
//! Modules, bottom-up:
//!
//! * [`grid`]: truncation-box grids, sampled functions, quadrature.
//! * [`weights`]: weight classes, weighted norms, doubling exponents, BMO.
//! * [`operators`]: `I_alpha`, partial adjoints, `Pi_l`, commutators.
//! * [`atoms`]: `(1, q, 0)` atoms and the two-bump atomic decomposition.
//! * [`factorization`]: atom approximation, the iterative factorization and
//!   the duality checks.
//! * [`io`]: deterministic JSON/CSV output.

pub mod atoms;
pub mod error;
pub mod factorization;
pub mod grid;
pub mod io;
pub mod operators;
pub mod weights;

pub use atoms::{
    atomic_h1_bound, maximal_h1_estimate, two_bump_decompose, validate_atom, Atom, AtomReport,
    AtomicDecomposition,
};
pub use error::{Error, Result};
pub use factorization::{
    approximate_atom, approximate_atom_with, commutator_norm_estimate, duality_check, factorize,
    ApproxOptions, AtomApprox, DualityReport, FactorizationResult, FactorizationTerm,
    FactorizeParams, Normalizer, RoundError,
};
pub use grid::{ball_indicator, ball_measure, pointwise, Ball, Grid, GridFunction, PointwiseOp};
pub use operators::{
    apply_ialpha, apply_partial_adjoint, commutator, kernel_eval, pairing, pi_l, KernelParams,
};
pub use weights::{
    a_vecp_constant, ap_constant, apq_constant, bmo_norm, doubling_exponents, weighted_lp_norm,
    CubeFamily, DoublingFit, ExponentConfig, FunctionSpec, WeightVector,
};
