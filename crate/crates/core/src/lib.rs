//! Generalized Calabi functionals on circle-symmetric Kähler geometries.
//!
//! A Kähler class with a circle action is reduced to calculus on the moment
//! interval: a metric is a momentum profile `Θ(x)`, the volume form pushes
//! forward to `C_vol · w(x) dx`, and the scalar curvature is
//! `s = (A − (wΘ)″) / w`. On top of that reduction this crate evaluates the
//! functionals `S = ∫ f(s) h(φ) ωᵐ`, tests the Euler–Lagrange condition
//! (`f′(s) h(φ)` must be affine in `x`), checks the class invariants
//! (Futaki invariant, equivariant integrals), verifies the first-variation
//! formulas against finite differences, and solves for critical metrics.
//!
//! All numerical work happens on a single Chebyshev–Gauss–Lobatto grid.

pub mod discretization;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod io;
pub mod potentials;
pub mod reports;
pub mod solver;
pub mod variation;

pub use discretization::{
    affine_projection, boundary_bump, chebyshev_sum, random_admissible_profile,
    random_coefficients, AffineFit, SampledFunction, SpectralGrid,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use geometry::{
    class_constants, make_cp1_geometry, make_cpm_geometry, round_profile, scalar_curvature,
    validate, ClassConstants, GeometryKind, MetricProfile, ProfileGeometry, Tolerances, Violation,
    ViolationKind, DEFAULT_NODES,
};
pub use potentials::{
    el_potential, equivariant_integral, eval_s, futaki, holomorphy_defect, lichnerowicz,
    lichnerowicz_energy, lichnerowicz_pairing, normalize_potential, quadratic_form_kernel,
    total_scalar_moment, ComplexSampledFunction, ELReport, FunctionDescriptor, HolomorphyPotential,
};
pub use solver::{
    iterate, residual_minimize, solve_critical, CriticalSolveResult, IterationTrace,
    MinimizeOptions, SolveOutcome, SolverOptions, StepStatus,
};
pub use variation::{Conventions, DeformationPath, PINNED_CONVENTIONS};
