//! Structural analytics: ergodicity and contraction coefficients, the moving
//! target diameter, regret bounds, and a counterexample instance without
//! mixing.
//!
//! A `J`-stage window starting at `t` covers the operators (or kernels) at
//! times `t, ..., t + J - 1`.

mod bounds;
mod contraction;
mod counterexample;
mod diameter;

pub use bounds::{psi_gap_bound, regret_bound, RegretBound};
pub use contraction::{
    contraction_coefficient, eta_coefficient, verify_contraction, ContractionCertificate, ContractionMethod,
    ContractionMode, ContractionReport, DEFAULT_PAIR_BUDGET,
};
pub use counterexample::{counterexample_mdp, random_counterexample, Counterexample};
pub use diameter::{
    classical_diameter, diameter, diameter_with_cutoff, verify_diameter_bound, DiameterEstimate, DiameterReport,
};
