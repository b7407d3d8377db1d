//! Closed-form and semi-analytic work moments.

pub mod perturbative;
pub mod quadrature;
pub mod unitary;

pub use perturbative::{
    heisenberg_shift, perturbative_u, transmission_t0, transmission_t1, transmission_tn, truncated_calorimetric_moment,
    truncated_distribution, truncated_projective_moment, PerturbativeElement, TruncatedDistribution, TruncationPolicy,
};
pub use unitary::{
    drive_displacement, mu, unitary_calorimetric_moment, unitary_calorimetric_moments, unitary_projective_moments, unitary_t0, w_nk,
    zero_temperature_calorimetric,
};
