//! Finite-type Markov additive processes.

mod laplace;
mod sim;
mod spec;
mod spectral;

pub use laplace::{empirical_laplace_matrix, wald_martingale_mean, LaplaceEstimate};
pub use sim::{sample_endpoint, sample_map_path, sample_prepared, Event, JumpKind, JumpRecord, MapPath, MapSampler, Prepared, Segment};
pub use spec::{validate_spec, JumpAtom, LevyComponent, MapSpec, TransitionJump, TypeIndex};
pub use spectral::{
    chi, chi_prime, chi_w, cramer_number, dual_spec, matrix_exponent, negated_spec, spectral_data, stationary_distribution, tilt_spec,
    tilted_exponent, SpectralData,
};
