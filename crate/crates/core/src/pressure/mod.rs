//! Unstable Jacobians, Lyapunov spectra, the normal-hyperbolicity inequality, and
//! topological pressure by separated sets and by the variational principle.

mod estimate;
mod jacobian;
mod packing;
mod scaled;
mod spectrum;

pub use estimate::{
    agreement_tolerance, linear_fit, pressure_separated, pressure_variational, prepare_pressure,
    LinearFit, PressureEstimate, PressureInputs, SampleData, VariationalEstimate, COVERAGE_RATIO,
};
pub use jacobian::{
    asymptotic_rate, log_unstable_jacobian, telescoping_check, unstable_alignment_time, unstable_direction,
    JacobianRecord, ALIGNMENT_AGREEMENT,
};
pub use packing::greedy_separated_set;
pub use scaled::ScaledMetric;
pub use spectrum::{nh_check, r_star, spectrum_alignment_time, tangent_spectrum, NHReport, SpectrumReport};
