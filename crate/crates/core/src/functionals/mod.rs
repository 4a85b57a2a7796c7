//! Scalar functionals, corrections and bounds.

pub mod commutator;
pub mod corrections;
pub mod distance;
pub mod energy;
pub mod entropy;
pub mod gronwall;
pub mod partition;
pub mod records;

pub use commutator::{commutator_form, star_norm, CommutatorKernel, CommutatorParts, VectorField};
pub use corrections::{
    correction_o_n1, correction_o_t, correction_obar, exponents, kappa, positivity_lower_bound, Exponents,
    KappaMode, SupNorm,
};
pub use distance::{energy_distance_empirical, energy_distance_to_grid};
pub use energy::{modulated_energy, modulated_energy_ss, modulated_free_energy, BackgroundField};
pub use entropy::{
    fisher_information_gaussian, fisher_information_grid, relative_entropy_gaussian, relative_entropy_grid,
    GaussianProduct,
};
pub use gronwall::{gronwall_rhs, gronwall_rhs_original, GronwallInputs, GronwallVariant, Traces};
pub use partition::small_n_partition_function;
pub use records::{ConstantsConfig, DiagnosticsRecord, Stat};
