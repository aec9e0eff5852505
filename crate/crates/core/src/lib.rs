//! Model of a practical decoy-state BB84 link.
//!
//! * [`channel`]: weak coherent source, lossy fiber and dark-count detectors.
//! * [`postprocessing`]: error-correction / privacy-amplification residues and
//!   key rates without decoys (individual-attack and tagged-state analyses),
//!   with decoys, and the upper-bound and dark-count-free reference curves.
//! * [`decoy`]: vacuum and weak-decoy estimation of photon-number yields.
//! * [`optimizer`]: optimal source intensity and cutoff distances.
//! * [`sweep`]: figure-style parameter sweeps emitted as CSV.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// The LU routines read more clearly with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod channel;
pub mod decoy;
pub mod error;
pub mod optimizer;
pub mod postprocessing;
pub mod preset;
pub mod sweep;

pub use channel::{
    dark_adjusted, detection_stats, i_photon_transmittance, key_bit_rate, link_efficiency, ConditionalYields,
    DetectionStats, LinkEfficiencies,
};
pub use decoy::{
    expected_vacuum_stats, multi_decoy_solve, simulate_decoy_observations, vacuum_consistency_check,
    weak_decoy_estimate, DecoyObservation, VacuumCheck, YieldEstimate,
};
pub use error::{QkdError, Result};
pub use optimizer::{
    cutoff_distance, maximize_rate_over_mu, optimal_mu_decoy_approx, optimal_mu_no_decoy_approx, MuPolicy,
    OptimizationResult,
};
pub use postprocessing::{
    binary_entropy, rate_for_protocol, residue_decoy, residue_gllp, residue_lutkenhaus, residue_tagged_general,
    EcEfficiencyTable, EcMode, Protocol, RateResult, TaggedClass,
};
pub use preset::{load_config, ExperimentPreset};
pub use sweep::{emit_csv, run_sweep, SweepCommand, SweepOutput, SweepRange, SweepSpec};
