//! Plant representation, closed-loop construction, stability and H-infinity
//! verification.

mod hinf;
mod system;

pub use hinf::{default_oracle_grid, hinf_norm, hinf_norm_grid, log_grid, sigma_max_at, HinfResult};
pub use system::{
    close_loop, eigenvalues, is_hurwitz, spectral_abscissa, ClosedLoopSystem, FeedbackGain,
    StateSpaceSystem,
};
