use log::debug;

use crate::ellipsoid::{synthesize_region, SynthesisOptions};
use crate::error::{Error, Result};
use crate::lti::StateSpaceSystem;
use crate::sdp::SdpBackend;

/// Largest level tried before giving up.
pub const DEFAULT_GAMMA_CAP: f64 = 1e6;

/// Factor applied to the floor when no level is given.
pub const DEFAULT_GAMMA_FACTOR: f64 = 1.25;

fn feasible(sys: &StateSpaceSystem<f64>, gamma: f64, opts: &SynthesisOptions, backend: &dyn SdpBackend) -> Result<bool> {
    match synthesize_region(sys, gamma, opts, backend) {
        Ok(_) => Ok(true),
        Err(Error::Infeasible { .. } | Error::VerificationFailed { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Smallest level (to `rel_tol`) at which stage one succeeds, by doubling
/// then bisection. The returned level itself was found feasible.
pub fn gamma_floor(
    sys: &StateSpaceSystem<f64>,
    rel_tol: f64,
    cap: f64,
    opts: &SynthesisOptions,
    backend: &dyn SdpBackend,
) -> Result<f64> {
    if !(rel_tol > 0.0) || !(cap > 0.0) {
        return Err(Error::InvalidArgument("rel_tol and cap must be > 0".into()));
    }
    let mut hi = 1.0_f64.min(cap);
    while !feasible(sys, hi, opts, backend)? {
        if hi >= cap {
            return Err(Error::NoFeasibleGamma { cap });
        }
        hi = (hi * 2.0).min(cap);
    }
    let mut lo = hi / 2.0;
    while feasible(sys, lo, opts, backend)? {
        hi = lo;
        lo /= 2.0;
        if lo < 1e-12 {
            return Ok(hi);
        }
    }
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(sys, mid, opts, backend)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    debug!("gamma floor bracket [{lo}, {hi}]");
    Ok(hi)
}
