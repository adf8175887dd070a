use serde::Serialize;

use crate::ellipsoid::EllipsoidRegion;
use crate::error::{Error, Result};
use crate::lti::{close_loop, hinf_norm, FeedbackGain, StateSpaceSystem};

/// Relative tolerance used for every reported H-infinity value.
pub const REPORT_HINF_TOL: f64 = 1e-9;

/// Density and performance loss of a sparse gain relative to the center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignMetrics {
    /// `100 ||F||_0 / ||F_o||_0`.
    pub sigma_d: f64,
    /// `100 (||G_F|| - ||G_Fo||) / ||G_Fo||`, `+inf` for an unstable loop.
    pub sigma_p: f64,
    pub hinf_sparse: f64,
    pub hinf_center: f64,
    pub nnz_sparse: usize,
    pub nnz_center: usize,
    /// Whether `hinf_sparse <= gamma (1 + 1e-6)`.
    pub verified: bool,
}

pub fn sigma_d(nnz: usize, nnz_center: usize) -> f64 {
    if nnz_center == 0 {
        return if nnz == 0 { 100.0 } else { f64::INFINITY };
    }
    100.0 * nnz as f64 / nnz_center as f64
}

pub fn sigma_p(hinf: f64, hinf_center: f64) -> f64 {
    if !hinf.is_finite() {
        return f64::INFINITY;
    }
    100.0 * (hinf - hinf_center) / hinf_center
}

/// Closed-loop H-infinity norm of `sys` under `f` (`+inf` when unstable).
pub fn closed_loop_hinf(sys: &StateSpaceSystem<f64>, f: &FeedbackGain<f64>) -> Result<f64> {
    let cl = close_loop(sys, f)?;
    Ok(hinf_norm(&cl, REPORT_HINF_TOL)?.value)
}

pub fn compute_metrics(
    f: &FeedbackGain<f64>,
    region: &EllipsoidRegion<f64>,
    sys: &StateSpaceSystem<f64>,
) -> Result<DesignMetrics> {
    if f.shape() != (region.m(), region.n()) || f.shape() != (sys.m(), sys.n()) {
        return Err(Error::Dimension("gain, region and system disagree".into()));
    }
    let center = region.center();
    let hinf_center = closed_loop_hinf(sys, &center)?;
    let hinf_sparse = closed_loop_hinf(sys, f)?;
    let (nnz_sparse, nnz_center) = (f.nnz(), center.nnz());
    Ok(DesignMetrics {
        sigma_d: sigma_d(nnz_sparse, nnz_center),
        sigma_p: sigma_p(hinf_sparse, hinf_center),
        hinf_sparse,
        hinf_center,
        nnz_sparse,
        nnz_center,
        verified: hinf_sparse <= region.gamma() * (1.0 + 1e-6),
    })
}
