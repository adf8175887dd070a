//! Re-weighted l1 sparsification inside the shrunk ellipsoid.

use log::{debug, warn};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::ellipsoid::{membership, EllipsoidRegion};
use crate::error::{Error, Result};
use crate::linalg::{nnz, spectral_norm};
use crate::lti::FeedbackGain;
use crate::scalar::Real;
use crate::sdp::{AffineMatrix, SdpBackend, SdpProblem};

/// Matrix norm used by the stopping ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopNorm {
    Spectral,
    Frobenius,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReweightConfig {
    pub theta: f64,
    /// Regularizer in the weight denominator.
    pub zeta: f64,
    /// Stop once the relative change drops to this level.
    pub eps_d: f64,
    pub max_iters: usize,
    /// Leading iterations that update the weights; later ones keep them fixed.
    pub reweight_iters: usize,
    pub truncation_threshold: f64,
    pub norm: StopNorm,
    /// Absolute tolerance on the smallest eigenvalue in membership tests.
    pub membership_tol: f64,
}

impl Default for ReweightConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            zeta: 1e-3,
            eps_d: 1e-3,
            max_iters: 20,
            reweight_iters: 4,
            truncation_threshold: 5e-5,
            norm: StopNorm::Spectral,
            membership_tol: 1e-8,
        }
    }
}

impl ReweightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0) || !(self.eps_d > 0.0) {
            return Err(Error::InvalidArgument("zeta and eps_d must be > 0".into()));
        }
        if !(self.truncation_threshold >= 0.0) || !(self.membership_tol >= 0.0) {
            return Err(Error::InvalidArgument("thresholds must be >= 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReweightRecord {
    pub iter: usize,
    #[serde(skip)]
    pub weights: DMatrix<f64>,
    #[serde(skip)]
    pub gain: DMatrix<f64>,
    pub eps: f64,
    pub nnz: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ReweightHistory {
    pub records: Vec<ReweightRecord>,
    pub converged: bool,
    /// Entries put back by the truncation repair.
    pub restored_entries: usize,
}

/// `W_ij = 1 / (|F_ij| + zeta)`.
pub fn update_weights<T: Real>(f: &FeedbackGain<T>, zeta: T) -> DMatrix<T> {
    assert!(zeta > T::zero(), "zeta must be positive");
    f.0.map(|x| T::one() / (x.abs() + zeta))
}

fn matrix_norm<T: Real>(m: &DMatrix<T>, norm: StopNorm) -> T {
    match norm {
        StopNorm::Spectral => spectral_norm(m),
        StopNorm::Frobenius => m.norm(),
    }
}

/// `||F_next - F_prev|| / ||F_next||`; `0` when both vanish and `+inf` when
/// only `F_next` does.
pub fn stopping_ratio<T: Real>(
    next: &FeedbackGain<T>,
    prev: &FeedbackGain<T>,
    norm: StopNorm,
) -> T {
    let den = matrix_norm(&next.0, norm);
    let num = matrix_norm(&(&next.0 - &prev.0), norm);
    if den == T::zero() {
        if num == T::zero() {
            T::zero()
        } else {
            T::infinity()
        }
    } else {
        num / den
    }
}

/// Zeroes entries below `threshold`, then restores the largest of them until
/// the gain is back inside the region.
pub fn truncate<T: Real>(
    f: &FeedbackGain<T>,
    threshold: T,
    region: &EllipsoidRegion<T>,
    theta: T,
    tol: T,
) -> Result<(FeedbackGain<T>, usize)> {
    let mut small: Vec<(usize, usize)> = Vec::new();
    let mut out = f.clone();
    for j in 0..f.0.ncols() {
        for i in 0..f.0.nrows() {
            let v = f.0[(i, j)];
            if v != T::zero() && v.abs() < threshold {
                small.push((i, j));
                out.0[(i, j)] = T::zero();
            }
        }
    }
    if small.is_empty() || membership(region, &out, theta, tol)? {
        return Ok((out, 0));
    }
    // descending magnitude, row-major among equals
    small.sort_by(|a, b| {
        f.0[*b]
            .abs()
            .partial_cmp(&f.0[*a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });
    for (k, idx) in small.iter().enumerate() {
        out.0[*idx] = f.0[*idx];
        if membership(region, &out, theta, tol)? {
            return Ok((out, k + 1));
        }
    }
    Ok((out, small.len()))
}

/// Largest `alpha` in `[0, 1]` (by bisection) with `F_o + alpha (F - F_o)`
/// strictly inside the region.
fn pull_inside(region: &EllipsoidRegion<f64>, f: &FeedbackGain<f64>, theta: f64) -> Result<FeedbackGain<f64>> {
    let at = |alpha: f64| FeedbackGain(region.f_o() + (&f.0 - region.f_o()) * alpha);
    if region.slack_min_eig(f, theta)? >= 0.0 {
        return Ok(f.clone());
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if region.slack_min_eig(&at(mid), theta)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(at(lo))
}

/// One weighted problem: minimize `sum W_ij |F_ij|` subject to
/// `[[theta R, F - F_o], [(F - F_o)^T, Z^{-1}]] >= 0`, with `|F_ij|` encoded by
/// slacks `t_ij >= +-F_ij`. Returns the minimizer and its objective.
pub fn weighted_l1_step(
    region: &EllipsoidRegion<f64>,
    theta: f64,
    w: &DMatrix<f64>,
    backend: &dyn SdpBackend,
) -> Result<(FeedbackGain<f64>, f64)> {
    region.check_theta(theta)?;
    let (m, n) = (region.m(), region.n());
    if w.shape() != (m, n) {
        return Err(Error::Dimension("weights must match the gain shape".into()));
    }
    if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument("weights must be positive".into()));
    }
    let weighted = |f: &DMatrix<f64>| w.component_mul(&f.abs()).sum();
    if theta == 0.0 {
        // the feasible set is the center alone
        return Ok((region.center(), weighted(region.f_o())));
    }

    let mut prob = SdpProblem::new();
    let fv = prob.full("F", m, n);
    let tv = prob.full("t", m, n);
    for i in 0..m {
        for j in 0..n {
            let (fi, ti) = (prob.index(fv, i, j), prob.index(tv, i, j));
            prob.add_nonneg(0.0, vec![(ti, 1.0), (fi, -1.0)]);
            prob.add_nonneg(0.0, vec![(ti, 1.0), (fi, 1.0)]);
            prob.add_objective(ti, w[(i, j)]);
        }
    }
    let mut e = AffineMatrix::zeros(m + n);
    e.add_const(0, &(region.r() * theta));
    e.add_const(m, region.zinv());
    e.add_const_offdiag(0, m, &(-region.f_o()));
    e.add_offdiag_product(&prob, 0, m, &DMatrix::identity(m, m), fv, &DMatrix::identity(n, n));
    prob.add_psd("ellipsoid", e);

    let out = backend.solve(&prob)?;
    if !out.is_solved() {
        return Err(Error::Solver(format!(
            "weighted l1 step failed although F_o is feasible: {}",
            out.detail
        )));
    }
    let f = FeedbackGain(prob.extract(fv, &out.x));
    let f = pull_inside(region, &f, theta)?;
    let obj = weighted(&f.0);
    Ok((f, obj))
}

/// Iterated weighted l1 minimization followed by truncation.
pub fn reweighted_l1(
    region: &EllipsoidRegion<f64>,
    config: &ReweightConfig,
    backend: &dyn SdpBackend,
) -> Result<(FeedbackGain<f64>, ReweightHistory)> {
    config.validate()?;
    region.check_theta(config.theta)?;
    let (m, n) = (region.m(), region.n());
    let mut w = DMatrix::from_element(m, n, 1.0);
    let mut prev = region.center();
    let mut history = ReweightHistory::default();
    let mut best: Option<(usize, FeedbackGain<f64>)> = None;

    // The zero-radius region is the single point F_o.
    if config.theta == 0.0 {
        history.records.push(ReweightRecord {
            iter: 1,
            weights: w.clone(),
            gain: prev.0.clone(),
            eps: 0.0,
            nnz: prev.nnz(),
            objective: prev.0.abs().sum(),
        });
        history.converged = true;
        return Ok((prev, history));
    }

    for iter in 1..=config.max_iters {
        let (f, objective) = weighted_l1_step(region, config.theta, &w, backend)?;
        let eps = stopping_ratio(&f, &prev, config.norm);
        let count = nnz(&f.0, config.truncation_threshold);
        debug!("l1 iteration {iter}: eps={eps:.3e} nnz={count} objective={objective:.6}");
        history.records.push(ReweightRecord {
            iter,
            weights: w.clone(),
            gain: f.0.clone(),
            eps,
            nnz: count,
            objective,
        });
        if best.as_ref().map_or(true, |(c, _)| count <= *c) {
            best = Some((count, f.clone()));
        }
        if iter <= config.reweight_iters {
            w = update_weights(&f, config.zeta);
        }
        let done = eps <= config.eps_d;
        prev = f;
        if done {
            history.converged = true;
            break;
        }
    }
    let candidate = if history.converged {
        prev
    } else {
        warn!("re-weighted l1 did not converge in {} iterations", config.max_iters);
        best.map(|(_, f)| f).unwrap_or(prev)
    };
    let (gain, restored) = truncate(
        &candidate,
        config.truncation_threshold,
        region,
        config.theta,
        config.membership_tol,
    )?;
    history.restored_entries = restored;
    if !membership(region, &gain, config.theta, config.membership_tol)? {
        return Err(Error::Solver("sparsified gain left the region".into()));
    }
    Ok((gain, history))
}
