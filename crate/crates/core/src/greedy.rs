//! Greedy entry elimination inside the ellipsoid using rank-two updates of
//! the constraint matrix and Woodbury maintenance of its inverse.

use std::collections::BTreeSet;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::ellipsoid::{membership, EllipsoidRegion};
use crate::error::{Error, Result};
use crate::linalg::{lambda_max, spd_inverse, symmetrize};
use crate::lti::FeedbackGain;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GreedyCriterion {
    MaxEigOfInverse,
    SumEigOfInverse,
    LogDetOfInverse,
}

impl std::str::FromStr for GreedyCriterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maxeig" => Ok(Self::MaxEigOfInverse),
            "trace" => Ok(Self::SumEigOfInverse),
            "logdet" => Ok(Self::LogDetOfInverse),
            other => Err(Error::Parse(format!("unknown criterion `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyConfig<T: Real = f64> {
    pub theta: T,
    pub criterion: GreedyCriterion,
    pub power_tol: T,
    pub power_max_iters: usize,
    /// Stop after this many eliminations.
    pub sparsity_budget: Option<usize>,
    pub recompute_period: usize,
    /// Relative width of the tie band around the best score.
    pub tie_tol: T,
    pub membership_tol: T,
}

impl<T: Real> Default for GreedyConfig<T> {
    fn default() -> Self {
        Self {
            theta: T::lit(0.5),
            criterion: GreedyCriterion::MaxEigOfInverse,
            power_tol: T::lit(1e-12),
            power_max_iters: 1000,
            sparsity_budget: None,
            recompute_period: 25,
            tie_tol: T::lit(1e-9),
            membership_tol: T::lit(1e-8),
        }
    }
}

impl<T: Real> GreedyConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.power_tol > T::zero()) || self.power_max_iters < 2 {
            return Err(Error::InvalidArgument("power_tol must be > 0 and power_max_iters >= 2".into()));
        }
        if self.recompute_period == 0 {
            return Err(Error::InvalidArgument("recompute_period must be >= 1".into()));
        }
        if !(self.tie_tol >= T::zero()) || !(self.membership_tol >= T::zero()) {
            return Err(Error::InvalidArgument("tolerances must be >= 0".into()));
        }
        if !(self.theta >= T::zero()) || !self.theta.finite() {
            return Err(Error::InvalidArgument("theta must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// `E + V H V^T` with `V = [v1 v2]`, `H = diag(-F_ij, F_ij)`; this sets
/// `F_ij` to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTwoUpdate<T: Real = f64> {
    pub i: usize,
    pub j: usize,
    pub m: usize,
    pub value: T,
}

impl<T: Real> RankTwoUpdate<T> {
    pub fn new(i: usize, j: usize, value: T, m: usize, n: usize) -> Result<Self> {
        if i >= m || j >= n {
            return Err(Error::Dimension(format!("entry ({i}, {j}) outside {m}x{n}")));
        }
        if !value.finite() {
            return Err(Error::NonFinite("update value"));
        }
        Ok(Self { i, j, m, value })
    }

    /// Positions of the two nonzeros of `v1`/`v2` in the stacked index.
    pub fn rows(&self) -> (usize, usize) {
        (self.i, self.m + self.j)
    }

    pub fn h(&self) -> Matrix2<T> {
        Matrix2::new(-self.value, T::zero(), T::zero(), self.value)
    }

    pub fn v(&self, dim: usize) -> DMatrix<T> {
        let s = T::one() / T::lit(2.0).sqrt();
        let (a, b) = self.rows();
        let mut v = DMatrix::zeros(dim, 2);
        v[(a, 0)] = s;
        v[(b, 0)] = s;
        v[(a, 1)] = s;
        v[(b, 1)] = -s;
        v
    }

    /// `-F_ij [[0, Delta], [Delta^T, 0]]` as a dense matrix.
    pub fn dense_delta(&self, dim: usize) -> DMatrix<T> {
        let (a, b) = self.rows();
        let mut d = DMatrix::zeros(dim, dim);
        d[(a, b)] = -self.value;
        d[(b, a)] = -self.value;
        d
    }
}

/// Products needed by one candidate: `S = V^T Einv V`, `U = Einv V`.
struct Capacitance<T: Real> {
    s: Matrix2<T>,
    u: DMatrix<T>,
}

fn capacitance<T: Real>(einv: &DMatrix<T>, upd: &RankTwoUpdate<T>) -> Capacitance<T> {
    let (a, b) = upd.rows();
    let half = T::lit(0.5);
    let (eaa, ebb) = (einv[(a, a)], einv[(b, b)]);
    let eab = half * (einv[(a, b)] + einv[(b, a)]);
    let s = Matrix2::new(
        half * (eaa + ebb) + eab,
        half * (eaa - ebb),
        half * (eaa - ebb),
        half * (eaa + ebb) - eab,
    );
    let r = T::one() / T::lit(2.0).sqrt();
    let (ca, cb) = (einv.column(a), einv.column(b));
    let mut u = DMatrix::zeros(einv.nrows(), 2);
    u.set_column(0, &((ca + cb) * r));
    u.set_column(1, &((ca - cb) * r));
    Capacitance { s, u }
}

/// `I + H S`; its eigenvalues are real and, since `H` has one negative
/// entry, at most one can be non-positive.
fn ihs<T: Real>(upd: &RankTwoUpdate<T>, s: &Matrix2<T>) -> Matrix2<T> {
    Matrix2::identity() + upd.h() * s
}

fn ihs_is_pd<T: Real>(m: &Matrix2<T>) -> bool {
    let det = m.determinant();
    let tr = m.trace();
    // real spectrum: both eigenvalues positive iff det > 0 and trace > 0
    det > T::zero() && tr > T::zero()
}

/// `K = (H^{-1} + S)^{-1} = (I + H S)^{-1} H`, formed without `H^{-1}`.
fn woodbury_core<T: Real>(upd: &RankTwoUpdate<T>, s: &Matrix2<T>) -> Result<Matrix2<T>> {
    let m = ihs(upd, s);
    let det = m.determinant();
    let scale = m.abs().max().max(T::one());
    if !(det.abs() > T::eps() * scale * scale) {
        return Err(Error::SingularUpdate { i: upd.i, j: upd.j });
    }
    let inv = m.try_inverse().ok_or(Error::SingularUpdate { i: upd.i, j: upd.j })?;
    let k = inv * upd.h();
    Ok((k + k.transpose()) * T::lit(0.5))
}

/// Inverse of `E + V H V^T` from `Einv`.
pub fn apply_update<T: Real>(einv: &DMatrix<T>, upd: &RankTwoUpdate<T>) -> Result<DMatrix<T>> {
    if upd.value == T::zero() {
        return Err(Error::SingularUpdate { i: upd.i, j: upd.j });
    }
    let cap = capacitance(einv, upd);
    let k = woodbury_core(upd, &cap.s)?;
    let kd = DMatrix::from_fn(2, 2, |r, c| k[(r, c)]);
    let out = einv - &cap.u * kd * cap.u.transpose();
    Ok(symmetrize(&out))
}

/// Whether `E + V H V^T` stays positive definite, given `E > 0`.
pub fn candidate_is_pd<T: Real>(einv: &DMatrix<T>, upd: &RankTwoUpdate<T>) -> bool {
    let cap = capacitance(einv, upd);
    ihs_is_pd(&ihs(upd, &cap.s))
}

/// Symmetric operator seen by the power method.
pub trait SymOperator<T: Real>: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DVector<T>) -> DVector<T>;
    fn max_diagonal(&self) -> T;
    fn dense(&self) -> DMatrix<T>;
}

impl<T: Real> SymOperator<T> for DMatrix<T> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &DVector<T>) -> DVector<T> {
        self * x
    }
    fn max_diagonal(&self) -> T {
        self.diagonal().max()
    }
    fn dense(&self) -> DMatrix<T> {
        self.clone()
    }
}

/// `Einv - U K U^T` applied without forming it.
struct UpdatedInverse<'a, T: Real> {
    einv: &'a DMatrix<T>,
    u: &'a DMatrix<T>,
    k: DMatrix<T>,
}

impl<T: Real> SymOperator<T> for UpdatedInverse<'_, T> {
    fn dim(&self) -> usize {
        self.einv.nrows()
    }
    fn apply(&self, x: &DVector<T>) -> DVector<T> {
        let t = &self.k * (self.u.transpose() * x);
        self.einv * x - self.u * t
    }
    fn max_diagonal(&self) -> T {
        let uk = self.u * &self.k;
        (0..self.dim())
            .map(|r| self.einv[(r, r)] - uk.row(r).dot(&self.u.row(r)))
            .fold(T::lit(f64::NEG_INFINITY), |a, b| a.max(b))
    }
    fn dense(&self) -> DMatrix<T> {
        symmetrize(&(self.einv - self.u * &self.k * self.u.transpose()))
    }
}

#[derive(Debug, Clone)]
pub struct PowerOutcome<T: Real = f64> {
    pub value: T,
    pub vector: DVector<T>,
    pub iterations: usize,
    pub restarted: bool,
    pub fell_back: bool,
    pub pruned: bool,
}

fn restart_vector<T: Real>(dim: usize) -> DVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_9e11);
    DVector::from_fn(dim, |_, _| T::lit(rng.gen_range(-1.0..1.0)))
}

enum RunEnd {
    Converged,
    Exhausted,
    /// The Rayleigh quotient, a lower bound on the dominant eigenvalue of a
    /// positive semidefinite operator, passed the abort level.
    Above,
}

/// Returns the Rayleigh quotient, iterate, iterations used, and why the run
/// ended. Convergence means successive quotients agree to `tol` relative.
fn power_run<T: Real>(
    op: &dyn SymOperator<T>,
    start: DVector<T>,
    max_iters: usize,
    tol: T,
    abort_above: T,
) -> (T, DVector<T>, usize, RunEnd) {
    let norm = start.norm();
    let mut x = if norm > T::zero() && norm.finite() {
        start / norm
    } else {
        DVector::from_element(op.dim(), T::one() / T::lit(op.dim() as f64).sqrt())
    };
    let mut prev = T::lit(f64::NAN);
    for it in 1..=max_iters {
        let y = op.apply(&x);
        let rho = x.dot(&y);
        if rho > abort_above {
            return (rho, x, it, RunEnd::Above);
        }
        let ny = y.norm();
        if !(ny > T::zero()) || !ny.finite() {
            let end = if ny == T::zero() { RunEnd::Converged } else { RunEnd::Exhausted };
            return (rho, x, it, end);
        }
        if (rho - prev).abs() <= tol * rho.abs() {
            return (rho, y / ny, it, RunEnd::Converged);
        }
        prev = rho;
        x = y / ny;
    }
    (prev, x, max_iters, RunEnd::Exhausted)
}

/// Dominant eigenvalue of a symmetric positive semidefinite operator.
///
/// Starts from `start` (all-ones when absent). A run that ends below the
/// largest diagonal entry, or does not settle within half the budget, is
/// repeated once from a fixed pseudo-random vector; if that also fails the
/// dense eigendecomposition is used.
pub fn power_max_eig<T: Real>(
    op: &dyn SymOperator<T>,
    start: Option<&DVector<T>>,
    tol: T,
    max_iters: usize,
) -> PowerOutcome<T> {
    power_max_eig_bounded(op, start, tol, max_iters, T::infinity())
}

/// As [`power_max_eig`] for a positive semidefinite operator, but stops as
/// soon as the dominant eigenvalue is known to exceed `abort_above`; the
/// returned value is then only a lower bound and `pruned` is set.
pub fn power_max_eig_bounded<T: Real>(
    op: &dyn SymOperator<T>,
    start: Option<&DVector<T>>,
    tol: T,
    max_iters: usize,
    abort_above: T,
) -> PowerOutcome<T> {
    let dim = op.dim();
    let mut out = PowerOutcome {
        value: T::zero(),
        vector: DVector::zeros(dim),
        iterations: 0,
        restarted: false,
        fell_back: false,
        pruned: false,
    };
    if dim == 0 {
        return out;
    }
    let half = (max_iters / 2).max(1);
    let diag = op.max_diagonal();
    if diag > abort_above {
        out.value = diag;
        out.pruned = true;
        return out;
    }
    let plausible = |rho: T| rho >= diag - tol * diag.abs() * T::lit(10.0);
    let first = start.cloned().unwrap_or_else(|| DVector::from_element(dim, T::one()));
    for (attempt, x0) in [first, restart_vector(dim)].into_iter().enumerate() {
        let budget = if attempt == 0 { half } else { max_iters - half };
        let (rho, x, it, end) = power_run(op, x0, budget, tol, abort_above);
        out.iterations += it;
        out.restarted = attempt > 0;
        match end {
            RunEnd::Above => {
                out.value = rho;
                out.vector = x;
                out.pruned = true;
                return out;
            }
            RunEnd::Converged if plausible(rho) => {
                out.value = rho;
                out.vector = x;
                return out;
            }
            _ => {}
        }
    }
    warn!("power iteration did not converge in {max_iters} iterations; using dense eigensolver");
    let eig = op.dense().symmetric_eigen();
    let k = eig.eigenvalues.imax();
    out.value = eig.eigenvalues[k];
    out.vector = eig.eigenvectors.column(k).into_owned();
    out.fell_back = true;
    out
}

fn log_det_spd<T: Real>(m: &DMatrix<T>) -> Result<T> {
    let c = symmetrize(m)
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("candidate inverse"))?;
    Ok(c.l().diagonal().iter().fold(T::zero(), |acc, d| acc + d.ln()) * T::lit(2.0))
}

/// Score of a dense candidate inverse; smaller is better.
pub fn score<T: Real>(einv_candidate: &DMatrix<T>, criterion: GreedyCriterion, cfg: &GreedyConfig<T>) -> Result<T> {
    match criterion {
        GreedyCriterion::MaxEigOfInverse => {
            Ok(power_max_eig(einv_candidate, None, cfg.power_tol, cfg.power_max_iters).value)
        }
        GreedyCriterion::SumEigOfInverse => Ok(einv_candidate.trace()),
        GreedyCriterion::LogDetOfInverse => log_det_spd(einv_candidate),
    }
}

#[derive(Debug, Clone)]
pub struct GreedyState<T: Real = f64> {
    pub f: DMatrix<T>,
    pub e: DMatrix<T>,
    pub einv: DMatrix<T>,
    pub support: BTreeSet<(usize, usize)>,
    pub k: usize,
    pub theta: T,
    /// `log det Einv`, tracked for the log-det criterion.
    pub log_det_inv: T,
    /// Dominant eigenpair of `Einv`, reused as a warm start.
    pub dominant: (T, DVector<T>),
}

fn constraint_matrix<T: Real>(region: &EllipsoidRegion<T>, f: &DMatrix<T>, theta: T) -> DMatrix<T> {
    let (m, n) = (region.m(), region.n());
    let mut e = DMatrix::zeros(m + n, m + n);
    let d = f - region.f_o();
    e.view_mut((0, 0), (m, m)).copy_from(&(region.r() * theta));
    e.view_mut((0, m), (m, n)).copy_from(&d);
    e.view_mut((m, 0), (n, m)).copy_from(&d.transpose());
    e.view_mut((m, m), (n, n)).copy_from(region.zinv());
    symmetrize(&e)
}

impl<T: Real> GreedyState<T> {
    pub fn gain(&self) -> FeedbackGain<T> {
        FeedbackGain(self.f.clone())
    }

    /// `||Einv E - I||_F`.
    pub fn drift(&self) -> T {
        let dim = self.e.nrows();
        (&self.einv * &self.e - DMatrix::identity(dim, dim)).norm()
    }

    fn refresh(&mut self, cfg: &GreedyConfig<T>) -> Result<()> {
        self.einv = spd_inverse(&self.e, "constraint matrix")?;
        self.log_det_inv = log_det_spd(&self.einv)?;
        let p = power_max_eig(&self.einv, Some(&self.dominant.1), cfg.power_tol, cfg.power_max_iters);
        self.dominant = (p.value, p.vector);
        Ok(())
    }
}

/// `F = F_o`, `E = blockdiag(theta R, Z^{-1})`, `Einv = blockdiag((theta R)^{-1}, Z)`.
pub fn init_state<T: Real>(region: &EllipsoidRegion<T>, theta: T) -> Result<GreedyState<T>> {
    region.check_theta(theta)?;
    if theta == T::zero() {
        return Err(Error::DegenerateRegion("theta = 0 leaves only the center"));
    }
    let (m, n) = (region.m(), region.n());
    let tr = region.r() * theta;
    let tr_inv = spd_inverse(&tr, "theta R").map_err(|_| Error::DegenerateRegion("R is singular"))?;
    if !(crate::linalg::lambda_min(&tr) > T::zero()) {
        return Err(Error::DegenerateRegion("R is singular"));
    }
    let mut einv = DMatrix::zeros(m + n, m + n);
    einv.view_mut((0, 0), (m, m)).copy_from(&tr_inv);
    einv.view_mut((m, m), (n, n)).copy_from(region.z());
    let einv = symmetrize(&einv);
    let f = region.f_o().clone();
    let support = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| f[(i, j)] != T::zero())
        .collect();
    let e = constraint_matrix(region, &f, theta);
    let log_det_inv = log_det_spd(&einv)?;
    let lmax = lambda_max(&einv);
    let eig = einv.clone().symmetric_eigen();
    let top = eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned();
    Ok(GreedyState { f, e, einv, support, k: 0, theta, log_det_inv, dominant: (lmax, top) })
}

/// Evaluated candidate elimination.
#[derive(Debug, Clone, Serialize)]
pub struct Candidate<T: Real = f64> {
    pub i: usize,
    pub j: usize,
    pub score: T,
}

/// A PD-preserving elimination with its Woodbury factors.
struct Prepared<T: Real> {
    i: usize,
    j: usize,
    u: DMatrix<T>,
    k: DMatrix<T>,
    det: T,
}

fn prepare<T: Real>(state: &GreedyState<T>, i: usize, j: usize) -> Option<Prepared<T>> {
    let (m, n) = state.f.shape();
    let upd = RankTwoUpdate::new(i, j, state.f[(i, j)], m, n).ok()?;
    let cap = capacitance(&state.einv, &upd);
    let mat = ihs(&upd, &cap.s);
    if !ihs_is_pd(&mat) {
        return None;
    }
    let k = woodbury_core(&upd, &cap.s).ok()?;
    Some(Prepared {
        i,
        j,
        u: cap.u,
        k: DMatrix::from_fn(2, 2, |r, c| k[(r, c)]),
        det: mat.determinant(),
    })
}

/// Score of a prepared candidate; for the max-eigenvalue criterion the power
/// method gives up once the score provably exceeds `abort_above`.
fn evaluate<T: Real>(state: &GreedyState<T>, c: &Prepared<T>, cfg: &GreedyConfig<T>, abort_above: T) -> Option<T> {
    let s = match cfg.criterion {
        GreedyCriterion::MaxEigOfInverse => {
            let op = UpdatedInverse { einv: &state.einv, u: &c.u, k: c.k.clone() };
            let p = power_max_eig_bounded(&op, Some(&state.dominant.1), cfg.power_tol, cfg.power_max_iters, abort_above);
            if p.pruned {
                return None;
            }
            p.value
        }
        GreedyCriterion::SumEigOfInverse => {
            let utu = c.u.transpose() * &c.u;
            state.einv.trace() - (&c.k * utu).trace()
        }
        GreedyCriterion::LogDetOfInverse => state.log_det_inv - c.det.ln(),
    };
    s.finite().then_some(s)
}

fn prepared<T: Real>(state: &GreedyState<T>) -> Vec<Prepared<T>> {
    let support: Vec<(usize, usize)> = state.support.iter().copied().collect();
    support
        .par_iter()
        .map(|&(i, j)| prepare(state, i, j))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Scores every PD-preserving elimination in the support, in row-major order.
pub fn candidates<T: Real>(state: &GreedyState<T>, cfg: &GreedyConfig<T>) -> Vec<Candidate<T>> {
    prepared(state)
        .par_iter()
        .map(|c| evaluate(state, c, cfg, T::infinity()).map(|score| Candidate { i: c.i, j: c.j, score }))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn band<T: Real>(best: T, cfg: &GreedyConfig<T>) -> T {
    best + cfg.tie_tol * (T::one() + best.abs())
}

/// Tie-break inside the band: smaller `|F_ij|`, then row-major order.
fn select<T: Real>(state: &GreedyState<T>, cands: Vec<Candidate<T>>, cfg: &GreedyConfig<T>) -> Option<Candidate<T>> {
    let best = cands.iter().map(|c| c.score).fold(T::infinity(), |a, b| a.min(b));
    let limit = band(best, cfg);
    cands.into_iter().filter(|c| c.score <= limit).min_by(|a, b| {
        let (fa, fb) = (state.f[(a.i, a.j)].abs(), state.f[(b.i, b.j)].abs());
        fa.partial_cmp(&fb)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((a.i, a.j).cmp(&(b.i, b.j)))
    })
}

/// Picks the next entry to zero, or `None` when no elimination keeps `E > 0`.
///
/// Max-eigenvalue candidates are visited in order of a cheap lower bound and
/// evaluated in fixed-size batches against the best score known at the start
/// of the batch, so the pruning never depends on thread scheduling.
pub fn step<T: Real>(state: &GreedyState<T>, cfg: &GreedyConfig<T>) -> Option<Candidate<T>> {
    if cfg.criterion != GreedyCriterion::MaxEigOfInverse {
        return select(state, candidates(state, cfg), cfg);
    }
    let warm = &state.dominant.1;
    let mut pre: Vec<(T, Prepared<T>)> = prepared(state)
        .into_par_iter()
        .map(|c| {
            let op = UpdatedInverse { einv: &state.einv, u: &c.u, k: c.k.clone() };
            let lb = op.apply(warm).dot(warm).max(op.max_diagonal());
            (lb, c)
        })
        .collect();
    pre.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((a.1.i, a.1.j).cmp(&(b.1.i, b.1.j)))
    });
    let mut scored = Vec::new();
    let mut best = T::infinity();
    for batch in pre.chunks(BATCH) {
        let limit = band(best, cfg);
        if batch[0].0 > limit {
            break;
        }
        let res: Vec<Option<Candidate<T>>> = batch
            .par_iter()
            .map(|(lb, c)| {
                if *lb > limit {
                    return None;
                }
                evaluate(state, c, cfg, limit).map(|score| Candidate { i: c.i, j: c.j, score })
            })
            .collect();
        for c in res.into_iter().flatten() {
            best = best.min(c.score);
            scored.push(c);
        }
    }
    select(state, scored, cfg)
}

const BATCH: usize = 16;

/// Applies the elimination of `(i, j)` to the state.
pub fn accept<T: Real>(state: &mut GreedyState<T>, i: usize, j: usize, cfg: &GreedyConfig<T>) -> Result<()> {
    let (m, n) = state.f.shape();
    let upd = RankTwoUpdate::new(i, j, state.f[(i, j)], m, n)?;
    let cap = capacitance(&state.einv, &upd);
    let det = ihs(&upd, &cap.s).determinant();
    state.einv = apply_update(&state.einv, &upd)?;
    state.e += upd.dense_delta(m + n);
    state.f[(i, j)] = T::zero();
    state.support.remove(&(i, j));
    state.k += 1;
    if state.k % cfg.recompute_period == 0 {
        state.refresh(cfg)?;
    } else {
        state.log_det_inv -= det.ln();
        let p = power_max_eig(&state.einv, Some(&state.dominant.1), cfg.power_tol, cfg.power_max_iters);
        state.dominant = (p.value, p.vector);
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GreedyRecord<T: Real = f64> {
    pub i: usize,
    pub j: usize,
    pub score: T,
    pub lambda_min_e: T,
    pub nnz: usize,
    /// Smallest eigenvalue of the membership slack at the accepted gain.
    pub slack_min_eig: T,
    pub drift: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct GreedyHistory<T: Real = f64> {
    pub steps: Vec<GreedyRecord<T>>,
    /// Set when the region admits no elimination at all (`theta = 0` or singular `R`).
    pub degenerate: bool,
    pub exhausted: bool,
}

/// Greedy elimination from `F_o` until no PD-preserving candidate remains or
/// the budget is spent.
pub fn run<T: Real>(region: &EllipsoidRegion<T>, cfg: &GreedyConfig<T>) -> Result<(FeedbackGain<T>, GreedyHistory<T>)> {
    cfg.validate()?;
    let mut history = GreedyHistory { steps: Vec::new(), degenerate: false, exhausted: false };
    let mut state = match init_state(region, cfg.theta) {
        Ok(s) => s,
        Err(Error::DegenerateRegion(why)) => {
            debug!("greedy: degenerate region ({why}); returning the center");
            history.degenerate = true;
            return Ok((region.center(), history));
        }
        Err(e) => return Err(e),
    };
    loop {
        if cfg.sparsity_budget.is_some_and(|b| state.k >= b) {
            break;
        }
        let Some(c) = step(&state, cfg) else {
            history.exhausted = true;
            break;
        };
        accept(&mut state, c.i, c.j, cfg)?;
        let gain = state.gain();
        let slack = region.slack_min_eig(&gain, cfg.theta)?;
        if !(slack >= -cfg.membership_tol) {
            return Err(Error::Solver(format!(
                "greedy iterate left the region after removing ({}, {})",
                c.i, c.j
            )));
        }
        let record = GreedyRecord {
            i: c.i,
            j: c.j,
            score: c.score,
            lambda_min_e: T::one() / state.dominant.0,
            nnz: state.support.len(),
            slack_min_eig: slack,
            drift: state.drift(),
        };
        debug!("greedy step {}: ({}, {}) score {}", state.k, c.i, c.j, c.score);
        history.steps.push(record);
    }
    let gain = state.gain();
    debug_assert!(membership(region, &gain, cfg.theta, cfg.membership_tol).unwrap_or(false));
    Ok((gain, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ellipsoid::sample_boundary;
    use crate::linalg::lambda_min;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn rand_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = rand_mat(rng, n, n);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    fn random_region(rng: &mut ChaCha8Rng, m: usize, n: usize) -> EllipsoidRegion<f64> {
        EllipsoidRegion::new(rand_mat(rng, m, n), rand_spd(rng, n), rand_spd(rng, m), 1.0).unwrap()
    }

    fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn update_vectors() {
        let u = RankTwoUpdate::new(1, 2, 0.7_f64, 3, 4).unwrap();
        let v = u.v(7);
        let h = DMatrix::from_fn(2, 2, |r, c| u.h()[(r, c)]);
        assert!((v.column(0).norm() - 1.0).abs() < 1e-15);
        assert!(v.column(0).dot(&v.column(1)).abs() < 1e-15);
        assert!((&v * h * v.transpose() - u.dense_delta(7)).amax() < 1e-12);
        assert_eq!(u.dense_delta(7)[(1, 5)], -0.7);
        assert!(RankTwoUpdate::new(3, 0, 1.0, 3, 4).is_err());
    }

    #[test]
    fn woodbury_matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (m, n) = (2, 4);
        for _ in 0..50 {
            let e = rand_spd(&mut rng, m + n) + DMatrix::identity(m + n, m + n) * 3.0;
            let einv = e.clone().try_inverse().unwrap();
            let (i, j) = (rng.gen_range(0..m), rng.gen_range(0..n));
            let upd = RankTwoUpdate::new(i, j, rng.gen_range(-1.0..1.0), m, n).unwrap();
            let updated = &e + upd.dense_delta(m + n);
            let got = apply_update(&einv, &upd).unwrap();
            assert!(rel(&got, &updated.clone().try_inverse().unwrap()) < 1e-8);
            let back = RankTwoUpdate::new(i, j, -upd.value, m, n).unwrap();
            assert!(rel(&apply_update(&got, &back).unwrap(), &einv) < 1e-8);
        }
    }

    #[test]
    fn tiny_update_is_continuous() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let einv = rand_spd(&mut rng, 5).try_inverse().unwrap();
        let upd = RankTwoUpdate::new(0, 1, 1e-12, 2, 3).unwrap();
        assert!(rel(&apply_update(&einv, &upd).unwrap(), &einv) <= 1e-9);
        let zero = RankTwoUpdate::new(0, 1, 0.0, 2, 3).unwrap();
        assert!(candidate_is_pd(&einv, &zero));
        assert!(matches!(apply_update(&einv, &zero), Err(Error::SingularUpdate { .. })));
    }

    #[test]
    fn pd_screen_agrees_with_dense_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (m, n) = (2, 3);
        let mut flips = [0usize; 2];
        for _ in 0..1000 {
            let e = rand_spd(&mut rng, m + n);
            let einv = e.clone().try_inverse().unwrap();
            let upd = RankTwoUpdate::new(rng.gen_range(0..m), rng.gen_range(0..n), rng.gen_range(-3.0..3.0), m, n).unwrap();
            let dense = lambda_min(&(&e + upd.dense_delta(m + n)));
            if dense.abs() < 1e-9 {
                continue;
            }
            assert_eq!(candidate_is_pd(&einv, &upd), dense > 0.0);
            flips[(dense > 0.0) as usize] += 1;
        }
        assert!(flips[0] > 50 && flips[1] > 50, "{flips:?}");

        // zeroing the only entry moves F outside: region centered at 2 with radius 1
        let s = |x| DMatrix::from_element(1, 1, x);
        let reg = EllipsoidRegion::new(s(2.0), s(1.0), s(1.0), 1.0).unwrap();
        let st = init_state(&reg, 1.0).unwrap();
        let upd = RankTwoUpdate::new(0, 0, 2.0, 1, 1).unwrap();
        assert!(!candidate_is_pd(&st.einv, &upd));
        assert!(lambda_min(&(&st.e + upd.dense_delta(2))) < 0.0);
    }

    #[test]
    fn power_method_cases() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0_f64, 1.0, 1.0]));
        let p = power_max_eig(&d, None, 1e-8, 100);
        assert!((p.value - 3.0).abs() < 1e-8 && p.iterations <= 30);
        let cfg = GreedyConfig::<f64>::default();
        let id = DMatrix::<f64>::identity(4, 4);
        assert!((score(&id, GreedyCriterion::MaxEigOfInverse, &cfg).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(score(&id, GreedyCriterion::SumEigOfInverse, &cfg).unwrap(), 4.0);
        assert!(score(&id, GreedyCriterion::LogDetOfInverse, &cfg).unwrap().abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..100 {
            let a = rand_spd(&mut rng, 8);
            let p = power_max_eig(&a, None, 1e-10, 2000);
            let exact = lambda_max(&a);
            assert!((p.value - exact).abs() <= 1e-6 * exact);
        }
    }

    #[test]
    fn power_method_restarts_on_orthogonal_start() {
        // ones vector is an eigenvector of the smallest eigenvalue
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut basis = rand_mat(&mut rng, n, n);
        basis.set_column(0, &DVector::from_element(n, 1.0));
        let q = basis.qr().q();
        let lam = DVector::from_vec(vec![0.1, 5.0, 5.0 - 1e-9, 2.0, 1.0, 0.5]);
        let a = symmetrize(&(&q * DMatrix::from_diagonal(&lam) * q.transpose()));
        let p = power_max_eig(&a, None, 1e-10, 4000);
        assert!(p.restarted);
        assert!((p.value - 5.0).abs() < 5e-6);
    }

    #[test]
    fn init_state_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let reg = random_region(&mut rng, 2, 3);
        let st = init_state(&reg, 0.5).unwrap();
        assert_eq!(st.e.view((0, 2), (2, 3)).amax(), 0.0);
        assert!(st.drift() < 1e-10);
        let expect = (0.5 * lambda_min(reg.r())).min(lambda_min(reg.zinv()));
        assert!((lambda_min(&st.e) - expect).abs() < 1e-10);
        assert!(matches!(init_state(&reg, 0.0), Err(Error::DegenerateRegion(_))));
        assert_eq!(st.support.len(), 6);
    }

    #[test]
    fn step_selection() {
        let s = |x| DMatrix::from_element(1, 1, x);
        let reg = EllipsoidRegion::new(s(0.1), s(1.0), s(1.0), 1.0).unwrap();
        let cfg = GreedyConfig { theta: 1.0, ..Default::default() };
        let st = init_state(&reg, 1.0).unwrap();
        let c = step(&st, &cfg).unwrap();
        assert_eq!((c.i, c.j), (0, 0));

        // 1x2 gain: enumerate both eliminations with the dense oracle
        let reg = EllipsoidRegion::new(
            DMatrix::from_row_slice(1, 2, &[0.2, 0.6]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.5]),
            s(1.0),
            1.0,
        )
        .unwrap();
        let st = init_state(&reg, 1.0).unwrap();
        let dense: Vec<f64> = [(0, 0), (0, 1)]
            .iter()
            .map(|&(i, j)| {
                let mut f = reg.f_o().clone();
                f[(i, j)] = 0.0;
                lambda_max(&constraint_matrix(&reg, &f, 1.0).try_inverse().unwrap())
            })
            .collect();
        assert!(dense[0] < dense[1]);
        assert_eq!(step(&st, &cfg).map(|c| (c.i, c.j)), Some((0, 0)));
    }

    #[test]
    fn boundary_state_has_no_move() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (m, n) = (2, 3);
        let f_o = rand_mat(&mut rng, m, n).add_scalar(3.0);
        let reg = EllipsoidRegion::new(f_o, rand_spd(&mut rng, n), rand_spd(&mut rng, m) * 0.1, 1.0).unwrap();
        let mut u = rand_mat(&mut rng, m, n);
        u /= u.singular_values().max() / (1.0 - 1e-6);
        let f = sample_boundary(&reg, 1.0, &u).unwrap();
        let mut st = init_state(&reg, 1.0).unwrap();
        st.f = f.0.clone();
        st.e = constraint_matrix(&reg, &st.f, 1.0);
        st.refresh(&GreedyConfig::default()).unwrap();
        assert!(step(&st, &GreedyConfig { theta: 1.0, ..Default::default() }).is_none());
    }

    #[test]
    fn run_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for crit in [
            GreedyCriterion::MaxEigOfInverse,
            GreedyCriterion::SumEigOfInverse,
            GreedyCriterion::LogDetOfInverse,
        ] {
            let reg = random_region(&mut rng, 3, 4);
            let cfg = GreedyConfig { theta: 1.0, criterion: crit, recompute_period: 4, ..Default::default() };
            let (f, hist) = run(&reg, &cfg).unwrap();
            assert!(membership(&reg, &f, 1.0, 1e-8).unwrap());
            let mut prev = 12;
            for r in &hist.steps {
                assert_eq!(r.nnz, prev - 1);
                prev = r.nnz;
                assert!(r.drift <= 1e-6);
                assert!(r.slack_min_eig >= -1e-8);
            }
            assert_eq!(f.nnz(), prev);
            assert!(hist.exhausted);
            let (again, _) = run(&reg, &cfg).unwrap();
            assert_eq!(f, again);
        }
    }

    #[test]
    fn budget_and_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let reg = random_region(&mut rng, 3, 4);
        let cfg = GreedyConfig { theta: 1.0, sparsity_budget: Some(2), ..Default::default() };
        let (f, hist) = run(&reg, &cfg).unwrap();
        assert_eq!(hist.steps.len(), 2);
        assert_eq!(f.nnz(), 10);
        let (c, hist) = run(&reg, &GreedyConfig { theta: 0.0, ..Default::default() }).unwrap();
        assert!(hist.degenerate);
        assert_eq!(c, reg.center());
        let tiny = EllipsoidRegion::new(reg.f_o().clone(), reg.z().clone(), reg.r() * 1e-12, 1.0).unwrap();
        let (c, hist) = run(&tiny, &GreedyConfig { theta: 1e-6, ..Default::default() }).unwrap();
        assert_eq!(c, reg.center());
        assert!(hist.steps.is_empty());
    }

    #[test]
    fn maxeig_choice_matches_dense_lambda_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..10 {
            let reg = random_region(&mut rng, 2, 3);
            let cfg = GreedyConfig { theta: 1.0, tie_tol: 0.0, ..Default::default() };
            let st = init_state(&reg, 1.0).unwrap();
            let Some(c) = step(&st, &cfg) else { continue };
            let best = st
                .support
                .iter()
                .filter_map(|&(i, j)| {
                    let mut f = reg.f_o().clone();
                    f[(i, j)] = 0.0;
                    let l = lambda_min(&constraint_matrix(&reg, &f, 1.0));
                    (l > 0.0).then_some(l)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let mut f = reg.f_o().clone();
            f[(c.i, c.j)] = 0.0;
            let chosen = lambda_min(&constraint_matrix(&reg, &f, 1.0));
            assert!((chosen - best).abs() <= 1e-8 * best.abs().max(1.0));
        }
    }

    #[test]
    fn pruned_step_matches_exhaustive_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let reg = random_region(&mut rng, 4, 6);
            let cfg = GreedyConfig { theta: 1.0, ..Default::default() };
            let mut st = init_state(&reg, 1.0).unwrap();
            for _ in 0..8 {
                let full = select(&st, candidates(&st, &cfg), &cfg);
                let fast = step(&st, &cfg);
                assert_eq!(full.as_ref().map(|c| (c.i, c.j)), fast.as_ref().map(|c| (c.i, c.j)));
                let Some(c) = fast else { break };
                accept(&mut st, c.i, c.j, &cfg).unwrap();
            }
        }
    }
}
