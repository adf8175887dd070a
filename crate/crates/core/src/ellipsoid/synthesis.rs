//! Stage one: the H-infinity state-feedback LMIs whose solutions define the
//! ellipsoid of admissible gains.

use log::debug;
use nalgebra::DMatrix;

use super::region::{derive_ellipsoid, EllipsoidRegion, SdpSolution};
use crate::error::{Error, Result};
use crate::linalg::{lambda_min, spectral_norm};
use crate::lti::{close_loop, hinf_norm, is_hurwitz, StateSpaceSystem};
use crate::sdp::{AffineMatrix, SdpBackend, SdpProblem, SolveStatus, Var};

/// Which feasible point of the LMIs is returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage1Objective {
    /// Any point satisfying the inequalities with the fixed margin.
    Feasibility,
    /// Maximize a common slack on the strict inequalities.
    MaxMargin,
    /// Maximize `t` with `-Xhat >= t I`, `Zhat >= t I` and `P <= I`; the
    /// region then contains every gain with `||F - F_o||_2 <= t`.
    InscribedBall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    /// Margin turning strict inequalities into non-strict ones. `None` uses
    /// `1e-6 * (1 + ||A||_2)`.
    pub strictness_eps: Option<f64>,
    /// Bound on `cond(P)`.
    pub condition_cap: Option<f64>,
    pub solver_tol: f64,
    pub allow_theta_above_one: bool,
    pub objective: Stage1Objective,
    /// Relative tolerance of the internal H-infinity check.
    pub verify_rel_tol: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            strictness_eps: None,
            condition_cap: Some(1e6),
            solver_tol: 1e-9,
            allow_theta_above_one: false,
            objective: Stage1Objective::Feasibility,
            verify_rel_tol: 1e-9,
        }
    }
}

impl SynthesisOptions {
    pub fn eps_for(&self, sys: &StateSpaceSystem<f64>) -> f64 {
        self.strictness_eps
            .unwrap_or_else(|| 1e-6 * (1.0 + spectral_norm(sys.a())))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.strictness_eps {
            if !(e > 0.0) {
                return Err(Error::InvalidArgument("strictness_eps must be > 0".into()));
            }
        }
        if let Some(k) = self.condition_cap {
            if !(k >= 1.0) {
                return Err(Error::InvalidArgument("condition cap must be >= 1".into()));
            }
        }
        if !(self.solver_tol > 0.0) || !(self.verify_rel_tol > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be > 0".into()));
        }
        Ok(())
    }
}

/// Assembled stage-one program together with handles to its blocks.
#[derive(Debug, Clone)]
pub struct Theorem1Program {
    pub problem: SdpProblem,
    pub p: Var,
    pub xhat: Var,
    pub yhat: Var,
    pub zhat: Var,
    /// Common slack variable when maximizing the margin.
    pub margin: Option<Var>,
    /// Inscribed-ball radius variable.
    pub ball: Option<Var>,
    /// Scale of the condition-number sandwich `s I <= P <= kappa s I`.
    pub cond_scale: Option<Var>,
    pub eps: f64,
    pub gamma: f64,
}

/// Name of the H-infinity LMI inside the assembled program.
pub const HINF_LMI: &str = "hinf";

/// The block matrix `[[Q11, Q12], [Q21, Q22]] + [Bv; Dgv][Bv; Dgv]^T` as an
/// affine expression in `(P, Xhat, Yhat, Zhat)`.
pub fn hinf_block(
    prob: &SdpProblem,
    sys: &StateSpaceSystem<f64>,
    gamma: f64,
    (p, xhat, yhat, zhat): (Var, Var, Var, Var),
) -> AffineMatrix {
    let (n, pp) = (sys.n(), sys.p());
    let (a, b, c, dgu) = (sys.a(), sys.b(), sys.c(), sys.dgu());
    let (bv, dgv) = (sys.bv(), sys.dgv());
    let i_n = DMatrix::identity(n, n);
    let mut e = AffineMatrix::zeros(n + pp);

    // Q11 = A P - B Yhat + (A P - B Yhat)^T - B Xhat B^T + Zhat
    e.add_sym_product(prob, 0, a, p, &i_n);
    e.add_sym_product(prob, 0, &(-b), yhat, &i_n);
    e.add_sym_product(prob, 0, &(b * -0.5), xhat, &b.transpose());
    e.add_sym_product(prob, 0, &(&i_n * 0.5), zhat, &i_n);
    e.add_const(0, &(bv * bv.transpose()));

    // Q21 = C P - Dgu Xhat B^T - Dgu Yhat
    if pp > 0 {
        e.add_offdiag_product(prob, n, 0, c, p, &i_n);
        e.add_offdiag_product(prob, n, 0, &(-dgu), xhat, &b.transpose());
        e.add_offdiag_product(prob, n, 0, &(-dgu), yhat, &i_n);
        e.add_const_offdiag(n, 0, &(dgv * bv.transpose()));

        // Q22 = -gamma^2 I - Dgu Xhat Dgu^T
        e.add_const(n, &(DMatrix::identity(pp, pp) * (-gamma * gamma) + dgv * dgv.transpose()));
        e.add_sym_product(prob, n, &(dgu * -0.5), xhat, &dgu.transpose());
    }
    e
}

/// Builds the LMIs
/// `Xhat <= 0`, `P >= eps I`, `Zhat >= eps I`, `-(Q + disturbance) >= eps I`
/// and, with a condition cap, `s I <= P <= kappa s I`.
pub fn assemble_theorem1(
    sys: &StateSpaceSystem<f64>,
    gamma: f64,
    opts: &SynthesisOptions,
) -> Result<Theorem1Program> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument("gamma must be positive".into()));
    }
    opts.validate()?;
    let (n, m, pp) = (sys.n(), sys.m(), sys.p());
    let eps = opts.eps_for(sys);
    let mut prob = SdpProblem::new();
    let p = prob.symmetric("P", n);
    let xhat = prob.symmetric("Xhat", m);
    let yhat = prob.full("Yhat", m, n);
    let zhat = prob.symmetric("Zhat", n);
    let margin = match opts.objective {
        Stage1Objective::MaxMargin => Some(prob.scalar("margin")),
        Stage1Objective::Feasibility | Stage1Objective::InscribedBall => None,
    };
    let ball = match opts.objective {
        Stage1Objective::InscribedBall => Some(prob.scalar("ball")),
        _ => None,
    };
    let i_n = DMatrix::identity(n, n);
    let i_m = DMatrix::identity(m, m);

    // strict inequality slack: either the constant eps or the margin variable
    let strict = |prob: &SdpProblem, e: &mut AffineMatrix, len: usize| match margin {
        Some(t) => {
            e.add_scaled_identity(prob, 0, len, t, -1.0);
        }
        None => {
            e.add_const(0, &(DMatrix::identity(len, len) * -eps));
        }
    };

    let mut e = AffineMatrix::zeros(n);
    e.add_sym_product(&prob, 0, &(&i_n * 0.5), p, &i_n);
    strict(&prob, &mut e, n);
    prob.add_psd("P", e);

    let mut e = AffineMatrix::zeros(n);
    e.add_sym_product(&prob, 0, &(&i_n * 0.5), zhat, &i_n);
    strict(&prob, &mut e, n);
    prob.add_psd("Zhat", e);

    let mut e = AffineMatrix::zeros(m);
    e.add_sym_product(&prob, 0, &(&i_m * -0.5), xhat, &i_m);
    prob.add_psd("Xhat", e);

    let mut e = hinf_block(&prob, sys, gamma, (p, xhat, yhat, zhat)).negated();
    strict(&prob, &mut e, n + pp);
    prob.add_psd(HINF_LMI, e);

    let cond_scale = match opts.condition_cap {
        Some(kappa) => {
            let s = prob.scalar("cond_scale");
            let mut lo = AffineMatrix::zeros(n);
            lo.add_sym_product(&prob, 0, &(&i_n * 0.5), p, &i_n);
            lo.add_scaled_identity(&prob, 0, n, s, -1.0);
            prob.add_psd("cond_lo", lo);
            let mut hi = AffineMatrix::zeros(n);
            hi.add_sym_product(&prob, 0, &(&i_n * -0.5), p, &i_n);
            hi.add_scaled_identity(&prob, 0, n, s, kappa);
            prob.add_psd("cond_hi", hi);
            Some(s)
        }
        None => None,
    };

    if let Some(t) = ball {
        let mut e = AffineMatrix::zeros(m);
        e.add_sym_product(&prob, 0, &(&i_m * -0.5), xhat, &i_m);
        e.add_scaled_identity(&prob, 0, m, t, -1.0);
        prob.add_psd("ball_r", e);
        let mut e = AffineMatrix::zeros(n);
        e.add_sym_product(&prob, 0, &(&i_n * 0.5), zhat, &i_n);
        e.add_scaled_identity(&prob, 0, n, t, -1.0);
        prob.add_psd("ball_z", e);
        let mut e = AffineMatrix::zeros(n);
        e.add_const(0, &i_n);
        e.add_sym_product(&prob, 0, &(&i_n * -0.5), p, &i_n);
        prob.add_psd("ball_p", e);
        let mut e = AffineMatrix::zeros(n);
        e.add_sym_product(&prob, 0, &(&i_n * 0.5), p, &i_n);
        e.add_scaled_identity(&prob, 0, n, t, -1.0);
        prob.add_psd("ball_p_lo", e);
        let ti = prob.index(t, 0, 0);
        prob.add_nonneg(0.0, vec![(ti, 1.0)]);
        prob.add_objective(ti, -1.0);
    }

    if let Some(t) = margin {
        let ti = prob.index(t, 0, 0);
        // eps <= margin <= gamma^2 keeps the program bounded when p = 0
        prob.add_nonneg(-eps, vec![(ti, 1.0)]);
        prob.add_nonneg(gamma * gamma, vec![(ti, -1.0)]);
        prob.add_objective(ti, -1.0);
    }

    Ok(Theorem1Program {
        problem: prob,
        p,
        xhat,
        yhat,
        zhat,
        margin,
        ball,
        cond_scale,
        eps,
        gamma,
    })
}

impl Theorem1Program {
    pub fn extract(&self, x: &[f64]) -> SdpSolution<f64> {
        let pr = &self.problem;
        let mut sol = SdpSolution {
            p: pr.extract(self.p, x),
            xhat: pr.extract(self.xhat, x),
            yhat: pr.extract(self.yhat, x),
            zhat: pr.extract(self.zhat, x),
            margin: 0.0,
        };
        sol.margin = self.strict_margin(&sol);
        sol
    }

    /// Smallest slack over `P`, `Zhat` and the H-infinity LMI at a point.
    pub fn strict_margin(&self, sol: &SdpSolution<f64>) -> f64 {
        let pr = &self.problem;
        let mut x = vec![0.0; pr.num_scalars()];
        pr.assign(self.p, &sol.p, &mut x);
        pr.assign(self.xhat, &sol.xhat, &mut x);
        pr.assign(self.yhat, &sol.yhat, &mut x);
        pr.assign(self.zhat, &sol.zhat, &mut x);
        let hinf = pr.lmi(HINF_LMI).expect("assembled").evaluate(&x);
        // the margin variable is zero in x, so the LMI value is -(Q + dist)
        lambda_min(&sol.p)
            .min(lambda_min(&sol.zhat))
            .min(lambda_min(&hinf))
    }
}

/// Result of stage one.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub solution: SdpSolution<f64>,
    pub region: EllipsoidRegion<f64>,
    /// Verified H-infinity norm of the center gain.
    pub center_hinf: f64,
    pub solver_status: SolveStatus,
}

/// Solves the stage-one LMIs at level `gamma` and derives the region. The
/// center gain is verified (Hurwitz and H-infinity norm) before returning.
pub fn synthesize_region(
    sys: &StateSpaceSystem<f64>,
    gamma: f64,
    opts: &SynthesisOptions,
    backend: &dyn SdpBackend,
) -> Result<Synthesis> {
    let prog = assemble_theorem1(sys, gamma, opts)?;
    let out = backend.solve(&prog.problem)?;
    debug!(
        "stage one at gamma={gamma}: {} after {} iterations",
        out.detail, out.iterations
    );
    if !out.is_solved() {
        return Err(Error::Infeasible {
            gamma,
            status: out.detail,
        });
    }
    let solution = prog.extract(&out.x);
    // a "solved" point that violates the strict inequalities is infeasible
    // for all practical purposes
    let slack_floor = -1e-7 * (1.0 + solution.p.amax() + solution.zhat.amax());
    if solution.margin < slack_floor
        || lambda_min(&(-&solution.xhat)) < slack_floor
        || !(lambda_min(&solution.zhat) > 0.0)
        || !(lambda_min(&solution.p) > 0.0)
    {
        return Err(Error::Infeasible {
            gamma,
            status: format!("{} (margin {:.3e})", out.detail, solution.margin),
        });
    }
    let region = derive_ellipsoid(&solution, gamma)?
        .allowing_theta_above_one(opts.allow_theta_above_one);
    let cl = close_loop(sys, &region.center())?;
    if !is_hurwitz(&cl.a, 0.0)? {
        return Err(Error::VerificationFailed {
            achieved: f64::INFINITY,
            gamma,
        });
    }
    let h = hinf_norm(&cl, opts.verify_rel_tol)?;
    if !(h.value <= gamma * (1.0 + 1e-6)) {
        return Err(Error::VerificationFailed {
            achieved: h.value,
            gamma,
        });
    }
    Ok(Synthesis {
        solution,
        region,
        center_hinf: h.value,
        solver_status: out.status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ellipsoid::membership;
    use crate::linalg::lambda_max;
    use crate::lti::{hinf_norm_grid, log_grid, FeedbackGain};
    use crate::sdp::ClarabelBackend;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    fn scalar_plant(bv: f64, dgv: f64) -> StateSpaceSystem<f64> {
        StateSpaceSystem::new(s(1.0), s(1.0), s(bv), s(1.0), s(0.5), s(dgv)).unwrap()
    }

    fn point(prog: &Theorem1Program, p: f64, x: f64, y: f64, z: f64) -> Vec<f64> {
        let pr = &prog.problem;
        let mut v = vec![0.0; pr.num_scalars()];
        pr.assign(prog.p, &s(p), &mut v);
        pr.assign(prog.xhat, &s(x), &mut v);
        pr.assign(prog.yhat, &s(y), &mut v);
        pr.assign(prog.zhat, &s(z), &mut v);
        v
    }

    #[test]
    fn scalar_block_matches_hand_expansion() {
        let (bv, dgv, gamma) = (0.7, 0.3, 2.0);
        let sys = scalar_plant(bv, dgv);
        let opts = SynthesisOptions { condition_cap: None, ..Default::default() };
        let prog = assemble_theorem1(&sys, gamma, &opts).unwrap();
        let eps = prog.eps;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (p, x, y, z): (f64, f64, f64, f64) =
                (rng.gen_range(0.1..2.0), rng.gen_range(-2.0..0.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.1..2.0));
            let v = point(&prog, p, x, y, z);
            // a = b = c = 1, dgu = 0.5
            let q11 = 2.0 * (p - y) - x + z + bv * bv;
            let q21 = p - 0.5 * x - 0.5 * y + dgv * bv;
            let q22 = -gamma * gamma - 0.25 * x + dgv * dgv;
            let got = prog.problem.lmi(HINF_LMI).unwrap().evaluate(&v);
            let expect = DMatrix::from_row_slice(2, 2, &[-q11 - eps, -q21, -q21, -q22 - eps]);
            assert!((got - expect).amax() < 1e-12);
        }
    }

    #[test]
    fn zero_disturbance_leaves_pure_q_block() {
        let with = scalar_plant(0.7, 0.3);
        let without = scalar_plant(0.0, 0.0);
        let opts = SynthesisOptions::default();
        let a = assemble_theorem1(&with, 2.0, &opts).unwrap();
        let b = assemble_theorem1(&without, 2.0, &opts).unwrap();
        let v = point(&b, 1.0, -0.5, 0.3, 0.8);
        let diff = a.problem.lmi(HINF_LMI).unwrap().evaluate(&v) - b.problem.lmi(HINF_LMI).unwrap().evaluate(&v);
        let outer = DMatrix::from_row_slice(2, 2, &[0.49, 0.21, 0.21, 0.09]);
        assert!((diff + outer).amax() < 1e-12);
        assert_eq!(b.problem.lmi(HINF_LMI).unwrap().constant()[(0, 0)], -b.eps);
    }

    #[test]
    fn assembly_is_deterministic() {
        let sys = crate::experiments::gen_dense_gaussian(&crate::experiments::DenseGaussianConfig { n: 3, m: 2, seed: 9 }).unwrap();
        let opts = SynthesisOptions::default();
        let a = assemble_theorem1(&sys, 2.0, &opts).unwrap();
        let b = assemble_theorem1(&sys, 2.0, &opts).unwrap();
        assert_eq!(a.problem, b.problem);
        assert!(assemble_theorem1(&sys, 0.0, &opts).is_err());
    }

    fn textbook_plant() -> StateSpaceSystem<f64> {
        StateSpaceSystem::new(s(1.0), s(1.0), s(1.0), s(1.0), s(0.0), s(0.0)).unwrap()
    }

    #[test]
    fn scalar_plant_feasible_at_three() {
        let sys = textbook_plant();
        let be = ClarabelBackend::default();
        let syn = synthesize_region(&sys, 3.0, &SynthesisOptions::default(), &be).unwrap();
        let f = syn.region.f_o()[(0, 0)];
        assert!(1.0 + f < 0.0);
        // closed loop 1 / (s - (1 + f)): peak at dc
        assert!((syn.center_hinf - 1.0 / (-(1.0 + f))).abs() < 1e-8);
        assert!(syn.center_hinf <= 3.0);
        assert!(membership(&syn.region, &syn.region.center(), 0.0, 0.0).unwrap());
        assert_eq!(syn.region.gamma(), 3.0);
        assert!((syn.region.r() + &syn.solution.xhat).amax() < 1e-8);
    }

    #[test]
    fn scalar_plant_infeasible_at_tiny_gamma() {
        // grid over stabilizing gains |f| <= 1e4: the best norm is ~1e-4
        let best = log_grid(1e-3, 1e4, 2000)
            .into_iter()
            .map(|g| -1.0 - g)
            .map(|f: f64| 1.0 / (-(1.0 + f)))
            .fold(f64::INFINITY, f64::min);
        assert!(best > 1e-6);
        let err = synthesize_region(&textbook_plant(), 1e-6, &SynthesisOptions::default(), &ClarabelBackend::default())
            .unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }), "{err}");
    }

    #[test]
    fn objectives_and_condition_cap() {
        let sys = crate::experiments::gen_dense_gaussian(&crate::experiments::DenseGaussianConfig { n: 4, m: 2, seed: 3 }).unwrap();
        let be = ClarabelBackend::default();
        let gamma = 4.0;
        for objective in [Stage1Objective::Feasibility, Stage1Objective::MaxMargin, Stage1Objective::InscribedBall] {
            let opts = SynthesisOptions { objective, condition_cap: Some(100.0), ..Default::default() };
            let syn = synthesize_region(&sys, gamma, &opts, &be).unwrap_or_else(|e| panic!("{objective:?}: {e}"));
            let p = &syn.solution.p;
            assert!(lambda_max(p) / lambda_min(p) <= 100.0 * (1.0 + 1e-6), "{objective:?}");
            assert!(syn.center_hinf <= gamma * (1.0 + 1e-6));
            assert!((syn.region.r() + &syn.solution.xhat).amax() < 1e-8 * (1.0 + syn.solution.xhat.amax()));
        }
    }

    #[test]
    fn inscribed_ball_is_inside_region() {
        let sys = crate::experiments::gen_dense_gaussian(&crate::experiments::DenseGaussianConfig { n: 4, m: 3, seed: 4 }).unwrap();
        let opts = SynthesisOptions { objective: Stage1Objective::InscribedBall, ..Default::default() };
        let prog = assemble_theorem1(&sys, 4.0, &opts).unwrap();
        let out = ClarabelBackend::default().solve(&prog.problem).unwrap();
        let t = prog.problem.extract(prog.ball.unwrap(), &out.x)[(0, 0)];
        assert!(t > 0.0);
        let region = derive_ellipsoid(&prog.extract(&out.x), 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let d = DMatrix::from_fn(3, 4, |_, _| rng.gen_range(-1.0..1.0));
            let d = &d * (t * (1.0 - 1e-6) / d.singular_values().max());
            let f = FeedbackGain(region.f_o() + d);
            assert!(membership(&region, &f, 1.0, 1e-9).unwrap());
            let cl = close_loop(&sys, &f).unwrap();
            let grid = hinf_norm_grid(&cl, &log_grid(1e-3, 1e3, 400));
            assert!(grid <= 4.0 * (1.0 + 1e-6));
        }
    }
}
