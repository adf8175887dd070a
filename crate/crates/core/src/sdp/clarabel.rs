use ::clarabel::algebra::CscMatrix;
use ::clarabel::solver::{
    DefaultSettings, DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus,
    SupportedConeT,
};

// Links the system OpenBLAS used by the PSD cone kernels.
use openblas_src as _;

use super::{SdpBackend, SdpOutcome, SdpProblem, SolveStatus};
use crate::error::{Error, Result};

/// Interior-point backend built on Clarabel.
#[derive(Debug, Clone)]
pub struct ClarabelBackend {
    pub tol: f64,
    pub max_iter: u32,
    pub verbose: bool,
    pub threads: u32,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200,
            verbose: false,
            threads: 0,
        }
    }
}

impl ClarabelBackend {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    fn settings(&self) -> Result<DefaultSettings<f64>> {
        DefaultSettingsBuilder::default()
            .verbose(self.verbose)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tol)
            .tol_gap_rel(self.tol)
            .tol_feas(self.tol)
            .direct_solve_method("faer".to_string())
            .max_threads(self.threads)
            .build()
            .map_err(|e| Error::Solver(e.to_string()))
    }
}

fn map_status(s: SolverStatus) -> SolveStatus {
    match s {
        SolverStatus::Solved => SolveStatus::Solved,
        SolverStatus::AlmostSolved => SolveStatus::AlmostSolved,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            SolveStatus::Unbounded
        }
        _ => SolveStatus::Failed,
    }
}

impl SdpBackend for ClarabelBackend {
    fn solve(&self, problem: &SdpProblem) -> Result<SdpOutcome> {
        problem.validate()?;
        let nvar = problem.num_scalars();
        let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
        let mut b = Vec::new();
        let mut cones = Vec::new();

        // s = b - A x must lie in the cone
        if !problem.linear().is_empty() {
            for (row, l) in problem.linear().iter().enumerate() {
                b.push(l.constant);
                for &(v, a) in &l.terms {
                    ri.push(row);
                    ci.push(v);
                    vals.push(-a);
                }
            }
            cones.push(SupportedConeT::NonnegativeConeT(problem.linear().len()));
        }
        let sqrt2 = std::f64::consts::SQRT_2;
        for (_, expr) in problem.lmis() {
            let k = expr.size();
            if k == 0 {
                continue;
            }
            let base = b.len();
            let svec = |r: usize, c: usize| base + c * (c + 1) / 2 + r;
            b.resize(base + k * (k + 1) / 2, 0.0);
            let c0 = expr.constant();
            for c in 0..k {
                for r in 0..=c {
                    let w = if r == c { 1.0 } else { sqrt2 };
                    b[svec(r, c)] = w * 0.5 * (c0[(r, c)] + c0[(c, r)]);
                }
            }
            for (v, r, c, a) in expr.terms() {
                let w = if r == c { 1.0 } else { sqrt2 };
                ri.push(svec(r, c));
                ci.push(v);
                vals.push(-w * a);
            }
            cones.push(SupportedConeT::PSDTriangleConeT(k));
        }
        let nrows = b.len();
        let a = CscMatrix::new_from_triplets(nrows, nvar, ri, ci, vals);
        let p = CscMatrix::<f64>::zeros((nvar, nvar));
        let q = problem.objective().to_vec();

        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, self.settings()?)
            .map_err(|e| Error::Solver(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        Ok(SdpOutcome {
            status: map_status(sol.status),
            x: sol.x.clone(),
            objective: sol.obj_val,
            iterations: sol.iterations,
            detail: format!("{:?}", sol.status),
        })
    }
}
