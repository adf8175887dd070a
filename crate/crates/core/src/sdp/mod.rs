//! Solver-agnostic description of a linear conic program with linear matrix
//! inequality constraints, plus the backend trait that solves it.
//!
//! A problem owns a flat vector of scalar decision variables. Variables are
//! declared in blocks (symmetric, rectangular or scalar) and every constraint
//! is an affine function of that vector:
//!
//! * [`AffineMatrix`] constraints require `C0 + sum_k x_k A_k` to be PSD;
//! * [`LinearConstraint`]s require `c0 + sum_k a_k x_k >= 0`.

mod clarabel;

pub use self::clarabel::ClarabelBackend;

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Shape of a declared variable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// Symmetric `n x n`, stored as the upper triangle column by column.
    Symmetric(usize),
    /// Dense `rows x cols`, stored row-major.
    Full(usize, usize),
    Scalar,
}

impl VarKind {
    pub fn len(&self) -> usize {
        match *self {
            VarKind::Symmetric(n) => n * (n + 1) / 2,
            VarKind::Full(r, c) => r * c,
            VarKind::Scalar => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        match *self {
            VarKind::Symmetric(n) => (n, n),
            VarKind::Full(r, c) => (r, c),
            VarKind::Scalar => (1, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarBlock {
    pub name: String,
    pub kind: VarKind,
    pub offset: usize,
}

/// Handle to a declared block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Index of the scalar inside a symmetric block holding entry `(a, b)`.
fn sym_index(a: usize, b: usize) -> usize {
    let (r, c) = if a <= b { (a, b) } else { (b, a) };
    c * (c + 1) / 2 + r
}

/// Symmetric `size x size` affine matrix expression. Coefficients are kept for
/// the upper triangle only.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrix {
    size: usize,
    constant: DMatrix<f64>,
    coeffs: BTreeMap<(usize, usize, usize), f64>,
}

/// How a block term is mirrored into the symmetric expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mirror {
    /// Diagonal block: add `X + X^T`.
    Sym,
    /// Off-diagonal block: `X` at `(r0, c0)` and `X^T` at `(c0, r0)`.
    Block,
}

impl AffineMatrix {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            constant: DMatrix::zeros(size, size),
            coeffs: BTreeMap::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn constant(&self) -> &DMatrix<f64> {
        &self.constant
    }

    /// Nonzero coefficients as `(var_index, row, col, value)` with `row <= col`.
    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.coeffs.iter().map(|(&(v, r, c), &x)| (v, r, c, x))
    }

    fn push(&mut self, var: usize, r: usize, c: usize, x: f64) {
        if x == 0.0 {
            return;
        }
        let key = if r <= c { (var, r, c) } else { (var, c, r) };
        *self.coeffs.entry(key).or_insert(0.0) += x;
    }

    /// Adds the symmetric constant `m` to the diagonal block at `r0`.
    pub fn add_const(&mut self, r0: usize, m: &DMatrix<f64>) -> &mut Self {
        let mut v = self.constant.view_mut((r0, r0), m.shape());
        v += m;
        self
    }

    /// Adds constant `m` at block `(r0, c0)` and its transpose at `(c0, r0)`.
    pub fn add_const_offdiag(&mut self, r0: usize, c0: usize, m: &DMatrix<f64>) -> &mut Self {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.constant[(r0 + i, c0 + j)] += m[(i, j)];
                self.constant[(c0 + j, r0 + i)] += m[(i, j)];
            }
        }
        self
    }

    fn add_product(
        &mut self,
        prob: &SdpProblem,
        r0: usize,
        c0: usize,
        left: &DMatrix<f64>,
        var: Var,
        right: &DMatrix<f64>,
        mirror: Mirror,
    ) {
        let block = &prob.vars[var.0];
        let (vr, vc) = block.kind.shape();
        assert_eq!(left.ncols(), vr, "left factor does not match {}", block.name);
        assert_eq!(right.nrows(), vc, "right factor does not match {}", block.name);
        let (rows, cols) = (left.nrows(), right.ncols());
        assert!(r0 + rows <= self.size && c0 + cols <= self.size);
        // each scalar variable contributes left[:, a] * right[b, :] (+ the
        // (b, a) counterpart for off-diagonal symmetric entries)
        let emit = |this: &mut Self, idx: usize, a: usize, b: usize| {
            for i in 0..rows {
                let la = left[(i, a)];
                if la == 0.0 {
                    continue;
                }
                for j in 0..cols {
                    let x = la * right[(b, j)];
                    if x == 0.0 {
                        continue;
                    }
                    let (gr, gc) = (r0 + i, c0 + j);
                    match mirror {
                        // (gr, gc) and (gc, gr) share one upper-triangle slot
                        Mirror::Sym if gr == gc => this.push(idx, gr, gc, 2.0 * x),
                        Mirror::Sym => this.push(idx, gr, gc, x),
                        Mirror::Block => this.push(idx, gr, gc, x),
                    }
                }
            }
        };
        match block.kind {
            VarKind::Symmetric(n) => {
                for b in 0..n {
                    for a in 0..=b {
                        let idx = block.offset + sym_index(a, b);
                        emit(self, idx, a, b);
                        if a != b {
                            emit(self, idx, b, a);
                        }
                    }
                }
            }
            VarKind::Full(r, c) => {
                for a in 0..r {
                    for b in 0..c {
                        emit(self, block.offset + a * c + b, a, b);
                    }
                }
            }
            VarKind::Scalar => emit(self, block.offset, 0, 0),
        }
    }

    /// Adds `L V R + (L V R)^T` to the diagonal block starting at `r0`.
    pub fn add_sym_product(
        &mut self,
        prob: &SdpProblem,
        r0: usize,
        left: &DMatrix<f64>,
        var: Var,
        right: &DMatrix<f64>,
    ) -> &mut Self {
        self.add_product(prob, r0, r0, left, var, right, Mirror::Sym);
        self
    }

    /// Adds `L V R` to the diagonal block at `r0` for a term that is already
    /// symmetric (e.g. `B X B^T` with symmetric `X`).
    pub fn add_congruence(
        &mut self,
        prob: &SdpProblem,
        r0: usize,
        left: &DMatrix<f64>,
        var: Var,
    ) -> &mut Self {
        // L X L^T is symmetric, so half of the symmetrized product
        let half = left * 0.5;
        self.add_product(prob, r0, r0, &half, var, &left.transpose(), Mirror::Sym);
        self
    }

    /// Adds `L V R` at block `(r0, c0)` (with `r0 != c0`) and its transpose.
    pub fn add_offdiag_product(
        &mut self,
        prob: &SdpProblem,
        r0: usize,
        c0: usize,
        left: &DMatrix<f64>,
        var: Var,
        right: &DMatrix<f64>,
    ) -> &mut Self {
        assert!(
            r0 + left.nrows() <= c0 || c0 + right.ncols() <= r0,
            "off-diagonal block overlaps the diagonal"
        );
        self.add_product(prob, r0, c0, left, var, right, Mirror::Block);
        self
    }

    /// Adds `coeff * var * I` on the diagonal block `[r0, r0 + len)`; `var`
    /// must be scalar.
    pub fn add_scaled_identity(
        &mut self,
        prob: &SdpProblem,
        r0: usize,
        len: usize,
        var: Var,
        coeff: f64,
    ) -> &mut Self {
        let block = &prob.vars[var.0];
        assert_eq!(block.kind, VarKind::Scalar);
        for i in r0..r0 + len {
            self.push(block.offset, i, i, coeff);
        }
        self
    }

    /// The expression multiplied by -1.
    pub fn negated(mut self) -> Self {
        self.constant = -self.constant;
        for v in self.coeffs.values_mut() {
            *v = -*v;
        }
        self
    }

    /// Value of the expression at the point `x`.
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (&(v, r, c), &a) in &self.coeffs {
            m[(r, c)] += a * x[v];
            if r != c {
                m[(c, r)] += a * x[v];
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    vars: Vec<VarBlock>,
    num_scalars: usize,
    lmis: Vec<(String, AffineMatrix)>,
    linear: Vec<LinearConstraint>,
    objective: Vec<f64>,
}

impl Default for SdpProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl SdpProblem {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            num_scalars: 0,
            lmis: Vec::new(),
            linear: Vec::new(),
            objective: Vec::new(),
        }
    }

    fn declare(&mut self, name: &str, kind: VarKind) -> Var {
        let offset = self.num_scalars;
        self.num_scalars += kind.len();
        self.objective.resize(self.num_scalars, 0.0);
        self.vars.push(VarBlock {
            name: name.to_string(),
            kind,
            offset,
        });
        Var(self.vars.len() - 1)
    }

    pub fn symmetric(&mut self, name: &str, n: usize) -> Var {
        self.declare(name, VarKind::Symmetric(n))
    }

    pub fn full(&mut self, name: &str, rows: usize, cols: usize) -> Var {
        self.declare(name, VarKind::Full(rows, cols))
    }

    pub fn scalar(&mut self, name: &str) -> Var {
        self.declare(name, VarKind::Scalar)
    }

    pub fn block(&self, v: Var) -> &VarBlock {
        &self.vars[v.0]
    }

    pub fn blocks(&self) -> &[VarBlock] {
        &self.vars
    }

    pub fn num_scalars(&self) -> usize {
        self.num_scalars
    }

    /// Scalar index of entry `(i, j)` of a block.
    pub fn index(&self, v: Var, i: usize, j: usize) -> usize {
        let b = &self.vars[v.0];
        match b.kind {
            VarKind::Symmetric(_) => b.offset + sym_index(i, j),
            VarKind::Full(_, c) => b.offset + i * c + j,
            VarKind::Scalar => b.offset,
        }
    }

    /// Requires `expr` to be positive semidefinite.
    pub fn add_psd(&mut self, name: &str, expr: AffineMatrix) {
        self.lmis.push((name.to_string(), expr));
    }

    /// Requires `constant + sum a_k x_k >= 0`.
    pub fn add_nonneg(&mut self, constant: f64, terms: Vec<(usize, f64)>) {
        self.linear.push(LinearConstraint { constant, terms });
    }

    /// Adds `coeff * x_idx` to the minimized objective.
    pub fn add_objective(&mut self, idx: usize, coeff: f64) {
        self.objective[idx] += coeff;
    }

    pub fn lmis(&self) -> &[(String, AffineMatrix)] {
        &self.lmis
    }

    pub fn linear(&self) -> &[LinearConstraint] {
        &self.linear
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn lmi(&self, name: &str) -> Option<&AffineMatrix> {
        self.lmis.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, e) in &self.lmis {
            if e.constant.shape() != (e.size, e.size) {
                return Err(Error::Dimension(format!("LMI {name} constant shape")));
            }
            if e.coeffs.keys().any(|&(v, r, c)| v >= self.num_scalars || c >= e.size || r > c) {
                return Err(Error::Dimension(format!("LMI {name} references out-of-range entries")));
            }
        }
        for l in &self.linear {
            if l.terms.iter().any(|&(v, _)| v >= self.num_scalars) {
                return Err(Error::Dimension("linear constraint variable out of range".into()));
            }
        }
        Ok(())
    }

    /// Extracts a declared block from a solution vector.
    pub fn extract(&self, v: Var, x: &[f64]) -> DMatrix<f64> {
        let b = &self.vars[v.0];
        match b.kind {
            VarKind::Symmetric(n) => {
                DMatrix::from_fn(n, n, |i, j| x[b.offset + sym_index(i, j)])
            }
            VarKind::Full(r, c) => DMatrix::from_fn(r, c, |i, j| x[b.offset + i * c + j]),
            VarKind::Scalar => DMatrix::from_element(1, 1, x[b.offset]),
        }
    }

    /// Writes a matrix value into the slots of block `v` of `x`.
    pub fn assign(&self, v: Var, value: &DMatrix<f64>, x: &mut [f64]) {
        let b = &self.vars[v.0];
        match b.kind {
            VarKind::Symmetric(n) => {
                for j in 0..n {
                    for i in 0..=j {
                        x[b.offset + sym_index(i, j)] = 0.5 * (value[(i, j)] + value[(j, i)]);
                    }
                }
            }
            VarKind::Full(r, c) => {
                for i in 0..r {
                    for j in 0..c {
                        x[b.offset + i * c + j] = value[(i, j)];
                    }
                }
            }
            VarKind::Scalar => x[b.offset] = value[(0, 0)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Solved,
    AlmostSolved,
    Infeasible,
    Unbounded,
    /// Iteration/time limits or numerical trouble.
    Failed,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone)]
pub struct SdpOutcome {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub detail: String,
}

impl SdpOutcome {
    pub fn is_solved(&self) -> bool {
        matches!(self.status, SolveStatus::Solved | SolveStatus::AlmostSolved)
    }
}

/// A semidefinite programming solver.
pub trait SdpBackend: Sync {
    fn solve(&self, problem: &SdpProblem) -> Result<SdpOutcome>;
}
