//! Assembly of the rate-`rho` feasibility problem.
//!
//! The decision variables are the Lyapunov parameters `(P, p)`, nonnegative
//! interpolation multipliers (`lambda` for the positivity block, `eta` for
//! the decrease block), optional free multipliers `nu` for equality
//! constraints, and a margin `t`. Strict inequalities are offset by `t`,
//! every variable is boxed to `[-1, 1]`, and the backend maximizes `t`.
//!
//! Assembly runs on the class rescaled to `L = 1`. Each variable records a
//! unit exponent `e` such that `normalized = original * L^e`, which is how
//! certificates are mapped back to the caller's units.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::interp::{all_pairs, InterpPair};
use crate::model::{FunctionClass, MethodSpec};
use crate::symbolic::{build_basis, roll_method, BasisWorkspace, Idx, Row};

pub type VarId = usize;

/// Role of a decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    /// Entry `(a, b)`, `a <= b`, of the quadratic part `P`.
    Quad(usize, usize),
    /// Entry of the linear part `p`.
    Lin(usize),
    Lambda(Idx, Idx),
    Eta(Idx, Idx),
    Nu(usize),
    Margin,
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarKind::Quad(a, b) => write!(f, "P[{a}][{b}]"),
            VarKind::Lin(a) => write!(f, "p[{a}]"),
            VarKind::Lambda(i, j) => write!(f, "lambda[{i}][{j}]"),
            VarKind::Eta(i, j) => write!(f, "eta[{i}][{j}]"),
            VarKind::Nu(i) => write!(f, "nu[{i}]"),
            VarKind::Margin => f.write_str("t"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub kind: VarKind,
    pub nonneg: bool,
    /// `normalized = original * L^unit_exponent`.
    pub unit_exponent: i32,
}

/// `constant + sum_v y_v * coeff_v`, symmetric-matrix valued.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrix {
    pub dim: usize,
    pub constant: DMatrix<f64>,
    pub terms: Vec<(VarId, DMatrix<f64>)>,
}

impl AffineMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            constant: DMatrix::zeros(dim, dim),
            terms: Vec::new(),
        }
    }

    pub fn add_term(&mut self, var: VarId, coeff: DMatrix<f64>) {
        assert_eq!(coeff.shape(), (self.dim, self.dim));
        self.terms.push((var, coeff));
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            constant: &self.constant * c,
            terms: self.terms.iter().map(|(v, m)| (*v, m * c)).collect(),
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        out.constant += &other.constant;
        out.terms.extend(other.terms.iter().cloned());
        out
    }

    pub fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (v, m) in &self.terms {
            out += m * y[*v];
        }
        out
    }

    /// Coordinates whose row is zero in the constant and in every term, so
    /// that the matrix is singular there for every assignment.
    pub fn inert_coordinates(&self) -> Vec<usize> {
        (0..self.dim)
            .filter(|&a| {
                std::iter::once(&self.constant)
                    .chain(self.terms.iter().map(|(_, m)| m))
                    .all(|m| m.row(a).iter().all(|x| *x == 0.0))
            })
            .collect()
    }

    /// The principal submatrix on `keep`.
    pub fn restricted(&self, keep: &[usize]) -> Self {
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])]);
        Self {
            dim: keep.len(),
            constant: pick(&self.constant),
            terms: self.terms.iter().map(|(v, m)| (*v, pick(m))).collect(),
        }
    }
}

/// `constant + sum_v y_v * coeff_v`, vector valued.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineVector {
    pub dim: usize,
    pub constant: DVector<f64>,
    pub terms: Vec<(VarId, DVector<f64>)>,
}

impl AffineVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            constant: DVector::zeros(dim),
            terms: Vec::new(),
        }
    }

    pub fn add_term(&mut self, var: VarId, coeff: DVector<f64>) {
        assert_eq!(coeff.len(), self.dim);
        self.terms.push((var, coeff));
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            constant: &self.constant * c,
            terms: self.terms.iter().map(|(v, m)| (*v, m * c)).collect(),
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        out.constant += &other.constant;
        out.terms.extend(other.terms.iter().cloned());
        out
    }

    pub fn eval(&self, y: &[f64]) -> DVector<f64> {
        let mut out = self.constant.clone();
        for (v, m) in &self.terms {
            out.axpy(y[*v], m, 1.0);
        }
        out
    }
}

/// How a constraint expression `F(y)` is constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `F(y) >= t` (strict inequality realized through the margin).
    AboveMargin,
    /// `F(y) >= 0`.
    NonNegative,
    /// `F(y) <= 0`.
    NonPositive,
}

impl Sense {
    pub fn is_strict(&self) -> bool {
        matches!(self, Sense::AboveMargin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixConstraint {
    pub label: String,
    pub expr: AffineMatrix,
    pub sense: Sense,
    /// Unit exponent of each basis coordinate (0 for iterates, 1 for
    /// gradients); the slack in original units is
    /// `S_ab / L^(e_a + e_b)`.
    pub coord_exponents: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorConstraint {
    pub label: String,
    pub expr: AffineVector,
    pub sense: Sense,
    /// Unit exponent shared by all entries.
    pub unit_exponent: i32,
}

/// Restricted Lyapunov searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RestrictionMode {
    #[default]
    Unrestricted,
    /// Drop the positivity multipliers (`lambda = 0`).
    LambdaZero,
    /// Additionally require `P > 0` and `p > 0`.
    PosDefShape,
}

impl RestrictionMode {
    pub fn name(&self) -> &'static str {
        match self {
            RestrictionMode::Unrestricted => "none",
            RestrictionMode::LambdaZero => "lambda-zero",
            RestrictionMode::PosDefShape => "posdef-shape",
        }
    }
}

impl fmt::Display for RestrictionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RestrictionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "unrestricted" => Ok(RestrictionMode::Unrestricted),
            "lambda-zero" => Ok(RestrictionMode::LambdaZero),
            "posdef-shape" => Ok(RestrictionMode::PosDefShape),
            _ => Err(Error::InvalidArgument(format!(
                "unknown restriction mode `{s}` (none, lambda-zero, posdef-shape)"
            ))),
        }
    }
}

/// Which analysis produced a problem; enough to rebuild it.
#[derive(Debug, Clone, PartialEq)]
pub enum Analysis {
    FixedStep {
        spec: MethodSpec,
        mode: RestrictionMode,
    },
    /// Steepest descent with exact line search.
    ExactLineSearch,
    /// Heavy-ball with a two-dimensional subspace search.
    SubspaceSearch,
    /// Fast gradient method restarted every `inner` steps.
    Restart { inner: usize },
    /// Hand-built problem.
    Custom,
}

impl Analysis {
    pub fn name(&self) -> &'static str {
        match self {
            Analysis::FixedStep { .. } => "fixed-step",
            Analysis::ExactLineSearch => "els-gd",
            Analysis::SubspaceSearch => "els-hbm",
            Analysis::Restart { .. } => "restart",
            Analysis::Custom => "custom",
        }
    }
}

/// Problem-level metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemMeta {
    pub analysis: Analysis,
    /// Class in the caller's units.
    pub class: FunctionClass,
    pub rho: f64,
    /// The decrease condition reads `V+ <= rho^(2 * decrease_power) V`.
    pub decrease_power: u32,
}

/// An affine LMI feasibility problem with margin and box normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    vars: Vec<Variable>,
    margin: VarId,
    matrix_constraints: Vec<MatrixConstraint>,
    vector_constraints: Vec<VectorConstraint>,
    box_bound: f64,
    scale: f64,
    meta: ProblemMeta,
}

impl SdpProblem {
    /// Empty problem holding only the margin variable. `scale` is the
    /// smoothness constant divided out during normalization.
    pub fn new(meta: ProblemMeta, scale: f64) -> Self {
        let mut p = Self {
            vars: Vec::new(),
            margin: 0,
            matrix_constraints: Vec::new(),
            vector_constraints: Vec::new(),
            box_bound: 1.0,
            scale,
            meta,
        };
        p.margin = p.add_var(VarKind::Margin, false, 0);
        p
    }

    pub fn add_var(&mut self, kind: VarKind, nonneg: bool, unit_exponent: i32) -> VarId {
        self.vars.push(Variable {
            kind,
            nonneg,
            unit_exponent,
        });
        self.vars.len() - 1
    }

    pub fn add_matrix_constraint(&mut self, c: MatrixConstraint) -> usize {
        assert_eq!(c.coord_exponents.len(), c.expr.dim);
        self.matrix_constraints.push(c);
        self.matrix_constraints.len() - 1
    }

    pub fn add_vector_constraint(&mut self, c: VectorConstraint) -> usize {
        self.vector_constraints.push(c);
        self.vector_constraints.len() - 1
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn margin_var(&self) -> VarId {
        self.margin
    }

    pub fn matrix_constraints(&self) -> &[MatrixConstraint] {
        &self.matrix_constraints
    }

    pub fn vector_constraints(&self) -> &[VectorConstraint] {
        &self.vector_constraints
    }

    pub fn box_bound(&self) -> f64 {
        self.box_bound
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    pub fn nonneg_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.vars.len()).filter(|&v| self.vars[v].nonneg)
    }

    pub fn count_kind(&self, pred: impl Fn(&VarKind) -> bool) -> usize {
        self.vars.iter().filter(|v| pred(&v.kind)).count()
    }

    pub fn find_var(&self, kind: VarKind) -> Option<VarId> {
        self.vars.iter().position(|v| v.kind == kind)
    }

    /// Smallest eigenvalue or entry over the strict constraints at `values`
    /// (infinite when there are none).
    pub fn strict_slack(&self, values: &[f64]) -> f64 {
        let mut worst = f64::INFINITY;
        for c in self.matrix_constraints.iter().filter(|c| c.sense.is_strict() && c.expr.dim > 0) {
            worst = worst.min(SymmetricEigen::new(c.expr.eval(values)).eigenvalues.min());
        }
        for c in self.vector_constraints.iter().filter(|c| c.sense.is_strict()) {
            let v = c.expr.eval(values);
            if !v.is_empty() {
                worst = worst.min(v.min());
            }
        }
        worst
    }

    /// Largest violation of the non-strict constraints and of the sign of
    /// nonnegative variables at `values` (0 when all hold).
    pub fn nonstrict_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = self.nonneg_vars().map(|v| -values[v]).fold(0.0, f64::max);
        for c in &self.matrix_constraints {
            let eig = || SymmetricEigen::new(c.expr.eval(values)).eigenvalues;
            match c.sense {
                Sense::NonPositive if c.expr.dim > 0 => worst = worst.max(eig().max()),
                Sense::NonNegative if c.expr.dim > 0 => worst = worst.max(-eig().min()),
                _ => {}
            }
        }
        for c in &self.vector_constraints {
            let v = c.expr.eval(values);
            match c.sense {
                Sense::NonPositive if !v.is_empty() => worst = worst.max(v.max()),
                Sense::NonNegative if !v.is_empty() => worst = worst.max(-v.min()),
                _ => {}
            }
        }
        worst.max(0.0)
    }
}

/// Quadratic and linear Lyapunov parameters as problem variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovShape {
    /// Number of stacked iterates in the state (`N + 1`).
    state_len: usize,
    quad: Vec<Vec<VarId>>,
    lin: Vec<VarId>,
}

impl LyapunovShape {
    /// Declares `P` of size `2 * state_len` (upper triangle free) and `p` of
    /// size `state_len`. The first half of the quadratic state holds
    /// iterates, the second half gradients.
    pub fn declare(problem: &mut SdpProblem, state_len: usize) -> Self {
        Self::declare_with_lin(problem, state_len, state_len)
    }

    pub fn declare_with_lin(problem: &mut SdpProblem, state_len: usize, lin_len: usize) -> Self {
        let n = 2 * state_len;
        let mut quad = vec![vec![0; n]; n];
        for a in 0..n {
            for b in a..n {
                let e = (a >= state_len) as i32 + (b >= state_len) as i32;
                let id = problem.add_var(VarKind::Quad(a, b), false, e);
                quad[a][b] = id;
                quad[b][a] = id;
            }
        }
        let lin = (0..lin_len)
            .map(|a| problem.add_var(VarKind::Lin(a), false, 1))
            .collect();
        Self {
            state_len,
            quad,
            lin,
        }
    }

    pub fn state_len(&self) -> usize {
        self.state_len
    }

    pub fn quad_size(&self) -> usize {
        2 * self.state_len
    }

    pub fn lin_len(&self) -> usize {
        self.lin.len()
    }

    pub fn quad_var(&self, a: usize, b: usize) -> VarId {
        self.quad[a][b]
    }

    pub fn lin_var(&self, a: usize) -> VarId {
        self.lin[a]
    }

    /// Variable assignment from concrete `(P, p)` values (normalized units).
    pub fn assign(&self, values: &mut [f64], p_mat: &DMatrix<f64>, p_vec: &DVector<f64>) {
        let n = self.quad_size();
        for a in 0..n {
            for b in a..n {
                values[self.quad[a][b]] = p_mat[(a, b)];
            }
        }
        for (a, &id) in self.lin.iter().enumerate() {
            values[id] = p_vec[a];
        }
    }
}

/// Stacked selectors of the state at iteration `k`; row `r` is iteration
/// `k - r`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSelectors {
    pub xs: DMatrix<f64>,
    pub gs: DMatrix<f64>,
    pub fs: DMatrix<f64>,
}

impl StateSelectors {
    pub fn from_rows(xs: &[Row], gs: &[Row], fs: &[Row]) -> Self {
        fn stack(rows: &[Row]) -> DMatrix<f64> {
            let w = rows.first().map_or(0, |r| r.len());
            let mut m = DMatrix::zeros(rows.len(), w);
            for (i, r) in rows.iter().enumerate() {
                m.set_row(i, &r.transpose());
            }
            m
        }
        Self {
            xs: stack(xs),
            gs: stack(gs),
            fs: stack(fs),
        }
    }

    /// `[Xbar; Gbar]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (m, w) = self.xs.shape();
        let mut s = DMatrix::zeros(2 * m, w);
        s.view_mut((0, 0), (m, w)).copy_from(&self.xs);
        s.view_mut((m, 0), (m, w)).copy_from(&self.gs);
        s
    }
}

pub fn state_selectors(ws: &BasisWorkspace, k: usize) -> Result<StateSelectors> {
    let n = ws.degree();
    if k < n || k > ws.horizon() {
        return Err(Error::IndexOutOfRange {
            index: k as i64,
            what: "state selector iteration must lie in [N, K]",
        });
    }
    let mut xs = Vec::with_capacity(n + 1);
    let mut gs = Vec::with_capacity(n + 1);
    let mut fs = Vec::with_capacity(n + 1);
    for r in 0..=n {
        let i = k - r;
        xs.push(ws.xbar(i as i64)?.clone());
        gs.push(ws.gbar(Idx::At(i))?);
        fs.push(ws.fbar(Idx::At(i))?);
    }
    Ok(StateSelectors::from_rows(&xs, &gs, &fs))
}

/// `V = [Xbar; Gbar]^T P [Xbar; Gbar]` and `v = p^T Fbar` as affine
/// functions of the shape's variables.
pub fn lyapunov_expr(sel: &StateSelectors, shape: &LyapunovShape) -> Result<(AffineMatrix, AffineVector)> {
    let s = sel.stacked();
    if s.nrows() != shape.quad_size() || sel.fs.nrows() != shape.lin_len() {
        return Err(Error::DimensionMismatch(format!(
            "selectors with {} state rows do not fit a Lyapunov shape of size {}",
            sel.xs.nrows(),
            shape.state_len()
        )));
    }
    let width = s.ncols();
    let mut quad = AffineMatrix::zeros(width);
    for a in 0..s.nrows() {
        let ra = s.row(a).transpose();
        for b in a..s.nrows() {
            let rb = s.row(b).transpose();
            let coeff = if a == b {
                &ra * ra.transpose()
            } else {
                &ra * rb.transpose() + &rb * ra.transpose()
            };
            quad.add_term(shape.quad_var(a, b), coeff);
        }
    }
    let mut lin = AffineVector::zeros(sel.fs.ncols());
    for a in 0..sel.fs.nrows() {
        lin.add_term(shape.lin_var(a), sel.fs.row(a).transpose());
    }
    Ok((quad, lin))
}

/// `V(next) - weight * V(now)` for both the quadratic and the linear part,
/// divided by `weight` when it exceeds one.
pub fn decrease_between(
    next: &StateSelectors,
    now: &StateSelectors,
    shape: &LyapunovShape,
    weight: f64,
) -> Result<(AffineMatrix, AffineVector)> {
    let (vn, ln) = lyapunov_expr(next, shape)?;
    let (vc, lc) = lyapunov_expr(now, shape)?;
    // dividing by a large weight keeps the block well scaled; the sign is
    // unchanged
    if weight > 1.0 {
        let inv = 1.0 / weight;
        return Ok((vn.scaled(inv).plus(&vc.scaled(-1.0)), ln.scaled(inv).plus(&lc.scaled(-1.0))));
    }
    Ok((vn.plus(&vc.scaled(-weight)), ln.plus(&lc.scaled(-weight))))
}

/// `Delta V_N = V_{N+1} - rho^2 V_N` over the horizon-`N+1` workspace.
pub fn decrease_expr(
    ws: &BasisWorkspace,
    shape: &LyapunovShape,
    rho: f64,
) -> Result<(AffineMatrix, AffineVector)> {
    let n = ws.degree();
    if ws.horizon() != n + 1 {
        return Err(Error::InvalidArgument(format!(
            "decrease needs horizon N + 1 = {}, workspace has {}",
            n + 1,
            ws.horizon()
        )));
    }
    let now = state_selectors(ws, n)?;
    let next = state_selectors(ws, n + 1)?;
    decrease_between(&next, &now, shape, rho * rho)
}

/// Which sign a quadratic must have on every trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignSense {
    PositiveDefinite,
    PositiveSemidefinite,
    NegativeSemidefinite,
}

/// Naming of the multipliers a sign block introduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierFamily {
    Lambda,
    Eta,
}

impl MultiplierFamily {
    /// `lambda` on the degree horizon, `eta` one step beyond it.
    pub fn for_horizon(degree: usize, horizon: usize) -> Result<Self> {
        match horizon.checked_sub(degree) {
            Some(0) => Ok(MultiplierFamily::Lambda),
            Some(1) => Ok(MultiplierFamily::Eta),
            _ => Err(Error::InvalidArgument(format!(
                "no multiplier family for horizon {horizon} at degree {degree}"
            ))),
        }
    }

    fn kind(&self, i: Idx, j: Idx) -> VarKind {
        match self {
            MultiplierFamily::Lambda => VarKind::Lambda(i, j),
            MultiplierFamily::Eta => VarKind::Eta(i, j),
        }
    }
}

/// Variables and constraint slots created by [`certify_sign`].
#[derive(Debug, Clone, PartialEq)]
pub struct SignBlock {
    pub family: MultiplierFamily,
    pub multipliers: Vec<((Idx, Idx), VarId)>,
    pub matrix: usize,
    pub vector: usize,
}

/// Multiplier values and slacks of a sign block at a given point.
#[derive(Debug, Clone, PartialEq)]
pub struct SignCertificate {
    pub multipliers: Vec<((Idx, Idx), f64)>,
    pub matrix_slack: DMatrix<f64>,
    pub vector_slack: DVector<f64>,
}

impl SignBlock {
    pub fn evaluate(&self, problem: &SdpProblem, values: &[f64]) -> SignCertificate {
        SignCertificate {
            multipliers: self
                .multipliers
                .iter()
                .map(|(ij, v)| (*ij, values[*v]))
                .collect(),
            matrix_slack: problem.matrix_constraints[self.matrix].expr.eval(values),
            vector_slack: problem.vector_constraints[self.vector].expr.eval(values),
        }
    }
}

/// Certifies the sign of the quadratic `(Q, q)` over all trajectories of the
/// workspace by an S-procedure over the interpolation pairs of its index
/// set.
#[allow(clippy::too_many_arguments)]
pub fn certify_sign(
    problem: &mut SdpProblem,
    label: &str,
    q_mat: &AffineMatrix,
    q_vec: &AffineVector,
    ws: &BasisWorkspace,
    class: &FunctionClass,
    sense: SignSense,
    family: MultiplierFamily,
    coord_exponents: Vec<i32>,
) -> Result<SignBlock> {
    let pairs = all_pairs(ws, class)?;
    certify_sign_with_pairs(problem, label, q_mat, q_vec, &pairs, sense, family, coord_exponents)
}

/// [`certify_sign`] with an explicit pair list; an empty list drops the
/// multipliers entirely.
#[allow(clippy::too_many_arguments)]
pub fn certify_sign_with_pairs(
    problem: &mut SdpProblem,
    label: &str,
    q_mat: &AffineMatrix,
    q_vec: &AffineVector,
    pairs: &[InterpPair],
    sense: SignSense,
    family: MultiplierFamily,
    coord_exponents: Vec<i32>,
) -> Result<SignBlock> {
    for pair in pairs {
        if pair.mat.nrows() != q_mat.dim || pair.lin.len() != q_vec.dim {
            return Err(Error::DimensionMismatch(format!(
                "interpolation pair of size {} does not match quadratic of size {}",
                pair.mat.nrows(),
                q_mat.dim
            )));
        }
    }
    // Q - sum tau M >= (t)  or  Q + sum tau M <= 0
    let tau_sign = match sense {
        SignSense::NegativeSemidefinite => 1.0,
        _ => -1.0,
    };
    let mut mat = q_mat.clone();
    let mut vec = q_vec.clone();
    let mut multipliers = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let id = problem.add_var(family.kind(pair.i, pair.j), true, 2);
        mat.add_term(id, &pair.mat * tau_sign);
        vec.add_term(id, &pair.lin * tau_sign);
        multipliers.push(((pair.i, pair.j), id));
    }
    let s = match sense {
        SignSense::PositiveDefinite => Sense::AboveMargin,
        SignSense::PositiveSemidefinite => Sense::NonNegative,
        SignSense::NegativeSemidefinite => Sense::NonPositive,
    };
    // a strict inequality cannot hold on a coordinate the state and the
    // interpolation conditions never touch; such coordinates are dropped
    let (mat, coord_exponents) = match s {
        Sense::AboveMargin if !mat.inert_coordinates().is_empty() => {
            let inert = mat.inert_coordinates();
            let keep: Vec<usize> = (0..mat.dim).filter(|a| !inert.contains(a)).collect();
            let exps = keep.iter().map(|&a| coord_exponents[a]).collect();
            (mat.restricted(&keep), exps)
        }
        _ => (mat, coord_exponents),
    };
    let matrix = problem.add_matrix_constraint(MatrixConstraint {
        label: format!("{label}.matrix"),
        expr: mat,
        sense: s,
        coord_exponents,
    });
    let vector = problem.add_vector_constraint(VectorConstraint {
        label: format!("{label}.vector"),
        expr: vec,
        sense: s,
        unit_exponent: 1,
    });
    Ok(SignBlock {
        family,
        multipliers,
        matrix,
        vector,
    })
}

/// Unit exponents of the standard basis `(x_{-N} .. x_0, g_0 .. g_K)`.
pub fn standard_coord_exponents(degree: usize, horizon: usize) -> Vec<i32> {
    std::iter::repeat_n(0, degree + 1)
        .chain(std::iter::repeat_n(1, horizon + 1))
        .collect()
}

/// Adds `P >= t I` and `p >= t` for the restricted shape search.
pub fn add_shape_positivity(problem: &mut SdpProblem, shape: &LyapunovShape) {
    let n = shape.quad_size();
    let mut mat = AffineMatrix::zeros(n);
    for a in 0..n {
        for b in a..n {
            let mut e = DMatrix::zeros(n, n);
            e[(a, b)] = 1.0;
            e[(b, a)] = 1.0;
            mat.add_term(shape.quad_var(a, b), e);
        }
    }
    let m = shape.lin_len();
    let mut vec = AffineVector::zeros(m);
    for a in 0..m {
        let mut e = DVector::zeros(m);
        e[a] = 1.0;
        vec.add_term(shape.lin_var(a), e);
    }
    let half = shape.state_len();
    problem.add_matrix_constraint(MatrixConstraint {
        label: "shape.P".into(),
        expr: mat,
        sense: Sense::AboveMargin,
        coord_exponents: (0..n).map(|a| (a >= half) as i32).collect(),
    });
    problem.add_vector_constraint(VectorConstraint {
        label: "shape.p".into(),
        expr: vec,
        sense: Sense::AboveMargin,
        unit_exponent: 1,
    });
}

/// Handles of a fixed-step problem's blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoSdp {
    pub problem: SdpProblem,
    pub shape: LyapunovShape,
    pub positivity: SignBlock,
    pub decrease: SignBlock,
}

/// Builds the rate-`rho` problem for a fixed-step method. The class is
/// normalized to `L = 1` internally.
pub fn build_rho_sdp(
    spec: &MethodSpec,
    class: &FunctionClass,
    rho: f64,
    mode: RestrictionMode,
) -> Result<SdpProblem> {
    Ok(build_rho_sdp_parts(spec, class, rho, mode)?.problem)
}

pub fn build_rho_sdp_parts(
    spec: &MethodSpec,
    class: &FunctionClass,
    rho: f64,
    mode: RestrictionMode,
) -> Result<RhoSdp> {
    let spec = spec.clone().validate()?;
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::InvalidArgument(format!("rate must be nonnegative, got {rho}")));
    }
    let scale = class.l();
    let norm_class = class.normalized();
    let norm_spec = spec.with_scaled_step(scale);
    let n = spec.degree();

    let ws_pos = roll_method(&norm_spec, &build_basis(n, n))?;
    let ws_dec = roll_method(&norm_spec, &build_basis(n, n + 1))?;

    let mut problem = SdpProblem::new(
        ProblemMeta {
            analysis: Analysis::FixedStep {
                spec: spec.clone(),
                mode,
            },
            class: *class,
            rho,
            decrease_power: 1,
        },
        scale,
    );
    let shape = LyapunovShape::declare(&mut problem, n + 1);

    let (v0, l0) = lyapunov_expr(&state_selectors(&ws_pos, n)?, &shape)?;
    let pos_pairs = match mode {
        RestrictionMode::LambdaZero => Vec::new(),
        _ => all_pairs(&ws_pos, &norm_class)?,
    };
    let positivity = certify_sign_with_pairs(
        &mut problem,
        "positivity",
        &v0,
        &l0,
        &pos_pairs,
        SignSense::PositiveDefinite,
        MultiplierFamily::Lambda,
        standard_coord_exponents(n, n),
    )?;

    let (dv, dl) = decrease_expr(&ws_dec, &shape, rho)?;
    let decrease = certify_sign(
        &mut problem,
        "decrease",
        &dv,
        &dl,
        &ws_dec,
        &norm_class,
        SignSense::NegativeSemidefinite,
        MultiplierFamily::Eta,
        standard_coord_exponents(n, n + 1),
    )?;

    if mode == RestrictionMode::PosDefShape {
        add_shape_positivity(&mut problem, &shape);
    }
    Ok(RhoSdp {
        problem,
        shape,
        positivity,
        decrease,
    })
}
