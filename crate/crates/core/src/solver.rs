//! Margin-maximizing feasibility solves and bisection over the rate.

use std::fmt;
use std::str::FromStr;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::{build_rho_sdp, RestrictionMode, Sense, SdpProblem, VarKind};
use crate::error::{Error, Result};
use crate::model::{FunctionClass, MethodSpec};
use crate::symbolic::Idx;

/// Residual level below which a stalled interior-point run is still used.
const STALL_RESIDUAL: f64 = 1e-6;
/// Margins of stalled runs are trusted only beyond this multiple of their
/// residuals.
const STALL_RESOLUTION: f64 = 1e3;
/// Non-strict constraints may be violated by at most this fraction of the
/// margin.
const MARGIN_DOMINANCE: f64 = 1e-5;

/// Backend tolerances and the feasibility threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub max_iter: u32,
    pub tol_feas: f64,
    pub tol_gap: f64,
    /// Strict feasibility requires a margin above this.
    pub eps_feas: f64,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_feas: 1e-10,
            tol_gap: 1e-12,
            eps_feas: 1e-7,
            verbose: false,
        }
    }
}

impl SolverSettings {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: &dyn fmt::Display| Error::Parse {
            what: "solver setting",
            detail: format!("{key}={value}: {e}"),
        };
        match key.trim() {
            "max_iter" => self.max_iter = value.trim().parse().map_err(|e| bad(&e))?,
            "tol_feas" => self.tol_feas = value.trim().parse().map_err(|e| bad(&e))?,
            "tol_gap" => self.tol_gap = value.trim().parse().map_err(|e| bad(&e))?,
            "eps_feas" => self.eps_feas = value.trim().parse().map_err(|e| bad(&e))?,
            "verbose" => self.verbose = value.trim().parse().map_err(|e| bad(&e))?,
            other => {
                return Err(Error::Parse {
                    what: "solver setting",
                    detail: format!("unknown key `{other}`"),
                })
            }
        }
        Ok(())
    }
}

/// Parses `key=value` pairs separated by commas or newlines; `#` starts a
/// comment.
impl FromStr for SolverSettings {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = Self::default();
        for item in s.split(['\n', ',']) {
            let item = item.split('#').next().unwrap_or("").trim();
            if item.is_empty() {
                continue;
            }
            let (k, v) = item.split_once('=').ok_or_else(|| Error::Parse {
                what: "solver setting",
                detail: format!("expected key=value, got `{item}`"),
            })?;
            out.set(k, v)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
    Unknown,
}

impl fmt::Display for FeasibilityStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeasibilityStatus::Feasible => "feasible",
            FeasibilityStatus::Infeasible => "infeasible",
            FeasibilityStatus::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityOutcome {
    pub status: FeasibilityStatus,
    /// Optimal margin in normalized units (NaN when unknown).
    pub margin: f64,
    /// Variable assignment in normalized units; present unless unknown.
    pub values: Option<Vec<f64>>,
    pub diagnostics: String,
}

/// A semidefinite feasibility backend.
pub trait SdpBackend: Sync {
    fn name(&self) -> &str;

    fn solve(&self, problem: &SdpProblem, settings: &SolverSettings) -> Result<FeasibilityOutcome>;
}

/// Interior-point backend built on Clarabel.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

/// Column-stacked upper triangle with off-diagonals scaled by sqrt(2).
fn svec_index(i: usize, j: usize) -> usize {
    let (r, c) = if i <= j { (i, j) } else { (j, i) };
    c * (c + 1) / 2 + r
}

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl Triplets {
    fn push(&mut self, row: usize, col: usize, val: f64) {
        if val != 0.0 {
            self.rows.push(row);
            self.cols.push(col);
            self.vals.push(val);
        }
    }
}

impl SdpBackend for ClarabelBackend {
    fn name(&self) -> &str {
        "clarabel"
    }

    fn solve(&self, problem: &SdpProblem, settings: &SolverSettings) -> Result<FeasibilityOutcome> {
        let n = problem.num_vars();
        let t = problem.margin_var();
        let bound = problem.box_bound();
        let mut tr = Triplets {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
            b: Vec::new(),
        };
        // s = b - A y in the cone

        // box and sign constraints, then vector constraints: nonnegative cone
        for v in 0..n {
            let r = tr.b.len();
            tr.push(r, v, 1.0);
            tr.b.push(bound);
            tr.push(r + 1, v, -1.0);
            tr.b.push(bound);
            if problem.vars()[v].nonneg {
                tr.push(r + 2, v, -1.0);
                tr.b.push(0.0);
            }
        }
        for c in problem.vector_constraints() {
            let sign = if c.sense == Sense::NonPositive { -1.0 } else { 1.0 };
            for k in 0..c.expr.dim {
                let r = tr.b.len();
                tr.b.push(sign * c.expr.constant[k]);
                for (v, coeff) in &c.expr.terms {
                    tr.push(r, *v, -sign * coeff[k]);
                }
                if c.sense.is_strict() {
                    tr.push(r, t, 1.0);
                }
            }
        }
        let nonneg_rows = tr.b.len();
        let mut cones = vec![SupportedConeT::NonnegativeConeT(nonneg_rows)];

        let sqrt2 = std::f64::consts::SQRT_2;
        for c in problem.matrix_constraints() {
            let dim = c.expr.dim;
            if dim == 0 {
                continue;
            }
            let sign = if c.sense == Sense::NonPositive { -1.0 } else { 1.0 };
            let base = tr.b.len();
            tr.b.resize(base + dim * (dim + 1) / 2, 0.0);
            for j in 0..dim {
                for i in 0..=j {
                    let w = if i == j { 1.0 } else { sqrt2 };
                    let r = base + svec_index(i, j);
                    tr.b[r] = sign * w * c.expr.constant[(i, j)];
                    if i == j && c.sense.is_strict() {
                        tr.push(r, t, 1.0);
                    }
                }
            }
            for (v, coeff) in &c.expr.terms {
                for j in 0..dim {
                    for i in 0..=j {
                        let w = if i == j { 1.0 } else { sqrt2 };
                        tr.push(base + svec_index(i, j), *v, -sign * w * coeff[(i, j)]);
                    }
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(dim));
        }

        let m = tr.b.len();
        let a = CscMatrix::new_from_triplets(m, n, tr.rows, tr.cols, tr.vals);
        let p = CscMatrix::zeros((n, n));
        let mut q = vec![0.0; n];
        q[t] = -1.0;
        // stalled runs are retried once without equilibration, which often
        // converges where the scaled problem does not
        let mut outcome = None;
        for equilibrate in [true, false] {
            let attempt = (|| -> Result<FeasibilityOutcome> {
                let cfg = DefaultSettingsBuilder::default()
                    .verbose(settings.verbose)
                    .max_iter(settings.max_iter)
                    .tol_feas(settings.tol_feas)
                    .tol_gap_abs(settings.tol_gap)
                    .tol_gap_rel(settings.tol_gap)
                    .reduced_tol_feas(settings.tol_feas * 1e3)
                    .reduced_tol_gap_abs(settings.tol_gap * 1e3)
                    .reduced_tol_gap_rel(settings.tol_gap * 1e3)
                    .equilibrate_enable(equilibrate)
                    .build()
                    .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
                let mut solver = DefaultSolver::new(&p, &q, &a, &tr.b, &cones, cfg)
                    .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
                solver.solve();
                let sol = &solver.solution;
                let diagnostics = format!(
                    "clarabel status={:?} iterations={} r_prim={:.2e} r_dual={:.2e} equilibrate={equilibrate}",
                    sol.status, sol.iterations, sol.r_prim, sol.r_dual
                );
                let mut values = sol.x.clone();
                for v in problem.nonneg_vars() {
                    if values[v] < 0.0 && values[v] > -1e-9 {
                        values[v] = 0.0;
                    }
                }
                let margin = values.get(t).copied().unwrap_or(f64::NAN);
                if values.iter().any(|v| !v.is_finite()) {
                    return Ok(FeasibilityOutcome {
                        status: FeasibilityStatus::Unknown,
                        margin: f64::NAN,
                        values: None,
                        diagnostics,
                    });
                }
                let converged = matches!(sol.status, SolverStatus::Solved | SolverStatus::AlmostSolved);
                // the margin actually attained by the returned point, and whether it
                // dominates the violation of the non-strict constraints; a margin
                // bought by such violations is not a certificate
                let attained = margin.min(problem.strict_slack(&values));
                let violation = problem.nonstrict_violation(&values);
                let certified = attained > settings.eps_feas && violation <= MARGIN_DOMINANCE * attained;
                // stalled runs: the dual objective bounds t* from above, up to a
                // resolution tied to the residuals
                let residual = sol.r_prim.max(sol.r_dual);
                let resolution = settings.eps_feas.max(STALL_RESOLUTION * residual);
                let usable_stall = residual <= STALL_RESIDUAL && margin.is_finite();
                let status = if certified {
                    FeasibilityStatus::Feasible
                } else if converged || (usable_stall && (attained > resolution || -sol.obj_val_dual <= resolution)) {
                    FeasibilityStatus::Infeasible
                } else {
                    FeasibilityStatus::Unknown
                };
                let diagnostics = format!(
                    "{diagnostics} margin={margin:.3e} dual_bound={:.3e} violation={violation:.3e}",
                    -sol.obj_val_dual
                );
                Ok(FeasibilityOutcome {
                    status,
                    margin: if status == FeasibilityStatus::Unknown { f64::NAN } else { attained },
                    values: if status == FeasibilityStatus::Unknown { None } else { Some(values) },
                    diagnostics,
                })
            })()?;
            let done = attempt.status != FeasibilityStatus::Unknown;
            outcome = Some(attempt);
            if done {
                break;
            }
        }
        Ok(outcome.expect("at least one attempt"))
    }
}

/// Solves with the reference backend.
pub fn solve_feasibility(problem: &SdpProblem, settings: &SolverSettings) -> Result<FeasibilityOutcome> {
    ClarabelBackend.solve(problem, settings)
}

/// Lyapunov parameters and multipliers in the caller's units.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub rho: f64,
    /// The decrease reads `V+ <= rho^(2 * decrease_power) V`.
    pub decrease_power: u32,
    pub class: FunctionClass,
    pub p_mat: DMatrix<f64>,
    pub p_vec: DVector<f64>,
    pub lambda: Vec<((Idx, Idx), f64)>,
    pub eta: Vec<((Idx, Idx), f64)>,
    pub nu: Vec<f64>,
    /// Normalized optimal margin.
    pub margin: f64,
    pub solver: String,
}

impl LyapunovCertificate {
    /// Reads the problem's variable assignment back into original units.
    pub fn extract(problem: &SdpProblem, values: &[f64], solver: &str) -> Result<Self> {
        if values.len() != problem.num_vars() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} variables",
                values.len(),
                problem.num_vars()
            )));
        }
        let l = problem.scale();
        let unscale = |v: usize| values[v] / l.powi(problem.vars()[v].unit_exponent);
        let mut quad_n = 0;
        let mut lin_n = 0;
        let mut nu_n = 0;
        for var in problem.vars() {
            match var.kind {
                VarKind::Quad(_, b) => quad_n = quad_n.max(b + 1),
                VarKind::Lin(a) => lin_n = lin_n.max(a + 1),
                VarKind::Nu(a) => nu_n = nu_n.max(a + 1),
                _ => {}
            }
        }
        let mut cert = Self {
            rho: problem.meta().rho,
            decrease_power: problem.meta().decrease_power,
            class: problem.meta().class,
            p_mat: DMatrix::zeros(quad_n, quad_n),
            p_vec: DVector::zeros(lin_n),
            lambda: Vec::new(),
            eta: Vec::new(),
            nu: vec![0.0; nu_n],
            margin: values[problem.margin_var()],
            solver: solver.to_string(),
        };
        for (v, var) in problem.vars().iter().enumerate() {
            let x = unscale(v);
            match var.kind {
                VarKind::Quad(a, b) => {
                    cert.p_mat[(a, b)] = x;
                    cert.p_mat[(b, a)] = x;
                }
                VarKind::Lin(a) => cert.p_vec[a] = x,
                VarKind::Lambda(i, j) => cert.lambda.push(((i, j), x)),
                VarKind::Eta(i, j) => cert.eta.push(((i, j), x)),
                VarKind::Nu(a) => cert.nu[a] = x,
                VarKind::Margin => {}
            }
        }
        Ok(cert)
    }

    /// Inverse of [`extract`](Self::extract): the normalized assignment for
    /// `problem`. Multipliers absent from the certificate are zero.
    pub fn to_problem_values(&self, problem: &SdpProblem) -> Result<Vec<f64>> {
        let l = problem.scale();
        let lookup = |list: &[((Idx, Idx), f64)], i: Idx, j: Idx| {
            list.iter()
                .find(|(ij, _)| *ij == (i, j))
                .map_or(0.0, |(_, x)| *x)
        };
        let mut out = vec![0.0; problem.num_vars()];
        for (v, var) in problem.vars().iter().enumerate() {
            let orig = match var.kind {
                VarKind::Quad(a, b) => {
                    if a >= self.p_mat.nrows() || b >= self.p_mat.ncols() {
                        return Err(Error::DimensionMismatch(format!(
                            "certificate P is {}x{}, problem needs entry ({a}, {b})",
                            self.p_mat.nrows(),
                            self.p_mat.ncols()
                        )));
                    }
                    self.p_mat[(a, b)]
                }
                VarKind::Lin(a) => *self.p_vec.get(a).ok_or_else(|| {
                    Error::DimensionMismatch(format!("certificate p has no entry {a}"))
                })?,
                VarKind::Lambda(i, j) => lookup(&self.lambda, i, j),
                VarKind::Eta(i, j) => lookup(&self.eta, i, j),
                VarKind::Nu(a) => self.nu.get(a).copied().unwrap_or(0.0),
                VarKind::Margin => {
                    out[v] = self.margin;
                    continue;
                }
            };
            out[v] = orig * l.powi(var.unit_exponent);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectOptions {
    pub rho_max: f64,
    pub tol_rho: f64,
    pub mode: RestrictionMode,
    pub settings: SolverSettings,
}

impl Default for BisectOptions {
    fn default() -> Self {
        Self {
            rho_max: 1.5,
            tol_rho: 1e-4,
            mode: RestrictionMode::Unrestricted,
            settings: SolverSettings::default(),
        }
    }
}

/// Result of a bisection.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCertificate {
    /// Smallest rate found feasible.
    pub rho_star: f64,
    pub certificate: LyapunovCertificate,
    /// The problem the certificate solves.
    pub problem: SdpProblem,
    pub bracket_history: Vec<(f64, FeasibilityStatus)>,
}

impl RateCertificate {
    pub fn bracket_consistent(&self) -> bool {
        bracket_consistent(&self.bracket_history)
    }

    /// Whether the certified rate shows contraction.
    pub fn contracts(&self) -> bool {
        self.rho_star < 1.0
    }
}

/// Every feasible probe lies at or above every infeasible one.
pub fn bracket_consistent(history: &[(f64, FeasibilityStatus)]) -> bool {
    let min_feasible = history
        .iter()
        .filter(|(_, s)| *s == FeasibilityStatus::Feasible)
        .map(|(r, _)| *r)
        .fold(f64::INFINITY, f64::min);
    history
        .iter()
        .filter(|(_, s)| *s == FeasibilityStatus::Infeasible)
        .all(|(r, _)| *r <= min_feasible)
}

/// Bisection of a rate-parameterized problem family on `[0, rho_max]`.
pub fn bisect_with<F>(build: F, options: &BisectOptions, backend: &dyn SdpBackend) -> Result<RateCertificate>
where
    F: Fn(f64) -> Result<SdpProblem>,
{
    if !(options.rho_max > 0.0 && options.tol_rho > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bisection needs rho_max > 0 and tol_rho > 0, got {} and {}",
            options.rho_max, options.tol_rho
        )));
    }
    let mut history = Vec::new();
    let probe = |rho: f64, history: &mut Vec<(f64, FeasibilityStatus)>| -> Result<(SdpProblem, FeasibilityOutcome)> {
        let problem = build(rho)?;
        let out = backend.solve(&problem, &options.settings)?;
        history.push((rho, out.status));
        if out.status == FeasibilityStatus::Unknown {
            return Err(Error::BackendUnknown {
                rho,
                detail: out.diagnostics,
            });
        }
        Ok((problem, out))
    };

    let (mut best_problem, mut best) = probe(options.rho_max, &mut history)?;
    if best.status != FeasibilityStatus::Feasible {
        return Err(Error::NoCertificateWithinBracket {
            rho_max: options.rho_max,
        });
    }
    let (mut lo, mut hi) = (0.0, options.rho_max);
    while hi - lo > options.tol_rho {
        let mid = 0.5 * (lo + hi);
        let (problem, out) = probe(mid, &mut history)?;
        if out.status == FeasibilityStatus::Feasible {
            hi = mid;
            best_problem = problem;
            best = out;
        } else {
            lo = mid;
        }
    }
    let values = best.values.as_deref().expect("feasible outcome carries values");
    let certificate = LyapunovCertificate::extract(&best_problem, values, backend.name())?;
    Ok(RateCertificate {
        rho_star: hi,
        certificate,
        problem: best_problem,
        bracket_history: history,
    })
}

/// Smallest certified rate of a fixed-step method.
pub fn bisect_rate(spec: &MethodSpec, class: &FunctionClass, options: &BisectOptions) -> Result<RateCertificate> {
    let spec = spec.clone().validate()?;
    bisect_with(
        |rho| build_rho_sdp(&spec, class, rho, options.mode),
        options,
        &ClarabelBackend,
    )
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub kappa: f64,
    pub outcome: std::result::Result<f64, String>,
}

/// Runs `job` on the class `(1, kappa)` for each grid point in parallel.
/// Rows come back in ascending `kappa`; failures are recorded per row.
pub fn sweep<F>(kappas: &[f64], job: F) -> Vec<SweepRow>
where
    F: Fn(&FunctionClass) -> Result<f64> + Sync,
{
    let mut grid = kappas.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.par_iter()
        .map(|&kappa| SweepRow {
            kappa,
            outcome: FunctionClass::with_condition_number(kappa)
                .and_then(|c| job(&c))
                .map_err(|e| e.to_string()),
        })
        .collect()
}

/// Sweep of a fixed-step method family over a condition-number grid.
pub fn sweep_method<S>(kappas: &[f64], family: S, options: &BisectOptions) -> Vec<SweepRow>
where
    S: Fn(&FunctionClass) -> MethodSpec + Sync,
{
    sweep(kappas, |class| {
        bisect_rate(&family(class), class, options).map(|r| r.rho_star)
    })
}
