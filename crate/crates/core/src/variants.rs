//! Problems beyond fixed-step methods: steepest descent with exact line
//! search, heavy-ball with a two-dimensional subspace search, and the fast
//! gradient method with scheduled restarts.
//!
//! Line searches are encoded through their optimality conditions, which are
//! bilinear equalities in the iterates and gradients. Each enters the
//! decrease block with a free multiplier.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::assembly::{
    build_rho_sdp, certify_sign, decrease_between, lyapunov_expr, state_selectors, Analysis,
    LyapunovShape, MultiplierFamily, ProblemMeta, SdpProblem, SignSense, StateSelectors, VarKind,
};
use crate::error::{Error, Result};
use crate::model::FunctionClass;
use crate::solver::{bisect_with, BisectOptions, ClarabelBackend, RateCertificate};
use crate::symbolic::{unit_row, BasisWorkspace, Row};

/// A bilinear equality `<z, (A (x) I) z> = 0` valid on every trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualityConstraintForm {
    pub mat: DMatrix<f64>,
    /// Unit exponent of the multiplier (1 for iterate-gradient forms, 2 for
    /// gradient-gradient forms).
    pub unit_exponent: i32,
}

/// `S^T C S` with `S` stacking `rows`.
fn bilinear(rows: &[Row], kernel: &DMatrix<f64>) -> DMatrix<f64> {
    let w = rows[0].len();
    let mut s = DMatrix::zeros(rows.len(), w);
    for (i, r) in rows.iter().enumerate() {
        s.set_row(i, &r.transpose());
    }
    s.transpose() * kernel * s
}

/// `2 <b - a, g>`.
pub fn step_gradient_form(a: &Row, b: &Row, g: &Row) -> EqualityConstraintForm {
    #[rustfmt::skip]
    let c = DMatrix::from_row_slice(3, 3, &[
         0.0, 0.0, -1.0,
         0.0, 0.0,  1.0,
        -1.0, 1.0,  0.0,
    ]);
    EqualityConstraintForm {
        mat: bilinear(&[a.clone(), b.clone(), g.clone()], &c),
        unit_exponent: 1,
    }
}

/// `2 <g, h>`.
pub fn gradient_pair_form(g: &Row, h: &Row) -> EqualityConstraintForm {
    let c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    EqualityConstraintForm {
        mat: bilinear(&[g.clone(), h.clone()], &c),
        unit_exponent: 2,
    }
}

/// Momentum sequence of the restarted fast gradient method.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartSchedule {
    inner: usize,
    theta: Vec<f64>,
}

impl RestartSchedule {
    /// Inner-loop length.
    pub fn inner(&self) -> usize {
        self.inner
    }

    /// `theta_0 ..= theta_inner`.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Momentum coefficient `(theta_i - 1) / theta_{i+1}`.
    pub fn momentum(&self, i: usize) -> f64 {
        (self.theta[i] - 1.0) / self.theta[i + 1]
    }
}

pub fn momentum_sequence(inner: usize) -> Result<RestartSchedule> {
    if inner == 0 {
        return Err(Error::InvalidArgument("restart period must be at least 1".into()));
    }
    let mut theta = vec![1.0];
    for i in 0..inner {
        let t: f64 = theta[i];
        theta.push(0.5 * (1.0 + (4.0 * t * t + 1.0).sqrt()));
    }
    Ok(RestartSchedule { inner, theta })
}

/// One coordinate layout for a variant block.
struct Block<'a> {
    ws: &'a BasisWorkspace,
    exps: Vec<i32>,
}

/// Shared assembly: positivity of `V` on `pos`, and
/// `V(next) - weight V(now) + sum nu_i A_i <= 0` on `dec`.
#[allow(clippy::too_many_arguments)]
fn assemble(
    meta: ProblemMeta,
    scale: f64,
    norm_class: &FunctionClass,
    state_len: usize,
    pos: Block<'_>,
    pos_state: &StateSelectors,
    dec: Block<'_>,
    now: &StateSelectors,
    next: &StateSelectors,
    weight: f64,
    forms: &[EqualityConstraintForm],
) -> Result<SdpProblem> {
    let mut problem = SdpProblem::new(meta, scale);
    let shape = LyapunovShape::declare(&mut problem, state_len);
    let (v0, l0) = lyapunov_expr(pos_state, &shape)?;
    certify_sign(
        &mut problem,
        "positivity",
        &v0,
        &l0,
        pos.ws,
        norm_class,
        SignSense::PositiveDefinite,
        MultiplierFamily::Lambda,
        pos.exps,
    )?;
    let (mut dv, dl) = decrease_between(next, now, &shape, weight)?;
    for (i, form) in forms.iter().enumerate() {
        let id = problem.add_var(VarKind::Nu(i), false, form.unit_exponent);
        dv.add_term(id, form.mat.clone());
    }
    certify_sign(
        &mut problem,
        "decrease",
        &dv,
        &dl,
        dec.ws,
        norm_class,
        SignSense::NegativeSemidefinite,
        MultiplierFamily::Eta,
        dec.exps,
    )?;
    Ok(problem)
}

fn check_rate(rho: f64) -> Result<()> {
    if rho.is_finite() && rho >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("rate must be nonnegative, got {rho}")))
    }
}

/// Bases for steepest descent with exact line search: `(x_0, g_0)` for the
/// positivity block and `(x_0, x_1, g_0, g_1)` for the decrease block.
pub fn els_gd_bases() -> (BasisWorkspace, BasisWorkspace) {
    let mut b0 = BasisWorkspace::custom(0, 0, 2, 1);
    b0.set_x(0, unit_row(2, 1));
    b0.set_y(0, unit_row(2, 1));
    b0.set_g(0, unit_row(2, 2));
    b0.set_f(0, unit_row(1, 1));

    let mut b1 = BasisWorkspace::custom(0, 1, 4, 2);
    for k in 0..2 {
        b1.set_x(k as i64, unit_row(4, k + 1));
        b1.set_y(k, unit_row(4, k + 1));
        b1.set_g(k, unit_row(4, k + 3));
        b1.set_f(k, unit_row(2, k + 1));
    }
    (b0, b1)
}

/// `<x_1 - x_0, g_1> = 0` and `<g_0, g_1> = 0` over the decrease basis.
pub fn els_gd_forms(b1: &BasisWorkspace) -> Result<Vec<EqualityConstraintForm>> {
    use crate::symbolic::Idx::At;
    Ok(vec![
        step_gradient_form(b1.xbar(0)?, b1.xbar(1)?, &b1.gbar(At(1))?),
        gradient_pair_form(&b1.gbar(At(0))?, &b1.gbar(At(1))?),
    ])
}

pub fn build_els_gd_sdp(class: &FunctionClass, rho: f64) -> Result<SdpProblem> {
    check_rate(rho)?;
    let (b0, b1) = els_gd_bases();
    let forms = els_gd_forms(&b1)?;
    assemble(
        ProblemMeta {
            analysis: Analysis::ExactLineSearch,
            class: *class,
            rho,
            decrease_power: 1,
        },
        class.l(),
        &class.normalized(),
        1,
        Block { ws: &b0, exps: vec![0, 1] },
        &state_selectors(&b0, 0)?,
        Block { ws: &b1, exps: vec![0, 0, 1, 1] },
        &state_selectors(&b1, 0)?,
        &state_selectors(&b1, 1)?,
        rho * rho,
        &forms,
    )
}

/// Bases for heavy-ball with subspace search: `(x_0, x_1, g_0, g_1)` and
/// `(x_{-1}, x_0, x_1, x_2, g_0, g_1, g_2)`.
pub fn els_hbm_bases() -> (BasisWorkspace, BasisWorkspace) {
    let mut b1 = BasisWorkspace::custom(1, 1, 4, 2);
    for k in 0..2 {
        b1.set_x(k as i64, unit_row(4, k + 1));
        b1.set_y(k, unit_row(4, k + 1));
        b1.set_g(k, unit_row(4, k + 3));
        b1.set_f(k, unit_row(2, k + 1));
    }
    let mut b2 = BasisWorkspace::custom(1, 2, 7, 3);
    for k in -1..=2i64 {
        b2.set_x(k, unit_row(7, (k + 2) as usize));
    }
    for k in 0..3 {
        b2.set_y(k, unit_row(7, k + 2));
        b2.set_g(k, unit_row(7, k + 5));
        b2.set_f(k, unit_row(3, k + 1));
    }
    (b1, b2)
}

/// For `k in {0, 1}`: `<x_{k+1} - x_k, g_{k+1}>`, `<x_k - x_{k-1}, g_{k+1}>`
/// and `<g_k, g_{k+1}>`, in that grouping.
pub fn els_hbm_forms(b2: &BasisWorkspace) -> Result<Vec<EqualityConstraintForm>> {
    use crate::symbolic::Idx::At;
    let mut out = Vec::with_capacity(6);
    for k in 0..2i64 {
        let g = b2.gbar(At(k as usize + 1))?;
        out.push(step_gradient_form(b2.xbar(k)?, b2.xbar(k + 1)?, &g));
    }
    for k in 0..2i64 {
        let g = b2.gbar(At(k as usize + 1))?;
        out.push(step_gradient_form(b2.xbar(k - 1)?, b2.xbar(k)?, &g));
    }
    for k in 0..2usize {
        out.push(gradient_pair_form(&b2.gbar(At(k))?, &b2.gbar(At(k + 1))?));
    }
    Ok(out)
}

pub fn build_els_hbm_sdp(class: &FunctionClass, rho: f64) -> Result<SdpProblem> {
    check_rate(rho)?;
    let (b1, b2) = els_hbm_bases();
    let forms = els_hbm_forms(&b2)?;
    assemble(
        ProblemMeta {
            analysis: Analysis::SubspaceSearch,
            class: *class,
            rho,
            decrease_power: 1,
        },
        class.l(),
        &class.normalized(),
        2,
        Block { ws: &b1, exps: vec![0, 0, 1, 1] },
        &state_selectors(&b1, 1)?,
        Block { ws: &b2, exps: vec![0, 0, 0, 0, 1, 1, 1] },
        &state_selectors(&b2, 1)?,
        &state_selectors(&b2, 2)?,
        rho * rho,
        &forms,
    )
}

/// Rolls one restart cycle over the basis `(y_0, g_0 .. g_N)`:
/// `z_{i+1} = y_i - g_i / L`, `y_{i+1} = z_{i+1} + m_i (z_{i+1} - z_i)` with
/// `z_0 = y_0`. Iterates are stored as both `x` and `y` rows.
pub fn restart_basis(schedule: &RestartSchedule, l: f64) -> BasisWorkspace {
    let n = schedule.inner();
    let width = n + 2;
    let mut ws = BasisWorkspace::custom(0, n, width, n + 1);
    let mut y = unit_row(width, 1);
    let mut z = y.clone();
    for k in 0..=n {
        ws.set_x(k as i64, y.clone());
        ws.set_y(k, y.clone());
        ws.set_g(k, unit_row(width, k + 2));
        ws.set_f(k, unit_row(n + 1, k + 1));
        if k < n {
            let z_next = &y - unit_row(width, k + 2) / l;
            y = &z_next + (&z_next - &z) * schedule.momentum(k);
            z = z_next;
        }
    }
    ws
}

pub fn build_restart_sdp(class: &FunctionClass, schedule: &RestartSchedule, rho: f64) -> Result<SdpProblem> {
    check_rate(rho)?;
    let n = schedule.inner();
    let mut b1 = BasisWorkspace::custom(0, 0, 2, 1);
    b1.set_x(0, unit_row(2, 1));
    b1.set_y(0, unit_row(2, 1));
    b1.set_g(0, unit_row(2, 2));
    b1.set_f(0, unit_row(1, 1));
    let big = restart_basis(schedule, 1.0);
    let mut exps = vec![0];
    exps.extend(std::iter::repeat_n(1, n + 1));
    assemble(
        ProblemMeta {
            analysis: Analysis::Restart { inner: n },
            class: *class,
            rho,
            decrease_power: n as u32,
        },
        class.l(),
        &class.normalized(),
        1,
        Block { ws: &b1, exps: vec![0, 1] },
        &state_selectors(&b1, 0)?,
        Block { ws: &big, exps },
        &state_selectors(&big, 0)?,
        &state_selectors(&big, n)?,
        rho.powi(2 * n as i32),
        &[],
    )
}

/// Rebuilds the problem an analysis describes at a given rate.
pub fn build_problem(analysis: &Analysis, class: &FunctionClass, rho: f64) -> Result<SdpProblem> {
    match analysis {
        Analysis::FixedStep { spec, mode } => build_rho_sdp(spec, class, rho, *mode),
        Analysis::ExactLineSearch => build_els_gd_sdp(class, rho),
        Analysis::SubspaceSearch => build_els_hbm_sdp(class, rho),
        Analysis::Restart { inner } => build_restart_sdp(class, &momentum_sequence(*inner)?, rho),
        Analysis::Custom => Err(Error::InvalidArgument(
            "custom problems cannot be rebuilt from metadata".into(),
        )),
    }
}

/// Bisection for any analysis.
pub fn bisect_analysis(
    analysis: &Analysis,
    class: &FunctionClass,
    options: &BisectOptions,
) -> Result<RateCertificate> {
    bisect_with(|rho| build_problem(analysis, class, rho), options, &ClarabelBackend)
}

pub fn els_gd_rate(class: &FunctionClass, options: &BisectOptions) -> Result<RateCertificate> {
    bisect_analysis(&Analysis::ExactLineSearch, class, options)
}

pub fn els_hbm_rate(class: &FunctionClass, options: &BisectOptions) -> Result<RateCertificate> {
    bisect_analysis(&Analysis::SubspaceSearch, class, options)
}

/// Per-gradient-evaluation rate of the restarted method.
pub fn restart_rate(class: &FunctionClass, inner: usize, options: &BisectOptions) -> Result<RateCertificate> {
    momentum_sequence(inner)?;
    bisect_analysis(&Analysis::Restart { inner }, class, options)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartOptimum {
    pub n_star: usize,
    pub rho_star: f64,
    /// Rate for every period tried, ascending.
    pub rates: Vec<(usize, std::result::Result<f64, String>)>,
    /// Bisection result at `n_star`.
    pub best: RateCertificate,
}

/// Best restart period in `1 ..= n_max`; ties go to the smaller period.
pub fn optimize_restart_period(
    class: &FunctionClass,
    n_max: usize,
    options: &BisectOptions,
) -> Result<RestartOptimum> {
    optimize_restart_over(class, &(1..=n_max).collect::<Vec<_>>(), options)
}

/// [`optimize_restart_period`] over an explicit list of periods.
pub fn optimize_restart_over(
    class: &FunctionClass,
    periods: &[usize],
    options: &BisectOptions,
) -> Result<RestartOptimum> {
    if periods.is_empty() || periods.contains(&0) {
        return Err(Error::InvalidArgument("restart periods must be positive".into()));
    }
    let mut periods = periods.to_vec();
    periods.sort_unstable();
    periods.dedup();
    let runs: Vec<_> = periods
        .par_iter()
        .map(|&n| (n, restart_rate(class, n, options)))
        .collect();
    let rates: Vec<_> = runs
        .iter()
        .map(|(n, r)| (*n, r.as_ref().map(|r| r.rho_star).map_err(|e| e.to_string())))
        .collect();
    let mut best: Option<(usize, &RateCertificate)> = None;
    for (n, r) in &runs {
        if let Ok(r) = r {
            if best.is_none_or(|(_, b)| r.rho_star < b.rho_star) {
                best = Some((*n, r));
            }
        }
    }
    let (n_star, best) = best.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "no restart period produced a certificate: {}",
            rates
                .iter()
                .filter_map(|(n, r)| r.as_ref().err().map(|e| format!("N={n}: {e}")))
                .collect::<Vec<_>>()
                .join("; ")
        ))
    })?;
    Ok(RestartOptimum {
        n_star,
        rho_star: best.rho_star,
        rates,
        best: best.clone(),
    })
}
