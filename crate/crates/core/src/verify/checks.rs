//! Re-evaluation of certificates: algebraic residuals and decrease along
//! concrete runs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::assembly::{SdpProblem, Sense};
use crate::error::{Error, Result};
use crate::interp::{interpolable, SamplePoint};
use crate::model::{FunctionClass, MethodSpec};
use crate::symbolic::{build_basis, roll_method, Idx};
use crate::solver::LyapunovCertificate;
use crate::trajectory::{LyapunovState, Trajectory};

fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues.min()
}

fn max_eig(m: &DMatrix<f64>) -> f64 {
    -min_eig(&-m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintResidual {
    pub label: String,
    pub sense: Sense,
    /// Smallest eigenvalue or entry for lower bounds, largest for upper
    /// bounds.
    pub extreme: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub matrix: Vec<ConstraintResidual>,
    pub vector: Vec<ConstraintResidual>,
    /// `max(0, -min multiplier)`.
    pub multiplier_negativity: f64,
    pub tol: f64,
}

impl ResidualReport {
    pub fn pass(&self) -> bool {
        self.matrix.iter().chain(&self.vector).all(|c| c.pass) && self.multiplier_negativity <= self.tol
    }

    /// Largest violation over all constraints (0 when everything holds).
    pub fn worst_violation(&self) -> f64 {
        self.matrix
            .iter()
            .chain(&self.vector)
            .map(|c| match c.sense {
                Sense::NonPositive => c.extreme.max(0.0),
                _ => (-c.extreme).max(0.0),
            })
            .fold(self.multiplier_negativity, f64::max)
    }
}

fn judge(sense: Sense, extreme: f64, margin: f64, tol: f64) -> bool {
    match sense {
        // strict: positive and consistent with the claimed margin
        Sense::AboveMargin => extreme > 0.0 && extreme >= margin.max(0.0) - tol,
        Sense::NonNegative => extreme >= -tol,
        Sense::NonPositive => extreme <= tol,
    }
}

/// Substitutes the certificate into every constraint of `problem`.
pub fn check_certificate_algebraic(
    cert: &LyapunovCertificate,
    problem: &SdpProblem,
    tol: f64,
) -> Result<ResidualReport> {
    let values = cert.to_problem_values(problem)?;
    let margin = cert.margin;
    let matrix = problem
        .matrix_constraints()
        .iter()
        .map(|c| {
            let s = c.expr.eval(&values);
            let extreme = match c.sense {
                Sense::NonPositive => max_eig(&s),
                _ => min_eig(&s),
            };
            ConstraintResidual {
                label: c.label.clone(),
                sense: c.sense,
                extreme,
                pass: judge(c.sense, extreme, margin, tol),
            }
        })
        .collect();
    let vector = problem
        .vector_constraints()
        .iter()
        .map(|c| {
            let s = c.expr.eval(&values);
            let extreme = match c.sense {
                Sense::NonPositive => s.max(),
                _ => s.min(),
            };
            ConstraintResidual {
                label: c.label.clone(),
                sense: c.sense,
                extreme,
                pass: judge(c.sense, extreme, margin, tol),
            }
        })
        .collect();
    let multiplier_negativity = problem
        .nonneg_vars()
        .map(|v| -values[v])
        .fold(0.0, f64::max);
    Ok(ResidualReport {
        matrix,
        vector,
        multiplier_negativity,
        tol,
    })
}

/// Number of past iterates in the certificate's state.
pub fn state_memory(cert: &LyapunovCertificate) -> Result<usize> {
    let n = cert.p_mat.nrows();
    if n == 0 || !n.is_multiple_of(2) || cert.p_vec.len() * 2 != n {
        return Err(Error::DimensionMismatch(format!(
            "P of size {n} and p of size {} do not describe a state",
            cert.p_vec.len()
        )));
    }
    Ok(n / 2 - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecreaseReport {
    /// First iteration with a full state.
    pub start: usize,
    /// Energy at `start, start + 1, ..`.
    pub values: Vec<f64>,
    /// Iterations where the energy is negative.
    pub negative: Vec<usize>,
    /// Iterations `k` where `V_{k+1} <= rho^2 V_k` fails.
    pub step_violations: Vec<usize>,
    /// Iterations where the telescoped bound fails.
    pub telescoped_violations: Vec<usize>,
    /// Largest `V_{k+1} - rho^2 V_k` relative to the magnitude of the terms
    /// of `V_k`.
    pub worst_step_excess: f64,
}

impl DecreaseReport {
    pub fn pass(&self) -> bool {
        self.negative.is_empty() && self.step_violations.is_empty() && self.telescoped_violations.is_empty()
    }
}

/// Evaluates the certificate's energy along a run and checks nonnegativity,
/// per-step decrease and the telescoped bound. The rate used is
/// `rho_check` when given, else the certificate's. `tol` is relative to the
/// magnitude of the energy terms; rounding error is allowed on top.
pub fn check_decrease_with_rate(
    cert: &LyapunovCertificate,
    traj: &Trajectory,
    rho_check: Option<f64>,
    tol: f64,
) -> Result<DecreaseReport> {
    let m = state_memory(cert)?;
    if traj.steps() < m + 2 {
        return Err(Error::InvalidArgument(format!(
            "trajectory with {} steps is too short for memory {m}",
            traj.steps()
        )));
    }
    let rho = rho_check.unwrap_or(cert.rho);
    let w = rho.powi(2 * cert.decrease_power as i32);
    let floor = RoundingFloor::new(cert, traj);
    let mut values = Vec::new();
    let mut scales = Vec::new();
    let mut noise = Vec::new();
    for k in m..traj.steps() {
        let s = traj.state(k, m);
        values.push(s.energy(&cert.p_mat, &cert.p_vec));
        scales.push(s.energy_scale(&cert.p_mat, &cert.p_vec));
        noise.push(floor.energy_noise(&s, cert));
    }
    let mut report = DecreaseReport {
        start: m,
        values: values.clone(),
        negative: Vec::new(),
        step_violations: Vec::new(),
        telescoped_violations: Vec::new(),
        worst_step_excess: f64::NEG_INFINITY,
    };
    let mut bound = values[0];
    let mut bound_scale = scales[0];
    let mut bound_noise = noise[0];
    for (i, &v) in values.iter().enumerate() {
        let k = m + i;
        if v < -(tol * scales[i] + noise[i]) {
            report.negative.push(k);
        }
        if i > 0 {
            let prev = values[i - 1];
            let slack = v - w * prev - noise[i] - w * noise[i - 1];
            let excess = slack / scales[i - 1].max(f64::MIN_POSITIVE);
            report.worst_step_excess = report.worst_step_excess.max(excess);
            if excess > tol {
                report.step_violations.push(k - 1);
            }
            bound *= w;
            bound_noise *= w;
            bound_scale = (bound_scale * w).max(scales[i]);
            if v > bound + tol * bound_scale + noise[i] + bound_noise {
                report.telescoped_violations.push(k);
            }
        }
    }
    Ok(report)
}

/// Bound on the floating-point error of an energy evaluated along a run,
/// from the size of the iterates and the smoothness constant.
struct RoundingFloor {
    dx: f64,
    dg: f64,
    df: f64,
}

impl RoundingFloor {
    fn new(cert: &LyapunovCertificate, traj: &Trajectory) -> Self {
        let u = 64.0 * traj.dim().max(1) as f64 * f64::EPSILON;
        let star = traj.x_star().norm();
        let spread = (0..=traj.steps() as i64)
            .map(|k| (traj.x(k) - traj.x_star()).norm())
            .chain((0..traj.steps()).map(|k| (traj.y(k) - traj.x_star()).norm()))
            .fold(0.0, f64::max);
        let r = star + spread;
        let l = cert.class.l();
        Self {
            dx: u * r,
            dg: u * l * r,
            df: u * (traj.f_star().abs() + l * r * r),
        }
    }

    fn energy_noise(&self, s: &LyapunovState, cert: &LyapunovCertificate) -> f64 {
        let z: Vec<(f64, f64)> = s
            .x
            .iter()
            .map(|v| (v.norm(), self.dx))
            .chain(s.g.iter().map(|v| (v.norm(), self.dg)))
            .collect();
        let mut n = 0.0;
        for (a, &(za, da)) in z.iter().enumerate() {
            for (b, &(zb, db)) in z.iter().enumerate() {
                n += cert.p_mat[(a, b)].abs() * (za * db + da * zb + da * db);
            }
        }
        n + cert.p_vec.iter().map(|p| p.abs() * self.df).sum::<f64>()
    }
}

pub fn check_decrease_on_trajectory(
    cert: &LyapunovCertificate,
    traj: &Trajectory,
    tol: f64,
) -> Result<DecreaseReport> {
    check_decrease_with_rate(cert, traj, None, tol)
}

/// Strict-positivity margins of the certificate in original units:
/// `V >= quad * (|x|^2 + |g|^2) + lin * (f - f_star)` on trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants {
    pub quad: f64,
    pub lin: f64,
}

pub fn rate_constants(cert: &LyapunovCertificate, problem: &SdpProblem) -> Result<RateConstants> {
    let values = cert.to_problem_values(problem)?;
    let l = problem.scale();
    let mc = problem
        .matrix_constraints()
        .iter()
        .find(|c| c.label == "positivity.matrix")
        .ok_or_else(|| Error::InvalidArgument("problem has no positivity block".into()))?;
    let vc = problem
        .vector_constraints()
        .iter()
        .find(|c| c.label == "positivity.vector")
        .ok_or_else(|| Error::InvalidArgument("problem has no positivity block".into()))?;
    let s = mc.expr.eval(&values);
    let e = &mc.coord_exponents;
    let orig = DMatrix::from_fn(s.nrows(), s.ncols(), |a, b| s[(a, b)] / l.powi(e[a] + e[b]));
    let lin: DVector<f64> = vc.expr.eval(&values) / l.powi(vc.unit_exponent);
    Ok(RateConstants {
        quad: min_eig(&orig),
        lin: lin.min(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRelationReport {
    /// Iterations where one of the three bounds fails.
    pub violations: Vec<usize>,
    /// Largest observed/bound ratio over all three relations.
    pub worst_ratio: f64,
}

impl RateRelationReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `|g_k|^2`, `|x_{k-m} - x_star|^2 <= V_m rho^(2(k-m)) / quad` and
/// `f_k - f_star <= V_m rho^(2(k-m)) / lin`, `m` the state memory.
pub fn check_rate_relations(
    cert: &LyapunovCertificate,
    consts: &RateConstants,
    traj: &Trajectory,
    tol: f64,
) -> Result<RateRelationReport> {
    let m = state_memory(cert)?;
    if consts.quad <= 0.0 || consts.lin <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "certificate margins ({}, {}) are not positive",
            consts.quad, consts.lin
        )));
    }
    let w = cert.rho.powi(2 * cert.decrease_power as i32);
    let v0 = traj.state(m, m).energy(&cert.p_mat, &cert.p_vec);
    let mut report = RateRelationReport {
        violations: Vec::new(),
        worst_ratio: 0.0,
    };
    let mut scale = v0;
    for k in m..traj.steps() {
        if k > m {
            scale *= w;
        }
        let gq = traj.g(k).norm_squared();
        let xq = (traj.x((k - m) as i64) - traj.x_star()).norm_squared();
        let fq = traj.f(k) - traj.f_star();
        let bq = scale / consts.quad;
        let bl = scale / consts.lin;
        let mut ok = true;
        for (obs, bnd) in [(gq, bq), (xq, bq), (fq, bl)] {
            if bnd > 0.0 {
                report.worst_ratio = report.worst_ratio.max(obs / bnd);
            }
            ok &= obs <= bnd * (1.0 + tol) + tol;
        }
        if !ok {
            report.violations.push(k);
        }
    }
    Ok(report)
}

/// Whether the sampled triples of a run, together with the optimum, are
/// consistent with the class.
pub fn trajectory_interpolable(traj: &Trajectory, class: &FunctionClass, tol: f64) -> bool {
    let d = traj.dim();
    let mut pts: Vec<SamplePoint> = (0..traj.steps())
        .map(|k| SamplePoint::new(traj.y(k).clone(), traj.g(k).clone(), traj.f(k)))
        .collect();
    pts.push(SamplePoint::new(traj.x_star().clone(), DVector::zeros(d), traj.f_star()));
    interpolable(&pts, class, tol)
}

/// Largest mismatch between the symbolic selectors of the rolled basis and
/// the run itself: `B xbar_k = x_k - x_star` and likewise for `y`, `g`, `f`,
/// over horizon `K = steps - 1`. The error is relative to the size of `B`.
pub fn selector_identity_residual(spec: &MethodSpec, traj: &Trajectory) -> Result<f64> {
    let n = spec.degree();
    if traj.degree() != n {
        return Err(Error::DegreeMismatch {
            spec: n,
            workspace: traj.degree(),
        });
    }
    let k = traj.steps().checked_sub(1).ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let ws = roll_method(spec, &build_basis(n, k))?;
    let (b, f) = traj.stacked(k)?;
    let scale = b.amax().max(f.amax()).max(1.0);
    let mut worst: f64 = 0.0;
    for i in -(n as i64)..=(k as i64 + 1) {
        let diff = &b * ws.xbar(i)? - (traj.x(i) - traj.x_star());
        worst = worst.max(diff.amax());
    }
    for i in 0..=k {
        let idx = Idx::At(i);
        worst = worst
            .max((&b * ws.ybar(idx)? - (traj.y(i) - traj.x_star())).amax())
            .max((&b * ws.gbar(idx)? - traj.g(i)).amax())
            .max((ws.fbar(idx)?.dot(&f) - (traj.f(i) - traj.f_star())).abs());
    }
    Ok(worst / scale)
}
