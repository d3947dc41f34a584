//! Independent checks of certificates: residuals, concrete runs, oracles.

pub mod checks;
pub mod functions;
pub mod oracle;
pub mod simulate;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

pub use checks::{
    check_certificate_algebraic, check_decrease_on_trajectory, check_decrease_with_rate, check_rate_relations,
    rate_constants, selector_identity_residual, state_memory, trajectory_interpolable, ConstraintResidual, DecreaseReport, RateConstants,
    RateRelationReport, ResidualReport,
};
pub use functions::{random_orthogonal, TestFunction, TestFunctionKind};
pub use oracle::{quadratic_worst_rate, spectral_radius_at};
pub use simulate::{
    gram_matrix, restart_cycle, simulate_els_gd, simulate_els_hbm, simulate_method, simulate_restart,
    slater_trajectory,
};

use crate::assembly::Analysis;
use crate::error::{Error, Result};
use crate::solver::LyapunovCertificate;
use crate::trajectory::Trajectory;
use crate::variants::momentum_sequence;

fn random_point<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Runs the method an analysis describes for `iters` outer steps from a
/// random start.
pub fn simulate_analysis<R: Rng + ?Sized>(
    analysis: &Analysis,
    f: &TestFunction,
    iters: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let d = f.dim();
    match analysis {
        Analysis::FixedStep { spec, .. } => {
            let init: Vec<_> = (0..=spec.degree()).map(|_| random_point(d, rng)).collect();
            simulate_method(spec, f, &init, iters)
        }
        Analysis::ExactLineSearch => simulate_els_gd(f, &random_point(d, rng), iters),
        Analysis::SubspaceSearch => {
            let x_prev = random_point(d, rng);
            simulate_els_hbm(f, &x_prev, &random_point(d, rng), iters)
        }
        Analysis::Restart { inner } => {
            let schedule = momentum_sequence(*inner)?;
            simulate_restart(f, &schedule, f.class().l(), &random_point(d, rng), iters)
        }
        Analysis::Custom => Err(Error::InvalidArgument("custom analyses cannot be simulated".into())),
    }
}

/// Tally of decrease checks over a batch of runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    pub trials: usize,
    pub failures: usize,
    /// Largest relative one-step excess seen.
    pub worst_step_excess: f64,
    pub messages: Vec<String>,
}

impl VerificationReport {
    pub fn pass(&self) -> bool {
        self.trials > 0 && self.failures == 0
    }

    pub fn absorb(&mut self, label: &str, report: &Result<DecreaseReport>) {
        self.trials += 1;
        match report {
            Ok(r) => {
                if r.worst_step_excess.is_finite() {
                    self.worst_step_excess = if self.trials == 1 {
                        r.worst_step_excess
                    } else {
                        self.worst_step_excess.max(r.worst_step_excess)
                    };
                }
                if !r.pass() {
                    self.failures += 1;
                    self.messages.push(format!(
                        "{label}: negative {:?}, step {:?}, telescoped {:?}",
                        r.negative, r.step_violations, r.telescoped_violations
                    ));
                }
            }
            Err(e) => {
                self.failures += 1;
                self.messages.push(format!("{label}: {e}"));
            }
        }
    }
}

/// Simulates the analysis on each function and checks the decrease of the
/// certificate's energy along every run.
pub fn verify_on_functions<R: Rng + ?Sized>(
    cert: &LyapunovCertificate,
    analysis: &Analysis,
    functions: &[TestFunction],
    iters: usize,
    tol: f64,
    rng: &mut R,
) -> VerificationReport {
    let mut report = VerificationReport::default();
    for (i, f) in functions.iter().enumerate() {
        let outcome = simulate_analysis(analysis, f, iters, rng)
            .and_then(|t| check_decrease_on_trajectory(cert, &t, tol));
        report.absorb(&format!("{:?} #{i}", f.kind()), &outcome);
    }
    report
}
