//! Acceptance suite: one PASS/FAIL line per criterion, then a summary.
//! Runs as a plain binary so the lines are always shown.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use lyapcert::assembly::{Analysis, RestrictionMode};
use lyapcert::interp::{phi_value, SamplePoint};
use lyapcert::model::{make_preset, FunctionClass, MethodSpec, Preset};
use lyapcert::solver::{bisect_rate, BisectOptions, RateCertificate};
use lyapcert::variants::{els_gd_rate, optimize_restart_period};
use lyapcert::verify::{
    check_certificate_algebraic, check_decrease_on_trajectory, gram_matrix, quadratic_worst_rate,
    selector_identity_residual, simulate_analysis, simulate_method, slater_trajectory, TestFunction,
};

const GRID: usize = 200;
const RESTART_N_MAX: usize = 20;

struct Suite {
    results: Vec<(u32, bool)>,
}

impl Suite {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: &str) {
        println!("{} [{id}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((id, pass));
    }
}

struct Produced {
    label: String,
    rate: RateCertificate,
    analysis: Analysis,
}

fn fixed(spec: &MethodSpec, mode: RestrictionMode) -> Analysis {
    Analysis::FixedStep {
        spec: spec.clone(),
        mode,
    }
}

fn options(mode: RestrictionMode) -> BisectOptions {
    BisectOptions {
        mode,
        ..BisectOptions::default()
    }
}

fn certify(preset: Preset, kappa: f64, mode: RestrictionMode) -> (MethodSpec, Result<RateCertificate, String>) {
    let class = FunctionClass::with_condition_number(kappa).unwrap();
    let spec = make_preset(preset, &class);
    let r = bisect_rate(&spec, &class, &options(mode)).map_err(|e| e.to_string());
    (spec, r)
}

fn gm_tight(suite: &mut Suite, produced: &mut Vec<Produced>) {
    let mut ok = true;
    let mut detail = Vec::new();
    for kappa in [2.0, 10.0, 100.0, 1000.0] {
        let (spec, r) = certify(Preset::Gm, kappa, RestrictionMode::Unrestricted);
        let target = 1.0 - 1.0 / kappa;
        let class = FunctionClass::with_condition_number(kappa).unwrap();
        let oracle = quadratic_worst_rate(&spec, &class, GRID).unwrap();
        match r {
            Ok(r) => {
                ok &= (r.rho_star - target).abs() <= 1e-3 && (oracle - target).abs() <= 1e-3;
                detail.push(format!("k={kappa}: rho*={:.5} oracle={oracle:.5} target={target:.5}", r.rho_star));
                produced.push(Produced {
                    label: format!("gm k={kappa}"),
                    rate: r,
                    analysis: fixed(&spec, RestrictionMode::Unrestricted),
                });
            }
            Err(e) => {
                ok = false;
                detail.push(format!("k={kappa}: {e}"));
            }
        }
    }
    suite.record(1, "gradient method tight rate", ok, &detail.join("; "));
}

fn tmm_rate(suite: &mut Suite, produced: &mut Vec<Produced>) {
    let mut ok = true;
    let mut detail = Vec::new();
    for kappa in [4.0f64, 25.0, 100.0, 900.0] {
        let (spec, r) = certify(Preset::Tmm, kappa, RestrictionMode::Unrestricted);
        let target = 1.0 - 1.0 / kappa.sqrt();
        match r {
            Ok(r) => {
                ok &= (r.rho_star - target).abs() <= 2e-3;
                detail.push(format!("k={kappa}: rho*={:.5} target={target:.5}", r.rho_star));
                produced.push(Produced {
                    label: format!("tmm k={kappa}"),
                    rate: r,
                    analysis: fixed(&spec, RestrictionMode::Unrestricted),
                });
            }
            Err(e) => {
                ok = false;
                detail.push(format!("k={kappa}: {e}"));
            }
        }
    }
    suite.record(2, "triple momentum rate", ok, &detail.join("; "));
}

/// Returns the unrestricted FGM rate at kappa = 100 for the restriction gap.
fn fgm_sandwich(suite: &mut Suite, produced: &mut Vec<Produced>) -> Option<f64> {
    let mut ok = true;
    let mut detail = Vec::new();
    let mut at_100 = None;
    for kappa in [10.0f64, 100.0] {
        let (spec, r) = certify(Preset::Fgm, kappa, RestrictionMode::Unrestricted);
        let class = FunctionClass::with_condition_number(kappa).unwrap();
        let oracle = quadratic_worst_rate(&spec, &class, GRID).unwrap();
        let upper = (1.0 - 1.0 / kappa.sqrt()).sqrt();
        match r {
            Ok(r) => {
                ok &= oracle - 1e-3 <= r.rho_star && r.rho_star <= upper + 1e-3;
                detail.push(format!(
                    "k={kappa}: oracle={oracle:.5} <= rho*={:.5} <= {upper:.5}",
                    r.rho_star
                ));
                if kappa == 100.0 {
                    at_100 = Some(r.rho_star);
                }
                produced.push(Produced {
                    label: format!("fgm k={kappa}"),
                    rate: r,
                    analysis: fixed(&spec, RestrictionMode::Unrestricted),
                });
            }
            Err(e) => {
                ok = false;
                detail.push(format!("k={kappa}: {e}"));
            }
        }
    }
    suite.record(3, "fast gradient sandwich", ok, &detail.join("; "));
    at_100
}

fn els_gd(suite: &mut Suite, produced: &mut Vec<Produced>) {
    let mut ok = true;
    let mut detail = Vec::new();
    for kappa in [3.0, 10.0, 100.0] {
        let class = FunctionClass::with_condition_number(kappa).unwrap();
        let target = (kappa - 1.0) / (kappa + 1.0);
        match els_gd_rate(&class, &BisectOptions::default()) {
            Ok(r) => {
                ok &= (r.rho_star - target).abs() <= 1e-3;
                detail.push(format!("k={kappa}: rho*={:.5} target={target:.5}", r.rho_star));
                produced.push(Produced {
                    label: format!("els-gd k={kappa}"),
                    rate: r,
                    analysis: Analysis::ExactLineSearch,
                });
            }
            Err(e) => {
                ok = false;
                detail.push(format!("k={kappa}: {e}"));
            }
        }
    }
    suite.record(4, "exact line search rate", ok, &detail.join("; "));
}

fn restart(suite: &mut Suite, produced: &mut Vec<Produced>) {
    let mut ok = true;
    let mut detail = Vec::new();
    for kappa in [100.0f64, 400.0] {
        let class = FunctionClass::with_condition_number(kappa).unwrap();
        let bound = (-1.0 / (std::f64::consts::E * (8.0 * kappa).sqrt())).exp();
        match optimize_restart_period(&class, RESTART_N_MAX, &BisectOptions::default()) {
            Ok(opt) => {
                ok &= opt.rho_star <= bound;
                let mut curves = Vec::new();
                for n in [1usize, 5, 10, 20] {
                    match opt.rates.iter().find(|(m, _)| *m == n) {
                        Some((_, Ok(r))) => {
                            ok &= *r >= opt.rho_star;
                            curves.push(format!("N={n}:{r:.5}"));
                        }
                        _ => {
                            ok = false;
                            curves.push(format!("N={n}:missing"));
                        }
                    }
                }
                detail.push(format!(
                    "k={kappa}: N*={} rho*={:.5} bound={bound:.5} [{}]",
                    opt.n_star,
                    opt.rho_star,
                    curves.join(" ")
                ));
                produced.push(Produced {
                    label: format!("restart k={kappa} N={}", opt.n_star),
                    rate: opt.best,
                    analysis: Analysis::Restart { inner: opt.n_star },
                });
            }
            Err(e) => {
                ok = false;
                detail.push(format!("k={kappa}: {e}"));
            }
        }
    }
    suite.record(5, "restarted fast gradient", ok, &detail.join("; "));
}

fn restriction_gap(suite: &mut Suite, produced: &mut Vec<Produced>, unrestricted: Option<f64>) {
    let (spec, r) = certify(Preset::Fgm, 100.0, RestrictionMode::LambdaZero);
    let (ok, detail) = match (unrestricted, r) {
        (None, _) => (false, "unrestricted rate unavailable".to_string()),
        (Some(u), Ok(r)) => {
            let d = format!("lambda-zero rho*={:.5} unrestricted rho*={u:.5}", r.rho_star);
            let ok = r.rho_star >= u + 1e-3;
            produced.push(Produced {
                label: "fgm k=100 lambda-zero".into(),
                rate: r,
                analysis: fixed(&spec, RestrictionMode::LambdaZero),
            });
            (ok, d)
        }
        (Some(u), Err(e)) => (
            e.contains("no certificate"),
            format!("lambda-zero: {e}; unrestricted rho*={u:.5}"),
        ),
    };
    suite.record(6, "restriction gap", ok, &detail);
}

fn soundness(suite: &mut Suite, produced: &[Produced]) {
    let lines: Vec<(bool, String)> = produced
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let cert = &p.rate.certificate;
            let class = cert.class;
            let res = match check_certificate_algebraic(cert, &p.rate.problem, 1e-6) {
                Ok(r) => r,
                Err(e) => return (false, format!("{}: {e}", p.label)),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
            let mut functions: Vec<TestFunction> =
                (0..100).map(|_| TestFunction::random_quadratic(&class, 20, &mut rng)).collect();
            functions.extend((0..20).map(|_| TestFunction::log_sum_exp(&class, 10, 12, &mut rng)));
            let mut failures = 0;
            let mut first = String::new();
            for f in &functions {
                let outcome = simulate_analysis(&p.analysis, f, 200, &mut rng)
                    .and_then(|t| check_decrease_on_trajectory(cert, &t, 1e-8));
                let pass = matches!(&outcome, Ok(r) if r.pass());
                if !pass {
                    if failures == 0 {
                        first = format!(" first: {:?} {:?}", f.kind(), outcome.map(|r| r.worst_step_excess));
                    }
                    failures += 1;
                }
            }
            let ok = res.pass() && res.worst_violation() <= 1e-6 && failures == 0;
            (
                ok,
                format!(
                    "{}: residual={:.1e} runs failed={failures}/120{first}",
                    p.label,
                    res.worst_violation()
                ),
            )
        })
        .collect();
    let ok = !lines.is_empty() && lines.iter().all(|(ok, _)| *ok);
    let detail: Vec<_> = lines
        .iter()
        .filter(|(ok, _)| !ok)
        .map(|(_, l)| l.clone())
        .collect();
    let summary = if detail.is_empty() {
        format!("{} certificates, 120 runs of 200 iterations each", lines.len())
    } else {
        detail.join("; ")
    };
    suite.record(7, "end-to-end soundness", ok, &summary);
}

fn random_spec<R: Rng>(rng: &mut R) -> MethodSpec {
    let n = rng.random_range(0..=2usize);
    let mut beta: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mut gamma: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    beta.insert(0, 1.0 - beta.iter().sum::<f64>());
    gamma.insert(0, 1.0 - gamma.iter().sum::<f64>());
    MethodSpec::new(rng.random_range(0.01..0.5), beta, gamma).unwrap()
}

fn properties(suite: &mut Suite, produced: &[Produced]) {
    let mut ok = true;
    let mut detail = Vec::new();

    let class = FunctionClass::new(1.0, 2.0).unwrap();
    let pts = [
        SamplePoint::new(DVector::from_element(1, 1.0), DVector::from_element(1, 2.0), 1.0),
        SamplePoint::new(DVector::zeros(1), DVector::zeros(1), 0.0),
    ];
    let phi = phi_value(&pts, &class, 0, 1).unwrap();
    ok &= phi.abs() <= 1e-12;
    detail.push(format!("boundary phi={phi:.1e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let spec = random_spec(&mut rng);
        let c = FunctionClass::with_condition_number(rng.random_range(2.0..50.0)).unwrap();
        let f = TestFunction::random_quadratic(&c, 6, &mut rng);
        let init: Vec<_> = (0..=spec.degree())
            .map(|_| DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let t = simulate_method(&spec, &f, &init, 6).unwrap();
        worst = worst.max(selector_identity_residual(&spec, &t).unwrap());
    }
    ok &= worst <= 1e-9;
    detail.push(format!("selector identity worst={worst:.1e}"));

    let brackets = produced.iter().all(|p| p.rate.bracket_consistent());
    ok &= brackets;
    detail.push(format!("brackets consistent on {} runs: {brackets}", produced.len()));

    let c = FunctionClass::with_condition_number(10.0).unwrap();
    for (preset, k, d) in [(Preset::Gm, 2usize, 4usize), (Preset::Fgm, 2, 5)] {
        let spec = make_preset(preset, &c);
        let t = slater_trajectory(&spec, &c, k, d).unwrap();
        let g = gram_matrix(&t, k).unwrap();
        let min = g.symmetric_eigenvalues().min();
        ok &= min > 0.0;
        detail.push(format!("slater (N={}, K={k}, d={d}) min eig={min:.2e}", spec.degree()));
    }
    suite.record(8, "property suites", ok, &detail.join("; "));
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut suite = Suite { results: Vec::new() };
    let mut produced = Vec::new();
    gm_tight(&mut suite, &mut produced);
    tmm_rate(&mut suite, &mut produced);
    let fgm_100 = fgm_sandwich(&mut suite, &mut produced);
    els_gd(&mut suite, &mut produced);
    restart(&mut suite, &mut produced);
    restriction_gap(&mut suite, &mut produced, fgm_100);
    soundness(&mut suite, &produced);
    properties(&mut suite, &produced);
    let passed = suite.results.iter().filter(|(_, p)| *p).count();
    println!(
        "acceptance: {passed}/{} criteria passed in {:.1}s",
        suite.results.len(),
        start.elapsed().as_secs_f64()
    );
    if passed == suite.results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
