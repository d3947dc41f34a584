use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use lyapcert::assembly::{Analysis, RestrictionMode};
use lyapcert::certificate::{parse_certificate, serialize_certificate};
use lyapcert::solver::{bisect_rate, BisectOptions, RateCertificate};
use lyapcert::variants::{bisect_analysis, build_problem, optimize_restart_over, optimize_restart_period};
use lyapcert::verify::{
    check_certificate_algebraic, check_decrease_on_trajectory, simulate_analysis, verify_on_functions, TestFunction,
};
use lyapcert::{make_preset, Error, FunctionClass, MethodSpec, Preset};

use crate::args::{
    CheckArgs, ClassArgs, ElsName, FunctionName, MethodArgs, MethodName, RateArgs, Restrict, RestartOptArgs,
    SimulateArgs, SolverArgs, SweepArgs,
};
use crate::table::SweepTable;

/// A command failure, mapped onto the process exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    /// Bad arguments, unreadable or malformed input, unwritable output.
    Usage(String),
    /// No certificate in the bracket, or a certificate that fails its checks.
    NoCertificate(String),
    /// The solver could not decide a probe.
    Unknown(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::NoCertificate(_) => 2,
            Failure::Unknown(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::NoCertificate(m) | Failure::Unknown(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NoCertificateWithinBracket { .. } => Failure::NoCertificate(e.to_string()),
            Error::BackendUnknown { .. } | Error::BackendUnavailable(_) => Failure::Unknown(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

/// Writes the command's document to `out`, or to standard output.
fn emit(out: &Option<PathBuf>, text: &str) -> CmdResult {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn class_of(args: &ClassArgs) -> Result<FunctionClass, Failure> {
    FunctionClass::new(args.mu, args.l).map_err(|e| usage(e.to_string()))
}

fn options(args: &SolverArgs, mode: RestrictionMode) -> BisectOptions {
    let mut opts = BisectOptions {
        rho_max: args.rho_max,
        tol_rho: args.tol_rho,
        mode,
        ..BisectOptions::default()
    };
    opts.settings.eps_feas = args.eps_feas;
    opts
}

fn mode_of(r: Restrict) -> RestrictionMode {
    match r {
        Restrict::None => RestrictionMode::Unrestricted,
        Restrict::LambdaZero => RestrictionMode::LambdaZero,
        Restrict::PosdefShape => RestrictionMode::PosDefShape,
    }
}

fn preset_of(m: MethodName) -> Option<Preset> {
    match m {
        MethodName::Gm => Some(Preset::Gm),
        MethodName::Hbm => Some(Preset::Hbm),
        MethodName::Fgm => Some(Preset::Fgm),
        MethodName::Tmm => Some(Preset::Tmm),
        MethodName::Custom => None,
    }
}

fn custom_spec(args: &MethodArgs) -> Result<MethodSpec, Failure> {
    let (Some(n), Some(alpha), Some(beta), Some(gamma)) = (args.n, args.alpha, &args.beta, &args.gamma) else {
        return Err(usage("--method custom needs --N, --alpha, --beta and --gamma"));
    };
    for (name, v) in [("beta", beta), ("gamma", gamma)] {
        if v.len() != n + 1 {
            return Err(usage(format!("--{name} needs N + 1 = {} values, got {}", n + 1, v.len())));
        }
    }
    MethodSpec::new(alpha, beta.clone(), gamma.clone()).map_err(|e| usage(e.to_string()))
}

/// Resolves the method flags into an analysis.
pub fn analysis_of(args: &MethodArgs, class: &FunctionClass) -> Result<Analysis, Failure> {
    let mode = mode_of(args.restrict);
    if args.method.is_none() && mode != RestrictionMode::Unrestricted {
        return Err(usage("--restrict applies to fixed-step methods only"));
    }
    match (args.method, args.els, args.restart) {
        (Some(MethodName::Custom), _, _) => Ok(Analysis::FixedStep {
            spec: custom_spec(args)?,
            mode,
        }),
        (Some(m), _, _) => Ok(Analysis::FixedStep {
            spec: make_preset(preset_of(m).expect("named preset"), class),
            mode,
        }),
        (None, Some(ElsName::Gd), _) => Ok(Analysis::ExactLineSearch),
        (None, Some(ElsName::Hbm), _) => Ok(Analysis::SubspaceSearch),
        (None, None, Some(0)) => Err(usage("--restart needs a positive period")),
        (None, None, Some(inner)) => Ok(Analysis::Restart { inner }),
        (None, None, None) => Err(usage("choose one of --method, --els or --restart")),
    }
}

fn certify(analysis: &Analysis, class: &FunctionClass, opts: &BisectOptions) -> lyapcert::Result<RateCertificate> {
    match analysis {
        Analysis::FixedStep { spec, mode } => bisect_rate(
            spec,
            class,
            &BisectOptions {
                mode: *mode,
                ..opts.clone()
            },
        ),
        _ => bisect_analysis(analysis, class, opts),
    }
}

pub fn rate(args: &RateArgs) -> CmdResult {
    let class = class_of(&args.class)?;
    let analysis = analysis_of(&args.method, &class)?;
    let r = certify(&analysis, &class, &options(&args.solver, RestrictionMode::Unrestricted))?;
    eprintln!("rho* = {} after {} probes", r.rho_star, r.bracket_history.len());
    emit(&args.out, &serialize_certificate(&r.certificate, &analysis))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Column {
    Fixed(Preset, Restrict),
    Els(ElsName),
    Restart(usize),
    RestartBest,
    Bound,
}

impl Column {
    fn name(&self, tag_modes: bool) -> String {
        match self {
            Column::Fixed(p, r) if tag_modes => format!("{}:{}", p.name(), mode_of(*r).name()),
            Column::Fixed(p, _) => p.name().to_string(),
            Column::Els(ElsName::Gd) => "els-gd".into(),
            Column::Els(ElsName::Hbm) => "els-hbm".into(),
            Column::Restart(n) => format!("restart-{n}"),
            Column::RestartBest => "restart-best".into(),
            Column::Bound => "restart-bound".into(),
        }
    }
}

fn sweep_columns(args: &SweepArgs) -> Result<(Vec<Column>, bool), Failure> {
    let modes = if args.restrict.is_empty() {
        vec![Restrict::None]
    } else {
        args.restrict.clone()
    };
    if args.methods.is_empty() && !args.restrict.is_empty() {
        return Err(usage("--restrict needs --methods"));
    }
    let mut cols = Vec::new();
    for m in &args.methods {
        let p = preset_of(*m).ok_or_else(|| usage("custom methods cannot be swept over kappa"))?;
        cols.extend(modes.iter().map(|r| Column::Fixed(p, *r)));
    }
    cols.extend(args.els.iter().map(|e| Column::Els(*e)));
    if !args.restart.is_empty() {
        if args.restart.contains(&0) {
            return Err(usage("restart periods must be positive"));
        }
        cols.extend(args.restart.iter().map(|n| Column::Restart(*n)));
        cols.push(Column::RestartBest);
        cols.push(Column::Bound);
    }
    if cols.is_empty() {
        return Err(usage("nothing to sweep: give --methods, --els or --restart"));
    }
    Ok((cols, modes != [Restrict::None]))
}

/// Rates for one grid point, column by column.
fn sweep_row(kappa: f64, cols: &[Column], periods: &[usize], opts: &BisectOptions) -> Result<Vec<f64>, String> {
    let class = FunctionClass::with_condition_number(kappa).map_err(|e| e.to_string())?;
    let restarts = if periods.is_empty() {
        None
    } else {
        Some(optimize_restart_over(&class, periods, opts).map_err(|e| format!("restart: {e}"))?)
    };
    let mut row = vec![kappa];
    for col in cols {
        let label = col.name(true);
        let fail = |e: Error| format!("{label}: {e}");
        let rho = match *col {
            Column::Fixed(p, r) => bisect_rate(
                &make_preset(p, &class),
                &class,
                &BisectOptions {
                    mode: mode_of(r),
                    ..opts.clone()
                },
            )
            .map_err(fail)?
            .rho_star,
            Column::Els(e) => {
                let analysis = match e {
                    ElsName::Gd => Analysis::ExactLineSearch,
                    ElsName::Hbm => Analysis::SubspaceSearch,
                };
                bisect_analysis(&analysis, &class, opts).map_err(fail)?.rho_star
            }
            Column::Restart(n) => {
                let rates = &restarts.as_ref().expect("restart periods present").rates;
                match rates.iter().find(|(m, _)| *m == n) {
                    Some((_, Ok(rho))) => *rho,
                    Some((_, Err(e))) => return Err(format!("{label}: {e}")),
                    None => unreachable!("listed period {n} is searched"),
                }
            }
            Column::RestartBest => restarts.as_ref().expect("restart periods present").rho_star,
            Column::Bound => restart_bound(kappa),
        };
        row.push(rho);
    }
    Ok(row)
}

/// `exp(-1/(e sqrt(8 kappa)))`, the per-gradient rate of the best fixed
/// restart period from the convex analysis of the fast gradient method.
pub fn restart_bound(kappa: f64) -> f64 {
    (-1.0 / (std::f64::consts::E * (8.0 * kappa).sqrt())).exp()
}

/// `-1/ln(rho)`, the order of the iteration count to reach a fixed accuracy.
fn iterations(rho: f64) -> Result<f64, String> {
    if (0.0..1.0).contains(&rho) {
        Ok(-1.0 / rho.ln())
    } else {
        Err(format!("rate {rho} does not contract"))
    }
}

pub fn sweep(args: &SweepArgs) -> CmdResult {
    let (cols, tag_modes) = sweep_columns(args)?;
    let mut periods = args.restart.clone();
    periods.extend(1..=args.restart_nmax.unwrap_or(0));
    let opts = options(&args.solver, RestrictionMode::Unrestricted);
    let kappas = args.kappa.points();
    let rows: Vec<Result<Vec<f64>, String>> = kappas
        .par_iter()
        .map(|&kappa| {
            let row = sweep_row(kappa, &cols, &periods, &opts)?;
            if !args.iterations {
                return Ok(row);
            }
            let mut out = vec![kappa];
            for v in &row[1..] {
                out.push(iterations(*v)?);
            }
            Ok(out)
        })
        .collect();
    let mut table = SweepTable::new(cols.iter().map(|c| c.name(tag_modes)).collect());
    for (kappa, row) in kappas.iter().zip(rows) {
        if let Err(e) = row.and_then(|r| table.push(r)) {
            eprintln!("warning: dropping kappa = {kappa}: {e}");
        }
    }
    if table.rows.is_empty() {
        return Err(Failure::NoCertificate("every grid point failed".into()));
    }
    emit(&args.out, &table.emit())
}

fn check_table(path: &Path, out: &Option<PathBuf>) -> CmdResult {
    let text = read(path)?;
    let table = SweepTable::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if table.emit() != text {
        return Err(Failure::NoCertificate(format!(
            "{}: re-emitted table differs from the file",
            path.display()
        )));
    }
    emit(
        out,
        &format!(
            "table {}: {} rows, {} columns, round trip identical\n",
            path.display(),
            table.rows.len(),
            table.columns.len()
        ),
    )
}

pub fn check(args: &CheckArgs) -> CmdResult {
    if let Some(path) = &args.table {
        return check_table(path, &args.out);
    }
    let path = args.certificate.as_ref().expect("clap requires a certificate or a table");
    let (cert, analysis) = parse_certificate(&read(path)?)?;
    let problem = build_problem(&analysis, &cert.class, cert.rho)?;
    let residuals = check_certificate_algebraic(&cert, &problem, args.tol)?;

    let mut out = String::new();
    let _ = writeln!(out, "certificate {}: {} at rho = {}", path.display(), analysis.name(), cert.rho);
    let mut failed = Vec::new();
    for c in residuals.matrix.iter().chain(&residuals.vector) {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{verdict} constraint {} ({:?}): extreme = {:.6e}", c.label, c.sense, c.extreme);
        if !c.pass {
            failed.push(c.label.clone());
        }
    }
    let mult_ok = residuals.multiplier_negativity <= residuals.tol;
    let _ = writeln!(
        out,
        "{} multipliers: negativity = {:.6e}",
        if mult_ok { "PASS" } else { "FAIL" },
        residuals.multiplier_negativity
    );
    if !mult_ok {
        failed.push("multipliers".into());
    }

    if args.trials > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        let functions: Vec<TestFunction> = (0..args.trials)
            .map(|i| {
                if i % 2 == 0 {
                    TestFunction::random_quadratic(&cert.class, args.dim, &mut rng)
                } else {
                    TestFunction::log_sum_exp(&cert.class, args.dim, args.dim + 2, &mut rng)
                }
            })
            .collect();
        let report = verify_on_functions(&cert, &analysis, &functions, args.iters, args.decrease_tol, &mut rng);
        let _ = writeln!(
            out,
            "{} decrease: {} runs of {} iterations in dimension {}, {} failures, worst step excess = {:.3e}",
            if report.pass() { "PASS" } else { "FAIL" },
            report.trials,
            args.iters,
            args.dim,
            report.failures,
            report.worst_step_excess
        );
        for m in &report.messages {
            let _ = writeln!(out, "  {m}");
        }
        if !report.pass() {
            failed.push("decrease".into());
        }
    } else {
        let _ = writeln!(out, "decrease: skipped (algebraic check only)");
    }
    let _ = writeln!(out, "result: {}", if failed.is_empty() { "PASS" } else { "FAIL" });
    emit(&args.out, &out)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::NoCertificate(format!("failed: {}", failed.join(", "))))
    }
}

pub fn simulate(args: &SimulateArgs) -> CmdResult {
    let (analysis, class, cert) = match &args.certificate {
        Some(path) => {
            let (cert, analysis) = parse_certificate(&read(path)?)?;
            (analysis, cert.class, Some(cert))
        }
        None => {
            let class = class_of(&args.class)?;
            (analysis_of(&args.method, &class)?, class, None)
        }
    };
    if args.dim == 0 {
        return Err(usage("--dim must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let f = match args.function {
        FunctionName::Quadratic => TestFunction::random_quadratic(&class, args.dim, &mut rng),
        FunctionName::Lse => TestFunction::log_sum_exp(&class, args.dim, args.dim + 2, &mut rng),
    };
    let traj = simulate_analysis(&analysis, &f, args.iters, &mut rng)?;
    let energy = cert
        .as_ref()
        .map(|c| check_decrease_on_trajectory(c, &traj, 1e-8))
        .transpose()?;

    let mut out = String::from("# k f_gap dist grad_norm");
    if energy.is_some() {
        out.push_str(" energy");
    }
    out.push('\n');
    let start = energy.as_ref().map_or(0, |e| e.start);
    for k in start..traj.steps() {
        let _ = write!(
            out,
            "{k} {} {} {}",
            traj.f(k) - traj.f_star(),
            (traj.x(k as i64) - traj.x_star()).norm(),
            traj.g(k).norm()
        );
        if let Some(e) = &energy {
            let _ = write!(out, " {}", e.values[k - e.start]);
        }
        out.push('\n');
    }
    if let Some(e) = &energy {
        eprintln!("energy decrease along the run: {}", if e.pass() { "holds" } else { "VIOLATED" });
    }
    emit(&args.out, &out)
}

pub fn restart_opt(args: &RestartOptArgs) -> CmdResult {
    let class = class_of(&args.class)?;
    if args.n_max == 0 {
        return Err(usage("--n-max must be positive"));
    }
    let best = optimize_restart_period(&class, args.n_max, &options(&args.solver, RestrictionMode::Unrestricted))?;
    let mut out = String::from("# N rho\n");
    for (n, r) in &best.rates {
        match r {
            Ok(rho) => {
                let _ = writeln!(out, "{n} {rho}");
            }
            Err(e) => eprintln!("warning: N = {n}: {e}"),
        }
    }
    let bound = restart_bound(class.kappa());
    eprintln!("best period N* = {} with rho = {} (reference bound {bound})", best.n_star, best.rho_star);
    if let Some(path) = &args.certificate {
        let text = serialize_certificate(&best.best.certificate, &Analysis::Restart { inner: best.n_star });
        emit(&Some(path.clone()), &text)?;
    }
    emit(&args.out, &out)
}
