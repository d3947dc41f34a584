use std::path::Path;
use std::process::{Command, Output};

use lyapcert_cli::table::SweepTable;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lyapcert"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn rho_of(doc: &str) -> f64 {
    let line = doc.lines().find(|l| l.trim_start().starts_with("\"rho\"")).expect("rho line");
    line.split(':').nth(1).unwrap().trim().trim_end_matches(',').parse().unwrap()
}

fn table_of(o: &Output) -> SweepTable {
    assert_eq!(o.status.code(), Some(0), "{}", stderr(o));
    SweepTable::parse(&stdout(o)).unwrap()
}

fn write_gm_certificate(dir: &Path) -> String {
    let path = dir.join("gm.json");
    let p = path.to_str().unwrap().to_string();
    let o = run(&["rate", "--method", "gm", "--mu", "1", "--L", "10", "--out", &p]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    p
}

#[test]
fn rate_of_gradient_method() {
    let o = run(&["rate", "--method", "gm", "--mu", "1", "--L", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rho = rho_of(&stdout(&o));
    assert!((rho - 0.9).abs() <= 1e-3, "{rho}");
}

#[test]
fn rate_of_custom_method_matches_oracle() {
    let o = run(&[
        "rate", "--method", "custom", "--N", "1", "--alpha", "0.01", "--beta", "1,0", "--gamma", "1,0", "--mu", "1",
        "--L", "10",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    // max(|1 - alpha mu|, |1 - alpha L|)
    let rho = rho_of(&stdout(&o));
    assert!((rho - 0.99).abs() <= 1e-3, "{rho}");
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["rate", "--method", "gm", "--mu", "0", "--L", "1"],
        vec!["rate", "--method", "gm", "--mu", "2", "--L", "1"],
        vec!["rate", "--method", "custom", "--N", "1", "--alpha", "0.1", "--beta", "1", "--gamma", "1,0"],
        vec!["rate"],
        vec!["rate", "--method", "newton"],
        vec!["rate", "--els", "gd", "--restrict", "lambda-zero"],
        vec!["sweep", "--kappa", "1:10"],
        vec!["sweep", "--kappa", "1:10:3"],
        vec!["check", "/nonexistent/certificate.json"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn missing_certificate_exits_two() {
    // heavy ball has no certificate at this condition number
    let o = run(&["rate", "--method", "hbm", "--mu", "1", "--L", "1000"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn restriction_flags_select_restricted_searches() {
    let rho = |restrict: &str| {
        let o = run(&["rate", "--method", "fgm", "--mu", "1", "--L", "100", "--restrict", restrict]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let doc = stdout(&o);
        assert!(doc.contains(&format!("\"restrict\": \"{restrict}\"")));
        rho_of(&doc)
    };
    let free = rho("none");
    assert!(rho("lambda-zero") >= free + 1e-3);
    assert!(rho("posdef-shape") >= free - 1e-4);
}

#[test]
fn fresh_certificate_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cert = write_gm_certificate(dir.path());
    let o = run(&["check", &cert, "--trials", "100", "--dim", "20"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}{}", stderr(&o));
    assert!(out.contains("PASS decrease: 100 runs"));
    assert!(out.ends_with("result: PASS\n"));
}

#[test]
fn zero_trials_give_algebraic_report() {
    let dir = tempfile::tempdir().unwrap();
    let cert = write_gm_certificate(dir.path());
    let o = run(&["check", &cert, "--trials", "0"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(out.contains("PASS constraint positivity.matrix"));
    assert!(out.contains("decrease: skipped"));
    assert!(!out.contains("runs of"));
}

#[test]
fn corrupted_certificate_fails_with_named_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let cert = write_gm_certificate(dir.path());
    let text = std::fs::read_to_string(&cert).unwrap();
    let corrupted: String = text
        .lines()
        .map(|l| match l.trim_start().strip_prefix("\"P[0][0]\": ") {
            Some(v) => {
                let x: f64 = v.trim_end_matches(',').parse().unwrap();
                format!("  \"P[0][0]\": {:.16e},", x + 1.0)
            }
            None => l.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n");
    assert_ne!(corrupted.trim(), text.trim());
    std::fs::write(&cert, corrupted).unwrap();
    let o = run(&["check", &cert, "--trials", "0"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(2), "{out}");
    assert!(out.contains("FAIL constraint decrease.matrix"), "{out}");
    assert!(stderr(&o).contains("decrease.matrix"));
}

#[test]
fn malformed_certificate_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ \"problem\": ").unwrap();
    let o = run(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn variant_certificates_round_trip_through_check() {
    let dir = tempfile::tempdir().unwrap();
    for (name, args) in [("els", vec!["--els", "gd"]), ("restart", vec!["--restart", "3"])] {
        let path = dir.path().join(format!("{name}.json"));
        let p = path.to_str().unwrap();
        let mut full = vec!["rate", "--mu", "1", "--L", "20", "--out", p];
        full.extend(args);
        let o = run(&full);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
        let o = run(&["check", p, "--trials", "6", "--dim", "8"]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stdout(&o));
    }
}

#[test]
fn line_search_sweep_matches_closed_form() {
    let o = run(&["sweep", "--els", "gd", "--kappa", "1:1000:25log"]);
    let t = table_of(&o);
    assert_eq!(t.columns, vec!["kappa", "els-gd"]);
    // only kappa = 1, where the class degenerates, is dropped
    assert_eq!(t.rows.len(), 24);
    assert!(stderr(&o).contains("dropping kappa = 1:"));
    for r in &t.rows {
        let target = (r[0] - 1.0) / (r[0] + 1.0);
        assert!((r[1] - target).abs() <= 1e-3, "kappa {}: {} vs {target}", r[0], r[1]);
    }
}

#[test]
fn method_sweep_orders_curves() {
    let o = run(&["sweep", "--methods", "gm,hbm,fgm,tmm", "--kappa", "1:1000:50log"]);
    let t = table_of(&o);
    assert_eq!(t.columns, vec!["kappa", "gm", "hbm", "fgm", "tmm"]);
    assert!(t.rows.len() >= 30);
    for r in t.rows.iter().filter(|r| r[0] >= 10.0) {
        let (gm, hbm, fgm, tmm) = (r[1], r[2], r[3], r[4]);
        assert!(gm > fgm && fgm > tmm, "{r:?}");
        assert!(tmm < hbm, "{r:?}");
    }
}

#[test]
fn sweeps_are_deterministic_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.dat");
    let b = dir.path().join("b.dat");
    for p in [&a, &b] {
        let o = run(&[
            "sweep", "--methods", "fgm,tmm", "--kappa", "2:200:6log", "--out", p.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("# kappa fgm tmm\n"));

    let o = run(&["check", "--table", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("round trip identical"));

    // a valid but non-canonical rendering does not round-trip
    std::fs::write(&b, text.replacen("\n2 ", "\n2.0 ", 1)).unwrap();
    let o = run(&["check", "--table", b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn restricted_sweep_in_iteration_units() {
    let kappa = "10:100:2log";
    let rates = table_of(&run(&["sweep", "--methods", "fgm,tmm", "--restrict", "none,posdef-shape", "--kappa", kappa]));
    let iters = table_of(&run(&[
        "sweep", "--methods", "fgm,tmm", "--restrict", "none,posdef-shape", "--kappa", kappa, "--iterations",
    ]));
    assert_eq!(
        iters.columns,
        vec!["kappa", "fgm:none", "fgm:posdef-shape", "tmm:none", "tmm:posdef-shape"]
    );
    for (r, i) in rates.rows.iter().zip(&iters.rows) {
        assert_eq!(r[0], i[0]);
        for c in 1..r.len() {
            assert!((i[c] + 1.0 / r[c].ln()).abs() <= 1e-12 * i[c]);
        }
        // restricting the shape never helps
        assert!(i[2] >= i[1] * (1.0 - 1e-3) && i[4] >= i[3] * (1.0 - 1e-3), "{i:?}");
    }
}

#[test]
fn restart_sweep_columns() {
    let o = run(&["sweep", "--restart", "1,5,10,20", "--kappa", "10:1000:20log"]);
    let t = table_of(&o);
    assert_eq!(
        t.columns,
        vec!["kappa", "restart-1", "restart-5", "restart-10", "restart-20", "restart-best", "restart-bound"]
    );
    assert_eq!(t.rows.len(), 20);
    for r in &t.rows {
        let best = r[5];
        assert!(r[1..5].iter().all(|v| *v >= best), "{r:?}");
        assert_eq!(r[6], (-1.0 / (std::f64::consts::E * (8.0 * r[0]).sqrt())).exp());
    }
    // the bound holds for the best period overall, near e sqrt(8 kappa);
    // periods up to 20 reach it only up to a few hundred
    for r in t.rows.iter().filter(|r| r[0] <= 400.0) {
        assert!(r[5] <= r[6], "{r:?}");
    }
}

#[test]
fn best_period_column_searches_extra_periods() {
    let listed = table_of(&run(&["sweep", "--restart", "1,2", "--kappa", "20:40:2log"]));
    let wide = table_of(&run(&["sweep", "--restart", "1,2", "--restart-nmax", "6", "--kappa", "20:40:2log"]));
    for (a, b) in listed.rows.iter().zip(&wide.rows) {
        assert_eq!(a[..3], b[..3]);
        assert_eq!(a[3], a[1].min(a[2]));
        assert!(b[3] < a[3], "{a:?} {b:?}");
    }
}

#[test]
fn simulate_reports_energy_from_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cert = write_gm_certificate(dir.path());
    let o = run(&["simulate", "--certificate", &cert, "--iters", "30", "--dim", "6", "--function", "lse"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("# k f_gap dist grad_norm energy\n"));
    let energy: Vec<f64> = out
        .lines()
        .skip(1)
        .map(|l| l.split(' ').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(energy.len(), 30);
    let rho2 = rho_of(&std::fs::read_to_string(&cert).unwrap()).powi(2);
    for w in energy.windows(2).take(10) {
        assert!(w[1] <= rho2 * w[0] * (1.0 + 1e-9), "{w:?}");
    }
    assert!(stderr(&o).contains("holds"));

    let a = run(&["simulate", "--method", "tmm", "--mu", "1", "--L", "50", "--seed", "7"]);
    let b = run(&["simulate", "--method", "tmm", "--mu", "1", "--L", "50", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 51);
}

#[test]
fn restart_period_search() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("best.json");
    let o = run(&["restart-opt", "--mu", "1", "--L", "100", "--n-max", "4", "--certificate", cert.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows: Vec<(usize, f64)> = stdout(&o)
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(' ');
            (it.next().unwrap().parse().unwrap(), it.next().unwrap().parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
    let best = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let doc = std::fs::read_to_string(&cert).unwrap();
    assert_eq!(rho_of(&doc), best);
    let o = run(&["check", cert.to_str().unwrap(), "--trials", "4", "--dim", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}
