//! Flat key/value text format for certificates.
//!
//! The document is a single JSON object. Numbers carry 17 significant
//! digits; matrices are written as their upper triangle, keyed `P[a][b]`,
//! and multipliers as `lambda[i][j]` / `eta[i][j]` with `star` for the
//! optimum index.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde_json::{Map, Value};

use crate::assembly::{Analysis, RestrictionMode};
use crate::error::{Error, Result};
use crate::model::{FunctionClass, MethodSpec};
use crate::solver::LyapunovCertificate;
use crate::symbolic::Idx;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn perr(detail: impl Into<String>) -> Error {
    Error::Parse {
        what: "certificate",
        detail: detail.into(),
    }
}

pub fn serialize_certificate(cert: &LyapunovCertificate, analysis: &Analysis) -> String {
    let mut items: Vec<(String, String)> = Vec::new();
    let s = |x: &str| format!("\"{x}\"");
    items.push(("problem".into(), s(analysis.name())));
    match analysis {
        Analysis::FixedStep { spec, mode } => {
            items.push(("restrict".into(), s(mode.name())));
            items.push(("N".into(), spec.degree().to_string()));
            items.push(("alpha".into(), num(spec.alpha())));
            for (j, b) in spec.beta().iter().enumerate() {
                items.push((format!("beta[{j}]"), num(*b)));
            }
            for (j, g) in spec.gamma().iter().enumerate() {
                items.push((format!("gamma[{j}]"), num(*g)));
            }
        }
        Analysis::Restart { inner } => items.push(("restart_n".into(), inner.to_string())),
        _ => {}
    }
    items.push(("rho".into(), num(cert.rho)));
    items.push(("mu".into(), num(cert.class.mu())));
    items.push(("L".into(), num(cert.class.l())));
    let n = cert.p_mat.nrows();
    for a in 0..n {
        for b in a..n {
            items.push((format!("P[{a}][{b}]"), num(cert.p_mat[(a, b)])));
        }
    }
    for (a, x) in cert.p_vec.iter().enumerate() {
        items.push((format!("p[{a}]"), num(*x)));
    }
    for ((i, j), x) in &cert.lambda {
        items.push((format!("lambda[{i}][{j}]"), num(*x)));
    }
    for ((i, j), x) in &cert.eta {
        items.push((format!("eta[{i}][{j}]"), num(*x)));
    }
    for (a, x) in cert.nu.iter().enumerate() {
        items.push((format!("nu[{a}]"), num(*x)));
    }
    items.push(("margin".into(), num(cert.margin)));
    items.push((
        "solver".into(),
        serde_json::to_string(&cert.solver).expect("string serializes"),
    ));

    let mut out = String::from("{\n");
    for (k, (key, val)) in items.iter().enumerate() {
        let sep = if k + 1 == items.len() { "" } else { "," };
        let _ = writeln!(out, "  \"{key}\": {val}{sep}");
    }
    out.push_str("}\n");
    out
}

/// Splits `name[a][b]..` into the name and its bracketed tokens.
fn split_key(key: &str) -> Option<(&str, Vec<&str>)> {
    let (name, rest) = match key.find('[') {
        Some(p) => (&key[..p], &key[p..]),
        None => return Some((key, Vec::new())),
    };
    let mut toks = Vec::new();
    let mut rest = rest;
    while !rest.is_empty() {
        let r = rest.strip_prefix('[')?;
        let end = r.find(']')?;
        toks.push(&r[..end]);
        rest = &r[end + 1..];
    }
    Some((name, toks))
}

fn index(tok: &str) -> Result<usize> {
    tok.parse().map_err(|_| perr(format!("bad index `{tok}`")))
}

pub fn parse_certificate(text: &str) -> Result<(LyapunovCertificate, Analysis)> {
    let root: Value = serde_json::from_str(text).map_err(|e| perr(e.to_string()))?;
    let obj: &Map<String, Value> = root.as_object().ok_or_else(|| perr("not an object"))?;
    let get_num = |k: &str| -> Result<f64> {
        obj.get(k)
            .and_then(Value::as_f64)
            .ok_or_else(|| perr(format!("missing number `{k}`")))
    };
    let get_str = |k: &str| -> Result<&str> {
        obj.get(k)
            .and_then(Value::as_str)
            .ok_or_else(|| perr(format!("missing string `{k}`")))
    };

    let mut quad: Vec<(usize, usize, f64)> = Vec::new();
    let mut lin: Vec<(usize, f64)> = Vec::new();
    let mut beta: Vec<(usize, f64)> = Vec::new();
    let mut gamma: Vec<(usize, f64)> = Vec::new();
    let mut nu: Vec<(usize, f64)> = Vec::new();
    let mut lambda = Vec::new();
    let mut eta = Vec::new();
    for (key, val) in obj {
        let (name, toks) = split_key(key).ok_or_else(|| perr(format!("malformed key `{key}`")))?;
        if toks.is_empty() {
            continue;
        }
        let x = val
            .as_f64()
            .ok_or_else(|| perr(format!("`{key}` is not a number")))?;
        match (name, toks.as_slice()) {
            ("P", [a, b]) => quad.push((index(a)?, index(b)?, x)),
            ("p", [a]) => lin.push((index(a)?, x)),
            ("beta", [a]) => beta.push((index(a)?, x)),
            ("gamma", [a]) => gamma.push((index(a)?, x)),
            ("nu", [a]) => nu.push((index(a)?, x)),
            ("lambda", [i, j]) | ("eta", [i, j]) => {
                let ij: (Idx, Idx) = (i.parse()?, j.parse()?);
                if name == "lambda" {
                    lambda.push((ij, x));
                } else {
                    eta.push((ij, x));
                }
            }
            _ => return Err(perr(format!("unknown key `{key}`"))),
        }
    }
    fn dense(entries: &mut [(usize, f64)], what: &str) -> Result<Vec<f64>> {
        entries.sort_by_key(|e| e.0);
        for (k, e) in entries.iter().enumerate() {
            if e.0 != k {
                return Err(perr(format!("{what} entries are not contiguous")));
            }
        }
        Ok(entries.iter().map(|e| e.1).collect())
    }

    let n = quad.iter().map(|e| e.1 + 1).max().unwrap_or(0);
    let mut p_mat = DMatrix::zeros(n, n);
    let mut seen = DMatrix::from_element(n, n, false);
    for &(a, b, x) in &quad {
        if a > b {
            return Err(perr(format!("P[{a}][{b}] is below the diagonal")));
        }
        p_mat[(a, b)] = x;
        p_mat[(b, a)] = x;
        seen[(a, b)] = true;
    }
    if (0..n).any(|b| (0..=b).any(|a| !seen[(a, b)])) {
        return Err(perr("P upper triangle incomplete"));
    }

    let class = FunctionClass::new(get_num("mu")?, get_num("L")?)?;
    let analysis = match get_str("problem")? {
        "fixed-step" => {
            let degree = obj
                .get("N")
                .and_then(Value::as_u64)
                .ok_or_else(|| perr("missing `N`"))? as usize;
            let beta = dense(&mut beta, "beta")?;
            let gamma = dense(&mut gamma, "gamma")?;
            if beta.len() != degree + 1 {
                return Err(perr("beta length does not match N"));
            }
            let spec = MethodSpec::new(get_num("alpha")?, beta, gamma)?;
            let mode: RestrictionMode = get_str("restrict")?.parse()?;
            Analysis::FixedStep { spec, mode }
        }
        "els-gd" => Analysis::ExactLineSearch,
        "els-hbm" => Analysis::SubspaceSearch,
        "restart" => Analysis::Restart {
            inner: obj
                .get("restart_n")
                .and_then(Value::as_u64)
                .ok_or_else(|| perr("missing `restart_n`"))? as usize,
        },
        "custom" => Analysis::Custom,
        other => return Err(perr(format!("unknown problem kind `{other}`"))),
    };
    let decrease_power = match analysis {
        Analysis::Restart { inner } => inner as u32,
        _ => 1,
    };
    let cert = LyapunovCertificate {
        rho: get_num("rho")?,
        decrease_power,
        class,
        p_mat,
        p_vec: DVector::from_vec(dense(&mut lin, "p")?),
        lambda,
        eta,
        nu: dense(&mut nu, "nu")?,
        margin: get_num("margin")?,
        solver: get_str("solver")?.to_string(),
    };
    Ok((cert, analysis))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (LyapunovCertificate, Analysis) {
        let cert = LyapunovCertificate {
            rho: 0.9,
            decrease_power: 1,
            class: FunctionClass::new(1.0, 10.0).unwrap(),
            p_mat: DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, -0.1, -0.1, 2e-17]),
            p_vec: DVector::from_element(1, 0.7),
            lambda: vec![((Idx::At(0), Idx::Star), 0.25), ((Idx::Star, Idx::At(0)), 0.0)],
            eta: vec![((Idx::At(1), Idx::At(0)), 1.0 / 7.0)],
            nu: vec![],
            margin: 1e-3,
            solver: "clarabel".into(),
        };
        let analysis = Analysis::FixedStep {
            spec: MethodSpec::gradient_method(0.1),
            mode: RestrictionMode::Unrestricted,
        };
        (cert, analysis)
    }

    #[test]
    fn round_trip_is_exact() {
        let (cert, analysis) = sample();
        let text = serialize_certificate(&cert, &analysis);
        assert!(text.contains("\"lambda[0][star]\""));
        assert!(text.contains("\"P[0][1]\""));
        let (back, a2) = parse_certificate(&text).unwrap();
        assert_eq!(a2, analysis);
        assert_eq!(back.p_mat, cert.p_mat);
        assert_eq!(back.p_vec, cert.p_vec);
        assert_eq!(back.eta, cert.eta);
        assert_eq!(back.margin, cert.margin);
        let mut l1 = back.lambda.clone();
        let mut l2 = cert.lambda.clone();
        l1.sort_by_key(|a| a.0);
        l2.sort_by_key(|a| a.0);
        assert_eq!(l1, l2);
    }

    #[test]
    fn restart_metadata_round_trips() {
        let (mut cert, _) = sample();
        cert.nu = vec![0.5, -2.0];
        cert.decrease_power = 7;
        let text = serialize_certificate(&cert, &Analysis::Restart { inner: 7 });
        let (back, a) = parse_certificate(&text).unwrap();
        assert_eq!(a, Analysis::Restart { inner: 7 });
        assert_eq!(back.nu, cert.nu);
        assert_eq!(back.decrease_power, 7);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_certificate("{").is_err());
        assert!(parse_certificate("[1, 2]").is_err());
        let (cert, analysis) = sample();
        let text = serialize_certificate(&cert, &analysis).replace("\"P[0][1]\"", "\"P[1][0]\"");
        assert!(parse_certificate(&text).is_err());
        let text = serialize_certificate(&cert, &analysis).replace("\"p[0]\"", "\"q[0]\"");
        assert!(parse_certificate(&text).is_err());
    }

    #[test]
    fn key_splitting() {
        assert_eq!(split_key("eta[star][2]"), Some(("eta", vec!["star", "2"])));
        assert_eq!(split_key("rho"), Some(("rho", vec![])));
        assert_eq!(split_key("P[1"), None);
    }
}
