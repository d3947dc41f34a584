//! Coordinate-free row-vector bases for iterates, gradients and function
//! values, and the symbolic roll-out of a method on them.
//!
//! Every quantity of a trajectory of length `K` is a linear combination of
//! the initial iterates `x_{-N} .. x_0` (shifted by `x_star`) and the
//! gradients `g_0 .. g_K`. A row `xbar[k]` of length `N + K + 2` holds the
//! coefficients of `x_k - x_star` in that basis; function values live in a
//! separate basis of length `K + 1`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::MethodSpec;

/// Coefficient row over a basis. Stored as a column vector.
pub type Row = DVector<f64>;

/// An element of the index set `{0, .., K, star}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Idx {
    At(usize),
    Star,
}

impl fmt::Display for Idx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Idx::At(k) => write!(f, "{k}"),
            Idx::Star => f.write_str("star"),
        }
    }
}

impl std::str::FromStr for Idx {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "star" {
            return Ok(Idx::Star);
        }
        s.parse::<usize>().map(Idx::At).map_err(|e| Error::Parse {
            what: "index",
            detail: format!("`{s}`: {e}"),
        })
    }
}

/// `e_i` (one-based) of length `n`.
pub fn unit_row(n: usize, i: usize) -> Row {
    let mut r = Row::zeros(n);
    r[i - 1] = 1.0;
    r
}

/// Symbolic bases for one horizon.
///
/// `xbar` is keyed by iteration (`-N ..= K + 1`); for the standard
/// construction `xbar[K + 1]` is always filled by [`roll_method`] since the
/// decrease condition at the horizon needs it.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisWorkspace {
    degree: usize,
    horizon: usize,
    width: usize,
    fwidth: usize,
    xbar: BTreeMap<i64, Row>,
    ybar: Vec<Option<Row>>,
    gbar: Vec<Row>,
    fbar: Vec<Row>,
}

/// Unit-row initialization for a degree-`n` method over horizon `k`.
pub fn build_basis(n: usize, k: usize) -> BasisWorkspace {
    let width = n + k + 2;
    let mut xbar = BTreeMap::new();
    for i in -(n as i64)..=0 {
        xbar.insert(i, unit_row(width, (i + n as i64 + 1) as usize));
    }
    BasisWorkspace {
        degree: n,
        horizon: k,
        width,
        fwidth: k + 1,
        xbar,
        ybar: vec![None; k + 1],
        gbar: (0..=k).map(|i| unit_row(width, i + n + 2)).collect(),
        fbar: (0..=k).map(|i| unit_row(k + 1, i + 1)).collect(),
    }
}

/// Fills `ybar[k]` and `xbar[k + 1]` for `k = 0 ..= K` by the method
/// recursion.
pub fn roll_method(spec: &MethodSpec, ws: &BasisWorkspace) -> Result<BasisWorkspace> {
    if spec.degree() != ws.degree {
        return Err(Error::DegreeMismatch {
            spec: spec.degree(),
            workspace: ws.degree,
        });
    }
    let mut out = ws.clone();
    for k in 0..=ws.horizon as i64 {
        let mut y = Row::zeros(ws.width);
        let mut x = Row::zeros(ws.width);
        for j in 0..=ws.degree {
            let prev = out.xbar(k - j as i64)?;
            y.axpy(spec.gamma()[j], prev, 1.0);
            x.axpy(spec.beta()[j], prev, 1.0);
        }
        x.axpy(-spec.alpha(), &out.gbar[k as usize], 1.0);
        out.ybar[k as usize] = Some(y);
        out.xbar.insert(k + 1, x);
    }
    Ok(out)
}

impl BasisWorkspace {
    /// An empty workspace for bases that do not follow the fixed-step
    /// construction (line searches, restarts). Rows are set explicitly.
    pub fn custom(degree: usize, horizon: usize, width: usize, fwidth: usize) -> Self {
        Self {
            degree,
            horizon,
            width,
            fwidth,
            xbar: BTreeMap::new(),
            ybar: vec![None; horizon + 1],
            gbar: vec![Row::zeros(width); horizon + 1],
            fbar: vec![Row::zeros(fwidth); horizon + 1],
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Length of iterate and gradient rows.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Length of function-value rows.
    pub fn fwidth(&self) -> usize {
        self.fwidth
    }

    /// `{0, .., K, star}`.
    pub fn index_set(&self) -> Vec<Idx> {
        (0..=self.horizon)
            .map(Idx::At)
            .chain(std::iter::once(Idx::Star))
            .collect()
    }

    pub fn is_rolled(&self) -> bool {
        self.ybar.iter().all(Option::is_some)
    }

    pub fn xbar(&self, k: i64) -> Result<&Row> {
        self.xbar.get(&k).ok_or(Error::IndexOutOfRange {
            index: k,
            what: "xbar row not populated",
        })
    }

    pub fn ybar(&self, i: Idx) -> Result<Row> {
        match i {
            Idx::Star => Ok(Row::zeros(self.width)),
            Idx::At(k) => self
                .ybar
                .get(k)
                .and_then(|r| r.clone())
                .ok_or(Error::IndexOutOfRange {
                    index: k as i64,
                    what: "ybar row not populated",
                }),
        }
    }

    pub fn gbar(&self, i: Idx) -> Result<Row> {
        match i {
            Idx::Star => Ok(Row::zeros(self.width)),
            Idx::At(k) => self.gbar.get(k).cloned().ok_or(Error::IndexOutOfRange {
                index: k as i64,
                what: "gbar beyond horizon",
            }),
        }
    }

    pub fn fbar(&self, i: Idx) -> Result<Row> {
        match i {
            Idx::Star => Ok(Row::zeros(self.fwidth)),
            Idx::At(k) => self.fbar.get(k).cloned().ok_or(Error::IndexOutOfRange {
                index: k as i64,
                what: "fbar beyond horizon",
            }),
        }
    }

    pub fn set_x(&mut self, k: i64, row: Row) {
        assert_eq!(row.len(), self.width);
        self.xbar.insert(k, row);
    }

    pub fn set_y(&mut self, k: usize, row: Row) {
        assert_eq!(row.len(), self.width);
        self.ybar[k] = Some(row);
    }

    pub fn set_g(&mut self, k: usize, row: Row) {
        assert_eq!(row.len(), self.width);
        self.gbar[k] = row;
    }

    pub fn set_f(&mut self, k: usize, row: Row) {
        assert_eq!(row.len(), self.fwidth);
        self.fbar[k] = row;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_preset, FunctionClass, Preset};

    fn row(v: &[f64]) -> Row {
        Row::from_column_slice(v)
    }

    #[test]
    fn basis_n0_k0() {
        let ws = build_basis(0, 0);
        assert_eq!(ws.xbar(0).unwrap(), &row(&[1.0, 0.0]));
        assert_eq!(ws.gbar(Idx::At(0)).unwrap(), row(&[0.0, 1.0]));
        assert_eq!(ws.fbar(Idx::At(0)).unwrap(), row(&[1.0]));
        assert!(!ws.is_rolled());
    }

    #[test]
    fn basis_n1_k2() {
        let ws = build_basis(1, 2);
        assert_eq!(ws.width(), 5);
        assert_eq!(ws.xbar(-1).unwrap(), &unit_row(5, 1));
        assert_eq!(ws.xbar(0).unwrap(), &unit_row(5, 2));
        assert_eq!(ws.gbar(Idx::At(0)).unwrap(), unit_row(5, 3));
        assert_eq!(ws.gbar(Idx::At(2)).unwrap(), unit_row(5, 5));
        assert!(ws.xbar(1).is_err());
        assert!(ws.ybar(Idx::At(0)).is_err());
    }

    #[test]
    fn star_rows_are_zero() {
        let ws = build_basis(2, 3);
        assert_eq!(ws.ybar(Idx::Star).unwrap(), Row::zeros(7));
        assert_eq!(ws.gbar(Idx::Star).unwrap(), Row::zeros(7));
        assert_eq!(ws.fbar(Idx::Star).unwrap(), Row::zeros(4));
        assert_eq!(ws.index_set().last(), Some(&Idx::Star));
    }

    #[test]
    fn gm_one_step_by_hand() {
        let alpha = 0.37;
        let spec = MethodSpec::gradient_method(alpha);
        let ws = roll_method(&spec, &build_basis(0, 1)).unwrap();
        assert_eq!(ws.ybar(Idx::At(0)).unwrap(), row(&[1.0, 0.0, 0.0]));
        assert_eq!(ws.xbar(1).unwrap(), &row(&[1.0, -alpha, 0.0]));
        assert_eq!(ws.ybar(Idx::At(1)).unwrap(), row(&[1.0, -alpha, 0.0]));
        assert_eq!(ws.xbar(2).unwrap(), &row(&[1.0, -alpha, -alpha]));
    }

    #[test]
    fn unit_gamma_selects_current_iterate() {
        let spec = MethodSpec::new(0.2, vec![1.3, -0.3], vec![1.0, 0.0]).unwrap();
        let ws = roll_method(&spec, &build_basis(1, 2)).unwrap();
        for k in 0..=2 {
            assert_eq!(&ws.ybar(Idx::At(k)).unwrap(), ws.xbar(k as i64).unwrap());
        }
    }

    #[test]
    fn fgm_xbar2_support() {
        let c = FunctionClass::new(1.0, 10.0).unwrap();
        let spec = make_preset(Preset::Fgm, &c);
        let ws = roll_method(&spec, &build_basis(1, 2)).unwrap();
        let x2 = ws.xbar(2).unwrap();
        assert_eq!(x2[4], 0.0);
        assert!(x2.iter().take(4).all(|v| *v != 0.0));
    }

    #[test]
    fn degree_mismatch_rejected() {
        let spec = MethodSpec::gradient_method(1.0);
        assert!(matches!(
            roll_method(&spec, &build_basis(1, 1)),
            Err(Error::DegreeMismatch { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_spec(n: usize) -> impl Strategy<Value = MethodSpec> {
            (
                0.05f64..2.0,
                prop::collection::vec(-1.0f64..1.0, n),
                prop::collection::vec(-1.0f64..1.0, n),
            )
                .prop_map(move |(a, mut b, mut g)| {
                    let sb: f64 = b.iter().sum();
                    let sg: f64 = g.iter().sum();
                    b.insert(0, 1.0 - sb);
                    g.insert(0, 1.0 - sg);
                    if g[0] == 0.0 {
                        g[0] = 1.0;
                        g[1] -= 1.0;
                    }
                    MethodSpec::from_raw(a, b, g)
                })
        }

        proptest! {
            #[test]
            fn rollout_is_causal(spec in (0usize..3).prop_flat_map(arb_spec), k in 0usize..4) {
                let n = spec.degree();
                let ws = roll_method(&spec, &build_basis(n, k)).unwrap();
                for step in 0..=k {
                    let y = ws.ybar(Idx::At(step)).unwrap();
                    let x = ws.xbar(step as i64 + 1).unwrap();
                    for later in step + 1..=k {
                        let coord = n + 2 + later - 1;
                        prop_assert_eq!(y[coord], 0.0);
                        prop_assert_eq!(x[coord], 0.0);
                    }
                }
            }

            #[test]
            fn rollout_is_linear_in_beta_and_alpha(
                a in arb_spec(1),
                b in arb_spec(1),
                theta in 0.0f64..1.0,
            ) {
                // share gamma so that the recursion is affine in (alpha, beta)
                let b = MethodSpec::from_raw(b.alpha(), b.beta().to_vec(), a.gamma().to_vec());
                let mix = MethodSpec::from_raw(
                    theta * a.alpha() + (1.0 - theta) * b.alpha(),
                    a.beta().iter().zip(b.beta()).map(|(p, q)| theta * p + (1.0 - theta) * q).collect(),
                    a.gamma().to_vec(),
                );
                let k = 0;
                let wa = roll_method(&a, &build_basis(1, k)).unwrap();
                let wb = roll_method(&b, &build_basis(1, k)).unwrap();
                let wm = roll_method(&mix, &build_basis(1, k)).unwrap();
                let x = wm.xbar(1).unwrap();
                let expect = wa.xbar(1).unwrap() * theta + wb.xbar(1).unwrap() * (1.0 - theta);
                prop_assert!((x - expect).amax() < 1e-12);
            }
        }
    }
}
