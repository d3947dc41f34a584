//! Interpolation conditions for smooth strongly convex functions.
//!
//! A finite set of triples `(y_i, g_i, f_i)` is consistent with some
//! function in the class iff `phi_ij >= 0` for every ordered pair, where
//!
//! ```text
//! phi_ij = (L - mu)(f_i - f_j) + 1/2 v^T (M (x) I_d) v,   v = (y_i, y_j, g_i, g_j)
//! ```
//!
//! The factor 1/2 is applied uniformly here and in the symbolic pairs so
//! that the quadratic-form identity between the two holds exactly.

use nalgebra::{DMatrix, DVector, Matrix4};

use crate::error::{Error, Result};
use crate::model::FunctionClass;
use crate::symbolic::{BasisWorkspace, Idx, Row};

/// The 4x4 kernel in block order `(y_i, y_j, g_i, g_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpKernel {
    m: Matrix4<f64>,
}

impl InterpKernel {
    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }
}

pub fn interpolation_kernel(class: &FunctionClass) -> InterpKernel {
    let (mu, l) = (class.mu(), class.l());
    let ml = mu * l;
    #[rustfmt::skip]
    let m = Matrix4::new(
        -ml,  ml,  mu,  -l,
         ml, -ml, -mu,   l,
         mu, -mu, -1.0, 1.0,
         -l,   l,  1.0, -1.0,
    );
    InterpKernel { m }
}

/// Symbolic pair `(M_ij, m_ij)` such that
/// `phi_ij = [x; g]^T (M_ij (x) I_d) [x; g] + m_ij^T f`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpPair {
    pub i: Idx,
    pub j: Idx,
    pub mat: DMatrix<f64>,
    pub lin: DVector<f64>,
}

pub fn interpolation_pair(
    ws: &BasisWorkspace,
    kernel: &InterpKernel,
    class: &FunctionClass,
    i: Idx,
    j: Idx,
) -> Result<InterpPair> {
    if i == j {
        return Err(Error::DiagonalPair(i.to_string()));
    }
    let rows: [Row; 4] = [ws.ybar(i)?, ws.ybar(j)?, ws.gbar(i)?, ws.gbar(j)?];
    let mut s = DMatrix::zeros(4, ws.width());
    for (r, row) in rows.iter().enumerate() {
        s.set_row(r, &row.transpose());
    }
    let km = DMatrix::from_iterator(4, 4, kernel.matrix().iter().copied());
    let raw = s.transpose() * km * &s * 0.5;
    let mat = (&raw + raw.transpose()) * 0.5;
    let lin = (ws.fbar(i)? - ws.fbar(j)?) * (class.l() - class.mu());
    Ok(InterpPair { i, j, mat, lin })
}

/// All ordered pairs `(i, j)`, `i != j`, of an index set.
pub fn ordered_pairs(indices: &[Idx]) -> Vec<(Idx, Idx)> {
    let mut out = Vec::with_capacity(indices.len() * indices.len().saturating_sub(1));
    for &i in indices {
        for &j in indices {
            if i != j {
                out.push((i, j));
            }
        }
    }
    out
}

/// Every off-diagonal pair over the workspace's index set.
pub fn all_pairs(
    ws: &BasisWorkspace,
    class: &FunctionClass,
) -> Result<Vec<InterpPair>> {
    let kernel = interpolation_kernel(class);
    ordered_pairs(&ws.index_set())
        .into_iter()
        .map(|(i, j)| interpolation_pair(ws, &kernel, class, i, j))
        .collect()
}

/// A sampled point with its gradient and function value.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint {
    pub y: DVector<f64>,
    pub g: DVector<f64>,
    pub f: f64,
}

impl SamplePoint {
    pub fn new(y: DVector<f64>, g: DVector<f64>, f: f64) -> Self {
        Self { y, g, f }
    }
}

pub fn phi_value(points: &[SamplePoint], class: &FunctionClass, i: usize, j: usize) -> Result<f64> {
    let (a, b) = match (points.get(i), points.get(j)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::IndexOutOfRange {
                index: i.max(j) as i64,
                what: "sample point",
            })
        }
    };
    let d = a.y.len();
    if a.g.len() != d || b.y.len() != d || b.g.len() != d {
        return Err(Error::DimensionMismatch(
            "sample points do not share one dimension".into(),
        ));
    }
    let m = interpolation_kernel(class).m;
    let blocks = [&a.y, &b.y, &a.g, &b.g];
    let mut quad = 0.0;
    for r in 0..4 {
        for c in 0..4 {
            if m[(r, c)] != 0.0 {
                quad += m[(r, c)] * blocks[r].dot(blocks[c]);
            }
        }
    }
    Ok((class.l() - class.mu()) * (a.f - b.f) + 0.5 * quad)
}

/// True iff `phi_ij >= -tol` for every ordered pair.
pub fn interpolable(points: &[SamplePoint], class: &FunctionClass, tol: f64) -> bool {
    for i in 0..points.len() {
        for j in 0..points.len() {
            if i == j {
                continue;
            }
            match phi_value(points, class, i, j) {
                Ok(v) if v >= -tol => {}
                _ => return false,
            }
        }
    }
    true
}
