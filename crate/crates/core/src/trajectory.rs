//! Concrete trajectories of a method on a given function.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::MethodSpec;

/// Iterates, probe points, gradients and function values of one run.
///
/// `x` holds `x_{-N} ..= x_T`, while `y`, `g` and `f` hold indices
/// `0 ..= T - 1` (one gradient evaluation per step).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    degree: usize,
    x: Vec<DVector<f64>>,
    y: Vec<DVector<f64>>,
    g: Vec<DVector<f64>>,
    f: Vec<f64>,
    x_star: DVector<f64>,
    f_star: f64,
}

/// The state `(x_k, .., x_{k-N}; g_k, .., g_{k-N}; f_k, .., f_{k-N})`, all
/// shifted by the optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovState {
    pub x: Vec<DVector<f64>>,
    pub g: Vec<DVector<f64>>,
    pub f: Vec<f64>,
}

impl LyapunovState {
    /// `[x; g]^T (P (x) I_d) [x; g] + p^T f`.
    pub fn energy(&self, p_mat: &DMatrix<f64>, p_vec: &DVector<f64>) -> f64 {
        let z: Vec<&DVector<f64>> = self.x.iter().chain(self.g.iter()).collect();
        assert_eq!(p_mat.nrows(), z.len(), "state size does not match P");
        assert_eq!(p_vec.len(), self.f.len(), "state size does not match p");
        let mut quad = 0.0;
        for a in 0..z.len() {
            for b in 0..z.len() {
                let w = p_mat[(a, b)];
                if w != 0.0 {
                    quad += w * z[a].dot(z[b]);
                }
            }
        }
        quad + p_vec.iter().zip(&self.f).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Sum of the magnitudes of the terms in `energy`; the natural scale for
    /// rounding errors in it.
    pub fn energy_scale(&self, p_mat: &DMatrix<f64>, p_vec: &DVector<f64>) -> f64 {
        let z: Vec<f64> = self.x.iter().chain(self.g.iter()).map(|v| v.norm()).collect();
        let mut quad = 0.0;
        for a in 0..z.len() {
            for b in 0..z.len() {
                quad += p_mat[(a, b)].abs() * z[a] * z[b];
            }
        }
        quad + p_vec.iter().zip(&self.f).map(|(a, b)| (a * b).abs()).sum::<f64>()
    }
}

impl Trajectory {
    /// Assembles a trajectory from raw parts. `x` must have
    /// `degree + y.len() + 1` entries.
    pub fn from_parts(
        degree: usize,
        x: Vec<DVector<f64>>,
        y: Vec<DVector<f64>>,
        g: Vec<DVector<f64>>,
        f: Vec<f64>,
        x_star: DVector<f64>,
        f_star: f64,
    ) -> Result<Self> {
        let steps = y.len();
        if g.len() != steps || f.len() != steps || x.len() != degree + steps + 1 {
            return Err(Error::DimensionMismatch(format!(
                "trajectory lengths x={}, y={}, g={}, f={} inconsistent with degree {degree}",
                x.len(),
                y.len(),
                g.len(),
                f.len()
            )));
        }
        let d = x_star.len();
        if x.iter().chain(&y).chain(&g).any(|v| v.len() != d) {
            return Err(Error::DimensionMismatch(
                "trajectory vectors do not share one dimension".into(),
            ));
        }
        Ok(Self {
            degree,
            x,
            y,
            g,
            f,
            x_star,
            f_star,
        })
    }

    /// A run that sits at the optimum for `steps` steps.
    pub fn constant_at_optimum(
        degree: usize,
        steps: usize,
        x_star: DVector<f64>,
        f_star: f64,
    ) -> Self {
        let d = x_star.len();
        Self {
            degree,
            x: vec![x_star.clone(); degree + steps + 1],
            y: vec![x_star.clone(); steps],
            g: vec![DVector::zeros(d); steps],
            f: vec![f_star; steps],
            x_star,
            f_star,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    /// Number of gradient evaluations.
    pub fn steps(&self) -> usize {
        self.y.len()
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    /// `x_k` for `k in -N ..= T`.
    pub fn x(&self, k: i64) -> &DVector<f64> {
        &self.x[(k + self.degree as i64) as usize]
    }

    pub fn y(&self, k: usize) -> &DVector<f64> {
        &self.y[k]
    }

    pub fn g(&self, k: usize) -> &DVector<f64> {
        &self.g[k]
    }

    pub fn f(&self, k: usize) -> f64 {
        self.f[k]
    }

    /// Largest violation of the method recursion along the run.
    pub fn recursion_residual(&self, spec: &MethodSpec) -> Result<f64> {
        if spec.degree() != self.degree {
            return Err(Error::DegreeMismatch {
                spec: spec.degree(),
                workspace: self.degree,
            });
        }
        let mut worst: f64 = 0.0;
        for k in 0..self.steps() as i64 {
            let mut y = DVector::zeros(self.dim());
            let mut x = -spec.alpha() * self.g(k as usize);
            for j in 0..=self.degree {
                y.axpy(spec.gamma()[j], self.x(k - j as i64), 1.0);
                x.axpy(spec.beta()[j], self.x(k - j as i64), 1.0);
            }
            worst = worst
                .max((y - self.y(k as usize)).amax())
                .max((x - self.x(k + 1)).amax());
        }
        Ok(worst)
    }

    /// Lyapunov state at iteration `k` using a memory of `memory` past
    /// iterates (normally the method degree). Needs `memory <= k < steps`.
    pub fn state(&self, k: usize, memory: usize) -> LyapunovState {
        assert!(k >= memory && k < self.steps(), "state index out of range");
        let xs = (0..=memory)
            .map(|j| self.x((k - j) as i64) - &self.x_star)
            .collect();
        let gs = (0..=memory).map(|j| self.g(k - j).clone()).collect();
        let fs = (0..=memory).map(|j| self.f(k - j) - self.f_star).collect();
        LyapunovState { x: xs, g: gs, f: fs }
    }

    /// Stacked `(x_{-N} .. x_0, g_0 .. g_K)` as the columns of a `d x (N+K+2)`
    /// matrix, together with `f_0 - f_star .. f_K - f_star`.
    pub fn stacked(&self, horizon: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
        if horizon >= self.steps() {
            return Err(Error::IndexOutOfRange {
                index: horizon as i64,
                what: "horizon beyond trajectory length",
            });
        }
        let n = self.degree;
        let d = self.dim();
        let mut b = DMatrix::zeros(d, n + horizon + 2);
        for (c, k) in (-(n as i64)..=0).enumerate() {
            b.set_column(c, &(self.x(k) - &self.x_star));
        }
        for k in 0..=horizon {
            b.set_column(n + 1 + k, self.g(k));
        }
        let f = DVector::from_iterator(
            horizon + 1,
            (0..=horizon).map(|k| self.f(k) - self.f_star),
        );
        Ok((b, f))
    }
}
