//! Worst rate over quadratics, from the per-eigenvalue companion recursion.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{FunctionClass, MethodSpec};

/// Spectral radius of the scalar recursion
/// `x_{k+1} = sum_j (beta_j - alpha h gamma_j) x_{k-j}`.
pub fn spectral_radius_at(spec: &MethodSpec, h: f64) -> f64 {
    let n = spec.degree();
    let coeff: Vec<f64> = (0..=n)
        .map(|j| spec.beta()[j] - spec.alpha() * h * spec.gamma()[j])
        .collect();
    if n == 0 {
        return coeff[0].abs();
    }
    let mut c = DMatrix::zeros(n + 1, n + 1);
    for j in 0..=n {
        c[(0, j)] = coeff[j];
    }
    for i in 1..=n {
        c[(i, i - 1)] = 1.0;
    }
    c.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Maximum spectral radius over `h in [mu, L]`: a log-spaced grid followed by
/// golden-section refinement around the best grid point.
pub fn quadratic_worst_rate(spec: &MethodSpec, class: &FunctionClass, grid_size: usize) -> Result<f64> {
    if grid_size < 2 {
        return Err(Error::InvalidArgument("grid needs at least two points".into()));
    }
    let (mu, l) = (class.mu(), class.l());
    if mu == l {
        return Ok(spectral_radius_at(spec, mu));
    }
    let (lo, hi) = (mu.ln(), l.ln());
    let grid: Vec<f64> = (0..grid_size)
        .map(|i| {
            if i == 0 {
                mu
            } else if i + 1 == grid_size {
                l
            } else {
                (lo + (hi - lo) * i as f64 / (grid_size - 1) as f64).exp()
            }
        })
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&h| spectral_radius_at(spec, h)).collect();
    let (best_i, &best) = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid nonempty");
    let mut a = grid[best_i.saturating_sub(1)];
    let mut b = grid[(best_i + 1).min(grid_size - 1)];
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (spectral_radius_at(spec, c), spectral_radius_at(spec, d));
    let mut refined = best;
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = spectral_radius_at(spec, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = spectral_radius_at(spec, d);
        }
        refined = refined.max(fc).max(fd);
    }
    Ok(best.max(refined))
}
