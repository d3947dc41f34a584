//! Concrete members of the function class used to exercise certificates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::FunctionClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunctionKind {
    /// `1/2 (x - c)^T H (x - c) + f_star` with spectrum of `H` in `[mu, L]`.
    Quadratic,
    /// `lse(A x + b) + mu/2 |x|^2` with `|A|_2^2 = L - mu`; the softmax
    /// covariance is bounded by the identity, so the Hessian lies in
    /// `[mu, L]`.
    LogSumExp,
    /// The rescaled tridiagonal quadratic with `x_star = 0`.
    SlaterTridiagonal,
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Quadratic { h: DMatrix<f64> },
    LogSumExp { a: DMatrix<f64>, b: DVector<f64>, mu: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    kind: TestFunctionKind,
    class: FunctionClass,
    body: Body,
    x_star: DVector<f64>,
    f_star: f64,
}

/// Haar-distributed orthogonal matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn random_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

fn log_sum_exp(z: &DVector<f64>) -> (f64, DVector<f64>) {
    let m = z.max();
    let e = z.map(|v| (v - m).exp());
    let s = e.sum();
    (m + s.ln(), e / s)
}

impl TestFunction {
    /// `1/2 x^T H x` after checking the spectrum against the class.
    pub fn quadratic(h: DMatrix<f64>, class: &FunctionClass) -> Result<Self> {
        let d = h.nrows();
        if h.ncols() != d {
            return Err(Error::DimensionMismatch("Hessian must be square".into()));
        }
        let h = (&h + h.transpose()) * 0.5;
        let ev = SymmetricEigen::new(h.clone()).eigenvalues;
        let slack = 1e-9 * class.l();
        if ev.min() < class.mu() - slack || ev.max() > class.l() + slack {
            return Err(Error::InvalidArgument(format!(
                "spectrum [{}, {}] outside [{}, {}]",
                ev.min(),
                ev.max(),
                class.mu(),
                class.l()
            )));
        }
        Ok(Self {
            kind: TestFunctionKind::Quadratic,
            class: *class,
            body: Body::Quadratic { h },
            x_star: DVector::zeros(d),
            f_star: 0.0,
        })
    }

    /// Quadratic `Q diag(s) Q^T` with `s` containing both `mu` and `L` and the
    /// rest uniform in between, a random minimizer and optimal value.
    pub fn random_quadratic<R: Rng + ?Sized>(class: &FunctionClass, d: usize, rng: &mut R) -> Self {
        assert!(d >= 2, "random quadratic needs d >= 2");
        let (mu, l) = (class.mu(), class.l());
        let mut spec: Vec<f64> = (0..d).map(|_| rng.random_range(mu..=l)).collect();
        spec[0] = mu;
        spec[1] = l;
        let q = random_orthogonal(d, rng);
        let h = &q * DMatrix::from_diagonal(&DVector::from_vec(spec)) * q.transpose();
        let h = (&h + h.transpose()) * 0.5;
        Self {
            kind: TestFunctionKind::Quadratic,
            class: *class,
            body: Body::Quadratic { h },
            x_star: random_vector(d, rng),
            f_star: rng.random_range(-1.0..1.0),
        }
    }

    /// Regularized log-sum-exp with `m` random affine pieces in `R^d`.
    pub fn log_sum_exp<R: Rng + ?Sized>(class: &FunctionClass, d: usize, m: usize, rng: &mut R) -> Self {
        let (mu, l) = (class.mu(), class.l());
        let mut a = DMatrix::from_fn(m, d, |_, _| StandardNormal.sample(rng));
        let norm = a.clone().svd(false, false).singular_values.max();
        if l > mu && norm > 0.0 {
            a *= (l - mu).sqrt() / norm;
        } else {
            a.fill(0.0);
        }
        let b = random_vector(m, rng);
        let mut f = Self {
            kind: TestFunctionKind::LogSumExp,
            class: *class,
            body: Body::LogSumExp { a, b, mu },
            x_star: DVector::zeros(d),
            f_star: 0.0,
        };
        f.x_star = f.newton_minimize(DVector::zeros(d));
        f.f_star = f.value(&f.x_star);
        f
    }

    /// The tridiagonal `2, 1` matrix of size `d`, mapped affinely onto
    /// `[mu, L]`.
    pub fn slater(class: &FunctionClass, d: usize) -> Self {
        let h = DMatrix::from_fn(d, d, |i, j| match i.abs_diff(j) {
            0 => 2.0,
            1 => 1.0,
            _ => 0.0,
        });
        let ev = SymmetricEigen::new(h.clone()).eigenvalues;
        let (lo, hi) = (ev.min(), ev.max());
        let (mu, l) = (class.mu(), class.l());
        let ht = if hi > lo {
            (h - DMatrix::identity(d, d) * lo) * ((l - mu) / (hi - lo)) + DMatrix::identity(d, d) * mu
        } else {
            DMatrix::identity(d, d) * mu
        };
        Self {
            kind: TestFunctionKind::SlaterTridiagonal,
            class: *class,
            body: Body::Quadratic { h: ht },
            x_star: DVector::zeros(d),
            f_star: 0.0,
        }
    }

    pub fn kind(&self) -> TestFunctionKind {
        self.kind
    }

    pub fn class(&self) -> &FunctionClass {
        &self.class
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match &self.body {
            Body::Quadratic { h } => {
                let e = x - &self.x_star;
                0.5 * e.dot(&(h * &e)) + self.f_star
            }
            Body::LogSumExp { a, b, mu } => {
                let (v, _) = log_sum_exp(&(a * x + b));
                v + 0.5 * mu * x.norm_squared()
            }
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.body {
            Body::Quadratic { h } => h * (x - &self.x_star),
            Body::LogSumExp { a, b, mu } => {
                let (_, s) = log_sum_exp(&(a * x + b));
                a.transpose() * s + x * *mu
            }
        }
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.body {
            Body::Quadratic { h } => h.clone(),
            Body::LogSumExp { a, b, mu } => {
                let (_, s) = log_sum_exp(&(a * x + b));
                let cov = DMatrix::from_diagonal(&s) - &s * s.transpose();
                a.transpose() * cov * a + DMatrix::identity(x.len(), x.len()) * *mu
            }
        }
    }

    fn newton_minimize(&self, mut x: DVector<f64>) -> DVector<f64> {
        for _ in 0..100 {
            let g = self.gradient(&x);
            if g.norm() < 1e-15 * (1.0 + x.norm()) * self.class.l() {
                break;
            }
            let step = self
                .hessian(&x)
                .cholesky()
                .map(|c| c.solve(&g))
                .unwrap_or_else(|| &g / self.class.l());
            let f0 = self.value(&x);
            let mut t = 1.0;
            loop {
                let cand = &x - &step * t;
                if self.value(&cand) <= f0 - 0.25 * t * g.dot(&step) || t < 1e-12 {
                    x = cand;
                    break;
                }
                t *= 0.5;
            }
        }
        x
    }

    /// Minimizes `s -> f(x + D s)` for the columns of `dirs` by damped Newton
    /// steps; returns the minimizing coefficients.
    pub fn subspace_argmin(&self, x: &DVector<f64>, dirs: &DMatrix<f64>) -> DVector<f64> {
        let m = dirs.ncols();
        let mut s = DVector::zeros(m);
        let scale = dirs.norm().max(f64::MIN_POSITIVE);
        for _ in 0..100 {
            let p = x + dirs * &s;
            let g = dirs.transpose() * self.gradient(&p);
            if g.norm() < 1e-14 * scale * (1.0 + self.gradient(&p).norm()) {
                break;
            }
            let h = dirs.transpose() * self.hessian(&p) * dirs;
            let step = h
                .clone()
                .svd(true, true)
                .solve(&g, 1e-14 * h.norm())
                .unwrap_or_else(|_| DVector::zeros(m));
            if step.norm() == 0.0 {
                break;
            }
            let f0 = self.value(&p);
            let mut t = 1.0;
            loop {
                let cand = &s - &step * t;
                if self.value(&(x + dirs * &cand)) <= f0 || t < 1e-12 {
                    s = cand;
                    break;
                }
                t *= 0.5;
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_quadratic_spectrum_has_endpoints() {
        let c = FunctionClass::new(1.0, 50.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = TestFunction::random_quadratic(&c, 6, &mut rng);
        let ev = SymmetricEigen::new(f.hessian(f.x_star())).eigenvalues;
        assert!((ev.min() - 1.0).abs() < 1e-10);
        assert!((ev.max() - 50.0).abs() < 1e-9);
        assert!(f.gradient(f.x_star()).norm() < 1e-12);
    }

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_orthogonal(5, &mut rng);
        assert!((q.transpose() * &q - DMatrix::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn lse_gradient_matches_differences() {
        let c = FunctionClass::new(0.5, 8.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = TestFunction::log_sum_exp(&c, 4, 6, &mut rng);
        let x = random_vector(4, &mut rng);
        let g = f.gradient(&x);
        let h = 1e-6;
        for i in 0..4 {
            let mut e = DVector::zeros(4);
            e[i] = h;
            let fd = (f.value(&(&x + &e)) - f.value(&(&x - &e))) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6);
        }
        assert!(f.gradient(f.x_star()).norm() < 1e-12);
    }

    #[test]
    fn lse_hessian_within_class() {
        let c = FunctionClass::new(0.5, 8.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = TestFunction::log_sum_exp(&c, 5, 7, &mut rng);
        for _ in 0..20 {
            let x = random_vector(5, &mut rng) * 3.0;
            let ev = SymmetricEigen::new(f.hessian(&x)).eigenvalues;
            assert!(ev.min() >= 0.5 - 1e-12);
            assert!(ev.max() <= 8.0 + 1e-12);
        }
    }

    #[test]
    fn slater_spectrum() {
        let c = FunctionClass::new(1.0, 10.0).unwrap();
        let f = TestFunction::slater(&c, 4);
        let ev = SymmetricEigen::new(f.hessian(f.x_star())).eigenvalues;
        assert!((ev.min() - 1.0).abs() < 1e-12);
        assert!((ev.max() - 10.0).abs() < 1e-12);
        // unscaled top eigenvalue 2 + 2 cos(pi / 5)
        let h = DMatrix::<f64>::from_fn(4, 4, |i, j| match i.abs_diff(j) {
            0 => 2.0,
            1 => 1.0,
            _ => 0.0,
        });
        let top = SymmetricEigen::new(h).eigenvalues.max();
        assert!((top - (2.0 + 2.0 * (std::f64::consts::PI / 5.0).cos())).abs() < 1e-12);
        assert!((top - 3.618).abs() < 1e-3);
    }

    #[test]
    fn quadratic_rejects_bad_spectrum() {
        let c = FunctionClass::new(1.0, 10.0).unwrap();
        assert!(TestFunction::quadratic(DMatrix::identity(2, 2) * 20.0, &c).is_err());
        assert!(TestFunction::quadratic(DMatrix::identity(2, 2) * 5.0, &c).is_ok());
    }

    #[test]
    fn subspace_argmin_on_quadratic() {
        let c = FunctionClass::new(1.0, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = TestFunction::random_quadratic(&c, 5, &mut rng);
        let x = random_vector(5, &mut rng);
        let g = f.gradient(&x);
        let s = f.subspace_argmin(&x, &DMatrix::from_columns(std::slice::from_ref(&g)));
        let alpha = g.norm_squared() / g.dot(&(f.hessian(&x) * &g));
        assert!((s[0] + alpha).abs() < 1e-12 * alpha.abs().max(1.0));
    }
}
