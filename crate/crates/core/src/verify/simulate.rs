//! Method roll-outs on concrete functions.

use nalgebra::{DMatrix, DVector};

use super::functions::TestFunction;
use crate::error::{Error, Result};
use crate::model::{FunctionClass, MethodSpec};
use crate::trajectory::Trajectory;
use crate::variants::RestartSchedule;

/// Runs `iters` steps of the method from `x_init = (x_{-N}, .., x_0)`.
pub fn simulate_method(
    spec: &MethodSpec,
    f: &TestFunction,
    x_init: &[DVector<f64>],
    iters: usize,
) -> Result<Trajectory> {
    let n = spec.degree();
    if x_init.len() != n + 1 {
        return Err(Error::DimensionMismatch(format!(
            "degree {n} method needs {} initial iterates, got {}",
            n + 1,
            x_init.len()
        )));
    }
    if x_init.iter().any(|x| x.len() != f.dim()) {
        return Err(Error::DimensionMismatch("initial iterate dimension".into()));
    }
    let mut x: Vec<DVector<f64>> = x_init.to_vec();
    let (mut ys, mut gs, mut fs) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..iters {
        // x[n + k] is x_k
        let mut y = DVector::zeros(f.dim());
        let mut next = DVector::zeros(f.dim());
        for j in 0..=n {
            let prev = &x[n + k - j];
            y.axpy(spec.gamma()[j], prev, 1.0);
            next.axpy(spec.beta()[j], prev, 1.0);
        }
        let g = f.gradient(&y);
        next.axpy(-spec.alpha(), &g, 1.0);
        fs.push(f.value(&y));
        ys.push(y);
        gs.push(g);
        x.push(next);
    }
    Trajectory::from_parts(n, x, ys, gs, fs, f.x_star().clone(), f.f_star())
}

/// Shared loop for searches over `x_k + span(dirs)`.
fn simulate_search<D>(
    f: &TestFunction,
    degree: usize,
    x_init: Vec<DVector<f64>>,
    iters: usize,
    dirs: D,
) -> Result<Trajectory>
where
    D: Fn(&[DVector<f64>], &DVector<f64>) -> DMatrix<f64>,
{
    let mut x = x_init;
    let (mut ys, mut gs, mut fs) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..iters {
        let cur = x.last().expect("nonempty").clone();
        let g = f.gradient(&cur);
        let d = dirs(&x, &g);
        let s = f.subspace_argmin(&cur, &d);
        fs.push(f.value(&cur));
        ys.push(cur.clone());
        gs.push(g);
        x.push(cur + d * s);
    }
    Trajectory::from_parts(degree, x, ys, gs, fs, f.x_star().clone(), f.f_star())
}

/// Steepest descent with exact line search.
pub fn simulate_els_gd(f: &TestFunction, x0: &DVector<f64>, iters: usize) -> Result<Trajectory> {
    simulate_search(f, 0, vec![x0.clone()], iters, |_, g| DMatrix::from_columns(std::slice::from_ref(g)))
}

/// Heavy-ball with exact search over `x_k + span(x_k - x_{k-1}, g_k)`.
pub fn simulate_els_hbm(
    f: &TestFunction,
    x_prev: &DVector<f64>,
    x0: &DVector<f64>,
    iters: usize,
) -> Result<Trajectory> {
    simulate_search(f, 1, vec![x_prev.clone(), x0.clone()], iters, |x, g| {
        let n = x.len();
        DMatrix::from_columns(&[&x[n - 1] - &x[n - 2], g.clone()])
    })
}

/// One inner loop from `y0`: returns `y^0 ..= y^N` and `g^0 ..= g^N`.
pub fn restart_cycle(
    f: &TestFunction,
    schedule: &RestartSchedule,
    l: f64,
    y0: &DVector<f64>,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let n = schedule.inner();
    let mut ys = vec![y0.clone()];
    let mut gs = vec![f.gradient(y0)];
    let mut z = y0.clone();
    for i in 0..n {
        let z_next = &ys[i] - &gs[i] / l;
        let y = &z_next + (&z_next - &z) * schedule.momentum(i);
        z = z_next;
        gs.push(f.gradient(&y));
        ys.push(y);
    }
    (ys, gs)
}

/// Restart points of `cycles` inner loops; `x_k` is the start of cycle `k`.
pub fn simulate_restart(
    f: &TestFunction,
    schedule: &RestartSchedule,
    l: f64,
    y0: &DVector<f64>,
    cycles: usize,
) -> Result<Trajectory> {
    let mut x = vec![y0.clone()];
    let (mut ys, mut gs, mut fs) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..cycles {
        let start = x.last().expect("nonempty").clone();
        let (inner, grads) = restart_cycle(f, schedule, l, &start);
        fs.push(f.value(&start));
        gs.push(grads[0].clone());
        ys.push(start);
        x.push(inner.last().expect("nonempty").clone());
    }
    Trajectory::from_parts(0, x, ys, gs, fs, f.x_star().clone(), f.f_star())
}

/// Run on the rescaled tridiagonal quadratic from `x_i = e_{N+1+i}`,
/// producing gradients `g_0 ..= g_K`.
pub fn slater_trajectory(
    spec: &MethodSpec,
    class: &FunctionClass,
    horizon: usize,
    d: usize,
) -> Result<Trajectory> {
    let n = spec.degree();
    if d < n + horizon + 2 {
        return Err(Error::InvalidArgument(format!(
            "dimension {d} below N + K + 2 = {}",
            n + horizon + 2
        )));
    }
    let spec = spec.clone().validate()?;
    let f = TestFunction::slater(class, d);
    let init: Vec<_> = (0..=n)
        .map(|i| {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            e
        })
        .collect();
    simulate_method(&spec, &f, &init, horizon + 1)
}

/// `B^T B` for the stacked matrix `B = (x_{-N} - x_star, .., g_K)`.
pub fn gram_matrix(traj: &Trajectory, horizon: usize) -> Result<DMatrix<f64>> {
    let (b, _) = traj.stacked(horizon)?;
    Ok(b.transpose() * b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_preset, Preset};
    use nalgebra::SymmetricEigen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gm_one_step_on_isotropic() {
        let c = FunctionClass::new(4.0, 4.0).unwrap();
        let f = TestFunction::quadratic(DMatrix::identity(3, 3) * 4.0, &c).unwrap();
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let t = simulate_method(&MethodSpec::gradient_method(0.25), &f, &[v], 1).unwrap();
        assert!(t.x(1).norm() < 1e-15);
    }

    #[test]
    fn gm_scalar_decay() {
        let c = FunctionClass::new(1.0, 10.0).unwrap();
        let f = TestFunction::quadratic(DMatrix::identity(1, 1), &c).unwrap();
        let t = simulate_method(&MethodSpec::gradient_method(0.1), &f, &[DVector::from_element(1, 1.0)], 30)
            .unwrap();
        for k in 0..=30 {
            assert!((t.x(k)[0] - 0.9f64.powi(k as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn fgm_converges() {
        let c = FunctionClass::new(1.0, 100.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = TestFunction::random_quadratic(&c, 10, &mut rng);
        let x0 = DVector::from_element(10, 1.0);
        let t = simulate_method(&make_preset(Preset::Fgm, &c), &f, &[x0.clone(), x0], 200).unwrap();
        assert!(t.f(199) - t.f_star() < 1e-10);
        assert!(t.recursion_residual(&make_preset(Preset::Fgm, &c)).unwrap() < 1e-12);
    }

    #[test]
    fn els_orthogonality() {
        let c = FunctionClass::new(1.0, 20.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = TestFunction::log_sum_exp(&c, 6, 8, &mut rng);
        let x0 = DVector::from_element(6, 1.0);
        let t = simulate_els_gd(&f, &x0, 5).unwrap();
        for k in 0..4 {
            let g1 = t.g(k + 1);
            let scale = t.g(k).norm() * g1.norm();
            assert!(t.g(k).dot(g1).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn slater_b_is_upper_triangular() {
        let c = FunctionClass::new(1.0, 10.0).unwrap();
        let t = slater_trajectory(&make_preset(Preset::Gm, &c), &c, 2, 4).unwrap();
        let (b, _) = t.stacked(2).unwrap();
        assert_eq!(b.shape(), (4, 4));
        for i in 0..4 {
            assert!(b[(i, i)].abs() > 1e-12);
            for j in 0..i {
                assert!(b[(i, j)].abs() < 1e-15);
            }
        }
        let g = gram_matrix(&t, 2).unwrap();
        assert!(SymmetricEigen::new(g).eigenvalues.min() > 0.0);
        assert!(slater_trajectory(&make_preset(Preset::Gm, &c), &c, 2, 3).is_err());
    }

    #[test]
    fn gram_of_constant_run_is_zero() {
        let t = Trajectory::constant_at_optimum(1, 4, DVector::from_element(3, 2.0), 1.0);
        assert_eq!(gram_matrix(&t, 2).unwrap(), DMatrix::zeros(5, 5));
    }
}
