//! Flow maps and quadrature along trajectories.
//!
//! Integrals along the flow are computed by augmenting the state with the
//! running integral, so the adaptive step control covers the quadrature too.

use std::cell::Cell;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::VectorField;
use crate::error::{Error, Result};
use crate::linalg::{QuadraticForm, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Method {
    Rk4Fixed,
    Rkf45Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IntegratorCfg {
    pub method: Method,
    /// Fixed step for RK4, relative tolerance for RKF45.
    pub step_or_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub blowup_norm: f64,
}

impl Default for IntegratorCfg {
    fn default() -> Self {
        Self {
            method: Method::Rkf45Adaptive,
            step_or_tol: 1e-9,
            abs_tol: 1e-11,
            max_steps: 1_000_000,
            blowup_norm: 1e6,
        }
    }
}

impl IntegratorCfg {
    pub fn rk4(step: f64) -> Self {
        Self {
            method: Method::Rk4Fixed,
            step_or_tol: step,
            ..Self::default()
        }
    }

    pub fn adaptive(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            step_or_tol: rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_or_tol > 0.0 && self.step_or_tol.is_finite()) {
            return Err(Error::Validation("integrator step/tolerance must be positive".into()));
        }
        if !(self.blowup_norm > 0.0) || self.max_steps == 0 {
            return Err(Error::Validation("blowup norm and step budget must be positive".into()));
        }
        if self.method == Method::Rkf45Adaptive && !(self.abs_tol > 0.0) {
            return Err(Error::Validation("absolute tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Integrates `ẏ = rhs(y)` from 0 to `t_end`.
///
/// Only the first `watch` components are checked against the blow-up norm;
/// `observer` sees every accepted step, including the initial point.
pub fn integrate<R>(
    rhs: R,
    y0: Vec<f64>,
    watch: usize,
    t_end: f64,
    cfg: &IntegratorCfg,
    mut observer: Option<&mut dyn FnMut(f64, &[f64])>,
) -> Result<Vec<f64>>
where
    R: Fn(&[f64], &mut [f64]),
{
    cfg.validate()?;
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Validation(format!("integration horizon must be finite and >= 0, got {t_end}")));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("initial state must be finite".into()));
    }
    if let Some(obs) = observer.as_mut() {
        obs(0.0, &y0);
    }
    if t_end == 0.0 {
        return Ok(y0);
    }
    match cfg.method {
        Method::Rk4Fixed => rk4(&rhs, y0, watch, t_end, cfg, observer),
        Method::Rkf45Adaptive => rkf45(&rhs, y0, watch, t_end, cfg, observer),
    }
}

fn check_blowup(y: &[f64], watch: usize, t: f64, cfg: &IntegratorCfg) -> Result<()> {
    let norm = y[..watch].iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || norm > cfg.blowup_norm {
        return Err(Error::FiniteEscape {
            t,
            bound: cfg.blowup_norm,
            state: y[..watch].to_vec(),
        });
    }
    Ok(())
}

fn axpy(out: &mut [f64], y: &[f64], terms: &[(f64, &[f64])], h: f64) {
    for i in 0..y.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn rk4<R: Fn(&[f64], &mut [f64])>(
    rhs: &R,
    mut y: Vec<f64>,
    watch: usize,
    t_end: f64,
    cfg: &IntegratorCfg,
    mut observer: Option<&mut dyn FnMut(f64, &[f64])>,
) -> Result<Vec<f64>> {
    let steps = (t_end / cfg.step_or_tol).ceil().max(1.0);
    if steps > cfg.max_steps as f64 {
        return Err(Error::StepBudget(cfg.max_steps));
    }
    let steps = steps as usize;
    let h = t_end / steps as f64;
    let m = y.len();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for s in 0..steps {
        rhs(&y, &mut k1);
        axpy(&mut tmp, &y, &[(0.5, &k1)], h);
        rhs(&tmp, &mut k2);
        axpy(&mut tmp, &y, &[(0.5, &k2)], h);
        rhs(&tmp, &mut k3);
        axpy(&mut tmp, &y, &[(1.0, &k3)], h);
        rhs(&tmp, &mut k4);
        for i in 0..m {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t = (s + 1) as f64 * h;
        check_blowup(&y, watch, t, cfg)?;
        if let Some(obs) = observer.as_mut() {
            obs(t, &y);
        }
    }
    Ok(y)
}

// Fehlberg 4(5) tableau; the fifth-order solution is propagated.
const A2: [f64; 1] = [1.0 / 4.0];
const A3: [f64; 2] = [3.0 / 32.0, 9.0 / 32.0];
const A4: [f64; 3] = [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0];
const A5: [f64; 4] = [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0];
const A6: [f64; 5] = [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0];
const B5: [f64; 6] = [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];
const B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -1.0 / 5.0, 0.0];

fn rkf45<R: Fn(&[f64], &mut [f64])>(
    rhs: &R,
    mut y: Vec<f64>,
    watch: usize,
    t_end: f64,
    cfg: &IntegratorCfg,
    mut observer: Option<&mut dyn FnMut(f64, &[f64])>,
) -> Result<Vec<f64>> {
    let rel = cfg.step_or_tol;
    let abs = cfg.abs_tol;
    let m = y.len();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; m]; 6];
    let mut tmp = vec![0.0; m];
    let mut y5 = vec![0.0; m];
    let mut t = 0.0;
    let mut h = (t_end * 0.01).min(0.01);
    let mut steps = 0usize;
    while t < t_end {
        if steps >= cfg.max_steps {
            return Err(Error::StepBudget(cfg.max_steps));
        }
        steps += 1;
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        rhs(&y, &mut k[0]);
        axpy(&mut tmp, &y, &[(A2[0], &k[0])], h);
        rhs(&tmp, &mut k[1]);
        axpy(&mut tmp, &y, &[(A3[0], &k[0]), (A3[1], &k[1])], h);
        rhs(&tmp, &mut k[2]);
        axpy(&mut tmp, &y, &[(A4[0], &k[0]), (A4[1], &k[1]), (A4[2], &k[2])], h);
        rhs(&tmp, &mut k[3]);
        axpy(
            &mut tmp,
            &y,
            &[(A5[0], &k[0]), (A5[1], &k[1]), (A5[2], &k[2]), (A5[3], &k[3])],
            h,
        );
        rhs(&tmp, &mut k[4]);
        axpy(
            &mut tmp,
            &y,
            &[(A6[0], &k[0]), (A6[1], &k[1]), (A6[2], &k[2]), (A6[3], &k[3]), (A6[4], &k[4])],
            h,
        );
        rhs(&tmp, &mut k[5]);
        let mut err = 0.0f64;
        for i in 0..m {
            let mut s5 = 0.0;
            let mut s4 = 0.0;
            for j in 0..6 {
                s5 += B5[j] * k[j][i];
                s4 += B4[j] * k[j][i];
            }
            y5[i] = y[i] + h * s5;
            let sc = abs + rel * y[i].abs().max(y5[i].abs());
            err = err.max((h * (s5 - s4)).abs() / sc);
        }
        if !err.is_finite() {
            check_blowup(&y5, watch, t + h, cfg)?;
            h *= 0.25;
            if h < 1e-14 * t_end.max(1.0) {
                return Err(underflow(&y, &k[0], watch, t, t_end, cfg));
            }
            continue;
        }
        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            std::mem::swap(&mut y, &mut y5);
            check_blowup(&y, watch, t, cfg)?;
            if let Some(obs) = observer.as_mut() {
                obs(t, &y);
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * t_end.max(1.0) {
            return Err(underflow(&y, &k[0], watch, t, t_end, cfg));
        }
    }
    Ok(y)
}

fn underflow(y: &[f64], f: &[f64], watch: usize, t: f64, t_end: f64, cfg: &IntegratorCfg) -> Error {
    let speed = f[..watch].iter().map(|v| v * v).sum::<f64>().sqrt();
    if !speed.is_finite() || speed * (t_end - t) > cfg.blowup_norm {
        return Error::FiniteEscape {
            t,
            bound: cfg.blowup_norm,
            state: y[..watch].to_vec(),
        };
    }
    Error::Numeric(format!("step size underflow at t = {t}"))
}

fn field_rhs<'a, F: VectorField + ?Sized>(sys: &'a F) -> impl Fn(&[f64], &mut [f64]) + 'a {
    move |y: &[f64], out: &mut [f64]| {
        let f = sys.eval(&Vector::from_column_slice(y));
        out.copy_from_slice(f.as_slice());
    }
}

/// `φ(t, x₀)`.
pub fn flow<F: VectorField + ?Sized>(sys: &F, x0: &Vector, t: f64, cfg: &IntegratorCfg) -> Result<Vector> {
    check_dim(sys, x0)?;
    let y = integrate(field_rhs(sys), x0.as_slice().to_vec(), sys.dim(), t, cfg, None)?;
    Ok(Vector::from_vec(y))
}

fn check_dim<F: VectorField + ?Sized>(sys: &F, x: &Vector) -> Result<()> {
    if x.len() != sys.dim() {
        return Err(Error::Dimension(format!("point has dimension {}, system {}", x.len(), sys.dim())));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.states.first().map_or(0, |s| s.len());
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=n).map(|i| format!("x{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let row: Vec<String> = std::iter::once(*t).chain(x.iter().copied()).map(|v| format!("{v:.12e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn last(&self) -> &Vector {
        self.states.last().expect("trajectory has its initial state")
    }
}

/// Trajectory sampled at every accepted integrator step.
pub fn trajectory<F: VectorField + ?Sized>(
    sys: &F,
    x0: &Vector,
    t: f64,
    cfg: &IntegratorCfg,
) -> Result<Trajectory> {
    check_dim(sys, x0)?;
    let mut traj = Trajectory { times: Vec::new(), states: Vec::new() };
    let mut obs = |t: f64, y: &[f64]| {
        traj.times.push(t);
        traj.states.push(Vector::from_column_slice(y));
    };
    integrate(field_rhs(sys), x0.as_slice().to_vec(), sys.dim(), t, cfg, Some(&mut obs))?;
    Ok(traj)
}

/// `∫₀ᵈ g(φ(τ, x₀)) dτ`.
pub fn integrate_along_flow<F, G>(sys: &F, x0: &Vector, d: f64, g: G, cfg: &IntegratorCfg) -> Result<f64>
where
    F: VectorField + ?Sized,
    G: Fn(&Vector) -> f64,
{
    check_dim(sys, x0)?;
    if !(d > 0.0) {
        return Err(Error::Validation("horizon d must be positive".into()));
    }
    let n = sys.dim();
    let rhs = |y: &[f64], out: &mut [f64]| {
        let x = Vector::from_column_slice(&y[..n]);
        let f = sys.eval(&x);
        out[..n].copy_from_slice(f.as_slice());
        out[n] = g(&x);
    };
    let mut y0 = x0.as_slice().to_vec();
    y0.push(0.0);
    let y = integrate(rhs, y0, n, d, cfg, None)?;
    Ok(y[n])
}

/// `(∫₀ᵈ V(φ) dτ, ∇ₓ of the same)` for `V(x) = xᵀPx`, via the variational equation `Φ̇ = J·Φ`.
pub fn quadratic_flow_integral_with_gradient<F: VectorField + ?Sized>(
    sys: &F,
    x0: &Vector,
    d: f64,
    p: &QuadraticForm,
    cfg: &IntegratorCfg,
) -> Result<(f64, Vector)> {
    check_dim(sys, x0)?;
    if !(d > 0.0) {
        return Err(Error::Validation("horizon d must be positive".into()));
    }
    let n = sys.dim();
    let failed = Cell::new(false);
    let rhs = |y: &[f64], out: &mut [f64]| {
        let x = Vector::from_column_slice(&y[..n]);
        let phi = nalgebra::DMatrix::from_column_slice(n, n, &y[n..n + n * n]);
        let f = sys.eval(&x);
        let jac = match sys.jacobian(&x) {
            Ok(j) => j,
            Err(_) => {
                failed.set(true);
                out.iter_mut().for_each(|v| *v = f64::NAN);
                return;
            }
        };
        let px = p.apply(&x);
        out[..n].copy_from_slice(f.as_slice());
        out[n..n + n * n].copy_from_slice((jac * &phi).as_slice());
        out[n + n * n] = x.dot(&px);
        let g = phi.transpose() * px * 2.0;
        out[n + n * n + 1..].copy_from_slice(g.as_slice());
    };
    let mut y0 = x0.as_slice().to_vec();
    y0.extend(nalgebra::DMatrix::<f64>::identity(n, n).iter());
    y0.extend(std::iter::repeat_n(0.0, n + 1));
    let y = integrate(rhs, y0, n, d, cfg, None)?;
    if failed.get() {
        return Err(Error::Numeric("Jacobian failed along the trajectory".into()));
    }
    let base = n + n * n;
    Ok((y[base], Vector::from_column_slice(&y[base + 1..])))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let n = nodes.max(1);
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        xs[n - 1 - i] = x;
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    (xs, ws)
}

/// `∫₀ᵈ g(x + τ·f(x)) dτ` by Gauss–Legendre quadrature.
pub fn integrate_along_ray<F, G>(sys: &F, x: &Vector, d: f64, g: G, nodes: usize) -> Result<f64>
where
    F: VectorField + ?Sized,
    G: Fn(&Vector) -> f64,
{
    check_dim(sys, x)?;
    if !(d > 0.0) {
        return Err(Error::Validation("horizon d must be positive".into()));
    }
    if nodes < 2 {
        return Err(Error::Validation("ray quadrature needs at least 2 nodes".into()));
    }
    let f = sys.eval(x);
    let (xs, ws) = gauss_legendre(nodes);
    let mut acc = 0.0;
    for (s, w) in xs.iter().zip(&ws) {
        let tau = 0.5 * d * (s + 1.0);
        let v = g(&(x + &f * tau));
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite integrand at τ = {tau}")));
        }
        acc += w * v;
    }
    Ok(0.5 * d * acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{registry_get, SystemDef};
    use crate::linalg::Matrix;
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn neg_identity(n: usize) -> SystemDef {
        SystemDef::linear(-Matrix::identity(n, n)).unwrap()
    }

    #[test]
    fn gauss_legendre_tables() {
        let (x, w) = gauss_legendre(2);
        assert_relative_eq!(x[1], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(w[0], 1.0, epsilon = 1e-15);
        let (x, w) = gauss_legendre(8);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        // degree-15 monomial x^14 integrates to 2/15
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert_relative_eq!(s, 2.0 / 15.0, epsilon = 1e-14);
    }

    #[test]
    fn flow_of_scalar_log_system_matches_closed_form() {
        let sys = registry_get("scalarLogLF", &BTreeMap::new()).unwrap();
        let x0 = Vector::from_vec(vec![1.0, 1.0]);
        let x = flow(&sys, &x0, 1.0, &IntegratorCfg::default()).unwrap();
        let t = 1.0f64;
        let e1 = x0[0] * (x0[1] - x0[1] * (-t).exp() - t).exp();
        let e2 = x0[1] * (-t).exp();
        assert!((x[0] - e1).abs() < 1e-7 && (x[1] - e2).abs() < 1e-7);
        assert_eq!(flow(&sys, &x0, 0.0, &IntegratorCfg::default()).unwrap(), x0);
    }

    #[test]
    fn linear_decay() {
        let sys = neg_identity(2);
        let x0 = Vector::from_vec(vec![0.7, -1.3]);
        for d in [0.1, 1.0, 3.0] {
            let x = flow(&sys, &x0, d, &IntegratorCfg::default()).unwrap();
            assert!((x - &x0 * (-d).exp()).amax() < 1e-9);
        }
    }

    #[test]
    fn escape_and_budget_errors() {
        let sys = registry_get("ring3d", &BTreeMap::new()).unwrap();
        let x0 = Vector::from_vec(vec![0.0, 0.0, 1.5]);
        assert!(matches!(
            flow(&sys, &x0, 5.0, &IntegratorCfg::default()),
            Err(Error::FiniteEscape { .. })
        ));
        let cfg = IntegratorCfg { max_steps: 3, ..IntegratorCfg::rk4(1e-3) };
        assert!(matches!(flow(&neg_identity(1), &Vector::from_vec(vec![1.0]), 1.0, &cfg), Err(Error::StepBudget(3))));
        assert!(flow(&neg_identity(1), &Vector::from_vec(vec![1.0]), -1.0, &IntegratorCfg::default()).is_err());
    }

    #[test]
    fn flow_quadrature_examples() {
        let sys = neg_identity(3);
        let x0 = Vector::from_vec(vec![0.4, -0.2, 1.1]);
        let d = 1.7;
        let v = integrate_along_flow(&sys, &x0, d, |x| x.norm_squared(), &IntegratorCfg::default()).unwrap();
        let expect = x0.norm_squared() * (1.0 - (-2.0 * d).exp()) / 2.0;
        assert!((v - expect).abs() < 1e-8);
        let z = integrate_along_flow(&sys, &x0, d, |_| 0.0, &IntegratorCfg::default()).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn flow_quadrature_against_step_halving() {
        // Richardson extrapolation of fixed-step RK4 quadrature is the independent route.
        let sys = registry_get("scalarLogLF", &BTreeMap::new()).unwrap();
        let x0 = Vector::from_vec(vec![1.0, 0.0]);
        let g = |x: &Vector| 0.1 * x.norm_squared();
        let coarse = integrate_along_flow(&sys, &x0, 2.4, g, &IntegratorCfg::rk4(2e-2)).unwrap();
        let fine = integrate_along_flow(&sys, &x0, 2.4, g, &IntegratorCfg::rk4(1e-2)).unwrap();
        let richardson = fine + (fine - coarse) / 15.0;
        let adaptive = integrate_along_flow(&sys, &x0, 2.4, g, &IntegratorCfg::default()).unwrap();
        assert!((adaptive - richardson).abs() <= 1e-7 * richardson.abs());
    }

    #[test]
    fn sensitivity_gradient_matches_differences() {
        let sys = registry_get("scalarLogLF", &BTreeMap::new()).unwrap();
        let p = QuadraticForm::scaled_identity(2, 0.1).unwrap();
        let x0 = Vector::from_vec(vec![0.8, 1.3]);
        let cfg = IntegratorCfg::adaptive(1e-11, 1e-13);
        let (v, g) = quadratic_flow_integral_with_gradient(&sys, &x0, 2.4, &p, &cfg).unwrap();
        let v2 = integrate_along_flow(&sys, &x0, 2.4, |x| p.eval(x), &cfg).unwrap();
        assert_relative_eq!(v, v2, max_relative = 1e-9);
        let h = 1e-5;
        for i in 0..2 {
            let mut xp = x0.clone();
            xp[i] += h;
            let mut xm = x0.clone();
            xm[i] -= h;
            let fp = integrate_along_flow(&sys, &xp, 2.4, |x| p.eval(x), &cfg).unwrap();
            let fm = integrate_along_flow(&sys, &xm, 2.4, |x| p.eval(x), &cfg).unwrap();
            assert_relative_eq!(g[i], (fp - fm) / (2.0 * h), max_relative = 1e-5);
        }
    }

    #[test]
    fn ray_quadrature_examples() {
        let sys = neg_identity(2);
        let x = Vector::from_vec(vec![0.3, -0.9]);
        let v = integrate_along_ray(&sys, &x, 1.0, |y| y.norm_squared(), 2).unwrap();
        assert_relative_eq!(v, x.norm_squared() / 3.0, epsilon = 1e-15);
        assert!(integrate_along_ray(&sys, &x, 1.0, |y| y.norm_squared(), 1).is_err());
        let ring = registry_get("ring3d", &BTreeMap::new()).unwrap();
        let x = Vector::from_vec(vec![0.2, -0.5, 0.4]);
        let two = integrate_along_ray(&ring, &x, 0.2, |y| y.norm_squared(), 2).unwrap();
        let eight = integrate_along_ray(&ring, &x, 0.2, |y| y.norm_squared(), 8).unwrap();
        assert!((two - eight).abs() <= 1e-12 * eight.abs().max(1.0));
    }

    #[test]
    fn trajectory_csv_header() {
        let traj = trajectory(&neg_identity(2), &Vector::from_vec(vec![1.0, 2.0]), 0.1, &IntegratorCfg::rk4(0.05)).unwrap();
        assert_eq!(traj.times.len(), 3);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x1,x2\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
