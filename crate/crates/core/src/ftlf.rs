//! Finite-time decrease checks for quadratic candidates `V(x) = xᵀPx`.
//!
//! The linear route works on `A = ∂f/∂x(0)` of an origin-translated system;
//! the nonlinear route samples `Δ(x) = V(φ(d, x)) − V(x)` over a sublevel set
//! of `V` clipped to a box and refines the largest samples by local ascent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Bounds, SystemDef, SystemSpec, VectorField};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, QuadraticForm, Vector};
use crate::ode::{self, IntegratorCfg};
use crate::search::{self, AscentCfg};

pub const DEFAULT_MARGIN: f64 = 0.05;
pub const DEFAULT_SEED: u64 = 42;

/// `(‖e^{dA}‖_P < 1, ‖e^{dA}‖_P)`.
pub fn check_linear_ft(a: &Matrix, p: &QuadraticForm, d: f64) -> Result<(bool, f64)> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Validation(format!("horizon must be positive, got {d}")));
    }
    let norm = linalg::operator_norm2_weighted(&linalg::expm(&(a * d))?, p)?;
    Ok((norm < 1.0, norm))
}

/// `{0.05, 0.10, …, 5.0}`.
pub fn default_d_grid() -> Vec<f64> {
    (1..=100).map(|k| k as f64 * 0.05).collect()
}

/// Smallest `d` in the grid with `‖e^{dA}‖_P ≤ 1 − margin`.
pub fn find_horizon(a: &Matrix, p: &QuadraticForm, d_grid: &[f64], margin: f64) -> Result<f64> {
    if d_grid.is_empty() {
        return Err(Error::Validation("empty horizon grid".into()));
    }
    if !(0.0..0.5).contains(&margin) {
        return Err(Error::Validation(format!("margin must lie in [0, 0.5), got {margin}")));
    }
    if d_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Validation("horizon grid must be strictly increasing".into()));
    }
    let mut best = (f64::INFINITY, d_grid[0]);
    for &d in d_grid {
        let (_, norm) = check_linear_ft(a, p, d)?;
        if norm <= 1.0 - margin {
            return Ok(d);
        }
        if norm < best.0 {
            best = (norm, d);
        }
    }
    Err(Error::HorizonNotFound { best: best.0, at: best.1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "camelCase")]
pub enum MuCertificate {
    #[serde(rename_all = "camelCase")]
    Applicable { mu: f64, sigma: f64, delta_bound: f64 },
    NotApplicable { mu: f64 },
}

impl MuCertificate {
    pub fn mu(&self) -> f64 {
        match *self {
            Self::Applicable { mu, .. } | Self::NotApplicable { mu } => mu,
        }
    }

    pub fn is_applicable(&self) -> bool {
        matches!(self, Self::Applicable { .. })
    }
}

/// `ς = 1 − e^{dμ}` and the bound `δ ≤ dμ²/ς`, defined only for `μ = μ₂,P(A) < 0`.
pub fn mu_certificate(a: &Matrix, p: &QuadraticForm, d: f64) -> Result<MuCertificate> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Validation(format!("horizon must be positive, got {d}")));
    }
    let mu = linalg::log_norm2_weighted(a, p)?;
    if mu >= 0.0 {
        return Ok(MuCertificate::NotApplicable { mu });
    }
    let sigma = -(d * mu).exp_m1();
    Ok(MuCertificate::Applicable {
        mu,
        sigma,
        delta_bound: d * mu * mu / sigma,
    })
}

/// Largest `c` with `{xᵀPx ≤ c}` inside `bounds`.
///
/// On the face `x_i = b` the minimum of `xᵀPx` is `b² / (P⁻¹)_ii`.
pub fn largest_sublevel_in_box(p: &QuadraticForm, bounds: &Bounds) -> Result<f64> {
    if p.dim() != bounds.dim() {
        return Err(Error::Dimension("form and box disagree on dimension".into()));
    }
    if !bounds.contains(&Vector::zeros(p.dim()), 0.0) {
        return Err(Error::Spec("box must contain the equilibrium".into()));
    }
    let inv = p
        .matrix()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?
        .inverse();
    let c = (0..p.dim())
        .map(|i| {
            let reach = bounds.lower[i].abs().min(bounds.upper[i].abs());
            reach * reach / inv[(i, i)]
        })
        .fold(f64::INFINITY, f64::min);
    if !(c > 0.0) {
        return Err(Error::Spec("equilibrium lies on the box boundary".into()));
    }
    Ok(c)
}

/// Candidate set `{V ≤ level} ∩ bounds`, in translated coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SublevelSpec {
    pub level: f64,
    pub bounds: Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchBudget {
    pub grid_per_axis: usize,
    pub multistarts: usize,
    pub seed: u64,
    pub boundary_samples: usize,
}

impl SearchBudget {
    pub fn for_dim(n: usize) -> Self {
        Self {
            grid_per_axis: if n <= 2 { 41 } else { 21 },
            multistarts: 10,
            seed: DEFAULT_SEED,
            boundary_samples: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FtCertificate {
    pub system: SystemSpec,
    pub equilibrium: Vec<f64>,
    #[serde(rename = "P")]
    pub p: QuadraticForm,
    pub d: f64,
    pub linear_norm: f64,
    pub linear_pass: bool,
    pub mu: f64,
    pub sigma: Option<f64>,
    pub delta_bound: Option<f64>,
    #[serde(rename = "C_V")]
    pub c_v: f64,
    pub bounds: Bounds,
    pub exclusion_radius: f64,
    #[serde(with = "crate::float")]
    pub max_decrease: f64,
    pub argmax: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub escape: Option<Vec<f64>>,
    pub boundary_samples: usize,
    #[serde(default, with = "crate::float::option")]
    pub boundary_max_v: Option<f64>,
    pub nonlinear_pass: bool,
    pub assumption: String,
}

impl FtCertificate {
    pub fn boundary_ok(&self) -> bool {
        self.boundary_max_v.is_none_or(|v| v <= self.c_v)
    }

    pub fn passed(&self) -> bool {
        self.nonlinear_pass
    }
}

fn delta(sys: &SystemDef, p: &QuadraticForm, d: f64, x: &Vector, cfg: &IntegratorCfg) -> Result<f64> {
    let y = ode::flow(sys, x, d, cfg)?;
    Ok(p.eval(&y) - p.eval(x))
}

/// Pulls `x` into the box, then radially onto `{V ≤ level}`.
fn project_sublevel(p: &QuadraticForm, spec: &SublevelSpec, x: &Vector) -> Vector {
    let mut y = x.clone();
    spec.bounds.clamp(&mut y);
    let v = p.eval(&y);
    if v > spec.level {
        y *= (spec.level / v).sqrt();
    }
    y
}

/// Samples and refines `max Δ` over `S \ {‖x‖ < eps}`.
///
/// The origin is excluded because `Δ(0) = 0`; `eps` defaults to `1e-3` of
/// the box diagonal. A finite escape anywhere in `S` fails the certificate
/// and is recorded as a witness.
pub fn verify_nonlinear(
    sys: &SystemDef,
    p: &QuadraticForm,
    d: f64,
    spec: &SublevelSpec,
    budget: &SearchBudget,
    cfg: &IntegratorCfg,
) -> Result<FtCertificate> {
    let n = sys.dim();
    if p.dim() != n || spec.bounds.dim() != n {
        return Err(Error::Dimension("candidate, box and system disagree on dimension".into()));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Validation(format!("horizon must be positive, got {d}")));
    }
    if !(spec.level > 0.0) {
        return Err(Error::Spec("sublevel value must be positive".into()));
    }
    let zero = Vector::zeros(n);
    if !spec.bounds.contains(&zero, 0.0) {
        return Err(Error::Spec("candidate box must contain the equilibrium".into()));
    }
    let a = sys.jacobian(&zero)?;
    let (linear_pass, linear_norm) = check_linear_ft(&a, p, d)?;
    let mu = mu_certificate(&a, p, d)?;
    let eps = 1e-3 * spec.bounds.diagonal();

    let points: Vec<Vector> = spec
        .bounds
        .grid_points(budget.grid_per_axis)
        .into_iter()
        .filter(|x| p.eval(x) <= spec.level && x.norm() >= eps)
        .collect();
    if points.is_empty() {
        return Err(Error::Spec("candidate set contains no grid samples".into()));
    }

    let values: Vec<Result<f64>> = points.par_iter().map(|x| delta(sys, p, d, x, cfg)).collect();
    let mut scored = Vec::with_capacity(points.len());
    let mut escape = None;
    for (i, v) in values.into_iter().enumerate() {
        match v {
            Ok(v) => scored.push((v, i)),
            Err(Error::FiniteEscape { .. }) => {
                escape.get_or_insert_with(|| points[i].as_slice().to_vec());
            }
            Err(e) => return Err(e),
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let scale = spec.bounds.diagonal() / budget.grid_per_axis.max(2) as f64;
    let ascent = AscentCfg::for_scale(scale);
    let objective = |x: &Vector| delta(sys, p, d, x, cfg);
    let project = |_: &Vector, y: &Vector| {
        let z = project_sublevel(p, spec, y);
        (z.norm() >= eps).then_some(z)
    };
    let refined: Vec<Result<(Vector, f64)>> = scored
        .iter()
        .take(budget.multistarts)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&(v, i)| search::ascend(&objective, points[i].clone(), v, project, &ascent))
        .collect();

    let (mut best_x, mut best_v) = match scored.first() {
        Some(&(v, i)) => (points[i].clone(), v),
        None => (points[0].clone(), f64::INFINITY),
    };
    for r in refined {
        match r {
            Ok((x, v)) if v > best_v => {
                best_x = x;
                best_v = v;
            }
            Ok(_) => {}
            Err(Error::FiniteEscape { .. }) => {}
            Err(e) => return Err(e),
        }
    }

    let boundary = boundary_images(sys, p, d, spec, budget, cfg)?;
    let boundary_max_v = boundary.iter().copied().reduce(f64::max);
    let nonlinear_pass = escape.is_none() && best_v < 0.0;

    Ok(FtCertificate {
        system: sys.to_spec(),
        equilibrium: sys.offset().as_slice().to_vec(),
        p: p.clone(),
        d,
        linear_norm,
        linear_pass,
        mu: mu.mu(),
        sigma: match mu {
            MuCertificate::Applicable { sigma, .. } => Some(sigma),
            MuCertificate::NotApplicable { .. } => None,
        },
        delta_bound: match mu {
            MuCertificate::Applicable { delta_bound, .. } => Some(delta_bound),
            MuCertificate::NotApplicable { .. } => None,
        },
        c_v: spec.level,
        bounds: spec.bounds.clone(),
        exclusion_radius: eps,
        max_decrease: best_v,
        argmax: best_x.as_slice().to_vec(),
        samples: points.len(),
        seed: budget.seed,
        escape,
        boundary_samples: boundary.len(),
        boundary_max_v,
        nonlinear_pass,
        assumption: "decay-estimate hypothesis assumed, supported by certificate evidence".into(),
    })
}

/// `V(φ(d, x))` for seeded samples on `{V = level}` lying inside the box.
///
/// This is a necessary condition for `d`-invariance of the candidate set,
/// not a proof of it.
fn boundary_images(
    sys: &SystemDef,
    p: &QuadraticForm,
    d: f64,
    spec: &SublevelSpec,
    budget: &SearchBudget,
    cfg: &IntegratorCfg,
) -> Result<Vec<f64>> {
    let n = sys.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut starts = Vec::with_capacity(budget.boundary_samples);
    let mut tries = 0;
    while starts.len() < budget.boundary_samples && tries < 50 * budget.boundary_samples.max(1) {
        tries += 1;
        let u = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let v = p.eval(&u);
        if !(v > 1e-12) {
            continue;
        }
        let x = u * (spec.level / v).sqrt();
        if spec.bounds.contains(&x, 0.0) {
            starts.push(x);
        }
    }
    let images: Vec<Result<f64>> = starts
        .par_iter()
        .map(|x| ode::flow(sys, x, d, cfg).map(|y| p.eval(&y)))
        .collect();
    images
        .into_iter()
        .map(|r| match r {
            Err(Error::FiniteEscape { .. }) => Ok(f64::INFINITY),
            other => other,
        })
        .collect()
}

type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// `ρ = id − ½·γ∘α₂⁻¹` on `[0, s_max]`.
pub struct RhoForm {
    gamma: ScalarFn,
    alpha2: ScalarFn,
    s_max: f64,
}

impl std::fmt::Debug for RhoForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RhoForm").field("s_max", &self.s_max).finish_non_exhaustive()
    }
}

const MONOTONE_PROBES: usize = 256;

fn check_class_k(name: &str, g: &dyn Fn(f64) -> f64, upper: f64) -> Result<()> {
    if g(0.0).abs() > 1e-14 {
        return Err(Error::Validation(format!("{name}(0) must vanish")));
    }
    let mut prev = 0.0;
    for k in 1..=MONOTONE_PROBES {
        let s = upper * k as f64 / MONOTONE_PROBES as f64;
        let v = g(s);
        if !v.is_finite() || v <= prev {
            return Err(Error::Validation(format!("{name} is not strictly increasing near s = {s}")));
        }
        prev = v;
    }
    Ok(())
}

/// Builds `ρ` after probing that `γ` and `α₂` vanish at 0 and increase on the range.
pub fn rho_compose<G, A>(gamma: G, alpha2: A, s_max: f64) -> Result<RhoForm>
where
    G: Fn(f64) -> f64 + Send + Sync + 'static,
    A: Fn(f64) -> f64 + Send + Sync + 'static,
{
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(Error::Validation("rho range must be positive and finite".into()));
    }
    check_class_k("alpha2", &alpha2, s_max)?;
    let rho = RhoForm {
        gamma: Box::new(gamma),
        alpha2: Box::new(alpha2),
        s_max,
    };
    let inv_max = rho.alpha2_inverse(s_max)?;
    check_class_k("gamma", &*rho.gamma, inv_max.max(s_max))?;
    Ok(rho)
}

impl RhoForm {
    pub fn s_max(&self) -> f64 {
        self.s_max
    }

    /// Bisection to `1e-12`, failing if a midpoint breaks monotonicity.
    pub fn alpha2_inverse(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(Error::Validation(format!("alpha2 inverse needs s >= 0, got {s}")));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        let a = &self.alpha2;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let (mut flo, mut fhi) = (a(lo), a(hi));
        while fhi < s {
            if hi > 1e12 {
                return Err(Error::Validation(format!("alpha2 never reaches {s}")));
            }
            lo = hi;
            flo = fhi;
            hi *= 2.0;
            fhi = a(hi);
            if fhi <= flo {
                return Err(Error::Validation("alpha2 is not increasing".into()));
            }
        }
        while hi - lo > 1e-12 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            let fm = a(mid);
            if !(fm >= flo && fm <= fhi) {
                return Err(Error::Validation(format!("alpha2 is not monotone near {mid}")));
            }
            if fm < s {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
                fhi = fm;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        Ok(s - 0.5 * (self.gamma)(self.alpha2_inverse(s)?))
    }

    /// `0 < ρ(s) < s` on `count` log-spaced samples of `(0, s_max]`.
    pub fn check_contraction(&self, count: usize) -> Result<()> {
        let lo = (self.s_max * 1e-6).ln();
        let hi = self.s_max.ln();
        for k in 0..count.max(2) {
            let s = (lo + (hi - lo) * k as f64 / (count.max(2) - 1) as f64).exp();
            let r = self.eval(s)?;
            if !(r > 0.0 && r < s) {
                return Err(Error::Validation(format!("rho({s}) = {r} is outside (0, s)")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::registry_get;
    use approx::assert_relative_eq;

    fn neg_identity(n: usize) -> Matrix {
        -Matrix::identity(n, n)
    }

    #[test]
    fn linear_check_examples() {
        let i2 = QuadraticForm::identity(2);
        let (ok, norm) = check_linear_ft(&neg_identity(2), &i2, 1.0).unwrap();
        assert!(ok);
        assert_relative_eq!(norm, (-1.0f64).exp(), max_relative = 1e-12);

        let ring = registry_get("ring3d", &Default::default()).unwrap();
        let a = ring.jacobian(&Vector::zeros(3)).unwrap();
        let (ok, norm) = check_linear_ft(&a, &QuadraticForm::identity(3), 0.2).unwrap();
        assert!(ok);
        assert_relative_eq!(norm, (-0.2f64).exp(), max_relative = 1e-10);

        let p = QuadraticForm::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let (ok, norm) = check_linear_ft(&Matrix::identity(2, 2), &p, 0.7).unwrap();
        assert!(!ok);
        assert_relative_eq!(norm, 0.7f64.exp(), max_relative = 1e-10);
        assert!(check_linear_ft(&neg_identity(2), &i2, 0.0).is_err());
    }

    #[test]
    fn horizon_search() {
        let i2 = QuadraticForm::identity(2);
        let grid: Vec<f64> = (1..=20).map(|k| k as f64 * 0.1).collect();
        let d = find_horizon(&neg_identity(2), &i2, &grid, 0.1).unwrap();
        assert!((d - 0.2).abs() < 1e-12);
        match find_horizon(&Matrix::identity(2, 2), &i2, &grid, 0.1) {
            Err(Error::HorizonNotFound { .. }) => {}
            other => panic!("expected horizon failure, got {other:?}"),
        }
        assert!(find_horizon(&neg_identity(2), &i2, &[], 0.1).is_err());
        assert!(find_horizon(&neg_identity(2), &i2, &grid, 0.5).is_err());
    }

    #[test]
    fn whirling_pendulum_horizon() {
        let sys = registry_get("whirlingPendulum", &Default::default()).unwrap();
        let a = sys.jacobian(&Vector::zeros(2)).unwrap();
        let p = QuadraticForm::from_rows(&[vec![3.6831, 2.3169], vec![2.3169, 14.7694]]).unwrap();
        let (ok, _) = check_linear_ft(&a, &p, 1.1).unwrap();
        assert!(ok);
    }

    #[test]
    fn mu_examples() {
        match mu_certificate(&neg_identity(2), &QuadraticForm::identity(2), 1.0).unwrap() {
            MuCertificate::Applicable { mu, sigma, delta_bound } => {
                assert_relative_eq!(mu, -1.0, epsilon = 1e-12);
                assert_relative_eq!(sigma, 0.632_120_558_828_557_7, epsilon = 1e-12);
                assert_relative_eq!(delta_bound, 1.0 / sigma, epsilon = 1e-12);
                assert!((delta_bound - 1.5820).abs() < 1e-4);
            }
            other => panic!("{other:?}"),
        }
        let zero = Matrix::zeros(2, 2);
        assert!(!mu_certificate(&zero, &QuadraticForm::identity(2), 1.0).unwrap().is_applicable());
    }

    #[test]
    fn hpa_needs_weighted_norm() {
        let sys = registry_get("hpaAxis", &Default::default()).unwrap();
        let eq = crate::dynamics::registered_equilibria(&sys).unwrap().remove(0);
        let a = sys.jacobian(&eq.point()).unwrap();
        assert!(!mu_certificate(&a, &QuadraticForm::identity(3), 0.4).unwrap().is_applicable());
        let p = linalg::lyapunov_solve(&a, &Matrix::identity(3, 3)).unwrap();
        assert!(mu_certificate(&a, &p, 0.4).unwrap().is_applicable());
    }

    #[test]
    fn nonlinear_on_linear_decay() {
        let sys = SystemDef::linear(neg_identity(2)).unwrap();
        let p = QuadraticForm::identity(2);
        let spec = SublevelSpec {
            level: 1.0,
            bounds: Bounds::symmetric(2, 1.0).unwrap(),
        };
        let mut budget = SearchBudget::for_dim(2);
        budget.grid_per_axis = 21;
        let cert = verify_nonlinear(&sys, &p, 0.5, &spec, &budget, &IntegratorCfg::default()).unwrap();
        assert!(cert.nonlinear_pass && cert.linear_pass && cert.boundary_ok());
        let r2 = cert.argmax.iter().map(|v| v * v).sum::<f64>();
        assert_relative_eq!(cert.max_decrease, (-1.0f64).exp_m1() * r2, epsilon = 1e-8);
        assert!((r2 - cert.exclusion_radius.powi(2)).abs() < 1e-3);
    }

    #[test]
    fn certificate_json_round_trip() {
        let sys = SystemDef::linear(neg_identity(2)).unwrap();
        let spec = SublevelSpec {
            level: 0.5,
            bounds: Bounds::symmetric(2, 1.0).unwrap(),
        };
        let mut budget = SearchBudget::for_dim(2);
        budget.grid_per_axis = 9;
        budget.boundary_samples = 4;
        let cert =
            verify_nonlinear(&sys, &QuadraticForm::identity(2), 0.3, &spec, &budget, &IntegratorCfg::default())
                .unwrap();
        let text = serde_json::to_string(&cert).unwrap();
        assert!(text.contains("\"C_V\"") && text.contains("\"linearNorm\""));
        let back: FtCertificate = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cert);
    }

    #[test]
    fn box_sublevel() {
        let bx = Bounds::symmetric(2, 4.0).unwrap();
        let c = largest_sublevel_in_box(&QuadraticForm::scaled_identity(2, 0.1).unwrap(), &bx).unwrap();
        assert!((c - 1.6).abs() < 1e-12);
        let p = QuadraticForm::from_rows(&[vec![2.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let bx = Bounds::new(vec![-1.0, -3.0], vec![2.0, 3.0]).unwrap();
        let c = largest_sublevel_in_box(&p, &bx).unwrap();
        // (P⁻¹)₁₁ = 1, so the x₁ = -1 face is the binding one.
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rho_examples() {
        let lin = rho_compose(|s| s, |s| s, 10.0).unwrap();
        assert_relative_eq!(lin.eval(0.5).unwrap(), 0.25, epsilon = 1e-12);
        assert_eq!(lin.eval(0.0).unwrap(), 0.0);

        let sq = rho_compose(|s| s * s, |s| s * s, 10.0).unwrap();
        assert_relative_eq!(sq.eval(1.0).unwrap(), 0.5, epsilon = 1e-10);
        assert_relative_eq!(sq.eval(0.5).unwrap(), 0.25, epsilon = 1e-10);
        sq.check_contraction(1000).unwrap();

        assert!(rho_compose(|s| s, |s: f64| (s - 1.0).powi(2) - 1.0, 4.0).is_err());
        assert!(rho_compose(|s: f64| -s, |s| s, 4.0).is_err());
    }
}
