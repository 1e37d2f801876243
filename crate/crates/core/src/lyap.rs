//! Lyapunov functions assembled from a quadratic finite-time candidate.
//!
//! Two base constructions are available for `V(x) = xᵀPx` and a horizon `d`:
//!
//! * the ray form `W(x) = ∫₀ᵈ V(x + τf(x)) dτ`, which integrates exactly to
//!   `d·xᵀPx + d²·xᵀPf + (d³/3)·fᵀPf`;
//! * the flow form `W(x) = ∫₀ᵈ V(φ(τ, x)) dτ`, evaluated by integrating the
//!   trajectory together with the running integral.
//!
//! Either base can be composed with expansion maps `x ↦ x + αf(x)`.

use serde::{Deserialize, Serialize};

use crate::dynamics::{SystemDef, SystemSpec, VectorField};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, QuadraticForm, Vector};
use crate::ode::{self, IntegratorCfg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LyapKind {
    RayClosedForm,
    FlowNumeric,
    Expanded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BaseConstruction {
    Ray,
    Flow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapFunction {
    base: BaseConstruction,
    sys: SystemDef,
    p: QuadraticForm,
    d: f64,
    alpha_chain: Vec<f64>,
    cfg: IntegratorCfg,
}

pub fn build_ray_w(sys: &SystemDef, p: &QuadraticForm, d: f64) -> Result<LyapFunction> {
    LyapFunction::new(BaseConstruction::Ray, sys, p, d, IntegratorCfg::default())
}

pub fn build_flow_w(sys: &SystemDef, p: &QuadraticForm, d: f64, cfg: &IntegratorCfg) -> Result<LyapFunction> {
    cfg.validate()?;
    LyapFunction::new(BaseConstruction::Flow, sys, p, d, *cfg)
}

/// `W₁(x) = W(x + α·f(x))`.
pub fn expand_w(w: &LyapFunction, alpha: f64) -> Result<LyapFunction> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Validation(format!("expansion factor must be finite and >= 0, got {alpha}")));
    }
    let mut out = w.clone();
    out.alpha_chain.push(alpha);
    Ok(out)
}

impl LyapFunction {
    fn new(base: BaseConstruction, sys: &SystemDef, p: &QuadraticForm, d: f64, cfg: IntegratorCfg) -> Result<Self> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::Validation(format!("horizon must be positive, got {d}")));
        }
        if p.dim() != sys.dim() {
            return Err(Error::Dimension(format!("P is {0}x{0}, system has dimension {1}", p.dim(), sys.dim())));
        }
        Ok(Self {
            base,
            sys: sys.clone(),
            p: p.clone(),
            d,
            alpha_chain: Vec::new(),
            cfg,
        })
    }

    pub fn kind(&self) -> LyapKind {
        match (self.alpha_chain.is_empty(), self.base) {
            (false, _) => LyapKind::Expanded,
            (true, BaseConstruction::Ray) => LyapKind::RayClosedForm,
            (true, BaseConstruction::Flow) => LyapKind::FlowNumeric,
        }
    }

    pub fn base(&self) -> BaseConstruction {
        self.base
    }

    pub fn system(&self) -> &SystemDef {
        &self.sys
    }

    pub fn p(&self) -> &QuadraticForm {
        &self.p
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn alpha_chain(&self) -> &[f64] {
        &self.alpha_chain
    }

    pub fn dim(&self) -> usize {
        self.sys.dim()
    }

    fn check(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!("point has dimension {}, W expects {}", x.len(), self.dim())));
        }
        Ok(())
    }

    /// Points `x = y_m, …, y_0` where `y_{k−1} = y_k + α_k·f(y_k)`.
    fn pullback_chain(&self, x: &Vector) -> Vec<Vector> {
        let mut ys = vec![x.clone()];
        for &a in self.alpha_chain.iter().rev() {
            let y = ys.last().expect("nonempty");
            let next = y + self.sys.eval(y) * a;
            ys.push(next);
        }
        ys
    }

    fn ray_value(&self, x: &Vector) -> f64 {
        let f = self.sys.eval(x);
        let px = self.p.apply(x);
        let d = self.d;
        d * x.dot(&px) + d * d * f.dot(&px) + d * d * d / 3.0 * self.p.eval(&f)
    }

    fn ray_gradient(&self, x: &Vector) -> Result<Vector> {
        let f = self.sys.eval(x);
        let j = self.sys.jacobian(x)?;
        let px = self.p.apply(x);
        let pf = self.p.apply(&f);
        let jt = j.transpose();
        let d = self.d;
        Ok(&px * (2.0 * d) + (&pf + &jt * &px) * (d * d) + &jt * &pf * (2.0 * d * d * d / 3.0))
    }

    /// Integral of `V` along the flow together with the endpoint `φ(d, x)`.
    fn flow_value_and_end(&self, x: &Vector) -> Result<(f64, Vector)> {
        let n = self.dim();
        let sys = &self.sys;
        let p = &self.p;
        let rhs = |y: &[f64], out: &mut [f64]| {
            let z = Vector::from_column_slice(&y[..n]);
            out[..n].copy_from_slice(sys.eval(&z).as_slice());
            out[n] = p.eval(&z);
        };
        let mut y0 = x.as_slice().to_vec();
        y0.push(0.0);
        let y = ode::integrate(rhs, y0, n, self.d, &self.cfg, None)?;
        Ok((y[n], Vector::from_column_slice(&y[..n])))
    }

    fn base_value(&self, x: &Vector) -> Result<f64> {
        match self.base {
            BaseConstruction::Ray => {
                let v = self.ray_value(x);
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("W is not finite at {:?}", x.as_slice())));
                }
                Ok(v)
            }
            BaseConstruction::Flow => ode::integrate_along_flow(&self.sys, x, self.d, |z| self.p.eval(z), &self.cfg),
        }
    }

    fn base_gradient(&self, x: &Vector) -> Result<Vector> {
        match self.base {
            BaseConstruction::Ray => self.ray_gradient(x),
            BaseConstruction::Flow => {
                ode::quadratic_flow_integral_with_gradient(&self.sys, x, self.d, &self.p, &self.cfg).map(|r| r.1)
            }
        }
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        self.check(x)?;
        let ys = self.pullback_chain(x);
        self.base_value(ys.last().expect("nonempty"))
    }

    /// Chain rule through the expansion maps: `∇W₁(x) = (I + αJ(x))ᵀ·∇W(x + αf(x))`.
    pub fn gradient(&self, x: &Vector) -> Result<Vector> {
        self.check(x)?;
        let ys = self.pullback_chain(x);
        let mut g = self.base_gradient(ys.last().expect("nonempty"))?;
        let n = self.dim();
        for (k, &a) in self.alpha_chain.iter().enumerate() {
            let y = &ys[self.alpha_chain.len() - 1 - k];
            let m = Matrix::identity(n, n) + self.sys.jacobian(y)? * a;
            g = m.transpose() * g;
        }
        Ok(g)
    }

    /// `Ẇ(x) = ∇W(x)ᵀf(x)`.
    ///
    /// For the plain flow form this is evaluated as `V(φ(d, x)) − V(x)`,
    /// which is the same quantity without sensitivities.
    pub fn wdot(&self, x: &Vector) -> Result<f64> {
        self.value_and_wdot(x).map(|r| r.1)
    }

    pub fn value_and_wdot(&self, x: &Vector) -> Result<(f64, f64)> {
        self.check(x)?;
        match self.kind() {
            LyapKind::FlowNumeric => {
                let (w, end) = self.flow_value_and_end(x)?;
                Ok((w, self.p.eval(&end) - self.p.eval(x)))
            }
            LyapKind::RayClosedForm => {
                let w = self.base_value(x)?;
                Ok((w, self.ray_gradient(x)?.dot(&self.sys.eval(x))))
            }
            LyapKind::Expanded => Ok((self.value(x)?, self.gradient(x)?.dot(&self.sys.eval(x)))),
        }
    }

    pub fn to_export(&self) -> LyapExport {
        LyapExport {
            kind: self.kind(),
            base: self.base,
            system: self.sys.to_spec(),
            p: self.p.clone(),
            d: self.d,
            alpha_chain: self.alpha_chain.clone(),
            integrator: (self.base == BaseConstruction::Flow).then_some(self.cfg),
            coefficients_doc: match self.base {
                BaseConstruction::Ray => {
                    "W(x) = d*x'Px + d^2*x'Pf(x) + (d^3/3)*f(x)'Pf(x), with x replaced by x + alpha*f(x) \
                     for each alpha in alphaChain, last entry applied first"
                }
                BaseConstruction::Flow => {
                    "W(x) = integral over [0, d] of V(phi(t, x)) dt with V(x) = x'Px, with x replaced by \
                     x + alpha*f(x) for each alpha in alphaChain, last entry applied first"
                }
            }
            .into(),
        }
    }

    pub fn from_export(e: &LyapExport) -> Result<Self> {
        let sys = SystemDef::from_spec(&e.system)?;
        let mut w = match e.base {
            BaseConstruction::Ray => build_ray_w(&sys, &e.p, e.d)?,
            BaseConstruction::Flow => build_flow_w(&sys, &e.p, e.d, &e.integrator.unwrap_or_default())?,
        };
        for &a in &e.alpha_chain {
            w = expand_w(&w, a)?;
        }
        if w.kind() != e.kind {
            return Err(Error::Validation(format!(
                "kind {:?} is inconsistent with base {:?} and expansion chain",
                e.kind, e.base
            )));
        }
        Ok(w)
    }
}

/// Self-contained description of `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LyapExport {
    pub kind: LyapKind,
    pub base: BaseConstruction,
    pub system: SystemSpec,
    #[serde(rename = "P")]
    pub p: QuadraticForm,
    pub d: f64,
    #[serde(default)]
    pub alpha_chain: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorCfg>,
    #[serde(default)]
    pub coefficients_doc: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{registered_equilibria, registry_get, translate_to_origin};
    use approx::assert_relative_eq;

    fn decay(n: usize) -> SystemDef {
        SystemDef::linear(-Matrix::identity(n, n)).unwrap()
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn fd_grad(w: &LyapFunction, x: &Vector) -> Vector {
        let h = 1e-6;
        Vector::from_fn(x.len(), |i, _| {
            let mut a = x.clone();
            let mut b = x.clone();
            a[i] += h;
            b[i] -= h;
            (w.value(&a).unwrap() - w.value(&b).unwrap()) / (2.0 * h)
        })
    }

    #[test]
    fn ray_examples() {
        let w = build_ray_w(&decay(2), &QuadraticForm::identity(2), 1.0).unwrap();
        let x = v(&[0.3, -1.2]);
        assert_relative_eq!(w.value(&x).unwrap(), x.norm_squared() / 3.0, epsilon = 1e-14);
        assert_relative_eq!(w.gradient(&x).unwrap(), &x * (2.0 / 3.0), epsilon = 1e-14);
        assert_relative_eq!(w.wdot(&x).unwrap(), -2.0 / 3.0 * x.norm_squared(), epsilon = 1e-14);
        assert_eq!(w.value(&v(&[0.0, 0.0])).unwrap(), 0.0);
        assert_eq!(w.kind(), LyapKind::RayClosedForm);
    }

    #[test]
    fn ring_matches_quadrature_and_point_value() {
        let ring = registry_get("ring3d", &Default::default()).unwrap();
        let p = QuadraticForm::identity(3);
        let w = build_ray_w(&ring, &p, 0.2).unwrap();
        let x = v(&[0.1, 0.1, 0.1]);
        let q = ode::integrate_along_ray(&ring, &x, 0.2, |z| z.norm_squared(), 8).unwrap();
        assert_relative_eq!(w.value(&x).unwrap(), q, epsilon = 1e-12);
        let x0 = v(&[0.5933, -0.3636, -0.6869]);
        assert!((w.value(&x0).unwrap() - 0.1198).abs() < 5e-4);
        assert!(w.gradient(&Vector::zeros(3)).unwrap().amax() < 1e-15);
    }

    #[test]
    fn toggle_gradient_matches_differences() {
        let sys = registry_get("toggleSwitch", &Default::default()).unwrap();
        let eq = registered_equilibria(&sys).unwrap().remove(0);
        let g = translate_to_origin(&sys, &eq).unwrap();
        let a = g.jacobian(&Vector::zeros(2)).unwrap();
        let p = crate::linalg::lyapunov_solve(&a, &Matrix::identity(2, 2)).unwrap();
        let w = build_ray_w(&g, &p, 1.2).unwrap();
        for x in [v(&[0.1, -0.2]), v(&[-0.3, 0.4]), v(&[0.25, 0.05])] {
            let an = w.gradient(&x).unwrap();
            let fd = fd_grad(&w, &x);
            assert!((&an - &fd).norm() <= 1e-6 * an.norm().max(1e-3), "{an} vs {fd}");
        }
    }

    #[test]
    fn flow_examples() {
        let d = 0.7;
        let w = build_flow_w(&decay(2), &QuadraticForm::identity(2), d, &IntegratorCfg::default()).unwrap();
        let x = v(&[0.8, -0.4]);
        let expect = x.norm_squared() * (1.0 - (-2.0 * d).exp()) / 2.0;
        assert_relative_eq!(w.value(&x).unwrap(), expect, max_relative = 1e-8);
        let (wv, wd) = w.value_and_wdot(&x).unwrap();
        assert_relative_eq!(wv, expect, max_relative = 1e-8);
        assert_relative_eq!(wd, ((-2.0 * d).exp() - 1.0) * x.norm_squared(), max_relative = 1e-8);
        assert_relative_eq!(w.gradient(&x).unwrap().dot(&(-&x)), wd, max_relative = 1e-7);
        assert_eq!(w.value(&Vector::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn flow_leibniz_identity_along_trajectory() {
        let sys = registry_get("scalarLogLF", &Default::default()).unwrap();
        let p = QuadraticForm::scaled_identity(2, 0.1).unwrap();
        let w = build_flow_w(&sys, &p, 2.4, &IntegratorCfg::default()).unwrap();
        let x0 = v(&[1.0, 0.5]);
        let h = 1e-4;
        let cfg = IntegratorCfg::default();
        let xp = ode::flow(&sys, &x0, h, &cfg).unwrap();
        let x2 = ode::flow(&sys, &x0, 2.0 * h, &cfg).unwrap();
        let central = (w.value(&x2).unwrap() - w.value(&x0).unwrap()) / (2.0 * h);
        let exact = p.eval(&ode::flow(&sys, &xp, 2.4, &cfg).unwrap()) - p.eval(&xp);
        assert!((central - exact).abs() < 1e-5, "{central} vs {exact}");
        assert_relative_eq!(w.wdot(&xp).unwrap(), exact, epsilon = 1e-9);
    }

    #[test]
    fn expansion_rules() {
        let sys = registry_get("scalarLogLF", &Default::default()).unwrap();
        let w = build_ray_w(&sys, &QuadraticForm::scaled_identity(2, 0.1).unwrap(), 2.4).unwrap();
        let w0 = expand_w(&w, 0.0).unwrap();
        let w1 = expand_w(&w, 0.1).unwrap();
        let w2 = expand_w(&w1, 0.05).unwrap();
        assert_eq!(w1.kind(), LyapKind::Expanded);
        assert_eq!(w2.alpha_chain(), &[0.1, 0.05]);
        for x in [v(&[0.4, -0.3]), v(&[-1.0, 0.8]), v(&[1.5, 1.1])] {
            assert_eq!(w0.value(&x).unwrap(), w.value(&x).unwrap());
            let y = &x + sys.eval(&x) * 0.1;
            assert_relative_eq!(w1.value(&x).unwrap(), w.value(&y).unwrap(), epsilon = 1e-14);
            for e in [&w1, &w2] {
                let an = e.gradient(&x).unwrap();
                let fd = fd_grad(e, &x);
                assert!((&an - &fd).norm() <= 1e-6 * an.norm().max(1e-3), "{an} vs {fd}");
            }
        }
        assert_eq!(w1.value(&Vector::zeros(2)).unwrap(), 0.0);
        assert!(expand_w(&w, -0.1).is_err());
    }

    #[test]
    fn export_round_trip() {
        let sys = registry_get("whirlingPendulum", &Default::default()).unwrap();
        let p = QuadraticForm::from_rows(&[vec![3.6831, 2.3169], vec![2.3169, 14.7694]]).unwrap();
        for w in [
            build_ray_w(&sys, &p, 1.1).unwrap(),
            expand_w(&build_flow_w(&sys, &p, 1.1, &IntegratorCfg::default()).unwrap(), 0.1).unwrap(),
        ] {
            let text = serde_json::to_string(&w.to_export()).unwrap();
            let back = LyapFunction::from_export(&serde_json::from_str(&text).unwrap()).unwrap();
            assert_eq!(back, w);
        }
        let mut bad = build_ray_w(&sys, &p, 1.1).unwrap().to_export();
        bad.kind = LyapKind::Expanded;
        assert!(LyapFunction::from_export(&bad).is_err());
    }
}
