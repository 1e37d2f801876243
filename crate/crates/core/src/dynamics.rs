//! Vector fields, equilibria and origin translation.
//!
//! Every analysis downstream runs on a system whose equilibrium sits at the
//! origin. [`translate_to_origin`] produces `g(y) = f(y + x_eq)` by storing the
//! equilibrium as an offset inside [`SystemDef`].

use std::collections::BTreeMap;

use nalgebra::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector, MAX_DIM};

/// Anything that can be evaluated as an autonomous vector field `ẋ = f(x)`.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &Vector) -> Vector;

    /// Jacobian `∂f/∂x`; defaults to central differences.
    fn jacobian(&self, x: &Vector) -> Result<Matrix> {
        jacobian_fd(self, x, default_fd_step(x))
    }
}

pub fn default_fd_step(x: &Vector) -> f64 {
    1e-5 * x.amax().max(1.0)
}

/// Central-difference Jacobian, one column per coordinate.
pub fn jacobian_fd<F: VectorField + ?Sized>(field: &F, x: &Vector, h: f64) -> Result<Matrix> {
    if !(h > 0.0) {
        return Err(Error::Validation("finite-difference step must be positive".into()));
    }
    let n = field.dim();
    let mut jac = Matrix::zeros(n, n);
    let mut xp = x.clone();
    for j in 0..n {
        xp[j] = x[j] + h;
        let fp = field.eval(&xp);
        xp[j] = x[j] - h;
        let fm = field.eval(&xp);
        xp[j] = x[j];
        for i in 0..n {
            let v = (fp[i] - fm[i]) / (2.0 * h);
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite f near x = {:?}", x.as_slice())));
            }
            jac[(i, j)] = v;
        }
    }
    Ok(jac)
}

/// Axis-aligned analysis box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Dimension("box bounds must have equal nonzero length".into()));
        }
        if lower.len() > MAX_DIM {
            return Err(Error::Dimension(format!("box dimension above {MAX_DIM}")));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::Validation("box needs finite lower < upper componentwise".into()));
        }
        Ok(Self { lower, upper })
    }

    /// `[-r, r]ⁿ`.
    pub fn symmetric(n: usize, r: f64) -> Result<Self> {
        Self::new(vec![-r; n], vec![r; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &Vector, slack: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= l - slack && *v <= u + slack)
    }

    pub fn clamp(&self, x: &mut Vector) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }

    pub fn diagonal(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    /// The same box expressed relative to `origin`.
    pub fn shifted(&self, origin: &Vector) -> Self {
        Self {
            lower: self.lower.iter().zip(origin.iter()).map(|(l, o)| l - o).collect(),
            upper: self.upper.iter().zip(origin.iter()).map(|(u, o)| u - o).collect(),
        }
    }

    /// Tensor grid with `per_axis` points along every axis, row-major in the last axis.
    pub fn grid_axes(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let k = per_axis.max(2);
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (0..k).map(|i| l + (u - l) * i as f64 / (k - 1) as f64).collect())
            .collect()
    }

    pub fn grid_points(&self, per_axis: usize) -> Vec<Vector> {
        let axes = self.grid_axes(per_axis);
        let k = axes[0].len();
        let n = self.dim();
        let total = k.pow(n as u32);
        (0..total)
            .map(|mut flat| {
                let mut x = Vector::zeros(n);
                for d in (0..n).rev() {
                    x[d] = axes[d][flat % k];
                    flat /= k;
                }
                x
            })
            .collect()
    }
}

/// Built-in models.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// `ẋ₁ = −x₁ + x₁x₂, ẋ₂ = −x₂`: globally stable, no polynomial Lyapunov function.
    ScalarLogLf,
    /// Planar rotation with an unstable unit-circle limit cycle and a stiff third axis.
    Ring3d,
    /// Gardner–Cantor–Collins toggle switch.
    ToggleSwitch,
    /// Hypothalamic–pituitary–adrenal axis model.
    HpaAxis,
    /// Symmetric three-gene repressilator.
    Repressilator,
    WhirlingPendulum,
    /// Damped pendulum with a second-harmonic term; several equilibria.
    PendulumMultiEq,
    /// `ẋ = A·x`.
    Linear(Matrix),
}

struct ModelInfo {
    name: &'static str,
    dim: usize,
    params: &'static [(&'static str, f64)],
    analysis_box: (&'static [f64], &'static [f64]),
    known_equilibria: &'static [&'static [f64]],
}

const TOGGLE_PARAMS: &[(&str, f64)] = &[("alpha1", 1.3), ("alpha2", 1.0), ("beta", 3.0), ("gamma", 10.0)];
const HPA_PARAMS: &[(&str, f64)] = &[
    ("w1", 4.79),
    ("w2", 0.964),
    ("w3", 0.251),
    ("c3", 0.464),
    ("psi", 1.0),
    ("xi", 4.0),
    ("rho", 0.5),
    ("gamma", 5.0),
    ("alpha", 5.0),
];
const REPRESSILATOR_PARAMS: &[(&str, f64)] = &[("alpha", 5.0), ("beta", 2.0)];
const WHIRLING_PARAMS: &[(&str, f64)] = &[("kf", 0.2), ("mb", 1.0), ("lp", 10.0), ("omega", 0.9), ("g", 10.0)];
const MULTI_EQ_PARAMS: &[(&str, f64)] = &[
    ("torque", 0.301),
    ("phase", 0.4136),
    ("harmonic", 0.138),
    ("damping", 0.279),
];

const REGISTRY: &[ModelInfo] = &[
    ModelInfo {
        name: "scalarLogLF",
        dim: 2,
        params: &[],
        analysis_box: (&[-4.0, -4.0], &[4.0, 4.0]),
        known_equilibria: &[&[0.0, 0.0]],
    },
    ModelInfo {
        name: "ring3d",
        dim: 3,
        params: &[],
        analysis_box: (&[-0.9, -0.9, -0.9], &[0.9, 0.9, 0.9]),
        known_equilibria: &[&[0.0, 0.0, 0.0]],
    },
    ModelInfo {
        name: "toggleSwitch",
        dim: 2,
        params: TOGGLE_PARAMS,
        analysis_box: (&[0.0, 0.0], &[2.0, 2.0]),
        known_equilibria: &[&[0.668, 0.9829], &[0.8807, 0.7808], &[1.2996, 0.0678]],
    },
    ModelInfo {
        name: "hpaAxis",
        dim: 3,
        params: HPA_PARAMS,
        analysis_box: (&[0.0, 0.0, 0.0], &[2.0, 2.0, 2.0]),
        known_equilibria: &[
            &[0.1170, 0.1199, 0.4778],
            &[0.2224, 0.2017, 0.8039],
            &[0.7833, 0.4316, 1.7196],
        ],
    },
    ModelInfo {
        name: "repressilator",
        dim: 3,
        params: REPRESSILATOR_PARAMS,
        analysis_box: (&[0.0, 0.0, 0.0], &[3.0, 3.0, 3.0]),
        known_equilibria: &[&[1.516, 1.516, 1.516]],
    },
    ModelInfo {
        name: "whirlingPendulum",
        dim: 2,
        params: WHIRLING_PARAMS,
        analysis_box: (&[-4.0, -4.0], &[4.0, 4.0]),
        known_equilibria: &[&[0.0, 0.0]],
    },
    ModelInfo {
        name: "pendulumMultiEq",
        dim: 2,
        params: MULTI_EQ_PARAMS,
        analysis_box: (&[1.0, -5.0], &[10.0, 5.0]),
        known_equilibria: &[&[6.284098, 0.0], &[2.488345, 0.0], &[8.772443, 0.0]],
    },
];

/// Names accepted by [`registry_get`].
pub fn registry_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|m| m.name).collect()
}

fn info_for(name: &str) -> Option<(usize, &'static ModelInfo)> {
    REGISTRY.iter().enumerate().find(|(_, m)| m.name == name)
}

fn model_for_index(i: usize) -> Model {
    match i {
        0 => Model::ScalarLogLf,
        1 => Model::Ring3d,
        2 => Model::ToggleSwitch,
        3 => Model::HpaAxis,
        4 => Model::Repressilator,
        5 => Model::WhirlingPendulum,
        _ => Model::PendulumMultiEq,
    }
}

/// A named vector field, optionally translated so that a chosen equilibrium sits at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemDef {
    name: String,
    model: Model,
    params: Vec<f64>,
    offset: Vector,
}

/// Serializable description of a [`SystemDef`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

/// Looks up a built-in system, applying parameter overrides by name.
pub fn registry_get(name: &str, overrides: &BTreeMap<String, f64>) -> Result<SystemDef> {
    let (idx, info) = info_for(name).ok_or_else(|| Error::Lookup(name.to_string()))?;
    let mut params: Vec<f64> = info.params.iter().map(|(_, v)| *v).collect();
    for (key, value) in overrides {
        let pos = info
            .params
            .iter()
            .position(|(p, _)| p == key)
            .ok_or_else(|| Error::Validation(format!("system `{name}` has no parameter `{key}`")))?;
        if !value.is_finite() {
            return Err(Error::Validation(format!("parameter `{key}` must be finite")));
        }
        params[pos] = *value;
    }
    let sys = SystemDef {
        name: info.name.to_string(),
        model: model_for_index(idx),
        params,
        offset: Vector::zeros(info.dim),
    };
    sys.validate_params()?;
    Ok(sys)
}

impl SystemDef {
    pub fn linear(a: Matrix) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 || a.nrows() > MAX_DIM {
            return Err(Error::Dimension("linear system needs a square matrix".into()));
        }
        let n = a.nrows();
        Ok(Self {
            name: "linear".into(),
            model: Model::Linear(a),
            params: Vec::new(),
            offset: Vector::zeros(n),
        })
    }

    pub fn from_spec(spec: &SystemSpec) -> Result<Self> {
        let mut sys = if spec.name == "linear" {
            let rows = spec
                .matrix
                .as_ref()
                .ok_or_else(|| Error::Validation("linear system needs `matrix`".into()))?;
            if !spec.params.is_empty() {
                return Err(Error::Validation("linear system takes no parameters".into()));
            }
            Self::linear(linalg::matrix_from_rows(rows)?)?
        } else {
            registry_get(&spec.name, &spec.params)?
        };
        if let Some(off) = &spec.offset {
            if off.len() != sys.dim() || off.iter().any(|v| !v.is_finite()) {
                return Err(Error::Dimension("offset must be a finite point of dimension n".into()));
            }
            sys.offset = Vector::from_vec(off.clone());
        }
        Ok(sys)
    }

    pub fn to_spec(&self) -> SystemSpec {
        SystemSpec {
            name: self.name.clone(),
            params: self.params_map(),
            offset: if self.offset.iter().all(|v| *v == 0.0) {
                None
            } else {
                Some(self.offset.as_slice().to_vec())
            },
            matrix: match &self.model {
                Model::Linear(a) => Some(linalg::matrix_to_rows(a)),
                _ => None,
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Equilibrium offset: `g(y) = f(y + offset)`.
    pub fn offset(&self) -> &Vector {
        &self.offset
    }

    pub fn is_translated(&self) -> bool {
        self.offset.iter().any(|v| *v != 0.0)
    }

    pub fn params_map(&self) -> BTreeMap<String, f64> {
        self.param_names()
            .iter()
            .zip(&self.params)
            .map(|(k, v)| (k.to_string(), *v))
            .collect()
    }

    fn param_names(&self) -> Vec<&'static str> {
        info_for(&self.name)
            .map(|(_, i)| i.params.iter().map(|(k, _)| *k).collect())
            .unwrap_or_default()
    }

    /// Default analysis box in original (untranslated) coordinates.
    pub fn default_box(&self) -> Bounds {
        match info_for(&self.name) {
            Some((_, info)) => Bounds {
                lower: info.analysis_box.0.to_vec(),
                upper: info.analysis_box.1.to_vec(),
            },
            None => Bounds::symmetric(self.dim(), 1.0).expect("valid box"),
        }
    }

    fn validate_params(&self) -> Result<()> {
        let p = &self.params;
        let bad = |msg: &str| Err(Error::Validation(format!("{}: {msg}", self.name)));
        match self.model {
            Model::ToggleSwitch if p[2] <= 0.0 || p[3] <= 0.0 => bad("cooperativities must be positive"),
            Model::HpaAxis if p[3] <= 0.0 || p[7] <= 0.0 || p[8] <= 0.0 => {
                bad("c3 and Hill exponents must be positive")
            }
            Model::Repressilator if p[1] <= 0.0 => bad("beta must be positive"),
            Model::WhirlingPendulum if p[1] <= 0.0 || p[2] <= 0.0 => bad("mb and lp must be positive"),
            _ => Ok(()),
        }
    }

    /// `f` in original coordinates.
    fn eval_raw(&self, x: &[f64]) -> Vector {
        let p = &self.params;
        match &self.model {
            Model::ScalarLogLf => Vector::from_vec(vec![-x[0] + x[0] * x[1], -x[1]]),
            Model::Ring3d => {
                let r = x[0] * x[0] + x[1] * x[1] - 1.0;
                let s = x[2] * x[2] + 1.0;
                Vector::from_vec(vec![
                    x[0] * r - x[1] * s,
                    x[1] * r + x[0] * s,
                    10.0 * x[2] * (x[2] * x[2] - 1.0),
                ])
            }
            Model::ToggleSwitch => Vector::from_vec(vec![
                p[0] / (1.0 + pow(x[1], p[2])) - x[0],
                p[1] / (1.0 + pow(x[0], p[3])) - x[1],
            ]),
            Model::HpaAxis => {
                let (w1, w2, w3, c3, psi, xi, rho, gamma, alpha) =
                    (p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8]);
                let xa = pow(x[2], alpha);
                let xg = pow(x[2], gamma);
                let h = xa / (1.0 + xa);
                let k = xg / (xg + pow(c3, gamma));
                Vector::from_vec(vec![
                    1.0 + xi * h - psi * k - w1 * x[0],
                    (1.0 - rho * h) * x[0] - w2 * x[1],
                    x[1] - w3 * x[2],
                ])
            }
            Model::Repressilator => {
                let (a, b) = (p[0], p[1]);
                Vector::from_vec(vec![
                    a / (1.0 + pow(x[1], b)) - x[0],
                    a / (1.0 + pow(x[2], b)) - x[1],
                    a / (1.0 + pow(x[0], b)) - x[2],
                ])
            }
            Model::WhirlingPendulum => {
                let (kf, mb, lp, w, g) = (p[0], p[1], p[2], p[3], p[4]);
                let (s, c) = x[0].sin_cos();
                Vector::from_vec(vec![x[1], -kf / mb * x[1] + w * w * s * c - g / lp * s])
            }
            Model::PendulumMultiEq => {
                let (tq, ph, h, dmp) = (p[0], p[1], p[2], p[3]);
                let th = x[0] + ph;
                Vector::from_vec(vec![x[1], tq - th.sin() + h * (2.0 * th).sin() - dmp * x[1]])
            }
            Model::Linear(a) => a * Vector::from_column_slice(x),
        }
    }

    fn jacobian_raw(&self, x: &[f64]) -> Matrix {
        let p = &self.params;
        match &self.model {
            Model::ScalarLogLf => Matrix::from_row_slice(2, 2, &[-1.0 + x[1], x[0], 0.0, -1.0]),
            Model::Ring3d => {
                let r = x[0] * x[0] + x[1] * x[1] - 1.0;
                let s = x[2] * x[2] + 1.0;
                Matrix::from_row_slice(
                    3,
                    3,
                    &[
                        r + 2.0 * x[0] * x[0],
                        2.0 * x[0] * x[1] - s,
                        -2.0 * x[1] * x[2],
                        2.0 * x[0] * x[1] + s,
                        r + 2.0 * x[1] * x[1],
                        2.0 * x[0] * x[2],
                        0.0,
                        0.0,
                        10.0 * (3.0 * x[2] * x[2] - 1.0),
                    ],
                )
            }
            Model::ToggleSwitch => {
                let (a1, a2, b, g) = (p[0], p[1], p[2], p[3]);
                let d12 = a1 * hill_slope(x[1], b);
                let d21 = a2 * hill_slope(x[0], g);
                Matrix::from_row_slice(2, 2, &[-1.0, d12, d21, -1.0])
            }
            Model::HpaAxis => {
                let (w1, w2, w3, c3, psi, xi, rho, gamma, alpha) =
                    (p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8]);
                let xa = pow(x[2], alpha);
                let h = xa / (1.0 + xa);
                let dh = hill_slope_increasing(x[2], alpha, 1.0);
                let dk = hill_slope_increasing(x[2], gamma, pow(c3, gamma));
                Matrix::from_row_slice(
                    3,
                    3,
                    &[
                        -w1,
                        0.0,
                        xi * dh - psi * dk,
                        1.0 - rho * h,
                        -w2,
                        -rho * dh * x[0],
                        0.0,
                        1.0,
                        -w3,
                    ],
                )
            }
            Model::Repressilator => {
                let (a, b) = (p[0], p[1]);
                let mut j = -Matrix::identity(3, 3);
                j[(0, 1)] = a * hill_slope(x[1], b);
                j[(1, 2)] = a * hill_slope(x[2], b);
                j[(2, 0)] = a * hill_slope(x[0], b);
                j
            }
            Model::WhirlingPendulum => {
                let (kf, mb, lp, w, g) = (p[0], p[1], p[2], p[3], p[4]);
                let d = w * w * (2.0 * x[0]).cos() - g / lp * x[0].cos();
                Matrix::from_row_slice(2, 2, &[0.0, 1.0, d, -kf / mb])
            }
            Model::PendulumMultiEq => {
                let (_, ph, h, dmp) = (p[0], p[1], p[2], p[3]);
                let th = x[0] + ph;
                let d = -th.cos() + 2.0 * h * (2.0 * th).cos();
                Matrix::from_row_slice(2, 2, &[0.0, 1.0, d, -dmp])
            }
            Model::Linear(a) => a.clone(),
        }
    }
}

impl VectorField for SystemDef {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn eval(&self, y: &Vector) -> Vector {
        let x = y + &self.offset;
        self.eval_raw(x.as_slice())
    }

    fn jacobian(&self, y: &Vector) -> Result<Matrix> {
        let x = y + &self.offset;
        let j = self.jacobian_raw(x.as_slice());
        if j.iter().all(|v| v.is_finite()) {
            Ok(j)
        } else {
            Err(Error::Numeric(format!("non-finite Jacobian at {:?}", x.as_slice())))
        }
    }
}

/// `x^e`, using integer powers where possible so negative bases stay finite.
fn pow(x: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() <= 64.0 {
        x.powi(e as i32)
    } else {
        x.powf(e)
    }
}

/// `d/dx [1 / (1 + x^e)]`.
fn hill_slope(x: f64, e: f64) -> f64 {
    let xe = pow(x, e);
    -e * pow(x, e - 1.0) / ((1.0 + xe) * (1.0 + xe))
}

/// `d/dx [x^e / (x^e + c)]`.
fn hill_slope_increasing(x: f64, e: f64, c: f64) -> f64 {
    let xe = pow(x, e);
    e * pow(x, e - 1.0) * c / ((xe + c) * (xe + c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Stability {
    Stable,
    Unstable,
    Indeterminate,
}

const CLASSIFY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub x: Vec<f64>,
    pub classification: Stability,
    /// `(re, im)` pairs sorted by real part.
    pub eigenvalues: Vec<(f64, f64)>,
}

impl Equilibrium {
    pub fn point(&self) -> Vector {
        Vector::from_vec(self.x.clone())
    }

    pub fn eigenvalues_complex(&self) -> Vec<Complex<f64>> {
        self.eigenvalues.iter().map(|&(re, im)| Complex::new(re, im)).collect()
    }
}

/// Classifies a root of `sys` (in the coordinates of `sys`) from its Jacobian spectrum.
pub fn classify(sys: &SystemDef, x: &Vector) -> Result<Equilibrium> {
    let residual = sys.eval(x).amax();
    if !(residual <= 1e-9) {
        return Err(Error::Validation(format!("not an equilibrium: ‖f(x)‖ = {residual:.3e}")));
    }
    let ev = linalg::eigenvalues(&sys.jacobian(x)?)?;
    let max_re = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let classification = if max_re < -CLASSIFY_MARGIN {
        Stability::Stable
    } else if max_re > CLASSIFY_MARGIN {
        Stability::Unstable
    } else {
        Stability::Indeterminate
    };
    Ok(Equilibrium {
        x: x.as_slice().to_vec(),
        classification,
        eigenvalues: ev.iter().map(|z| (z.re, z.im)).collect(),
    })
}

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_MAX_HALVINGS: usize = 8;
const NEWTON_TOL: f64 = 1e-12;
const DEDUP_RADIUS: f64 = 1e-6;

/// Damped Newton from `x0`; `None` when the start diverges or hits a singular Jacobian.
pub fn newton(sys: &SystemDef, x0: &Vector) -> Option<Vector> {
    let mut x = x0.clone();
    let mut fx = sys.eval(&x);
    let mut res = fx.amax();
    for _ in 0..NEWTON_MAX_ITER {
        if !res.is_finite() {
            return None;
        }
        if res <= NEWTON_TOL {
            return Some(x);
        }
        let jac = sys.jacobian(&x).ok()?;
        let step = jac.lu().solve(&fx)?;
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let trial = &x - &step * lambda;
            let ft = sys.eval(&trial);
            let rt = ft.amax();
            if rt.is_finite() && rt < res {
                accepted = Some((trial, ft, rt));
                break;
            }
            lambda *= 0.5;
        }
        let (xn, fxn, rn) = match accepted {
            Some(a) => a,
            None => {
                let trial = &x - &step * lambda;
                let ft = sys.eval(&trial);
                let rt = ft.amax();
                (trial, ft, rt)
            }
        };
        x = xn;
        fx = fxn;
        res = rn;
    }
    (res <= NEWTON_TOL).then_some(x)
}

/// Newton multistart from every point of a `grid`-per-axis lattice over `bounds`.
///
/// Roots are kept if they lie in `bounds`, deduplicated within `1e-6` (max norm)
/// and returned sorted by coordinates.
pub fn find_equilibria(sys: &SystemDef, bounds: &Bounds, grid: usize, tol: f64) -> Result<Vec<Equilibrium>> {
    if grid < 2 {
        return Err(Error::Validation("grid must have at least 2 points per axis".into()));
    }
    if bounds.dim() != sys.dim() {
        return Err(Error::Dimension("box dimension does not match the system".into()));
    }
    let starts = bounds.grid_points(grid);
    let mut roots: Vec<Vector> = starts
        .par_iter()
        .filter_map(|x0| newton(sys, x0))
        .filter(|x| bounds.contains(x, 1e-9) && sys.eval(x).amax() <= tol)
        .collect();
    roots.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut unique: Vec<Vector> = Vec::new();
    for r in roots {
        if !unique.iter().any(|u| (u - &r).amax() <= DEDUP_RADIUS) {
            unique.push(r);
        }
    }
    unique.iter().map(|x| classify(sys, x)).collect()
}

/// Newton-refined versions of the equilibria listed for a built-in system.
pub fn registered_equilibria(sys: &SystemDef) -> Result<Vec<Equilibrium>> {
    let (_, info) = info_for(sys.name()).ok_or_else(|| Error::Lookup(sys.name().to_string()))?;
    info.known_equilibria
        .iter()
        .map(|x| {
            let x0 = Vector::from_column_slice(x) - sys.offset();
            let root = newton(sys, &x0)
                .ok_or_else(|| Error::Numeric(format!("Newton failed from {x:?}")))?;
            classify(sys, &root)
        })
        .collect()
}

/// `g(y) = f(y + x_eq)`; composes with any existing offset.
pub fn translate_to_origin(sys: &SystemDef, eq: &Equilibrium) -> Result<SystemDef> {
    if eq.x.len() != sys.dim() {
        return Err(Error::Dimension("equilibrium dimension does not match the system".into()));
    }
    let shift = eq.point();
    let residual = sys.eval(&shift).amax();
    if !(residual <= 1e-9) {
        return Err(Error::Validation(format!(
            "point is not an equilibrium (‖f‖ = {residual:.3e})"
        )));
    }
    let mut out = sys.clone();
    out.offset = &sys.offset + shift;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn defaults(name: &str) -> SystemDef {
        registry_get(name, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn registry_lookup_and_validation() {
        assert!(matches!(registry_get("nope", &BTreeMap::new()), Err(Error::Lookup(_))));
        let mut o = BTreeMap::new();
        o.insert("zeta".to_string(), 1.0);
        assert!(matches!(registry_get("toggleSwitch", &o), Err(Error::Validation(_))));
        let mut o = BTreeMap::new();
        o.insert("beta".to_string(), -1.0);
        assert!(registry_get("repressilator", &o).is_err());
        let mut o = BTreeMap::new();
        o.insert("alpha1".to_string(), 2.0);
        let s = registry_get("toggleSwitch", &o).unwrap();
        assert_eq!(s.params_map()["alpha1"], 2.0);
        assert_eq!(s.params_map()["gamma"], 10.0);
    }

    #[test]
    fn listed_points_are_near_roots() {
        let t = defaults("toggleSwitch");
        assert!(t.eval(&Vector::from_vec(vec![0.668, 0.9829])).amax() < 2e-3);
        let s = defaults("scalarLogLF");
        assert_eq!(s.eval(&Vector::zeros(2)).amax(), 0.0);
        let r = defaults("repressilator");
        let eq = &registered_equilibria(&r).unwrap()[0];
        let root = eq.x[0];
        assert!((root.powi(3) + root - 5.0).abs() < 1e-10);
        assert!((root - 1.516).abs() < 1e-3);
        assert!(eq.x.iter().all(|v| (v - root).abs() < 1e-12));
    }

    #[test]
    fn analytic_jacobians_match_differences() {
        for name in registry_names() {
            let sys = defaults(name);
            let b = sys.default_box();
            for x in b.grid_points(4) {
                let x = x.map(|v| v * 0.9 + 0.013);
                let ja = sys.jacobian(&x).unwrap();
                let jf = jacobian_fd(&sys, &x, 1e-6).unwrap();
                let scale = ja.amax().max(1.0);
                assert!((&ja - &jf).amax() <= 1e-6 * scale, "{name} at {x}");
            }
        }
    }

    #[test]
    fn fd_jacobian_examples() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let lin = SystemDef::linear(a.clone()).unwrap();
        let j = jacobian_fd(&lin, &Vector::from_vec(vec![0.3, -2.0]), 1e-5).unwrap();
        assert!((&j - &a).amax() < 1e-8);

        struct Constant;
        impl VectorField for Constant {
            fn dim(&self) -> usize {
                2
            }
            fn eval(&self, _: &Vector) -> Vector {
                Vector::from_vec(vec![1.0, -4.0])
            }
        }
        let j = jacobian_fd(&Constant, &Vector::zeros(2), 1e-5).unwrap();
        assert_eq!(j.amax(), 0.0);
        assert!(jacobian_fd(&Constant, &Vector::zeros(2), 0.0).is_err());

        let t = defaults("toggleSwitch");
        let e2 = Vector::from_vec(vec![0.8807, 0.7808]);
        let jf = jacobian_fd(&t, &e2, default_fd_step(&e2)).unwrap();
        assert!((&jf - t.jacobian(&e2).unwrap()).amax() < 1e-6);
    }

    #[test]
    fn toggle_switch_has_three_equilibria() {
        let t = defaults("toggleSwitch");
        let eqs = find_equilibria(&t, &Bounds::new(vec![0.0; 2], vec![2.0; 2]).unwrap(), 11, 1e-9).unwrap();
        assert_eq!(eqs.len(), 3);
        let expect = [[0.66679, 0.9829], [0.8807, 0.7808], [1.2996, 0.0678]];
        let kinds = [Stability::Stable, Stability::Unstable, Stability::Stable];
        for ((e, x), k) in eqs.iter().zip(expect).zip(kinds) {
            assert!((e.x[0] - x[0]).abs() < 1e-3 && (e.x[1] - x[1]).abs() < 1e-3, "{:?}", e.x);
            assert_eq!(e.classification, k);
        }
    }

    #[test]
    fn linear_system_single_equilibrium() {
        let lin = SystemDef::linear(-Matrix::identity(3, 3)).unwrap();
        let eqs = find_equilibria(&lin, &Bounds::symmetric(3, 1.0).unwrap(), 3, 1e-9).unwrap();
        assert_eq!(eqs.len(), 1);
        assert!(eqs[0].x.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(eqs[0].classification, Stability::Stable);
        assert!(find_equilibria(&lin, &Bounds::symmetric(3, 1.0).unwrap(), 1, 1e-9).is_err());
    }

    #[test]
    fn translation_properties() {
        let r = defaults("repressilator");
        let eq = registered_equilibria(&r).unwrap().remove(0);
        let g = translate_to_origin(&r, &eq).unwrap();
        assert!(g.eval(&Vector::zeros(3)).amax() <= 1e-10);
        let ev = linalg::eigenvalues(&g.jacobian(&Vector::zeros(3)).unwrap()).unwrap();
        assert_relative_eq!(ev[0].re, -2.3936, epsilon = 1e-3);
        assert_relative_eq!(ev[1].re, -0.3032, epsilon = 1e-3);
        assert_relative_eq!(ev[1].im.abs(), 1.2069, epsilon = 1e-3);

        let s = defaults("scalarLogLF");
        let origin = classify(&s, &Vector::zeros(2)).unwrap();
        let same = translate_to_origin(&s, &origin).unwrap();
        for x in Bounds::symmetric(2, 3.0).unwrap().grid_points(5) {
            assert_eq!(s.eval(&x), same.eval(&x));
        }
        assert!(translate_to_origin(&s, &Equilibrium {
            x: vec![1.0, 1.0],
            classification: Stability::Stable,
            eigenvalues: vec![],
        })
        .is_err());
    }

    #[test]
    fn spec_round_trip() {
        let t = defaults("hpaAxis");
        let eq = registered_equilibria(&t).unwrap().remove(0);
        let g = translate_to_origin(&t, &eq).unwrap();
        let back = SystemDef::from_spec(&g.to_spec()).unwrap();
        assert_eq!(back, g);
        let lin = SystemDef::linear(Matrix::identity(2, 2)).unwrap();
        assert_eq!(SystemDef::from_spec(&lin.to_spec()).unwrap(), lin);
    }
}
