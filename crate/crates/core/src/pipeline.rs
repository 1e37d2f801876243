//! Configured runs of the construction pipeline.
//!
//! A [`RunConfig`] is a single JSON document. Every field is optional so that
//! a file and a set of command-line overrides can be layered with
//! [`RunConfig::merged`]; the later layer wins field by field.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::doa::{self, ContainmentReport, ContourSet, DoaBudget, DoaEstimate, LevelGrid, Region};
use crate::dynamics::{
    find_equilibria, newton, registered_equilibria, registry_get, registry_names, translate_to_origin, Bounds,
    Equilibrium, SystemDef, SystemSpec, VectorField,
};
use crate::error::{Error, Result};
use crate::ftlf::{self, FtCertificate, SearchBudget, SublevelSpec};
use crate::linalg::{self, Matrix, QuadraticForm, Vector, MAX_DIM};
use crate::lyap::{self, LyapFunction};
use crate::ode::{self, IntegratorCfg, Trajectory};

pub const DEFAULT_BISECTION_TOL: f64 = 1e-2;
pub const DEFAULT_EQ_GRID: usize = 9;
const CONTAINMENT_SLACK: f64 = 1e-6;

/// System definition file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SystemFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_box: Option<Bounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

impl SystemFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        file.resolve()?;
        Ok(file)
    }

    /// The system and its analysis box in original coordinates.
    pub fn resolve(&self) -> Result<(SystemDef, Bounds)> {
        let sys = SystemDef::from_spec(&SystemSpec {
            name: self.name.clone(),
            params: self.params.clone(),
            offset: None,
            matrix: self.matrix.clone(),
        })?;
        if let Some(n) = self.n {
            if n != sys.dim() {
                return Err(Error::Dimension(format!("`n` is {n} but `{}` has dimension {}", self.name, sys.dim())));
            }
        }
        let bounds = match &self.analysis_box {
            Some(b) => checked_box(b, sys.dim())?,
            None => sys.default_box(),
        };
        Ok((sys, bounds))
    }
}

fn checked_box(b: &Bounds, n: usize) -> Result<Bounds> {
    let b = Bounds::new(b.lower.clone(), b.upper.clone())?;
    if b.dim() != n {
        return Err(Error::Dimension(format!("box has dimension {} but the system has {n}", b.dim())));
    }
    Ok(b)
}

/// A built-in name, a path to a [`SystemFile`], or an inline definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemRef {
    Named(String),
    Inline(SystemFile),
}

impl SystemRef {
    pub fn resolve(&self) -> Result<(SystemDef, Bounds)> {
        match self {
            SystemRef::Inline(file) => file.resolve(),
            SystemRef::Named(name) if registry_names().contains(&name.as_str()) => {
                let sys = registry_get(name, &BTreeMap::new())?;
                let bounds = sys.default_box();
                Ok((sys, bounds))
            }
            SystemRef::Named(name) => {
                let path = Path::new(name);
                if !path.is_file() {
                    return Err(Error::Lookup(name.clone()));
                }
                SystemFile::parse(&std::fs::read_to_string(path)?)?.resolve()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub enum EquilibriumSel {
    /// Position in the equilibrium list of the system.
    Index(usize),
    /// Starting point for Newton.
    Point(Vec<f64>),
}

/// How to pick `P` for `V(x) = xᵀPx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase", deny_unknown_fields)]
pub enum PSpec {
    Identity,
    Scaled { c: f64 },
    /// Solution of `AᵀP + PA = −q·I` at the linearization.
    Lyapunov {
        #[serde(default = "one")]
        q: f64,
    },
    Matrix { rows: Vec<Vec<f64>> },
}

fn one() -> f64 {
    1.0
}

impl Default for PSpec {
    fn default() -> Self {
        PSpec::Lyapunov { q: 1.0 }
    }
}

impl PSpec {
    pub fn resolve(&self, a: &Matrix) -> Result<QuadraticForm> {
        let n = a.nrows();
        match self {
            PSpec::Identity => Ok(QuadraticForm::identity(n)),
            PSpec::Scaled { c } => QuadraticForm::scaled_identity(n, *c),
            PSpec::Lyapunov { q } => {
                if !(*q > 0.0 && q.is_finite()) {
                    return Err(Error::Validation(format!("Lyapunov weight must be positive, got {q}")));
                }
                linalg::lyapunov_solve(a, &(Matrix::identity(n, n) * *q))
            }
            PSpec::Matrix { rows } => {
                let p = QuadraticForm::from_rows(rows)?;
                if p.dim() != n {
                    return Err(Error::Dimension(format!("P is {}x{0} but the system has dimension {n}", p.dim())));
                }
                Ok(p)
            }
        }
    }
}

/// `identity`, `scaled:C`, `lyapunov[:Q]` or `matrix:a,b;c,d`.
impl FromStr for PSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let number = |a: Option<&str>| -> Result<f64> {
            let a = a.ok_or_else(|| Error::Validation(format!("`{head}` needs a value")))?;
            a.parse::<f64>()
                .map_err(|_| Error::Validation(format!("`{a}` is not a number")))
        };
        match head {
            "identity" if arg.is_none() => Ok(PSpec::Identity),
            "scaled" => Ok(PSpec::Scaled { c: number(arg)? }),
            "lyapunov" => Ok(PSpec::Lyapunov {
                q: if arg.is_some() { number(arg)? } else { 1.0 },
            }),
            "matrix" => {
                let body = arg.ok_or_else(|| Error::Validation("`matrix` needs rows".into()))?;
                let rows = body
                    .split(';')
                    .map(|row| row.split(',').map(|v| number(Some(v))).collect::<Result<Vec<f64>>>())
                    .collect::<Result<Vec<_>>>()?;
                Ok(PSpec::Matrix { rows })
            }
            _ => Err(Error::Validation(format!(
                "unrecognized P specification `{s}`; use identity, scaled:C, lyapunov[:Q] or matrix:a,b;c,d"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Budgets {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ft_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multistarts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doa_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contour_resolution: Option<usize>,
}

macro_rules! layer {
    ($base:expr, $top:expr, $($field:ident),+) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )+
    };
}

impl Budgets {
    fn merged(mut self, top: Budgets) -> Self {
        layer!(self, top, ft_grid, multistarts, boundary_samples, doa_grid, top_k, contour_resolution);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<EquilibriumSel>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<PSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    /// Analysis box in original coordinates.
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    /// Level of `V` bounding the finite-time candidate set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<bool>,
    /// Expansion steps applied before the level search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expand: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budgets: Option<Budgets>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl RunConfig {
    /// Parses and checks the fields that need no file access.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => {
                Err(Error::Validation(format!("`{name}` must be positive and finite, got {x}")))
            }
            _ => Ok(()),
        };
        positive("d", self.d)?;
        positive("level", self.level)?;
        if let Some(m) = self.margin {
            if !(0.0..0.5).contains(&m) {
                return Err(Error::Validation(format!("`margin` must lie in [0, 0.5), got {m}")));
            }
        }
        if let Some(grid) = &self.d_grid {
            if grid.is_empty() || grid.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
                return Err(Error::Validation("`dGrid` needs positive finite entries".into()));
            }
        }
        if let Some(b) = &self.bounds {
            Bounds::new(b.lower.clone(), b.upper.clone())?;
        }
        if let Some(chain) = &self.expand {
            if chain.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
                return Err(Error::Validation("expansion steps must be nonnegative".into()));
            }
        }
        if let Some([lo, hi]) = self.c_range {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::Validation(format!("`cRange` needs 0 < lo < hi, got [{lo}, {hi}]")));
            }
        }
        if let Some(SystemRef::Inline(file)) = &self.system {
            file.resolve()?;
        }
        if let Some(EquilibriumSel::Point(x)) = &self.equilibrium {
            if x.is_empty() || x.len() > MAX_DIM || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation("equilibrium point needs finite coordinates".into()));
            }
        }
        if let Some(b) = &self.budgets {
            let grid_ok = |g: Option<usize>| g.is_none_or(|g| (2..=2001).contains(&g));
            if !grid_ok(b.ft_grid) || !grid_ok(b.doa_grid) {
                return Err(Error::Validation("grid budgets must lie in 2..=2001".into()));
            }
        }
        if let Some(PSpec::Scaled { c }) = &self.p {
            positive("P.c", Some(*c))?;
        }
        Ok(())
    }

    /// `self` with every field set in `top` replaced.
    pub fn merged(mut self, top: RunConfig) -> Self {
        let budgets = match (self.budgets.take(), top.budgets.clone()) {
            (Some(b), Some(t)) => Some(b.merged(t)),
            (b, t) => t.or(b),
        };
        layer!(self, top, system, equilibrium, p, d, d_grid, margin, bounds, level, flow, expand, c_range, seed, output_dir);
        self.budgets = budgets;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(ftlf::DEFAULT_SEED)
    }

    fn budgets(&self) -> Budgets {
        self.budgets.clone().unwrap_or_default()
    }

    pub fn search_budget(&self, n: usize) -> SearchBudget {
        let b = self.budgets();
        let base = SearchBudget::for_dim(n);
        SearchBudget {
            grid_per_axis: b.ft_grid.unwrap_or(base.grid_per_axis),
            multistarts: b.multistarts.unwrap_or(base.multistarts),
            boundary_samples: b.boundary_samples.unwrap_or(base.boundary_samples),
            seed: self.seed(),
        }
    }

    pub fn doa_budget(&self, n: usize) -> DoaBudget {
        let b = self.budgets();
        let base = DoaBudget::for_dim(n);
        DoaBudget {
            grid_per_axis: b.doa_grid.unwrap_or(base.grid_per_axis),
            top_k: b.top_k.unwrap_or(base.top_k),
            seed: self.seed(),
        }
    }

    pub fn contour_resolution(&self, n: usize) -> usize {
        self.budgets()
            .contour_resolution
            .unwrap_or(if n <= 2 { 201 } else { 400 })
    }

    pub fn resolve_system(&self) -> Result<(SystemDef, Bounds)> {
        let (sys, default_box) = self
            .system
            .as_ref()
            .ok_or_else(|| Error::Validation("no system given".into()))?
            .resolve()?;
        let bounds = match &self.bounds {
            Some(b) => checked_box(b, sys.dim())?,
            None => default_box,
        };
        Ok((sys, bounds))
    }
}

/// Equilibria of a system, in original coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EquilibriaReport {
    pub system: SystemSpec,
    pub bounds: Bounds,
    pub equilibria: Vec<Equilibrium>,
}

/// Listed equilibria for built-in systems, otherwise a Newton multistart over `bounds`.
pub fn list_equilibria(sys: &SystemDef, bounds: &Bounds) -> Result<Vec<Equilibrium>> {
    if let Ok(found) = registered_equilibria(sys) {
        return Ok(found);
    }
    if let crate::dynamics::Model::Linear(_) = sys.model() {
        return Ok(vec![crate::dynamics::classify(sys, &Vector::zeros(sys.dim()))?]);
    }
    find_equilibria(sys, bounds, DEFAULT_EQ_GRID, 1e-9)
}

pub fn equilibria(sys: &SystemDef, bounds: &Bounds) -> Result<EquilibriaReport> {
    Ok(EquilibriaReport {
        system: sys.to_spec(),
        bounds: bounds.clone(),
        equilibria: find_equilibria(sys, bounds, DEFAULT_EQ_GRID, 1e-9)?,
    })
}

/// The system translated to the selected equilibrium, with the box in the new coordinates.
pub struct Localized {
    pub original: SystemDef,
    pub equilibrium: Equilibrium,
    pub local: SystemDef,
    pub bounds: Bounds,
}

pub fn localize(cfg: &RunConfig) -> Result<Localized> {
    let (sys, bounds) = cfg.resolve_system()?;
    let eq = match cfg.equilibrium.clone().unwrap_or(EquilibriumSel::Index(0)) {
        EquilibriumSel::Index(i) => {
            let all = list_equilibria(&sys, &bounds)?;
            let count = all.len();
            all.into_iter()
                .nth(i)
                .ok_or_else(|| Error::Validation(format!("equilibrium index {i} out of range ({count} found)")))?
        }
        EquilibriumSel::Point(x) => {
            if x.len() != sys.dim() {
                return Err(Error::Dimension("equilibrium point has the wrong dimension".into()));
            }
            let root = newton(&sys, &Vector::from_vec(x.clone()))
                .ok_or_else(|| Error::Numeric(format!("Newton did not converge from {x:?}")))?;
            crate::dynamics::classify(&sys, &root)?
        }
    };
    let local = translate_to_origin(&sys, &eq)?;
    let local_bounds = bounds.shifted(&eq.point());
    Ok(Localized {
        original: sys,
        equilibrium: eq,
        local,
        bounds: local_bounds,
    })
}

/// Linear screening, horizon choice and the sampled nonlinear check.
pub fn verify(cfg: &RunConfig) -> Result<FtCertificate> {
    let loc = localize(cfg)?;
    let n = loc.local.dim();
    let a = loc.local.jacobian(&Vector::zeros(n))?;
    let p = cfg.p.clone().unwrap_or_default().resolve(&a)?;
    let d = match cfg.d {
        Some(d) => d,
        None => {
            let grid = cfg.d_grid.clone().unwrap_or_else(ftlf::default_d_grid);
            ftlf::find_horizon(&a, &p, &grid, cfg.margin.unwrap_or(ftlf::DEFAULT_MARGIN))?
        }
    };
    let level = match cfg.level {
        Some(c) => c,
        None => ftlf::largest_sublevel_in_box(&p, &loc.bounds)?,
    };
    let spec = SublevelSpec {
        level,
        bounds: loc.bounds.clone(),
    };
    ftlf::verify_nonlinear(&loc.local, &p, d, &spec, &cfg.search_budget(n), &IntegratorCfg::default())
}

/// `W` from a passing certificate.
pub fn build(cert: &FtCertificate, flow: bool) -> Result<LyapFunction> {
    if !cert.passed() {
        return Err(Error::Certification(format!(
            "certificate did not pass (max decrease {:.3e}); choose another P or d",
            cert.max_decrease
        )));
    }
    let sys = SystemDef::from_spec(&cert.system)?;
    if flow {
        lyap::build_flow_w(&sys, &cert.p, cert.d, &IntegratorCfg::default())
    } else {
        lyap::build_ray_w(&sys, &cert.p, cert.d)
    }
}

/// Level search, containment and contour for `W`.
///
/// `cfg.box` overrides the default box of the system; `within` adds a
/// containment check against the candidate set of a certificate.
pub fn doa(w: &LyapFunction, cfg: &RunConfig, within: Option<&FtCertificate>) -> Result<(DoaEstimate, ContourSet)> {
    let mut w = w.clone();
    for &alpha in cfg.expand.as_deref().unwrap_or(&[]) {
        w = lyap::expand_w(&w, alpha)?;
    }
    let n = w.dim();
    let offset = w.system().offset().clone();
    let bounds = match &cfg.bounds {
        Some(b) => checked_box(b, n)?,
        None => w.system().default_box(),
    }
    .shifted(&offset);
    let budget = cfg.doa_budget(n);
    let grid = LevelGrid::evaluate(&w, &bounds, budget.grid_per_axis, true)?;
    let range = match cfg.c_range {
        Some([lo, hi]) => (lo, hi),
        None => doa::default_c_range(&grid)?,
    };
    let eps = doa::default_eps(&bounds);
    let mut est = doa::find_best_c(&w, &grid, range, DEFAULT_BISECTION_TOL, eps, &budget)?;
    let region = match within {
        Some(cert) => {
            if cert.p.dim() != n {
                return Err(Error::Dimension("certificate and W disagree on dimension".into()));
            }
            Region::Quadratic {
                p: cert.p.clone(),
                level: cert.c_v,
            }
        }
        None => Region::Box(bounds.clone()),
    };
    let containment: ContainmentReport = doa::containment_check(&w, &grid, est.c, &region, CONTAINMENT_SLACK)?;
    est.containment = Some(containment);
    let contour = doa::export_contour(&w, est.c, &bounds, cfg.contour_resolution(n), true)?;
    Ok((est, contour))
}

/// Trajectory of the untranslated system from `x0`.
pub fn trace(sys: &SystemDef, x0: &[f64], t: f64) -> Result<Trajectory> {
    if x0.len() != sys.dim() {
        return Err(Error::Dimension(format!("start point needs {} coordinates", sys.dim())));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Validation(format!("time horizon must be positive, got {t}")));
    }
    ode::trajectory(sys, &Vector::from_column_slice(x0), t, &IntegratorCfg::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_spec_strings() {
        assert_eq!("identity".parse::<PSpec>().unwrap(), PSpec::Identity);
        assert_eq!("scaled:0.1".parse::<PSpec>().unwrap(), PSpec::Scaled { c: 0.1 });
        assert_eq!("lyapunov".parse::<PSpec>().unwrap(), PSpec::Lyapunov { q: 1.0 });
        assert_eq!(
            "matrix:1,0;0,2".parse::<PSpec>().unwrap(),
            PSpec::Matrix {
                rows: vec![vec![1.0, 0.0], vec![0.0, 2.0]]
            }
        );
        assert!("scaled".parse::<PSpec>().is_err());
        assert!("cholesky:2".parse::<PSpec>().is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = RunConfig::parse(r#"{"system":"ring3d","d":0.3,"seed":7,"budgets":{"ftGrid":11,"topK":3}}"#).unwrap();
        let flags = RunConfig {
            d: Some(0.2),
            budgets: Some(Budgets {
                top_k: Some(5),
                ..Default::default()
            }),
            ..Default::default()
        };
        let cfg = file.merged(flags);
        assert_eq!(cfg.d, Some(0.2));
        assert_eq!(cfg.seed(), 7);
        let b = cfg.budgets.unwrap();
        assert_eq!((b.ft_grid, b.top_k), (Some(11), Some(5)));
    }

    #[test]
    fn config_rejects_bad_fields() {
        for bad in [
            r#"{"d":-1}"#,
            r#"{"margin":0.7}"#,
            r#"{"cRange":[0.3,0.1]}"#,
            r#"{"box":{"lower":[1],"upper":[0]}}"#,
            r#"{"unknown":1}"#,
            r#"{"system":{"name":"ring3d","n":2}}"#,
        ] {
            assert!(RunConfig::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn system_file_round_trip() {
        let text = r#"{"name":"toggleSwitch","n":2,"params":{"beta":4},"analysisBox":{"lower":[0,0],"upper":[2,2]}}"#;
        let file = SystemFile::parse(text).unwrap();
        let (sys, bx) = file.resolve().unwrap();
        assert_eq!(sys.dim(), 2);
        assert_eq!(bx.upper, vec![2.0, 2.0]);
        assert!(SystemFile::parse(r#"{"name":"nope"}"#).is_err());
    }

    #[test]
    fn ring_verify_and_build() {
        let cfg = RunConfig {
            system: Some(SystemRef::Named("ring3d".into())),
            p: Some(PSpec::Identity),
            d: Some(0.2),
            level: Some(0.8),
            budgets: Some(Budgets {
                ft_grid: Some(9),
                multistarts: Some(2),
                ..Default::default()
            }),
            ..Default::default()
        };
        let cert = verify(&cfg).unwrap();
        assert!(cert.passed());
        let w = build(&cert, false).unwrap();
        assert!(w.value(&Vector::zeros(3)).unwrap().abs() < 1e-15);
    }
}
