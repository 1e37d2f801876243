//! Certified sublevel sets of `W` and their geometry.
//!
//! `W` and `Ẇ` are evaluated once on a tensor grid; every level `C` is then
//! judged on the grid-connected component of `{W ≤ C}` that contains the
//! equilibrium. A level passes when that component stays off the box faces
//! and `Ẇ < 0` on it outside a small ball around the origin, both on the grid
//! samples and after local ascent from the worst ones.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Bounds, SystemSpec};
use crate::error::{Error, Result};
use crate::linalg::{QuadraticForm, Vector};
use crate::lyap::{LyapExport, LyapFunction};
use crate::ode::{self, IntegratorCfg};
use crate::search::{self, AscentCfg};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DoaBudget {
    pub grid_per_axis: usize,
    pub top_k: usize,
    pub seed: u64,
}

impl DoaBudget {
    pub fn for_dim(n: usize) -> Self {
        Self {
            grid_per_axis: if n <= 2 { 201 } else { 61 },
            top_k: 20,
            seed: crate::ftlf::DEFAULT_SEED,
        }
    }
}

/// `1e-3` of the box diagonal.
pub fn default_eps(bounds: &Bounds) -> f64 {
    1e-3 * bounds.diagonal()
}

/// `W` (and optionally `Ẇ`) sampled on a tensor grid.
///
/// Nodes where evaluation fails or is non-finite carry `W = +∞` and are never
/// part of a sublevel set.
#[derive(Debug, Clone)]
pub struct LevelGrid {
    bounds: Bounds,
    axes: Vec<Vec<f64>>,
    k: usize,
    w: Vec<f64>,
    wdot: Vec<f64>,
    failed: usize,
}

/// Grid-connected piece of `{W ≤ C}` around the origin.
#[derive(Debug, Clone)]
pub struct Component {
    pub level: f64,
    pub members: Vec<usize>,
    mask: Vec<bool>,
    pub touches_box: bool,
}

impl Component {
    pub fn contains_node(&self, idx: usize) -> bool {
        self.mask.get(idx).copied().unwrap_or(false)
    }
}

impl LevelGrid {
    pub fn evaluate(w: &LyapFunction, bounds: &Bounds, per_axis: usize, with_wdot: bool) -> Result<Self> {
        let n = w.dim();
        if bounds.dim() != n {
            return Err(Error::Dimension("box and W disagree on dimension".into()));
        }
        if per_axis < 3 {
            return Err(Error::Validation("level grid needs at least 3 points per axis".into()));
        }
        let total = (per_axis as f64).powi(n as i32);
        if total > 5e7 {
            return Err(Error::Validation(format!("level grid of {total:.0} nodes is too large")));
        }
        if !bounds.contains(&Vector::zeros(n), 0.0) {
            return Err(Error::Spec("analysis box must contain the equilibrium".into()));
        }
        let points = bounds.grid_points(per_axis);
        let vals: Vec<(f64, f64)> = points
            .par_iter()
            .map(|x| {
                let r = if with_wdot {
                    w.value_and_wdot(x)
                } else {
                    w.value(x).map(|v| (v, f64::NAN))
                };
                match r {
                    Ok((v, vd)) if v.is_finite() => (v, if vd.is_nan() && with_wdot { f64::INFINITY } else { vd }),
                    _ => (f64::INFINITY, f64::INFINITY),
                }
            })
            .collect();
        let failed = vals.iter().filter(|v| v.0.is_infinite()).count();
        let (wv, wd) = vals.into_iter().unzip();
        Ok(Self {
            bounds: bounds.clone(),
            axes: bounds.grid_axes(per_axis),
            k: per_axis,
            w: wv,
            wdot: wd,
            failed,
        })
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn per_axis(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn failed_nodes(&self) -> usize {
        self.failed
    }

    pub fn w_at(&self, idx: usize) -> f64 {
        self.w[idx]
    }

    pub fn wdot_at(&self, idx: usize) -> f64 {
        self.wdot[idx]
    }

    fn dim(&self) -> usize {
        self.axes.len()
    }

    fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let n = self.dim();
        let mut m = vec![0; n];
        for d in (0..n).rev() {
            m[d] = idx % self.k;
            idx /= self.k;
        }
        m
    }

    fn flat(&self, m: &[usize]) -> usize {
        m.iter().fold(0, |acc, &i| acc * self.k + i)
    }

    pub fn point(&self, idx: usize) -> Vector {
        let m = self.multi_index(idx);
        Vector::from_fn(self.dim(), |d, _| self.axes[d][m[d]])
    }

    fn neighbors(&self, idx: usize) -> Vec<usize> {
        let m = self.multi_index(idx);
        let mut out = Vec::with_capacity(2 * m.len());
        let mut stride = 1;
        for d in (0..m.len()).rev() {
            if m[d] > 0 {
                out.push(idx - stride);
            }
            if m[d] + 1 < self.k {
                out.push(idx + stride);
            }
            stride *= self.k;
        }
        out
    }

    fn on_boundary(&self, idx: usize) -> bool {
        self.multi_index(idx).iter().any(|&i| i == 0 || i + 1 == self.k)
    }

    /// Index of the node nearest to `x`, or `None` outside the box.
    pub fn nearest(&self, x: &Vector) -> Option<usize> {
        if !self.bounds.contains(x, 0.0) {
            return None;
        }
        let m: Vec<usize> = (0..self.dim())
            .map(|d| {
                let (l, u) = (self.bounds.lower[d], self.bounds.upper[d]);
                (((x[d] - l) / (u - l) * (self.k - 1) as f64).round() as usize).min(self.k - 1)
            })
            .collect();
        Some(self.flat(&m))
    }

    fn origin(&self) -> usize {
        self.nearest(&Vector::zeros(self.dim())).expect("box contains the origin")
    }

    /// Flood fill of `{W ≤ level}` from the node nearest the origin.
    pub fn component(&self, level: f64) -> Component {
        let mut mask = vec![false; self.w.len()];
        let mut members = Vec::new();
        let start = self.origin();
        let mut touches_box = false;
        if self.w[start] <= level {
            let mut queue = VecDeque::from([start]);
            mask[start] = true;
            while let Some(i) = queue.pop_front() {
                members.push(i);
                touches_box |= self.on_boundary(i);
                for j in self.neighbors(i) {
                    if !mask[j] && self.w[j] <= level {
                        mask[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        members.sort_unstable();
        Component {
            level,
            members,
            mask,
            touches_box,
        }
    }

    /// Smallest `W` over the box faces.
    pub fn min_boundary_w(&self) -> f64 {
        (0..self.w.len())
            .filter(|&i| self.on_boundary(i))
            .map(|i| self.w[i])
            .fold(f64::INFINITY, f64::min)
    }

    /// Pairs `(inside, outside)` of neighboring nodes straddling the component boundary.
    fn boundary_edges(&self, comp: &Component) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for &i in &comp.members {
            for j in self.neighbors(i) {
                if !comp.mask[j] {
                    edges.push((i, j));
                }
            }
        }
        edges
    }
}

/// Root of `W(x) = level` on the segment `[inside, outside]` by the Illinois method.
fn edge_crossing(w: &LyapFunction, inside: &Vector, outside: &Vector, level: f64) -> Vector {
    let g = |t: f64| {
        let x = inside + (outside - inside) * t;
        match w.value(&x) {
            Ok(v) if v.is_finite() => v - level,
            _ => f64::INFINITY,
        }
    };
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let (mut ga, mut gb) = (g(a), g(b));
    let tol = 1e-9 * (1.0 + level.abs());
    let mut side = 0i8;
    for _ in 0..100 {
        let t = if gb.is_finite() && gb != ga {
            let t = (a * gb - b * ga) / (gb - ga);
            if t > a && t < b {
                t
            } else {
                0.5 * (a + b)
            }
        } else {
            0.5 * (a + b)
        };
        let gt = g(t);
        if gt.abs() <= tol || b - a < 1e-14 {
            a = t;
            break;
        }
        if gt <= 0.0 {
            a = t;
            ga = gt;
            if side == -1 && gb.is_finite() {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = t;
            gb = gt;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
    }
    inside + (outside - inside) * a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Witness {
    pub x: Vec<f64>,
    #[serde(with = "crate::float")]
    pub wdot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelCheck {
    pub level: f64,
    pub pass: bool,
    #[serde(with = "crate::float")]
    pub max_wdot: f64,
    pub argmax: Vec<f64>,
    pub touches_box: bool,
    pub component_size: usize,
    pub refined: bool,
    pub witnesses: Vec<Witness>,
}

/// `max Ẇ` over the origin's component of `{W ≤ level} \ {‖x‖ < eps}`.
///
/// Local ascent runs only when the grid samples pass, since a failing sample
/// already settles the verdict.
pub fn check_level(
    w: &LyapFunction,
    grid: &LevelGrid,
    level: f64,
    eps: f64,
    budget: &DoaBudget,
) -> Result<LevelCheck> {
    if !(level > 0.0) {
        return Err(Error::Spec(format!("level must be positive, got {level}")));
    }
    if !(eps >= 0.0) {
        return Err(Error::Spec("exclusion radius must be >= 0".into()));
    }
    let comp = grid.component(level);
    let mut samples: Vec<(f64, usize)> = comp
        .members
        .iter()
        .filter(|&&i| grid.point(i).norm() >= eps)
        .map(|&i| (grid.wdot[i], i))
        .collect();
    if samples.is_empty() {
        return Err(Error::Spec(format!("no grid samples in the sublevel set at level {level}")));
    }
    samples.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let (top_v, top_i) = samples[0];
    let mut best = (top_v, grid.point(top_i));
    let mut witnesses: Vec<Witness> = samples
        .iter()
        .take(budget.top_k)
        .map(|&(v, i)| Witness {
            x: grid.point(i).as_slice().to_vec(),
            wdot: v,
        })
        .collect();
    let mut refined = false;
    if !comp.touches_box && top_v < 0.0 {
        refined = true;
        let bounds = grid.bounds();
        let objective = |x: &Vector| -> Result<f64> {
            Ok(match w.wdot(x) {
                Ok(v) if !v.is_nan() => v,
                _ => f64::NEG_INFINITY,
            })
        };
        let feasible = |x: &Vector| {
            bounds.contains(x, 0.0) && x.norm() >= eps && matches!(w.value(x), Ok(v) if v <= level)
        };
        let project = |from: &Vector, to: &Vector| {
            let mut z = to.clone();
            bounds.clamp(&mut z);
            for s in 1..=8 {
                let y = from + (&z - from) * (s as f64 / 8.0);
                if !feasible(&y) {
                    return None;
                }
            }
            Some(z)
        };
        let ascent = AscentCfg::for_scale(bounds.diagonal() / grid.per_axis() as f64);
        let starts: Vec<(f64, usize)> = samples.iter().take(budget.top_k).copied().collect();
        let results: Vec<Result<(Vector, f64)>> = starts
            .par_iter()
            .map(|&(v, i)| search::ascend(&objective, grid.point(i), v, project, &ascent))
            .collect();
        witnesses.clear();
        for r in results {
            let (x, v) = r?;
            if v > best.0 {
                best = (v, x.clone());
            }
            witnesses.push(Witness {
                x: x.as_slice().to_vec(),
                wdot: v,
            });
        }
        witnesses.sort_by(|a, b| b.wdot.total_cmp(&a.wdot));
    }
    Ok(LevelCheck {
        level,
        pass: !comp.touches_box && best.0 < 0.0,
        max_wdot: best.0,
        argmax: best.1.as_slice().to_vec(),
        touches_box: comp.touches_box,
        component_size: comp.members.len(),
        refined,
        witnesses,
    })
}

/// One-shot form of [`check_level`] that builds its own grid.
pub fn max_wdot_on_sublevel(
    w: &LyapFunction,
    level: f64,
    eps: f64,
    bounds: &Bounds,
    budget: &DoaBudget,
) -> Result<LevelCheck> {
    let grid = LevelGrid::evaluate(w, bounds, budget.grid_per_axis, true)?;
    check_level(w, &grid, level, eps, budget)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelTrial {
    pub level: f64,
    pub pass: bool,
    #[serde(with = "crate::float")]
    pub max_wdot: f64,
    pub touches_box: bool,
}

impl From<&LevelCheck> for LevelTrial {
    fn from(c: &LevelCheck) -> Self {
        Self {
            level: c.level,
            pass: c.pass,
            max_wdot: c.max_wdot,
            touches_box: c.touches_box,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DoaEstimate {
    pub system: SystemSpec,
    pub equilibrium: Vec<f64>,
    pub lyapunov: LyapExport,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(with = "crate::float")]
    pub max_wdot: f64,
    pub argmax: Vec<f64>,
    pub epsilon_ball: f64,
    pub bounds: Bounds,
    pub touches_box: bool,
    pub component_size: usize,
    pub witnesses: Vec<Witness>,
    pub verdict: bool,
    pub budget: DoaBudget,
    pub failed_nodes: usize,
    pub trials: Vec<LevelTrial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub containment: Option<ContainmentReport>,
    pub evidence: String,
}

/// Bisection on `C` in `[c_lo, c_hi]` until the bracket is below `tol·(1 + C)`.
///
/// `c_hi` is returned directly when it already passes.
pub fn find_best_c(
    w: &LyapFunction,
    grid: &LevelGrid,
    c_range: (f64, f64),
    tol: f64,
    eps: f64,
    budget: &DoaBudget,
) -> Result<DoaEstimate> {
    let (mut lo, mut hi) = c_range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::Bracket(format!("need 0 < c_lo < c_hi, got ({lo}, {hi})")));
    }
    if !(tol > 0.0) {
        return Err(Error::Validation("bisection tolerance must be positive".into()));
    }
    let mut trials = Vec::new();
    let first = check_level(w, grid, lo, eps, budget)?;
    trials.push(LevelTrial::from(&first));
    if !first.pass {
        return Err(Error::Bracket(format!(
            "lower level {lo} already fails (max Wdot {:.3e} at {:?}, touches box: {})",
            first.max_wdot, first.argmax, first.touches_box
        )));
    }
    let mut best = first;
    let top = check_level(w, grid, hi, eps, budget)?;
    trials.push(LevelTrial::from(&top));
    if top.pass {
        best = top;
    } else {
        while hi - lo > tol * (1.0 + lo) {
            let mid = 0.5 * (lo + hi);
            let r = check_level(w, grid, mid, eps, budget)?;
            trials.push(LevelTrial::from(&r));
            if r.pass {
                lo = mid;
                best = r;
            } else {
                hi = mid;
            }
        }
    }
    Ok(DoaEstimate {
        system: w.system().to_spec(),
        equilibrium: w.system().offset().as_slice().to_vec(),
        lyapunov: w.to_export(),
        c: best.level,
        max_wdot: best.max_wdot,
        argmax: best.argmax,
        epsilon_ball: eps,
        bounds: grid.bounds().clone(),
        touches_box: best.touches_box,
        component_size: best.component_size,
        witnesses: best.witnesses,
        verdict: best.pass,
        budget: *budget,
        failed_nodes: grid.failed_nodes(),
        trials,
        containment: None,
        evidence: "dense grid sampling with local ascent refinement; not a formal proof".into(),
    })
}

/// Bracket for a level search.
///
/// The lower end is just above `W` at the grid neighbors of the origin, so the
/// first component has samples; the upper end is just above the smallest `W`
/// on the box faces, where the component must touch the box.
pub fn default_c_range(grid: &LevelGrid) -> Result<(f64, f64)> {
    let hi = 1.05 * grid.min_boundary_w();
    let o = grid.origin();
    let lo = 1.001 * grid.neighbors(o).into_iter().chain([o]).map(|i| grid.w[i]).fold(0.0, f64::max);
    if !(hi.is_finite() && lo > 0.0 && lo < hi) {
        return Err(Error::Bracket(format!("no usable level bracket on this grid (lo {lo:.3e}, hi {hi:.3e})")));
    }
    Ok((lo, hi))
}

/// Target set for [`containment_check`], in the same coordinates as `W`.
#[derive(Debug, Clone)]
pub enum Region {
    Box(Bounds),
    Quadratic { p: QuadraticForm, level: f64 },
    Sublevel { w: LyapFunction, level: f64 },
}

impl Region {
    /// Positive when `x` lies outside.
    pub fn excess(&self, x: &Vector) -> f64 {
        match self {
            Region::Box(b) => x
                .iter()
                .zip(b.lower.iter().zip(&b.upper))
                .map(|(v, (l, u))| (l - v).max(v - u))
                .fold(f64::NEG_INFINITY, f64::max),
            Region::Quadratic { p, level } => p.eval(x) - level,
            Region::Sublevel { w, level } => match w.value(x) {
                Ok(v) if v.is_finite() => v - level,
                _ => f64::INFINITY,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContainmentReport {
    pub contained: bool,
    pub samples: usize,
    #[serde(with = "crate::float")]
    pub worst_excess: f64,
    pub worst_point: Vec<f64>,
    pub truncated: bool,
}

/// Checks the boundary of the origin's component of `{W ≤ level}` against `region`.
///
/// Boundary samples are grid-edge crossings refined onto `W = level`. A
/// component reaching the grid box cannot be checked and reports `truncated`.
pub fn containment_check(
    w: &LyapFunction,
    grid: &LevelGrid,
    level: f64,
    region: &Region,
    slack: f64,
) -> Result<ContainmentReport> {
    let comp = grid.component(level);
    if comp.members.is_empty() {
        return Err(Error::Geometry(format!("level {level} is below W on the grid near the origin")));
    }
    let edges = grid.boundary_edges(&comp);
    let points: Vec<Vector> = edges
        .par_iter()
        .map(|&(i, j)| edge_crossing(w, &grid.point(i), &grid.point(j), level))
        .collect();
    let mut worst = (f64::NEG_INFINITY, Vec::new());
    for x in &points {
        let e = region.excess(x);
        if e > worst.0 {
            worst = (e, x.as_slice().to_vec());
        }
    }
    Ok(ContainmentReport {
        contained: !comp.touches_box && !points.is_empty() && worst.0 <= slack,
        samples: points.len(),
        worst_excess: worst.0,
        worst_point: worst.1,
        truncated: comp.touches_box,
    })
}

/// `true` when `x` (translated coordinates) is outside the origin's component of `{W ≤ level}`.
pub fn excludes_point(w: &LyapFunction, grid: &LevelGrid, level: f64, x: &Vector) -> bool {
    if !matches!(w.value(x), Ok(v) if v <= level) {
        return true;
    }
    match grid.nearest(x) {
        None => true,
        Some(i) => !grid.component(level).contains_node(i),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContourSet {
    pub level: f64,
    pub dim: usize,
    /// 2D polylines; closed loops repeat their first vertex.
    pub polylines: Vec<Vec<Vec<f64>>>,
    /// 3D surface samples.
    pub points: Vec<Vec<f64>>,
}

impl ContourSet {
    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty() && self.points.is_empty()
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.polylines.iter().flatten().chain(self.points.iter())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        if self.dim == 2 {
            writeln!(out, "polyline_id,x1,x2")?;
            for (id, line) in self.polylines.iter().enumerate() {
                for v in line {
                    writeln!(out, "{id},{},{}", v[0], v[1])?;
                }
            }
        } else {
            let header: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
            writeln!(out, "{}", header.join(","))?;
            for v in &self.points {
                let row: Vec<String> = v.iter().map(|c| c.to_string()).collect();
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

/// Level-set geometry in original coordinates.
///
/// In 2D this is marching squares with vertices refined onto the level; with
/// `component_only` only curves bounding the origin's component are kept. In
/// 3D it is a point cloud from `resolution` rays cast from the equilibrium.
pub fn export_contour(
    w: &LyapFunction,
    level: f64,
    bounds: &Bounds,
    resolution: usize,
    component_only: bool,
) -> Result<ContourSet> {
    let n = w.dim();
    let offset = w.system().offset().clone();
    let shift = |x: &Vector| (x + &offset).as_slice().to_vec();
    match n {
        2 => {
            let grid = LevelGrid::evaluate(w, bounds, resolution.max(3), false)?;
            let comp = component_only.then(|| grid.component(level));
            let lines = marching_squares(w, &grid, level, comp.as_ref());
            Ok(ContourSet {
                level,
                dim: 2,
                polylines: lines.iter().map(|l| l.iter().map(shift).collect()).collect(),
                points: Vec::new(),
            })
        }
        3 => {
            let pts = ray_surface(w, level, bounds, resolution.max(1))?;
            Ok(ContourSet {
                level,
                dim: 3,
                polylines: Vec::new(),
                points: pts.iter().map(shift).collect(),
            })
        }
        _ => Err(Error::Geometry(format!("contours are available in 2 or 3 dimensions, not {n}"))),
    }
}

type EdgeKey = (usize, usize);

fn marching_squares(w: &LyapFunction, grid: &LevelGrid, level: f64, comp: Option<&Component>) -> Vec<Vec<Vector>> {
    let k = grid.per_axis();
    let inside = |i: usize| grid.w_at(i) <= level;
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for i in 0..k - 1 {
        for j in 0..k - 1 {
            let c = [i * k + j, (i + 1) * k + j, (i + 1) * k + j + 1, i * k + j + 1];
            let edges = [key(c[0], c[1]), key(c[1], c[2]), key(c[2], c[3]), key(c[3], c[0])];
            let ins: Vec<bool> = c.iter().map(|&v| inside(v)).collect();
            let crossing: Vec<usize> = (0..4).filter(|&e| ins[e] != ins[(e + 1) % 4]).collect();
            match crossing.len() {
                2 => segments.push((edges[crossing[0]], edges[crossing[1]])),
                4 => {
                    let vals: Vec<f64> = c.iter().map(|&v| grid.w_at(v).min(1e300)).collect();
                    let center_in = vals.iter().sum::<f64>() / 4.0 <= level;
                    if center_in == ins[0] {
                        segments.push((edges[0], edges[1]));
                        segments.push((edges[2], edges[3]));
                    } else {
                        segments.push((edges[3], edges[0]));
                        segments.push((edges[1], edges[2]));
                    }
                }
                _ => {}
            }
        }
    }
    if let Some(comp) = comp {
        let touches = |e: &EdgeKey| comp.contains_node(e.0) || comp.contains_node(e.1);
        segments.retain(|(a, b)| touches(a) || touches(b));
    }

    let mut vertex: BTreeMap<EdgeKey, Vector> = BTreeMap::new();
    for (a, b) in &segments {
        for e in [a, b] {
            vertex.entry(*e).or_insert_with(|| Vector::zeros(0));
        }
    }
    let keys: Vec<EdgeKey> = vertex.keys().copied().collect();
    let solved: Vec<Vector> = keys
        .par_iter()
        .map(|&(a, b)| {
            let (ins, out) = if inside(a) { (a, b) } else { (b, a) };
            edge_crossing(w, &grid.point(ins), &grid.point(out), level)
        })
        .collect();
    for (kk, v) in keys.into_iter().zip(solved) {
        vertex.insert(kk, v);
    }

    let mut adjacency: BTreeMap<EdgeKey, Vec<usize>> = BTreeMap::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        adjacency.entry(*a).or_default().push(s);
        adjacency.entry(*b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let walk = |start_seg: usize, from: EdgeKey, used: &mut Vec<bool>| {
        let mut chain = vec![from];
        let mut seg = start_seg;
        let mut at = from;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            let next = if a == at { b } else { a };
            chain.push(next);
            at = next;
            match adjacency[&at].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => break,
            }
        }
        chain
    };
    for endpoint_pass in [true, false] {
        for s in 0..segments.len() {
            if used[s] {
                continue;
            }
            let (a, b) = segments[s];
            let start = if endpoint_pass {
                if adjacency[&a].len() == 1 {
                    a
                } else if adjacency[&b].len() == 1 {
                    b
                } else {
                    continue;
                }
            } else {
                a
            };
            let chain = walk(s, start, &mut used);
            lines.push(chain.iter().map(|e| vertex[e].clone()).collect());
        }
    }
    lines
}

/// Deterministic, nearly uniform directions on the unit sphere.
fn fibonacci_sphere(count: usize) -> Vec<Vector> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let th = golden * i as f64;
            Vector::from_vec(vec![r * th.cos(), r * th.sin(), z])
        })
        .collect()
}

/// First crossing of `W = level` along each ray, skipping rays that leave the box first.
fn ray_surface(w: &LyapFunction, level: f64, bounds: &Bounds, count: usize) -> Result<Vec<Vector>> {
    let dirs = fibonacci_sphere(count);
    let hits: Vec<Option<Vector>> = dirs
        .par_iter()
        .map(|u| {
            let t_max = (0..u.len())
                .map(|i| {
                    if u[i] > 0.0 {
                        bounds.upper[i] / u[i]
                    } else if u[i] < 0.0 {
                        bounds.lower[i] / u[i]
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(f64::INFINITY, f64::min);
            let steps = 400;
            let mut prev = Vector::zeros(u.len());
            for s in 1..=steps {
                let x = u * (t_max * s as f64 / steps as f64);
                let above = !matches!(w.value(&x), Ok(v) if v <= level);
                if above {
                    return Some(edge_crossing(w, &prev, &x, level));
                }
                prev = x;
            }
            None
        })
        .collect();
    Ok(hits.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpotCheck {
    pub starts: Vec<Vec<f64>>,
    #[serde(with = "crate::float::vec")]
    pub final_distance: Vec<f64>,
    pub horizon: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Integrates from `count` seeded nodes of the certified component and checks
/// that each ends within `tol` of the origin at time `horizon`.
pub fn trajectory_spot_check(
    w: &LyapFunction,
    grid: &LevelGrid,
    level: f64,
    eps: f64,
    count: usize,
    seed: u64,
    horizon: f64,
    tol: f64,
) -> Result<SpotCheck> {
    let comp = grid.component(level);
    let pool: Vec<usize> = comp.members.iter().copied().filter(|&i| grid.point(i).norm() >= eps).collect();
    if pool.is_empty() {
        return Err(Error::Spec("certified set has no interior samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vector> = (0..count).map(|_| grid.point(pool[rng.random_range(0..pool.len())])).collect();
    let cfg = IntegratorCfg::default();
    let ends: Vec<Result<Vector>> = starts
        .par_iter()
        .map(|x| ode::flow(w.system(), x, horizon, &cfg))
        .collect();
    let mut final_distance = Vec::with_capacity(count);
    for e in ends {
        final_distance.push(match e {
            Ok(y) => y.norm(),
            Err(Error::FiniteEscape { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        });
    }
    let offset = w.system().offset();
    Ok(SpotCheck {
        starts: starts.iter().map(|x| (x + offset).as_slice().to_vec()).collect(),
        pass: final_distance.iter().all(|&d| d <= tol),
        final_distance,
        horizon,
        tolerance: tol,
    })
}
