//! Local refinement of sampled maxima.

use crate::error::Result;
use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentCfg {
    pub max_iters: usize,
    pub initial_step: f64,
    pub min_step: f64,
}

impl AscentCfg {
    /// Step sizes relative to a characteristic length of the search region.
    pub fn for_scale(scale: f64) -> Self {
        Self {
            max_iters: 200,
            initial_step: 0.05 * scale,
            min_step: 1e-7 * scale.max(1e-12),
        }
    }
}

/// Central-difference gradient of a fallible scalar map.
pub fn fd_gradient<F>(f: &F, x: &Vector) -> Result<Vector>
where
    F: Fn(&Vector) -> Result<f64>,
{
    let h = 1e-6 * x.amax().max(1.0);
    let mut g = Vector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp)?;
        xp[i] = x[i] - h;
        let fm = f(&xp)?;
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Normalized-gradient ascent with an adaptive step.
///
/// `project(from, to)` maps a trial point back into the feasible set, or
/// rejects it with `None`; `from` is always feasible.
pub fn ascend<F, P>(f: &F, x0: Vector, f0: f64, project: P, cfg: &AscentCfg) -> Result<(Vector, f64)>
where
    F: Fn(&Vector) -> Result<f64>,
    P: Fn(&Vector, &Vector) -> Option<Vector>,
{
    let (mut x, mut fx) = (x0, f0);
    let mut step = cfg.initial_step;
    for _ in 0..cfg.max_iters {
        let g = fd_gradient(f, &x)?;
        let gn = g.norm();
        if !(gn > 0.0) || !gn.is_finite() {
            break;
        }
        let trial = &x + &g * (step / gn);
        let accepted = match project(&x, &trial) {
            Some(y) => {
                let fy = f(&y)?;
                if fy > fx {
                    x = y;
                    fx = fy;
                    true
                } else {
                    false
                }
            }
            None => false,
        };
        step *= if accepted { 1.5 } else { 0.5 };
        if step < cfg.min_step {
            break;
        }
    }
    Ok((x, fx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn climbs_concave_quadratic() {
        let f = |x: &Vector| Ok(-(x[0] - 1.0).powi(2) - (x[1] + 0.5).powi(2));
        let x0 = Vector::from_vec(vec![0.0, 0.0]);
        let f0 = f(&x0).unwrap();
        let (x, fx) = ascend(&f, x0, f0, |_, y| Some(y.clone()), &AscentCfg::for_scale(1.0)).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] + 0.5).abs() < 1e-4);
        assert!(fx > -1e-8);
    }

    #[test]
    fn respects_projection() {
        let f = |x: &Vector| Ok(x[0]);
        let proj = |_: &Vector, y: &Vector| {
            let mut z = y.clone();
            z[0] = z[0].min(0.3);
            Some(z)
        };
        let x0 = Vector::from_vec(vec![0.0]);
        let (x, _) = ascend(&f, x0, 0.0, proj, &AscentCfg::for_scale(1.0)).unwrap();
        assert!((x[0] - 0.3).abs() < 1e-12);
    }
}
