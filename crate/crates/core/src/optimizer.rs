//! Derivative-free local minimisation: Brent's method on a bracket and
//! Powell's direction-set method built on it.
//!
//! Objectives return `f64::INFINITY` where they are undefined. Brent never
//! moves the incumbent to such a point, so an undefined region acts as a wall.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GOLDEN: f64 = 0.381_966_011_250_105_1;
const GROW: f64 = 1.618_033_988_749_895;
const TINY: f64 = 1e-25;
const MAX_EXPANSIONS: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Stop when a sweep moves the point less than this (scaled units, max norm).
    pub param_tolerance: f64,
    /// Stop when a sweep lowers the value by less than this relative amount.
    pub value_tolerance: f64,
    /// Maximum number of Powell sweeps.
    pub max_iterations: usize,
    /// First trial step of every line search, scaled units.
    pub bracket_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            param_tolerance: 1e-3,
            value_tolerance: 1e-4,
            max_iterations: 50,
            bracket_step: 1.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.param_tolerance, self.value_tolerance, self.bracket_step]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive || self.max_iterations == 0 {
            return Err(Error::Config(format!("invalid optimizer settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrentResult {
    pub x: f64,
    pub f: f64,
    pub evaluations: usize,
    /// False when `max_iter` ran out before the tolerance was met.
    pub converged: bool,
}

/// Brent's method on a bracket `a < b < c` (or reversed) with
/// `f(b) <= f(a), f(c)`. Only interior points are evaluated.
pub fn brent_minimize(
    mut f: impl FnMut(f64) -> f64,
    bracket: (f64, f64, f64),
    fb: Option<f64>,
    tol: f64,
    max_iter: usize,
) -> BrentResult {
    let (a0, b0, c0) = bracket;
    let (mut a, mut b) = if a0 < c0 { (a0, c0) } else { (c0, a0) };
    let mut x = b0;
    let mut evaluations = 0;
    let mut fx = match fb {
        Some(v) => v,
        None => {
            evaluations += 1;
            f(x)
        }
    };
    let (mut w, mut v) = (x, x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = tol * (1.0 + x.abs());
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            return BrentResult {
                x,
                f: fx,
                evaluations,
                converged: true,
            };
        }
        let mut golden = true;
        if e.abs() > tol1 && fx.is_finite() && fw.is_finite() && fv.is_finite() {
            // parabola through x, w, v
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u);
        evaluations += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    BrentResult {
        x,
        f: fx,
        evaluations,
        converged: false,
    }
}

/// A bracket `(a, b, c)` around a minimum of `g` with `g(b)` known, found
/// from `g(0) = g0` with first step `h`.
fn bracket_minimum(g: &mut impl FnMut(f64) -> f64, g0: f64, h: f64) -> (f64, f64, f64, f64, usize) {
    let mut evals = 1;
    let fp = g(h);
    let (dir, f1) = if fp < g0 {
        (1.0, fp)
    } else {
        evals += 1;
        let fm = g(-h);
        if fm < g0 {
            (-1.0, fm)
        } else {
            return (-h, 0.0, h, g0, evals);
        }
    };
    let (mut a, mut b) = (0.0, dir * h);
    let mut fb = f1;
    for _ in 0..MAX_EXPANSIONS {
        let c = b + GROW * (b - a);
        let fc = g(c);
        evals += 1;
        if fc >= fb || !fc.is_finite() {
            return (a, b, c, fb, evals);
        }
        a = b;
        b = c;
        fb = fc;
    }
    // still descending: treat the last point as the minimum
    (b, b, b, fb, evals)
}

/// Moves `x` to the minimum along `dir`; returns the evaluation count.
fn line_minimize(
    f: &mut impl FnMut(&[f64]) -> f64,
    x: &mut [f64],
    fx: &mut f64,
    dir: &[f64],
    config: &OptimizerConfig,
) -> usize {
    let base = x.to_vec();
    let mut p = vec![0.0; base.len()];
    let mut g = |t: f64| {
        for ((pi, b), d) in p.iter_mut().zip(&base).zip(dir) {
            *pi = b + t * d;
        }
        f(&p)
    };
    let (a, b, c, fb, mut evals) = bracket_minimum(&mut g, *fx, config.bracket_step);
    let (t, ft) = if a == c {
        (b, fb)
    } else {
        let r = brent_minimize(&mut g, (a, b, c), Some(fb), config.param_tolerance, 100);
        evals += r.evaluations;
        (r.x, r.f)
    };
    if ft < *fx {
        for (xi, d) in x.iter_mut().zip(dir) {
            *xi += t * d;
        }
        *fx = ft;
    }
    evals
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowellResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// Completed sweeps.
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Value after each sweep, starting with `f(x0)`.
    pub history: Vec<f64>,
}

/// Powell's direction-set method with coordinate start directions.
pub fn powell_minimize(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    config: &OptimizerConfig,
) -> PowellResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut evaluations = 1;
    let mut history = vec![fx];
    if !fx.is_finite() || n == 0 {
        return PowellResult {
            x,
            f: fx,
            iterations: 0,
            evaluations,
            converged: false,
            history,
        };
    }
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for iter in 1..=config.max_iterations {
        let start = x.clone();
        let f_start = fx;
        let mut biggest = 0;
        let mut biggest_drop = 0.0;
        for (i, dir) in dirs.iter().enumerate() {
            let before = fx;
            evaluations += line_minimize(&mut f, &mut x, &mut fx, dir, config);
            if before - fx > biggest_drop {
                biggest_drop = before - fx;
                biggest = i;
            }
        }
        history.push(fx);
        let moved = x
            .iter()
            .zip(&start)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let small_drop =
            2.0 * (f_start - fx) <= config.value_tolerance * (f_start.abs() + fx.abs()) + TINY;
        if small_drop || moved < config.param_tolerance {
            return PowellResult {
                x,
                f: fx,
                iterations: iter,
                evaluations,
                converged: true,
                history,
            };
        }
        // extrapolated point along the average direction of the sweep
        let shift: Vec<f64> = x.iter().zip(&start).map(|(a, b)| a - b).collect();
        let extrapolated: Vec<f64> = x.iter().zip(&shift).map(|(a, s)| a + s).collect();
        let fe = f(&extrapolated);
        evaluations += 1;
        if fe < f_start {
            let t = 2.0 * (f_start - 2.0 * fx + fe) * (f_start - fx - biggest_drop).powi(2)
                - biggest_drop * (f_start - fe).powi(2);
            if t < 0.0 {
                let norm = shift.iter().map(|s| s * s).sum::<f64>().sqrt();
                if norm > 0.0 {
                    let unit: Vec<f64> = shift.iter().map(|s| s / norm).collect();
                    evaluations += line_minimize(&mut f, &mut x, &mut fx, &unit, config);
                    dirs[biggest] = dirs[n - 1].clone();
                    dirs[n - 1] = unit;
                }
            }
        }
    }
    PowellResult {
        x,
        f: fx,
        iterations: config.max_iterations,
        evaluations,
        converged: false,
        history,
    }
}
