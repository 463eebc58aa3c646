use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::hmc::HmcError;
use super::LogDensity;
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    pub max_iterations: usize,
    /// Converged once the Euclidean norm of the gradient drops below this.
    pub grad_tol: f64,
    /// Number of curvature pairs kept for the quasi-Newton direction.
    pub memory: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig { max_iterations: 10_000, grad_tol: 1e-6, memory: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    /// Best point found, whether or not the run converged.
    pub x: Vec<f64>,
    pub log_density: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Density evaluations, including rejected line-search trials.
    pub evaluations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

/// Maximizes a log density by backtracking line search along a limited-memory
/// quasi-Newton direction. Stops at `grad_tol`, after `max_iterations`, or
/// when no step along the direction or the gradient improves the density.
pub fn map_fit<D: LogDensity + ?Sized>(density: &D, init: &[f64], config: &MapConfig) -> Result<MapResult, HmcError> {
    let dim = density.dim();
    if init.len() != dim {
        return Err(HmcError::Dimension { expected: dim, got: init.len() });
    }
    // Work with the negative log density, minimized.
    let mut x = init.to_vec();
    let mut g = vec![0.0; dim];
    let mut f = -density.log_density_grad(&x, &mut g);
    let mut evaluations = 1;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(HmcError::NonFiniteDensity { chain: 0 });
    }
    g.iter_mut().for_each(|v| *v = -*v);

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut x_new = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];
    let mut dir = vec![0.0; dim];
    let mut alpha = vec![0.0; config.memory.max(1)];
    let mut iterations = 0;
    let mut converged = norm(&g) < config.grad_tol;

    while !converged && iterations < config.max_iterations {
        iterations += 1;
        // Two-loop recursion: dir = -H g.
        dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
        for (i, (s, y, rho)) in history.iter().enumerate().rev() {
            alpha[i] = rho * dot(s, &dir);
            dir.iter_mut().zip(y).for_each(|(d, yi)| *d -= alpha[i] * yi);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        }
        for (i, (s, y, rho)) in history.iter().enumerate() {
            let beta = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(d, si)| *d += (alpha[i] - beta) * si);
        }
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            slope = dot(&g, &dir);
        }
        // First step with no curvature information: unit length.
        let mut step = if history.is_empty() { 1.0 / norm(&dir).max(1.0) } else { 1.0 };

        let mut accepted = false;
        let mut f_new = f;
        for _ in 0..40 {
            for ((xn, xi), d) in x_new.iter_mut().zip(&x).zip(&dir) {
                *xn = xi + step * d;
            }
            let lp = density.log_density_grad(&x_new, &mut g_new);
            evaluations += 1;
            f_new = -lp;
            if f_new.is_finite() && g_new.iter().all(|v| v.is_finite()) {
                if f_new <= f + 1e-4 * step * slope {
                    accepted = true;
                    break;
                }
                // Near the optimum the decrease drops below rounding of `f`;
                // accept on the directional derivative alone there.
                let new_slope = -dot(&g_new, &dir);
                if f_new <= f + 1e-12 * f.abs() && new_slope >= 0.9 * slope && new_slope <= -0.8 * slope {
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        }
        g_new.iter_mut().for_each(|v| *v = -*v);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if history.len() == config.memory.max(1) {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        core::mem::swap(&mut x, &mut x_new);
        core::mem::swap(&mut g, &mut g_new);
        f = f_new;
        converged = norm(&g) < config.grad_tol;
    }

    Ok(MapResult { grad_norm: norm(&g), log_density: -f, x, iterations, evaluations, converged })
}
