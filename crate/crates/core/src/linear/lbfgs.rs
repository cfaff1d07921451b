//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! Two-loop recursion over the last `m` curvature pairs, initial Hessian
//! scaling gamma = s.y / y.y, and bracketing + cubic-interpolation zoom for
//! the Wolfe conditions (c1 = 1e-4, c2 = 0.9). The first step is scaled by
//! 1/||grad||. A failed line search degrades to a backtracked
//! steepest-descent step, which is counted and reported.

use crate::error::{Error, Result};
use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct LbfgsConfig {
    /// Stop when the gradient infinity norm drops to this value.
    pub tol: f64,
    /// Number of stored correction pairs.
    pub memory: usize,
    pub max_iter: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Trial budget of one Wolfe search before degrading.
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            tol: 1e-4,
            memory: 10,
            max_iter: 200,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 20,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
    /// False when `max_iter` was exhausted before reaching `tol`.
    pub converged: bool,
    /// Steepest-descent steps taken after Wolfe-search failures.
    pub fallback_steps: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Minimizes `f`, which must return a finite (value, gradient) at `x0`.
pub fn lbfgs_minimize<F>(mut f: F, x0: &[f64], cfg: &LbfgsConfig) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0.to_vec();
    let (mut fx, mut grad) = f(&x);
    if !fx.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(
            "objective not finite at the starting point".into(),
        ));
    }

    let mut history: VecDeque<Pair> = VecDeque::with_capacity(cfg.memory);
    let mut fallback_steps = 0usize;
    let mut iterations = 0usize;

    for iter in 0..cfg.max_iter {
        if inf_norm(&grad) <= cfg.tol {
            return Ok(LbfgsResult {
                grad_inf_norm: inf_norm(&grad),
                x,
                value: fx,
                iterations,
                converged: true,
                fallback_steps,
            });
        }
        iterations = iter + 1;

        let mut direction = two_loop(&history, &grad);
        for d in &mut direction {
            *d = -*d;
        }
        let mut dg = dot(&direction, &grad);
        let mut alpha_init = 1.0;
        if dg >= 0.0 {
            // Not a descent direction; fall back to the negative gradient.
            direction = grad.iter().map(|g| -g).collect();
            dg = dot(&direction, &grad);
        }
        if iter == 0 {
            alpha_init = 1.0 / l2_norm(&grad).max(1e-30);
        }

        let accepted = wolfe_search(&mut f, &x, fx, &direction, dg, alpha_init, cfg);
        let (alpha, new_fx, new_grad) = match accepted {
            Some(step) => step,
            None => {
                // Degrade to a backtracked steepest-descent step.
                fallback_steps += 1;
                let sd: Vec<f64> = grad.iter().map(|g| -g).collect();
                let sd_dg = dot(&sd, &grad);
                match armijo_backtrack(&mut f, &x, fx, sd_dg, &sd, cfg.c1) {
                    Some((a, v, g)) => {
                        let step: Vec<f64> = sd.iter().map(|d| a * d).collect();
                        for (xi, si) in x.iter_mut().zip(&step) {
                            *xi += si;
                        }
                        history.clear();
                        fx = v;
                        grad = g;
                        continue;
                    }
                    None => {
                        return Err(Error::Numeric(
                            "line search failed along the gradient direction".into(),
                         ))
                    }
                }
            }
        };

        let step: Vec<f64> = direction.iter().map(|d| alpha * d).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&step, &y);
        if sy > 1e-12 {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back(Pair {
                rho: 1.0 / sy,
                s: step.clone(),
                y,
            });
        }
        for (xi, si) in x.iter_mut().zip(&step) {
            *xi += si;
        }
        fx = new_fx;
        grad = new_grad;
        if !fx.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "objective became non-finite at iteration {iterations}"
            )));
        }
    }

    Ok(LbfgsResult {
        grad_inf_norm: inf_norm(&grad),
        converged: inf_norm(&grad) <= cfg.tol,
        x,
        value: fx,
        iterations,
        fallback_steps,
    })
}

/// H . grad via the standard two-loop recursion.
fn two_loop(history: &VecDeque<Pair>, grad: &[f64]) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for pair in history.iter().rev() {
        let a = pair.rho * dot(&pair.s, &q);
        for (qi, yi) in q.iter_mut().zip(&pair.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some(last) = history.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        for qi in &mut q {
            *qi *= gamma;
        }
    }
    for (pair, &a) in history.iter().zip(alphas.iter().rev()) {
        let beta = pair.rho * dot(&pair.y, &q);
        for (qi, si) in q.iter_mut().zip(&pair.s) {
            *qi += (a - beta) * si;
        }
    }
    q
}

type Step = (f64, f64, Vec<f64>);

/// Strong-Wolfe bracketing search. Returns (alpha, f(x+alpha d), grad) or
/// None after the trial budget.
#[allow(clippy::too_many_arguments)]
fn wolfe_search<F>(
    f: &mut F,
    x: &[f64],
    fx0: f64,
    d: &[f64],
    dg0: f64,
    alpha_init: f64,
    cfg: &LbfgsConfig,
) -> Option<Step>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let phi = |f: &mut F, alpha: f64| -> (f64, Vec<f64>, f64) {
        let xt: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
        let (v, g) = f(&xt);
        let slope = dot(&g, d);
        (v, g, slope)
    };

    let mut alpha_prev = 0.0f64;
    let mut f_prev = fx0;
    let mut slope_prev = dg0;
    let mut alpha = alpha_init;
    let mut budget = cfg.max_line_search;

    for i in 0..cfg.max_line_search {
        let (fv, g, slope) = phi(f, alpha);
        budget -= 1;
        let armijo_violated = !fv.is_finite() || fv > fx0 + cfg.c1 * alpha * dg0;
        if armijo_violated || (i > 0 && fv >= f_prev) {
            return zoom(
                f, x, fx0, dg0, d, alpha_prev, f_prev, slope_prev, alpha, fv, budget, cfg,
            );
        }
        if slope.abs() <= -cfg.c2 * dg0 {
            // The loose curvature constant accepts quite inexact steps.
            // One secant step on the slope lands on the exact 1-D
            // minimizer for quadratics; keep it only if it also satisfies
            // the Wolfe conditions and decreases the value.
            if slope.abs() > 1e-3 * dg0.abs() && (slope - dg0).abs() > 1e-30 {
                let refined = alpha - slope * alpha / (slope - dg0);
                if refined.is_finite() && refined > 0.0 && refined < 1e3 * alpha {
                    let (fr, gr, slope_r) = phi(f, refined);
                    if fr.is_finite()
                        && fr <= fx0 + cfg.c1 * refined * dg0
                        && fr <= fv
                        && slope_r.abs() <= -cfg.c2 * dg0
                    {
                        return Some((refined, fr, gr));
                    }
                }
            }
            return Some((alpha, fv, g));
        }
        if slope >= 0.0 {
            return zoom(f, x, fx0, dg0, d, alpha, fv, slope, alpha_prev, f_prev, budget, cfg);
        }
        alpha_prev = alpha;
        f_prev = fv;
        slope_prev = slope;
        alpha *= 2.0;
    }
    None
}

/// Zoom phase: shrink [lo, hi] with cubic/bisection trial points.
#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    f: &mut F,
    x: &[f64],
    fx0: f64,
    dg0: f64,
    d: &[f64],
    mut alpha_lo: f64,
    mut f_lo: f64,
    mut slope_lo: f64,
    mut alpha_hi: f64,
    mut f_hi: f64,
    budget: usize,
    cfg: &LbfgsConfig,
) -> Option<Step>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    for _ in 0..budget {
        // Quadratic fit through (lo, f_lo, slope_lo) and (hi, f_hi); fall
        // back to bisection when the fit is degenerate or out of range.
        let span = alpha_hi - alpha_lo;
        let mut alpha = alpha_lo + 0.5 * span;
        if span.abs() > 1e-16 {
            let denom = f_hi - f_lo - slope_lo * span;
            if denom.abs() > 1e-30 {
                let cand = alpha_lo - 0.5 * slope_lo * span * span / denom;
                let lo = alpha_lo.min(alpha_hi);
                let hi = alpha_lo.max(alpha_hi);
                let margin = 0.1 * (hi - lo);
                if cand.is_finite() && cand > lo + margin && cand < hi - margin {
                    alpha = cand;
                }
            }
        }
        let xt: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
        let (fv, g) = f(&xt);
        let slope = dot(&g, d);
        if !fv.is_finite() || fv > fx0 + cfg.c1 * alpha * dg0 || fv >= f_lo {
            alpha_hi = alpha;
            f_hi = fv;
        } else {
            if slope.abs() <= -cfg.c2 * dg0 {
                return Some((alpha, fv, g));
            }
            if slope * (alpha_hi - alpha_lo) >= 0.0 {
                alpha_hi = alpha_lo;
                f_hi = f_lo;
            }
            alpha_lo = alpha;
            f_lo = fv;
            slope_lo = slope;
        }
        if (alpha_hi - alpha_lo).abs() < 1e-18 {
            break;
        }
    }
    None
}

/// Plain Armijo backtracking from alpha = 1, halving, for the degraded
/// steepest-descent step.
fn armijo_backtrack<F>(
    f: &mut F,
    x: &[f64],
    fx0: f64,
    dg0: f64,
    d: &[f64],
    c1: f64,
) -> Option<Step>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut alpha = 1.0;
    for _ in 0..60 {
        let xt: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
        let (fv, g) = f(&xt);
        if fv.is_finite() && fv <= fx0 + c1 * alpha * dg0 {
            return Some((alpha, fv, g));
        }
        alpha *= 0.5;
    }
    None
}
