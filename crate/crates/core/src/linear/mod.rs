//! Binary logistic regression with L2 penalty and balanced class weights,
//! trained by the in-house L-BFGS minimizer.

mod lbfgs;

pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsResult};

use crate::error::{Error, Result};
use crate::vectorize::SparseVector;
use serde::{Deserialize, Serialize};

/// Fitted linear classifier: weights over the selected feature space plus
/// an unpenalized bias.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub w: Vec<f64>,
    pub b: f64,
}

/// How per-class loss weights are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ClassWeights {
    /// weight(c) = N / (2 * count(c)).
    Balanced,
    /// Both classes weight 1.
    Uniform,
    /// Explicit (weight for class 0, weight for class 1).
    Explicit(f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub l2_lambda: f64,
    /// Gradient infinity-norm stopping threshold.
    pub tol: f64,
    pub max_iter: usize,
    pub class_weights: ClassWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2_lambda: 1.0,
            tol: 1e-4,
            max_iter: 200,
            class_weights: ClassWeights::Balanced,
        }
    }
}

/// Balanced per-class weights: weight(c) = N / (2 * count(c)).
pub fn balanced_weights(y: &[u8]) -> Result<[f64; 2]> {
    let n1 = y.iter().filter(|&&l| l == 1).count();
    let n0 = y.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::Fit("both classes required for balanced weights".into()));
    }
    let n = y.len() as f64;
    Ok([n / (2.0 * n0 as f64), n / (2.0 * n1 as f64)])
}

fn resolve_weights(cw: ClassWeights, y: &[u8]) -> Result<[f64; 2]> {
    match cw {
        ClassWeights::Balanced => balanced_weights(y),
        ClassWeights::Uniform => Ok([1.0, 1.0]),
        ClassWeights::Explicit(w0, w1) => {
            if w0 > 0.0 && w1 > 0.0 {
                Ok([w0, w1])
            } else {
                Err(Error::Config("class weights must be positive".into()))
            }
        }
    }
}

/// Numerically safe ln(1 + e^t).
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Numerically safe logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Weighted logistic loss and its analytic gradient.
///
/// loss = sum_i cw(y_i) * ln(1 + exp(-s_i (w.x_i + b))) + (lambda/2) ||w||^2
/// with s_i the +-1 encoding of y_i. The bias is not penalized.
pub fn objective_and_gradient(
    w: &[f64],
    b: f64,
    x: &[SparseVector],
    y: &[u8],
    weights: [f64; 2],
    l2_lambda: f64,
) -> Result<(f64, Vec<f64>, f64)> {
    if x.len() != y.len() {
        return Err(Error::Config(format!(
            "{} rows vs {} labels",
            x.len(),
            y.len()
        )));
    }
    let mut loss = 0.0f64;
    let mut grad_w = vec![0.0f64; w.len()];
    let mut grad_b = 0.0f64;
    for (row, &label) in x.iter().zip(y) {
        let z = row.dot_dense(w) + b;
        let s = if label == 1 { 1.0 } else { -1.0 };
        let cw = weights[label as usize];
        loss += cw * softplus(-s * z);
        let dz = cw * (-s) * sigmoid(-s * z);
        for (i, v) in row.iter() {
            grad_w[i as usize] += dz * v;
        }
        grad_b += dz;
    }
    let mut sq = 0.0;
    for (gi, wi) in grad_w.iter_mut().zip(w) {
        *gi += l2_lambda * wi;
        sq += wi * wi;
    }
    loss += 0.5 * l2_lambda * sq;
    if !loss.is_finite() || !grad_b.is_finite() || grad_w.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("logistic objective not finite".into()));
    }
    Ok((loss, grad_w, grad_b))
}

/// Fits the classifier by minimizing the weighted objective with L-BFGS.
pub fn fit_logreg(x: &[SparseVector], y: &[u8], config: &TrainConfig) -> Result<LogisticModel> {
    if x.is_empty() {
        return Err(Error::Fit("no training rows".into()));
    }
    let dim = x[0].dim;
    let weights = resolve_weights(config.class_weights, y)?;
    let lambda = config.l2_lambda;

    let objective = |params: &[f64]| -> (f64, Vec<f64>) {
        let (w, b) = params.split_at(dim);
        match objective_and_gradient(w, b[0], x, y, weights, lambda) {
            Ok((loss, mut gw, gb)) => {
                gw.push(gb);
                (loss, gw)
            }
            Err(_) => (f64::INFINITY, vec![f64::INFINITY; dim + 1]),
        }
    };
    let cfg = LbfgsConfig {
        tol: config.tol,
        max_iter: config.max_iter,
        ..LbfgsConfig::default()
    };
    let result = lbfgs_minimize(objective, &vec![0.0; dim + 1], &cfg)?;
    if !result.converged {
        log::warn!(
            "logistic fit stopped at max_iter={} with grad norm {:.3e}",
            config.max_iter,
            result.grad_inf_norm
        );
    }
    if result.fallback_steps > 0 {
        log::warn!(
            "logistic fit used {} steepest-descent fallback steps",
            result.fallback_steps
        );
    }
    let mut params = result.x;
    let b = params.pop().unwrap();
    Ok(LogisticModel { w: params, b })
}

/// p1 = sigmoid(w.x + b); the label is 1 above 0.5 and 0 otherwise (exact
/// ties go to class 0).
pub fn predict(model: &LogisticModel, x: &SparseVector) -> (f64, u8) {
    let z = x.dot_dense(&model.w) + model.b;
    let p1 = sigmoid(z);
    (p1, u8::from(p1 > 0.5))
}
