//! Dense classification head over pooled encoder vectors: H -> 512 ReLU,
//! dropout 0.5 at train time, 512 -> 2 softmax.

use crate::error::{Error, Result};
use crate::eval::compute_metrics;
use crate::optim::Adam;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadModel {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub dropout: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadConfig {
    /// Width of the hidden layer.
    pub hidden: usize,
    /// 1e-3 with a frozen encoder; fine-tuning schedules use 2e-5.
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            hidden: 512,
            lr: 1e-3,
            epochs: 50,
            patience: 3,
            batch_size: 32,
            dropout: 0.5,
            seed: 13,
        }
    }
}

impl HeadModel {
    /// The output layer starts at zero, so the initial prediction is
    /// exactly (0.5, 0.5) for any input.
    pub fn new(input_dim: usize, config: &HeadConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let limit = (6.0 / (input_dim + config.hidden) as f64).sqrt();
        HeadModel {
            w1: Array2::from_shape_fn((config.hidden, input_dim), |_| {
                rng.gen_range(-limit..limit)
            }),
            b1: Array1::zeros(config.hidden),
            w2: Array2::zeros((2, config.hidden)),
            b2: Array1::zeros(2),
            dropout: config.dropout,
        }
    }
}

/// Class probabilities for one pooled vector (evaluation mode: dropout is
/// the identity).
pub fn predict_head(head: &HeadModel, x: &Array1<f64>) -> [f64; 2] {
    let z1 = head.w1.dot(x) + &head.b1;
    let a = z1.mapv(|v| v.max(0.0));
    let logits = head.w2.dot(&a) + &head.b2;
    softmax2(logits[0], logits[1])
}

fn softmax2(a: f64, b: f64) -> [f64; 2] {
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    [ea / (ea + eb), eb / (ea + eb)]
}

#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Mean cross-entropy and gradients over a batch. `drop` is the inverted
/// dropout mask matrix (None in evaluation/checking mode).
pub fn head_gradients(
    head: &HeadModel,
    x: &Array2<f64>,
    labels: &[u8],
    drop: Option<&Array2<f64>>,
) -> Result<(f64, HeadGrads)> {
    let n = x.nrows();
    if n != labels.len() || n == 0 {
        return Err(Error::Config(format!(
            "batch of {n} rows vs {} labels",
            labels.len()
        )));
    }
    let z1 = x.dot(&head.w1.t()) + &head.b1;
    let a = z1.mapv(|v| v.max(0.0));
    let a_drop = match drop {
        Some(m) => &a * m,
        None => a.clone(),
    };
    let logits = a_drop.dot(&head.w2.t()) + &head.b2;

    let mut probs = Array2::zeros((n, 2));
    let mut loss = 0.0;
    for i in 0..n {
        let p = softmax2(logits[[i, 0]], logits[[i, 1]]);
        probs[[i, 0]] = p[0];
        probs[[i, 1]] = p[1];
        loss -= p[labels[i] as usize].max(1e-300).ln();
    }
    loss /= n as f64;

    let mut dlogits = probs;
    for (i, &y) in labels.iter().enumerate() {
        dlogits[[i, y as usize]] -= 1.0;
    }
    dlogits /= n as f64;

    let w2_grad = dlogits.t().dot(&a_drop);
    let b2_grad = dlogits.sum_axis(Axis(0));
    let da_drop = dlogits.dot(&head.w2);
    let da = match drop {
        Some(m) => &da_drop * m,
        None => da_drop,
    };
    let dz1 = ndarray::Zip::from(&da)
        .and(&z1)
        .map_collect(|&d, &z| if z > 0.0 { d } else { 0.0 });
    let w1_grad = dz1.t().dot(x);
    let b1_grad = dz1.sum_axis(Axis(0));

    let grads = HeadGrads {
        w1: w1_grad,
        b1: b1_grad,
        w2: w2_grad,
        b2: b2_grad,
    };
    for (name, block) in [
        ("head.w1", grads.w1.as_slice().unwrap()),
        ("head.b1", grads.b1.as_slice().unwrap()),
        ("head.w2", grads.w2.as_slice().unwrap()),
        ("head.b2", grads.b2.as_slice().unwrap()),
    ] {
        if block.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient in parameter block {name}"
            )));
        }
    }
    Ok((loss, grads))
}

/// Trains the head on pre-encoded vectors with Adam and early stopping on
/// dev macro-F1 (patience from the config). Deterministic per seed.
pub fn fit_head(
    train_x: &Array2<f64>,
    train_y: &[u8],
    dev_x: &Array2<f64>,
    dev_y: &[u8],
    config: &HeadConfig,
) -> Result<HeadModel> {
    if train_x.nrows() != train_y.len() || train_x.nrows() == 0 {
        return Err(Error::Config("training rows and labels disagree".into()));
    }
    let input_dim = train_x.ncols();
    let mut head = HeadModel::new(input_dim, config);
    let sizes = [
        head.w1.len(),
        head.b1.len(),
        head.w2.len(),
        head.b2.len(),
    ];
    let mut adam = Adam::new(config.lr, &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let use_dev = dev_x.nrows() > 0;
    if !use_dev {
        log::warn!("empty dev set: head trains for the full {} epochs", config.epochs);
    }

    let mut best: Option<(f64, HeadModel)> = None;
    let mut stale = 0usize;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train_x.nrows()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let xb = gather_rows(train_x, chunk);
            let yb: Vec<u8> = chunk.iter().map(|&i| train_y[i]).collect();
            let drop = if head.dropout > 0.0 {
                let keep = 1.0 - head.dropout;
                Some(Array2::from_shape_fn(
                    (chunk.len(), head.w1.nrows()),
                    |_| {
                        if rng.gen::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    },
                ))
            } else {
                None
            };
            let (_, grads) = head_gradients(&head, &xb, &yb, drop.as_ref()).map_err(|e| {
                Error::Numeric(format!("epoch {epoch}: {e}"))
            })?;
            adam.step(
                &mut [
                    head.w1.as_slice_mut().unwrap(),
                    head.b1.as_slice_mut().unwrap(),
                    head.w2.as_slice_mut().unwrap(),
                    head.b2.as_slice_mut().unwrap(),
                ],
                &[
                    grads.w1.as_slice().unwrap(),
                    grads.b1.as_slice().unwrap(),
                    grads.w2.as_slice().unwrap(),
                    grads.b2.as_slice().unwrap(),
                ],
            );
        }
        if use_dev {
            let preds: Vec<u8> = (0..dev_x.nrows())
                .map(|i| {
                    let p = predict_head(&head, &dev_x.row(i).to_owned());
                    u8::from(p[1] > 0.5)
                })
                .collect();
            let f1 = compute_metrics(dev_y, &preds)?.macro_f1;
            let improved = best.as_ref().map_or(true, |(bf, _)| f1 > *bf);
            if improved {
                best = Some((f1, head.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }
    Ok(match best {
        Some((_, m)) if use_dev => m,
        _ => head,
    })
}

fn gather_rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), x.ncols()));
    for (row, &i) in idx.iter().enumerate() {
        out.row_mut(row).assign(&x.row(i));
    }
    out
}
