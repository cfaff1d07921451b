//! Training loop for the sequence classifier: Adam updates with early
//! stopping on development macro-F1.

use super::{sample_drop_mask, seqnet_forward, seqnet_gradients_with, SeqNetModel};
use crate::error::Result;
use crate::eval::compute_metrics;
use crate::optim::Adam;
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeqTrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Upper bound on epochs; early stopping usually ends sooner.
    pub epochs: usize,
    /// Epochs without dev macro-F1 improvement before stopping.
    pub patience: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SeqTrainConfig {
    fn default() -> Self {
        SeqTrainConfig {
            lr: 1e-3,
            batch_size: 32,
            epochs: 50,
            patience: 3,
            max_len: 64,
            seed: 13,
        }
    }
}

/// Hard label for one embedded sequence.
pub fn predict_label(model: &SeqNetModel, x: &Array2<f64>, mask: &[bool]) -> u8 {
    let out = seqnet_forward(model, x, mask, false, None);
    u8::from(out.probs[1] > 0.5)
}

/// Trains with Adam and per-epoch seeded shuffling; returns the model with
/// the best dev macro-F1 seen. An empty dev set falls back to the fixed
/// epoch budget with a warning.
pub fn fit_seqnet(
    model: SeqNetModel,
    train: &[(Array2<f64>, Vec<bool>)],
    train_labels: &[u8],
    dev: &[(Array2<f64>, Vec<bool>)],
    dev_labels: &[u8],
    config: &SeqTrainConfig,
) -> Result<SeqNetModel> {
    let mut model = model;
    let sizes: Vec<usize> = model.blocks().iter().map(|b| b.len()).collect();
    let mut adam = Adam::new(config.lr, &sizes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let use_dev = !dev.is_empty();
    if !use_dev {
        log::warn!("empty dev set: training for the full {} epochs", config.epochs);
    }

    let mut best: Option<(f64, SeqNetModel)> = None;
    let mut stale = 0usize;

    for _epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(Array2<f64>, Vec<bool>)> =
                chunk.iter().map(|&i| train[i].clone()).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| train_labels[i]).collect();
            let masks: Option<Vec<Array1<f64>>> = if model.dropout > 0.0 {
                Some(
                    (0..batch.len())
                        .map(|_| {
                            sample_drop_mask(model.lstm2.hidden(), model.dropout, &mut rng)
                        })
                        .collect(),
                )
            } else {
                None
            };
            let (_, grads) =
                seqnet_gradients_with(&model, &batch, &labels, masks.as_deref())?;
            let grad_blocks = grads.blocks();
            let mut params = model.blocks_mut();
            adam.step(&mut params, &grad_blocks);
        }

        if use_dev {
            let preds: Vec<u8> = dev
                .iter()
                .map(|(x, mask)| predict_label(&model, x, mask))
                .collect();
            let f1 = compute_metrics(dev_labels, &preds)?.macro_f1;
            let improved = best.as_ref().map_or(true, |(bf, _)| f1 > *bf);
            if improved {
                best = Some((f1, model.clone()));
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
        _ => model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqnet::SeqNetDims;
    use rand::Rng;

    /// Two classes with disjoint five-token vocabularies; every token has a
    /// fixed random embedding.
    fn disjoint_vocab_toy(
        n: usize,
        dim: usize,
        len: usize,
        seed: u64,
    ) -> (Vec<(Array2<f64>, Vec<bool>)>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab_a: Vec<Array1<f64>> = (0..5)
            .map(|_| Array1::from_shape_fn(dim, |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let vocab_b: Vec<Array1<f64>> = (0..5)
            .map(|_| Array1::from_shape_fn(dim, |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u8;
            let vocab = if label == 0 { &vocab_a } else { &vocab_b };
            let mut x = Array2::zeros((len, dim));
            for t in 0..len {
                x.row_mut(t).assign(&vocab[rng.gen_range(0..5)]);
            }
            xs.push((x, vec![true; len]));
            ys.push(label);
        }
        (xs, ys)
    }

    fn small_dims(input: usize) -> SeqNetDims {
        SeqNetDims {
            input,
            hidden: 8,
            attention: 8,
            dense: 16,
        }
    }

    #[test]
    fn learns_disjoint_vocabulary_toy() {
        let (xs, ys) = disjoint_vocab_toy(40, 6, 5, 1);
        let config = SeqTrainConfig {
            lr: 5e-3,
            epochs: 30,
            batch_size: 8,
            patience: 10,
            seed: 2,
            ..SeqTrainConfig::default()
        };
        let model = SeqNetModel::new(small_dims(6), 0.2, 3);
        let fitted = fit_seqnet(model, &xs, &ys, &xs, &ys, &config).unwrap();
        let correct = xs
            .iter()
            .zip(&ys)
            .filter(|((x, m), &y)| predict_label(&fitted, x, m) == y)
            .count();
        assert_eq!(correct, xs.len(), "training accuracy must reach 1.0");
    }

    #[test]
    fn fixed_seed_reproduces_parameters() {
        let (xs, ys) = disjoint_vocab_toy(24, 5, 4, 7);
        let config = SeqTrainConfig {
            epochs: 5,
            batch_size: 8,
            seed: 11,
            ..SeqTrainConfig::default()
        };
        let run = || {
            let model = SeqNetModel::new(small_dims(5), 0.2, 9);
            fit_seqnet(model, &xs, &ys, &xs, &ys, &config).unwrap()
        };
        let a = run();
        let b = run();
        for (ba, bb) in a.blocks().iter().zip(b.blocks().iter()) {
            assert_eq!(ba, bb);
        }
    }

    #[test]
    fn shuffled_labels_cannot_be_fit_generalizably() {
        // Median dev macro-F1 over five seeds stays below 0.65 once the
        // label signal is destroyed.
        let (xs, ys) = disjoint_vocab_toy(80, 6, 5, 40);
        let (train_x, dev_x) = xs.split_at(40);
        let (_, dev_y_orig) = ys.split_at(40);
        let mut results = Vec::new();
        for seed in 0..5u64 {
            let mut shuffle_rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let mut train_y: Vec<u8> = ys[..40].to_vec();
            train_y.shuffle(&mut shuffle_rng);
            let mut dev_y: Vec<u8> = dev_y_orig.to_vec();
            dev_y.shuffle(&mut shuffle_rng);
            let config = SeqTrainConfig {
                epochs: 12,
                batch_size: 8,
                seed: 100 + seed,
                ..SeqTrainConfig::default()
            };
            let model = SeqNetModel::new(small_dims(6), 0.2, 200 + seed);
            let fitted =
                fit_seqnet(model, train_x, &train_y, dev_x, &dev_y, &config).unwrap();
            let preds: Vec<u8> = dev_x
                .iter()
                .map(|(x, m)| predict_label(&fitted, x, m))
                .collect();
            results.push(compute_metrics(&dev_y, &preds).unwrap().macro_f1);
        }
        results.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(results[2] < 0.65, "median dev macro-F1 {results:?}");
    }

    #[test]
    fn empty_dev_set_trains_fixed_epochs() {
        let (xs, ys) = disjoint_vocab_toy(16, 5, 4, 70);
        let config = SeqTrainConfig {
            epochs: 3,
            batch_size: 8,
            seed: 5,
            ..SeqTrainConfig::default()
        };
        let model = SeqNetModel::new(small_dims(5), 0.2, 6);
        let fitted = fit_seqnet(model, &xs, &ys, &[], &[], &config).unwrap();
        // Smoke: model trained and predicts a valid label.
        let l = predict_label(&fitted, &xs[0].0, &xs[0].1);
        assert!(l == 0 || l == 1);
    }
}
