//! Attention-LSTM sequence classifier.
//!
//! Two stacked LSTM layers, additive attention pooling over the top
//! layer's hidden states, dropout, a ReLU dense layer and a 2-way softmax.
//! Both the forward pass and full backpropagation through time are
//! implemented here; embeddings are inputs and are never updated.

mod train;

pub use train::{fit_seqnet, SeqTrainConfig};

use crate::error::{Error, Result};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// One LSTM layer. Gate weights are stacked row blocks [i; f; g; o] of
/// shape 4H x D (input) and 4H x H (recurrent); the forget-gate bias block
/// is initialized to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmLayer {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

impl LstmLayer {
    fn new(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut b = Array1::zeros(4 * hidden);
        for j in hidden..2 * hidden {
            b[j] = 1.0;
        }
        LstmLayer {
            w: xavier(4 * hidden, input_dim, rng),
            u: xavier(4 * hidden, hidden, rng),
            b,
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }
}

/// Additive attention pooling: scores v . tanh(P h_t), masked softmax.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionPool {
    /// Projection hidden -> attention width.
    pub proj: Array2<f64>,
    /// Score vector, attention width -> scalar.
    pub score: Array1<f64>,
}

/// Layer widths. Defaults follow the fixed architecture: 15-unit LSTMs,
/// 15-wide attention, 64-unit dense layer.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SeqNetDims {
    pub input: usize,
    pub hidden: usize,
    pub attention: usize,
    pub dense: usize,
}

impl Default for SeqNetDims {
    fn default() -> Self {
        SeqNetDims {
            input: 300,
            hidden: 15,
            attention: 15,
            dense: 64,
        }
    }
}

/// The full classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeqNetModel {
    pub lstm1: LstmLayer,
    pub lstm2: LstmLayer,
    pub attention: AttentionPool,
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
    /// Dropout rate applied to the pooled vector in training mode
    /// (inverted scaling, so evaluation needs none).
    pub dropout: f64,
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}

impl SeqNetModel {
    pub fn new(dims: SeqNetDims, dropout: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lstm1 = LstmLayer::new(dims.input, dims.hidden, &mut rng);
        let lstm2 = LstmLayer::new(dims.hidden, dims.hidden, &mut rng);
        let attention = AttentionPool {
            proj: xavier(dims.attention, dims.hidden, &mut rng),
            score: Array1::from_shape_fn(dims.attention, |_| rng.gen_range(-0.5..0.5)),
        };
        SeqNetModel {
            lstm1,
            lstm2,
            attention,
            dense_w: xavier(dims.dense, dims.hidden, &mut rng),
            dense_b: Array1::zeros(dims.dense),
            out_w: xavier(2, dims.dense, &mut rng),
            out_b: Array1::zeros(2),
            dropout,
        }
    }

    pub const BLOCK_NAMES: [&'static str; 12] = [
        "lstm1.w", "lstm1.u", "lstm1.b", "lstm2.w", "lstm2.u", "lstm2.b", "attn.proj",
        "attn.score", "dense.w", "dense.b", "out.w", "out.b",
    ];

    /// Flat views of every parameter block, in `BLOCK_NAMES` order.
    pub fn blocks(&self) -> Vec<&[f64]> {
        vec![
            self.lstm1.w.as_slice().unwrap(),
            self.lstm1.u.as_slice().unwrap(),
            self.lstm1.b.as_slice().unwrap(),
            self.lstm2.w.as_slice().unwrap(),
            self.lstm2.u.as_slice().unwrap(),
            self.lstm2.b.as_slice().unwrap(),
            self.attention.proj.as_slice().unwrap(),
            self.attention.score.as_slice().unwrap(),
            self.dense_w.as_slice().unwrap(),
            self.dense_b.as_slice().unwrap(),
            self.out_w.as_slice().unwrap(),
            self.out_b.as_slice().unwrap(),
        ]
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.lstm1.w.as_slice_mut().unwrap(),
            self.lstm1.u.as_slice_mut().unwrap(),
            self.lstm1.b.as_slice_mut().unwrap(),
            self.lstm2.w.as_slice_mut().unwrap(),
            self.lstm2.u.as_slice_mut().unwrap(),
            self.lstm2.b.as_slice_mut().unwrap(),
            self.attention.proj.as_slice_mut().unwrap(),
            self.attention.score.as_slice_mut().unwrap(),
            self.dense_w.as_slice_mut().unwrap(),
            self.dense_b.as_slice_mut().unwrap(),
            self.out_w.as_slice_mut().unwrap(),
            self.out_b.as_slice_mut().unwrap(),
        ]
    }
}

/// Gradients for every parameter block of [`SeqNetModel`].
#[derive(Debug, Clone)]
pub struct SeqNetGrads {
    pub lstm1_w: Array2<f64>,
    pub lstm1_u: Array2<f64>,
    pub lstm1_b: Array1<f64>,
    pub lstm2_w: Array2<f64>,
    pub lstm2_u: Array2<f64>,
    pub lstm2_b: Array1<f64>,
    pub attn_proj: Array2<f64>,
    pub attn_score: Array1<f64>,
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

impl SeqNetGrads {
    pub fn zeros_like(model: &SeqNetModel) -> Self {
        SeqNetGrads {
            lstm1_w: Array2::zeros(model.lstm1.w.raw_dim()),
            lstm1_u: Array2::zeros(model.lstm1.u.raw_dim()),
            lstm1_b: Array1::zeros(model.lstm1.b.raw_dim()),
            lstm2_w: Array2::zeros(model.lstm2.w.raw_dim()),
            lstm2_u: Array2::zeros(model.lstm2.u.raw_dim()),
            lstm2_b: Array1::zeros(model.lstm2.b.raw_dim()),
            attn_proj: Array2::zeros(model.attention.proj.raw_dim()),
            attn_score: Array1::zeros(model.attention.score.raw_dim()),
            dense_w: Array2::zeros(model.dense_w.raw_dim()),
            dense_b: Array1::zeros(model.dense_b.raw_dim()),
            out_w: Array2::zeros(model.out_w.raw_dim()),
            out_b: Array1::zeros(model.out_b.raw_dim()),
        }
    }

    pub fn add_assign(&mut self, other: &SeqNetGrads) {
        self.lstm1_w += &other.lstm1_w;
        self.lstm1_u += &other.lstm1_u;
        self.lstm1_b += &other.lstm1_b;
        self.lstm2_w += &other.lstm2_w;
        self.lstm2_u += &other.lstm2_u;
        self.lstm2_b += &other.lstm2_b;
        self.attn_proj += &other.attn_proj;
        self.attn_score += &other.attn_score;
        self.dense_w += &other.dense_w;
        self.dense_b += &other.dense_b;
        self.out_w += &other.out_w;
        self.out_b += &other.out_b;
    }

    /// Flat views in `SeqNetModel::BLOCK_NAMES` order.
    pub fn blocks(&self) -> Vec<&[f64]> {
        vec![
            self.lstm1_w.as_slice().unwrap(),
            self.lstm1_u.as_slice().unwrap(),
            self.lstm1_b.as_slice().unwrap(),
            self.lstm2_w.as_slice().unwrap(),
            self.lstm2_u.as_slice().unwrap(),
            self.lstm2_b.as_slice().unwrap(),
            self.attn_proj.as_slice().unwrap(),
            self.attn_score.as_slice().unwrap(),
            self.dense_w.as_slice().unwrap(),
            self.dense_b.as_slice().unwrap(),
            self.out_w.as_slice().unwrap(),
            self.out_b.as_slice().unwrap(),
        ]
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

struct LstmCache {
    x: Vec<Array1<f64>>,
    gate_i: Vec<Array1<f64>>,
    gate_f: Vec<Array1<f64>>,
    gate_g: Vec<Array1<f64>>,
    gate_o: Vec<Array1<f64>>,
    cell: Vec<Array1<f64>>,
    tanh_cell: Vec<Array1<f64>>,
    hidden: Vec<Array1<f64>>,
}

fn lstm_forward(layer: &LstmLayer, inputs: &[Array1<f64>]) -> LstmCache {
    let h = layer.hidden();
    let t_len = inputs.len();
    let mut cache = LstmCache {
        x: inputs.to_vec(),
        gate_i: Vec::with_capacity(t_len),
        gate_f: Vec::with_capacity(t_len),
        gate_g: Vec::with_capacity(t_len),
        gate_o: Vec::with_capacity(t_len),
        cell: Vec::with_capacity(t_len),
        tanh_cell: Vec::with_capacity(t_len),
        hidden: Vec::with_capacity(t_len),
    };
    let mut h_prev: Array1<f64> = Array1::zeros(h);
    let mut c_prev: Array1<f64> = Array1::zeros(h);
    for x_t in inputs {
        let z = layer.w.dot(x_t) + layer.u.dot(&h_prev) + &layer.b;
        let gi = z.slice(ndarray::s![0..h]).mapv(sigmoid);
        let gf = z.slice(ndarray::s![h..2 * h]).mapv(sigmoid);
        let gg = z.slice(ndarray::s![2 * h..3 * h]).mapv(f64::tanh);
        let go = z.slice(ndarray::s![3 * h..4 * h]).mapv(sigmoid);
        let c = &gf * &c_prev + &gi * &gg;
        let tc = c.mapv(f64::tanh);
        let h_t = &go * &tc;
        cache.gate_i.push(gi);
        cache.gate_f.push(gf);
        cache.gate_g.push(gg);
        cache.gate_o.push(go);
        cache.cell.push(c.clone());
        cache.tanh_cell.push(tc);
        cache.hidden.push(h_t.clone());
        h_prev = h_t;
        c_prev = c;
    }
    cache
}

/// dW/dU/db plus the gradient w.r.t. the layer inputs, given per-step
/// external hidden-state gradients.
#[allow(clippy::type_complexity)]
fn lstm_backward(
    layer: &LstmLayer,
    cache: &LstmCache,
    dh_ext: &[Array1<f64>],
) -> (Array2<f64>, Array2<f64>, Array1<f64>, Vec<Array1<f64>>) {
    let h = layer.hidden();
    let t_len = cache.x.len();
    let mut dw = Array2::zeros(layer.w.raw_dim());
    let mut du = Array2::zeros(layer.u.raw_dim());
    let mut db = Array1::zeros(layer.b.raw_dim());
    let mut dx = vec![Array1::zeros(layer.input_dim()); t_len];
    let mut dh_next: Array1<f64> = Array1::zeros(h);
    let mut dc_next: Array1<f64> = Array1::zeros(h);
    let zeros = Array1::zeros(h);

    for t in (0..t_len).rev() {
        let dh = &dh_ext[t] + &dh_next;
        let gi = &cache.gate_i[t];
        let gf = &cache.gate_f[t];
        let gg = &cache.gate_g[t];
        let go = &cache.gate_o[t];
        let tc = &cache.tanh_cell[t];
        let c_prev = if t == 0 { &zeros } else { &cache.cell[t - 1] };
        let h_prev = if t == 0 { &zeros } else { &cache.hidden[t - 1] };

        let d_o = &dh * tc;
        let dc = &dh * go * &tc.mapv(|v| 1.0 - v * v) + &dc_next;
        let d_i = &dc * gg;
        let d_g = &dc * gi;
        let d_f = &dc * c_prev;

        let mut dz = Array1::zeros(4 * h);
        for j in 0..h {
            dz[j] = d_i[j] * gi[j] * (1.0 - gi[j]);
            dz[h + j] = d_f[j] * gf[j] * (1.0 - gf[j]);
            dz[2 * h + j] = d_g[j] * (1.0 - gg[j] * gg[j]);
            dz[3 * h + j] = d_o[j] * go[j] * (1.0 - go[j]);
        }
        outer_acc(&mut dw, &dz, &cache.x[t]);
        outer_acc(&mut du, &dz, h_prev);
        db += &dz;
        dx[t] = layer.w.t().dot(&dz);
        dh_next = layer.u.t().dot(&dz);
        dc_next = dc * gf;
    }
    (dw, du, db, dx)
}

fn outer_acc(acc: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let mut row = acc.row_mut(i);
        for (j, &bj) in b.iter().enumerate() {
            row[j] += ai * bj;
        }
    }
}

struct SampleCache {
    l1: LstmCache,
    l2: LstmCache,
    attn_pre: Vec<Array1<f64>>,
    alpha: Vec<f64>,
    drop_mask: Option<Array1<f64>>,
    dropped: Array1<f64>,
    dense_pre: Array1<f64>,
    dense_out: Array1<f64>,
    probs: [f64; 2],
}

/// Output of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub probs: [f64; 2],
    /// Attention weight per position; masked positions are exactly 0.
    pub attention: Vec<f64>,
}

fn forward_sample(
    model: &SeqNetModel,
    x: &Array2<f64>,
    mask: &[bool],
    drop_mask: Option<Array1<f64>>,
) -> SampleCache {
    let t_len = x.nrows();
    debug_assert_eq!(mask.len(), t_len);
    let inputs: Vec<Array1<f64>> = (0..t_len).map(|t| x.row(t).to_owned()).collect();
    let l1 = lstm_forward(&model.lstm1, &inputs);
    let l2 = lstm_forward(&model.lstm2, &l1.hidden);

    // Additive attention with masked softmax over real positions.
    let attn_pre: Vec<Array1<f64>> = l2
        .hidden
        .iter()
        .map(|h_t| model.attention.proj.dot(h_t).mapv(f64::tanh))
        .collect();
    let scores: Vec<f64> = attn_pre.iter().map(|a| model.attention.score.dot(a)).collect();
    let mut alpha = vec![0.0f64; t_len];
    let live: Vec<usize> = (0..t_len).filter(|&t| mask[t]).collect();
    if !live.is_empty() {
        let max = live.iter().map(|&t| scores[t]).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for &t in &live {
            let e = (scores[t] - max).exp();
            alpha[t] = e;
            z += e;
        }
        for &t in &live {
            alpha[t] /= z;
        }
    }
    // All-masked input: every weight stays zero and the context vector is
    // the zero vector (documented degenerate rule).
    let hidden = model.lstm2.hidden();
    let mut context: Array1<f64> = Array1::zeros(hidden);
    for t in 0..t_len {
        if alpha[t] != 0.0 {
            context.scaled_add(alpha[t], &l2.hidden[t]);
        }
    }

    let dropped = match &drop_mask {
        Some(m) => &context * m,
        None => context.clone(),
    };
    let dense_pre = model.dense_w.dot(&dropped) + &model.dense_b;
    let dense_out = dense_pre.mapv(|v| v.max(0.0));
    let logits = model.out_w.dot(&dense_out) + &model.out_b;
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let probs = [e0 / (e0 + e1), e1 / (e0 + e1)];

    SampleCache {
        l1,
        l2,
        attn_pre,
        alpha,
        drop_mask,
        dropped,
        dense_pre,
        dense_out,
        probs,
    }
}

/// Runs the classifier on one embedded sequence.
///
/// In training mode dropout is sampled from `rng` (inverted scaling); in
/// evaluation mode dropout is the identity.
pub fn seqnet_forward(
    model: &SeqNetModel,
    x: &Array2<f64>,
    mask: &[bool],
    train_mode: bool,
    rng: Option<&mut ChaCha8Rng>,
) -> ForwardOutput {
    let drop_mask = if train_mode && model.dropout > 0.0 {
        let rng = rng.expect("training mode requires an RNG for dropout");
        Some(sample_drop_mask(
            model.lstm2.hidden(),
            model.dropout,
            rng,
        ))
    } else {
        None
    };
    let cache = forward_sample(model, x, mask, drop_mask);
    ForwardOutput {
        probs: cache.probs,
        attention: cache.alpha,
    }
}

pub(crate) fn sample_drop_mask(dim: usize, rate: f64, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let keep = 1.0 - rate;
    Array1::from_shape_fn(dim, |_| {
        if rng.gen::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    })
}

fn backward_sample(
    model: &SeqNetModel,
    cache: &SampleCache,
    label: u8,
    scale: f64,
    grads: &mut SeqNetGrads,
) {
    let t_len = cache.alpha.len();
    let hidden = model.lstm2.hidden();

    // Softmax + cross-entropy.
    let mut dlogits = Array1::from(vec![cache.probs[0], cache.probs[1]]);
    dlogits[label as usize] -= 1.0;
    dlogits *= scale;

    outer_acc(&mut grads.out_w, &dlogits, &cache.dense_out);
    grads.out_b += &dlogits;
    let ddense_out = model.out_w.t().dot(&dlogits);
    let ddense_pre = ndarray::Zip::from(&ddense_out)
        .and(&cache.dense_pre)
        .map_collect(|&d, &z| if z > 0.0 { d } else { 0.0 });
    outer_acc(&mut grads.dense_w, &ddense_pre, &cache.dropped);
    grads.dense_b += &ddense_pre;
    let ddropped = model.dense_w.t().dot(&ddense_pre);
    let dcontext = match &cache.drop_mask {
        Some(m) => &ddropped * m,
        None => ddropped,
    };

    // Attention: context = sum_t alpha_t h2_t.
    let mut dh2: Vec<Array1<f64>> = vec![Array1::zeros(hidden); t_len];
    let live: Vec<usize> = (0..t_len).filter(|&t| cache.alpha[t] != 0.0).collect();
    if !live.is_empty() {
        let dalpha: Vec<f64> = (0..t_len)
            .map(|t| {
                if cache.alpha[t] != 0.0 {
                    dcontext.dot(&cache.l2.hidden[t])
                } else {
                    0.0
                }
            })
            .collect();
        for &t in &live {
            dh2[t] = &dh2[t] + &(&dcontext * cache.alpha[t]);
        }
        let weighted: f64 = live.iter().map(|&t| cache.alpha[t] * dalpha[t]).sum();
        for &t in &live {
            let de = cache.alpha[t] * (dalpha[t] - weighted);
            // e_t = score . tanh(proj h2_t)
            grads.attn_score.scaled_add(de, &cache.attn_pre[t]);
            let da = &model.attention.score * de;
            let dpre = &da * &cache.attn_pre[t].mapv(|v| 1.0 - v * v);
            outer_acc(&mut grads.attn_proj, &dpre, &cache.l2.hidden[t]);
            dh2[t] = &dh2[t] + &model.attention.proj.t().dot(&dpre);
        }
    }

    let (dw2, du2, db2, dx2) = lstm_backward(&model.lstm2, &cache.l2, &dh2);
    grads.lstm2_w += &dw2;
    grads.lstm2_u += &du2;
    grads.lstm2_b += &db2;
    let (dw1, du1, db1, _) = lstm_backward(&model.lstm1, &cache.l1, &dx2);
    grads.lstm1_w += &dw1;
    grads.lstm1_u += &du1;
    grads.lstm1_b += &db1;
}

/// Mean cross-entropy loss and gradients for every parameter block over a
/// batch. `drop_masks` carries per-sample dropout masks in training;
/// gradient checking passes `None`.
pub fn seqnet_gradients_with(
    model: &SeqNetModel,
    batch: &[(Array2<f64>, Vec<bool>)],
    labels: &[u8],
    drop_masks: Option<&[Array1<f64>]>,
) -> Result<(f64, SeqNetGrads)> {
    if batch.len() != labels.len() || batch.is_empty() {
        return Err(Error::Config(format!(
            "batch of {} sequences vs {} labels",
            batch.len(),
            labels.len()
        )));
    }
    let scale = 1.0 / batch.len() as f64;

    let per_sample: Vec<(f64, SeqNetGrads)> = crate::par::map_indices(batch.len(), |idx| {
        let (x, mask) = &batch[idx];
        let dm = drop_masks.map(|m| m[idx].clone());
        let cache = forward_sample(model, x, mask, dm);
        let mut grads = SeqNetGrads::zeros_like(model);
        backward_sample(model, &cache, labels[idx], scale, &mut grads);
        let p = cache.probs[labels[idx] as usize].max(1e-300);
        (-p.ln() * scale, grads)
    });

    let mut loss = 0.0;
    let mut total = SeqNetGrads::zeros_like(model);
    for (l, g) in &per_sample {
        loss += l;
        total.add_assign(g);
    }
    for (name, block) in SeqNetModel::BLOCK_NAMES.iter().zip(total.blocks()) {
        if block.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient in parameter block {name}"
            )));
        }
    }
    Ok((loss, total))
}

/// Gradients with dropout disabled (the checking configuration).
pub fn seqnet_gradients(
    model: &SeqNetModel,
    batch: &[(Array2<f64>, Vec<bool>)],
    labels: &[u8],
) -> Result<(f64, SeqNetGrads)> {
    seqnet_gradients_with(model, batch, labels, None)
}
