//! Transformer-encoder regression core: parameter tensors, forward pass
//! with cached intermediates, and hand-derived backpropagation.
//!
//! The architecture is a pre-norm encoder stack over a short token
//! sequence: each standardized input scalar becomes one token (or the whole
//! vector becomes a single token in ablation mode), linearly embedded and
//! given a learned positional embedding. Each block applies multi-head
//! scaled-dot-product attention and a ReLU feedforward, both behind
//! residual connections with dropout; a final layer norm, mean-pool over
//! tokens, and a linear decoder produce the regression output.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::TransformerConfig;

const LN_EPS: f64 = 1e-5;

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// One encoder block's parameters. Biases and norm parameters are stored as
/// single-row matrices so every tensor enumerates uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub ln1_g: Array2<f64>,
    pub ln1_b: Array2<f64>,
    pub w_q: Array2<f64>,
    pub b_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub b_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub b_v: Array2<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array2<f64>,
    pub ln2_g: Array2<f64>,
    pub ln2_b: Array2<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array2<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array2<f64>,
}

/// All parameters of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub w_enc: Array2<f64>,
    pub b_enc: Array2<f64>,
    pub pos: Array2<f64>,
    pub layers: Vec<LayerWeights>,
    pub lnf_g: Array2<f64>,
    pub lnf_b: Array2<f64>,
    pub w_dec: Array2<f64>,
    pub b_dec: Array2<f64>,
}

impl LayerWeights {
    fn tensors_mut(&mut self, i: usize) -> Vec<(String, &mut Array2<f64>)> {
        vec![
            (format!("layer{i}.ln1.g"), &mut self.ln1_g),
            (format!("layer{i}.ln1.b"), &mut self.ln1_b),
            (format!("layer{i}.attn.w_q"), &mut self.w_q),
            (format!("layer{i}.attn.b_q"), &mut self.b_q),
            (format!("layer{i}.attn.w_k"), &mut self.w_k),
            (format!("layer{i}.attn.b_k"), &mut self.b_k),
            (format!("layer{i}.attn.w_v"), &mut self.w_v),
            (format!("layer{i}.attn.b_v"), &mut self.b_v),
            (format!("layer{i}.attn.w_o"), &mut self.w_o),
            (format!("layer{i}.attn.b_o"), &mut self.b_o),
            (format!("layer{i}.ln2.g"), &mut self.ln2_g),
            (format!("layer{i}.ln2.b"), &mut self.ln2_b),
            (format!("layer{i}.ff.w1"), &mut self.w_ff1),
            (format!("layer{i}.ff.b1"), &mut self.b_ff1),
            (format!("layer{i}.ff.w2"), &mut self.w_ff2),
            (format!("layer{i}.ff.b2"), &mut self.b_ff2),
        ]
    }
}

impl ModelWeights {
    /// Every parameter tensor with a stable name, in a fixed order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = vec![
            ("enc.w".to_string(), &mut self.w_enc),
            ("enc.b".to_string(), &mut self.b_enc),
            ("pos".to_string(), &mut self.pos),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.extend(layer.tensors_mut(i));
        }
        out.push(("final_norm.g".to_string(), &mut self.lnf_g));
        out.push(("final_norm.b".to_string(), &mut self.lnf_b));
        out.push(("dec.w".to_string(), &mut self.w_dec));
        out.push(("dec.b".to_string(), &mut self.b_dec));
        out
    }

    pub fn param_count(&self) -> usize {
        let mut count = 0;
        let mut me = self.clone();
        for (_, t) in me.tensors_mut() {
            count += t.len();
        }
        count
    }

    /// Same shapes, all zeros — gradient and optimizer-state containers.
    pub fn zeros_like(&self) -> ModelWeights {
        let mut out = self.clone();
        for (_, t) in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    /// Correctly-shaped all-zero parameters for `cfg` — the container a
    /// deserializer fills tensor by tensor.
    pub fn zeros(cfg: &TransformerConfig) -> ModelWeights {
        let d = cfg.d_model;
        let layer = || LayerWeights {
            ln1_g: Array2::zeros((1, d)),
            ln1_b: Array2::zeros((1, d)),
            w_q: Array2::zeros((d, d)),
            b_q: Array2::zeros((1, d)),
            w_k: Array2::zeros((d, d)),
            b_k: Array2::zeros((1, d)),
            w_v: Array2::zeros((d, d)),
            b_v: Array2::zeros((1, d)),
            w_o: Array2::zeros((d, d)),
            b_o: Array2::zeros((1, d)),
            ln2_g: Array2::zeros((1, d)),
            ln2_b: Array2::zeros((1, d)),
            w_ff1: Array2::zeros((d, cfg.d_ff)),
            b_ff1: Array2::zeros((1, cfg.d_ff)),
            w_ff2: Array2::zeros((cfg.d_ff, d)),
            b_ff2: Array2::zeros((1, d)),
        };
        ModelWeights {
            w_enc: Array2::zeros((cfg.token_dim(), d)),
            b_enc: Array2::zeros((1, d)),
            pos: Array2::zeros((cfg.seq_len(), d)),
            layers: (0..cfg.n_layers).map(|_| layer()).collect(),
            lnf_g: Array2::zeros((1, d)),
            lnf_b: Array2::zeros((1, d)),
            w_dec: Array2::zeros((d, cfg.output_dim)),
            b_dec: Array2::zeros((1, cfg.output_dim)),
        }
    }

    /// Xavier-uniform initialization (biases and shift terms zero, norm
    /// gains one, positional table small-uniform).
    pub fn init(cfg: &TransformerConfig, rng: &mut ChaCha8Rng) -> ModelWeights {
        let d = cfg.d_model;
        let xavier = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| -> Array2<f64> {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..=limit))
        };
        let zeros = |cols: usize| Array2::zeros((1, cols));
        let ones = |cols: usize| Array2::ones((1, cols));
        let layer = |rng: &mut ChaCha8Rng| LayerWeights {
            ln1_g: ones(d),
            ln1_b: zeros(d),
            w_q: xavier(d, d, rng),
            b_q: zeros(d),
            w_k: xavier(d, d, rng),
            b_k: zeros(d),
            w_v: xavier(d, d, rng),
            b_v: zeros(d),
            w_o: xavier(d, d, rng),
            b_o: zeros(d),
            ln2_g: ones(d),
            ln2_b: zeros(d),
            w_ff1: xavier(d, cfg.d_ff, rng),
            b_ff1: zeros(cfg.d_ff),
            w_ff2: xavier(cfg.d_ff, d, rng),
            b_ff2: zeros(d),
        };
        ModelWeights {
            w_enc: xavier(cfg.token_dim(), d, rng),
            b_enc: zeros(d),
            pos: Array2::from_shape_fn((cfg.seq_len(), d), |_| rng.random_range(-0.02..=0.02)),
            layers: (0..cfg.n_layers).map(|_| layer(rng)).collect(),
            lnf_g: ones(d),
            lnf_b: zeros(d),
            w_dec: xavier(d, cfg.output_dim, rng),
            b_dec: zeros(cfg.output_dim),
        }
    }
}

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

/// Row-wise softmax, stabilized by subtracting each row's maximum.
pub fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Scaled dot-product attention: `Softmax(Q Kᵀ / √d_k) V`.
pub fn attention(q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    attention_with_weights(q, k, v).0
}

/// Attention output together with the softmax weight matrix (for backprop).
pub fn attention_with_weights(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let scale = (q.ncols() as f64).sqrt();
    let scores = q.dot(&k.t()) / scale;
    let weights = softmax_rows(&scores);
    (weights.dot(v), weights)
}

/// Backprop through one row-wise softmax: `ds = a ⊙ (da − ⟨da, a⟩)` per row.
fn softmax_rows_backward(weights: &Array2<f64>, d_weights: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(weights.raw_dim());
    for ((mut o, a), da) in out
        .rows_mut()
        .into_iter()
        .zip(weights.rows())
        .zip(d_weights.rows())
    {
        let inner: f64 = da.iter().zip(a.iter()).map(|(x, y)| x * y).sum();
        for (slot, (&ai, &dai)) in o.iter_mut().zip(a.iter().zip(da.iter())) {
            *slot = ai * (dai - inner);
        }
    }
    out
}

#[derive(Debug)]
struct LnCache {
    x_hat: Array2<f64>,
    inv_sigma: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, gain: &Array2<f64>, shift: &Array2<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut x_hat = x.clone();
    let mut inv_sigma = Array1::zeros(x.nrows());
    for (mut row, slot) in x_hat.rows_mut().into_iter().zip(inv_sigma.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| v * inv);
        *slot = inv;
    }
    let y = &x_hat * gain + shift;
    (y, LnCache { x_hat, inv_sigma })
}

/// Backprop through layer norm. Returns `dL/dx`; accumulates the gain and
/// shift gradients.
fn layer_norm_backward(
    cache: &LnCache,
    gain: &Array2<f64>,
    dy: &Array2<f64>,
    d_gain: &mut Array2<f64>,
    d_shift: &mut Array2<f64>,
) -> Array2<f64> {
    let d = dy.ncols() as f64;
    *d_gain += &(dy * &cache.x_hat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *d_shift += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_xhat = dy * gain;
    let mut dx = Array2::zeros(dy.raw_dim());
    for ((mut out_row, dx_hat_row), (x_hat_row, &inv)) in dx
        .rows_mut()
        .into_iter()
        .zip(d_xhat.rows())
        .zip(cache.x_hat.rows().into_iter().zip(cache.inv_sigma.iter()))
    {
        let mean_d: f64 = dx_hat_row.sum() / d;
        let mean_dx: f64 =
            dx_hat_row.iter().zip(x_hat_row.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        for (slot, (&dxh, &xh)) in out_row
            .iter_mut()
            .zip(dx_hat_row.iter().zip(x_hat_row.iter()))
        {
            *slot = inv * (dxh - mean_d - xh * mean_dx);
        }
    }
    dx
}

fn assert_finite(x: &Array2<f64>, layer: usize, context: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer, context: context.to_string() })
    }
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct BlockCache {
    ln1: LnCache,
    xn1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    head_weights: Vec<Array2<f64>>,
    concat: Array2<f64>,
    drop1: Option<Array2<f64>>,
    ln2: LnCache,
    xn2: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
    drop2: Option<Array2<f64>>,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug)]
pub struct ForwardCache {
    tokens: Array2<f64>,
    blocks: Vec<BlockCache>,
    lnf: LnCache,
    x_final: Array2<f64>,
}

/// Result of one forward evaluation.
#[derive(Debug)]
pub struct ForwardPass {
    /// Decoder output, `output_dim` long.
    pub output: Array1<f64>,
    /// Mean-pooled pre-decoder representation, `d_model` long.
    pub pooled: Array1<f64>,
    /// Per-token pre-pool representation, `seq_len × d_model`.
    pub tokens_final: Array2<f64>,
    pub cache: ForwardCache,
}

/// Arrange a standardized input vector into the token matrix.
pub fn tokenize(cfg: &TransformerConfig, standardized: &[f64]) -> Result<Array2<f64>> {
    if standardized.len() != cfg.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "input has {} scalars, model expects {}",
            standardized.len(),
            cfg.input_dim
        )));
    }
    Ok(if cfg.single_token {
        Array2::from_shape_vec((1, cfg.input_dim), standardized.to_vec())
            .expect("shape matches length")
    } else {
        Array2::from_shape_vec((cfg.input_dim, 1), standardized.to_vec())
            .expect("shape matches length")
    })
}

fn dropout_mask(
    shape: (usize, usize),
    p: f64,
    rng: &mut Option<&mut ChaCha8Rng>,
) -> Option<Array2<f64>> {
    let rng = rng.as_deref_mut()?;
    if p == 0.0 {
        return None;
    }
    let keep = 1.0 - p;
    Some(Array2::from_shape_fn(shape, |_| {
        if rng.random_range(0.0..1.0) < keep {
            1.0 / keep
        } else {
            0.0
        }
    }))
}

/// Run the model on one standardized input. Passing a dropout RNG selects
/// training mode; `None` disables dropout (deterministic evaluation).
pub fn forward(
    weights: &ModelWeights,
    cfg: &TransformerConfig,
    standardized: &[f64],
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<ForwardPass> {
    let tokens = tokenize(cfg, standardized)?;
    let mut x = tokens.dot(&weights.w_enc) + &weights.b_enc + &weights.pos;
    assert_finite(&x, 0, "token embedding")?;

    let heads = cfg.n_heads;
    let d_k = cfg.d_k();
    let mut blocks = Vec::with_capacity(cfg.n_layers);
    for (i, layer) in weights.layers.iter().enumerate() {
        let x_in = x.clone();
        let (xn1, ln1) = layer_norm(&x_in, &layer.ln1_g, &layer.ln1_b);
        let q = xn1.dot(&layer.w_q) + &layer.b_q;
        let k = xn1.dot(&layer.w_k) + &layer.b_k;
        let v = xn1.dot(&layer.w_v) + &layer.b_v;
        let mut concat = Array2::zeros(q.raw_dim());
        let mut head_weights = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * d_k..(h + 1) * d_k];
            let (head_out, head_w) = attention_with_weights(
                &q.slice(cols).to_owned(),
                &k.slice(cols).to_owned(),
                &v.slice(cols).to_owned(),
            );
            concat.slice_mut(cols).assign(&head_out);
            head_weights.push(head_w);
        }
        let mha = concat.dot(&layer.w_o) + &layer.b_o;
        let drop1 = dropout_mask(mha.dim(), cfg.dropout, &mut dropout_rng);
        let dropped1 = match &drop1 {
            Some(mask) => &mha * mask,
            None => mha,
        };
        let x_mid = &x_in + &dropped1;

        let (xn2, ln2) = layer_norm(&x_mid, &layer.ln2_g, &layer.ln2_b);
        let ff_pre = xn2.dot(&layer.w_ff1) + &layer.b_ff1;
        let ff_act = ff_pre.mapv(|v| v.max(0.0));
        let ff_out = ff_act.dot(&layer.w_ff2) + &layer.b_ff2;
        let drop2 = dropout_mask(ff_out.dim(), cfg.dropout, &mut dropout_rng);
        let dropped2 = match &drop2 {
            Some(mask) => &ff_out * mask,
            None => ff_out,
        };
        x = &x_mid + &dropped2;
        assert_finite(&x, i + 1, "encoder block output")?;

        blocks.push(BlockCache {
            ln1,
            xn1,
            q,
            k,
            v,
            head_weights,
            concat,
            drop1,
            ln2,
            xn2,
            ff_pre,
            ff_act,
            drop2,
        });
    }

    let (x_final, lnf) = layer_norm(&x, &weights.lnf_g, &weights.lnf_b);
    assert_finite(&x_final, cfg.n_layers + 1, "final norm")?;
    let pooled = x_final.mean_axis(Axis(0)).expect("at least one token");
    let output = pooled.dot(&weights.w_dec) + &weights.b_dec.row(0);
    if !output.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite {
            layer: cfg.n_layers + 2,
            context: "decoder output".to_string(),
        });
    }

    Ok(ForwardPass {
        output,
        pooled,
        tokens_final: x_final.clone(),
        cache: ForwardCache { tokens, blocks, lnf, x_final },
    })
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

/// Accumulate gradients for one sample into `grads`, given `d_output` =
/// dLoss/dOutput. The cache must come from a forward pass of `weights`.
pub fn backward(
    weights: &ModelWeights,
    cfg: &TransformerConfig,
    pass: &ForwardPass,
    d_output: &Array1<f64>,
    grads: &mut ModelWeights,
) {
    let cache = &pass.cache;
    let seq_len = cfg.seq_len() as f64;
    let heads = cfg.n_heads;
    let d_k = cfg.d_k();

    // decoder: output = pooled · W_dec + b_dec
    let d_out2 = d_output.clone().insert_axis(Axis(0));
    let pooled2 = pass.pooled.clone().insert_axis(Axis(0));
    grads.w_dec += &pooled2.t().dot(&d_out2);
    grads.b_dec += &d_out2;
    let d_pooled = d_out2.dot(&weights.w_dec.t());

    // mean-pool: every token row receives d_pooled / L
    let mut d_x = Array2::zeros(cache.x_final.raw_dim());
    for mut row in d_x.rows_mut() {
        row.assign(&(&d_pooled.row(0) / seq_len));
    }

    // final layer norm
    let mut d_x = layer_norm_backward(&cache.lnf, &weights.lnf_g, &d_x, &mut grads.lnf_g, &mut grads.lnf_b);

    for (layer, (block, g)) in weights
        .layers
        .iter()
        .zip(cache.blocks.iter().zip(grads.layers.iter_mut()))
        .rev()
    {
        // x_out = x_mid + dropout(ff_out)
        let d_ff_out = match &block.drop2 {
            Some(mask) => &d_x * mask,
            None => d_x.clone(),
        };
        // ff_out = relu(ff_pre) · W2 + b2
        g.w_ff2 += &block.ff_act.t().dot(&d_ff_out);
        g.b_ff2 += &d_ff_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut d_ff_pre = d_ff_out.dot(&layer.w_ff2.t());
        d_ff_pre.zip_mut_with(&block.ff_pre, |d, &pre| {
            if pre <= 0.0 {
                *d = 0.0;
            }
        });
        // ff_pre = xn2 · W1 + b1
        g.w_ff1 += &block.xn2.t().dot(&d_ff_pre);
        g.b_ff1 += &d_ff_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_xn2 = d_ff_pre.dot(&layer.w_ff1.t());
        let d_from_ln2 =
            layer_norm_backward(&block.ln2, &layer.ln2_g, &d_xn2, &mut g.ln2_g, &mut g.ln2_b);
        // x_mid feeds both the residual and LN2
        let d_x_mid = &d_x + &d_from_ln2;

        // x_mid = x_in + dropout(mha)
        let d_mha = match &block.drop1 {
            Some(mask) => &d_x_mid * mask,
            None => d_x_mid.clone(),
        };
        // mha = concat · W_o + b_o
        g.w_o += &block.concat.t().dot(&d_mha);
        g.b_o += &d_mha.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_concat = d_mha.dot(&layer.w_o.t());

        // heads
        let mut d_q = Array2::zeros(block.q.raw_dim());
        let mut d_kk = Array2::zeros(block.k.raw_dim());
        let mut d_v = Array2::zeros(block.v.raw_dim());
        let scale = (d_k as f64).sqrt();
        for h in 0..heads {
            let cols = s![.., h * d_k..(h + 1) * d_k];
            let q_h = block.q.slice(cols).to_owned();
            let k_h = block.k.slice(cols).to_owned();
            let v_h = block.v.slice(cols).to_owned();
            let a_h = &block.head_weights[h];
            let d_o_h = d_concat.slice(cols).to_owned();
            // O = A·V
            let d_a = d_o_h.dot(&v_h.t());
            let d_v_h = a_h.t().dot(&d_o_h);
            // A = softmax(S), S = Q·Kᵀ/√d_k
            let d_s = softmax_rows_backward(a_h, &d_a);
            let d_q_h = d_s.dot(&k_h) / scale;
            let d_k_h = d_s.t().dot(&q_h) / scale;
            d_q.slice_mut(cols).assign(&d_q_h);
            d_kk.slice_mut(cols).assign(&d_k_h);
            d_v.slice_mut(cols).assign(&d_v_h);
        }

        // q/k/v = xn1 · W + b
        g.w_q += &block.xn1.t().dot(&d_q);
        g.b_q += &d_q.sum_axis(Axis(0)).insert_axis(Axis(0));
        g.w_k += &block.xn1.t().dot(&d_kk);
        g.b_k += &d_kk.sum_axis(Axis(0)).insert_axis(Axis(0));
        g.w_v += &block.xn1.t().dot(&d_v);
        g.b_v += &d_v.sum_axis(Axis(0)).insert_axis(Axis(0));
        let d_xn1 = d_q.dot(&layer.w_q.t()) + d_kk.dot(&layer.w_k.t()) + d_v.dot(&layer.w_v.t());
        let d_from_ln1 =
            layer_norm_backward(&block.ln1, &layer.ln1_g, &d_xn1, &mut g.ln1_g, &mut g.ln1_b);
        // x_in feeds both the residual and LN1
        d_x = &d_x_mid + &d_from_ln1;
    }

    // x0 = tokens · W_enc + b_enc + pos
    grads.pos += &d_x;
    grads.w_enc += &cache.tokens.t().dot(&d_x);
    grads.b_enc += &d_x.sum_axis(Axis(0)).insert_axis(Axis(0));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::TransformerConfig;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::SeedableRng;

    fn tiny_config() -> TransformerConfig {
        TransformerConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 16,
            dropout: 0.0,
            input_dim: 9,
            output_dim: 3,
            single_token: false,
        }
    }

    #[test]
    fn attention_single_row_returns_v() {
        let q = array![[0.3, -0.7]];
        let k = array![[1.1, 0.2]];
        let v = array![[5.0, -2.0]];
        let o = attention(&q, &k, &v);
        assert_relative_eq!(o[[0, 0]], 5.0, max_relative = 1e-12);
        assert_relative_eq!(o[[0, 1]], -2.0, max_relative = 1e-12);
    }

    #[test]
    fn attention_zero_queries_average_v() {
        let q = Array2::zeros((2, 3));
        let k = array![[1.0, 0.0, 2.0], [0.5, -1.0, 0.3]];
        let v = array![[2.0, 8.0, 1.0], [4.0, 0.0, 3.0]];
        let o = attention(&q, &k, &v);
        for row in 0..2 {
            assert_relative_eq!(o[[row, 0]], 3.0, max_relative = 1e-12);
            assert_relative_eq!(o[[row, 1]], 4.0, max_relative = 1e-12);
            assert_relative_eq!(o[[row, 2]], 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn attention_hand_oracle_dk1() {
        // weights for row 0: [e/(e+1), 1/(e+1)]; O_0 = 2·w0 + 4·w1
        let q = array![[1.0], [0.0]];
        let k = array![[1.0], [0.0]];
        let v = array![[2.0], [4.0]];
        let o = attention(&q, &k, &v);
        let e = std::f64::consts::E;
        let expected0 = (2.0 * e + 4.0) / (e + 1.0);
        assert_relative_eq!(o[[0, 0]], expected0, max_relative = 1e-9);
        assert_relative_eq!(o[[0, 0]], 2.5378828427399902, max_relative = 1e-9);
        // row 1: zero scores → equal weights → 3
        assert_relative_eq!(o[[1, 0]], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_outputs_stay_in_v_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = Array2::from_shape_fn((6, 4), |_| rng.random_range(-3.0..3.0));
        let k = Array2::from_shape_fn((6, 4), |_| rng.random_range(-3.0..3.0));
        let v = Array2::from_shape_fn((6, 4), |_| rng.random_range(-5.0..5.0));
        let (o, w) = attention_with_weights(&q, &k, &v);
        for row in w.rows() {
            assert_relative_eq!(row.sum(), 1.0, epsilon = 1e-9);
            assert!(row.iter().all(|&x| x >= 0.0));
        }
        for col in 0..4 {
            let lo = v.column(col).iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.column(col).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for row in 0..6 {
                assert!(o[[row, col]] >= lo - 1e-12 && o[[row, col]] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn softmax_is_stable_for_large_scores() {
        let s = array![[1e4, 1e4 - 5.0], [-1e4, -1e4 + 2.0]];
        let w = softmax_rows(&s);
        assert!(w.iter().all(|v| v.is_finite()));
        assert_relative_eq!(w.row(0).sum(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(w.row(1).sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn forward_is_deterministic_in_eval_mode() {
        let cfg = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = ModelWeights::init(&cfg, &mut rng);
        let input: Vec<f64> = (0..9).map(|i| i as f64 * 0.1 - 0.4).collect();
        let a = forward(&w, &cfg, &input, None).unwrap();
        let b = forward(&w, &cfg, &input, None).unwrap();
        assert_eq!(a.output, b.output);
        assert_eq!(a.pooled, b.pooled);
    }

    #[test]
    fn dropout_changes_training_outputs() {
        let cfg = TransformerConfig { dropout: 0.5, ..tiny_config() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = ModelWeights::init(&cfg, &mut rng);
        let input = vec![0.5; 9];
        let mut rng_a = ChaCha8Rng::seed_from_u64(2);
        let mut rng_b = ChaCha8Rng::seed_from_u64(3);
        let a = forward(&w, &cfg, &input, Some(&mut rng_a)).unwrap();
        let b = forward(&w, &cfg, &input, Some(&mut rng_b)).unwrap();
        assert_ne!(a.output, b.output);
    }

    #[test]
    fn inverted_dropout_mask_is_unbiased() {
        // each mask entry is 1/keep with probability keep, else 0, so the
        // expected mask value is exactly 1 and the zero fraction is p
        let p = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut rng_opt: Option<&mut ChaCha8Rng> = Some(&mut rng);
        let mut sum = 0.0;
        let mut zeros = 0usize;
        let mut count = 0usize;
        for _ in 0..200 {
            let mask = dropout_mask((10, 12), p, &mut rng_opt).expect("p > 0 yields a mask");
            for &v in mask.iter() {
                assert!(v == 0.0 || (v - 1.0 / (1.0 - p)).abs() < 1e-12);
                sum += v;
                zeros += (v == 0.0) as usize;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        assert!((mean - 1.0).abs() < 0.02, "mask mean {mean}");
        let zero_frac = zeros as f64 / count as f64;
        assert!((zero_frac - p).abs() < 0.02, "zero fraction {zero_frac}");
    }

    #[test]
    fn zero_dropout_training_matches_eval_exactly() {
        let cfg = tiny_config(); // dropout = 0
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = ModelWeights::init(&cfg, &mut rng);
        let input: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
        let eval = forward(&w, &cfg, &input, None).unwrap().output;
        let mut mask_rng = ChaCha8Rng::seed_from_u64(99);
        let train = forward(&w, &cfg, &input, Some(&mut mask_rng)).unwrap().output;
        assert_eq!(eval, train, "p = 0 must not branch on the mode");
    }

    #[test]
    fn permutation_equivariance_without_positions() {
        let cfg = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut w = ModelWeights::init(&cfg, &mut rng);
        w.pos.fill(0.0);
        let input: Vec<f64> = (0..9).map(|i| 0.3 * i as f64 - 1.0).collect();
        let mut permuted = input.clone();
        permuted.swap(0, 4);
        permuted.swap(2, 7);
        let base = forward(&w, &cfg, &input, None).unwrap();
        let perm = forward(&w, &cfg, &permuted, None).unwrap();
        // token rows permute with the input scalars
        for (i, j) in [(0, 4), (4, 0), (2, 7), (7, 2), (1, 1), (3, 3)] {
            for c in 0..cfg.d_model {
                assert_relative_eq!(
                    base.tokens_final[[i, c]],
                    perm.tokens_final[[j, c]],
                    max_relative = 1e-9,
                    epsilon = 1e-12
                );
            }
        }
        // and the pooled embedding is permutation-invariant
        for (a, b) in base.pooled.iter().zip(perm.pooled.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn positions_break_permutation_equivariance() {
        let cfg = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let w = ModelWeights::init(&cfg, &mut rng);
        let input: Vec<f64> = (0..9).map(|i| 0.3 * i as f64 - 1.0).collect();
        let mut permuted = input.clone();
        permuted.swap(0, 4);
        let base = forward(&w, &cfg, &input, None).unwrap();
        let perm = forward(&w, &cfg, &permuted, None).unwrap();
        let diff: f64 = base
            .pooled
            .iter()
            .zip(perm.pooled.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 1e-6, "learned positions should make order matter");
    }

    #[test]
    fn single_token_mode_runs_with_length_one_sequence() {
        let cfg = TransformerConfig { single_token: true, ..tiny_config() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = ModelWeights::init(&cfg, &mut rng);
        assert_eq!(w.pos.nrows(), 1);
        assert_eq!(w.w_enc.dim(), (9, 8));
        let pass = forward(&w, &cfg, &vec![0.2; 9], None).unwrap();
        assert_eq!(pass.tokens_final.nrows(), 1);
        assert_eq!(pass.output.len(), 3);
    }

    #[test]
    fn non_finite_input_is_reported_with_layer() {
        let cfg = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = ModelWeights::init(&cfg, &mut rng);
        let mut input = vec![0.2; 9];
        input[3] = f64::NAN;
        let err = forward(&w, &cfg, &input, None).unwrap_err();
        assert!(matches!(err, Error::NonFinite { layer: 0, .. }), "{err:?}");
    }

    #[test]
    fn param_count_matches_shape_arithmetic() {
        let cfg = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = ModelWeights::init(&cfg, &mut rng);
        let d = 8;
        let dff = 16;
        let expected = (1 * d + d)                 // encoder
            + 9 * d                                 // positions
            + (2 * d) * 2                           // two norms in the block
            + 4 * (d * d + d)                       // q/k/v/o projections
            + (d * dff + dff) + (dff * d + d)       // feedforward
            + 2 * d                                 // final norm
            + (d * 3 + 3); // decoder
        assert_eq!(w.param_count(), expected);
    }

    /// Full-model gradient check against central finite differences.
    #[test]
    fn analytic_gradients_match_finite_differences() {
        let cfg = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut weights = ModelWeights::init(&cfg, &mut rng);
        let input: Vec<f64> = (0..9).map(|i| 0.25 * (i as f64) - 1.0).collect();
        let target = array![0.3, -0.8, 1.4];

        let loss = |w: &ModelWeights| -> f64 {
            let pass = forward(w, &cfg, &input, None).unwrap();
            (&pass.output - &target).mapv(|v| v * v).sum() / target.len() as f64
        };

        // analytic gradients
        let pass = forward(&weights, &cfg, &input, None).unwrap();
        let d_out = (&pass.output - &target).mapv(|v| 2.0 * v / target.len() as f64);
        let mut grads = weights.zeros_like();
        backward(&weights, &cfg, &pass, &d_out, &mut grads);

        // snapshot the analytic gradients so the perturbation loop can index
        // them without re-borrowing
        let analytic_tensors: Vec<(String, Array2<f64>)> = grads
            .tensors_mut()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();

        // numeric gradients, every parameter entry
        let mut checked = 0usize;
        for (idx, (name, analytic_t)) in analytic_tensors.iter().enumerate() {
            let (rows, cols) = analytic_t.dim();
            for r in 0..rows {
                for c in 0..cols {
                    let h = 1e-5;
                    let orig = {
                        let mut ts = weights.tensors_mut();
                        let val = ts[idx].1[[r, c]];
                        ts[idx].1[[r, c]] = val + h;
                        val
                    };
                    let plus = loss(&weights);
                    {
                        let mut ts = weights.tensors_mut();
                        ts[idx].1[[r, c]] = orig - h;
                    }
                    let minus = loss(&weights);
                    {
                        let mut ts = weights.tensors_mut();
                        ts[idx].1[[r, c]] = orig;
                    }
                    let numeric = (plus - minus) / (2.0 * h);
                    let analytic = analytic_t[[r, c]];
                    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                    assert!(
                        (analytic - numeric).abs() / denom < 1e-4,
                        "{name}[{r},{c}]: analytic {analytic} vs numeric {numeric}"
                    );
                    checked += 1;
                }
            }
        }
        assert_eq!(checked, weights.param_count());
    }
}
