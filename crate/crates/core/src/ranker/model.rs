//! Network parameters, forward pass and hand-written backward pass.
//!
//! Per instance: token embeddings -> `layers` self-attention blocks ->
//! graph attention over each node's neighborhood -> mean pooling of
//! `[e, e_hat]` over head and tail nodes -> a linear head over
//! `[o_head, o_tail, o_fre, o_type]`.

use std::collections::BTreeMap;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use super::data::Instance;
use super::RankerConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl EncoderLayer {
    fn zeros(d: usize) -> Self {
        EncoderLayer {
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
            w1: Array2::zeros((d, d)),
            b1: Array1::zeros(d),
            w2: Array2::zeros((d, d)),
            b2: Array1::zeros(d),
        }
    }

    fn random(d: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        let mut m = || Array2::from_shape_fn((d, d), |_| rng.random_range(-bound..bound));
        EncoderLayer {
            wq: m(),
            wk: m(),
            wv: m(),
            w1: m(),
            b1: Array1::zeros(d),
            w2: m(),
            b2: Array1::zeros(d),
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.wq
            .iter()
            .chain(self.wk.iter())
            .chain(self.wv.iter())
            .chain(self.w1.iter())
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.wq
            .iter_mut()
            .chain(self.wk.iter_mut())
            .chain(self.wv.iter_mut())
            .chain(self.w1.iter_mut())
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }
}

/// Parameters of one relation's classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct RankerParams {
    /// vocab x d
    pub embeddings: Array2<f64>,
    pub layers: Vec<EncoderLayer>,
    /// Attention scorer over `[e, e']` (2d weights) plus bias.
    pub attn_w: Array1<f64>,
    pub attn_b: f64,
    /// Plausibility head over `[o_head, o_tail, o_fre, o_type]` (4d + 2).
    pub head_w: Array1<f64>,
    pub head_b: f64,
}

impl RankerParams {
    pub fn zeros(vocab_size: usize, d: usize, layers: usize) -> Self {
        RankerParams {
            embeddings: Array2::zeros((vocab_size, d)),
            layers: (0..layers).map(|_| EncoderLayer::zeros(d)).collect(),
            attn_w: Array1::zeros(2 * d),
            attn_b: 0.0,
            head_w: Array1::zeros(4 * d + 2),
            head_b: 0.0,
        }
    }

    pub fn random(config: &RankerConfig, rng: &mut impl Rng) -> Self {
        let d = config.embed_dim;
        let embeddings =
            Array2::from_shape_fn((config.vocab.len(), d), |_| rng.random_range(-0.5..0.5));
        let layers = (0..config.encoder_layers)
            .map(|_| EncoderLayer::random(d, &mut *rng))
            .collect();
        let a = 1.0 / ((2 * d) as f64).sqrt();
        let attn_w = Array1::from_shape_fn(2 * d, |_| rng.random_range(-a..a));
        let p = 1.0 / ((4 * d + 2) as f64).sqrt();
        let head_w = Array1::from_shape_fn(4 * d + 2, |_| rng.random_range(-p..p));
        RankerParams {
            embeddings,
            layers,
            attn_w,
            attn_b: 0.0,
            head_w,
            head_b: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn vocab_size(&self) -> usize {
        self.embeddings.nrows()
    }

    /// Every scalar parameter in a fixed order.
    pub fn values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.embeddings.iter().copied().collect();
        for layer in &self.layers {
            out.extend(layer.values());
        }
        out.extend(self.attn_w.iter());
        out.push(self.attn_b);
        out.extend(self.head_w.iter());
        out.push(self.head_b);
        out
    }

    pub fn set_values(&mut self, values: &[f64]) {
        let mut it = values.iter().copied();
        let mut next = || it.next().expect("value count matches parameter count");
        for x in self.embeddings.iter_mut() {
            *x = next();
        }
        for layer in &mut self.layers {
            for x in layer.values_mut() {
                *x = next();
            }
        }
        for x in self.attn_w.iter_mut() {
            *x = next();
        }
        self.attn_b = next();
        for x in self.head_w.iter_mut() {
            *x = next();
        }
        self.head_b = next();
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    pub(crate) fn apply(&mut self, grads: &Gradients, step: f64) {
        for (&row, g) in &grads.embeddings {
            self.embeddings.row_mut(row).scaled_add(step, g);
        }
        for (p, g) in self.layers.iter_mut().zip(&grads.layers) {
            p.wq.scaled_add(step, &g.wq);
            p.wk.scaled_add(step, &g.wk);
            p.wv.scaled_add(step, &g.wv);
            p.w1.scaled_add(step, &g.w1);
            p.b1.scaled_add(step, &g.b1);
            p.w2.scaled_add(step, &g.w2);
            p.b2.scaled_add(step, &g.b2);
        }
        self.attn_w.scaled_add(step, &grads.attn_w);
        self.attn_b += step * grads.attn_b;
        self.head_w.scaled_add(step, &grads.head_w);
        self.head_b += step * grads.head_b;
    }
}

/// Loss gradients; embedding rows are stored sparsely.
#[derive(Debug, Clone)]
pub(crate) struct Gradients {
    pub embeddings: BTreeMap<usize, Array1<f64>>,
    pub layers: Vec<EncoderLayer>,
    pub attn_w: Array1<f64>,
    pub attn_b: f64,
    pub head_w: Array1<f64>,
    pub head_b: f64,
}

impl Gradients {
    pub fn zeros(d: usize, layers: usize) -> Self {
        Gradients {
            embeddings: BTreeMap::new(),
            layers: (0..layers).map(|_| EncoderLayer::zeros(d)).collect(),
            attn_w: Array1::zeros(2 * d),
            attn_b: 0.0,
            head_w: Array1::zeros(4 * d + 2),
            head_b: 0.0,
        }
    }

    /// Dense copy laid out like [`RankerParams::values`].
    pub fn dense_values(&self, vocab_size: usize) -> Vec<f64> {
        let d = self.attn_w.len() / 2;
        let mut dense = RankerParams::zeros(vocab_size, d, self.layers.len());
        for (&row, g) in &self.embeddings {
            dense.embeddings.row_mut(row).assign(g);
        }
        dense.layers = self.layers.clone();
        dense.attn_w = self.attn_w.clone();
        dense.attn_b = self.attn_b;
        dense.head_w = self.head_w.clone();
        dense.head_b = self.head_b;
        dense.values()
    }
}

struct LayerCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Array2<f64>,
    h: Array2<f64>,
    g: Array2<f64>,
}

/// Intermediate values of one instance's forward pass.
pub struct Forward {
    layers: Vec<LayerCache>,
    /// Encoder output, one row per node.
    pub e: Array2<f64>,
    /// Graph-attention weights, aligned with the instance's neighborhoods.
    pub weights: Vec<Vec<f64>>,
    pub e_hat: Array2<f64>,
    /// `[o_head, o_tail, o_fre, o_type]`
    pub features: Array1<f64>,
    pub logit: f64,
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let ez = z.exp();
        ez / (1.0 + ez)
    }
}

/// ln(1 + e^z) without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn positional(n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |(pos, k)| {
        let rate = 10000f64.powf((2 * (k / 2)) as f64 / d as f64);
        let angle = pos as f64 / rate;
        if k % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

pub(crate) fn embed(params: &RankerParams, tokens: &[usize], use_positions: bool) -> Array2<f64> {
    let d = params.dim();
    let mut x = Array2::zeros((tokens.len(), d));
    for (i, &t) in tokens.iter().enumerate() {
        x.row_mut(i).assign(&params.embeddings.row(t));
    }
    if use_positions {
        x += &positional(tokens.len(), d);
    }
    x
}

fn layer_forward(layer: &EncoderLayer, x: Array2<f64>) -> (Array2<f64>, LayerCache) {
    let d = x.ncols();
    let scale = 1.0 / (d as f64).sqrt();
    let q = x.dot(&layer.wq);
    let k = x.dot(&layer.wk);
    let v = x.dot(&layer.wv);
    let mut attn = q.dot(&k.t()) * scale;
    for mut row in attn.rows_mut() {
        softmax_in_place(row.as_slice_mut().expect("standard layout"));
    }
    let h = &x + &attn.dot(&v);
    let g = (h.dot(&layer.w1) + &layer.b1).mapv(f64::tanh);
    let out = &h + &g.dot(&layer.w2) + &layer.b2;
    (
        out,
        LayerCache {
            x,
            q,
            k,
            v,
            attn,
            h,
            g,
        },
    )
}

/// Runs `x` through the self-attention blocks.
pub(crate) fn encode(params: &RankerParams, x: Array2<f64>) -> Array2<f64> {
    params
        .layers
        .iter()
        .fold(x, |x, layer| layer_forward(layer, x).0)
}

/// Attention weights and attended representations for every node.
pub(crate) fn attend(
    params: &RankerParams,
    e: &Array2<f64>,
    neighborhoods: &[Vec<usize>],
) -> (Vec<Vec<f64>>, Array2<f64>) {
    let d = e.ncols();
    let w_self = params.attn_w.slice(s![..d]);
    let w_other = params.attn_w.slice(s![d..]);
    let own: Vec<f64> = e.rows().into_iter().map(|r| r.dot(&w_self)).collect();
    let other: Vec<f64> = e.rows().into_iter().map(|r| r.dot(&w_other)).collect();
    let mut e_hat = Array2::zeros(e.raw_dim());
    let weights = neighborhoods
        .iter()
        .enumerate()
        .map(|(i, hood)| {
            let mut w: Vec<f64> = hood
                .iter()
                .map(|&j| own[i] + other[j] + params.attn_b)
                .collect();
            softmax_in_place(&mut w);
            let mut row = e_hat.row_mut(i);
            for (&j, &a) in hood.iter().zip(&w) {
                row.scaled_add(a, &e.row(j));
            }
            w
        })
        .collect();
    (weights, e_hat)
}

fn mean_rows(m: &Array2<f64>, rows: &[usize]) -> Array1<f64> {
    let mut acc = Array1::zeros(m.ncols());
    for &r in rows {
        acc += &m.row(r);
    }
    acc / rows.len() as f64
}

pub(crate) fn forward(params: &RankerParams, config: &RankerConfig, inst: &Instance) -> Forward {
    let d = params.dim();
    let mut x = embed(params, &inst.tokens, config.positional);
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let (out, cache) = layer_forward(layer, x);
        layers.push(cache);
        x = out;
    }
    let e = x;
    let (weights, e_hat) = attend(params, &e, &inst.neighborhoods);

    let mut features = Array1::zeros(4 * d + 2);
    features
        .slice_mut(s![..d])
        .assign(&mean_rows(&e, &inst.head_nodes));
    features
        .slice_mut(s![d..2 * d])
        .assign(&mean_rows(&e_hat, &inst.head_nodes));
    features
        .slice_mut(s![2 * d..3 * d])
        .assign(&mean_rows(&e, &inst.tail_nodes));
    features
        .slice_mut(s![3 * d..4 * d])
        .assign(&mean_rows(&e_hat, &inst.tail_nodes));
    features[4 * d] = inst.o_fre;
    features[4 * d + 1] = inst.o_type;
    let logit = features.dot(&params.head_w) + params.head_b;
    Forward {
        layers,
        e,
        weights,
        e_hat,
        features,
        logit,
    }
}

/// Accumulates into `grads` the gradient of a loss whose derivative with
/// respect to this instance's logit is `d_logit`.
pub(crate) fn backward(
    params: &RankerParams,
    inst: &Instance,
    fwd: &Forward,
    d_logit: f64,
    grads: &mut Gradients,
) {
    let d = params.dim();
    let n = inst.len();

    // Linear head.
    grads.head_w.scaled_add(d_logit, &fwd.features);
    grads.head_b += d_logit;
    let d_features = &params.head_w * d_logit;

    // Mean pooling.
    let mut d_e = Array2::<f64>::zeros((n, d));
    let mut d_hat = Array2::<f64>::zeros((n, d));
    let spread = |target: &mut Array2<f64>, nodes: &[usize], g: ArrayView1<f64>| {
        let w = 1.0 / nodes.len() as f64;
        for &i in nodes {
            target.row_mut(i).scaled_add(w, &g);
        }
    };
    spread(&mut d_e, &inst.head_nodes, d_features.slice(s![..d]));
    spread(&mut d_hat, &inst.head_nodes, d_features.slice(s![d..2 * d]));
    spread(
        &mut d_e,
        &inst.tail_nodes,
        d_features.slice(s![2 * d..3 * d]),
    );
    spread(
        &mut d_hat,
        &inst.tail_nodes,
        d_features.slice(s![3 * d..4 * d]),
    );

    // Graph attention.
    let w_self = params.attn_w.slice(s![..d]).to_owned();
    let w_other = params.attn_w.slice(s![d..]).to_owned();
    for (i, (hood, alpha)) in inst.neighborhoods.iter().zip(&fwd.weights).enumerate() {
        let g_i = d_hat.row(i).to_owned();
        let d_alpha: Vec<f64> = hood.iter().map(|&j| g_i.dot(&fwd.e.row(j))).collect();
        let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
        for ((&j, &a), &da) in hood.iter().zip(alpha).zip(&d_alpha) {
            d_e.row_mut(j).scaled_add(a, &g_i);
            let ds = a * (da - mean);
            grads
                .attn_w
                .slice_mut(s![..d])
                .scaled_add(ds, &fwd.e.row(i));
            grads
                .attn_w
                .slice_mut(s![d..])
                .scaled_add(ds, &fwd.e.row(j));
            grads.attn_b += ds;
            d_e.row_mut(i).scaled_add(ds, &w_self);
            d_e.row_mut(j).scaled_add(ds, &w_other);
        }
    }

    // Encoder blocks, last first.
    let mut d_x = d_e;
    for ((layer, cache), g) in params
        .layers
        .iter()
        .zip(&fwd.layers)
        .zip(grads.layers.iter_mut())
        .rev()
    {
        d_x = layer_backward(layer, cache, d_x, g);
    }

    // Embedding rows (positional offsets carry no parameters).
    for (i, &t) in inst.tokens.iter().enumerate() {
        grads
            .embeddings
            .entry(t)
            .or_insert_with(|| Array1::zeros(d))
            .scaled_add(1.0, &d_x.row(i));
    }
}

fn layer_backward(
    layer: &EncoderLayer,
    c: &LayerCache,
    d_out: Array2<f64>,
    g: &mut EncoderLayer,
) -> Array2<f64> {
    let d = c.x.ncols();
    let scale = 1.0 / (d as f64).sqrt();

    // out = h + tanh(h W1 + b1) W2 + b2
    g.w2 += &c.g.t().dot(&d_out);
    g.b2 += &d_out.sum_axis(Axis(0));
    let d_u = d_out.dot(&layer.w2.t()) * c.g.mapv(|t| 1.0 - t * t);
    g.w1 += &c.h.t().dot(&d_u);
    g.b1 += &d_u.sum_axis(Axis(0));
    let d_h = &d_out + &d_u.dot(&layer.w1.t());

    // h = x + softmax(q k^T * scale) v
    let d_attn = d_h.dot(&c.v.t());
    let d_v = c.attn.t().dot(&d_h);
    let mut d_scores = Array2::zeros(c.attn.raw_dim());
    for ((a, da), mut ds) in c
        .attn
        .rows()
        .into_iter()
        .zip(d_attn.rows())
        .zip(d_scores.rows_mut())
    {
        let mean = a.dot(&da);
        for ((s, &ai), &dai) in ds.iter_mut().zip(a).zip(da) {
            *s = ai * (dai - mean) * scale;
        }
    }
    let d_q = d_scores.dot(&c.k);
    let d_k = d_scores.t().dot(&c.q);
    g.wq += &c.x.t().dot(&d_q);
    g.wk += &c.x.t().dot(&d_k);
    g.wv += &c.x.t().dot(&d_v);
    d_h + d_q.dot(&layer.wq.t()) + d_k.dot(&layer.wk.t()) + d_v.dot(&layer.wv.t())
}

/// Bag loss and per-instance logit gradients.
///
/// The bag score is the mean of instance probabilities; the binary
/// cross-entropy is evaluated in log space so it stays finite even when
/// probabilities saturate.
pub(crate) fn bag_loss(logits: &[f64], label: bool) -> (f64, Vec<f64>) {
    let n = logits.len() as f64;
    // ln p_i and ln(1 - p_i)
    let log_p: Vec<f64> = logits.iter().map(|&z| -softplus(-z)).collect();
    let log_q: Vec<f64> = logits.iter().map(|&z| -softplus(z)).collect();
    let lse = |v: &[f64]| {
        let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    };
    if label {
        let log_f = lse(&log_p) - n.ln();
        let total = lse(&log_p);
        let grads = logits
            .iter()
            .zip(&log_p)
            .map(|(&z, &lp)| -(lp - total).exp() * sigmoid(-z))
            .collect();
        (-log_f, grads)
    } else {
        let log_1mf = lse(&log_q) - n.ln();
        let total = lse(&log_q);
        let grads = logits
            .iter()
            .zip(&log_q)
            .map(|(&z, &lq)| (lq - total).exp() * sigmoid(z))
            .collect();
        (-log_1mf, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bag_loss_matches_direct_formula() {
        let logits = [0.3, -1.2, 2.0];
        let f: f64 = logits.iter().map(|&z| sigmoid(z)).sum::<f64>() / 3.0;
        let (pos, _) = bag_loss(&logits, true);
        let (neg, _) = bag_loss(&logits, false);
        assert!((pos + f.ln()).abs() < 1e-12);
        assert!((neg + (1.0 - f).ln()).abs() < 1e-12);
    }

    #[test]
    fn bag_loss_gradient_single_instance() {
        for z in [-3.0, 0.0, 0.7] {
            let (_, g) = bag_loss(&[z], true);
            assert!((g[0] - (sigmoid(z) - 1.0)).abs() < 1e-12);
            let (_, g) = bag_loss(&[z], false);
            assert!((g[0] - sigmoid(z)).abs() < 1e-12);
        }
    }

    #[test]
    fn bag_loss_saturation_stays_finite() {
        let (loss, g) = bag_loss(&[800.0, 900.0], false);
        assert!(loss.is_finite() && loss > 100.0);
        assert!(g.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn bag_loss_finite_differences() {
        let logits = vec![0.4, -0.9, 1.3];
        for label in [true, false] {
            let (_, g) = bag_loss(&logits, label);
            for k in 0..logits.len() {
                let mut up = logits.clone();
                let mut down = logits.clone();
                up[k] += 1e-5;
                down[k] -= 1e-5;
                let num = (bag_loss(&up, label).0 - bag_loss(&down, label).0) / 2e-5;
                assert!((num - g[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn values_round_trip() {
        let mut p = RankerParams::zeros(3, 2, 1);
        let vals: Vec<f64> = (0..p.values().len()).map(|i| i as f64).collect();
        p.set_values(&vals);
        assert_eq!(p.values(), vals);
        assert_eq!(p.head_b, (vals.len() - 1) as f64);
    }
}
