//! Compact differentiable classifiers: linear softmax, one-hidden-layer MLP,
//! and a tiny CNN (3x3 conv, ReLU, 2x2 average pool, linear head).
//!
//! Parameters are stored flat in f32; all forward/backward arithmetic runs in
//! f64 so repeated evaluation is a pure, bit-stable function of the inputs.

use crate::error::{Error, Result};
use crate::rng::Stream;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub enum Architecture {
    Linear,
    Mlp { hidden: usize },
    TinyCnn { channels: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// `(height, width, channels)`; Linear and MLP flatten it.
    pub input_shape: (usize, usize, usize),
    pub num_classes: usize,
    pub init_scale: f64,
}

/// One named span of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutEntry {
    pub name: &'static str,
    pub offset: usize,
    pub len: usize,
    /// Fan-in used at init; zero marks a bias (skipped by init and L2).
    pub fan_in: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let (h, w, c) = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::Validation(String::from("empty input shape")));
        }
        if self.num_classes < 2 {
            return Err(Error::Validation(String::from("need at least 2 classes")));
        }
        match self.architecture {
            Architecture::Mlp { hidden: 0 } => {
                Err(Error::Validation(String::from("MLP hidden width must be >= 1")))
            }
            Architecture::TinyCnn { channels: 0 } => {
                Err(Error::Validation(String::from("conv channels must be >= 1")))
            }
            Architecture::TinyCnn { .. } if h < 2 || w < 2 => Err(Error::Validation(
                String::from("CNN input must be at least 2x2"),
            )),
            _ => Ok(()),
        }
    }

    pub fn input_dim(&self) -> usize {
        let (h, w, c) = self.input_shape;
        h * w * c
    }

    /// Pooled feature-map shape of the CNN head, `(height, width)`.
    fn pooled_shape(&self) -> (usize, usize) {
        let (h, w, _) = self.input_shape;
        (h / 2, w / 2)
    }

    pub fn layout(&self) -> Vec<LayoutEntry> {
        let d = self.input_dim();
        let k = self.num_classes;
        let mut entries = Vec::new();
        let mut offset = 0usize;
        let mut push = |name: &'static str, len: usize, fan_in: usize| {
            entries.push(LayoutEntry {
                name,
                offset,
                len,
                fan_in,
            });
            offset += len;
        };
        match self.architecture {
            Architecture::Linear => {
                push("w", k * d, d);
                push("b", k, 0);
            }
            Architecture::Mlp { hidden } => {
                push("w1", hidden * d, d);
                push("b1", hidden, 0);
                push("w2", k * hidden, hidden);
                push("b2", k, 0);
            }
            Architecture::TinyCnn { channels } => {
                let (_, _, c_in) = self.input_shape;
                let (ph, pw) = self.pooled_shape();
                let feat = channels * ph * pw;
                push("conv_w", channels * c_in * 9, c_in * 9);
                push("conv_b", channels, 0);
                push("head_w", k * feat, feat);
                push("head_b", k, 0);
            }
        }
        entries
    }

    pub fn num_params(&self) -> usize {
        self.layout().iter().map(|e| e.len).sum()
    }

    /// Stable content hash of the spec, stored in checkpoint headers.
    pub fn hash(&self) -> u64 {
        let text = format!(
            "{:?}|{:?}|{}|{}",
            self.architecture, self.input_shape, self.num_classes, self.init_scale
        );
        crate::rng::derive_seed(0x5eed, &text)
    }
}

/// Flat parameter vector plus its layer layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub values: Vec<f32>,
    pub layout: Vec<LayoutEntry>,
}

impl Params {
    pub fn slice(&self, name: &str) -> &[f32] {
        let e = self
            .layout
            .iter()
            .find(|e| e.name == name)
            .expect("unknown layer name");
        &self.values[e.offset..e.offset + e.len]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Deterministic initialization: weights `N(0, (init_scale/sqrt(fan_in))^2)`,
/// biases zero.
pub fn init(spec: &ModelSpec, seed: u64) -> Result<Params> {
    spec.validate()?;
    let layout = spec.layout();
    let total: usize = layout.iter().map(|e| e.len).sum();
    let mut values = vec![0.0f32; total];
    let mut rng = Stream::new(seed, "init");
    for e in &layout {
        if e.fan_in == 0 {
            continue;
        }
        let sd = spec.init_scale / libm::sqrt(e.fan_in as f64);
        for v in &mut values[e.offset..e.offset + e.len] {
            *v = (sd * rng.normal()) as f32;
        }
    }
    Ok(Params { values, layout })
}

/// Result of one batch forward (and optionally backward) pass.
#[derive(Debug, Clone)]
pub struct BatchEval {
    /// Per-example class scores.
    pub logits: Vec<Vec<f64>>,
    /// Mean cross-entropy plus `l2_coeff/2 * ||weights||^2` (biases excluded).
    pub loss: f64,
    pub accuracy: f64,
    /// Gradient of `loss`, same length as params; present iff requested.
    pub grad: Option<Vec<f64>>,
}

/// Lowest class index wins exact ties, for reproducibility.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn softmax_ce(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - m)).collect();
    let sum: f64 = exps.iter().sum();
    let loss = libm::log(sum) - (logits[label] - m);
    let dlogits: Vec<f64> = exps
        .iter()
        .enumerate()
        .map(|(k, &e)| e / sum - if k == label { 1.0 } else { 0.0 })
        .collect();
    (loss, dlogits)
}

struct EvalAcc {
    logits: Vec<Vec<f64>>,
    ce_sum: f64,
    correct: usize,
    grad: Option<Vec<f64>>,
}

/// Forward (and backward when `want_grad`) over a batch of flattened,
/// preprocessed inputs. Inputs are row-major `(row, col, channel)` for the
/// CNN; Linear/MLP treat them as plain vectors.
pub fn evaluate(
    spec: &ModelSpec,
    params: &Params,
    inputs: &[Vec<f32>],
    labels: &[usize],
    l2_coeff: f64,
    want_grad: bool,
) -> Result<BatchEval> {
    if inputs.len() != labels.len() || inputs.is_empty() {
        return Err(Error::Validation(String::from("empty or mismatched batch")));
    }
    let d = spec.input_dim();
    for (i, x) in inputs.iter().enumerate() {
        if x.len() != d {
            return Err(Error::Validation(format!(
                "example {i} has {} features, expected {d}",
                x.len()
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite input at batch index {i}")));
        }
    }
    let p: Vec<f64> = params.values.iter().map(|&v| v as f64).collect();
    let n = inputs.len();
    let mut acc = EvalAcc {
        logits: Vec::with_capacity(n),
        ce_sum: 0.0,
        correct: 0,
        grad: want_grad.then(|| vec![0.0f64; p.len()]),
    };

    match spec.architecture {
        Architecture::Linear => eval_linear(spec, &p, inputs, labels, &mut acc),
        Architecture::Mlp { hidden } => eval_mlp(spec, hidden, &p, inputs, labels, &mut acc),
        Architecture::TinyCnn { channels } => {
            eval_cnn(spec, channels, &p, inputs, labels, &mut acc)
        }
    }

    let inv_n = 1.0 / n as f64;
    let mut loss = acc.ce_sum * inv_n;
    if let Some(g) = &mut acc.grad {
        for v in g.iter_mut() {
            *v *= inv_n;
        }
    }
    // L2 on weights only, added to the loss and its gradient.
    if l2_coeff != 0.0 {
        for e in &params.layout {
            if e.fan_in == 0 {
                continue;
            }
            for i in e.offset..e.offset + e.len {
                loss += 0.5 * l2_coeff * p[i] * p[i];
                if let Some(g) = &mut acc.grad {
                    g[i] += l2_coeff * p[i];
                }
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numerical(String::from("non-finite loss")));
    }
    Ok(BatchEval {
        logits: acc.logits,
        loss,
        accuracy: acc.correct as f64 / n as f64,
        grad: acc.grad,
    })
}

fn record_example(acc: &mut EvalAcc, logits: Vec<f64>, label: usize) -> Option<Vec<f64>> {
    let (ce, dlogits) = softmax_ce(&logits, label);
    acc.ce_sum += ce;
    if argmax(&logits) == label {
        acc.correct += 1;
    }
    let want = acc.grad.is_some();
    acc.logits.push(logits);
    want.then_some(dlogits)
}

fn eval_linear(spec: &ModelSpec, p: &[f64], inputs: &[Vec<f32>], labels: &[usize], acc: &mut EvalAcc) {
    let d = spec.input_dim();
    let k = spec.num_classes;
    let (w, b) = (&p[..k * d], &p[k * d..]);
    for (x, &y) in inputs.iter().zip(labels) {
        let mut logits = vec![0.0f64; k];
        for (kk, l) in logits.iter_mut().enumerate() {
            let row = &w[kk * d..(kk + 1) * d];
            *l = b[kk] + row.iter().zip(x).map(|(&wi, &xi)| wi * xi as f64).sum::<f64>();
        }
        if let Some(dl) = record_example(acc, logits, y) {
            let g = acc.grad.as_mut().unwrap();
            for (kk, &dk) in dl.iter().enumerate() {
                for (i, &xi) in x.iter().enumerate() {
                    g[kk * d + i] += dk * xi as f64;
                }
                g[k * d + kk] += dk;
            }
        }
    }
}

fn eval_mlp(
    spec: &ModelSpec,
    hidden: usize,
    p: &[f64],
    inputs: &[Vec<f32>],
    labels: &[usize],
    acc: &mut EvalAcc,
) {
    let d = spec.input_dim();
    let k = spec.num_classes;
    let (o1, o2, o3) = (hidden * d, hidden * d + hidden, hidden * d + hidden + k * hidden);
    let (w1, b1, w2, b2) = (&p[..o1], &p[o1..o2], &p[o2..o3], &p[o3..]);
    for (x, &y) in inputs.iter().zip(labels) {
        let mut pre = vec![0.0f64; hidden];
        for (j, pj) in pre.iter_mut().enumerate() {
            let row = &w1[j * d..(j + 1) * d];
            *pj = b1[j] + row.iter().zip(x).map(|(&wi, &xi)| wi * xi as f64).sum::<f64>();
        }
        let h: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
        let mut logits = vec![0.0f64; k];
        for (kk, l) in logits.iter_mut().enumerate() {
            let row = &w2[kk * hidden..(kk + 1) * hidden];
            *l = b2[kk] + row.iter().zip(&h).map(|(&wi, &hi)| wi * hi).sum::<f64>();
        }
        if let Some(dl) = record_example(acc, logits, y) {
            let mut dh = vec![0.0f64; hidden];
            let g = acc.grad.as_mut().unwrap();
            for (kk, &dk) in dl.iter().enumerate() {
                for (j, &hj) in h.iter().enumerate() {
                    dh[j] += dk * w2[kk * hidden + j];
                    g[o2 + kk * hidden + j] += dk * hj;
                }
                g[o3 + kk] += dk;
            }
            for (j, dj) in dh.iter().enumerate() {
                if pre[j] <= 0.0 {
                    continue;
                }
                for (i, &xi) in x.iter().enumerate() {
                    g[j * d + i] += dj * xi as f64;
                }
                g[o1 + j] += dj;
            }
        }
    }
}

fn eval_cnn(
    spec: &ModelSpec,
    channels: usize,
    p: &[f64],
    inputs: &[Vec<f32>],
    labels: &[usize],
    acc: &mut EvalAcc,
) {
    let (h, w, c_in) = spec.input_shape;
    let k = spec.num_classes;
    let (ph, pw) = (h / 2, w / 2);
    let feat = channels * ph * pw;
    let o1 = channels * c_in * 9;
    let o2 = o1 + channels;
    let o3 = o2 + k * feat;
    let (cw, cb, hw, hb) = (&p[..o1], &p[o1..o2], &p[o2..o3], &p[o3..]);
    let cwi = |co: usize, ci: usize, dr: usize, dc: usize| (((co * c_in) + ci) * 9) + dr * 3 + dc;
    let xi = |x: &Vec<f32>, r: isize, c: isize, ci: usize| -> f64 {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0.0
        } else {
            x[((r as usize * w) + c as usize) * c_in + ci] as f64
        }
    };
    for (x, &y) in inputs.iter().zip(labels) {
        // Conv (same padding) + ReLU.
        let mut pre = vec![0.0f64; channels * h * w];
        for co in 0..channels {
            for r in 0..h {
                for c in 0..w {
                    let mut s = cb[co];
                    for ci in 0..c_in {
                        for dr in 0..3usize {
                            for dc in 0..3usize {
                                s += cw[cwi(co, ci, dr, dc)]
                                    * xi(x, r as isize + dr as isize - 1, c as isize + dc as isize - 1, ci);
                            }
                        }
                    }
                    pre[(co * h + r) * w + c] = s;
                }
            }
        }
        let act: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
        // 2x2 average pool over non-overlapping blocks.
        let mut pooled = vec![0.0f64; feat];
        for co in 0..channels {
            for pr in 0..ph {
                for pc in 0..pw {
                    let mut s = 0.0;
                    for dr in 0..2 {
                        for dc in 0..2 {
                            s += act[(co * h + 2 * pr + dr) * w + 2 * pc + dc];
                        }
                    }
                    pooled[(co * ph + pr) * pw + pc] = s / 4.0;
                }
            }
        }
        let mut logits = vec![0.0f64; k];
        for (kk, l) in logits.iter_mut().enumerate() {
            let row = &hw[kk * feat..(kk + 1) * feat];
            *l = hb[kk] + row.iter().zip(&pooled).map(|(&wi, &fi)| wi * fi).sum::<f64>();
        }
        if let Some(dl) = record_example(acc, logits, y) {
            // Head gradients and pooled-feature sensitivity.
            let mut dpooled = vec![0.0f64; feat];
            {
                let g = acc.grad.as_mut().unwrap();
                for (kk, &dk) in dl.iter().enumerate() {
                    for (f, &pf) in pooled.iter().enumerate() {
                        g[o2 + kk * feat + f] += dk * pf;
                        dpooled[f] += dk * hw[kk * feat + f];
                    }
                    g[o3 + kk] += dk;
                }
            }
            // Through the average pool and ReLU.
            let mut dpre = vec![0.0f64; channels * h * w];
            for co in 0..channels {
                for pr in 0..ph {
                    for pc in 0..pw {
                        let dp = dpooled[(co * ph + pr) * pw + pc] / 4.0;
                        for dr in 0..2 {
                            for dc in 0..2 {
                                let idx = (co * h + 2 * pr + dr) * w + 2 * pc + dc;
                                if pre[idx] > 0.0 {
                                    dpre[idx] += dp;
                                }
                            }
                        }
                    }
                }
            }
            // Conv weight/bias gradients.
            let g = acc.grad.as_mut().unwrap();
            for co in 0..channels {
                for r in 0..h {
                    for c in 0..w {
                        let dp = dpre[(co * h + r) * w + c];
                        if dp == 0.0 {
                            continue;
                        }
                        g[o1 + co] += dp;
                        for ci in 0..c_in {
                            for dr in 0..3usize {
                                for dc in 0..3usize {
                                    g[cwi(co, ci, dr, dc)] += dp
                                        * xi(
                                            x,
                                            r as isize + dr as isize - 1,
                                            c as isize + dc as isize - 1,
                                            ci,
                                        );
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Mean over examples of `logsumexp(logits)`, stabilized by max subtraction.
pub fn mean_log_likelihood(
    spec: &ModelSpec,
    params: &Params,
    inputs: &[Vec<f32>],
    labels: &[usize],
) -> Result<f64> {
    let eval = evaluate(spec, params, inputs, labels, 0.0, false)?;
    let mut total = 0.0;
    for logits in &eval.logits {
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = logits.iter().map(|&z| libm::exp(z - m)).sum();
        total += m + libm::log(s);
    }
    Ok(total / eval.logits.len() as f64)
}
