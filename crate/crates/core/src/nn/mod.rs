//! Minimal neural-network substrate with explicit backward passes.
//!
//! Everything computes in `f64` with a fixed operation order so that
//! training, evaluation and extraction are bit-for-bit reproducible and
//! analytic gradients can be validated against central finite differences.

pub mod lstm;
pub mod transformer;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A named parameter tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub w: Array2<f64>,
    pub g: Array2<f64>,
}

impl Param {
    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Param { name: name.into(), w: Array2::zeros((rows, cols)), g: Array2::zeros((rows, cols)) }
    }

    pub fn ones(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Param { name: name.into(), w: Array2::ones((rows, cols)), g: Array2::zeros((rows, cols)) }
    }

    /// Uniform init on `(-bound, bound)`, drawn row-major from `rng`.
    pub fn uniform(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        bound: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut w = Array2::zeros((rows, cols));
        for v in w.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        Param { name: name.into(), w, g: Array2::zeros((rows, cols)) }
    }

    pub fn zero_grad(&mut self) {
        self.g.fill(0.0);
    }

    pub fn numel(&self) -> usize {
        self.w.len()
    }
}

/// Learning-rate schedule for [`Adam`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    /// Linear ramp over the warmup updates, then inverse-square-root decay.
    InverseSqrt { warmup_updates: u64 },
    Constant,
}

/// Adam optimizer with a pluggable learning-rate schedule.
#[derive(Debug, Clone)]
pub struct Adam {
    pub base_lr: f64,
    pub schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(base_lr: f64, warmup_updates: u64) -> Self {
        Adam {
            base_lr,
            schedule: LrSchedule::InverseSqrt { warmup_updates: warmup_updates.max(1) },
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn constant(base_lr: f64) -> Self {
        Adam { schedule: LrSchedule::Constant, ..Adam::new(base_lr, 1) }
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        match self.schedule {
            LrSchedule::InverseSqrt { warmup_updates } => {
                let t = step.max(1) as f64;
                let w = warmup_updates as f64;
                self.base_lr * (t / w).min((w / t).sqrt())
            }
            LrSchedule::Constant => self.base_lr,
        }
    }

    pub fn step(&mut self, params: &mut [&mut Param]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Array2::zeros(p.w.dim())).collect();
            self.v = params.iter().map(|p| Array2::zeros(p.w.dim())).collect();
        }
        assert_eq!(self.m.len(), params.len(), "parameter count changed between steps");
        self.step_count += 1;
        let lr = self.lr_at(self.step_count);
        let bc1 = 1.0 - self.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step_count as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            ndarray::Zip::from(&mut p.w)
                .and(&p.g)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *w -= lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
    }

    /// Flatten optimizer state for resumable training.
    pub fn export_state(&self) -> (u64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let flat = |arrs: &[Array2<f64>]| arrs.iter().map(|a| a.iter().copied().collect()).collect();
        (self.step_count, flat(&self.m), flat(&self.v))
    }

    pub fn import_state(
        &mut self,
        step_count: u64,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
        shapes: &[(usize, usize)],
    ) {
        assert_eq!(m.len(), shapes.len());
        self.step_count = step_count;
        self.m = m
            .into_iter()
            .zip(shapes)
            .map(|(flat, &dim)| Array2::from_shape_vec(dim, flat).expect("moment shape"))
            .collect();
        self.v = v
            .into_iter()
            .zip(shapes)
            .map(|(flat, &dim)| Array2::from_shape_vec(dim, flat).expect("moment shape"))
            .collect();
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(params: &mut [&mut Param], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for p in params.iter() {
        sq += p.g.iter().map(|g| g * g).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for p in params.iter_mut() {
            p.g.mapv_inplace(|g| g * scale);
        }
    }
    norm
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row-wise softmax in place. Entries already at `f64::NEG_INFINITY`
/// (masked) become exactly zero.
pub fn softmax_rows_inplace(a: &mut Array2<f64>) {
    for mut row in a.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            row.fill(0.0);
            continue;
        }
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Sum of per-row negative log-likelihoods plus the unscaled logit
/// gradient `softmax(logits) - onehot(target)`.
pub fn cross_entropy(logits: &Array2<f64>, targets: &[u32]) -> (f64, Array2<f64>) {
    assert_eq!(logits.nrows(), targets.len());
    let mut dlogits = logits.clone();
    let mut total_nll = 0.0;
    for (mut row, &t) in dlogits.rows_mut().into_iter().zip(targets) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
        let p = row[t as usize].max(f64::MIN_POSITIVE);
        total_nll -= p.ln();
        row[t as usize] -= 1.0;
    }
    (total_nll, dlogits)
}

/// Sum of per-row negative log-likelihoods without gradient material.
pub fn nll_only(logits: &Array2<f64>, targets: &[u32]) -> f64 {
    assert_eq!(logits.nrows(), targets.len());
    let mut total = 0.0;
    for (row, &t) in logits.rows().into_iter().zip(targets) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        total += lse - row[t as usize];
    }
    total
}

/// Inverted dropout. `rng = None` or `p = 0` is the identity (evaluation
/// mode); otherwise returns the dropped activations and the mask needed for
/// the backward pass.
pub fn dropout_forward(
    x: &Array2<f64>,
    p: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, Option<Array2<f64>>) {
    match rng {
        Some(rng) if p > 0.0 => {
            let keep = 1.0 - p;
            let mut mask = Array2::zeros(x.dim());
            for v in mask.iter_mut() {
                *v = if rng.gen_range(0.0..1.0) < keep { 1.0 / keep } else { 0.0 };
            }
            (x * &mask, Some(mask))
        }
        _ => (x.clone(), None),
    }
}

pub fn dropout_backward(dy: &Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => dy * m,
        None => dy.clone(),
    }
}

/// Token-id embedding table.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: Param, // vocab x dim
}

impl Embedding {
    pub fn new(name: &str, vocab: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Embedding { table: Param::uniform(name, vocab, dim, 0.1, rng) }
    }

    pub fn dim(&self) -> usize {
        self.table.w.ncols()
    }

    pub fn forward(&self, ids: &[u32]) -> Array2<f64> {
        let mut out = Array2::zeros((ids.len(), self.dim()));
        for (mut row, &id) in out.rows_mut().into_iter().zip(ids) {
            row.assign(&self.table.w.row(id as usize));
        }
        out
    }

    pub fn backward(&mut self, ids: &[u32], dy: &Array2<f64>) {
        for (row, &id) in dy.rows().into_iter().zip(ids) {
            let mut grad = self.table.g.row_mut(id as usize);
            grad += &row;
        }
    }
}

/// Affine layer `y = x W + b` with `W: in x out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
}

impl Linear {
    pub fn new(name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Linear {
            w: Param::uniform(format!("{name}.w"), fan_in, fan_out, bound, rng),
            b: Param::zeros(format!("{name}.b"), 1, fan_out),
        }
    }

    /// Xavier-uniform init, used by the attention blocks.
    pub fn xavier(name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Linear {
            w: Param::uniform(format!("{name}.w"), fan_in, fan_out, bound, rng),
            b: Param::zeros(format!("{name}.b"), 1, fan_out),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.w) + &self.b.w.row(0)
    }

    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        self.w.g += &x.t().dot(dy);
        let col_sums = dy.sum_axis(ndarray::Axis(0));
        let mut bg = self.b.g.row_mut(0);
        bg += &col_sums;
        dy.dot(&self.w.w.t())
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Mean over a slice using pairwise summation, which keeps the reduction
/// order independent of chunking.
pub fn pairwise_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    pairwise_sum(values) / values.len() as f64
}

pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sum along rows (axis 0) of selected row indices, with pairwise summation
/// down each column; divides by the number of rows.
pub fn mean_of_rows(matrix: &Array2<f64>, rows: &[usize]) -> Array1<f64> {
    let dim = matrix.ncols();
    let mut out = Array1::zeros(dim);
    if rows.is_empty() {
        return out;
    }
    let mut column = vec![0.0; rows.len()];
    for c in 0..dim {
        for (k, &r) in rows.iter().enumerate() {
            column[k] = matrix[[r, c]];
        }
        out[c] = pairwise_mean(&column);
    }
    out
}
