//! Transformer building blocks: layer norm, multi-head attention and the
//! position-wise feed-forward network, all with explicit backward passes.

use super::{softmax_rows_inplace, Linear, Param};
use ndarray::{s, Array1, Array2};
use rand_chacha::ChaCha8Rng;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: Param, // 1 x D
    pub bias: Param, // 1 x D
}

pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        LayerNorm {
            gain: Param::ones(format!("{name}.gain"), 1, dim),
            bias: Param::zeros(format!("{name}.bias"), 1, dim),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.gain, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gain, &mut self.bias]
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let dim = x.ncols() as f64;
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (r, mut row) in xhat.rows_mut().into_iter().enumerate() {
            let mean = row.sum() / dim;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim;
            let istd = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = istd;
            for v in row.iter_mut() {
                *v = (*v - mean) * istd;
            }
        }
        let y = &xhat * &self.gain.w.row(0) + &self.bias.w.row(0);
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&mut self, cache: &LayerNormCache, dy: &Array2<f64>) -> Array2<f64> {
        let dim = dy.ncols() as f64;
        {
            let mut gg = self.gain.g.row_mut(0);
            gg += &(dy * &cache.xhat).sum_axis(ndarray::Axis(0));
            let mut bg = self.bias.g.row_mut(0);
            bg += &dy.sum_axis(ndarray::Axis(0));
        }
        let mut dx = Array2::zeros(dy.dim());
        for r in 0..dy.nrows() {
            let dxhat: Vec<f64> = (0..dy.ncols())
                .map(|c| dy[[r, c]] * self.gain.w[[0, c]])
                .collect();
            let mean_dxhat = dxhat.iter().sum::<f64>() / dim;
            let mean_dxhat_xhat = dxhat
                .iter()
                .enumerate()
                .map(|(c, d)| d * cache.xhat[[r, c]])
                .sum::<f64>()
                / dim;
            for c in 0..dy.ncols() {
                dx[[r, c]] = cache.inv_std[r]
                    * (dxhat[c] - mean_dxhat - cache.xhat[[r, c]] * mean_dxhat_xhat);
            }
        }
        dx
    }
}

/// Attention mask: which key positions each query may attend to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttnMask {
    None,
    Causal,
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub dim: usize,
}

pub struct MhaCache {
    q_in: Array2<f64>,
    kv_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Per-head attention weights, each Tq x Tk.
    attn: Vec<Array2<f64>>,
    concat: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn new(name: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(dim % heads == 0, "attention dim {dim} not divisible by {heads} heads");
        MultiHeadAttention {
            wq: Linear::xavier(&format!("{name}.q"), dim, dim, rng),
            wk: Linear::xavier(&format!("{name}.k"), dim, dim, rng),
            wv: Linear::xavier(&format!("{name}.v"), dim, dim, rng),
            wo: Linear::xavier(&format!("{name}.o"), dim, dim, rng),
            heads,
            dim,
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        [&self.wq, &self.wk, &self.wv, &self.wo].iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.wq.params_mut();
        out.extend(self.wk.params_mut());
        out.extend(self.wv.params_mut());
        out.extend(self.wo.params_mut());
        out
    }

    pub fn forward(
        &self,
        q_in: &Array2<f64>,
        kv_in: &Array2<f64>,
        mask: AttnMask,
    ) -> (Array2<f64>, MhaCache) {
        let dk = self.dim / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let q = self.wq.forward(q_in);
        let k = self.wk.forward(kv_in);
        let v = self.wv.forward(kv_in);
        let tq = q.nrows();
        let tk = k.nrows();
        let mut concat = Array2::zeros((tq, self.dim));
        let mut attn = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let vh = v.slice(cols);
            let mut scores = qh.dot(&kh.t());
            scores.mapv_inplace(|x| x * scale);
            if mask == AttnMask::Causal {
                for i in 0..tq {
                    for j in (i + 1)..tk {
                        scores[[i, j]] = f64::NEG_INFINITY;
                    }
                }
            }
            softmax_rows_inplace(&mut scores);
            let oh = scores.dot(&vh);
            concat.slice_mut(cols).assign(&oh);
            attn.push(scores);
        }
        let out = self.wo.forward(&concat);
        let cache = MhaCache { q_in: q_in.clone(), kv_in: kv_in.clone(), q, k, v, attn, concat };
        (out, cache)
    }

    /// Returns `(d_q_in, d_kv_in)`.
    pub fn backward(&mut self, cache: &MhaCache, dy: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let dk_size = self.dim / self.heads;
        let scale = 1.0 / (dk_size as f64).sqrt();
        let d_concat = self.wo.backward(&cache.concat, dy);

        let mut dq = Array2::zeros(cache.q.dim());
        let mut dk = Array2::zeros(cache.k.dim());
        let mut dv = Array2::zeros(cache.v.dim());
        for h in 0..self.heads {
            let cols = s![.., h * dk_size..(h + 1) * dk_size];
            let a = &cache.attn[h];
            let d_oh = d_concat.slice(cols);
            let vh = cache.v.slice(cols);
            let qh = cache.q.slice(cols);
            let kh = cache.k.slice(cols);

            let d_a = d_oh.dot(&vh.t());
            dv.slice_mut(cols).assign(&a.t().dot(&d_oh));

            // softmax backward per row; masked entries have a == 0 so they
            // contribute nothing
            let mut d_scores = Array2::zeros(a.dim());
            for i in 0..a.nrows() {
                let row_dot: f64 = (0..a.ncols()).map(|j| d_a[[i, j]] * a[[i, j]]).sum();
                for j in 0..a.ncols() {
                    d_scores[[i, j]] = a[[i, j]] * (d_a[[i, j]] - row_dot);
                }
            }
            d_scores.mapv_inplace(|x| x * scale);
            dq.slice_mut(cols).assign(&d_scores.dot(&kh));
            dk.slice_mut(cols).assign(&d_scores.t().dot(&qh));
        }

        let d_q_in = self.wq.backward(&cache.q_in, &dq);
        let mut d_kv_in = self.wk.backward(&cache.kv_in, &dk);
        d_kv_in += &self.wv.backward(&cache.kv_in, &dv);
        (d_q_in, d_kv_in)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub lin1: Linear,
    pub lin2: Linear,
}

pub struct FeedForwardCache {
    x: Array2<f64>,
    hidden_pre: Array2<f64>,
    hidden_post: Array2<f64>,
}

impl FeedForward {
    pub fn new(name: &str, dim: usize, inner: usize, rng: &mut ChaCha8Rng) -> Self {
        FeedForward {
            lin1: Linear::xavier(&format!("{name}.lin1"), dim, inner, rng),
            lin2: Linear::xavier(&format!("{name}.lin2"), inner, dim, rng),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = self.lin1.params();
        out.extend(self.lin2.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.lin1.params_mut();
        out.extend(self.lin2.params_mut());
        out
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, FeedForwardCache) {
        let hidden_pre = self.lin1.forward(x);
        let hidden_post = hidden_pre.mapv(|v| v.max(0.0));
        let y = self.lin2.forward(&hidden_post);
        (y, FeedForwardCache { x: x.clone(), hidden_pre, hidden_post })
    }

    pub fn backward(&mut self, cache: &FeedForwardCache, dy: &Array2<f64>) -> Array2<f64> {
        let mut d_hidden = self.lin2.backward(&cache.hidden_post, dy);
        ndarray::Zip::from(&mut d_hidden).and(&cache.hidden_pre).for_each(|d, &pre| {
            if pre <= 0.0 {
                *d = 0.0;
            }
        });
        self.lin1.backward(&cache.x, &d_hidden)
    }
}

/// Sinusoidal position table, `max_len x dim`.
pub fn sinusoidal_table(max_len: usize, dim: usize) -> Array2<f64> {
    let mut table = Array2::zeros((max_len, dim));
    for pos in 0..max_len {
        for i in 0..dim / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            table[[pos, 2 * i]] = angle.sin();
            table[[pos, 2 * i + 1]] = angle.cos();
        }
        if dim % 2 == 1 {
            let i = dim / 2;
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            table[[pos, dim - 1]] = angle.sin();
        }
    }
    table
}
