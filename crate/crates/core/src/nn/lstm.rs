//! Single-direction LSTM layer with explicit backpropagation through time.

use super::{sigmoid, Param};
use ndarray::{s, Array1, Array2};
use rand_chacha::ChaCha8Rng;

/// One LSTM layer. Gate order inside the fused weight matrices is
/// `[input, forget, cell, output]`.
#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub w_ih: Param, // input x 4H
    pub w_hh: Param, // H x 4H
    pub b: Param,    // 1 x 4H
    pub hidden: usize,
}

/// Everything the backward pass needs from one forward run.
pub struct LstmCache {
    /// Input sequence, T x I.
    pub x: Array2<f64>,
    /// Hidden states including the initial state, (T+1) x H.
    pub h: Array2<f64>,
    /// Cell states including the initial state, (T+1) x H.
    pub c: Array2<f64>,
    /// Post-activation gates, each T x H.
    pub gate_i: Array2<f64>,
    pub gate_f: Array2<f64>,
    pub gate_g: Array2<f64>,
    pub gate_o: Array2<f64>,
    /// tanh(c_t), T x H.
    pub tanh_c: Array2<f64>,
}

impl LstmLayer {
    pub fn new(name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        LstmLayer {
            w_ih: Param::uniform(format!("{name}.w_ih"), input, 4 * hidden, bound, rng),
            w_hh: Param::uniform(format!("{name}.w_hh"), hidden, 4 * hidden, bound, rng),
            b: Param::uniform(format!("{name}.b"), 1, 4 * hidden, bound, rng),
            hidden,
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w_ih, &self.w_hh, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.b]
    }

    /// Run the layer over a `T x I` sequence from `(h0, c0)`.
    /// Returns the `T x H` hidden-state sequence and the backward cache.
    pub fn forward(
        &self,
        x: &Array2<f64>,
        h0: &Array1<f64>,
        c0: &Array1<f64>,
    ) -> (Array2<f64>, LstmCache) {
        let t_len = x.nrows();
        let hsz = self.hidden;
        // input contributions for all steps in one product
        let z_input = x.dot(&self.w_ih.w);

        let mut h = Array2::zeros((t_len + 1, hsz));
        let mut c = Array2::zeros((t_len + 1, hsz));
        h.row_mut(0).assign(h0);
        c.row_mut(0).assign(c0);
        let mut gate_i = Array2::zeros((t_len, hsz));
        let mut gate_f = Array2::zeros((t_len, hsz));
        let mut gate_g = Array2::zeros((t_len, hsz));
        let mut gate_o = Array2::zeros((t_len, hsz));
        let mut tanh_c = Array2::zeros((t_len, hsz));

        for t in 0..t_len {
            let h_prev = h.row(t).to_owned();
            let z_rec = h_prev.dot(&self.w_hh.w);
            for j in 0..hsz {
                let zi = z_input[[t, j]] + z_rec[j] + self.b.w[[0, j]];
                let zf = z_input[[t, hsz + j]] + z_rec[hsz + j] + self.b.w[[0, hsz + j]];
                let zg = z_input[[t, 2 * hsz + j]] + z_rec[2 * hsz + j] + self.b.w[[0, 2 * hsz + j]];
                let zo = z_input[[t, 3 * hsz + j]] + z_rec[3 * hsz + j] + self.b.w[[0, 3 * hsz + j]];
                let gi = sigmoid(zi);
                let gf = sigmoid(zf);
                let gg = zg.tanh();
                let go = sigmoid(zo);
                let ct = gf * c[[t, j]] + gi * gg;
                let tc = ct.tanh();
                gate_i[[t, j]] = gi;
                gate_f[[t, j]] = gf;
                gate_g[[t, j]] = gg;
                gate_o[[t, j]] = go;
                c[[t + 1, j]] = ct;
                tanh_c[[t, j]] = tc;
                h[[t + 1, j]] = go * tc;
            }
        }

        let outputs = h.slice(s![1.., ..]).to_owned();
        let cache = LstmCache { x: x.clone(), h, c, gate_i, gate_f, gate_g, gate_o, tanh_c };
        (outputs, cache)
    }

    /// Backward through time. `d_out` is the gradient w.r.t. every hidden
    /// output (T x H); `d_h_last`/`d_c_last` add gradient flowing into the
    /// final states from downstream consumers. Returns the gradients w.r.t.
    /// the input sequence and the initial states; parameter gradients
    /// accumulate in place.
    pub fn backward(
        &mut self,
        cache: &LstmCache,
        d_out: &Array2<f64>,
        d_h_last: Option<&Array1<f64>>,
        d_c_last: Option<&Array1<f64>>,
    ) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
        let t_len = cache.x.nrows();
        let hsz = self.hidden;
        let mut d_z_all = Array2::zeros((t_len, 4 * hsz));
        let mut dh_next: Array1<f64> = match d_h_last {
            Some(d) => d.clone(),
            None => Array1::zeros(hsz),
        };
        let mut dc_next: Array1<f64> = match d_c_last {
            Some(d) => d.clone(),
            None => Array1::zeros(hsz),
        };

        for t in (0..t_len).rev() {
            for j in 0..hsz {
                let dh = d_out[[t, j]] + dh_next[j];
                let go = cache.gate_o[[t, j]];
                let tc = cache.tanh_c[[t, j]];
                let d_o = dh * tc;
                let mut dc = dc_next[j] + dh * go * (1.0 - tc * tc);
                let gi = cache.gate_i[[t, j]];
                let gf = cache.gate_f[[t, j]];
                let gg = cache.gate_g[[t, j]];
                let c_prev = cache.c[[t, j]];
                let d_f = dc * c_prev;
                let d_i = dc * gg;
                let d_g = dc * gi;
                dc *= gf; // gradient into c_{t-1}
                d_z_all[[t, j]] = d_i * gi * (1.0 - gi);
                d_z_all[[t, hsz + j]] = d_f * gf * (1.0 - gf);
                d_z_all[[t, 2 * hsz + j]] = d_g * (1.0 - gg * gg);
                d_z_all[[t, 3 * hsz + j]] = d_o * go * (1.0 - go);
                dc_next[j] = dc;
            }
            let dz_row = d_z_all.row(t).to_owned();
            dh_next = dz_row.dot(&self.w_hh.w.t());
            let h_prev = cache.h.row(t);
            for j in 0..hsz {
                if h_prev[j] != 0.0 {
                    for k in 0..4 * hsz {
                        self.w_hh.g[[j, k]] += h_prev[j] * dz_row[k];
                    }
                }
            }
        }

        self.w_ih.g += &cache.x.t().dot(&d_z_all);
        let bias_grad = d_z_all.sum_axis(ndarray::Axis(0));
        let mut bg = self.b.g.row_mut(0);
        bg += &bias_grad;
        (d_z_all.dot(&self.w_ih.w.t()), dh_next, dc_next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::nll_only;
    use rand::Rng;
    use rand::SeedableRng;

    /// Loss helper: run the layer, project outputs, take NLL against fixed
    /// targets. Exercises every gate path.
    fn loss(layer: &LstmLayer, x: &Array2<f64>, proj: &Array2<f64>, targets: &[u32]) -> f64 {
        let h0 = Array1::zeros(layer.hidden);
        let c0 = Array1::zeros(layer.hidden);
        let (out, _) = layer.forward(x, &h0, &c0);
        let logits = out.dot(proj);
        nll_only(&logits, targets)
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut layer = LstmLayer::new("l", 3, 4, &mut rng);
        let x = Array2::from_shape_fn((5, 3), |_| rng.gen_range(-1.0..1.0));
        let proj = Array2::from_shape_fn((4, 6), |_| rng.gen_range(-0.5..0.5));
        let targets = [1u32, 0, 5, 2, 3];

        let h0 = Array1::zeros(4);
        let c0 = Array1::zeros(4);
        let (out, cache) = layer.forward(&x, &h0, &c0);
        let logits = out.dot(&proj);
        let (_, dlogits) = crate::nn::cross_entropy(&logits, &targets);
        let d_out = dlogits.dot(&proj.t());
        layer.backward(&cache, &d_out, None, None);

        let h = 1e-5;
        for pi in 0..3 {
            let (rows, cols) = {
                let p = &layer.params()[pi].w;
                (p.nrows(), p.ncols())
            };
            for (r, c) in [(0, 0), (rows - 1, cols - 1), (rows / 2, cols / 2)] {
                let analytic = layer.params()[pi].g[[r, c]];
                let orig = layer.params()[pi].w[[r, c]];
                layer.params_mut()[pi].w[[r, c]] = orig + h;
                let up = loss(&layer, &x, &proj, &targets);
                layer.params_mut()[pi].w[[r, c]] = orig - h;
                let down = loss(&layer, &x, &proj, &targets);
                layer.params_mut()[pi].w[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * h);
                let denom = analytic.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    ((analytic - numeric) / denom).abs() < 1e-5,
                    "param {pi} [{r},{c}]: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn forward_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = LstmLayer::new("l", 2, 3, &mut rng);
        let x = Array2::ones((7, 2));
        let (out, cache) = layer.forward(&x, &Array1::zeros(3), &Array1::zeros(3));
        assert_eq!(out.dim(), (7, 3));
        assert_eq!(cache.h.dim(), (8, 3));
    }
}
