//! Recurrent encoder-decoder with optional multiplicative attention.
//!
//! The encoder is a stacked (optionally bidirectional) LSTM; the decoder is
//! a stacked unidirectional LSTM whose initial states are the sums of the
//! encoder's forward and backward final states per layer. The attention
//! variant scores decoder states against all encoder outputs, mixes a
//! context vector, and combines it with the decoder state before the output
//! projection.

use super::{ModelConfig, Pair};
use crate::nn::lstm::{LstmCache, LstmLayer};
use crate::nn::{
    cross_entropy, dropout_backward, dropout_forward, nll_only, softmax_rows_inplace, Embedding,
    Linear, Param,
};
use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
struct LuongAttention {
    /// Scores: decoder hidden (H) against encoder outputs (E_dim).
    w_score: Param, // H x E_dim
    /// Combines [context; hidden] into the attentional vector.
    combine: Linear, // (E_dim + H) x H
}

#[derive(Debug, Clone)]
pub struct RnnSeq2Seq {
    pub enc_embedding: Embedding,
    pub dec_embedding: Embedding,
    enc_fwd: Vec<LstmLayer>,
    enc_bwd: Vec<LstmLayer>,
    dec_layers: Vec<LstmLayer>,
    attention: Option<LuongAttention>,
    out_proj: Linear,
    hidden: usize,
    dropout: f64,
    bidirectional: bool,
}

struct EncLayerCache {
    fwd: LstmCache,
    bwd: Option<LstmCache>,
    /// Dropout mask applied to this layer's output before it fed the next
    /// layer; absent for the top layer.
    out_mask: Option<Array2<f64>>,
}

struct EncCache {
    src: Vec<u32>,
    emb_mask: Option<Array2<f64>>,
    layers: Vec<EncLayerCache>,
    /// Top-layer outputs, T x E_dim.
    outputs: Array2<f64>,
    /// Per layer: (h_fwd, c_fwd, h_bwd, c_bwd); backward halves zero when
    /// unidirectional.
    finals: Vec<(Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>)>,
}

struct DecCache {
    dec_in: Vec<u32>,
    emb_mask: Option<Array2<f64>>,
    layers: Vec<(LstmCache, Option<Array2<f64>>)>,
    top_h: Array2<f64>,
    attn: Option<AttnCache>,
    feats: Array2<f64>,
}

struct AttnCache {
    queries: Array2<f64>,
    weights: Array2<f64>,
    context: Array2<f64>,
    cat: Array2<f64>,
    att: Array2<f64>,
}

fn reverse_rows(a: &Array2<f64>) -> Array2<f64> {
    a.slice(s![..;-1, ..]).to_owned()
}

impl RnnSeq2Seq {
    pub fn new(cfg: &ModelConfig, vocab_size: usize, rng: &mut ChaCha8Rng) -> Self {
        let hsz = cfg.hidden_size;
        let esz = cfg.embedding_size;
        let bidir = cfg.bidirectional_encoder;
        let enc_dim = if bidir { 2 * hsz } else { hsz };

        let enc_embedding = Embedding::new("enc.embedding", vocab_size, esz, rng);
        let dec_embedding = Embedding::new("dec.embedding", vocab_size, esz, rng);
        let mut enc_fwd = Vec::new();
        let mut enc_bwd = Vec::new();
        for l in 0..cfg.encoder_layers {
            let input = if l == 0 { esz } else { enc_dim };
            enc_fwd.push(LstmLayer::new(&format!("enc.l{l}.fwd"), input, hsz, rng));
            if bidir {
                enc_bwd.push(LstmLayer::new(&format!("enc.l{l}.bwd"), input, hsz, rng));
            }
        }
        let mut dec_layers = Vec::new();
        for l in 0..cfg.decoder_layers {
            let input = if l == 0 { esz } else { hsz };
            dec_layers.push(LstmLayer::new(&format!("dec.l{l}"), input, hsz, rng));
        }
        let attention = match cfg.architecture {
            super::Architecture::RnnAttn => Some(LuongAttention {
                w_score: Param::uniform(
                    "attn.score",
                    hsz,
                    enc_dim,
                    1.0 / (hsz as f64).sqrt(),
                    rng,
                ),
                combine: Linear::new("attn.combine", enc_dim + hsz, hsz, rng),
            }),
            _ => None,
        };
        let mut out_proj = Linear::new("out_proj", hsz, vocab_size, rng);
        // near-uniform initial next-token distribution
        out_proj.w.w.mapv_inplace(|v| v * 0.02);
        RnnSeq2Seq {
            enc_embedding,
            dec_embedding,
            enc_fwd,
            enc_bwd,
            dec_layers,
            attention,
            out_proj,
            hidden: hsz,
            dropout: cfg.dropout,
            bidirectional: bidir,
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = vec![&self.enc_embedding.table, &self.dec_embedding.table];
        for l in &self.enc_fwd {
            out.extend(l.params());
        }
        for l in &self.enc_bwd {
            out.extend(l.params());
        }
        for l in &self.dec_layers {
            out.extend(l.params());
        }
        if let Some(a) = &self.attention {
            out.push(&a.w_score);
            out.extend(a.combine.params());
        }
        out.extend(self.out_proj.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = vec![&mut self.enc_embedding.table, &mut self.dec_embedding.table];
        for l in &mut self.enc_fwd {
            out.extend(l.params_mut());
        }
        for l in &mut self.enc_bwd {
            out.extend(l.params_mut());
        }
        for l in &mut self.dec_layers {
            out.extend(l.params_mut());
        }
        if let Some(a) = &mut self.attention {
            out.push(&mut a.w_score);
            out.extend(a.combine.params_mut());
        }
        out.extend(self.out_proj.params_mut());
        out
    }

    fn encode_forward(&self, src: &[u32], mut rng: Option<&mut ChaCha8Rng>) -> EncCache {
        let emb = self.enc_embedding.forward(src);
        let (mut x, emb_mask) = dropout_forward(&emb, self.dropout, rng.as_deref_mut());
        let zero = Array1::zeros(self.hidden);
        let mut layers = Vec::with_capacity(self.enc_fwd.len());
        let mut finals = Vec::with_capacity(self.enc_fwd.len());
        let n_layers = self.enc_fwd.len();
        for l in 0..n_layers {
            let (out_f, cache_f) = self.enc_fwd[l].forward(&x, &zero, &zero);
            let t_len = out_f.nrows();
            let (layer_out, cache_b, h_b, c_b) = if self.bidirectional {
                let x_rev = reverse_rows(&x);
                let (out_b_rev, cache_b) = self.enc_bwd[l].forward(&x_rev, &zero, &zero);
                let out_b = reverse_rows(&out_b_rev);
                let h_b = cache_b.h.row(t_len).to_owned();
                let c_b = cache_b.c.row(t_len).to_owned();
                (
                    concatenate(Axis(1), &[out_f.view(), out_b.view()]).expect("concat"),
                    Some(cache_b),
                    h_b,
                    c_b,
                )
            } else {
                (out_f.clone(), None, zero.clone(), zero.clone())
            };
            let h_f = cache_f.h.row(t_len).to_owned();
            let c_f = cache_f.c.row(t_len).to_owned();
            finals.push((h_f, c_f, h_b, c_b));
            let (next_x, out_mask) = if l + 1 < n_layers {
                dropout_forward(&layer_out, self.dropout, rng.as_deref_mut())
            } else {
                (layer_out.clone(), None)
            };
            layers.push(EncLayerCache { fwd: cache_f, bwd: cache_b, out_mask });
            if l + 1 < n_layers {
                x = next_x;
            } else {
                x = layer_out;
            }
        }
        EncCache { src: src.to_vec(), emb_mask, layers, outputs: x, finals }
    }

    fn decode_forward(
        &self,
        enc: &EncCache,
        dec_in: &[u32],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Array2<f64>, DecCache) {
        let emb = self.dec_embedding.forward(dec_in);
        let (mut y, emb_mask) = dropout_forward(&emb, self.dropout, rng.as_deref_mut());
        let n_layers = self.dec_layers.len();
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (h_f, c_f, h_b, c_b) = &enc.finals[l.min(enc.finals.len() - 1)];
            let h0 = h_f + h_b;
            let c0 = c_f + c_b;
            let (out, cache) = self.dec_layers[l].forward(&y, &h0, &c0);
            let (next_y, out_mask) = if l + 1 < n_layers {
                dropout_forward(&out, self.dropout, rng.as_deref_mut())
            } else {
                (out.clone(), None)
            };
            layers.push((cache, out_mask));
            y = if l + 1 < n_layers { next_y } else { out };
        }
        let top_h = y;

        let (feats, attn) = match &self.attention {
            Some(a) => {
                let queries = top_h.dot(&a.w_score.w); // Td x E_dim
                let mut weights = queries.dot(&enc.outputs.t()); // Td x Ts
                softmax_rows_inplace(&mut weights);
                let context = weights.dot(&enc.outputs); // Td x E_dim
                let cat = concatenate(Axis(1), &[context.view(), top_h.view()]).expect("concat");
                let att = a.combine.forward(&cat).mapv(f64::tanh);
                (att.clone(), Some(AttnCache { queries, weights, context, cat, att }))
            }
            None => (top_h.clone(), None),
        };
        let logits = self.out_proj.forward(&feats);
        (logits, DecCache { dec_in: dec_in.to_vec(), emb_mask, layers, top_h, attn, feats })
    }

    pub fn pair_loss_backward(
        &mut self,
        pair: &Pair,
        grad_scale: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> f64 {
        let dec_in = pair.decoder_input();
        let dec_tgt = pair.decoder_target();
        let enc = self.encode_forward(&pair.src, rng.as_deref_mut());
        let (logits, dec) = self.decode_forward(&enc, &dec_in, rng.as_deref_mut());
        let (nll, mut dlogits) = cross_entropy(&logits, &dec_tgt);
        dlogits.mapv_inplace(|v| v * grad_scale);

        // output projection and attention
        let d_feats = self.out_proj.backward(&dec.feats, &dlogits);
        let mut d_enc_out = Array2::zeros(enc.outputs.dim());
        let d_top_h = match (&mut self.attention, &dec.attn) {
            (Some(a), Some(at)) => {
                let dz = &d_feats * &at.att.mapv(|v| 1.0 - v * v);
                let d_cat = a.combine.backward(&at.cat, &dz);
                let e_dim = at.context.ncols();
                let d_ctx = d_cat.slice(s![.., ..e_dim]).to_owned();
                let mut d_top = d_cat.slice(s![.., e_dim..]).to_owned();
                // context = weights @ enc_out
                let d_weights = d_ctx.dot(&enc.outputs.t());
                d_enc_out += &at.weights.t().dot(&d_ctx);
                // softmax rows backward
                let mut d_scores = Array2::zeros(at.weights.dim());
                for i in 0..at.weights.nrows() {
                    let row_dot: f64 = (0..at.weights.ncols())
                        .map(|j| d_weights[[i, j]] * at.weights[[i, j]])
                        .sum();
                    for j in 0..at.weights.ncols() {
                        d_scores[[i, j]] = at.weights[[i, j]] * (d_weights[[i, j]] - row_dot);
                    }
                }
                // scores = queries @ enc_out^T
                let d_queries = d_scores.dot(&enc.outputs);
                d_enc_out += &d_scores.t().dot(&at.queries);
                // queries = top_h @ w_score
                a.w_score.g += &dec.top_h.t().dot(&d_queries);
                d_top += &d_queries.dot(&a.w_score.w.t());
                d_top
            }
            _ => d_feats,
        };

        // decoder stack; initial-state gradients flow back to the encoder
        // finals they were bridged from
        let n_enc = enc.finals.len();
        let mut d_y = d_top_h;
        let mut d_bridge: Vec<(Array1<f64>, Array1<f64>)> =
            (0..n_enc).map(|_| (Array1::zeros(self.hidden), Array1::zeros(self.hidden))).collect();
        for l in (0..self.dec_layers.len()).rev() {
            let (cache, _) = &dec.layers[l];
            let (dx, d_h0, d_c0) = self.dec_layers[l].backward(cache, &d_y, None, None);
            let enc_idx = l.min(n_enc - 1);
            d_bridge[enc_idx].0 += &d_h0;
            d_bridge[enc_idx].1 += &d_c0;
            d_y = if l > 0 { dropout_backward(&dx, &dec.layers[l - 1].1) } else { dx };
        }
        let d_emb = dropout_backward(&d_y, &dec.emb_mask);
        self.dec_embedding.backward(&dec.dec_in, &d_emb);

        // encoder stack
        self.encode_backward(&enc, d_enc_out, &d_bridge);
        nll
    }

    fn encode_backward(
        &mut self,
        enc: &EncCache,
        d_top_out: Array2<f64>,
        d_bridge: &[(Array1<f64>, Array1<f64>)],
    ) {
        let n_layers = self.enc_fwd.len();
        let hsz = self.hidden;
        let mut d_above: Array2<f64> = d_top_out;
        for l in (0..n_layers).rev() {
            let d_layer_out = if l + 1 < n_layers {
                dropout_backward(&d_above, &enc.layers[l].out_mask)
            } else {
                d_above.clone()
            };
            let (d_h0, d_c0) = (&d_bridge[l].0, &d_bridge[l].1);
            if self.bidirectional {
                let d_f = d_layer_out.slice(s![.., ..hsz]).to_owned();
                let d_b = d_layer_out.slice(s![.., hsz..]).to_owned();
                let (dx_f, _, _) =
                    self.enc_fwd[l].backward(&enc.layers[l].fwd, &d_f, Some(d_h0), Some(d_c0));
                let d_b_rev = reverse_rows(&d_b);
                let (dx_b_rev, _, _) = self.enc_bwd[l].backward(
                    enc.layers[l].bwd.as_ref().expect("bidirectional cache"),
                    &d_b_rev,
                    Some(d_h0),
                    Some(d_c0),
                );
                d_above = dx_f + reverse_rows(&dx_b_rev);
            } else {
                let (dx_f, _, _) = self.enc_fwd[l].backward(
                    &enc.layers[l].fwd,
                    &d_layer_out,
                    Some(d_h0),
                    Some(d_c0),
                );
                d_above = dx_f;
            }
        }
        let d_emb = dropout_backward(&d_above, &enc.emb_mask);
        self.enc_embedding.backward(&enc.src, &d_emb);
    }

    pub fn pair_nll(&self, pair: &Pair) -> f64 {
        let enc = self.encode_forward(&pair.src, None);
        let (logits, _) = self.decode_forward(&enc, &pair.decoder_input(), None);
        nll_only(&logits, &pair.decoder_target())
    }

    /// Evaluation-mode encoder run for extraction: per-token top-layer
    /// states plus final hidden/cell per (layer, direction).
    pub fn encode_tokens(
        &self,
        src: &[u32],
    ) -> (Array2<f64>, Option<Vec<Array1<f64>>>, Option<Vec<Array1<f64>>>) {
        let enc = self.encode_forward(src, None);
        let mut hidden = Vec::new();
        let mut cell = Vec::new();
        for (h_f, c_f, h_b, c_b) in &enc.finals {
            hidden.push(h_f.clone());
            cell.push(c_f.clone());
            if self.bidirectional {
                hidden.push(h_b.clone());
                cell.push(c_b.clone());
            }
        }
        (enc.outputs, Some(hidden), Some(cell))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vocab::SPECIAL_TOKENS;
    use crate::model::{Architecture, ModelConfig, Profile};
    use crate::corpus::SizeClass;
    use rand::SeedableRng;

    fn tiny_cfg(arch: Architecture) -> ModelConfig {
        let mut cfg = ModelConfig::preset(arch, SizeClass::Small, Profile::Desk);
        cfg.hidden_size = 5;
        cfg.embedding_size = 4;
        cfg.dropout = 0.0;
        cfg
    }

    fn tiny_pair() -> Pair {
        Pair { src: vec![5, 6, 4, 7, 8], tgt: vec![6, 9] }
    }

    #[test]
    fn deterministic_construction() {
        let cfg = tiny_cfg(Architecture::RnnAttn);
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let vocab = SPECIAL_TOKENS.len() + 6;
        let m1 = RnnSeq2Seq::new(&cfg, vocab, &mut r1);
        let m2 = RnnSeq2Seq::new(&cfg, vocab, &mut r2);
        for (a, b) in m1.params().iter().zip(m2.params()) {
            assert_eq!(a.w, b.w, "param {} differs", a.name);
        }
    }

    #[test]
    fn eval_is_deterministic() {
        let cfg = tiny_cfg(Architecture::RnnAttn);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = RnnSeq2Seq::new(&cfg, 12, &mut rng);
        let pair = tiny_pair();
        assert_eq!(m.pair_nll(&pair), m.pair_nll(&pair));
        let (a, _, _) = m.encode_tokens(&pair.src);
        let (b, _, _) = m.encode_tokens(&pair.src);
        assert_eq!(a, b);
    }

    #[test]
    fn loss_backward_matches_eval_loss() {
        for arch in [Architecture::Rnn, Architecture::RnnAttn] {
            let cfg = tiny_cfg(arch);
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mut m = RnnSeq2Seq::new(&cfg, 12, &mut rng);
            let pair = tiny_pair();
            let eval = m.pair_nll(&pair);
            let train = m.pair_loss_backward(&pair, 1.0, None);
            assert!((eval - train).abs() < 1e-12);
        }
    }
}
