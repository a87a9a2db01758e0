//! Transformer encoder-decoder with post-norm residual blocks and
//! sinusoidal position encodings.

use super::{ModelConfig, Pair};
use crate::nn::transformer::{
    sinusoidal_table, AttnMask, FeedForward, FeedForwardCache, LayerNorm, LayerNormCache,
    MhaCache, MultiHeadAttention,
};
use crate::nn::{cross_entropy, dropout_backward, dropout_forward, nll_only, Embedding, Linear, Param};
use ndarray::{s, Array2};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
struct EncoderLayer {
    self_attn: MultiHeadAttention,
    norm1: LayerNorm,
    ffn: FeedForward,
    norm2: LayerNorm,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    self_attn: MultiHeadAttention,
    norm1: LayerNorm,
    cross_attn: MultiHeadAttention,
    norm2: LayerNorm,
    ffn: FeedForward,
    norm3: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct TransformerSeq2Seq {
    pub enc_embedding: Embedding,
    pub dec_embedding: Embedding,
    pos_table: Array2<f64>,
    enc_layers: Vec<EncoderLayer>,
    dec_layers: Vec<DecoderLayer>,
    out_proj: Linear,
    dim: usize,
    dropout: f64,
    pub max_positions: usize,
}

struct ResidualBlockCache {
    attn: MhaCache,
    attn_drop: Option<Array2<f64>>,
    norm: LayerNormCache,
}

struct FfnBlockCache {
    ffn: FeedForwardCache,
    drop: Option<Array2<f64>>,
    norm: LayerNormCache,
}

struct EncLayerCaches {
    self_block: ResidualBlockCache,
    ffn_block: FfnBlockCache,
}

struct DecLayerCaches {
    self_block: ResidualBlockCache,
    cross_block: ResidualBlockCache,
    ffn_block: FfnBlockCache,
}

struct EncCache {
    src: Vec<u32>,
    emb_mask: Option<Array2<f64>>,
    layers: Vec<EncLayerCaches>,
    outputs: Array2<f64>,
}

struct DecCache {
    dec_in: Vec<u32>,
    emb_mask: Option<Array2<f64>>,
    layers: Vec<DecLayerCaches>,
    outputs: Array2<f64>,
}

impl TransformerSeq2Seq {
    pub fn new(cfg: &ModelConfig, vocab_size: usize, rng: &mut ChaCha8Rng) -> Self {
        let d = cfg.embedding_size;
        let enc_embedding = Embedding::new("enc.embedding", vocab_size, d, rng);
        let dec_embedding = Embedding::new("dec.embedding", vocab_size, d, rng);
        let enc_layers = (0..cfg.encoder_layers)
            .map(|l| EncoderLayer {
                self_attn: MultiHeadAttention::new(
                    &format!("enc.l{l}.self"),
                    d,
                    cfg.attention_heads,
                    rng,
                ),
                norm1: LayerNorm::new(&format!("enc.l{l}.norm1"), d),
                ffn: FeedForward::new(&format!("enc.l{l}.ffn"), d, cfg.ffn_size, rng),
                norm2: LayerNorm::new(&format!("enc.l{l}.norm2"), d),
            })
            .collect();
        let dec_layers = (0..cfg.decoder_layers)
            .map(|l| DecoderLayer {
                self_attn: MultiHeadAttention::new(
                    &format!("dec.l{l}.self"),
                    d,
                    cfg.attention_heads,
                    rng,
                ),
                norm1: LayerNorm::new(&format!("dec.l{l}.norm1"), d),
                cross_attn: MultiHeadAttention::new(
                    &format!("dec.l{l}.cross"),
                    d,
                    cfg.attention_heads,
                    rng,
                ),
                norm2: LayerNorm::new(&format!("dec.l{l}.norm2"), d),
                ffn: FeedForward::new(&format!("dec.l{l}.ffn"), d, cfg.ffn_size, rng),
                norm3: LayerNorm::new(&format!("dec.l{l}.norm3"), d),
            })
            .collect();
        let mut out_proj = Linear::new("out_proj", d, vocab_size, rng);
        out_proj.w.w.mapv_inplace(|v| v * 0.02);
        TransformerSeq2Seq {
            enc_embedding,
            dec_embedding,
            pos_table: sinusoidal_table(cfg.max_positions, d),
            enc_layers,
            dec_layers,
            out_proj,
            dim: d,
            dropout: cfg.dropout,
            max_positions: cfg.max_positions,
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = vec![&self.enc_embedding.table, &self.dec_embedding.table];
        for l in &self.enc_layers {
            out.extend(l.self_attn.params());
            out.extend(l.norm1.params());
            out.extend(l.ffn.params());
            out.extend(l.norm2.params());
        }
        for l in &self.dec_layers {
            out.extend(l.self_attn.params());
            out.extend(l.norm1.params());
            out.extend(l.cross_attn.params());
            out.extend(l.norm2.params());
            out.extend(l.ffn.params());
            out.extend(l.norm3.params());
        }
        out.extend(self.out_proj.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = vec![&mut self.enc_embedding.table, &mut self.dec_embedding.table];
        for l in &mut self.enc_layers {
            out.extend(l.self_attn.params_mut());
            out.extend(l.norm1.params_mut());
            out.extend(l.ffn.params_mut());
            out.extend(l.norm2.params_mut());
        }
        for l in &mut self.dec_layers {
            out.extend(l.self_attn.params_mut());
            out.extend(l.norm1.params_mut());
            out.extend(l.cross_attn.params_mut());
            out.extend(l.norm2.params_mut());
            out.extend(l.ffn.params_mut());
            out.extend(l.norm3.params_mut());
        }
        out.extend(self.out_proj.params_mut());
        out
    }

    fn embed(&self, embedding: &Embedding, ids: &[u32]) -> Array2<f64> {
        let scale = (self.dim as f64).sqrt();
        let mut x = embedding.forward(ids);
        x.mapv_inplace(|v| v * scale);
        let t = ids.len().min(self.max_positions);
        x += &self.pos_table.slice(s![..t, ..]);
        x
    }

    fn encode_forward(&self, src: &[u32], mut rng: Option<&mut ChaCha8Rng>) -> EncCache {
        debug_assert!(src.len() <= self.max_positions, "encoder input exceeds position table");
        let emb = self.embed(&self.enc_embedding, src);
        let (mut x, emb_mask) = dropout_forward(&emb, self.dropout, rng.as_deref_mut());
        let mut layers = Vec::with_capacity(self.enc_layers.len());
        for layer in &self.enc_layers {
            let (a, attn_cache) = layer.self_attn.forward(&x, &x, AttnMask::None);
            let (a_dropped, attn_drop) = dropout_forward(&a, self.dropout, rng.as_deref_mut());
            let norm_in = &x + &a_dropped;
            let (x1, norm1_cache) = layer.norm1.forward(&norm_in);
            drop(norm_in);
            let (f, ffn_cache) = layer.ffn.forward(&x1);
            let (f_dropped, ffn_drop) = dropout_forward(&f, self.dropout, rng.as_deref_mut());
            let ffn_norm_in = &x1 + &f_dropped;
            let (x2, norm2_cache) = layer.norm2.forward(&ffn_norm_in);
            drop(ffn_norm_in);
            layers.push(EncLayerCaches {
                self_block: ResidualBlockCache {
                    attn: attn_cache,
                    attn_drop,
                    norm: norm1_cache,
                },
                ffn_block: FfnBlockCache { ffn: ffn_cache, drop: ffn_drop, norm: norm2_cache },
            });
            x = x2;
        }
        EncCache { src: src.to_vec(), emb_mask, layers, outputs: x }
    }

    fn encode_backward(&mut self, cache: &EncCache, d_out: Array2<f64>) {
        let mut d_x = d_out;
        for (layer, caches) in self.enc_layers.iter_mut().zip(&cache.layers).rev() {
            // ffn block
            let d_norm_in = layer.norm2.backward(&caches.ffn_block.norm, &d_x);
            let d_f = dropout_backward(&d_norm_in, &caches.ffn_block.drop);
            let mut d_x1 = d_norm_in;
            d_x1 += &layer.ffn.backward(&caches.ffn_block.ffn, &d_f);
            // self-attention block
            let d_norm_in = layer.norm1.backward(&caches.self_block.norm, &d_x1);
            let d_a = dropout_backward(&d_norm_in, &caches.self_block.attn_drop);
            let (d_q, d_kv) = layer.self_attn.backward(&caches.self_block.attn, &d_a);
            d_x = d_norm_in;
            d_x += &d_q;
            d_x += &d_kv;
        }
        let d_emb = dropout_backward(&d_x, &cache.emb_mask);
        let scale = (self.dim as f64).sqrt();
        self.enc_embedding.backward(&cache.src, &d_emb.mapv(|v| v * scale));
    }

    fn decode_forward(
        &self,
        enc_out: &Array2<f64>,
        dec_in: &[u32],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Array2<f64>, DecCache) {
        debug_assert!(dec_in.len() <= self.max_positions, "decoder input exceeds position table");
        let emb = self.embed(&self.dec_embedding, dec_in);
        let (mut y, emb_mask) = dropout_forward(&emb, self.dropout, rng.as_deref_mut());
        let mut layers = Vec::with_capacity(self.dec_layers.len());
        for layer in &self.dec_layers {
            let (a, self_cache) = layer.self_attn.forward(&y, &y, AttnMask::Causal);
            let (a_dropped, self_drop) = dropout_forward(&a, self.dropout, rng.as_deref_mut());
            let self_norm_in = &y + &a_dropped;
            let (y1, norm1_cache) = layer.norm1.forward(&self_norm_in);

            let (c, cross_cache) = layer.cross_attn.forward(&y1, enc_out, AttnMask::None);
            let (c_dropped, cross_drop) = dropout_forward(&c, self.dropout, rng.as_deref_mut());
            let cross_norm_in = &y1 + &c_dropped;
            let (y2, norm2_cache) = layer.norm2.forward(&cross_norm_in);

            let (f, ffn_cache) = layer.ffn.forward(&y2);
            let (f_dropped, ffn_drop) = dropout_forward(&f, self.dropout, rng.as_deref_mut());
            let ffn_norm_in = &y2 + &f_dropped;
            let (y3, norm3_cache) = layer.norm3.forward(&ffn_norm_in);

            layers.push(DecLayerCaches {
                self_block: ResidualBlockCache {
                    attn: self_cache,
                    attn_drop: self_drop,
                    norm: norm1_cache,
                },
                cross_block: ResidualBlockCache {
                    attn: cross_cache,
                    attn_drop: cross_drop,
                    norm: norm2_cache,
                },
                ffn_block: FfnBlockCache { ffn: ffn_cache, drop: ffn_drop, norm: norm3_cache },
            });
            y = y3;
        }
        let logits = self.out_proj.forward(&y);
        (logits, DecCache { dec_in: dec_in.to_vec(), emb_mask, layers, outputs: y })
    }

    /// Returns the gradient flowing into the encoder outputs.
    fn decode_backward(&mut self, cache: &DecCache, dlogits: &Array2<f64>, enc_out: &Array2<f64>) -> Array2<f64> {
        let mut d_y = self.out_proj.backward(&cache.outputs, dlogits);
        let mut d_enc = Array2::zeros(enc_out.dim());
        for (layer, caches) in self.dec_layers.iter_mut().zip(&cache.layers).rev() {
            // ffn block
            let d_norm_in = layer.norm3.backward(&caches.ffn_block.norm, &d_y);
            let d_f = dropout_backward(&d_norm_in, &caches.ffn_block.drop);
            let mut d_y2 = d_norm_in;
            d_y2 += &layer.ffn.backward(&caches.ffn_block.ffn, &d_f);
            // cross-attention block
            let d_norm_in = layer.norm2.backward(&caches.cross_block.norm, &d_y2);
            let d_c = dropout_backward(&d_norm_in, &caches.cross_block.attn_drop);
            let (d_q, d_kv) = layer.cross_attn.backward(&caches.cross_block.attn, &d_c);
            let mut d_y1 = d_norm_in;
            d_y1 += &d_q;
            d_enc += &d_kv;
            // masked self-attention block
            let d_norm_in = layer.norm1.backward(&caches.self_block.norm, &d_y1);
            let d_a = dropout_backward(&d_norm_in, &caches.self_block.attn_drop);
            let (d_q, d_kv) = layer.self_attn.backward(&caches.self_block.attn, &d_a);
            d_y = d_norm_in;
            d_y += &d_q;
            d_y += &d_kv;
        }
        let d_emb = dropout_backward(&d_y, &cache.emb_mask);
        let scale = (self.dim as f64).sqrt();
        self.dec_embedding.backward(&cache.dec_in, &d_emb.mapv(|v| v * scale));
        d_enc
    }

    fn clamp_pair(&self, pair: &Pair) -> Pair {
        let src = if pair.src.len() > self.max_positions {
            pair.src[pair.src.len() - self.max_positions..].to_vec()
        } else {
            pair.src.clone()
        };
        let mut tgt = pair.tgt.clone();
        tgt.truncate(self.max_positions - 1);
        Pair { src, tgt }
    }

    pub fn pair_loss_backward(
        &mut self,
        pair: &Pair,
        grad_scale: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> f64 {
        let pair = self.clamp_pair(pair);
        let enc = self.encode_forward(&pair.src, rng.as_deref_mut());
        let (logits, dec) = self.decode_forward(&enc.outputs, &pair.decoder_input(), rng.as_deref_mut());
        let (nll, mut dlogits) = cross_entropy(&logits, &pair.decoder_target());
        dlogits.mapv_inplace(|v| v * grad_scale);
        let d_enc = self.decode_backward(&dec, &dlogits, &enc.outputs);
        self.encode_backward(&enc, d_enc);
        nll
    }

    pub fn pair_nll(&self, pair: &Pair) -> f64 {
        let pair = self.clamp_pair(pair);
        let enc = self.encode_forward(&pair.src, None);
        let (logits, _) = self.decode_forward(&enc.outputs, &pair.decoder_input(), None);
        nll_only(&logits, &pair.decoder_target())
    }

    /// Evaluation-mode encoder outputs, one row per input position.
    pub fn encode_tokens(&self, src: &[u32]) -> Array2<f64> {
        let src = if src.len() > self.max_positions {
            &src[src.len() - self.max_positions..]
        } else {
            src
        };
        self.encode_forward(src, None).outputs
    }
}
