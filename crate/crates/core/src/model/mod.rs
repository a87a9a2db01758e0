//! Encoder-decoder dialog models: configuration, training, perplexity
//! evaluation and frozen-encoder inspection.

pub mod io;
pub mod rnn;
pub mod train;
pub mod transformer_s2s;

pub use train::{train_dialog_model, finetune, Trainer};

use crate::corpus::vocab::{self, SizeClass, Vocabulary};
use crate::corpus::{Conversation, DialogCorpus, Ordering, Split, Utterance};
use crate::nn::Param;
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("vocabulary mismatch: checkpoint was built for {expected}, got {actual}")]
    VocabMismatch { expected: String, actual: String },
    #[error("checkpoint must be frozen before extraction use")]
    NotFrozen,
    #[error("checkpoint is frozen; training requires an unfrozen checkpoint")]
    Frozen,
    #[error("corpus has no usable (history, target) pairs")]
    EmptyCorpus,
    #[error("perplexity evaluation requires an ordered test corpus (got {split} / {ordering:?})")]
    WrongEvalCorpus { split: Split, ordering: Ordering },
    #[error("training diverged: validation perplexity stayed above the initial {initial:.2} for {epochs} epochs (last {last:.2})")]
    Diverged { initial: f64, last: f64, epochs: usize },
    #[error("history must contain at least one utterance")]
    EmptyHistory,
    #[error("finetune requires an already-trained checkpoint (empty provenance)")]
    Untrained,
    #[error("i/o error on {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("bad checkpoint file {path}: {reason}")]
    BadCheckpoint { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Rnn,
    RnnAttn,
    Transformer,
}

impl Architecture {
    pub fn as_str(&self) -> &'static str {
        match self {
            Architecture::Rnn => "rnn",
            Architecture::RnnAttn => "rnn_attn",
            Architecture::Transformer => "transformer",
        }
    }

    pub fn all() -> [Architecture; 3] {
        [Architecture::Rnn, Architecture::RnnAttn, Architecture::Transformer]
    }
}

/// Which preset scale to instantiate: `Full` mirrors the published
/// configurations, `Desk` divides hidden/embedding sizes by four so the
/// whole grid trains on a workstation CPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub hidden_size: usize,
    pub embedding_size: usize,
    pub attention_heads: usize,
    pub ffn_size: usize,
    pub dropout: f64,
    pub bidirectional_encoder: bool,
    pub size_class: SizeClass,
    pub max_positions: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!("dropout {} not in [0,1)", self.dropout)));
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return Err(ModelError::InvalidConfig("layer counts must be >= 1".into()));
        }
        if self.architecture == Architecture::Transformer
            && self.embedding_size % self.attention_heads != 0
        {
            return Err(ModelError::InvalidConfig(format!(
                "embedding size {} not divisible by {} attention heads",
                self.embedding_size, self.attention_heads
            )));
        }
        if self.max_positions == 0 {
            return Err(ModelError::InvalidConfig("max_positions must be >= 1".into()));
        }
        Ok(())
    }

    /// Published model configurations, scaled down for the desk profile.
    ///
    /// The full-scale small transformer uses embedding 400 with 8 heads;
    /// a quarter of 400 is not divisible by 8, so the desk preset keeps the
    /// 100-dim embedding and drops to 4 heads instead.
    pub fn preset(arch: Architecture, size: SizeClass, profile: Profile) -> ModelConfig {
        let base = match (arch, size) {
            (Architecture::Rnn | Architecture::RnnAttn, SizeClass::Small) => ModelConfig {
                architecture: arch,
                encoder_layers: 2,
                decoder_layers: 2,
                hidden_size: 256,
                embedding_size: 128,
                attention_heads: 0,
                ffn_size: 0,
                dropout: 0.3,
                bidirectional_encoder: true,
                size_class: size,
                max_positions: 128,
            },
            (Architecture::Rnn | Architecture::RnnAttn, SizeClass::Large) => ModelConfig {
                architecture: arch,
                encoder_layers: 2,
                decoder_layers: 2,
                hidden_size: 1024,
                embedding_size: 300,
                attention_heads: 0,
                ffn_size: 0,
                dropout: 0.3,
                bidirectional_encoder: true,
                size_class: size,
                max_positions: 128,
            },
            (Architecture::Transformer, SizeClass::Small) => ModelConfig {
                architecture: arch,
                encoder_layers: 2,
                decoder_layers: 2,
                hidden_size: 400,
                embedding_size: 400,
                attention_heads: 8,
                ffn_size: 300,
                dropout: 0.3,
                bidirectional_encoder: false,
                size_class: size,
                max_positions: 128,
            },
            (Architecture::Transformer, SizeClass::Large) => ModelConfig {
                architecture: arch,
                encoder_layers: 2,
                decoder_layers: 2,
                hidden_size: 768,
                embedding_size: 768,
                attention_heads: 12,
                ffn_size: 2048,
                dropout: 0.1,
                bidirectional_encoder: false,
                size_class: size,
                max_positions: 128,
            },
        };
        match profile {
            Profile::Full => base,
            Profile::Desk => {
                let mut cfg = base;
                cfg.hidden_size /= 4;
                cfg.embedding_size /= 4;
                cfg.ffn_size /= 4;
                if arch == Architecture::Transformer {
                    cfg.attention_heads = match size {
                        SizeClass::Small => 4, // 100 / 4 = 25 per head
                        SizeClass::Large => 12,
                    };
                }
                cfg
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub warmup_updates: u64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub gradient_clip: f64,
    pub seed: u64,
    pub patience: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.learning_rate <= 0.0 {
            return Err(ModelError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.warmup_updates == 0 {
            return Err(ModelError::InvalidConfig("warmup_updates must be >= 1".into()));
        }
        Ok(())
    }

    /// Published optimizer settings per architecture; the desk profile
    /// shortens warmup to match desk-scale update counts.
    pub fn preset(arch: Architecture, size: SizeClass, profile: Profile, seed: u64) -> TrainConfig {
        let (lr, warmup, batch) = match (arch, size) {
            (Architecture::Transformer, SizeClass::Small) => (0.001, 6000, 64),
            (Architecture::Transformer, SizeClass::Large) => (0.001, 4000, 32),
            (_, SizeClass::Small) => (0.005, 4000, 64),
            (_, SizeClass::Large) => (0.005, 4000, 40),
        };
        match profile {
            Profile::Full => TrainConfig {
                learning_rate: lr,
                warmup_updates: warmup,
                batch_size: batch,
                max_epochs: 60,
                gradient_clip: 1.0,
                seed,
                patience: 3,
            },
            Profile::Desk => TrainConfig {
                learning_rate: lr,
                warmup_updates: warmup / 20,
                batch_size: 16,
                max_epochs: 20,
                gradient_clip: 1.0,
                seed,
                patience: 3,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub corpus_id: String,
    pub ordering: Ordering,
    pub stage: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetric {
    pub update: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_ppl: f64,
    pub lr: f64,
}

/// Encoder activations for one input, aligned with token positions.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// One row per encoder input position.
    pub per_token_states: Array2<f64>,
    /// Final hidden state per (layer, direction), recurrent models only.
    pub final_hidden: Option<Vec<Array1<f64>>>,
    /// Final cell state per (layer, direction), recurrent models only.
    pub final_cell: Option<Vec<Array1<f64>>>,
    /// Token span (start, end) of each input utterance, separators excluded.
    pub boundary_ranges: Vec<(usize, usize)>,
    pub separator_positions: Vec<usize>,
    pub truncated: bool,
}

/// A dialog model plus everything needed to reproduce and audit it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model_id: String,
    pub model: ModelKind,
    pub config: ModelConfig,
    pub train_config: Option<TrainConfig>,
    pub vocab_hash: String,
    pub vocab_size: usize,
    pub provenance: Vec<ProvenanceEntry>,
    pub metrics: Vec<EpochMetric>,
    pub best_valid_ppl: Option<f64>,
    pub updates: u64,
    pub frozen: bool,
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    Rnn(rnn::RnnSeq2Seq),
    Transformer(transformer_s2s::TransformerSeq2Seq),
}

impl ModelKind {
    pub fn params(&self) -> Vec<&Param> {
        match self {
            ModelKind::Rnn(m) => m.params(),
            ModelKind::Transformer(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            ModelKind::Rnn(m) => m.params_mut(),
            ModelKind::Transformer(m) => m.params_mut(),
        }
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Teacher-forced forward+backward on one pair; gradients accumulate
    /// scaled by `grad_scale`. Returns the summed token NLL.
    pub fn pair_loss_backward(
        &mut self,
        pair: &Pair,
        grad_scale: f64,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> f64 {
        match self {
            ModelKind::Rnn(m) => m.pair_loss_backward(pair, grad_scale, dropout_rng),
            ModelKind::Transformer(m) => m.pair_loss_backward(pair, grad_scale, dropout_rng),
        }
    }

    /// Teacher-forced summed token NLL in evaluation mode.
    pub fn pair_nll(&self, pair: &Pair) -> f64 {
        match self {
            ModelKind::Rnn(m) => m.pair_nll(pair),
            ModelKind::Transformer(m) => m.pair_nll(pair),
        }
    }

    /// Run the encoder in evaluation mode over raw token ids.
    pub fn encode_tokens(&self, src: &[u32]) -> (Array2<f64>, Option<Vec<Array1<f64>>>, Option<Vec<Array1<f64>>>) {
        match self {
            ModelKind::Rnn(m) => m.encode_tokens(src),
            ModelKind::Transformer(m) => (m.encode_tokens(src), None, None),
        }
    }

    pub fn embedding_table(&self) -> &Array2<f64> {
        match self {
            ModelKind::Rnn(m) => &m.enc_embedding.table.w,
            ModelKind::Transformer(m) => &m.enc_embedding.table.w,
        }
    }
}

impl Checkpoint {
    pub fn parameter_count(&self) -> usize {
        self.model.params().iter().map(|p| p.numel()).sum()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Hash of every parameter byte, for freeze-invariance checks.
    pub fn params_hash(&self) -> String {
        let mut bytes = Vec::new();
        for p in self.model.params() {
            for v in p.w.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        crate::hashing::sha256_hex(&bytes)
    }
}

/// Build an untrained model with deterministic seed-derived parameters.
pub fn build_model(
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    seed: u64,
) -> Result<Checkpoint, ModelError> {
    cfg.validate()?;
    if cfg.size_class != vocab.size_class {
        return Err(ModelError::VocabMismatch {
            expected: cfg.size_class.to_string(),
            actual: vocab.size_class.to_string(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = match cfg.architecture {
        Architecture::Rnn | Architecture::RnnAttn => {
            ModelKind::Rnn(rnn::RnnSeq2Seq::new(cfg, vocab.len(), &mut rng))
        }
        Architecture::Transformer => {
            ModelKind::Transformer(transformer_s2s::TransformerSeq2Seq::new(cfg, vocab.len(), &mut rng))
        }
    };
    Ok(Checkpoint {
        model_id: format!("{}-{}", cfg.architecture.as_str(), cfg.size_class),
        model,
        config: cfg.clone(),
        train_config: None,
        vocab_hash: vocab.hash(),
        vocab_size: vocab.len(),
        provenance: Vec::new(),
        metrics: Vec::new(),
        best_valid_ppl: None,
        updates: 0,
        frozen: false,
    })
}

/// One teacher-forcing example: encoder input and target utterance tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pair {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
}

impl Pair {
    pub fn decoder_input(&self) -> Vec<u32> {
        let mut v = Vec::with_capacity(self.tgt.len() + 1);
        v.push(vocab::START);
        v.extend_from_slice(&self.tgt);
        v
    }

    pub fn decoder_target(&self) -> Vec<u32> {
        let mut v = Vec::with_capacity(self.tgt.len() + 1);
        v.extend_from_slice(&self.tgt);
        v.push(vocab::END);
        v
    }

    pub fn target_tokens(&self) -> usize {
        self.tgt.len() + 1
    }
}

/// Join utterances with separator tokens. Returns the token stream, the
/// (start, end) span of each utterance, and the separator positions.
pub fn join_utterances(utts: &[Utterance]) -> (Vec<u32>, Vec<(usize, usize)>, Vec<usize>) {
    let mut tokens = Vec::new();
    let mut ranges = Vec::with_capacity(utts.len());
    let mut seps = Vec::new();
    for (i, u) in utts.iter().enumerate() {
        if i > 0 {
            seps.push(tokens.len());
            tokens.push(vocab::SEP);
        }
        let start = tokens.len();
        tokens.extend_from_slice(&u.tokens);
        ranges.push((start, tokens.len()));
    }
    (tokens, ranges, seps)
}

/// Keep the newest `max_len` tokens, dropping the oldest history. Ranges and
/// separator positions are re-based; fully truncated utterances drop out.
pub fn truncate_oldest(
    tokens: &[u32],
    ranges: &[(usize, usize)],
    seps: &[usize],
    max_len: usize,
) -> (Vec<u32>, Vec<(usize, usize)>, Vec<usize>, bool) {
    if tokens.len() <= max_len {
        return (tokens.to_vec(), ranges.to_vec(), seps.to_vec(), false);
    }
    let cut = tokens.len() - max_len;
    let new_tokens = tokens[cut..].to_vec();
    let new_ranges: Vec<(usize, usize)> = ranges
        .iter()
        .filter(|(_, e)| *e > cut)
        .map(|&(s, e)| (s.max(cut) - cut, e - cut))
        .collect();
    let new_seps: Vec<usize> = seps.iter().filter(|&&p| p >= cut).map(|&p| p - cut).collect();
    (new_tokens, new_ranges, new_seps, true)
}

/// All (history, next-utterance) training pairs of one conversation.
pub fn conversation_pairs(conv: &Conversation, max_len: usize) -> Vec<Pair> {
    let mut pairs = Vec::new();
    for t in 1..conv.utterances.len() {
        let (tokens, ranges, seps) = join_utterances(&conv.utterances[..t]);
        let (src, _, _, _) = truncate_oldest(&tokens, &ranges, &seps, max_len);
        let mut tgt = conv.utterances[t].tokens.clone();
        tgt.truncate(max_len.saturating_sub(1).max(1));
        pairs.push(Pair { src, tgt });
    }
    pairs
}

pub fn corpus_pairs(corpus: &DialogCorpus, max_len: usize) -> Vec<Pair> {
    corpus.conversations.iter().flat_map(|c| conversation_pairs(c, max_len)).collect()
}

/// Run the frozen encoder over a conversation history.
///
/// Utterances are joined with separator tokens; for transformers, inputs
/// longer than the model's position table are truncated from the oldest
/// side and flagged.
pub fn encode(ckpt: &Checkpoint, history: &[Utterance]) -> Result<EncoderOutput, ModelError> {
    if !ckpt.frozen {
        return Err(ModelError::NotFrozen);
    }
    if history.is_empty() {
        return Err(ModelError::EmptyHistory);
    }
    let (tokens, ranges, seps) = join_utterances(history);
    let (tokens, ranges, seps, truncated) =
        if ckpt.config.architecture == Architecture::Transformer {
            truncate_oldest(&tokens, &ranges, &seps, ckpt.config.max_positions)
        } else {
            (tokens, ranges, seps, false)
        };
    let (per_token_states, final_hidden, final_cell) = ckpt.model.encode_tokens(&tokens);
    Ok(EncoderOutput {
        per_token_states,
        final_hidden,
        final_cell,
        boundary_ranges: ranges,
        separator_positions: seps,
        truncated,
    })
}

/// Teacher-forced perplexity on an ordered test corpus.
pub fn evaluate_perplexity(ckpt: &Checkpoint, corpus: &DialogCorpus) -> Result<f64, ModelError> {
    if corpus.split != Split::Test || corpus.ordering != Ordering::Ordered {
        return Err(ModelError::WrongEvalCorpus { split: corpus.split, ordering: corpus.ordering });
    }
    let pairs = corpus_pairs(corpus, ckpt.config.max_positions);
    if pairs.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    Ok(perplexity_over_pairs(&ckpt.model, &pairs))
}

pub(crate) fn perplexity_over_pairs(model: &ModelKind, pairs: &[Pair]) -> f64 {
    let mut nll = 0.0;
    let mut count = 0usize;
    for pair in pairs {
        nll += model.pair_nll(pair);
        count += pair.target_tokens();
    }
    (nll / count as f64).exp()
}

/// Perplexity of a Laplace-smoothed unigram model fit on the training
/// targets, evaluated on the test targets. The floor any sequence model
/// must beat to demonstrate it learned anything contextual.
pub fn unigram_perplexity(train: &DialogCorpus, test: &DialogCorpus, vocab_size: usize, max_len: usize) -> f64 {
    let mut counts = vec![0u64; vocab_size];
    let mut total = 0u64;
    for pair in corpus_pairs(train, max_len) {
        for t in pair.decoder_target() {
            counts[t as usize] += 1;
            total += 1;
        }
    }
    let denom = (total + vocab_size as u64) as f64;
    let mut nll = 0.0;
    let mut n = 0usize;
    for pair in corpus_pairs(test, max_len) {
        for t in pair.decoder_target() {
            let p = (counts[t as usize] + 1) as f64 / denom;
            nll -= p.ln();
            n += 1;
        }
    }
    (nll / n as f64).exp()
}

/// Compare analytic gradients with central finite differences on one pair.
/// Returns the worst relative error per parameter tensor.
pub fn gradient_check(ckpt: &mut Checkpoint, pair: &Pair) -> Vec<(String, f64)> {
    let scale = 1.0 / pair.target_tokens() as f64;
    ckpt.model.zero_grads();
    ckpt.model.pair_loss_backward(pair, scale, None);
    let analytic: Vec<(String, Array2<f64>)> =
        ckpt.model.params().iter().map(|p| (p.name.clone(), p.g.clone())).collect();

    let h = 1e-5;
    let mut report = Vec::new();
    let n_params = analytic.len();
    for pi in 0..n_params {
        let (rows, cols) = {
            let params = ckpt.model.params();
            params[pi].w.dim()
        };
        let mut worst = 0.0f64;
        for r in 0..rows {
            for c in 0..cols {
                let orig = ckpt.model.params()[pi].w[[r, c]];
                ckpt.model.params_mut()[pi].w[[r, c]] = orig + h;
                let up = ckpt.model.pair_nll(pair) * scale;
                ckpt.model.params_mut()[pi].w[[r, c]] = orig - h;
                let down = ckpt.model.pair_nll(pair) * scale;
                ckpt.model.params_mut()[pi].w[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[pi].1[[r, c]];
                let abs_diff = (a - numeric).abs();
                if abs_diff < 1e-9 {
                    continue;
                }
                let rel = abs_diff / a.abs().max(numeric.abs());
                worst = worst.max(rel);
            }
        }
        report.push((analytic[pi].0.clone(), worst));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn join_and_boundaries() {
        let u = |n: usize| Utterance { tokens: vec![9; n], raw_text: "x".into() };
        let (tokens, ranges, seps) = join_utterances(&[u(3), u(4)]);
        assert_eq!(tokens.len(), 8);
        assert_eq!(ranges, vec![(0, 3), (4, 8)]);
        assert_eq!(seps, vec![3]);
    }

    #[test]
    fn truncation_rebases() {
        let tokens = vec![1, 2, 3, 4, 5, 6, 7, 8];
        let ranges = vec![(0, 3), (4, 8)];
        let seps = vec![3];
        let (t, r, s, flag) = truncate_oldest(&tokens, &ranges, &seps, 5);
        assert!(flag);
        assert_eq!(t, vec![4, 5, 6, 7, 8]);
        assert_eq!(r, vec![(1, 5)]);
        assert_eq!(s, vec![0]);
        let (t2, _, _, flag2) = truncate_oldest(&tokens, &ranges, &seps, 100);
        assert!(!flag2);
        assert_eq!(t2, tokens);
    }

    #[test]
    fn pairs_per_conversation() {
        let u = |n: usize| Utterance { tokens: vec![7; n], raw_text: "x".into() };
        let conv = Conversation {
            id: "c".into(),
            utterances: vec![u(2), u(3), u(1)],
            conv_label: None,
            turn_labels: None,
        };
        let pairs = conversation_pairs(&conv, 128);
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].src.len(), 2);
        assert_eq!(pairs[0].tgt.len(), 3);
        // second pair history = u1 <sep> u2
        assert_eq!(pairs[1].src.len(), 2 + 1 + 3);
        assert_eq!(pairs[1].tgt.len(), 1);
    }

    #[test]
    fn desk_presets_keep_shape() {
        for arch in Architecture::all() {
            let full = ModelConfig::preset(arch, SizeClass::Small, Profile::Full);
            let desk = ModelConfig::preset(arch, SizeClass::Small, Profile::Desk);
            assert_eq!(full.encoder_layers, desk.encoder_layers);
            assert_eq!(full.hidden_size, desk.hidden_size * 4);
            desk.validate().unwrap();
            full.validate().unwrap();
        }
    }

    #[test]
    fn full_presets_match_published_sizes() {
        let rnn = ModelConfig::preset(Architecture::Rnn, SizeClass::Small, Profile::Full);
        assert_eq!((rnn.hidden_size, rnn.embedding_size), (256, 128));
        assert!(rnn.bidirectional_encoder);
        assert_eq!((rnn.encoder_layers, rnn.decoder_layers), (2, 2));
        let tf = ModelConfig::preset(Architecture::Transformer, SizeClass::Small, Profile::Full);
        assert_eq!((tf.embedding_size, tf.attention_heads, tf.ffn_size), (400, 8, 300));
        let lt = ModelConfig::preset(Architecture::Transformer, SizeClass::Large, Profile::Full);
        assert_eq!((lt.embedding_size, lt.attention_heads, lt.ffn_size), (768, 12, 2048));
        let lr = ModelConfig::preset(Architecture::RnnAttn, SizeClass::Large, Profile::Full);
        assert_eq!((lr.hidden_size, lr.embedding_size), (1024, 300));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ModelConfig::preset(Architecture::Transformer, SizeClass::Small, Profile::Full);
        cfg.attention_heads = 7; // 400 % 7 != 0
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::preset(Architecture::Rnn, SizeClass::Small, Profile::Full);
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
    }
}
