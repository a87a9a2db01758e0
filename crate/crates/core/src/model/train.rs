//! Teacher-forced maximum-likelihood training with early stopping.

use super::{
    corpus_pairs, perplexity_over_pairs, Checkpoint, EpochMetric, ModelError, ModelKind, Pair,
    ProvenanceEntry, TrainConfig,
};
use crate::corpus::{DialogCorpus, Vocabulary};
use crate::nn::{clip_global_norm, Adam};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;

fn mix_seed(seed: u64, epoch: u64) -> u64 {
    let mut z = seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Epoch-granular training driver. Owns the checkpoint while training so
/// callers can checkpoint/resume between epochs.
pub struct Trainer {
    pub ckpt: Checkpoint,
    tcfg: TrainConfig,
    stage: String,
    corpus_id: String,
    corpus_ordering: crate::corpus::Ordering,
    pairs: Vec<Pair>,
    valid_pairs: Vec<Pair>,
    adam: Adam,
    pub epoch: usize,
    pub initial_ppl: f64,
    best: Option<(f64, ModelKind)>,
    bad_streak: usize,
    above_initial_streak: usize,
}

/// Optimizer and scheduler state needed to resume between epochs.
pub struct TrainState {
    pub epoch: usize,
    pub updates: u64,
    pub initial_ppl: f64,
    pub bad_streak: usize,
    pub above_initial_streak: usize,
    pub adam_step: u64,
    pub adam_m: Vec<Vec<f64>>,
    pub adam_v: Vec<Vec<f64>>,
    pub best_valid_ppl: Option<f64>,
    pub best_params: Option<Vec<Vec<f64>>>,
}

impl Trainer {
    pub fn new(
        ckpt: Checkpoint,
        corpus: &DialogCorpus,
        valid: &DialogCorpus,
        vocab: &Vocabulary,
        tcfg: TrainConfig,
        stage: &str,
    ) -> Result<Self, ModelError> {
        tcfg.validate()?;
        if ckpt.frozen {
            return Err(ModelError::Frozen);
        }
        if ckpt.vocab_hash != vocab.hash() {
            return Err(ModelError::VocabMismatch {
                expected: ckpt.vocab_hash.clone(),
                actual: vocab.hash(),
            });
        }
        let pairs = corpus_pairs(corpus, ckpt.config.max_positions);
        let valid_pairs = corpus_pairs(valid, ckpt.config.max_positions);
        if pairs.is_empty() || valid_pairs.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        let initial_ppl = perplexity_over_pairs(&ckpt.model, &valid_pairs);
        let adam = Adam::new(tcfg.learning_rate, tcfg.warmup_updates);
        Ok(Trainer {
            ckpt,
            tcfg,
            stage: stage.to_string(),
            corpus_id: corpus.source_id.clone(),
            corpus_ordering: corpus.ordering,
            pairs,
            valid_pairs,
            adam,
            epoch: 0,
            initial_ppl,
            best: None,
            bad_streak: 0,
            above_initial_streak: 0,
        })
    }

    pub fn best_valid_ppl(&self) -> Option<f64> {
        self.best.as_ref().map(|(p, _)| *p)
    }

    pub fn diverged(&self) -> bool {
        self.above_initial_streak >= self.tcfg.patience
    }

    pub fn done(&self) -> bool {
        self.diverged()
            || self.epoch >= self.tcfg.max_epochs
            || self.bad_streak >= self.tcfg.patience
    }

    pub fn run_epoch(&mut self) -> EpochMetric {
        self.epoch += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.tcfg.seed, self.epoch as u64));
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        order.shuffle(&mut rng);

        let mut epoch_nll = 0.0;
        let mut epoch_tokens = 0usize;
        for chunk in order.chunks(self.tcfg.batch_size.max(1)) {
            let total_tokens: usize =
                chunk.iter().map(|&i| self.pairs[i].target_tokens()).sum();
            let grad_scale = 1.0 / total_tokens as f64;
            self.ckpt.model.zero_grads();
            for &i in chunk {
                epoch_nll +=
                    self.ckpt.model.pair_loss_backward(&self.pairs[i], grad_scale, Some(&mut rng));
            }
            let mut params = self.ckpt.model.params_mut();
            clip_global_norm(&mut params, self.tcfg.gradient_clip);
            self.adam.step(&mut params);
            self.ckpt.updates += 1;
            epoch_tokens += total_tokens;
        }

        let train_loss = epoch_nll / epoch_tokens as f64;
        let valid_ppl = perplexity_over_pairs(&self.ckpt.model, &self.valid_pairs);
        let metric = EpochMetric {
            update: self.ckpt.updates,
            epoch: self.epoch,
            train_loss,
            valid_ppl,
            lr: self.adam.lr_at(self.adam.step_count.max(1)),
        };
        self.ckpt.metrics.push(metric.clone());

        match &self.best {
            Some((best_ppl, _)) if valid_ppl >= *best_ppl => self.bad_streak += 1,
            _ => {
                self.best = Some((valid_ppl, self.ckpt.model.clone()));
                self.bad_streak = 0;
            }
        }
        if valid_ppl > self.initial_ppl {
            self.above_initial_streak += 1;
        } else {
            self.above_initial_streak = 0;
        }
        metric
    }

    /// Consume the trainer: install the best-validation parameters, record
    /// provenance, and return the checkpoint. Divergence is an error.
    pub fn finish(mut self) -> Result<Checkpoint, ModelError> {
        if self.diverged() {
            let last = self.ckpt.metrics.last().map(|m| m.valid_ppl).unwrap_or(f64::NAN);
            return Err(ModelError::Diverged {
                initial: self.initial_ppl,
                last,
                epochs: self.above_initial_streak,
            });
        }
        if let Some((ppl, model)) = self.best {
            self.ckpt.model = model;
            self.ckpt.best_valid_ppl = Some(ppl);
        }
        self.ckpt.train_config = Some(self.tcfg);
        self.ckpt.provenance.push(ProvenanceEntry {
            corpus_id: self.corpus_id,
            ordering: self.corpus_ordering,
            stage: self.stage,
        });
        Ok(self.ckpt)
    }

    pub fn export_state(&self) -> TrainState {
        let (adam_step, adam_m, adam_v) = self.adam.export_state();
        TrainState {
            epoch: self.epoch,
            updates: self.ckpt.updates,
            initial_ppl: self.initial_ppl,
            bad_streak: self.bad_streak,
            above_initial_streak: self.above_initial_streak,
            adam_step,
            adam_m,
            adam_v,
            best_valid_ppl: self.best.as_ref().map(|(p, _)| *p),
            best_params: self.best.as_ref().map(|(_, m)| {
                m.params().iter().map(|p| p.w.iter().copied().collect()).collect()
            }),
        }
    }

    /// Restore a trainer from a checkpoint holding the *last* parameters
    /// plus the exported state.
    pub fn import_state(&mut self, state: TrainState) {
        let shapes: Vec<(usize, usize)> =
            self.ckpt.model.params().iter().map(|p| p.w.dim()).collect();
        self.epoch = state.epoch;
        self.ckpt.updates = state.updates;
        self.initial_ppl = state.initial_ppl;
        self.bad_streak = state.bad_streak;
        self.above_initial_streak = state.above_initial_streak;
        if !state.adam_m.is_empty() {
            self.adam.import_state(state.adam_step, state.adam_m, state.adam_v, &shapes);
        }
        if let (Some(ppl), Some(flat)) = (state.best_valid_ppl, state.best_params) {
            let mut best = self.ckpt.model.clone();
            for (p, vals) in best.params_mut().into_iter().zip(flat) {
                for (slot, v) in p.w.iter_mut().zip(vals) {
                    *slot = v;
                }
            }
            self.best = Some((ppl, best));
        }
    }
}

/// Train to convergence under the early-stopping rule, logging one JSON
/// line per epoch when `log` is given.
pub fn train_dialog_model(
    ckpt: Checkpoint,
    corpus: &DialogCorpus,
    valid: &DialogCorpus,
    vocab: &Vocabulary,
    tcfg: TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<Checkpoint, ModelError> {
    let stage = if ckpt.provenance.is_empty() { "train" } else { "continue" };
    let mut trainer = Trainer::new(ckpt, corpus, valid, vocab, tcfg, stage)?;
    while !trainer.done() {
        let m = trainer.run_epoch();
        if let Some(log) = log.as_deref_mut() {
            let line = serde_json::to_string(&m).expect("metric serializes");
            let _ = writeln!(log, "{line}");
        }
    }
    trainer.finish()
}

/// Continue optimization of an already-trained checkpoint on a new corpus.
pub fn finetune(
    ckpt: Checkpoint,
    corpus: &DialogCorpus,
    valid: &DialogCorpus,
    vocab: &Vocabulary,
    tcfg: TrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<Checkpoint, ModelError> {
    if ckpt.provenance.is_empty() {
        return Err(ModelError::Untrained);
    }
    if ckpt.vocab_hash != vocab.hash() {
        return Err(ModelError::VocabMismatch {
            expected: ckpt.vocab_hash.clone(),
            actual: vocab.hash(),
        });
    }
    let mut trainer = Trainer::new(ckpt, corpus, valid, vocab, tcfg, "finetune")?;
    let mut log = log;
    while !trainer.done() {
        let m = trainer.run_epoch();
        if let Some(log) = log.as_deref_mut() {
            let line = serde_json::to_string(&m).expect("metric serializes");
            let _ = writeln!(log, "{line}");
        }
    }
    trainer.finish()
}
