//! Model-level correctness checks: analytic gradients against finite
//! differences, memorization on a degenerate corpus, near-uniform initial
//! perplexity, and freeze invariance.

use convprobe::corpus::{
    build_vocabulary, tokenize, Conversation, DialogCorpus, Ordering, SizeClass, Split, Utterance,
    Vocabulary,
};
use convprobe::model::{
    build_model, encode, evaluate_perplexity, gradient_check, train_dialog_model, Architecture,
    ModelConfig, Pair, Profile, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config(arch: Architecture) -> ModelConfig {
    let mut cfg = ModelConfig::preset(arch, SizeClass::Small, Profile::Desk);
    cfg.hidden_size = 6;
    cfg.embedding_size = 8;
    cfg.ffn_size = 10;
    cfg.attention_heads = 2;
    cfg.dropout = 0.0;
    cfg.max_positions = 32;
    cfg
}

fn tiny_vocab() -> Vocabulary {
    build_vocabulary(
        ["alpha beta gamma delta epsilon zeta eta theta iota kappa"],
        1,
        15,
        SizeClass::Small,
    )
    .unwrap()
}

#[test]
fn gradient_check_all_architectures() {
    let vocab = tiny_vocab();
    let pair = Pair { src: vec![5, 6, 4, 7, 8, 4, 9], tgt: vec![10, 5, 11] };
    for arch in Architecture::all() {
        let cfg = tiny_config(arch);
        let mut ckpt = build_model(&cfg, &vocab, 17).unwrap();
        let report = gradient_check(&mut ckpt, &pair);
        for (name, rel) in &report {
            assert!(
                *rel < 1e-4,
                "{}: tensor {name} worst relative error {rel:.3e} exceeds 1e-4",
                arch.as_str()
            );
        }
    }
}

fn utt(text: &str, vocab: &Vocabulary) -> Utterance {
    tokenize(text, vocab).unwrap()
}

fn random_corpus(
    vocab: &Vocabulary,
    n_convs: usize,
    split: Split,
    seed: u64,
) -> DialogCorpus {
    let words = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conversations = (0..n_convs)
        .map(|i| {
            let n_utts = rng.gen_range(2..5);
            let utterances = (0..n_utts)
                .map(|_| {
                    let n_words = rng.gen_range(2..6);
                    let text = (0..n_words)
                        .map(|_| words[rng.gen_range(0..words.len())])
                        .collect::<Vec<_>>()
                        .join(" ");
                    utt(&text, vocab)
                })
                .collect();
            Conversation {
                id: format!("conv-{i}"),
                utterances,
                conv_label: None,
                turn_labels: None,
            }
        })
        .collect();
    DialogCorpus {
        split,
        conversations,
        source_id: "random-fixture".into(),
        ordering: Ordering::Ordered,
        shuffle_seed: None,
    }
}

#[test]
fn untrained_model_perplexity_is_near_vocab_size() {
    let vocab = tiny_vocab();
    let v = vocab.len() as f64;
    let test = random_corpus(&vocab, 30, Split::Test, 3);
    for arch in Architecture::all() {
        let cfg = tiny_config(arch);
        let ckpt = build_model(&cfg, &vocab, 99).unwrap();
        let ppl = evaluate_perplexity(&ckpt, &test).unwrap();
        assert!(
            (ppl - v).abs() / v < 0.05,
            "{}: untrained ppl {ppl:.2} not within 5% of vocab size {v}",
            arch.as_str()
        );
    }
}

#[test]
fn memorization_reaches_ppl_below_1_1() {
    let vocab = tiny_vocab();
    // one conversation, repeated; the model should drive PPL toward 1
    let base = Conversation {
        id: "memo".into(),
        utterances: vec![
            utt("alpha beta gamma", &vocab),
            utt("delta epsilon", &vocab),
            utt("zeta eta theta", &vocab),
        ],
        conv_label: None,
        turn_labels: None,
    };
    let corpus = DialogCorpus {
        split: Split::Train,
        conversations: vec![base.clone(); 16],
        source_id: "memo".into(),
        ordering: Ordering::Ordered,
        shuffle_seed: None,
    };
    let valid = DialogCorpus { split: Split::Valid, ..corpus.clone() };
    let mut cfg = tiny_config(Architecture::Rnn);
    cfg.hidden_size = 16;
    let ckpt = build_model(&cfg, &vocab, 7).unwrap();
    let tcfg = TrainConfig {
        learning_rate: 0.005,
        warmup_updates: 200,
        batch_size: 1,
        max_epochs: 50,
        gradient_clip: 1.0,
        seed: 5,
        patience: 50,
    };
    let trained = train_dialog_model(ckpt, &corpus, &valid, &vocab, tcfg, None).unwrap();
    let ppl = trained.best_valid_ppl.unwrap();
    assert!(ppl < 1.1, "memorization perplexity {ppl:.4} not below 1.1");
}

#[test]
fn training_loss_decreases_after_one_epoch() {
    let vocab = tiny_vocab();
    let corpus = random_corpus(&vocab, 60, Split::Train, 11);
    let valid = random_corpus(&vocab, 10, Split::Valid, 12);
    for arch in Architecture::all() {
        let cfg = tiny_config(arch);
        let ckpt = build_model(&cfg, &vocab, 1).unwrap();
        let tcfg = TrainConfig {
            learning_rate: if arch == Architecture::Transformer { 0.001 } else { 0.005 },
            warmup_updates: 10,
            batch_size: 8,
            max_epochs: 1,
            gradient_clip: 1.0,
            seed: 2,
            patience: 3,
        };
        let initial_loss = {
            let pairs = convprobe::model::corpus_pairs(&corpus, cfg.max_positions);
            let nll: f64 = pairs.iter().map(|p| ckpt.model.pair_nll(p)).sum();
            let count: usize = pairs.iter().map(|p| p.target_tokens()).sum();
            nll / count as f64
        };
        let trained = train_dialog_model(ckpt, &corpus, &valid, &vocab, tcfg, None).unwrap();
        let after = trained.metrics.last().unwrap().train_loss;
        assert!(
            after < initial_loss,
            "{}: loss after epoch 1 ({after:.3}) not below initial ({initial_loss:.3})",
            arch.as_str()
        );
    }
}

#[test]
fn divergent_learning_rate_aborts() {
    let vocab = tiny_vocab();
    let corpus = random_corpus(&vocab, 20, Split::Train, 21);
    let valid = random_corpus(&vocab, 8, Split::Valid, 22);
    let cfg = tiny_config(Architecture::Rnn);
    let ckpt = build_model(&cfg, &vocab, 1).unwrap();
    // absurd learning rate forces validation perplexity above its initial value
    let tcfg = TrainConfig {
        learning_rate: 500.0,
        warmup_updates: 1,
        batch_size: 8,
        max_epochs: 10,
        gradient_clip: 1e9,
        seed: 2,
        patience: 2,
    };
    let result = train_dialog_model(ckpt, &corpus, &valid, &vocab, tcfg, None);
    assert!(
        matches!(result, Err(convprobe::model::ModelError::Diverged { .. })),
        "expected divergence abort, got {result:?}"
    );
}

#[test]
fn encode_alignment_and_freeze_semantics() {
    let vocab = tiny_vocab();
    let cfg = tiny_config(Architecture::Rnn);
    let mut ckpt = build_model(&cfg, &vocab, 3).unwrap();
    let history = vec![utt("alpha beta gamma", &vocab), utt("delta epsilon zeta eta", &vocab)];

    // extraction before freezing is rejected
    assert!(matches!(
        encode(&ckpt, &history),
        Err(convprobe::model::ModelError::NotFrozen)
    ));
    ckpt.freeze();
    let out = encode(&ckpt, &history).unwrap();
    assert_eq!(out.per_token_states.nrows(), 3 + 1 + 4);
    assert_eq!(out.boundary_ranges, vec![(0, 3), (4, 8)]);
    assert_eq!(out.separator_positions, vec![3]);
    assert!(!out.truncated);
    // recurrent: one final vector per (layer x direction)
    assert_eq!(out.final_hidden.as_ref().unwrap().len(), 2 * cfg.encoder_layers);
    assert_eq!(out.final_cell.as_ref().unwrap().len(), 2 * cfg.encoder_layers);

    // repeated encodes are identical
    let out2 = encode(&ckpt, &history).unwrap();
    assert_eq!(out.per_token_states, out2.per_token_states);
}

#[test]
fn extraction_pass_leaves_parameters_bitwise_unchanged() {
    let vocab = tiny_vocab();
    let corpus = random_corpus(&vocab, 500, Split::Train, 31);
    let cfg = tiny_config(Architecture::RnnAttn);
    let mut ckpt = build_model(&cfg, &vocab, 13).unwrap();
    ckpt.freeze();
    let before = ckpt.params_hash();
    let mut encoded = 0;
    'outer: for conv in &corpus.conversations {
        for t in 1..=conv.utterances.len() {
            encode(&ckpt, &conv.utterances[..t]).unwrap();
            encoded += 1;
            if encoded >= 1000 {
                break 'outer;
            }
        }
    }
    assert!(encoded >= 1000, "fixture too small, only {encoded} encode calls");
    assert_eq!(before, ckpt.params_hash(), "parameters changed during extraction");
}

#[test]
fn all_unk_target_nll_is_finite() {
    let vocab = tiny_vocab();
    for arch in Architecture::all() {
        let cfg = tiny_config(arch);
        let ckpt = build_model(&cfg, &vocab, 23).unwrap();
        let pair = Pair { src: vec![1, 1, 1], tgt: vec![1, 1, 1, 1] };
        let nll = ckpt.model.pair_nll(&pair);
        assert!(nll.is_finite(), "{}: all-unk NLL not finite", arch.as_str());
    }
}

#[test]
fn transformer_truncates_and_flags_long_histories() {
    let vocab = tiny_vocab();
    let mut cfg = tiny_config(Architecture::Transformer);
    cfg.max_positions = 12;
    let mut ckpt = build_model(&cfg, &vocab, 29).unwrap();
    ckpt.freeze();
    let history: Vec<Utterance> =
        (0..6).map(|_| utt("alpha beta gamma delta", &vocab)).collect();
    let out = encode(&ckpt, &history).unwrap();
    assert!(out.truncated);
    assert_eq!(out.per_token_states.nrows(), 12);
    // ranges stay within the truncated window
    for (s, e) in &out.boundary_ranges {
        assert!(e <= &12 && s < e);
    }
}

#[test]
fn identical_seeds_give_identical_models() {
    let vocab = tiny_vocab();
    for arch in Architecture::all() {
        let cfg = tiny_config(arch);
        let a = build_model(&cfg, &vocab, 55).unwrap();
        let b = build_model(&cfg, &vocab, 55).unwrap();
        for (pa, pb) in a.model.params().iter().zip(b.model.params()) {
            assert_eq!(pa.w, pb.w, "{}: param {} differs across builds", arch.as_str(), pa.name);
        }
    }
}
