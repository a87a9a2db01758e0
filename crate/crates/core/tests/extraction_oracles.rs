//! Extraction vectors must match independent brute-force recomputation.

use convprobe::corpus::{build_vocabulary, tokenize, SizeClass, Vocabulary};
use convprobe::extract::{
    extract_encoder_state, extract_with_strategy, oracle, pretrained_baseline, Strategy,
    VectorTable,
};
use convprobe::model::{build_model, encode, Architecture, Checkpoint, ModelConfig, Profile};
use convprobe::tasks::{ProbeExample, TaskId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 12] = [
    "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa",
    "lambda", "mu",
];

fn vocab() -> Vocabulary {
    build_vocabulary([WORDS.join(" ").as_str()], 1, 100, SizeClass::Small).unwrap()
}

fn frozen_model(arch: Architecture, vocab: &Vocabulary) -> Checkpoint {
    let mut cfg = ModelConfig::preset(arch, SizeClass::Small, Profile::Desk);
    cfg.hidden_size = 6;
    cfg.embedding_size = 8;
    cfg.attention_heads = 2;
    cfg.ffn_size = 9;
    cfg.dropout = 0.0;
    cfg.max_positions = 64;
    let mut ckpt = build_model(&cfg, vocab, 311).unwrap();
    ckpt.freeze();
    ckpt
}

fn random_example(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> ProbeExample {
    let n_history = rng.gen_range(0..4);
    let mk = |rng: &mut ChaCha8Rng| {
        let n = rng.gen_range(1..6);
        let text =
            (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ");
        tokenize(&text, vocab).unwrap()
    };
    ProbeExample {
        history: (0..n_history).map(|_| mk(rng)).collect(),
        current: mk(rng),
        label: 0,
        task: TaskId::Snips,
    }
}

#[test]
fn oracle_equivalence_over_100_examples_per_cell() {
    let vocab = vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for arch in Architecture::all() {
        let ckpt = frozen_model(arch, &vocab);
        for strategy in Strategy::model_strategies() {
            let mut checked = 0;
            for i in 0..100 {
                let ex = random_example(&mut rng, &vocab);
                let fv = extract_with_strategy(&ckpt, &ex, i, strategy).unwrap();
                let expected = match strategy {
                    Strategy::WordEmbeddings => {
                        oracle::word_embeddings(ckpt.model.embedding_table(), &ex)
                    }
                    Strategy::EncoderState => {
                        let mut input = ex.history.clone();
                        input.push(ex.current.clone());
                        let out = encode(&ckpt, &input).unwrap();
                        oracle::encoder_state(&ckpt, &out)
                    }
                    Strategy::Combined => {
                        let mut v = oracle::word_embeddings(ckpt.model.embedding_table(), &ex);
                        let mut input = ex.history.clone();
                        input.push(ex.current.clone());
                        let out = encode(&ckpt, &input).unwrap();
                        v.extend(oracle::encoder_state(&ckpt, &out));
                        v
                    }
                    Strategy::PretrainedBaseline => unreachable!(),
                };
                assert_eq!(fv.dim(), expected.len(), "{arch:?}/{strategy:?} dim mismatch");
                for (j, (a, b)) in fv.values.iter().zip(&expected).enumerate() {
                    assert!(
                        (a - b).abs() < 1e-5,
                        "{arch:?}/{strategy:?} example {i} dim {j}: {a} vs {b}"
                    );
                }
                checked += 1;
            }
            assert_eq!(checked, 100);
        }
    }
}

#[test]
fn baseline_matches_word_embedding_oracle() {
    let vocab = vocab();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vectors.txt");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut lines = String::new();
    for w in &WORDS[..9] {
        // leave three words out of the table
        let vals: Vec<String> = (0..5).map(|_| format!("{:.6}", rng.gen_range(-1.0..1.0))).collect();
        lines.push_str(&format!("{w} {}\n", vals.join(" ")));
    }
    std::fs::write(&path, lines).unwrap();
    let table = VectorTable::load(&path, &vocab).unwrap();
    for i in 0..100 {
        let ex = random_example(&mut rng, &vocab);
        let fv = pretrained_baseline(&ex, &table, i).unwrap();
        let expected = oracle::word_embeddings(table.table(), &ex);
        for (a, b) in fv.values.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}

#[test]
fn dimension_stability_across_examples() {
    let vocab = vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for arch in Architecture::all() {
        let ckpt = frozen_model(arch, &vocab);
        for strategy in Strategy::model_strategies() {
            let dims: Vec<usize> = (0..20)
                .map(|i| {
                    let ex = random_example(&mut rng, &vocab);
                    extract_with_strategy(&ckpt, &ex, i, strategy).unwrap().dim()
                })
                .collect();
            assert!(dims.windows(2).all(|w| w[0] == w[1]), "{arch:?}/{strategy:?}: {dims:?}");
        }
    }
}

#[test]
fn expected_dims_per_architecture() {
    let vocab = vocab();
    let ex = ProbeExample {
        history: vec![tokenize("alpha beta", &vocab).unwrap()],
        current: tokenize("gamma", &vocab).unwrap(),
        label: 0,
        task: TaskId::Snips,
    };
    let h = 6;
    let e = 8;
    let cases = [
        (Architecture::Rnn, 2 * e, 4 * h),
        (Architecture::RnnAttn, 2 * e, 6 * h),
        (Architecture::Transformer, 2 * e, 2 * e),
    ];
    for (arch, we_dim, es_dim) in cases {
        let ckpt = frozen_model(arch, &vocab);
        let we = extract_with_strategy(&ckpt, &ex, 0, Strategy::WordEmbeddings).unwrap();
        let es = extract_with_strategy(&ckpt, &ex, 0, Strategy::EncoderState).unwrap();
        let comb = extract_with_strategy(&ckpt, &ex, 0, Strategy::Combined).unwrap();
        assert_eq!(we.dim(), we_dim, "{arch:?} word-embedding dim");
        assert_eq!(es.dim(), es_dim, "{arch:?} encoder-state dim");
        assert_eq!(comb.dim(), we_dim + es_dim, "{arch:?} combined dim");
    }
}

#[test]
fn history_permutation_changes_recurrent_encoder_state() {
    let vocab = vocab();
    for arch in [Architecture::Rnn, Architecture::RnnAttn] {
        let ckpt = frozen_model(arch, &vocab);
        let a = ProbeExample {
            history: vec![
                tokenize("alpha beta gamma", &vocab).unwrap(),
                tokenize("delta epsilon", &vocab).unwrap(),
                tokenize("zeta eta", &vocab).unwrap(),
            ],
            current: tokenize("theta iota", &vocab).unwrap(),
            label: 0,
            task: TaskId::Snips,
        };
        let mut b = a.clone();
        b.history.swap(0, 2);
        let fa = extract_encoder_state(&ckpt, &a, 0).unwrap();
        let fb = extract_encoder_state(&ckpt, &b, 0).unwrap();
        let max_diff = fa
            .values
            .iter()
            .zip(&fb.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(
            max_diff > 1e-8,
            "{arch:?}: permuting history left the encoder-state vector unchanged"
        );
    }
}

#[test]
fn separator_positions_are_excluded_from_means() {
    let vocab = vocab();
    let ckpt = frozen_model(Architecture::Transformer, &vocab);
    let ex = ProbeExample {
        history: vec![
            tokenize("alpha beta", &vocab).unwrap(),
            tokenize("gamma delta", &vocab).unwrap(),
        ],
        current: tokenize("epsilon", &vocab).unwrap(),
        label: 0,
        task: TaskId::Snips,
    };
    let fv = extract_encoder_state(&ckpt, &ex, 0).unwrap();

    // recompute the history mean with separators included; it must differ
    let mut input = ex.history.clone();
    input.push(ex.current.clone());
    let out = encode(&ckpt, &input).unwrap();
    assert!(!out.separator_positions.is_empty());
    let hist_end = out.boundary_ranges[out.boundary_ranges.len() - 2].1;
    let with_seps: Vec<usize> = (0..hist_end).collect(); // includes separator at position 2
    let dim = out.per_token_states.ncols();
    let mut mean = vec![0.0; dim];
    for &p in &with_seps {
        for (m, v) in mean.iter_mut().zip(out.per_token_states.row(p)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= with_seps.len() as f64;
    }
    let diff: f64 =
        fv.values[..dim].iter().zip(&mean).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff > 1e-9, "including separators did not change the mean; exclusion inactive?");
}
