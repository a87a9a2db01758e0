//! Dialog corpora: loading, normalization, perturbation and vocabularies.

pub mod vocab;

pub use vocab::{build_vocabulary, split_tokens, tokenize, SizeClass, Vocabulary};

use crate::hashing::sha256_file;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("utterance is blank after tokenization: {0:?}")]
    BlankUtterance(String),
    #[error("malformed record in {path} at line {line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
    #[error("manifest mismatch for split {split}: manifest says {expected} conversations, found {actual}")]
    ManifestMismatch { split: String, expected: usize, actual: usize },
    #[error("vocabulary max_size {max_size} is smaller than the {specials} special tokens")]
    VocabTooSmall { max_size: usize, specials: usize },
    #[error("{0}")]
    EmptyInput(String),
    #[error("corpus is already shuffled (seed {0}); shuffling requires ordered input")]
    AlreadyShuffled(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Valid => write!(f, "valid"),
            Split::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    Ordered,
    Shuffled,
}

/// One speaker turn: token ids under a fixed vocabulary plus the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub tokens: Vec<u32>,
    pub raw_text: String,
}

/// An ordered multi-turn conversation with optional labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    pub id: String,
    pub utterances: Vec<Utterance>,
    /// Conversation-level label, e.g. a topic.
    pub conv_label: Option<String>,
    /// Per-utterance label maps, aligned with `utterances` when present.
    pub turn_labels: Option<Vec<BTreeMap<String, String>>>,
}

impl Conversation {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct DialogCorpus {
    pub split: Split,
    pub conversations: Vec<Conversation>,
    pub source_id: String,
    pub ordering: Ordering,
    pub shuffle_seed: Option<u64>,
}

/// Per-split record in a corpus `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitEntry {
    pub conversations: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub source_id: String,
    pub splits: BTreeMap<String, SplitEntry>,
}

#[derive(Serialize, Deserialize)]
struct TurnRecord {
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<BTreeMap<String, String>>,
}

#[derive(Serialize, Deserialize)]
struct ConversationRecord {
    id: String,
    topic: Option<String>,
    turns: Vec<TurnRecord>,
}

fn split_file_name(split: Split, ordering: Ordering, shuffle_seed: Option<u64>) -> String {
    match ordering {
        Ordering::Ordered => format!("{split}.jsonl"),
        Ordering::Shuffled => {
            format!("{split}.jsonl.shuffled.seed{}", shuffle_seed.expect("shuffled corpus has a seed"))
        }
    }
}

/// Load one split of a normalized dialog corpus from `dir`.
///
/// Expects one JSON-lines file per split plus a `manifest.json` recording
/// conversation counts; a count mismatch is an error.
pub fn load_dialog_corpus(
    dir: &Path,
    split: Split,
    vocab: &Vocabulary,
) -> Result<DialogCorpus, CorpusError> {
    load_dialog_corpus_variant(dir, split, Ordering::Ordered, None, vocab)
}

/// Load a specific ordered/shuffled variant of a corpus split.
pub fn load_dialog_corpus_variant(
    dir: &Path,
    split: Split,
    ordering: Ordering,
    shuffle_seed: Option<u64>,
    vocab: &Vocabulary,
) -> Result<DialogCorpus, CorpusError> {
    let path = dir.join(split_file_name(split, ordering, shuffle_seed));
    let manifest = read_manifest(dir)?;
    let file = std::fs::File::open(&path)
        .map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);

    let mut conversations = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ConversationRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                path: path.display().to_string(),
                line: lineno + 1,
                reason: e.to_string(),
            })?;
        if record.turns.is_empty() {
            return Err(CorpusError::Malformed {
                path: path.display().to_string(),
                line: lineno + 1,
                reason: "conversation has no turns".into(),
            });
        }
        let mut utterances = Vec::with_capacity(record.turns.len());
        let mut labels = Vec::with_capacity(record.turns.len());
        let mut any_labels = false;
        for turn in &record.turns {
            let utt = tokenize(&turn.text, vocab).map_err(|e| CorpusError::Malformed {
                path: path.display().to_string(),
                line: lineno + 1,
                reason: e.to_string(),
            })?;
            utterances.push(utt);
            if let Some(l) = &turn.labels {
                any_labels = true;
                labels.push(l.clone());
            } else {
                labels.push(BTreeMap::new());
            }
        }
        conversations.push(Conversation {
            id: record.id,
            utterances,
            conv_label: record.topic,
            turn_labels: if any_labels { Some(labels) } else { None },
        });
    }

    if let Some(entry) = manifest.splits.get(&split.to_string()) {
        if ordering == Ordering::Ordered && entry.conversations != conversations.len() {
            return Err(CorpusError::ManifestMismatch {
                split: split.to_string(),
                expected: entry.conversations,
                actual: conversations.len(),
            });
        }
    }

    Ok(DialogCorpus {
        split,
        conversations,
        source_id: manifest.source_id,
        ordering,
        shuffle_seed,
    })
}

fn read_manifest(dir: &Path) -> Result<CorpusManifest, CorpusError> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Ok(CorpusManifest::default());
    }
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| CorpusError::Malformed {
        path: path.display().to_string(),
        line: 0,
        reason: e.to_string(),
    })
}

/// Write one split of a corpus into `dir` as JSON-lines and update the
/// manifest with its count and checksum.
pub fn save_dialog_corpus(corpus: &DialogCorpus, dir: &Path) -> Result<(), CorpusError> {
    std::fs::create_dir_all(dir).map_err(|e| CorpusError::Io(dir.display().to_string(), e))?;
    let path = dir.join(split_file_name(corpus.split, corpus.ordering, corpus.shuffle_seed));
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(&path).map_err(|e| CorpusError::Io(path.display().to_string(), e))?,
    );
    for conv in &corpus.conversations {
        let record = ConversationRecord {
            id: conv.id.clone(),
            topic: conv.conv_label.clone(),
            turns: conv
                .utterances
                .iter()
                .enumerate()
                .map(|(i, u)| TurnRecord {
                    text: u.raw_text.clone(),
                    labels: conv
                        .turn_labels
                        .as_ref()
                        .and_then(|ls| ls.get(i))
                        .filter(|m| !m.is_empty())
                        .cloned(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &record)
            .map_err(|e| CorpusError::Malformed { path: path.display().to_string(), line: 0, reason: e.to_string() })?;
        out.write_all(b"\n").map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
    }
    out.flush().map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
    drop(out);

    let mut manifest = read_manifest(dir)?;
    manifest.source_id = corpus.source_id.clone();
    let key = match corpus.ordering {
        Ordering::Ordered => corpus.split.to_string(),
        Ordering::Shuffled => format!(
            "{}.shuffled.seed{}",
            corpus.split,
            corpus.shuffle_seed.expect("shuffled corpus has a seed")
        ),
    };
    manifest.splits.insert(
        key,
        SplitEntry {
            conversations: corpus.conversations.len(),
            sha256: sha256_file(&path).map_err(|e| CorpusError::Io(path.display().to_string(), e))?,
        },
    );
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))
        .map_err(|e| CorpusError::Io(manifest_path.display().to_string(), e))?;
    Ok(())
}

/// Permute the utterance order inside every conversation.
///
/// Each conversation receives an independent uniformly random permutation
/// drawn from a stream seeded by `seed`; everything but the order is
/// preserved. Turn labels follow their utterances.
pub fn shuffle_conversations(corpus: &DialogCorpus, seed: u64) -> Result<DialogCorpus, CorpusError> {
    if corpus.ordering == Ordering::Shuffled {
        return Err(CorpusError::AlreadyShuffled(corpus.shuffle_seed.unwrap_or(0)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conversations = corpus
        .conversations
        .iter()
        .map(|conv| {
            let mut order: Vec<usize> = (0..conv.utterances.len()).collect();
            order.shuffle(&mut rng);
            Conversation {
                id: conv.id.clone(),
                utterances: order.iter().map(|&i| conv.utterances[i].clone()).collect(),
                conv_label: conv.conv_label.clone(),
                turn_labels: conv
                    .turn_labels
                    .as_ref()
                    .map(|ls| order.iter().map(|&i| ls[i].clone()).collect()),
            }
        })
        .collect();
    Ok(DialogCorpus {
        split: corpus.split,
        conversations,
        source_id: corpus.source_id.clone(),
        ordering: Ordering::Shuffled,
        shuffle_seed: Some(seed),
    })
}

/// Split article text into sentences on terminal punctuation followed by
/// whitespace. The terminal mark stays attached to its sentence.
pub fn split_sentences(paragraph: &str) -> Vec<String> {
    let chars: Vec<char> = paragraph.chars().collect();
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.get(i + 1).is_none_or(|n| n.is_whitespace()) {
            let s = current.trim().to_string();
            if !s.is_empty() {
                sentences.push(s);
            }
            current.clear();
        }
        i += 1;
    }
    let tail = current.trim().to_string();
    if !tail.is_empty() {
        sentences.push(tail);
    }
    sentences
}

/// Format a paragraph-delimited document corpus as pseudo-dialog: one
/// conversation per paragraph, one utterance per sentence.
///
/// Heading lines (`= Title =`) are skipped and paragraphs with fewer than
/// two sentences are dropped since they provide no next-utterance target.
pub fn wikitext_to_dialogs(
    path: &Path,
    split: Split,
    vocab: &Vocabulary,
) -> Result<DialogCorpus, CorpusError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CorpusError::Io(path.display().to_string(), e))?;
    let mut conversations = Vec::new();
    for (pi, para) in text.split("\n\n").enumerate() {
        let body: Vec<&str> = para
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !(l.starts_with('=') && l.ends_with('=')))
            .collect();
        if body.is_empty() {
            continue;
        }
        let joined = body.join(" ");
        let sentences = split_sentences(&joined);
        if sentences.len() < 2 {
            continue;
        }
        let mut utterances = Vec::with_capacity(sentences.len());
        for s in &sentences {
            match tokenize(s, vocab) {
                Ok(u) => utterances.push(u),
                Err(CorpusError::BlankUtterance(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        if utterances.len() < 2 {
            continue;
        }
        conversations.push(Conversation {
            id: format!("para-{pi}"),
            utterances,
            conv_label: None,
            turn_labels: None,
        });
    }
    Ok(DialogCorpus {
        split,
        conversations,
        source_id: "wikitext".into(),
        ordering: Ordering::Ordered,
        shuffle_seed: None,
    })
}

/// Raw daily-chat dataset layout: `dialogues_text.txt` plus
/// `dialogues_topic.txt` at the root (utterances separated by `__eou__`),
/// and per-split `{split}/dialogues_{split}.txt` files.
///
/// Topic labels are attached to split conversations by exact-text lookup
/// into the root file.
pub fn ingest_dailydialog_raw(
    raw_dir: &Path,
    split: Split,
    vocab: &Vocabulary,
) -> Result<DialogCorpus, CorpusError> {
    const TOPICS: [&str; 10] = [
        "ordinary life",
        "school life",
        "culture and education",
        "attitude and emotion",
        "relationship",
        "tourism",
        "health",
        "work",
        "politics",
        "finance",
    ];
    let split_name = match split {
        Split::Train => "train",
        Split::Valid => "validation",
        Split::Test => "test",
    };
    let text_path = raw_dir.join(split_name).join(format!("dialogues_{split_name}.txt"));
    let text = std::fs::read_to_string(&text_path)
        .map_err(|e| CorpusError::Io(text_path.display().to_string(), e))?;

    // topic lookup from the root files, when present
    let mut topic_by_text: std::collections::HashMap<String, String> = Default::default();
    let all_text = raw_dir.join("dialogues_text.txt");
    let all_topic = raw_dir.join("dialogues_topic.txt");
    if all_text.exists() && all_topic.exists() {
        let texts = std::fs::read_to_string(&all_text)
            .map_err(|e| CorpusError::Io(all_text.display().to_string(), e))?;
        let topics = std::fs::read_to_string(&all_topic)
            .map_err(|e| CorpusError::Io(all_topic.display().to_string(), e))?;
        for (line, topic) in texts.lines().zip(topics.lines()) {
            let idx: usize = topic.trim().parse().map_err(|_| CorpusError::Malformed {
                path: all_topic.display().to_string(),
                line: 0,
                reason: format!("topic id {topic:?} is not an integer"),
            })?;
            let name = TOPICS.get(idx.wrapping_sub(1)).ok_or_else(|| CorpusError::Malformed {
                path: all_topic.display().to_string(),
                line: 0,
                reason: format!("topic id {idx} out of range 1..=10"),
            })?;
            topic_by_text.entry(line.trim().to_string()).or_insert_with(|| name.to_string());
        }
    }

    let mut conversations = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut utterances = Vec::new();
        for piece in line.split("__eou__") {
            let piece = piece.trim();
            if piece.is_empty() {
                continue;
            }
            utterances.push(tokenize(piece, vocab).map_err(|e| CorpusError::Malformed {
                path: text_path.display().to_string(),
                line: lineno + 1,
                reason: e.to_string(),
            })?);
        }
        if utterances.is_empty() {
            return Err(CorpusError::Malformed {
                path: text_path.display().to_string(),
                line: lineno + 1,
                reason: "conversation has no utterances".into(),
            });
        }
        conversations.push(Conversation {
            id: format!("dd-{split_name}-{lineno}"),
            utterances,
            conv_label: topic_by_text.get(line.trim()).cloned(),
            turn_labels: None,
        });
    }
    Ok(DialogCorpus {
        split,
        conversations,
        source_id: "dailydialog".into(),
        ordering: Ordering::Ordered,
        shuffle_seed: None,
    })
}
