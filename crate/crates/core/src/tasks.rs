//! The eight conversational-understanding probing tasks, normalized into a
//! single example schema: (history utterances, current utterance, label).
//!
//! Each loader parses its dataset's native on-disk layout and emits a
//! [`ProbeTask`] with fixed train/valid/test splits and a deterministic
//! class inventory. Sources without a validation split get 10% of train
//! carved off with a fixed seed.

use crate::corpus::{tokenize, DialogCorpus, Split, Utterance, Vocabulary};
use crate::hashing::sha256_hex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Seed for every deterministic split decision in this module.
const SPLIT_SEED: u64 = 20200407;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("i/o error on {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("malformed record in {path} at line {line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
    #[error("unknown label {label:?} in {path}")]
    UnknownLabel { path: String, label: String },
    #[error("task {task} has no examples in split {split}")]
    EmptySplit { task: String, split: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    Trec,
    Dnli,
    Mwoz,
    Sgd,
    Snips,
    Wnli,
    Ssa,
    Topic,
}

impl TaskId {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskId::Trec => "trec",
            TaskId::Dnli => "dnli",
            TaskId::Mwoz => "mwoz",
            TaskId::Sgd => "sgd",
            TaskId::Snips => "snips",
            TaskId::Wnli => "wnli",
            TaskId::Ssa => "ssa",
            TaskId::Topic => "topic",
        }
    }

    pub fn all() -> [TaskId; 8] {
        [
            TaskId::Trec,
            TaskId::Dnli,
            TaskId::Mwoz,
            TaskId::Sgd,
            TaskId::Snips,
            TaskId::Wnli,
            TaskId::Ssa,
            TaskId::Topic,
        ]
    }

    pub fn parse(s: &str) -> Option<TaskId> {
        TaskId::all().into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Turn,
    Conversation,
}

#[derive(Debug, Clone)]
pub struct ProbeExample {
    pub history: Vec<Utterance>,
    pub current: Utterance,
    pub label: u32,
    pub task: TaskId,
}

#[derive(Debug, Clone)]
pub struct ProbeTask {
    pub id: TaskId,
    pub class_names: Vec<String>,
    pub train: Vec<ProbeExample>,
    pub valid: Vec<ProbeExample>,
    pub test: Vec<ProbeExample>,
    pub granularity: Granularity,
    /// Records skipped for missing/blank/unknown annotations.
    pub skipped: usize,
}

impl ProbeTask {
    pub fn split(&self, split: Split) -> &[ProbeExample] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    /// Per-class counts over one split.
    pub fn label_histogram(&self, split: Split) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_names.len()];
        for ex in self.split(split) {
            counts[ex.label as usize] += 1;
        }
        counts
    }

    /// Every class must appear in train; splits must not share examples.
    pub fn check_invariants(&self) -> Result<(), String> {
        let hist = self.label_histogram(Split::Train);
        for (i, c) in hist.iter().enumerate() {
            if *c == 0 {
                return Err(format!("class {} absent from train", self.class_names[i]));
            }
        }
        let key = |ex: &ProbeExample| {
            let joined: Vec<&str> = ex.history.iter().map(|u| u.raw_text.as_str()).collect();
            sha256_hex(format!("{}\u{1}{}", joined.join("\u{2}"), ex.current.raw_text).as_bytes())
        };
        let train: HashSet<String> = self.train.iter().map(key).collect();
        for (name, split) in [("valid", &self.valid), ("test", &self.test)] {
            for ex in split.iter() {
                if train.contains(&key(ex)) {
                    return Err(format!("{name} split shares an example with train"));
                }
            }
        }
        Ok(())
    }
}

/// Raw string-level example before tokenization.
#[derive(Debug, Clone)]
struct RawExample {
    history: Vec<String>,
    current: String,
    label: String,
}

struct RawTask {
    id: TaskId,
    granularity: Granularity,
    train: Vec<RawExample>,
    valid: Vec<RawExample>,
    test: Vec<RawExample>,
    /// Fixed class inventory; when empty it is enumerated from train.
    classes: Vec<String>,
    skipped: usize,
}

fn io_err(path: &Path, e: std::io::Error) -> TaskError {
    TaskError::Io(path.display().to_string(), e)
}

fn read_text(path: &Path) -> Result<String, TaskError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Read a file that may be Latin-1 encoded (the question-classification
/// source files are); bytes above ASCII map directly to code points.
fn read_text_latin1(path: &Path) -> Result<String, TaskError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    match String::from_utf8(bytes) {
        Ok(s) => Ok(s),
        Err(e) => Ok(e.into_bytes().iter().map(|&b| b as char).collect()),
    }
}

/// Seeded 90/10 carve of a validation split out of train.
fn carve_valid(train: &mut Vec<RawExample>, seed: u64) -> Vec<RawExample> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_valid = (train.len() / 10).max(1);
    let valid_idx: HashSet<usize> = order.into_iter().take(n_valid).collect();
    let mut valid = Vec::with_capacity(n_valid);
    let mut kept = Vec::with_capacity(train.len() - n_valid);
    for (i, ex) in train.drain(..).enumerate() {
        if valid_idx.contains(&i) {
            valid.push(ex);
        } else {
            kept.push(ex);
        }
    }
    *train = kept;
    valid
}

fn finalize(raw: RawTask, vocab: &Vocabulary) -> Result<ProbeTask, TaskError> {
    let mut classes = raw.classes;
    if classes.is_empty() {
        let set: BTreeSet<&str> = raw.train.iter().map(|e| e.label.as_str()).collect();
        classes = set.into_iter().map(String::from).collect();
    }
    let class_of = |label: &str| classes.iter().position(|c| c == label);
    let mut skipped = raw.skipped;
    let mut build = |examples: &[RawExample]| -> Vec<ProbeExample> {
        let mut out = Vec::with_capacity(examples.len());
        for ex in examples {
            let Some(label) = class_of(&ex.label) else {
                skipped += 1;
                continue;
            };
            let Ok(current) = tokenize(&ex.current, vocab) else {
                skipped += 1;
                continue;
            };
            let mut history = Vec::with_capacity(ex.history.len());
            let mut ok = true;
            for h in &ex.history {
                match tokenize(h, vocab) {
                    Ok(u) => history.push(u),
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                skipped += 1;
                continue;
            }
            out.push(ProbeExample { history, current, label: label as u32, task: raw.id });
        }
        out
    };
    let train = build(&raw.train);
    let valid = build(&raw.valid);
    let test = build(&raw.test);
    let task = ProbeTask {
        id: raw.id,
        class_names: classes,
        train,
        valid,
        test,
        granularity: raw.granularity,
        skipped,
    };
    for (name, split) in [("train", &task.train), ("valid", &task.valid), ("test", &task.test)] {
        if split.is_empty() {
            return Err(TaskError::EmptySplit { task: task.id.as_str().into(), split: name.into() });
        }
    }
    Ok(task)
}

/// CamelCase dataset identifiers become kebab-case class names
/// ("FindRestaurant" -> "find-restaurant").
fn kebab_case(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 4);
    for (i, c) in s.chars().enumerate() {
        if c.is_uppercase() {
            if i > 0 {
                out.push('-');
            }
            out.extend(c.to_lowercase());
        } else if c == '_' || c == ' ' {
            out.push('-');
        } else {
            out.push(c);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// question classification
// ---------------------------------------------------------------------------

/// Question-classification task: single questions labeled with their coarse
/// answer type. Layout: `train_5500.label` and `TREC_10.label`, one
/// `COARSE:fine question` per line.
pub fn load_trec(dir: &Path, vocab: &Vocabulary) -> Result<ProbeTask, TaskError> {
    let parse = |path: &Path| -> Result<Vec<RawExample>, TaskError> {
        let text = read_text_latin1(path)?;
        let mut out = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (label_part, question) =
                line.split_once(' ').ok_or_else(|| TaskError::Malformed {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    reason: "expected `LABEL question`".into(),
                })?;
            let coarse = label_part.split(':').next().unwrap_or(label_part);
            if coarse.is_empty() || !coarse.chars().all(|c| c.is_ascii_uppercase()) {
                return Err(TaskError::UnknownLabel {
                    path: path.display().to_string(),
                    label: label_part.to_string(),
                });
            }
            out.push(RawExample {
                history: Vec::new(),
                current: question.trim().to_string(),
                label: coarse.to_lowercase(),
            });
        }
        Ok(out)
    };
    let mut train = parse(&dir.join("train_5500.label"))?;
    let test = parse(&dir.join("TREC_10.label"))?;
    let valid = carve_valid(&mut train, SPLIT_SEED ^ 1);
    finalize(
        RawTask {
            id: TaskId::Trec,
            granularity: Granularity::Turn,
            train,
            valid,
            test,
            classes: Vec::new(),
            skipped: 0,
        },
        vocab,
    )
}

// ---------------------------------------------------------------------------
// dialog natural language inference
// ---------------------------------------------------------------------------

/// Rewrite first-person forms to second person so a premise/hypothesis pair
/// reads as two speakers. Token-boundary safe, case-preserving on the first
/// letter, and idempotent (no output form is itself rewritten).
pub fn second_person_text(text: &str) -> String {
    const TABLE: [(&str, &str); 7] = [
        ("i", "you"),
        ("me", "you"),
        ("my", "your"),
        ("mine", "yours"),
        ("am", "are"),
        ("i'm", "you're"),
        ("myself", "yourself"),
    ];
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 8);
    let mut i = 0;
    let is_word_char = |ch: char| ch.is_alphanumeric() || ch == '\'';
    while i < chars.len() {
        let c = chars[i];
        if is_word_char(c) {
            let start = i;
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let lower = word.to_lowercase();
            match TABLE.iter().find(|(from, _)| *from == lower) {
                Some((_, to)) => {
                    if word.chars().next().is_some_and(char::is_uppercase) {
                        let mut cs = to.chars();
                        if let Some(first) = cs.next() {
                            out.extend(first.to_uppercase());
                            out.push_str(cs.as_str());
                        }
                    } else {
                        out.push_str(to);
                    }
                }
                None => out.push_str(&word),
            }
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

/// Utterance-level wrapper around [`second_person_text`].
pub fn second_person_transform(u: &Utterance, vocab: &Vocabulary) -> Utterance {
    let text = second_person_text(&u.raw_text);
    tokenize(&text, vocab).unwrap_or_else(|_| u.clone())
}

/// Dialog-inference task: premise/hypothesis turn pairs labeled entail,
/// contradict or neutral. Layout: `dialogue_nli_{train,dev,test}.jsonl`,
/// either JSON lines or one JSON array.
pub fn load_dnli(dir: &Path, vocab: &Vocabulary) -> Result<ProbeTask, TaskError> {
    #[derive(Deserialize)]
    struct Record {
        sentence1: String,
        sentence2: String,
        label: Option<String>,
    }
    let mut skipped = 0usize;
    let mut parse = |path: &Path| -> Result<Vec<RawExample>, TaskError> {
        let text = read_text(path)?;
        let trimmed = text.trim_start();
        let records: Vec<Record> = if trimmed.starts_with('[') {
            serde_json::from_str(&text).map_err(|e| TaskError::Malformed {
                path: path.display().to_string(),
                line: 0,
                reason: e.to_string(),
            })?
        } else {
            let mut out = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                out.push(serde_json::from_str(line).map_err(|e| TaskError::Malformed {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    reason: e.to_string(),
                })?);
            }
            out
        };
        let mut out = Vec::new();
        for r in records {
            let label = match r.label.as_deref() {
                Some("positive") => "entail",
                Some("negative") => "contradict",
                Some("neutral") => "neutral",
                _ => {
                    skipped += 1;
                    continue;
                }
            };
            out.push(RawExample {
                history: vec![r.sentence1],
                current: second_person_text(&r.sentence2),
                label: label.into(),
            });
        }
        Ok(out)
    };
    let train = parse(&dir.join("dialogue_nli_train.jsonl"))?;
    let valid = parse(&dir.join("dialogue_nli_dev.jsonl"))?;
    let test = parse(&dir.join("dialogue_nli_test.jsonl"))?;
    finalize(
        RawTask {
            id: TaskId::Dnli,
            granularity: Granularity::Turn,
            train,
            valid,
            test,
            classes: vec!["contradict".into(), "entail".into(), "neutral".into()],
            skipped,
        },
        vocab,
    )
}

// ---------------------------------------------------------------------------
// dialog acts
// ---------------------------------------------------------------------------

/// Dialog-act task over goal-oriented dialogs: one example per annotated
/// human turn, labeled with its domain-act pair. Layout: `data.json` with
/// per-turn `dialog_act` maps plus `valListFile.txt` / `testListFile.txt`.
///
/// Multi-act turns take the first act listed in the source file.
pub fn load_multiwoz(dir: &Path, vocab: &Vocabulary) -> Result<ProbeTask, TaskError> {
    #[derive(Deserialize)]
    struct Turn {
        text: String,
        #[serde(default)]
        dialog_act: serde_json::Map<String, serde_json::Value>,
    }
    #[derive(Deserialize)]
    struct Dialog {
        log: Vec<Turn>,
    }
    let data_path = dir.join("data.json");
    let data: BTreeMap<String, Dialog> =
        serde_json::from_str(&read_text(&data_path)?).map_err(|e| TaskError::Malformed {
            path: data_path.display().to_string(),
            line: 0,
            reason: e.to_string(),
        })?;
    let read_list = |name: &str| -> Result<HashSet<String>, TaskError> {
        let path = dir.join(name);
        Ok(read_text(&path)?
            .lines()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect())
    };
    let val_ids = read_list("valListFile.txt")?;
    let test_ids = read_list("testListFile.txt")?;

    let mut skipped = 0usize;
    let mut splits: BTreeMap<&str, Vec<RawExample>> = BTreeMap::new();
    for (id, dialog) in &data {
        let split = if test_ids.contains(id) {
            "test"
        } else if val_ids.contains(id) {
            "valid"
        } else {
            "train"
        };
        // human turns are the even positions; system replies are odd
        for (i, turn) in dialog.log.iter().enumerate() {
            if i % 2 != 0 {
                continue;
            }
            let Some(act) = turn.dialog_act.keys().next() else {
                skipped += 1;
                continue;
            };
            if turn.text.trim().is_empty() {
                skipped += 1;
                continue;
            }
            splits.entry(split).or_default().push(RawExample {
                history: dialog.log[..i].iter().map(|t| t.text.clone()).collect(),
                current: turn.text.clone(),
                label: act.to_lowercase(),
            });
        }
    }
    finalize(
        RawTask {
            id: TaskId::Mwoz,
            granularity: Granularity::Turn,
            train: splits.remove("train").unwrap_or_default(),
            valid: splits.remove("valid").unwrap_or_default(),
            test: splits.remove("test").unwrap_or_default(),
            classes: Vec::new(),
            skipped,
        },
        vocab,
    )
}

// ---------------------------------------------------------------------------
// intent tracking
// ---------------------------------------------------------------------------

/// Active-intent task over schema-guided dialogs: one example per user turn
/// with an active intent. Layout: `{train,dev,test}/dialogues_*.json`.
/// Turns with intent NONE are skipped; intents missing from the train
/// inventory are skipped and counted.
pub fn load_sgd(dir: &Path, vocab: &Vocabulary) -> Result<ProbeTask, TaskError> {
    #[derive(Deserialize)]
    struct FrameState {
        #[serde(default)]
        active_intent: String,
    }
    #[derive(Deserialize)]
    struct Frame {
        #[serde(default)]
        state: Option<FrameState>,
    }
    #[derive(Deserialize)]
    struct Turn {
        speaker: String,
        utterance: String,
        #[serde(default)]
        frames: Vec<Frame>,
    }
    #[derive(Deserialize)]
    struct Dialog {
        turns: Vec<Turn>,
    }

    let mut skipped = 0usize;
    let mut parse_split = |split_dir: &Path| -> Result<Vec<RawExample>, TaskError> {
        let mut out = Vec::new();
        let mut files: Vec<_> = std::fs::read_dir(split_dir)
            .map_err(|e| io_err(split_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("dialogues_") && n.ends_with(".json"))
            })
            .collect();
        files.sort();
        for file in files {
            let dialogs: Vec<Dialog> =
                serde_json::from_str(&read_text(&file)?).map_err(|e| TaskError::Malformed {
                    path: file.display().to_string(),
                    line: 0,
                    reason: e.to_string(),
                })?;
            for d in dialogs {
                for (i, turn) in d.turns.iter().enumerate() {
                    if turn.speaker.to_uppercase() != "USER" {
                        continue;
                    }
                    let intent = turn
                        .frames
                        .iter()
                        .filter_map(|f| f.state.as_ref())
                        .map(|s| s.active_intent.as_str())
                        .find(|s| !s.is_empty() && *s != "NONE");
                    let Some(intent) = intent else {
                        skipped += 1;
                        continue;
                    };
                    out.push(RawExample {
                        history: d.turns[..i].iter().map(|t| t.utterance.clone()).collect(),
                        current: turn.utterance.clone(),
                        label: kebab_case(intent),
                    });
                }
            }
        }
        Ok(out)
    };
    let train = parse_split(&dir.join("train"))?;
    let valid = parse_split(&dir.join("dev"))?;
    let test = parse_split(&dir.join("test"))?;
    finalize(
        RawTask {
            id: TaskId::Sgd,
            granularity: Granularity::Turn,
            train,
            valid,
            test,
            classes: Vec::new(),
            skipped,
        },
        vocab,
    )
}

// ---------------------------------------------------------------------------
// single-turn intent classification
// ---------------------------------------------------------------------------

/// Single-turn intent task. Layout: one directory per intent containing
/// `train_<Intent>_full.json` and `validate_<Intent>.json`; the validate
/// files are the held-out test set.
pub fn load_snips(dir: &Path, vocab: &Vocabulary) -> Result<ProbeTask, TaskError> {
    #[derive(Deserialize)]
    struct Chunk {
        text: String,
    }
    #[derive(Deserialize)]
    struct Query {
        data: Vec<Chunk>,
    }

    let mut intents: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str().map(String::from))
        .collect();
    intents.sort();
    if intents.is_empty() {
        return Err(TaskError::EmptySplit { task: "snips".into(), split: "train".into() });
    }

    let parse = |path: &Path, intent: &str| -> Result<Vec<RawExample>, TaskError> {
        let text = read_text(path)?;
        let doc: BTreeMap<String, Vec<Query>> =
            serde_json::from_str(&text).map_err(|e| TaskError::Malformed {
                path: path.display().to_string(),
                line: 0,
                reason: e.to_string(),
            })?;
        let queries = doc.get(intent).ok_or_else(|| TaskError::UnknownLabel {
            path: path.display().to_string(),
            label: intent.to_string(),
        })?;
        Ok(queries
            .iter()
            .map(|q| RawExample {
                history: Vec::new(),
                current: q.data.iter().map(|c| c.text.as_str()).collect::<String>(),
                label: kebab_case(intent),
            })
            .collect())
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    for intent in &intents {
        let idir = dir.join(intent);
        train.extend(parse(&idir.join(format!("train_{intent}_full.json")), intent)?);
        test.extend(parse(&idir.join(format!("validate_{intent}.json")), intent)?);
    }
    let valid = carve_valid(&mut train, SPLIT_SEED ^ 2);
    finalize(
        RawTask {
            id: TaskId::Snips,
            granularity: Granularity::Turn,
            train,
            valid,
            test,
            classes: intents.iter().map(|i| kebab_case(i)).collect(),
            skipped: 0,
        },
        vocab,
    )
}

// ---------------------------------------------------------------------------
// pronoun-resolution inference
// ---------------------------------------------------------------------------

/// Pronoun-resolution inference pairs. Layout: GLUE-style `train.tsv` and
/// `dev.tsv` (`index <tab> sentence1 <tab> sentence2 <tab> label`); the dev
/// file is the held-out test set since the official test is unlabeled.
pub fn load_wnli(dir: &Path, vocab: &Vocabulary) -> Result<ProbeTask, TaskError> {
    let parse = |path: &Path| -> Result<Vec<RawExample>, TaskError> {
        let text = read_text(path)?;
        let mut out = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if lineno == 0 || line.trim().is_empty() {
                continue; // header
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 4 {
                return Err(TaskError::Malformed {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    reason: format!("expected 4 tab-separated columns, got {}", cols.len()),
                });
            }
            let label = match cols[3].trim() {
                "1" => "entail",
                "0" => "contradict",
                other => {
                    return Err(TaskError::UnknownLabel {
                        path: path.display().to_string(),
                        label: other.to_string(),
                    })
                }
            };
            out.push(RawExample {
                history: vec![cols[1].to_string()],
                current: cols[2].to_string(),
                label: label.into(),
            });
        }
        Ok(out)
    };
    let mut train = parse(&dir.join("train.tsv"))?;
    let test = parse(&dir.join("dev.tsv"))?;
    let valid = carve_valid(&mut train, SPLIT_SEED ^ 3);
    finalize(
        RawTask {
            id: TaskId::Wnli,
            granularity: Granularity::Turn,
            train,
            valid,
            test,
            classes: vec!["contradict".into(), "entail".into()],
            skipped: 0,
        },
        vocab,
    )
}

// ---------------------------------------------------------------------------
// turn-level sentiment
// ---------------------------------------------------------------------------

/// Turn-level sentiment over open-ended dialogs. Layout: one text file per
/// conversation with `A: utterance -1|0|1` lines. Conversations are split
/// 85/5/10 with a fixed seed.
pub fn load_scenariosa(dir: &Path, vocab: &Vocabulary) -> Result<ProbeTask, TaskError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();

    let mut skipped = 0usize;
    let mut conversations: Vec<Vec<(String, String)>> = Vec::new();
    for file in &files {
        let text = read_text(file)?;
        let mut turns = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let Some(rest) = line
                .strip_prefix("A:")
                .or_else(|| line.strip_prefix("B:"))
                .or_else(|| line.strip_prefix("A :"))
                .or_else(|| line.strip_prefix("B :"))
            else {
                continue;
            };
            let rest = rest.trim();
            let (utterance, label) = match rest.rsplit_once(char::is_whitespace) {
                Some((u, "1")) => (u, "positive"),
                Some((u, "0")) => (u, "neutral"),
                Some((u, "-1")) => (u, "negative"),
                _ => {
                    skipped += 1;
                    continue;
                }
            };
            if utterance.trim().is_empty() {
                skipped += 1;
                continue;
            }
            turns.push((utterance.trim().to_string(), label.to_string()));
        }
        if !turns.is_empty() {
            conversations.push(turns);
        }
    }

    // conversation-level split so no dialog leaks across splits
    let mut order: Vec<usize> = (0..conversations.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SPLIT_SEED ^ 4);
    order.shuffle(&mut rng);
    let n = conversations.len();
    let n_test = (n / 10).max(1);
    let n_valid = (n / 20).max(1);
    let examples = |idxs: &[usize]| -> Vec<RawExample> {
        let mut out = Vec::new();
        for &ci in idxs {
            let turns = &conversations[ci];
            for (t, (utterance, label)) in turns.iter().enumerate() {
                out.push(RawExample {
                    history: turns[..t].iter().map(|(u, _)| u.clone()).collect(),
                    current: utterance.clone(),
                    label: label.clone(),
                });
            }
        }
        out
    };
    let test = examples(&order[..n_test]);
    let valid = examples(&order[n_test..n_test + n_valid]);
    let train = examples(&order[n_test + n_valid..]);
    finalize(
        RawTask {
            id: TaskId::Ssa,
            granularity: Granularity::Turn,
            train,
            valid,
            test,
            classes: vec!["negative".into(), "neutral".into(), "positive".into()],
            skipped,
        },
        vocab,
    )
}

// ---------------------------------------------------------------------------
// conversation topic
// ---------------------------------------------------------------------------

/// Conversation-topic task built from a topic-labeled dialog corpus: one
/// example per conversation (history = all turns but the last), re-split
/// 80/10/10 with a fixed seed. Unlabeled conversations are skipped.
pub fn load_dd_topic(corpus: &DialogCorpus, vocab: &Vocabulary) -> Result<ProbeTask, TaskError> {
    let mut skipped = 0usize;
    let mut raw: Vec<RawExample> = Vec::new();
    for conv in &corpus.conversations {
        let Some(topic) = &conv.conv_label else {
            skipped += 1;
            continue;
        };
        if conv.utterances.is_empty() {
            skipped += 1;
            continue;
        }
        let n = conv.utterances.len();
        raw.push(RawExample {
            history: conv.utterances[..n - 1].iter().map(|u| u.raw_text.clone()).collect(),
            current: conv.utterances[n - 1].raw_text.clone(),
            label: topic.clone(),
        });
    }
    let mut order: Vec<usize> = (0..raw.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SPLIT_SEED ^ 5);
    order.shuffle(&mut rng);
    let n = raw.len();
    let n_train = n * 8 / 10;
    let n_valid = n / 10;
    let pick = |idxs: &[usize]| -> Vec<RawExample> { idxs.iter().map(|&i| raw[i].clone()).collect() };
    let train = pick(&order[..n_train]);
    let valid = pick(&order[n_train..n_train + n_valid]);
    let test = pick(&order[n_train + n_valid..]);
    finalize(
        RawTask {
            id: TaskId::Topic,
            granularity: Granularity::Conversation,
            train,
            valid,
            test,
            classes: Vec::new(),
            skipped,
        },
        vocab,
    )
}

// ---------------------------------------------------------------------------
// normalized on-disk format
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct NormalizedRecord<'a> {
    task: &'a str,
    split: &'a str,
    history: Vec<&'a str>,
    current: &'a str,
    label: &'a str,
}

#[derive(Deserialize)]
struct OwnedRecord {
    history: Vec<String>,
    current: String,
    label: String,
}

#[derive(Serialize, Deserialize)]
pub struct TaskManifest {
    pub task: String,
    pub granularity: Granularity,
    pub classes: Vec<String>,
    pub sizes: BTreeMap<String, usize>,
    pub label_histograms: BTreeMap<String, Vec<usize>>,
    pub skipped: usize,
    pub checksums: BTreeMap<String, String>,
}

/// Write a task as normalized JSON-lines plus `labels.json` and
/// `manifest.json` into `dir`.
pub fn save_probe_task(task: &ProbeTask, dir: &Path) -> Result<(), TaskError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut sizes = BTreeMap::new();
    let mut checksums = BTreeMap::new();
    let mut histograms = BTreeMap::new();
    for (split_name, split) in [("train", &task.train), ("valid", &task.valid), ("test", &task.test)]
    {
        let path = dir.join(format!("{split_name}.jsonl"));
        let mut out =
            std::io::BufWriter::new(std::fs::File::create(&path).map_err(|e| io_err(&path, e))?);
        for ex in split.iter() {
            let record = NormalizedRecord {
                task: task.id.as_str(),
                split: split_name,
                history: ex.history.iter().map(|u| u.raw_text.as_str()).collect(),
                current: &ex.current.raw_text,
                label: &task.class_names[ex.label as usize],
            };
            serde_json::to_writer(&mut out, &record).map_err(|e| TaskError::Malformed {
                path: path.display().to_string(),
                line: 0,
                reason: e.to_string(),
            })?;
            out.write_all(b"\n").map_err(|e| io_err(&path, e))?;
        }
        out.flush().map_err(|e| io_err(&path, e))?;
        drop(out);
        sizes.insert(split_name.to_string(), split.len());
        checksums.insert(
            split_name.to_string(),
            crate::hashing::sha256_file(&path).map_err(|e| io_err(&path, e))?,
        );
        let split_enum = match split_name {
            "train" => Split::Train,
            "valid" => Split::Valid,
            _ => Split::Test,
        };
        histograms.insert(split_name.to_string(), task.label_histogram(split_enum));
    }
    let labels_path = dir.join("labels.json");
    std::fs::write(&labels_path, serde_json::to_string_pretty(&task.class_names).unwrap())
        .map_err(|e| io_err(&labels_path, e))?;
    let manifest = TaskManifest {
        task: task.id.as_str().into(),
        granularity: task.granularity,
        classes: task.class_names.clone(),
        sizes,
        label_histograms: histograms,
        skipped: task.skipped,
        checksums,
    };
    let manifest_path = dir.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).unwrap())
        .map_err(|e| io_err(&manifest_path, e))?;
    Ok(())
}

/// Load a task from its normalized directory, re-tokenizing under `vocab`.
pub fn load_probe_task(dir: &Path, vocab: &Vocabulary) -> Result<ProbeTask, TaskError> {
    let manifest_path = dir.join("manifest.json");
    let manifest: TaskManifest =
        serde_json::from_str(&read_text(&manifest_path)?).map_err(|e| TaskError::Malformed {
            path: manifest_path.display().to_string(),
            line: 0,
            reason: e.to_string(),
        })?;
    let id = TaskId::parse(&manifest.task).ok_or_else(|| TaskError::Malformed {
        path: manifest_path.display().to_string(),
        line: 0,
        reason: format!("unknown task id {:?}", manifest.task),
    })?;
    let parse = |name: &str| -> Result<Vec<RawExample>, TaskError> {
        let path = dir.join(format!("{name}.jsonl"));
        let text = read_text(&path)?;
        let mut out = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: OwnedRecord = serde_json::from_str(line).map_err(|e| TaskError::Malformed {
                path: path.display().to_string(),
                line: lineno + 1,
                reason: e.to_string(),
            })?;
            out.push(RawExample { history: r.history, current: r.current, label: r.label });
        }
        if out.len() != manifest.sizes.get(name).copied().unwrap_or(out.len()) {
            return Err(TaskError::Malformed {
                path: path.display().to_string(),
                line: 0,
                reason: "size does not match manifest".into(),
            });
        }
        Ok(out)
    };
    let train = parse("train")?;
    let valid = parse("valid")?;
    let test = parse("test")?;
    finalize(
        RawTask {
            id,
            granularity: manifest.granularity,
            train,
            valid,
            test,
            classes: manifest.classes,
            skipped: manifest.skipped,
        },
        vocab,
    )
}

/// The most frequent train class and its frequency on the test split.
pub fn majority_class(task: &ProbeTask) -> (u32, f64) {
    let hist = task.label_histogram(Split::Train);
    let majority = hist
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i as u32)
        .unwrap_or(0);
    let test_hist = task.label_histogram(Split::Test);
    let total: usize = test_hist.iter().sum();
    let freq = test_hist[majority as usize] as f64 / total.max(1) as f64;
    (majority, freq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocabulary, SizeClass};

    fn vocab() -> Vocabulary {
        build_vocabulary(
            ["the a of to i you my your am are this that what why how much"],
            1,
            5000,
            SizeClass::Small,
        )
        .unwrap()
    }

    #[test]
    fn second_person_examples() {
        assert_eq!(second_person_text("i am a student ."), "you are a student .");
        assert_eq!(second_person_text("the sky is blue ."), "the sky is blue .");
        assert_eq!(second_person_text("i love my dog ."), "you love your dog .");
        assert_eq!(second_person_text("I'm sure it is mine."), "You're sure it is yours.");
        // token-boundary safety: no rewrite inside words
        assert_eq!(second_person_text("determine the amplitude"), "determine the amplitude");
    }

    #[test]
    fn second_person_idempotent() {
        for s in ["i am here", "My cat likes me", "i'm fine and myself too", "nothing here"] {
            let once = second_person_text(s);
            assert_eq!(second_person_text(&once), once);
        }
    }

    #[test]
    fn kebab_case_normalization() {
        assert_eq!(kebab_case("FindRestaurant"), "find-restaurant");
        assert_eq!(kebab_case("SearchScreeningEvent"), "search-screening-event");
        assert_eq!(kebab_case("hotel_inform"), "hotel-inform");
    }

    #[test]
    fn majority_on_uniform_labels() {
        let v = vocab();
        let mk = |label: u32| ProbeExample {
            history: Vec::new(),
            current: tokenize("what", &v).unwrap(),
            label,
            task: TaskId::Trec,
        };
        let task = ProbeTask {
            id: TaskId::Trec,
            class_names: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            train: vec![mk(0), mk(0), mk(1), mk(2), mk(3)],
            valid: vec![mk(0)],
            test: (0..4).flat_map(|l| vec![mk(l); 5]).collect(),
            granularity: Granularity::Turn,
            skipped: 0,
        };
        let (label, freq) = majority_class(&task);
        assert_eq!(label, 0);
        assert!((freq - 0.25).abs() < 1e-12);
    }
}
