//! Two-layer MLP probing classifier over cached feature vectors, plus the
//! majority-class baseline.
//!
//! Only the classifier's parameters are learned here; features are
//! read-only inputs and the dialog models are never touched.

use crate::corpus::Split;
use crate::nn::{cross_entropy, dropout_backward, dropout_forward, Adam, Linear};
use crate::tasks::{majority_class, ProbeTask};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("feature dimension mismatch: {expected} vs {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("feature/label count mismatch: {features} rows vs {labels} labels")]
    CountMismatch { features: usize, labels: usize },
    #[error("training labels contain a single class; nothing to learn")]
    SingleClass,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u32, classes: usize },
    #[error("empty evaluation set")]
    EmptyEval,
    #[error("i/o error on {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("bad results file {path}: {reason}")]
    BadResults { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeClassifierConfig {
    pub hidden_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for ProbeClassifierConfig {
    fn default() -> Self {
        ProbeClassifierConfig {
            hidden_size: 512,
            dropout: 0.1,
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 50,
            patience: 5,
            seed: 1,
        }
    }
}

/// Input -> hidden (ReLU, dropout) -> classes.
#[derive(Debug, Clone)]
pub struct ProbeModel {
    lin1: Linear,
    lin2: Linear,
    pub config: ProbeClassifierConfig,
    pub epochs_run: usize,
    pub best_valid_accuracy: f64,
}

impl ProbeModel {
    pub fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        let hidden = self.lin1.forward(x).mapv(|v| v.max(0.0));
        self.lin2.forward(&hidden)
    }

    pub fn predict(&self, x: &Array2<f64>) -> Vec<u32> {
        self.logits(x)
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                    .map(|(i, _)| i as u32)
                    .unwrap_or(0)
            })
            .collect()
    }

    pub fn params_hash(&self) -> String {
        let mut bytes = Vec::new();
        for p in self.lin1.params().into_iter().chain(self.lin2.params()) {
            for v in p.w.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        crate::hashing::sha256_hex(&bytes)
    }
}

fn accuracy_of(predictions: &[u32], labels: &[u32]) -> f64 {
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    correct as f64 / labels.len().max(1) as f64
}

fn validate_inputs(x: &Array2<f64>, y: &[u32], n_classes: usize) -> Result<(), ProbeError> {
    if x.nrows() != y.len() {
        return Err(ProbeError::CountMismatch { features: x.nrows(), labels: y.len() });
    }
    if let Some(&bad) = y.iter().find(|&&l| l as usize >= n_classes) {
        return Err(ProbeError::LabelOutOfRange { label: bad, classes: n_classes });
    }
    Ok(())
}

/// Train the probe by cross-entropy with early stopping on validation
/// accuracy. The best-epoch parameters are returned.
pub fn train_probe(
    train_x: &Array2<f64>,
    train_y: &[u32],
    valid_x: &Array2<f64>,
    valid_y: &[u32],
    n_classes: usize,
    cfg: &ProbeClassifierConfig,
) -> Result<ProbeModel, ProbeError> {
    validate_inputs(train_x, train_y, n_classes)?;
    validate_inputs(valid_x, valid_y, n_classes)?;
    if valid_x.ncols() != train_x.ncols() {
        return Err(ProbeError::DimMismatch { expected: train_x.ncols(), actual: valid_x.ncols() });
    }
    let distinct: std::collections::HashSet<u32> = train_y.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(ProbeError::SingleClass);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = train_x.ncols();
    let mut model = ProbeModel {
        lin1: Linear::new("probe.lin1", dim, cfg.hidden_size, &mut rng),
        lin2: Linear::new("probe.lin2", cfg.hidden_size, n_classes, &mut rng),
        config: cfg.clone(),
        epochs_run: 0,
        best_valid_accuracy: 0.0,
    };
    let mut adam = Adam::constant(cfg.learning_rate);
    let mut best: Option<(f64, Linear, Linear)> = None;
    let mut bad_epochs = 0usize;

    let mut order: Vec<usize> = (0..train_x.nrows()).collect();
    for epoch in 1..=cfg.max_epochs {
        model.epochs_run = epoch;
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let x = train_x.select(Axis(0), chunk);
            let y: Vec<u32> = chunk.iter().map(|&i| train_y[i]).collect();
            let hidden_pre = model.lin1.forward(&x);
            let hidden = hidden_pre.mapv(|v| v.max(0.0));
            let (dropped, mask) = dropout_forward(&hidden, cfg.dropout, Some(&mut rng));
            let logits = model.lin2.forward(&dropped);
            let (_, mut dlogits) = cross_entropy(&logits, &y);
            dlogits.mapv_inplace(|v| v / y.len() as f64);
            let d_dropped = model.lin2.backward(&dropped, &dlogits);
            let mut d_hidden = dropout_backward(&d_dropped, &mask);
            ndarray::Zip::from(&mut d_hidden).and(&hidden_pre).for_each(|d, &pre| {
                if pre <= 0.0 {
                    *d = 0.0;
                }
            });
            model.lin1.backward(&x, &d_hidden);
            let mut params = model.lin1.params_mut();
            params.extend(model.lin2.params_mut());
            adam.step(&mut params);
            for p in model.lin1.params_mut().into_iter().chain(model.lin2.params_mut()) {
                p.zero_grad();
            }
        }
        let valid_acc = accuracy_of(&model.predict(valid_x), valid_y);
        match &best {
            Some((best_acc, _, _)) if valid_acc <= *best_acc => bad_epochs += 1,
            _ => {
                best = Some((valid_acc, model.lin1.clone(), model.lin2.clone()));
                bad_epochs = 0;
            }
        }
        if bad_epochs >= cfg.patience {
            break;
        }
    }
    if let Some((acc, lin1, lin2)) = best {
        model.best_valid_accuracy = acc;
        model.lin1 = lin1;
        model.lin2 = lin2;
    }
    Ok(model)
}

/// One probing measurement, keyed by (model, strategy, task, seed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeResult {
    pub schema_version: u32,
    pub model_id: String,
    pub strategy: String,
    pub task: String,
    pub seed: u64,
    pub test_accuracy: f64,
    pub valid_accuracy: f64,
    pub epochs_run: usize,
}

impl ProbeResult {
    pub fn key(&self) -> (String, String, String, u64) {
        (self.model_id.clone(), self.strategy.clone(), self.task.clone(), self.seed)
    }
}

pub fn evaluate_probe(
    model: &ProbeModel,
    test_x: &Array2<f64>,
    test_y: &[u32],
) -> Result<f64, ProbeError> {
    if test_y.is_empty() {
        return Err(ProbeError::EmptyEval);
    }
    if test_x.nrows() != test_y.len() {
        return Err(ProbeError::CountMismatch { features: test_x.nrows(), labels: test_y.len() });
    }
    Ok(accuracy_of(&model.predict(test_x), test_y))
}

/// Majority baseline: predict the most frequent train class everywhere.
/// Accuracy equals that class's frequency on the test split.
pub fn majority_baseline(task: &ProbeTask) -> ProbeResult {
    let (_, test_freq) = majority_class(task);
    let valid_hist = task.label_histogram(Split::Valid);
    let (majority, _) = majority_class(task);
    let valid_total: usize = valid_hist.iter().sum();
    let valid_freq = valid_hist[majority as usize] as f64 / valid_total.max(1) as f64;
    ProbeResult {
        schema_version: 1,
        model_id: "majority".into(),
        strategy: "majority".into(),
        task: task.id.as_str().into(),
        seed: 0,
        test_accuracy: test_freq,
        valid_accuracy: valid_freq,
        epochs_run: 0,
    }
}

/// Append results to a JSON-lines store.
pub fn append_results(path: &Path, results: &[ProbeResult]) -> Result<(), ProbeError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| ProbeError::Io(dir.display().to_string(), e))?;
    }
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| ProbeError::Io(path.display().to_string(), e))?;
    for r in results {
        let line = serde_json::to_string(r).expect("result serializes");
        writeln!(file, "{line}").map_err(|e| ProbeError::Io(path.display().to_string(), e))?;
    }
    Ok(())
}

/// Load a JSON-lines results store; later rows win on duplicate keys.
pub fn load_results(path: &Path) -> Result<Vec<ProbeResult>, ProbeError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ProbeError::Io(path.display().to_string(), e))?;
    let mut by_key: std::collections::BTreeMap<(String, String, String, u64), ProbeResult> =
        Default::default();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: ProbeResult = serde_json::from_str(line).map_err(|e| ProbeError::BadResults {
            path: path.display().to_string(),
            reason: format!("line {}: {e}", lineno + 1),
        })?;
        by_key.insert(r.key(), r);
    }
    Ok(by_key.into_values().collect())
}
