//! Optimization loop (Adam with decoupled weight decay), evaluation metrics
//! (confusion matrix, weighted F1), history CSV, and checkpointing.

use crate::graphdata::{Dataset, GraphDataError, Split};
use crate::model::{compute_loss, Model, ModelConfig, ModelError};
use crate::simulator::derive_seed;
use crate::tape::Tape;
use crate::tensor::{Tensor, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug)]
pub enum TrainError {
    Validation(String),
    /// Loss or a parameter left the finite range; training aborts.
    NonFinite { epoch: usize, sample: usize, loss: f64 },
    Format(String),
    Model(ModelError),
    Graph(GraphDataError),
    Tensor(TensorError),
    Io(std::io::Error),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Validation(m) => write!(f, "training: {}", m),
            TrainError::NonFinite { epoch, sample, loss } => write!(
                f,
                "non-finite loss {} at epoch {}, sample {}; aborting",
                loss, epoch, sample
            ),
            TrainError::Format(m) => write!(f, "checkpoint format: {}", m),
            TrainError::Model(e) => write!(f, "{}", e),
            TrainError::Graph(e) => write!(f, "{}", e),
            TrainError::Tensor(e) => write!(f, "{}", e),
            TrainError::Io(e) => write!(f, "i/o: {}", e),
        }
    }
}

impl std::error::Error for TrainError {}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}

impl From<GraphDataError> for TrainError {
    fn from(e: GraphDataError) -> Self {
        TrainError::Graph(e)
    }
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Tensor(e)
    }
}

impl From<std::io::Error> for TrainError {
    fn from(e: std::io::Error) -> Self {
        TrainError::Io(e)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Worker threads for per-batch gradient evaluation; results are reduced
    /// in sample order, so the thread count never changes the numbers.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 3e-3,
            weight_decay: 1e-4,
            batch_size: 16,
            seed: 0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Validation("epochs must be >= 1".into()));
        }
        if self.learning_rate < 0.0 {
            return Err(TrainError::Validation(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if self.weight_decay < 0.0 {
            return Err(TrainError::Validation("weight decay must be >= 0".into()));
        }
        if self.batch_size == 0 || self.threads == 0 {
            return Err(TrainError::Validation("batch_size and threads must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_weighted_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: Vec<Vec<usize>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub weighted_f1: f64,
    pub loss: f64,
}

impl EvalReport {
    /// Metrics from (true label, prediction) pairs. F1 is 0 whenever
    /// precision + recall is 0.
    pub fn from_predictions(n_classes: usize, pairs: &[(usize, usize)], loss: f64) -> Self {
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for &(label, pred) in pairs {
            confusion[label][pred] += 1;
        }
        Self::from_confusion(confusion, loss)
    }

    pub fn from_confusion(confusion: Vec<Vec<usize>>, loss: f64) -> Self {
        let c = confusion.len();
        let total: usize = confusion.iter().map(|row| row.iter().sum::<usize>()).sum();
        let mut precision = vec![0.0; c];
        let mut recall = vec![0.0; c];
        let mut f1 = vec![0.0; c];
        let mut weighted_f1 = 0.0;
        for k in 0..c {
            let tp = confusion[k][k] as f64;
            let support: usize = confusion[k].iter().sum();
            let predicted: usize = (0..c).map(|i| confusion[i][k]).sum();
            precision[k] = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            recall[k] = if support > 0 { tp / support as f64 } else { 0.0 };
            f1[k] = if precision[k] + recall[k] > 0.0 {
                2.0 * precision[k] * recall[k] / (precision[k] + recall[k])
            } else {
                0.0
            };
            if total > 0 {
                weighted_f1 += support as f64 / total as f64 * f1[k];
            }
        }
        EvalReport { confusion, precision, recall, f1, weighted_f1, loss }
    }

    pub fn accuracy(&self) -> f64 {
        let total: usize = self.confusion.iter().map(|r| r.iter().sum::<usize>()).sum();
        let correct: usize = (0..self.confusion.len()).map(|k| self.confusion[k][k]).sum();
        if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        }
    }
}

pub struct TrainOutcome {
    /// Model restored to the best-validation-loss epoch.
    pub model: Model,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: usize,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One sample's loss and parameter gradients, aligned to sorted param names.
fn sample_grads(
    model: &Model,
    a: &Tensor,
    x: &Tensor,
    label: usize,
    names: &[String],
    dropout_seed: u64,
) -> Result<(f64, Vec<Vec<f64>>), TrainError> {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let cache = model.forward_on_tape(&mut tape, a, x, false, Some(&mut rng))?;
    let loss = compute_loss(&mut tape, cache.logits, &cache.assignments, label, &model.config)?;
    let loss_v = tape.value(loss).data()[0];
    tape.backward(loss).map_err(ModelError::from)?;
    let grads = names
        .iter()
        .map(|name| {
            let id = cache.param_ids[name];
            match tape.grad(id) {
                Some(g) => g.into_data(),
                None => vec![0.0; model.params.get(name).unwrap().numel()],
            }
        })
        .collect();
    Ok((loss_v, grads))
}

fn eval_loss(model: &Model, a: &Tensor, x: &Tensor, label: usize) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let cache = model.forward_on_tape(&mut tape, a, x, false, None)?;
    let loss = compute_loss(&mut tape, cache.logits, &cache.assignments, label, &model.config)?;
    Ok(tape.value(loss).data()[0])
}

/// Evaluate a model over one dataset split.
pub fn evaluate(model: &Model, dataset: &Dataset, split: Split) -> Result<EvalReport, TrainError> {
    let indices = dataset.split_indices(split);
    if indices.is_empty() {
        return Err(TrainError::Validation(format!("split {:?} is empty", split)));
    }
    let mut pairs = Vec::with_capacity(indices.len());
    let mut loss_sum = 0.0;
    for &i in &indices {
        let s = &dataset.samples[i];
        let logits = model.logits(&s.adjacency, &s.signals)?;
        pairs.push((s.label, crate::model::argmax(&logits)));
        loss_sum += eval_loss(model, &s.adjacency, &s.signals, s.label)?;
    }
    Ok(EvalReport::from_predictions(
        dataset.n_classes(),
        &pairs,
        loss_sum / indices.len() as f64,
    ))
}

pub fn train(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    dataset: &Dataset,
) -> Result<TrainOutcome, TrainError> {
    train_with(model_config, train_config, dataset, &mut |_| {})
}

/// Training loop with a per-epoch observer (progress printing, live logs).
pub fn train_with(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    dataset: &Dataset,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainOutcome, TrainError> {
    model_config.validate()?;
    train_config.validate()?;
    if dataset.manifest.n_nodes != model_config.n_nodes
        || dataset.manifest.t_len != model_config.t_len
        || dataset.n_classes() != model_config.n_classes
    {
        return Err(TrainError::Validation(format!(
            "dataset (N={}, T={}, C={}) does not match model config (N={}, T={}, C={})",
            dataset.manifest.n_nodes,
            dataset.manifest.t_len,
            dataset.n_classes(),
            model_config.n_nodes,
            model_config.t_len,
            model_config.n_classes
        )));
    }
    let train_idx = dataset.split_indices(Split::Train);
    let val_idx = dataset.split_indices(Split::Val);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(TrainError::Validation("train and val splits must be nonempty".into()));
    }

    let mut model = Model::new(model_config.clone(), train_config.seed)?;
    let names: Vec<String> = model.params.iter().map(|(n, _)| n.clone()).collect();
    let mut adam = AdamState {
        m: names.iter().map(|n| vec![0.0; model.params.get(n).unwrap().numel()]).collect(),
        v: names.iter().map(|n| vec![0.0; model.params.get(n).unwrap().numel()]).collect(),
        step: 0,
    };

    // separate stream index so batch order never aliases dropout draws
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(train_config.seed, u64::MAX - 1));
    let mut history = Vec::with_capacity(train_config.epochs);
    let mut best: Option<(f64, usize, Model)> = None;

    for epoch in 0..train_config.epochs {
        let mut order = train_idx.clone();
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        for batch in order.chunks(train_config.batch_size) {
            let results = batch_grads(&model, dataset, batch, &names, train_config, epoch)?;
            let bsz = batch.len() as f64;
            let mut accum: Vec<Vec<f64>> =
                names.iter().map(|n| vec![0.0; model.params.get(n).unwrap().numel()]).collect();
            for (sample_id, (loss_v, grads)) in batch.iter().zip(results) {
                if !loss_v.is_finite() {
                    return Err(TrainError::NonFinite { epoch, sample: *sample_id, loss: loss_v });
                }
                epoch_loss += loss_v;
                for (acc, g) in accum.iter_mut().zip(grads) {
                    for (a, b) in acc.iter_mut().zip(g) {
                        *a += b;
                    }
                }
            }

            // Adam with decoupled weight decay
            adam.step += 1;
            let t = adam.step as f64;
            let bc1 = 1.0 - ADAM_BETA1.powf(t);
            let bc2 = 1.0 - ADAM_BETA2.powf(t);
            let lr = train_config.learning_rate;
            let wd = train_config.weight_decay;
            for (k, name) in names.iter().enumerate() {
                let p = model.params.get(name).unwrap().clone();
                let mut data = p.into_data();
                for (i, slot) in data.iter_mut().enumerate() {
                    let g = accum[k][i] / bsz;
                    adam.m[k][i] = ADAM_BETA1 * adam.m[k][i] + (1.0 - ADAM_BETA1) * g;
                    adam.v[k][i] = ADAM_BETA2 * adam.v[k][i] + (1.0 - ADAM_BETA2) * g * g;
                    let mhat = adam.m[k][i] / bc1;
                    let vhat = adam.v[k][i] / bc2;
                    *slot -= lr * (mhat / (vhat.sqrt() + ADAM_EPS) + wd * *slot);
                }
                let shape = model.params.get(name).unwrap().shape().to_vec();
                model.params.set(name, Tensor::new(shape, data).unwrap());
            }
        }

        if !model.params.all_finite() {
            return Err(TrainError::NonFinite { epoch, sample: usize::MAX, loss: f64::NAN });
        }

        let mut val_loss = 0.0;
        let mut pairs = Vec::with_capacity(val_idx.len());
        for &i in &val_idx {
            let s = &dataset.samples[i];
            let logits = model.logits(&s.adjacency, &s.signals)?;
            pairs.push((s.label, crate::model::argmax(&logits)));
            val_loss += eval_loss(&model, &s.adjacency, &s.signals, s.label)?;
        }
        val_loss /= val_idx.len() as f64;
        let report = EvalReport::from_predictions(dataset.n_classes(), &pairs, val_loss);

        let stats = EpochStats {
            epoch,
            train_loss: epoch_loss / train_idx.len() as f64,
            val_loss,
            val_weighted_f1: report.weighted_f1,
        };
        on_epoch(&stats);
        history.push(stats);

        let better = match &best {
            None => true,
            Some((best_loss, _, _)) => val_loss < *best_loss,
        };
        if better {
            best = Some((val_loss, epoch, model.clone()));
        }
    }

    let (_, best_epoch, best_model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { model: best_model, history, best_epoch })
}

/// Per-sample loss/gradients for a batch, optionally fanned out over
/// threads; results come back in sample order either way.
fn batch_grads(
    model: &Model,
    dataset: &Dataset,
    batch: &[usize],
    names: &[String],
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<Vec<(f64, Vec<Vec<f64>>)>, TrainError> {
    let job = |&sample_id: &usize| -> Result<(f64, Vec<Vec<f64>>), TrainError> {
        let s = &dataset.samples[sample_id];
        let dropout_seed = derive_seed(cfg.seed, (epoch as u64) << 32 | sample_id as u64);
        sample_grads(model, &s.adjacency, &s.signals, s.label, names, dropout_seed)
    };
    if cfg.threads <= 1 || batch.len() <= 1 {
        return batch.iter().map(job).collect();
    }
    let chunk = batch.len().div_ceil(cfg.threads);
    let mut out: Vec<Option<(f64, Vec<Vec<f64>>)>> = (0..batch.len()).map(|_| None).collect();
    std::thread::scope(|scope| -> Result<(), TrainError> {
        let mut handles = Vec::new();
        for (c, ids) in batch.chunks(chunk).enumerate() {
            handles.push((c, scope.spawn(move || ids.iter().map(job).collect::<Result<Vec<_>, _>>())));
        }
        for (c, h) in handles {
            let results = h.join().expect("worker panicked")?;
            for (off, r) in results.into_iter().enumerate() {
                out[c * chunk + off] = Some(r);
            }
        }
        Ok(())
    })?;
    Ok(out.into_iter().map(|o| o.expect("all slots filled")).collect())
}

pub fn write_history_csv(path: &Path, history: &[EpochStats]) -> Result<(), TrainError> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "epoch,train_loss,val_loss,val_weighted_f1")?;
    for h in history {
        writeln!(f, "{},{},{},{}", h.epoch, h.train_loss, h.val_loss, h.val_weighted_f1)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CheckpointManifest {
    version: u32,
    model_config: ModelConfig,
    history: Vec<EpochStats>,
    best_epoch: usize,
}

/// Layout: `checkpoint.json` next to `params/<name>.tns`.
pub fn save_checkpoint(
    dir: &Path,
    model: &Model,
    history: &[EpochStats],
    best_epoch: usize,
) -> Result<(), TrainError> {
    std::fs::create_dir_all(dir.join("params"))?;
    let manifest = CheckpointManifest {
        version: CHECKPOINT_VERSION,
        model_config: model.config.clone(),
        history: history.to_vec(),
        best_epoch,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| TrainError::Format(e.to_string()))?;
    std::fs::write(dir.join("checkpoint.json"), json)?;
    for (name, tensor) in model.params.iter() {
        tensor.write_tns(&dir.join("params").join(format!("{}.tns", name)))?;
    }
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(Model, Vec<EpochStats>, usize), TrainError> {
    let json = std::fs::read_to_string(dir.join("checkpoint.json"))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&json).map_err(|e| TrainError::Format(e.to_string()))?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(TrainError::Format(format!(
            "checkpoint version {} unsupported (expected {})",
            manifest.version, CHECKPOINT_VERSION
        )));
    }
    manifest.model_config.validate()?;
    let mut params = crate::model::ModelParams::default();
    for (name, _) in manifest.model_config.parameter_shapes() {
        let t = Tensor::read_tns(&dir.join("params").join(format!("{}.tns", name)))?;
        params.set(&name, t);
    }
    params.validate_against(&manifest.model_config)?;
    let model = Model { config: manifest.model_config, params };
    Ok((model, manifest.history, manifest.best_epoch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphdata::{er_random_adjacency, DatasetManifest, GraphSample, SampleEntry, DATASET_VERSION};
    use crate::model::AdjacencyMode;

    /// Two classes separable by temporal frequency.
    fn toy_dataset(n_per_class: usize, noise: f64, seed: u64) -> Dataset {
        let (n, t) = (6, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::new();
        let mut entries = Vec::new();
        let total = 2 * n_per_class;
        for id in 0..total {
            let label = id % 2;
            let raw = er_random_adjacency(n, 0.5, derive_seed(seed, id as u64)).unwrap();
            let mut x = Tensor::zeros(&[n, t]);
            for node in 0..n {
                for s in 0..t {
                    let phase = s as f64 / t as f64 * std::f64::consts::TAU;
                    let base = if label == 0 { phase.sin() } else { (2.0 * phase).sin() };
                    x.data_mut()[node * t + s] = base + noise * rng.gen_range(-1.0..1.0);
                }
            }
            let split = match id * 10 / total {
                0..=6 => Split::Train,
                7..=8 => Split::Val,
                _ => Split::Test,
            };
            samples.push(GraphSample::from_raw(raw, x, label).unwrap());
            entries.push(SampleEntry { id, label, split });
        }
        Dataset {
            manifest: DatasetManifest {
                version: DATASET_VERSION,
                n_samples: total,
                n_nodes: n,
                t_len: t,
                class_names: vec!["slow".into(), "fast".into()],
                samples: entries,
                provenance: "toy".into(),
                seed,
            },
            samples,
        }
    }

    fn toy_model_config() -> ModelConfig {
        let mut cfg = ModelConfig::with_defaults(6, 16, 2);
        cfg.adjacency_mode = AdjacencyMode::ScOnly;
        cfg.smoothing_enabled = false;
        cfg.cluster_schedule.clear();
        cfg.dropout = 0.0;
        cfg.d_h1 = 4;
        cfg.d_latent = 8;
        cfg
    }

    #[test]
    fn zero_learning_rate_leaves_params_bitwise_unchanged() {
        let data = toy_dataset(10, 0.1, 1);
        let tc = TrainConfig {
            epochs: 2,
            learning_rate: 0.0,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mc = toy_model_config();
        let out = train(&mc, &tc, &data).unwrap();
        let fresh = Model::new(mc, tc.seed).unwrap();
        for (name, p) in fresh.params.iter() {
            let q = out.model.params.get(name).unwrap();
            for (a, b) in p.data().iter().zip(q.data()) {
                assert_eq!(a.to_bits(), b.to_bits(), "{}", name);
            }
        }
    }

    #[test]
    fn same_seed_gives_identical_history() {
        let data = toy_dataset(8, 0.1, 2);
        let tc = TrainConfig { epochs: 3, ..TrainConfig::default() };
        let mc = toy_model_config();
        let a = train(&mc, &tc, &data).unwrap();
        let b = train(&mc, &tc, &data).unwrap();
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
            assert_eq!(x.val_loss.to_bits(), y.val_loss.to_bits());
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let data = toy_dataset(8, 0.1, 3);
        let mc = toy_model_config();
        let one = train(&mc, &TrainConfig { epochs: 2, threads: 1, ..TrainConfig::default() }, &data).unwrap();
        let four = train(&mc, &TrainConfig { epochs: 2, threads: 4, ..TrainConfig::default() }, &data).unwrap();
        for (x, y) in one.history.iter().zip(&four.history) {
            assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
        }
    }

    #[test]
    fn toy_separable_trains_to_high_accuracy() {
        let data = toy_dataset(20, 0.05, 4);
        let tc = TrainConfig { epochs: 30, ..TrainConfig::default() };
        let out = train(&toy_model_config(), &tc, &data).unwrap();
        // train accuracy of the best checkpoint
        let train_ids = data.split_indices(Split::Train);
        let correct = train_ids
            .iter()
            .filter(|&&i| {
                let s = &data.samples[i];
                out.model.predict(&s.adjacency, &s.signals).unwrap() == s.label
            })
            .count();
        let acc = correct as f64 / train_ids.len() as f64;
        assert!(acc >= 0.99, "train accuracy {}", acc);

        // epoch-averaged loss decreases over the first five epochs
        for w in out.history[..5].windows(2) {
            assert!(
                w[1].train_loss < w[0].train_loss + 1e-9,
                "loss went up: {} -> {}",
                w[0].train_loss,
                w[1].train_loss
            );
        }
    }

    #[test]
    fn eval_perfect_predictions() {
        let pairs: Vec<(usize, usize)> = (0..30).map(|i| (i % 3, i % 3)).collect();
        let r = EvalReport::from_predictions(3, &pairs, 0.0);
        assert_eq!(r.weighted_f1, 1.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(r.confusion[i][j], if i == j { 10 } else { 0 });
            }
        }
    }

    #[test]
    fn eval_all_class_zero_on_balanced_pair() {
        let pairs: Vec<(usize, usize)> = (0..20).map(|i| (i % 2, 0)).collect();
        let r = EvalReport::from_predictions(2, &pairs, 0.0);
        assert!((r.f1[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.f1[1], 0.0);
        assert!((r.weighted_f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn eval_random_predictions_near_uniform_f1() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = 4;
        let mut mean = 0.0;
        let trials = 1000;
        for _ in 0..trials {
            let pairs: Vec<(usize, usize)> =
                (0..200).map(|i| (i % c, rng.gen_range(0..c))).collect();
            mean += EvalReport::from_predictions(c, &pairs, 0.0).weighted_f1;
        }
        mean /= trials as f64;
        assert!((mean - 1.0 / c as f64).abs() <= 0.05, "mean weighted F1 {}", mean);
    }

    #[test]
    fn report_from_stored_confusion_matches() {
        let pairs: Vec<(usize, usize)> = vec![(0, 0), (0, 1), (1, 1), (1, 1), (1, 0), (0, 0)];
        let a = EvalReport::from_predictions(2, &pairs, 0.5);
        let b = EvalReport::from_confusion(a.confusion.clone(), 0.5);
        assert_eq!(a.weighted_f1, b.weighted_f1);
        assert_eq!(a.precision, b.precision);
        assert_eq!(a.recall, b.recall);
    }

    #[test]
    fn checkpoint_roundtrip_preserves_logits() {
        let data = toy_dataset(6, 0.1, 5);
        let tc = TrainConfig { epochs: 1, ..TrainConfig::default() };
        let out = train(&toy_model_config(), &tc, &data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &out.model, &out.history, out.best_epoch).unwrap();
        let (loaded, history, best) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(history.len(), 1);
        assert_eq!(best, out.best_epoch);
        let s = &data.samples[0];
        let a = out.model.logits(&s.adjacency, &s.signals).unwrap();
        let b = loaded.logits(&s.adjacency, &s.signals).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn checkpoint_corruption_and_version_mismatch_rejected() {
        let data = toy_dataset(6, 0.1, 6);
        let tc = TrainConfig { epochs: 1, ..TrainConfig::default() };
        let out = train(&toy_model_config(), &tc, &data).unwrap();

        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &out.model, &out.history, 0).unwrap();
        let victim = dir.path().join("params").join("lift.w.tns");
        let bytes = std::fs::read(&victim).unwrap();
        std::fs::write(&victim, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load_checkpoint(dir.path()).is_err());

        let dir2 = tempfile::tempdir().unwrap();
        save_checkpoint(dir2.path(), &out.model, &out.history, 0).unwrap();
        let mpath = dir2.path().join("checkpoint.json");
        let json = std::fs::read_to_string(&mpath).unwrap().replace("\"version\": 1", "\"version\": 99");
        std::fs::write(&mpath, json).unwrap();
        match load_checkpoint(dir2.path()) {
            Err(TrainError::Format(msg)) => assert!(msg.contains("99")),
            other => panic!("expected version error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn train_rejects_mismatched_dataset() {
        let data = toy_dataset(6, 0.1, 7);
        let mut mc = toy_model_config();
        mc.n_nodes = 8; // dataset has 6
        assert!(matches!(
            train(&mc, &TrainConfig::default(), &data),
            Err(TrainError::Validation(_))
        ));
    }
}
