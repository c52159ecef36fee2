//! Stratified k-fold cross-validation, mini-batch Adam training and
//! confusion-matrix evaluation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{argmax, ModelConfig, ModelParams};
use crate::tensor::{adam_step, AdamConfig, Tensor};
use crate::tokens::TokenSequence;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub track_id: String,
    pub label: usize,
    pub cache_path: String,
}

/// Every track with its genre label. Genre names are sorted, and a label is
/// an index into them.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub entries: Vec<DatasetEntry>,
    pub genre_names: Vec<String>,
}

impl DatasetIndex {
    pub fn labels(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.genre_names.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("genre names must be sorted and unique".into()));
        }
        if let Some(e) = self.entries.iter().find(|e| e.label >= self.genre_names.len()) {
            return Err(Error::LabelOutOfRange { label: e.label, classes: self.genre_names.len() });
        }
        Ok(())
    }

    pub fn position(&self, track_id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.track_id == track_id)
    }
}

/// A partition of entry indices into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn validation(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    /// All entries outside `fold`, ascending.
    pub fn training(&self, fold: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(f, _)| f != fold)
            .flat_map(|(_, members)| members.iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    }

    /// The fold that holds `entry` out.
    pub fn fold_of(&self, entry: usize) -> Option<usize> {
        self.folds.iter().position(|f| f.contains(&entry))
    }
}

/// Shuffles each genre's entries with a seeded generator and deals them
/// round-robin into `k` folds. The dealing position carries over from one
/// genre to the next, so fold sizes differ by at most one overall as well as
/// per genre.
pub fn stratified_kfold(labels: &[usize], class_count: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k = {k}, need at least 2 folds")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (i, &l) in labels.iter().enumerate() {
        if l >= class_count {
            return Err(Error::LabelOutOfRange { label: l, classes: class_count });
        }
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut cursor = 0;
    for (genre, mut members) in by_class.into_iter().enumerate() {
        if members.len() < k {
            return Err(Error::GenreTooSmall { genre, count: members.len(), required: k });
        }
        members.shuffle(&mut rng);
        for m in members {
            folds[cursor % k].push(m);
            cursor += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { folds, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 30, batch_size: 16, learning_rate: 1e-3, seed: 42, patience: 5 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("non-positive training setting in {self:?}")));
        }
        Ok(())
    }
}

/// Counts of (true genre, predicted genre); rows are true genres.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { classes, counts: vec![0; classes * classes] }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::shape("confusion", format!("{} counts for {classes} classes", counts.len())));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.classes).map(|r| self.row(r).iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.classes, other.classes, "merging confusion matrices of different size");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

/// Random access to labelled token sequences.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;
    fn label(&self, index: usize) -> usize;
    fn track_id(&self, index: usize) -> String;
    fn tokens(&self, index: usize) -> Result<TokenSequence>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A [`SampleSource`] holding every token sequence in memory.
#[derive(Debug, Clone, Default)]
pub struct InMemorySource {
    pub samples: Vec<(String, usize, TokenSequence)>,
}

impl SampleSource for InMemorySource {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn label(&self, index: usize) -> usize {
        self.samples[index].1
    }

    fn track_id(&self, index: usize) -> String {
        self.samples[index].0.clone()
    }

    fn tokens(&self, index: usize) -> Result<TokenSequence> {
        self.samples.get(index).map(|s| s.2.clone()).ok_or_else(|| Error::MissingCache(format!("sample {index}")))
    }
}

/// Applies `f` to every item, keeping input order in the output.
#[cfg(feature = "parallel")]
pub(crate) fn map_ordered<T, F>(items: &[usize], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(|&i| f(i)).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_ordered<T, F>(items: &[usize], f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    items.iter().map(|&i| f(i)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub mean_loss: f64,
}

/// Predicts every entry in `indices` (argmax, lowest index on ties) and
/// tallies a confusion matrix alongside the mean cross-entropy.
pub fn evaluate<S: SampleSource>(params: &ModelParams, source: &S, indices: &[usize]) -> Result<Evaluation> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let results = map_ordered(indices, |i| -> Result<(usize, usize, f64)> {
        let tokens = source.tokens(i)?;
        let label = source.label(i);
        let mut fg = params.build_graph(&tokens.tokens)?;
        let loss = fg.graph.cross_entropy(fg.logits, label)?;
        Ok((label, argmax(fg.graph.value(fg.logits).data()), fg.graph.value(loss).data()[0]))
    });
    let mut confusion = ConfusionMatrix::new(params.config.class_count);
    let mut total_loss = 0.0;
    for r in results {
        let (truth, predicted, loss) = r?;
        confusion.record(truth, predicted);
        total_loss += loss;
    }
    Ok(Evaluation { confusion, mean_loss: total_loss / indices.len() as f64 })
}

/// Mini-batch Adam over one model.
#[derive(Debug, Clone)]
pub struct Trainer {
    params: ModelParams,
    adam: AdamConfig,
    batch_size: usize,
    step: u64,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(params: ModelParams, cfg: &TrainConfig, shuffle_seed: u64) -> Self {
        Trainer {
            params,
            adam: AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() },
            batch_size: cfg.batch_size,
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(shuffle_seed),
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    /// One pass over `indices` in a freshly shuffled order. Each batch's
    /// gradient is the mean of per-track gradients, summed in batch order.
    /// Returns the mean training loss.
    pub fn train_epoch<S: SampleSource>(&mut self, source: &S, indices: &[usize]) -> Result<f64> {
        let mut order = indices.to_vec();
        order.shuffle(&mut self.rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(self.batch_size) {
            let params = &self.params;
            let results = map_ordered(batch, |i| {
                let tokens = source.tokens(i)?;
                params.loss_and_gradients(&tokens.tokens, source.label(i))
            });
            let mut sum: Option<Vec<Tensor>> = None;
            for r in results {
                let lg = r?;
                total_loss += lg.loss;
                match &mut sum {
                    None => sum = Some(lg.gradients),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&lg.gradients) {
                            a.add_assign(g);
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let sum = sum.expect("batches are non-empty");
            for (p, g) in self.params.parameters_mut().iter_mut().zip(sum) {
                for (pg, gv) in p.grad.data_mut().iter_mut().zip(g.data()) {
                    *pg = gv * scale;
                }
            }
            self.step += 1;
            adam_step(self.params.parameters_mut().iter_mut(), &self.adam, self.step);
        }
        Ok(total_loss / indices.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub fold: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub params: ModelParams,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    /// Held-out evaluation of `params`.
    pub validation: Evaluation,
}

/// Seed for fold `fold`'s weight initialization and batch shuffling.
fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add((fold as u64).wrapping_add(1))
}

/// Trains on every fold except `fold` and validates on `fold`, keeping the
/// best-validation-loss parameters and stopping after `patience` epochs
/// without improvement.
pub fn train_fold<S: SampleSource>(
    source: &S,
    plan: &FoldPlan,
    fold: usize,
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochLog),
) -> Result<FoldOutcome> {
    cfg.validate()?;
    if fold >= plan.k() {
        return Err(Error::InvalidArgument(format!("fold {fold} of {}", plan.k())));
    }
    let train_idx = plan.training(fold);
    let val_idx = plan.validation(fold);
    let seed = fold_seed(cfg.seed, fold);
    let mut trainer = Trainer::new(ModelParams::init(model, seed)?, cfg, seed ^ 0x5EED);
    let mut best: Option<(f64, usize, ModelParams, Evaluation)> = None;
    let mut log = Vec::new();
    for epoch in 1..=cfg.epochs {
        let train_loss = trainer.train_epoch(source, &train_idx)?;
        if !train_loss.is_finite() {
            return Err(Error::NonFiniteLoss { fold, epoch });
        }
        let eval = evaluate(trainer.params(), source, val_idx)?;
        let entry =
            EpochLog { fold, epoch, train_loss, val_loss: eval.mean_loss, val_accuracy: eval.confusion.accuracy() };
        observer(&entry);
        log.push(entry);
        let improved = best.as_ref().map_or(true, |(l, ..)| eval.mean_loss < *l);
        if improved {
            best = Some((eval.mean_loss, epoch, trainer.params().clone(), eval));
        } else if epoch - best.as_ref().map_or(0, |b| b.1) >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, params, validation) = best.expect("at least one epoch runs");
    Ok(FoldOutcome { params, best_epoch, log, validation })
}

/// Trains one model on every entry of `source` for exactly `epochs` epochs,
/// with no validation split. Used for the refit-on-all model.
pub fn train_all<S: SampleSource>(
    source: &S,
    model: &ModelConfig,
    cfg: &TrainConfig,
    epochs: usize,
    mut observer: impl FnMut(usize, f64),
) -> Result<ModelParams> {
    cfg.validate()?;
    let indices: Vec<usize> = (0..source.len()).collect();
    let seed = fold_seed(cfg.seed, usize::MAX);
    let mut trainer = Trainer::new(ModelParams::init(model, seed)?, cfg, seed ^ 0x5EED);
    for epoch in 1..=epochs {
        let loss = trainer.train_epoch(source, &indices)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { fold: usize::MAX, epoch });
        }
        observer(epoch, loss);
    }
    Ok(trainer.into_params())
}

#[derive(Debug, Clone)]
pub struct CrossValidation {
    pub confusion: ConfusionMatrix,
    pub fold_accuracies: Vec<f64>,
    pub fold_params: Vec<ModelParams>,
    pub best_epochs: Vec<usize>,
    pub log: Vec<EpochLog>,
}

impl CrossValidation {
    pub fn accuracy(&self) -> f64 {
        self.confusion.accuracy()
    }
}

/// Runs [`train_fold`] for every fold and sums the held-out confusion
/// matrices, so each track is evaluated exactly once.
pub fn cross_validate<S: SampleSource>(
    source: &S,
    plan: &FoldPlan,
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut observer: impl FnMut(&EpochLog),
) -> Result<CrossValidation> {
    let mut confusion = ConfusionMatrix::new(model.class_count);
    let mut fold_accuracies = Vec::with_capacity(plan.k());
    let mut fold_params = Vec::with_capacity(plan.k());
    let mut best_epochs = Vec::with_capacity(plan.k());
    let mut log = Vec::new();
    for fold in 0..plan.k() {
        let outcome = train_fold(source, plan, fold, model, cfg, &mut observer)?;
        confusion.merge(&outcome.validation.confusion);
        fold_accuracies.push(outcome.validation.confusion.accuracy());
        fold_params.push(outcome.params);
        best_epochs.push(outcome.best_epoch);
        log.extend(outcome.log);
    }
    Ok(CrossValidation { confusion, fold_accuracies, fold_params, best_epochs, log })
}
