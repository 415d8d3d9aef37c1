use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::folds::{derive_seed, FoldSplit};
use super::optim::{adam_step, AdamConfig, AdamState};
use crate::data::PairTable;
use crate::error::{Error, Result};
use crate::metric::{accumulate_cosine_grad, projected_cosine, GradientBuffer, MetricFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Identity,
    /// Entries uniform in `±1/√D`.
    #[default]
    ScaledUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub folds: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub early_stop_loss_gate: f64,
    pub early_stop_patience: usize,
    pub init_mode: InitMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            folds: 5,
            max_epochs: 500,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            early_stop_loss_gate: 0.1,
            early_stop_patience: 10,
            init_mode: InitMode::ScaledUniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.folds < 2 {
            return fail(format!("fold count must be at least 2, got {}", self.folds));
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1".into());
        }
        for (name, beta) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return fail(format!("{name} must lie in [0, 1), got {beta}"));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return fail(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if self.early_stop_patience == 0 {
            return fail("early_stop_patience must be at least 1".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Stops training once validation loss has risen for `patience`
/// consecutive epochs, counting only after it first fell below `gate`.
///
/// The gate stays armed once crossed. An epoch that does not increase the
/// loss resets the counter.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    gate: f64,
    patience: usize,
    armed: bool,
    previous: Option<f64>,
    increases: usize,
}

impl EarlyStopping {
    pub fn new(gate: f64, patience: usize) -> Self {
        Self {
            gate,
            patience,
            armed: false,
            previous: None,
            increases: 0,
        }
    }

    /// Records one epoch's validation loss; returns `true` to stop.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        if self.armed {
            match self.previous {
                Some(prev) if val_loss > prev => self.increases += 1,
                _ => self.increases = 0,
            }
        }
        if val_loss < self.gate {
            self.armed = true;
        }
        self.previous = Some(val_loss);
        self.armed && self.increases >= self.patience
    }

    pub fn armed(&self) -> bool {
        self.armed
    }
}

/// Loss surface seen by [`fit`].
pub trait Objective {
    /// Training loss at `factor` and its gradient.
    fn train_loss_and_grad(&mut self, factor: &MetricFactor) -> Result<(f64, GradientBuffer)>;

    fn train_loss(&mut self, factor: &MetricFactor) -> Result<f64> {
        Ok(self.train_loss_and_grad(factor)?.0)
    }

    fn val_loss(&mut self, factor: &MetricFactor) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Loss of the factor the epoch's gradient was taken at.
    pub train_loss: f64,
    /// Loss of the factor after the epoch's update.
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Best-validation snapshot.
    pub factor: MetricFactor,
    /// Epoch the snapshot was taken after; 0 is the initial factor.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    /// Training loss of the returned snapshot.
    pub final_train_loss: f64,
    pub trace: Vec<EpochRecord>,
}

fn finite_or_diverged(value: f64, epoch: usize, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Divergence {
            epoch,
            reason: format!("non-finite {what}"),
        })
    }
}

/// Full-batch Adam with early stopping and best-validation snapshotting.
///
/// Epoch `e` takes one gradient step from the current factor and then
/// evaluates validation loss on the updated factor.
pub fn fit<O: Objective>(objective: &mut O, init: MetricFactor, cfg: &TrainConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    let adam = cfg.adam();
    let mut factor = init;
    let mut state = AdamState::new(factor.dim());
    let mut stopper = EarlyStopping::new(cfg.early_stop_loss_gate, cfg.early_stop_patience);

    let initial_val_loss = finite_or_diverged(objective.val_loss(&factor)?, 0, "validation loss")?;
    let mut best = factor.clone();
    let mut best_epoch = 0;
    let mut best_val_loss = initial_val_loss;
    let mut initial_train_loss = f64::NAN;
    let mut trace = Vec::with_capacity(cfg.max_epochs);
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let (train_loss, grad) = objective.train_loss_and_grad(&factor)?;
        let train_loss = finite_or_diverged(train_loss, epoch, "training loss")?;
        if epoch == 1 {
            initial_train_loss = train_loss;
        }
        adam_step(&mut factor, &grad, &mut state, &adam).map_err(|e| match e {
            Error::Divergence { reason, .. } => Error::Divergence { epoch, reason },
            other => other,
        })?;
        let val_loss = finite_or_diverged(objective.val_loss(&factor)?, epoch, "validation loss")?;
        trace.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            best_epoch = epoch;
            best.clone_from(&factor);
        }
        if stopper.observe(val_loss) {
            stopped_early = true;
            break;
        }
    }

    let final_train_loss = objective.train_loss(&best)?;
    Ok(FitOutcome {
        factor: best,
        best_epoch,
        best_val_loss,
        epochs_run: trace.len(),
        stopped_early,
        initial_train_loss,
        initial_val_loss,
        final_train_loss,
        trace,
    })
}

/// `(1/n) Σ (pᵢ − tᵢ)²`.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: predictions.len(),
            found: targets.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::InvalidValue("mean squared error of an empty batch".into()));
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// `B·x` for every word of a pair table, recomputed only when the factor
/// changes.
#[derive(Debug, Default)]
pub(crate) struct ProjectionCache {
    factor: Option<MetricFactor>,
    projected: Vec<Vec<f64>>,
}

impl ProjectionCache {
    pub(crate) fn project<'a>(&'a mut self, table: &PairTable, factor: &MetricFactor) -> &'a [Vec<f64>] {
        if self.factor.as_ref() != Some(factor) {
            self.projected = table
                .words
                .iter()
                .map(|w| factor.apply_unchecked(w.vector()))
                .collect();
            self.factor = Some(factor.clone());
        }
        &self.projected
    }
}

fn projected_pair_cosine(table: &PairTable, projected: &[Vec<f64>], pair: usize) -> Result<(f64, f64, f64)> {
    let (a, b) = table.pairs[pair];
    projected_cosine(&projected[a], &projected[b]).ok_or_else(|| {
        let word = if projected[a].iter().all(|v| *v == 0.0) { a } else { b };
        Error::DegenerateProjection {
            word: table.embedding(word).word().to_string(),
        }
    })
}

/// Metric cosine of every listed pair under `factor`.
pub(crate) fn predict_pairs(
    table: &PairTable,
    cache: &mut ProjectionCache,
    factor: &MetricFactor,
    pairs: &[usize],
) -> Result<Vec<f64>> {
    let projected = cache.project(table, factor);
    pairs
        .iter()
        .map(|&p| projected_pair_cosine(table, projected, p).map(|(s, _, _)| s))
        .collect()
}

/// MSE of the metric cosine against human targets over a train/validation
/// split of a pair table.
pub struct PairObjective<'a> {
    table: &'a PairTable,
    train: &'a [usize],
    val: &'a [usize],
    cache: ProjectionCache,
}

impl<'a> PairObjective<'a> {
    pub fn new(table: &'a PairTable, train: &'a [usize], val: &'a [usize]) -> Result<Self> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::Config("training and validation sets must be nonempty".into()));
        }
        Ok(Self {
            table,
            train,
            val,
            cache: ProjectionCache::default(),
        })
    }

    fn loss_over(&mut self, factor: &MetricFactor, pairs: &[usize]) -> Result<f64> {
        let preds = predict_pairs(self.table, &mut self.cache, factor, pairs)?;
        let targets: Vec<f64> = pairs.iter().map(|&p| self.table.targets[p]).collect();
        mse_loss(&preds, &targets)
    }
}

impl Objective for PairObjective<'_> {
    fn train_loss_and_grad(&mut self, factor: &MetricFactor) -> Result<(f64, GradientBuffer)> {
        let table = self.table;
        let d = table.dim();
        let n = self.train.len() as f64;
        let projected = self.cache.project(table, factor);
        let mut word_grads = vec![vec![0.0; d]; table.words.len()];
        let mut touched = vec![false; table.words.len()];
        let mut sum_sq = 0.0;
        for &p in self.train {
            let (s, nu, nv) = projected_pair_cosine(table, projected, p)?;
            let residual = s - table.targets[p];
            sum_sq += residual * residual;
            let (a, b) = table.pairs[p];
            let upstream = 2.0 * residual / n;
            let (ga, gb) = if a < b {
                let (lo, hi) = word_grads.split_at_mut(b);
                (&mut lo[a], &mut hi[0])
            } else {
                let (lo, hi) = word_grads.split_at_mut(a);
                (&mut hi[0], &mut lo[b])
            };
            accumulate_cosine_grad(&projected[a], &projected[b], s, nu, nv, upstream, ga, gb);
            touched[a] = true;
            touched[b] = true;
        }
        let mut grad = GradientBuffer::zeros(d);
        for (w, g) in word_grads.iter().enumerate() {
            if touched[w] {
                grad.add_outer(g, table.vector(w));
            }
        }
        Ok((sum_sq / n, grad))
    }

    fn train_loss(&mut self, factor: &MetricFactor) -> Result<f64> {
        self.loss_over(factor, self.train)
    }

    fn val_loss(&mut self, factor: &MetricFactor) -> Result<f64> {
        self.loss_over(factor, self.val)
    }
}

/// Best-validation factor for one fold, with its training history.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub factor: MetricFactor,
    pub fold: FoldSplit,
    pub config: TrainConfig,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub best_epoch: usize,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub best_val_loss: f64,
    pub trace: Vec<EpochRecord>,
}

const INIT_STREAM: u64 = 0x696e_6974;

/// Initial factor for a fold; depends on `(seed, k, fold index)` only, so
/// every learning rate starts from the same point.
pub fn initial_factor(dim: usize, fold_index: usize, cfg: &TrainConfig) -> MetricFactor {
    match cfg.init_mode {
        InitMode::Identity => MetricFactor::identity(dim),
        InitMode::ScaledUniform => {
            let seed = derive_seed(cfg.seed, &[INIT_STREAM, cfg.folds as u64, fold_index as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bound = 1.0 / (dim as f64).sqrt();
            let mut factor = MetricFactor::identity(dim);
            for v in factor.entries_mut() {
                *v = rng.random_range(-bound..bound);
            }
            factor
        }
    }
}

/// Trains one fold's factor.
pub fn train_fold(table: &PairTable, fold: &FoldSplit, cfg: &TrainConfig) -> Result<TrainedModel> {
    let mut objective = PairObjective::new(table, &fold.train, &fold.val)?;
    let init = initial_factor(table.dim(), fold.index, cfg);
    let outcome = fit(&mut objective, init, cfg)?;
    log::debug!(
        "fold {} lr={:e} k={}: {} epochs{}, best val {:.6} at epoch {}",
        fold.index,
        cfg.learning_rate,
        cfg.folds,
        outcome.epochs_run,
        if outcome.stopped_early { " (early stop)" } else { "" },
        outcome.best_val_loss,
        outcome.best_epoch
    );
    Ok(TrainedModel {
        factor: outcome.factor,
        fold: fold.clone(),
        config: cfg.clone(),
        epochs_run: outcome.epochs_run,
        stopped_early: outcome.stopped_early,
        best_epoch: outcome.best_epoch,
        initial_train_loss: outcome.initial_train_loss,
        final_train_loss: outcome.final_train_loss,
        best_val_loss: outcome.best_val_loss,
        trace: outcome.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::metric_cosine_backward;

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[0.3, 0.2], &[0.3, 0.2]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(mse_loss(&[0.5], &[0.0]).unwrap(), 0.25);
        assert!(mse_loss(&[], &[]).is_err());
        assert!(mse_loss(&[1.0], &[]).is_err());
    }

    #[test]
    fn early_stopping_trace() {
        let mut stop = EarlyStopping::new(0.1, 10);
        let mut stopped_at = None;
        for epoch in 1..=500 {
            let loss = if epoch <= 50 {
                0.5 - 0.41 * epoch as f64 / 50.0
            } else {
                0.09 + 1e-3 * (epoch - 50) as f64
            };
            if stop.observe(loss) {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(60));
    }

    #[test]
    fn increases_before_the_gate_do_not_count() {
        let mut stop = EarlyStopping::new(0.1, 3);
        for v in [0.5, 0.6, 0.7, 0.8, 0.9] {
            assert!(!stop.observe(v));
        }
        assert!(!stop.armed());
        assert!(!stop.observe(0.05));
        assert!(!stop.observe(0.06));
        assert!(!stop.observe(0.06)); // equal resets
        assert!(!stop.observe(0.07));
        assert!(!stop.observe(0.08));
        assert!(stop.observe(0.2)); // gate stays armed above 0.1
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { folds: 1, ..Default::default() },
            TrainConfig { max_epochs: 0, ..Default::default() },
            TrainConfig { adam_beta1: 1.0, ..Default::default() },
            TrainConfig { early_stop_patience: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    fn tiny_table() -> PairTable {
        use crate::data::{EmbeddingStore, Normalization, Provenance, SimilarityDataset, WordPair};
        use crate::metric::Embedding;
        let vecs = [
            ("a", [1.0, 0.2, -0.3]),
            ("b", [0.1, 1.0, 0.4]),
            ("c", [-0.5, 0.3, 1.0]),
            ("d", [0.7, -0.6, 0.2]),
        ];
        let mut store = EmbeddingStore::new("t", 3, Normalization::Lowercase);
        for (w, v) in vecs {
            store.insert(Embedding::new(w, v.to_vec()).unwrap()).unwrap();
        }
        let targets = [("a", "b", 0.2), ("a", "c", 0.9), ("b", "d", 0.4), ("c", "d", 0.1), ("a", "d", 0.6)];
        let pairs = targets
            .iter()
            .map(|(a, b, t)| WordPair {
                word_a: a.to_string(),
                word_b: b.to_string(),
                target: *t,
                group: None,
            })
            .collect();
        let ds = SimilarityDataset::new("tiny", pairs, Provenance::Plain).unwrap();
        PairTable::build(&ds, &store).unwrap()
    }

    #[test]
    fn batched_gradient_matches_per_pair_backward() {
        let table = tiny_table();
        let train = [0, 1, 2, 3];
        let val = [4];
        let factor = MetricFactor::from_rows(&[
            vec![0.9, 0.1, -0.2],
            vec![0.3, 1.1, 0.0],
            vec![-0.1, 0.4, 0.8],
        ])
        .unwrap();
        let mut obj = PairObjective::new(&table, &train, &val).unwrap();
        let (loss, grad) = obj.train_loss_and_grad(&factor).unwrap();

        let mut want = GradientBuffer::zeros(3);
        let mut want_loss = 0.0;
        for &p in &train {
            let (a, b) = table.pairs[p];
            let (ea, eb) = (table.embedding(a), table.embedding(b));
            let s = crate::metric::metric_cosine(ea, eb, &factor).unwrap();
            let r = s - table.targets[p];
            want_loss += r * r / 4.0;
            let g = metric_cosine_backward(ea, eb, &factor, 2.0 * r / 4.0).unwrap();
            for (w, x) in want.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *w += x;
            }
        }
        assert!((loss - want_loss).abs() < 1e-15);
        for (x, y) in grad.as_slice().iter().zip(want.as_slice()) {
            assert!((x - y).abs() < 1e-14, "{x} vs {y}");
        }
        assert!((obj.val_loss(&factor).unwrap() - (crate::metric::metric_cosine(table.embedding(0), table.embedding(3), &factor).unwrap() - 0.6).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn fit_respects_epoch_cap_and_snapshot() {
        let table = tiny_table();
        let train = [0, 1, 2, 3];
        let val = [4];
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            max_epochs: 40,
            ..Default::default()
        };
        let mut obj = PairObjective::new(&table, &train, &val).unwrap();
        let out = fit(&mut obj, initial_factor(3, 1, &cfg), &cfg).unwrap();
        assert!(out.epochs_run <= 40);
        let min_trace = out.trace.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        assert!(out.best_val_loss <= min_trace);
        let check = obj.val_loss(&out.factor).unwrap();
        assert_eq!(check, out.best_val_loss);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = TrainConfig { seed: 5, folds: 6, ..Default::default() };
        let a = initial_factor(8, 2, &cfg);
        assert_eq!(a, initial_factor(8, 2, &cfg));
        assert_ne!(a, initial_factor(8, 3, &cfg));
        let bound = 1.0 / 8f64.sqrt();
        assert!(a.matrix().as_slice().iter().all(|v| v.abs() <= bound));
        let other_lr = TrainConfig { learning_rate: 1e-7, ..cfg.clone() };
        assert_eq!(a, initial_factor(8, 2, &other_lr));
    }
}
