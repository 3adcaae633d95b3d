//! Minibatch training shared by the sequence model and the baseline:
//! optimizers, deterministic gradient reduction, early stopping and resume.

use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError, ParamLayout};
use crate::decoding::DecodeError;
use crate::instances::stream_rng;
use crate::language::LanguageError;
use crate::linalg;

/// Examples per gradient work unit. Partial sums are reduced in chunk
/// order, so results do not depend on the thread count.
const CHUNK: usize = 8;
const DROPOUT_SALT: u64 = 0xd4_09_0e_75;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite gradient in block {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("example {index}: {source}")]
    Example {
        index: usize,
        #[source]
        source: Box<ModelError>,
    },
    #[error(transparent)]
    Language(#[from] LanguageError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
pub struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, rng: ChaCha8Rng) -> Self {
        Dropout { rate, rng }
    }

    pub fn mask(&mut self, n: usize) -> Vec<f64> {
        let keep = 1.0 / (1.0 - self.rate);
        (0..n).map(|_| if self.rng.random::<f64>() < self.rate { 0.0 } else { keep }).collect()
    }
}

/// A model trained by minimizing the mean per-example loss.
pub trait Objective: Sync {
    type Example: Sync;

    fn layout(&self) -> &ParamLayout;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    /// Loss of one example. When `grad` is given its gradient is added in.
    fn example_loss(&self, example: &Self::Example, dropout: Option<&mut Dropout>, grad: Option<&mut [f64]>)
        -> Result<f64, ModelError>;

    /// Current parameters packaged for saving.
    fn checkpoint(&self) -> Checkpoint;
}

/// Mean loss and mean gradient over `batch`. `dropout` is `(rate, seed,
/// key)`; example `i` draws its masks from stream `key + i`.
pub fn batch_gradient<O: Objective>(
    model: &O,
    batch: &[&O::Example],
    dropout: Option<(f64, u64, u64)>,
) -> Result<(f64, Vec<f64>), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let n = model.params().len();
    let partials: Vec<Result<(f64, Vec<f64>), ModelError>> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grad = vec![0.0; n];
            let mut loss = 0.0;
            for (k, ex) in chunk.iter().enumerate() {
                let i = c * CHUNK + k;
                let mut drop = dropout.map(|(rate, seed, key)| Dropout::new(rate, stream_rng(seed ^ DROPOUT_SALT, key + i as u64)));
                loss += model
                    .example_loss(ex, drop.as_mut(), Some(&mut grad))
                    .map_err(|e| ModelError::Example { index: i, source: Box::new(e) })?;
            }
            Ok((loss, grad))
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; n];
    for p in partials {
        let (l, g) = p?;
        total += l;
        linalg::add_assign(&mut grad, &g);
    }
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    if let Some(block) = model.layout().first_non_finite(&grad) {
        return Err(ModelError::NonFinite(block.to_string()));
    }
    Ok((total * scale, grad))
}

/// Mean loss over a dataset, no dropout.
pub fn mean_loss<O: Objective>(model: &O, data: &[O::Example]) -> Result<f64, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let partials: Vec<Result<f64, ModelError>> = data
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut s = 0.0;
            for (k, ex) in chunk.iter().enumerate() {
                s += model
                    .example_loss(ex, None, None)
                    .map_err(|e| ModelError::Example { index: c * CHUNK + k, source: Box::new(e) })?;
            }
            Ok(s)
        })
        .collect();
    let mut total = 0.0;
    for p in partials {
        total += p?;
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// rho 0.95, eps 1e-6.
    Adadelta,
    /// lr 1e-3, betas 0.9 / 0.999, eps 1e-8.
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adadelta => "adadelta",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "adadelta" => Ok(OptimizerKind::Adadelta),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(format!("unknown optimizer {s:?} (expected adadelta or adam)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    /// Adadelta: running mean of squared gradients. Adam: first moment.
    pub m: Vec<f64>,
    /// Adadelta: running mean of squared updates. Adam: second moment.
    pub v: Vec<f64>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, n: usize) -> Self {
        OptimizerState { kind, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        match self.kind {
            OptimizerKind::Adadelta => {
                let (rho, eps) = (0.95, 1e-6);
                for ((p, g), (eg, ed)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
                    *eg = rho * *eg + (1.0 - rho) * g * g;
                    let dx = -((*ed + eps).sqrt() / (*eg + eps).sqrt()) * g;
                    *ed = rho * *ed + (1.0 - rho) * dx * dx;
                    *p += dx;
                }
            }
            OptimizerKind::Adam => {
                let (lr, b1, b2, eps) = (1e-3, 0.9, 0.999, 1e-8);
                let c1 = 1.0 - f64::powi(b1, self.t as i32);
                let c2 = 1.0 - f64::powi(b2, self.t as i32);
                for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub minibatch: usize,
    /// Dropout rate on embeddings and the output-layer input.
    pub dropout: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Beam width used when the trained model is evaluated.
    pub width: usize,
    /// Apply the feasibility mask in the training and validation losses.
    pub mask: bool,
    /// Rescale minibatch gradients whose norm exceeds this.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            minibatch: 64,
            dropout: 0.2,
            patience: 1,
            max_epochs: 20,
            seed: 0,
            width: 5,
            mask: true,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.minibatch == 0 {
            return Err(ModelError::Config("minibatch must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.width == 0 {
            return Err(ModelError::Config("beam width must be at least 1".into()));
        }
        if self.clip_norm.is_some_and(|c| c <= 0.0) {
            return Err(ModelError::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Wall time; not reproducible.
    pub seconds: f64,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} train_loss={:.9} valid_loss={:.9} seconds={:.3}",
            self.epoch, self.train_loss, self.valid_loss, self.seconds
        )
    }
}

/// History log: one `key=value` line per epoch. The `seconds` field is the
/// only non-deterministic one.
pub fn history_text(history: &[EpochRecord]) -> String {
    history.iter().map(|r| format!("{r}\n")).collect()
}

/// Training run in progress.
pub struct Trainer<O: Objective> {
    model: O,
    config: TrainConfig,
    optimizer: OptimizerState,
    history: Vec<EpochRecord>,
    best_params: Vec<f64>,
    best_epoch: Option<usize>,
}

/// Best-validation model and the per-epoch history.
pub struct TrainOutcome<O> {
    pub model: O,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl<O: Objective> Trainer<O> {
    pub fn new(model: O, config: TrainConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let n = model.params().len();
        let best_params = model.params().to_vec();
        Ok(Trainer { optimizer: OptimizerState::new(config.optimizer, n), model, config, history: Vec::new(), best_params, best_epoch: None })
    }

    pub fn model(&self) -> &O {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn epochs_done(&self) -> usize {
        self.history.len()
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn should_stop(&self) -> bool {
        if self.history.len() >= self.config.max_epochs {
            return true;
        }
        match self.best_epoch {
            Some(best) => self.history.len() - best >= self.config.patience.max(1),
            None => false,
        }
    }

    /// One pass over `train` in a seeded order, then a validation pass.
    pub fn train_epoch(&mut self, train: &[O::Example], valid: &[O::Example]) -> Result<EpochRecord, ModelError> {
        if train.is_empty() || valid.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let start = Instant::now();
        let epoch = self.history.len() + 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream_rng(self.config.seed, epoch as u64));
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(self.config.minibatch).enumerate() {
            let batch: Vec<&O::Example> = idx.iter().map(|&i| &train[i]).collect();
            let key = ((epoch as u64) << 32) + (b * self.config.minibatch) as u64;
            let dropout = (self.config.dropout > 0.0).then_some((self.config.dropout, self.config.seed, key));
            let (loss, mut grad) = batch_gradient(&self.model, &batch, dropout)?;
            if let Some(clip) = self.config.clip_norm {
                let norm = linalg::norm(&grad);
                if norm > clip {
                    grad.iter_mut().for_each(|g| *g *= clip / norm);
                }
            }
            self.optimizer.step(self.model.params_mut(), &grad);
            loss_sum += loss * batch.len() as f64;
        }
        let valid_loss = mean_loss(&self.model, valid)?;
        let record = EpochRecord { epoch, train_loss: loss_sum / train.len() as f64, valid_loss, seconds: start.elapsed().as_secs_f64() };
        let improved = self.best_epoch.is_none_or(|b| valid_loss < self.history[b - 1].valid_loss);
        self.history.push(record);
        if improved {
            self.best_epoch = Some(epoch);
            self.best_params.copy_from_slice(self.model.params());
        }
        Ok(record)
    }

    /// Trains until early stopping or `max_epochs`, calling `on_epoch` after
    /// each epoch.
    pub fn run(
        mut self,
        train: &[O::Example],
        valid: &[O::Example],
        mut on_epoch: impl FnMut(&EpochRecord, &Self) -> Result<(), ModelError>,
    ) -> Result<TrainOutcome<O>, ModelError> {
        while !self.should_stop() {
            let r = self.train_epoch(train, valid)?;
            on_epoch(&r, &self)?;
        }
        Ok(self.finish())
    }

    /// Restores the best-validation parameters.
    pub fn finish(mut self) -> TrainOutcome<O> {
        if self.best_epoch.is_some() {
            self.model.params_mut().copy_from_slice(&self.best_params);
        }
        TrainOutcome { model: self.model, history: self.history, best_epoch: self.best_epoch }
    }

    /// Exact snapshot for resuming: current and best parameters, optimizer
    /// moments and history.
    pub fn state(&self) -> Checkpoint {
        let base = self.model.checkpoint();
        let n = self.model.params().len();
        let mut layout = ParamLayout::new();
        let mut values = Vec::with_capacity(4 * n + 4 * self.history.len());
        for (name, v) in [("params", self.model.params()), ("best", &self.best_params[..]), ("opt_m", &self.optimizer.m), ("opt_v", &self.optimizer.v)] {
            layout.push(name, 1, n);
            values.extend_from_slice(v);
        }
        layout.push("history", self.history.len(), 4);
        for r in &self.history {
            values.extend_from_slice(&[r.epoch as f64, r.train_loss, r.valid_loss, r.seconds]);
        }
        let mut dims = vec![self.optimizer.t as u32, self.best_epoch.unwrap_or(0) as u32];
        dims.extend(base.dims);
        Checkpoint { kind: format!("state:{}", base.kind), dims, catalog_hash: base.catalog_hash, layout, values }
    }

    /// Rebuilds a trainer from [`Trainer::state`]; `model` supplies the
    /// architecture and must match the saved one.
    pub fn resume(mut model: O, config: TrainConfig, state: &Checkpoint) -> Result<Self, ModelError> {
        config.validate()?;
        let base = model.checkpoint();
        if state.kind != format!("state:{}", base.kind) || state.catalog_hash != base.catalog_hash || state.dims.get(2..) != Some(&base.dims[..]) {
            return Err(CheckpointError::Mismatch("resume state does not belong to this model".into()).into());
        }
        let n = model.params().len();
        let blocks = state.layout.blocks();
        let shape_ok = blocks.len() == 5 && blocks[..4].iter().all(|b| b.rows == 1 && b.cols == n) && blocks[4].cols == 4;
        if !shape_ok {
            return Err(CheckpointError::Mismatch("resume state has the wrong block shapes".into()).into());
        }
        let get = |i: usize| &state.values[blocks[i].range()];
        model.params_mut().copy_from_slice(get(0));
        let history = get(4)
            .chunks_exact(4)
            .map(|r| EpochRecord { epoch: r[0] as usize, train_loss: r[1], valid_loss: r[2], seconds: r[3] })
            .collect();
        let optimizer = OptimizerState { kind: config.optimizer, m: get(2).to_vec(), v: get(3).to_vec(), t: state.dims[0] as u64 };
        let best_epoch = (state.dims[1] > 0).then_some(state.dims[1] as usize);
        Ok(Trainer { model, config, optimizer, history, best_params: get(1).to_vec(), best_epoch })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Least squares on scalar pairs: loss (w x - y)^2.
    struct Line {
        layout: ParamLayout,
        w: Vec<f64>,
    }

    impl Line {
        fn new() -> Self {
            let mut layout = ParamLayout::new();
            layout.push("w", 1, 1);
            Line { layout, w: vec![0.0] }
        }
    }

    impl Objective for Line {
        type Example = (f64, f64);
        fn layout(&self) -> &ParamLayout {
            &self.layout
        }
        fn params(&self) -> &[f64] {
            &self.w
        }
        fn params_mut(&mut self) -> &mut [f64] {
            &mut self.w
        }
        fn example_loss(&self, &(x, y): &(f64, f64), _: Option<&mut Dropout>, grad: Option<&mut [f64]>) -> Result<f64, ModelError> {
            let r = self.w[0] * x - y;
            if let Some(g) = grad {
                g[0] += 2.0 * r * x;
            }
            Ok(r * r)
        }
        fn checkpoint(&self) -> Checkpoint {
            Checkpoint { kind: "line".into(), dims: vec![1], catalog_hash: String::new(), layout: self.layout.clone(), values: self.w.clone() }
        }
    }

    fn data() -> Vec<(f64, f64)> {
        (1..=40).map(|i| (i as f64 / 40.0, 3.0 * i as f64 / 40.0)).collect()
    }

    #[test]
    fn duplicated_example_has_the_same_mean_gradient() {
        let m = Line::new();
        let ex = (0.5, 2.0);
        let single = batch_gradient(&m, &[&ex], None).unwrap();
        let double = batch_gradient(&m, &[&ex, &ex], None).unwrap();
        assert_eq!(single, double);
        assert!(matches!(batch_gradient(&m, &[], None), Err(ModelError::EmptyBatch)));
    }

    #[test]
    fn both_optimizers_fit_a_line() {
        for kind in [OptimizerKind::Adam, OptimizerKind::Adadelta] {
            let cfg = TrainConfig { optimizer: kind, minibatch: 1, dropout: 0.0, patience: 1000, max_epochs: 300, ..Default::default() };
            let d = data();
            let out = Trainer::new(Line::new(), cfg).unwrap().run(&d, &d, |_, _| Ok(())).unwrap();
            assert!((out.model.w[0] - 3.0).abs() < 0.05, "{kind}: {}", out.model.w[0]);
        }
    }

    #[test]
    fn stops_patience_epochs_after_best() {
        // Adam keeps overshooting around the optimum once there, so the
        // validation loss eventually stops improving.
        let cfg = TrainConfig { optimizer: OptimizerKind::Adam, minibatch: 1, dropout: 0.0, patience: 1, max_epochs: 10_000, ..Default::default() };
        let d = data();
        let out = Trainer::new(Line::new(), cfg).unwrap().run(&d, &d, |_, _| Ok(())).unwrap();
        assert_eq!(out.history.len(), out.best_epoch.unwrap() + 1);
    }

    #[test]
    fn resume_reproduces_the_history_tail() {
        let cfg = TrainConfig { optimizer: OptimizerKind::Adam, minibatch: 3, dropout: 0.0, patience: 100, max_epochs: 6, ..Default::default() };
        let d = data();
        let full = Trainer::new(Line::new(), cfg.clone()).unwrap().run(&d, &d, |_, _| Ok(())).unwrap();
        let mut t = Trainer::new(Line::new(), cfg.clone()).unwrap();
        for _ in 0..3 {
            t.train_epoch(&d, &d).unwrap();
        }
        let bytes = t.state().to_bytes(true);
        let resumed = Trainer::resume(Line::new(), cfg, &Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        let tail = resumed.run(&d, &d, |_, _| Ok(())).unwrap();
        let strip = |h: &[EpochRecord]| h.iter().map(|r| (r.epoch, r.train_loss, r.valid_loss)).collect::<Vec<_>>();
        assert_eq!(strip(&tail.history), strip(&full.history));
        assert_eq!(tail.model.w, full.model.w);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { minibatch: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { dropout: 1.0, ..Default::default() }.validate().is_err());
        let parsed: TrainConfig = toml::from_str("optimizer = \"adam\"\nminibatch = 8").unwrap();
        assert_eq!((parsed.optimizer, parsed.minibatch, parsed.patience), (OptimizerKind::Adam, 8, 1));
    }
}
