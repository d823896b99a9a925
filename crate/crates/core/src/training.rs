//! Composite objective, ablation wiring and the mini-batch training loop.
//!
//! The per-batch objective is `L1 - λ_d * Ld + λ_n * Σθ²` where `L1` is the
//! mean clipped log loss, `Ld` the mean attention-weighted diversity and the
//! squared norm runs over every regularized tensor (biases excluded).
//!
//! Batches are cut into fixed-size chunks. Each chunk accumulates its own
//! gradient and the chunk results are reduced in chunk order, so the result
//! does not depend on how an [`Executor`] schedules the chunks.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;

use crate::adam::{AdamConfig, AdamState};
use crate::data::EncodedInstance;
use crate::init::stream_rng;
use crate::metrics;
use crate::model::{record_instance, ConfigError, Model, ModelSpec, ParamGroup, ParameterSet, RecordOptions};
use crate::tape::{clipped_log_loss, OpKind, Tape};
use crate::tensor::{NumericsError, Tensor};

pub const DEFAULT_CLIP: f64 = 1e-7;
pub const DEFAULT_CHUNK: usize = 32;
const SHUFFLE_STREAM: u64 = 0x5_0000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("training split is empty")]
    EmptyTrain,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("loss diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    #[default]
    Full,
    NoDiversity,
    NoAttention,
    NoDeep,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoDiversity, Variant::NoAttention, Variant::NoDeep];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoDiversity => "no_diversity",
            Variant::NoAttention => "no_attention",
            Variant::NoDeep => "no_deep",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ConfigError::Invalid(alloc::format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda_d: f64,
    pub lambda_n: f64,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub variant: Variant,
    pub seed: u64,
    pub clip: f64,
    /// Stop after this many epochs without a validation log-loss
    /// improvement and keep the best parameters. `None` runs every epoch.
    pub patience: Option<usize>,
    /// Instances per gradient chunk.
    pub chunk_size: usize,
    /// After every step, rescale embedding rows and interaction-layer weight
    /// rows whose Euclidean norm exceeds this bound. Off by default.
    pub max_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_d: 0.7,
            lambda_n: 1e-5,
            adam: AdamConfig::default(),
            epochs: 10,
            batch_size: 4096,
            variant: Variant::Full,
            seed: 0,
            clip: DEFAULT_CLIP,
            patience: None,
            chunk_size: DEFAULT_CHUNK,
            max_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |what: &str| Err(ConfigError::Invalid(String::from(what)));
        if !(self.lambda_d >= 0.0 && self.lambda_d.is_finite()) {
            return bad("lambda_d must be a finite non-negative number");
        }
        if !(self.lambda_n >= 0.0 && self.lambda_n.is_finite()) {
            return bad("lambda_n must be a finite non-negative number");
        }
        if !(self.adam.learning_rate > 0.0 && self.adam.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 || self.chunk_size == 0 {
            return bad("batch and chunk sizes must be positive");
        }
        if !(self.clip > 0.0 && self.clip < 0.5) {
            return bad("prediction clip must lie in (0, 0.5)");
        }
        if self.max_norm.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return bad("max norm must be positive");
        }
        if self.patience == Some(0) {
            return bad("patience must be positive");
        }
        Ok(())
    }
}

/// Model structure and objective after applying an ablation variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Wiring {
    pub spec: ModelSpec,
    pub lambda_d: f64,
    /// Whether diversity is computed at all. When false `Ld` is reported
    /// as zero.
    pub diversity: bool,
}

pub fn apply_variant(base: &ModelSpec, config: &TrainConfig) -> Result<Wiring, ConfigError> {
    let mut spec = base.clone();
    let mut lambda_d = config.lambda_d;
    let mut diversity = true;
    match config.variant {
        Variant::Full => {}
        Variant::NoDiversity => {
            spec.dein.attention = false;
            lambda_d = 0.0;
            diversity = false;
        }
        Variant::NoAttention => spec.dein.attention = false,
        Variant::NoDeep => spec.mlp = None,
    }
    spec.validate()?;
    Ok(Wiring {
        spec,
        lambda_d,
        diversity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l1: f64,
    pub ld: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(l1: f64, ld: f64, reg: f64, lambda_d: f64) -> Self {
        Self {
            l1,
            ld,
            reg,
            total: l1 - lambda_d * ld + reg,
        }
    }
}

/// Mean clipped binary cross-entropy.
pub fn log_loss(predictions: &[f64], labels: &[u8], clip: f64) -> Result<f64, TrainError> {
    if predictions.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    if predictions.len() != labels.len() {
        return Err(NumericsError::ShapeMismatch {
            op: "log_loss",
            detail: alloc::format!("{} predictions vs {} labels", predictions.len(), labels.len()),
        }
        .into());
    }
    let sum: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| clipped_log_loss(p, f64::from(y), clip))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// Mean instance diversity total over a batch.
pub fn diversity_loss(totals: &[f64]) -> Result<f64, TrainError> {
    if totals.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    Ok(totals.iter().sum::<f64>() / totals.len() as f64)
}

/// Schedules independent chunk computations. Results must come back in
/// index order.
pub trait Executor: Sync {
    fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

struct ChunkOut {
    l1: f64,
    ld: f64,
    grads: Option<Vec<Tensor>>,
}

fn chunk_pass(
    params: &ParameterSet,
    wiring: &Wiring,
    insts: &[EncodedInstance],
    clip: f64,
    seed_scale: Option<f64>,
    fault: Option<(OpKind, f64)>,
) -> Result<ChunkOut, NumericsError> {
    let mut out = ChunkOut {
        l1: 0.0,
        ld: 0.0,
        grads: seed_scale.map(|_| params.zeros_like()),
    };
    let opts = RecordOptions {
        diversity: wiring.diversity,
    };
    for inst in insts {
        let mut tape = Tape::new();
        if let Some((kind, factor)) = fault {
            tape.inject_fault(kind, factor);
        }
        let g = record_instance(params, &mut tape, inst, opts)?;
        let l = tape.log_loss(g.prediction, inst.label_f64(), clip)?;
        out.l1 += tape.scalar(l);
        let mut objective = l;
        if let Some(d) = g.diversity_total {
            out.ld += tape.scalar(d);
            // With λ_d = 0 the diversity path stays off the gradient
            // entirely, so the update matches a model without it bit for bit.
            if wiring.lambda_d != 0.0 {
                let t = tape.scale(d, -wiring.lambda_d)?;
                objective = tape.add(l, t)?;
            }
        }
        if let (Some(grads), Some(s)) = (out.grads.as_mut(), seed_scale) {
            tape.backward_scaled(objective, s, grads)?;
        }
    }
    Ok(out)
}

fn run_chunks<E: Executor>(
    params: &ParameterSet,
    wiring: &Wiring,
    batch: &[EncodedInstance],
    config: &TrainConfig,
    with_grad: bool,
    fault: Option<(OpKind, f64)>,
    exec: &E,
) -> Result<(f64, f64, Option<Vec<Tensor>>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let q = batch.len() as f64;
    let chunks: Vec<&[EncodedInstance]> = batch.chunks(config.chunk_size).collect();
    let scale = with_grad.then_some(1.0 / q);
    let results = exec.map(chunks.len(), |i| chunk_pass(params, wiring, chunks[i], config.clip, scale, fault));
    let (mut l1, mut ld) = (0.0, 0.0);
    let mut grads: Option<Vec<Tensor>> = None;
    for r in results {
        let r = r?;
        l1 += r.l1;
        ld += r.ld;
        match (&mut grads, r.grads) {
            (None, Some(g)) => grads = Some(g),
            (Some(acc), Some(g)) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    a.add_assign(b)?;
                }
            }
            _ => {}
        }
    }
    Ok((l1 / q, ld / q, grads))
}

fn regularizer(params: &ParameterSet, lambda_n: f64) -> f64 {
    if lambda_n == 0.0 {
        0.0
    } else {
        lambda_n * params.squared_norm()
    }
}

/// Forward-only objective of one batch.
pub fn composite_loss<E: Executor>(
    params: &ParameterSet,
    wiring: &Wiring,
    batch: &[EncodedInstance],
    config: &TrainConfig,
    exec: &E,
) -> Result<LossBreakdown, TrainError> {
    let (l1, ld, _) = run_chunks(params, wiring, batch, config, false, None, exec)?;
    Ok(LossBreakdown::new(l1, ld, regularizer(params, config.lambda_n), wiring.lambda_d))
}

/// Objective of one batch and its gradient with respect to every tensor of
/// `params`, in storage order.
pub fn loss_and_gradient<E: Executor>(
    params: &ParameterSet,
    wiring: &Wiring,
    batch: &[EncodedInstance],
    config: &TrainConfig,
    exec: &E,
) -> Result<(LossBreakdown, Vec<Tensor>), TrainError> {
    gradient_with_fault(params, wiring, batch, config, None, exec)
}

/// [`loss_and_gradient`] with a backward rule deliberately scaled, for
/// checking that gradient checks notice.
pub(crate) fn gradient_with_fault<E: Executor>(
    params: &ParameterSet,
    wiring: &Wiring,
    batch: &[EncodedInstance],
    config: &TrainConfig,
    fault: Option<(OpKind, f64)>,
    exec: &E,
) -> Result<(LossBreakdown, Vec<Tensor>), TrainError> {
    let (l1, ld, grads) = run_chunks(params, wiring, batch, config, true, fault, exec)?;
    let mut grads = grads.expect("gradients requested");
    if config.lambda_n != 0.0 {
        let c = 2.0 * config.lambda_n;
        for ((g, p), info) in grads.iter_mut().zip(params.tensors()).zip(params.infos()) {
            if info.regularized {
                for (gi, pi) in g.data_mut().iter_mut().zip(p.data()) {
                    *gi += c * pi;
                }
            }
        }
    }
    let breakdown = LossBreakdown::new(l1, ld, regularizer(params, config.lambda_n), wiring.lambda_d);
    Ok((breakdown, grads))
}

/// Predictions for every instance, chunked like training.
pub fn predict_all<E: Executor>(
    model: &Model,
    insts: &[EncodedInstance],
    chunk_size: usize,
    exec: &E,
) -> Result<Vec<f64>, NumericsError> {
    let chunks: Vec<&[EncodedInstance]> = insts.chunks(chunk_size.max(1)).collect();
    let parts = exec.map(chunks.len(), |i| {
        chunks[i].iter().map(|inst| model.predict(inst)).collect::<Result<Vec<f64>, _>>()
    });
    let mut out = Vec::with_capacity(insts.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// The batch order of one epoch, a pure function of `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, SHUFFLE_STREAM + epoch as u64));
    idx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Instance-weighted mean of the per-batch breakdowns seen during the
    /// epoch, each measured before its update.
    pub train: LossBreakdown,
    pub val_logloss: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    /// Breakdown on the full training split before any update.
    pub initial: LossBreakdown,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept when early stopping is on.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    pub adam: AdamState,
    pub epochs_run: usize,
    pub history: History,
}

/// Training state that can be advanced one epoch at a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub wiring: Wiring,
    pub config: TrainConfig,
    pub model: Model,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
}

impl Trainer {
    /// Fresh parameters for `base` under `config.variant`.
    pub fn new(base: &ModelSpec, config: &TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let wiring = apply_variant(base, config)?;
        let model = Model::new(wiring.spec.clone(), config.seed)?;
        Self::resume(wiring, config.clone(), model, None, 0)
    }

    /// Continues from saved parameters and optimizer state.
    pub fn resume(
        wiring: Wiring,
        config: TrainConfig,
        model: Model,
        adam: Option<AdamState>,
        epoch: usize,
    ) -> Result<Self, TrainError> {
        config.validate()?;
        if model.spec != wiring.spec {
            return Err(ConfigError::Invalid("model structure does not match the variant wiring".into()).into());
        }
        let adam = adam.unwrap_or_else(|| AdamState::new(config.adam, model.params.tensors()));
        Ok(Self {
            wiring,
            config,
            model,
            adam,
            epoch,
        })
    }

    pub fn breakdown<E: Executor>(&self, data: &[EncodedInstance], exec: &E) -> Result<LossBreakdown, TrainError> {
        composite_loss(&self.model.params, &self.wiring, data, &self.config, exec)
    }

    /// Runs one shuffled pass over `train` and returns the running breakdown.
    pub fn run_epoch<E: Executor>(&mut self, train: &[EncodedInstance], exec: &E) -> Result<LossBreakdown, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptyTrain);
        }
        let epoch = self.epoch + 1;
        let order = epoch_order(train.len(), self.config.seed, epoch);
        let mut acc = LossBreakdown::default();
        let mut batch = Vec::with_capacity(self.config.batch_size.min(train.len()));
        for (b, ids) in order.chunks(self.config.batch_size).enumerate() {
            batch.clear();
            batch.extend(ids.iter().map(|&i| train[i].clone()));
            let diverged = TrainError::Diverged { epoch, batch: b + 1 };
            let (loss, grads) = match loss_and_gradient(&self.model.params, &self.wiring, &batch, &self.config, exec) {
                Ok(v) => v,
                Err(TrainError::Numerics(NumericsError::NonFinite { .. })) => return Err(diverged),
                Err(e) => return Err(e),
            };
            if !loss.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(diverged);
            }
            let w = ids.len() as f64 / train.len() as f64;
            acc.l1 += w * loss.l1;
            acc.ld += w * loss.ld;
            acc.reg += w * loss.reg;
            self.adam.step(self.model.params.tensors_mut(), &grads)?;
            if let Some(c) = self.config.max_norm {
                project_rows(&mut self.model.params, c);
            }
        }
        self.epoch = epoch;
        Ok(LossBreakdown::new(acc.l1, acc.ld, acc.reg, self.wiring.lambda_d))
    }

    /// Log loss and AUC on `data`. AUC is `None` for single-class data.
    pub fn evaluate<E: Executor>(
        &self,
        data: &[EncodedInstance],
        exec: &E,
    ) -> Result<(Option<f64>, Option<f64>), TrainError> {
        if data.is_empty() {
            return Ok((None, None));
        }
        let preds = predict_all(&self.model, data, self.config.chunk_size, exec)?;
        let labels: Vec<u8> = data.iter().map(|i| i.label).collect();
        let ll = log_loss(&preds, &labels, self.config.clip)?;
        Ok((Some(ll), metrics::auc(&preds, &labels).ok()))
    }
}

/// Trains a fresh model on `train`, scoring `validation` after each epoch.
pub fn train<E: Executor>(
    base: &ModelSpec,
    train: &[EncodedInstance],
    validation: &[EncodedInstance],
    config: &TrainConfig,
    exec: &E,
) -> Result<TrainOutcome, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    let mut trainer = Trainer::new(base, config)?;
    let mut history = History {
        initial: trainer.breakdown(train, exec)?,
        ..History::default()
    };
    let mut best: Option<(f64, usize, ParameterSet, AdamState)> = None;
    let mut stale = 0;
    for _ in 0..config.epochs {
        let train_loss = trainer.run_epoch(train, exec)?;
        let (val_logloss, val_auc) = trainer.evaluate(validation, exec)?;
        history.epochs.push(EpochRecord {
            epoch: trainer.epoch,
            train: train_loss,
            val_logloss,
            val_auc,
        });
        let (Some(patience), Some(ll)) = (config.patience, val_logloss) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| ll < b.0) {
            best = Some((ll, trainer.epoch, trainer.model.params.clone(), trainer.adam.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    let epochs_run = trainer.epoch;
    if let Some((_, epoch, params, adam)) = best {
        trainer.model.params = params;
        trainer.adam = adam;
        history.best_epoch = Some(epoch);
    }
    Ok(TrainOutcome {
        model: trainer.model,
        adam: trainer.adam,
        epochs_run,
        history,
    })
}

/// Scales every embedding row and every interaction-layer weight row down to
/// Euclidean norm `bound` if it is longer.
pub fn project_rows(params: &mut ParameterSet, bound: f64) {
    let targets: Vec<usize> = params
        .infos()
        .iter()
        .enumerate()
        .filter(|(_, p)| matches!(p.group, ParamGroup::Embedding | ParamGroup::Cin))
        .map(|(i, _)| i)
        .collect();
    for i in targets {
        let t = &mut params.tensors_mut()[i];
        let cols = t.cols();
        for row in t.data_mut().chunks_mut(cols) {
            let norm = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>());
            if norm > bound {
                let s = bound / norm;
                row.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
}

/// Names of the tensors of a spec, for reports.
pub fn param_names(spec: &ModelSpec) -> Vec<String> {
    spec.param_infos().into_iter().map(|p| p.name).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deepnet::MlpConfig;
    use crate::dein::DeinConfig;
    use alloc::vec;

    fn tiny_spec() -> ModelSpec {
        ModelSpec {
            field_sizes: vec![3, 3, 4],
            embed_dim: 4,
            dein: DeinConfig::uniform(2, 3, true, 4),
            mlp: Some(MlpConfig { depth: 2, width: 5 }),
        }
    }

    fn data(n: usize) -> Vec<EncodedInstance> {
        (0..n)
            .map(|i| EncodedInstance {
                fields: vec![vec![(i % 3) as u32], vec![3 + (i % 2) as u32], vec![6 + (i % 4) as u32]],
                label: u8::from(i % 3 == i % 2),
            })
            .collect()
    }

    #[test]
    fn log_loss_examples() {
        assert!((log_loss(&[0.5], &[1], DEFAULT_CLIP).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
        let near = log_loss(&[1.0, 0.0], &[1, 0], DEFAULT_CLIP).unwrap();
        assert!((near - 1e-7).abs() < 1e-12);
        let p = 0.8;
        let pair = log_loss(&[p, 1.0 - p], &[1, 0], DEFAULT_CLIP).unwrap();
        assert!((pair - log_loss(&[p], &[1], DEFAULT_CLIP).unwrap()).abs() < 1e-15);
        assert_eq!(log_loss(&[], &[], DEFAULT_CLIP), Err(TrainError::EmptyBatch));
    }

    #[test]
    fn diversity_loss_is_a_mean() {
        assert_eq!(diversity_loss(&[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(diversity_loss(&[2.5; 4]).unwrap(), 2.5);
        assert!(diversity_loss(&[]).is_err());
    }

    #[test]
    fn breakdown_arithmetic() {
        let b = LossBreakdown::new(0.5, 0.2, 0.01, 0.7);
        assert!((b.total - 0.37).abs() < 1e-15);
        assert_eq!(LossBreakdown::new(0.3, 9.0, 0.0, 0.0).total, 0.3);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("xdeepfm".parse::<Variant>().is_err());
    }

    #[test]
    fn no_diversity_wiring() {
        let cfg = TrainConfig {
            variant: Variant::NoDiversity,
            ..TrainConfig::default()
        };
        let w = apply_variant(&tiny_spec(), &cfg).unwrap();
        assert_eq!(w.lambda_d, 0.0);
        assert!(!w.spec.dein.attention);
        let b = composite_loss(&ParameterSet::init(&w.spec, 0), &w, &data(8), &cfg, &Sequential).unwrap();
        assert_eq!(b.ld, 0.0);
    }

    #[test]
    fn chunking_does_not_change_the_sum_much() {
        let spec = tiny_spec();
        let cfg = TrainConfig::default();
        let w = apply_variant(&spec, &cfg).unwrap();
        let p = ParameterSet::init(&w.spec, 1);
        let d = data(20);
        let (a, ga) = loss_and_gradient(&p, &w, &d, &cfg, &Sequential).unwrap();
        let cfg1 = TrainConfig { chunk_size: 1, ..cfg };
        let (b, gb) = loss_and_gradient(&p, &w, &d, &cfg1, &Sequential).unwrap();
        assert!((a.total - b.total).abs() < 1e-12);
        for (x, y) in ga.iter().zip(&gb) {
            for (u, v) in x.data().iter().zip(y.data()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_lowers_the_loss() {
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            adam: AdamConfig {
                learning_rate: 0.01,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let d = data(48);
        let a = train(&tiny_spec(), &d, &d[..8], &cfg, &Sequential).unwrap();
        let b = train(&tiny_spec(), &d, &d[..8], &cfg, &Sequential).unwrap();
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.history.epochs.len(), 5);
        assert!(a.history.epochs[4].train.l1 < a.history.initial.l1);
    }

    #[test]
    fn epoch_order_is_a_pure_function() {
        assert_eq!(epoch_order(50, 3, 2), epoch_order(50, 3, 2));
        assert_ne!(epoch_order(50, 3, 2), epoch_order(50, 3, 1));
        let mut o = epoch_order(50, 3, 2);
        o.sort_unstable();
        assert_eq!(o, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn empty_train_is_rejected() {
        let err = train(&tiny_spec(), &[], &[], &TrainConfig::default(), &Sequential).unwrap_err();
        assert_eq!(err, TrainError::EmptyTrain);
    }
}
