//! Cross-validation, variant comparison and feature-map extraction.

use alloc::vec::Vec;

use crate::data::{DataError, EncodedInstance, FieldSchema, Fold, FoldPlan, Record, Vocabulary};
use crate::metrics::{self, MetricsError, TTest};
use crate::model::{Architecture, Model};
use crate::training::{predict_all, train, Executor, History, TrainConfig, TrainError, Variant};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("fold {fold}: {source}")]
    Fold { fold: usize, source: alloc::boxed::Box<EvalError> },
    #[error("layer {layer} out of range 1..={depth}")]
    Layer { layer: usize, depth: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    /// 0-based.
    pub fold: usize,
    pub test_logloss: f64,
    pub test_auc: f64,
    pub history: History,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub variant: Variant,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
}

impl CvReport {
    pub fn aucs(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.test_auc).collect()
    }

    pub fn loglosses(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.test_logloss).collect()
    }

    pub fn mean_auc(&self) -> f64 {
        metrics::mean(&self.aucs())
    }

    pub fn sd_auc(&self) -> f64 {
        metrics::std_dev(&self.aucs())
    }

    pub fn mean_logloss(&self) -> f64 {
        metrics::mean(&self.loglosses())
    }

    pub fn sd_logloss(&self) -> f64 {
        metrics::std_dev(&self.loglosses())
    }
}

fn pick(records: &[Record], idx: &[usize]) -> Vec<Record> {
    idx.iter().map(|&i| records[i].clone()).collect()
}

fn encode_all(vocab: &Vocabulary, schema: &FieldSchema, records: &[Record]) -> Result<Vec<EncodedInstance>, DataError> {
    records.iter().map(|r| vocab.encode(r, schema)).collect()
}

/// Trains on the fold's train split, with a vocabulary built from that
/// split only, and scores its test split.
#[allow(clippy::too_many_arguments)]
pub fn run_fold<E: Executor>(
    records: &[Record],
    schema: &FieldSchema,
    fold: &Fold,
    fold_index: usize,
    arch: &Architecture,
    config: &TrainConfig,
    min_freq: usize,
    exec: &E,
) -> Result<FoldResult, EvalError> {
    let train_raw = pick(records, &fold.train);
    let vocab = Vocabulary::build(&train_raw, schema, min_freq)?;
    let train_set = encode_all(&vocab, schema, &train_raw)?;
    let val_set = encode_all(&vocab, schema, &pick(records, &fold.validation))?;
    let test_set = encode_all(&vocab, schema, &pick(records, &fold.test))?;

    let spec = arch.spec(vocab.field_sizes());
    let outcome = train(&spec, &train_set, &val_set, config, exec)?;
    let preds = predict_all(&outcome.model, &test_set, config.chunk_size, exec).map_err(TrainError::from)?;
    let labels: Vec<u8> = test_set.iter().map(|i| i.label).collect();
    Ok(FoldResult {
        fold: fold_index,
        test_logloss: metrics::logloss_metric(&preds, &labels, config.clip)?,
        test_auc: metrics::auc(&preds, &labels)?,
        history: outcome.history,
    })
}

pub fn cross_validate<E: Executor>(
    records: &[Record],
    schema: &FieldSchema,
    plan: &FoldPlan,
    arch: &Architecture,
    config: &TrainConfig,
    min_freq: usize,
    exec: &E,
) -> Result<CvReport, EvalError> {
    let folds = exec
        .map(plan.folds.len(), |i| {
            run_fold(records, schema, &plan.folds[i], i, arch, config, min_freq, exec).map_err(|e| EvalError::Fold {
                fold: i,
                source: alloc::boxed::Box::new(e),
            })
        })
        .into_iter()
        .collect::<Result<_, _>>()?;
    Ok(CvReport {
        variant: config.variant,
        seed: config.seed,
        folds,
    })
}

/// Paired comparison of two reports over the same folds.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: Variant,
    pub b: Variant,
    pub mean_auc: (f64, f64),
    pub mean_logloss: (f64, f64),
    pub auc_test: Result<TTest, MetricsError>,
    pub logloss_test: Result<TTest, MetricsError>,
}

pub fn compare(a: &CvReport, b: &CvReport, alpha: f64) -> Comparison {
    Comparison {
        a: a.variant,
        b: b.variant,
        mean_auc: (a.mean_auc(), b.mean_auc()),
        mean_logloss: (a.mean_logloss(), b.mean_logloss()),
        auc_test: metrics::paired_t_test(&a.aucs(), &b.aucs(), alpha),
        logloss_test: metrics::paired_t_test(&a.loglosses(), &b.loglosses(), alpha),
    }
}

/// One feature map of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapRow {
    pub instance: usize,
    /// 1-based hidden layer.
    pub layer: usize,
    pub map: usize,
    pub values: Vec<f64>,
}

/// Rows of the selected hidden layers for every instance, instance-major.
pub fn feature_maps(
    model: &Model,
    instances: &[EncodedInstance],
    layers: &[usize],
) -> Result<Vec<FeatureMapRow>, EvalError> {
    let depth = model.spec.dein.depth();
    if let Some(&layer) = layers.iter().find(|&&l| l == 0 || l > depth) {
        return Err(EvalError::Layer { layer, depth });
    }
    let mut rows = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        let trace = model.trace(inst).map_err(TrainError::from)?;
        for &layer in layers {
            let x = &trace.hidden.layers[layer];
            for map in 0..x.rows() {
                rows.push(FeatureMapRow {
                    instance: i,
                    layer,
                    map,
                    values: x.row(map).to_vec(),
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, make_folds, SyntheticSpec};
    use crate::deepnet::MlpConfig;
    use crate::dein::DeinConfig;
    use crate::training::Sequential;
    use alloc::vec;

    fn small() -> (Architecture, TrainConfig) {
        (
            Architecture {
                embed_dim: 3,
                dein: DeinConfig::uniform(1, 2, true, 2),
                mlp: Some(MlpConfig { depth: 1, width: 3 }),
            },
            TrainConfig {
                epochs: 1,
                batch_size: 16,
                ..TrainConfig::default()
            },
        )
    }

    #[test]
    fn two_fold_cv_runs() {
        let ds = generate_synthetic(&SyntheticSpec {
            cardinalities: vec![3, 3],
            n: 60,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let plan = make_folds(ds.records.len(), 2, 1).unwrap();
        let (arch, cfg) = small();
        let a = cross_validate(&ds.records, &ds.schema, &plan, &arch, &cfg, 0, &Sequential).unwrap();
        let b = cross_validate(&ds.records, &ds.schema, &plan, &arch, &cfg, 0, &Sequential).unwrap();
        assert_eq!(a.folds.len(), 2);
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.mean_auc()));
    }

    #[test]
    fn feature_map_rows() {
        let (arch, _) = small();
        let model = Model::new(arch.spec(vec![4, 4]), 0).unwrap();
        let inst = EncodedInstance {
            fields: vec![vec![1], vec![5]],
            label: 0,
        };
        let rows = feature_maps(&model, &[inst.clone(), inst], &[1]).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].values.len(), 3);
        assert!(feature_maps(&model, &[], &[1]).unwrap().is_empty());
        assert_eq!(
            feature_maps(&model, &[], &[2]),
            Err(EvalError::Layer { layer: 2, depth: 1 })
        );
    }
}
