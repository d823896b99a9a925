//! End-to-end gradient check of the composite objective on a tiny model.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::EncodedInstance;
use crate::deepnet::MlpConfig;
use crate::dein::DeinConfig;
use crate::gradcheck::{grad_check, GradCheckOptions};
use crate::init::{init_tensor, stream_rng, InitScheme};
use crate::model::{record_instance, ModelSpec, ParamGroup, ParameterSet, RecordOptions};
use crate::tape::{OpKind, Tape};
use crate::training::{apply_variant, composite_loss, gradient_with_fault, Sequential, TrainConfig, TrainError};

/// Smallest |pre-activation| allowed at a checked point, so that no ReLU
/// kink lies within a finite-difference step.
pub const RELU_MARGIN: f64 = 1e-3;
/// Predictions must stay this far inside `(0, 1)` so the loss clip is inactive.
const PREDICTION_MARGIN: f64 = 1e-4;
/// Spread of the random parameter point being checked.
const CHECK_STD: f64 = 0.3;
const MAX_ATTEMPTS: u64 = 200;

/// Three fields, `d = 4`, two layers of three maps, attention hidden 4 and a
/// 2 x 5 MLP.
pub fn tiny_spec() -> ModelSpec {
    ModelSpec {
        field_sizes: vec![3, 4, 5],
        embed_dim: 4,
        dein: DeinConfig::uniform(2, 3, true, 4),
        mlp: Some(MlpConfig { depth: 2, width: 5 }),
    }
}

/// A handful of instances covering one-hot, multi-hot and shared ids.
pub fn tiny_batch() -> Vec<EncodedInstance> {
    let inst = |a: &[u32], b: &[u32], c: &[u32], label| EncodedInstance {
        fields: vec![a.to_vec(), b.to_vec(), c.to_vec()],
        label,
    };
    vec![
        inst(&[1], &[3], &[8], 1),
        inst(&[2], &[4, 5], &[9], 0),
        inst(&[0], &[6], &[7, 10, 11], 1),
        inst(&[1, 2], &[3], &[11], 0),
        inst(&[1], &[5, 6], &[8, 9], 1),
    ]
}

/// Operation whose backward rule `--corrupt` style hooks scale, by group
/// name.
pub fn corruption_target(name: &str) -> Option<OpKind> {
    Some(match name {
        "dein" | "cin" => OpKind::OuterHadamard,
        "diversity" => OpKind::RowDistances,
        "attention" => OpKind::Softmax,
        "mlp" | "deep" => OpKind::Relu,
        "embedding" => OpKind::Gather,
        "output" => OpKind::Sigmoid,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub group: ParamGroup,
    pub max_rel_error: f64,
    pub coords: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheck {
    pub groups: Vec<GroupError>,
    pub max_rel_error: f64,
    /// Seed of the accepted parameter point.
    pub point_seed: u64,
}

/// Random point with every tensor (biases included) drawn from
/// `N(0, CHECK_STD²)`, so no gradient is trivially zero.
fn random_point(spec: &ModelSpec, seed: u64) -> ParameterSet {
    let mut p = ParameterSet::init(spec, seed);
    for (i, t) in p.tensors_mut().iter_mut().enumerate() {
        let shape = t.shape().to_vec();
        *t = init_tensor(&shape, InitScheme::Normal { std_dev: CHECK_STD }, &mut stream_rng(seed, 0xC0DE + i as u64));
    }
    p
}

fn point_is_smooth(params: &ParameterSet, batch: &[EncodedInstance], diversity: bool) -> bool {
    batch.iter().all(|inst| {
        let mut tape = Tape::new();
        let Ok(g) = record_instance(params, &mut tape, inst, RecordOptions { diversity }) else {
            return false;
        };
        let p = tape.scalar(g.prediction);
        tape.relu_margin().is_none_or(|m| m >= RELU_MARGIN) && p > PREDICTION_MARGIN && p < 1.0 - PREDICTION_MARGIN
    })
}

/// Compares analytic and central-difference gradients of the composite
/// objective for every parameter group of `spec` under `config.variant`.
/// `fault` scales one backward rule to show the check is sensitive.
pub fn check_model_gradients(
    spec: &ModelSpec,
    batch: &[EncodedInstance],
    config: &TrainConfig,
    opts: GradCheckOptions,
    fault: Option<(OpKind, f64)>,
) -> Result<ModelCheck, TrainError> {
    let wiring = apply_variant(spec, config)?;
    let (params, point_seed) = (0..MAX_ATTEMPTS)
        .map(|k| opts.seed.wrapping_add(k))
        .map(|s| (random_point(&wiring.spec, s), s))
        .find(|(p, _)| point_is_smooth(p, batch, wiring.diversity))
        .ok_or_else(|| crate::model::ConfigError::Invalid("no smooth parameter point found".into()))?;
    let (_, analytic) = gradient_with_fault(&params, &wiring, batch, config, fault, &Sequential)?;

    let mut probe = params.clone();
    let mut tensors = params.tensors().to_vec();
    let report = grad_check(
        &mut tensors,
        &analytic,
        |t| {
            probe.tensors_mut().clone_from_slice(t);
            composite_loss(&probe, &wiring, batch, config, &Sequential).map_or(f64::NAN, |b| b.total)
        },
        opts,
    )?;

    let mut groups = Vec::new();
    for group in ParamGroup::ALL {
        let members: Vec<usize> = params
            .infos()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.group == group)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        let max_rel_error = members.iter().map(|&i| report.per_tensor[i]).fold(0.0, f64::max);
        let coords = members.iter().map(|&i| params.tensors()[i].len().min(opts.max_coords)).sum();
        groups.push(GroupError {
            group,
            max_rel_error,
            coords,
        });
    }
    Ok(ModelCheck {
        groups,
        max_rel_error: report.max_rel_error,
        point_seed,
    })
}
