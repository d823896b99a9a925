use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{DataError, FieldKind, FieldSchema, FieldSpec, Record};
use crate::init::stream_rng;

const SYNTHETIC_STREAM: u64 = 0x5EED;

/// Noise-free labelling rule of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantedRule {
    /// Positive iff the token indices of fields `a` and `b` are equal.
    EqualIndices { a: usize, b: usize },
}

impl Default for PlantedRule {
    fn default() -> Self {
        PlantedRule::EqualIndices { a: 0, b: 1 }
    }
}

impl PlantedRule {
    pub fn label(&self, indices: &[usize]) -> u8 {
        match *self {
            PlantedRule::EqualIndices { a, b } => u8::from(indices[a] == indices[b]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Token count per field; its length is the field count.
    pub cardinalities: Vec<usize>,
    pub rule: PlantedRule,
    /// Probability of flipping each label, in `[0, 1)`.
    pub noise_rate: f64,
    pub n: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            cardinalities: alloc::vec![10; 4],
            rule: PlantedRule::default(),
            noise_rate: 0.1,
            n: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub schema: FieldSchema,
    /// Records carrying the noisy labels.
    pub records: Vec<Record>,
    /// Labels from the planted rule before noise.
    pub clean_labels: Vec<u8>,
}

impl SyntheticDataset {
    pub fn flipped(&self) -> usize {
        self.records
            .iter()
            .zip(&self.clean_labels)
            .filter(|(r, &c)| r.label != c)
            .count()
    }
}

/// Draws `n` records with uniform token indices per field; field `i` is
/// named `f{i}` and its tokens `v{index}`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset, DataError> {
    let m = spec.cardinalities.len();
    if m < 2 {
        return Err(DataError::InvalidSynthetic(format!("need at least 2 fields, got {m}")));
    }
    if spec.cardinalities.contains(&0) {
        return Err(DataError::InvalidSynthetic("cardinalities must be positive".into()));
    }
    if !(0.0..1.0).contains(&spec.noise_rate) {
        return Err(DataError::InvalidSynthetic(format!(
            "noise rate {} outside [0, 1)",
            spec.noise_rate
        )));
    }
    let PlantedRule::EqualIndices { a, b } = spec.rule;
    if a >= m || b >= m || a == b {
        return Err(DataError::InvalidSynthetic(format!("rule fields ({a}, {b}) invalid for {m} fields")));
    }
    let schema = FieldSchema::new(
        (0..m)
            .map(|i| FieldSpec {
                name: format!("f{i}"),
                kind: FieldKind::Categorical,
            })
            .collect(),
    )?;
    let mut rng = stream_rng(spec.seed, SYNTHETIC_STREAM);
    let mut records = Vec::with_capacity(spec.n);
    let mut clean_labels = Vec::with_capacity(spec.n);
    let mut idx = alloc::vec![0usize; m];
    for _ in 0..spec.n {
        for (slot, &card) in idx.iter_mut().zip(&spec.cardinalities) {
            *slot = rng.random_range(0..card);
        }
        let clean = spec.rule.label(&idx);
        let flip = rng.random_bool(spec.noise_rate);
        records.push(Record {
            label: clean ^ u8::from(flip),
            fields: idx.iter().map(|i| format!("v{i}")).collect(),
        });
        clean_labels.push(clean);
    }
    Ok(SyntheticDataset {
        schema,
        records,
        clean_labels,
    })
}
