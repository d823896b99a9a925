//! Multi-field records: schema, vocabularies, encoding, folds and a
//! synthetic generator with a planted interaction.

mod folds;
mod schema;
mod synthetic;
mod transform;
mod vocab;

pub use folds::{make_folds, Fold, FoldPlan};
pub use schema::{FieldKind, FieldSchema, FieldSpec};
pub use synthetic::{generate_synthetic, PlantedRule, SyntheticDataset, SyntheticSpec};
pub use transform::{binarize_rating, discretize_integer, parse_integer};
pub use vocab::{EncodedInstance, FieldVocab, Vocabulary, VocabularyBuilder, UNKNOWN_ID};

use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("no fields")]
    NoFields,
    #[error("duplicate field name `{0}`")]
    DuplicateField(String),
    #[error("record has {found} fields, schema expects {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("field `{field}`: `{value}` is not an integer")]
    InvalidInteger { field: String, value: String },
    #[error("rating {0} is outside 1..=5")]
    InvalidRating(i64),
    #[error("cannot split {n} records into {k} folds")]
    InvalidFolds { n: usize, k: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSynthetic(String),
    #[error("field `{field}`: {detail}")]
    InvalidVocabulary { field: String, detail: String },
    #[error("feature id {id} is not valid for field {field}")]
    IdOutOfRange { field: usize, id: u32 },
}

/// One raw record: a binary label and one string per schema field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub label: u8,
    pub fields: alloc::vec::Vec<String>,
}
