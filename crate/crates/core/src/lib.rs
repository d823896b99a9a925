//! Core of a diversity-regularized CIN click-through-rate model.
//!
//! The crate is `no_std` and only needs `alloc`. It holds everything that is
//! pure computation: dense tensors and a reverse-mode tape, the field
//! encoding pipeline, the three model branches (interaction network with
//! ensemble diversity and attention, deep MLP, linear term), the composite
//! objective, Adam, evaluation metrics and the cross-validation driver.
//!
//! File formats, checkpoints, thread pools and the command-line tool live in
//! the `dexfm` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod adam;
pub mod check;
pub mod cv;
pub mod data;
pub mod deepnet;
pub mod dein;
pub mod embedding;
pub mod gradcheck;
pub mod init;
pub mod metrics;
pub mod model;
pub mod tape;
pub mod tensor;
pub mod training;

pub use adam::AdamState;
pub use data::{EncodedInstance, FieldKind, FieldSchema, FoldPlan, Record, Vocabulary};
pub use dein::DeinConfig;
pub use model::{Model, ModelSpec, ParameterSet};
pub use tape::{Tape, Var};
pub use tensor::{NumericsError, Tensor};
pub use training::{TrainConfig, Variant};
