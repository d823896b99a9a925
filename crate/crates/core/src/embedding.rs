//! Field embedding: each field row is the sum of its active ids' rows.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::data::EncodedInstance;
use crate::tape::{Tape, Var};
use crate::tensor::{mismatch, NumericsError, Tensor};

pub const DEFAULT_EMBED_DIM: usize = 10;

/// Active rows per field, as consumed by [`Tape::gather`].
pub fn field_groups(inst: &EncodedInstance) -> Vec<Vec<usize>> {
    inst.fields
        .iter()
        .map(|ids| ids.iter().map(|&i| i as usize).collect())
        .collect()
}

/// Records the field matrix `[m, d]` and its flattened form `[m * d]`.
pub fn record_embedding(tape: &mut Tape<'_>, table: Var, inst: &EncodedInstance) -> Result<(Var, Var), NumericsError> {
    let x0 = tape.gather(table, field_groups(inst))?;
    let len = tape.value(x0).len();
    let flat = tape.reshape(x0, &[len])?;
    Ok((x0, flat))
}

/// Field matrix and concatenated embedding vector of one instance.
pub fn embed_instance(inst: &EncodedInstance, table: &Tensor) -> Result<(Tensor, Tensor), NumericsError> {
    let mut tape = Tape::new();
    let t = tape.param(0, table)?;
    let (x0, flat) = record_embedding(&mut tape, t, inst)?;
    Ok((tape.tensor(x0), tape.tensor(flat)))
}

/// Gradient of the table given the gradient of the field matrix, as sparse
/// rows keyed by global id.
pub fn embed_backward(inst: &EncodedInstance, grad_x0: &Tensor) -> Result<BTreeMap<u32, Vec<f64>>, NumericsError> {
    if grad_x0.rank() != 2 || grad_x0.rows() != inst.fields.len() {
        return Err(mismatch(
            "embed_backward",
            alloc::format!("{} fields vs gradient {:?}", inst.fields.len(), grad_x0.shape()),
        ));
    }
    let d = grad_x0.cols();
    let mut rows: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (f, ids) in inst.fields.iter().enumerate() {
        for &id in ids {
            let acc = rows.entry(id).or_insert_with(|| alloc::vec![0.0; d]);
            for (a, g) in acc.iter_mut().zip(grad_x0.row(f)) {
                *a += g;
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn inst(fields: Vec<Vec<u32>>) -> EncodedInstance {
        EncodedInstance { fields, label: 0 }
    }

    #[test]
    fn multi_hot_rows_are_summed() {
        let table = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let (x0, _) = embed_instance(&inst(vec![vec![0, 1]]), &table).unwrap();
        assert_eq!(x0.data(), &[1.0, 1.0]);
    }

    #[test]
    fn concatenation() {
        let table = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let (x0, flat) = embed_instance(&inst(vec![vec![0], vec![1]]), &table).unwrap();
        assert_eq!(x0.shape(), &[2, 2]);
        assert_eq!(flat.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(x0.row(1), table.row(1));
    }

    #[test]
    fn out_of_range_id() {
        let table = Tensor::zeros(&[2, 2]);
        assert!(embed_instance(&inst(vec![vec![2]]), &table).is_err());
    }

    #[test]
    fn backward_scatter() {
        let g = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let rows = embed_backward(&inst(vec![vec![0, 3], vec![3]]), &g).unwrap();
        assert_eq!(rows[&0], vec![1.0, 2.0]);
        assert_eq!(rows[&3], vec![4.0, 6.0]);
        assert!(!rows.contains_key(&1));
        assert!(embed_backward(&inst(vec![vec![0]]), &g).is_err());
    }
}
