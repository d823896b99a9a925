//! Deep MLP over the concatenated embeddings, the linear term over raw
//! one-hot features, and the sigmoid output unit joining all branches.

use alloc::vec::Vec;

use crate::data::EncodedInstance;
use crate::embedding::field_groups;
use crate::tape::{Tape, Var};
use crate::tensor::{mismatch, NumericsError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpConfig {
    pub depth: usize,
    pub width: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { depth: 2, width: 300 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

/// ReLU layers `x <- relu(W x + b)`.
pub fn record_mlp(tape: &mut Tape<'_>, input: Var, layers: &[(Var, Var)]) -> Result<Var, NumericsError> {
    let mut x = input;
    for &(w, b) in layers {
        let z = tape.matvec(w, x)?;
        let z = tape.add(z, b)?;
        x = tape.relu(z)?;
    }
    Ok(x)
}

/// Sum of the linear weights of every active id. `weights` is `[V, 1]`.
pub fn record_linear(tape: &mut Tape<'_>, weights: Var, inst: &EncodedInstance) -> Result<Var, NumericsError> {
    let per_field = tape.gather(weights, field_groups(inst))?;
    tape.sum(per_field)
}

/// Pre-sigmoid logit and prediction of the output unit. A missing deep
/// branch contributes nothing.
pub fn record_output(
    tape: &mut Tape<'_>,
    x_dein: Var,
    w_dein: Var,
    deep: Option<(Var, Var)>,
    linear: Var,
    bias: Var,
) -> Result<(Var, Var), NumericsError> {
    let mut logit = tape.dot(w_dein, x_dein)?;
    if let Some((x_deep, w_deep)) = deep {
        let t = tape.dot(w_deep, x_deep)?;
        logit = tape.add(logit, t)?;
    }
    logit = tape.add(logit, linear)?;
    let b = tape.reshape(bias, &[])?;
    logit = tape.add(logit, b)?;
    let p = tape.sigmoid(logit)?;
    Ok((logit, p))
}

pub fn mlp_forward(x0: &Tensor, layers: &[DenseLayer]) -> Result<Tensor, NumericsError> {
    let mut tape = Tape::new();
    let x = tape.param(0, x0)?;
    let mut vars = Vec::with_capacity(layers.len());
    for (i, l) in layers.iter().enumerate() {
        vars.push((tape.param(1 + 2 * i, &l.weight)?, tape.param(2 + 2 * i, &l.bias)?));
    }
    let out = record_mlp(&mut tape, x, &vars)?;
    Ok(tape.tensor(out))
}

pub fn linear_forward(inst: &EncodedInstance, weights: &Tensor) -> Result<f64, NumericsError> {
    if weights.rank() != 2 || weights.cols() != 1 {
        return Err(mismatch("linear", alloc::format!("weights must be [V, 1], got {:?}", weights.shape())));
    }
    let mut tape = Tape::new();
    let w = tape.param(0, weights)?;
    let s = record_linear(&mut tape, w, inst)?;
    Ok(tape.scalar(s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputParams {
    pub w_dein: Tensor,
    pub w_deep: Option<Tensor>,
    pub bias: f64,
}

pub fn combine(x_dein: &Tensor, x_deep: Option<&Tensor>, linear: f64, out: &OutputParams) -> Result<f64, NumericsError> {
    let mut tape = Tape::new();
    let xd = tape.constant(x_dein.clone())?;
    let wd = tape.param(0, &out.w_dein)?;
    let deep = match (x_deep, &out.w_deep) {
        (Some(x), Some(w)) => Some((tape.constant(x.clone())?, tape.param(1, w)?)),
        (None, None) => None,
        _ => return Err(mismatch("combine", "deep branch and its weights must both be present")),
    };
    let lin = tape.constant(Tensor::scalar(linear))?;
    let bias = tape.constant(Tensor::scalar(out.bias))?;
    let (_, p) = record_output(&mut tape, xd, wd, deep, lin, bias)?;
    Ok(tape.scalar(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn identity(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data_mut()[i * n + i] = 1.0;
        }
        t
    }

    #[test]
    fn identity_layer_passes_nonnegative_input() {
        let x = Tensor::vector(vec![0.0, 1.5, 3.0]);
        let layer = DenseLayer {
            weight: identity(3),
            bias: Tensor::zeros(&[3]),
        };
        assert_eq!(mlp_forward(&x, &[layer]).unwrap(), x);
    }

    #[test]
    fn zero_weights_clamp() {
        let x = Tensor::vector(vec![-2.0, 1.5, 3.0]);
        for bias in [0.0, -1.0] {
            let layer = DenseLayer {
                weight: Tensor::zeros(&[2, 3]),
                bias: Tensor::full(&[2], bias),
            };
            assert_eq!(mlp_forward(&x, &[layer]).unwrap().data(), &[0.0, 0.0]);
        }
        let bad = DenseLayer {
            weight: Tensor::zeros(&[2, 4]),
            bias: Tensor::zeros(&[2]),
        };
        assert!(mlp_forward(&x, &[bad]).is_err());
    }

    #[test]
    fn sparse_linear_term() {
        let mut w = Tensor::zeros(&[8, 1]);
        let inst = EncodedInstance {
            fields: vec![vec![3], vec![7]],
            label: 1,
        };
        assert_eq!(linear_forward(&inst, &w).unwrap(), 0.0);
        w.data_mut()[3] = 0.5;
        w.data_mut()[7] = -0.2;
        assert!((linear_forward(&inst, &w).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn output_unit() {
        let out = OutputParams {
            w_dein: Tensor::vector(vec![0.0]),
            w_deep: None,
            bias: 0.0,
        };
        let xd = Tensor::vector(vec![5.0]);
        assert_eq!(combine(&xd, None, 0.0, &out).unwrap(), 0.5);
        let out = OutputParams {
            w_dein: Tensor::vector(vec![1.0]),
            ..out
        };
        let p = combine(&xd, None, 0.0, &out).unwrap();
        assert!((p - 0.993_307_149_075_715_1).abs() < 1e-12);
        let mut last = 0.0;
        for b in -20..20 {
            let o = OutputParams {
                bias: b as f64,
                ..out.clone()
            };
            let p = combine(&xd, None, 0.0, &o).unwrap();
            assert!(p > last);
            last = p;
        }
        assert!(combine(&xd, Some(&xd), 0.0, &out).is_err());
    }
}
