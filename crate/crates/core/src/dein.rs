//! Interaction network with ensemble diversity.
//!
//! Layer `k + 1` crosses every row of `X^k` with every row of `X^0` by
//! Hadamard product and mixes the `e_k * m` products with one weight per
//! (output map, input row, field) triple. The products are materialized as
//! a `[e_k * m, d]` block, so the layer is a single matrix product with the
//! weight block stored as `[e_{k+1}, e_k * m]`, column `i * m + j` holding
//! the weight of `X^k_i ∘ X^0_j`.
//!
//! Each layer's rows (feature maps) are also scored by their mean Euclidean
//! distance to the layer centroid. An optional attention MLP over the
//! sum-pooled layers weights those scores with a softmax across layers.

use alloc::vec::Vec;

use crate::model::ConfigError;
use crate::tape::{Tape, Var};
use crate::tensor::{mismatch, NumericsError, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeinConfig {
    /// Feature-map count of each hidden layer, `e_1..e_K`.
    pub maps: Vec<usize>,
    /// Whether the diversity scores are attention weighted.
    pub attention: bool,
    pub attention_hidden: usize,
}

impl Default for DeinConfig {
    fn default() -> Self {
        Self::uniform(3, 200, true, 32)
    }
}

impl DeinConfig {
    pub fn uniform(depth: usize, maps: usize, attention: bool, attention_hidden: usize) -> Self {
        Self {
            maps: alloc::vec![maps; depth],
            attention,
            attention_hidden,
        }
    }

    pub fn depth(&self) -> usize {
        self.maps.len()
    }

    /// Length of the concatenated pooled output.
    pub fn output_len(&self) -> usize {
        self.maps.iter().sum()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.maps.is_empty() {
            return Err(ConfigError::Depth);
        }
        if self.maps.contains(&0) {
            return Err(ConfigError::ZeroMaps);
        }
        if self.attention {
            if self.attention_hidden == 0 {
                return Err(ConfigError::AttentionHidden);
            }
            if self.maps.iter().any(|&e| e != self.maps[0]) {
                return Err(ConfigError::UnequalMaps(self.maps.clone()));
            }
        }
        Ok(())
    }
}

/// Hidden matrices `X^0..X^K` and pooled vectors `s^1..s^K`.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub layers: Vec<Tensor>,
    pub pooled: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `[a]`
    pub h: Tensor,
    /// `[a, e]`
    pub w: Tensor,
    /// `[a]`
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiversityReport {
    pub raw: Vec<f64>,
    pub attention: Vec<f64>,
    pub weighted: Vec<f64>,
    pub total: f64,
}

/// Tape handles of a recorded interaction network.
#[derive(Debug, Clone)]
pub struct DeinVars {
    /// `X^1..X^K`
    pub layers: Vec<Var>,
    pub pooled: Vec<Var>,
    pub output: Var,
}

pub fn record_cin_layer(tape: &mut Tape<'_>, xk: Var, x0: Var, weight: Var) -> Result<Var, NumericsError> {
    let z = tape.outer_hadamard(xk, x0)?;
    tape.matmul(weight, z)
}

pub fn record_dein(tape: &mut Tape<'_>, x0: Var, weights: &[Var]) -> Result<DeinVars, NumericsError> {
    let mut layers = Vec::with_capacity(weights.len());
    let mut pooled = Vec::with_capacity(weights.len());
    let mut xk = x0;
    for &w in weights {
        xk = record_cin_layer(tape, xk, x0, w)?;
        layers.push(xk);
        pooled.push(tape.row_sums(xk)?);
    }
    let output = tape.concat(&pooled)?;
    Ok(DeinVars {
        layers,
        pooled,
        output,
    })
}

/// Mean distance of the rows of `xk` to their centroid, as a scalar.
pub fn record_diversity(tape: &mut Tape<'_>, xk: Var) -> Result<Var, NumericsError> {
    let rows = tape.shape(xk)[0];
    let center = tape.mean_rows(xk)?;
    let dist = tape.row_distances(xk, center)?;
    let total = tape.sum(dist)?;
    tape.scale(total, 1.0 / rows as f64)
}

/// Softmax over layers of `h · relu(W s^k + b)`.
pub fn record_attention(tape: &mut Tape<'_>, pooled: &[Var], h: Var, w: Var, b: Var) -> Result<Var, NumericsError> {
    let mut scores = Vec::with_capacity(pooled.len());
    for &s in pooled {
        let z = tape.matvec(w, s)?;
        let z = tape.add(z, b)?;
        let r = tape.relu(z)?;
        scores.push(tape.dot(h, r)?);
    }
    let pre = tape.concat(&scores)?;
    tape.softmax(pre)
}

/// Sum over layers of `a_k * Divs_k`, or of `Divs_k` without attention.
pub fn record_weighted_diversity(tape: &mut Tape<'_>, divs: &[Var], attention: Option<Var>) -> Result<Var, NumericsError> {
    let all = tape.concat(divs)?;
    match attention {
        Some(a) => tape.dot(a, all),
        None => tape.sum(all),
    }
}

/// `X^{k+1}` from `X^k` (`[e_k, d]`), `X^0` (`[m, d]`) and the layer's
/// weight block (`[e_{k+1}, e_k * m]`).
pub fn cin_layer(xk: &Tensor, x0: &Tensor, weight: &Tensor) -> Result<Tensor, NumericsError> {
    let mut tape = Tape::new();
    let a = tape.param(0, xk)?;
    let b = tape.param(1, x0)?;
    let w = tape.param(2, weight)?;
    let out = record_cin_layer(&mut tape, a, b, w)?;
    Ok(tape.tensor(out))
}

/// Row sums of a hidden layer.
pub fn sum_pool(xk: &Tensor) -> Result<Tensor, NumericsError> {
    let mut tape = Tape::new();
    let x = tape.param(0, xk)?;
    let s = tape.row_sums(x)?;
    Ok(tape.tensor(s))
}

pub fn dein_forward(x0: &Tensor, weights: &[Tensor]) -> Result<(Tensor, HiddenState), NumericsError> {
    let mut tape = Tape::new();
    let x = tape.param(0, x0)?;
    let ws: Vec<Var> = weights
        .iter()
        .enumerate()
        .map(|(i, w)| tape.param(i + 1, w))
        .collect::<Result<_, _>>()?;
    let vars = record_dein(&mut tape, x, &ws)?;
    let mut layers = alloc::vec![x0.clone()];
    layers.extend(vars.layers.iter().map(|&v| tape.tensor(v)));
    let state = HiddenState {
        layers,
        pooled: vars.pooled.iter().map(|&v| tape.tensor(v)).collect(),
    };
    Ok((tape.tensor(vars.output), state))
}

pub fn diversity(xk: &Tensor) -> Result<f64, NumericsError> {
    let mut tape = Tape::new();
    let x = tape.param(0, xk)?;
    let d = record_diversity(&mut tape, x)?;
    Ok(tape.scalar(d))
}

pub fn attention_weights(pooled: &[Tensor], params: &AttentionParams) -> Result<Vec<f64>, NumericsError> {
    let e = params.w.cols();
    if let Some(bad) = pooled.iter().find(|s| s.len() != e) {
        return Err(mismatch(
            "attention",
            alloc::format!("pooled length {} vs shared weight width {e}", bad.len()),
        ));
    }
    let mut tape = Tape::new();
    let h = tape.param(0, &params.h)?;
    let w = tape.param(1, &params.w)?;
    let b = tape.param(2, &params.b)?;
    let ps: Vec<Var> = pooled
        .iter()
        .map(|s| tape.constant(s.clone()))
        .collect::<Result<_, _>>()?;
    let a = record_attention(&mut tape, &ps, h, w, b)?;
    Ok(tape.value(a).to_vec())
}

/// Diversity of `X^1..X^K` weighted by `attention`, or by 1 per layer when
/// `attention` is `None`.
pub fn weighted_diversity(state: &HiddenState, attention: Option<&[f64]>) -> Result<DiversityReport, NumericsError> {
    let hidden = &state.layers[1..];
    let raw: Vec<f64> = hidden.iter().map(diversity).collect::<Result<_, _>>()?;
    let weights: Vec<f64> = match attention {
        Some(a) if a.len() != raw.len() => {
            return Err(mismatch(
                "weighted_diversity",
                alloc::format!("{} weights for {} layers", a.len(), raw.len()),
            ))
        }
        Some(a) => a.to_vec(),
        None => alloc::vec![1.0; raw.len()],
    };
    let weighted: Vec<f64> = raw.iter().zip(&weights).map(|(d, a)| d * a).collect();
    let total = weighted.iter().sum();
    Ok(DiversityReport {
        raw,
        attention: weights,
        weighted,
        total,
    })
}
