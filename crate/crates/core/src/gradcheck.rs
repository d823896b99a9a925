//! Central finite-difference gradient checking.

use alloc::vec::Vec;

use rand::seq::index;

use crate::init::stream_rng;
use crate::tensor::{NumericsError, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub step: f64,
    /// Tensors with more coordinates than this are checked on a random
    /// sample of this many coordinates.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max relative error for each parameter tensor, in input order.
    pub per_tensor: Vec<f64>,
    pub max_rel_error: f64,
    pub coords_checked: usize,
}

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares `analytic` against `(L(θ+h) - L(θ-h)) / 2h` coordinate by
/// coordinate. `params` is perturbed in place and restored bit-exactly.
pub fn grad_check<F>(
    params: &mut [Tensor],
    analytic: &[Tensor],
    mut loss: F,
    opts: GradCheckOptions,
) -> Result<GradCheckReport, NumericsError>
where
    F: FnMut(&[Tensor]) -> f64,
{
    if opts.step.is_nan() || opts.step <= 0.0 {
        return Err(NumericsError::InvalidStep(opts.step));
    }
    if params.len() != analytic.len() {
        return Err(crate::tensor::mismatch(
            "grad_check",
            alloc::format!("{} params vs {} gradients", params.len(), analytic.len()),
        ));
    }
    let mut rng = stream_rng(opts.seed, 0x6772_6164);
    let mut per_tensor = Vec::with_capacity(params.len());
    let mut coords_checked = 0;
    let h = opts.step;
    for ti in 0..params.len() {
        if params[ti].shape() != analytic[ti].shape() {
            return Err(crate::tensor::mismatch(
                "grad_check",
                alloc::format!("tensor {ti}: {:?} vs {:?}", params[ti].shape(), analytic[ti].shape()),
            ));
        }
        let n = params[ti].len();
        let coords: Vec<usize> = if n <= opts.max_coords {
            (0..n).collect()
        } else {
            index::sample(&mut rng, n, opts.max_coords).into_vec()
        };
        let mut worst: f64 = 0.0;
        for c in coords {
            let orig = params[ti].data()[c];
            params[ti].data_mut()[c] = orig + h;
            let plus = loss(params);
            params[ti].data_mut()[c] = orig - h;
            let minus = loss(params);
            params[ti].data_mut()[c] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NumericsError::NonFinite { op: "grad_check" });
            }
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic[ti].data()[c], numeric));
            coords_checked += 1;
        }
        per_tensor.push(worst);
    }
    let max_rel_error = per_tensor.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        per_tensor,
        max_rel_error,
        coords_checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn quadratic(p: &[Tensor]) -> f64 {
        let x = p[0].data();
        3.0 * x[0] * x[0] + 2.0 * x[0] * x[1] - x[1] * x[1] + 0.5 * x[1]
    }

    #[test]
    fn quadratic_is_exact() {
        let mut params = vec![Tensor::vector(vec![0.7, -1.3])];
        let x = params[0].data().to_vec();
        let analytic = vec![Tensor::vector(vec![6.0 * x[0] + 2.0 * x[1], 2.0 * x[0] - 2.0 * x[1] + 0.5])];
        let r = grad_check(&mut params, &analytic, quadratic, GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error < 1e-9, "{}", r.max_rel_error);
        assert_eq!(params[0].data(), &x[..]);
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut params = vec![Tensor::vector(vec![0.7, -1.3])];
        let x = params[0].data().to_vec();
        let analytic = vec![Tensor::vector(vec![
            1.1 * (6.0 * x[0] + 2.0 * x[1]),
            2.0 * x[0] - 2.0 * x[1] + 0.5,
        ])];
        let r = grad_check(&mut params, &analytic, quadratic, GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error > 1e-2);
    }

    #[test]
    fn samples_large_tensors() {
        let mut params = vec![Tensor::zeros(&[1000])];
        let analytic = vec![Tensor::zeros(&[1000])];
        let r = grad_check(&mut params, &analytic, |p| p[0].squared_norm(), GradCheckOptions::default()).unwrap();
        assert_eq!(r.coords_checked, 200);
    }

    #[test]
    fn rejects_bad_step_and_nonfinite_loss() {
        let mut params = vec![Tensor::scalar(1.0)];
        let analytic = vec![Tensor::scalar(0.0)];
        let opts = GradCheckOptions { step: 0.0, ..Default::default() };
        assert!(grad_check(&mut params, &analytic, |_| 0.0, opts).is_err());
        let r = grad_check(&mut params, &analytic, |_| f64::NAN, GradCheckOptions::default());
        assert!(matches!(r, Err(NumericsError::NonFinite { .. })));
    }
}
