//! Log loss, rank AUC and the paired t-test.

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("undefined AUC: labels contain a single class")]
    SingleClass,
    #[error("non-finite score")]
    NonFinite,
    #[error("need at least two paired values, got {0}")]
    TooFew(usize),
    #[error("degenerate: all differences equal")]
    Degenerate,
}

fn check_pair(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Negated mean cross-entropy with predictions clipped to `[clip, 1 - clip]`.
pub fn logloss_metric(scores: &[f64], labels: &[u8], clip: f64) -> Result<f64, MetricsError> {
    check_pair(scores.len(), labels.len())?;
    crate::training::log_loss(scores, labels, clip).map_err(|_| MetricsError::Empty)
}

/// Probability that a random positive outscores a random negative, ties
/// counted one half.
///
/// Uses doubled mid-ranks so the statistic is an exact ratio of integers:
/// the result is bit-identical to counting `2 * wins + ties` over all pairs.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    check_pair(scores.len(), labels.len())?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // positions i..j share the mid-rank ((i + 1) + j) / 2
        let rank2 = (i + 1 + j) as u128;
        let pos = order[i..j].iter().filter(|&&k| labels[k] != 0).count() as u128;
        pos_rank2 += rank2 * pos;
        i = j;
    }
    let p = labels.iter().filter(|&&y| y != 0).count() as u128;
    let n = labels.len() as u128 - p;
    if p == 0 || n == 0 {
        return Err(MetricsError::SingleClass);
    }
    // 2U = Σ 2·rank(positive) - P(P + 1)
    let u2 = pos_rank2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    libm::sqrt(ss / (xs.len() - 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    /// Two-sided.
    pub p_value: f64,
    pub mean_diff: f64,
    pub significant: bool,
}

/// Two-sided paired t-test on `a[i] - b[i]` with `n - 1` degrees of freedom.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TTest, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(MetricsError::TooFew(a.len()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let df = diffs.len() - 1;
    let m = mean(&diffs);
    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(TTest {
            t: 0.0,
            df,
            p_value: 1.0,
            mean_diff: 0.0,
            significant: false,
        });
    }
    let sd = std_dev(&diffs);
    // differences equal up to rounding leave no variance to test against
    let scale = diffs.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    if sd <= 1e-12 * scale {
        return Err(MetricsError::Degenerate);
    }
    let t = m / (sd / libm::sqrt(diffs.len() as f64));
    let p_value = student_t_two_sided(t, df as f64);
    Ok(TTest {
        t,
        df,
        p_value,
        mean_diff: m,
        significant: p_value < alpha,
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    regularized_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Regularized incomplete beta `I_x(a, b)`, evaluated with the Lentz
/// continued fraction on whichever side converges quickly.
pub fn regularized_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log(1.0 - x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_fraction(1.0 - x, b, a) / b
    }
}

fn beta_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const TOL: f64 = 1e-16;
    let fix = |v: f64| if v.abs() < TINY { TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / fix(1.0 - (a + b) * x / (a + 1.0));
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let even = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        d = 1.0 / fix(1.0 + even * d);
        c = fix(1.0 + even / c);
        h *= d * c;
        let odd = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
        d = 1.0 / fix(1.0 + odd * d);
        c = fix(1.0 + odd / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < TOL {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.1], &[1, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.2, 0.5], &[1, 1, 0]).unwrap(), 0.5);
        assert_eq!(auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.2], &[1, 1]), Err(MetricsError::SingleClass));
        assert!(auc(&[f64::NAN, 0.2], &[1, 0]).is_err());
    }

    #[test]
    fn logloss_examples() {
        let v = logloss_metric(&[0.5], &[1], 1e-7).unwrap();
        assert!((v - core::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(logloss_metric(&[], &[], 1e-7), Err(MetricsError::Empty));
        assert_eq!(logloss_metric(&[0.5], &[1, 0], 1e-7), Err(MetricsError::LengthMismatch(1, 2)));
    }

    #[test]
    fn t_test_guards() {
        let a = [0.7, 0.71, 0.69];
        let r = paired_t_test(&a, &a, 0.05).unwrap();
        assert_eq!((r.t, r.significant), (0.0, false));
        let b: Vec<f64> = a.iter().map(|x| x - 1.0).collect();
        assert_eq!(paired_t_test(&a, &b, 0.05), Err(MetricsError::Degenerate));
        assert_eq!(paired_t_test(&[1.0], &[0.0], 0.05), Err(MetricsError::TooFew(1)));
    }

    #[test]
    fn t_distribution_reference_points() {
        // two-sided critical values from standard tables
        assert!((student_t_two_sided(2.776445105, 4.0) - 0.05).abs() < 1e-8);
        assert!((student_t_two_sided(12.70620474, 1.0) - 0.05).abs() < 1e-8);
        assert!((student_t_two_sided(0.0, 7.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn std_dev_of_constant_is_zero() {
        assert_eq!(std_dev(&[2.0, 2.0, 2.0]), 0.0);
        assert_eq!(std_dev(&[1.0]), 0.0);
        assert!((std_dev(&[1.0, 3.0]) - libm::sqrt(2.0)).abs() < 1e-15);
    }
}
