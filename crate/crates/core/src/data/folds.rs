use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::DataError;
use crate::init::stream_rng;

const PERMUTATION_STREAM: u64 = 0xF01D;

/// Index lists of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Splits `0..n` into `k` test groups whose sizes differ by at most one.
/// The rest of each fold is shuffled and its first `floor(rest / 10)`
/// indices become the validation split; the remainder trains.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    if k < 2 || n < k {
        return Err(DataError::InvalidFolds { n, k });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream_rng(seed, PERMUTATION_STREAM));

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut test = perm[start..start + size].to_vec();
        let mut rest: Vec<usize> = perm[..start].iter().chain(&perm[start + size..]).copied().collect();
        rest.shuffle(&mut stream_rng(seed, f as u64));
        let n_val = rest.len() / 10;
        let mut validation = rest[..n_val].to_vec();
        let mut train = rest[n_val..].to_vec();
        test.sort_unstable();
        validation.sort_unstable();
        train.sort_unstable();
        folds.push(Fold {
            train,
            validation,
            test,
        });
        start += size;
    }
    Ok(FoldPlan { k, seed, folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn ten_into_five() {
        let plan = make_folds(10, 5, 3).unwrap();
        for f in &plan.folds {
            assert_eq!(f.test.len(), 2);
            // rest = 8, validation = floor(0.8) = 0
            assert_eq!(f.validation.len(), 0);
            assert_eq!(f.train.len(), 8);
        }
    }

    #[test]
    fn validation_is_a_tenth_of_the_rest() {
        let plan = make_folds(1003, 5, 1).unwrap();
        let sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
        assert_eq!(sizes, vec![201, 201, 201, 200, 200]);
        for f in &plan.folds {
            let rest = 1003 - f.test.len();
            assert_eq!(f.validation.len(), rest / 10);
            assert_eq!(f.train.len() + f.validation.len(), rest);
        }
    }

    #[test]
    fn deterministic_and_guarded() {
        assert_eq!(make_folds(50, 5, 9), make_folds(50, 5, 9));
        assert_ne!(make_folds(50, 5, 9), make_folds(50, 5, 10));
        assert_eq!(make_folds(4, 5, 0), Err(DataError::InvalidFolds { n: 4, k: 5 }));
        assert!(make_folds(10, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn partitions_cover(n in 2usize..300, k in 2usize..10, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let plan = make_folds(n, k, seed).unwrap();
            let mut seen = vec![0usize; n];
            for f in &plan.folds {
                for &i in &f.test {
                    seen[i] += 1;
                }
                let mut all: Vec<usize> = f.train.iter().chain(&f.validation).chain(&f.test).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let sizes: Vec<usize> = plan.folds.iter().map(|f| f.test.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
