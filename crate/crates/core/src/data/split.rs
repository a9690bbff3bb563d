use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Label};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Train/test partition of the labeled rows of a dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    /// Ascending row indices.
    pub train: Vec<usize>,
    /// Ascending row indices.
    pub test: Vec<usize>,
}

/// `round(x)` with halves rounded up.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// Random train/test split of the labeled rows of `ds`. Unlabeled rows are excluded
/// from both sides.
///
/// With `stratify`, each class contributes `round_half_up(count × test_frac)` test rows.
/// Without it, `round_half_up(n_labeled × test_frac)` rows are drawn from the pooled
/// labeled rows; draws leaving either side without a class are redrawn.
pub fn stratified_split<T: Scalar>(ds: &Dataset<T>, test_frac: f64, seed: u64, stratify: bool) -> Result<SplitIndices> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::invalid(format!("test fraction {test_frac} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class0 = ds.indices_with(Label::Class0);
    let class1 = ds.indices_with(Label::Class1);
    for (name, members) in [("class 0", &class0), ("class 1", &class1)] {
        if members.len() < 2 {
            return Err(Error::invalid(format!(
                "{name} has {} labeled rows; at least 2 are needed to split",
                members.len()
            )));
        }
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    if stratify {
        for (name, members) in [("class 0", class0), ("class 1", class1)] {
            let count = members.len();
            let n_test = round_half_up(count as f64 * test_frac);
            if n_test == 0 || n_test >= count {
                return Err(Error::invalid(format!(
                    "{name} with {count} rows gets {n_test} test rows at fraction {test_frac}"
                )));
            }
            let mut shuffled = members;
            shuffled.shuffle(&mut rng);
            test.extend_from_slice(&shuffled[..n_test]);
            train.extend_from_slice(&shuffled[n_test..]);
        }
    } else {
        let pool = ds.labeled_indices();
        let n_test = round_half_up(pool.len() as f64 * test_frac);
        if n_test < 2 || pool.len() - n_test < 2 {
            return Err(Error::invalid(format!(
                "{} labeled rows cannot be split at fraction {test_frac}",
                pool.len()
            )));
        }
        let has_both = |rows: &[usize]| {
            let (a, b, _) = super::count_labels(&rows.iter().map(|&i| ds.labels()[i]).collect::<Vec<_>>());
            a > 0 && b > 0
        };
        let mut found = false;
        for _ in 0..1000 {
            let mut shuffled = pool.clone();
            shuffled.shuffle(&mut rng);
            if has_both(&shuffled[..n_test]) && has_both(&shuffled[n_test..]) {
                test = shuffled[..n_test].to_vec();
                train = shuffled[n_test..].to_vec();
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::invalid("could not draw a split containing both classes on each side"));
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// Stratified k-fold partition of `indices` (which must all be labeled rows of `ds`).
/// Each class is shuffled and dealt round-robin, continuing from the fold where the
/// previous class stopped, so per-class fold sizes differ by at most one.
pub fn kfold<T: Scalar>(indices: &[usize], ds: &Dataset<T>, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut class0 = Vec::new();
    let mut class1 = Vec::new();
    for &i in indices {
        match ds.labels().get(i) {
            Some(Label::Class0) => class0.push(i),
            Some(Label::Class1) => class1.push(i),
            Some(Label::Unlabeled) => return Err(Error::invalid(format!("row {i} is unlabeled"))),
            None => return Err(Error::invalid(format!("row index {i} out of range"))),
        }
    }
    for (name, members) in [("class 0", &class0), ("class 1", &class1)] {
        if members.len() < k {
            return Err(Error::invalid(format!(
                "{k} folds exceed the {} rows of {name}",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for mut members in [class0, class1] {
        members.shuffle(&mut rng);
        for i in members {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// All rows of `folds` except fold `held_out`, ascending.
pub fn train_rows_excluding(folds: &[Vec<usize>], held_out: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|&(f, _)| f != held_out)
        .flat_map(|(_, rows)| rows.iter().copied())
        .collect();
    rows.sort_unstable();
    rows
}
