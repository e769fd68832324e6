//! Enumeration of k-subsets of `0..n` in lexicographic order.

use itertools::Itertools;
use rand::Rng;
use rayon::prelude::*;
use std::cmp::Ordering;

use crate::error::{IdentError, Result};

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Fails with a budget error if `C(n, k)` exceeds `budget`.
pub fn check_budget(n: usize, k: usize, budget: u128) -> Result<u128> {
    let needed = binomial(n, k);
    if needed > budget {
        return Err(IdentError::Budget { needed, budget });
    }
    Ok(needed)
}

/// Evaluates `eval` on every k-subset of `0..n` and folds the produced
/// values with `merge`.
///
/// Work is split across the rayon pool by leading element. The result does not
/// depend on scheduling when `merge` is associative and commutative; callers
/// that select an extreme element break ties on the subset itself.
pub fn par_reduce_over_subsets<T, F, M>(n: usize, k: usize, eval: F, merge: M) -> Option<T>
where
    T: Send,
    F: Fn(&[usize]) -> Option<T> + Sync,
    M: Fn(T, T) -> T + Sync,
{
    if k == 0 {
        return eval(&[]);
    }
    if k > n {
        return None;
    }
    (0..=n - k)
        .into_par_iter()
        .filter_map(|first| {
            let mut buf = Vec::with_capacity(k);
            let mut acc: Option<T> = None;
            for rest in (first + 1..n).combinations(k - 1) {
                buf.clear();
                buf.push(first);
                buf.extend_from_slice(&rest);
                if let Some(v) = eval(&buf) {
                    acc = Some(match acc {
                        Some(a) => merge(a, v),
                        None => v,
                    });
                }
            }
            acc
        })
        .reduce_with(&merge)
}

/// Minimum of `eval` over all k-subsets under the total order `cmp`.
pub fn par_min_over_subsets<T, F, C>(n: usize, k: usize, eval: F, cmp: C) -> Option<T>
where
    T: Send,
    F: Fn(&[usize]) -> Option<T> + Sync,
    C: Fn(&T, &T) -> Ordering + Sync,
{
    par_reduce_over_subsets(n, k, eval, |a, b| if cmp(&b, &a) == Ordering::Less { b } else { a })
}

/// Uniformly random sorted k-subset of `0..n`.
pub fn random_subset<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut v = rand::seq::index::sample(rng, n, k).into_vec();
    v.sort_unstable();
    v
}
