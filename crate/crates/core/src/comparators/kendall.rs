//! Kendall's tau-b over the union of two top-K label lists.
//!
//! Each label in the union is ranked by its 1-based position in each list; a
//! label missing from a list takes the shared rank `K + 1` there, so all
//! absentees tie with each other. The coefficient is then computed with
//! Knight's O(n log n) algorithm, which handles ties in either ranking with the
//! tau-b denominator.

use std::collections::HashMap;
use std::hash::Hash;

use super::ComparatorError;

/// Tau-b between the top-`k` prefixes of `reference` and `test`.
///
/// Returns exactly `1.0` when both prefixes are the same ordered sequence.
pub fn kendall_tau_topk<T>(reference: &[T], test: &[T], k: usize) -> Result<f64, ComparatorError>
where
    T: Eq + Hash,
{
    if k == 0 {
        return Err(ComparatorError::InvalidK(k));
    }
    let ref_top = &reference[..reference.len().min(k)];
    let test_top = &test[..test.len().min(k)];
    if ref_top.is_empty() && test_top.is_empty() {
        return Err(ComparatorError::Undefined(
            "both ranked lists are empty".to_string(),
        ));
    }
    if ref_top == test_top {
        return Ok(1.0);
    }

    let absent = k + 1;
    let mut ranks: HashMap<&T, (usize, usize)> = HashMap::with_capacity(ref_top.len() * 2);
    for (pos, label) in ref_top.iter().enumerate() {
        ranks.entry(label).or_insert((pos + 1, absent));
    }
    for (pos, label) in test_top.iter().enumerate() {
        let entry = ranks.entry(label).or_insert((absent, absent));
        if entry.1 == absent {
            entry.1 = pos + 1;
        }
    }
    let pairs: Vec<(usize, usize)> = ranks.into_values().collect();
    tau_b(pairs).ok_or_else(|| {
        ComparatorError::Undefined("one ranking is constant over the label union".to_string())
    })
}

/// Knight's algorithm. `None` when either ranking is entirely tied.
pub(crate) fn tau_b(mut pairs: Vec<(usize, usize)>) -> Option<f64> {
    let n = pairs.len() as u64;
    if n < 2 {
        return None;
    }
    let total = n * (n - 1) / 2;

    pairs.sort_unstable();
    let x_ties = tied_pairs(pairs.iter().map(|p| p.0));
    let joint_ties = tied_pairs(pairs.iter().copied());

    let mut ys: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let mut scratch = vec![0usize; ys.len()];
    let swaps = merge_count(&mut ys, &mut scratch);
    let y_ties = tied_pairs(ys.iter().copied());

    if x_ties == total || y_ties == total {
        return None;
    }
    let numerator = total as f64 - x_ties as f64 - y_ties as f64 + joint_ties as f64
        - 2.0 * swaps as f64;
    let denominator = ((total - x_ties) as f64 * (total - y_ties) as f64).sqrt();
    Some((numerator / denominator).clamp(-1.0, 1.0))
}

/// Sum of t(t-1)/2 over runs of equal items in an already-sorted sequence.
fn tied_pairs<I, V>(items: I) -> u64
where
    I: Iterator<Item = V>,
    V: PartialEq,
{
    let mut ties = 0u64;
    let mut run = 0u64;
    let mut prev: Option<V> = None;
    for item in items {
        match &prev {
            Some(p) if *p == item => run += 1,
            _ => {
                ties += run * (run + 1) / 2;
                run = 0;
            }
        }
        prev = Some(item);
    }
    ties + run * (run + 1) / 2
}

/// Stable merge sort returning the number of strict inversions.
fn merge_count(v: &mut [usize], scratch: &mut [usize]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = v.split_at_mut(mid);
        let (sl, sr) = scratch.split_at_mut(mid);
        merge_count(left, sl) + merge_count(right, sr)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            scratch[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            scratch[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    scratch[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
    k += mid - i;
    scratch[k..k + (n - j)].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&scratch[..n]);
    swaps
}
