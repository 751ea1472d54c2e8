//! Slow reference implementations.
//!
//! Each oracle recomputes a quantity from its definition with no shared code
//! beyond the data types: metrics by linear scans and exhaustive ideal
//! orderings, repeat fractions by scanning every window day, and rank tests
//! by enumerating or sampling label permutations.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ids::ItemId;
use crate::repeat::Direction;

/// Test multiset as (item, frequency) pairs with distinct items.
pub type TestItems = Vec<(ItemId, u32)>;

fn rank_of(ranked: &[ItemId], item: &ItemId) -> Option<usize> {
    ranked.iter().position(|r| r == item)
}

pub fn recall(test: &TestItems, ranked: &[ItemId], n: usize) -> f64 {
    let mut hit = 0u64;
    let mut total = 0u64;
    for (item, c) in test {
        total += u64::from(*c);
        if rank_of(ranked, item).is_some_and(|r| r < n) {
            hit += u64::from(*c);
        }
    }
    hit as f64 / total as f64
}

pub fn precision(test: &TestItems, ranked: &[ItemId], n: usize) -> f64 {
    let mut hits = 0;
    for (pos, item) in ranked.iter().enumerate().take(n) {
        let first = rank_of(ranked, item) == Some(pos);
        if first && test.iter().any(|(t, c)| t == item && *c > 0) {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

fn dcg(gains: &[f64], n: usize) -> f64 {
    gains.iter().take(n).enumerate().map(|(pos, g)| g / ((pos + 2) as f64).log2()).sum()
}

fn permutations(items: &[f64]) -> Vec<Vec<f64>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// nDCG with linear gain; the ideal DCG is the maximum over every ordering of
/// the test items.
pub fn ndcg(test: &TestItems, ranked: &[ItemId], n: usize) -> f64 {
    let gains: Vec<f64> = ranked
        .iter()
        .enumerate()
        .take(n)
        .map(|(pos, item)| {
            if rank_of(ranked, item) != Some(pos) {
                return 0.0;
            }
            test.iter().find(|(t, _)| t == item).map_or(0.0, |(_, c)| f64::from(*c))
        })
        .collect();
    let test_gains: Vec<f64> = test.iter().map(|(_, c)| f64::from(*c)).collect();
    let ideal = permutations(&test_gains).iter().map(|p| dcg(p, n)).fold(0.0, f64::max);
    dcg(&gains, n) / ideal
}

/// Per-day repeat counts of one anchor: (items repeated in the window, items
/// on the anchor day).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DayCount {
    pub anchor: usize,
    pub repeats: usize,
    pub size: usize,
}

/// Window scan over every anchor whose window fits; empty anchor days are
/// skipped.
pub fn repeat_counts(days: &[BTreeSet<ItemId>], k: usize, direction: Direction) -> Vec<DayCount> {
    let mut out = Vec::new();
    for t in 0..days.len() {
        let (lo, hi) = match direction {
            Direction::Forward => (t, t + k),
            Direction::Backward => {
                if t + 1 < k {
                    continue;
                }
                (t + 1 - k, t + 1)
            }
        };
        if hi > days.len() || days[t].is_empty() {
            continue;
        }
        let mut repeats = 0;
        for item in &days[t] {
            let mut seen = 0;
            for day in &days[lo..hi] {
                if day.contains(item) {
                    seen += 1;
                }
            }
            if seen >= 2 {
                repeats += 1;
            }
        }
        out.push(DayCount { anchor: t, repeats, size: days[t].len() });
    }
    out
}

/// Mean of the per-day fractions, `None` without measurable days.
pub fn user_fraction(counts: &[DayCount]) -> Option<f64> {
    if counts.is_empty() {
        return None;
    }
    let sum: f64 = counts.iter().map(|c| c.repeats as f64 / c.size as f64).sum();
    Some(sum / counts.len() as f64)
}

fn midranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let below = values.iter().filter(|w| *w < v).count() as f64;
            let equal = values.iter().filter(|w| *w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Tie-corrected H for pooled `values` with group `labels`.
pub fn h_statistic(values: &[f64], labels: &[usize], k: usize) -> f64 {
    let n = values.len() as f64;
    let ranks = midranks(values);
    let mut sums = vec![0.0; k];
    let mut sizes = vec![0.0; k];
    for (r, &g) in ranks.iter().zip(labels) {
        sums[g] += r;
        sizes[g] += 1.0;
    }
    let h: f64 = (0..k).map(|g| sums[g] * sums[g] / sizes[g]).sum::<f64>() * 12.0 / (n * (n + 1.0)) - 3.0 * (n + 1.0);
    let mut ties = 0.0;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let c = 1.0 - ties / (n * n * n - n);
    if c <= 0.0 {
        0.0
    } else {
        h / c
    }
}

/// |mean rank of a − mean rank of b|, the permutation statistic behind Dunn's
/// z for a fixed pair (the standard error is label-invariant).
pub fn mean_rank_gap(values: &[f64], labels: &[usize], a: usize, b: usize) -> f64 {
    let ranks = midranks(values);
    let (mut sa, mut na, mut sb, mut nb) = (0.0, 0.0, 0.0, 0.0);
    for (r, &g) in ranks.iter().zip(labels) {
        if g == a {
            sa += r;
            na += 1.0;
        } else if g == b {
            sb += r;
            nb += 1.0;
        }
    }
    (sa / na - sb / nb).abs()
}

fn multinomial(sizes: &[usize]) -> f64 {
    let mut total = 0usize;
    let mut out = 1.0;
    for &s in sizes {
        for i in 1..=s {
            total += 1;
            out *= total as f64 / i as f64;
        }
    }
    out
}

fn enumerate_labelings(remaining: &mut [usize], current: &mut Vec<usize>, n: usize, visit: &mut impl FnMut(&[usize])) {
    if current.len() == n {
        visit(current);
        return;
    }
    for g in 0..remaining.len() {
        if remaining[g] > 0 {
            remaining[g] -= 1;
            current.push(g);
            enumerate_labelings(remaining, current, n, visit);
            current.pop();
            remaining[g] += 1;
        }
    }
}

/// Permutation p-value P(stat(perm) ≥ stat(observed)). Exhaustive when the
/// number of distinct labelings is at most `max_exhaustive`, otherwise
/// `samples` seeded shuffles.
pub fn permutation_p_value(
    groups: &[Vec<f64>],
    stat: impl Fn(&[f64], &[usize]) -> f64,
    max_exhaustive: usize,
    samples: usize,
    seed: u64,
) -> f64 {
    let values: Vec<f64> = groups.iter().flatten().copied().collect();
    let labels: Vec<usize> = groups.iter().enumerate().flat_map(|(g, v)| std::iter::repeat_n(g, v.len())).collect();
    let observed = stat(&values, &labels);
    let tol = 1e-9 * observed.abs().max(1.0);
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let (mut hits, mut total) = (0u64, 0u64);
    if multinomial(&sizes) <= max_exhaustive as f64 {
        let mut remaining = sizes.clone();
        enumerate_labelings(&mut remaining, &mut Vec::new(), values.len(), &mut |perm| {
            total += 1;
            if stat(&values, perm) >= observed - tol {
                hits += 1;
            }
        });
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm = labels.clone();
        for _ in 0..samples {
            perm.shuffle(&mut rng);
            total += 1;
            if stat(&values, &perm) >= observed - tol {
                hits += 1;
            }
        }
    }
    hits as f64 / total as f64
}
