//! Top-N accuracy metrics for one user.

use std::collections::{BTreeMap, BTreeSet};

use crate::ids::ItemId;
use crate::scalar::Scalar;

use super::EvalError;

/// Test-day multiset: item -> number of consumptions.
pub type Basket = BTreeMap<ItemId, u32>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Recall,
    Precision,
    Ndcg,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Recall, Metric::Precision, Metric::Ndcg];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Recall => "recall",
            Metric::Precision => "precision",
            Metric::Ndcg => "ndcg",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        match s.trim().to_ascii_lowercase().as_str() {
            "recall" => Some(Metric::Recall),
            "precision" => Some(Metric::Precision),
            "ndcg" => Some(Metric::Ndcg),
            _ => None,
        }
    }

    pub fn compute<T: Scalar>(self, test: &Basket, ranked: &[ItemId], n: usize) -> Result<T, EvalError> {
        self.compute_with_gain(test, ranked, n, Gain::Linear)
    }

    /// As [`Metric::compute`]; `gain` only affects nDCG.
    pub fn compute_with_gain<T: Scalar>(
        self,
        test: &Basket,
        ranked: &[ItemId],
        n: usize,
        gain: Gain,
    ) -> Result<T, EvalError> {
        match self {
            Metric::Recall => recall_at_n(test, ranked, n),
            Metric::Precision => precision_at_n(test, ranked, n),
            Metric::Ndcg => ndcg_at_n_with_gain(test, ranked, n, gain),
        }
    }
}

/// Relevance assigned to a test item with frequency n.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Gain {
    /// n
    #[default]
    Linear,
    /// 2^n − 1
    Exponential,
}

impl Gain {
    pub fn as_str(self) -> &'static str {
        match self {
            Gain::Linear => "linear",
            Gain::Exponential => "exponential",
        }
    }

    pub fn parse(s: &str) -> Option<Gain> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Some(Gain::Linear),
            "exponential" => Some(Gain::Exponential),
            _ => None,
        }
    }

    fn of<T: Scalar>(self, freq: u32) -> T {
        match self {
            Gain::Linear => T::from_u32(freq).unwrap(),
            Gain::Exponential => T::lit(2.0).powi(freq as i32) - T::one(),
        }
    }
}

fn check(test: &Basket, n: usize) -> Result<(), EvalError> {
    if test.values().all(|&c| c == 0) {
        return Err(EvalError::EmptyTestSet);
    }
    if n == 0 {
        return Err(EvalError::ZeroCutoff);
    }
    Ok(())
}

fn top(ranked: &[ItemId], n: usize) -> &[ItemId] {
    &ranked[..n.min(ranked.len())]
}

/// Frequency-weighted recall: share of test consumptions whose item is in the
/// top `n`.
pub fn recall_at_n<T: Scalar>(test: &Basket, ranked: &[ItemId], n: usize) -> Result<T, EvalError> {
    check(test, n)?;
    let hit_items: BTreeSet<&ItemId> = top(ranked, n).iter().collect();
    let total: u64 = test.values().map(|&c| u64::from(c)).sum();
    let hit: u64 = test.iter().filter(|(i, _)| hit_items.contains(i)).map(|(_, &c)| u64::from(c)).sum();
    Ok(T::from_u64(hit).unwrap() / T::from_u64(total).unwrap())
}

/// |top-n ∩ test items| / n.
pub fn precision_at_n<T: Scalar>(test: &Basket, ranked: &[ItemId], n: usize) -> Result<T, EvalError> {
    check(test, n)?;
    let hits = top(ranked, n)
        .iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|i| test.get(*i).is_some_and(|&c| c > 0))
        .count();
    Ok(T::from_count(hits) / T::from_count(n))
}

fn discount<T: Scalar>(position: usize) -> T {
    // position is 0-based; rank r = position + 1 → log2(r + 1)
    T::from_count(position + 2).log2()
}

/// nDCG with linear gain.
pub fn ndcg_at_n<T: Scalar>(test: &Basket, ranked: &[ItemId], n: usize) -> Result<T, EvalError> {
    ndcg_at_n_with_gain(test, ranked, n, Gain::Linear)
}

pub fn ndcg_at_n_with_gain<T: Scalar>(test: &Basket, ranked: &[ItemId], n: usize, gain: Gain) -> Result<T, EvalError> {
    check(test, n)?;
    let mut seen = BTreeSet::new();
    let dcg: T = top(ranked, n)
        .iter()
        .enumerate()
        .filter(|(_, item)| seen.insert(*item))
        .map(|(pos, item)| gain.of::<T>(test.get(item).copied().unwrap_or(0)) / discount::<T>(pos))
        .sum();
    let mut ideal: Vec<(&ItemId, u32)> = test.iter().map(|(i, &c)| (i, c)).collect();
    ideal.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let idcg: T = ideal.iter().take(n).enumerate().map(|(pos, (_, c))| gain.of::<T>(*c) / discount::<T>(pos)).sum();
    Ok(dcg / idcg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basket(items: &[(&str, u32)]) -> Basket {
        items.iter().map(|(i, c)| (ItemId::new(i), *c)).collect()
    }

    fn list(items: &[&str]) -> Vec<ItemId> {
        items.iter().map(|i| ItemId::new(i)).collect()
    }

    #[test]
    fn recall_examples() {
        let t = basket(&[("a", 2), ("b", 1)]);
        assert_eq!(recall_at_n::<f64>(&t, &list(&["a", "b", "c"]), 2).unwrap(), 1.0);
        assert!((recall_at_n::<f64>(&t, &list(&["a", "c"]), 2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(recall_at_n::<f64>(&t, &list(&["x", "y"]), 2).unwrap(), 0.0);
        assert_eq!(recall_at_n::<f64>(&Basket::new(), &list(&["a"]), 1), Err(EvalError::EmptyTestSet));
    }

    #[test]
    fn precision_examples() {
        let t = basket(&[("a", 1), ("b", 1)]);
        assert_eq!(precision_at_n::<f64>(&t, &list(&["a", "c"]), 2).unwrap(), 0.5);
        let five = basket(&[("a", 1), ("b", 1), ("c", 1), ("d", 1), ("e", 1)]);
        assert_eq!(precision_at_n::<f64>(&five, &list(&["e", "d", "c", "b", "a"]), 5).unwrap(), 1.0);
        let one = basket(&[("a", 3)]);
        assert!((precision_at_n::<f64>(&one, &list(&["a", "b", "c", "d", "e"]), 5).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn ndcg_examples() {
        let t = basket(&[("a", 2), ("b", 1)]);
        assert_eq!(ndcg_at_n::<f64>(&t, &list(&["a", "b"]), 2).unwrap(), 1.0);
        let v: f64 = ndcg_at_n(&t, &list(&["a", "c"]), 2).unwrap();
        let idcg = 2.0 + 1.0 / 3f64.log2();
        assert!((v - 2.0 / idcg).abs() < 1e-15);
        assert!((v - 0.7602).abs() < 1e-4);
        let single = basket(&[("a", 1)]);
        let v: f64 = ndcg_at_n(&single, &list(&["x", "a"]), 2).unwrap();
        assert!((v - 0.6309).abs() < 1e-4);
    }

    #[test]
    fn exponential_gain() {
        let t = basket(&[("a", 2), ("b", 1)]);
        let v: f64 = ndcg_at_n_with_gain(&t, &list(&["b", "a"]), 2, Gain::Exponential).unwrap();
        let dcg = 1.0 + 3.0 / 3f64.log2();
        let idcg = 3.0 + 1.0 / 3f64.log2();
        assert!((v - dcg / idcg).abs() < 1e-15);
    }

    #[test]
    fn short_lists_and_zero_cutoff() {
        let t = basket(&[("a", 1)]);
        assert_eq!(recall_at_n::<f64>(&t, &list(&["a"]), 5).unwrap(), 1.0);
        assert_eq!(precision_at_n::<f64>(&t, &list(&["a"]), 0), Err(EvalError::ZeroCutoff));
    }
}
