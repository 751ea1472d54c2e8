use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::ids::{ItemId, UserId};
use crate::ingest::ConsumptionEvent;
use crate::scalar::Scalar;

use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Each user's row rescaled to sum to one.
    #[default]
    L1PerUser,
    Raw,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::L1PerUser => "l1_per_user",
            Normalization::Raw => "raw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "l1_per_user" => Some(Normalization::L1PerUser),
            "raw" => Some(Normalization::Raw),
            _ => None,
        }
    }
}

/// Time-decayed user-item counts over a training window.
///
/// Items are addressed by their position in the sorted universe, so score
/// vectors throughout the crate are dense `Vec<T>` aligned with
/// [`CountStats::universe`].
#[derive(Clone, Debug)]
pub struct CountStats<T = f64> {
    universe: Vec<ItemId>,
    positions: HashMap<ItemId, usize>,
    rows: BTreeMap<UserId, Vec<(usize, T)>>,
    user_totals: BTreeMap<UserId, T>,
    item_totals: Vec<T>,
    total: T,
    lambda: T,
    anchor_day: u32,
    normalization: Normalization,
}

impl<T: Scalar> CountStats<T> {
    /// Builds `C_ij = Σ_t λ^(anchor − t) c_ij^t` from `(user, day, item)`
    /// observations; each observation contributes one consumption.
    pub fn build<'a, I>(
        observations: I,
        anchor_day: u32,
        lambda: T,
        normalization: Normalization,
    ) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (&'a UserId, u32, &'a ItemId)>,
    {
        if !(lambda > T::zero() && lambda <= T::one()) {
            return Err(ModelError::InvalidLambda(lambda.to_f64_lossy()));
        }
        let mut raw: BTreeMap<UserId, BTreeMap<ItemId, T>> = BTreeMap::new();
        let mut universe_set = BTreeSet::new();
        for (user, day, item) in observations {
            if day > anchor_day {
                return Err(ModelError::EventAfterAnchor { day, anchor: anchor_day });
            }
            let weight = lambda.powi((anchor_day - day) as i32);
            let cell = raw.entry(user.clone()).or_default().entry(item.clone()).or_insert_with(T::zero);
            *cell = *cell + weight;
            universe_set.insert(item.clone());
        }
        let universe: Vec<ItemId> = universe_set.into_iter().collect();
        let positions: HashMap<ItemId, usize> = universe.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();

        let mut rows = BTreeMap::new();
        let mut user_totals = BTreeMap::new();
        let mut item_totals = vec![T::zero(); universe.len()];
        for (user, cells) in raw {
            let row_sum: T = cells.values().copied().sum();
            let row: Vec<(usize, T)> = cells
                .into_iter()
                .map(|(item, c)| {
                    let c = match normalization {
                        Normalization::L1PerUser if row_sum > T::zero() => c / row_sum,
                        _ => c,
                    };
                    (positions[&item], c)
                })
                .collect();
            for &(j, c) in &row {
                item_totals[j] = item_totals[j] + c;
            }
            let total = match normalization {
                Normalization::L1PerUser if row_sum > T::zero() => T::one(),
                _ => row.iter().map(|&(_, c)| c).sum(),
            };
            user_totals.insert(user.clone(), total);
            rows.insert(user, row);
        }
        let total = item_totals.iter().copied().sum();
        Ok(Self { universe, positions, rows, user_totals, item_totals, total, lambda, anchor_day, normalization })
    }

    /// Counts from events on or before `anchor_day`.
    pub fn from_events<'a, I>(
        events: I,
        anchor_day: u32,
        lambda: T,
        normalization: Normalization,
    ) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = &'a ConsumptionEvent>,
    {
        Self::build(events.into_iter().map(|e| (&e.user, e.day, &e.item)), anchor_day, lambda, normalization)
    }

    /// Sorted item universe F.
    pub fn universe(&self) -> &[ItemId] {
        &self.universe
    }

    pub fn position(&self, item: &ItemId) -> Option<usize> {
        self.positions.get(item).copied()
    }

    pub fn n_items(&self) -> usize {
        self.universe.len()
    }

    pub fn users(&self) -> impl Iterator<Item = &UserId> {
        self.rows.keys()
    }

    pub fn contains_user(&self, user: &UserId) -> bool {
        self.rows.contains_key(user)
    }

    /// Sparse row of one user as (item position, C_ij), ascending positions.
    pub fn row(&self, user: &UserId) -> Option<&[(usize, T)]> {
        self.rows.get(user).map(Vec::as_slice)
    }

    pub fn user_count(&self, user: &UserId, item: &ItemId) -> T {
        match (self.rows.get(user), self.position(item)) {
            (Some(row), Some(j)) => row.binary_search_by_key(&j, |&(p, _)| p).map_or(T::zero(), |k| row[k].1),
            _ => T::zero(),
        }
    }

    /// C_i
    pub fn user_total(&self, user: &UserId) -> Option<T> {
        self.user_totals.get(user).copied()
    }

    /// C_j aligned with the universe.
    pub fn item_totals(&self) -> &[T] {
        &self.item_totals
    }

    /// C
    pub fn total(&self) -> T {
        self.total
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn anchor_day(&self) -> u32 {
        self.anchor_day
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(rows: &[(&str, u32, &str)]) -> Vec<(UserId, u32, ItemId)> {
        rows.iter().map(|(u, d, i)| (UserId::new(u), *d, ItemId::new(i))).collect()
    }

    fn build(rows: &[(UserId, u32, ItemId)], anchor: u32, lambda: f64, n: Normalization) -> CountStats<f64> {
        CountStats::build(rows.iter().map(|(u, d, i)| (u, *d, i)), anchor, lambda, n).unwrap()
    }

    #[test]
    fn undecayed_counts() {
        let rows = obs(&[("u", 1, "a"), ("u", 2, "a"), ("u", 3, "a")]);
        let c = build(&rows, 3, 1.0, Normalization::Raw);
        assert_eq!(c.user_count(&UserId::new("u"), &ItemId::new("a")), 3.0);
    }

    #[test]
    fn decayed_counts_direct_evaluation() {
        // c over days 1..3 = [1, 0, 2]
        let rows = obs(&[("u", 1, "a"), ("u", 3, "a"), ("u", 3, "a")]);
        let c = build(&rows, 3, 0.5, Normalization::Raw);
        assert_eq!(c.user_count(&UserId::new("u"), &ItemId::new("a")), 2.25);
        assert_eq!(c.total(), 2.25);
    }

    #[test]
    fn l1_rows() {
        let rows = obs(&[("u", 0, "a"), ("u", 0, "a"), ("u", 0, "a"), ("u", 0, "b"), ("v", 0, "b")]);
        let c = build(&rows, 0, 1.0, Normalization::L1PerUser);
        let u = UserId::new("u");
        assert_eq!(c.user_count(&u, &ItemId::new("a")), 0.75);
        assert_eq!(c.user_count(&u, &ItemId::new("b")), 0.25);
        assert_eq!(c.user_total(&u), Some(1.0));
        assert_eq!(c.item_totals(), &[0.75, 1.25]);
        assert_eq!(c.total(), 2.0);
    }

    #[test]
    fn rejects_bad_lambda_and_future_events() {
        let rows = obs(&[("u", 4, "a")]);
        let it = || rows.iter().map(|(u, d, i)| (u, *d, i));
        assert!(matches!(
            CountStats::<f64>::build(it(), 5, 0.0, Normalization::Raw),
            Err(ModelError::InvalidLambda(_))
        ));
        assert!(CountStats::<f64>::build(it(), 5, 1.5, Normalization::Raw).is_err());
        assert!(matches!(
            CountStats::<f64>::build(it(), 3, 1.0, Normalization::Raw),
            Err(ModelError::EventAfterAnchor { day: 4, anchor: 3 })
        ));
    }
}
