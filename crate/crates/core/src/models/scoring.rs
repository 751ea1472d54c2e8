use std::collections::BTreeMap;

use crate::ids::{ItemId, UserId};
use crate::scalar::{cmp_desc, Scalar};

use super::{CountStats, ModelError};

/// Exploitation component θ^I_i = C_ij / C_i, uniform if the user has no mass.
pub fn theta_individual<T: Scalar>(counts: &CountStats<T>, user: &UserId) -> Result<Vec<T>, ModelError> {
    let row = counts.row(user).ok_or_else(|| ModelError::UnknownUser(user.to_string()))?;
    let f = counts.n_items();
    if f == 0 {
        return Err(ModelError::EmptyUniverse);
    }
    let c_i = counts.user_total(user).unwrap_or_else(T::zero);
    if c_i <= T::zero() {
        return Ok(vec![T::one() / T::from_count(f); f]);
    }
    let mut theta = vec![T::zero(); f];
    for &(j, c) in row {
        theta[j] = c / c_i;
    }
    Ok(theta)
}

/// Exploration component θ^P_j = (C_j + 1) / (C + |F|).
pub fn theta_population<T: Scalar>(counts: &CountStats<T>) -> Result<Vec<T>, ModelError> {
    let f = counts.n_items();
    if f == 0 {
        return Err(ModelError::EmptyUniverse);
    }
    let denom = counts.total() + T::from_count(f);
    Ok(counts.item_totals().iter().map(|&c| (c + T::one()) / denom).collect())
}

/// π θ^I + (1 − π) θ^P.
pub fn mix<T: Scalar>(pi: T, individual: &[T], population: &[T]) -> Vec<T> {
    individual.iter().zip(population).map(|(&a, &b)| pi * a + (T::one() - pi) * b).collect()
}

/// Fitted mixture weight of one user.
#[derive(Clone, Debug, PartialEq)]
pub struct UserFit<T = f64> {
    pub pi: T,
    pub iterations: usize,
    pub converged: bool,
    /// false when the user had no usable held-out events
    pub fitted: bool,
    /// held-out log-likelihood at the initial weight and after each iteration
    pub loglik: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParams<T = f64> {
    pub lambda: T,
    pub users: BTreeMap<UserId, UserFit<T>>,
}

impl<T: Scalar> MixtureParams<T> {
    pub fn pi(&self, user: &UserId) -> Option<T> {
        self.users.get(user).map(|f| f.pi)
    }

    /// Mean π over fitted users.
    pub fn mean_pi(&self) -> Option<T> {
        let fitted: Vec<T> = self.users.values().filter(|f| f.fitted).map(|f| f.pi).collect();
        crate::scalar::mean(&fitted)
    }
}

/// Mixture score vector of one user.
pub fn mixture_score<T: Scalar>(
    counts: &CountStats<T>,
    params: &MixtureParams<T>,
    user: &UserId,
) -> Result<Vec<T>, ModelError> {
    let pi = params.pi(user).ok_or_else(|| ModelError::MissingWeight(user.to_string()))?;
    mixture_score_with(counts, pi, user)
}

pub fn mixture_score_with<T: Scalar>(counts: &CountStats<T>, pi: T, user: &UserId) -> Result<Vec<T>, ModelError> {
    Ok(mix(pi, &theta_individual(counts, user)?, &theta_population(counts)?))
}

/// Score ∝ the user's own counts; unseen items score 0.
pub fn personal_score<T: Scalar>(counts: &CountStats<T>, user: &UserId) -> Result<Vec<T>, ModelError> {
    let row = counts.row(user).ok_or_else(|| ModelError::UnknownUser(user.to_string()))?;
    let mut s = vec![T::zero(); counts.n_items()];
    for &(j, c) in row {
        s[j] = c;
    }
    Ok(s)
}

/// Score ∝ item totals; identical for all users.
pub fn global_score<T: Scalar>(counts: &CountStats<T>) -> Vec<T> {
    counts.item_totals().to_vec()
}

/// Ranked prefix of a score vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredList<T = f64> {
    pub user: Option<UserId>,
    pub entries: Vec<(ItemId, T)>,
}

impl<T: Scalar> ScoredList<T> {
    pub fn items(&self) -> Vec<ItemId> {
        self.entries.iter().map(|(i, _)| i.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Positions of the `n` best scores, score descending then position
/// ascending. `skip` removes positions before ranking.
pub fn rank_positions<T: Scalar>(scores: &[T], n: usize, skip: impl Fn(usize) -> bool) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&j| !skip(j)).collect();
    let cmp = |a: &usize, b: &usize| cmp_desc(scores[*a], scores[*b]).then(a.cmp(b));
    if n == 0 {
        return Vec::new();
    }
    if n < idx.len() {
        idx.select_nth_unstable_by(n - 1, cmp);
        idx.truncate(n);
    }
    idx.sort_unstable_by(cmp);
    idx
}

/// `n` highest-scoring items of the universe. Score ties go to the smaller
/// item identifier; zero-score items pad the list in identifier order.
pub fn top_n<T: Scalar>(scores: &[T], universe: &[ItemId], n: usize) -> ScoredList<T> {
    let entries = rank_positions(scores, n, |_| false).into_iter().map(|j| (universe[j].clone(), scores[j])).collect();
    ScoredList { user: None, entries }
}
