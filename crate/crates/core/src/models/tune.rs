use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::eval::{Basket, Metric};
use crate::ids::{ItemId, UserId};
use crate::scalar::{mean, Scalar};

use super::{em_fit, mixture_score, rank_positions, CountStats, EmConfig, MixtureParams, ModelError, Normalization};

/// Validation objective: one metric at one cutoff.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Objective {
    pub metric: Metric,
    pub n: usize,
}

impl Default for Objective {
    fn default() -> Self {
        Self { metric: Metric::Ndcg, n: 5 }
    }
}

/// λ ∈ {0.05, 0.10, …, 1.00}.
pub fn default_lambda_grid<T: Scalar>() -> Vec<T> {
    (1..=20).map(|i| T::from_count(i) / T::lit(20.0)).collect()
}

/// Result of a decay-rate search.
#[derive(Clone, Debug)]
pub struct LambdaTuning<T = f64> {
    pub best: T,
    /// (λ, mean validation objective) in grid order
    pub trace: Vec<(T, T)>,
    pub counts: CountStats<T>,
    pub params: MixtureParams<T>,
}

/// Mean objective of mixture rankings over users with a non-empty basket
/// inside the training universe. Zero when no user qualifies.
pub fn mixture_objective<T: Scalar>(
    counts: &CountStats<T>,
    params: &MixtureParams<T>,
    baskets: &BTreeMap<UserId, Basket>,
    objective: Objective,
) -> Result<T, ModelError> {
    let mut values = Vec::new();
    for (user, basket) in baskets {
        let basket: Basket = basket
            .iter()
            .filter(|(i, &c)| c > 0 && counts.position(i).is_some())
            .map(|(i, &c)| (i.clone(), c))
            .collect();
        if basket.is_empty() || !counts.contains_user(user) {
            continue;
        }
        let scores = mixture_score(counts, params, user)?;
        let ranked: Vec<ItemId> =
            rank_positions(&scores, objective.n, |_| false).into_iter().map(|j| counts.universe()[j].clone()).collect();
        values.push(objective.metric.compute::<T>(&basket, &ranked, objective.n)?);
    }
    Ok(mean(&values).unwrap_or_else(T::zero))
}

/// Search settings for [`tune_lambda`].
#[derive(Clone, Debug, PartialEq)]
pub struct TuneConfig<T = f64> {
    pub grid: Vec<T>,
    pub objective: Objective,
    pub em: EmConfig<T>,
    pub normalization: Normalization,
}

impl<T: Scalar> Default for TuneConfig<T> {
    fn default() -> Self {
        Self {
            grid: default_lambda_grid(),
            objective: Objective::default(),
            em: EmConfig::default(),
            normalization: Normalization::default(),
        }
    }
}

/// Builds decayed counts for each λ, fits π on `fit` (usually the validation
/// baskets), and keeps the λ with the best objective on `validation`; ties go
/// to the larger λ. Baskets of users absent from training are ignored.
pub fn tune_lambda<'a, T, I>(
    train: I,
    anchor_day: u32,
    fit: &BTreeMap<UserId, Basket>,
    validation: &BTreeMap<UserId, Basket>,
    cfg: &TuneConfig<T>,
) -> Result<LambdaTuning<T>, ModelError>
where
    T: Scalar,
    I: IntoIterator<Item = (&'a UserId, u32, &'a ItemId)>,
{
    if cfg.grid.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    if let Some(&bad) = cfg.grid.iter().find(|&&l| !(l > T::zero() && l <= T::one())) {
        return Err(ModelError::InvalidLambda(bad.to_f64_lossy()));
    }
    let train: Vec<(&UserId, u32, &ItemId)> = train.into_iter().collect();
    let train_users: BTreeSet<&UserId> = train.iter().map(|(u, _, _)| *u).collect();
    let known = |baskets: &BTreeMap<UserId, Basket>| -> BTreeMap<UserId, Basket> {
        baskets.iter().filter(|(u, _)| train_users.contains(u)).map(|(u, b)| (u.clone(), b.clone())).collect()
    };
    let (fit, validation) = (known(fit), known(validation));
    let evaluated: Vec<(T, T, CountStats<T>, MixtureParams<T>)> = cfg
        .grid
        .par_iter()
        .map(|&lambda| {
            let counts = CountStats::build(train.iter().copied(), anchor_day, lambda, cfg.normalization)?;
            let params = em_fit(&counts, &fit, &cfg.em)?;
            let score = mixture_objective(&counts, &params, &validation, cfg.objective)?;
            Ok((lambda, score, counts, params))
        })
        .collect::<Result<_, ModelError>>()?;
    let trace = evaluated.iter().map(|(l, s, _, _)| (*l, *s)).collect();
    let best = evaluated
        .into_iter()
        .reduce(|best, cand| if cand.1 > best.1 || (cand.1 == best.1 && cand.0 > best.0) { cand } else { best })
        .expect("non-empty grid");
    Ok(LambdaTuning { best: best.0, trace, counts: best.2, params: best.3 })
}
