use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::eval::Basket;
use crate::ids::UserId;
use crate::scalar::Scalar;

use super::{theta_individual, theta_population, CountStats, MixtureParams, ModelError, UserFit};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmConfig<T = f64> {
    pub init_pi: T,
    pub tol: T,
    pub max_iter: usize,
    /// π is kept inside [epsilon, 1 − epsilon]
    pub epsilon: T,
}

impl<T: Scalar> Default for EmConfig<T> {
    fn default() -> Self {
        Self { init_pi: T::lit(0.5), tol: T::lit(1e-6), max_iter: 100, epsilon: T::lit(1e-6) }
    }
}

impl<T: Scalar> EmConfig<T> {
    fn clamp(&self, pi: T) -> T {
        pi.max(self.epsilon).min(T::one() - self.epsilon)
    }
}

/// One held-out observation: component probabilities of the item and its
/// multiplicity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeldOut<T> {
    pub individual: T,
    pub population: T,
    pub count: T,
}

fn loglik<T: Scalar>(pi: T, obs: &[HeldOut<T>]) -> T {
    obs.iter().map(|o| o.count * (pi * o.individual + (T::one() - pi) * o.population).ln()).sum()
}

/// EM for the single free weight of a two-component mixture with fixed
/// components.
///
/// E-step: r_j = π θ^I_j / (π θ^I_j + (1 − π) θ^P_j). M-step: π = Σ n_j r_j / Σ n_j.
/// Stops once |Δπ| < tol or after `max_iter` updates. The log-likelihood is
/// concave in π, so clamping an update towards the previous iterate never
/// lowers it and the trace stays non-decreasing.
pub fn em_fit_user<T: Scalar>(obs: &[HeldOut<T>], cfg: &EmConfig<T>) -> UserFit<T> {
    let total: T = obs.iter().map(|o| o.count).sum();
    let mut pi = cfg.clamp(cfg.init_pi);
    if obs.is_empty() || total <= T::zero() {
        return UserFit { pi: cfg.init_pi, iterations: 0, converged: false, fitted: false, loglik: Vec::new() };
    }
    let mut trace = vec![loglik(pi, obs)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let weighted: T = obs
            .iter()
            .map(|o| {
                let a = pi * o.individual;
                let denom = a + (T::one() - pi) * o.population;
                if denom > T::zero() {
                    o.count * a / denom
                } else {
                    T::zero()
                }
            })
            .sum();
        let next = cfg.clamp(weighted / total);
        iterations += 1;
        let delta = (next - pi).abs();
        pi = next;
        trace.push(loglik(pi, obs));
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }
    UserFit { pi, iterations, converged, fitted: true, loglik: trace }
}

/// Fits π for every user in `counts` from held-out baskets. Held-out items
/// outside the training universe carry no component probability and are
/// ignored; users with nothing left keep `init_pi` and are marked unfitted.
pub fn em_fit<T: Scalar>(
    counts: &CountStats<T>,
    heldout: &BTreeMap<UserId, Basket>,
    cfg: &EmConfig<T>,
) -> Result<MixtureParams<T>, ModelError> {
    if let Some(user) = heldout.keys().find(|u| !counts.contains_user(u)) {
        return Err(ModelError::UnknownUser(user.to_string()));
    }
    let population = theta_population(counts)?;
    let users: Vec<&UserId> = counts.users().collect();
    let fits: Vec<(UserId, UserFit<T>)> = users
        .par_iter()
        .map(|&user| {
            let obs: Vec<HeldOut<T>> = match heldout.get(user) {
                None => Vec::new(),
                Some(basket) => {
                    let individual = theta_individual(counts, user)?;
                    basket
                        .iter()
                        .filter(|(_, &n)| n > 0)
                        .filter_map(|(item, &n)| {
                            counts.position(item).map(|j| HeldOut {
                                individual: individual[j],
                                population: population[j],
                                count: T::from_u32(n).unwrap(),
                            })
                        })
                        .collect()
                }
            };
            Ok((user.clone(), em_fit_user(&obs, cfg)))
        })
        .collect::<Result<_, ModelError>>()?;
    Ok(MixtureParams { lambda: counts.lambda(), users: fits.into_iter().collect() })
}
