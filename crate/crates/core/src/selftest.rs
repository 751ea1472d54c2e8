//! Randomized comparisons against the oracles, shared by the command-line
//! self-test and the acceptance suite.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::{ndcg_at_n, precision_at_n, recall_at_n, Basket};
use crate::ids::{ItemId, UserId};
use crate::models::{em_fit, CountStats, EmConfig, Normalization};
use crate::oracle;
use crate::repeat::{repeat_stats, AnalysisError, ConsumptionSequence, Direction, MealScope, WindowSpec};
use crate::synth::{generate, PiSpec, SynthConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

/// One random metric instance: test multiset, ranked list, cutoff.
pub fn random_metric_instance(rng: &mut impl Rng) -> (Basket, Vec<ItemId>, usize) {
    let f = rng.random_range(1..=6);
    let items: Vec<ItemId> = (0..f).map(|j| ItemId::new(&format!("f{j}"))).collect();
    let mut test = Basket::new();
    while test.is_empty() {
        for item in &items {
            if rng.random_bool(0.5) {
                test.insert(item.clone(), rng.random_range(1..=3));
            }
        }
    }
    let mut ranked = items.clone();
    ranked.shuffle(rng);
    ranked.truncate(rng.random_range(0..=f));
    (test, ranked, rng.random_range(1..=3))
}

/// Metric implementations against the brute-force oracle.
pub fn metric_oracle(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut errors = 0;
    for _ in 0..instances {
        let (test, ranked, n) = random_metric_instance(&mut rng);
        let items: oracle::TestItems = test.iter().map(|(i, &c)| (i.clone(), c)).collect();
        let pairs = [
            (recall_at_n::<f64>(&test, &ranked, n), oracle::recall(&items, &ranked, n)),
            (precision_at_n::<f64>(&test, &ranked, n), oracle::precision(&items, &ranked, n)),
            (ndcg_at_n::<f64>(&test, &ranked, n), oracle::ndcg(&items, &ranked, n)),
        ];
        for (got, want) in pairs {
            match got {
                Ok(v) => worst = worst.max((v - want).abs()),
                Err(_) => errors += 1,
            }
        }
    }
    Check {
        name: "metric oracle",
        passed: errors == 0 && worst <= 1e-12,
        detail: format!("{instances} instances, max |diff| = {worst:e}, errors = {errors}"),
    }
}

/// A random day-set sequence with `len ≤ 12` days over at most 10 items;
/// roughly one day in six is empty.
pub fn random_sequence(rng: &mut impl Rng) -> Vec<BTreeSet<ItemId>> {
    let len = rng.random_range(1..=12);
    let f = rng.random_range(1..=10);
    (0..len)
        .map(|_| {
            if rng.random_bool(1.0 / 6.0) {
                return BTreeSet::new();
            }
            let size = rng.random_range(1..=f.min(4));
            (0..size).map(|_| ItemId::new(&format!("f{}", rng.random_range(0..f)))).collect()
        })
        .collect()
}

/// Repeat fractions against the naive window scan; equality is exact.
pub fn repeat_oracle(trials: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    let mut compared_days = 0;
    for trial in 0..trials {
        let days = random_sequence(&mut rng);
        let k = [2, 3, 7][rng.random_range(0..3)];
        let direction = if rng.random_bool(0.5) { Direction::Forward } else { Direction::Backward };
        let seq = ConsumptionSequence::new(UserId::new(&format!("u{trial}")), 0, MealScope::All, days.clone());
        let spec = WindowSpec::new(k, direction).expect("k >= 2");
        let want = oracle::repeat_counts(&days, k, direction);
        match repeat_stats::<f64>(&seq, &spec) {
            Ok(stats) => {
                let got: Vec<(u32, f64)> = stats.per_day.iter().map(|(&d, &v)| (d, v)).collect();
                let expect: Vec<(u32, f64)> =
                    want.iter().map(|c| (c.anchor as u32, c.repeats as f64 / c.size as f64)).collect();
                compared_days += expect.len();
                if got != expect || Some(stats.per_user) != oracle::user_fraction(&want) {
                    mismatches += 1;
                }
            }
            Err(AnalysisError::NoMeasurableDays) if want.is_empty() => {}
            Err(_) => mismatches += 1,
        }
    }
    Check {
        name: "repeat oracle",
        passed: mismatches == 0,
        detail: format!("{trials} sequences, {compared_days} anchor days, {mismatches} mismatches"),
    }
}

/// Training days of the recovery experiment; the rest of the log is held out.
pub const EM_RECOVERY_TRAIN_DAYS: u32 = 5;

/// 200 users, 500 items, 30 days, π ~ U(0.2, 0.9); personal pools of three
/// items drawn outside the 450 items carrying population mass.
pub fn em_recovery_config(seed: u64) -> SynthConfig {
    SynthConfig {
        n_users: 200,
        n_items: 500,
        n_days: 30,
        pi: PiSpec::Uniform(0.2, 0.9),
        personal_pool_size: 3,
        popularity_exponent: 0.5,
        items_per_day: 8.0,
        seed,
        popular_items: Some(450),
        ..SynthConfig::default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmRecovery {
    pub mae: f64,
    pub users: usize,
    /// Users whose held-out log-likelihood decreased in some iteration.
    pub non_monotone: usize,
}

pub fn em_recovery(seed: u64) -> EmRecovery {
    let cfg = em_recovery_config(seed);
    let (log, truth) = generate(&cfg).expect("valid recovery config");
    let train: Vec<_> = log.range_events(0..EM_RECOVERY_TRAIN_DAYS).map(|e| (&e.user, e.day, &e.item)).collect();
    let counts = CountStats::<f64>::build(train, EM_RECOVERY_TRAIN_DAYS - 1, 1.0, Normalization::L1PerUser)
        .expect("valid counts");
    let mut heldout: BTreeMap<UserId, Basket> = BTreeMap::new();
    for e in log.range_events(EM_RECOVERY_TRAIN_DAYS..cfg.n_days) {
        *heldout.entry(e.user.clone()).or_default().entry(e.item.clone()).or_insert(0) += 1;
    }
    let params = em_fit(&counts, &heldout, &EmConfig::default()).expect("users known");
    let mut abs = 0.0;
    let mut non_monotone = 0;
    for (user, fit) in &params.users {
        abs += (fit.pi - truth.pi[user]).abs();
        let decreasing = fit.loglik.windows(2).any(|w| w[1] < w[0] - 1e-12 * w[0].abs().max(1.0));
        if decreasing {
            non_monotone += 1;
        }
    }
    let users = params.users.len();
    EmRecovery { mae: abs / users as f64, users, non_monotone }
}

pub fn em_recovery_check(seed: u64) -> Check {
    let r = em_recovery(seed);
    Check {
        name: "EM recovery",
        passed: r.users == 200 && r.mae <= 0.05 && r.non_monotone == 0,
        detail: format!("{} users, MAE = {:.4}, non-monotone traces = {}", r.users, r.mae, r.non_monotone),
    }
}

/// All self-test suites with their default sizes.
pub fn run_all(seed: u64) -> Vec<Check> {
    vec![metric_oracle(500, seed), repeat_oracle(1000, seed), em_recovery_check(seed)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_runs_pass() {
        assert!(metric_oracle(50, 1).passed);
        assert!(repeat_oracle(100, 1).passed);
    }

    #[test]
    fn display() {
        let c = Check { name: "x", passed: false, detail: "d".into() };
        assert_eq!(c.to_string(), "FAIL x: d");
    }
}
