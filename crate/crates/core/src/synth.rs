//! Event logs drawn from a known exploration/exploitation mixture.
//!
//! Each user owns a personal pool drawn uniformly from the item catalogue and
//! a weight π. Every day the user logs `1 + Poisson(items_per_day − 1)`
//! items; each one comes from the personal pool (uniformly) with probability
//! π and from the population multinomial `∝ rank^(−popularity_exponent)`
//! otherwise. Users are generated from independent ChaCha8 streams, so the
//! log only depends on the seed.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use thiserror::Error;

use crate::ids::{ItemId, UserId};
use crate::ingest::{ConsumptionEvent, EventLog, Meal};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

/// Source of the true mixture weights.
#[derive(Clone, Debug, PartialEq)]
pub enum PiSpec {
    Fixed(f64),
    /// Drawn per user from U(lo, hi).
    Uniform(f64, f64),
    PerUser(Vec<f64>),
}

/// Personal pools switch from one set to a fresh disjoint set on `day`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreferenceShift {
    pub day: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_days: u32,
    pub pi: PiSpec,
    pub personal_pool_size: usize,
    pub popularity_exponent: f64,
    /// Mean number of events per user-day, at least 1.
    pub items_per_day: f64,
    pub seed: u64,
    /// Restricts the population multinomial to the first `m` items and draws
    /// personal pools from the remaining ones.
    pub popular_items: Option<usize>,
    pub shift: Option<PreferenceShift>,
    pub start: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_users: 50,
            n_items: 200,
            n_days: 30,
            pi: PiSpec::Uniform(0.2, 0.9),
            personal_pool_size: 10,
            popularity_exponent: 1.0,
            items_per_day: 4.0,
            seed: 0,
            popular_items: None,
            shift: None,
            start: NaiveDate::from_ymd_opt(2015, 1, 5).expect("valid date"),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_users == 0 || self.n_items == 0 || self.n_days == 0 {
            return bad("n_users, n_items and n_days must be positive".into());
        }
        if self.personal_pool_size == 0 {
            return bad("personal_pool_size must be positive".into());
        }
        let pool_space = match self.popular_items {
            Some(m) if m == 0 || m >= self.n_items => {
                return bad(format!("popular_items must lie in 1..{}", self.n_items));
            }
            Some(m) => self.n_items - m,
            None => self.n_items,
        };
        let pools = if self.shift.is_some() { 2 } else { 1 };
        if self.personal_pool_size * pools > pool_space {
            return bad(format!(
                "{pools} personal pool(s) of {} items do not fit in {pool_space} items",
                self.personal_pool_size
            ));
        }
        if !(self.popularity_exponent.is_finite() && self.popularity_exponent >= 0.0) {
            return bad("popularity_exponent must be finite and non-negative".into());
        }
        if !(self.items_per_day.is_finite() && self.items_per_day >= 1.0) {
            return bad("items_per_day must be at least 1".into());
        }
        let in_unit = |p: f64| (0.0..=1.0).contains(&p);
        match &self.pi {
            PiSpec::Fixed(p) if !in_unit(*p) => bad("pi must lie in [0, 1]".into()),
            PiSpec::Uniform(lo, hi) if !(in_unit(*lo) && in_unit(*hi) && lo <= hi) => {
                bad("pi range must satisfy 0 <= lo <= hi <= 1".into())
            }
            PiSpec::PerUser(v) if v.len() != self.n_users || !v.iter().all(|&p| in_unit(p)) => {
                bad("per-user pi needs one value in [0, 1] per user".into())
            }
            _ => Ok(()),
        }
    }
}

/// Parameters the log was drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub pi: BTreeMap<UserId, f64>,
    /// Uniform personal pool per user, sorted.
    pub personal: BTreeMap<UserId, Vec<ItemId>>,
    /// Pool used from the shift day onwards, if any.
    pub shifted: BTreeMap<UserId, Vec<ItemId>>,
    /// Population multinomial over the catalogue.
    pub population: Vec<(ItemId, f64)>,
}

pub fn item_id(j: usize, n_items: usize) -> ItemId {
    let width = n_items.saturating_sub(1).to_string().len();
    ItemId::new(&format!("i{j:0width$}"))
}

pub fn user_id(i: usize, n_users: usize) -> UserId {
    let width = n_users.saturating_sub(1).to_string().len();
    UserId::new(&format!("u{i:0width$}"))
}

/// Normalized `rank^(−exponent)` weights over the first `support` items.
pub fn population_weights(n_items: usize, support: usize, exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> =
        (0..n_items).map(|j| if j < support { ((j + 1) as f64).powf(-exponent) } else { 0.0 }).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

struct UserDraw {
    pi: f64,
    personal: Vec<usize>,
    shifted: Vec<usize>,
    /// (day, meal, item)
    events: Vec<(u32, Meal, usize)>,
}

fn draw_user(cfg: &SynthConfig, user: usize, population: &WeightedIndex<f64>) -> UserDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(user as u64 + 1);
    let pi = match &cfg.pi {
        PiSpec::Fixed(p) => *p,
        PiSpec::Uniform(lo, hi) => lo + (hi - lo) * rng.random::<f64>(),
        PiSpec::PerUser(v) => v[user],
    };
    let offset = cfg.popular_items.unwrap_or(0);
    let space = cfg.n_items - offset;
    let pools = if cfg.shift.is_some() { 2 } else { 1 };
    let picked: Vec<usize> =
        index::sample(&mut rng, space, cfg.personal_pool_size * pools).into_iter().map(|j| j + offset).collect();
    let (first, second) = picked.split_at(cfg.personal_pool_size);
    let (mut personal, mut shifted) = (first.to_vec(), second.to_vec());
    let extra = Poisson::new(cfg.items_per_day - 1.0).ok();
    let mut events = Vec::new();
    for day in 0..cfg.n_days {
        let pool = match cfg.shift {
            Some(s) if day >= s.day => &shifted,
            _ => &personal,
        };
        let count = 1 + extra.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..count {
            let item =
                if rng.random_bool(pi) { pool[rng.random_range(0..pool.len())] } else { population.sample(&mut rng) };
            let meal = Meal::OCCASIONS[rng.random_range(0..Meal::OCCASIONS.len())];
            events.push((day, meal, item));
        }
    }
    personal.sort_unstable();
    shifted.sort_unstable();
    UserDraw { pi, personal, shifted, events }
}

/// Draws a log and returns it with the parameters used.
pub fn generate(cfg: &SynthConfig) -> Result<(EventLog, GroundTruth), SynthError> {
    cfg.validate()?;
    let support = cfg.popular_items.unwrap_or(cfg.n_items);
    let weights = population_weights(cfg.n_items, support, cfg.popularity_exponent);
    let sampler = WeightedIndex::new(&weights).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    let items: Vec<ItemId> = (0..cfg.n_items).map(|j| item_id(j, cfg.n_items)).collect();
    let draws: Vec<UserDraw> = (0..cfg.n_users).into_par_iter().map(|u| draw_user(cfg, u, &sampler)).collect();

    let mut truth = GroundTruth {
        pi: BTreeMap::new(),
        personal: BTreeMap::new(),
        shifted: BTreeMap::new(),
        population: items.iter().cloned().zip(weights.iter().copied()).collect(),
    };
    let dates: Vec<NaiveDate> = (0..cfg.n_days).map(|d| cfg.start + chrono::Days::new(u64::from(d))).collect();
    let mut events = Vec::new();
    for (u, draw) in draws.into_iter().enumerate() {
        let user = user_id(u, cfg.n_users);
        for (day, meal, item) in draw.events {
            events.push(ConsumptionEvent {
                user: user.clone(),
                day,
                date: dates[day as usize],
                meal,
                item: items[item].clone(),
                description: None,
                calories: None,
                portion: None,
            });
        }
        truth.pi.insert(user.clone(), draw.pi);
        truth.personal.insert(user.clone(), draw.personal.iter().map(|&j| items[j].clone()).collect());
        if cfg.shift.is_some() {
            truth.shifted.insert(user.clone(), draw.shifted.iter().map(|&j| items[j].clone()).collect());
        }
    }
    let log = EventLog::from_events(events).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    Ok((log, truth))
}

/// Text rendering of the ground truth: one `pi` line per user, one `pool`
/// line per user, then the population weights.
pub fn write_ground_truth(truth: &GroundTruth) -> String {
    let mut out = String::from("# kind\tkey\tvalue\n");
    for (u, p) in &truth.pi {
        out.push_str(&format!("pi\t{u}\t{p}\n"));
    }
    for (u, pool) in &truth.personal {
        let items: Vec<&str> = pool.iter().map(ItemId::as_str).collect();
        out.push_str(&format!("pool\t{u}\t{}\n", items.join(",")));
    }
    for (u, pool) in &truth.shifted {
        let items: Vec<&str> = pool.iter().map(ItemId::as_str).collect();
        out.push_str(&format!("shifted_pool\t{u}\t{}\n", items.join(",")));
    }
    for (i, w) in &truth.population {
        out.push_str(&format!("population\t{i}\t{w}\n"));
    }
    out
}
