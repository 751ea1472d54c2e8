use std::collections::{BTreeMap, BTreeSet};

use chrono::{Datelike, NaiveDate, Weekday};
use rayon::prelude::*;

use crate::ids::{ItemId, UserId};
use crate::ingest::{AgeGroup, EventLog, Gender, Meal, Profiles, Region};
use crate::models::{
    em_fit, global_score, mixture_score, personal_score, rank_positions, tune_lambda, CountStats, LambdaTuning, Method,
    MixtureParams, TuneConfig,
};
use crate::repeat::{is_weekend, MealScope};
use crate::scalar::Scalar;

use super::{filter_unseen, make_sessions, Basket, Eligibility, EvalError, Gain, Metric, SessionSplit, DEFAULT_WINDOW};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    All,
    NovelOnly,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::All => "all",
            Scope::NovelOnly => "novel_only",
        }
    }
}

/// Held-out data for the mixture-weight fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EmData {
    #[default]
    Validation,
    /// Validation day plus the training days.
    TrainAndValidation,
}

impl EmData {
    pub fn as_str(self) -> &'static str {
        match self {
            EmData::Validation => "validation",
            EmData::TrainAndValidation => "train_and_validation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "validation" => Some(EmData::Validation),
            "train_and_validation" => Some(EmData::TrainAndValidation),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig<T = f64> {
    pub window: u32,
    /// Cutoffs for the all-item scope.
    pub top_n: Vec<usize>,
    /// Cutoff for the novel-only scope.
    pub novel_n: usize,
    pub methods: Vec<Method>,
    pub tune: TuneConfig<T>,
    pub eligibility: Eligibility,
    pub em_data: EmData,
    pub gain: Gain,
}

impl<T: Scalar> Default for EvalConfig<T> {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            top_n: vec![5],
            novel_n: 3,
            methods: Method::ALL.to_vec(),
            tune: TuneConfig::default(),
            eligibility: Eligibility::default(),
            em_data: EmData::default(),
            gain: Gain::default(),
        }
    }
}

impl<T: Scalar> EvalConfig<T> {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidConfig(m.to_string()));
        if self.window < 3 {
            return Err(EvalError::InvalidWindow(self.window));
        }
        if self.top_n.is_empty() || self.top_n.contains(&0) || self.novel_n == 0 {
            return Err(EvalError::ZeroCutoff);
        }
        if self.methods.is_empty() {
            return bad("no methods selected");
        }
        if self.tune.objective.n == 0 {
            return Err(EvalError::ZeroCutoff);
        }
        if self.tune.grid.is_empty() {
            return bad("lambda grid is empty");
        }
        if self.tune.grid.iter().any(|&l| !(l > T::zero() && l <= T::one())) {
            return bad("lambda grid values must lie in (0, 1]");
        }
        let em = &self.tune.em;
        if !(em.tol > T::zero()) || em.max_iter == 0 {
            return bad("EM tolerance must be positive and max_iter at least 1");
        }
        if !(em.epsilon > T::zero() && em.epsilon < T::lit(0.5)) || !(em.init_pi > T::zero() && em.init_pi < T::one()) {
            return bad("EM init_pi must lie in (0, 1) and epsilon in (0, 0.5)");
        }
        Ok(())
    }
}

/// Profile and calendar labels attached to each record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Context {
    pub gender: Gender,
    pub age_group: AgeGroup,
    pub region: Region,
    /// Weekday of the test day.
    pub weekday: Weekday,
}

impl Context {
    pub fn weekday_or_weekend(&self) -> &'static str {
        if is_weekend(self.weekday) {
            "weekend"
        } else {
            "weekday"
        }
    }
}

/// One metric value for one user in one session.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord<T = f64> {
    pub session_id: usize,
    pub user: UserId,
    pub method: Method,
    pub metric: Metric,
    pub n: usize,
    pub scope: Scope,
    pub meal_scope: MealScope,
    pub context: Context,
    pub value: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionOutcome<T = f64> {
    pub session_id: usize,
    pub test_day: u32,
    pub test_date: NaiveDate,
    pub eligible_users: usize,
    pub scored_users: usize,
    /// Tuned decay rate, when the time-decayed mixture ran.
    pub lambda: Option<T>,
    /// Mean fitted weight of the plain mixture.
    pub mean_pi: Option<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRun<T = f64> {
    pub meal_scope: MealScope,
    pub records: Vec<MetricRecord<T>>,
    pub sessions: Vec<SessionOutcome<T>>,
}

impl<T> EvalRun<T> {
    /// Sessions that ended with nobody to score.
    pub fn empty_sessions(&self) -> impl Iterator<Item = usize> + '_ {
        self.sessions.iter().filter(|s| s.scored_users == 0).map(|s| s.session_id)
    }
}

/// Full protocol on every event of the log.
pub fn evaluate<T: Scalar>(log: &EventLog, profiles: &Profiles, cfg: &EvalConfig<T>) -> Result<EvalRun<T>, EvalError> {
    run(log, profiles, cfg, MealScope::All)
}

/// Full protocol on the events of one meal occasion.
pub fn meal_specific_protocol<T: Scalar>(
    log: &EventLog,
    meal: Meal,
    profiles: &Profiles,
    cfg: &EvalConfig<T>,
) -> Result<EvalRun<T>, EvalError> {
    if !Meal::OCCASIONS.contains(&meal) {
        return Err(EvalError::InvalidConfig(format!("meal `{}` is not an occasion", meal.as_str())));
    }
    run(&log.restrict_to_meal(meal), profiles, cfg, MealScope::Meal(meal))
}

fn run<T: Scalar>(
    log: &EventLog,
    profiles: &Profiles,
    cfg: &EvalConfig<T>,
    meal_scope: MealScope,
) -> Result<EvalRun<T>, EvalError> {
    cfg.validate()?;
    let sessions = make_sessions(log, cfg.window)?;
    let outcomes: Vec<(SessionOutcome<T>, Vec<MetricRecord<T>>)> = sessions
        .par_iter()
        .map(|raw| evaluate_session(log, profiles, cfg, meal_scope, raw))
        .collect::<Result<_, EvalError>>()?;
    let mut records = Vec::new();
    let mut summaries = Vec::with_capacity(outcomes.len());
    for (summary, recs) in outcomes {
        summaries.push(summary);
        records.extend(recs);
    }
    Ok(EvalRun { meal_scope, records, sessions: summaries })
}

fn basket_of<'a>(
    events: impl Iterator<Item = &'a crate::ingest::ConsumptionEvent>,
    users: &BTreeSet<UserId>,
) -> BTreeMap<UserId, Basket> {
    let mut out: BTreeMap<UserId, Basket> = BTreeMap::new();
    for e in events.filter(|e| users.contains(&e.user)) {
        *out.entry(e.user.clone()).or_default().entry(e.item.clone()).or_insert(0) += 1;
    }
    out
}

struct Fitted<T> {
    base: CountStats<T>,
    mixture: Option<MixtureParams<T>>,
    decayed: Option<LambdaTuning<T>>,
    global: Vec<T>,
}

impl<T: Scalar> Fitted<T> {
    fn scores(&self, method: Method, user: &UserId) -> Result<Vec<T>, EvalError> {
        Ok(match method {
            Method::Mixture => mixture_score(&self.base, self.mixture.as_ref().expect("mixture fitted"), user)?,
            Method::MixtureTw => {
                let tw = self.decayed.as_ref().expect("decayed mixture fitted");
                mixture_score(&tw.counts, &tw.params, user)?
            }
            Method::Global => self.global.clone(),
            Method::Personal => personal_score(&self.base, user)?,
        })
    }
}

fn evaluate_session<T: Scalar>(
    log: &EventLog,
    profiles: &Profiles,
    cfg: &EvalConfig<T>,
    meal_scope: MealScope,
    raw: &SessionSplit,
) -> Result<(SessionOutcome<T>, Vec<MetricRecord<T>>), EvalError> {
    let split = filter_unseen(raw, log, cfg.eligibility);
    let test_date =
        log.date_of(split.test_day).ok_or_else(|| EvalError::InvalidConfig("log has no calendar".into()))?;
    let weekday = test_date.weekday();
    let mut outcome = SessionOutcome {
        session_id: split.session_id,
        test_day: split.test_day,
        test_date,
        eligible_users: split.eligible_users.len(),
        scored_users: 0,
        lambda: None,
        mean_pi: None,
    };
    if split.test.is_empty() {
        return Ok((outcome, Vec::new()));
    }
    let train: Vec<(&UserId, u32, &ItemId)> =
        log.range_events(split.train_days.clone()).map(|e| (&e.user, e.day, &e.item)).collect();
    let anchor = split.train_days.end - 1;
    let validation = basket_of(log.day_events(split.validation_day), &split.eligible_users);
    let fit = match cfg.em_data {
        EmData::Validation => validation.clone(),
        EmData::TrainAndValidation => {
            let mut all =
                basket_of(log.range_events(split.train_days.start..split.validation_day + 1), &split.eligible_users);
            all.retain(|_, b| !b.is_empty());
            all
        }
    };

    let base = CountStats::build(train.iter().copied(), anchor, T::one(), cfg.tune.normalization)?;
    let mixture = if cfg.methods.contains(&Method::Mixture) { Some(em_fit(&base, &fit, &cfg.tune.em)?) } else { None };
    let decayed = if cfg.methods.contains(&Method::MixtureTw) {
        Some(tune_lambda(train.iter().copied(), anchor, &fit, &validation, &cfg.tune)?)
    } else {
        None
    };
    outcome.mean_pi = mixture.as_ref().and_then(MixtureParams::mean_pi);
    outcome.lambda = decayed.as_ref().map(|t| t.best);
    let fitted = Fitted { global: global_score(&base), base, mixture, decayed };

    let max_n = cfg.top_n.iter().copied().max().unwrap_or(1);
    let universe = fitted.base.universe();
    let mut records = Vec::new();
    for (user, basket) in &split.test {
        let profile = profiles.get(user);
        let context = Context {
            gender: profile.map_or(Gender::Unknown, |p| p.gender),
            age_group: profile.map_or(AgeGroup::Unknown, |p| p.age_group),
            region: profile.map_or(Region::Unknown, |p| p.region),
            weekday,
        };
        let history: BTreeSet<usize> = fitted.base.row(user).unwrap_or(&[]).iter().map(|&(j, _)| j).collect();
        let novel: Basket = basket
            .iter()
            .filter(|(i, _)| fitted.base.position(i).is_some_and(|j| !history.contains(&j)))
            .map(|(i, &c)| (i.clone(), c))
            .collect();
        let mut push = |method, metric, n, scope, value: T| {
            records.push(MetricRecord {
                session_id: split.session_id,
                user: user.clone(),
                method,
                metric,
                n,
                scope,
                meal_scope,
                context,
                value,
            })
        };
        for &method in &cfg.methods {
            let scores = fitted.scores(method, user)?;
            let ranked: Vec<ItemId> =
                rank_positions(&scores, max_n, |_| false).into_iter().map(|j| universe[j].clone()).collect();
            for &n in &cfg.top_n {
                for metric in Metric::ALL {
                    push(method, metric, n, Scope::All, metric.compute_with_gain(basket, &ranked, n, cfg.gain)?);
                }
            }
            if !novel.is_empty() {
                let ranked: Vec<ItemId> = rank_positions(&scores, cfg.novel_n, |j| history.contains(&j))
                    .into_iter()
                    .map(|j| universe[j].clone())
                    .collect();
                for metric in Metric::ALL {
                    let value = metric.compute_with_gain(&novel, &ranked, cfg.novel_n, cfg.gain)?;
                    push(method, metric, cfg.novel_n, Scope::NovelOnly, value);
                }
            }
        }
        outcome.scored_users += 1;
    }
    Ok((outcome, records))
}
