use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use crate::ids::{ItemId, UserId};
use crate::ingest::EventLog;

use super::{Basket, EvalError};

/// Seven training days, one validation day, one test day.
pub const DEFAULT_WINDOW: u32 = 9;

/// Which users keep a place in a session after filtering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Eligibility {
    /// Events on training days and on the validation day are both required.
    #[default]
    TrainAndValidation,
    /// Training events suffice; users without validation events keep the
    /// initial mixture weight.
    TrainOnly,
}

impl Eligibility {
    pub fn as_str(self) -> &'static str {
        match self {
            Eligibility::TrainAndValidation => "train_and_validation",
            Eligibility::TrainOnly => "train_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "train_and_validation" => Some(Eligibility::TrainAndValidation),
            "train_only" => Some(Eligibility::TrainOnly),
            _ => None,
        }
    }
}

/// One train/validation/test window anchored at its test day.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionSplit {
    pub session_id: usize,
    pub train_days: Range<u32>,
    pub validation_day: u32,
    pub test_day: u32,
    /// Items consumed by anyone on a training day.
    pub train_universe: BTreeSet<ItemId>,
    pub eligible_users: BTreeSet<UserId>,
    /// Test-day baskets, keyed by user.
    pub test: BTreeMap<UserId, Basket>,
}

impl SessionSplit {
    pub fn window(&self) -> u32 {
        self.test_day + 1 - self.train_days.start
    }
}

fn day_users(log: &EventLog, days: Range<u32>) -> BTreeSet<UserId> {
    log.range_events(days).map(|e| e.user.clone()).collect()
}

/// One session per anchor day from the first day with a full window behind
/// it to the last logged day.
pub fn make_sessions(log: &EventLog, window: u32) -> Result<Vec<SessionSplit>, EvalError> {
    if window < 3 {
        return Err(EvalError::InvalidWindow(window));
    }
    let Some((first, last)) = log.day_range() else {
        return Err(EvalError::SpanTooShort { span: 0, window });
    };
    let span = last - first + 1;
    if span < window {
        return Err(EvalError::SpanTooShort { span, window });
    }
    let sessions = (first + window - 1..=last)
        .enumerate()
        .map(|(session_id, test_day)| {
            let train_days = test_day + 1 - window..test_day - 1;
            let train_universe = log.range_events(train_days.clone()).map(|e| e.item.clone()).collect();
            let eligible_users = day_users(log, train_days.start..test_day + 1);
            let mut test: BTreeMap<UserId, Basket> = BTreeMap::new();
            for e in log.day_events(test_day) {
                *test.entry(e.user.clone()).or_default().entry(e.item.clone()).or_insert(0) += 1;
            }
            SessionSplit {
                session_id,
                train_days,
                validation_day: test_day - 1,
                test_day,
                train_universe,
                eligible_users,
                test,
            }
        })
        .collect();
    Ok(sessions)
}

/// Drops test events on items outside the training universe, users that miss
/// the required train/validation presence, and users left with an empty test
/// basket.
pub fn filter_unseen(session: &SessionSplit, log: &EventLog, eligibility: Eligibility) -> SessionSplit {
    let train_users = day_users(log, session.train_days.clone());
    let validation_users = day_users(log, session.validation_day..session.validation_day + 1);
    let eligible_users: BTreeSet<UserId> = session
        .eligible_users
        .iter()
        .filter(|u| {
            train_users.contains(*u) && (eligibility == Eligibility::TrainOnly || validation_users.contains(*u))
        })
        .cloned()
        .collect();
    let test = session
        .test
        .iter()
        .filter(|(u, _)| eligible_users.contains(*u))
        .map(|(u, basket)| {
            let kept: Basket = basket
                .iter()
                .filter(|(i, &c)| c > 0 && session.train_universe.contains(*i))
                .map(|(i, &c)| (i.clone(), c))
                .collect();
            (u.clone(), kept)
        })
        .filter(|(_, b)| !b.is_empty())
        .collect();
    SessionSplit { eligible_users, test, ..session.clone() }
}

/// Verifies the invariants of a filtered session against its log.
pub fn check_session(session: &SessionSplit, log: &EventLog, eligibility: Eligibility) -> Result<(), EvalError> {
    let fail = |reason: String| Err(EvalError::InvalidSession { session: session.session_id, reason });
    let train_len = session.train_days.end - session.train_days.start;
    if train_len + 2 != session.window() {
        return fail(format!("training span of {train_len} days in a {}-day window", session.window()));
    }
    if session.validation_day != session.train_days.end || session.test_day != session.validation_day + 1 {
        return fail("validation and test days do not follow the training span".into());
    }
    let universe: BTreeSet<ItemId> = log.range_events(session.train_days.clone()).map(|e| e.item.clone()).collect();
    if universe != session.train_universe {
        return fail("training universe differs from the training events".into());
    }
    let train_users = day_users(log, session.train_days.clone());
    let validation_users = day_users(log, session.validation_day..session.validation_day + 1);
    for user in &session.eligible_users {
        if !train_users.contains(user) {
            return fail(format!("eligible user {user} has no training events"));
        }
        if eligibility == Eligibility::TrainAndValidation && !validation_users.contains(user) {
            return fail(format!("eligible user {user} has no validation events"));
        }
    }
    for (user, basket) in &session.test {
        if !session.eligible_users.contains(user) {
            return fail(format!("test user {user} is not eligible"));
        }
        if basket.is_empty() {
            return fail(format!("test basket of {user} is empty"));
        }
        if let Some(item) = basket.keys().find(|i| !session.train_universe.contains(*i)) {
            return fail(format!("test item {item} is outside the training universe"));
        }
    }
    Ok(())
}

/// Removes the user's training history from a ranked list and from the test
/// basket, then keeps the first `n` remaining items.
pub fn novel_only_view(
    ranked: &[ItemId],
    history: &BTreeSet<ItemId>,
    test: &Basket,
    n: usize,
) -> (Vec<ItemId>, Basket) {
    let list = ranked.iter().filter(|i| !history.contains(*i)).take(n).cloned().collect();
    let novel = test.iter().filter(|(i, _)| !history.contains(*i)).map(|(i, &c)| (i.clone(), c)).collect();
    (list, novel)
}
