//! Repeat-consumption statistics over day-level consumption sequences.
//!
//! Sequence positions are 0-based: position `t` is the user's
//! `first_day + t`. A forward window anchored at `t` covers `[t, t + k)`, a
//! backward one covers `(t - k, t]`. An item is a repeat at `t` when it occurs
//! on at least two days of the window.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use chrono::Weekday;
use thiserror::Error;

use crate::ids::{ItemId, UserId};
use crate::ingest::{EventLog, Meal, Profiles};
use crate::scalar::{mean, Scalar};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("window of {k} days anchored at position {t} exceeds a sequence of {len} days")]
    WindowOutOfBounds { t: usize, k: usize, len: usize },
    #[error("window length must be at least 2, got {0}")]
    WindowTooShort(usize),
    #[error("no measurable days")]
    NoMeasurableDays,
    #[error("no user has a defined fraction on day {0}")]
    NoUsersAtDay(u32),
    #[error("across-meal fraction needs two different meal scopes")]
    SameMealScope,
    #[error("sequences do not share day indexing")]
    MisalignedSequences,
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("no calendar entry for day {0}")]
    MissingCalendarDay(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum MealScope {
    #[default]
    All,
    Meal(Meal),
}

impl MealScope {
    pub fn includes(self, meal: Meal) -> bool {
        match self {
            MealScope::All => true,
            MealScope::Meal(m) => m == meal,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MealScope::All => "all",
            MealScope::Meal(m) => m.as_str(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    Forward,
    Backward,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSpec {
    k: usize,
    pub direction: Direction,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { k: 7, direction: Direction::Forward }
    }
}

impl WindowSpec {
    pub fn new(k: usize, direction: Direction) -> Result<Self, AnalysisError> {
        if k < 2 {
            return Err(AnalysisError::WindowTooShort(k));
        }
        Ok(Self { k, direction })
    }

    /// Window spanning the whole sequence (one anchor).
    pub fn lifetime(seq: &ConsumptionSequence, direction: Direction) -> Self {
        Self { k: seq.len().max(2), direction }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Anchors whose window fits inside a sequence of `len` days.
    pub fn anchors(&self, len: usize) -> Range<usize> {
        if len < self.k {
            return 0..0;
        }
        match self.direction {
            Direction::Forward => 0..len - self.k + 1,
            Direction::Backward => self.k - 1..len,
        }
    }

    /// Positions covered by the window anchored at `t`.
    pub fn window(&self, t: usize, len: usize) -> Result<Range<usize>, AnalysisError> {
        if !self.anchors(len).contains(&t) {
            return Err(AnalysisError::WindowOutOfBounds { t, k: self.k, len });
        }
        Ok(match self.direction {
            Direction::Forward => t..t + self.k,
            Direction::Backward => t + 1 - self.k..t + 1,
        })
    }
}

/// Day-level item sets of one user, optionally restricted to a meal.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsumptionSequence {
    pub user: UserId,
    pub first_day: u32,
    pub scope: MealScope,
    days: Vec<BTreeSet<ItemId>>,
    /// item -> ascending positions where it occurs
    occurrences: BTreeMap<ItemId, Vec<usize>>,
}

impl ConsumptionSequence {
    pub fn new(user: UserId, first_day: u32, scope: MealScope, days: Vec<BTreeSet<ItemId>>) -> Self {
        let mut occurrences: BTreeMap<ItemId, Vec<usize>> = BTreeMap::new();
        for (t, day) in days.iter().enumerate() {
            for item in day {
                occurrences.entry(item.clone()).or_default().push(t);
            }
        }
        Self { user, first_day, scope, days, occurrences }
    }

    /// Convenience constructor from string slices, mostly for tests.
    pub fn from_days(user: &str, days: &[&[&str]]) -> Self {
        let days = days.iter().map(|d| d.iter().map(|i| ItemId::new(i)).collect()).collect();
        Self::new(UserId::new(user), 0, MealScope::All, days)
    }

    pub fn with_scope(mut self, scope: MealScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn day(&self, t: usize) -> &BTreeSet<ItemId> {
        &self.days[t]
    }

    pub fn days(&self) -> &[BTreeSet<ItemId>] {
        &self.days
    }

    /// Global day index of position `t`.
    pub fn global_day(&self, t: usize) -> u32 {
        self.first_day + t as u32
    }

    fn days_with(&self, item: &ItemId, window: &Range<usize>) -> usize {
        self.occurrences
            .get(item)
            .map_or(0, |pos| pos.partition_point(|&p| p < window.end) - pos.partition_point(|&p| p < window.start))
    }
}

/// One sequence per user, covering the user's first through last logged day
/// over all meals, with item sets restricted to `scope`. Sequences of the same
/// user built with different scopes therefore share positions.
pub fn sequences(log: &EventLog, scope: MealScope) -> Vec<ConsumptionSequence> {
    log.users()
        .map(|user| {
            let events: Vec<_> = log.user_events(user).collect();
            let first = events.first().map_or(0, |e| e.day);
            let last = events.last().map_or(0, |e| e.day);
            let mut days = vec![BTreeSet::new(); (last - first + 1) as usize];
            for e in events.iter().filter(|e| scope.includes(e.meal)) {
                days[(e.day - first) as usize].insert(e.item.clone());
            }
            ConsumptionSequence::new(user.clone(), first, scope, days)
        })
        .collect()
}

/// Number of window days on which `item` was consumed.
pub fn window_count(
    seq: &ConsumptionSequence,
    t: usize,
    spec: &WindowSpec,
    item: &ItemId,
) -> Result<usize, AnalysisError> {
    let window = spec.window(t, seq.len())?;
    Ok(seq.days_with(item, &window))
}

/// Fraction of the items at `t` that are repeats within the window.
/// `Ok(None)` when nothing was consumed at `t`.
pub fn day_repeat_fraction<T: Scalar>(
    seq: &ConsumptionSequence,
    t: usize,
    spec: &WindowSpec,
) -> Result<Option<T>, AnalysisError> {
    let window = spec.window(t, seq.len())?;
    let day = seq.day(t);
    if day.is_empty() {
        return Ok(None);
    }
    let repeats = day.iter().filter(|i| seq.days_with(i, &window) >= 2).count();
    Ok(Some(T::from_count(repeats) / T::from_count(day.len())))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepeatStats<T = f64> {
    pub user: UserId,
    /// global anchor day -> fraction; only measurable days
    pub per_day: BTreeMap<u32, T>,
    pub per_user: T,
    /// (global anchor day, item) -> days with the item in the window
    pub window_counts: BTreeMap<(u32, ItemId), usize>,
}

/// Per-day fractions, their mean and the window counts behind them.
pub fn repeat_stats<T: Scalar>(seq: &ConsumptionSequence, spec: &WindowSpec) -> Result<RepeatStats<T>, AnalysisError> {
    let mut per_day = BTreeMap::new();
    let mut window_counts = BTreeMap::new();
    for t in spec.anchors(seq.len()) {
        let window = spec.window(t, seq.len())?;
        let day = seq.day(t);
        if day.is_empty() {
            continue;
        }
        let mut repeats = 0usize;
        for item in day {
            let n = seq.days_with(item, &window);
            if n >= 2 {
                repeats += 1;
            }
            window_counts.insert((seq.global_day(t), item.clone()), n);
        }
        per_day.insert(seq.global_day(t), T::from_count(repeats) / T::from_count(day.len()));
    }
    let values: Vec<T> = per_day.values().copied().collect();
    let per_user = mean(&values).ok_or(AnalysisError::NoMeasurableDays)?;
    Ok(RepeatStats { user: seq.user.clone(), per_day, per_user, window_counts })
}

/// Unweighted mean of the measurable per-day fractions.
pub fn user_repeat_fraction<T: Scalar>(seq: &ConsumptionSequence, spec: &WindowSpec) -> Result<T, AnalysisError> {
    let mut values = Vec::new();
    for t in spec.anchors(seq.len()) {
        if let Some(f) = day_repeat_fraction::<T>(seq, t, spec)? {
            values.push(f);
        }
    }
    mean(&values).ok_or(AnalysisError::NoMeasurableDays)
}

/// Repeat fraction of a meal-scoped sequence.
pub fn within_meal_fraction<T: Scalar>(seq: &ConsumptionSequence, spec: &WindowSpec) -> Result<T, AnalysisError> {
    user_repeat_fraction(seq, spec)
}

/// Mean over measurable anchors of the fraction of `anchor` items that occur
/// in `other` on at least one window day.
pub fn across_meal_fraction<T: Scalar>(
    anchor: &ConsumptionSequence,
    other: &ConsumptionSequence,
    spec: &WindowSpec,
) -> Result<T, AnalysisError> {
    if anchor.scope == other.scope {
        return Err(AnalysisError::SameMealScope);
    }
    if anchor.first_day != other.first_day || anchor.len() != other.len() {
        return Err(AnalysisError::MisalignedSequences);
    }
    let mut values = Vec::new();
    for t in spec.anchors(anchor.len()) {
        let window = spec.window(t, anchor.len())?;
        let day = anchor.day(t);
        if day.is_empty() {
            continue;
        }
        let hits = day.iter().filter(|i| other.days_with(i, &window) >= 1).count();
        values.push(T::from_count(hits) / T::from_count(day.len()));
    }
    mean(&values).ok_or(AnalysisError::NoMeasurableDays)
}

/// Mean of the users' fractions at global day `day`.
pub fn daily_population_fraction<T: Scalar>(stats: &[RepeatStats<T>], day: u32) -> Result<T, AnalysisError> {
    let values: Vec<T> = stats.iter().filter_map(|s| s.per_day.get(&day).copied()).collect();
    mean(&values).ok_or(AnalysisError::NoUsersAtDay(day))
}

/// Population fraction and contributing-user count for every day where at
/// least one user is measurable.
pub fn daily_series<T: Scalar>(stats: &[RepeatStats<T>]) -> BTreeMap<u32, (T, usize)> {
    let mut by_day: BTreeMap<u32, Vec<T>> = BTreeMap::new();
    for s in stats {
        for (&d, &v) in &s.per_day {
            by_day.entry(d).or_default().push(v);
        }
    }
    by_day.into_iter().filter_map(|(d, v)| mean(&v).map(|m| (d, (m, v.len())))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroupKey {
    Gender,
    AgeGroup,
    Region,
}

impl GroupKey {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKey::Gender => "gender",
            GroupKey::AgeGroup => "age_group",
            GroupKey::Region => "region",
        }
    }

    /// Group label, `None` for unknown attributes.
    pub fn label(self, profiles: &Profiles, user: &UserId) -> Option<&'static str> {
        let p = profiles.get(user)?;
        let label = match self {
            GroupKey::Gender => p.gender.as_str(),
            GroupKey::AgeGroup => p.age_group.as_str(),
            GroupKey::Region => p.region.as_str(),
        };
        (label != "unknown").then_some(label)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupSummary<T = f64> {
    pub mean: T,
    pub users: Vec<UserId>,
    pub values: Vec<T>,
}

/// Partitions per-user fractions by a profile attribute. Users without a
/// profile or with an unknown attribute are left out.
pub fn group_fraction<T: Scalar>(
    per_user: &BTreeMap<UserId, T>,
    profiles: &Profiles,
    key: GroupKey,
) -> BTreeMap<String, GroupSummary<T>> {
    let mut groups: BTreeMap<String, (Vec<UserId>, Vec<T>)> = BTreeMap::new();
    for (user, &v) in per_user {
        if let Some(label) = key.label(profiles, user) {
            let g = groups.entry(label.to_string()).or_default();
            g.0.push(user.clone());
            g.1.push(v);
        }
    }
    groups
        .into_iter()
        .filter_map(|(label, (users, values))| mean(&values).map(|m| (label, GroupSummary { mean: m, users, values })))
        .collect()
}

/// Right-continuous empirical CDF at each distinct value.
pub fn empirical_cdf<T: Scalar>(values: &[T]) -> Result<Vec<(T, T)>, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = T::from_count(sorted.len());
    let mut out: Vec<(T, T)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let frac = T::from_count(i + 1) / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct WeekdayPartition<T = f64> {
    /// Monday first.
    pub by_weekday: [Vec<T>; 7],
    pub weekday: Vec<T>,
    pub weekend: Vec<T>,
}

pub const WEEKDAYS: [Weekday; 7] =
    [Weekday::Mon, Weekday::Tue, Weekday::Wed, Weekday::Thu, Weekday::Fri, Weekday::Sat, Weekday::Sun];

pub fn is_weekend(day: Weekday) -> bool {
    matches!(day, Weekday::Sat | Weekday::Sun)
}

/// Splits daily values by weekday and into weekday/weekend pools.
pub fn weekday_partition<T: Scalar>(
    daily: &BTreeMap<u32, T>,
    calendar: &BTreeMap<u32, Weekday>,
) -> Result<WeekdayPartition<T>, AnalysisError> {
    let mut out = WeekdayPartition::<T>::default();
    for (&day, &v) in daily {
        let wd = *calendar.get(&day).ok_or(AnalysisError::MissingCalendarDay(day))?;
        out.by_weekday[wd.num_days_from_monday() as usize].push(v);
        if is_weekend(wd) {
            out.weekend.push(v);
        } else {
            out.weekday.push(v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{AgeGroup, Gender, Region, UserProfile};

    fn fwd(k: usize) -> WindowSpec {
        WindowSpec::new(k, Direction::Forward).unwrap()
    }

    fn item(s: &str) -> ItemId {
        ItemId::new(s)
    }

    fn toy() -> ConsumptionSequence {
        ConsumptionSequence::from_days("u", &[&["a", "b"], &["a", "c"], &["b", "c"]])
    }

    #[test]
    fn window_counts() {
        let seq = toy();
        assert_eq!(window_count(&seq, 0, &fwd(2), &item("a")).unwrap(), 2);
        assert_eq!(window_count(&seq, 0, &fwd(2), &item("z")).unwrap(), 0);
        let constant = ConsumptionSequence::from_days("u", &[&["a"], &["a"], &["a"]]);
        assert_eq!(window_count(&constant, 0, &fwd(3), &item("a")).unwrap(), 3);
        assert!(matches!(window_count(&seq, 2, &fwd(2), &item("a")), Err(AnalysisError::WindowOutOfBounds { .. })));
    }

    #[test]
    fn backward_window_mirrors_forward() {
        let seq = toy();
        let back = WindowSpec::new(2, Direction::Backward).unwrap();
        assert_eq!(back.anchors(3), 1..3);
        // anchor 1 covers positions 0 and 1
        assert_eq!(window_count(&seq, 1, &back, &item("a")).unwrap(), 2);
        assert!(window_count(&seq, 0, &back, &item("a")).is_err());
        assert_eq!(day_repeat_fraction::<f64>(&seq, 2, &back).unwrap(), Some(0.5));
    }

    #[test]
    fn day_fractions_hand_enumeration() {
        let seq = toy();
        assert_eq!(day_repeat_fraction::<f64>(&seq, 0, &fwd(2)).unwrap(), Some(0.5));
        assert_eq!(day_repeat_fraction::<f64>(&seq, 1, &fwd(2)).unwrap(), Some(0.5));
        assert_eq!(user_repeat_fraction::<f64>(&seq, &fwd(2)).unwrap(), 0.5);
        let stats = repeat_stats::<f64>(&seq, &fwd(2)).unwrap();
        assert_eq!(stats.per_user, 0.5);
        assert_eq!(stats.per_day.len(), 2);
        assert_eq!(stats.window_counts[&(0, item("b"))], 1);
    }

    #[test]
    fn boundary_fractions() {
        let novel = ConsumptionSequence::from_days("u", &[&["a"], &["b"], &["c"]]);
        let constant = ConsumptionSequence::from_days("u", &[&["a"], &["a"], &["a"]]);
        for k in 2..=3 {
            assert_eq!(user_repeat_fraction::<f64>(&novel, &fwd(k)).unwrap(), 0.0);
            assert_eq!(user_repeat_fraction::<f32>(&constant, &fwd(k)).unwrap(), 1.0);
        }
    }

    #[test]
    fn empty_days_are_skipped() {
        let seq = ConsumptionSequence::from_days("u", &[&["a"], &[], &["a"], &["b"]]);
        assert_eq!(day_repeat_fraction::<f64>(&seq, 1, &fwd(2)).unwrap(), None);
        // anchors 0 (a once in [0,2)) and 2 (a once in [2,4)); anchor 1 skipped
        assert_eq!(user_repeat_fraction::<f64>(&seq, &fwd(2)).unwrap(), 0.0);
        // k = 3: only anchor 0 is measurable and a occurs at 0 and 2
        assert_eq!(user_repeat_fraction::<f64>(&seq, &fwd(3)).unwrap(), 1.0);
        let blank = ConsumptionSequence::from_days("u", &[&[], &[]]);
        assert_eq!(user_repeat_fraction::<f64>(&blank, &fwd(2)), Err(AnalysisError::NoMeasurableDays));
    }

    #[test]
    fn window_spec_rejects_short() {
        assert_eq!(WindowSpec::new(1, Direction::Forward), Err(AnalysisError::WindowTooShort(1)));
    }

    #[test]
    fn within_meal_examples() {
        let breakfast =
            ConsumptionSequence::from_days("u", &[&["a"], &["a"], &["b"]]).with_scope(MealScope::Meal(Meal::Breakfast));
        assert_eq!(within_meal_fraction::<f64>(&breakfast, &fwd(2)).unwrap(), 0.5);
        let one_day = ConsumptionSequence::from_days("u", &[&["a"]]);
        assert_eq!(within_meal_fraction::<f64>(&one_day, &fwd(2)), Err(AnalysisError::NoMeasurableDays));
    }

    #[test]
    fn across_meal_examples() {
        let lunch = ConsumptionSequence::from_days("u", &[&["a"], &[]]).with_scope(MealScope::Meal(Meal::Lunch));
        let dinner = ConsumptionSequence::from_days("u", &[&["a"], &["a"]]).with_scope(MealScope::Meal(Meal::Dinner));
        assert_eq!(across_meal_fraction::<f64>(&dinner, &lunch, &fwd(2)).unwrap(), 1.0);
        let empty = ConsumptionSequence::from_days("u", &[&[], &[]]).with_scope(MealScope::Meal(Meal::Lunch));
        assert_eq!(across_meal_fraction::<f64>(&dinner, &empty, &fwd(2)).unwrap(), 0.0);
        assert_eq!(across_meal_fraction::<f64>(&dinner, &dinner, &fwd(2)), Err(AnalysisError::SameMealScope));
        let short = ConsumptionSequence::from_days("u", &[&["a"]]).with_scope(MealScope::Meal(Meal::Snack));
        assert_eq!(across_meal_fraction::<f64>(&dinner, &short, &fwd(2)), Err(AnalysisError::MisalignedSequences));
    }

    #[test]
    fn population_and_groups() {
        let mk = |u: &str, v: f64| RepeatStats {
            user: UserId::new(u),
            per_day: [(5u32, v)].into_iter().collect(),
            per_user: v,
            window_counts: BTreeMap::new(),
        };
        let stats = vec![mk("a", 0.2), mk("b", 0.4), mk("c", 0.9)];
        assert!((daily_population_fraction(&stats, 5).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(daily_population_fraction(&stats[..1], 5).unwrap(), 0.2);
        assert_eq!(daily_population_fraction(&stats, 6), Err(AnalysisError::NoUsersAtDay(6)));

        let per_user: BTreeMap<UserId, f64> =
            [("a", 0.2), ("b", 0.4), ("c", 0.8), ("d", 0.1)].iter().map(|(u, v)| (UserId::new(u), *v)).collect();
        let mut profiles = Profiles::new();
        for (u, g) in [("a", Gender::Female), ("b", Gender::Female), ("c", Gender::Male), ("d", Gender::Unknown)] {
            profiles.insert(
                UserId::new(u),
                UserProfile {
                    user: UserId::new(u),
                    gender: g,
                    age_group: AgeGroup::Adult18To44,
                    region: Region::South,
                },
            );
        }
        let g = group_fraction(&per_user, &profiles, GroupKey::Gender);
        assert_eq!(g.len(), 2);
        assert!((g["female"].mean - 0.3).abs() < 1e-15);
        assert_eq!(g["male"].mean, 0.8);
        let all = group_fraction(&per_user, &profiles, GroupKey::AgeGroup);
        assert_eq!(all.len(), 1);
        assert!((all["18-44"].mean - 0.375).abs() < 1e-15);
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(empirical_cdf(&[0.5]).unwrap(), vec![(0.5, 1.0)]);
        assert_eq!(empirical_cdf(&[0.4, 1.0, 0.2, 0.4]).unwrap(), vec![(0.2, 0.25), (0.4, 0.75), (1.0, 1.0)]);
        assert_eq!(empirical_cdf(&[0.3, 0.3, 0.3]).unwrap(), vec![(0.3, 1.0)]);
        assert_eq!(empirical_cdf::<f64>(&[]), Err(AnalysisError::EmptyInput));
    }

    #[test]
    fn weekday_partition_counts() {
        // day 0 is a Monday
        let calendar: BTreeMap<u32, Weekday> = (0..14).map(|d| (d, WEEKDAYS[(d % 7) as usize])).collect();
        let daily: BTreeMap<u32, f64> = (0..14).map(|d| (d, d as f64 / 14.0)).collect();
        let p = weekday_partition(&daily, &calendar).unwrap();
        assert!(p.by_weekday.iter().all(|v| v.len() == 2));
        assert_eq!(p.weekend.len(), p.by_weekday[5].len() + p.by_weekday[6].len());
        assert_eq!(p.weekday.len() + p.weekend.len(), daily.len());
        let mut short = calendar.clone();
        short.remove(&3);
        assert_eq!(weekday_partition(&daily, &short), Err(AnalysisError::MissingCalendarDay(3)));
    }
}
