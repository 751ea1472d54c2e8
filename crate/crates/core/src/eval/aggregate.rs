use std::collections::BTreeMap;

use crate::models::Method;
use crate::repeat::MealScope;
use crate::scalar::{mean, sample_sd, Scalar};
use crate::stats::{kruskal_dunn, Adjustment, GroupedSamples, PValueMethod, TestResult};

use super::{EvalError, Metric, MetricRecord, Scope};

/// Everything that identifies one reported number apart from context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AggregateKey {
    pub method: Method,
    pub metric: Metric,
    pub n: usize,
    pub scope: Scope,
    pub meal_scope: MealScope,
}

impl AggregateKey {
    pub fn of<T>(r: &MetricRecord<T>) -> Self {
        Self { method: r.method, metric: r.metric, n: r.n, scope: r.scope, meal_scope: r.meal_scope }
    }
}

/// Mean ± SD across sessions of the per-session user means.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary<T = f64> {
    pub mean: T,
    pub sd: T,
    pub sessions: usize,
    pub records: usize,
}

fn two_stage<'a, T: Scalar>(records: impl Iterator<Item = &'a MetricRecord<T>>) -> Option<Summary<T>> {
    let mut by_session: BTreeMap<usize, Vec<T>> = BTreeMap::new();
    let mut count = 0;
    for r in records {
        by_session.entry(r.session_id).or_default().push(r.value);
        count += 1;
    }
    let session_means: Vec<T> = by_session.values().filter_map(|v| mean(v)).collect();
    Some(Summary {
        mean: mean(&session_means)?,
        sd: sample_sd(&session_means),
        sessions: session_means.len(),
        records: count,
    })
}

/// Two-stage average per key: users within a session, then sessions.
pub fn aggregate<T: Scalar>(records: &[MetricRecord<T>]) -> Result<BTreeMap<AggregateKey, Summary<T>>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut keyed: BTreeMap<AggregateKey, Vec<&MetricRecord<T>>> = BTreeMap::new();
    for r in records {
        keyed.entry(AggregateKey::of(r)).or_default().push(r);
    }
    Ok(keyed.into_iter().filter_map(|(k, rs)| two_stage(rs.into_iter()).map(|s| (k, s))).collect())
}

/// Context label used to partition records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContextKey {
    Gender,
    AgeGroup,
    Region,
    Weekday,
    WeekdayOrWeekend,
    MealScope,
}

impl ContextKey {
    pub const ALL: [ContextKey; 6] = [
        ContextKey::Gender,
        ContextKey::AgeGroup,
        ContextKey::Region,
        ContextKey::Weekday,
        ContextKey::WeekdayOrWeekend,
        ContextKey::MealScope,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContextKey::Gender => "gender",
            ContextKey::AgeGroup => "age_group",
            ContextKey::Region => "region",
            ContextKey::Weekday => "weekday",
            ContextKey::WeekdayOrWeekend => "weekday_or_weekend",
            ContextKey::MealScope => "meal_scope",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ContextKey::ALL.into_iter().find(|k| k.as_str() == s.trim())
    }

    /// Sort rank and label; `None` for unknown profile attributes.
    fn label<T>(self, r: &MetricRecord<T>) -> Option<(u32, &'static str)> {
        let c = &r.context;
        let label = match self {
            ContextKey::Gender => (c.gender as u32, c.gender.as_str()),
            ContextKey::AgeGroup => (c.age_group as u32, c.age_group.as_str()),
            ContextKey::Region => (c.region as u32, c.region.as_str()),
            ContextKey::Weekday => (c.weekday.num_days_from_monday(), weekday_name(c.weekday)),
            ContextKey::WeekdayOrWeekend => {
                let l = c.weekday_or_weekend();
                (u32::from(l == "weekend"), l)
            }
            ContextKey::MealScope => match r.meal_scope {
                MealScope::All => return None,
                MealScope::Meal(m) => (m as u32, m.as_str()),
            },
        };
        (label.1 != "unknown").then_some(label)
    }
}

fn weekday_name(d: chrono::Weekday) -> &'static str {
    use chrono::Weekday::*;
    match d {
        Mon => "mon",
        Tue => "tue",
        Wed => "wed",
        Thu => "thu",
        Fri => "fri",
        Sat => "sat",
        Sun => "sun",
    }
}

/// Per-group summaries for one key, with Kruskal-Wallis and Dunn's tests on
/// the record-level values of each group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedSummary<T = f64> {
    /// In natural label order (weekdays Monday first).
    pub groups: Vec<(String, Summary<T>)>,
    /// `None` when fewer than two groups or three observations exist.
    pub test: Option<TestResult<T>>,
}

/// Records of one grouping key, bucketed by (session, group label).
type Buckets<'a, T> = BTreeMap<(u32, &'static str), Vec<&'a MetricRecord<T>>>;

/// Partitions records by a context label, then aggregates and tests each
/// key. Records with an unknown label are left out. Grouping by meal scope
/// compares the per-meal runs, so their keys carry `MealScope::All` and
/// all-meal records are ignored.
pub fn aggregate_by<T: Scalar>(
    records: &[MetricRecord<T>],
    key: ContextKey,
    adjustment: Adjustment,
    method: PValueMethod,
) -> Result<BTreeMap<AggregateKey, GroupedSummary<T>>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut keyed: BTreeMap<AggregateKey, Buckets<T>> = BTreeMap::new();
    for r in records {
        if let Some(label) = key.label(r) {
            let mut k = AggregateKey::of(r);
            if key == ContextKey::MealScope {
                k.meal_scope = MealScope::All;
            }
            keyed.entry(k).or_default().entry(label).or_default().push(r);
        }
    }
    let mut out = BTreeMap::new();
    for (k, groups) in keyed {
        let summaries: Vec<(String, Summary<T>)> = groups
            .iter()
            .filter_map(|((_, label), rs)| two_stage(rs.iter().copied()).map(|s| (label.to_string(), s)))
            .collect();
        let total: usize = groups.values().map(Vec::len).sum();
        let test = if groups.len() >= 2 && total >= 3 {
            let samples = GroupedSamples::new(
                groups
                    .iter()
                    .map(|((_, label), rs)| (label.to_string(), rs.iter().map(|r| r.value).collect::<Vec<T>>())),
            )?;
            Some(kruskal_dunn(&samples, adjustment, method)?)
        } else {
            None
        };
        out.insert(k, GroupedSummary { groups: summaries, test });
    }
    Ok(out)
}
