//! Plain-text reports.
//!
//! Every report starts with `#` comment lines: the command, an optional
//! `generated_at` line, and the effective configuration as `key = value`.
//! Tables are comma-separated with a header row. Given the same inputs and
//! configuration the output is byte-identical apart from the timestamp line.

use std::collections::BTreeMap;
use std::fmt::{Display, Write as _};

use thiserror::Error;

use crate::eval::{
    aggregate, aggregate_by, AggregateKey, ContextKey, EvalError, EvalRun, GroupedSummary, Metric, Scope,
};
use crate::ids::UserId;
use crate::ingest::{CleaningReport, EventLog, Meal, Profiles};
use crate::models::Method;
use crate::repeat::{
    across_meal_fraction, daily_series, empirical_cdf, group_fraction, repeat_stats, sequences, user_repeat_fraction,
    weekday_partition, AnalysisError, ConsumptionSequence, GroupKey, MealScope, RepeatStats, WindowSpec, WEEKDAYS,
};
use crate::scalar::{mean, sample_sd, Scalar};
use crate::stats::{kruskal_dunn, Adjustment, GroupedSamples, PValueMethod, PValueSource, StatsError, TestResult};

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Comment block at the top of every report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportHeader {
    pub command: String,
    pub timestamp: Option<String>,
    pub config: Vec<(String, String)>,
}

impl ReportHeader {
    pub fn new(command: &str, config: Vec<(String, String)>) -> Self {
        Self { command: command.to_string(), timestamp: None, config }
    }

    pub fn render(&self) -> String {
        let mut out = format!("# repeatrec {}\n", self.command);
        if let Some(ts) = &self.timestamp {
            let _ = writeln!(out, "# generated_at = {ts}");
        }
        for (k, v) in &self.config {
            let _ = writeln!(out, "# {k} = {v}");
        }
        out
    }
}

/// Drops the `generated_at` line so reports from different runs compare
/// equal.
pub fn strip_timestamp(report: &str) -> String {
    report.lines().filter(|l| !l.starts_with("# generated_at = ")).map(|l| format!("{l}\n")).collect()
}

/// A named report document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportFile {
    pub name: String,
    pub contents: String,
}

fn fixed<T: Display>(x: T) -> String {
    format!("{x:.6}")
}

fn source_str(s: PValueSource) -> &'static str {
    match s {
        PValueSource::Asymptotic => "asymptotic",
        PValueSource::Exact => "exact",
        PValueSource::Degenerate => "degenerate",
    }
}

pub fn cleaning_report(header: &ReportHeader, report: &CleaningReport, after_core: &EventLog) -> String {
    let mut out = header.render();
    out.push_str("stage,events\n");
    for (stage, n) in [
        ("input", report.input),
        ("removed_negative_portion", report.negative_portion),
        ("removed_over_calories", report.over_calories),
        ("removed_denylisted", report.denylisted),
        ("removed_meal_excluded", report.meal_excluded),
        ("after_cleaning", report.retained),
        ("removed_p_core", report.retained - after_core.len()),
        ("output", after_core.len()),
    ] {
        let _ = writeln!(out, "{stage},{n}");
    }
    let _ = writeln!(out, "output_users,{}", after_core.n_users());
    let _ = writeln!(out, "output_items,{}", after_core.item_universe().len());
    out
}

/// Windows for which per-user CDF tables are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CdfWindow {
    Days(usize),
    /// One window covering each user's whole sequence.
    Lifetime,
}

impl CdfWindow {
    pub fn label(self) -> String {
        match self {
            CdfWindow::Days(k) => k.to_string(),
            CdfWindow::Lifetime => "lifetime".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisConfig {
    pub window: WindowSpec,
    pub cdf_windows: Vec<CdfWindow>,
    pub adjustment: Adjustment,
    pub p_values: PValueMethod,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            window: WindowSpec::default(),
            cdf_windows: vec![CdfWindow::Days(2), CdfWindow::Days(7), CdfWindow::Days(30), CdfWindow::Lifetime],
            adjustment: Adjustment::None,
            p_values: PValueMethod::Auto,
        }
    }
}

fn measurable<T>(r: Result<T, AnalysisError>) -> Result<Option<T>, AnalysisError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(AnalysisError::NoMeasurableDays) => Ok(None),
        Err(e) => Err(e),
    }
}

fn test_rows<T: Scalar>(out: &mut String, prefix: &str, test: &TestResult<T>) {
    let _ = writeln!(
        out,
        "{prefix}kruskal_wallis,,,{},{},{}",
        fixed(test.statistic),
        fixed(test.p_value),
        source_str(test.source)
    );
    for ((a, b), pr) in test.pairwise.iter().flatten() {
        let _ = writeln!(out, "{prefix}dunn,{a},{b},{},{},", fixed(pr.z), fixed(pr.p_value));
    }
}

fn group_test<T: Scalar>(
    groups: Vec<(String, Vec<T>)>,
    cfg: &AnalysisConfig,
) -> Result<Option<TestResult<T>>, StatsError> {
    let total: usize = groups.iter().map(|g| g.1.len()).sum();
    if groups.len() < 2 || total < 3 {
        return Ok(None);
    }
    let samples = GroupedSamples::new(groups)?;
    kruskal_dunn(&samples, cfg.adjustment, cfg.p_values).map(Some)
}

/// All repeat-consumption tables for one log.
pub fn analysis_reports<T: Scalar>(
    log: &EventLog,
    profiles: &Profiles,
    cfg: &AnalysisConfig,
    header: &ReportHeader,
) -> Result<Vec<ReportFile>, ReportError> {
    use rayon::prelude::*;

    let all = sequences(log, MealScope::All);
    let stats: Vec<RepeatStats<T>> = all
        .par_iter()
        .map(|s| measurable(repeat_stats::<T>(s, &cfg.window)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut files = Vec::new();

    // per-user fractions at the configured window
    let mut out = header.render();
    out.push_str("user_id,fraction,measurable_days\n");
    for s in &stats {
        let _ = writeln!(out, "{},{},{}", s.user, s.per_user, s.per_day.len());
    }
    files.push(ReportFile { name: "repeat_per_user.csv".into(), contents: out });

    // CDFs over window sizes
    let mut out = header.render();
    out.push_str("window,fraction,cdf\n");
    for w in &cfg.cdf_windows {
        let values: Vec<T> = all
            .par_iter()
            .map(|s| {
                let spec = match *w {
                    CdfWindow::Days(k) => WindowSpec::new(k, cfg.window.direction)?,
                    CdfWindow::Lifetime => WindowSpec::lifetime(s, cfg.window.direction),
                };
                measurable(user_repeat_fraction::<T>(s, &spec))
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect();
        if values.is_empty() {
            continue;
        }
        for (v, c) in empirical_cdf(&values)? {
            let _ = writeln!(out, "{},{},{}", w.label(), fixed(v), fixed(c));
        }
    }
    files.push(ReportFile { name: "repeat_cdf.csv".into(), contents: out });

    // within- and across-meal fractions
    let by_meal: Vec<(Meal, Vec<ConsumptionSequence>)> =
        Meal::OCCASIONS.iter().map(|&m| (m, sequences(log, MealScope::Meal(m)))).collect();
    let mut cdf = header.render();
    cdf.push_str("meal,fraction,cdf\n");
    let mut matrix = header.render();
    matrix.push_str("anchor_meal,other_meal,mean,users\n");
    for (m, seqs) in &by_meal {
        let within: Vec<T> = seqs
            .par_iter()
            .map(|s| measurable(user_repeat_fraction::<T>(s, &cfg.window)))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .flatten()
            .collect();
        if !within.is_empty() {
            for (v, c) in empirical_cdf(&within)? {
                let _ = writeln!(cdf, "{},{},{}", m.as_str(), fixed(v), fixed(c));
            }
        }
        for (other, other_seqs) in &by_meal {
            let values: Vec<T> = if other == m {
                within.clone()
            } else {
                seqs.par_iter()
                    .zip(other_seqs.par_iter())
                    .map(|(a, b)| measurable(across_meal_fraction::<T>(a, b, &cfg.window)))
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter()
                    .flatten()
                    .collect()
            };
            if let Some(avg) = mean(&values) {
                let _ = writeln!(matrix, "{},{},{},{}", m.as_str(), other.as_str(), fixed(avg), values.len());
            }
        }
    }
    files.push(ReportFile { name: "meal_cdf.csv".into(), contents: cdf });
    files.push(ReportFile { name: "meal_matrix.csv".into(), contents: matrix });

    // daily series and weekday distributions
    let series = daily_series(&stats);
    let calendar = log.calendar();
    let mut out = header.render();
    out.push_str("day,date,weekday,fraction,users\n");
    for (day, (v, n)) in &series {
        let date = log.date_of(*day).map(|d| d.to_string()).unwrap_or_default();
        let wd = calendar.get(day).map(|w| w.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{day},{date},{wd},{},{n}", fixed(*v));
    }
    files.push(ReportFile { name: "daily.csv".into(), contents: out });

    let daily: BTreeMap<u32, T> = series.iter().map(|(&d, &(v, _))| (d, v)).collect();
    let partition = weekday_partition(&daily, &calendar)?;
    let mut out = header.render();
    out.push_str("partition,label,days,mean,sd\n");
    let mut weekday_groups = Vec::new();
    for (wd, values) in WEEKDAYS.iter().zip(&partition.by_weekday) {
        if let Some(m) = mean(values) {
            let _ = writeln!(out, "weekday,{wd},{},{},{}", values.len(), fixed(m), fixed(sample_sd(values)));
            weekday_groups.push((wd.to_string(), values.clone()));
        }
    }
    let mut split_groups = Vec::new();
    for (label, values) in [("weekday", &partition.weekday), ("weekend", &partition.weekend)] {
        if let Some(m) = mean(values) {
            let _ =
                writeln!(out, "weekday_or_weekend,{label},{},{},{}", values.len(), fixed(m), fixed(sample_sd(values)));
            split_groups.push((label.to_string(), values.clone()));
        }
    }
    out.push_str("\npartition,test,a,b,statistic_or_z,p_value,source\n");
    for (name, groups) in [("weekday", weekday_groups), ("weekday_or_weekend", split_groups)] {
        if let Some(t) = group_test(groups, cfg)? {
            test_rows(&mut out, &format!("{name},"), &t);
        }
    }
    files.push(ReportFile { name: "weekday.csv".into(), contents: out });

    // demographic groups
    let per_user: BTreeMap<UserId, T> = stats.iter().map(|s| (s.user.clone(), s.per_user)).collect();
    let mut out = header.render();
    out.push_str("key,label,users,mean,sd\n");
    let mut tests = String::from("\nkey,test,a,b,statistic_or_z,p_value,source\n");
    for key in [GroupKey::Gender, GroupKey::AgeGroup, GroupKey::Region] {
        let groups = group_fraction(&per_user, profiles, key);
        for (label, g) in &groups {
            let _ = writeln!(
                out,
                "{},{label},{},{},{}",
                key.as_str(),
                g.users.len(),
                fixed(g.mean),
                fixed(sample_sd(&g.values))
            );
        }
        let samples: Vec<(String, Vec<T>)> = groups.into_iter().map(|(l, g)| (l, g.values)).collect();
        if let Some(t) = group_test(samples, cfg)? {
            test_rows(&mut tests, &format!("{},", key.as_str()), &t);
        }
    }
    out.push_str(&tests);
    files.push(ReportFile { name: "groups.csv".into(), contents: out });
    Ok(files)
}

pub const METRIC_COLUMNS: &str = "session_id,user_id,metric,N,scope,meal_scope,gender,age_group,region,weekday,value";

fn key_cols(k: &AggregateKey) -> String {
    format!("{},{},{},{},{}", k.method, k.metric.as_str(), k.n, k.scope.as_str(), k.meal_scope.as_str())
}

fn grouped_rows<T: Scalar>(out: &mut String, tests: &mut String, k: &AggregateKey, g: &GroupedSummary<T>) {
    for (label, s) in &g.groups {
        let _ = writeln!(out, "{},{label},{},{},{},{}", key_cols(k), fixed(s.mean), fixed(s.sd), s.sessions, s.records);
    }
    if let Some(t) = &g.test {
        test_rows(tests, &format!("{},", key_cols(k)), t);
    }
}

/// Formatted summary cells of one section.
type Cells = BTreeMap<(Method, Metric), String>;

/// Per-method record files, a session table, grouped breakdowns and the
/// method × metric summary for one or more runs (all meals and/or single
/// meals).
pub fn evaluation_reports<T: Scalar>(
    runs: &[EvalRun<T>],
    methods: &[Method],
    group_by: &[ContextKey],
    adjustment: Adjustment,
    p_values: PValueMethod,
    header: &ReportHeader,
) -> Result<Vec<ReportFile>, ReportError> {
    let records: Vec<_> = runs.iter().flat_map(|r| r.records.iter().cloned()).collect();
    let mut files = Vec::new();
    for &method in methods {
        let mut out = header.render();
        out.push_str(METRIC_COLUMNS);
        out.push('\n');
        for r in records.iter().filter(|r| r.method == method) {
            let c = &r.context;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.session_id,
                r.user,
                r.metric.as_str(),
                r.n,
                r.scope.as_str(),
                r.meal_scope.as_str(),
                c.gender.as_str(),
                c.age_group.as_str(),
                c.region.as_str(),
                c.weekday,
                r.value
            );
        }
        files.push(ReportFile { name: format!("metrics_{method}.csv"), contents: out });
    }

    let mut out = header.render();
    out.push_str("meal_scope,session_id,test_day,test_date,eligible_users,scored_users,lambda,mean_pi\n");
    for run in runs {
        for s in &run.sessions {
            let opt = |v: Option<T>| v.map(fixed).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                run.meal_scope.as_str(),
                s.session_id,
                s.test_day,
                s.test_date,
                s.eligible_users,
                s.scored_users,
                opt(s.lambda),
                opt(s.mean_pi)
            );
        }
    }
    files.push(ReportFile { name: "sessions.csv".into(), contents: out });

    for &key in group_by {
        let grouped =
            if records.is_empty() { BTreeMap::new() } else { aggregate_by(&records, key, adjustment, p_values)? };
        let mut out = header.render();
        out.push_str("method,metric,N,scope,meal_scope,label,mean,sd,sessions,records\n");
        let mut tests = String::from("\nmethod,metric,N,scope,meal_scope,test,a,b,statistic_or_z,p_value,source\n");
        for (k, g) in &grouped {
            grouped_rows(&mut out, &mut tests, k, g);
        }
        out.push_str(&tests);
        files.push(ReportFile { name: format!("groups_{}.csv", key.as_str()), contents: out });
    }

    let mut out = header.render();
    let summary = if records.is_empty() { BTreeMap::new() } else { aggregate(&records)? };
    let mut sections: BTreeMap<(MealScope, Scope, usize), Cells> = BTreeMap::new();
    for (k, s) in &summary {
        sections
            .entry((k.meal_scope, k.scope, k.n))
            .or_default()
            .insert((k.method, k.metric), format!("{} ± {}", fixed(s.mean), fixed(s.sd)));
    }
    for ((meal_scope, scope, n), cells) in &sections {
        let _ = writeln!(out, "\n[meal_scope = {}, scope = {}, N = {n}]", meal_scope.as_str(), scope.as_str());
        let _ = write!(out, "{:<12}", "method");
        for m in Metric::ALL {
            let _ = write!(out, "  {:<22}", format!("{}@{n}", m.as_str()));
        }
        out.push('\n');
        for &method in methods {
            let _ = write!(out, "{:<12}", method.as_str());
            for metric in Metric::ALL {
                let cell = cells.get(&(method, metric)).map_or("-", String::as_str);
                let _ = write!(out, "  {cell:<22}");
            }
            out.push('\n');
        }
    }
    for run in runs {
        let lambdas: Vec<T> = run.sessions.iter().filter_map(|s| s.lambda).collect();
        let pis: Vec<T> = run.sessions.iter().filter_map(|s| s.mean_pi).collect();
        let scored = run.sessions.iter().filter(|s| s.scored_users > 0).count();
        let _ = writeln!(
            out,
            "\n[sessions, meal_scope = {}]\nsessions = {}\nsessions_scored = {scored}",
            run.meal_scope.as_str(),
            run.sessions.len()
        );
        if let Some(m) = mean(&lambdas) {
            let _ = writeln!(out, "mean_lambda = {} ± {}", fixed(m), fixed(sample_sd(&lambdas)));
        }
        if let Some(m) = mean(&pis) {
            let _ = writeln!(out, "mean_pi = {} ± {}", fixed(m), fixed(sample_sd(&pis)));
        }
    }
    files.push(ReportFile { name: "summary.txt".into(), contents: out });
    Ok(files)
}
