use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{NaiveDate, SecondsFormat, Utc};
use repeatrec::eval::{
    check_session, evaluate, filter_unseen, make_sessions, meal_specific_protocol, Basket, ContextKey, Eligibility,
    EmData, EvalConfig, EvalRun, Gain, Metric, DEFAULT_WINDOW,
};
use repeatrec::ingest::{
    clean, p_core_filter, parse_events, parse_profiles, write_events, CleaningConfig, Delimiter, EventLog, Meal,
    Profiles,
};
use repeatrec::models::{
    default_lambda_grid, tune_lambda, EmConfig, Method, ModelDump, Normalization, Objective, TuneConfig,
};
use repeatrec::repeat::{Direction, WindowSpec};
use repeatrec::report::{
    analysis_reports, cleaning_report, evaluation_reports, AnalysisConfig, ReportFile, ReportHeader,
};
use repeatrec::selftest::run_all;
use repeatrec::stats::{Adjustment, PValueMethod};
use repeatrec::synth::{generate, write_ground_truth, PiSpec, PreferenceShift, SynthConfig};
use repeatrec::UserId;

use crate::settings::Settings;

/// A failure caused by a broken internal invariant rather than bad input.
#[derive(Debug)]
pub struct Invariant(pub String);

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invariant violated: {}", self.0)
    }
}

impl std::error::Error for Invariant {}

fn log_enabled() -> bool {
    !matches!(std::env::var("REPEATREC_LOG").as_deref(), Ok("off" | "quiet" | "0"))
}

macro_rules! info {
    ($($arg:tt)*) => {
        if log_enabled() {
            eprintln!($($arg)*);
        }
    };
}

pub fn run(command: &str, s: &Settings) -> Result<()> {
    // the worker count is left out of report headers: it never changes results
    if let Some(raw) = s.raw("jobs") {
        let jobs = raw
            .parse::<usize>()
            .ok()
            .filter(|&j| j > 0)
            .with_context(|| format!("invalid value `{raw}` for `jobs`: expected a positive integer"))?;
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().context("cannot configure the worker pool")?;
    }
    match command {
        "ingest" => ingest(s),
        "analyze" => analyze(s),
        "evaluate" => evaluate_cmd(s),
        "synth" => synth(s),
        "selftest" => selftest(s),
        other => unreachable!("unknown command {other}"),
    }
}

fn header(command: &str, s: &Settings) -> ReportHeader {
    let mut h = ReportHeader::new(command, s.used());
    h.timestamp = Some(Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true));
    h
}

fn read_events(path: &Path) -> Result<EventLog> {
    let file = File::open(path).with_context(|| format!("cannot open event file {}", path.display()))?;
    parse_events(file, Delimiter::Auto).with_context(|| format!("cannot parse event file {}", path.display()))
}

fn read_profiles(path: Option<PathBuf>) -> Result<Profiles> {
    let Some(path) = path else {
        return Ok(Profiles::new());
    };
    let file = File::open(&path).with_context(|| format!("cannot open profile file {}", path.display()))?;
    parse_profiles(file, Delimiter::Auto).with_context(|| format!("cannot parse profile file {}", path.display()))
}

/// The output directory is not recorded in headers, so identical runs written
/// to different places produce identical reports.
fn out_dir(s: &Settings) -> Result<PathBuf> {
    let out = PathBuf::from(s.raw("out").context("missing `out` (flag --out or config key)")?);
    fs::create_dir_all(&out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    Ok(out)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn write_reports(dir: &Path, files: &[ReportFile]) -> Result<()> {
    for f in files {
        write_file(dir, &f.name, &f.contents)?;
    }
    info!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn write_log(dir: &Path, name: &str, log: &EventLog) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    write_events(log, BufWriter::new(file)).with_context(|| format!("cannot write {}", path.display()))
}

fn parse_direction(s: &str) -> Option<Direction> {
    match s {
        "forward" => Some(Direction::Forward),
        "backward" => Some(Direction::Backward),
        _ => None,
    }
}

fn parse_adjustment(s: &str) -> Option<Adjustment> {
    match s {
        "none" => Some(Adjustment::None),
        "bonferroni" => Some(Adjustment::Bonferroni),
        _ => None,
    }
}

fn p_value_name(m: &PValueMethod) -> String {
    match m {
        PValueMethod::Auto => "auto",
        PValueMethod::Exact => "exact",
        PValueMethod::Asymptotic => "asymptotic",
    }
    .to_string()
}

fn parse_p_values(s: &str) -> Option<PValueMethod> {
    match s {
        "auto" => Some(PValueMethod::Auto),
        "exact" => Some(PValueMethod::Exact),
        "asymptotic" => Some(PValueMethod::Asymptotic),
        _ => None,
    }
}

fn rank_tests(s: &Settings) -> Result<(Adjustment, PValueMethod)> {
    let adjustment = s.get_with("adjustment", Adjustment::None, parse_adjustment, |a| a.as_str().to_string())?;
    let p_values = s.get_with("p_values", PValueMethod::Auto, parse_p_values, p_value_name)?;
    Ok((adjustment, p_values))
}

fn ingest(s: &Settings) -> Result<()> {
    let events = s.required_path("events")?;
    let defaults = CleaningConfig::default();
    let cfg = CleaningConfig {
        max_calories: s.get("max_calories", defaults.max_calories)?,
        drop_negative_portion: s.get("drop_negative_portion", defaults.drop_negative_portion)?,
        description_denylist: s.list(
            "denylist",
            defaults.description_denylist.clone(),
            |p| Some(p.to_string()),
            String::clone,
        )?,
        item_min_users: s.get("item_min_users", defaults.item_min_users)?,
        user_min_items: s.get("user_min_items", defaults.user_min_items)?,
        ..defaults
    };
    cfg.validate()?;
    let out = out_dir(s)?;
    let log = read_events(&events)?;
    let (cleaned, report) = clean(&log, &cfg);
    let core = p_core_filter(&cleaned, cfg.item_min_users, cfg.user_min_items)?;
    info!(
        "{} events in, {} after cleaning, {} after p-core ({} users, {} items)",
        report.input,
        report.retained,
        core.len(),
        core.n_users(),
        core.item_universe().len()
    );
    let h = header("ingest", s);
    write_log(&out, "events.csv", &core)?;
    write_file(&out, "cleaning.txt", &cleaning_report(&h, &report, &core))?;
    Ok(())
}

fn analyze(s: &Settings) -> Result<()> {
    let events = s.required_path("events")?;
    let profiles = read_profiles(s.path("profiles"))?;
    let k = s.get("k", WindowSpec::default().k())?;
    let direction = s.get_with("direction", Direction::Forward, parse_direction, |d| d.as_str().to_string())?;
    let (adjustment, p_values) = rank_tests(s)?;
    let cfg =
        AnalysisConfig { window: WindowSpec::new(k, direction)?, adjustment, p_values, ..AnalysisConfig::default() };
    let out = out_dir(s)?;
    let log = read_events(&events)?;
    let files = analysis_reports::<f64>(&log, &profiles, &cfg, &header("analyze", s))?;
    write_reports(&out, &files)
}

/// One evaluation run: all meals or a single occasion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MealRun {
    All,
    Meal(Meal),
}

impl MealRun {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(MealRun::All),
            other => other.parse::<Meal>().ok().filter(|m| Meal::OCCASIONS.contains(m)).map(MealRun::Meal),
        }
    }

    fn name(&self) -> String {
        match self {
            MealRun::All => "all".into(),
            MealRun::Meal(m) => m.as_str().into(),
        }
    }
}

fn eval_config(s: &Settings) -> Result<EvalConfig<f64>> {
    let d = EvalConfig::<f64>::default();
    let em_defaults = EmConfig::<f64>::default();
    let fmt_f = |x: &f64| x.to_string();
    let cfg = EvalConfig {
        window: s.get("window", DEFAULT_WINDOW)?,
        top_n: s.list("top_n", d.top_n.clone(), |p| p.parse().ok(), usize::to_string)?,
        novel_n: s.get("novel_n", d.novel_n)?,
        methods: s.list("methods", d.methods.clone(), |p| p.parse().ok(), |m| m.as_str().to_string())?,
        tune: TuneConfig {
            grid: s.list("lambda_grid", default_lambda_grid(), |p| p.parse().ok(), fmt_f)?,
            objective: Objective {
                metric: s.get_with("objective", d.tune.objective.metric, Metric::parse, |m| m.as_str().to_string())?,
                n: s.get("objective_n", d.tune.objective.n)?,
            },
            em: EmConfig {
                init_pi: s.get("em_init", em_defaults.init_pi)?,
                tol: s.get("em_tol", em_defaults.tol)?,
                max_iter: s.get("em_max_iter", em_defaults.max_iter)?,
                ..em_defaults
            },
            normalization: s
                .get_with("normalization", d.tune.normalization, Normalization::parse, |n| n.as_str().to_string())?,
        },
        eligibility: s.get_with("eligibility", d.eligibility, Eligibility::parse, |e| e.as_str().to_string())?,
        em_data: s.get_with("em_data", d.em_data, EmData::parse, |e| e.as_str().to_string())?,
        gain: s.get_with("gain", d.gain, Gain::parse, |g| g.as_str().to_string())?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn baskets<'a>(events: impl Iterator<Item = &'a repeatrec::ingest::ConsumptionEvent>) -> BTreeMap<UserId, Basket> {
    let mut out: BTreeMap<UserId, Basket> = BTreeMap::new();
    for e in events {
        *out.entry(e.user.clone()).or_default().entry(e.item.clone()).or_insert(0) += 1;
    }
    out
}

/// The model the evaluation would use for the last session, refit on its
/// training days; decay is tuned only when the decayed mixture is selected.
fn final_model(log: &EventLog, cfg: &EvalConfig<f64>) -> Result<ModelDump<f64>> {
    let sessions = make_sessions(log, cfg.window)?;
    let last = sessions.last().ok_or_else(|| Invariant("no sessions in a long enough log".into()))?;
    let split = filter_unseen(last, log, cfg.eligibility);
    let train: Vec<_> = log.range_events(split.train_days.clone()).map(|e| (&e.user, e.day, &e.item)).collect();
    let eligible = |e: &&repeatrec::ingest::ConsumptionEvent| split.eligible_users.contains(&e.user);
    let validation = baskets(log.day_events(split.validation_day).filter(eligible));
    let fit = match cfg.em_data {
        EmData::Validation => validation.clone(),
        EmData::TrainAndValidation => {
            baskets(log.range_events(split.train_days.start..split.validation_day + 1).filter(eligible))
        }
    };
    let tune = if cfg.methods.contains(&Method::MixtureTw) {
        cfg.tune.clone()
    } else {
        TuneConfig { grid: vec![1.0], ..cfg.tune.clone() }
    };
    let t = tune_lambda(train, split.train_days.end - 1, &fit, &validation, &tune)?;
    Ok(ModelDump::new(&t.counts, &t.params))
}

fn evaluate_cmd(s: &Settings) -> Result<()> {
    let events = s.required_path("events")?;
    let profiles = read_profiles(s.path("profiles"))?;
    let cfg = eval_config(s)?;
    let meals = s.list("meal", vec![MealRun::All], MealRun::parse, MealRun::name)?;
    let group_by = s.list("group_by", Vec::new(), ContextKey::parse, |k| k.as_str().to_string())?;
    let (adjustment, p_values) = rank_tests(s)?;
    let out = out_dir(s)?;
    let log = read_events(&events)?;

    for raw in make_sessions(&log, cfg.window)? {
        check_session(&filter_unseen(&raw, &log, cfg.eligibility), &log, cfg.eligibility)?;
    }
    let mut runs: Vec<EvalRun<f64>> = Vec::new();
    for meal in &meals {
        let run = match meal {
            MealRun::All => evaluate(&log, &profiles, &cfg)?,
            MealRun::Meal(m) => meal_specific_protocol(&log, *m, &profiles, &cfg)?,
        };
        let empty = run.empty_sessions().count();
        info!(
            "{}: {} sessions, {} records, {empty} sessions without scorable users",
            meal.name(),
            run.sessions.len(),
            run.records.len()
        );
        runs.push(run);
    }
    let h = header("evaluate", s);
    let files = evaluation_reports(&runs, &cfg.methods, &group_by, adjustment, p_values, &h)?;
    write_reports(&out, &files)?;
    if meals.contains(&MealRun::All) {
        write_file(&out, "model.txt", &final_model(&log, &cfg)?.to_text())?;
    }
    Ok(())
}

fn parse_pi(s: &str) -> Option<PiSpec> {
    let parts: Vec<&str> = s.split(':').map(str::trim).collect();
    match parts.as_slice() {
        ["fixed", p] => p.parse().ok().map(PiSpec::Fixed),
        ["uniform", lo, hi] => Some(PiSpec::Uniform(lo.parse().ok()?, hi.parse().ok()?)),
        _ => None,
    }
}

fn pi_name(p: &PiSpec) -> String {
    match p {
        PiSpec::Fixed(p) => format!("fixed:{p}"),
        PiSpec::Uniform(lo, hi) => format!("uniform:{lo}:{hi}"),
        PiSpec::PerUser(v) => format!("per_user:{}", v.len()),
    }
}

fn optional<T: std::str::FromStr>(s: &str) -> Option<Option<T>> {
    if s == "none" {
        Some(None)
    } else {
        s.parse().ok().map(Some)
    }
}

fn optional_name<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

fn synth(s: &Settings) -> Result<()> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n_users: s.get("n_users", d.n_users)?,
        n_items: s.get("n_items", d.n_items)?,
        n_days: s.get("n_days", d.n_days)?,
        pi: s.get_with("pi", d.pi.clone(), parse_pi, pi_name)?,
        personal_pool_size: s.get("pool_size", d.personal_pool_size)?,
        popularity_exponent: s.get("popularity_exponent", d.popularity_exponent)?,
        items_per_day: s.get("items_per_day", d.items_per_day)?,
        seed: s.get("seed", d.seed)?,
        popular_items: s.get_with("popular_items", d.popular_items, optional, optional_name)?,
        shift: s.get_with("shift_day", None, optional::<u32>, optional_name)?.map(|day| PreferenceShift { day }),
        start: s.get_with("start", d.start, |p| NaiveDate::parse_from_str(p, "%Y-%m-%d").ok(), |d| d.to_string())?,
    };
    let out = out_dir(s)?;
    let (log, truth) = generate(&cfg)?;
    info!("{} events for {} users over {} days", log.len(), log.n_users(), cfg.n_days);
    write_log(&out, "events.csv", &log)?;
    let h = header("synth", s);
    write_file(&out, "ground_truth.tsv", &format!("{}{}", h.render(), write_ground_truth(&truth)))
}

fn selftest(s: &Settings) -> Result<()> {
    let seed = s.get("seed", 0u64)?;
    let checks = run_all(seed);
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Invariant(format!("self-test failed: {}", failed.join(", "))).into())
    }
}
