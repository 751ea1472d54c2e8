//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use repeatrec::eval::{
    check_session, evaluate, filter_unseen, make_sessions, meal_specific_protocol, Basket, ContextKey, EvalConfig,
    EvalRun, MetricRecord,
};
use repeatrec::ingest::{clean, p_core_filter, CleaningConfig, EventLog, Meal, Profiles};
use repeatrec::models::{
    em_fit, global_score, mixture_score, mixture_score_with, personal_score, rank_positions, tune_lambda, CountStats,
    EmConfig, Method, Normalization, TuneConfig,
};
use repeatrec::oracle::{h_statistic, mean_rank_gap, permutation_p_value};
use repeatrec::report::{analysis_reports, evaluation_reports, strip_timestamp, AnalysisConfig, ReportHeader};
use repeatrec::selftest::{em_recovery_check, metric_oracle, repeat_oracle};
use repeatrec::stats::{chi_square_sf, dunn_pairwise, kruskal_wallis, Adjustment, GroupedSamples, PValueMethod};
use repeatrec::synth::{generate, PiSpec, PreferenceShift, SynthConfig};
use repeatrec::UserId;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn metrics() -> Outcome {
    let c = metric_oracle(500, 11);
    outcome(c.passed, c.detail)
}

fn repeats() -> Outcome {
    let c = repeat_oracle(1000, 12);
    outcome(c.passed, c.detail)
}

fn em_recovery() -> Outcome {
    let c = em_recovery_check(13);
    outcome(c.passed, c.detail)
}

fn record_key(r: &MetricRecord<f64>) -> (usize, UserId, &'static str, usize, &'static str) {
    (r.session_id, r.user.clone(), r.metric.as_str(), r.n, r.scope.as_str())
}

/// Mixture ranking at an extreme weight must order items exactly as the
/// baseline does, up to ties in the baseline score.
fn same_up_to_ties(mixture: &[usize], baseline: &[usize], baseline_scores: &[f64]) -> bool {
    mixture.len() == baseline.len()
        && mixture.iter().zip(baseline).all(|(&a, &b)| baseline_scores[a] == baseline_scores[b])
}

fn degeneracies() -> Outcome {
    let cfg = SynthConfig { n_users: 30, n_items: 120, n_days: 14, seed: 14, ..SynthConfig::default() };
    let (log, _) = generate(&cfg).expect("valid config");
    let eval_cfg = EvalConfig::<f64> {
        methods: vec![Method::Mixture, Method::MixtureTw],
        top_n: vec![1, 5, 10],
        tune: TuneConfig { grid: vec![1.0], ..TuneConfig::default() },
        ..EvalConfig::default()
    };
    let run = evaluate(&log, &Profiles::new(), &eval_cfg).expect("evaluation runs");
    let plain: BTreeMap<_, f64> =
        run.records.iter().filter(|r| r.method == Method::Mixture).map(|r| (record_key(r), r.value)).collect();
    let decayed: BTreeMap<_, f64> =
        run.records.iter().filter(|r| r.method == Method::MixtureTw).map(|r| (record_key(r), r.value)).collect();
    let same_keys = plain.len() == decayed.len() && plain.keys().eq(decayed.keys());
    let max_gap =
        plain.iter().map(|(k, v)| decayed.get(k).map_or(f64::INFINITY, |w| (v - w).abs())).fold(0.0, f64::max);

    // score vectors of the decayed model on a unit grid against the plain model
    let train: Vec<_> = log.range_events(0..12).map(|e| (&e.user, e.day, &e.item)).collect();
    let mut validation: BTreeMap<UserId, Basket> = BTreeMap::new();
    for e in log.day_events(12) {
        *validation.entry(e.user.clone()).or_default().entry(e.item.clone()).or_insert(0) += 1;
    }
    let base =
        CountStats::<f64>::build(train.iter().copied(), 11, 1.0, Normalization::L1PerUser).expect("valid counts");
    let validation: BTreeMap<UserId, Basket> = validation.into_iter().filter(|(u, _)| base.contains_user(u)).collect();
    let params = em_fit(&base, &validation, &EmConfig::default()).expect("users known");
    let tuned = tune_lambda(
        train.iter().copied(),
        11,
        &validation,
        &validation,
        &TuneConfig { grid: vec![1.0], ..TuneConfig::default() },
    )
    .expect("tuning runs");
    let mut score_gap = 0.0f64;
    for user in base.users() {
        let a = mixture_score(&base, &params, user).expect("fitted user");
        let b = mixture_score(&tuned.counts, &tuned.params, user).expect("fitted user");
        score_gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(score_gap, f64::max);
    }

    // raw integer counts keep baseline score gaps far above the weight perturbation
    let counts = CountStats::<f64>::build(train, 11, 1.0, Normalization::Raw).expect("valid counts");
    let eps = 1e-6;
    let global = global_score(&counts);
    let mut personal_ok = 0;
    let mut global_ok = 0;
    let users: Vec<&UserId> = counts.users().collect();
    for &user in &users {
        for n in [1, 5, 10, counts.n_items()] {
            let pers = personal_score(&counts, user).expect("known user");
            let high = mixture_score_with(&counts, 1.0 - eps, user).expect("known user");
            let low = mixture_score_with(&counts, eps, user).expect("known user");
            let p_ok =
                same_up_to_ties(&rank_positions(&high, n, |_| false), &rank_positions(&pers, n, |_| false), &pers);
            let g_ok =
                same_up_to_ties(&rank_positions(&low, n, |_| false), &rank_positions(&global, n, |_| false), &global);
            personal_ok += usize::from(p_ok);
            global_ok += usize::from(g_ok);
        }
    }
    let total = users.len() * 4;
    outcome(
        same_keys && max_gap <= 1e-12 && score_gap <= 1e-12 && personal_ok == total && global_ok == total && !plain.is_empty(),
        format!(
            "max score gap TW(1) vs mixture = {score_gap:.1e}; {} records, max metric gap = {max_gap:.1e}; personal order {personal_ok}/{total}; global order {global_ok}/{total}",
            plain.len()
        ),
    )
}

fn preference_shift() -> Outcome {
    // 9-day log: train days 0-6, validation day 7; personal pools change on day 5
    let mut passing = 0;
    let mut bests = Vec::new();
    let seeds = 10;
    for seed in 0..seeds {
        let cfg = SynthConfig {
            n_users: 40,
            n_items: 200,
            n_days: 9,
            pi: PiSpec::Fixed(0.8),
            personal_pool_size: 5,
            items_per_day: 5.0,
            shift: Some(PreferenceShift { day: 5 }),
            seed: 100 + seed,
            ..SynthConfig::default()
        };
        let (log, _) = generate(&cfg).expect("valid config");
        let train: Vec<_> = log.range_events(0..7).map(|e| (&e.user, e.day, &e.item)).collect();
        let mut validation: BTreeMap<UserId, Basket> = BTreeMap::new();
        for e in log.day_events(7) {
            *validation.entry(e.user.clone()).or_default().entry(e.item.clone()).or_insert(0) += 1;
        }
        let t = tune_lambda(train, 6, &validation, &validation, &TuneConfig::<f64>::default()).expect("tuning runs");
        let at_one = t.trace.last().expect("non-empty trace").1;
        let best = t.trace.iter().find(|p| p.0 == t.best).expect("best on grid").1;
        if t.best < 1.0 && best > at_one {
            passing += 1;
        }
        bests.push(format!("{:.2}", t.best));
    }
    outcome(passing >= 9, format!("{passing}/{seeds} seeds prefer decay; best lambda per seed [{}]", bests.join(", ")))
}

fn rank_tests() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut worst = 0.0f64;
    let mut comparisons = 0;
    for fixture in 0..20 {
        let k = rng.random_range(2..=3);
        let groups: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..rng.random_range(2..=6)).map(|_| f64::from(rng.random_range(0..8u8))).collect())
            .collect();
        let samples =
            GroupedSamples::new(groups.iter().enumerate().map(|(g, v)| (format!("g{g}"), v.clone()))).expect("valid");
        let kw = kruskal_wallis(&samples, PValueMethod::Auto).expect("enough data");
        let seed = 1000 + fixture;
        let reference = permutation_p_value(&groups, |v, l| h_statistic(v, l, k), 200_000, 100_000, seed);
        worst = worst.max((kw.p_value - reference).abs());
        comparisons += 1;
        let dunn = dunn_pairwise(&samples, Adjustment::None, PValueMethod::Auto).expect("enough data");
        for a in 0..k {
            for b in a + 1..k {
                let got = dunn[&(format!("g{a}"), format!("g{b}"))].p_value;
                let reference = permutation_p_value(&groups, |v, l| mean_rank_gap(v, l, a, b), 200_000, 100_000, seed);
                worst = worst.max((got - reference).abs());
                comparisons += 1;
            }
        }
    }
    let crit = chi_square_sf(3.841f64, 1).expect("valid dof");
    let crit_ok = (crit - 0.05).abs() <= 1e-3;
    outcome(
        worst <= 0.02 && crit_ok,
        format!(
            "20 fixtures, {comparisons} p-values, max |p - permutation p| = {worst:.4}; chi2 sf(3.841, 1) = {crit:.5}"
        ),
    )
}

fn sessions() -> Outcome {
    let cfg = SynthConfig { n_users: 40, n_items: 150, n_days: 154, seed: 17, ..SynthConfig::default() };
    let (log, _) = generate(&cfg).expect("valid config");
    let clean_cfg = CleaningConfig::default();
    let (cleaned, _) = clean(&log, &clean_cfg);
    let core = p_core_filter(&cleaned, clean_cfg.item_min_users, clean_cfg.user_min_items).expect("valid thresholds");
    let mut item_users: BTreeMap<_, BTreeSet<_>> = BTreeMap::new();
    let mut user_items: BTreeMap<_, BTreeSet<_>> = BTreeMap::new();
    for e in core.events() {
        item_users.entry(&e.item).or_default().insert(&e.user);
        user_items.entry(&e.user).or_default().insert(&e.item);
    }
    let core_ok = item_users.values().all(|s| s.len() >= clean_cfg.item_min_users)
        && user_items.values().all(|s| s.len() >= clean_cfg.user_min_items);
    let split = make_sessions(&core, 9).expect("long enough log");
    let failures = split
        .iter()
        .filter(|s| {
            let f = filter_unseen(s, &core, Default::default());
            check_session(&f, &core, Default::default()).is_err()
        })
        .count();
    outcome(
        split.len() == 146 && failures == 0 && core_ok,
        format!(
            "{} sessions from {} days, {failures} invariant violations, p-core thresholds {}",
            split.len(),
            cfg.n_days,
            if core_ok { "held" } else { "violated" }
        ),
    )
}

fn reports_once(log: &EventLog) -> Vec<(String, String)> {
    let mut header = ReportHeader::new("acceptance", vec![("seed".into(), "18".into())]);
    header.timestamp = Some(format!("{:?}", std::time::SystemTime::now()));
    let mut files =
        analysis_reports::<f64>(log, &Profiles::new(), &AnalysisConfig::default(), &header).expect("analysis runs");
    let cfg = EvalConfig::<f64>::default();
    let mut runs: Vec<EvalRun<f64>> = vec![evaluate(log, &Profiles::new(), &cfg).expect("evaluation runs")];
    runs.push(meal_specific_protocol(log, Meal::Lunch, &Profiles::new(), &cfg).expect("evaluation runs"));
    files.extend(
        evaluation_reports(&runs, &cfg.methods, &ContextKey::ALL, Adjustment::None, PValueMethod::Auto, &header)
            .expect("reports render"),
    );
    files.into_iter().map(|f| (f.name, strip_timestamp(&f.contents))).collect()
}

fn determinism() -> Outcome {
    let cfg = SynthConfig { n_users: 25, n_items: 80, n_days: 16, seed: 18, ..SynthConfig::default() };
    let (log, _) = generate(&cfg).expect("valid config");
    let outputs: Vec<Vec<(String, String)>> = [1, 2, 4]
        .iter()
        .map(|&threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("thread pool")
                .install(|| reports_once(&log))
        })
        .collect();
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    let bytes: usize = outputs[0].iter().map(|f| f.1.len()).sum();
    outcome(
        identical && !outputs[0].is_empty(),
        format!("{} report files ({bytes} bytes) compared across 1, 2 and 4 threads", outputs[0].len()),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn main() -> ExitCode {
    let secs = |s: u64| Some(Duration::from_secs(s));
    let criteria: [Criterion; 8] = [
        ("1 metric oracle", metrics, secs(10)),
        ("2 repeat-fraction oracle", repeats, secs(10)),
        ("3 EM recovery", em_recovery, secs(60)),
        ("4 model degeneracies", degeneracies, None),
        ("5 preference shift favours decay", preference_shift, secs(120)),
        ("6 rank tests against permutation", rank_tests, None),
        ("7 session protocol", sessions, None),
        ("8 deterministic reports", determinism, None),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let passed = o.passed && in_time;
        let budget = limit.map_or(String::new(), |l| format!(" (limit {}s)", l.as_secs()));
        println!(
            "{} criterion {name}: {}; {:.2}s{budget}",
            if passed { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
        failed += usize::from(!passed);
    }
    if failed == 0 {
        println!("acceptance: all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
