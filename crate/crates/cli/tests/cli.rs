use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn repeatrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repeatrec")).args(args).env("REPEATREC_LOG", "off").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn without_timestamp(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with("# generated_at = ")).collect::<Vec<_>>().join("\n")
}

fn synth_log(dir: &TempDir, extra: &[&str]) -> String {
    let out = dir.path().join("synth");
    let out = out.to_str().unwrap();
    let mut args = vec!["synth", "--out", out, "--seed", "5"];
    args.extend_from_slice(extra);
    let res = repeatrec(&args);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    format!("{out}/events.csv")
}

#[test]
fn analyze_toy_log() {
    let dir = TempDir::new().unwrap();
    let events = dir.path().join("toy.csv");
    fs::write(
        &events,
        "user_id,date,meal,item_id\nu1,2015-01-05,lunch,a\nu1,2015-01-05,lunch,b\n\
         u1,2015-01-06,lunch,a\nu1,2015-01-06,lunch,c\nu1,2015-01-07,lunch,b\nu1,2015-01-07,lunch,c\n",
    )
    .unwrap();
    let out = dir.path().join("analysis");
    let res = repeatrec(&["analyze", "--events", events.to_str().unwrap(), "--out", out.to_str().unwrap(), "--k", "2"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let per_user = read(&out.join("repeat_per_user.csv"));
    assert!(per_user.contains("\nu1,0.5,2\n"), "{per_user}");
    assert!(per_user.contains("# k = 2\n"));
}

fn summary_rows(summary: &str, method: &str) -> Vec<String> {
    summary
        .lines()
        .filter(|l| l.split_whitespace().next() == Some(method))
        .map(|l| l.split_whitespace().skip(1).collect::<Vec<_>>().join(" "))
        .collect()
}

#[test]
fn unit_grid_makes_decay_irrelevant() {
    let dir = TempDir::new().unwrap();
    let events = synth_log(&dir, &[]);
    let out = dir.path().join("eval");
    let res = repeatrec(&[
        "evaluate",
        "--events",
        &events,
        "--out",
        out.to_str().unwrap(),
        "--lambda-grid",
        "1.0",
        "--methods",
        "mixture,mixture_tw",
        "--top-n",
        "5,10",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let summary = read(&out.join("summary.txt"));
    let plain = summary_rows(&summary, "mixture");
    assert_eq!(plain.len(), 3);
    assert_eq!(plain, summary_rows(&summary, "mixture_tw"));
    let a = read(&out.join("metrics_mixture.csv"));
    let b = read(&out.join("metrics_mixture_tw.csv"));
    let values = |s: &str| -> Vec<String> {
        s.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.replacen("mixture_tw", "mixture", 1)).collect()
    };
    assert_eq!(values(&a), values(&b));
}

#[test]
fn synth_output_feeds_evaluate_deterministically() {
    let dir = TempDir::new().unwrap();
    let events = synth_log(&dir, &["--config", "/dev/null"]);
    let mut outputs = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("eval{jobs}"));
        let res = repeatrec(&[
            "evaluate",
            "--events",
            &events,
            "--out",
            out.to_str().unwrap(),
            "--meal",
            "all,dinner",
            "--group-by",
            "weekday_or_weekend,meal_scope",
            "--jobs",
            jobs,
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        let mut names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        let files: Vec<(String, String)> =
            names.iter().map(|n| (n.to_string_lossy().into_owned(), without_timestamp(&read(&out.join(n))))).collect();
        outputs.push(files);
    }
    assert!(outputs[0].iter().any(|(n, _)| n == "groups_meal_scope.csv"));
    assert!(outputs[0].iter().any(|(n, _)| n == "model.txt"));
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn ingest_writes_a_readable_log() {
    let dir = TempDir::new().unwrap();
    let events = synth_log(&dir, &[]);
    let out = dir.path().join("clean");
    let res = repeatrec(&["ingest", "--events", &events, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(read(&out.join("cleaning.txt")).contains("\noutput,"));
    let again = dir.path().join("again");
    let res =
        repeatrec(&["analyze", "--events", out.join("events.csv").to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let conf = dir.path().join("run.conf");
    let out = dir.path().join("synth");
    fs::write(&conf, format!("out = {}\nn_users = 4\nn_days = 3\nseed = 9\n", out.display())).unwrap();
    let res = repeatrec(&["synth", "--config", conf.to_str().unwrap(), "--seed", "10"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let truth = read(&out.join("ground_truth.tsv"));
    assert!(truth.contains("# n_users = 4\n") && truth.contains("# seed = 10\n"));
}

#[test]
fn input_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    assert_eq!(code(&repeatrec(&["evaluate", "--unknown-flag"])), 1);
    assert_eq!(code(&repeatrec(&["analyze", "--events", "/does/not/exist.csv", "--out", out])), 1);
    let events = synth_log(&dir, &[]);
    assert_eq!(code(&repeatrec(&["ingest", "--events", &events, "--out", out, "--config", "/does/not/exist"])), 1);
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "item_min_users = 0\n").unwrap();
    let res = repeatrec(&["ingest", "--events", &events, "--out", out, "--config", conf.to_str().unwrap()]);
    assert_eq!(code(&res), 1);
    assert!(String::from_utf8_lossy(&res.stderr).contains("threshold"));
    assert_eq!(code(&repeatrec(&["evaluate", "--events", &events, "--out", out, "--top-n", "0"])), 1);
    assert_eq!(code(&repeatrec(&["analyze", "--events", &events, "--out", out, "--k", "1"])), 1);
    assert_eq!(code(&repeatrec(&["synth", "--out", out, "--jobs", "0"])), 1);
}

#[test]
fn selftest_passes() {
    let res = repeatrec(&["selftest", "--seed", "2"]);
    assert_eq!(code(&res), 0);
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS ")).count(), 3, "{stdout}");
}
