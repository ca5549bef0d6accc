use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperhead")).args(args).env("HYPERHEAD_THREADS", "2").output().expect("spawn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn verify_default_passes() {
    let o = run(&["verify", "--trials", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS ")).count(), 17);
    assert!(text.contains("17/17 suites passed"));
}

#[test]
fn verify_filter_runs_only_matching_suites() {
    let o = run(&["verify", "--filter=dplr"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let ids: Vec<&str> = text.lines().filter_map(|l| l.split_whitespace().nth(1)).filter(|s| s.contains('.')).collect();
    assert_eq!(ids, ["dplr.fast_dense_equivalence", "dplr.extension_consistency", "dplr.operation_count"]);
    assert_eq!(run(&["verify", "--filter=nothing"]).status.code(), Some(2));
}

#[test]
fn skew_poison_fails_naming_bijectivity() {
    let o = run(&["verify", "--poison=skew", "--trials", "2"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    let failed: Vec<&str> = text.lines().filter(|l| l.starts_with("FAIL ")).collect();
    assert_eq!(failed.len(), 1, "{text}");
    assert!(failed[0].contains("blocked.layout_bijectivity"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("blocked.layout_bijectivity"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["train", "--label", "X"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--steps", "0"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--task", "sorting", "--steps", "1"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--d", "abc"]).status.code(), Some(2));
    assert_eq!(run(&["bench", "--label", "R"]).status.code(), Some(2));
    assert_eq!(run(&["parse", "--label", "R-qq"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn train_writes_metrics_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let args = ["train", "--label", "R-c-12o!", "--task", "incontext_recall", "--d", "16", "--seq-len", "16", "--steps", "4", "--seed", "3", "--out", out];
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let path = Path::new(out).join("R-c-12o!-incontext_recall-3.csv");
    let csv = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,loss,eval_acc");
    assert_eq!(lines.len(), 3, "{csv}");
    assert!(lines[1].starts_with("0,") && lines[2].starts_with("4,"));
    assert!(stdout(&o).contains("final eval accuracy"));
    assert_eq!(std::fs::read_dir(out).unwrap().count(), 1, "temporary file left behind");

    // Same seed, same bytes, regardless of the worker count.
    let again = Command::new(env!("CARGO_BIN_EXE_hyperhead")).args(args).env("HYPERHEAD_THREADS", "1").output().unwrap();
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&path).unwrap(), csv);
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# parse settings\nlabel = R-pc\nd = 32\nn_head = 1\n").unwrap();
    let o = run(&["parse", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("canonical=R-pc"));
    assert!(text.contains("d=32 n_head=1 d_qk=32"));
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(run(&["parse", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn bench_reports_counts() {
    let o = run(&["bench", "--label", "G-cg-q-12o"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(2).take(3).map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), ["16", "64", "256"]);
    for r in &rows {
        assert!(r[2].parse::<f64>().unwrap() <= 8.0);
        assert_eq!(r[3], "64");
        assert_eq!(r[4], "0");
    }
}

#[test]
fn inspect_prints_one_row_per_slot() {
    let o = run(&["inspect", "--label", "R-12o!", "--d", "16", "--seq-len", "5", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("label=R-12o! t=5"));
    assert_eq!(text.lines().count(), 2 + 5);
    assert_eq!(stdout(&run(&["inspect", "--label", "R-12o!", "--d", "16", "--seq-len", "5", "--seed", "1"])), text);
}
