use std::path::Path;
use std::process::{Command, Output};

fn nsgasp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsgasp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = nsgasp(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "-o", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    ok(&args);
}

fn metric_row(table: &str, method: &str) -> Vec<String> {
    table
        .lines()
        .find(|l| l.starts_with(method))
        .unwrap_or_else(|| panic!("no row for {method} in\n{table}"))
        .split('\t')
        .map(str::to_owned)
        .collect()
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    simulate(a.path(), &["--seed", "5", "-n", "200"]);
    simulate(b.path(), &["--seed", "5", "-n", "200"]);
    simulate(c.path(), &["--seed", "6", "-n", "200"]);
    for f in ["truth.csv", "masked.csv", "simulation.toml"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
    assert_ne!(
        read(&a.path().join("truth.csv")),
        read(&c.path().join("truth.csv"))
    );
    assert!(read(&a.path().join("simulation.toml")).contains("seed = 5"));
}

#[test]
fn impute_smoke_and_idempotence() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--seed", "11", "-k", "4", "-n", "500"]);
    let masked = dir.path().join("masked.csv");
    let truth = dir.path().join("truth.csv");
    let run = |out: &Path| {
        ok(&[
            "impute",
            masked.to_str().unwrap(),
            "--truth",
            truth.to_str().unwrap(),
            "-o",
            out.to_str().unwrap(),
        ])
    };
    let o1 = dir.path().join("run1");
    let o2 = dir.path().join("run2");
    run(&o1);
    run(&o2);
    for f in ["predictions.tsv", "model.toml", "metrics.tsv"] {
        assert_eq!(
            read(&o1.join(f)),
            read(&o2.join(f)),
            "{f} differs between runs"
        );
    }
    let row = metric_row(&read(&o1.join("metrics.tsv")), "nonseparable-gasp");
    let coverage: f64 = row[2].parse().unwrap();
    assert!((0.85..=1.0).contains(&coverage), "coverage {coverage}");
    let preds = read(&o1.join("predictions.tsv"));
    assert_eq!(preds.lines().count(), 1 + 250);

    // evaluate on the written predictions reproduces the metrics
    let o3 = dir.path().join("eval");
    ok(&[
        "evaluate",
        o1.join("predictions.tsv").to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
        "-o",
        o3.to_str().unwrap(),
    ]);
    assert_eq!(read(&o3.join("metrics.tsv")), read(&o1.join("metrics.tsv")));
}

#[test]
fn nothing_to_impute() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--seed", "1", "-n", "100"]);
    let full = dir.path().join("truth.csv");
    let out = nsgasp(&[
        "impute",
        full.to_str().unwrap(),
        "-o",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.starts_with("error: kind=nothing-to-impute message=\""),
        "{err}"
    );
    assert!(err.contains("nothing to impute"));
}

#[test]
fn baselines_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), &["--seed", "3", "-k", "6", "-n", "300"]);
    let out = dir.path().join("cmp");
    ok(&[
        "baselines",
        dir.path().join("masked.csv").to_str().unwrap(),
        "--truth",
        dir.path().join("truth.csv").to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    let table = read(&out.join("comparison.tsv"));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "method\tRMSE\tP_CI\tL_CI\tAccuracy");
    assert_eq!(lines.len(), 5);
    assert!(lines.iter().all(|l| l.split('\t').count() == 5));
    let nn = metric_row(&table, "nearest-neighbor");
    assert_eq!((nn[2].as_str(), nn[3].as_str()), ("/", "/"));
    for m in ["nonseparable-gasp", "lm-by-site", "lm-by-sample"] {
        let row = metric_row(&table, m);
        assert!(
            row[2].parse::<f64>().is_ok() && row[3].parse::<f64>().is_ok(),
            "{m}"
        );
        assert!(out.join(format!("predictions-{m}.tsv")).exists());
    }
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "n = 50\nk = 3\n").unwrap();
    simulate(
        dir.path(),
        &["-n", "400", "--config", cfg.to_str().unwrap()],
    );
    let truth = read(&dir.path().join("truth.csv"));
    assert_eq!(truth.lines().count(), 51);
    assert_eq!(truth.lines().next().unwrap().split(',').count(), 4);
}

#[test]
fn errors_are_machine_readable() {
    let out = nsgasp(&["fit", "/nonexistent/input.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: kind=io message="), "{err}");

    let out = nsgasp(&["simulate", "--holdout-fraction", "1.5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error: kind=config"));

    let out = nsgasp(&["simulate", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error: kind=usage"));
}

#[test]
fn benchmark_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&[
        "benchmark",
        "--sizes",
        "100,200",
        "--dense-max",
        "100",
        "--reps",
        "1",
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(text.lines().count(), 2);
    let data = read(&dir.path().join("benchmark.tsv"));
    let rows: Vec<Vec<&str>> = data.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2][2], "NA");
    assert_ne!(rows[1][2], "NA");
}
