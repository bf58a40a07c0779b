use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nutripipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nutripipe"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn quick_config(dir: &Path) -> String {
    let path = dir.join("quick.toml");
    fs::write(
        &path,
        r#"
seed = 5

[model]
n_bootstrap = 100

[model.tuning]
enabled = false

[explain]
instances = 10
background_size = 8
permutations = 20
"#,
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn gen_then_run_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let inputs = tmp.path().join("in");
    let o = nutripipe(&["gen-synthetic", "--out", &s(&inputs), "--n-posts", "800", "--seed", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(inputs.join("posts.jsonl").exists() && inputs.join("food_db.csv").exists());

    let cfg = quick_config(tmp.path());
    let run = tmp.path().join("run");
    let common = [
        "--config",
        &cfg,
        "--posts",
        &s(&inputs.join("posts.jsonl")),
        "--food-db",
        &s(&inputs.join("food_db.csv")),
        "--out",
        &s(&run),
    ];

    // a partial run leaves the report unavailable
    let o = nutripipe(&[&["featurize"][..], &common].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(run.join("features.csv").exists());
    assert_eq!(code(&nutripipe(&["report", "--run-dir", &s(&run)])), 4);

    let o = nutripipe(&[&["evaluate", "--task", "engagement", "--features", "C,C+N"][..], &common].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("# engagement") && out.contains("C+N"), "{out}");

    let o = nutripipe(&[&["run"][..], &common].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = run.join("report/report.md");
    assert!(String::from_utf8_lossy(&o.stdout).contains("report.md"));
    let before = fs::read(&report).unwrap();

    let o = nutripipe(&["report", "--run-dir", &s(&run)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&report).unwrap(), before);
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[outliers]\nlow = 900.0\nhigh = 100.0\n").unwrap();
    assert_eq!(code(&nutripipe(&["run", "--config", &s(&bad)])), 2);

    fs::write(&bad, "no_such_key = 1\n").unwrap();
    assert_eq!(code(&nutripipe(&["run", "--config", &s(&bad)])), 2);

    let o = nutripipe(&["run", "--covid-bounds", "2020-03-11"]);
    assert_eq!(code(&o), 2);

    let o = nutripipe(&[
        "ingest-posts",
        "--posts",
        &s(&tmp.path().join("missing.jsonl")),
        "--out",
        &s(&tmp.path().join("run")),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(code(&nutripipe(&["report", "--run-dir", &s(&tmp.path().join("none"))])), 4);
    assert_eq!(code(&nutripipe(&["no-such-command"])), 2);
}
