use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn diffsort(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffsort"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn floats(line: &str) -> Vec<f64> {
    line.trim().split(',').map(|t| t.parse().unwrap()).collect()
}

#[test]
fn gen_schedule_layer_counts() {
    let dir = TempDir::new().unwrap();
    let out_path = path(&dir, "s.json");
    let out = diffsort(&[
        "gen-schedule",
        "--kind",
        "bitonic",
        "--n",
        "16",
        "--out",
        &out_path,
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("layers: 10"));
    let saved = diffsort::schedule::ComparatorSchedule::load(&out_path).unwrap();
    assert_eq!(saved.layer_count(), 10);

    let out = diffsort(&["gen-schedule", "--kind", "odd-even", "--n", "7"]);
    assert!(stdout(&out).trim_end().ends_with("layers: 7"));

    let out = diffsort(&["gen-schedule", "--kind", "bitonic", "--n", "12"]);
    assert_ne!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("power-of-two"));
}

#[test]
fn sort_hard_and_soft() {
    let out = diffsort(&["sort", "--values", "3,1,2", "--kind", "odd-even", "--hard"]);
    assert_eq!(stdout(&out).trim(), "1,2,3");

    let out = diffsort(&[
        "sort",
        "--values",
        "1,0",
        "--kind",
        "odd-even",
        "--steepness",
        "1",
        "--lambda",
        "0",
    ]);
    let v = floats(&stdout(&out));
    assert!(
        (v[0] - 0.26894).abs() < 1e-5 && (v[1] - 0.73106).abs() < 1e-5,
        "{v:?}"
    );
}

#[test]
fn sort_reads_file_and_emits_perm() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "v.txt");
    std::fs::write(&input, "0.5\n-2\n1.5\n0\n").unwrap();
    let perm = path(&dir, "p.csv");
    let out = diffsort(&["sort", "--input", &input, "--emit-perm", &perm]);
    assert_eq!(code(&out), 0);
    let sorted = floats(&stdout(&out));
    assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "{sorted:?}");
    let rows: Vec<Vec<f64>> = std::fs::read_to_string(&perm)
        .unwrap()
        .lines()
        .map(floats)
        .collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn sort_usage_errors() {
    assert_eq!(code(&diffsort(&["sort", "--kind", "odd-even"])), 1);
    assert_eq!(code(&diffsort(&["sort", "--values", "1,x"])), 1);
    assert_eq!(code(&diffsort(&["frobnicate"])), 1);
    assert_eq!(
        code(&diffsort(&[
            "sort", "--values", "1,2,3", "--kind", "bitonic"
        ])),
        2
    );
}

#[test]
fn gradcheck_exit_codes() {
    let out = diffsort(&[
        "gradcheck",
        "--n",
        "8",
        "--kind",
        "bitonic",
        "--lambda",
        "0.25",
        "--seed",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("max relative error"));
    let out = diffsort(&[
        "gradcheck",
        "--n",
        "16",
        "--kind",
        "odd-even",
        "--lambda",
        "0",
        "--seed",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert_eq!(
        code(&diffsort(&["gradcheck", "--n", "3", "--kind", "bitonic"])),
        2
    );
}

fn eval_json(out: &Output) -> serde_json::Value {
    assert_eq!(code(out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_str(stdout(out).trim()).unwrap()
}

#[test]
fn train_then_eval() {
    let dir = TempDir::new().unwrap();
    let (tr, te, tk, ck) = (
        path(&dir, "tr.csv"),
        path(&dir, "te.csv"),
        path(&dir, "tk.txt"),
        path(&dir, "m.json"),
    );
    let out = diffsort(&[
        "gen-data",
        "--d",
        "8",
        "--n",
        "8",
        "--groups",
        "1500",
        "--holdout",
        "300",
        "--seed",
        "3",
        "--out",
        &tr,
        "--holdout-out",
        &te,
        "--holdout-keys-out",
        &tk,
    ]);
    assert_eq!(code(&out), 0);
    let out = diffsort(&[
        "train", "--data", &tr, "--steps", "2000", "--batch", "32", "--seed", "1", "--out", &ck,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let loss = std::fs::read_to_string(Path::new(&ck).with_extension("loss.csv")).unwrap();
    let lines: Vec<&str> = loss.lines().collect();
    assert_eq!(lines[0], "step,loss");
    assert_eq!(lines.len(), 2001);

    let report = eval_json(&diffsort(&[
        "eval",
        "--checkpoint",
        &ck,
        "--data",
        &te,
        "--keys",
        &tk,
    ]));
    assert_eq!(report["count"], 300);
    assert!(report["em5"].as_f64().unwrap() >= 0.9, "{report}");
    assert!(report["ew"].as_f64().unwrap() >= report["em"].as_f64().unwrap());
}

#[test]
fn oracle_checkpoint_and_mismatch() {
    let dir = TempDir::new().unwrap();
    let (data, oracle, small) = (
        path(&dir, "d.csv"),
        path(&dir, "o.json"),
        path(&dir, "s.csv"),
    );
    diffsort(&[
        "gen-data",
        "--n",
        "6",
        "--groups",
        "50",
        "--seed",
        "9",
        "--out",
        &data,
        "--oracle-out",
        &oracle,
    ]);
    let report = eval_json(&diffsort(&[
        "eval",
        "--checkpoint",
        &oracle,
        "--data",
        &data,
    ]));
    assert_eq!(report["em"], 1.0);
    assert_eq!(report["ew"], 1.0);

    diffsort(&["gen-data", "--n", "4", "--groups", "10", "--out", &small]);
    assert_eq!(
        code(&diffsort(&[
            "eval",
            "--checkpoint",
            &oracle,
            "--data",
            &small
        ])),
        2
    );
}

#[test]
fn bench_csv_shape() {
    let dir = TempDir::new().unwrap();
    let csv = path(&dir, "b.csv");
    let out = diffsort(&[
        "bench",
        "--n",
        "4",
        "--batch",
        "2",
        "--repeats",
        "1",
        "--out",
        &csv,
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "n,kind,layers,forward_us,backward_us,peak_alloc_bytes,batch"
    );
    assert!(lines[1].starts_with("4,odd-even,4,"));
    assert!(lines[2].starts_with("4,bitonic,3,"));
}

#[test]
fn gen_data_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.csv"), path(&dir, "b.csv"));
    diffsort(&[
        "gen-data", "--n", "4", "--groups", "20", "--noise", "0.1", "--seed", "5", "--out", &a,
    ]);
    diffsort(&[
        "gen-data", "--n", "4", "--groups", "20", "--noise", "0.1", "--seed", "5", "--out", &b,
    ]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
