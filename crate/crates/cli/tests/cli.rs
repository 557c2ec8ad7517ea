use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn r2vfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_r2vfl")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// Two well separated classes, deterministic, with a header row.
fn toy(dir: &Path, name: &str, shift: f64) -> PathBuf {
    let mut text = String::from("a,b,c,label\n");
    for i in 0..40 {
        let (c, lab) = if i % 2 == 0 { (0.0, "no") } else { (4.0 + shift, "yes") };
        let j = (i * 7 % 11) as f64 / 11.0;
        text += &format!("{},{},{},{lab}\n", c + j, c - j, c + 0.5 * j);
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture(name: &str) -> String {
    format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path(), "toy.csv", 0.0);
    let model = dir.path().join("m.mdl");
    let out = r2vfl(&[
        "train", "--data", s(&data), "--header", "--variant", "r2vfl-m", "--hidden", "21", "--gamma", "10",
        "--out", s(&model),
    ]);
    let text = stdout(&out);
    assert!(text.contains("variant=r2vfl-m"), "{text}");
    assert!(text.contains("hidden=21") && text.contains("gamma=10"), "{text}");
    assert!(text.contains("training accuracy 100.0000"), "{text}");
    assert!(model.exists());

    let out = r2vfl(&["predict", "--model", s(&model), "--data", s(&data), "--header", "--label-column", "last"]);
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 41);
    assert!(text.starts_with("row,predicted\n1,no\n2,yes\n"), "{text}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("accuracy 100.0000"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path(), "toy.csv", 0.0);
    let m = dir.path().join("m.mdl");
    assert_eq!(code(&r2vfl(&["train", "--data", s(&data), "--variant", "nope", "--out", s(&m)])), 1);
    assert_eq!(code(&r2vfl(&["train", "--data", s(&data), "--out", s(&m)])), 1);
    assert_eq!(code(&r2vfl(&["cv", "--bogus"])), 1);
    assert_eq!(code(&r2vfl(&["train", "--data", "/no/such.csv", "--variant", "rvfl", "--out", s(&m)])), 2);
    // header row read as data
    assert_eq!(code(&r2vfl(&["train", "--data", s(&data), "--variant", "rvfl", "--out", s(&m)])), 2);
    assert_eq!(
        code(&r2vfl(&["train", "--data", s(&data), "--header", "--variant", "rvfl", "--gamma=-1", "--out", s(&m)])),
        2
    );
    assert!(!m.exists());
    for cmd in [&["--help"][..], &["train", "--help"], &["stats", "wilcoxon", "--help"]] {
        assert_eq!(code(&r2vfl(cmd)), 0);
    }
}

#[test]
fn cv_formats_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path(), "toy.csv", 0.0);
    let args = ["cv", "--data", s(&data), "--header", "--variant", "r2vfl-a", "--k", "5", "--seed", "4"];
    let csv = stdout(&r2vfl(&[&args[..], &["--format", "csv"]].concat()));
    assert_eq!(csv, stdout(&r2vfl(&[&args[..], &["--format", "csv"]].concat())));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0], "fold,accuracy");
    assert!(lines[6].starts_with("mean,"));

    let json: serde_json::Value =
        serde_json::from_str(&stdout(&r2vfl(&[&args[..], &["--format", "json"]].concat()))).unwrap();
    let folds = json["result"]["fold_accuracies"].as_array().unwrap();
    assert_eq!(folds.len(), 5);
    for (line, v) in lines[1..6].iter().zip(folds) {
        let csv_value: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(csv_value, v.as_f64().unwrap());
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path(), "toy.csv", 0.0);
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[model]\nvariant = \"elm\"\nhidden_nodes = 7\ngamma = 0.5\n").unwrap();
    let m = dir.path().join("m.mdl");
    let base = ["train", "--data", s(&data), "--header", "--config", s(&cfg), "--out", s(&m)];
    let text = stdout(&r2vfl(&base));
    assert!(text.contains("variant=elm hidden=7 gamma=0.5"), "{text}");
    let text = stdout(&r2vfl(&[&base[..], &["--hidden", "9", "--variant", "rvfl"]].concat()));
    assert!(text.contains("variant=rvfl hidden=9 gamma=0.5"), "{text}");

    std::fs::write(&cfg, "[model]\nhiden_nodes = 7\n").unwrap();
    assert_eq!(code(&r2vfl(&[&base[..], &["--variant", "rvfl"]].concat())), 2);
}

#[test]
fn grid_traces() {
    let dir = tempfile::tempdir().unwrap();
    let data = toy(dir.path(), "toy.csv", 0.0);
    let grid = dir.path().join("g.toml");
    std::fs::write(&grid, "gamma = [1.0]\nhidden = [11]\nkernel = [1.0]\ntau = [1.0]\n").unwrap();
    let trace = dir.path().join("t.csv");
    let base = ["grid", "--data", s(&data), "--header", "--out", s(&trace)];
    stdout(&r2vfl(&[&base[..], &["--variant", "r2vfl-m", "--grid-file", s(&grid)]].concat()));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("index,variant,gamma,hidden_nodes,kernel,tau,seed,fold_1"));

    stdout(&r2vfl(&[&base[..], &["--variant", "rvfl", "--k", "3"]].concat()));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 122);
    assert!(text.lines().next().unwrap().ends_with("fold_3,mean"));
}

#[test]
fn bench_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    toy(dir.path(), "one.csv", 0.0);
    toy(dir.path(), "two.csv", -3.5);
    let manifest = dir.path().join("bench.toml");
    std::fs::write(
        &manifest,
        "models = [\"rvfl\"]\n\
         [grid]\ngamma = [0.1, 10.0]\nhidden = [5, 25]\nkernel = [1.0]\ntau = [0.5, 1.0]\nk = 4\n\
         [[dataset]]\nname = \"first\"\npath = \"one.csv\"\nheader = true\n\
         [[dataset]]\npath = \"two.csv\"\nheader = true\n",
    )
    .unwrap();
    let out = dir.path().join("results");
    stdout(&r2vfl(&["bench", "--manifest", s(&manifest), "--models", "r2vfl-a,r2vfl-m", "--out", s(&out)]));

    let acc = std::fs::read_to_string(out.join("accuracy.csv")).unwrap();
    let lines: Vec<&str> = acc.lines().collect();
    assert_eq!(lines[0], "dataset,r2vfl-a,r2vfl-m");
    assert!(lines[1].starts_with("first,") && lines[2].starts_with("two,"));
    assert!(lines[3].starts_with("Average Accuracy,") && lines[4].starts_with("Average Rank,"));
    assert_eq!(lines.len(), 5);

    let ranks = std::fs::read_to_string(out.join("ranks.csv")).unwrap();
    for line in ranks.lines().skip(1).take(2) {
        let sum: f64 = line.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
        assert_eq!(sum, 3.0, "{line}");
    }
}

#[test]
fn stats_reports() {
    let t1 = fixture("table1.csv");
    let text = stdout(&r2vfl(&["stats", "friedman", "--table", &t1, "--f-critical", "1.9158"]));
    assert!(text.contains("chi2_F 111.4570 (df 9)"), "{text}");
    assert!(text.contains("F_F 20.3872 (df 9, 261)"), "{text}");
    assert!(text.contains("null hypothesis rejected"), "{text}");

    let text = stdout(&r2vfl(&["stats", "friedman", "--table", &t1, "--ranks", "computed", "--format", "csv"]));
    assert!(text.lines().nth(1).unwrap().starts_with("111.2273,"), "{text}");

    let text = stdout(&r2vfl(&["stats", "nemenyi", "--table", &t1, "--q-alpha", "3.164", "--format", "csv"]));
    let sig: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(sig, ["Yes", "Yes", "Yes", "Yes", "Yes", "No", "Yes", "Yes", "No"]);
    assert!(text.contains(",2.4734,"));

    let text = stdout(&r2vfl(&[
        "stats", "wilcoxon", "--table", &t1, "--a", "R2VFL-M", "--b", "RVFL", "--format", "csv",
    ]));
    assert!(text.lines().nth(1).unwrap().starts_with("R2VFL-M,RVFL,"), "{text}");
    assert!(text.trim_end().ends_with(",Reject"));

    let out = r2vfl(&["stats", "wilcoxon", "--table", &t1, "--a", "nope", "--b", "RVFL"]);
    assert_eq!(code(&out), 2);
}
