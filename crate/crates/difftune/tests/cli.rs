use std::path::Path;
use std::process::{Command, Output};

fn difftune(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_difftune"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let o = difftune(dir, args);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

const SMALL: &[&str] = &[
    "--set", "synth_blocks=60",
    "--set", "synth_opcodes=5",
    "--set", "multiplier=2",
    "--set", "embed_dim=4",
    "--set", "hidden_dim=6",
    "--set", "depth=1",
    "--set", "surrogate_passes=1",
    "--set", "surrogate_batch=16",
    "--set", "table_batch=16",
];

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v: Vec<&str> = SMALL.to_vec();
    v.extend_from_slice(args);
    v
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&difftune(dir.path(), &["--help"])), 0);
    assert_eq!(code(&difftune(dir.path(), &["no-such-command"])), 1);
    assert_eq!(code(&difftune(dir.path(), &["--set", "bogus_key=1", "gen-data", "--out", "x"])), 1);
    assert_eq!(code(&difftune(dir.path(), &["--set", "seed=minus one", "gen-data", "--out", "x"])), 1);
    // evaluate with a valid table but no dataset
    std::fs::write(
        dir.path().join("t"),
        "dispatch_width 4\nreorder_buffer_size 100\nADD uops=1 lat=1 ra=0,0,0 ports=1,0,0,0,0,0,0,0,0,0\n",
    )
    .unwrap();
    assert_eq!(code(&difftune(dir.path(), &["evaluate", "--table", "t"])), 1);
}

#[test]
fn data_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = difftune(dir.path(), &["evaluate", "--table", "missing.table", "--blocks", "b", "--measurements", "m"]);
    assert_eq!(code(&o), 2);
    std::fs::write(dir.path().join("bad.table"), "dispatch_width four\n").unwrap();
    std::fs::write(dir.path().join("b"), "x\tADD W:r1\n").unwrap();
    let o = difftune(dir.path(), &["simulate", "--table", "bad.table", "--blocks", "b"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
}

#[test]
fn small_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &with_small(&["gen-data", "--out", "run"]));
    assert!(d.join("run/hidden.table").exists());
    ok(d, &["split", "--blocks", "run/blocks.txt", "--measurements", "run/measurements.txt", "--out", "run"]);
    let train: &[&str] = &["--blocks", "run/train.blocks", "--measurements", "run/train.measurements"];
    let test: &[&str] = &["--blocks", "run/test.blocks", "--measurements", "run/test.measurements"];

    let mut a = with_small(&["gen-simdata", "--out", "run/sim.tsv"]);
    a.extend_from_slice(train);
    ok(d, &a);
    ok(d, &with_small(&["train-surrogate", "--simdata", "run/sim.tsv", "--out", "run/model.bin"]));
    let mut a = with_small(&["optimize-table", "--model", "run/model.bin", "--out", "run/relaxed.table"]);
    a.extend_from_slice(train);
    ok(d, &a);
    ok(d, &["extract", "--table", "run/relaxed.table", "--out", "run/learned.table"]);

    let mut a = vec!["--csv", "eval.csv", "evaluate", "--table", "run/hidden.table", "--name", "hidden"];
    a.extend_from_slice(test);
    ok(d, &a);
    let csv = std::fs::read_to_string(d.join("eval.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("predictor,dataset,n,mape,kendall_tau,seed"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "hidden");
    // the hidden table labelled the data, so it is exact
    assert_eq!(row[3].parse::<f64>().unwrap(), 0.0);

    let mut a = vec!["--csv", "learned.csv", "evaluate", "--table", "run/learned.table"];
    a.extend_from_slice(test);
    ok(d, &a);
    let csv = std::fs::read_to_string(d.join("learned.csv")).unwrap();
    let mape: f64 = csv.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!(mape.is_finite() && mape >= 0.0);

    let mut a = vec!["--csv", "sweep.csv", "sweep", "--table", "run/hidden.table", "--parameter", "dispatch_width", "--values", "4,1,2"];
    a.extend_from_slice(test);
    ok(d, &a);
    let csv = std::fs::read_to_string(d.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "parameter,value,mape");
    let values: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(values, ["1", "2", "4"]);
}
