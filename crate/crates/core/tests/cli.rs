use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use deductron::io;
use deductron::lstm::LstmParams;
use deductron::network::Mode;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deductron"))
        .args(args)
        .env("DEDUCTRON_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn decode_fixture() {
    let out = ok(&["decode", "--image", s(&fixture("xooxxo.wimg"))]);
    assert_eq!(out, "XOOXXO\n");
}

#[test]
fn decode_trace_has_one_row_per_window() {
    let out = ok(&["decode", "--image", s(&fixture("xooxxo.wimg")), "--emit-trace"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 1 + 29 + 1);
    assert_eq!(lines.iter().filter(|l| l.ends_with(" X")).count(), 3);
    assert_eq!(lines.iter().filter(|l| l.ends_with(" O")).count(), 3);
}

#[test]
fn gen_is_reproducible_and_decodable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.wimg");
    let mut copies = Vec::new();
    for _ in 0..2 {
        ok(&[
            "gen",
            "--chain",
            "basic",
            "--frames",
            "300",
            "--seed",
            "7",
            "--out",
            s(&a),
        ]);
        copies.push(fs::read(&a).unwrap());
    }
    assert_eq!(copies[0], copies[1]);
    let img = io::read_image(&a).unwrap();
    assert_eq!(img.n_cols(), 300);
    assert!(deductron::wlang::validate_image(&img).is_ok());
    ok(&["decode", "--image", s(&a)]);
}

#[test]
fn gen_chain_formats() {
    let dir = tempfile::tempdir().unwrap();
    let chain = dir.path().join("p.wchain");
    ok(&[
        "gen",
        "--chain",
        "precise",
        "--frames",
        "50",
        "--seed",
        "1",
        "--format",
        "chain",
        "--out",
        s(&chain),
    ]);
    assert_eq!(io::read_chain(&chain).unwrap().len(), 50);
    let out = ok(&[
        "gen",
        "--chain",
        "chaotic",
        "--frames",
        "40",
        "--x0",
        "10.123456789",
        "--digits",
        "60",
        "--format",
        "chain",
    ]);
    assert!(out.starts_with("wchain precise 40\n"));
    assert!(out.contains("# x0 = 10.123456789"));
    let err = fails(&["gen", "--chain", "chaotic", "--frames", "400", "--digits", "50"]);
    assert!(err.contains("digits"), "{err}");
}

#[test]
fn make_dataset_matches_fixture() {
    let out = ok(&["make-dataset", "--image", s(&fixture("xooxxo.wimg"))]);
    let made = io::parse_dataset(&out, Path::new("stdout")).unwrap();
    assert_eq!(made, io::read_dataset(&fixture("xooxxo.wset")).unwrap());
}

#[test]
fn make_dataset_rejects_invalid_image() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.wimg");
    fs::write(&bad, "wimg 3\n1 0 0\n1 0 0\n0 0 0\n").unwrap();
    let err = fails(&["make-dataset", "--image", s(&bad)]);
    assert!(err.contains("bad.wimg"), "{err}");
}

#[test]
fn sim_and_eval_handcrafted() {
    let params = fixture("handcrafted.json");
    let out = ok(&["sim", "--params", s(&params), "--image", s(&fixture("xooxxo.wimg"))]);
    assert_eq!(out, "XOOXXO\n");
    let traced = ok(&[
        "sim",
        "--params",
        s(&params),
        "--image",
        s(&fixture("xooxxo.wimg")),
        "--trace",
    ]);
    assert_eq!(traced.lines().count(), 1 + 29 + 1);
    let eval = ok(&["eval", "--params", s(&params), "--data", s(&fixture("xooxxo.wset"))]);
    assert!(eval.contains("frame_accuracy 1.000000 (29/29)"), "{eval}");
    assert!(eval.contains("strings_match true"));
}

#[test]
fn extract_logic_handcrafted() {
    let out = ok(&["extract-logic", "--params", s(&fixture("handcrafted.json"))]);
    assert!(out.contains("h1 (u1) = AND(!x21, !x31, x32)"), "{out}");
    assert!(out.contains("o2 = AND(z2, z4)"));
}

#[test]
fn train_anneal_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("xooxxo.wset");
    let out = dir.path().join("a.json");
    let log = dir.path().join("a.csv");
    let mut copies = Vec::new();
    for _ in 0..2 {
        ok(&[
            "train-anneal",
            "--data",
            s(&data),
            "--memory",
            "3",
            "--beta-step",
            "1e-3",
            "--seed",
            "4",
            "--runs",
            "2",
            "--out",
            s(&out),
            "--log",
            s(&log),
        ]);
        copies.push((fs::read(&out).unwrap(), fs::read(&log).unwrap()));
    }
    assert_eq!(copies[0], copies[1]);
    let (params, config) = io::read_params(&out).unwrap();
    assert_eq!(params.mode, Mode::Quantized);
    assert_eq!(params.n_memory, 3);
    let config = config.unwrap();
    assert_eq!(config["command"], "train-anneal");
    assert_eq!(config["runs"], 2);
    let log = fs::read_to_string(&log).unwrap();
    assert!(log.lines().nth(1).unwrap().starts_with("run_seed,iteration"));
}

#[test]
fn train_sgd_then_extract_rounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sgd.json");
    let curve = dir.path().join("curve.csv");
    ok(&[
        "train-sgd",
        "--data",
        s(&fixture("xooxxo.wset")),
        "--epochs",
        "30",
        "--seed",
        "1",
        "--out",
        s(&out),
        "--curve",
        s(&curve),
    ]);
    let (params, _) = io::read_params(&out).unwrap();
    assert_eq!(params.mode, Mode::Continuous);
    assert_eq!(fs::read_to_string(&curve).unwrap().lines().count(), 2 + 31);
    let res = run(&["extract-logic", "--params", s(&out)]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("rounded"));
}

#[test]
fn train_sgd_warm_start() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("warm.json");
    let report = ok(&[
        "train-sgd",
        "--data",
        s(&fixture("xooxxo.wset")),
        "--warm-start",
        s(&fixture("handcrafted.json")),
        "--beta",
        "12",
        "--epochs",
        "5",
        "--out",
        s(&out),
    ]);
    assert!(report.contains("bit_accuracy 1.000000"), "{report}");
    assert_eq!(io::read_params(&out).unwrap().0.n_memory, 4);
}

#[test]
fn lstm_sim_zero_params() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("lstm.json");
    fs::write(&p, io::lstm_to_json(&LstmParams::zeros(6, 2))).unwrap();
    let out = ok(&["lstm-sim", "--params", s(&p), "--image", s(&fixture("xooxxo.wimg"))]);
    assert_eq!(out.lines().count(), 29);
    assert!(out.lines().all(|l| l.ends_with(" 0.000000 0.000000")));
}

#[test]
fn errors_name_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("short.wimg");
    fs::write(&bad, "wimg 4\n0 1 0 0\n0 0 1 x\n0 0 0 1\n").unwrap();
    let err = fails(&["decode", "--image", s(&bad)]);
    assert!(err.contains("short.wimg:3"), "{err}");

    let missing = dir.path().join("nope.wimg");
    let err = fails(&["decode", "--image", s(&missing)]);
    assert!(err.starts_with("error:"), "{err}");

    let tagged = dir.path().join("v9.json");
    let text = fs::read_to_string(fixture("handcrafted.json")).unwrap();
    fs::write(&tagged, text.replace("deductron-params/1", "deductron-params/9")).unwrap();
    let err = fails(&["extract-logic", "--params", s(&tagged)]);
    assert!(err.contains("v9.json") && err.contains("deductron-params/9"), "{err}");
}

#[test]
fn usage_errors() {
    let out = run(&["train-anneal"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--data"));
    let err = fails(&["gen", "--frames", "0"]);
    assert!(err.contains("--frames"), "{err}");
}
