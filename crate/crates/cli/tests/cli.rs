use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ssmlab(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ssmlab"));
    cmd.args(args).arg("--out").arg(dir.join("out")).env_remove("SSMLAB_OUT");
    if let Some(text) = config {
        let path = dir.join("config.json");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

#[test]
fn certify_non_negative_model_collapses() {
    let dir = TempDir::new().unwrap();
    let o = ssmlab(dir.path(), &["certify"], Some(r#"{"model": "mamba2", "family": "ones:20000"}"#));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("verdict collapse"), "{}", stdout(&o));
    let csv = read(dir.path(), "certify.csv");
    assert!(csv.starts_with("model_id,input_family,W,layer,phase,tau,horizon,stationary\n"));
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
    assert!(read(dir.path(), "failures.json").contains("\"passed\": true"));
}

#[test]
fn certify_hybrid_on_impulses_collapses() {
    let dir = TempDir::new().unwrap();
    let o = ssmlab(dir.path(), &["certify"], Some(r#"{"model": "hybrid", "family": "impulse:auto,5000"}"#));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("verdict collapse"));
}

#[test]
fn certify_modular_counter_is_circumvented() {
    let dir = TempDir::new().unwrap();
    let o = ssmlab(dir.path(), &["certify"], Some(r#"{"model": "modcount:2", "family": "ones:10000"}"#));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("verdict circumvented"));
    assert!(read(dir.path(), "certify.csv").contains(",false"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let o = ssmlab(dir.path(), &["certify"], Some("{\n  \"model\": \"mamba2\",\n  \"modle\": 1\n}"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown field `modle`") && stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = ssmlab(dir.path(), &["train"], Some(r#"{"learning_rate": 0.0}"#));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning"), "{}", stderr(&o));
    assert!(!dir.path().join("out/results.csv").exists());

    assert_eq!(ssmlab(dir.path(), &["psd-check", "--dim", "0"], None).status.code(), Some(2));
    let o = ssmlab(dir.path(), &["construct"], Some(r#"{"construction": "nope"}"#));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(ssmlab(dir.path(), &["certify"], Some(r#"{"model": "mamba3"}"#)).status.code(), Some(2));
}

#[test]
fn environment_overrides_out_flag() {
    let dir = TempDir::new().unwrap();
    let env_out = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_ssmlab"))
        .args(["psd-check", "--dim", "2", "--trials", "5", "--out"])
        .arg(dir.path().join("from_flag"))
        .env("SSMLAB_OUT", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_out.join("psd.csv").exists());
    assert!(!dir.path().join("from_flag").exists());
}

#[test]
fn constructions_pass_their_oracles() {
    let dir = TempDir::new().unwrap();
    for cfg in [
        r#"{"construction": "modcount", "n": 3}"#,
        r#"{"construction": "offset", "n": 4}"#,
        r#"{"construction": "parity-signed", "exhaustive_len": 14, "random_count": 20, "random_len": 1000}"#,
    ] {
        let o = ssmlab(dir.path(), &["construct"], Some(cfg));
        assert!(o.status.success(), "{cfg}: {}", stderr(&o));
        assert!(!stdout(&o).contains("FAIL"));
        assert!(read(dir.path(), "construct.csv").lines().skip(1).all(|l| l.ends_with(",0,true")));
    }
}

#[test]
fn psd_products_pass() {
    let dir = TempDir::new().unwrap();
    let o = ssmlab(dir.path(), &["psd-check", "--dim", "6", "--trials", "200"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(dir.path(), "psd.csv").lines().count(), 201);
    let o = ssmlab(dir.path(), &["psd-check", "--dim", "1", "--trials", "50"], None);
    assert!(o.status.success());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"zoo": "non-negative", "count": 4, "family": "cycle:2,3,5000"}"#;
    assert!(ssmlab(dir.path(), &["sweep", "--seed", "3"], Some(cfg)).status.success());
    let first = (read(dir.path(), "sweep.csv"), read(dir.path(), "sweep_summary.csv"));
    assert!(ssmlab(dir.path(), &["sweep", "--seed", "3", "--jobs", "3"], Some(cfg)).status.success());
    assert_eq!(first, (read(dir.path(), "sweep.csv"), read(dir.path(), "sweep_summary.csv")));
}

#[test]
fn failed_predictions_exit_non_zero_with_a_summary() {
    // This zoo draw contains hybrids whose rounded rotations settle into a
    // cycle longer than W instead of a fixed point.
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"zoo": "hybrid", "count": 50, "family": "impulse:auto,20000", "seed": 77}"#;
    let o = ssmlab(dir.path(), &["sweep"], Some(cfg));
    assert_eq!(o.status.code(), Some(1));
    let summary = read(dir.path(), "failures.json");
    assert!(summary.contains("\"passed\": false") && summary.contains("hybrid-42"), "{summary}");
    assert!(stderr(&o).contains("\"failures\""));
}

#[test]
fn parity_training_writes_results_and_table() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"models": ["RNN", "S4D"], "seeds": 2, "epochs": 1, "eval_lengths": [16, 32], "eval_count": 8}"#;
    let o = ssmlab(dir.path(), &["train", "--jobs", "2"], Some(cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    let results = read(dir.path(), "results.csv");
    assert!(results.starts_with("model,seed,train_len,eval_len,train_acc,eval_acc,epochs,lr\n"));
    assert_eq!(results.lines().count(), 1 + 2 * 2 * 2);
    let table = read(dir.path(), "table.csv");
    assert_eq!(table.lines().count(), 3);
    assert!(table.contains("RNN,0 1,8,32,"));
}

#[test]
fn offset_training_writes_traces() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"experiment": "offset", "models": ["S4D"], "seeds": 1, "epochs": 2}"#;
    let o = ssmlab(dir.path(), &["train"], Some(cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    for probe in ["held_out", "two_isi", "double_isi"] {
        let csv = read(dir.path(), &format!("trace_s4d_0_{probe}.csv"));
        assert!(csv.starts_with("step,input,target,output\n"));
        assert_eq!(csv.lines().count(), 201);
        let svg = read(dir.path(), &format!("trace_s4d_0_{probe}.svg"));
        assert!(svg.starts_with("<svg") && svg.contains("model output"));
    }
    assert!(read(dir.path(), "results.csv").contains("S4D,0,200,200,"));
}
