use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "case=case3",
    "case3.n_test=40",
    "case3.transfer.n_total=120",
    "case3.transfer.x_values=[0, 20]",
    "case3.transfer.replicates=2",
    "case3.transfer.hidden=[6, 6]",
    "case3.transfer.pretrain.epochs=3",
    "case3.transfer.finetune.epochs=3",
    "case3.sweep.x=20",
    "case3.sweep.candidates=[[4, 4], [6, 6]]",
];

fn modelaid(args: &[&str], out: &Path, extra: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_modelaid"));
    cmd.args(args).arg("--out").arg(out);
    for s in SMALL.iter().chain(extra) {
        cmd.arg("--set").arg(s);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest_hash(dir: &Path, command: &str) -> String {
    let text = std::fs::read_to_string(dir.join(format!("manifest_{command}.json"))).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["content_hash"].as_str().unwrap().to_string()
}

#[test]
fn unknown_configuration_key_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = modelaid(&["gen"], dir.path(), &["case3.no_such_key=1"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("no_such_key"));
}

#[test]
fn path_loss_exponent_of_two_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = modelaid(&["gen"], dir.path(), &["case3.consumption.density.params.path_loss_exponent=2"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none(), "nothing is written on a config error");
}

#[test]
fn empty_sweep_candidate_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = modelaid(&["sweep"], dir.path(), &["case3.sweep.candidates=[]"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn missing_model_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = modelaid(&["eval", "--model", "does/not/exist.mlp"], dir.path(), &[]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn corrupt_model_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mlp");
    std::fs::write(&bad, b"MLPMODEL but not really a model file at all, just some bytes").unwrap();
    let o = modelaid(&["eval", "--model", bad.to_str().unwrap()], dir.path(), &[]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn output_directory_is_created() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a").join("b");
    let o = modelaid(&["gen"], &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("manifest_gen.json").is_file());
    assert!(out.join("case3_test.csv").is_file());
}

#[test]
fn reruns_produce_the_same_manifest_hash() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        let o = modelaid(&["transfer"], dir, &[]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(manifest_hash(a.path(), "transfer"), manifest_hash(b.path(), "transfer"));
    let read = |d: &Path| std::fs::read(d.join("testerr_case3.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    let c = tempfile::tempdir().unwrap();
    let o = modelaid(&["transfer", "--seed", "2"], c.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_ne!(manifest_hash(a.path(), "transfer"), manifest_hash(c.path(), "transfer"));
}

#[test]
fn eval_reproduces_the_recorded_test_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = modelaid(&["train"], dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let model = dir.path().join("model_case3_model.mlp");
    let o = modelaid(&["eval", "--model", model.to_str().unwrap()], dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let last_field = |name: &str| {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        text.lines().nth(1).unwrap().rsplit(',').next().unwrap().to_string()
    };
    assert_eq!(last_field("testerr_case3_model.csv"), last_field("eval_model_case3_model.csv"));
}

#[test]
fn zero_budget_transfer_is_the_model_arm() {
    let dir = tempfile::tempdir().unwrap();
    let o = modelaid(&["transfer"], dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for r in 0..2 {
        let read = |arm: &str| std::fs::read(dir.path().join(format!("model_case3_{arm}_0_{r}.mlp"))).unwrap();
        assert_eq!(read("transfer"), read("model"));
    }
}

#[test]
fn duplicate_sweep_candidates_warn() {
    let dir = tempfile::tempdir().unwrap();
    let o = modelaid(&["sweep"], dir.path(), &["case3.sweep.candidates=[[4, 4], [4, 4]]"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("level=WARN") && stderr(&o).contains("duplicate"), "{}", stderr(&o));
}

#[test]
fn printed_configuration_loads_back_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let o = modelaid(&["config"], dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let file = dir.path().join("run.toml");
    std::fs::write(&file, &o.stdout).unwrap();
    let again = Command::new(env!("CARGO_BIN_EXE_modelaid"))
        .args(["config", "--config", file.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&again), 0, "{}", stderr(&again));
    assert_eq!(String::from_utf8_lossy(&again.stdout), String::from_utf8_lossy(&o.stdout));
}
