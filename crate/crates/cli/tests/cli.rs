use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gids(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gids"))
        .args(args)
        .env_remove("GIDS_OUTPUT_DIR")
        .output()
        .expect("spawn gids")
}

fn small_spec(dir: &Path) -> String {
    let path = dir.join("spec.toml");
    fs::write(
        &path,
        r#"
seed = 1
[[classes]]
name = "x"
count = 150
mean = [0.0, 0.0, 0.0]
[[classes]]
name = "y"
count = 100
mean = [2.5, 0.0, 0.0]
[[classes]]
name = "z"
count = 30
mean = [1.0, 1.5, 0.0]
std = 1.5
"#,
    )
    .unwrap();
    path.display().to_string()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("exp.toml");
    fs::write(
        &path,
        r#"
[data]
dataset = "data/data.csv"
schema = "data/schema.txt"
[protocol]
train_size = 150
fractions = [1.0]
seeds = [0]
pca_dims = 3
output_dir = "unused"
[ids]
epochs = 8
hidden_layers = [8]
[gan]
epochs = 20
hidden_layers = [8]
[controller]
max_rounds = 1
"#,
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn synth_data_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec(tmp.path());
    for out in ["a", "b"] {
        let dir = tmp.path().join(out);
        let o = gids(&["synth-data", "--spec", &spec, "--seed", "9", "--out", dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(tmp.path().join("a/data.csv")).unwrap();
    assert_eq!(a, fs::read(tmp.path().join("b/data.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 280);
    assert_eq!(fs::read_to_string(tmp.path().join("a/schema.txt")).unwrap().lines().count(), 4);
}

#[test]
fn experiment_then_report() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec(tmp.path());
    let data = tmp.path().join("data");
    assert!(gids(&["synth-data", "--spec", &spec, "--out", data.to_str().unwrap()]).status.success());
    let config = small_config(tmp.path());
    let out = tmp.path().join("out");
    let o = gids(&["experiment", "-c", &config, "-o", out.to_str().unwrap(), "--set", "ids.learning_rate=0.05"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("S-IDS") && stdout.contains("G-IDS"), "{stdout}");
    assert!(out.join("comparison.csv").is_file());
    assert!(!tmp.path().join("unused").exists());

    fs::remove_dir_all(out.join("report")).unwrap();
    let o = gids(&["report", "--dir", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(out.join("report/summary.json").is_file());

    let single = tmp.path().join("single");
    let o = gids(&["run-sids", "-c", &config, "-o", single.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains("absent"));

    let pre = tmp.path().join("pre");
    let o = gids(&["preprocess", "-c", &config, "-o", pre.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(pre.join("pipeline.txt").is_file());
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec(tmp.path());
    let data = tmp.path().join("data");
    assert!(gids(&["synth-data", "--spec", &spec, "--out", data.to_str().unwrap()]).status.success());
    let config = small_config(tmp.path());
    let env_out = tmp.path().join("env_out");
    let o = Command::new(env!("CARGO_BIN_EXE_gids"))
        .args(["run-sids", "-c", &config])
        .env("GIDS_OUTPUT_DIR", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(env_out.join("experiment.json").is_file());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(gids(&["--help"]).status.code(), Some(0));
    assert_eq!(gids(&["no-such-command"]).status.code(), Some(1));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[protocol]\nfractions = [2.0]\n").unwrap();
    assert_eq!(gids(&["experiment", "-c", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(gids(&["experiment", "-c", tmp.path().join("absent.toml").to_str().unwrap()]).status.code(), Some(1));

    let config = small_config(tmp.path());
    let o = gids(&["experiment", "-c", &config, "-o", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "missing dataset");
    assert_eq!(gids(&["report", "--dir", tmp.path().join("nothing").to_str().unwrap()]).status.code(), Some(2));
}
