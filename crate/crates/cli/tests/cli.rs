//! Exit-code contract and a small smoke run of the binary.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ripetrack"))
}

#[test]
fn help_lists_the_four_subcommands() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["simulate", "train", "classify", "evaluate"] {
        assert!(text.contains(sub), "missing subcommand {sub}");
    }
}

#[test]
fn invalid_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"cohort": {"fruits": 0}}"#).unwrap();
    let out = bin()
        .args(["simulate", "--out"])
        .arg(dir.path().join("out"))
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn missing_data_file_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["evaluate", "--scanlog"])
        .arg(dir.path().join("missing.csv"))
        .arg("--truth")
        .arg(dir.path().join("missing.csv"))
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulate_smoke_run_writes_the_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"seed": 4, "cohort": {"fruits": 2, "days": 1, "cycles_per_day": 2}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .arg("--seed")
        .arg("99")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["scanlog.csv", "ground_truth.csv", "tag_list.csv", "config.json", "sim_summary.json"] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }
    // the --seed flag overrides the configuration file
    let written = std::fs::read_to_string(out_dir.join("config.json")).unwrap();
    assert!(written.contains("\"seed\": 99"));
}
