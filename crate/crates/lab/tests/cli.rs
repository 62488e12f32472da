use std::fs;
use std::process::Command;

fn mer() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mer"))
}

#[test]
fn run_then_report() {
    let out = std::env::temp_dir().join(format!("mer-cli-{}", std::process::id()));
    let _ = fs::remove_dir_all(&out);
    let status = mer()
        .args(["run", "--benchmark", "synthetic", "--algorithm", "er_reservoir", "--seeds", "0-1"])
        .args(["--tasks", "3", "--per-task", "100", "--buffer", "200", "--batch-size", "5", "--jobs", "2"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["completed"], 2);
    assert!(summary["learner"].as_str().unwrap().contains("k=6"), "{}", summary["learner"]);
    let report = mer().arg("report").arg(&out).output().unwrap();
    assert!(report.status.success());
    assert!(String::from_utf8_lossy(&report.stdout).contains("er_reservoir"));
    fs::remove_dir_all(&out).unwrap();
}

#[test]
fn config_file_key_errors_name_the_key() {
    let path = std::env::temp_dir().join(format!("mer-cli-bad-{}.toml", std::process::id()));
    fs::write(&path, "preset = \"rot-5120-mer_a1\"\n[learner]\naplha = 0.1\n").unwrap();
    let out = mer().arg("run").arg("--config").arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("aplha"));
    fs::remove_file(&path).unwrap();
}

#[test]
fn missing_benchmark_is_an_error() {
    let out = mer().args(["run", "--algorithm", "online"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("benchmark"));
}
