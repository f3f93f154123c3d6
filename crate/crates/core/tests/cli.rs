use std::path::Path;
use std::process::{Command, Output};

fn gtn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtn")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn compress_prints_counts() {
    let o = gtn(&["compress", "--rows", "256", "--cols", "256", "--plan", "2,2,2,2,2,2,2,2", "--ranks", "2"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "dense=65,536 TT=112 compression=99.83%");

    let o = gtn(&["compress", "--rows", "6", "--cols", "8", "--plan", "2,3:4,2", "--ranks", "3"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "dense=48 TT=42 compression=12.50%");
}

#[test]
fn compress_rejects_bad_plans() {
    let o = gtn(&["compress", "--rows", "10", "--cols", "8", "--plan", "2,2,2", "--ranks", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gtn(&["compress", "--rows", "8", "--cols", "8", "--plan", "2,2,2", "--ranks", "2,x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--ranks"));
}

#[test]
fn equiv_and_grad_check_pass() {
    let o = gtn(&["equiv", "--instances", "20", "--rnn-instances", "10"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("PASS").count(), 6);

    let o = gtn(&["check", "--grad", "--all-families", "--samples", "2"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("PASS").count(), 3);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(
        &cfg,
        r#"{"task":"regression","data":{"synthetic":{"graph":"ring","nodes":8,"steps":6,"features":4}},
            "sizes":{"i1":6,"i2":8,"j1":4},"family":"gtn","seed":1,"learning_rate":0.1}"#,
    );
    let o = gtn(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learning_rate"));
}

#[test]
fn synth_then_run_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    write(
        &spec,
        r#"{"graph":"geometric","nodes":5,"steps":4,"features":3,"samples":40,"teacher_seed":2}"#,
    );
    let out = dir.path().join("data");
    let o = gtn(&["synth", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["data.csv", "scores.csv", "labels.csv", "teacher_output.csv", "adjacency.csv", "spec.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let rows = std::fs::read_to_string(out.join("data.csv")).unwrap().lines().count();
    assert_eq!(rows, 40 * 4 * 5);

    let cfg = dir.path().join("cfg.json");
    let report = dir.path().join("report.json");
    write(
        &cfg,
        &format!(
            r#"{{"task":"classification",
                "data":{{"csv":{{"data":{:?},"targets":{:?},"adjacency":{:?},"samples":40}}}},
                "sizes":{{"i1":4,"i2":5,"j1":3}},"family":"gtn","train":{{"steps":20}},"seed":3}}"#,
            out.join("data.csv"),
            out.join("labels.csv"),
            out.join("adjacency.csv")
        ),
    );
    let o = gtn(&["run", "--config", cfg.to_str().unwrap(), "--all-families", "--report", report.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = stdout(&o);
    for label in ["GTN", "RNN", "GCN"] {
        assert!(table.contains(label), "{table}");
    }
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let reports = json.as_array().unwrap();
    assert_eq!(reports.len(), 3);
    for r in reports {
        assert_eq!(r["train_samples"], 32);
        assert_eq!(r["test_samples"], 8);
        assert_eq!(r["loss_curve"].as_array().unwrap().len(), 20);
        let acc = r["accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}
