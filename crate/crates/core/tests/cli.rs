use std::path::Path;
use std::process::{Command, Output};

fn nanores(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nanores"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small network and short traces so the pipeline runs quickly.
const SMALL: [&str; 8] = [
    "--set",
    "reservoir.assembly.n_wires=120",
    "--set",
    "reservoir.assembly.substrate_side=109.544511501",
    "--set",
    "reservoir.assembly.max_retries=64",
    "--set",
    "reservoir.t=128",
];

#[test]
fn version_and_unknown_flag() {
    let o = nanores(&["--version"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("nanores "));
    let o = nanores(&["simulate", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn manifest_lists_every_wav() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = nanores(&[
        "synth",
        "--out",
        p(&data),
        "--speakers",
        "ann,bob",
        "--trials",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in std::fs::read_dir(&data).unwrap() {
        let path = f.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap();
        if !(name.starts_with("0_") || name.starts_with("1_") || name.starts_with("2_")) {
            std::fs::remove_file(&path).unwrap();
        }
    }
    let m = dir.path().join("m.json");
    let o = nanores(&["manifest", "--root", p(&data), "--out", p(&m)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let loaded = nanores::audio::DatasetManifest::load(&m).unwrap();
    assert_eq!(loaded.len(), 6);
}

#[test]
fn invalid_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"reservoir": {"dynamics": {"kp": 0.5}}}"#).unwrap();
    let o = nanores(&[
        "netgen",
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("t.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kp"), "{}", stderr(&o));
}

#[test]
fn simulate_train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = nanores(&[
        "synth",
        "--out",
        p(&data),
        "--speakers",
        "jackson",
        "--trials",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = data.join("manifest.json");

    let pack = dir.path().join("pack");
    let mut args = vec!["simulate", "--manifest", p(&manifest), "--out", p(&pack)];
    args.extend(SMALL);
    let o = nanores(&args);
    assert!(o.status.success(), "{}", stderr(&o));

    let model = dir.path().join("model.json");
    let mut args = vec![
        "train",
        "--manifest",
        p(&manifest),
        "--traces",
        p(&pack),
        "--out",
        p(&model),
    ];
    args.extend(SMALL);
    let o = nanores(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(model.is_file());

    let report = dir.path().join("report.json");
    let mut args = vec![
        "eval",
        "--manifest",
        p(&manifest),
        "--traces",
        p(&pack),
        "--model-path",
        p(&model),
        "--out",
        p(&report),
    ];
    args.extend(SMALL);
    let o = nanores(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("on 10 test rows"), "{stdout}");
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let total: u64 = doc["confusion"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap())
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(total, 10);
    assert!(report.with_extension("confusion.csv").is_file());
}
