use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsbridge"))
        .args(args)
        .env("DSBRIDGE_OUTPUT_DIR", out)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn bundled(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn data(name: &str) -> String {
    configs()
        .join("data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

/// Writes `config` next to copies of the bundled data files.
fn write_config(dir: &Path, config: &Value) -> String {
    let data_dir = dir.join("data");
    fs::create_dir_all(&data_dir).unwrap();
    for e in fs::read_dir(configs().join("data")).unwrap() {
        let e = e.unwrap();
        fs::copy(e.path(), data_dir.join(e.file_name())).unwrap();
    }
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn imf_config() -> Value {
    serde_json::from_str(&fs::read_to_string(configs().join("imf_d5.json")).unwrap()).unwrap()
}

#[test]
fn schedule_reports_terminal_value() {
    let out = TempDir::new().unwrap();
    let o = run(
        out.path(),
        &["schedule", "--config", &bundled("schedule.json")],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(out.path().join("summary.json"));
    let last = v["terminal_alpha_bar"].as_f64().unwrap();
    assert!((last - 0.9508311904993018).abs() < 1e-12, "{v}");
    assert_eq!(v["terminal_in_band"], true);
    assert!(out.path().join("schedule.csv").exists());
}

#[test]
fn missing_alpha_min_is_a_schema_error_with_path() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &serde_json::json!({ "schedule": { "n_steps": 100 }, "output_dir": "out" }),
    );
    let o = run(&dir.path().join("out"), &["schedule", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(
        err.contains("schedule") && err.contains("alpha_min"),
        "{err}"
    );
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &serde_json::json!({ "schedule": { "n_steps": 100, "alpha_min": 0.999, "alpha_max": 1.0 }, "output_dir": "out" }),
    );
    let o = run(&dir.path().join("out"), &["schedule", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("alpha_max"), "{}", stderr(&o));
}

#[test]
fn malformed_marginal_names_the_file() {
    let dir = TempDir::new().unwrap();
    let mut c = imf_config();
    c["gamma"] = "data/bad_gamma.csv".into();
    let cfg = write_config(dir.path(), &c);
    fs::write(
        dir.path().join("data/bad_gamma.csv"),
        "label,probability\ns0,0.5\ns1,0.2\ns2,0.1\ns3,0.05\ns4,0.05\n",
    )
    .unwrap();
    let o = run(&dir.path().join("out"), &["imf", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad_gamma.csv"), "{}", stderr(&o));
}

#[test]
fn missing_input_file_is_reported() {
    let dir = TempDir::new().unwrap();
    let mut c = imf_config();
    c["xi"] = "data/nowhere.csv".into();
    let cfg = write_config(dir.path(), &c);
    let o = run(&dir.path().join("out"), &["imf", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("nowhere.csv"), "{}", stderr(&o));
    let o = run(
        &dir.path().join("out"),
        &["imf", "--config", "/nonexistent/config.json"],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn imf_verdict_and_budget_exhaustion() {
    let out = TempDir::new().unwrap();
    let o = run(out.path(), &["imf", "--config", &bundled("imf_d5.json")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(out.path().join("verdict.json"));
    assert!(v["tv_to_oracle"].as_f64().unwrap() < 1e-4);
    assert_eq!(v["monotone"], true);
    for f in ["coupling.csv", "oracle.csv", "trace.csv"] {
        assert!(out.path().join(f).exists(), "{f}");
    }

    let dir = TempDir::new().unwrap();
    let mut c = imf_config();
    c["imf"]["max_iters"] = 2.into();
    let cfg = write_config(dir.path(), &c);
    let o = run(&dir.path().join("out"), &["imf", "--config", &cfg]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(dir.path().join("out/verdict.json").exists());
}

#[test]
fn delta_marginals_give_a_point_mass() {
    let out = TempDir::new().unwrap();
    let o = run(out.path(), &["imf", "--config", &bundled("imf_delta.json")]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(out.path().join("verdict.json"))["point_mass"], true);
}

#[test]
fn match_recovers_a_permuted_molecule() {
    let out = TempDir::new().unwrap();
    let o = run(
        out.path(),
        &[
            "match",
            &data("mol_a.json"),
            &data("mol_a_permuted.json"),
            "--vocab",
            &data("mol_vocab.json"),
            "--config",
            &bundled("match.json"),
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(out.path().join("assignment.json"));
    assert_eq!(v["mapping"].as_array().unwrap().len(), 10);
    assert_eq!(v["trials"].as_array().unwrap().len(), 10);

    let o = run(
        out.path(),
        &[
            "match",
            &data("mol_a.json"),
            &data("mol_a.json"),
            "--vocab",
            &data("mol_vocab.json"),
            "--config",
            &bundled("match.json"),
        ],
    );
    assert_eq!(code(&o), 0);
    let identity = json(out.path().join("assignment.json"))["nll"]
        .as_f64()
        .unwrap();
    assert!((v["nll"].as_f64().unwrap() - identity).abs() < 1e-2);
}

#[test]
fn match_single_nodes_and_exhaustive_gap() {
    let out = TempDir::new().unwrap();
    let vocab = data("mol_vocab.json");
    let o = run(
        out.path(),
        &[
            "match",
            &data("single_a.json"),
            &data("single_b.json"),
            "--vocab",
            &vocab,
            "--config",
            &bundled("match.json"),
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        json(out.path().join("assignment.json"))["mapping"],
        serde_json::json!([0])
    );

    let o = run(
        out.path(),
        &[
            "match",
            &data("small_a.json"),
            &data("small_b.json"),
            "--vocab",
            &vocab,
            "--config",
            &bundled("match.json"),
            "--exhaustive",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(out.path().join("assignment.json"));
    let gap = v["gap"].as_f64().unwrap();
    assert!(gap >= -1e-9);
    assert!((gap - (v["nll"].as_f64().unwrap() - v["oracle_nll"].as_f64().unwrap())).abs() < 1e-12);
}

#[test]
fn caps_exit_with_code_four() {
    let out = TempDir::new().unwrap();
    let o = run(
        out.path(),
        &[
            "match",
            &data("mol_a.json"),
            &data("mol_a_permuted.json"),
            "--vocab",
            &data("mol_vocab.json"),
            "--config",
            &bundled("match.json"),
            "--exhaustive",
        ],
    );
    assert_eq!(code(&o), 4, "{}", stderr(&o));

    let dir = TempDir::new().unwrap();
    let mut c: Value =
        serde_json::from_str(&fs::read_to_string(configs().join("graph_imf.json")).unwrap())
            .unwrap();
    c["enumeration_cap"] = 4.into();
    let cfg = write_config(dir.path(), &c);
    let o = run(&dir.path().join("out"), &["graph-imf", "--config", &cfg]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let mut c: Value =
        serde_json::from_str(&fs::read_to_string(configs().join("sample.json")).unwrap()).unwrap();
    c["n_paths"] = 200.into();
    let cfg = write_config(dir.path(), &c);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&run(&a, &["sample", "--config", &cfg])), 0);
    assert_eq!(
        code(&run(&b, &["--seed", "5", "sample", "--config", &cfg])),
        0
    );
    assert_eq!(json(a.join("verdict.json"))["seed"], 11);
    assert_eq!(json(b.join("verdict.json"))["seed"], 5);
    assert_ne!(
        fs::read(a.join("paths.csv")).unwrap(),
        fs::read(b.join("paths.csv")).unwrap()
    );
}

#[test]
fn exact_posterior_init_takes_zero_steps() {
    let dir = TempDir::new().unwrap();
    let mut c: Value =
        serde_json::from_str(&fs::read_to_string(configs().join("train_tabular.json")).unwrap())
            .unwrap();
    c["init"] = "exact_posterior".into();
    let cfg = write_config(dir.path(), &c);
    let o = run(
        &dir.path().join("out"),
        &["train-tabular", "--config", &cfg],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(dir.path().join("out/verdict.json"));
    assert_eq!(v["zero_step"], true);
    assert_eq!(v["steps"], 0);
    assert!(v["kernel_error"].as_f64().unwrap() < 1e-12);
}
