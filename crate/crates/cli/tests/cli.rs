use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const STAGES: [&str; 5] = ["collect", "certify", "abstract", "synth", "simulate"];

/// A coarse safety set-up that runs every stage in well under a second.
fn small_config() -> Value {
    json!({
        "plant": {"builtin": "safety"},
        "dict": {"dmax": 2},
        "horizon": 9,
        "seed": 3,
        "gamma": 0.99,
        "mu": 0.01,
        "verify_samples": 500,
        "grids": {"state_spacing": [0.05, 0.05], "input_spacing": [0.5]},
        "spec": {"kind": "safety", "safe": {"lo": [-0.5, -0.5], "hi": [0.5, 0.5]}},
        "simulation": {"max_steps": 20, "runs": 3}
    })
}

fn write_config(dir: &Path, cfg: &Value) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn ddabs(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ddabs"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stage(name: &str, config: &Path, out: &Path, env: &[(&str, &str)]) -> Output {
    ddabs(
        &[
            name,
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        env,
    )
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_pipeline(dir: &Path) -> PathBuf {
    let config = write_config(dir, &small_config());
    let out = dir.join("out");
    for name in STAGES {
        let o = stage(name, &config, &out, &[]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
        let _: Value = serde_json::from_slice(&o.stdout).unwrap();
    }
    out
}

#[test]
fn stages_in_separate_processes_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (out_a, out_b) = (run_pipeline(a.path()), run_pipeline(b.path()));
    for file in [
        "trajectory_1.csv",
        "trajectory_2.csv",
        "certificate.json",
        "epsilon.json",
        "model.bin",
        "controller.bin",
        "verdicts.json",
        "traces/trace_000.csv",
        "traces/trace_002.csv",
    ] {
        let (x, y) = (
            fs::read(out_a.join(file)).unwrap(),
            fs::read(out_b.join(file)).unwrap(),
        );
        assert!(x == y, "{file} differs between runs");
    }
    let verdicts: Value =
        serde_json::from_slice(&fs::read(out_a.join("verdicts.json")).unwrap()).unwrap();
    assert_eq!(verdicts["runs"].as_array().unwrap().len(), 3);
    assert_eq!(verdicts["eps_violated"], json!(false));
}

#[test]
fn seed_flag_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let (o1, o2) = (dir.path().join("a"), dir.path().join("b"));
    let seeded = |out: &Path, seed: &str| {
        ddabs(
            &[
                "collect",
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                seed,
            ],
            &[],
        )
    };
    assert!(seeded(&o1, "3").status.success());
    assert!(seeded(&o2, "4").status.success());
    assert_ne!(
        fs::read(o1.join("trajectory_1.csv")).unwrap(),
        fs::read(o2.join("trajectory_1.csv")).unwrap()
    );
}

#[test]
fn missing_plant_file_exits_one_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg["plant"] = json!({"file": "no_such_plant.json"});
    let config = write_config(dir.path(), &cfg);
    let o = stage("collect", &config, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no_such_plant.json"), "{}", stderr(&o));
}

#[test]
fn later_stage_without_inputs_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let o = stage("synth", &config, &dir.path().join("empty"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model.bin"), "{}", stderr(&o));
}

#[test]
fn invalid_configs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut cfg = small_config();
    cfg["unknown_key"] = json!(1);
    let o = stage("collect", &write_config(dir.path(), &cfg), &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let o = stage(
        "collect",
        &write_config(dir.path(), &small_config()),
        &out,
        &[("DDABS_GAMMA", "1.5")],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));
}

#[test]
fn unrealizable_specification_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out = dir.path().join("out");
    // At this spacing ε exceeds the half-width of the safe box, so robust
    // labelling leaves nothing to keep the state in.
    let env = [("DDABS_MODE", "robust")];
    for name in ["collect", "certify", "abstract"] {
        assert!(stage(name, &config, &out, &env).status.success());
    }
    let o = stage("synth", &config, &out, &env);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn nested_environment_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &small_config());
    let out = dir.path().join("out");
    let env = [("DDABS_GRIDS__STATE_SPACING", "[0.1,0.1]")];
    for name in ["collect", "certify", "abstract"] {
        let o = stage(name, &config, &out, &env);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let sidecar: Value =
        serde_json::from_slice(&fs::read(out.join("model.bin.json")).unwrap()).unwrap();
    assert_eq!(
        sidecar["state_grid"]["counts"],
        json!([10, 10]),
        "{sidecar}"
    );
}

#[test]
fn documented_example_config_runs() {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/config.example.json");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let env = [("DDABS_SIMULATION__RUNS", "2")];
    for name in STAGES {
        let o = stage(name, &config, &out, &env);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
    let verdicts: Value =
        serde_json::from_slice(&fs::read(out.join("verdicts.json")).unwrap()).unwrap();
    assert_eq!(verdicts["reached_target"], json!(true));
    assert_eq!(verdicts["hit_avoid"], json!(false));
}
