use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = r#"
problem = "linreg"

[graph]
agents = 4
p_edge = 0.7
seed = 5

[data]
num_train = 6
num_test = 3
seed = 9

[linreg]
d = 3
samples_per_agent = 8
noise_std = 0.2

[unfolding]
depth = 4
mode = "shared"

[training]
epochs = 2
batch_size = 4
learning_rate = 0.01
seed = 1

[baseline]
max_iterations = 30
tolerance = 1e-3
hyperparameters = [0.1, 1.0, 0.1, 1.0, 0.05, 0.05]

[transfer]
targets = [6, 8]
mean_degree = 2.5
"#;

struct Workspace {
    _dir: tempfile::TempDir,
    config: PathBuf,
    out: PathBuf,
}

fn workspace(config: &str) -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.toml");
    fs::write(&path, config).unwrap();
    let out = dir.path().join("out");
    Workspace {
        config: path,
        out,
        _dir: dir,
    }
}

fn dadmm(ws: &Workspace, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dadmm"))
        .args(args)
        .arg("--config")
        .arg(&ws.config)
        .arg("--out")
        .arg(&ws.out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(ws: &Workspace, args: &[&str]) -> String {
    let out = dadmm(ws, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn csv_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn full_pipeline_writes_expected_artifacts() {
    let ws = workspace(CONFIG);
    ok(&ws, &["gen-data"]);
    let dataset = ws.out.join("data/linreg.json");
    let first = fs::read(&dataset).unwrap();
    ok(&ws, &["gen-data"]);
    assert_eq!(first, fs::read(&dataset).unwrap(), "gen-data is not reproducible");

    ok(&ws, &["train"]);
    ok(&ws, &["train", "--mode", "agent-specific"]);
    // 2 epochs × ⌈6 / 4⌉ batches.
    assert_eq!(csv_rows(&ws.out.join("train/shared.csv")), 4);
    let theta = json(&ws.out.join("theta/theta_shared.json"));
    assert_eq!(theta["values"].as_array().unwrap().len(), 6 * 4);
    let theta = json(&ws.out.join("theta/theta_agent-specific.json"));
    assert_eq!(theta["values"].as_array().unwrap().len(), 6 * 4 * 4);
    assert_eq!(theta["P"], 4);

    ok(&ws, &["eval"]);
    let dir = ws.out.join("eval/shared");
    assert_eq!(csv_rows(&dir.join("unfolded.csv")), 4);
    assert_eq!(csv_rows(&dir.join("baseline.csv")), 30);
    let header = fs::read_to_string(dir.join("unfolded.csv")).unwrap();
    assert!(header.starts_with("iteration,loss,objective,disagreement,messages"));
    let summary = json(&dir.join("summary.json"));
    let edges = summary["num_edges"].as_u64().unwrap();
    assert_eq!(summary["unfolded_messages"].as_u64().unwrap(), 2 * edges * 4);
    assert_eq!(summary["schema_version"], 1);

    ok(&ws, &["transfer"]);
    let transfer = json(&ws.out.join("transfer/summary.json"));
    let targets = transfer["targets"].as_array().unwrap();
    assert_eq!(targets.len(), 2);
    assert_eq!(targets[1]["num_agents"], 8);
    assert_eq!(csv_rows(&ws.out.join("transfer/P6/unfolded.csv")), 4);

    ok(&ws, &["compare-modes"]);
    let compare = json(&ws.out.join("compare/summary.json"));
    let ratio = compare["ratio"].as_f64().unwrap();
    let expected =
        compare["shared_final_mse"].as_f64().unwrap() / compare["agent_specific_final_mse"].as_f64().unwrap();
    assert_eq!(ratio, expected);
}

#[test]
fn zero_learning_rate_keeps_initial_theta() {
    let ws = workspace(&CONFIG.replace("learning_rate = 0.01", "learning_rate = 0.0"));
    ok(&ws, &["gen-data"]);
    ok(&ws, &["train"]);
    let theta = json(&ws.out.join("theta/theta_shared.json"));
    let init = [0.1, 1.0, 0.1, 1.0, 0.05, 0.05];
    for (i, v) in theta["values"].as_array().unwrap().iter().enumerate() {
        assert_eq!(v.as_f64().unwrap(), init[i % 6]);
    }
}

#[test]
fn transfer_rejects_agent_specific_theta() {
    let ws = workspace(CONFIG);
    ok(&ws, &["gen-data"]);
    ok(&ws, &["train", "--mode", "agent-specific"]);
    let theta = ws.out.join("theta/theta_agent-specific.json");
    let out = dadmm(&ws, &["transfer", "--theta", theta.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a shared-mode"));
}

#[test]
fn missing_artifacts_are_reported() {
    let ws = workspace(CONFIG);
    let out = dadmm(&ws, &["train"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing artifact"));
}

#[test]
fn seed_override_changes_the_data() {
    let ws = workspace(CONFIG);
    ok(&ws, &["gen-data"]);
    let base = fs::read(ws.out.join("data/linreg.json")).unwrap();
    ok(&ws, &["gen-data", "--seed", "77"]);
    assert_ne!(base, fs::read(ws.out.join("data/linreg.json")).unwrap());
}

#[test]
fn lasso_writes_one_dataset_and_theta_per_snr() {
    let config = CONFIG
        .replace("problem = \"linreg\"", "problem = \"lasso\"")
        .replace(
            "[linreg]\nd = 3\nsamples_per_agent = 8\nnoise_std = 0.2",
            "[lasso]\nn = 8\nm = 3\nsparsity = 0.25\nsnr_db = [0.0, 2.0]",
        )
        .replace("[0.1, 1.0, 0.1, 1.0, 0.05, 0.05]", "[1.0, 0.05, 0.1, 0.1]");
    let ws = workspace(&config);
    let listed = ok(&ws, &["gen-data"]);
    assert!(listed.contains("lasso_snr0dB.json") && listed.contains("lasso_snr2dB.json"));
    ok(&ws, &["train"]);
    assert!(ws.out.join("theta/theta_shared_snr0dB.json").exists());
    assert!(ws.out.join("theta/theta_shared_snr2dB.json").exists());
    ok(&ws, &["eval"]);
    assert_eq!(csv_rows(&ws.out.join("eval/snr2dB/shared/unfolded.csv")), 4);
}

#[test]
fn shipped_presets_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        dadmm_core::experiment::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 4);
}

#[test]
fn invalid_config_is_rejected() {
    let ws = workspace(&CONFIG.replace(
        "hyperparameters = [0.1, 1.0, 0.1, 1.0, 0.05, 0.05]",
        "hyperparameters = [0.1]",
    ));
    let out = dadmm(&ws, &["gen-data"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("baseline.hyperparameters"));
}
