use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qlimits::manifest::{verify_manifest, RunManifest, Verdict};
use qlimits::{exit, run_experiment, RunRequest};
use tempfile::TempDir;

fn qlimits(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qlimits"))
        .args(args)
        .env_remove("QLIMITS_SEED")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines
        .next()
        .unwrap()
        .split(',')
        .position(|h| h == name)
        .unwrap();
    lines
        .map(|l| l.split(',').nth(idx).unwrap().parse().unwrap())
        .collect()
}

const SWEEP: &str = r#"
experiment = "truncate-sweep"
seed = 3

[grid]
t_max = 2.0
steps = 21

[truncation]
dim = 8
hamiltonian = { source = "gue" }
observable = { source = "gue" }
state = { profile = "random" }
"#;

const FIDELITY_ZERO_V: &str = r#"
experiment = "fidelity"
seed = 5

[grid]
t_max = 3.0
steps = 31

[composite]
dim = 12
n_apparatus = 3
energies = { source = "random" }
interaction = { source = "zero" }
apparatus = { profile = "random" }
particle = { profile = "power-law", exponent = 2.0 }
device = { source = "uniform", channels = 2 }

[fidelity]
n1 = 6
"#;

#[test]
fn full_rank_sweep_has_zero_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "sweep.toml",
        &SWEEP.replace("dim = 8", "dim = 8\nrank = 8"),
    );
    let out = tmp.path().join("run");
    let res = qlimits(&[
        "truncate-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(exit::OK), "{res:?}");
    let csv = fs::read_to_string(out.join("truncation.csv")).unwrap();
    let errors = column(&csv, "error");
    assert_eq!(errors.len(), 21);
    assert!(errors.iter().all(|e| e.abs() <= 1e-12), "{errors:?}");
}

#[test]
fn cutoff_inside_apparatus_block_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "f.toml",
        &FIDELITY_ZERO_V.replace("n1 = 6", "n1 = 3"),
    );
    let res = qlimits(&["fidelity", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(exit::INPUT));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("fidelity.n1"), "{err}");
}

#[test]
fn unknown_key_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "s.toml",
        &SWEEP.replace("dim = 8", "dim = 8\nepsilonn = 0.1"),
    );
    let res = qlimits(&["truncate-sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(exit::INPUT));
    assert!(String::from_utf8_lossy(&res.stderr).contains("epsilonn"));
}

#[test]
fn wrong_subcommand_for_config_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "s.toml", SWEEP);
    let res = qlimits(&["readout", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(exit::INPUT));
}

#[test]
fn zero_interaction_gives_zero_gap() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "f.toml", FIDELITY_ZERO_V);
    let out = tmp.path().join("run");
    let res = qlimits(&[
        "fidelity",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(exit::OK), "{res:?}");
    let csv = fs::read_to_string(out.join("fidelity.csv")).unwrap();
    let f = column(&csv, "F");
    assert_eq!(f.len(), 30 * 2);
    assert!(f.iter().all(|&x| x == 0.0));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("fidelity.json")).unwrap()).unwrap();
    assert_eq!(json["A_fitted"], 0.0);
    assert!(json["t0"].is_null());
}

#[test]
fn grid_past_characteristic_time_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let text = FIDELITY_ZERO_V
        .replace(
            "{ source = \"zero\" }",
            "{ source = \"gue\", scale = 100.0 }",
        )
        .replace("t_max = 3.0\nsteps = 31", "points = [0.0, 5.0, 10.0]");
    let cfg = write(tmp.path(), "f.toml", &text);
    let out = tmp.path().join("run");
    let res = qlimits(&[
        "fidelity",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(exit::INPUT));
    assert!(String::from_utf8_lossy(&res.stderr).contains("no admissible times"));
    let manifest = RunManifest::read(&out).unwrap();
    assert_eq!(manifest.exit_code, Some(exit::INPUT));
}

#[test]
fn verify_detects_edited_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "s.toml", SWEEP);
    let out = tmp.path().join("run");
    let res = qlimits(&[
        "truncate-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(exit::OK), "{res:?}");

    let ok = qlimits(&["verify", out.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(exit::OK));
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("ok"));

    let csv = out.join("truncation.csv");
    let mut text = fs::read_to_string(&csv).unwrap();
    text.push_str("9,9,9,9,9\n");
    fs::write(&csv, text).unwrap();
    let bad = qlimits(&["verify", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(exit::VIOLATION));
    let stdout = String::from_utf8_lossy(&bad.stdout);
    assert!(stdout.starts_with("corrupt"), "{stdout}");
    assert!(stdout.contains("truncation.csv"), "{stdout}");
}

#[test]
fn edited_config_copy_is_stale() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "s.toml", SWEEP);
    let out = tmp.path().join("run");
    let res = run_experiment(&RunRequest {
        config: cfg,
        out: Some(out.clone()),
        ..Default::default()
    });
    assert_eq!(res.exit_code, exit::OK);
    let copy = out.join("config.json");
    let text = fs::read_to_string(&copy)
        .unwrap()
        .replace("\"seed\":3", "\"seed\":4");
    fs::write(&copy, text).unwrap();
    assert!(matches!(verify_manifest(&out).unwrap(), Verdict::Stale(_)));
}

fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let manifest = RunManifest::read(dir).unwrap();
    manifest
        .outputs
        .iter()
        .map(|o| (o.path.clone(), fs::read(dir.join(&o.path)).unwrap()))
        .collect()
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "s.toml", SWEEP);
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = tmp.path().join(name);
            let res = run_experiment(&RunRequest {
                config: cfg.clone(),
                out: Some(out.clone()),
                ..Default::default()
            });
            assert_eq!(res.exit_code, exit::OK);
            (data_files(&out), fs::read(out.join("config.json")).unwrap())
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn config_hash_ignores_key_order_and_format() {
    let tmp = TempDir::new().unwrap();
    let toml_cfg = write(tmp.path(), "s.toml", SWEEP);
    let json_cfg = write(
        tmp.path(),
        "s.json",
        r#"{"truncation": {"state": {"profile": "random"}, "observable": {"source": "gue"},
            "hamiltonian": {"source": "gue"}, "dim": 8},
            "grid": {"steps": 21, "t_max": 2.0}, "seed": 3, "experiment": "truncate-sweep"}"#,
    );
    let hashes: Vec<String> = [("t", toml_cfg), ("j", json_cfg)]
        .into_iter()
        .map(|(name, cfg)| {
            let out = tmp.path().join(name);
            run_experiment(&RunRequest {
                config: cfg,
                out: Some(out.clone()),
                ..Default::default()
            });
            RunManifest::read(&out).unwrap().config_hash
        })
        .collect();
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn seed_precedence_is_flag_then_env_then_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "s.toml", SWEEP);
    let cases = [
        (None, None, 3, "config"),
        (None, Some("11"), 11, "env"),
        (Some(17), Some("11"), 17, "flag"),
    ];
    for (k, (flag, env, seed, source)) in cases.into_iter().enumerate() {
        let out = tmp.path().join(format!("r{k}"));
        let res = run_experiment(&RunRequest {
            config: cfg.clone(),
            out: Some(out.clone()),
            seed: flag,
            env_seed: env.map(str::to_owned),
            ..Default::default()
        });
        assert_eq!(res.exit_code, exit::OK);
        let m = RunManifest::read(&out).unwrap();
        assert_eq!(m.seed, seed);
        assert_eq!(m.seed_source, source);
    }
    let bad = run_experiment(&RunRequest {
        config: cfg,
        out: Some(tmp.path().join("bad")),
        env_seed: Some("seven".into()),
        ..Default::default()
    });
    assert_eq!(bad.exit_code, exit::INPUT);
}

#[test]
fn env_seed_reaches_the_binary() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "s.toml", SWEEP);
    let out = tmp.path().join("run");
    let res = Command::new(env!("CARGO_BIN_EXE_qlimits"))
        .args([
            "truncate-sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .env("QLIMITS_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(exit::OK));
    assert_eq!(RunManifest::read(&out).unwrap().seed, 99);
}

#[test]
fn zero_threads_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "s.toml", SWEEP);
    let res = qlimits(&[
        "truncate-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--threads",
        "0",
    ]);
    assert_eq!(res.status.code(), Some(exit::INPUT));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let config = qlimits::config::load_config(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let stem = path.file_stem().unwrap().to_str().unwrap();
        assert_eq!(config.experiment.name(), stem);
        seen += 1;
    }
    assert_eq!(seen, 6);
}
