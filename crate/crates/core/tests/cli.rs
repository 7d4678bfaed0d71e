//! Command-line behaviour: exit codes, manifests and seed overrides.

use sasvolt::io::{sha256_hex, ExperimentConfig, Manifest};
use std::path::Path;
use std::process::{Command, Output};

const QUICK_CONFIG: &str = include_str!("../../../configs/quick.toml");

fn sasvolt(args: &[&str], cwd: &Path, seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sasvolt"));
    cmd.args(args).current_dir(cwd).env_remove("SASVOLT_SEED");
    if let Some(s) = seed {
        cmd.env("SASVOLT_SEED", s);
    }
    cmd.output().unwrap()
}

fn workdir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("quick.toml"), QUICK_CONFIG).unwrap();
    dir
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let dir = workdir();
    std::fs::write(dir.path().join("bad.toml"), "[simulation]\nrays = 10\n").unwrap();
    let out = sasvolt(&["-c", "bad.toml", "simulate", "-o", "raw.sasv"], dir.path(), None);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("raw.sasv").exists());
}

#[test]
fn non_integer_seed_override_is_a_config_error() {
    let dir = workdir();
    let out = sasvolt(&["-c", "quick.toml", "simulate", "-o", "raw.sasv"], dir.path(), Some("abc"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_and_corrupt_inputs_exit_with_io_code() {
    let dir = workdir();
    let missing = sasvolt(&["-c", "quick.toml", "matchfilter", "-i", "nope.sasv", "-o", "mf.sasv"], dir.path(), None);
    assert_eq!(missing.status.code(), Some(3));

    std::fs::write(dir.path().join("junk.sasv"), b"not a container").unwrap();
    let corrupt = sasvolt(&["-c", "quick.toml", "backproject", "-i", "junk.sasv", "-o", "bp.sasv"], dir.path(), None);
    assert_eq!(corrupt.status.code(), Some(3));
}

#[test]
fn wrong_container_kind_is_rejected() {
    let dir = workdir();
    assert!(sasvolt(&["-c", "quick.toml", "simulate", "-o", "raw.sasv"], dir.path(), None).status.success());
    let out = sasvolt(&["-c", "quick.toml", "mip", "-i", "raw.sasv", "-o", "mip.pgm"], dir.path(), None);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn manifest_records_output_hash_and_seeds() {
    let dir = workdir();
    assert!(sasvolt(&["-c", "quick.toml", "simulate", "-o", "raw.sasv"], dir.path(), None).status.success());
    let out = dir.path().join("raw.sasv");
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(Manifest::path_for(&out)).unwrap()).unwrap();
    assert_eq!(manifest.subcommand, "simulate");
    assert_eq!(manifest.outputs[0].sha256, sha256_hex(&std::fs::read(&out).unwrap()));
    assert!(manifest.seeds.contains_key("simulation"));
}

#[test]
fn seed_override_changes_the_noise() {
    let dir = workdir();
    let run = |name: &str, seed: Option<&str>| {
        assert!(sasvolt(&["-c", "quick.toml", "simulate", "-o", name], dir.path(), seed).status.success());
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let a = run("a.sasv", Some("11"));
    let b = run("b.sasv", Some("11"));
    let c = run("c.sasv", Some("12"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn shipped_configs_validate() {
    for text in [QUICK_CONFIG, include_str!("../../../configs/notch.toml"), include_str!("../../../configs/airsas20k.toml")] {
        ExperimentConfig::from_toml(text).unwrap().validate().unwrap();
    }
}
