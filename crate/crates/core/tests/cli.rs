use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn nmr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmr-noise"))
        .args(args)
        .env_remove("NMR_NOISE_OUT_DIR")
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

#[test]
fn noisy_run_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mol = data("chloroacrylic_acid.toml");
    let noise = data("ibm_like.toml");
    let mut outs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let o = nmr(&[
            "--molecule",
            mol.to_str().unwrap(),
            "--mode",
            "trotter-noisy",
            "--noise",
            noise.to_str().unwrap(),
            "--shots",
            "200",
            "--seed",
            "11",
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outs.push(out);
    }
    for f in ["correlations.csv", "spectrum.csv", "spectrum.txt", "budget.json", "circuit.txt"] {
        assert_eq!(read(&outs[0], f), read(&outs[1], f), "{f} differs");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&read(&outs[0], "manifest.json")).unwrap();
    for key in ["version", "config", "molecule", "frame", "hamiltonian", "noise_model", "padded_length"] {
        assert!(manifest.get(key).is_some(), "manifest lacks {key}");
    }
    assert_eq!(manifest["config"]["tau"], 0.01);
    assert_eq!(manifest["noise_model"]["seed"], 11);
}

#[test]
fn reduced_chain_budget_flags_weakest_coupling() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nmr(&[
        "--molecule",
        data("trichlorobenzene.toml").to_str().unwrap(),
        "--mode",
        "budget",
        "--calibration",
        data("calibration.txt").to_str().unwrap(),
        "--tau",
        "0.005",
        "--order",
        "1",
        "--topology",
        "chain",
        "--reduce-below-hz",
        "1",
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&read(tmp.path(), "budget.json")).unwrap();
    assert_eq!(report["gate_counts"]["CNOT"], 6);
    let flagged = report["flagged_couplings"].as_array().unwrap();
    assert_eq!(flagged.len(), 1);
    assert_eq!((flagged[0]["i"].as_u64(), flagged[0]["j"].as_u64()), (Some(1), Some(2)));
}

#[test]
fn out_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_nmr-noise"))
        .args([
            "--molecule",
            data("chloroacrylic_acid.toml").to_str().unwrap(),
            "--mode",
            "exact",
            "--gamma-window",
            "2",
        ])
        .env("NMR_NOISE_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("spectrum.csv").is_file());
}

#[test]
fn missing_noise_file_is_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nmr(&[
        "--molecule",
        data("chloroacrylic_acid.toml").to_str().unwrap(),
        "--mode",
        "trotter-noisy",
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--noise"));
}

#[test]
fn rejected_input_leaves_no_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mol = tmp.path().join("six.toml");
    fs::write(
        &mol,
        "name = \"six\"\nfield_tesla = 11.7\nshifts_ppm = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = nmr(&[
        "--molecule",
        mol.to_str().unwrap(),
        "--mode",
        "lindblad",
        "--noise",
        data("depolarizing.toml").to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn lindblad_rate_file_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nmr(&[
        "--molecule",
        data("chloroacrylic_acid.toml").to_str().unwrap(),
        "--mode",
        "lindblad",
        "--rates",
        data("rates_2spin.txt").to_str().unwrap(),
        "--n-steps",
        "120",
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let eom: serde_json::Value = serde_json::from_slice(&read(tmp.path(), "eom.json")).unwrap();
    assert!(eom["decay_rate_per_s"].as_f64().unwrap() > 0.0);
}
