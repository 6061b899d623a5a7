use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn swipt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swipt"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn design_output_is_reproducible_and_carries_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["design", "--m", "16", "--pa", "5", "--rho", "0.5", "-o", "a.json"];
    assert_eq!(code(&swipt(&args, dir.path())), 0);
    let first = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(code(&swipt(&args, dir.path())), 0);
    let second = std::fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(first, second);

    let v = read_json(&dir.path().join("a.json"));
    let prov = &v["provenance"];
    assert!(prov["tool"].as_str().unwrap().starts_with("swipt "));
    assert!(prov["config_hash"].as_str().unwrap().starts_with("sha256:"));
    assert_eq!(prov["seed"], 1);
    assert_eq!(v["m"], 16);
    assert_eq!(v["points"].as_array().unwrap().len(), 16);
}

#[test]
fn config_hash_tracks_options_but_not_output_path() {
    let dir = tempfile::tempdir().unwrap();
    swipt(&["design", "--m", "16", "--pa", "5", "-o", "a.json"], dir.path());
    swipt(&["design", "--m", "16", "--pa", "5", "-o", "b.json"], dir.path());
    swipt(&["design", "--m", "16", "--pa", "6", "-o", "c.json"], dir.path());
    let hash = |f: &str| read_json(&dir.path().join(f))["provenance"]["config_hash"].clone();
    assert_eq!(hash("a.json"), hash("b.json"));
    assert_ne!(hash("a.json"), hash("c.json"));
}

#[test]
fn on_count_reported_for_canonical_harvester() {
    let dir = tempfile::tempdir().unwrap();
    let out = swipt(&["design", "--m", "16", "--pa", "5", "--rho", "1", "-o", "c.json"], dir.path());
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("M_on = 1"), "{stdout}");
    let v = read_json(&dir.path().join("c.json"));
    assert_eq!(v["meta"]["m_on"], 1);
    assert_eq!(v["rho"], 1.0);

    let out = swipt(&["design", "--m", "4", "--n", "4", "--pa", "5", "--kind", "onoff-block", "-o", "b.json"], dir.path());
    assert_eq!(code(&out), 0);
    let v = read_json(&dir.path().join("b.json"));
    assert_eq!(v["n_on"], 1);
    assert_eq!(v["supports"], serde_json::json!([1, 2, 4, 8]));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "seed = 9\n[design]\nm = 8\npa = 5.0\n").unwrap();
    assert_eq!(code(&swipt(&["--config", "run.toml", "design", "-o", "a.json"], dir.path())), 0);
    let v = read_json(&dir.path().join("a.json"));
    assert_eq!(v["m"], 8);
    assert_eq!(v["provenance"]["seed"], 9);

    assert_eq!(code(&swipt(&["--config", "run.toml", "design", "--m", "4", "-o", "b.json"], dir.path())), 0);
    assert_eq!(read_json(&dir.path().join("b.json"))["m"], 4);
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[design]\nbogus = 1\n").unwrap();
    let cases: &[&[&str]] = &[
        &["design", "--m", "16"],
        &["design", "--bogus"],
        &["frobnicate"],
        &["--config", "bad.toml", "design", "--m", "4", "--pa", "5"],
        &["--config", "missing.toml", "design", "--m", "4", "--pa", "5"],
        &["sweep", "--m", "16", "--pa", "5", "--rho-grid", "0:1:0"],
        &["sweep", "--m", "16", "--pa", "5", "--rho-grid", ""],
        &["simulate", "--design", "missing.json"],
        &["fit-eh", "--data", "missing.csv"],
        &["design", "--m", "16", "--n", "4", "--pa", "5", "--kind", "onoff-block"],
        &["train", "--topology", "ring", "--m", "4", "--pa", "5"],
    ];
    for args in cases {
        let out = swipt(args, dir.path());
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn divergence_exits_with_3_and_keeps_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = swipt(
        &["train", "--m", "4", "--pa", "5", "--hidden", "8", "--iterations", "20", "--lr", "1e300", "--trace", "t.csv", "-o", "s.json"],
        dir.path(),
    );
    assert_eq!(code(&out), 3);
    assert!(!dir.path().join("s.json").exists());
    let trace = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(trace.starts_with("# tool: "));
    assert!(!data_rows(&trace).is_empty());
}

#[test]
fn sweep_rows_are_sorted_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["sweep", "--m", "16", "--pa", "5", "--rho-grid", "1,0,0.5", "--trials", "2000", "-o", "r.csv"];
    assert_eq!(code(&swipt(&args, dir.path())), 0);
    let first = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(code(&swipt(&args, dir.path())), 0);
    assert_eq!(first, std::fs::read_to_string(dir.path().join("r.csv")).unwrap());

    assert!(first.contains("\ncontrol,ser,ci,pd_uw,snr_db,trials,seed\n"));
    let rows = data_rows(&first);
    let controls: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(controls, vec![0.0, 0.5, 1.0]);
    let pd: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(pd[2] > pd[0]);
}

#[test]
fn train_extract_and_simulate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "train", "--m", "4", "--pa", "5", "--hidden", "8", "--iterations", "100", "--batch", "64", "-o", "s.json",
        "--trace", "t.csv", "--extract", "d.json",
    ];
    assert_eq!(code(&swipt(&args, dir.path())), 0);
    let first = std::fs::read(dir.path().join("s.json")).unwrap();
    assert_eq!(code(&swipt(&args, dir.path())), 0);
    assert_eq!(first, std::fs::read(dir.path().join("s.json")).unwrap());

    let trace = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(data_rows(&trace).len(), 100);
    assert_eq!(read_json(&dir.path().join("d.json"))["rho"], "learned");

    let out = swipt(&["simulate", "--design", "d.json", "--trials", "2000"], dir.path());
    assert_eq!(code(&out), 0);
    let rows = data_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "NaN");

    let out = swipt(&["sweep", "--designer", "learned", "--systems", "s.json", "--trials", "2000"], dir.path());
    assert_eq!(code(&out), 0);
    assert_eq!(data_rows(&String::from_utf8(out.stdout).unwrap()).len(), 1);
}

#[test]
fn multi_user_topologies_run() {
    let dir = tempfile::tempdir().unwrap();
    for topo in ["bc", "mac", "ic"] {
        let out_file = format!("{topo}.json");
        let extract = format!("{topo}_d.json");
        let out = swipt(
            &["train", "--topology", topo, "--m", "4", "--pa", "5", "--hidden", "8", "--iterations", "30", "--batch", "32", "-o", &out_file, "--extract", &extract],
            dir.path(),
        );
        assert_eq!(code(&out), 0, "{topo}: {}", String::from_utf8_lossy(&out.stderr));
        let v = read_json(&dir.path().join(&out_file));
        assert_eq!(v["topology"]["kind"], topo);
        let tx = if topo == "bc" { 1 } else { 2 };
        for t in 1..=tx {
            let name = if tx == 1 { extract.clone() } else { format!("{topo}_d.tx{t}.json") };
            assert!(dir.path().join(&name).exists(), "{name}");
        }
        let out = swipt(&["simulate", "--system", &out_file, "--trials", "2000"], dir.path());
        assert_eq!(code(&out), 0);
        assert_eq!(data_rows(&String::from_utf8(out.stdout).unwrap()).len(), 2);
    }
}

#[test]
fn fitted_harvester_feeds_design() {
    let dir = tempfile::tempdir().unwrap();
    let out = swipt(&["fit-eh", "--synthetic", "--epochs", "200", "-o", "eh.json", "--report", "r.json"], dir.path());
    assert_eq!(code(&out), 0);
    let report = read_json(&dir.path().join("r.json"));
    assert!(report["rmse_uw"].as_f64().unwrap().is_finite());
    assert_eq!(code(&swipt(&["design", "--m", "4", "--pa", "5", "--eh", "eh.json", "-o", "c.json"], dir.path())), 0);

    std::fs::write(dir.path().join("few.csv"), "p_in_uw,p_out_uw\n0,0\n100,5\n300,20\n1000,40\n").unwrap();
    assert_eq!(code(&swipt(&["fit-eh", "--data", "few.csv"], dir.path())), 2);
    let mut csv = String::from("p_in_uw,p_out_uw\n");
    for i in 0..20 {
        let p = 50.0 * i as f64;
        csv += &format!("{p},{}\n", 40.0 / (1.0 + (-(p - 300.0) / 60.0f64).exp()));
    }
    std::fs::write(dir.path().join("pairs.csv"), csv).unwrap();
    assert_eq!(code(&swipt(&["fit-eh", "--data", "pairs.csv", "--epochs", "50", "-o", "eh2.json"], dir.path())), 0);
    assert!(read_json(&dir.path().join("eh2.json"))["w1"].is_array());
}
