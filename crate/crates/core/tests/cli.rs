use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "[array]\nn_horizontal = 4\nn_vertical = 2\n[link]\nnum_subcarriers = 8\nnum_taps = 4\n[run]\ntrials = 3\nsnr_db = [0.0, 10.0]\n";

fn fdbeam(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdbeam"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("FDBEAM_SEED")
        .env_remove("FDBEAM_TRIALS")
        .output()
        .unwrap()
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn run_writes_results_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "s.toml", SMALL);
    let out = tmp.path().join("out");
    let o = fdbeam(&["run", "--config", &cfg, "--seed", "4"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["command"], "run");
    assert_eq!(m["seed"], 4);
    assert_eq!(m["config"]["run"]["trials"], 3);
    assert_eq!(m["config"]["array"]["n_horizontal"], 4);
    let files: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|e| e["path"].as_str().unwrap()).collect();
    assert_eq!(files, ["results.csv"]);
    assert!(m["counters"]["svd_count"].as_u64().unwrap() > 0);
    let rows = csv_rows(&out.join("results.csv"));
    // five methods plus the half-duplex reference, two SNR points each
    assert_eq!(rows.len(), 12);
    // no temp files are left behind
    assert!(std::fs::read_dir(&out).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn vacuous_thresholds_match_ideal_in_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}[thresholds]\np_lna_max_dbm = 1000000.0\np_adc_max_dbm = 1000000.0\n");
    let cfg = write_cfg(tmp.path(), "v.toml", &text);
    let out = tmp.path().join("out");
    let o = fdbeam(&["run", "--config", &cfg], &out);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&out.join("results.csv"));
    let pick = |m: &str| rows.iter().filter(|r| r[0] == m).cloned().collect::<Vec<_>>();
    let (c4, ideal) = (pick("PROPOSED_C4"), pick("IDEAL_FD"));
    assert_eq!(c4.len(), 2);
    for (a, b) in c4.iter().zip(&ideal) {
        // SE, allowlist and measurement columns; operation counts differ by design
        assert_eq!(a[1..8], b[1..8]);
        assert_eq!(a[11..], b[11..]);
    }
}

#[test]
fn config_errors_exit_one_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_cfg(tmp.path(), "bad.toml", "[link]\nn_s = 2\nbogus_key = 1\n");
    let o = fdbeam(&["run", "--config", &cfg], &out);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml:3"), "{err}");

    let cfg = write_cfg(tmp.path(), "ns.toml", "[link]\nn_s = 3\n");
    let o = fdbeam(&["run", "--config", &cfg], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("link.n_s"));

    let o = fdbeam(&["run", "--variant", "c9"], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--variant"));
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn infeasible_everywhere_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}[thresholds]\np_lna_max_dbm = -300.0\n");
    let cfg = write_cfg(tmp.path(), "tight.toml", &text);
    let out = tmp.path().join("out");
    let o = fdbeam(&["run", "--config", &cfg, "--method", "proposed-c4"], &out);
    assert_eq!(o.status.code(), Some(2));
    // results still land, with power reduction applied in place of the empty allowlist
    let rows = csv_rows(&out.join("results.csv"));
    assert!(rows.iter().all(|r| r[0] == "PROPOSED_C4" && r[5] == "0"));
    assert!(!manifest(&out)["notes"].as_array().unwrap().is_empty());

    let o = fdbeam(&["allowlist", "--config", &cfg], &tmp.path().join("al"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn allowlist_on_toy_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let toy = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/toy.toml");
    for variant in ["c3", "c4", "c4-pruned"] {
        let out = tmp.path().join(variant);
        let o = fdbeam(&["allowlist", "--config", toy, "--variant", variant], &out);
        assert_eq!(o.status.code(), Some(0));
        let ids: Vec<String> = csv_rows(&out.join("allowlist.csv")).into_iter().map(|r| r[0].clone()).collect();
        assert_eq!(ids, ["2", "3", "4", "5"]);
        let files: Vec<String> = manifest(&out)["outputs"].as_array().unwrap().iter().map(|e| e["path"].as_str().unwrap().to_string()).collect();
        assert_eq!(files, ["feasible_set.txt", "allowlist.csv"]);
    }
}

#[test]
fn env_overrides_apply() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "s.toml", SMALL);
    let out = tmp.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_fdbeam"))
        .args(["run", "--method", "ideal-fd"])
        .env("FDBEAM_CONFIG", &cfg)
        .env("FDBEAM_OUT", &out)
        .env("FDBEAM_SEED", "77")
        .env("FDBEAM_TRIALS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["seed"], 77);
    assert_eq!(m["config"]["run"]["trials"], 2);
    assert_eq!(m["config"]["run"]["methods"], serde_json::json!(["ideal-fd"]));
}

#[test]
fn sweep_rx_writes_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}[sweep]\nlna_grid_dbm = [-10.0, 0.0]\nadc_bits_grid = [8, 12]\n");
    let cfg = write_cfg(tmp.path(), "s.toml", &text);
    let out = tmp.path().join("out");
    let o = fdbeam(&["sweep-rx", "--config", &cfg], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("sweep_rx.csv"));
    // 2 LNA caps x 2 resolutions x 2 methods x 2 SNR points
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().any(|r| r[1] == "8" && r[2] == "-50.069"));
}

#[test]
fn array_factor_peaks_at_array_size() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "s.toml", SMALL);
    let out = tmp.path().join("out");
    let o = fdbeam(&["array-factor", "--config", &cfg, "--beams", "1,2", "--step-deg", "90"], &out);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&out.join("array_factor.csv"));
    assert_eq!(rows.len(), 8);
    let gains: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(gains.iter().all(|&g| (0.0..=8.0 + 1e-9).contains(&g)));
}

#[test]
fn validate_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = fdbeam(&["validate"], &out);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&out.join("validate.csv"));
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[2] == "0" && r[3] == "PASS"));
}
