use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn anneal(sub: &str, config: &str, out: &Path, extra: &[&str]) -> Output {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_anneal"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

const LANDSCAPE: &str = r#"
[potential]
name = "tilted_double_well_1d"
params = [0.3]

[landscape]
lo = [-2.0]
hi = [2.0]
resolution = 401
"#;

const SIMULATE: &str = r#"
seed = 3

[potential]
name = "tilted_double_well_1d"
params = [0.3]

[schedule]
kind = "logarithmic"
c = 1.5

[simulate]
n_traj = 200
t_end = 1.0
dt = 1e-2
record_times = [0.5, 1.0]
init = { kind = "point", x = [-1.0] }
"#;

#[test]
fn malformed_potential_exits_2_without_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = LANDSCAPE.replace("tilted_double_well_1d", "no_such_potential");
    let o = anneal("landscape", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid config"));
}

#[test]
fn invalid_configs_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    // unknown key
    let o = anneal("landscape", &format!("{LANDSCAPE}\nbogus = 1\n"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    // simulate needs an explicit seed
    let o = anneal("simulate", &SIMULATE.replace("seed = 3", ""), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    // fpe needs a schedule
    let o = anneal("fpe", "[potential]\nname = \"quadratic\"\n", &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn seed_flag_supplies_missing_seed() {
    let tmp = TempDir::new().unwrap();
    let o = anneal("simulate", &SIMULATE.replace("seed = 3", ""), tmp.path(), &["--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(&tmp.path().join("manifest.json"))["seed"], 3);
}

#[test]
fn reruns_reproduce_checksums() {
    for (sub, cfg) in [("landscape", LANDSCAPE), ("simulate", SIMULATE)] {
        let tmp = TempDir::new().unwrap();
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        assert_eq!(anneal(sub, cfg, &a, &[]).status.code(), Some(0));
        assert_eq!(anneal(sub, cfg, &b, &["--threads", "1"]).status.code(), Some(0));
        let (ma, mb) = (read_json(&a.join("manifest.json")), read_json(&b.join("manifest.json")));
        assert_eq!(ma, mb, "{sub}");
        for entry in ma["artifacts"].as_array().unwrap() {
            let f = entry["file"].as_str().unwrap();
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{sub}/{f}");
        }
    }
}

#[test]
fn manifest_lists_checksummed_artifacts() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(anneal("simulate", SIMULATE, tmp.path(), &[]).status.code(), Some(0));
    let m = read_json(&tmp.path().join("manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["subcommand"], "simulate");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    let files: Vec<&str> = m["artifacts"].as_array().unwrap().iter().map(|e| e["file"].as_str().unwrap()).collect();
    assert_eq!(files, ["simulate.csv", "histogram_0.csv", "histogram_1.csv", "simulate.json"]);
    let csv = fs::read_to_string(tmp.path().join("simulate.csv")).unwrap();
    assert!(csv.starts_with("t,sigma,mean_V,se_V,mean_V2,se_V2,success_r0.2,success_r0.5\n"));
    assert_eq!(csv.lines().count(), 3);
    // no temp files left behind
    assert!(fs::read_dir(tmp.path()).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn numerical_abort_exits_3_with_diagnostics() {
    // a box this narrow cannot hold the equilibrium at sigma = 1
    let cfg = r#"
[potential]
name = "quadratic"

[schedule]
kind = "constant"
sigma0 = 1.0

[fpe]
lo = -1.0
hi = 1.0
cells = 50
t_end = 1.0
record_times = [0.5, 1.0]
"#;
    let tmp = TempDir::new().unwrap();
    let o = anneal("fpe", cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(3));
    let m = read_json(&tmp.path().join("manifest.json"));
    assert_eq!(m["status"], "numerical_abort");
    assert_eq!(m["diagnostics"]["module"], "fpe1d");
    assert!(m["artifacts"].as_array().unwrap().is_empty());
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 1);
}

#[test]
fn verify_reports_every_suite() {
    let cfg = r#"
seed = 11

[potential]
name = "tilted_double_well_1d"
params = [-0.7, 4.0]

[verify]
trials = 200
corpus_size = 200
"#;
    let tmp = TempDir::new().unwrap();
    let o = anneal("verify", cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&tmp.path().join("verify.json"));
    assert_eq!(v["all_pass"], true);
    assert_eq!(v["suites"].as_array().unwrap().len(), 8);
    for s in v["suites"].as_array().unwrap() {
        assert_eq!(s["violations"], 0, "{s}");
        assert!(s["worst_margin"].is_number());
    }
    assert!(v["negative_control"]["violations"].as_u64().unwrap() >= 1);
    assert_eq!(v["one_point"]["orlicz"]["result"]["violations"], 0);
}

#[test]
fn dichotomy_reports_both_runs() {
    let cfg = r#"
[potential]
name = "tilted_double_well_1d"
params = [2.0, 8.0]

[dichotomy]
cells = 200
t_end = 50.0
records = 10
"#;
    let tmp = TempDir::new().unwrap();
    let o = anneal("dichotomy", cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let d = read_json(&tmp.path().join("dichotomy.json"));
    for key in ["c_super", "c_sub", "mass_true_well_super", "mass_true_well_sub", "I_final_super", "d_star"] {
        assert!(d[key].is_number(), "{key}");
    }
    let ratio = d["c_super"].as_f64().unwrap() / d["c_sub"].as_f64().unwrap();
    assert!((ratio - 2.0 / 0.3).abs() < 1e-9);
    for f in ["dichotomy_super.csv", "dichotomy_sub.csv"] {
        let text = fs::read_to_string(tmp.path().join(f)).unwrap();
        assert_eq!(text.lines().count(), 11);
        // basin masses stay probabilities
        for line in text.lines().skip(1) {
            let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            assert!(cols[3] + cols[4] <= 1.0 + 1e-9);
        }
    }
}
