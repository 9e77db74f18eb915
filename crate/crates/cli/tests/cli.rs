use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "[grid]\nn_modes = 8\n[solver]\nnu = 0.05\ndt = 0.01\nforcing_k = [1, 2]\n\
[assimilation]\nh_substeps = 5\nsteps = 8\n[init]\nt_spin = 1.0\nspin_window = 1\n\
[outputs]\ntraced_modes = [[1, 2]]\n";

fn nsda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsda")).args(args).output().unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn assimilate_writes_deterministic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = nsda(&["assimilate", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let csv = std::fs::read_to_string(a.join("series.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(b.join("series.csv")).unwrap());
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "j,t,err_h0,err_h1,lower,upper,energy,mode_1_2_re_hat,mode_1_2_im_hat,mode_1_2_re_true,mode_1_2_im_true,mode_1_2_re_obs,mode_1_2_im_obs"
    );
    assert_eq!(lines.count(), 9);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["noise"]["seed"], 3);
    assert_eq!(json["config"]["grid"]["n_modes"], 8);
    assert!(json["summary"]["plateau_median"].is_number());
}

#[test]
fn twin_and_sweep_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("twin");
    let o = nsda(&["twin", "--config", &cfg, "--out", out.to_str().unwrap(), "--second-seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains(",energy,twin_err,"));

    let out = dir.path().join("sweep");
    let o = nsda(&[
        "sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--axis", "eta", "--values", "0.04,0.4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("index,eta,seed,status"));
    assert!(rows[1].starts_with("0,") && rows[1].contains(",ok,"));
}

#[test]
fn simulate_then_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("sim");
    let o = nsda(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let obs = std::fs::read_to_string(out.join("observations.obsseq")).unwrap();
    assert!(obs.starts_with("OBSSEQ v1"));
    let snap = out.join("truth_final.specfield");
    assert!(std::fs::read_to_string(&snap).unwrap().starts_with("SPECFIELD v1 n_modes=8"));

    let o = nsda(&["spectrum", snap.to_str().unwrap()]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.lines().next().unwrap(), "shell,energy");
    let total: f64 = table.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!(total > 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    let code = |args: &[&str]| nsda(args).status.code().unwrap();
    assert_eq!(code(&["assimilate", "--config", &cfg, "--out", out, "--set", "filter.eta=-1"]), 2);
    assert_eq!(code(&["assimilate", "--config", &cfg, "--out", out, "--set", "nonsense"]), 2);
    assert_eq!(code(&["assimilate", "--config", "/nonexistent.toml", "--out", out]), 2);
    assert_eq!(code(&["sweep", "--config", &cfg, "--out", out, "--axis", "sigma", "--values", "1"]), 2);
    let o = nsda(&["assimilate", "--config", &cfg, "--out", out, "--set", "solver.forcing_amplitude=1e9"]);
    assert_eq!(o.status.code().unwrap(), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("step") && err.contains("forcing_amplitude"), "{err}");
}

#[test]
fn validate_quick_passes() {
    let o = nsda(&["validate", "--quick"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code().unwrap(), 0, "{text}");
    assert!(text.contains("PASS dealiasing") && text.contains("PASS etd4rk_order"));
}
