use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fedprice(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedprice")).args(args).current_dir(dir).output().unwrap()
}

const FAST_FIG2: &str = "[fig2]\netas = [0.2, 0.4]\n[game]\nn_clients = 10\n";

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = fedprice(&["run", "poa", "--config", "nowhere.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.toml"));
    assert!(!dir.path().join("poa.csv").exists());
}

#[test]
fn unknown_scenario_and_bad_override_fail() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "").unwrap();
    let out = fedprice(&["run", "fig3", "--config", "c.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fig3"));
    let out = fedprice(&["run", "poa", "--config", "c.toml", "--override", "game.colour=1"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), FAST_FIG2).unwrap();
    for name in ["a.csv", "b.csv"] {
        let out = fedprice(&["run", "fig2", "--config", "c.toml", "--seed", "7", "--out", name], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# fedprice-csv v1 fig2"));
    let header = lines.find(|l| !l.starts_with('#')).unwrap();
    assert!(header.starts_with("seed,n_clients,rounds,c,sensitivity,delta,l_smooth,w0_dist,alpha_floor,kind,eta,"));
    assert!(text.lines().any(|l| l.starts_with("7,10,")));
}

#[test]
fn overrides_and_default_output_path() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "").unwrap();
    let out = fedprice(&["run", "poa", "--config", "c.toml", "--override", "poa.floors=[0.1, 0.01]"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("poa.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
    assert!(String::from_utf8_lossy(&out.stdout).contains("gamma"));
}

#[test]
fn trace_has_summary_row() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[game]\nn_clients = 4\nrounds = 3\n").unwrap();
    let out = fedprice(&["run", "trace", "--config", "c.toml", "--out", "t.csv", "--sequential"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "round,client,sigma,price,global_loss");
    assert_eq!(rows.len(), 1 + 3 * 4 + 1);
    assert!(rows.last().unwrap().starts_with("summary,all,"));
}

#[test]
fn unwritable_output_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[poa]\nfloors = [0.1]\n").unwrap();
    let out = fedprice(&["run", "poa", "--config", "c.toml", "--out", "missing/dir/p.csv"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing/dir/p.csv"));
}
