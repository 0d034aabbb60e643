use std::fs;
use std::path::Path;

use freesurf::cli::main_with;

fn run(args: &[&str]) -> i32 {
    main_with(std::iter::once("freesurf").chain(args.iter().copied()).map(String::from))
}

fn status(dir: &Path) -> toml::Table {
    fs::read_to_string(dir.join("status.toml")).unwrap().parse().unwrap()
}

#[test]
fn equilibrium_run_has_zero_energy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("eq.toml");
    fs::write(&cfg, "[initial]\npreset = \"equilibrium\"\n[scheme]\nt_final = 0.1\n").unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    assert_eq!(status(&out)["status"].as_str(), Some("ok"));
    let csv = fs::read_to_string(out.join("series.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let total = header.iter().position(|c| *c == "total").unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(rows.len() >= 2);
    for r in rows {
        assert_eq!(r.split(',').nth(total).unwrap().parse::<f64>().unwrap(), 0.0);
    }
    let eff = fs::read_to_string(out.join("effective_config.toml")).unwrap();
    assert!(eff.contains("preset = \"equilibrium\"") && eff.contains("n_z = 48"));
}

#[test]
fn invalid_config_records_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    let code = run(&["check", "--out", out.to_str().unwrap(), "--override", "physics.eps=-1"]);
    assert_ne!(code, 0);
    let s = status(&out);
    assert_eq!(s["status"].as_str(), Some("error"));
    assert_eq!(s["class"].as_str(), Some("config"));
    assert!(s["message"].as_str().unwrap().contains("eps"));
}

#[test]
fn sweep_writes_member_directories_and_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sweep.toml");
    fs::write(
        &cfg,
        "[grid]\nn_y = 16\nn_z = 24\n[physics]\nsigma = 0.1\n[scheme]\nt_final = 0.3\n\
         [initial]\npreset = \"standing_wave\"\na = 0.01\nk = 1\n[sweep]\neps_list = [0.01, 0.001, 0.0]\n",
    )
    .unwrap();
    let out = tmp.path().join("sw");
    assert_eq!(run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    for e in ["eps_1e-2", "eps_1e-3", "eps_0e0"] {
        assert!(out.join(e).join("series.csv").exists(), "{e}");
        assert!(out.join(e).join("final.fsck").exists(), "{e}");
    }
    let table = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn audit_and_check_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("au");
    let o = out.to_str().unwrap();
    assert_eq!(run(&["audit", "--out", o, "--seed", "3", "--override", "grid.n_y=16", "--override", "grid.n_z=16"]), 0);
    let audit = fs::read_to_string(out.join("audit.csv")).unwrap();
    for name in ["korn", "dn_coercivity", "trace", "embedding", "commutator", "extension"] {
        assert!(audit.contains(name), "{name}");
    }
    let preset = "initial.preset=sheared_layer";
    assert_eq!(run(&["check", "--out", o, "--override", preset, "--override", "physics.eps=0.01"]), 0);
    assert!(fs::read_to_string(out.join("check.csv")).unwrap().contains("compatibility_sup"));
}
