use std::path::Path;
use std::process::Command as Process;

use proptest::prelude::*;
use subheat_cli::{parse_config, run, Command, ConfigError};

fn subheat(args: &[&str]) -> (i32, String, String) {
    let out = Process::new(env!("CARGO_BIN_EXE_subheat")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_cfg(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    for (text, needle) in [
        ("alpha = 0.5\n", "missing [grid]"),
        ("[grid]\n[fractional] alpha=1.5\n", "α ∈ (0,1)"),
        ("[grid] M=64\n[fractional] alpha=0.2 gamma=0.6\n", "min(2α, 2αβ)"),
        ("[grid] colour=blue\n", "unknown key"),
    ] {
        let cfg = write_cfg(dir.path(), text);
        let (code, _, err) = subheat(&["equiv", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code, 2, "{text}");
        assert!(err.contains(needle), "{err}");
    }
    let (code, _, _) = subheat(&["verify", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(code, 2);
    let (code, _, _) = subheat(&["frobnicate", "--config", "x"]);
    assert_eq!(code, 2);
}

#[test]
fn verify_writes_the_certificate_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[grid] M=128 scheme=spectral\n[fractional] N=0,1\n[run] ids=E1,E9,E12.gauss\n");
    let out = dir.path().join("out");
    let (code, stdout, _) = subheat(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    let text = std::fs::read_to_string(out.join("certificates.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# config: ") && lines[0].contains("grid.M=128") && lines[0].contains("run.command=verify"));
    assert_eq!(lines[1], "id,alpha,beta,N,delta,C_meas,argmax_x,argmax_y,argmax_t,refine_ratio,pass");
    assert_eq!(lines.len(), 2 + 3 * 2);
    assert!(lines[2..].iter().all(|l| l.ends_with(",true") && l.split(',').count() == 11));
}

#[test]
fn kernels_writes_one_table_per_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[grid] M=32 L=4\n[run] times=0.5,2\n");
    let out = dir.path().join("k");
    let (code, _, err) = subheat(&["kernels", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(code, 0, "{err}");
    for t in ["0.5", "2"] {
        for kind in ["heat", "frac"] {
            let text = std::fs::read_to_string(out.join(format!("{kind}_t{t}.csv"))).unwrap();
            let mut lines = text.lines();
            assert!(lines.next().unwrap().contains("run.seed=3"));
            assert_eq!(lines.next().unwrap(), "x_index,y_index,value");
            assert_eq!(lines.count(), 32 * 32);
        }
        assert!(out.join(format!("profile_t{t}.csv")).exists());
    }
}

#[test]
fn library_run_reports_failures_without_panicking() {
    let dir = tempfile::tempdir().unwrap();
    // δ' is pinned to 1 - n/q for this estimate
    let cfg = parse_config("[grid] M=64\n[fractional] delta_prime=0.1\n[run] ids=E7.a").unwrap();
    let cfg = cfg.with_overrides(Command::Verify, None, Some(dir.path().to_path_buf())).unwrap();
    let err = run(&cfg).unwrap_err().to_string();
    assert!(err.starts_with("error in certificate E7.a"), "{err}");
}

#[test]
fn equiv_override_rechecks_gamma() {
    let cfg = parse_config("[grid]\n[fractional] alpha=0.2 gamma=0.6").unwrap();
    assert!(matches!(cfg.with_overrides(Command::Equiv, None, None), Err(ConfigError::Value { .. })));
    let cfg = parse_config("[grid]\n[fractional] alpha=0.2 gamma=0.6").unwrap();
    assert!(cfg.with_overrides(Command::Spaces, None, None).is_ok());
}

proptest! {
    #[test]
    fn alpha_range_is_enforced(alpha in -2.0f64..3.0) {
        let r = parse_config(&format!("[grid]\n[fractional] alpha={alpha}"));
        prop_assert_eq!(r.is_ok(), alpha > 0.0 && alpha < 1.0);
        if let Ok(c) = r {
            prop_assert_eq!(c.fractional.alpha, alpha);
        }
    }

    #[test]
    fn layout_does_not_change_the_config(seps in proptest::collection::vec(prop_oneof![Just(" "), Just("\n"), Just("  \t")], 6)) {
        let tokens = ["n=1", "M=96", "bc=periodic", "[fractional]", "beta=0.7", "N=0,2"];
        let mut text = String::from("[grid]");
        for (t, s) in tokens.iter().zip(&seps) {
            text.push_str(s);
            text.push_str(t);
        }
        let a = parse_config(&text).unwrap();
        let b = parse_config("[grid]\nn=1 M=96 bc=periodic\n[fractional]\nbeta=0.7 N=0,2").unwrap();
        prop_assert_eq!(a.summary(), b.summary());
    }
}

#[test]
fn selftest_on_defaults_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "[grid]\n");
    let out = dir.path().join("s");
    let (code, stdout, err) = subheat(&["selftest", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}{err}");
    let text = std::fs::read_to_string(out.join("selftest.csv")).unwrap();
    assert!(text.lines().nth(1) == Some("check,value,bound,pass"));
    assert!(text.lines().skip(2).all(|l| l.ends_with(",true")));
}
