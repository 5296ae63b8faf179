use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn noisespec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noisespec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn bandwidth_on_cpmg_family_reports_lcm_period_and_pi_over_tau_limit() {
    let dir = tempfile::tempdir().unwrap();
    let o = noisespec(&["bandwidth", "alvarez-suter", "--out", &out_arg(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    // 8 tau / lcm(1..8) = tau / 105
    assert!(text.contains("= 0.009524 tau"), "{text}");
    assert!(text.contains("= 1.0000 pi/tau"), "{text}");
    assert!(text.contains("flagged harmonics: 9..=24"), "{text}");
    let csv = fs::read_to_string(dir.path().join("bandwidth.csv")).unwrap();
    assert!(csv.starts_with("label,symmetric,delta_t_grid"));
}

#[test]
fn missing_tau_is_a_validation_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[timing]\ndelta = \"1 us\"\nrepetitions = 4\n").unwrap();
    let o = noisespec(&["design", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("timing.tau"), "{}", stderr(&o));
}

#[test]
fn unknown_preset_and_bad_override_are_validation_errors() {
    assert_eq!(noisespec(&["design", "fig9"]).status.code(), Some(2));
    let o = noisespec(&["design", "fig1", "--set", "timing.tau=12"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("timing.tau"));
}

#[test]
fn underdetermined_inversion_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = noisespec(&["reconstruct", "alvarez-suter", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn pipeline_is_byte_identical_for_the_same_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = noisespec(&["pipeline", "fig4", "--out", &out_arg(d.path())]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut n = 0;
    for entry in fs::read_dir(a.path()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "csv") {
            let other = b.path().join(p.file_name().unwrap());
            assert_eq!(fs::read(&p).unwrap(), fs::read(other).unwrap(), "{}", p.display());
            n += 1;
        }
    }
    assert!(n >= 7);
    let summary = fs::read_to_string(a.path().join("summary.txt")).unwrap();
    assert!(summary.contains("[predict]") && summary.contains("J3"));
}

#[test]
fn designed_sequences_and_observables_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = noisespec(&["reconstruct", "fig1", "--out", &out_arg(&first)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = noisespec(&["design", "fig1", "--out", &out_arg(&first)]);
    assert!(o.status.success(), "{}", stderr(&o));

    // a config that reuses the designed set through the description format
    let cfg = dir.path().join("reuse.toml");
    fs::write(&cfg, "preset = \"fig1\"\n[sequences]\nfile = \"first/sequences.txt\"\n").unwrap();
    let second = dir.path().join("second");
    let obs = first.join("observables.csv");
    let o = noisespec(&[
        "reconstruct",
        "--config",
        cfg.to_str().unwrap(),
        "--observables",
        obs.to_str().unwrap(),
        "--out",
        &out_arg(&second),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(first.join("reconstruction.csv")).unwrap(),
        fs::read(second.join("reconstruction.csv")).unwrap()
    );

    let o = noisespec(&[
        "predict",
        "--config",
        cfg.to_str().unwrap(),
        "--reconstruction",
        second.join("reconstruction.csv").to_str().unwrap(),
        "--out",
        &out_arg(&second),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pred = fs::read_to_string(second.join("prediction.csv")).unwrap();
    assert!(pred.starts_with("t,chi,phi,chi_gaussian"));
    assert_eq!(pred.lines().count(), 42);
}

#[test]
fn switching_functions_are_exported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("list.toml");
    fs::write(
        &cfg,
        "[timing]\ndelta = \"1 us\"\ntau = \"2 us\"\nq = 16\nrepetitions = 5\n\
         [sequences]\nlist = [\"cpmg, 16, (16,1)\", \"mixed, 16, (8,0) (8,2)\"]\n",
    )
    .unwrap();
    let o = noisespec(&[
        "design",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("switching/cpmg.csv")).unwrap();
    assert!(csv.lines().count() > 2);
    let seqs = fs::read_to_string(dir.path().join("sequences.txt")).unwrap();
    assert!(seqs.contains("mixed, 16, (8,0) (8,2)"), "{seqs}");
}
