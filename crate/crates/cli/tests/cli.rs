use std::path::Path;
use std::process::{Command, Output};

fn crane(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crane")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Default config with a single cone revolution, to keep the runs short.
fn short_config(dir: &Path) -> String {
    let text = stdout(&crane(&["config"]));
    let text = text.replace("revolutions = 2", "revolutions = 1");
    assert!(text.contains("revolutions = 1"));
    let path = dir.join("crane.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn track_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path());
    let run = |out: &str| {
        let out = dir.path().join(out);
        let o = crane(&["track", "--mode", "closed", "--seed", "3", "--config", &cfg, "--out", out.to_str().unwrap()]);
        let text = stdout(&o);
        assert!(text.contains("mm"), "{text}");
        for ext in ["csv", "svg"] {
            assert!(out.join(format!("track_closed_loop_seed3.{ext}")).exists(), "{ext} missing");
        }
        assert!(out.join("track_closed_loop_seed3_summary.txt").exists());
        std::fs::read(out.join("track_closed_loop_seed3.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn insert_reports_cycles_and_stalls() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let text = stdout(&crane(&["insert", "--depth", "150", "--out", out]));
    assert!(text.contains("reached 150.0 mm in 3 cycles"), "{text}");
    assert!(dir.path().join("insertion.csv").exists());

    let o = crane(&["insert", "--depth", "150", "--resistance", "19", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("stalled at 0.0 mm"));
}

#[test]
fn calibrate_and_register_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    stdout(&crane(&["calibrate", "--seed", "2", "--out", out]));
    let csv = std::fs::read_to_string(dir.path().join("coupling_seed2.csv")).unwrap();
    assert!(crane_core::transmission::CouplingMatrix::from_csv(&csv).is_ok());
    let text = stdout(&crane(&["register", "--seed", "2", "--out", out]));
    assert!(text.contains("rms residual"));
    assert!(crane_core::estimation::Registration::load(&dir.path().join("registration_seed2.toml")).is_ok());
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[plant]\nmotor_bandwidth = \"fast\"\n").unwrap();
    let o = crane(&["track", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.toml"));
}
