use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_merge-bench"))
}

fn small_fixture(dir: &std::path::Path, name: &str, seed: Option<&str>) -> std::process::Output {
    let mut c = bin();
    c.args(["gen-fixture", "--vocab", "32", "--dim", "8", "--inter", "8", "--max-len", "16", "--out"])
        .arg(dir.join(name))
        .env_remove("MERGE_SEED");
    match seed {
        Some(s) => c.args(["--seed", s]),
        None => c.env("MERGE_SEED", "5"),
    };
    c.output().unwrap()
}

#[test]
fn seed_falls_back_to_environment() {
    let d = tempfile::tempdir().unwrap();
    assert!(small_fixture(d.path(), "flag.mrgw", Some("5")).status.success());
    assert!(small_fixture(d.path(), "env.mrgw", None).status.success());
    assert!(small_fixture(d.path(), "other.mrgw", Some("6")).status.success());
    let read = |n: &str| std::fs::read(d.path().join(n)).unwrap();
    assert_eq!(read("flag.mrgw"), read("env.mrgw"));
    assert_ne!(read("flag.mrgw"), read("other.mrgw"));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(bin().arg("bench").output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["frobnicate"]).output().unwrap().status.code(), Some(2));
    let missing = bin().args(["calibrate", "--model"]).arg(d.path().join("none.mrgw")).args(["--out", "x"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(3));
    std::fs::write(d.path().join("junk.mrgw"), b"MRGW junk").unwrap();
    let junk = bin().args(["calibrate", "--model"]).arg(d.path().join("junk.mrgw")).args(["--out", "x"]).output().unwrap();
    assert_eq!(junk.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&junk.stderr).contains("malformed"));
}

#[test]
fn full_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let p = |n: &str| d.path().join(n);
    assert!(small_fixture(d.path(), "m.mrgw", Some("1")).status.success());
    let run = |args: &[&str]| {
        let o = bin().current_dir(d.path()).args(args).env_remove("MERGE_SEED").output().unwrap();
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    run(&["calibrate", "--model", "m.mrgw", "--seed", "2", "--out", "c.mrgw"]);
    let merged = run(&["merge", "--model", "m.mrgw", "--calib", "c.mrgw", "--out", "mm.mrgw"]);
    assert!(merged.contains("self-check max deviation"));
    let again = bin().current_dir(d.path()).args(["merge", "--model", "mm.mrgw", "--calib", "c.mrgw", "--out", "x.mrgw"]).output().unwrap();
    assert_eq!(again.status.code(), Some(3));
    run(&[
        "bench", "--model", "m.mrgw", "--merged", "mm.mrgw", "--variant", "vanilla,er_mm", "--lens", "4,8,16",
        "--reps", "1", "--out", "out", "--ns-per-byte", "1", "--ns-per-round", "1000",
    ]);
    let csv = std::fs::read_to_string(p("out/bench.csv")).unwrap();
    assert!(csv.starts_with("variant,seq_len,category,bytes,rounds,op_count,wall_ns\n"));
    let fit = run(&["scaling-fit", "--input", "out/bench.csv", "--out", "fit.csv"]);
    assert!(fit.contains("Linear"));
    run(&["sweep-noise", "--model", "m.echo.mrgw", "--mse", "0,0.1", "--steps", "4", "--out", "s.csv"]);
    assert_eq!(std::fs::read_to_string(p("s.csv")).unwrap().lines().count(), 5);
}
