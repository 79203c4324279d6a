use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slotbarter"))
        .args(args)
        .env("FIXTURE_SALT", "pepper")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    fs::write(
        &p,
        "schema_version = 1\nseed = 3\n[placement]\nusers = 100\n[auction]\nlength = 6\n[strategy.exhaustive]\ngrid_steps = 4\n[replicates]\nplacements = 2\n",
    )
    .unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn auction_writes_traces_and_manifest() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path());
    let out = d.path().join("a");
    let o = run(&[
        "auction",
        "--config",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
        "--preset",
        "psica",
    ]);
    assert!(stdout(&o).contains("2 auctions"));
    let trace = fs::read_to_string(out.join("risk_trace.csv")).unwrap();
    assert!(trace.starts_with("cell,bid_index,bidder,site,risk,norm_risk"));
    assert_eq!(trace.lines().count(), 1 + 2 * 6 * 4);
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("psica"));
}

#[test]
fn seed_flag_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path());
    let mut files = Vec::new();
    for (name, seed) in [("x", "9"), ("y", "9"), ("z", "10")] {
        let out = d.path().join(name);
        stdout(&run(&[
            "auction",
            "--config",
            &cfg,
            "--seed",
            seed,
            "--out-dir",
            out.to_str().unwrap(),
        ]));
        files.push(fs::read(out.join("risk_trace.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_ne!(files[0], files[2]);
}

#[test]
fn paired_with_sequence_file_and_constraint() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path());
    let seq = d.path().join("seq.txt");
    fs::write(&seq, "2 3 4 1 2 3\n").unwrap();
    let out = d.path().join("p");
    let text = stdout(&run(&[
        "paired",
        "--config",
        &cfg,
        "--out-dir",
        out.to_str().unwrap(),
        "--sequence-file",
        seq.to_str().unwrap(),
        "--constraint",
        "psi-star",
    ]));
    assert!(text.contains("pairs           2"));
    assert!(out.join("paired_summary.csv").exists());
}

#[test]
fn bad_inputs_fail_cleanly() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path());
    let seq = d.path().join("seq.txt");
    fs::write(&seq, "1 9\n").unwrap();
    let o = run(&["auction", "--config", &cfg, "--sequence-file", seq.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(!run(&["attack", "--preset", "nope"]).status.success());
    let o = run(&["attack", "--config", &cfg, "--sequence-file", seq.to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn attack_reports_costs() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path());
    let out = d.path().join("k");
    let text = stdout(&run(&["attack", "--config", &cfg, "--out-dir", out.to_str().unwrap()]));
    assert!(text.contains("violations      0"));
    for f in ["attack_trace.csv", "attack_steps.csv", "metrics.csv", "manifest.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn bench_writes_csv() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("b");
    let text = stdout(&run(&[
        "bench",
        "--sites",
        "10,100",
        "--reps",
        "3",
        "--out-dir",
        out.to_str().unwrap(),
    ]));
    assert_eq!(text.lines().count(), 3);
    assert!(fs::read_dir(&out).unwrap().count() >= 1);
}

#[test]
fn ingest_fixture() {
    let d = tempfile::tempdir().unwrap();
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/breach10.tsv");
    let eco = d.path().join("eco.txt");
    let reuse = d.path().join("reuse.csv");
    let text = stdout(&run(&[
        "ingest",
        "--input",
        fixture,
        "--salt-env",
        "FIXTURE_SALT",
        "--out",
        eco.to_str().unwrap(),
        "--reuse-out",
        reuse.to_str().unwrap(),
    ]));
    assert!(text.contains("lcc sites   3"));
    assert!(text.contains("hashed      1"));
    assert!(!fs::read_to_string(&eco).unwrap().contains("pepper"));
    assert!(fs::read_to_string(&reuse).unwrap().contains("beta,gamma,1,0,0"));

    // the ingested ecosystem drives an auction directly
    let cfg = d.path().join("eco.toml");
    fs::write(
        &cfg,
        format!(
            "[placement]\necosystem = {:?}\n[auction]\nlength = 3\n",
            eco.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = d.path().join("run");
    stdout(&run(&[
        "auction",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]));
}

#[test]
fn ingest_requires_salt() {
    let o = Command::new(env!("CARGO_BIN_EXE_slotbarter"))
        .args([
            "ingest",
            "--input",
            "x",
            "--salt-env",
            "SURELY_UNSET_VAR",
            "--out",
            "a",
            "--reuse-out",
            "b",
        ])
        .env_remove("SURELY_UNSET_VAR")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("SURELY_UNSET_VAR"));
}
