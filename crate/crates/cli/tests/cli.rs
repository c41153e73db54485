use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bribery"))
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str], out_dir: &Path) -> Output {
    bin()
        .args(args)
        .env("BRIBERY_OUT_DIR", out_dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_sc_prints_closed_form_menu() {
    let dir = tempfile::tempdir().unwrap();
    let params = root().join("configs/p0.toml");
    let o = run(
        &[
            "solve",
            "--scenario",
            "SC",
            "--params",
            params.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let s = stdout(&o);
    for line in ["t_n=70", "f_n=10", "t_p0=5", "f_p0=270", "bribe_p=260"] {
        assert!(s.lines().any(|l| l == line), "missing {line} in\n{s}");
    }
}

#[test]
fn oracle_check_passes_on_reference_point() {
    let dir = tempfile::tempdir().unwrap();
    let params = root().join("configs/p0.toml");
    let o = run(
        &[
            "oracle-check",
            "--params",
            params.to_str().unwrap(),
            "--steps",
            "40",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).matches(": PASS").count(), 3);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    for (path, seed) in [(&a, "11"), (&b, "11"), (&c, "12")] {
        let o = run(
            &[
                "simulate",
                "--scenario",
                "SwC",
                "--seed",
                seed,
                "--firms",
                "60",
                "--output",
                path.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b, c) = (
        std::fs::read(a).unwrap(),
        std::fs::read(b).unwrap(),
        std::fs::read(c).unwrap(),
    );
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn estimate_then_identify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let panel = dir.path().join("panel.csv");
    let o = run(
        &[
            "simulate",
            "--scenario",
            "NS",
            "--seed",
            "3",
            "--firms",
            "200",
            "--output",
            panel.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let o = run(
        &["estimate", "--input", panel.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let coeffs = dir.path().join("panel_coefficients.csv");
    assert!(coeffs.is_file());
    assert!(dir.path().join("panel_report.txt").is_file());
    let o = run(
        &[
            "identify",
            "--coeffs",
            coeffs.to_str().unwrap(),
            "--alpha",
            "0.01",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.starts_with("verdict: "), "{s}");
    let one_ns = s.lines().find(|l| l.starts_with("one_ns")).unwrap();
    assert!(one_ns.contains(">0"), "{one_ns}");
}

#[test]
fn identify_example_table_selects_swc() {
    let dir = tempfile::tempdir().unwrap();
    let fixture =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/coefficients_swc_example.csv");
    let o = run(
        &["identify", "--coeffs", fixture.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.starts_with("verdict: SwC"), "{s}");
    assert!(s.contains("extortionary bribery:     present"));
    assert!(s.contains("non-extortionary bribery: present"));
}

#[test]
fn roundtrip_writes_per_replication_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "roundtrip",
            "--scenario",
            "SC",
            "--seed",
            "5",
            "--reps",
            "3",
            "--firms",
            "150",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("roundtrip_SC_5.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn missing_input_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["identify", "--coeffs", "does-not-exist.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));
}

#[test]
fn malformed_panel_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "firm_id,year\n1,2012\n").unwrap();
    let o = run(&["estimate", "--input", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
}
