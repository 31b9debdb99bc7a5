use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use calabi_core::io::csv_to_columns;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calabi-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn evaluate_round_cp1_gives_class_constant() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "evaluate",
            "--geometry",
            "cp1",
            "--f",
            "id",
            "--h",
            "const:1",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(dir.path().join("evaluate.json")).unwrap();
    let s_line = report
        .lines()
        .find(|l| l.contains("\"functional\""))
        .unwrap();
    let value: f64 = s_line
        .split(':')
        .nth(1)
        .unwrap()
        .trim()
        .trim_end_matches(',')
        .parse()
        .unwrap();
    assert!(
        (value - 8.0 * std::f64::consts::PI).abs() < 1e-9,
        "S = {value}"
    );
    assert!(report.contains("\"is_critical\": true"));
    let (headers, cols) =
        csv_to_columns(&fs::read_to_string(dir.path().join("psi.csv")).unwrap()).unwrap();
    assert_eq!(headers, ["x", "psi_re", "psi_im", "s"]);
    assert_eq!(cols[0].len(), 129);
}

#[test]
fn malformed_function_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["evaluate", "--h", "pow:"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--h"));
    let o = run(&["evaluate", "--h", "sum(id"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn bad_config_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "geometry = cp1\ngrid.size = 10\n").unwrap();
    let o = run(&["evaluate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));
    let o = run(&["frobnicate"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# bad h, overridden below\nfunctional.h = pow:\n").unwrap();
    let o = run(&["evaluate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    fs::write(&cfg, "functional.h = exp\n").unwrap();
    let o = run(
        &[
            "evaluate",
            "--config",
            cfg.to_str().unwrap(),
            "--h",
            "const:1",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let report = fs::read_to_string(dir.path().join("evaluate.json")).unwrap();
    assert!(report.contains("\"h\": \"const:1\""));
}

#[test]
fn solve_recovers_round_profile() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--f", "id", "--h", "const:1"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (_, cols) =
        csv_to_columns(&fs::read_to_string(dir.path().join("profile.csv")).unwrap()).unwrap();
    let err = cols[0]
        .iter()
        .zip(&cols[1])
        .map(|(x, t)| (t - (1.0 - x * x)).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-8, "sup error {err}");
    for name in ["solve.json", "profile.json", "psi.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn solved_profile_can_be_reloaded() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "solve",
            "--f",
            "exp",
            "--h",
            "id",
            "--target",
            "25.132741228718345",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let src = format!("file:{}", dir.path().join("profile.json").display());
    let o = run(
        &[
            "evaluate",
            "--f",
            "exp",
            "--h",
            "id",
            "--target",
            "25.132741228718345",
            "--profile",
            &src,
        ],
        &dir.path().join("eval"),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(dir.path().join("eval/evaluate.json")).unwrap();
    assert!(report.contains("\"is_critical\": true"));
}

#[test]
fn missing_profile_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["evaluate", "--profile", "file:/nonexistent/profile.csv"],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn iterate_stops_with_zero_field_at_step_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["iterate", "--f", "id", "--h", "const:1"], dir.path());
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("iterate.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("0,"));
    assert_eq!(rows[0].split(',').nth(3), Some("zero_field"));
}

#[test]
fn invariance_with_no_samples_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["invariance", "--samples", "0"], dir.path());
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("invariance.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn invariance_spread_is_small() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "invariance",
            "--h",
            "pow:2",
            "--samples",
            "50",
            "--seed",
            "3",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let (_, cols) = csv_to_columns(
        &fs::read_to_string(dir.path().join("invariance.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
            .collect::<String>(),
    )
    .unwrap();
    for col in &cols[1..4] {
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo < 1e-8);
    }
    assert!(cols[4].iter().all(|f| f.abs() < 1e-8));
}

#[test]
fn sweep_records_failures_in_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "sweep",
            "--sweep-f",
            "exp;pow:3",
            "--sweep-h",
            "const:1;id;exp",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("f,h,alpha,beta,defect_affine,defect_operator,status,flagged")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    let order: Vec<(&str, &str)> = rows.iter().map(|r| (r[0], r[1])).collect();
    assert_eq!(
        order,
        [
            ("exp", "const:1"),
            ("exp", "id"),
            ("exp", "exp"),
            ("pow:3", "const:1"),
            ("pow:3", "id"),
            ("pow:3", "exp")
        ]
    );
    // φ = x vanishes inside the interval, so h = id cannot be inverted there
    assert!(rows[1][6].starts_with("failed"));
    assert_eq!(rows[2][6], "critical");
    assert_eq!(rows[2][7], "true");
    assert_eq!(rows[0][7], "false");
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["invariance", "--samples", "8", "--seed", "11", "--h", "exp"],
        &[
            "evaluate",
            "--profile",
            "random:5:0.3",
            "--f",
            "exp",
            "--h",
            "id",
            "--target",
            "20",
        ],
        &[
            "iterate",
            "--f",
            "exp",
            "--h",
            "id",
            "--target",
            "25",
            "--max-steps",
            "3",
        ],
        &[
            "sweep",
            "--sweep-f",
            "exp;pow:3",
            "--sweep-h",
            "const:1;exp",
        ],
    ];
    for args in cases {
        assert_eq!(code(&run(args, a.path())), 0, "{args:?}");
        let mut seq = args.to_vec();
        seq.push("--sequential");
        assert_eq!(code(&run(&seq, b.path())), 0, "{args:?}");
    }
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 8);
    for name in names {
        let x = fs::read(a.path().join(&name)).unwrap();
        let y = fs::read(b.path().join(&name)).unwrap();
        assert!(x == y, "{name:?} differs");
    }
}
