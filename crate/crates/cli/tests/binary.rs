use std::process::Command;

fn dualaoi(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dualaoi"))
        .args(args)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .unwrap()
}

#[test]
fn analyze_ps_prints_both_forms() {
    let out = dualaoi(&["analyze-ps", "--mu-n", "3", "--mu", "2", "--p", "0.5"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let vals: Vec<f64> = text
        .lines()
        .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(vals.len(), 2);
    assert!((vals[0] - vals[1]).abs() < 1e-9 * vals[0]);
}

#[test]
fn run_writes_csv() {
    let dir = std::env::temp_dir().join(format!("dualaoi-bin-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("fig12.csv");
    let out = dualaoi(&[
        "--out",
        path.to_str().unwrap(),
        "run",
        "../../scenarios/fig12.toml",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = dualaoi_cli::read_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(rows.len(), 9 * 4);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(dualaoi(&["no-such-verb"]).status.code(), Some(1));
    assert_eq!(
        dualaoi(&["analyze-ps", "--mu-n", "3", "--mu", "2", "--p", "1.5"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(dualaoi(&["run", "missing.toml"]).status.code(), Some(1));
}

#[test]
fn unwritable_output_exits_two() {
    let out = dualaoi(&[
        "--out",
        "/nonexistent-dir/x.csv",
        "run",
        "../../scenarios/fig12.toml",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    assert_eq!(dualaoi(&["--help"]).status.code(), Some(0));
}
