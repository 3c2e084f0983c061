use std::path::Path;
use std::process::{Command, Output};

const ONELEG: &str = include_str!("../../core/scenarios/oneleg.cfg");

fn aghf(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aghf"))
        .args(args)
        .env("AGHF_OUTPUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

/// The one-leg scenario with a cheap, loose setup.
fn quick_cfg(extra_replace: &[(&str, &str)]) -> String {
    let mut text = ONELEG
        .replace("lambda = 1e7", "lambda = 1e4")
        .replace("continuation = 1e4 1e5 1e6", "continuation =")
        .replace("n_t = 201", "n_t = 101");
    for (a, b) in extra_replace {
        text = text.replace(a, b);
    }
    text
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn oneleg_plan_passes_and_audit_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = aghf(&["plan", "oneleg"], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["x_star.csv", "x_tilde.csv", "u.csv", "convergence.csv", "audit.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let header = std::fs::read_to_string(out.join("x_tilde.csv")).unwrap();
    assert!(header.starts_with("t,px,py,theta,vx,vy,omega,fx1,fy1,px1,py1,ux1,uy1,vx1,vy1\n"));

    let report = out.join("audit_again.json");
    let o = aghf(
        &["audit", out.join("x_tilde.csv").to_str().unwrap(), "oneleg", "--out", report.to_str().unwrap()],
        &out,
    );
    assert_eq!(code(&o), 0);
    let first = std::fs::read(out.join("audit.json")).unwrap();
    assert_eq!(first, std::fs::read(&report).unwrap());
    assert_eq!(first, o.stdout);

    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    for key in ["\"timings_s\"", "\"solve\"", "\"integrate\"", "\"audit\"", "\"versions\"", "\"convergence\"", "euclidean"] {
        assert!(manifest.contains(key), "manifest lacks {key}");
    }

    // a force spike in the middle of the first flight must be caught
    let text = std::fs::read_to_string(out.join("x_tilde.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = lines.iter().position(|l| l.starts_with("0.43,")).expect("row at t = 0.43");
    let mut cells: Vec<String> = lines[row].split(',').map(String::from).collect();
    cells[8] = "40".into();
    lines[row] = cells.join(",");
    let spiked = dir.path().join("spiked.csv");
    std::fs::write(&spiked, lines.join("\n") + "\n").unwrap();
    let o = aghf(&["audit", spiked.to_str().unwrap(), "oneleg"], &out);
    assert_eq!(code(&o), 4);
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let f2 = json["constraints"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["id"] == "F2_1")
        .expect("F2_1 entry");
    assert_eq!(f2["pass"], false);
    assert!(f2["max_violation"].as_f64().unwrap() > 30.0);
}

#[test]
fn config_errors_exit_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad: String = quick_cfg(&[])
        .lines()
        .map(|l| if l.starts_with("x_fin") { "x_fin = 1.5 0.75 0\n".to_string() } else { format!("{l}\n") })
        .collect();
    let cfg = write_cfg(dir.path(), "bad.cfg", &bad);
    let o = aghf(&["plan", &cfg], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("x_fin"));

    let cfg = write_cfg(dir.path(), "unknown.cfg", &(quick_cfg(&[]) + "speed = 3\n"));
    let o = aghf(&["plan", &cfg], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("speed"));

    assert_eq!(code(&aghf(&["plan", "no/such/file.cfg"], dir.path())), 2);
}

#[test]
fn audit_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(code(&aghf(&["audit", empty.to_str().unwrap(), "oneleg"], dir.path())), 2);

    let wrong = dir.path().join("wrong.csv");
    std::fs::write(&wrong, "t,a,b\n0,1,2\n").unwrap();
    let o = aghf(&["audit", wrong.to_str().unwrap(), "oneleg"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema"));
}

#[test]
fn step_budget_exhaustion_exits_3_with_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "short.cfg", &quick_cfg(&[("max_steps = 4000", "max_steps = 3")]));
    let out = dir.path().join("run");
    let o = aghf(&["plan", &cfg], &out);
    assert_eq!(code(&o), 3);
    assert!(out.join("manifest.json").exists());
    assert!(out.join("audit.json").exists());
}

#[test]
fn weak_penalty_fails_the_audit_with_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "weak.cfg", &quick_cfg(&[("lambda = 1e4", "lambda = 10")]));
    let out = dir.path().join("run");
    let o = aghf(&["plan", &cfg], &out);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"exit_code\": 4"));
}

#[test]
fn sweep_rows_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "q.cfg", &quick_cfg(&[]));
    let out = dir.path().join("run");
    let o = aghf(&["sweep", &cfg, "--lambdas", "1e4", "1e4", "--checkpoints", "0", "1"], &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("sweep").join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "lambda,s,planning_error,energy,status");
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[1], rows[3]);
    assert_eq!(rows[2], rows[4]);
    // the untouched initial curve is far from admissible
    let e0: f64 = rows[1].split(',').nth(2).unwrap().parse().unwrap();
    assert!(e0 > 1.0);
    assert!(out.join("sweep").join("manifest.json").exists());
    assert!(out.join("sweep").join("cells").join("cell_001.csv").exists());

    assert_eq!(code(&aghf(&["sweep", &cfg, "--lambdas", "1e4", "--checkpoints", "0"], &out)), 2);
}
