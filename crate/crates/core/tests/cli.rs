use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_porflow");

fn meshes() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("meshes")
}

fn run(args: &[&str], output_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("PORFLOW_OUTPUT_DIR");
    if let Some(dir) = output_dir {
        cmd.env("PORFLOW_OUTPUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn small_config(dir: &Path, extra_solver: &str, dt: &str, t_final: &str) -> PathBuf {
    let text = format!(
        "[mesh]\nunit_square = 4\n[boundary]\ndirichlet = x == 0\n[initial]\np_l = 0\ns_l = 0.3\n\
         [sources]\ninjection = (x > 0.5) * (y < 0.5)\ninjected_liquid_saturation = 1\n\
         [time]\ndt = {dt}\nt_final = {t_final}\n[solver]\n{extra_solver}\n[output]\ndirectory = out\ncadence = 2\n"
    );
    let path = dir.join("run.ini");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "", "0.01", "0.04");
    let out = run(&["simulate", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    for f in ["reports.csv", "summary.txt", "last_state.csv", "state_00000.vtk", "state_00002.csv", "state_00004.vtk"] {
        assert!(o.join(f).is_file(), "{f}");
    }
    assert!(!o.join("state_00001.csv").exists());
    let reports = fs::read_to_string(o.join("reports.csv")).unwrap();
    assert_eq!(reports.lines().count(), 5);
    let summary = fs::read_to_string(o.join("summary.txt")).unwrap();
    assert!(summary.contains("status = ok"));
    assert!(summary.contains("max_principle = pass"));
}

#[test]
fn output_directory_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "", "0.01", "0.01");
    let target = dir.path().join("elsewhere");
    let out = run(&["simulate", cfg.to_str().unwrap()], Some(&target));
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("summary.txt").is_file());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn simulate_is_deterministic() {
    let read_all = |dir: &Path| {
        let mut files: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files.iter().map(|f| (f.file_name().unwrap().to_owned(), fs::read(f).unwrap())).collect::<Vec<_>>()
    };
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "", "0.01", "0.04");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["simulate", cfg.to_str().unwrap()], Some(&a)).status.code(), Some(0));
    assert_eq!(run(&["simulate", cfg.to_str().unwrap()], Some(&b)).status.code(), Some(0));
    assert_eq!(read_all(&a), read_all(&b));
}

#[test]
fn config_and_mesh_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.ini");
    fs::write(&missing, "[mesh]\nfile = nope.txt\n[initial]\np_l = 0\np_g = 1\n[time]\ndt = 0.1\nt_final = 1\n").unwrap();
    let out = run(&["simulate", missing.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));

    let unknown = dir.path().join("unknown.ini");
    fs::write(&unknown, "[mesh]\nunit_square = 2\nsize = 3\n").unwrap();
    assert_eq!(run(&["simulate", unknown.to_str().unwrap()], None).status.code(), Some(1));

    let cfg = small_config(dir.path(), "", "0", "1");
    assert_eq!(run(&["simulate", cfg.to_str().unwrap()], None).status.code(), Some(1));
}

#[test]
fn forced_nonconvergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "halving_depth = 0\nnewton_max_iter = 1", "1000", "1000");
    let out = run(&["simulate", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(dir.path().join("out/summary.txt")).unwrap();
    assert!(summary.starts_with("status = failed"));
}

#[test]
fn check_mesh_reports() {
    let out = run(&["check-mesh", meshes().join("unit_triangle.txt").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("kappa = 2.500000e-1"), "{text}");
    assert!(text.contains("negative_transmissibilities = 0"));

    let out = run(&["check-mesh", meshes().join("obtuse_triangle.txt").to_str().unwrap(), "--lambda", "2"], None);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("negative_transmissibilities = 1"));
    assert!(text.contains("= -7.500000e0"), "{text}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "2 3 1 0\n0 0\n1 0\n").unwrap();
    assert_eq!(run(&["check-mesh", bad.to_str().unwrap()], None).status.code(), Some(1));
    let lambda = run(&["check-mesh", meshes().join("unit_triangle.txt").to_str().unwrap(), "--lambda", "1,2,3"], None);
    assert_eq!(lambda.status.code(), Some(1));
}

fn convergence_csv(problem: &str, levels: &str) -> Vec<Vec<String>> {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("conv.ini");
    fs::write(&cfg, format!("[convergence]\nproblem = {problem}\nbase_n = 2\n[output]\ndirectory = out\n")).unwrap();
    let out = run(&["convergence", cfg.to_str().unwrap(), "--levels", levels], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("out/convergence.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("level,h,L2_error,order"));
    lines.map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn convergence_tables() {
    let linear = convergence_csv("linear", "3");
    assert_eq!(linear.len(), 3);
    for row in &linear {
        assert!(row[2].parse::<f64>().unwrap() <= 1e-10);
    }

    let single = convergence_csv("sin-sin", "1");
    assert_eq!(single.len(), 1);
    assert_eq!(single[0][3], "");

    let smooth = convergence_csv("sin-sin", "4");
    let errors: Vec<f64> = smooth.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
}

#[test]
fn usage_errors() {
    assert_eq!(run(&[], None).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"], None).status.code(), Some(1));
    assert_eq!(run(&["--help"], None).status.code(), Some(0));
}
