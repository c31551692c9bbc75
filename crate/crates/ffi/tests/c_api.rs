use std::ffi::{c_char, CString};
use std::fs;
use std::path::{Path, PathBuf};
use std::ptr;

use porflow_ffi::*;

fn core_path(rel: &str) -> CString {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core").join(rel);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { porflow_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn mesh_handle_reports_geometry() {
    unsafe {
        let mut mesh = ptr::null_mut();
        assert_eq!(porflow_mesh_load(core_path("meshes/unit_triangle.txt").as_ptr(), &mut mesh), PorflowStatus::Ok);
        let mut n = 0usize;
        assert_eq!(porflow_mesh_num_sides(mesh, &mut n), PorflowStatus::Ok);
        assert_eq!(n, 3);
        let (mut kappa, mut h) = (0.0, 0.0);
        assert_eq!(porflow_mesh_regularity(mesh, &mut kappa, &mut h), PorflowStatus::Ok);
        assert!((kappa - 0.25).abs() < 1e-14);
        assert!((h - 2f64.sqrt()).abs() < 1e-14);

        let mut stiffness = ptr::null_mut();
        let lambda = [1.0];
        assert_eq!(porflow_stiffness_assemble(mesh, lambda.as_ptr(), 1, &mut stiffness), PorflowStatus::Ok);
        let mut diag = [0.0; 3];
        for (d, v) in diag.iter_mut().enumerate() {
            assert_eq!(porflow_stiffness_entry(stiffness, d, d, v), PorflowStatus::Ok);
        }
        diag.sort_by(f64::total_cmp);
        assert_eq!(diag, [2.0, 2.0, 4.0]);
        let mut v = 0.0;
        assert_eq!(porflow_stiffness_entry(stiffness, 0, 3, &mut v), PorflowStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));
        assert_eq!(porflow_stiffness_assemble(mesh, lambda.as_ptr(), 3, &mut stiffness), PorflowStatus::InvalidArgument);
        porflow_stiffness_free(stiffness);
        porflow_mesh_free(mesh);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut mesh = ptr::null_mut();
        let missing = CString::new("/nonexistent/mesh.txt").unwrap();
        assert_eq!(porflow_mesh_load(missing.as_ptr(), &mut mesh), PorflowStatus::Mesh);
        assert!(mesh.is_null());
        assert!(last_error().contains("nonexistent"));
        assert_eq!(porflow_mesh_load(ptr::null(), &mut mesh), PorflowStatus::NullPointer);
        let mut n = 0usize;
        assert_eq!(porflow_mesh_num_sides(ptr::null(), &mut n), PorflowStatus::NullPointer);
        // a truncated copy is still terminated and reports the full length
        let mut small = [1 as c_char; 4];
        let full = porflow_last_error(small.as_mut_ptr(), small.len());
        assert!(full > 3);
        assert_eq!(small[3], 0);
        porflow_mesh_free(ptr::null_mut());
    }
}

fn write_config(dir: &Path) -> PathBuf {
    let text = "[mesh]\nunit_square = 4\n[boundary]\ndirichlet = x == 0\n[initial]\np_l = 0\ns_l = 0.3\n\
                [sources]\ninjection = (x > 0.5) * (y < 0.5)\ninjected_liquid_saturation = 1\n\
                [time]\ndt = 0.01\nt_final = 0.03\n";
    let path = dir.join("sim.ini");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulation_steps_to_final_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CString::new(write_config(dir.path()).to_str().unwrap()).unwrap();
    unsafe {
        let mut sim = ptr::null_mut();
        assert_eq!(porflow_simulation_from_config(cfg.as_ptr(), &mut sim), PorflowStatus::Ok);
        let mut n = 0usize;
        assert_eq!(porflow_simulation_len(sim, &mut n), PorflowStatus::Ok);
        assert_eq!(n, 56);
        assert_eq!(porflow_simulation_step(sim), PorflowStatus::Ok);
        let (mut step, mut time) = (0usize, 0.0);
        assert_eq!(porflow_simulation_progress(sim, &mut step, &mut time), PorflowStatus::Ok);
        assert_eq!((step, time), (1, 0.01));
        assert_eq!(porflow_simulation_run(sim), PorflowStatus::Ok);
        assert_eq!(porflow_simulation_progress(sim, &mut step, &mut time), PorflowStatus::Ok);
        assert_eq!(step, 3);
        assert_eq!(porflow_simulation_step(sim), PorflowStatus::Finished);

        let mut s_l = vec![0.0; n];
        assert_eq!(porflow_simulation_copy_state(sim, ptr::null_mut(), ptr::null_mut(), s_l.as_mut_ptr(), n), PorflowStatus::Ok);
        assert!(s_l.iter().all(|&s| (0.0..=1.0).contains(&s)));
        assert!(s_l.iter().any(|&s| s > 0.3 + 1e-6), "injection should raise the saturation");
        assert_eq!(
            porflow_simulation_copy_state(sim, s_l.as_mut_ptr(), ptr::null_mut(), ptr::null_mut(), n - 1),
            PorflowStatus::BufferTooSmall
        );
        let mut mass = [0.0; 2];
        assert_eq!(porflow_simulation_mass(sim, mass.as_mut_ptr()), PorflowStatus::Ok);
        assert!(mass.iter().all(|m| *m > 0.0));
        porflow_simulation_free(sim);
    }
}

#[test]
fn bad_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ini");
    fs::write(&path, "[mesh]\nunit_square = 2\n").unwrap();
    let cfg = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut sim = ptr::null_mut();
        assert_eq!(porflow_simulation_from_config(cfg.as_ptr(), &mut sim), PorflowStatus::Config);
        assert!(sim.is_null());
        assert!(last_error().contains("missing"));
    }
}

#[test]
fn header_declares_every_export() {
    let header = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/porflow.h")).unwrap();
    let source = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.trim().strip_prefix("pub unsafe extern \"C\" fn "))
        .map(|l| l.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 14);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(status) = std::process::Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(status.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    fs::write(
        &src,
        "#include \"porflow.h\"\n\
         int use(const char *path) {\n\
           PorflowMesh *mesh = NULL;\n\
           size_t n = 0;\n\
           if (porflow_mesh_load(path, &mesh) != PORFLOW_STATUS_OK) return -1;\n\
           PorflowStatus s = porflow_mesh_num_sides(mesh, &n);\n\
           porflow_mesh_free(mesh);\n\
           return s == PORFLOW_STATUS_OK ? (int)n : -1;\n\
         }\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
