use dbvp_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

const CONFIG: &str = "[boundary]\npreset = degenerate-sin2\n[grid]\ntangential_points = 16\nnormal_points = 48\n";

fn problem(text: &str) -> *mut DbvpProblem {
    let c = CString::new(text).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { dbvp_problem_from_config(c.as_ptr(), &mut p) }, DbvpStatus::Ok);
    assert!(!p.is_null());
    p
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(dbvp_last_error_message()) }.to_str().unwrap().to_string()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(dbvp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn kappa_roots_of_laplacian() {
    let p = problem("");
    let mut k = DbvpKappa { kplus: DbvpComplex { re: 0.0, im: 0.0 }, kminus: DbvpComplex { re: 0.0, im: 0.0 }, a_n: DbvpComplex { re: 0.0, im: 0.0 } };
    // −Δ + 1: κ± = sqrt(ξ² + 1 + ζ²) at θ = 0.
    assert_eq!(unsafe { dbvp_kappa_roots(p, 0.3, 3.0, 4.0, 0.0, &mut k) }, DbvpStatus::Ok);
    let want = (9.0f64 + 1.0 + 16.0).sqrt();
    assert!((k.kplus.re - want).abs() < 1e-12 && k.kplus.im.abs() < 1e-12);
    assert!((k.kminus.re - want).abs() < 1e-12);
    assert_eq!(unsafe { dbvp_kappa_roots(p, 0.0, 1.0, 1.0, 4.0, &mut k) }, DbvpStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    unsafe { dbvp_problem_free(p) };
}

#[test]
fn resolvent_round_trip_through_handles() {
    let p = problem(CONFIG);
    let (mut mt, mut mn) = (0usize, 0usize);
    assert_eq!(unsafe { dbvp_problem_grid(p, &mut mt, &mut mn) }, DbvpStatus::Ok);
    assert_eq!((mt, mn), (16, 48));
    let len = mt * mn;
    let data: Vec<DbvpComplex> = (0..len).map(|k| DbvpComplex { re: ((k % 7) as f64).sin(), im: 0.0 }).collect();
    let mut f = ptr::null_mut();
    assert_eq!(unsafe { dbvp_field_from_data(p, data.as_ptr(), len, &mut f) }, DbvpStatus::Ok);
    assert_eq!(unsafe { dbvp_field_len(f) }, len);
    let mut u = ptr::null_mut();
    assert_eq!(unsafe { dbvp_apply_resolvent(p, -1.0, 0.0, f, &mut u) }, DbvpStatus::Ok);
    let (mut nf, mut nu) = (0.0, 0.0);
    unsafe {
        assert_eq!(dbvp_field_l2_norm(f, &mut nf), DbvpStatus::Ok);
        assert_eq!(dbvp_field_l2_norm(u, &mut nu), DbvpStatus::Ok);
    }
    // ‖(A − λ)^{−1}‖ ≤ 1/dist(λ, spectrum) ≤ 1/2 for A ≥ 1, λ = −1.
    assert!(nu > 0.0 && nu <= 0.5 * nf * (1.0 + 1e-6), "{nu} vs {nf}");

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("u.bin").to_str().unwrap()).unwrap();
    let mut back = ptr::null_mut();
    unsafe {
        assert_eq!(dbvp_field_save(u, path.as_ptr()), DbvpStatus::Ok);
        assert_eq!(dbvp_field_load(path.as_ptr(), &mut back), DbvpStatus::Ok);
    }
    let mut a = vec![DbvpComplex { re: 0.0, im: 0.0 }; len];
    let mut b = a.clone();
    unsafe {
        assert_eq!(dbvp_field_read(u, a.as_mut_ptr(), len), DbvpStatus::Ok);
        assert_eq!(dbvp_field_read(back, b.as_mut_ptr(), len), DbvpStatus::Ok);
        assert_eq!(dbvp_field_read(back, b.as_mut_ptr(), len - 1), DbvpStatus::InvalidArgument);
    }
    // Files store single precision.
    for (x, y) in a.iter().zip(&b) {
        assert!((x.re - y.re).abs() <= 1e-6 * (1.0 + x.re.abs()) && (x.im - y.im).abs() <= 1e-6 * (1.0 + x.im.abs()));
    }
    let mut zero = ptr::null_mut();
    let mut z_out = ptr::null_mut();
    let mut nz = 1.0;
    unsafe {
        assert_eq!(dbvp_field_zeros(p, &mut zero), DbvpStatus::Ok);
        assert_eq!(dbvp_apply_resolvent(p, -1.0, 0.0, zero, &mut z_out), DbvpStatus::Ok);
        assert_eq!(dbvp_field_l2_norm(z_out, &mut nz), DbvpStatus::Ok);
    }
    assert_eq!(nz, 0.0);
    unsafe {
        for h in [f, u, back, zero, z_out] {
            dbvp_field_free(h);
        }
        dbvp_problem_free(p);
    }
}

#[test]
fn sector_norm_is_deterministic_and_bounded() {
    let p = problem(CONFIG);
    let (mut a, mut b) = (0.0, 0.0);
    unsafe {
        assert_eq!(dbvp_sector_norm(p, std::f64::consts::FRAC_PI_2, 3.0, 2, 2, 9, &mut a), DbvpStatus::Ok);
        assert_eq!(dbvp_sector_norm(p, std::f64::consts::FRAC_PI_2, 3.0, 2, 2, 9, &mut b), DbvpStatus::Ok);
        assert_eq!(dbvp_sector_norm(p, 1.0, 3.0, 0, 2, 9, &mut b), DbvpStatus::InvalidArgument);
        dbvp_problem_free(p);
    }
    assert!(a > 0.5 && a <= 1.0 + 1e-6, "{a}");
}

#[test]
fn errors_are_reported_not_panicked() {
    let mut p = ptr::null_mut();
    let bad = CString::new("[grid]\nwhat = 1\n").unwrap();
    unsafe {
        assert_eq!(dbvp_problem_from_config(bad.as_ptr(), &mut p), DbvpStatus::Config);
        assert!(last_error().contains("line 2"));
        assert_eq!(dbvp_problem_from_config(ptr::null(), &mut p), DbvpStatus::NullPointer);
        let ok = CString::new("").unwrap();
        assert_eq!(dbvp_problem_from_config(ok.as_ptr(), ptr::null_mut()), DbvpStatus::NullPointer);
        let missing = CString::new("/nonexistent/field.bin").unwrap();
        assert_eq!(dbvp_field_load(missing.as_ptr(), &mut ptr::null_mut()), DbvpStatus::Io);
        assert_eq!(dbvp_field_len(ptr::null()), 0);
        dbvp_field_free(ptr::null_mut());
        dbvp_problem_free(ptr::null_mut());
        let mut n = 0.0;
        assert_eq!(dbvp_field_l2_norm(ptr::null(), &mut n), DbvpStatus::NullPointer);
    }
    assert!(p.is_null());
}

#[test]
fn header_declares_the_interface() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dbvp.h")).unwrap();
    for name in [
        "DBVP_STATUS_OK", "DBVP_STATUS_PANIC", "DbvpProblem", "DbvpField", "DbvpKappa", "dbvp_version",
        "dbvp_last_error_message", "dbvp_problem_from_config", "dbvp_apply_resolvent", "dbvp_sector_norm",
        "dbvp_field_save", "dbvp_field_load", "dbvp_kappa_roots",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(&src, "#include \"dbvp.h\"\nint main(void) { DbvpProblem *p = 0; (void)p; return DBVP_STATUS_OK; }\n").unwrap();
    let st = std::process::Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&src)
        .status()
        .unwrap();
    assert!(st.success());
}

fn which_cc() -> Result<&'static str, ()> {
    for c in ["cc", "gcc", "clang"] {
        if std::process::Command::new(c).arg("--version").output().is_ok() {
            return Ok(c);
        }
    }
    Err(())
}
