use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use sci_ffi::*;

fn last_error() -> String {
    let p = sci_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn ramp(n: usize) -> Vec<f64> {
    (0..n).map(|v| (v % 17) as f64 / 16.0).collect()
}

unsafe fn cube(nx: usize, ny: usize, nt: usize, data: &[f64]) -> *mut SciCube {
    let mut c = ptr::null_mut();
    assert_eq!(sci_cube_new(nx, ny, nt, data.as_ptr(), &mut c), SciStatus::Ok);
    c
}

unsafe fn cacti(nx: usize, ny: usize, nt: usize, seed: u64) -> *mut SciOperator {
    let mut m = ptr::null_mut();
    assert_eq!(
        sci_masks_generate(SciMaskKind::CoveredBernoulli, 0.5, nx, ny, nt, seed, &mut m),
        SciStatus::Ok
    );
    let mut op = ptr::null_mut();
    assert_eq!(sci_operator_new(m, false, 0, 0, &mut op), SciStatus::Ok);
    sci_masks_free(m);
    op
}

#[test]
fn cube_roundtrip_and_dims() {
    unsafe {
        let data = ramp(5 * 3 * 2);
        let c = cube(5, 3, 2, &data);
        let (mut nx, mut ny, mut nt) = (0, 0, 0);
        assert_eq!(sci_cube_dims(c, &mut nx, &mut ny, &mut nt), SciStatus::Ok);
        assert_eq!((nx, ny, nt), (5, 3, 2));
        let mut back = vec![0.0; 30];
        assert_eq!(sci_cube_copy_data(c, back.as_mut_ptr(), back.len()), SciStatus::Ok);
        assert_eq!(back, data);
        let mut small = vec![0.0; 29];
        assert_eq!(
            sci_cube_copy_data(c, small.as_mut_ptr(), small.len()),
            SciStatus::InvalidArgument
        );
        sci_cube_free(c);
    }
}

#[test]
fn file_roundtrip_and_io_errors() {
    unsafe {
        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("c.scit").to_str().unwrap()).unwrap();
        let data = ramp(4 * 4 * 3);
        let c = cube(4, 4, 3, &data);
        assert_eq!(sci_cube_write(c, path.as_ptr()), SciStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(sci_cube_read(path.as_ptr(), &mut r), SciStatus::Ok);
        let mut back = vec![0.0; data.len()];
        sci_cube_copy_data(r, back.as_mut_ptr(), back.len());
        assert_eq!(back, data);

        let missing = CString::new(dir.path().join("missing.scit").to_str().unwrap()).unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(sci_cube_read(missing.as_ptr(), &mut none), SciStatus::Io);
        assert!(none.is_null());
        assert!(last_error().contains("missing.scit"));
        assert_eq!(sci_status_exit_code(SciStatus::Io), 2);
        sci_cube_free(c);
        sci_cube_free(r);
    }
}

#[test]
fn null_and_bad_arguments_are_reported() {
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(sci_cube_new(2, 2, 1, ptr::null(), &mut c), SciStatus::NullPointer);
        assert!(last_error().contains("data"));
        let data = [0.0; 3];
        assert_eq!(sci_cube_new(2, 2, 1, data.as_ptr(), ptr::null_mut()), SciStatus::NullPointer);
        assert_eq!(sci_cube_new(0, 2, 1, data.as_ptr(), &mut c), SciStatus::InvalidArgument);
        assert_eq!(sci_cube_new(usize::MAX, 2, 2, data.as_ptr(), &mut c), SciStatus::InvalidArgument);
        let mut m = ptr::null_mut();
        assert_eq!(
            sci_masks_generate(SciMaskKind::Bernoulli, 1.5, 2, 2, 2, 1, &mut m),
            SciStatus::InvalidArgument
        );
        assert_eq!(
            sci_masks_generate(SciMaskKind::ShiftedBase, 0.5, 2, 2, 2, 1, &mut m),
            SciStatus::InvalidArgument
        );
        sci_cube_free(ptr::null_mut());
        sci_masks_free(ptr::null_mut());
        sci_operator_free(ptr::null_mut());
        sci_measurement_free(ptr::null_mut());
    }
}

#[test]
fn forward_matches_core() {
    unsafe {
        let (nx, ny, nt) = (6, 5, 3);
        let data = ramp(nx * ny * nt);
        let op = cacti(nx, ny, nt, 4);
        let c = cube(nx, ny, nt, &data);
        let mut y = ptr::null_mut();
        assert_eq!(sci_forward(op, c, 0.0, 0, &mut y), SciStatus::Ok);
        let mut got = vec![0.0; nx * ny];
        assert_eq!(sci_measurement_copy_data(y, got.as_mut_ptr(), got.len()), SciStatus::Ok);

        let masks = sci_core::make_masks(sci_core::MaskKind::CoveredBernoulli { p: 0.5 }, nx, ny, nt, 4).unwrap();
        let core_op = sci_core::SensingOperator::cacti(masks);
        let expected = core_op.apply(&data).unwrap();
        assert_eq!(got, expected);
        sci_cube_free(c);
        sci_measurement_free(y);
        sci_operator_free(op);
    }
}

#[test]
fn cassi_dims_and_unsupported_solvers() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(sci_masks_generate(SciMaskKind::Gaussian, 0.0, 8, 8, 4, 2, &mut m), SciStatus::Ok);
        let mut op = ptr::null_mut();
        assert_eq!(sci_operator_new(m, true, 1, 0, &mut op), SciStatus::Ok);
        let (mut rows, mut cols) = (0, 0);
        sci_operator_measurement_dims(op, &mut rows, &mut cols);
        assert_eq!((rows, cols), (8, 11));
        let y_data = vec![0.5; rows * cols];
        let mut y = ptr::null_mut();
        assert_eq!(sci_measurement_new(op, y_data.as_ptr(), y_data.len(), 0.0, &mut y), SciStatus::Ok);
        let solver = CString::new("desci").unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(
            sci_reconstruct(op, y, solver.as_ptr(), 0, -1.0, ptr::null(), &mut out),
            SciStatus::Unsupported
        );
        let mut bad = ptr::null_mut();
        assert_eq!(
            sci_measurement_new(op, y_data.as_ptr(), 3, 0.0, &mut bad),
            SciStatus::DimensionMismatch
        );
        let mut bad_op = ptr::null_mut();
        assert_eq!(sci_operator_new(m, true, 1, 9, &mut bad_op), SciStatus::InvalidArgument);
        sci_measurement_free(y);
        sci_operator_free(op);
        sci_masks_free(m);
    }
}

#[test]
fn reconstruct_and_metrics() {
    unsafe {
        let truth = sci_core::eval::scenes::moving_square(24, 24, 4, 2).unwrap();
        let x = cube(24, 24, 4, truth.as_slice());
        let op = cacti(24, 24, 4, 9);
        let mut y = ptr::null_mut();
        sci_forward(op, x, 0.0, 0, &mut y);
        let run = |name: &str, reference: *const SciCube| {
            let s = CString::new(name).unwrap();
            let mut out = ptr::null_mut();
            assert_eq!(sci_reconstruct(op, y, s.as_ptr(), 50, -1.0, reference, &mut out), SciStatus::Ok);
            let mut p = 0.0;
            assert_eq!(sci_psnr(x, out, &mut p), SciStatus::Ok);
            sci_cube_free(out);
            p
        };
        let lsq = run("lsq", ptr::null());
        let gap = run("gap-tv", ptr::null());
        assert!(gap > lsq + 3.0, "gap {gap} lsq {lsq}");
        assert_eq!(run("oracle", x), 100.0);

        let mut s = 0.0;
        assert_eq!(sci_ssim(x, x, &mut s), SciStatus::Ok);
        assert_eq!(s, 1.0);
        let oracle = CString::new("oracle").unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(
            sci_reconstruct(op, y, oracle.as_ptr(), 0, -1.0, ptr::null(), &mut out),
            SciStatus::InvalidArgument
        );
        sci_cube_free(x);
        sci_measurement_free(y);
        sci_operator_free(op);
    }
}

#[test]
fn theory_report() {
    unsafe {
        let mut r = SciTheoryReport::default();
        assert_eq!(sci_theorem_check(8, 8, 2, 2, 40, 1.0, 3, true, &mut r), SciStatus::Ok);
        assert_eq!(r.trials, 40);
        assert_eq!(r.successes, 40);
        assert_eq!(r.success_frequency, 1.0);
        assert!(r.pass);
        assert_eq!(sci_theorem_check(8, 8, 2, 2, 40, 9.0, 3, false, &mut r), SciStatus::InvalidArgument);
    }
}

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

fn cc() -> String {
    std::env::var("CC").unwrap_or_else(|_| "cc".into())
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("sci.h").exists());
    for lang in ["c", "c++"] {
        let out = Command::new(cc())
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(&include)
            .arg(include.join("sci.h"))
            .output()
            .expect("C compiler");
        assert!(out.status.success(), "{lang}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib_dir = target_dir();
    assert!(
        lib_dir.join("libsci_ffi.so").exists() || lib_dir.join("libsci_ffi.dylib").exists(),
        "shared library not found in {}",
        lib_dir.display()
    );
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("roundtrip");
    let out = Command::new(cc())
        .arg(manifest.join("tests/c/roundtrip.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .args(["-lsci_ffi", "-lm", "-o"])
        .arg(&exe)
        .output()
        .expect("C compiler");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "exit {:?}: {}{}",
        run.status.code(),
        String::from_utf8_lossy(&run.stdout),
        String::from_utf8_lossy(&run.stderr)
    );
}
