use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sci_core::io::{read_cube, read_masks, read_measurement, read_scit};
use sci_core::{SensingMode, SensingOperator};

fn sci(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sci")).args(args).output().expect("spawn sci")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(out: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--scene", "moving-square", "--seed", "3", "--out", p(out)];
    args.extend_from_slice(extra);
    let o = sci(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn summary_value(dir: &Path, key: &str) -> f64 {
    let text = fs::read_to_string(dir.join("summary.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from summary"))
        .parse()
        .unwrap()
}

fn reconstruct(sim: &Path, out: &Path, solver: &str) -> Output {
    sci(&[
        "reconstruct",
        "--measurement",
        p(&sim.join("measurement.scit")),
        "--masks",
        p(&sim.join("masks.scit")),
        "--reference",
        p(&sim.join("truth.scit")),
        "--solver",
        solver,
        "--out",
        p(out),
    ])
}

#[test]
fn simulate_is_byte_identical_for_equal_seeds() {
    let dir = tempfile::tempdir().unwrap();
    simulate(&dir.path().join("a"), &["--nx", "32", "--ny", "32"]);
    simulate(&dir.path().join("b"), &["--nx", "32", "--ny", "32"]);
    for f in ["measurement.scit", "masks.scit", "truth.scit", "meta.txt"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f} differs"
        );
    }
    let meta = fs::read_to_string(dir.path().join("a/meta.txt")).unwrap();
    assert!(meta.contains("mode=cacti") && meta.contains("seed=3") && meta.contains("config="));
}

#[test]
fn cassi_measurement_is_widened() {
    let dir = tempfile::tempdir().unwrap();
    simulate(
        dir.path(),
        &["--nx", "8", "--ny", "8", "--nt", "4", "--mode", "cassi", "--step", "1"],
    );
    let t = read_scit(&dir.path().join("measurement.scit")).unwrap();
    assert_eq!(t.dims, vec![8, 11]);
}

#[test]
fn cassi_without_step_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = sci(&["simulate", "--scene", "moving-square", "--mode", "cassi", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gap_tv_beats_least_squares() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, &[]);
    assert!(reconstruct(&sim, &dir.path().join("lsq"), "lsq").status.success());
    assert!(reconstruct(&sim, &dir.path().join("gap"), "gap-tv").status.success());
    let lsq = summary_value(&dir.path().join("lsq"), "psnr_db");
    let gap = summary_value(&dir.path().join("gap"), "psnr_db");
    assert!(gap >= 20.0, "gap-tv {gap:.2} dB");
    assert!(gap >= lsq + 3.0, "gap-tv {gap:.2} dB vs lsq {lsq:.2} dB");
    let trace = fs::read_to_string(dir.path().join("gap/trace.csv")).unwrap();
    assert!(trace.starts_with("iter,residual,change,psnr"));
    assert!(trace.lines().count() > 2);
}

#[test]
fn lsq_matches_library_least_squares() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, &["--nx", "16", "--ny", "16", "--nt", "4"]);
    assert!(reconstruct(&sim, &dir.path().join("r"), "lsq").status.success());
    let masks = read_masks(&sim.join("masks.scit")).unwrap();
    let y = read_measurement(&sim.join("measurement.scit"), SensingMode::Cacti, masks.nt()).unwrap();
    let expected = SensingOperator::cacti(masks).least_squares_init(&y).unwrap();
    let got = read_cube(&dir.path().join("r/reconstruction.scit")).unwrap();
    assert_eq!(got.as_slice(), expected.as_slice());
}

#[test]
fn reconstruct_outputs_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, &["--nx", "24", "--ny", "24", "--nt", "4"]);
    for out in ["a", "b"] {
        let o = reconstruct(&sim, &dir.path().join(out), "admm-tv");
        assert!(o.status.success());
    }
    for f in ["reconstruction.scit", "trace.csv", "summary.txt"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn png_export_writes_one_file_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, &["--nx", "16", "--ny", "16", "--nt", "3"]);
    let out = dir.path().join("r");
    let o = sci(&[
        "reconstruct",
        "--measurement",
        p(&sim.join("measurement.scit")),
        "--masks",
        p(&sim.join("masks.scit")),
        "--png",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success());
    let pngs = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 3);
}

#[test]
fn missing_mask_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, &["--nx", "16", "--ny", "16", "--nt", "2"]);
    let missing = dir.path().join("no-such-masks.scit");
    let o = sci(&[
        "reconstruct",
        "--measurement",
        p(&sim.join("measurement.scit")),
        "--masks",
        p(&missing),
        "--out",
        p(&dir.path().join("r")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(p(&missing)));
}

#[test]
fn corrupt_measurement_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, &["--nx", "16", "--ny", "16", "--nt", "2"]);
    let bad = dir.path().join("bad.scit");
    fs::write(&bad, b"NOPE0000").unwrap();
    let o = sci(&[
        "reconstruct",
        "--measurement",
        p(&bad),
        "--masks",
        p(&sim.join("masks.scit")),
        "--out",
        p(&dir.path().join("r")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("byte offset"));
}

#[test]
fn patch_solvers_reject_cassi() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(
        &sim,
        &["--nx", "8", "--ny", "8", "--nt", "4", "--mode", "cassi", "--step", "1"],
    );
    for solver in ["gmm", "desci"] {
        let o = sci(&[
            "reconstruct",
            "--measurement",
            p(&sim.join("measurement.scit")),
            "--masks",
            p(&sim.join("masks.scit")),
            "--mode",
            "cassi",
            "--step",
            "1",
            "--solver",
            solver,
            "--out",
            p(&dir.path().join("r")),
        ]);
        assert_eq!(o.status.code(), Some(1), "{solver}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("unsupported"), "{solver}");
    }
}

#[test]
fn unknown_solver_lists_registry() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, &["--nx", "16", "--ny", "16", "--nt", "2"]);
    let o = reconstruct(&sim, &dir.path().join("r"), "magic");
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gap-tv"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    simulate(&sim, &["--nx", "16", "--ny", "16", "--nt", "2"]);
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# reconstruction settings\nsolver = gap-tv\niters=3\ntv_weight=0.05\n").unwrap();
    let (meas, masks) = (sim.join("measurement.scit"), sim.join("masks.scit"));
    let base = [
        "reconstruct",
        "--measurement",
        p(&meas),
        "--masks",
        p(&masks),
        "--config",
        p(&cfg),
    ];
    let out = dir.path().join("file");
    let mut args = base.to_vec();
    args.extend(["--out", p(&out)]);
    assert!(sci(&args).status.success());
    assert_eq!(summary_value(&out, "iterations"), 3.0);

    let out = dir.path().join("flag");
    let mut args = base.to_vec();
    args.extend(["--solver", "lsq", "--out", p(&out)]);
    assert!(sci(&args).status.success());
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("solver=lsq"));
}

#[test]
fn theory_vacuous_floor_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = sci(&["theory", "--trials", "50", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("theory.txt")).unwrap();
    assert!(text.contains("vacuous"));
    assert!(text.contains("config="));
    assert!(dir.path().join("theory.csv").exists());
}

#[test]
fn bench_oracle_row_and_repeatability() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let o = sci(&[
            "bench",
            "--scenes",
            "moving-square,smooth-field",
            "--seeds",
            "1,2",
            "--nx",
            "16",
            "--ny",
            "16",
            "--nt",
            "4",
            "--solvers",
            "oracle,lsq,gap-tv",
            "--out",
            p(&dir.path().join(out)),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(dir.path().join(out).join("bench.csv")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a.lines().next().unwrap(), "dataset,solver,psnr_db,ssim,seconds,iters,config");
    assert_eq!(a.lines().count(), 1 + 4 * 3);
    let oracle: Vec<&str> = a.lines().filter(|l| l.contains(",oracle,")).collect();
    assert!(oracle.iter().all(|l| l.split(',').nth(2) == Some("100.000000")));
    // everything but wall time must repeat
    let strip = |csv: &str| -> Vec<String> {
        csv.lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(4);
                f.join(",")
            })
            .collect()
    };
    assert_eq!(strip(&a), strip(&b));
}
