//! End-to-end CLI tests: subcommand plumbing, exit codes and error paths.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_equiburst"))
}

fn run_in(dir: &Path, args: &[&str]) -> std::process::Output {
    bin().args(args).arg("--out-dir").arg(dir).output().expect("spawn equiburst")
}

#[test]
fn help_succeeds() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["simulate", "align", "reconstruct", "equiv", "sweep", "selftest"] {
        assert!(text.contains(sub), "--help does not mention {sub}");
    }
}

#[test]
fn simulate_validates_frame_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["simulate", "--demo", "32", "--frames", "1"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_requires_input_or_demo() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["simulate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_with_zero_motion_yields_identical_frames() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate", "--demo", "32", "--frames", "3", "--theta-max", "0", "--shift-max", "0", "--sigma", "0",
            "--out", "b",
        ],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let f0 = std::fs::read(dir.path().join("b/frame_000.pfm")).unwrap();
    let f1 = std::fs::read(dir.path().join("b/frame_001.pfm")).unwrap();
    let f2 = std::fs::read(dir.path().join("b/frame_002.pfm")).unwrap();
    assert_eq!(f0, f1);
    assert_eq!(f1, f2);
    assert!(dir.path().join("b/run.manifest").exists());
}

#[test]
fn align_recovers_simulator_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate", "--demo", "96", "--frames", "3", "--scale", "2", "--theta-max", "1.5", "--shift-max", "3",
            "--sigma", "0", "--seed", "5", "--no-mosaic", "--out", "b",
        ],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let out = run_in(dir.path(), &["align", "--burst", "b", "--out", "a.manifest"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    // compare against the burst manifest's ground truth
    let truth = std::fs::read_to_string(dir.path().join("b/burst.manifest")).unwrap();
    let est = std::fs::read_to_string(dir.path().join("a.manifest")).unwrap();
    let parse = |text: &str| -> Vec<(f64, f64, f64)> {
        text.lines()
            .filter(|l| l.starts_with("frame="))
            .map(|l| {
                let t = equiburst::transform_from_manifest(l).unwrap();
                (t.theta, t.b.0, t.b.1)
            })
            .collect()
    };
    let truth = parse(&truth);
    let est = parse(&est);
    assert_eq!(truth.len(), est.len());
    // LR frames: ground-truth b is in HR length units, matching LR mesh
    for (gt, es) in truth.iter().zip(est.iter()).skip(1) {
        assert!((gt.0 - es.0).abs() < 0.5f64.to_radians(), "theta {gt:?} vs {es:?}");
        assert!((gt.1 - es.1).abs() < 0.5, "b1 {gt:?} vs {es:?}");
        assert!((gt.2 - es.2).abs() < 0.5, "b2 {gt:?} vs {es:?}");
    }
}

#[test]
fn align_reports_corrupt_manifest_line() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), &["simulate", "--demo", "32", "--frames", "2", "--out", "b"]);
    let path = dir.path().join("b/burst.manifest");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("not a manifest line\n");
    std::fs::write(&path, text).unwrap();
    let out = run_in(dir.path(), &["align", "--burst", "b"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 8"), "stderr: {err}");
}

#[test]
fn reconstruct_pipeline_and_metrics_consistency() {
    let dir = tempfile::tempdir().unwrap();
    // write the HR demo scene for the ground-truth comparison
    let hr = equiburst::scene::test_scene(96, 7);
    equiburst::io::write_pfm(&dir.path().join("hr.pfm"), &hr).unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate", "--in", "hr.pfm", "--frames", "6", "--scale", "2", "--theta-max", "0.5", "--shift-max", "2",
            "--sigma", "0", "--seed", "7", "--out", "b",
        ],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let out = run_in(
        dir.path(),
        &[
            "reconstruct", "--burst", "b", "--use-ground-truth", "--out", "sr.pfm", "--gt", "hr.pfm", "--metrics",
            "m.csv",
        ],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    // CSV psnr matches psnr() on the files
    let csv = std::fs::read_to_string(dir.path().join("m.csv")).unwrap();
    let line = csv.lines().nth(1).unwrap();
    let psnr_csv: f64 = line.split(',').next().unwrap().parse().unwrap();
    let sr = equiburst::io::read_pfm(&dir.path().join("sr.pfm")).unwrap();
    let gt = equiburst::io::read_pfm(&dir.path().join("hr.pfm")).unwrap();
    let direct = equiburst::psnr(&sr, &gt, 1.0).unwrap();
    assert_eq!(psnr_csv, direct);

    // zero-feature mode is the interpolation baseline
    let out = run_in(
        dir.path(),
        &["reconstruct", "--burst", "b", "--use-ground-truth", "--features", "zero", "--out", "zero.pfm"],
    );
    assert!(out.status.success());
    // equivariant mode runs end to end
    let out = run_in(
        dir.path(),
        &["reconstruct", "--burst", "b", "--use-ground-truth", "--features", "equivariant", "--out", "eq.pfm"],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    // scale mismatch is a usage error
    let out = run_in(dir.path(), &["reconstruct", "--burst", "b", "--use-ground-truth", "--scale", "4"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reconstruct_with_estimated_alignment() {
    let dir = tempfile::tempdir().unwrap();
    run_in(
        dir.path(),
        &[
            "simulate", "--demo", "96", "--frames", "4", "--scale", "2", "--theta-max", "0.5", "--shift-max", "2",
            "--sigma", "0", "--seed", "3", "--out", "b",
        ],
    );
    let out = run_in(dir.path(), &["align", "--burst", "b", "--out", "a.manifest"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let out = run_in(dir.path(), &["reconstruct", "--burst", "b", "--alignment", "a.manifest", "--out", "sr.pfm"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("sr.pfm").exists());
}

#[test]
fn sweep_config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "h=1/32\nbogus_key=1\n").unwrap();
    let out = run_in(dir.path(), &["sweep", "--config", "bad.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));
}

#[test]
fn equiv_single_point_identity_angle_gives_zero_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("one.cfg"), "h=1/32\np=3\nt=4\ntheta=0\nn=24\nreps=1\nlayers=2\nrelu=0\n")
        .unwrap();
    let out = run_in(dir.path(), &["equiv", "--config", "one.cfg", "--out", "one.csv"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("one.csv")).unwrap();
    let row = csv.lines().find(|l| !l.starts_with('#') && !l.starts_with("h,")).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    // err_commutation and err_equivariance are exactly zero for theta = 0
    assert_eq!(cols[8].parse::<f64>().unwrap(), 0.0);
    assert_eq!(cols[9].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn sweep_reports_slope_summaries() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.cfg"),
        "h=1/16,1/32\np=3\nt=4\ntheta=in-group\nshift=0.5,0.25\nn=32\nmargin=6\nreps=1\nlayers=2\nrelu=0\nresampled=1\n",
    )
    .unwrap();
    let out = run_in(dir.path(), &["sweep", "--config", "s.cfg", "--out", "s.csv"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("# slope_h[")), "missing slope summary:\n{csv}");
}
