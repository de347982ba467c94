//! Acceptance suite: every release criterion checked at its stated
//! tolerance, one pass/fail line per criterion.
//!
//! Run with `cargo test -p equiburst-cli --test acceptance -- --nocapture`
//! to see the per-criterion report.

use equiburst::{
    bicubic_baseline, estimate_transform, make_grid_image, mdta_fuse, mdta_fuse_detailed, psnr,
    reconstruct, run_network, run_sweep, selftest, spearman, synthesize_burst, warp_feature, warp_image,
    AffineTransform, AlignmentResult, EquivNetSpec, FeatureMode, LatentField, LayerKind, MdtaParams,
    ReconstructConfig, SearchConfig, SweepConfig, ThetaSpec,
};
use rand::{Rng, SeedableRng};
use std::time::Instant;

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn new() -> Self {
        Gate { failures: Vec::new() }
    }

    fn report(&mut self, id: u32, name: &str, passed: bool, detail: String, started: Instant) {
        let status = if passed { "PASS" } else { "FAIL" };
        println!("[{status}] criterion {id} ({name}): {detail} [{:.1?}]", started.elapsed());
        if !passed {
            self.failures.push(format!("criterion {id} ({name}): {detail}"));
        }
    }
}

fn smooth_image(n: usize, seed: u64) -> equiburst::Image {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let field = LatentField::random_bandlimited(&mut rng, 8, 0.35, 1.0);
    make_grid_image(&[field], n, 1.0).unwrap()
}

/// 1. lift/group/project convolutions match independent direct-summation
/// oracles on all instances H=W in {4,6,8}, t in {1,2,4}, p=3, C <= 2.
fn criterion_1(gate: &mut Gate) {
    let t0 = Instant::now();
    let result = selftest::check_oracle_equivalence(&[4, 6, 8], &[1, 2, 4], &[(1, 1), (1, 2), (2, 1), (2, 2)]);
    gate.report(1, "oracle equivalence", result.passed, result.detail, t0);
}

/// 2. Remark-2 soundness: lifting-layer commutation error within the
/// certified per-layer bound over the (h, p, t) grid, 20 seeded
/// repetitions, zero violations.
fn criterion_2(gate: &mut Gate) {
    let t0 = Instant::now();
    let cfg = SweepConfig {
        h_values: vec![1.0 / 64.0, 1.0 / 128.0],
        p_values: vec![3, 5],
        t_values: vec![4, 8],
        thetas: vec![ThetaSpec::InGroup],
        image_size: 32,
        reps: 20,
        layers: 2,
        relu: false,
        layer_kind: LayerKind::Lifting,
        ..Default::default()
    };
    match run_sweep(&cfg) {
        Ok(out) => {
            let measured = out.records.iter().filter(|r| !r.err_commutation.is_nan()).count();
            let violations = out
                .records
                .iter()
                .filter(|r| !r.err_commutation.is_nan() && r.err_commutation > r.bound_remark2)
                .count();
            gate.report(
                2,
                "Remark-2 soundness",
                violations == 0 && measured == out.records.len(),
                format!("{measured} commutation records, {violations} bound violations"),
                t0,
            );
        }
        Err(e) => gate.report(2, "Remark-2 soundness", false, format!("sweep failed: {e}"), t0),
    }
}

/// 3. Theorem-1 soundness: 3-layer network with ReLU, in-group and
/// maximally off-group angles with an integer-pixel shift, measured
/// equivariance error within C1 h^2 + C2 p h / t, zero violations.
fn criterion_3(gate: &mut Gate) {
    let t0 = Instant::now();
    let cfg = SweepConfig {
        h_values: vec![1.0 / 64.0, 1.0 / 128.0],
        p_values: vec![3, 5],
        t_values: vec![4, 8],
        thetas: vec![ThetaSpec::InGroup, ThetaSpec::OffGroup],
        shift_px: (1.0, 0.0),
        image_size: 40,
        reps: 3,
        layers: 3,
        relu: true,
        ..Default::default()
    };
    match run_sweep(&cfg) {
        Ok(out) => {
            let violations = out.records.iter().filter(|r| r.err_equivariance > r.bound_thm1).count();
            gate.report(
                3,
                "Theorem-1 soundness",
                violations == 0,
                format!("{} records, {violations} bound violations", out.records.len()),
                t0,
            );
        }
        Err(e) => gate.report(3, "Theorem-1 soundness", false, format!("sweep failed: {e}"), t0),
    }
}

/// 4. h-scaling: log-log slope of the in-group equivariance error across
/// h in {1/32, 1/64, 1/128, 1/256} is 2.0 +- 0.3. The quarter turn with a
/// fractional-pixel shift keeps the kernel algebra exact, so the measured
/// round trip isolates the resampling quadrature whose slope the h^2 term
/// governs.
fn criterion_4(gate: &mut Gate) {
    let t0 = Instant::now();
    let cfg = SweepConfig {
        h_values: vec![1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0],
        p_values: vec![3],
        t_values: vec![4],
        thetas: vec![ThetaSpec::InGroup],
        shift_px: (0.5, 0.25),
        image_size: 64,
        margin: Some(8),
        reps: 3,
        layers: 2,
        relu: false,
        resampled: true,
        ..Default::default()
    };
    match run_sweep(&cfg) {
        Ok(out) => {
            let sound = out.records.iter().all(|r| r.err_equivariance <= r.bound_thm1);
            match out.slopes_h.first().and_then(|s| s.slope) {
                Some(slope) => gate.report(
                    4,
                    "h-scaling",
                    (1.7..=2.3).contains(&slope) && sound,
                    format!("slope {slope:.3} (target 2.0 +- 0.3), bounds sound: {sound}"),
                    t0,
                ),
                None => gate.report(4, "h-scaling", false, "slope undefined".into(), t0),
            }
        }
        Err(e) => gate.report(4, "h-scaling", false, format!("sweep failed: {e}"), t0),
    }
}

/// 5. t-scaling: off-group error nonincreasing over t in {4, 8, 16, 32}
/// and floor-subtracted log-log slope -1 +- 0.4.
fn criterion_5(gate: &mut Gate) {
    let t0 = Instant::now();
    let h = 1.0 / 64.0;
    let cfg = SweepConfig {
        h_values: vec![h],
        p_values: vec![3],
        t_values: vec![4, 8, 16, 32],
        thetas: vec![ThetaSpec::Quarter, ThetaSpec::OffGroup],
        image_size: 48,
        margin: Some(22),
        reps: 10,
        layers: 2,
        relu: false,
        field_max_freq: Some(std::f64::consts::PI / (8.0 * h)),
        ..Default::default()
    };
    match run_sweep(&cfg) {
        Ok(out) => {
            let offs: Vec<f64> = cfg
                .t_values
                .iter()
                .map(|&t| {
                    let v: Vec<f64> = out
                        .records
                        .iter()
                        .filter(|r| r.t == t && (r.theta - std::f64::consts::PI / t as f64).abs() < 1e-12)
                        .map(|r| r.err_equivariance)
                        .collect();
                    v.iter().sum::<f64>() / v.len() as f64
                })
                .collect();
            let nonincreasing = offs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
            match out.slopes_t.first().and_then(|s| s.slope) {
                Some(slope) => gate.report(
                    5,
                    "t-scaling",
                    nonincreasing && (-1.4..=-0.6).contains(&slope),
                    format!("slope {slope:.3} (target -1.0 +- 0.4), nonincreasing: {nonincreasing}"),
                    t0,
                ),
                None => gate.report(5, "t-scaling", false, "slope undefined".into(), t0),
            }
        }
        Err(e) => gate.report(5, "t-scaling", false, format!("sweep failed: {e}"), t0),
    }
}

fn recovery_medians(pairs: usize, sigma: f64, seed: u64) -> (f64, f64) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut theta_errs = Vec::new();
    let mut shift_errs = Vec::new();
    for pair in 0..pairs {
        let img = smooth_image(64, seed.wrapping_add(pair as u64));
        let truth = AffineTransform::new(
            rng.gen_range(-5.0f64.to_radians()..=5.0f64.to_radians()),
            (rng.gen_range(-3.0..=3.0), rng.gen_range(-3.0..=3.0)),
        );
        let frame = warp_image(&img, &truth);
        let (reference, frame) = if sigma > 0.0 {
            (
                equiburst::add_noise(&img, sigma, rng.gen()).unwrap(),
                equiburst::add_noise(&frame, sigma, rng.gen()).unwrap(),
            )
        } else {
            (img, frame)
        };
        let fa = estimate_transform(&reference, &frame, &SearchConfig::default()).unwrap();
        theta_errs.push((fa.transform.theta - truth.theta).abs());
        shift_errs.push((fa.transform.b.0 - truth.b.0).abs().max((fa.transform.b.1 - truth.b.1).abs()));
    }
    theta_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    shift_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (theta_errs[pairs / 2], shift_errs[pairs / 2])
}

/// 6. Alignment recovery: 50 seeded pairs, noiseless medians within
/// 0.2 degrees / 0.1 px; with sigma = 0.01 within 0.5 degrees / 0.25 px.
fn criterion_6(gate: &mut Gate) {
    let t0 = Instant::now();
    let (med_theta, med_shift) = recovery_medians(50, 0.0, 601);
    let (med_theta_n, med_shift_n) = recovery_medians(50, 0.01, 602);
    let pass = med_theta <= 0.2f64.to_radians()
        && med_shift <= 0.1
        && med_theta_n <= 0.5f64.to_radians()
        && med_shift_n <= 0.25;
    gate.report(
        6,
        "alignment recovery",
        pass,
        format!(
            "noiseless medians {:.4} deg / {:.4} px; sigma=0.01 medians {:.4} deg / {:.4} px",
            med_theta.to_degrees(),
            med_shift,
            med_theta_n.to_degrees(),
            med_shift_n
        ),
        t0,
    );
}

/// 7. Corollary-1 monotonicity: Spearman correlation between image-domain
/// residual and interior feature-domain alignment error >= 0.9 on >= 90%
/// of 20 seeded pairs, 30 perturbed transforms each.
fn criterion_7(gate: &mut Gate) {
    let t0 = Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(701);
    let n = 48usize;
    let spec = EquivNetSpec::random(2, 1, 2, 1, 4, 3, 1.0, true, 0xC0).unwrap();
    let margin = 8usize;
    let mut good_pairs = 0usize;
    let pairs = 20usize;
    for pair in 0..pairs {
        let img = smooth_image(n, 7000 + pair as u64);
        let truth = AffineTransform::new(
            rng.gen_range(-4.0f64.to_radians()..=4.0f64.to_radians()),
            (rng.gen_range(-2.0..=2.0), rng.gen_range(-2.0..=2.0)),
        );
        let frame = warp_image(&img, &truth);
        let z0 = run_network(&spec, &img).unwrap().features;
        let zj = run_network(&spec, &frame).unwrap().features;

        let mut img_residuals = Vec::new();
        let mut feat_errors = Vec::new();
        for k in 0..30 {
            // graded perturbation magnitudes with random directions
            let scale = k as f64 / 29.0;
            let d_theta = scale * 1.5f64.to_radians() * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let ang = rng.gen_range(0.0..std::f64::consts::TAU);
            let d_b = (scale * 0.8 * ang.cos(), scale * 0.8 * ang.sin());
            let guess = truth.compose(&AffineTransform::new(d_theta, d_b));
            let aligned_img = warp_image(&frame, &guess.invert());
            let mut l2 = 0.0;
            for i in margin..n - margin {
                for j in margin..n - margin {
                    let d = aligned_img.at(i, j, 0) - img.at(i, j, 0);
                    l2 += d * d;
                }
            }
            img_residuals.push(l2.sqrt());
            let aligned_feat = warp_feature(&zj, &guess.invert());
            feat_errors.push(aligned_feat.max_abs_diff_interior(&z0, margin).unwrap());
        }
        let rho = spearman(&img_residuals, &feat_errors).unwrap();
        if rho >= 0.9 {
            good_pairs += 1;
        }
    }
    gate.report(
        7,
        "Corollary-1 monotonicity",
        good_pairs * 10 >= pairs * 9,
        format!("{good_pairs}/{pairs} pairs with Spearman >= 0.9"),
        t0,
    );
}

/// 8. MDTA invariants: row-stochastic attention, exact zero-V residual
/// identity, spatial-permutation equivariance with identity depthwise
/// kernels.
fn criterion_8(gate: &mut Gate) {
    let t0 = Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(801);
    let n = 6usize;
    let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut z = equiburst::GroupFeatureMap::zeros(n, n, 2, 2, 1.0);
        for v in z.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        z
    };
    let maps = vec![mk(&mut rng), mk(&mut rng), mk(&mut rng)];
    let params = MdtaParams::seeded(3, 4, 17, false).unwrap();

    let mut ok = true;
    let mut detail = Vec::new();

    let (_, attns) = mdta_fuse_detailed(&maps, &params).unwrap();
    let mut worst_row = 0.0f64;
    for attn in &attns {
        for r in 0..4 {
            let s: f64 = attn[r * 4..(r + 1) * 4].iter().sum();
            worst_row = worst_row.max((s - 1.0).abs());
        }
    }
    ok &= worst_row <= 1e-6;
    detail.push(format!("max |row sum - 1| = {worst_row:.2e}"));

    let fused = mdta_fuse(&maps, &params.clone().with_zero_v()).unwrap();
    let identity = fused.iter().zip(maps.iter()).all(|(a, b)| a == b);
    ok &= identity;
    detail.push(format!("zero-V identity bit-exact: {identity}"));

    // permutation equivariance with identity depthwise kernels
    use rand::seq::SliceRandom;
    let id_params = MdtaParams::seeded(3, 4, 18, true).unwrap();
    let fused = mdta_fuse(&maps, &id_params).unwrap();
    let mut perm: Vec<usize> = (0..n * n).collect();
    perm.shuffle(&mut rng);
    let permute = |z: &equiburst::GroupFeatureMap| {
        let cf = z.group_order * z.channels;
        let mut out = z.clone();
        let src = z.data().to_vec();
        let dst = out.data_mut();
        for (pix, &to) in perm.iter().enumerate() {
            dst[to * cf..(to + 1) * cf].copy_from_slice(&src[pix * cf..(pix + 1) * cf]);
        }
        out
    };
    let pmaps: Vec<_> = maps.iter().map(permute).collect();
    let pfused = mdta_fuse(&pmaps, &id_params).unwrap();
    let mut worst = 0.0f64;
    for (f, pf) in fused.iter().zip(pfused.iter()) {
        let expect = permute(f);
        for (a, b) in expect.data().iter().zip(pf.data().iter()) {
            worst = worst.max((a - b).abs());
        }
    }
    ok &= worst <= 1e-12;
    detail.push(format!("permutation equivariance error {worst:.2e}"));

    gate.report(8, "MDTA invariants", ok, detail.join("; "), t0);
}

/// 9. Reconstruction utility: 14-frame noiseless x2 burst, ground-truth
/// alignment, shift-and-add mode beats the single-frame bicubic baseline
/// by at least 1 dB.
fn criterion_9(gate: &mut Gate) {
    let t0 = Instant::now();
    let hr = equiburst::scene::test_scene(192, 2);
    let burst = synthesize_burst(&hr, 14, 2, 0.01, 4.0, 0.0, 11, true).unwrap();
    let alignment = AlignmentResult::from_ground_truth(&burst.transforms);
    let sr = reconstruct(
        &burst,
        &alignment,
        &[],
        &ReconstructConfig { mode: FeatureMode::ShiftAndAdd, ..Default::default() },
    )
    .unwrap();
    let baseline = bicubic_baseline(&burst).unwrap();
    let p_sr = psnr(&sr, &hr, 1.0).unwrap();
    let p_base = psnr(&baseline, &hr, 1.0).unwrap();
    gate.report(
        9,
        "reconstruction utility",
        p_sr >= p_base + 1.0,
        format!("pipeline {p_sr:.2} dB vs bicubic {p_base:.2} dB (gain {:.2} dB, need >= 1.0)", p_sr - p_base),
        t0,
    );
}

/// 10. Determinism: simulate, sweep and selftest produce byte-identical
/// outputs across runs and across EQUIBURST_THREADS in {1, 4}.
fn criterion_10(gate: &mut Gate) {
    let t0 = Instant::now();
    let bin = env!("CARGO_BIN_EXE_equiburst");
    let dir = tempfile::tempdir().unwrap();

    let run = |args: &[&str], threads: &str, out_dir: &std::path::Path| -> (Vec<u8>, bool) {
        let out = std::process::Command::new(bin)
            .args(args)
            .arg("--out-dir")
            .arg(out_dir)
            .env("EQUIBURST_THREADS", threads)
            .output()
            .expect("spawn equiburst");
        (out.stdout, out.status.success())
    };

    let tree_bytes = |root: &std::path::Path| -> Vec<u8> {
        let mut names: Vec<_> = std::fs::read_dir(root)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.is_file())
            .collect();
        names.sort();
        let mut all = Vec::new();
        for p in names {
            all.extend_from_slice(p.file_name().unwrap().to_string_lossy().as_bytes());
            all.extend_from_slice(&std::fs::read(&p).unwrap());
        }
        all
    };

    let mut ok = true;
    let mut detail = Vec::new();

    // simulate across thread counts
    let sim_args =
        ["simulate", "--demo", "48", "--frames", "3", "--scale", "2", "--sigma", "0.01", "--seed", "9", "--out", "b"];
    let d1 = dir.path().join("s1");
    let d2 = dir.path().join("s2");
    std::fs::create_dir_all(&d1).unwrap();
    std::fs::create_dir_all(&d2).unwrap();
    let (_, ok1) = run(&sim_args, "1", &d1);
    let (_, ok2) = run(&sim_args, "4", &d2);
    let same = tree_bytes(&d1.join("b")) == tree_bytes(&d2.join("b"));
    ok &= ok1 && ok2 && same;
    detail.push(format!("simulate byte-identical: {same}"));

    // sweep across thread counts
    let cfg_path = dir.path().join("sweep.cfg");
    std::fs::write(&cfg_path, "h=1/32\np=3\nt=4,8\ntheta=in-group,off-group\nn=24\nreps=2\nlayers=2\nrelu=0\n")
        .unwrap();
    let sweep_args = ["sweep", "--config", cfg_path.to_str().unwrap(), "--out", "sweep.csv"];
    let d1 = dir.path().join("w1");
    let d2 = dir.path().join("w2");
    std::fs::create_dir_all(&d1).unwrap();
    std::fs::create_dir_all(&d2).unwrap();
    let (_, ok1) = run(&sweep_args, "1", &d1);
    let (_, ok2) = run(&sweep_args, "4", &d2);
    let same = std::fs::read(d1.join("sweep.csv")).unwrap() == std::fs::read(d2.join("sweep.csv")).unwrap();
    ok &= ok1 && ok2 && same;
    detail.push(format!("sweep byte-identical: {same}"));

    // selftest output across thread counts
    let (out1, ok1) = run(&["selftest", "--quick"], "1", dir.path());
    let (out2, ok2) = run(&["selftest", "--quick"], "4", dir.path());
    let same = out1 == out2;
    ok &= ok1 && ok2 && same;
    detail.push(format!("selftest byte-identical: {same}"));

    gate.report(10, "determinism", ok, detail.join("; "), t0);
}

#[test]
fn acceptance() {
    let mut gate = Gate::new();
    criterion_1(&mut gate);
    criterion_2(&mut gate);
    criterion_3(&mut gate);
    criterion_4(&mut gate);
    criterion_5(&mut gate);
    criterion_6(&mut gate);
    criterion_7(&mut gate);
    criterion_8(&mut gate);
    criterion_9(&mut gate);
    criterion_10(&mut gate);
    assert!(gate.failures.is_empty(), "acceptance failures:\n{}", gate.failures.join("\n"));
}
