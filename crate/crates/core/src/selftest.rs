//! Runtime property suite behind the `selftest` CLI subcommand, including
//! independent direct-summation oracles for the convolution layers.
//!
//! The oracles reimplement the layer definitions from scratch: filters are
//! re-evaluated term by term from their coefficient tables at explicitly
//! rotated coordinates, and the convolution sums run as plain quadruple
//! loops. They share no code with the production convolution path.

use crate::align::{estimate_transform, SearchConfig};
use crate::conv::{group_conv, lift_conv, project_conv};

use crate::filters::{FilterBank, LayerKind, SteerableFilter};
use crate::fuse::{mdta_fuse, mdta_fuse_detailed, MdtaParams};
use crate::grid::{pixel_shuffle, pixel_unshuffle, GroupFeatureMap, Image};
use crate::meter::{run_sweep, SweepConfig, ThetaSpec};
use crate::transform::{warp_image, AffineTransform};
use rand::{Rng, SeedableRng};

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn pass(name: &'static str, detail: String) -> Self {
        CheckResult { name, passed: true, detail }
    }
    fn fail(name: &'static str, detail: String) -> Self {
        CheckResult { name, passed: false, detail }
    }
}

/// Independent filter evaluation from the coefficient table.
pub fn oracle_eval_filter(f: &SteerableFilter, x: (f64, f64)) -> f64 {
    let r = (x.0 * x.0 + x.1 * x.1).sqrt();
    if r >= f.radius {
        return 0.0;
    }
    let u = 1.0 - (r / f.radius) * (r / f.radius);
    let window = u * u * u;
    let mut acc = 0.0;
    for t in &f.terms {
        let phase = t.freq.0 * x.0 + t.freq.1 * x.1;
        acc += t.cos_coeff * phase.cos() + t.sin_coeff * phase.sin();
    }
    window * acc
}

fn oracle_rotated_sample(f: &SteerableFilter, k: usize, t: usize, i: usize, j: usize, p: usize, h: f64) -> f64 {
    // delta_ij on the centered filter grid, then A_k^-1 applied explicitly
    let d0 = (i as f64 + 1.0 - (p as f64 + 1.0) / 2.0) * h;
    let d1 = (j as f64 + 1.0 - (p as f64 + 1.0) / 2.0) * h;
    let ang = -(std::f64::consts::TAU * k as f64 / t as f64);
    let (s, c) = ang.sin_cos();
    oracle_eval_filter(f, (c * d0 - s * d1, s * d0 + c * d1))
}

/// Brute-force lifting convolution straight from the definition.
pub fn naive_lift_conv(img: &Image, bank: &FilterBank) -> GroupFeatureMap {
    let (t, p, h) = (bank.group_order, bank.filter_size, bank.mesh_size);
    let half = (p as isize - 1) / 2;
    let mut out = GroupFeatureMap::zeros(img.height, img.width, t, bank.out_channels, h);
    for i in 0..img.height {
        for j in 0..img.width {
            for k in 0..t {
                for d in 0..bank.out_channels {
                    let mut acc = 0.0;
                    for c in 0..img.channels {
                        for fi in 0..p {
                            for fj in 0..p {
                                let w = oracle_rotated_sample(bank.filter(0, c, d), k, t, fi, fj, p, h);
                                let si = i as isize - (fi as isize - half);
                                let sj = j as isize - (fj as isize - half);
                                acc += w * img.at_or_zero(si, sj, c);
                            }
                        }
                    }
                    out.set(i, j, k, d, acc);
                }
            }
        }
    }
    out
}

/// Brute-force intermediate group convolution.
pub fn naive_group_conv(fmap: &GroupFeatureMap, bank: &FilterBank) -> GroupFeatureMap {
    let (t, p, h) = (bank.group_order, bank.filter_size, bank.mesh_size);
    let half = (p as isize - 1) / 2;
    let mut out = GroupFeatureMap::zeros(fmap.height, fmap.width, t, bank.out_channels, h);
    for i in 0..fmap.height {
        for j in 0..fmap.width {
            for b in 0..t {
                for d in 0..bank.out_channels {
                    let mut acc = 0.0;
                    for c in 0..fmap.channels {
                        for a in 0..t {
                            for fi in 0..p {
                                for fj in 0..p {
                                    let w = oracle_rotated_sample(bank.filter(a, c, d), b, t, fi, fj, p, h);
                                    let si = i as isize - (fi as isize - half);
                                    let sj = j as isize - (fj as isize - half);
                                    acc += w * fmap.at_or_zero(si, sj, (b + a) % t, c);
                                }
                            }
                        }
                    }
                    out.set(i, j, b, d, acc);
                }
            }
        }
    }
    out
}

/// Brute-force projection convolution.
pub fn naive_project_conv(fmap: &GroupFeatureMap, bank: &FilterBank) -> Image {
    let (t, p, h) = (bank.group_order, bank.filter_size, bank.mesh_size);
    let half = (p as isize - 1) / 2;
    let mut out = Image::zeros(fmap.height, fmap.width, bank.out_channels, h);
    for i in 0..fmap.height {
        for j in 0..fmap.width {
            for d in 0..bank.out_channels {
                let mut acc = 0.0;
                for c in 0..fmap.channels {
                    for b in 0..t {
                        for fi in 0..p {
                            for fj in 0..p {
                                let w = oracle_rotated_sample(bank.filter(0, c, d), b, t, fi, fj, p, h);
                                let si = i as isize - (fi as isize - half);
                                let sj = j as isize - (fj as isize - half);
                                acc += w * fmap.at_or_zero(si, sj, b, c);
                            }
                        }
                    }
                }
                out.set(i, j, d, acc);
            }
        }
    }
    out
}

/// Relative infinity-norm disagreement between two flat slices.
pub fn rel_inf_error(got: &[f64], want: &[f64]) -> f64 {
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    got.iter().zip(want.iter()).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max) / scale
}

/// Oracle equivalence over all instances with the given sizes.
pub fn check_oracle_equivalence(sizes: &[usize], ts: &[usize], channel_pairs: &[(usize, usize)]) -> CheckResult {
    let name = "oracle-equivalence";
    let p = 3;
    let mut worst = 0.0f64;
    let mut cases = 0usize;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xC0FFEE);
    for &n in sizes {
        let h = 1.0 / n as f64;
        for &t in ts {
            for &(cin, cout) in channel_pairs {
                let img = {
                    let data = (0..n * n * cin).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    Image::new(n, n, cin, h, data).unwrap()
                };
                let lift_bank = FilterBank::random(LayerKind::Lifting, cin, cout, t, p, h, &mut rng).unwrap();
                let got = lift_conv(&img, &lift_bank).unwrap();
                let want = naive_lift_conv(&img, &lift_bank);
                worst = worst.max(rel_inf_error(got.data(), want.data()));

                let fmap = {
                    let mut z = GroupFeatureMap::zeros(n, n, t, cin, h);
                    for v in z.data_mut() {
                        *v = rng.gen_range(-1.0..1.0);
                    }
                    z
                };
                let gbank = FilterBank::random(LayerKind::Intermediate, cin, cout, t, p, h, &mut rng).unwrap();
                let got = group_conv(&fmap, &gbank).unwrap();
                let want = naive_group_conv(&fmap, &gbank);
                worst = worst.max(rel_inf_error(got.data(), want.data()));

                let pbank = FilterBank::random(LayerKind::Projection, cin, cout, t, p, h, &mut rng).unwrap();
                let got = project_conv(&fmap, &pbank).unwrap();
                let want = naive_project_conv(&fmap, &pbank);
                worst = worst.max(rel_inf_error(got.data(), want.data()));
                cases += 3;
            }
        }
    }
    let detail = format!("{cases} layer instances, worst relative error {worst:.3e}");
    if worst <= 1e-12 {
        CheckResult::pass(name, detail)
    } else {
        CheckResult::fail(name, detail)
    }
}

/// Bound soundness on a small seeded sweep.
pub fn check_bound_soundness(reps: usize) -> CheckResult {
    let name = "bound-soundness";
    let cfg = SweepConfig {
        h_values: vec![1.0 / 32.0, 1.0 / 64.0],
        p_values: vec![3],
        t_values: vec![4, 8],
        thetas: vec![ThetaSpec::InGroup, ThetaSpec::OffGroup],
        image_size: 32,
        reps,
        layers: 3,
        relu: true,
        ..Default::default()
    };
    match run_sweep(&cfg) {
        Ok(out) => {
            let mut violations = 0usize;
            for r in &out.records {
                if !r.err_commutation.is_nan() && r.err_commutation > r.bound_remark2 {
                    violations += 1;
                }
                if r.err_equivariance > r.bound_thm1 {
                    violations += 1;
                }
            }
            let detail = format!("{} records, {violations} bound violations", out.records.len());
            if violations == 0 {
                CheckResult::pass(name, detail)
            } else {
                CheckResult::fail(name, detail)
            }
        }
        Err(e) => CheckResult::fail(name, format!("sweep failed: {e}")),
    }
}

/// Noiseless alignment recovery on seeded synthetic pairs.
pub fn check_alignment_recovery(pairs: usize) -> CheckResult {
    let name = "alignment-recovery";
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    let field = crate::field::LatentField::random_bandlimited(&mut rng, 8, 0.35, 1.0);
    let img = crate::field::make_grid_image(&[field], 64, 1.0).unwrap();
    let mut theta_errs = Vec::new();
    let mut shift_errs = Vec::new();
    for _ in 0..pairs {
        let truth = AffineTransform::new(
            rng.gen_range(-5.0f64.to_radians()..5.0f64.to_radians()),
            (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
        );
        let frame = warp_image(&img, &truth);
        match estimate_transform(&img, &frame, &SearchConfig::default()) {
            Ok(fa) => {
                theta_errs.push((fa.transform.theta - truth.theta).abs());
                shift_errs
                    .push((fa.transform.b.0 - truth.b.0).abs().max((fa.transform.b.1 - truth.b.1).abs()));
            }
            Err(e) => return CheckResult::fail(name, format!("estimation failed: {e}")),
        }
    }
    theta_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    shift_errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med_theta = theta_errs[theta_errs.len() / 2];
    let med_shift = shift_errs[shift_errs.len() / 2];
    let detail = format!(
        "median |theta err| {:.4} deg, median shift err {:.4} px over {pairs} pairs",
        med_theta.to_degrees(),
        med_shift
    );
    if med_theta <= 0.2f64.to_radians() && med_shift <= 0.1 {
        CheckResult::pass(name, detail)
    } else {
        CheckResult::fail(name, detail)
    }
}

/// Exact-permutation warp paths.
pub fn check_warp_exactness() -> CheckResult {
    let name = "warp-exactness";
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let data: Vec<f64> = (0..36).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let img = Image::new(6, 6, 1, 0.5, data).unwrap();
    let quarter = AffineTransform::new(std::f64::consts::FRAC_PI_2, (0.0, 0.0));
    let mut back = img.clone();
    for _ in 0..4 {
        back = warp_image(&back, &quarter);
    }
    if back != img {
        return CheckResult::fail(name, "four quarter turns are not the identity".into());
    }
    let shift = AffineTransform::new(0.0, (0.5, -1.0));
    let shifted = warp_image(&img, &shift);
    for i in 0..6usize {
        for j in 0..6usize {
            let want = img.at_or_zero(i as isize - 1, j as isize + 2, 0);
            if shifted.at(i, j, 0) != want {
                return CheckResult::fail(name, format!("integer shift not exact at ({i},{j})"));
            }
        }
    }
    CheckResult::pass(name, "quarter turns and integer shifts are exact permutations".into())
}

/// MDTA invariants: residual identity, row-stochastic attention.
pub fn check_mdta_invariants() -> CheckResult {
    let name = "mdta-invariants";
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    let mk = |seed: u64| {
        let mut z = GroupFeatureMap::zeros(6, 6, 2, 2, 1.0);
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for v in z.data_mut() {
            *v = r.gen_range(-1.0..1.0);
        }
        z
    };
    let maps = vec![mk(rng.gen()), mk(rng.gen())];
    let params = MdtaParams::seeded(2, 4, 3, false).unwrap();
    let zeroed = params.clone().with_zero_v();
    match mdta_fuse(&maps, &zeroed) {
        Ok(fused) => {
            if fused[0] != maps[0] || fused[1] != maps[1] {
                return CheckResult::fail(name, "zero-V fusion is not the identity".into());
            }
        }
        Err(e) => return CheckResult::fail(name, format!("fusion failed: {e}")),
    }
    match mdta_fuse_detailed(&maps, &params) {
        Ok((_, attns)) => {
            for attn in attns {
                for r in 0..4 {
                    let s: f64 = attn[r * 4..(r + 1) * 4].iter().sum();
                    if (s - 1.0).abs() > 1e-6 {
                        return CheckResult::fail(name, format!("attention row sums to {s}"));
                    }
                }
            }
        }
        Err(e) => return CheckResult::fail(name, format!("fusion failed: {e}")),
    }
    CheckResult::pass(name, "residual identity and row-stochastic attention hold".into())
}

/// Value-type round trips: pixel shuffle and the file containers.
pub fn check_roundtrips() -> CheckResult {
    let name = "roundtrips";
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
    let data: Vec<f64> = (0..4 * 4 * 8).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let img = Image::new(4, 4, 8, 0.25, data).unwrap();
    let rt = pixel_unshuffle(&pixel_shuffle(&img, 2).unwrap(), 2).unwrap();
    if rt != img {
        return CheckResult::fail(name, "pixel shuffle round trip differs".into());
    }
    let dir = match tempfile_dir() {
        Ok(d) => d,
        Err(e) => return CheckResult::fail(name, format!("tempdir failed: {e}")),
    };
    let path = dir.join("t.eqt");
    let mut z = GroupFeatureMap::zeros(3, 3, 2, 2, 0.125);
    for v in z.data_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    if let Err(e) = crate::io::write_tensor(&path, &z) {
        return CheckResult::fail(name, format!("tensor write failed: {e}"));
    }
    match crate::io::read_tensor(&path) {
        Ok(back) if back == z => {}
        Ok(_) => return CheckResult::fail(name, "tensor round trip differs".into()),
        Err(e) => return CheckResult::fail(name, format!("tensor read failed: {e}")),
    }
    let _ = std::fs::remove_dir_all(&dir);
    CheckResult::pass(name, "pixel shuffle and EQT1 round trips are exact".into())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("equiburst-selftest-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Run the property suite. `quick` trims repetition counts.
pub fn run_selftest(quick: bool) -> Vec<CheckResult> {
    let mut results = Vec::new();
    results.push(check_oracle_equivalence(
        &[4, 6, 8],
        &[1, 2, 4],
        &[(1, 1), (1, 2), (2, 1), (2, 2)],
    ));
    results.push(check_bound_soundness(if quick { 1 } else { 3 }));
    results.push(check_alignment_recovery(if quick { 4 } else { 10 }));
    results.push(check_warp_exactness());
    results.push(check_mdta_invariants());
    results.push(check_roundtrips());
    results
}
