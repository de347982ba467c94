//! Burst alignment: the image-domain alignment loss, a two-stage
//! transform estimator (coarse grid search then derivative-free simplex
//! refinement of the same objective), and feature-domain alignment.
//!
//! The estimator returns the *forward* transform estimate `f_hat`, i.e. the
//! transform such that `warp_image(frame, invert(f_hat))` matches the
//! reference; its inverse is what gets applied to features. Residuals are
//! per-pixel mean squared differences over a fixed interior crop so values
//! are comparable across crop sizes.

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{GroupFeatureMap, Image};
use crate::transform::{warp_image, AffineTransform};

/// Coarse-search and refinement parameters.
#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    /// Angular search half-range, radians.
    pub theta_max: f64,
    /// Coarse angular step, radians.
    pub theta_step: f64,
    /// Translation half-range in pixels (integer coarse grid).
    pub shift_max: f64,
    /// Simplex termination tolerance on the loss spread.
    pub tol: f64,
    /// Simplex evaluation budget.
    pub max_evals: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            theta_max: 10.0f64.to_radians(),
            theta_step: 0.5f64.to_radians(),
            shift_max: 4.0,
            tol: 1e-4,
            max_evals: 200,
        }
    }
}

/// Estimated alignment for one frame.
#[derive(Debug, Clone, Copy)]
pub struct FrameAlignment {
    /// Forward transform estimate (frame ~ transform applied to reference).
    pub transform: AffineTransform,
    /// Final per-frame loss term (per-pixel mean squared residual).
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Per-burst alignment result; index 0 is the reference (identity, zero
/// residual).
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub transforms: Vec<AffineTransform>,
    pub residuals: Vec<f64>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

impl AlignmentResult {
    /// Ground-truth alignment (zero residuals, trivially converged).
    pub fn from_ground_truth(transforms: &[AffineTransform]) -> Self {
        AlignmentResult {
            transforms: transforms.to_vec(),
            residuals: vec![0.0; transforms.len()],
            iterations: vec![0; transforms.len()],
            converged: vec![true; transforms.len()],
        }
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

/// Margin (pixels) beyond which a warp by parameters within
/// `(theta, shift)` bounds cannot pull in out-of-domain samples.
fn warp_margin(height: usize, width: usize, theta: f64, shift_px: f64) -> usize {
    let diag = ((height * height + width * width) as f64).sqrt() / 2.0;
    (shift_px + 2.0 * (theta.abs() / 2.0).sin() * diag).ceil() as usize + 2
}

/// Per-pixel mean squared difference over the interior crop.
fn crop_mse(a: &Image, b: &Image, margin: usize) -> Result<f64> {
    if a.height != b.height || a.width != b.width || a.channels != b.channels {
        return Err(Error::invalid("shape mismatch"));
    }
    if 2 * margin >= a.height || 2 * margin >= a.width {
        return Err(Error::invalid("margin leaves no interior pixels"));
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in margin..a.height - margin {
        for j in margin..a.width - margin {
            for c in 0..a.channels {
                let d = a.at(i, j, c) - b.at(i, j, c);
                acc += d * d;
                count += 1;
            }
        }
    }
    Ok(acc / count as f64)
}

/// Alignment loss: mean over source frames of the per-pixel mean squared
/// residual between `warp_image(frame_j, invert(f_j))` and the reference,
/// on a shared interior crop sized from the largest transform.
pub fn align_loss(reference: &Image, frames: &[Image], transforms: &[AffineTransform]) -> Result<f64> {
    if frames.len() != transforms.len() {
        return Err(Error::invalid("one transform per frame required"));
    }
    if frames.len() < 2 {
        return Err(Error::invalid("alignment loss needs at least two frames"));
    }
    let h = reference.mesh_size;
    let mut margin = 0usize;
    for f in transforms {
        let shift_px = (f.b.0.abs().max(f.b.1.abs())) / h;
        margin = margin.max(warp_margin(reference.height, reference.width, f.theta, shift_px));
    }
    let mut total = 0.0;
    for (frame, f) in frames.iter().zip(transforms.iter()).skip(1) {
        let aligned = warp_image(frame, &f.invert());
        total += crop_mse(&aligned, reference, margin)?;
    }
    Ok(total / (frames.len() - 1) as f64)
}

/// Loss of one candidate aligner `g` (so `g ~ f^-1`): per-pixel MSE between
/// `warp_image(frame, g)` and the reference on a fixed crop, with the
/// rotation applied once and integer shifts folded into index offsets.
fn shifted_mse(rotated: &Image, reference: &Image, si: isize, sj: isize, margin: usize) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in margin..reference.height - margin {
        for j in margin..reference.width - margin {
            for c in 0..reference.channels {
                let d = rotated.at_or_zero(i as isize - si, j as isize - sj, c) - reference.at(i, j, c);
                acc += d * d;
                count += 1;
            }
        }
    }
    acc / count as f64
}

/// Nelder-Mead over (theta, b1, b2). Returns best point, its loss, the
/// evaluation count and whether the loss spread converged within budget.
fn nelder_mead(
    f: &dyn Fn(&[f64; 3]) -> f64,
    x0: [f64; 3],
    steps: [f64; 3],
    tol: f64,
    max_evals: usize,
) -> ([f64; 3], f64, usize, bool) {
    let mut pts: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    let mut evals = 0usize;
    let eval = |x: [f64; 3], evals: &mut usize| {
        *evals += 1;
        f(&x)
    };
    pts.push((x0, eval(x0, &mut evals)));
    for d in 0..3 {
        let mut x = x0;
        x[d] += steps[d];
        pts.push((x, eval(x, &mut evals)));
    }

    let mut converged = false;
    while evals < max_evals {
        pts.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = pts[0].1;
        let worst = pts[3].1;
        // relative spread so small-loss basins refine tightly
        if (worst - best).abs() <= tol * (best.abs() + 1e-12) {
            converged = true;
            break;
        }
        // centroid of all but the worst
        let mut cen = [0.0; 3];
        for p in &pts[..3] {
            for d in 0..3 {
                cen[d] += p.0[d] / 3.0;
            }
        }
        let xw = pts[3].0;
        let refl = [
            cen[0] + (cen[0] - xw[0]),
            cen[1] + (cen[1] - xw[1]),
            cen[2] + (cen[2] - xw[2]),
        ];
        let fr = eval(refl, &mut evals);
        if fr < pts[0].1 {
            let exp = [
                cen[0] + 2.0 * (cen[0] - xw[0]),
                cen[1] + 2.0 * (cen[1] - xw[1]),
                cen[2] + 2.0 * (cen[2] - xw[2]),
            ];
            let fe = eval(exp, &mut evals);
            pts[3] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < pts[2].1 {
            pts[3] = (refl, fr);
        } else {
            let con = [
                cen[0] + 0.5 * (xw[0] - cen[0]),
                cen[1] + 0.5 * (xw[1] - cen[1]),
                cen[2] + 0.5 * (xw[2] - cen[2]),
            ];
            let fc = eval(con, &mut evals);
            if fc < pts[3].1 {
                pts[3] = (con, fc);
            } else {
                // shrink toward the best point
                let xb = pts[0].0;
                for p in pts.iter_mut().skip(1) {
                    for d in 0..3 {
                        p.0[d] = xb[d] + 0.5 * (p.0[d] - xb[d]);
                    }
                    p.1 = eval(p.0, &mut evals);
                }
            }
        }
    }
    pts.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    (pts[0].0, pts[0].1, evals, converged)
}

/// Estimate the transform relating `frame` to `reference` by minimizing the
/// per-frame alignment loss: a coarse grid over angles and integer-pixel
/// shifts, then simplex refinement. Always returns the best point found;
/// `converged` is false on budget exhaustion.
pub fn estimate_transform(reference: &Image, frame: &Image, search: &SearchConfig) -> Result<FrameAlignment> {
    if reference.height != frame.height || reference.width != frame.width || reference.channels != frame.channels {
        return Err(Error::invalid("reference and frame shapes must match"));
    }
    let h = reference.mesh_size;
    let margin = warp_margin(reference.height, reference.width, search.theta_max, search.shift_max + 1.0);
    if 2 * margin >= reference.height || 2 * margin >= reference.width {
        return Err(Error::invalid("image too small for the requested search range"));
    }

    // Stage 1: coarse grid over the aligner g ~ f^-1. One rotation per
    // angle; integer shifts fold into index offsets.
    let n_steps = (search.theta_max / search.theta_step).round() as i64;
    let smax = search.shift_max.floor() as isize;
    let angle_losses: Vec<(f64, isize, isize, f64)> = exec::map_indexed((2 * n_steps + 1) as usize, |ai| {
        let theta = (ai as i64 - n_steps) as f64 * search.theta_step;
        let rotated = if theta == 0.0 {
            frame.clone()
        } else {
            warp_image(frame, &AffineTransform::new(theta, (0.0, 0.0)))
        };
        let mut best = (theta, 0isize, 0isize, f64::INFINITY);
        for si in -smax..=smax {
            for sj in -smax..=smax {
                let loss = shifted_mse(&rotated, reference, si, sj, margin);
                if loss < best.3 {
                    best = (theta, si, sj, loss);
                }
            }
        }
        best
    });
    let coarse = angle_losses
        .into_iter()
        .min_by(|a, b| a.3.partial_cmp(&b.3).unwrap_or(std::cmp::Ordering::Equal))
        .expect("nonempty angle grid");

    // Stage 2: simplex refinement of (theta, b1, b2) for the aligner.
    let objective = |x: &[f64; 3]| -> f64 {
        let g = AffineTransform::new(x[0], (x[1], x[2]));
        let aligned = warp_image(frame, &g);
        crop_mse(&aligned, reference, margin).unwrap_or(f64::INFINITY)
    };
    let x0 = [coarse.0, coarse.1 as f64 * h, coarse.2 as f64 * h];
    let steps = [search.theta_step / 2.0, h / 2.0, h / 2.0];
    let (xb, loss, evals, converged) = nelder_mead(&objective, x0, steps, search.tol, search.max_evals);

    let aligner = AffineTransform::new(xb[0], (xb[1], xb[2]));
    Ok(FrameAlignment { transform: aligner.invert(), residual: loss, iterations: evals, converged })
}

/// Align every frame of a burst against frame 0.
pub fn align_burst(frames: &[Image], search: &SearchConfig) -> Result<AlignmentResult> {
    if frames.len() < 2 {
        return Err(Error::invalid("a burst needs at least 2 frames"));
    }
    let per_frame: Vec<Result<FrameAlignment>> =
        exec::map_indexed(frames.len() - 1, |j| estimate_transform(&frames[0], &frames[j + 1], search));
    let mut result = AlignmentResult {
        transforms: vec![AffineTransform::identity()],
        residuals: vec![0.0],
        iterations: vec![0],
        converged: vec![true],
    };
    for fa in per_frame {
        let fa = fa?;
        result.transforms.push(fa.transform);
        result.residuals.push(fa.residual);
        result.iterations.push(fa.iterations);
        result.converged.push(fa.converged);
    }
    Ok(result)
}

/// Apply `invert(f_j)` to every source feature map; the reference map
/// (index 0) passes through untouched.
pub fn align_features(fmaps: &[GroupFeatureMap], transforms: &[AffineTransform]) -> Result<Vec<GroupFeatureMap>> {
    if fmaps.len() != transforms.len() {
        return Err(Error::invalid("one transform per feature map required"));
    }
    Ok(fmaps
        .iter()
        .zip(transforms.iter())
        .enumerate()
        .map(|(j, (z, f))| {
            if j == 0 {
                z.clone()
            } else {
                crate::transform::warp_feature(z, &f.invert())
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_grid_image, LatentField};
    use crate::scene::test_scene;
    use rand::{Rng, SeedableRng};

    #[test]
    fn loss_zero_for_identical_frames() {
        let img = test_scene(32, 1);
        let frames = vec![img.clone(), img.clone(), img.clone()];
        let tfs = vec![AffineTransform::identity(); 3];
        assert_eq!(align_loss(&img, &frames, &tfs).unwrap(), 0.0);
    }

    #[test]
    fn loss_with_true_transform_beats_identity() {
        let img = test_scene(48, 2);
        let f = AffineTransform::new(0.05, (1.2, -0.7));
        let frame = warp_image(&img, &f);
        let frames = vec![img.clone(), frame];
        let good = align_loss(&img, &frames, &[AffineTransform::identity(), f]).unwrap();
        let bad = align_loss(&img, &frames, &[AffineTransform::identity(); 2]).unwrap();
        assert!(good < bad / 10.0, "aligned {good} vs unaligned {bad}");
    }

    #[test]
    fn loss_duplicate_pair_renormalizes() {
        let img = test_scene(40, 3);
        let f = AffineTransform::new(0.02, (0.5, 0.5));
        let frame = warp_image(&img, &f);
        let frames2 = vec![img.clone(), frame.clone()];
        let tfs2 = vec![AffineTransform::identity(), f];
        let l2 = align_loss(&img, &frames2, &tfs2).unwrap();
        let frames3 = vec![img.clone(), frame.clone(), frame];
        let tfs3 = vec![AffineTransform::identity(), f, f];
        let l3 = align_loss(&img, &frames3, &tfs3).unwrap();
        // duplicating the same (frame, transform) pair keeps the average
        let expect = (l2 * 1.0 + l2) / 2.0;
        assert!((l3 - expect).abs() < 1e-12);
    }

    #[test]
    fn estimate_identical_frame_is_identity() {
        let img = test_scene(48, 4);
        let fa = estimate_transform(&img, &img, &SearchConfig::default()).unwrap();
        assert!(fa.transform.theta.abs() < 1e-6);
        assert!(fa.transform.b.0.abs() < 1e-6 && fa.transform.b.1.abs() < 1e-6);
        assert!(fa.residual < 1e-12);
    }

    /// Band-limited smooth image in pixel units (mesh size 1).
    fn smooth_image(n: usize, seed: u64) -> Image {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let field = LatentField::random_bandlimited(&mut rng, 8, 0.35, 1.0);
        make_grid_image(&[field], n, 1.0).unwrap()
    }

    #[test]
    fn estimate_recovers_small_rotation_translation() {
        let img = smooth_image(64, 5);
        let truth = AffineTransform::new(3.0f64.to_radians(), (1.2, -0.7));
        let frame = warp_image(&img, &truth);
        let fa = estimate_transform(&img, &frame, &SearchConfig::default()).unwrap();
        assert!(
            (fa.transform.theta - truth.theta).abs() <= 0.2f64.to_radians(),
            "theta error {}",
            (fa.transform.theta - truth.theta).to_degrees()
        );
        assert!((fa.transform.b.0 - truth.b.0).abs() <= 0.1);
        assert!((fa.transform.b.1 - truth.b.1).abs() <= 0.1);
    }

    #[test]
    fn estimate_exact_integer_shift() {
        let img = test_scene(48, 6);
        let truth = AffineTransform::new(0.0, (2.0, 0.0));
        let frame = warp_image(&img, &truth);
        let fa = estimate_transform(&img, &frame, &SearchConfig::default()).unwrap();
        assert!((fa.transform.b.0 - 2.0).abs() <= 0.02, "b {:?}", fa.transform.b);
        assert!(fa.transform.b.1.abs() <= 0.02);
        assert!(fa.transform.theta.abs() <= 0.05f64.to_radians());
        assert!(fa.residual < 1e-6);
    }

    /// The optimizer never does worse than no alignment.
    #[test]
    fn estimated_loss_not_worse_than_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let img = test_scene(48, 7);
        for _ in 0..3 {
            let truth = AffineTransform::new(
                rng.gen_range(-0.06..0.06),
                (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)),
            );
            let frame = warp_image(&img, &truth);
            let fa = estimate_transform(&img, &frame, &SearchConfig::default()).unwrap();
            let frames = vec![img.clone(), frame];
            let id_loss = align_loss(&img, &frames, &[AffineTransform::identity(); 2]).unwrap();
            assert!(fa.residual <= id_loss + 1e-15, "{} vs {}", fa.residual, id_loss);
        }
    }

    #[test]
    fn align_features_passes_reference_through() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let mut z0 = GroupFeatureMap::zeros(8, 8, 4, 1, 0.25);
        for v in z0.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let z1 = z0.map(|v| v * 0.5);
        let f = AffineTransform::new(0.1, (0.25, 0.0));
        let aligned = align_features(&[z0.clone(), z1.clone()], &[AffineTransform::identity(), f]).unwrap();
        assert_eq!(aligned[0], z0);
        let expect = crate::transform::warp_feature(&z1, &f.invert());
        assert_eq!(aligned[1], expect);
        assert!(align_features(&[z0], &[]).is_err());
    }

    /// Feature round trip: if Z_j is exactly the warped Z_0, aligning
    /// brings it back up to resampling error.
    #[test]
    fn feature_roundtrip_alignment() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let t = 4usize;
        let n = 48usize;
        let h = 1.0 / n as f64;
        let fields: Vec<LatentField> =
            (0..t).map(|_| LatentField::random_bandlimited(&mut rng, 4, 4.0, 1.0)).collect();
        let mut z0 = GroupFeatureMap::zeros(n, n, t, 1, h);
        for k in 0..t {
            let img = make_grid_image(&[fields[k].clone()], n, h).unwrap();
            for i in 0..n {
                for j in 0..n {
                    z0.set(i, j, k, 0, img.at(i, j, 0));
                }
            }
        }
        let f = AffineTransform::new(std::f64::consts::TAU / t as f64, (2.0 * h, -1.0 * h));
        let zj = crate::transform::warp_feature(&z0, &f);
        let aligned = align_features(&[z0.clone(), zj], &[AffineTransform::identity(), f]).unwrap();
        let err = aligned[1].max_abs_diff_interior(&z0, n / 4).unwrap();
        assert!(err < 1e-12, "round-trip error {err}");
    }
}
