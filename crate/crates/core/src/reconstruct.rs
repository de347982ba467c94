//! Upscaled reconstruction from an aligned burst.
//!
//! The output follows `PS(base + Avg_W(per-frame contributions))` where
//! `base` is the bilinearly upsampled packed reference mapped from RGGB to
//! twelve channels (the four pixel-shuffle phases of RGB), `Avg_W` is a
//! convex combination with residual-driven weights
//! `w_j ∝ exp(-lambda * residual_j)`, and `PS` is the ×2 pixel shuffle back
//! to full-resolution RGB.

use crate::align::AlignmentResult;
use crate::burst::BurstSequence;
use crate::error::{Error, Result};
use crate::grid::{pixel_shuffle, pixel_unshuffle, GroupFeatureMap, Image};
use crate::transform::{upsample_bicubic, upsample_bilinear, AffineTransform};
use rand::{Rng, SeedableRng};

/// How per-frame contributions are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// No contributions; the output is the pure interpolation baseline.
    Zero,
    /// Classic shift-and-add: each packed frame is resampled onto the
    /// upscaled reference grid through its inverse transform.
    ShiftAndAdd,
    /// Equivariant-network features, bilinearly upsampled and projected to
    /// the twelve phase channels by a fixed seeded map.
    Equivariant,
}

impl std::str::FromStr for FeatureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(FeatureMode::Zero),
            "shift-and-add" => Ok(FeatureMode::ShiftAndAdd),
            "equivariant" => Ok(FeatureMode::Equivariant),
            other => Err(Error::invalid(format!("unknown feature mode '{other}'"))),
        }
    }
}

/// Reconstruction knobs.
#[derive(Debug, Clone, Copy)]
pub struct ReconstructConfig {
    pub mode: FeatureMode,
    /// Residual-to-weight sharpness of `Avg_W`.
    pub lambda: f64,
    /// Seed of the fixed feature-to-phase projection (equivariant mode).
    pub seed: u64,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig { mode: FeatureMode::ShiftAndAdd, lambda: 10.0, seed: 0 }
    }
}

/// Map packed RGGB channels to the twelve pixel-shuffle phase channels:
/// each phase receives `(R, (G1+G2)/2, B)`.
fn rggb_to_phases(packed: &Image) -> Result<Image> {
    if packed.channels != 4 {
        return Err(Error::invalid("expected a 4-channel packed image"));
    }
    let mut out = Image::zeros(packed.height, packed.width, 12, packed.mesh_size);
    for i in 0..packed.height {
        for j in 0..packed.width {
            let rgb = [
                packed.at(i, j, 0),
                0.5 * (packed.at(i, j, 1) + packed.at(i, j, 2)),
                packed.at(i, j, 3),
            ];
            for (c, v) in rgb.iter().enumerate() {
                for phase in 0..4 {
                    out.set(i, j, c * 4 + phase, *v);
                }
            }
        }
    }
    Ok(out)
}

/// Convex combination weights `w_j ∝ exp(-lambda * residual_j)`.
pub fn residual_weights(residuals: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if residuals.is_empty() {
        return Err(Error::invalid("no residuals"));
    }
    let mn = residuals.iter().cloned().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = residuals.iter().map(|r| (-lambda * (r - mn)).exp()).collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / sum).collect())
}

// Sub-pixel position of each packed RGGB channel relative to the packed
// pixel center, in units of the packed mesh.
const PHASE_OFF: [(f64, f64); 4] = [(-0.25, -0.25), (-0.25, 0.25), (0.25, -0.25), (0.25, 0.25)];
// packed channels contributing to each color plane
const COLOR_SOURCES: [&[usize]; 3] = [&[0], &[1, 2], &[3]];

/// Estimate the scene at every full-resolution grid point from one packed
/// frame by normalized convolution: each Bayer sample is placed at its
/// true sub-pixel position under the frame's forward transform and
/// gathered with a Gaussian distance weight. Where a frame has no samples
/// nearby the estimate decays to `fallback`.
fn normalized_gather(frame: &Image, forward: &AffineTransform, fallback: &Image) -> Image {
    let (height, width) = (fallback.height, fallback.width);
    let out_mesh = fallback.mesh_size;
    let m_p = frame.mesh_size;
    let sigma = 0.6 * 2.0 * out_mesh; // in length units; out grid is h, phases sit h/2 apart
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    let window = (3.0 * sigma / m_p).ceil() as isize + 1;
    let eps = 1e-3;

    let mut out = Image::zeros(height, width, 3, out_mesh);
    crate::exec::fill_chunks(out.data_mut(), width * 3, |i, row| {
        let yi = (i as f64 - (height as f64 - 1.0) / 2.0) * out_mesh;
        for j in 0..width {
            let yj = (j as f64 - (width as f64 - 1.0) / 2.0) * out_mesh;
            // frame-domain position observing the scene point (yi, yj)
            let q = forward.apply((yi, yj));
            for color in 0..3 {
                let mut num = 0.0;
                let mut den = 0.0;
                for &cc in COLOR_SOURCES[color] {
                    let off = PHASE_OFF[cc];
                    // fractional packed index of this channel's sample grid
                    let fi = (q.0 - off.0 * m_p) / m_p + (frame.height as f64 - 1.0) / 2.0;
                    let fj = (q.1 - off.1 * m_p) / m_p + (frame.width as f64 - 1.0) / 2.0;
                    let (ci, cj) = (fi.round() as isize, fj.round() as isize);
                    for a in ci - window..=ci + window {
                        if a < 0 || a >= frame.height as isize {
                            continue;
                        }
                        for b in cj - window..=cj + window {
                            if b < 0 || b >= frame.width as isize {
                                continue;
                            }
                            let d0 = (a as f64 - fi) * m_p;
                            let d1 = (b as f64 - fj) * m_p;
                            let w = (-(d0 * d0 + d1 * d1) * inv2s2).exp();
                            num += w * frame.at(a as usize, b as usize, cc);
                            den += w;
                        }
                    }
                }
                let fb = fallback.at(i, j, color);
                row[j * 3 + color] = (num + eps * fb) / (den + eps);
            }
        }
    });
    out
}

fn check_burst(burst: &BurstSequence) -> Result<(usize, usize, usize)> {
    if !burst.mosaic {
        return Err(Error::invalid("reconstruction requires an RGGB-packed burst"));
    }
    let r = &burst.frames[0];
    if r.channels != 4 {
        return Err(Error::invalid("packed frames must have 4 channels"));
    }
    for f in &burst.frames {
        if f.height != r.height || f.width != r.width || f.channels != 4 {
            return Err(Error::invalid("all frames must share the packed shape"));
        }
    }
    Ok((r.height, r.width, burst.scale))
}

/// Single-frame bicubic baseline: upsample the packed reference, replicate
/// RGGB into the phase channels, pixel-shuffle to full-resolution RGB.
pub fn bicubic_baseline(burst: &BurstSequence) -> Result<Image> {
    let (_, _, s) = check_burst(burst)?;
    let up = upsample_bicubic(&burst.frames[0], s);
    pixel_shuffle(&rggb_to_phases(&up)?, 2)
}

/// Reconstruct an upscaled RGB image from the burst.
///
/// `fused` supplies the per-frame feature maps for
/// [`FeatureMode::Equivariant`] and is ignored otherwise.
pub fn reconstruct(
    burst: &BurstSequence,
    alignment: &AlignmentResult,
    fused: &[GroupFeatureMap],
    cfg: &ReconstructConfig,
) -> Result<Image> {
    let (hh, ww, s) = check_burst(burst)?;
    let b = burst.frames.len();
    if alignment.transforms.len() != b || alignment.residuals.len() != b {
        return Err(Error::invalid("alignment must cover every frame"));
    }
    let (out_h, out_w) = (hh * s, ww * s);
    let base = rggb_to_phases(&upsample_bilinear(&burst.frames[0], s))?;
    let weights = residual_weights(&alignment.residuals, cfg.lambda)?;

    let mut acc = base.clone();
    match cfg.mode {
        FeatureMode::Zero => {}
        FeatureMode::ShiftAndAdd => {
            // hole fallback for normalized gathering: the plain upsampled
            // reference at full resolution
            let base_hr = pixel_shuffle(&base, 2)?;
            for (j, frame) in burst.frames.iter().enumerate() {
                let est_hr = normalized_gather(frame, &alignment.transforms[j], &base_hr);
                let phased = pixel_unshuffle(&est_hr, 2)?;
                let w = weights[j];
                for (a, (p, bse)) in
                    acc.data_mut().iter_mut().zip(phased.data().iter().zip(base.data().iter()))
                {
                    *a += w * (p - bse);
                }
            }
        }
        FeatureMode::Equivariant => {
            if fused.len() != b {
                return Err(Error::invalid(format!("need {} fused feature maps, got {}", b, fused.len())));
            }
            let z0 = &fused[0];
            if z0.height != hh || z0.width != ww {
                return Err(Error::invalid("feature maps must match the packed frame shape"));
            }
            let cf = z0.group_order * z0.channels;
            // fixed seeded projection to the 12 phase channels
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
            let proj: Vec<f64> = (0..12 * cf).map(|_| rng.gen_range(-1.0..1.0) / cf as f64).collect();
            for (j, z) in fused.iter().enumerate() {
                if z.group_order != z0.group_order || z.channels != z0.channels {
                    return Err(Error::invalid("feature maps must share group order and channels"));
                }
                // upsample each flattened channel bilinearly
                let mut up_channels = Vec::with_capacity(cf);
                for k in 0..z.group_order {
                    for c in 0..z.channels {
                        up_channels.push(upsample_bilinear(&z.slice(k, c), s));
                    }
                }
                let w = weights[j];
                for i in 0..out_h {
                    for jj in 0..out_w {
                        for o in 0..12 {
                            let mut v = 0.0;
                            for (ci, ch) in up_channels.iter().enumerate() {
                                v += proj[o * cf + ci] * ch.at(i, jj, 0);
                            }
                            let idx = (i * out_w + jj) * 12 + o;
                            acc.data_mut()[idx] += w * v;
                        }
                    }
                }
            }
        }
    }
    pixel_shuffle(&acc, 2)
}
