//! Channel-attention feature fusion.
//!
//! For each frame the aligned features are concatenated with the reference
//! features along channels, projected to queries/keys/values by pointwise
//! (1×1) maps followed by depthwise 3×3 convolutions, and fused through a
//! transposed attention: the attention matrix is the (channels × channels)
//! cross-covariance of the spatially flattened Q and K, softmax-normalized
//! over the key-channel axis, applied to V, with a residual connection back
//! to the aligned features.

use crate::error::{Error, Result};
use crate::grid::GroupFeatureMap;
use rand::{Rng, SeedableRng};

/// Projection weights and temperature for one frame.
#[derive(Debug, Clone)]
pub struct FrameMdta {
    /// Pointwise maps, `channels x (2 channels)` row-major.
    pub wp_q: Vec<f64>,
    pub wp_k: Vec<f64>,
    pub wp_v: Vec<f64>,
    /// Depthwise 3×3 kernels, `channels x 9` row-major.
    pub wd_q: Vec<f64>,
    pub wd_k: Vec<f64>,
    pub wd_v: Vec<f64>,
    /// Softmax temperature, positive.
    pub alpha: f64,
}

/// Per-frame MDTA parameters over the flattened `t*C` channel view.
#[derive(Debug, Clone)]
pub struct MdtaParams {
    pub frames: Vec<FrameMdta>,
    pub channels: usize,
    pub seed: u64,
}

impl MdtaParams {
    /// Seeded random parameters. With `identity_depthwise` the 3×3 kernels
    /// are exact deltas, which makes the fusion act purely across channels.
    pub fn seeded(num_frames: usize, channels: usize, seed: u64, identity_depthwise: bool) -> Result<Self> {
        if num_frames == 0 || channels == 0 {
            return Err(Error::invalid("need at least one frame and one channel"));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (2 * channels) as f64;
        let mut frames = Vec::with_capacity(num_frames);
        for _ in 0..num_frames {
            let mut pointwise = || -> Vec<f64> {
                (0..channels * 2 * channels).map(|_| rng.gen_range(-1.0..1.0) * scale).collect()
            };
            let (wp_q, wp_k, wp_v) = (pointwise(), pointwise(), pointwise());
            let depthwise = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                let mut w = vec![0.0; channels * 9];
                for c in 0..channels {
                    if identity_depthwise {
                        w[c * 9 + 4] = 1.0;
                    } else {
                        for tap in 0..9 {
                            w[c * 9 + tap] = rng.gen_range(-1.0..1.0) / 9.0;
                        }
                        w[c * 9 + 4] += 1.0;
                    }
                }
                w
            };
            let (wd_q, wd_k, wd_v) = (depthwise(&mut rng), depthwise(&mut rng), depthwise(&mut rng));
            let alpha = (channels as f64).sqrt() * rng.gen_range(0.75..1.25);
            frames.push(FrameMdta { wp_q, wp_k, wp_v, wd_q, wd_k, wd_v, alpha });
        }
        Ok(MdtaParams { frames, channels, seed })
    }

    /// Zero out every V-path projection; fusion then reduces to the
    /// residual identity.
    pub fn with_zero_v(mut self) -> Self {
        for f in &mut self.frames {
            for w in &mut f.wp_v {
                *w = 0.0;
            }
        }
        self
    }
}

/// Flattened `H x W x (t*C)` view of a feature map, channel index `k*C + c`.
fn flatten(z: &GroupFeatureMap) -> Vec<f64> {
    z.data().to_vec()
}

fn pointwise_apply(x: &[f64], w: &[f64], pixels: usize, cin: usize, cout: usize) -> Vec<f64> {
    let mut out = vec![0.0; pixels * cout];
    for pix in 0..pixels {
        let row = &x[pix * cin..(pix + 1) * cin];
        for o in 0..cout {
            let wrow = &w[o * cin..(o + 1) * cin];
            let mut acc = 0.0;
            for i in 0..cin {
                acc += wrow[i] * row[i];
            }
            out[pix * cout + o] = acc;
        }
    }
    out
}

fn depthwise3x3(x: &[f64], w: &[f64], height: usize, width: usize, channels: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in 0..height {
        for j in 0..width {
            for c in 0..channels {
                let kern = &w[c * 9..(c + 1) * 9];
                let mut acc = 0.0;
                for di in 0..3isize {
                    let si = i as isize + di - 1;
                    if si < 0 || si >= height as isize {
                        continue;
                    }
                    for dj in 0..3isize {
                        let sj = j as isize + dj - 1;
                        if sj < 0 || sj >= width as isize {
                            continue;
                        }
                        acc += kern[(di * 3 + dj) as usize] * x[(si as usize * width + sj as usize) * channels + c];
                    }
                }
                out[(i * width + j) * channels + c] = acc;
            }
        }
    }
    out
}

fn softmax_rows(m: &mut [f64], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &mut m[r * cols..(r + 1) * cols];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Fuse aligned features against the reference (index 0). Returns the
/// fused maps and, per frame, the softmax-normalized attention matrix
/// (`channels x channels`, rows summing to one).
pub fn mdta_fuse_detailed(
    aligned: &[GroupFeatureMap],
    params: &MdtaParams,
) -> Result<(Vec<GroupFeatureMap>, Vec<Vec<f64>>)> {
    if aligned.is_empty() {
        return Err(Error::invalid("no frames to fuse"));
    }
    if params.frames.len() != aligned.len() {
        return Err(Error::invalid(format!(
            "params cover {} frames, got {}",
            params.frames.len(),
            aligned.len()
        )));
    }
    let z0 = &aligned[0];
    let cf = z0.group_order * z0.channels;
    if cf != params.channels {
        return Err(Error::invalid(format!("params built for {} channels, maps have {cf}", params.channels)));
    }
    for z in aligned {
        if z.height != z0.height || z.width != z0.width || z.group_order != z0.group_order || z.channels != z0.channels
        {
            return Err(Error::invalid("all feature maps must share shape"));
        }
    }
    let (height, width) = (z0.height, z0.width);
    let pixels = height * width;
    let x0 = flatten(z0);

    let mut fused = Vec::with_capacity(aligned.len());
    let mut attns = Vec::with_capacity(aligned.len());
    for (zj, pf) in aligned.iter().zip(params.frames.iter()) {
        if pf.alpha <= 0.0 {
            return Err(Error::invalid("temperature must be positive"));
        }
        let xj = flatten(zj);
        // concat channels: [Z_j, Z_0]
        let mut x = vec![0.0; pixels * 2 * cf];
        for pix in 0..pixels {
            x[pix * 2 * cf..pix * 2 * cf + cf].copy_from_slice(&xj[pix * cf..(pix + 1) * cf]);
            x[pix * 2 * cf + cf..(pix + 1) * 2 * cf].copy_from_slice(&x0[pix * cf..(pix + 1) * cf]);
        }
        let q = depthwise3x3(&pointwise_apply(&x, &pf.wp_q, pixels, 2 * cf, cf), &pf.wd_q, height, width, cf);
        let k = depthwise3x3(&pointwise_apply(&x, &pf.wp_k, pixels, 2 * cf, cf), &pf.wd_k, height, width, cf);
        let v = depthwise3x3(&pointwise_apply(&x, &pf.wp_v, pixels, 2 * cf, cf), &pf.wd_v, height, width, cf);

        // attention: rows are query channels, columns key channels
        let mut attn = vec![0.0; cf * cf];
        for pix in 0..pixels {
            for qi in 0..cf {
                let qv = q[pix * cf + qi];
                for ki in 0..cf {
                    attn[qi * cf + ki] += qv * k[pix * cf + ki];
                }
            }
        }
        for a in &mut attn {
            *a /= pf.alpha;
        }
        softmax_rows(&mut attn, cf, cf);

        let mut out = zj.clone();
        let data = out.data_mut();
        for pix in 0..pixels {
            for qi in 0..cf {
                let mut acc = 0.0;
                for ki in 0..cf {
                    acc += attn[qi * cf + ki] * v[pix * cf + ki];
                }
                data[pix * cf + qi] += acc;
            }
        }
        fused.push(out);
        attns.push(attn);
    }
    Ok((fused, attns))
}

/// Fuse aligned features against the reference (index 0).
pub fn mdta_fuse(aligned: &[GroupFeatureMap], params: &MdtaParams) -> Result<Vec<GroupFeatureMap>> {
    Ok(mdta_fuse_detailed(aligned, params)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_map(n: usize, t: usize, c: usize, seed: u64) -> GroupFeatureMap {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut z = GroupFeatureMap::zeros(n, n, t, c, 1.0);
        for v in z.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        z
    }

    #[test]
    fn zero_v_is_residual_identity() {
        let maps = vec![random_map(6, 2, 2, 1), random_map(6, 2, 2, 2)];
        let params = MdtaParams::seeded(2, 4, 7, false).unwrap().with_zero_v();
        let fused = mdta_fuse(&maps, &params).unwrap();
        assert_eq!(fused[0], maps[0]);
        assert_eq!(fused[1], maps[1]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let maps = vec![random_map(6, 2, 2, 3), random_map(6, 2, 2, 4)];
        let params = MdtaParams::seeded(2, 4, 8, false).unwrap();
        let (_, attns) = mdta_fuse_detailed(&maps, &params).unwrap();
        for attn in attns {
            for r in 0..4 {
                let s: f64 = attn[r * 4..(r + 1) * 4].iter().sum();
                assert!((s - 1.0).abs() < 1e-6, "row sum {s}");
                assert!(attn[r * 4..(r + 1) * 4].iter().all(|&v| v >= 0.0));
            }
        }
    }

    /// With identity depthwise kernels the attention aggregates over
    /// spatial positions, so permuting pixels of all inputs permutes the
    /// outputs identically.
    #[test]
    fn spatial_permutation_equivariance_with_identity_depthwise() {
        use rand::seq::SliceRandom;
        let n = 5usize;
        let maps = vec![random_map(n, 2, 1, 5), random_map(n, 2, 1, 6)];
        let params = MdtaParams::seeded(2, 2, 9, true).unwrap();
        let fused = mdta_fuse(&maps, &params).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let mut perm: Vec<usize> = (0..n * n).collect();
        perm.shuffle(&mut rng);

        let permute = |z: &GroupFeatureMap| -> GroupFeatureMap {
            let cf = z.group_order * z.channels;
            let mut out = z.clone();
            let src = z.data().to_vec();
            let dst = out.data_mut();
            for (pix, &to) in perm.iter().enumerate() {
                dst[to * cf..(to + 1) * cf].copy_from_slice(&src[pix * cf..(pix + 1) * cf]);
            }
            out
        };
        let pmaps: Vec<GroupFeatureMap> = maps.iter().map(permute).collect();
        let pfused = mdta_fuse(&pmaps, &params).unwrap();
        for (f, pf) in fused.iter().zip(pfused.iter()) {
            let expect = permute(f);
            let err = expect
                .data()
                .iter()
                .zip(pf.data().iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(err < 1e-12, "permutation equivariance violated: {err}");
        }
    }

    #[test]
    fn shape_and_param_mismatches_rejected() {
        let maps = vec![random_map(6, 2, 2, 1), random_map(5, 2, 2, 2)];
        let params = MdtaParams::seeded(2, 4, 7, false).unwrap();
        assert!(mdta_fuse(&maps, &params).is_err());
        let maps = vec![random_map(6, 2, 2, 1)];
        assert!(mdta_fuse(&maps, &params).is_err());
    }
}
