//! Synthetic burst generation: random rotation-translation motion,
//! box downsampling, additive Gaussian noise and RGGB Bayer mosaicking,
//! with the ground-truth transforms retained.
//!
//! Degradation order per frame: warp, downsample, noise, mosaic. Frames are
//! generated from per-frame substreams (`seed xor frame index`) so parallel
//! generation never changes the output.

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::Image;
use crate::transform::{transform_from_manifest, warp_image, AffineTransform};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use std::path::Path;

/// A burst of degraded frames plus generation metadata. Frame 0 is the
/// reference; its ground-truth transform is the identity.
#[derive(Debug, Clone)]
pub struct BurstSequence {
    /// RGGB-packed 4-channel frames at half mosaic resolution when
    /// `mosaic` is set, otherwise RGB LR frames.
    pub frames: Vec<Image>,
    /// Ground-truth forward transforms: `frame_j ~ f_j(reference scene)`.
    pub transforms: Vec<AffineTransform>,
    pub scale: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub mosaic: bool,
}

/// RGGB mosaic of an RGB image: 2×2 tiles with R at (0,0), G at (0,1) and
/// (1,0), B at (1,1).
pub fn mosaic_rggb(rgb: &Image) -> Result<Image> {
    if rgb.channels != 3 {
        return Err(Error::invalid("mosaic_rggb expects a 3-channel image"));
    }
    if rgb.height % 2 != 0 || rgb.width % 2 != 0 {
        return Err(Error::invalid("mosaic requires even dimensions"));
    }
    let mut out = Image::zeros(rgb.height, rgb.width, 1, rgb.mesh_size);
    for i in 0..rgb.height {
        for j in 0..rgb.width {
            let c = match (i % 2, j % 2) {
                (0, 0) => 0,
                (1, 1) => 2,
                _ => 1,
            };
            out.set(i, j, 0, rgb.at(i, j, c));
        }
    }
    Ok(out)
}

/// Gather the four mosaic phases into channels `(R, G1, G2, B)` at half
/// resolution; inverse of [`unpack4`].
pub fn pack4(mosaic: &Image) -> Result<Image> {
    if mosaic.channels != 1 {
        return Err(Error::invalid("pack4 expects a 1-channel mosaic"));
    }
    if mosaic.height % 2 != 0 || mosaic.width % 2 != 0 {
        return Err(Error::invalid("pack4 requires even dimensions"));
    }
    let (hh, ww) = (mosaic.height / 2, mosaic.width / 2);
    let mut out = Image::zeros(hh, ww, 4, mosaic.mesh_size * 2.0);
    for i in 0..hh {
        for j in 0..ww {
            out.set(i, j, 0, mosaic.at(2 * i, 2 * j, 0));
            out.set(i, j, 1, mosaic.at(2 * i, 2 * j + 1, 0));
            out.set(i, j, 2, mosaic.at(2 * i + 1, 2 * j, 0));
            out.set(i, j, 3, mosaic.at(2 * i + 1, 2 * j + 1, 0));
        }
    }
    Ok(out)
}

/// Interleave a 4-channel packed image back into a 1-channel mosaic;
/// bit-exact inverse of [`pack4`].
pub fn unpack4(packed: &Image) -> Result<Image> {
    if packed.channels != 4 {
        return Err(Error::invalid("unpack4 expects a 4-channel image"));
    }
    let (hh, ww) = (packed.height, packed.width);
    let mut out = Image::zeros(hh * 2, ww * 2, 1, packed.mesh_size / 2.0);
    for i in 0..hh {
        for j in 0..ww {
            out.set(2 * i, 2 * j, 0, packed.at(i, j, 0));
            out.set(2 * i, 2 * j + 1, 0, packed.at(i, j, 1));
            out.set(2 * i + 1, 2 * j, 0, packed.at(i, j, 2));
            out.set(2 * i + 1, 2 * j + 1, 0, packed.at(i, j, 3));
        }
    }
    Ok(out)
}

/// `s x s` box-average downsampling; the mesh size multiplies by `s`.
pub fn downsample(img: &Image, s: usize) -> Result<Image> {
    if s == 0 {
        return Err(Error::invalid("scale must be positive"));
    }
    if img.height % s != 0 || img.width % s != 0 {
        return Err(Error::invalid(format!("dimensions {}x{} not divisible by {s}", img.height, img.width)));
    }
    if s == 1 {
        return Ok(img.clone());
    }
    let (hh, ww) = (img.height / s, img.width / s);
    let norm = 1.0 / (s * s) as f64;
    let mut out = Image::zeros(hh, ww, img.channels, img.mesh_size * s as f64);
    for i in 0..hh {
        for j in 0..ww {
            for c in 0..img.channels {
                let mut acc = 0.0;
                for u in 0..s {
                    for v in 0..s {
                        acc += img.at(s * i + u, s * j + v, c);
                    }
                }
                out.set(i, j, c, acc * norm);
            }
        }
    }
    Ok(out)
}

/// Add i.i.d. zero-mean Gaussian noise from a seeded generator.
pub fn add_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if sigma < 0.0 {
        return Err(Error::invalid("noise sigma must be nonnegative"));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).map_err(|_| Error::invalid("bad sigma"))?;
    let mut out = img.clone();
    for v in out.data_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

/// Generate a `B`-frame burst from an HR RGB image.
///
/// Frame `j` is `pack(mosaic(noise(downsample(warp(hr, f_j), s))))` with
/// `f_0` the identity and `f_j` drawn uniformly from
/// `[-theta_max, theta_max] x [-shift_max, shift_max]^2` (shifts in HR
/// pixels). With `mosaic` unset the mosaicking/packing steps are skipped
/// and frames stay RGB.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_burst(
    hr: &Image,
    frames: usize,
    scale: usize,
    theta_max: f64,
    shift_max: f64,
    noise_sigma: f64,
    seed: u64,
    mosaic: bool,
) -> Result<BurstSequence> {
    if frames < 2 {
        return Err(Error::invalid("a burst needs at least 2 frames"));
    }
    if !(2..=4).contains(&scale) {
        return Err(Error::invalid("scale factor must be 2, 3 or 4"));
    }
    if hr.channels != 3 {
        return Err(Error::invalid("HR input must be RGB"));
    }
    if hr.height % (2 * scale) != 0 || hr.width % (2 * scale) != 0 {
        return Err(Error::invalid(format!(
            "HR dimensions {}x{} must be divisible by 2*scale = {}",
            hr.height,
            hr.width,
            2 * scale
        )));
    }
    if theta_max < 0.0 || shift_max < 0.0 || noise_sigma < 0.0 {
        return Err(Error::invalid("degradation magnitudes must be nonnegative"));
    }

    // Transforms come from the master stream, in frame order.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut transforms = vec![AffineTransform::identity()];
    for _ in 1..frames {
        let theta = if theta_max > 0.0 { rng.gen_range(-theta_max..=theta_max) } else { 0.0 };
        let b = if shift_max > 0.0 {
            (
                rng.gen_range(-shift_max..=shift_max) * hr.mesh_size,
                rng.gen_range(-shift_max..=shift_max) * hr.mesh_size,
            )
        } else {
            (0.0, 0.0)
        };
        transforms.push(AffineTransform::new(theta, b));
    }

    let degraded: Vec<Result<Image>> = exec::map_indexed(frames, |j| {
        let warped = if transforms[j].is_identity() { hr.clone() } else { warp_image(hr, &transforms[j]) };
        let low = downsample(&warped, scale)?;
        let noisy = add_noise(&low, noise_sigma, seed ^ j as u64)?;
        if mosaic {
            pack4(&mosaic_rggb(&noisy)?)
        } else {
            Ok(noisy)
        }
    });
    let frames_out = degraded.into_iter().collect::<Result<Vec<_>>>()?;

    Ok(BurstSequence { frames: frames_out, transforms, scale, noise_sigma: noise_sigma, seed, mosaic })
}

impl BurstSequence {
    /// Write the burst as a directory of PFM frames plus a text manifest.
    /// Packed frames are stored as their 1-channel mosaics (PFM carries
    /// only 1 or 3 channels) and re-packed on load.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        manifest.push_str(&format!("scale={}\n", self.scale));
        manifest.push_str(&format!("sigma={:.17e}\n", self.noise_sigma));
        manifest.push_str(&format!("seed={}\n", self.seed));
        manifest.push_str(&format!("mosaic={}\n", if self.mosaic { 1 } else { 0 }));
        manifest.push_str(&format!("frames={}\n", self.frames.len()));
        for (j, (frame, tf)) in self.frames.iter().zip(self.transforms.iter()).enumerate() {
            let name = format!("frame_{j:03}.pfm");
            let stored = if self.mosaic { unpack4(frame)? } else { frame.clone() };
            crate::io::write_pfm(&dir.join(&name), &stored)?;
            manifest.push_str(&format!("frame={j} file={name} {}\n", tf.to_manifest()));
        }
        let path = dir.join("burst.manifest");
        std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
    }

    /// Read a burst written by [`BurstSequence::write_dir`].
    pub fn read_dir(dir: &Path) -> Result<BurstSequence> {
        let path = dir.join("burst.manifest");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut scale = None;
        let mut sigma = None;
        let mut seed = None;
        let mut mosaic = None;
        let mut count = None;
        let mut entries: Vec<(usize, String, AffineTransform)> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::format(lineno as u64, format!("line {lineno}: {what}"));
            if let Some(v) = line.strip_prefix("scale=") {
                scale = Some(v.parse::<usize>().map_err(|_| bad("bad scale"))?);
            } else if let Some(v) = line.strip_prefix("sigma=") {
                sigma = Some(v.parse::<f64>().map_err(|_| bad("bad sigma"))?);
            } else if let Some(v) = line.strip_prefix("seed=") {
                seed = Some(v.parse::<u64>().map_err(|_| bad("bad seed"))?);
            } else if let Some(v) = line.strip_prefix("mosaic=") {
                mosaic = Some(v == "1");
            } else if let Some(v) = line.strip_prefix("frames=") {
                count = Some(v.parse::<usize>().map_err(|_| bad("bad frame count"))?);
            } else if let Some(rest) = line.strip_prefix("frame=") {
                let mut file = None;
                let mut j = None;
                let mut first = true;
                for tok in rest.split_whitespace() {
                    if first {
                        j = Some(tok.parse::<usize>().map_err(|_| bad("bad frame index"))?);
                        first = false;
                    } else if let Some(f) = tok.strip_prefix("file=") {
                        file = Some(f.to_string());
                    }
                }
                let tf = transform_from_manifest(rest).map_err(|_| bad("bad transform"))?;
                entries.push((
                    j.ok_or_else(|| bad("missing frame index"))?,
                    file.ok_or_else(|| bad("missing file="))?,
                    tf,
                ));
            } else {
                return Err(bad("unrecognized manifest line"));
            }
        }
        let count = count.ok_or_else(|| Error::format(0, "manifest missing frames="))?;
        if entries.len() != count {
            return Err(Error::format(0, format!("manifest lists {} frames, frames={count}", entries.len())));
        }
        entries.sort_by_key(|(j, _, _)| *j);
        let mosaic = mosaic.unwrap_or(false);
        let mut frames = Vec::with_capacity(count);
        let mut transforms = Vec::with_capacity(count);
        for (_, file, tf) in entries {
            let img = crate::io::read_pfm(&dir.join(&file))?;
            frames.push(if mosaic { pack4(&img)? } else { img });
            transforms.push(tf);
        }
        Ok(BurstSequence {
            frames,
            transforms,
            scale: scale.ok_or_else(|| Error::format(0, "manifest missing scale="))?,
            noise_sigma: sigma.unwrap_or(0.0),
            seed: seed.unwrap_or(0),
            mosaic,
        })
    }
}
