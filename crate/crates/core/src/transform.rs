//! Rotation-translation group actions on images and feature maps.
//!
//! An [`AffineTransform`] `f = (theta, b)` realizes
//! `f[r](x) = r(A_theta^-1 (x - b))` on the centered grid, with the first
//! coordinate along the row axis and `b` in the same length units as the
//! mesh coordinates. Angles wrap to `(-pi, pi]`.
//!
//! Resampling is bilinear with out-of-domain samples set to zero. Quarter
//! turns combined with integer-pixel translations take an exact index
//! permutation path so that no interpolation smoothing occurs.

use crate::error::Result;
use crate::exec;
use crate::grid::{GroupFeatureMap, Image};

const SNAP_EPS: f64 = 1e-12;

/// Rotation by `theta` radians followed by translation `b`, acting on grid
/// functions as `f[r](x) = r(A_theta^-1 (x - b))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineTransform {
    pub theta: f64,
    pub b: (f64, f64),
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(std::f64::consts::TAU);
    if w > std::f64::consts::PI {
        w - std::f64::consts::TAU
    } else {
        w
    }
}

impl AffineTransform {
    pub fn new(theta: f64, b: (f64, f64)) -> Self {
        AffineTransform { theta: wrap_angle(theta), b }
    }

    pub fn identity() -> Self {
        AffineTransform { theta: 0.0, b: (0.0, 0.0) }
    }

    pub fn is_identity(&self) -> bool {
        self.theta == 0.0 && self.b == (0.0, 0.0)
    }

    /// Row-major 2x3 matrix `[[cos, -sin, b1], [sin, cos, b2]]`.
    pub fn matrix(&self) -> [[f64; 3]; 2] {
        let (s, c) = self.theta.sin_cos();
        [[c, -s, self.b.0], [s, c, self.b.1]]
    }

    /// Apply the forward map `x -> A_theta x + b`.
    pub fn apply(&self, x: (f64, f64)) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (c * x.0 - s * x.1 + self.b.0, s * x.0 + c * x.1 + self.b.1)
    }

    /// Apply the inverse map `x -> A_theta^-1 (x - b)`.
    pub fn apply_inverse(&self, x: (f64, f64)) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let d = (x.0 - self.b.0, x.1 - self.b.1);
        (c * d.0 + s * d.1, -s * d.0 + c * d.1)
    }

    /// Inverse transform `(-theta, -A_{-theta} b)`, so that
    /// `compose(f, invert(f))` is the identity in parameter space.
    pub fn invert(&self) -> AffineTransform {
        let (s, c) = (-self.theta).sin_cos();
        AffineTransform::new(-self.theta, (-(c * self.b.0 - s * self.b.1), -(s * self.b.0 + c * self.b.1)))
    }

    /// Group law: `self.compose(f1)` is `self ∘ f1`.
    pub fn compose(&self, f1: &AffineTransform) -> AffineTransform {
        let (s, c) = self.theta.sin_cos();
        AffineTransform::new(
            self.theta + f1.theta,
            (c * f1.b.0 - s * f1.b.1 + self.b.0, s * f1.b.0 + c * f1.b.1 + self.b.1),
        )
    }

    /// Serialize as a manifest line fragment, `theta=<radians> b=<b1>,<b2>`.
    pub fn to_manifest(&self) -> String {
        format!("theta={:.17e} b={:.17e},{:.17e}", self.theta, self.b.0, self.b.1)
    }
}

/// Quarter-turn index: `Some(q)` with `theta ~ q * pi/2` within snap
/// tolerance, `q` in `0..4`.
fn quarter_turn(theta: f64) -> Option<usize> {
    let w = theta.rem_euclid(std::f64::consts::TAU);
    for q in 0..=4usize {
        if (w - q as f64 * std::f64::consts::FRAC_PI_2).abs() < SNAP_EPS {
            return Some(q % 4);
        }
    }
    None
}

fn near_integer(x: f64) -> Option<i64> {
    let r = x.round();
    if (x - r).abs() < SNAP_EPS {
        Some(r as i64)
    } else {
        None
    }
}

/// Inverse rotation matrices for quarter turns, entries in {-1, 0, 1}.
fn quarter_inverse_matrix(q: usize) -> [[i64; 2]; 2] {
    match q {
        0 => [[1, 0], [0, 1]],
        1 => [[0, 1], [-1, 0]],
        2 => [[-1, 0], [0, -1]],
        3 => [[0, -1], [1, 0]],
        _ => unreachable!(),
    }
}

/// Exact permutation path: source index pair for output pixel `(i, j)`, in
/// doubled centered coordinates so even-sized grids stay integral.
fn permuted_source(
    i: usize,
    j: usize,
    height: usize,
    width: usize,
    rot: &[[i64; 2]; 2],
    shift: (i64, i64),
) -> Option<(isize, isize)> {
    let u = 2 * i as i64 - (height as i64 - 1) - 2 * shift.0;
    let v = 2 * j as i64 - (width as i64 - 1) - 2 * shift.1;
    let us = rot[0][0] * u + rot[0][1] * v + (height as i64 - 1);
    let vs = rot[1][0] * u + rot[1][1] * v + (width as i64 - 1);
    if us % 2 != 0 || vs % 2 != 0 {
        return None;
    }
    Some(((us / 2) as isize, (vs / 2) as isize))
}

fn bilinear_sample(img: &Image, c: usize, fi: f64, fj: f64) -> f64 {
    let i0 = fi.floor();
    let j0 = fj.floor();
    let wi = fi - i0;
    let wj = fj - j0;
    let (i0, j0) = (i0 as isize, j0 as isize);
    let v00 = img.at_or_zero(i0, j0, c);
    let v01 = img.at_or_zero(i0, j0 + 1, c);
    let v10 = img.at_or_zero(i0 + 1, j0, c);
    let v11 = img.at_or_zero(i0 + 1, j0 + 1, c);
    v00 * (1.0 - wi) * (1.0 - wj) + v01 * (1.0 - wi) * wj + v10 * wi * (1.0 - wj) + v11 * wi * wj
}

/// Warp an image by `f`: `out[i,j,c]` is the bilinear sample of `img` at
/// `A_theta^-1 (x_ij - b)`. Dimensions and mesh size are unchanged.
pub fn warp_image(img: &Image, f: &AffineTransform) -> Image {
    if f.is_identity() {
        return img.clone();
    }
    let h = img.mesh_size;
    // Exact permutation for quarter turns with integer-pixel shifts.
    if let (Some(q), Some(si), Some(sj)) =
        (quarter_turn(f.theta), near_integer(f.b.0 / h), near_integer(f.b.1 / h))
    {
        let rot = quarter_inverse_matrix(q);
        let mut out = Image::zeros(img.height, img.width, img.channels, h);
        let (width, channels) = (img.width, img.channels);
        let mut all_exact = true;
        'outer: for i in 0..img.height {
            for j in 0..width {
                if permuted_source(i, j, img.height, width, &rot, (si, sj)).is_none() {
                    all_exact = false;
                    break 'outer;
                }
            }
        }
        if all_exact {
            exec::fill_chunks(out.data_mut(), width * channels, |i, row| {
                for j in 0..width {
                    let (is, js) = permuted_source(i, j, img.height, width, &rot, (si, sj)).unwrap();
                    for c in 0..channels {
                        row[j * channels + c] = img.at_or_zero(is, js, c);
                    }
                }
            });
            return out;
        }
    }

    let mut out = Image::zeros(img.height, img.width, img.channels, h);
    let (height, width, channels) = (img.height, img.width, img.channels);
    exec::fill_chunks(out.data_mut(), width * channels, |i, row| {
        let xi = (i as f64 - (height as f64 - 1.0) / 2.0) * h;
        for j in 0..width {
            let xj = (j as f64 - (width as f64 - 1.0) / 2.0) * h;
            let y = f.apply_inverse((xi, xj));
            let fi = y.0 / h + (height as f64 - 1.0) / 2.0;
            let fj = y.1 / h + (width as f64 - 1.0) / 2.0;
            for c in 0..channels {
                row[j * channels + c] = bilinear_sample(img, c, fi, fj);
            }
        }
    });
    out
}

/// Resample `img` under `f` onto a new centered grid of the given shape and
/// mesh: `out[i,j,c]` samples `img` at `A_theta^-1 (y_ij - b)` where `y_ij`
/// is the output-grid coordinate.
pub fn resample_to(img: &Image, f: &AffineTransform, height: usize, width: usize, mesh: f64) -> Image {
    let h_in = img.mesh_size;
    let mut out = Image::zeros(height, width, img.channels, mesh);
    let channels = img.channels;
    exec::fill_chunks(out.data_mut(), width * channels, |i, row| {
        let yi = (i as f64 - (height as f64 - 1.0) / 2.0) * mesh;
        for j in 0..width {
            let yj = (j as f64 - (width as f64 - 1.0) / 2.0) * mesh;
            let x = f.apply_inverse((yi, yj));
            let fi = x.0 / h_in + (img.height as f64 - 1.0) / 2.0;
            let fj = x.1 / h_in + (img.width as f64 - 1.0) / 2.0;
            for c in 0..channels {
                row[j * channels + c] = bilinear_sample(img, c, fi, fj);
            }
        }
    });
    out
}

/// Like [`resample_to`] but with a bicubic (Catmull-Rom) kernel and border
/// clamping instead of zero extension; meant for gather-style accumulation
/// where zero padding would bleed darkness into the output.
pub fn resample_to_bicubic(img: &Image, f: &AffineTransform, height: usize, width: usize, mesh: f64) -> Image {
    let h_in = img.mesh_size;
    let mut out = Image::zeros(height, width, img.channels, mesh);
    let channels = img.channels;
    exec::fill_chunks(out.data_mut(), width * channels, |i, row| {
        let yi = (i as f64 - (height as f64 - 1.0) / 2.0) * mesh;
        for j in 0..width {
            let yj = (j as f64 - (width as f64 - 1.0) / 2.0) * mesh;
            let x = f.apply_inverse((yi, yj));
            let fi = x.0 / h_in + (img.height as f64 - 1.0) / 2.0;
            let fj = x.1 / h_in + (img.width as f64 - 1.0) / 2.0;
            let (i0, j0) = (fi.floor() as isize, fj.floor() as isize);
            for c in 0..channels {
                let mut acc = 0.0;
                for di in -1..=2isize {
                    let wi = bicubic_weight(fi - (i0 + di) as f64);
                    for dj in -1..=2isize {
                        let wj = bicubic_weight(fj - (j0 + dj) as f64);
                        acc += wi * wj * clamped(img, i0 + di, j0 + dj, c);
                    }
                }
                row[j * channels + c] = acc;
            }
        }
    });
    out
}

/// Warp a group feature map: the group axis shifts by
/// `round(theta t / 2 pi)` steps (the `A_theta^-1 A` action on the nearest
/// group element) and the spatial content of every slice is warped by the
/// full transform.
pub fn warp_feature(fmap: &GroupFeatureMap, f: &AffineTransform) -> GroupFeatureMap {
    if f.is_identity() {
        return fmap.clone();
    }
    let t = fmap.group_order;
    let steps = (f.theta * t as f64 / std::f64::consts::TAU).round() as i64;
    let mut out = GroupFeatureMap::zeros(fmap.height, fmap.width, t, fmap.channels, fmap.mesh_size);
    for k in 0..t {
        let src_k = (k as i64 - steps).rem_euclid(t as i64) as usize;
        for c in 0..fmap.channels {
            let plane = fmap.slice(src_k, c);
            let warped = warp_image(&plane, f);
            for i in 0..fmap.height {
                for j in 0..fmap.width {
                    out.set(i, j, k, c, warped.at(i, j, 0));
                }
            }
        }
    }
    out
}

fn bicubic_weight(x: f64) -> f64 {
    // Catmull-Rom kernel (a = -0.5).
    let a = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        a * (x * x * x - 5.0 * x * x + 8.0 * x - 4.0)
    } else {
        0.0
    }
}

fn clamped(img: &Image, i: isize, j: isize, c: usize) -> f64 {
    let i = i.clamp(0, img.height as isize - 1) as usize;
    let j = j.clamp(0, img.width as isize - 1) as usize;
    img.at(i, j, c)
}

/// Upsample by an integer factor with the named kernel, clamping at the
/// borders. Centered-grid sampling: both grids share the same origin.
fn upsample_with(img: &Image, s: usize, kernel: Kernel) -> Image {
    let (hh, ww) = (img.height * s, img.width * s);
    let mesh = img.mesh_size / s as f64;
    let mut out = Image::zeros(hh, ww, img.channels, mesh);
    let channels = img.channels;
    exec::fill_chunks(out.data_mut(), ww * channels, |i, row| {
        let fi = (i as f64 - (hh as f64 - 1.0) / 2.0) / s as f64 + (img.height as f64 - 1.0) / 2.0;
        for j in 0..ww {
            let fj = (j as f64 - (ww as f64 - 1.0) / 2.0) / s as f64 + (img.width as f64 - 1.0) / 2.0;
            for c in 0..channels {
                row[j * channels + c] = match kernel {
                    Kernel::Bilinear => {
                        let (i0, j0) = (fi.floor(), fj.floor());
                        let (wi, wj) = (fi - i0, fj - j0);
                        let (i0, j0) = (i0 as isize, j0 as isize);
                        clamped(img, i0, j0, c) * (1.0 - wi) * (1.0 - wj)
                            + clamped(img, i0, j0 + 1, c) * (1.0 - wi) * wj
                            + clamped(img, i0 + 1, j0, c) * wi * (1.0 - wj)
                            + clamped(img, i0 + 1, j0 + 1, c) * wi * wj
                    }
                    Kernel::Bicubic => {
                        let (i0, j0) = (fi.floor() as isize, fj.floor() as isize);
                        let mut acc = 0.0;
                        for di in -1..=2isize {
                            let wi = bicubic_weight(fi - (i0 + di) as f64);
                            for dj in -1..=2isize {
                                let wj = bicubic_weight(fj - (j0 + dj) as f64);
                                acc += wi * wj * clamped(img, i0 + di, j0 + dj, c);
                            }
                        }
                        acc
                    }
                };
            }
        }
    });
    out
}

#[derive(Clone, Copy)]
enum Kernel {
    Bilinear,
    Bicubic,
}

/// Bilinear upsampling by an integer factor.
pub fn upsample_bilinear(img: &Image, s: usize) -> Image {
    upsample_with(img, s, Kernel::Bilinear)
}

/// Bicubic (Catmull-Rom) upsampling by an integer factor.
pub fn upsample_bicubic(img: &Image, s: usize) -> Image {
    upsample_with(img, s, Kernel::Bicubic)
}

/// Parse a `theta=... b=...,...` fragment produced by
/// [`AffineTransform::to_manifest`].
pub fn transform_from_manifest(fragment: &str) -> Result<AffineTransform> {
    use crate::error::Error;
    let mut theta = None;
    let mut b = None;
    for tok in fragment.split_whitespace() {
        if let Some(v) = tok.strip_prefix("theta=") {
            theta = Some(v.parse::<f64>().map_err(|_| Error::invalid(format!("bad theta value '{v}'")))?);
        } else if let Some(v) = tok.strip_prefix("b=") {
            let mut it = v.split(',');
            let b1 = it
                .next()
                .and_then(|x| x.parse::<f64>().ok())
                .ok_or_else(|| Error::invalid(format!("bad b value '{v}'")))?;
            let b2 = it
                .next()
                .and_then(|x| x.parse::<f64>().ok())
                .ok_or_else(|| Error::invalid(format!("bad b value '{v}'")))?;
            b = Some((b1, b2));
        }
    }
    match (theta, b) {
        (Some(t), Some(b)) => Ok(AffineTransform::new(t, b)),
        _ => Err(Error::invalid(format!("missing theta= or b= in '{fragment}'"))),
    }
}
