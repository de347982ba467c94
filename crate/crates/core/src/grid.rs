//! Grid-function value types and pixel shuffling.
//!
//! Both [`Image`] and [`GroupFeatureMap`] are discretizations of latent
//! smooth fields on a centered mesh: 0-based pixel `(i, j)` sits at the
//! continuous coordinate `((i - (H-1)/2) h, (j - (W-1)/2) h)`, with the
//! first coordinate along the row (vertical) axis. The mesh size `h` is
//! carried as first-class metadata because every error bound depends on it.

use crate::error::{Error, Result};

/// H×W×C grid of real samples with mesh size `h`, row-major interleaved
/// `(i, j, c)` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub mesh_size: f64,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, mesh_size: f64, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if mesh_size <= 0.0 || !mesh_size.is_finite() {
            return Err(Error::invalid("mesh size must be a positive real"));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        Ok(Image { height, width, channels, mesh_size, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize, mesh_size: f64) -> Self {
        Image::new(height, width, channels, mesh_size, vec![0.0; height * width * channels])
            .expect("zeros: invalid dimensions")
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, c: usize) -> f64 {
        debug_assert!(i < self.height && j < self.width && c < self.channels);
        self.data[(i * self.width + j) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        self.data[(i * self.width + j) * self.channels + c] = v;
    }

    /// Sample with zero extension outside the grid.
    #[inline]
    pub fn at_or_zero(&self, i: isize, j: isize, c: usize) -> f64 {
        if i < 0 || j < 0 || i >= self.height as isize || j >= self.width as isize {
            0.0
        } else {
            self.at(i as usize, j as usize, c)
        }
    }

    /// Continuous coordinate of pixel `(i, j)` on the centered grid.
    #[inline]
    pub fn coord(&self, i: usize, j: usize) -> (f64, f64) {
        (
            (i as f64 - (self.height as f64 - 1.0) / 2.0) * self.mesh_size,
            (j as f64 - (self.width as f64 - 1.0) / 2.0) * self.mesh_size,
        )
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            mesh_size: self.mesh_size,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Maximum absolute difference, restricted to pixels at least `margin`
    /// away from every border.
    pub fn max_abs_diff_interior(&self, other: &Image, margin: usize) -> Result<f64> {
        if self.height != other.height || self.width != other.width || self.channels != other.channels {
            return Err(Error::invalid("shape mismatch"));
        }
        if 2 * margin >= self.height || 2 * margin >= self.width {
            return Err(Error::invalid("margin leaves no interior pixels"));
        }
        let mut m: f64 = 0.0;
        for i in margin..self.height - margin {
            for j in margin..self.width - margin {
                for c in 0..self.channels {
                    m = m.max((self.at(i, j, c) - other.at(i, j, c)).abs());
                }
            }
        }
        Ok(m)
    }
}

/// H×W×t×C grid sampled from a smooth function `e(x, A)` over the cyclic
/// rotation group of order `t`; group index `k` corresponds to the rotation
/// by angle `2·pi·k/t`. Row-major interleaved `(i, j, k, c)` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFeatureMap {
    pub height: usize,
    pub width: usize,
    pub group_order: usize,
    pub channels: usize,
    pub mesh_size: f64,
    data: Vec<f64>,
}

impl GroupFeatureMap {
    pub fn new(
        height: usize,
        width: usize,
        group_order: usize,
        channels: usize,
        mesh_size: f64,
        data: Vec<f64>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || group_order == 0 || channels == 0 {
            return Err(Error::invalid("feature map dimensions must be positive"));
        }
        if mesh_size <= 0.0 || !mesh_size.is_finite() {
            return Err(Error::invalid("mesh size must be a positive real"));
        }
        if data.len() != height * width * group_order * channels {
            return Err(Error::invalid(format!(
                "data length {} does not match {}x{}x{}x{}",
                data.len(),
                height,
                width,
                group_order,
                channels
            )));
        }
        Ok(GroupFeatureMap { height, width, group_order, channels, mesh_size, data })
    }

    pub fn zeros(height: usize, width: usize, group_order: usize, channels: usize, mesh_size: f64) -> Self {
        GroupFeatureMap::new(
            height,
            width,
            group_order,
            channels,
            mesh_size,
            vec![0.0; height * width * group_order * channels],
        )
        .expect("zeros: invalid dimensions")
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize, c: usize) -> f64 {
        debug_assert!(i < self.height && j < self.width && k < self.group_order && c < self.channels);
        self.data[((i * self.width + j) * self.group_order + k) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, c: usize, v: f64) {
        self.data[((i * self.width + j) * self.group_order + k) * self.channels + c] = v;
    }

    #[inline]
    pub fn at_or_zero(&self, i: isize, j: isize, k: usize, c: usize) -> f64 {
        if i < 0 || j < 0 || i >= self.height as isize || j >= self.width as isize {
            0.0
        } else {
            self.at(i as usize, j as usize, k, c)
        }
    }

    #[inline]
    pub fn coord(&self, i: usize, j: usize) -> (f64, f64) {
        (
            (i as f64 - (self.height as f64 - 1.0) / 2.0) * self.mesh_size,
            (j as f64 - (self.width as f64 - 1.0) / 2.0) * self.mesh_size,
        )
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GroupFeatureMap {
        GroupFeatureMap {
            height: self.height,
            width: self.width,
            group_order: self.group_order,
            channels: self.channels,
            mesh_size: self.mesh_size,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// View one `(k, c)` slice as an `Image` (copying).
    pub fn slice(&self, k: usize, c: usize) -> Image {
        let mut out = Image::zeros(self.height, self.width, 1, self.mesh_size);
        for i in 0..self.height {
            for j in 0..self.width {
                out.set(i, j, 0, self.at(i, j, k, c));
            }
        }
        out
    }

    pub fn max_abs_diff_interior(&self, other: &GroupFeatureMap, margin: usize) -> Result<f64> {
        if self.height != other.height
            || self.width != other.width
            || self.group_order != other.group_order
            || self.channels != other.channels
        {
            return Err(Error::invalid("shape mismatch"));
        }
        if 2 * margin >= self.height || 2 * margin >= self.width {
            return Err(Error::invalid("margin leaves no interior pixels"));
        }
        let mut m: f64 = 0.0;
        for i in margin..self.height - margin {
            for j in margin..self.width - margin {
                for k in 0..self.group_order {
                    for c in 0..self.channels {
                        m = m.max((self.at(i, j, k, c) - other.at(i, j, k, c)).abs());
                    }
                }
            }
        }
        Ok(m)
    }
}

/// Rearrange `s*s` channel groups into an `s`-times spatially upscaled image.
///
/// Channel block `(c, u, v)` (index `c*s*s + u*s + v`) of input pixel
/// `(i, j)` maps to output pixel `(s*i + u, s*j + v)`, channel `c`; the mesh
/// size becomes `h/s`.
pub fn pixel_shuffle(img: &Image, s: usize) -> Result<Image> {
    if s == 0 {
        return Err(Error::invalid("shuffle factor must be positive"));
    }
    if img.channels % (s * s) != 0 {
        return Err(Error::invalid(format!(
            "channel count {} not divisible by {}^2",
            img.channels, s
        )));
    }
    let c_out = img.channels / (s * s);
    let mut out = Image::zeros(img.height * s, img.width * s, c_out, img.mesh_size / s as f64);
    for i in 0..img.height {
        for j in 0..img.width {
            for c in 0..c_out {
                for u in 0..s {
                    for v in 0..s {
                        let val = img.at(i, j, c * s * s + u * s + v);
                        out.set(s * i + u, s * j + v, c, val);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`pixel_shuffle`]; round-trips bit-exactly.
pub fn pixel_unshuffle(img: &Image, s: usize) -> Result<Image> {
    if s == 0 {
        return Err(Error::invalid("shuffle factor must be positive"));
    }
    if img.height % s != 0 || img.width % s != 0 {
        return Err(Error::invalid(format!(
            "dimensions {}x{} not divisible by {}",
            img.height, img.width, s
        )));
    }
    let mut out = Image::zeros(img.height / s, img.width / s, img.channels * s * s, img.mesh_size * s as f64);
    for i in 0..out.height {
        for j in 0..out.width {
            for c in 0..img.channels {
                for u in 0..s {
                    for v in 0..s {
                        let val = img.at(s * i + u, s * j + v, c);
                        out.set(i, j, c * s * s + u * s + v, val);
                    }
                }
            }
        }
    }
    Ok(out)
}
