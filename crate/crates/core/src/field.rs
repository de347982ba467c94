//! Latent smooth test fields with analytic derivatives and certified
//! sup bounds.
//!
//! A [`LatentField`] is a twice continuously differentiable function on the
//! plane. Grid images are produced by sampling it on the centered mesh, and
//! the bound constants of the error meter are computed from its closed-form
//! derivative bounds.

use crate::error::{Error, Result};
use crate::grid::Image;
use rand::Rng;

/// One isotropic Gaussian bump `a * exp(-|x - mu|^2 / (2 sigma^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub center: (f64, f64),
    pub amplitude: f64,
    pub width: f64,
}

/// One plane wave `a * cos(<k, x> + phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineComponent {
    pub freq: (f64, f64),
    pub amplitude: f64,
    pub phase: f64,
}

/// Analytic scalar field used as the latent continuous function behind a
/// grid image channel.
#[derive(Debug, Clone, PartialEq)]
pub enum LatentField {
    GaussianMixture(Vec<GaussianComponent>),
    BandlimitedCosine(Vec<CosineComponent>),
}

/// Certified sup bounds `(F, G, H)` for a function, its gradient norm and
/// its Hessian spectral norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds3 {
    pub value: f64,
    pub gradient: f64,
    pub hessian: f64,
}

impl Bounds3 {
    pub const ZERO: Bounds3 = Bounds3 { value: 0.0, gradient: 0.0, hessian: 0.0 };
}

impl LatentField {
    /// A field that is identically `v`.
    pub fn constant(v: f64) -> LatentField {
        LatentField::BandlimitedCosine(vec![CosineComponent { freq: (0.0, 0.0), amplitude: v, phase: 0.0 }])
    }

    pub fn zero() -> LatentField {
        LatentField::BandlimitedCosine(Vec::new())
    }

    /// Seeded band-limited cosine mixture with `terms` random plane waves of
    /// frequency norm at most `max_freq` (radians per length unit).
    pub fn random_bandlimited(rng: &mut impl Rng, terms: usize, max_freq: f64, amplitude: f64) -> LatentField {
        let comps = (0..terms)
            .map(|_| {
                let norm = rng.gen_range(0.2..1.0) * max_freq;
                let dir = rng.gen_range(0.0..std::f64::consts::TAU);
                CosineComponent {
                    freq: (norm * dir.cos(), norm * dir.sin()),
                    amplitude: rng.gen_range(0.3..1.0) * amplitude,
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                }
            })
            .collect();
        LatentField::BandlimitedCosine(comps)
    }

    /// Seeded Gaussian mixture with centers in `[-extent, extent]^2`.
    pub fn random_gaussian_mixture(rng: &mut impl Rng, terms: usize, extent: f64, min_width: f64) -> LatentField {
        let comps = (0..terms)
            .map(|_| GaussianComponent {
                center: (rng.gen_range(-extent..extent), rng.gen_range(-extent..extent)),
                amplitude: rng.gen_range(-1.0..1.0),
                width: rng.gen_range(min_width..4.0 * min_width),
            })
            .collect();
        LatentField::GaussianMixture(comps)
    }

    pub fn eval(&self, x: (f64, f64)) -> f64 {
        match self {
            LatentField::GaussianMixture(cs) => cs
                .iter()
                .map(|c| {
                    let dx = x.0 - c.center.0;
                    let dy = x.1 - c.center.1;
                    c.amplitude * (-(dx * dx + dy * dy) / (2.0 * c.width * c.width)).exp()
                })
                .sum(),
            LatentField::BandlimitedCosine(cs) => cs
                .iter()
                .map(|c| c.amplitude * (c.freq.0 * x.0 + c.freq.1 * x.1 + c.phase).cos())
                .sum(),
        }
    }

    pub fn grad(&self, x: (f64, f64)) -> (f64, f64) {
        match self {
            LatentField::GaussianMixture(cs) => {
                let mut g = (0.0, 0.0);
                for c in cs {
                    let dx = x.0 - c.center.0;
                    let dy = x.1 - c.center.1;
                    let s2 = c.width * c.width;
                    let v = c.amplitude * (-(dx * dx + dy * dy) / (2.0 * s2)).exp();
                    g.0 += -v * dx / s2;
                    g.1 += -v * dy / s2;
                }
                g
            }
            LatentField::BandlimitedCosine(cs) => {
                let mut g = (0.0, 0.0);
                for c in cs {
                    let s = -c.amplitude * (c.freq.0 * x.0 + c.freq.1 * x.1 + c.phase).sin();
                    g.0 += s * c.freq.0;
                    g.1 += s * c.freq.1;
                }
                g
            }
        }
    }

    /// Hessian as `(d11, d12, d22)`.
    pub fn hessian(&self, x: (f64, f64)) -> (f64, f64, f64) {
        match self {
            LatentField::GaussianMixture(cs) => {
                let mut hs = (0.0, 0.0, 0.0);
                for c in cs {
                    let dx = x.0 - c.center.0;
                    let dy = x.1 - c.center.1;
                    let s2 = c.width * c.width;
                    let v = c.amplitude * (-(dx * dx + dy * dy) / (2.0 * s2)).exp();
                    hs.0 += v * (dx * dx / s2 - 1.0) / s2;
                    hs.1 += v * (dx * dy / s2) / s2;
                    hs.2 += v * (dy * dy / s2 - 1.0) / s2;
                }
                hs
            }
            LatentField::BandlimitedCosine(cs) => {
                let mut hs = (0.0, 0.0, 0.0);
                for c in cs {
                    let v = -c.amplitude * (c.freq.0 * x.0 + c.freq.1 * x.1 + c.phase).cos();
                    hs.0 += v * c.freq.0 * c.freq.0;
                    hs.1 += v * c.freq.0 * c.freq.1;
                    hs.2 += v * c.freq.1 * c.freq.1;
                }
                hs
            }
        }
    }

    /// The field pre-composed with the inverse of a rotation-translation,
    /// i.e. `x -> self(A^-1 (x - b))`. Exact: rotating a Gaussian mixture
    /// moves its centers, rotating a cosine mixture rotates its frequencies.
    pub fn warped(&self, theta: f64, b: (f64, f64)) -> LatentField {
        let (c, s) = (theta.cos(), theta.sin());
        match self {
            // g(A^-1(x-b)) has center A mu + b, same width.
            LatentField::GaussianMixture(cs) => LatentField::GaussianMixture(
                cs.iter()
                    .map(|g| GaussianComponent {
                        center: (
                            c * g.center.0 - s * g.center.1 + b.0,
                            s * g.center.0 + c * g.center.1 + b.1,
                        ),
                        amplitude: g.amplitude,
                        width: g.width,
                    })
                    .collect(),
            ),
            // cos(<k, A^-1(x-b)> + p) = cos(<A k, x> + p - <A k, b>).
            LatentField::BandlimitedCosine(cs) => LatentField::BandlimitedCosine(
                cs.iter()
                    .map(|w| {
                        let k = (c * w.freq.0 - s * w.freq.1, s * w.freq.0 + c * w.freq.1);
                        CosineComponent {
                            freq: k,
                            amplitude: w.amplitude,
                            phase: w.phase - (k.0 * b.0 + k.1 * b.1),
                        }
                    })
                    .collect(),
            ),
        }
    }
}

/// Certified sup bounds `(F0, G0, H0)` by triangle inequality over the
/// mixture components.
pub fn field_bounds(field: &LatentField) -> Bounds3 {
    match field {
        LatentField::GaussianMixture(cs) => {
            let mut b = Bounds3::ZERO;
            for c in cs {
                let a = c.amplitude.abs();
                let s = c.width;
                b.value += a;
                // sup_r (r/s^2) e^{-r^2/2s^2} = e^{-1/2}/s at r = s
                b.gradient += a * (-0.5f64).exp() / s;
                // Hessian eigenvalues peak at the center with magnitude 1/s^2
                b.hessian += a / (s * s);
            }
            b
        }
        LatentField::BandlimitedCosine(cs) => {
            let mut b = Bounds3::ZERO;
            for c in cs {
                let a = c.amplitude.abs();
                let k = (c.freq.0 * c.freq.0 + c.freq.1 * c.freq.1).sqrt();
                b.value += a;
                b.gradient += a * k;
                b.hessian += a * k * k;
            }
            b
        }
    }
}

/// Discretize latent fields (one per channel) on the centered n×n mesh of
/// spacing `h`: `data[i, j, c] = fields[c](x_ij)`.
pub fn make_grid_image(fields: &[LatentField], n: usize, h: f64) -> Result<Image> {
    if n == 0 {
        return Err(Error::invalid("grid size must be positive"));
    }
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::invalid("mesh size must be positive"));
    }
    if fields.is_empty() {
        return Err(Error::invalid("at least one channel field required"));
    }
    let channels = fields.len();
    let mut img = Image::zeros(n, n, channels, h);
    let width = n;
    crate::exec::fill_chunks(img.data_mut(), width * channels, |i, row| {
        let xi = (i as f64 - (n as f64 - 1.0) / 2.0) * h;
        for j in 0..width {
            let xj = (j as f64 - (n as f64 - 1.0) / 2.0) * h;
            for (c, field) in fields.iter().enumerate() {
                row[j * channels + c] = field.eval((xi, xj));
            }
        }
    });
    Ok(img)
}
