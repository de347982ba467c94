//! Smooth, compactly supported, analytically differentiable steerable
//! filters and their certified smoothness bounds.
//!
//! A filter is a truncated 2-D Fourier series modulated by a C² polynomial
//! bump window: `phi(x) = w(|x|) * sum_q [a_q cos(<k_q, x>) + b_q sin(<k_q, x>)]`
//! with `w(r) = (1 - (r/R)^2)^3` for `r < R` and `0` otherwise, normalized
//! so `w(0) = 1`. The window radius defaults to `(p+1)h/2`, which realizes
//! the compact-support condition the error bounds require; it is twice
//! continuously differentiable everywhere and every derivative bound is
//! available in closed form.

use crate::error::{Error, Result};
use crate::field::Bounds3;
use rand::Rng;

/// One windowed plane-wave term of a filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTerm {
    pub freq: (f64, f64),
    pub cos_coeff: f64,
    pub sin_coeff: f64,
}

/// Parameterized filter `phi`, evaluable at arbitrary rotated coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SteerableFilter {
    pub terms: Vec<FourierTerm>,
    /// Window radius; `phi(x) = 0` for `|x| >= radius`.
    pub radius: f64,
    /// Nominal filter size `p` (odd) of the sampling grid.
    pub filter_size: usize,
    /// Mesh size of the sampling grid.
    pub mesh_size: f64,
}

/// Layer role of a filter bank within an equivariant network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Lifting,
    Intermediate,
    Projection,
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayerKind::Lifting => write!(f, "lifting"),
            LayerKind::Intermediate => write!(f, "intermediate"),
            LayerKind::Projection => write!(f, "projection"),
        }
    }
}

impl std::str::FromStr for LayerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lifting" => Ok(LayerKind::Lifting),
            "intermediate" => Ok(LayerKind::Intermediate),
            "projection" => Ok(LayerKind::Projection),
            other => Err(Error::invalid(format!("unknown layer kind '{other}'"))),
        }
    }
}

impl SteerableFilter {
    pub fn new(terms: Vec<FourierTerm>, radius: f64, filter_size: usize, mesh_size: f64) -> Result<Self> {
        if radius <= 0.0 || !radius.is_finite() {
            return Err(Error::invalid("window radius must be positive"));
        }
        if filter_size % 2 == 0 || filter_size == 0 {
            return Err(Error::invalid("filter size must be odd"));
        }
        if mesh_size <= 0.0 {
            return Err(Error::invalid("mesh size must be positive"));
        }
        Ok(SteerableFilter { terms, radius, filter_size, mesh_size })
    }

    /// Filter with a single constant coefficient `c00 = 1` (pure window).
    pub fn window_only(p: usize, h: f64) -> Result<Self> {
        SteerableFilter::new(
            vec![FourierTerm { freq: (0.0, 0.0), cos_coeff: 1.0, sin_coeff: 0.0 }],
            (p as f64 + 1.0) * h / 2.0,
            p,
            h,
        )
    }

    pub fn zero(p: usize, h: f64) -> Result<Self> {
        SteerableFilter::new(Vec::new(), (p as f64 + 1.0) * h / 2.0, p, h)
    }

    /// Seeded random filter with frequencies on the half-plane lattice
    /// `(pi/R) (m, n)`, `0 <= m <= cap`, `|n| <= cap`, and window radius
    /// `(p+1)h/2`.
    pub fn random(rng: &mut impl Rng, cap: usize, p: usize, h: f64) -> Result<Self> {
        let radius = (p as f64 + 1.0) * h / 2.0;
        Self::random_with_radius(rng, cap, p, h, radius)
    }

    /// Same as [`SteerableFilter::random`] with an explicit window radius
    /// (used by mesh-refinement sweeps that keep the continuous filter
    /// fixed while the sampling grid changes).
    pub fn random_with_radius(rng: &mut impl Rng, cap: usize, p: usize, h: f64, radius: f64) -> Result<Self> {
        let base = std::f64::consts::PI / radius;
        let mut terms = Vec::new();
        for m in 0..=cap as i64 {
            for n in -(cap as i64)..=cap as i64 {
                if m == 0 && n < 0 {
                    continue;
                }
                terms.push(FourierTerm {
                    freq: (base * m as f64, base * n as f64),
                    cos_coeff: rng.gen_range(-1.0..1.0),
                    sin_coeff: if m == 0 && n == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) },
                });
            }
        }
        let scale = 1.0 / terms.len() as f64;
        for t in &mut terms {
            t.cos_coeff *= scale;
            t.sin_coeff *= scale;
        }
        SteerableFilter::new(terms, radius, p, h)
    }

    #[inline]
    fn window(&self, r2: f64) -> f64 {
        let u = 1.0 - r2 / (self.radius * self.radius);
        u * u * u
    }

    /// Evaluate `phi(x)`; exactly zero for `|x| >= radius`.
    pub fn eval(&self, x: (f64, f64)) -> f64 {
        let r2 = x.0 * x.0 + x.1 * x.1;
        if r2 >= self.radius * self.radius {
            return 0.0;
        }
        let mut s = 0.0;
        for t in &self.terms {
            let ph = t.freq.0 * x.0 + t.freq.1 * x.1;
            s += t.cos_coeff * ph.cos() + t.sin_coeff * ph.sin();
        }
        self.window(r2) * s
    }

    /// Analytic gradient of `phi`.
    pub fn grad(&self, x: (f64, f64)) -> (f64, f64) {
        let r2 = x.0 * x.0 + x.1 * x.1;
        let rr = self.radius * self.radius;
        if r2 >= rr {
            return (0.0, 0.0);
        }
        let u = 1.0 - r2 / rr;
        let w = u * u * u;
        // grad w = -6 x u^2 / R^2
        let dw = -6.0 * u * u / rr;
        let mut s = 0.0;
        let mut ds = (0.0, 0.0);
        for t in &self.terms {
            let ph = t.freq.0 * x.0 + t.freq.1 * x.1;
            let (sin, cos) = ph.sin_cos();
            s += t.cos_coeff * cos + t.sin_coeff * sin;
            let d = -t.cos_coeff * sin + t.sin_coeff * cos;
            ds.0 += d * t.freq.0;
            ds.1 += d * t.freq.1;
        }
        (s * dw * x.0 + w * ds.0, s * dw * x.1 + w * ds.1)
    }

    /// The filter with all coefficients scaled by `k`.
    pub fn scaled(&self, k: f64) -> SteerableFilter {
        SteerableFilter {
            terms: self
                .terms
                .iter()
                .map(|t| FourierTerm { freq: t.freq, cos_coeff: k * t.cos_coeff, sin_coeff: k * t.sin_coeff })
                .collect(),
            ..self.clone()
        }
    }

    /// The rotated filter `x -> phi(B^-1 x)`: window is radial, so only the
    /// frequency vectors rotate.
    pub fn rotated(&self, angle: f64) -> SteerableFilter {
        let (s, c) = angle.sin_cos();
        SteerableFilter {
            terms: self
                .terms
                .iter()
                .map(|t| FourierTerm {
                    freq: (c * t.freq.0 - s * t.freq.1, s * t.freq.0 + c * t.freq.1),
                    cos_coeff: t.cos_coeff,
                    sin_coeff: t.sin_coeff,
                })
                .collect(),
            ..self.clone()
        }
    }
}

/// `(cos, sin)` of the group rotation `2 pi k / t`, with quarter turns
/// produced exactly.
pub(crate) fn group_cos_sin(k: usize, t: usize) -> (f64, f64) {
    let k = k % t;
    if 4 * k % t == 0 {
        match 4 * k / t {
            0 => return (1.0, 0.0),
            1 => return (0.0, 1.0),
            2 => return (-1.0, 0.0),
            3 => return (0.0, -1.0),
            _ => {}
        }
    }
    let a = std::f64::consts::TAU * k as f64 / t as f64;
    (a.cos(), a.sin())
}

/// Sample `phi` on the p×p kernel grid rotated by the group element with
/// the given `(cos, sin)`: `kernel[i][j] = phi(A^-1 delta_ij)` with
/// `delta_ij = ((i - (p-1)/2) h, (j - (p-1)/2) h)` (0-based).
fn sample_kernel(filter: &SteerableFilter, cs: (f64, f64), p: usize, h: f64) -> Vec<f64> {
    let m = (p as f64 - 1.0) / 2.0;
    let (c, s) = cs;
    let mut out = Vec::with_capacity(p * p);
    for i in 0..p {
        let d0 = (i as f64 - m) * h;
        for j in 0..p {
            let d1 = (j as f64 - m) * h;
            // A^-1 delta for A = [[c,-s],[s,c]]
            out.push(filter.eval((c * d0 + s * d1, -s * d0 + c * d1)));
        }
    }
    out
}

/// Sample a filter on the p×p grid under the rotation by `angle` radians.
pub fn sample_filter_grid(filter: &SteerableFilter, angle: f64, p: usize, h: f64) -> Result<Vec<f64>> {
    if p != filter.filter_size {
        return Err(Error::invalid(format!(
            "requested p = {} does not match filter size {}",
            p, filter.filter_size
        )));
    }
    if p % 2 == 0 {
        return Err(Error::invalid("filter size must be odd"));
    }
    Ok(sample_kernel(filter, (angle.cos(), angle.sin()), p, h))
}

pub(crate) fn sample_filter_group(filter: &SteerableFilter, k: usize, t: usize, p: usize, h: f64) -> Vec<f64> {
    sample_kernel(filter, group_cos_sin(k, t), p, h)
}

// Window derivative sups for w(r) = (1 - (r/R)^2)^3:
//   sup w = 1, sup |grad w| = 96 / (25 sqrt(5) R), sup |hess w| = 6 / R^2.
fn window_sups(radius: f64) -> (f64, f64, f64) {
    (1.0, 96.0 / (25.0 * 5.0f64.sqrt()) / radius, 6.0 / (radius * radius))
}

/// Certified upper bounds `(F, G, H)` for `sup |phi|`, `sup |grad phi|` and
/// `sup |hess phi|`, by triangle inequality over the windowed terms.
pub fn filter_bounds(filter: &SteerableFilter) -> Bounds3 {
    let (w0, w1, w2) = window_sups(filter.radius);
    let mut b = Bounds3::ZERO;
    for t in &filter.terms {
        let amp = (t.cos_coeff * t.cos_coeff + t.sin_coeff * t.sin_coeff).sqrt();
        let k = (t.freq.0 * t.freq.0 + t.freq.1 * t.freq.1).sqrt();
        b.value += amp * w0;
        b.gradient += amp * (w1 + w0 * k);
        b.hessian += amp * (w2 + 2.0 * w1 * k + w0 * k * k);
    }
    b
}

/// One filter per `(input group index, in channel, out channel)`; lifting
/// and projection banks carry no input-group axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub group_order: usize,
    pub filter_size: usize,
    pub mesh_size: f64,
    filters: Vec<SteerableFilter>,
}

impl FilterBank {
    /// Number of input-group slots: `t` for intermediate banks, 1 otherwise.
    pub fn group_slots(kind: LayerKind, t: usize) -> usize {
        match kind {
            LayerKind::Intermediate => t,
            _ => 1,
        }
    }

    pub fn new(
        kind: LayerKind,
        in_channels: usize,
        out_channels: usize,
        group_order: usize,
        filters: Vec<SteerableFilter>,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || group_order == 0 {
            return Err(Error::invalid("bank dimensions must be positive"));
        }
        let slots = Self::group_slots(kind, group_order);
        if filters.len() != slots * in_channels * out_channels {
            return Err(Error::invalid(format!(
                "bank needs {} filters, got {}",
                slots * in_channels * out_channels,
                filters.len()
            )));
        }
        let p = filters[0].filter_size;
        let h = filters[0].mesh_size;
        let r = filters[0].radius;
        if filters.iter().any(|f| f.filter_size != p || f.mesh_size != h || f.radius != r) {
            return Err(Error::invalid("all filters in a bank must share p, h and radius"));
        }
        Ok(FilterBank {
            kind,
            in_channels,
            out_channels,
            group_order,
            filter_size: p,
            mesh_size: h,
            filters,
        })
    }

    /// Seeded random bank with window radius `(p+1)h/2` and basis cap `p`.
    pub fn random(
        kind: LayerKind,
        in_channels: usize,
        out_channels: usize,
        group_order: usize,
        p: usize,
        h: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let radius = (p as f64 + 1.0) * h / 2.0;
        Self::random_with(kind, in_channels, out_channels, group_order, p, h, radius, p, rng)
    }

    /// Seeded random bank with explicit window radius and basis cap.
    #[allow(clippy::too_many_arguments)]
    pub fn random_with(
        kind: LayerKind,
        in_channels: usize,
        out_channels: usize,
        group_order: usize,
        p: usize,
        h: f64,
        radius: f64,
        cap: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let slots = Self::group_slots(kind, group_order);
        let filters = (0..slots * in_channels * out_channels)
            .map(|_| SteerableFilter::random_with_radius(rng, cap, p, h, radius))
            .collect::<Result<Vec<_>>>()?;
        Self::new(kind, in_channels, out_channels, group_order, filters)
    }

    /// Bank of identically-zero filters.
    pub fn zeros(
        kind: LayerKind,
        in_channels: usize,
        out_channels: usize,
        group_order: usize,
        p: usize,
        h: f64,
    ) -> Result<Self> {
        let slots = Self::group_slots(kind, group_order);
        let filters = (0..slots * in_channels * out_channels)
            .map(|_| SteerableFilter::zero(p, h))
            .collect::<Result<Vec<_>>>()?;
        Self::new(kind, in_channels, out_channels, group_order, filters)
    }

    /// The bank with every filter scaled by `k`.
    pub fn scaled(&self, k: f64) -> FilterBank {
        FilterBank { filters: self.filters.iter().map(|f| f.scaled(k)).collect(), ..self.clone() }
    }

    /// Filter for input-group slot `a`, in channel `c`, out channel `d`.
    pub fn filter(&self, a: usize, c: usize, d: usize) -> &SteerableFilter {
        let slots = Self::group_slots(self.kind, self.group_order);
        debug_assert!(a < slots && c < self.in_channels && d < self.out_channels);
        &self.filters[(a * self.in_channels + c) * self.out_channels + d]
    }

    pub fn filters(&self) -> &[SteerableFilter] {
        &self.filters
    }

    /// Certified bounds valid for every filter in the bank (component-wise
    /// maximum of the per-filter bounds).
    pub fn bounds(&self) -> Bounds3 {
        let mut b = Bounds3::ZERO;
        for f in &self.filters {
            let fb = filter_bounds(f);
            b.value = b.value.max(fb.value);
            b.gradient = b.gradient.max(fb.gradient);
            b.hessian = b.hessian.max(fb.hessian);
        }
        b
    }
}

/// Per-layer and aggregate bound constants for an equivariant network.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundConstants {
    /// `(F_i, G_i, H_i)` for layers `i = 1..=N`.
    pub layer_bounds: Vec<Bounds3>,
    /// `(F_0, G_0, H_0)` of the latent input field.
    pub field_bounds: Bounds3,
    /// `F_script = prod_i n_{i-1} p^2 F_i`.
    pub f_script: f64,
    pub c1: f64,
    pub c2: f64,
    /// First-layer commutation constant `F_0 H_1 + F_1 H_0 + 2 G_0 G_1`.
    pub remark2_c: f64,
}

/// The per-layer commutation constant `C = F_s H_f + F_f H_s + 2 G_s G_f`
/// for a signal with bounds `signal` convolved by filters with bounds
/// `filter`.
pub fn remark2_constant(signal: Bounds3, filter: Bounds3) -> f64 {
    signal.value * filter.hessian + filter.value * signal.hessian + 2.0 * signal.gradient * filter.gradient
}

/// Aggregate constants for an N-layer network:
///
/// * `F_script = prod_{i=1..N} n_{i-1} p^2 F_i`
/// * `C1 = 2 N F_script * sum_i (H_i F_0 / F_i
///        + 2 (G_i / F_i) sum_{m<i} G_m F_0 / F_m + 2 G_i G_0 / F_i + H_0)`
/// * `C2 = 2 pi G_0 F_script (2 max(H, W) / p + 2 N)`
///
/// `layers` lists `(filter bounds, input channel count n_{i-1})` per layer.
pub fn compute_constants(
    layers: &[(Bounds3, usize)],
    field: Bounds3,
    height: usize,
    width: usize,
    p: usize,
) -> Result<BoundConstants> {
    if layers.is_empty() {
        return Err(Error::invalid("network must have at least one layer"));
    }
    let n = layers.len() as f64;
    let mut f_script = 1.0;
    for (b, in_ch) in layers {
        f_script *= *in_ch as f64 * (p * p) as f64 * b.value;
    }

    // ratio x/F_i with the zero-filter convention: 0/0 = 0, x/0 invalid.
    let ratio = |x: f64, f: f64| -> Result<f64> {
        if f == 0.0 {
            if x == 0.0 {
                Ok(0.0)
            } else {
                Err(Error::invalid("zero F_i with nonzero derivative bound"))
            }
        } else {
            Ok(x / f)
        }
    };

    let mut sum = 0.0;
    for (i, (bi, _)) in layers.iter().enumerate() {
        let mut inner = 0.0;
        for (bm, _) in layers.iter().take(i) {
            inner += ratio(bm.gradient * field.value, bm.value)?;
        }
        sum += ratio(bi.hessian * field.value, bi.value)?
            + 2.0 * ratio(bi.gradient, bi.value)? * inner
            + 2.0 * ratio(bi.gradient * field.gradient, bi.value)?
            + field.hessian;
    }
    let c1 = 2.0 * n * f_script * sum;
    let c2 = 2.0 * std::f64::consts::PI
        * field.gradient
        * f_script
        * (2.0 * height.max(width) as f64 / p as f64 + 2.0 * n);
    let remark2_c = remark2_constant(field, layers[0].0);
    Ok(BoundConstants {
        layer_bounds: layers.iter().map(|(b, _)| *b).collect(),
        field_bounds: field,
        f_script,
        c1,
        c2,
        remark2_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn compact_support_holds_on_random_probes() {
        let mut r = rng(1);
        let f = SteerableFilter::random(&mut r, 3, 5, 0.1).unwrap();
        let radius = f.radius;
        for _ in 0..1_000_000 {
            let ang = r.gen_range(0.0..std::f64::consts::TAU);
            let rad = radius * r.gen_range(1.0..3.0);
            let x = (rad * ang.cos(), rad * ang.sin());
            assert_eq!(f.eval(x), 0.0);
        }
        // exactly at twice the radius as well
        assert_eq!(f.eval((2.0 * radius, 0.0)), 0.0);
    }

    #[test]
    fn window_normalization_at_origin() {
        let f = SteerableFilter::window_only(3, 0.5).unwrap();
        assert_eq!(f.eval((0.0, 0.0)), 1.0);
    }

    /// Independent term-by-term summation oracle for eval.
    #[test]
    fn eval_matches_term_summation_oracle() {
        let mut r = rng(2);
        let f = SteerableFilter::random(&mut r, 4, 5, 0.2).unwrap();
        for _ in 0..200 {
            let x: (f64, f64) = (r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5));
            let rad = (x.0 * x.0 + x.1 * x.1).sqrt();
            let oracle = if rad >= f.radius {
                0.0
            } else {
                let w = (1.0 - (rad / f.radius).powi(2)).powi(3);
                let mut acc = 0.0;
                for t in f.terms.iter().rev() {
                    acc += t.cos_coeff * (t.freq.0 * x.0 + t.freq.1 * x.1).cos()
                        + t.sin_coeff * (t.freq.0 * x.0 + t.freq.1 * x.1).sin();
                }
                w * acc
            };
            let got = f.eval(x);
            let denom = oracle.abs().max(1e-30);
            assert!(
                (got - oracle).abs() / denom < 1e-12 || (got - oracle).abs() < 1e-15,
                "eval {got} vs oracle {oracle}"
            );
        }
    }

    #[test]
    fn sample_grid_identity_matches_direct_eval() {
        let mut r = rng(3);
        let p = 5;
        let h = 0.25;
        let f = SteerableFilter::random(&mut r, 2, p, h).unwrap();
        let k = sample_filter_grid(&f, 0.0, p, h).unwrap();
        for i in 0..p {
            for j in 0..p {
                let d = ((i as f64 - 2.0) * h, (j as f64 - 2.0) * h);
                assert_eq!(k[i * p + j], f.eval(d));
            }
        }
    }

    #[test]
    fn radial_filter_is_rotation_invariant_on_grid() {
        // only the (0,0) frequency: phi depends on |x| alone
        let f = SteerableFilter::window_only(3, 0.5).unwrap();
        let k0 = sample_filter_grid(&f, 0.0, 3, 0.5).unwrap();
        let k1 = sample_filter_grid(&f, std::f64::consts::FRAC_PI_2, 3, 0.5).unwrap();
        for (a, b) in k0.iter().zip(k1.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn quarter_turn_sampling_is_index_rotation() {
        let mut r = rng(4);
        let p = 3;
        let h = 1.0;
        let f = SteerableFilter::random(&mut r, 3, p, h).unwrap();
        let k0 = sample_filter_grid(&f, 0.0, p, h).unwrap();
        let k1 = sample_filter_group(&f, 1, 4, p, h);
        // A quarter turn permutes the sample grid: kernel under A_{pi/2}
        // equals the 90-degree index rotation of the identity kernel.
        // kernel[i][j] = phi(A^-1 d_ij) and A^-1 d_ij = d_{i'j'} with
        // (i', j') = (j, p-1-i).
        for i in 0..p {
            for j in 0..p {
                let expect = k0[j * p + (p - 1 - i)];
                let got = k1[i * p + j];
                assert!(
                    (got - expect).abs() <= 1e-12 * expect.abs().max(1.0),
                    "kernel mismatch at ({i},{j}): {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn rotation_composition_consistency() {
        let mut r = rng(5);
        let p = 5;
        let h = 0.2;
        let f = SteerableFilter::random(&mut r, 3, p, h).unwrap();
        for _ in 0..20 {
            let a = r.gen_range(0.0..std::f64::consts::TAU);
            let b = r.gen_range(0.0..std::f64::consts::TAU);
            let lhs = sample_filter_grid(&f, a + b, p, h).unwrap();
            let rhs = sample_filter_grid(&f.rotated(b), a, p, h).unwrap();
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn sample_grid_rejects_mismatched_p() {
        let f = SteerableFilter::window_only(3, 0.5).unwrap();
        assert!(sample_filter_grid(&f, 0.0, 5, 0.5).is_err());
    }

    #[test]
    fn zero_filter_bounds_are_zero() {
        let f = SteerableFilter::zero(3, 0.1).unwrap();
        assert_eq!(filter_bounds(&f), Bounds3::ZERO);
    }

    #[test]
    fn constant_filter_value_bound_is_window_sup() {
        let f = SteerableFilter::window_only(3, 0.1).unwrap();
        let b = filter_bounds(&f);
        assert_eq!(b.value, 1.0);
    }

    /// Dense-sampling under-estimate oracle over the support.
    #[test]
    fn certified_bounds_dominate_dense_samples() {
        let mut r = rng(6);
        let f = SteerableFilter::random(&mut r, 3, 5, 0.2).unwrap();
        let b = filter_bounds(&f);
        let n = 512;
        let (mut mv, mut mg, mut mh) = (0.0f64, 0.0f64, 0.0f64);
        let step = 1e-5;
        for i in 0..n {
            for j in 0..n {
                let x = (
                    -f.radius + 2.0 * f.radius * i as f64 / (n - 1) as f64,
                    -f.radius + 2.0 * f.radius * j as f64 / (n - 1) as f64,
                );
                mv = mv.max(f.eval(x).abs());
                let g = f.grad(x);
                mg = mg.max((g.0 * g.0 + g.1 * g.1).sqrt());
                if x.0.hypot(x.1) < f.radius * 0.98 {
                    let h11 = (f.eval((x.0 + step, x.1)) - 2.0 * f.eval(x) + f.eval((x.0 - step, x.1))) / (step * step);
                    let h22 = (f.eval((x.0, x.1 + step)) - 2.0 * f.eval(x) + f.eval((x.0, x.1 - step))) / (step * step);
                    let h12 = (f.eval((x.0 + step, x.1 + step)) - f.eval((x.0 + step, x.1 - step))
                        - f.eval((x.0 - step, x.1 + step))
                        + f.eval((x.0 - step, x.1 - step)))
                        / (4.0 * step * step);
                    let tr = (h11 + h22) / 2.0;
                    let det = ((h11 - h22) / 2.0).powi(2) + h12 * h12;
                    mh = mh.max(tr.abs() + det.sqrt());
                }
            }
        }
        assert!(mv <= b.value, "value sup {mv} > {}", b.value);
        assert!(mg <= b.gradient, "grad sup {mg} > {}", b.gradient);
        assert!(mh <= b.hessian * (1.0 + 1e-6), "hess sup {mh} > {}", b.hessian);
    }

    #[test]
    fn finite_difference_gradient_matches_analytic() {
        let mut r = rng(7);
        let f = SteerableFilter::random(&mut r, 3, 5, 0.2).unwrap();
        let step = 1e-4;
        let mut checked = 0;
        while checked < 100 {
            let x: (f64, f64) = (r.gen_range(-0.4..0.4), r.gen_range(-0.4..0.4));
            if x.0.hypot(x.1) > f.radius * 0.9 {
                continue;
            }
            checked += 1;
            let g = f.grad(x);
            let fd0 = (f.eval((x.0 + step, x.1)) - f.eval((x.0 - step, x.1))) / (2.0 * step);
            let fd1 = (f.eval((x.0, x.1 + step)) - f.eval((x.0, x.1 - step))) / (2.0 * step);
            let scale = (g.0.abs() + g.1.abs()).max(1.0);
            assert!((g.0 - fd0).abs() / scale < 1e-5, "{} vs {}", g.0, fd0);
            assert!((g.1 - fd1).abs() / scale < 1e-5, "{} vs {}", g.1, fd1);
        }
    }

    #[test]
    fn constants_direct_formula_cases() {
        // N=1, n0=1, p=3, F1=2, all derivative bounds zero.
        let layers = [(Bounds3 { value: 2.0, gradient: 0.0, hessian: 0.0 }, 1usize)];
        let field = Bounds3 { value: 1.0, gradient: 0.0, hessian: 0.0 };
        let c = compute_constants(&layers, field, 32, 32, 3).unwrap();
        assert_eq!(c.f_script, 18.0);
        assert_eq!(c.c1, 0.0);

        // N=1, n0=1, p=3, H=W=32, G0=1, F1=2: C2 = 2 pi * 18 * (64/3 + 2).
        let field = Bounds3 { value: 1.0, gradient: 1.0, hessian: 0.0 };
        let c = compute_constants(&layers, field, 32, 32, 3).unwrap();
        let expect = 2.0 * std::f64::consts::PI * 18.0 * (64.0 / 3.0 + 2.0);
        assert!((c.c2 - expect).abs() < 1e-9 * expect);

        // Remark-2 constant with all bounds one: 1 + 1 + 2 = 4.
        let one = Bounds3 { value: 1.0, gradient: 1.0, hessian: 1.0 };
        assert_eq!(remark2_constant(one, one), 4.0);
    }

    #[test]
    fn constants_reject_zero_f_with_nonzero_derivatives() {
        let layers = [(Bounds3 { value: 0.0, gradient: 1.0, hessian: 0.0 }, 1usize)];
        let field = Bounds3 { value: 1.0, gradient: 1.0, hessian: 1.0 };
        assert!(compute_constants(&layers, field, 8, 8, 3).is_err());
        // all-zero filter bounds are fine (zero network)
        let layers = [(Bounds3::ZERO, 1usize)];
        let c = compute_constants(&layers, field, 8, 8, 3).unwrap();
        assert_eq!(c.c1, 0.0);
        assert_eq!(c.f_script, 0.0);
    }
}
