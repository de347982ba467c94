//! Equivariance-error measurement against the certified discretization
//! bounds, and parameter sweeps verifying the scaling laws.
//!
//! Measurements are made on inputs discretized from analytic latent
//! fields, so the group actions can be realized *exactly*: the warped
//! input is the latent field pre-composed with the inverse transform
//! sampled on the grid, and the warped output side is the latent function
//! of the layer/network output (a finite sum of exact field evaluations)
//! evaluated at the transformed grid points. Bilinear resampling never
//! enters these measurements — its interpolation error is not covered by
//! the bounds.
//!
//! Per-layer commutation errors are measured for in-group rotations (the
//! setting of the per-layer bounds); the whole-network equivariance error
//! `max | f^-1(g(f(I))) - g(I) |` is measured for arbitrary angles.

use crate::conv::{run_network, Activation, EquivNetSpec};
use crate::error::{Error, Result};
use crate::exec;
use crate::field::{field_bounds, make_grid_image, Bounds3, LatentField};
use crate::filters::{
    compute_constants, remark2_constant, sample_filter_group, BoundConstants, FilterBank, LayerKind,
};
use crate::grid::GroupFeatureMap;
use crate::transform::AffineTransform;
use rand::{Rng, SeedableRng};

/// A latent smooth function on the plane times the cyclic group: one
/// scalar field per (group index, channel).
#[derive(Debug, Clone)]
pub struct GroupLatentField {
    fields: Vec<LatentField>,
    pub group_order: usize,
    pub channels: usize,
}

impl GroupLatentField {
    pub fn random_bandlimited(
        rng: &mut impl Rng,
        group_order: usize,
        channels: usize,
        terms: usize,
        max_freq: f64,
    ) -> Self {
        let fields = (0..group_order * channels)
            .map(|_| LatentField::random_bandlimited(rng, terms, max_freq, 1.0))
            .collect();
        GroupLatentField { fields, group_order, channels }
    }

    pub fn field(&self, k: usize, c: usize) -> &LatentField {
        &self.fields[k * self.channels + c]
    }

    /// Uniform bounds over every group slice and channel.
    pub fn bounds(&self) -> Bounds3 {
        let mut b = Bounds3::ZERO;
        for f in &self.fields {
            let fb = field_bounds(f);
            b.value = b.value.max(fb.value);
            b.gradient = b.gradient.max(fb.gradient);
            b.hessian = b.hessian.max(fb.hessian);
        }
        b
    }

    pub fn sample(&self, n: usize, h: f64) -> Result<GroupFeatureMap> {
        let mut out = GroupFeatureMap::zeros(n, n, self.group_order, self.channels, h);
        for i in 0..n {
            let xi = (i as f64 - (n as f64 - 1.0) / 2.0) * h;
            for j in 0..n {
                let xj = (j as f64 - (n as f64 - 1.0) / 2.0) * h;
                for k in 0..self.group_order {
                    for c in 0..self.channels {
                        out.set(i, j, k, c, self.field(k, c).eval((xi, xj)));
                    }
                }
            }
        }
        Ok(out)
    }

    /// The exact in-group action `f^E`: slice `(k, c)` of the result is
    /// slice `((k - steps) mod t, c)` warped by the full transform.
    pub fn warped_in_group(&self, steps: i64, theta: f64, b: (f64, f64)) -> GroupLatentField {
        let t = self.group_order as i64;
        let fields = (0..self.group_order * self.channels)
            .map(|idx| {
                let k = (idx / self.channels) as i64;
                let c = idx % self.channels;
                let src = (k - steps).rem_euclid(t) as usize;
                self.field(src, c).warped(theta, b)
            })
            .collect();
        GroupLatentField { fields, group_order: self.group_order, channels: self.channels }
    }
}

fn group_angle(steps: i64, t: usize) -> f64 {
    std::f64::consts::TAU * steps as f64 / t as f64
}

fn centered_coord(i: usize, n: usize, h: f64) -> f64 {
    (i as f64 - (n as f64 - 1.0) / 2.0) * h
}

fn validate_margin(n: usize, margin: usize) -> Result<()> {
    if 2 * margin >= n {
        return Err(Error::invalid(format!("margin {margin} leaves no interior in an {n}-pixel grid")));
    }
    Ok(())
}

/// Per-layer commutation error of a lifting layer for the in-group
/// rotation by `steps * 2 pi / t` composed with translation `b`:
/// `max | lift(f(I)) - f(lift(I)) |` over interior pixels, orientations
/// and channels, with both group actions realized exactly through the
/// latent fields.
pub fn commutation_error_lift(
    bank: &FilterBank,
    fields: &[LatentField],
    n: usize,
    steps: i64,
    b: (f64, f64),
    margin: usize,
) -> Result<f64> {
    if bank.kind != LayerKind::Lifting {
        return Err(Error::invalid("expected a lifting bank"));
    }
    if bank.in_channels != fields.len() {
        return Err(Error::invalid("one field per input channel required"));
    }
    validate_margin(n, margin)?;
    let (t, p, h) = (bank.group_order, bank.filter_size, bank.mesh_size);
    let theta = group_angle(steps, t);
    if steps.rem_euclid(t as i64) == 0 && b == (0.0, 0.0) {
        return Ok(0.0); // identity action: no resampling occurs
    }

    // discrete side: layer applied to the exactly warped input
    let warped_fields: Vec<LatentField> = fields.iter().map(|f| f.warped(theta, b)).collect();
    let warped_img = make_grid_image(&warped_fields, n, h)?;
    let lhs = crate::conv::lift_conv(&warped_img, bank)?;

    // analytic side: latent of lift(I) at the transformed points, with the
    // group axis shifted
    let kernels: Vec<Vec<f64>> = (0..t * fields.len() * bank.out_channels)
        .map(|idx| {
            let k = idx / (fields.len() * bank.out_channels);
            let c = (idx / bank.out_channels) % fields.len();
            let d = idx % bank.out_channels;
            sample_filter_group(bank.filter(0, c, d), k, t, p, h)
        })
        .collect();
    let m = (p / 2) as f64;
    let f = AffineTransform::new(theta, b);
    let cin = fields.len();
    let cout = bank.out_channels;

    let row_max: Vec<f64> = exec::map_indexed(n - 2 * margin, |ri| {
        let i = ri + margin;
        let xi = centered_coord(i, n, h);
        let mut worst = 0.0f64;
        for j in margin..n - margin {
            let xj = centered_coord(j, n, h);
            let y = f.apply_inverse((xi, xj));
            for k in 0..t {
                let src_k = (k as i64 - steps).rem_euclid(t as i64) as usize;
                for d in 0..cout {
                    let mut acc = 0.0;
                    for c in 0..cin {
                        let kern = &kernels[(src_k * cin + c) * cout + d];
                        for a in 0..p {
                            let da = (a as f64 - m) * h;
                            for bb in 0..p {
                                let db = (bb as f64 - m) * h;
                                acc += kern[a * p + bb] * fields[c].eval((y.0 - da, y.1 - db));
                            }
                        }
                    }
                    worst = worst.max((lhs.at(i, j, k, d) - acc).abs());
                }
            }
        }
        worst
    });
    Ok(row_max.into_iter().fold(0.0, f64::max))
}

/// Per-layer commutation error of an intermediate layer on a group latent
/// field; see [`commutation_error_lift`].
pub fn commutation_error_group(
    bank: &FilterBank,
    gfield: &GroupLatentField,
    n: usize,
    steps: i64,
    b: (f64, f64),
    margin: usize,
) -> Result<f64> {
    if bank.kind != LayerKind::Intermediate {
        return Err(Error::invalid("expected an intermediate bank"));
    }
    if bank.group_order != gfield.group_order || bank.in_channels != gfield.channels {
        return Err(Error::invalid("bank and field shapes must match"));
    }
    validate_margin(n, margin)?;
    let (t, p, h) = (bank.group_order, bank.filter_size, bank.mesh_size);
    let theta = group_angle(steps, t);
    if steps.rem_euclid(t as i64) == 0 && b == (0.0, 0.0) {
        return Ok(0.0);
    }

    let warped = gfield.warped_in_group(steps, theta, b).sample(n, h)?;
    let lhs = crate::conv::group_conv(&warped, bank)?;

    let (cin, cout) = (gfield.channels, bank.out_channels);
    let kernels: Vec<Vec<f64>> = (0..t * t * cin * cout)
        .map(|idx| {
            let bk = idx / (t * cin * cout);
            let a = (idx / (cin * cout)) % t;
            let c = (idx / cout) % cin;
            let d = idx % cout;
            sample_filter_group(bank.filter(a, c, d), bk, t, p, h)
        })
        .collect();
    let m = (p / 2) as f64;
    let f = AffineTransform::new(theta, b);

    let row_max: Vec<f64> = exec::map_indexed(n - 2 * margin, |ri| {
        let i = ri + margin;
        let xi = centered_coord(i, n, h);
        let mut worst = 0.0f64;
        for j in margin..n - margin {
            let xj = centered_coord(j, n, h);
            let y = f.apply_inverse((xi, xj));
            for bk in 0..t {
                let shifted = (bk as i64 - steps).rem_euclid(t as i64) as usize;
                for d in 0..cout {
                    let mut acc = 0.0;
                    for c in 0..cin {
                        for a in 0..t {
                            let src = (shifted + a) % t;
                            let kern = &kernels[((shifted * t + a) * cin + c) * cout + d];
                            for ai in 0..p {
                                let da = (ai as f64 - m) * h;
                                for bj in 0..p {
                                    let db = (bj as f64 - m) * h;
                                    acc += kern[ai * p + bj] * gfield.field(src, c).eval((y.0 - da, y.1 - db));
                                }
                            }
                        }
                    }
                    worst = worst.max((lhs.at(i, j, bk, d) - acc).abs());
                }
            }
        }
        worst
    });
    Ok(row_max.into_iter().fold(0.0, f64::max))
}

/// Per-layer commutation error of a projection layer on a group latent
/// field; see [`commutation_error_lift`].
pub fn commutation_error_project(
    bank: &FilterBank,
    gfield: &GroupLatentField,
    n: usize,
    steps: i64,
    b: (f64, f64),
    margin: usize,
) -> Result<f64> {
    if bank.kind != LayerKind::Projection {
        return Err(Error::invalid("expected a projection bank"));
    }
    if bank.group_order != gfield.group_order || bank.in_channels != gfield.channels {
        return Err(Error::invalid("bank and field shapes must match"));
    }
    validate_margin(n, margin)?;
    let (t, p, h) = (bank.group_order, bank.filter_size, bank.mesh_size);
    let theta = group_angle(steps, t);
    if steps.rem_euclid(t as i64) == 0 && b == (0.0, 0.0) {
        return Ok(0.0);
    }

    let warped = gfield.warped_in_group(steps, theta, b).sample(n, h)?;
    let lhs = crate::conv::project_conv(&warped, bank)?;

    let (cin, cout) = (gfield.channels, bank.out_channels);
    let kernels: Vec<Vec<f64>> = (0..t * cin * cout)
        .map(|idx| {
            let bk = idx / (cin * cout);
            let c = (idx / cout) % cin;
            let d = idx % cout;
            sample_filter_group(bank.filter(0, c, d), bk, t, p, h)
        })
        .collect();
    let m = (p / 2) as f64;
    let f = AffineTransform::new(theta, b);

    let row_max: Vec<f64> = exec::map_indexed(n - 2 * margin, |ri| {
        let i = ri + margin;
        let xi = centered_coord(i, n, h);
        let mut worst = 0.0f64;
        for j in margin..n - margin {
            let xj = centered_coord(j, n, h);
            let y = f.apply_inverse((xi, xj));
            for d in 0..cout {
                let mut acc = 0.0;
                for c in 0..cin {
                    for bk in 0..t {
                        let kern = &kernels[(bk * cin + c) * cout + d];
                        for ai in 0..p {
                            let da = (ai as f64 - m) * h;
                            for bj in 0..p {
                                let db = (bj as f64 - m) * h;
                                acc += kern[ai * p + bj] * gfield.field(bk, c).eval((y.0 - da, y.1 - db));
                            }
                        }
                    }
                }
                worst = worst.max((lhs.at(i, j, d) - acc).abs());
            }
        }
        worst
    });
    Ok(row_max.into_iter().fold(0.0, f64::max))
}

/// Exact latent evaluator for a network applied to analytic input fields:
/// evaluates the continuous function underlying the discrete network
/// output at arbitrary points, by recursing through the layers on shifted
/// sample lattices. Handles ReLU (applied pointwise to latent values).
pub struct NetAnalytic<'a> {
    spec: &'a EquivNetSpec,
    fields: &'a [LatentField],
    // per layer, kernels with the same indexing as the discrete convs
    kernels: Vec<Vec<Vec<f64>>>,
}

impl<'a> NetAnalytic<'a> {
    pub fn new(spec: &'a EquivNetSpec, fields: &'a [LatentField]) -> Result<Self> {
        if spec.layers()[0].bank.in_channels != fields.len() {
            return Err(Error::invalid("one field per network input channel required"));
        }
        let t = spec.group_order();
        let p = spec.filter_size();
        let h = spec.mesh_size();
        let mut kernels = Vec::with_capacity(spec.num_layers());
        for layer in spec.layers() {
            let bank = &layer.bank;
            let (cin, cout) = (bank.in_channels, bank.out_channels);
            let ks: Vec<Vec<f64>> = match bank.kind {
                LayerKind::Lifting | LayerKind::Projection => (0..t * cin * cout)
                    .map(|idx| {
                        let k = idx / (cin * cout);
                        let c = (idx / cout) % cin;
                        let d = idx % cout;
                        sample_filter_group(bank.filter(0, c, d), k, t, p, h)
                    })
                    .collect(),
                LayerKind::Intermediate => (0..t * t * cin * cout)
                    .map(|idx| {
                        let bk = idx / (t * cin * cout);
                        let a = (idx / (cin * cout)) % t;
                        let c = (idx / cout) % cin;
                        let d = idx % cout;
                        sample_filter_group(bank.filter(a, c, d), bk, t, p, h)
                    })
                    .collect(),
            };
            kernels.push(ks);
        }
        Ok(NetAnalytic { spec, fields, kernels })
    }

    /// Latent network output (all output channels) at point `y`.
    pub fn eval(&self, y: (f64, f64)) -> Vec<f64> {
        let layers = self.spec.layers();
        let n_layers = layers.len();
        let t = self.spec.group_order();
        let p = self.spec.filter_size();
        let h = self.spec.mesh_size();
        let m = (p / 2) as i64;

        // base field values on the widest lattice
        let r0 = (n_layers as i64) * m;
        let w0 = (2 * r0 + 1) as usize;
        let cin0 = self.fields.len();
        let mut base = vec![0.0; w0 * w0 * cin0];
        for oi in 0..w0 {
            let dy0 = (oi as i64 - r0) as f64 * h;
            for oj in 0..w0 {
                let dy1 = (oj as i64 - r0) as f64 * h;
                for (c, field) in self.fields.iter().enumerate() {
                    base[(oi * w0 + oj) * cin0 + c] = field.eval((y.0 + dy0, y.1 + dy1));
                }
            }
        }

        // lifting layer on lattice radius (n_layers - 1) m
        let bank0 = &layers[0].bank;
        let r1 = (n_layers as i64 - 1) * m;
        let w1 = (2 * r1 + 1) as usize;
        let c1 = bank0.out_channels;
        let mut cur = vec![0.0; w1 * w1 * t * c1];
        for oi in 0..w1 {
            for oj in 0..w1 {
                for k in 0..t {
                    for d in 0..c1 {
                        let mut acc = 0.0;
                        for c in 0..cin0 {
                            let kern = &self.kernels[0][(k * cin0 + c) * c1 + d];
                            for a in 0..p {
                                // lattice offset of y + o*h - delta_ab
                                let bi = oi as i64 + r0 - r1 - (a as i64 - m);
                                for bb in 0..p {
                                    let bj = oj as i64 + r0 - r1 - (bb as i64 - m);
                                    acc += kern[a * p + bb] * base[((bi as usize) * w0 + bj as usize) * cin0 + c];
                                }
                            }
                        }
                        cur[((oi * w1 + oj) * t + k) * c1 + d] = acc;
                    }
                }
            }
        }
        if layers[0].activation == Activation::Relu {
            for v in &mut cur {
                *v = v.max(0.0);
            }
        }

        // intermediate layers, shrinking the lattice by m each time
        let mut cur_w = w1;
        let mut cur_c = c1;
        for (li, layer) in layers.iter().enumerate().take(n_layers - 1).skip(1) {
            let bank = &layer.bank;
            let rin = cur_w as i64 / 2;
            let rout = rin - m;
            let wout = (2 * rout + 1) as usize;
            let cout = bank.out_channels;
            let mut next = vec![0.0; wout * wout * t * cout];
            for oi in 0..wout {
                for oj in 0..wout {
                    for bk in 0..t {
                        for d in 0..cout {
                            let mut acc = 0.0;
                            for c in 0..cur_c {
                                for a in 0..t {
                                    let src = (bk + a) % t;
                                    let kern = &self.kernels[li][((bk * t + a) * cur_c + c) * cout + d];
                                    for ai in 0..p {
                                        let bi = oi as i64 + rin - rout - (ai as i64 - m);
                                        for bj2 in 0..p {
                                            let bj = oj as i64 + rin - rout - (bj2 as i64 - m);
                                            acc += kern[ai * p + bj2]
                                                * cur[(((bi as usize) * cur_w + bj as usize) * t + src) * cur_c + c];
                                        }
                                    }
                                }
                            }
                            next[((oi * wout + oj) * t + bk) * cout + d] = acc;
                        }
                    }
                }
            }
            if layer.activation == Activation::Relu {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            cur = next;
            cur_w = wout;
            cur_c = cout;
        }

        // projection at the center point
        let last = &layers[n_layers - 1];
        let bank = &last.bank;
        let rin = cur_w as i64 / 2;
        let cout = bank.out_channels;
        let mut out = vec![0.0; cout];
        for d in 0..cout {
            let mut acc = 0.0;
            for c in 0..cur_c {
                for bk in 0..t {
                    let kern = &self.kernels[n_layers - 1][(bk * cur_c + c) * cout + d];
                    for ai in 0..p {
                        let bi = rin - (ai as i64 - m);
                        for bj2 in 0..p {
                            let bj = rin - (bj2 as i64 - m);
                            acc += kern[ai * p + bj2] * cur[(((bi as usize) * cur_w + bj as usize) * t + bk) * cur_c + c];
                        }
                    }
                }
            }
            if last.activation == Activation::Relu {
                acc = acc.max(0.0);
            }
            out[d] = acc;
        }
        out
    }
}

/// Closed-form latent evaluator for *linear* networks on band-limited
/// cosine fields: every layer output stays a finite cosine mixture, so
/// evaluation is O(#modes) per point regardless of filter size.
pub struct CosineNetAnalytic {
    modes: Vec<(f64, f64)>,
    /// per output channel, per mode: (cos coefficient, sin coefficient)
    coeffs: Vec<Vec<(f64, f64)>>,
}

impl CosineNetAnalytic {
    pub fn new(spec: &EquivNetSpec, fields: &[LatentField]) -> Result<Self> {
        if spec.layers().iter().any(|l| l.activation != Activation::None) {
            return Err(Error::invalid("closed-form evaluator requires a linear network"));
        }
        let comps: Vec<Vec<&crate::field::CosineComponent>> = fields
            .iter()
            .map(|f| match f {
                LatentField::BandlimitedCosine(cs) => Ok(cs.iter().collect()),
                _ => Err(Error::invalid("closed-form evaluator requires cosine fields")),
            })
            .collect::<Result<_>>()?;

        let t = spec.group_order();
        let p = spec.filter_size();
        let h = spec.mesh_size();
        let m = (p / 2) as f64;

        // kernel transfer at frequency k: (C, S) with C = sum K cos(k.delta),
        // S = sum K sin(k.delta)
        let transfer = |kern: &[f64], freq: (f64, f64)| -> (f64, f64) {
            let mut cs = (0.0, 0.0);
            for a in 0..p {
                let da = (a as f64 - m) * h;
                for b in 0..p {
                    let db = (b as f64 - m) * h;
                    let ph = freq.0 * da + freq.1 * db;
                    cs.0 += kern[a * p + b] * ph.cos();
                    cs.1 += kern[a * p + b] * ph.sin();
                }
            }
            cs
        };
        // conv of (alpha cos + beta sin)(k.z) by a kernel:
        //   alpha' = alpha C - beta S, beta' = alpha S + beta C
        let apply = |st: (f64, f64), cs: (f64, f64)| -> (f64, f64) {
            (st.0 * cs.0 - st.1 * cs.1, st.0 * cs.1 + st.1 * cs.0)
        };

        // global mode list: (source channel, frequency)
        let mut modes = Vec::new();
        let mut owners = Vec::new();
        for (c0, list) in comps.iter().enumerate() {
            for comp in list {
                modes.push(comp.freq);
                owners.push((c0, comp.amplitude, comp.phase));
            }
        }
        let nm = modes.len();

        // lifting: state[k][d][mode]
        let bank0 = &spec.layers()[0].bank;
        let c1 = bank0.out_channels;
        let cin0 = bank0.in_channels;
        let mut state = vec![(0.0, 0.0); t * c1 * nm];
        for k in 0..t {
            for d in 0..c1 {
                let kerns: Vec<Vec<f64>> =
                    (0..cin0).map(|c| sample_filter_group(bank0.filter(0, c, d), k, t, p, h)).collect();
                for (q, freq) in modes.iter().enumerate() {
                    let (c0, amp, phase) = owners[q];
                    // a cos(k.z + psi) = (a cos psi) cos - (a sin psi) sin
                    let base = (amp * phase.cos(), -amp * phase.sin());
                    let cs = transfer(&kerns[c0], *freq);
                    state[(k * c1 + d) * nm + q] = apply(base, cs);
                }
            }
        }

        let mut cur_c = c1;
        let layers = spec.layers();
        for layer in layers.iter().take(layers.len() - 1).skip(1) {
            let bank = &layer.bank;
            let cout = bank.out_channels;
            let mut next = vec![(0.0, 0.0); t * cout * nm];
            for bk in 0..t {
                for d in 0..cout {
                    for c in 0..cur_c {
                        for a in 0..t {
                            let src = (bk + a) % t;
                            let kern = sample_filter_group(bank.filter(a, c, d), bk, t, p, h);
                            for (q, freq) in modes.iter().enumerate() {
                                let prev = state[(src * cur_c + c) * nm + q];
                                let add = apply(prev, transfer(&kern, *freq));
                                let slot = &mut next[(bk * cout + d) * nm + q];
                                slot.0 += add.0;
                                slot.1 += add.1;
                            }
                        }
                    }
                }
            }
            state = next;
            cur_c = cout;
        }

        // projection
        let bank = &layers[layers.len() - 1].bank;
        let cout = bank.out_channels;
        let mut coeffs = vec![vec![(0.0, 0.0); nm]; cout];
        for d in 0..cout {
            for c in 0..cur_c {
                for bk in 0..t {
                    let kern = sample_filter_group(bank.filter(0, c, d), bk, t, p, h);
                    for (q, freq) in modes.iter().enumerate() {
                        let prev = state[(bk * cur_c + c) * nm + q];
                        let add = apply(prev, transfer(&kern, *freq));
                        coeffs[d][q].0 += add.0;
                        coeffs[d][q].1 += add.1;
                    }
                }
            }
        }
        Ok(CosineNetAnalytic { modes, coeffs })
    }

    pub fn eval(&self, y: (f64, f64)) -> Vec<f64> {
        self.coeffs
            .iter()
            .map(|per_mode| {
                let mut acc = 0.0;
                for (q, freq) in self.modes.iter().enumerate() {
                    let ph = freq.0 * y.0 + freq.1 * y.1;
                    let (sin, cos) = ph.sin_cos();
                    acc += per_mode[q].0 * cos + per_mode[q].1 * sin;
                }
                acc
            })
            .collect()
    }
}

/// Whole-network equivariance error `max | f^-1(g(f(I))) - g(I) |` over
/// the interior, for an arbitrary rotation angle and translation. The
/// warped branch is evaluated through the exact latent chain; `g(I)` runs
/// through the discrete convolutions.
pub fn equivariance_error(
    spec: &EquivNetSpec,
    fields: &[LatentField],
    n: usize,
    theta: f64,
    b: (f64, f64),
    margin: usize,
) -> Result<f64> {
    validate_margin(n, margin)?;
    let h = spec.mesh_size();
    let f = AffineTransform::new(theta, b);
    if f.is_identity() {
        return Ok(0.0);
    }
    let img = make_grid_image(fields, n, h)?;
    let out = run_network(spec, &img)?.output;

    let warped_fields: Vec<LatentField> = fields.iter().map(|fl| fl.warped(theta, b)).collect();
    let linear = spec.layers().iter().all(|l| l.activation == Activation::None);
    let cosine = warped_fields.iter().all(|fl| matches!(fl, LatentField::BandlimitedCosine(_)));

    enum Eval<'a> {
        Fast(CosineNetAnalytic),
        Direct(NetAnalytic<'a>),
    }
    let evaluator = if linear && cosine {
        Eval::Fast(CosineNetAnalytic::new(spec, &warped_fields)?)
    } else {
        Eval::Direct(NetAnalytic::new(spec, &warped_fields)?)
    };

    let row_max: Vec<f64> = exec::map_indexed(n - 2 * margin, |ri| {
        let i = ri + margin;
        let xi = centered_coord(i, n, h);
        let mut worst = 0.0f64;
        for j in margin..n - margin {
            let xj = centered_coord(j, n, h);
            // f^-1 sampling of the warped-branch latent: evaluate at A x + b
            let z = f.apply((xi, xj));
            let vals = match &evaluator {
                Eval::Fast(e) => e.eval(z),
                Eval::Direct(e) => e.eval(z),
            };
            for (d, v) in vals.iter().enumerate() {
                worst = worst.max((v - out.at(i, j, d)).abs());
            }
        }
        worst
    });
    Ok(row_max.into_iter().fold(0.0, f64::max))
}

/// Whole-network equivariance error measured entirely through the
/// discrete pipeline: the input is warped by `f` with the bilinear
/// resampler, run through the network, warped back by `invert(f)` and
/// compared to the unwarped network output on the interior. The bilinear
/// interpolation error is itself `O(h^2)`, so mesh-refinement series
/// measured this way track the bound's `h^2` term; the margin must cover
/// `N (p-1)/2` padding pixels plus the warp displacement.
pub fn equivariance_error_resampled(
    spec: &EquivNetSpec,
    img: &crate::grid::Image,
    theta: f64,
    b: (f64, f64),
    margin: usize,
) -> Result<f64> {
    validate_margin(img.height.min(img.width), margin)?;
    let f = AffineTransform::new(theta, b);
    let plain = run_network(spec, img)?.output;
    if f.is_identity() {
        return Ok(0.0);
    }
    let warped = crate::transform::warp_image(img, &f);
    let out_w = run_network(spec, &warped)?.output;
    let back = crate::transform::warp_image(&out_w, &f.invert());
    back.max_abs_diff_interior(&plain, margin)
}

/// Per-layer bound of the commutation error: `(C/2)(p+1)^2 h^2` for the
/// lifting layer, times `t` for intermediate and projection layers.
pub fn remark2_bound(c: f64, p: usize, h: f64, t: usize, kind: LayerKind) -> f64 {
    let base = 0.5 * c * ((p + 1) * (p + 1)) as f64 * h * h;
    match kind {
        LayerKind::Lifting => base,
        LayerKind::Intermediate | LayerKind::Projection => base * t as f64,
    }
}

/// Whole-network bound `C1 h^2 + C2 p h / t`.
pub fn theorem1_bound(consts: &BoundConstants, h: f64, p: usize, t: usize) -> f64 {
    consts.c1 * h * h + consts.c2 * p as f64 * h / t as f64
}

/// Rotation angle selector for sweep grid points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaSpec {
    /// One group step, `2 pi / t`.
    InGroup,
    /// Maximally off-group, `pi / t`.
    OffGroup,
    /// The quarter turn `pi / 2`; in-group for every `t` divisible by 4,
    /// where it serves as a `t`-independent in-group floor.
    Quarter,
    /// Fixed angle in radians.
    Radians(f64),
}

impl ThetaSpec {
    fn resolve(&self, t: usize) -> f64 {
        match self {
            ThetaSpec::InGroup => std::f64::consts::TAU / t as f64,
            ThetaSpec::OffGroup => std::f64::consts::PI / t as f64,
            ThetaSpec::Quarter => std::f64::consts::FRAC_PI_2,
            ThetaSpec::Radians(v) => *v,
        }
    }

    fn label(&self) -> String {
        match self {
            ThetaSpec::InGroup => "in-group".to_string(),
            ThetaSpec::OffGroup => "off-group".to_string(),
            ThetaSpec::Quarter => "quarter".to_string(),
            ThetaSpec::Radians(v) => format!("{v}"),
        }
    }
}

/// Sweep grid configuration.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub h_values: Vec<f64>,
    pub p_values: Vec<usize>,
    pub t_values: Vec<usize>,
    pub thetas: Vec<ThetaSpec>,
    /// Translation in pixels (exact-integer values keep the permutation
    /// fast paths available downstream).
    pub shift_px: (f64, f64),
    pub image_size: usize,
    /// Interior margin; computed from `N (p-1)/2 + ceil(shift) + 2` when
    /// absent.
    pub margin: Option<usize>,
    pub reps: usize,
    pub seed_field: u64,
    pub seed_filter: u64,
    pub layers: usize,
    pub relu: bool,
    /// Which layer kind the per-record commutation error measures.
    pub layer_kind: LayerKind,
    /// Mesh-refinement mode: keep the continuous filters fixed (window
    /// radius tied to the coarsest h) and grow the kernel size as h
    /// shrinks, so the measured error tracks the h^2 term. Without it the
    /// filter support follows each record's own (p, h).
    pub fixed_support: bool,
    /// Measure the equivariance error through the bilinear-resampled
    /// discrete pipeline instead of the exact latent warps. The resampler
    /// contributes its own O(h^2) error, which is the dominant term in
    /// mesh-refinement series; exact warps are the right tool for
    /// group-order series where a resampling floor would mask the 1/t
    /// term.
    pub resampled: bool,
    /// Test-field frequency cap in radians per length unit; defaults to
    /// `pi / (4 h_max)`, i.e. a shortest wavelength of eight pixels at the
    /// coarsest mesh. Group-order sweeps use a lower cap so the measured
    /// pixels stay in the linear response regime at the widest off-group
    /// angle.
    pub field_max_freq: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            h_values: vec![1.0 / 64.0],
            p_values: vec![3],
            t_values: vec![8],
            thetas: vec![ThetaSpec::InGroup],
            shift_px: (0.0, 0.0),
            image_size: 32,
            margin: None,
            reps: 1,
            seed_field: 11,
            seed_filter: 22,
            layers: 3,
            relu: true,
            layer_kind: LayerKind::Lifting,
            fixed_support: false,
            resampled: false,
            field_max_freq: None,
        }
    }
}

fn parse_f64_token(tok: &str) -> Result<f64> {
    let tok = tok.trim();
    if let Some((num, den)) = tok.split_once('/') {
        let n: f64 = num.trim().parse().map_err(|_| Error::invalid(format!("bad number '{tok}'")))?;
        let d: f64 = den.trim().parse().map_err(|_| Error::invalid(format!("bad number '{tok}'")))?;
        if d == 0.0 {
            return Err(Error::invalid(format!("division by zero in '{tok}'")));
        }
        Ok(n / d)
    } else {
        tok.parse().map_err(|_| Error::invalid(format!("bad number '{tok}'")))
    }
}

impl SweepConfig {
    /// Parse a flat `key=value` config. Unknown keys are usage errors.
    pub fn parse(text: &str) -> Result<SweepConfig> {
        let mut cfg = SweepConfig::default();
        for (lineno, key, value) in crate::io::parse_kv(text)? {
            let bad = |what: String| Error::invalid(format!("line {lineno}: {what}"));
            match key.as_str() {
                "h" => {
                    cfg.h_values = value.split(',').map(parse_f64_token).collect::<Result<_>>()?;
                }
                "p" => {
                    cfg.p_values = value
                        .split(',')
                        .map(|v| v.trim().parse::<usize>().map_err(|_| bad(format!("bad p '{v}'"))))
                        .collect::<Result<_>>()?;
                }
                "t" => {
                    cfg.t_values = value
                        .split(',')
                        .map(|v| v.trim().parse::<usize>().map_err(|_| bad(format!("bad t '{v}'"))))
                        .collect::<Result<_>>()?;
                }
                "theta" => {
                    cfg.thetas = value
                        .split(',')
                        .map(|v| match v.trim() {
                            "in-group" => Ok(ThetaSpec::InGroup),
                            "off-group" => Ok(ThetaSpec::OffGroup),
                            "quarter" => Ok(ThetaSpec::Quarter),
                            other => parse_f64_token(other).map(ThetaSpec::Radians),
                        })
                        .collect::<Result<_>>()?;
                }
                "shift" => {
                    let mut it = value.split(',');
                    let a = parse_f64_token(it.next().unwrap_or(""))?;
                    let b = parse_f64_token(it.next().unwrap_or(""))?;
                    cfg.shift_px = (a, b);
                }
                "n" => cfg.image_size = value.parse().map_err(|_| bad(format!("bad n '{value}'")))?,
                "margin" => {
                    cfg.margin = if value == "auto" {
                        None
                    } else {
                        Some(value.parse().map_err(|_| bad(format!("bad margin '{value}'")))?)
                    }
                }
                "reps" => cfg.reps = value.parse().map_err(|_| bad(format!("bad reps '{value}'")))?,
                "seed_field" => {
                    cfg.seed_field = value.parse().map_err(|_| bad(format!("bad seed_field '{value}'")))?
                }
                "seed_filter" => {
                    cfg.seed_filter = value.parse().map_err(|_| bad(format!("bad seed_filter '{value}'")))?
                }
                "layers" => cfg.layers = value.parse().map_err(|_| bad(format!("bad layers '{value}'")))?,
                "relu" => cfg.relu = value == "1" || value == "true",
                "layer_kind" => cfg.layer_kind = value.parse()?,
                "fixed_support" => cfg.fixed_support = value == "1" || value == "true",
                "resampled" => cfg.resampled = value == "1" || value == "true",
                "field_max_freq" => {
                    cfg.field_max_freq =
                        if value == "auto" { None } else { Some(parse_f64_token(&value)?) }
                }
                other => return Err(Error::invalid(format!("unknown config key '{other}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.h_values.is_empty() || self.p_values.is_empty() || self.t_values.is_empty() || self.thetas.is_empty()
        {
            return Err(Error::invalid("h, p, t and theta lists must be nonempty"));
        }
        if self.h_values.iter().any(|&h| h <= 0.0) {
            return Err(Error::invalid("mesh sizes must be positive"));
        }
        if self.p_values.iter().any(|&p| p % 2 == 0) {
            return Err(Error::invalid("filter sizes must be odd"));
        }
        if self.reps == 0 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        if self.layers < 2 {
            return Err(Error::invalid("network needs at least 2 layers"));
        }
        Ok(())
    }

    /// Serialize back to the flat key=value form (records the resolved
    /// configuration in output manifests).
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let join_f = |v: &[f64]| v.iter().map(|x| format!("{x:.17e}")).collect::<Vec<_>>().join(",");
        vec![
            ("h".into(), join_f(&self.h_values)),
            ("p".into(), self.p_values.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")),
            ("t".into(), self.t_values.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")),
            ("theta".into(), self.thetas.iter().map(|t| t.label()).collect::<Vec<_>>().join(",")),
            ("shift".into(), format!("{},{}", self.shift_px.0, self.shift_px.1)),
            ("n".into(), self.image_size.to_string()),
            (
                "margin".into(),
                self.margin.map(|m| m.to_string()).unwrap_or_else(|| "auto".into()),
            ),
            ("reps".into(), self.reps.to_string()),
            ("seed_field".into(), self.seed_field.to_string()),
            ("seed_filter".into(), self.seed_filter.to_string()),
            ("layers".into(), self.layers.to_string()),
            ("relu".into(), if self.relu { "1".into() } else { "0".into() }),
            ("layer_kind".into(), self.layer_kind.to_string()),
            ("fixed_support".into(), if self.fixed_support { "1".into() } else { "0".into() }),
            ("resampled".into(), if self.resampled { "1".into() } else { "0".into() }),
            (
                "field_max_freq".into(),
                self.field_max_freq.map(|v| format!("{v:.17e}")).unwrap_or_else(|| "auto".into()),
            ),
        ]
    }
}

/// One sweep grid point.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub h: f64,
    pub p: usize,
    pub t: usize,
    pub n: usize,
    pub theta: f64,
    pub b: (f64, f64),
    pub layer_kind: LayerKind,
    /// Per-layer commutation error; NaN for off-group angles (the
    /// per-layer bounds only cover in-group rotations).
    pub err_commutation: f64,
    pub err_equivariance: f64,
    pub bound_remark2: f64,
    pub bound_thm1: f64,
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub f_script: f64,
    pub seed_field: u64,
    pub seed_filter: u64,
}

/// A fitted log-log slope; `None` when undefined (all-zero errors).
#[derive(Debug, Clone)]
pub struct SlopeFit {
    pub label: String,
    pub slope: Option<f64>,
}

/// Sweep output: records in deterministic configuration order plus the
/// fitted scaling slopes.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub records: Vec<SweepRecord>,
    pub slopes_h: Vec<SlopeFit>,
    pub slopes_t: Vec<SlopeFit>,
}

/// Least-squares slope of `ln y` against `ln x`, ignoring non-positive
/// points; `None` with fewer than two usable points.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let usable: Vec<(f64, f64)> =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|&(x, y)| (x.ln(), y.ln())).collect();
    if usable.len() < 2 {
        return None;
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in &usable {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}

fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    base.wrapping_add(a.wrapping_mul(0x9E3779B97F4A7C15)).wrapping_add(b.wrapping_mul(0xD1B54A32D192ED03))
}

/// Grid size for a record: in fixed-support mode `p` grows as `h` shrinks
/// so the physical kernel footprint stays put.
fn effective_p(cfg: &SweepConfig, p_base: usize, h: f64) -> usize {
    if !cfg.fixed_support {
        return p_base;
    }
    let h_max = cfg.h_values.iter().cloned().fold(0.0, f64::max);
    let radius = (p_base as f64 + 1.0) * h_max / 2.0;
    // one tap ring beyond the support so the quadrature never truncates it
    let cells = (radius / h).ceil() as usize;
    2 * cells.max(1) + 1
}

fn effective_radius(cfg: &SweepConfig, p_base: usize, p: usize, h: f64) -> f64 {
    if cfg.fixed_support {
        let h_max = cfg.h_values.iter().cloned().fold(0.0, f64::max);
        (p_base as f64 + 1.0) * h_max / 2.0
    } else {
        (p as f64 + 1.0) * h / 2.0
    }
}

/// Run the sweep: for each `(h, p, t, theta, rep)` grid point, build the
/// seeded field and network, measure the per-layer commutation error (in
/// group only) and the network equivariance error, and evaluate the
/// certified bounds.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let h_max = cfg.h_values.iter().cloned().fold(0.0, f64::max);
    let max_freq = cfg.field_max_freq.unwrap_or(std::f64::consts::PI / (4.0 * h_max));

    // flattened grid in deterministic order
    struct Point {
        h: f64,
        p_base: usize,
        t: usize,
        theta_spec: ThetaSpec,
        rep: usize,
    }
    let mut points = Vec::new();
    for &h in &cfg.h_values {
        for &p in &cfg.p_values {
            for &t in &cfg.t_values {
                for &th in &cfg.thetas {
                    for rep in 0..cfg.reps {
                        points.push(Point { h, p_base: p, t, theta_spec: th, rep });
                    }
                }
            }
        }
    }

    let records: Vec<Result<SweepRecord>> = exec::map_indexed(points.len(), |idx| {
        let pt = &points[idx];
        let (h, t) = (pt.h, pt.t);
        let p = effective_p(cfg, pt.p_base, h);
        let radius = effective_radius(cfg, pt.p_base, p, h);
        let cap = pt.p_base;
        let n = cfg.image_size;
        let b = (cfg.shift_px.0 * h, cfg.shift_px.1 * h);

        let theta = pt.theta_spec.resolve(t);
        let margin = cfg.margin.unwrap_or_else(|| {
            // N(p-1)/2 padding, plus warp displacement when the bilinear
            // pipeline is measured (rotation sweeps pixels by up to
            // n |sin theta| / 2), plus a fringe allowance
            let shift = cfg.shift_px.0.abs().max(cfg.shift_px.1.abs());
            let displacement =
                if cfg.resampled { shift + n as f64 * theta.sin().abs() / 2.0 } else { shift };
            cfg.layers * (p - 1) / 2 + displacement.ceil() as usize + 2
        });
        validate_margin(n, margin)?;

        // field fixed across (h, p, t, theta) so refinement series are
        // comparable; fresh per repetition
        let mut frng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed_field, pt.rep as u64, 0));
        let field = LatentField::random_bandlimited(&mut frng, 6, max_freq, 1.0);
        let fields = [field];
        let fb = field_bounds(&fields[0]);

        // filters: the seed ignores t and h, so 2-layer nets share their
        // continuous filters across a group-order series, a fixed-support
        // refinement series keeps one continuous filter set, and a
        // default-family refinement series (support following h) keeps one
        // self-similar coefficient set, which samples to identical kernel
        // matrices at every h
        let filter_seed = derive_seed(cfg.seed_filter, pt.rep as u64, pt.p_base as u64);
        let mut nrng = rand_chacha::ChaCha8Rng::seed_from_u64(filter_seed);
        let mut spec = EquivNetSpec::random_with(cfg.layers, 1, 1, 1, t, p, h, radius, cap, cfg.relu, &mut nrng)?
            .with_group_averaged_banks();
        if cfg.fixed_support {
            // Riemann-sum normalization: with the physical support fixed,
            // scaling each layer by h^2 keeps layer gains stable as the
            // kernel grows, so the h^2 quadrature term is what the
            // refinement series measures.
            spec = spec.with_scaled_filters((h / h_max) * (h / h_max));
        }

        let in_group_steps = {
            let steps = theta * t as f64 / std::f64::consts::TAU;
            let rounded = steps.round();
            if (steps - rounded).abs() < 1e-12 { Some(rounded as i64) } else { None }
        };

        let consts = compute_constants(&spec.layer_bound_inputs(), fb, n, n, p)?;

        // per-layer commutation (in-group only)
        let (err_comm, c_layer, bound_r2) = if let Some(steps) = in_group_steps {
            match cfg.layer_kind {
                LayerKind::Lifting => {
                    let bank = &spec.layers()[0].bank;
                    let c = remark2_constant(fb, bank.bounds());
                    let err = commutation_error_lift(bank, &fields, n, steps, b, margin)?;
                    (err, c, remark2_bound(c, p, h, t, LayerKind::Lifting))
                }
                kind => {
                    let mut grng =
                        rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed_field, pt.rep as u64, 1));
                    let gfield = GroupLatentField::random_bandlimited(&mut grng, t, 1, 4, max_freq);
                    let mut brng =
                        rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(filter_seed, 7, kind as u64));
                    let bank = FilterBank::random_with(kind, 1, 1, t, p, h, radius, cap, &mut brng)?;
                    let c = remark2_constant(gfield.bounds(), bank.bounds());
                    let err = match kind {
                        LayerKind::Intermediate => commutation_error_group(&bank, &gfield, n, steps, b, margin)?,
                        LayerKind::Projection => commutation_error_project(&bank, &gfield, n, steps, b, margin)?,
                        LayerKind::Lifting => unreachable!(),
                    };
                    (err, c, remark2_bound(c, p, h, t, kind))
                }
            }
        } else {
            (f64::NAN, consts.remark2_c, f64::NAN)
        };

        let err_equiv = if cfg.resampled {
            let img = make_grid_image(&fields, n, h)?;
            equivariance_error_resampled(&spec, &img, theta, b, margin)?
        } else {
            equivariance_error(&spec, &fields, n, theta, b, margin)?
        };
        let bound_t1 = theorem1_bound(&consts, h, p, t);

        Ok(SweepRecord {
            h,
            p,
            t,
            n,
            theta,
            b,
            layer_kind: cfg.layer_kind,
            err_commutation: err_comm,
            err_equivariance: err_equiv,
            bound_remark2: bound_r2,
            bound_thm1: bound_t1,
            c: c_layer,
            c1: consts.c1,
            c2: consts.c2,
            f_script: consts.f_script,
            seed_field: derive_seed(cfg.seed_field, pt.rep as u64, 0),
            seed_filter: filter_seed,
        })
    });
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;

    // h-slopes: per (p series, t, theta), rep-averaged equivariance error
    let mut slopes_h = Vec::new();
    if cfg.h_values.len() >= 2 {
        for &p_base in &cfg.p_values {
            for &t in &cfg.t_values {
                for th in &cfg.thetas {
                    let mut pts = Vec::new();
                    for &h in &cfg.h_values {
                        let vals: Vec<f64> = records
                            .iter()
                            .filter(|r| {
                                r.h == h && r.t == t && r.p == effective_p(cfg, p_base, h)
                                    && (r.theta - th.resolve(t)).abs() < 1e-15
                            })
                            .map(|r| r.err_equivariance)
                            .collect();
                        if !vals.is_empty() {
                            pts.push((h, vals.iter().sum::<f64>() / vals.len() as f64));
                        }
                    }
                    slopes_h.push(SlopeFit {
                        label: format!("p={p_base} t={t} theta={}", th.label()),
                        slope: loglog_slope(&pts),
                    });
                }
            }
        }
    }

    // t-slopes: floor-subtracted off-group error against t. The floor is
    // the in-group error at the same (h, p, t); the quarter turn is the
    // preferred floor when present, being in-group at every t in a
    // 4-divisible series.
    let mut slopes_t = Vec::new();
    let floor_spec = if cfg.thetas.contains(&ThetaSpec::Quarter) {
        Some(ThetaSpec::Quarter)
    } else if cfg.thetas.contains(&ThetaSpec::InGroup) {
        Some(ThetaSpec::InGroup)
    } else {
        None
    };
    if let Some(floor_spec) = floor_spec {
        if cfg.thetas.contains(&ThetaSpec::OffGroup) && cfg.t_values.len() >= 2 {
            for &h in &cfg.h_values {
                for &p_base in &cfg.p_values {
                    let mut pts = Vec::new();
                    for &t in &cfg.t_values {
                        let p = effective_p(cfg, p_base, h);
                        let sel = |spec: ThetaSpec| -> Option<f64> {
                            let vals: Vec<f64> = records
                                .iter()
                                .filter(|r| {
                                    r.h == h && r.t == t && r.p == p && (r.theta - spec.resolve(t)).abs() < 1e-15
                                })
                                .map(|r| r.err_equivariance)
                                .collect();
                            if vals.is_empty() {
                                None
                            } else {
                                Some(vals.iter().sum::<f64>() / vals.len() as f64)
                            }
                        };
                        if let (Some(off), Some(floor)) = (sel(ThetaSpec::OffGroup), sel(floor_spec)) {
                            pts.push((t as f64, off - floor));
                        }
                    }
                    slopes_t.push(SlopeFit { label: format!("h={h} p={p_base}"), slope: loglog_slope(&pts) });
                }
            }
        }
    }

    Ok(SweepOutcome { records, slopes_h, slopes_t })
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.17e}")
    }
}

impl SweepOutcome {
    /// Deterministic CSV: the schema header, one row per record in
    /// configuration order, then `#`-prefixed slope summary lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "h,p,t,n,theta,b1,b2,layer_kind,err_commutation,err_equivariance,bound_remark2,bound_thm1,C,C1,C2,F_script,seed_field,seed_filter\n",
        );
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                fmt_f(r.h),
                r.p,
                r.t,
                r.n,
                fmt_f(r.theta),
                fmt_f(r.b.0),
                fmt_f(r.b.1),
                r.layer_kind,
                fmt_f(r.err_commutation),
                fmt_f(r.err_equivariance),
                fmt_f(r.bound_remark2),
                fmt_f(r.bound_thm1),
                fmt_f(r.c),
                fmt_f(r.c1),
                fmt_f(r.c2),
                fmt_f(r.f_script),
                r.seed_field,
                r.seed_filter
            ));
        }
        for s in &self.slopes_h {
            match s.slope {
                Some(v) => out.push_str(&format!("# slope_h[{}]={v:.6}\n", s.label)),
                None => out.push_str(&format!("# slope_h[{}]=undefined\n", s.label)),
            }
        }
        for s in &self.slopes_t {
            match s.slope {
                Some(v) => out.push_str(&format!("# slope_t[{}]={v:.6}\n", s.label)),
                None => out.push_str(&format!("# slope_t[{}]=undefined\n", s.label)),
            }
        }
        out
    }
}
