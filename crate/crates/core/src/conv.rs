//! The three group-convolution layer types and the N-layer network runner.
//!
//! All layers use the convolution form `sum_delta phi(A^-1 delta) x(pos - delta)`
//! with zero padding and "same" output size; the inner reduction runs in a
//! fixed lexicographic order over `(c, A, di, dj)` so results are
//! deterministic regardless of thread count. Group composition on the
//! orientation axis is index addition modulo `t`.

use crate::error::{Error, Result};
use crate::exec;
use crate::filters::{sample_filter_group, FilterBank, LayerKind};
use crate::grid::{GroupFeatureMap, Image};
use rand::SeedableRng;

/// Lifting convolution: adds the group axis.
///
/// `out[i,j,k,d] = sum_{c, di, dj} phi_cd(A_k^-1 delta) * img[i - di', j - dj', c]`
/// with `A_k` the rotation by `2 pi k / t`.
pub fn lift_conv(img: &Image, bank: &FilterBank) -> Result<GroupFeatureMap> {
    if bank.kind != LayerKind::Lifting {
        return Err(Error::invalid("lift_conv requires a lifting bank"));
    }
    if bank.in_channels != img.channels {
        return Err(Error::invalid(format!(
            "bank expects {} input channels, image has {}",
            bank.in_channels, img.channels
        )));
    }
    let (t, p, h) = (bank.group_order, bank.filter_size, bank.mesh_size);
    let m = (p / 2) as isize;
    // kernels[k][c][d] as flat p*p tables
    let kernels: Vec<Vec<f64>> = (0..t * img.channels * bank.out_channels)
        .map(|idx| {
            let k = idx / (img.channels * bank.out_channels);
            let c = (idx / bank.out_channels) % img.channels;
            let d = idx % bank.out_channels;
            sample_filter_group(bank.filter(0, c, d), k, t, p, h)
        })
        .collect();

    let (height, width, cin, cout) = (img.height, img.width, img.channels, bank.out_channels);
    let mut out = GroupFeatureMap::zeros(height, width, t, cout, h);
    exec::fill_chunks(out.data_mut(), width * t * cout, |i, row| {
        for j in 0..width {
            for k in 0..t {
                for d in 0..cout {
                    let mut acc = 0.0;
                    for c in 0..cin {
                        let kern = &kernels[(k * cin + c) * cout + d];
                        for a in 0..p {
                            let si = i as isize + m - a as isize;
                            for b in 0..p {
                                let sj = j as isize + m - b as isize;
                                acc += kern[a * p + b] * img.at_or_zero(si, sj, c);
                            }
                        }
                    }
                    row[(j * t + k) * cout + d] = acc;
                }
            }
        }
    });
    Ok(out)
}

/// Intermediate group convolution: preserves the group axis.
///
/// `out[i,j,B,d] = sum_{c, A, di, dj} phi_{A,c,d}(A_B^-1 delta) * fmap[i-di', j-dj', (B+A) mod t, c]`
pub fn group_conv(fmap: &GroupFeatureMap, bank: &FilterBank) -> Result<GroupFeatureMap> {
    if bank.kind != LayerKind::Intermediate {
        return Err(Error::invalid("group_conv requires an intermediate bank"));
    }
    if bank.group_order != fmap.group_order {
        return Err(Error::invalid(format!(
            "bank group order {} does not match feature map {}",
            bank.group_order, fmap.group_order
        )));
    }
    if bank.in_channels != fmap.channels {
        return Err(Error::invalid(format!(
            "bank expects {} input channels, feature map has {}",
            bank.in_channels, fmap.channels
        )));
    }
    let (t, p, h) = (bank.group_order, bank.filter_size, bank.mesh_size);
    let m = (p / 2) as isize;
    let (cin, cout) = (fmap.channels, bank.out_channels);
    // kernels[b][a][c][d]
    let kernels: Vec<Vec<f64>> = (0..t * t * cin * cout)
        .map(|idx| {
            let b = idx / (t * cin * cout);
            let a = (idx / (cin * cout)) % t;
            let c = (idx / cout) % cin;
            let d = idx % cout;
            sample_filter_group(bank.filter(a, c, d), b, t, p, h)
        })
        .collect();

    let (height, width) = (fmap.height, fmap.width);
    let mut out = GroupFeatureMap::zeros(height, width, t, cout, h);
    exec::fill_chunks(out.data_mut(), width * t * cout, |i, row| {
        for j in 0..width {
            for bk in 0..t {
                for d in 0..cout {
                    let mut acc = 0.0;
                    for c in 0..cin {
                        for a in 0..t {
                            let src_k = (bk + a) % t;
                            let kern = &kernels[((bk * t + a) * cin + c) * cout + d];
                            for di in 0..p {
                                let si = i as isize + m - di as isize;
                                for dj in 0..p {
                                    let sj = j as isize + m - dj as isize;
                                    acc += kern[di * p + dj] * fmap.at_or_zero(si, sj, src_k, c);
                                }
                            }
                        }
                    }
                    row[(j * t + bk) * cout + d] = acc;
                }
            }
        }
    });
    Ok(out)
}

/// Projection convolution: sums the group axis back to a plain image.
///
/// `out[i,j,d] = sum_{c, B, di, dj} phi_cd(A_B^-1 delta) * fmap[i-di', j-dj', B, c]`
pub fn project_conv(fmap: &GroupFeatureMap, bank: &FilterBank) -> Result<Image> {
    if bank.kind != LayerKind::Projection {
        return Err(Error::invalid("project_conv requires a projection bank"));
    }
    if bank.group_order != fmap.group_order {
        return Err(Error::invalid(format!(
            "bank group order {} does not match feature map {}",
            bank.group_order, fmap.group_order
        )));
    }
    if bank.in_channels != fmap.channels {
        return Err(Error::invalid(format!(
            "bank expects {} input channels, feature map has {}",
            bank.in_channels, fmap.channels
        )));
    }
    let (t, p, h) = (bank.group_order, bank.filter_size, bank.mesh_size);
    let m = (p / 2) as isize;
    let (cin, cout) = (fmap.channels, bank.out_channels);
    // kernels[b][c][d]
    let kernels: Vec<Vec<f64>> = (0..t * cin * cout)
        .map(|idx| {
            let b = idx / (cin * cout);
            let c = (idx / cout) % cin;
            let d = idx % cout;
            sample_filter_group(bank.filter(0, c, d), b, t, p, h)
        })
        .collect();

    let (height, width) = (fmap.height, fmap.width);
    let mut out = Image::zeros(height, width, cout, h);
    exec::fill_chunks(out.data_mut(), width * cout, |i, row| {
        for j in 0..width {
            for d in 0..cout {
                let mut acc = 0.0;
                for c in 0..cin {
                    for b in 0..t {
                        let kern = &kernels[(b * cin + c) * cout + d];
                        for di in 0..p {
                            let si = i as isize + m - di as isize;
                            for dj in 0..p {
                                let sj = j as isize + m - dj as isize;
                                acc += kern[di * p + dj] * fmap.at_or_zero(si, sj, b, c);
                            }
                        }
                    }
                }
                row[j * cout + d] = acc;
            }
        }
    });
    Ok(out)
}

pub fn relu_image(img: &Image) -> Image {
    img.map(|v| v.max(0.0))
}

pub fn relu_map(fmap: &GroupFeatureMap) -> GroupFeatureMap {
    fmap.map(|v| v.max(0.0))
}

/// Per-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Activation::None => write!(f, "none"),
            Activation::Relu => write!(f, "relu"),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Activation::None),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

/// One layer of an equivariant network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetLayer {
    pub bank: FilterBank,
    pub activation: Activation,
}

/// Validated N-layer network: a lifting layer, `N-2` intermediate layers
/// and a projection layer, sharing `t`, `p` and `h`, with matching channel
/// counts between adjacent layers.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivNetSpec {
    layers: Vec<NetLayer>,
}

impl EquivNetSpec {
    pub fn new(layers: Vec<NetLayer>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::invalid("network needs at least lifting and projection layers"));
        }
        let n = layers.len();
        for (i, l) in layers.iter().enumerate() {
            let expect = if i == 0 {
                LayerKind::Lifting
            } else if i == n - 1 {
                LayerKind::Projection
            } else {
                LayerKind::Intermediate
            };
            if l.bank.kind != expect {
                return Err(Error::invalid(format!("layer {i} must be {expect}, got {}", l.bank.kind)));
            }
        }
        let first = &layers[0].bank;
        let (t, p, h) = (first.group_order, first.filter_size, first.mesh_size);
        for (i, l) in layers.iter().enumerate() {
            if l.bank.group_order != t || l.bank.filter_size != p || l.bank.mesh_size != h {
                return Err(Error::invalid(format!("layer {i} does not share t, p, h with layer 0")));
            }
            if i > 0 && l.bank.in_channels != layers[i - 1].bank.out_channels {
                return Err(Error::invalid(format!(
                    "layer {i} input channels {} do not match layer {} output channels {}",
                    l.bank.in_channels,
                    i - 1,
                    layers[i - 1].bank.out_channels
                )));
            }
        }
        Ok(EquivNetSpec { layers })
    }

    /// Seeded random network with `n_layers >= 2` layers and the given
    /// uniform channel width, with ReLU after lifting and intermediate
    /// layers when `relu` is set.
    #[allow(clippy::too_many_arguments)]
    pub fn random(
        n_layers: usize,
        in_channels: usize,
        hidden_channels: usize,
        out_channels: usize,
        t: usize,
        p: usize,
        h: f64,
        relu: bool,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(
            n_layers,
            in_channels,
            hidden_channels,
            out_channels,
            t,
            p,
            h,
            (p as f64 + 1.0) * h / 2.0,
            p,
            relu,
            &mut rng,
        )
    }

    /// Seeded random network with explicit window radius and basis cap.
    #[allow(clippy::too_many_arguments)]
    pub fn random_with(
        n_layers: usize,
        in_channels: usize,
        hidden_channels: usize,
        out_channels: usize,
        t: usize,
        p: usize,
        h: f64,
        radius: f64,
        cap: usize,
        relu: bool,
        rng: &mut impl rand::Rng,
    ) -> Result<Self> {
        if n_layers < 2 {
            return Err(Error::invalid("network needs at least 2 layers"));
        }
        let act = if relu { Activation::Relu } else { Activation::None };
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let kind = if i == 0 {
                LayerKind::Lifting
            } else if i == n_layers - 1 {
                LayerKind::Projection
            } else {
                LayerKind::Intermediate
            };
            let cin = if i == 0 { in_channels } else { hidden_channels };
            let cout = if i == n_layers - 1 { out_channels } else { hidden_channels };
            let bank = FilterBank::random_with(kind, cin, cout, t, p, h, radius, cap, rng)?;
            layers.push(NetLayer {
                bank,
                activation: if i == n_layers - 1 { Activation::None } else { act },
            });
        }
        EquivNetSpec::new(layers)
    }

    pub fn layers(&self) -> &[NetLayer] {
        &self.layers
    }

    /// The same network with every filter scaled by `k`. Scaling all
    /// layers by the squared mesh size turns each convolution into a
    /// Riemann sum of its continuous counterpart, which keeps layer gains
    /// stable under mesh refinement at fixed physical filter support.
    pub fn with_scaled_filters(&self, k: f64) -> EquivNetSpec {
        EquivNetSpec {
            layers: self
                .layers
                .iter()
                .map(|l| NetLayer { bank: l.bank.scaled(k), activation: l.activation })
                .collect(),
        }
    }

    /// The same network with intermediate and projection filters scaled by
    /// `1/t`, turning group-axis sums into averages. This matches the
    /// normalized Haar measure of the continuous convolutions and keeps
    /// the output scale comparable across group orders.
    pub fn with_group_averaged_banks(&self) -> EquivNetSpec {
        let t = self.group_order() as f64;
        EquivNetSpec {
            layers: self
                .layers
                .iter()
                .map(|l| NetLayer {
                    bank: if l.bank.kind == LayerKind::Lifting { l.bank.clone() } else { l.bank.scaled(1.0 / t) },
                    activation: l.activation,
                })
                .collect(),
        }
    }

    pub fn group_order(&self) -> usize {
        self.layers[0].bank.group_order
    }

    pub fn filter_size(&self) -> usize {
        self.layers[0].bank.filter_size
    }

    pub fn mesh_size(&self) -> f64 {
        self.layers[0].bank.mesh_size
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// `(filter bounds, input channel count)` per layer, as consumed by
    /// [`crate::filters::compute_constants`]. Layers reading a group
    /// feature map count `t * C` input channels (the group axis folds into
    /// the channel axis for the constant formulas).
    pub fn layer_bound_inputs(&self) -> Vec<(crate::field::Bounds3, usize)> {
        let t = self.group_order();
        self.layers
            .iter()
            .map(|l| {
                let slots = if l.bank.kind == LayerKind::Lifting { 1 } else { t };
                (l.bank.bounds(), l.bank.in_channels * slots)
            })
            .collect()
    }
}

/// Result of running a network: the projected image and the pre-projection
/// group feature map used for alignment.
#[derive(Debug, Clone)]
pub struct NetOutput {
    pub output: Image,
    pub features: GroupFeatureMap,
}

/// Sequential application: lifting, intermediates, projection, with the
/// per-layer activations applied after lifting/intermediate layers.
pub fn run_network(spec: &EquivNetSpec, img: &Image) -> Result<NetOutput> {
    let n = spec.layers.len();
    let mut fmap = lift_conv(img, &spec.layers[0].bank)?;
    if spec.layers[0].activation == Activation::Relu {
        fmap = relu_map(&fmap);
    }
    for layer in &spec.layers[1..n - 1] {
        fmap = group_conv(&fmap, &layer.bank)?;
        if layer.activation == Activation::Relu {
            fmap = relu_map(&fmap);
        }
    }
    let last = &spec.layers[n - 1];
    let mut output = project_conv(&fmap, &last.bank)?;
    if last.activation == Activation::Relu {
        output = relu_image(&output);
    }
    Ok(NetOutput { output, features: fmap })
}
