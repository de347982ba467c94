//! Rotation-translation equivariant convolutions on sampled grids, with
//! certified discretization error bounds and an equivariance-based burst
//! image alignment / fusion / super-resolution pipeline.
//!
//! The crate is organised around a small set of value types:
//!
//! * [`Image`] / [`GroupFeatureMap`] — grid functions sampled from latent
//!   smooth fields on a centered mesh of spacing `h`.
//! * [`LatentField`] — analytic test fields (Gaussian mixtures, band-limited
//!   cosines) with closed-form derivative bounds.
//! * [`SteerableFilter`] / [`FilterBank`] — smooth, compactly supported
//!   filters evaluable at arbitrary rotated coordinates.
//! * [`AffineTransform`] — rotation + translation acting on images and
//!   group feature maps.
//!
//! On top of these sit the three group-convolution layer types
//! ([`conv`]), an error meter that checks measured equivariance errors
//! against the certified bounds ([`meter`]), a synthetic burst simulator
//! ([`burst`]) and the alignment / fusion / reconstruction stages
//! ([`align`], [`fuse`], [`reconstruct`]).
//!
//! All operations are pure functions over immutable values. With the
//! `parallel` feature (default) the data-parallel inner loops run on a
//! rayon pool capped by the `EQUIBURST_THREADS` environment variable;
//! outputs are bit-identical regardless of thread count.

pub mod align;
pub mod burst;
pub mod conv;
mod error;
mod exec;
pub mod field;
pub mod filters;
pub mod fuse;
pub mod grid;
pub mod io;
pub mod meter;
pub mod metrics;
pub mod reconstruct;
pub mod scene;
pub mod selftest;
pub mod transform;

pub use align::{
    align_burst, align_features, align_loss, estimate_transform, AlignmentResult, FrameAlignment, SearchConfig,
};
pub use burst::{add_noise, downsample, mosaic_rggb, pack4, synthesize_burst, unpack4, BurstSequence};
pub use conv::{
    group_conv, lift_conv, project_conv, relu_image, relu_map, run_network, Activation, EquivNetSpec, NetLayer,
    NetOutput,
};
pub use error::{Error, Result};
pub use field::{field_bounds, make_grid_image, Bounds3, CosineComponent, GaussianComponent, LatentField};
pub use filters::{
    compute_constants, filter_bounds, remark2_constant, sample_filter_grid, BoundConstants, FilterBank, FourierTerm,
    LayerKind, SteerableFilter,
};
pub use fuse::{mdta_fuse, mdta_fuse_detailed, FrameMdta, MdtaParams};
pub use grid::{pixel_shuffle, pixel_unshuffle, GroupFeatureMap, Image};
pub use meter::{
    commutation_error_group, commutation_error_lift, commutation_error_project, equivariance_error, loglog_slope,
    remark2_bound, run_sweep, theorem1_bound, CosineNetAnalytic, GroupLatentField, NetAnalytic, SlopeFit, SweepConfig,
    SweepOutcome, SweepRecord, ThetaSpec,
};
pub use metrics::{l1_fidelity, psnr, spearman, ssim};
pub use reconstruct::{bicubic_baseline, reconstruct, residual_weights, FeatureMode, ReconstructConfig};
pub use transform::{
    resample_to, transform_from_manifest, upsample_bicubic, upsample_bilinear, warp_feature, warp_image, wrap_angle,
    AffineTransform,
};
