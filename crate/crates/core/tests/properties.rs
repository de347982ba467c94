//! Property tests for the value-type invariants: shuffle/container round
//! trips and the rotation-translation group laws.

use equiburst::{
    pixel_shuffle, pixel_unshuffle, wrap_angle, AffineTransform, GroupFeatureMap, Image,
};
use proptest::prelude::*;

fn image_strategy() -> impl Strategy<Value = (Image, usize)> {
    (1usize..=4, 1usize..=4, 1usize..=2, 1usize..=3).prop_flat_map(|(hb, wb, cb, s)| {
        let (h, w, c) = (hb * s, wb * s, cb * s * s);
        (
            proptest::collection::vec(-1e3f64..1e3, h * w * c),
            Just(h),
            Just(w),
            Just(c),
            Just(s),
        )
            .prop_map(|(data, h, w, c, s)| (Image::new(h, w, c, 0.5, data).unwrap(), s))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// pixel_shuffle and pixel_unshuffle are mutually inverse bijections on
    /// valid shapes, bit-exactly, and preserve the mesh size.
    #[test]
    fn shuffle_roundtrips((img, s) in image_strategy()) {
        let up = pixel_shuffle(&img, s).unwrap();
        prop_assert_eq!(up.mesh_size, img.mesh_size / s as f64);
        let back = pixel_unshuffle(&up, s).unwrap();
        prop_assert_eq!(&back, &img);
        let down = pixel_unshuffle(&img, s).unwrap();
        let there = pixel_shuffle(&down, s).unwrap();
        prop_assert_eq!(&there, &img);
    }

    /// EQT1 containers round-trip bit-exactly for arbitrary shapes/values.
    #[test]
    fn tensor_container_roundtrips(
        h in 1usize..5, w in 1usize..5, t in 1usize..4, c in 1usize..3,
        mesh in 1e-3f64..10.0,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..h * w * t * c).map(|_| rng.gen_range(-1e6..1e6)).collect();
        let fmap = GroupFeatureMap::new(h, w, t, c, mesh, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.eqt");
        equiburst::io::write_tensor(&path, &fmap).unwrap();
        let back = equiburst::io::read_tensor(&path).unwrap();
        prop_assert_eq!(back, fmap);
    }

    /// Group laws of the rotation-translation transforms: composing with
    /// the inverse is the identity, and composition is associative.
    #[test]
    fn transform_group_laws(
        t1 in -3.0f64..3.0, b11 in -2.0f64..2.0, b12 in -2.0f64..2.0,
        t2 in -3.0f64..3.0, b21 in -2.0f64..2.0, b22 in -2.0f64..2.0,
        t3 in -3.0f64..3.0, b31 in -2.0f64..2.0, b32 in -2.0f64..2.0,
    ) {
        let f = AffineTransform::new(t1, (b11, b12));
        let g = AffineTransform::new(t2, (b21, b22));
        let k = AffineTransform::new(t3, (b31, b32));

        let id = f.compose(&f.invert());
        prop_assert!(id.theta.abs() < 1e-12);
        prop_assert!(id.b.0.abs() < 1e-12 && id.b.1.abs() < 1e-12);

        let lhs = f.compose(&g).compose(&k);
        let rhs = f.compose(&g.compose(&k));
        prop_assert!(wrap_angle(lhs.theta - rhs.theta).abs() < 1e-12);
        prop_assert!((lhs.b.0 - rhs.b.0).abs() < 1e-10);
        prop_assert!((lhs.b.1 - rhs.b.1).abs() < 1e-10);

        // applying f then f^-1 to a point is the identity
        let x = (0.7, -0.3);
        let y = f.invert().apply(f.apply(x));
        prop_assert!((y.0 - x.0).abs() < 1e-12 && (y.1 - x.1).abs() < 1e-12);
    }

    /// PFM round trips preserve values to 32-bit precision and dimensions
    /// exactly.
    #[test]
    fn pfm_roundtrips(
        h in 1usize..6, w in 1usize..6,
        gray in any::<bool>(),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let c = if gray { 1 } else { 3 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..h * w * c).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let img = Image::new(h, w, c, 0.25, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pfm");
        equiburst::io::write_pfm(&path, &img).unwrap();
        let back = equiburst::io::read_pfm(&path).unwrap();
        prop_assert_eq!(back.height, h);
        prop_assert_eq!(back.width, w);
        prop_assert_eq!(back.channels, c);
        prop_assert_eq!(back.mesh_size, img.mesh_size);
        for (a, b) in img.data().iter().zip(back.data().iter()) {
            prop_assert_eq!((*a as f32) as f64, *b);
        }
    }
}
