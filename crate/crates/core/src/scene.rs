//! Procedural natural-looking test scenes.
//!
//! Deterministic RGB images with smooth gradients, soft blobs, oriented
//! textures and a few crisp edges, spanning spatial frequencies from DC up
//! to near-Nyquist so that downsampling genuinely destroys information a
//! multi-frame pipeline can recover.

use crate::grid::Image;
use rand::{Rng, SeedableRng};

/// Render an `n x n` 3-channel scene in `[0, 1]` with unit pixel pitch.
pub fn test_scene(n: usize, seed: u64) -> Image {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut blobs = Vec::new();
    for _ in 0..24 {
        blobs.push((
            rng.gen_range(0.0..n as f64),
            rng.gen_range(0.0..n as f64),
            rng.gen_range(n as f64 / 40.0..n as f64 / 6.0),
            [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
        ));
    }
    let mut waves = Vec::new();
    for _ in 0..6 {
        let ang = rng.gen_range(0.0..std::f64::consts::PI);
        let freq = rng.gen_range(0.15..0.85) * std::f64::consts::PI;
        waves.push((
            freq * ang.cos(),
            freq * ang.sin(),
            rng.gen_range(0.0..std::f64::consts::TAU),
            [rng.gen_range(0.02..0.10), rng.gen_range(0.02..0.10), rng.gen_range(0.02..0.10)],
        ));
    }
    let mut disks = Vec::new();
    for _ in 0..8 {
        disks.push((
            rng.gen_range(0.1 * n as f64..0.9 * n as f64),
            rng.gen_range(0.1 * n as f64..0.9 * n as f64),
            rng.gen_range(n as f64 / 30.0..n as f64 / 10.0),
            [rng.gen_range(-0.35..0.35), rng.gen_range(-0.35..0.35), rng.gen_range(-0.35..0.35)],
        ));
    }

    let mut img = Image::zeros(n, n, 3, 1.0);
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (i as f64, j as f64);
            let mut v = [
                0.45 + 0.20 * (x / n as f64) - 0.10 * (y / n as f64),
                0.50 - 0.15 * (x / n as f64) + 0.15 * (y / n as f64),
                0.40 + 0.10 * ((x + y) / (2.0 * n as f64)),
            ];
            for (bx, by, s, amp) in &blobs {
                let d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
                let g = (-d2 / (2.0 * s * s)).exp();
                for c in 0..3 {
                    v[c] += amp[c] * g;
                }
            }
            for (kx, ky, ph, amp) in &waves {
                let w = (kx * x + ky * y + ph).sin();
                for c in 0..3 {
                    v[c] += amp[c] * w;
                }
            }
            for (dx, dy, r, amp) in &disks {
                let d = ((x - dx) * (x - dx) + (y - dy) * (y - dy)).sqrt();
                // soft-edged disk: ~2 px transition band
                let e = 0.5 * (1.0 - ((d - r) / 1.5).tanh());
                for c in 0..3 {
                    v[c] += amp[c] * e;
                }
            }
            for c in 0..3 {
                img.set(i, j, c, v[c].clamp(0.02, 0.98));
            }
        }
    }
    img
}
