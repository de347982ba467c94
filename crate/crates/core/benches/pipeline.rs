//! Benchmarks of the data-parallel inner loops. Build once with the
//! default `parallel` feature and once with `--no-default-features` to
//! compare the rayon path against the sequential fallback, e.g.
//!
//! ```text
//! cargo bench -p equiburst -- --save-baseline parallel
//! cargo bench -p equiburst --no-default-features -- --save-baseline sequential
//! critcmp parallel sequential
//! ```

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use equiburst::{
    lift_conv, make_grid_image, run_network, synthesize_burst, warp_image, AffineTransform, EquivNetSpec, FilterBank,
    LatentField, LayerKind,
};
use rand::SeedableRng;
use std::hint::black_box;

fn mode() -> &'static str {
    if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    }
}

fn bench_conv(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("conv/{}", mode()));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for &(n, t, p) in &[(64usize, 8usize, 5usize), (128, 4, 3)] {
        let h = 1.0 / n as f64;
        let field = LatentField::random_bandlimited(&mut rng, 6, 8.0, 1.0);
        let img = make_grid_image(&[field.clone(), field], n, h).unwrap();
        let bank = FilterBank::random(LayerKind::Lifting, 2, 2, t, p, h, &mut rng).unwrap();
        group.bench_with_input(BenchmarkId::new("lift", format!("n{n}_t{t}_p{p}")), &(), |b, _| {
            b.iter(|| lift_conv(black_box(&img), black_box(&bank)).unwrap())
        });
    }
    group.finish();
}

fn bench_network(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("network/{}", mode()));
    let n = 64usize;
    let h = 1.0 / n as f64;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let field = LatentField::random_bandlimited(&mut rng, 6, 8.0, 1.0);
    let img = make_grid_image(&[field], n, h).unwrap();
    let spec = EquivNetSpec::random(3, 1, 2, 1, 8, 3, h, true, 3).unwrap();
    group.bench_function("three_layer_n64_t8", |b| {
        b.iter(|| run_network(black_box(&spec), black_box(&img)).unwrap())
    });
    group.finish();
}

fn bench_warp(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("warp/{}", mode()));
    let img = equiburst::scene::test_scene(256, 5);
    let f = AffineTransform::new(0.21, (1.7, -2.3));
    group.bench_function("bilinear_256", |b| b.iter(|| warp_image(black_box(&img), black_box(&f))));
    let quarter = AffineTransform::new(std::f64::consts::FRAC_PI_2, (0.0, 0.0));
    group.bench_function("quarter_turn_256", |b| b.iter(|| warp_image(black_box(&img), black_box(&quarter))));
    group.finish();
}

fn bench_burst(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("burst/{}", mode()));
    group.sample_size(20);
    let hr = equiburst::scene::test_scene(128, 6);
    group.bench_function("synthesize_14x2_128", |b| {
        b.iter(|| synthesize_burst(black_box(&hr), 14, 2, 0.02, 3.0, 0.0, 9, true).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_conv, bench_network, bench_warp, bench_burst);
criterion_main!(benches);
