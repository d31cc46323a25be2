use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use featleak::attack::{generator_forward, Generator, GeneratorSpec};
use featleak::features::{assemble_sparse_map, detect_harris, extract_descriptors, extract_features, DetectorKind, HarrisConfig, Method};
use featleak::fixtures::{synthetic_scene, warped_pair};
use featleak::metrics::{match_features, ssim, MatchConfig};
use rand::SeedableRng;

fn features(c: &mut Criterion) {
    let img = synthetic_scene(1, 256, 256).unwrap();
    let cfg = HarrisConfig::default();
    c.bench_function("harris_256", |b| b.iter(|| detect_harris(black_box(&img), 1000, &cfg)));
    let kps = detect_harris(&img, 1000, &cfg);
    for m in Method::ALL {
        c.bench_function(&format!("describe_{}_256", m.tag()), |b| b.iter(|| extract_descriptors(black_box(&img), &kps, m).unwrap()));
    }
    let fs = extract_descriptors(&img, &kps, Method::Sift).unwrap();
    c.bench_function("assemble_sparse_map_256", |b| b.iter(|| assemble_sparse_map(black_box(&fs), 256, 256).unwrap()));
}

fn metrics(c: &mut Criterion) {
    let a = synthetic_scene(2, 256, 256).unwrap();
    let b = synthetic_scene(3, 256, 256).unwrap();
    c.bench_function("ssim_256", |bch| bch.iter(|| ssim(black_box(&a), black_box(&b)).unwrap()));
    let pair = warped_pair(4, 256, 10.0, (5.0, -3.0)).unwrap();
    let fa = extract_features(&pair.a, Method::Sift, DetectorKind::Harris, 1000).unwrap();
    let fb = extract_features(&pair.b, Method::Sift, DetectorKind::Harris, 1000).unwrap();
    let cfg = MatchConfig::default();
    c.bench_function("match_features_sift_256", |bch| bch.iter(|| match_features(black_box(&fa), black_box(&fb), &cfg).unwrap()));
}

fn generator(c: &mut Criterion) {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let g = Generator::<f32>::new(GeneratorSpec::new(Method::Sift.channels()), &mut rng).unwrap();
    let img = synthetic_scene(5, 128, 128).unwrap();
    let fs = extract_features(&img, Method::Sift, DetectorKind::Harris, 1000).unwrap();
    let map = assemble_sparse_map(&fs, 128, 128).unwrap();
    let mut group = c.benchmark_group("generator");
    group.sample_size(10);
    group.bench_function("forward_128", |b| b.iter(|| generator_forward(black_box(&g), &map).unwrap()));
    group.finish();
}

criterion_group!(benches, features, metrics, generator);
criterion_main!(benches);
