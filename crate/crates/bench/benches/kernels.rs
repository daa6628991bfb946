use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sea_bench::{comb, random_gamma, unit_features};
use sea_core::features::{kmeans, ClusterModel, FeatureVec, IMAGE_DIM};
use sea_core::global_policy::semantic_shortest_path;
use sea_core::grid::Cell;
use sea_core::local_policy::fmm_field_on;
use sea_core::SemanticGraphMap;

fn fmm(c: &mut Criterion) {
    let speed = comb(240);
    let goal = Cell::new(5, 5);
    let agent = Cell::new(234, 234);
    c.bench_function("fmm_240_full", |b| b.iter(|| fmm_field_on(black_box(&speed), goal, 0.05, None)));
    c.bench_function("fmm_240_until_agent", |b| b.iter(|| fmm_field_on(black_box(&speed), goal, 0.05, Some(agent))));
}

fn shortest_path(c: &mut Criterion) {
    let g = random_gamma(8, 0.4, 1);
    let big = random_gamma(64, 0.1, 2);
    c.bench_function("semantic_path_8", |b| b.iter(|| semantic_shortest_path(black_box(&g), 0, 7)));
    c.bench_function("semantic_path_64", |b| b.iter(|| semantic_shortest_path(black_box(&big), 0, 63)));
}

fn clustering(c: &mut Criterion) {
    let pts = unit_features(2000, 32, 3);
    c.bench_function("kmeans_2000x32_k8", |b| b.iter(|| kmeans(black_box(&pts), 8, 4).unwrap()));
}

fn graph_update(c: &mut Criterion) {
    let images = unit_features(500, IMAGE_DIM, 5);
    let centroids = unit_features(8, 16, 6);
    let clusters = ClusterModel::new(centroids.clone()).unwrap();
    let place: Vec<FeatureVec> = unit_features(500, 16, 7);
    c.bench_function("update_graph_500_steps", |b| {
        b.iter(|| {
            let mut sgm = SemanticGraphMap::new(8, 21);
            for (k, (img, p)) in images.iter().zip(&place).enumerate() {
                sgm.update_graph(img, p, &clusters, k, [k as f64 * 0.25, 0.0]).unwrap();
            }
            sgm
        })
    });
}

criterion_group!(kernels, fmm, shortest_path, clustering, graph_update);
criterion_main!(kernels);
