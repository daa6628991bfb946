use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sea_core::harness::{prepare, run_episode, Models, SuiteConfig};
use sea_core::EpisodeFlags;

fn episode(c: &mut Criterion) {
    let cfg = SuiteConfig { train_scenes: 6, explore_episodes: 3, eval_scenes: 1, episodes_per_scene: 1, ..SuiteConfig::default() };
    let prep = prepare(&cfg).unwrap();
    let (scene, specs) = &prep.eval[0];
    let models = Models { place: &prep.place, atlas: &prep.atlas, policy: &cfg.policy };
    let mut g = c.benchmark_group("episode");
    g.sample_size(10);
    g.bench_function("full_sea", |b| {
        b.iter(|| {
            run_episode(&scene.world, &scene.features, models, black_box(&specs[0]), EpisodeFlags::full(), &cfg.episode, &cfg.noise)
                .unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, episode);
criterion_main!(benches);
