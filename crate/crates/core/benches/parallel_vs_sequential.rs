//! Same workload on a one-thread rayon pool and on the default pool. The
//! kernels are bit-identical in both, so only wall time differs. Build
//! with `--no-default-features` to time the plain sequential code path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xcm::data::{generate_synthetic, SyntheticConfig};
use xcm::layers::{Ctx, Mode};
use xcm::models::{Architecture, ModelSpec};
use xcm::training::{train, TrainConfig};
use xcm::{Model, Tensor};

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    let n = all.current_num_threads();
    vec![("single".into(), one), (format!("default-{n}"), all)]
}

fn forward_backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_backward");
    group.sample_size(10);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::from_fn(&[32, 1, 100, 6], |_| rng.gen_range(-1.0..1.0));
    let labels: Vec<usize> = (0..32).map(|i| i % 4).collect();
    for arch in [Architecture::Xcm, Architecture::MtexCnn] {
        let model = Model::new(ModelSpec::new(arch, 100, 6, 4), 0).unwrap();
        for (name, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(arch.to_string(), &name), &pool, |b, pool| {
                b.iter(|| {
                    pool.install(|| {
                        model
                            .loss_and_grads(&x, &labels, &mut Ctx::new(Mode::Train, 1))
                            .unwrap()
                    })
                })
            });
        }
    }
    group.finish();
}

fn training_epoch(c: &mut Criterion) {
    let mut group = c.benchmark_group("training_epoch");
    group.sample_size(10);
    let data = generate_synthetic(&SyntheticConfig {
        n_per_class: 32,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let spec = ModelSpec::new(Architecture::Xcm, data.length(), data.dims(), 2);
    let config = TrainConfig {
        epochs: 1,
        batch_size: 8,
        seed: 0,
        shuffle_each_epoch: true,
    };
    for (name, pool) in pools() {
        group.bench_with_input(BenchmarkId::new("xcm", &name), &pool, |b, pool| {
            b.iter(|| {
                pool.install(|| {
                    let mut model = Model::new(spec.clone(), 0).unwrap();
                    train(&mut model, &data, &config).unwrap()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, forward_backward, training_epoch);
criterion_main!(benches);
