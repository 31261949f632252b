use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fusetrack::affinity::{dan_forward, PairTensor, FEATURE_DIM};
use fusetrack::pipeline::make_scorer;
use fusetrack::{generate_scenario, hungarian, intra_frame_fuse, run_pipeline, Ablation, Config, DanModel, Matrix};

const FIXTURE: &str = include_str!("../../core/tests/fixtures/scenario.toml");

fn random_cost(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(n, n, |_, _| rng.random_range(0.0..1.0))
}

fn bench_hungarian(c: &mut Criterion) {
    let mut group = c.benchmark_group("hungarian");
    for n in [4, 16, 64] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter_batched(|| random_cost(n, &mut rng), |m| hungarian(&m).unwrap(), BatchSize::SmallInput)
        });
    }
    group.finish();
}

fn bench_dan_forward(c: &mut Criterion) {
    let model = DanModel::new(FEATURE_DIM, 64, 1);
    let mut group = c.benchmark_group("dan_forward");
    for n in [4, 16] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let data: Vec<f64> = (0..n * n * FEATURE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pairs = PairTensor::from_vec(n, n, FEATURE_DIM, data).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &pairs, |b, pairs| {
            b.iter(|| dan_forward(&model, black_box(pairs)).unwrap())
        });
    }
    group.finish();
}

fn bench_fusion(c: &mut Criterion) {
    let cfg = Config::from_toml(FIXTURE, &[]).unwrap();
    let (frames, _) = generate_scenario(&cfg.scenario, &cfg.camera).unwrap();
    let scorer = make_scorer(&cfg.run, None);
    let camera = cfg.run.initial_camera(&cfg.camera).unwrap();

    c.bench_function("intra_frame_fuse", |b| {
        let mut k = 0;
        b.iter_batched(
            || {
                k = (k + 1) % frames.len();
                (camera.clone(), &frames[k])
            },
            |(mut cam, frame)| intra_frame_fuse(frame, &mut cam, &scorer, &cfg.run.intra),
            BatchSize::SmallInput,
        )
    });

    c.bench_function("run_pipeline", |b| {
        b.iter(|| run_pipeline(black_box(&frames), &cfg.camera, &cfg.run, &scorer, Ablation::default()).unwrap())
    });
}

criterion_group!(benches, bench_hungarian, bench_dan_forward, bench_fusion);
criterion_main!(benches);
