//! Profile assembly and sheaf consistency on one worker versus the full pool.
//!
//! Run with `--no-default-features` to time the sequential build instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array3;
use ndna_core::prng::SplitMix64;
use ndna_core::score::{assemble_profiles, CurvatureSource, ScoreConfig};
use ndna_core::topology::sheaf_consistency;
use ndna_core::{GradientBundle, Trajectory};

fn workload(count: usize) -> Vec<(Trajectory, GradientBundle)> {
    let mut rng = SplitMix64::new(42);
    let (l, t, d, n) = (24, 32, 16, 16);
    (0..count)
        .map(|i| {
            let tokens = Array3::from_shape_fn((l, t, d), |_| rng.next_normal());
            let means = tokens.mean_axis(ndarray::Axis(1)).expect("t > 0");
            let traj = Trajectory::new(format!("bench{i}"), means)
                .and_then(|tr| tr.with_token_states(tokens))
                .expect("finite");
            let h = Array3::from_shape_fn((n, l, d), |_| rng.next_normal());
            let th = ndarray::Array2::from_shape_fn((n, l), |_| rng.next_f64());
            (traj, GradientBundle::new(Some(h), Some(th), vec![]).expect("shapes"))
        })
        .collect()
}

fn run(data: &[(Trajectory, GradientBundle)], cfg: &ScoreConfig) {
    let inputs: Vec<_> = data.iter().map(|(t, g)| (t, Some(g))).collect();
    for p in assemble_profiles(&inputs, cfg) {
        p.expect("profile");
    }
    for (t, _) in data {
        sheaf_consistency(t, 4).expect("sheaf");
    }
}

fn bench(c: &mut Criterion) {
    let data = workload(16);
    let cfg = ScoreConfig {
        curvature: CurvatureSource::LaplacianMeanK,
        laplacian_k: 3,
        ..ScoreConfig::default()
    };
    let mut group = c.benchmark_group("profiles");
    group.sample_size(10);

    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
        group.bench_function(BenchmarkId::new("one_worker", 1), |b| {
            b.iter(|| single.install(|| run(&data, &cfg)))
        });
        let threads = rayon::current_num_threads();
        group.bench_function(BenchmarkId::new("pool", threads), |b| b.iter(|| run(&data, &cfg)));
    }
    #[cfg(not(feature = "parallel"))]
    group.bench_function("sequential", |b| b.iter(|| run(&data, &cfg)));

    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
