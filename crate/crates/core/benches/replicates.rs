use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ncf_core::exec::Backend;
use ncf_core::innovations::{InnovationLaw, InnovationSource, NoiseCache};
use ncf_core::lattice::{IndexSet, Orthotope};
use ncf_core::model::{ModelSpec, PicardConfig};
use ncf_core::statistics::{Aggregate, Phi, SeparableStatistic};

fn replicates(c: &mut Criterion) {
    let model = ModelSpec::Ar {
        alpha_left: 0.2,
        alpha_right: 0.2,
        beta: 0.3,
    }
    .build()
    .unwrap();
    let law = InnovationLaw::TruncatedGaussian {
        mean: 0.0,
        sd: 1.0,
        clip: 3.0,
    };
    let stat = SeparableStatistic::new(Phi::Center, Orthotope::new(vec![1]).unwrap()).unwrap();
    let index = IndexSet::interval(0, 64).unwrap();
    let cfg = PicardConfig::for_model(&model, &law, 1e-12).unwrap();
    let agg = Aggregate::new(&stat, &model, &index, cfg).unwrap();
    let region = agg.noise_region();

    let mut group = c.benchmark_group("s_tilde_d4");
    group.sample_size(10);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    for backend in [Backend::Sequential, Backend::Parallel { threads }] {
        for n in [64usize, 256] {
            group.bench_with_input(BenchmarkId::new(backend.name(), n), &n, |b, &n| {
                b.iter(|| {
                    let values = backend
                        .try_map(n, |r| {
                            let src = InnovationSource::new(r as u64, law, 1)?;
                            let cache = NoiseCache::new(&src, region.clone());
                            agg.s_tilde(&cache, 4)
                        })
                        .unwrap();
                    black_box(values)
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, replicates);
criterion_main!(benches);
