use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use encbench_core::models::Encoder;
use encbench_core::{BackendId, EncoderConfig, EncoderInput, EncoderWeights};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn forward(c: &mut Criterion) {
    let config = EncoderConfig::bert_base_uncased();
    let weights = EncoderWeights::random(&config, 0, true).unwrap();
    let encoder = Encoder::new(config.clone(), weights).unwrap();
    let mut rng = StdRng::seed_from_u64(0);

    let mut group = c.benchmark_group("bert-base forward");
    group.sample_size(10);
    for (batch, seq) in [(1, 16), (1, 64), (8, 64)] {
        let ids = (0..batch * seq).map(|_| rng.gen_range(1000..config.vocab_size as i64)).collect();
        let input = EncoderInput::from_ids(batch, seq, ids).unwrap();
        for id in BackendId::ALL {
            // The scalar path is too slow to sample at the larger shapes.
            if id == BackendId::Reference && batch * seq > 16 {
                continue;
            }
            let be = id.backend();
            group.bench_with_input(BenchmarkId::new(id.name(), format!("{batch}x{seq}")), &input, |bench, input| {
                bench.iter(|| {
                    let out = encoder.forward(input, be).unwrap();
                    be.synchronize();
                    out
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, forward);
criterion_main!(benches);
