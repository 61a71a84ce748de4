use criterion::{criterion_group, criterion_main, Criterion};
use oodseg::metrics::{EvalPair, RankingMetrics};
use oodseg::scores::{compute, ScoreKind};
use oodseg::LogitMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pairs(n: usize) -> EvalPair {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let truth: Vec<bool> = (0..n).map(|_| rng.random_bool(0.05)).collect();
    let scores = truth
        .iter()
        .map(|&y| rng.random::<f64>() + if y { 0.3 } else { 0.0 })
        .collect();
    EvalPair::new(scores, truth).unwrap()
}

fn ranking(c: &mut Criterion) {
    let mut g = c.benchmark_group("ranking");
    g.sample_size(10);
    for n in [100_000, 10_000_000] {
        let p = pairs(n);
        g.bench_function(format!("auroc_ap_fpr95/{n}"), |b| {
            b.iter(|| RankingMetrics::from_pairs(&p).unwrap())
        });
    }
    g.finish();
}

fn scores(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (h, w, k) = (128, 256, 6);
    let logits = LogitMap::new(h, w, k, (0..h * w * k).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
    let mut g = c.benchmark_group("scores");
    for kind in [ScoreKind::Msp, ScoreKind::Energy, ScoreKind::MaxMin] {
        g.bench_function(kind.as_str(), |b| b.iter(|| compute(kind, &logits, None).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, ranking, scores);
criterion_main!(benches);
