//! Mixing frequency against an exact binomial interval, and the
//! label/paste correspondence of anomaly_mix.

use oodseg::augment::{anomaly_mix, extract_style, MixConfig, ProxyPool};
use oodseg::synth::{generate_scene, ObjectExtent, SceneSpec};
use oodseg::OOD_ID;
use proptest::prelude::*;

/// Central interval [lo, hi] holding at least 1 - alpha of Binomial(n, p),
/// with at most alpha/2 of the mass strictly below lo and strictly above hi.
fn binomial_interval(n: u64, p: f64, alpha: f64) -> (u64, u64) {
    let ln_odds = (p / (1.0 - p)).ln();
    let mut log_pmf = Vec::with_capacity(n as usize + 1);
    let mut cur = n as f64 * (1.0 - p).ln();
    log_pmf.push(cur);
    for k in 1..=n {
        cur += ((n - k + 1) as f64 / k as f64).ln() + ln_odds;
        log_pmf.push(cur);
    }
    let top = log_pmf.iter().cloned().fold(f64::MIN, f64::max);
    let w: Vec<f64> = log_pmf.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut cdf = 0.0;
    let mut lo = None;
    let mut hi = n;
    for (k, v) in w.iter().enumerate() {
        let below = cdf;
        cdf += v / total;
        if lo.is_none() && below + v / total > alpha / 2.0 {
            lo = Some(k as u64);
        }
        if cdf >= 1.0 - alpha / 2.0 {
            hi = k as u64;
            break;
        }
    }
    (lo.unwrap(), hi)
}

#[test]
fn interval_oracle_sanity() {
    // Binomial(10, 0.5): P(X <= 0) = 1/1024 < 0.005, P(X <= 1) = 11/1024 > 0.005
    assert_eq!(binomial_interval(10, 0.5, 0.01), (1, 9));
    let (lo, hi) = binomial_interval(10_000, 0.1, 0.01);
    // normal approximation: 1000 +- 2.576 * 30
    assert!((918..=926).contains(&lo) && (1074..=1082).contains(&hi), "{lo} {hi}");
}

#[test]
fn mixing_frequency_matches_probability() {
    let spec = SceneSpec {
        height: 32,
        width: 64,
        ..SceneSpec::default()
    };
    let sample = generate_scene(&spec).unwrap();
    let pool = ProxyPool::generate(8, ObjectExtent::for_scene(32, 64), None, 5);
    let cfg = MixConfig::default();
    let n = 10_000;
    let mixed = (0..n)
        .filter(|&seed| anomaly_mix(&sample, &cfg, &pool, seed).pasted > 0)
        .count() as u64;
    let (lo, hi) = binomial_interval(n, cfg.mix_probability, 0.01);
    assert!((lo..=hi).contains(&mixed), "{mixed} outside [{lo}, {hi}]");
}

#[test]
fn aligned_paste_matches_scene_colour() {
    let spec = SceneSpec::default();
    let pool = ProxyPool::generate(16, ObjectExtent::for_scene(128, 256), None, 9);
    let cfg = MixConfig {
        mix_probability: 1.0,
        ..MixConfig::default()
    };
    for seed in 0..20 {
        let sample = generate_scene(&spec.clone().with_seed(seed)).unwrap();
        let scene = extract_style(&sample.image, None).unwrap();
        let out = anomaly_mix(&sample, &cfg, &pool, seed).sample;
        let mask: Vec<bool> = out.labels.data().iter().map(|&c| c == OOD_ID).collect();
        let region = extract_style(&out.image, Some(&mask)).unwrap();
        for ch in 0..3 {
            let d = (region.mean[ch] - scene.mean[ch]).abs();
            assert!(d < 0.05, "seed {seed} channel {ch}: mean off by {d}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ood_labels_iff_pasted(seed in 0u64..1_000_000, p in 0.0f64..=1.0, align: bool, k in 1usize..4) {
        let spec = SceneSpec { height: 32, width: 64, seed: seed % 17, ..SceneSpec::default() };
        let sample = generate_scene(&spec).unwrap();
        let pool = ProxyPool::generate(4, ObjectExtent::for_scene(32, 64), None, 3);
        let cfg = MixConfig { mix_probability: p, style_align: align, max_objects_per_scene: k };
        let out = anomaly_mix(&sample, &cfg, &pool, seed);
        prop_assert_eq!(out.sample.labels.has_ood(), out.pasted > 0);
        prop_assert!(out.pasted <= k);
        if out.pasted == 0 {
            prop_assert_eq!(&out.sample, &sample);
        }
    }
}
