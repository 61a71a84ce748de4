//! Analytic loss gradients against central finite differences, and scalar
//! closed forms of the OoD losses.

use oodseg::oodloss::{
    id_cross_entropy, ood_energy_max, ood_full_ovr, ood_topk_ovr, ood_uniform_ce, ood_variant,
    top_k_indices, LossConfig, LossResult, LossVariant,
};
use oodseg::{LabelMap, LogitMap, IGNORE_ID, OOD_ID};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;

struct Case {
    h: usize,
    w: usize,
    c: usize,
    logits: Vec<f64>,
    labels: LabelMap,
}

// Logits keep every pair of values at least 1e-3 apart so a step of H never
// reorders the top-K set.
fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let (h, w) = (rng.random_range(1..=3), rng.random_range(1..=3));
    let c = rng.random_range(2..=8);
    let mut logits = Vec::with_capacity(h * w * c);
    for _ in 0..h * w {
        loop {
            let px: Vec<f64> = (0..c).map(|_| rng.random_range(-4.0..4.0)).collect();
            let mut sorted = px.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).all(|p| p[1] - p[0] > 1e-3) {
                logits.extend(px);
                break;
            }
        }
    }
    let mut codes: Vec<u8> = (0..h * w)
        .map(|_| match rng.random_range(0..4) {
            0 => IGNORE_ID,
            1 | 2 => OOD_ID,
            _ => rng.random_range(0..c as u8),
        })
        .collect();
    codes[0] = OOD_ID;
    if codes.len() > 1 {
        codes[1] = rng.random_range(0..c as u8);
    }
    Case {
        h,
        w,
        c,
        logits,
        labels: LabelMap::new(h, w, codes).unwrap(),
    }
}

fn check(case: &Case, loss: impl Fn(&LogitMap, &LabelMap) -> LossResult) -> f64 {
    let map = |data: Vec<f64>| LogitMap::new(case.h, case.w, case.c, data).unwrap();
    let analytic = loss(&map(case.logits.clone()), &case.labels).grad;
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..case.logits.len() {
        let mut plus = case.logits.clone();
        let mut minus = case.logits.clone();
        plus[i] += H;
        minus[i] -= H;
        numeric.push(
            (loss(&map(plus), &case.labels).value - loss(&map(minus), &case.labels).value)
                / (2.0 * H),
        );
    }
    normwise_error(&analytic, &numeric)
}

/// `max |a - n| / max |a|`: entries far below the gradient's scale are
/// dominated by finite-difference round-off, so errors are measured against it.
fn normwise_error(a: &[f64], n: &[f64]) -> f64 {
    let scale = a.iter().chain(n).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    a.iter().zip(n).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[test]
fn every_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut instances = 0;
    for _ in 0..120 {
        let case = random_case(&mut rng);
        let cfg = LossConfig {
            k: rng.random_range(1..=case.c),
            slope: rng.random_range(0.5..3.0),
            ..LossConfig::default()
        };
        let errs = [
            check(&case, |l, y| ood_topk_ovr(l, y, &cfg).unwrap()),
            check(&case, |l, y| ood_full_ovr(l, y, &cfg).unwrap()),
            check(&case, |l, y| ood_uniform_ce(l, y).unwrap()),
            check(&case, |l, y| ood_energy_max(l, y).unwrap()),
            check(&case, |l, y| id_cross_entropy(l, y).unwrap()),
        ];
        for (name, e) in ["topk_ovr", "full_ovr", "uniform_ce", "energy_max", "id_ce"]
            .iter()
            .zip(errs)
        {
            assert!(e < TOL, "{name}: relative error {e}");
        }
        instances += 1;
    }
    assert!(instances >= 100);
}

#[test]
fn closed_form_values() {
    let px = LogitMap::from_pixel(&[1.0, 0.0, -1.0]).unwrap();
    let ood = LabelMap::filled(1, 1, OOD_ID);
    let cfg = LossConfig {
        k: 2,
        slope: 2.0,
        ..LossConfig::default()
    };
    // (softplus(2) + softplus(0)) / 2
    let expected = ((1.0 + 2f64.exp()).ln() + 2f64.ln()) / 2.0;
    let got = ood_topk_ovr(&px, &ood, &cfg).unwrap().value;
    assert!((got - expected).abs() < 1e-12);
    assert!((got - 1.410038).abs() < 1e-6);

    for c in [2, 6, 19] {
        let equal = LogitMap::from_pixel(&vec![0.7; c]).unwrap();
        let v = ood_uniform_ce(&equal, &ood).unwrap().value;
        assert!((v - (c as f64).ln()).abs() < 1e-9);
    }
}

#[test]
fn topk_scales_with_slope_through_the_product() {
    // the loss only sees s * logits
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ood = LabelMap::filled(1, 1, OOD_ID);
    for _ in 0..100 {
        let c = rng.random_range(2..8);
        let x: Vec<f64> = (0..c).map(|_| rng.random_range(-3.0..3.0)).collect();
        let s = rng.random_range(0.5..4.0);
        let k = rng.random_range(1..=c);
        let a = ood_topk_ovr(
            &LogitMap::from_pixel(&x).unwrap(),
            &ood,
            &LossConfig { k, slope: s, ..LossConfig::default() },
        )
        .unwrap()
        .value;
        let scaled: Vec<f64> = x.iter().map(|v| v * s).collect();
        let b = ood_topk_ovr(
            &LogitMap::from_pixel(&scaled).unwrap(),
            &ood,
            &LossConfig { k, slope: 1.0, ..LossConfig::default() },
        )
        .unwrap()
        .value;
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn topk_is_full_ovr_at_k_equal_classes_and_grows_with_k_in_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let ood = LabelMap::filled(1, 1, OOD_ID);
    for _ in 0..100 {
        let c = rng.random_range(2..8);
        let x = LogitMap::from_pixel(
            &(0..c).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>(),
        )
        .unwrap();
        let cfg = |k| LossConfig { k, ..LossConfig::default() };
        let full = ood_full_ovr(&x, &ood, &cfg(1)).unwrap();
        assert_eq!(ood_topk_ovr(&x, &ood, &cfg(c)).unwrap(), full);
        assert_eq!(ood_topk_ovr(&x, &ood, &cfg(c + 5)).unwrap(), full);
        // K * L_K is a sum over a growing top set
        let mut prev = 0.0;
        for k in 1..=c {
            let total = k as f64 * ood_topk_ovr(&x, &ood, &cfg(k)).unwrap().value;
            assert!(total >= prev);
            // the per-K mean can only drop as smaller logits join
            if k > 1 {
                let mean_prev = ood_topk_ovr(&x, &ood, &cfg(k - 1)).unwrap().value;
                assert!(total / k as f64 <= mean_prev + 1e-15);
            }
            prev = total;
        }
    }
}

#[test]
fn topk_ties_resolve_to_lower_class_index() {
    assert_eq!(top_k_indices(&[1.0, 2.0, 2.0, 0.0], 2), vec![1, 2]);
    assert_eq!(top_k_indices(&[5.0, 5.0, 5.0], 2), vec![0, 1]);
}

#[test]
fn variant_dispatch_matches_direct_calls() {
    let x = LogitMap::from_pixel(&[0.3, -1.0, 2.0, 0.1]).unwrap();
    let ood = LabelMap::filled(1, 1, OOD_ID);
    for variant in LossVariant::ALL {
        let cfg = LossConfig { k: 2, variant, ..LossConfig::default() };
        let direct = match variant {
            LossVariant::TopkOvr => ood_topk_ovr(&x, &ood, &cfg),
            LossVariant::FullOvr => ood_full_ovr(&x, &ood, &cfg),
            LossVariant::UniformCe => ood_uniform_ce(&x, &ood),
            LossVariant::EnergyMax => ood_energy_max(&x, &ood),
        };
        assert_eq!(ood_variant(&x, &ood, &cfg).unwrap(), direct.unwrap());
    }
}
