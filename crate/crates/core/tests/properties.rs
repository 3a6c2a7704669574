use proptest::prelude::*;
use recal_core::bounds::{cal_risk_bound, optimal_bins, sha_risk_bound, zeta, BoundParams};
use recal_core::{
    bin_index, fit_recalibrator, shift_correct_multiclass, umb_fit, LabeledSample, ShiftCorrector, ShiftWeights,
};

fn distinct_scores(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(1u32..1_000_000, 1..=max_len)
        .prop_map(|s| s.into_iter().map(|k| k as f64 / 1_000_000.0).collect::<Vec<_>>())
        .prop_shuffle()
}

fn corrector(w0: f64, w1: f64) -> ShiftCorrector {
    ShiftCorrector::new(ShiftWeights::exact(vec![w0, w1]).unwrap()).unwrap()
}

/// Sort, cut at floor(n b / B), average each slice.
fn brute_force(scores: &[f64], labels: &[bool], bins: usize) -> (Vec<f64>, Vec<usize>) {
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = pairs.len();
    let mut values = Vec::new();
    let mut counts = Vec::new();
    for b in 1..=bins {
        let slice = &pairs[n * (b - 1) / bins..n * b / bins];
        let ones = slice.iter().filter(|p| p.1).count();
        values.push(ones as f64 / slice.len() as f64);
        counts.push(slice.len());
    }
    (values, counts)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn every_score_has_exactly_one_bin(scores in distinct_scores(60), bins in 1usize..8, probes in prop::collection::vec(0.0f64..=1.0, 1..50)) {
        prop_assume!(bins <= scores.len());
        let scheme = match umb_fit(&scores, bins) {
            Ok(s) => s,
            Err(_) => return Ok(()),
        };
        let edges = scheme.edges();
        for z in probes.into_iter().chain([0.0, 1.0]).chain(edges.iter().copied()) {
            let hits: Vec<usize> = (0..bins)
                .filter(|&b| {
                    let (lo, hi) = scheme.bounds(b);
                    if b == 0 { z >= lo && z <= hi } else { z > lo && z <= hi }
                })
                .collect();
            prop_assert_eq!(hits.len(), 1);
            prop_assert_eq!(hits[0], bin_index(&scheme, z));
        }
    }

    #[test]
    fn counts_are_balanced(scores in distinct_scores(80), bins in 1usize..10) {
        prop_assume!(bins <= scores.len());
        let n = scores.len();
        let labels = vec![false; n];
        let fit = fit_recalibrator(&LabeledSample::new(scores, labels).unwrap(), bins).unwrap();
        for (b, &c) in fit.counts().iter().enumerate() {
            prop_assert_eq!(c, n * (b + 1) / bins - n * b / bins);
        }
        let max = fit.counts().iter().max().unwrap();
        let min = fit.counts().iter().min().unwrap();
        prop_assert!(max - min <= 1);
    }

    #[test]
    fn fit_matches_brute_force(scores in distinct_scores(50), seed in any::<u64>(), bins in 1usize..=50) {
        prop_assume!(bins <= scores.len());
        let labels: Vec<bool> = (0..scores.len()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
        let (values, counts) = brute_force(&scores, &labels, bins);
        let fit = fit_recalibrator(&LabeledSample::new(scores, labels).unwrap(), bins).unwrap();
        prop_assert_eq!(fit.values(), &values[..]);
        prop_assert_eq!(fit.counts(), &counts[..]);
    }

    #[test]
    fn corrector_is_strictly_increasing(w0 in 0.01f64..100.0, w1 in 0.01f64..100.0) {
        let g = corrector(w0, w1);
        let mut prev = g.apply(0.0);
        prop_assert_eq!(prev, 0.0);
        for i in 1..=1000 {
            let v = g.apply(i as f64 / 1000.0);
            prop_assert!(v > prev);
            prev = v;
        }
        prop_assert_eq!(prev, 1.0);
    }

    #[test]
    fn correctors_compose_multiplicatively(a0 in 0.05f64..20.0, a1 in 0.05f64..20.0, b0 in 0.05f64..20.0, b1 in 0.05f64..20.0) {
        let (g, h, gh) = (corrector(a0, a1), corrector(b0, b1), corrector(a0 * b0, a1 * b1));
        for i in 0..=1000 {
            let z = i as f64 / 1000.0;
            prop_assert!((g.apply(h.apply(z)) - gh.apply(z)).abs() <= 1e-12);
        }
    }

    #[test]
    fn corrector_is_lipschitz(w0 in 0.05f64..20.0, w1 in 0.05f64..20.0, pairs in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 10_000)) {
        let g = corrector(w0, w1);
        let l = (w1 / w0).max(w0 / w1);
        prop_assert_eq!(g.lipschitz(), l);
        for (a, b) in pairs {
            prop_assert!((g.apply(a) - g.apply(b)).abs() <= l * (a - b).abs() + 1e-12);
        }
    }

    #[test]
    fn binary_and_multiclass_agree(w0 in 0.01f64..100.0, w1 in 0.01f64..100.0) {
        let g = corrector(w0, w1);
        for i in 0..=1000 {
            let z = i as f64 / 1000.0;
            let out = shift_correct_multiclass(&[w0, w1], &[1.0 - z, z]).unwrap();
            prop_assert!((out[1] - g.apply(z)).abs() <= 1e-14);
        }
    }

    #[test]
    fn multiclass_output_is_on_simplex(w in prop::collection::vec(0.01f64..50.0, 2..6), raw in prop::collection::vec(0.0f64..1.0, 6)) {
        let k = w.len();
        let total: f64 = raw[..k].iter().sum();
        prop_assume!(total > 1e-3);
        let alpha: Vec<f64> = raw[..k].iter().map(|a| a / total).collect();
        prop_assume!((alpha.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let out = shift_correct_multiclass(&w, &alpha).unwrap();
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(out.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn cal_bound_monotone(n in 20usize..100_000, bins in 1usize..50, delta in 0.001f64..0.999) {
        prop_assume!(n / bins >= 2);
        let here = cal_risk_bound(&BoundParams::new(n, bins, delta).unwrap()).unwrap();
        let more_data = cal_risk_bound(&BoundParams::new(n + bins, bins, delta).unwrap()).unwrap();
        prop_assert!(more_data < here);
        if n / (bins + 1) >= 2 {
            let more_bins = cal_risk_bound(&BoundParams::new(n, bins + 1, delta).unwrap()).unwrap();
            prop_assert!(more_bins >= here);
        }
        let p = BoundParams::new(n, bins, delta).unwrap();
        let q = BoundParams::new(n, bins + 1, delta).unwrap();
        prop_assert!(sha_risk_bound(&q) < sha_risk_bound(&p));
        let (ps, qs) = (p.with_smoothness(1.5, true).unwrap(), q.with_smoothness(1.5, true).unwrap());
        prop_assert!(sha_risk_bound(&qs) < sha_risk_bound(&ps));
    }

    #[test]
    fn optimal_bins_is_a_local_minimum(n in 4usize..20_000, delta in 0.001f64..0.999, k in 0.0f64..20.0) {
        let best = optimal_bins(n, delta, k).unwrap();
        prop_assert!(best.bins >= 2 && best.bins <= n / 2);
        prop_assert_eq!(best.zeta, zeta(best.bins, n, delta, k));
        if best.bins > 2 {
            prop_assert!(best.zeta < zeta(best.bins - 1, n, delta, k));
        }
        if best.bins < n / 2 {
            prop_assert!(best.zeta <= zeta(best.bins + 1, n, delta, k));
        }
        let again = optimal_bins(n, delta, k).unwrap();
        prop_assert_eq!(again.zeta.to_bits(), best.zeta.to_bits());
    }
}
