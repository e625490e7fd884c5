//! Independent oracles for the exponent fits, the shift score and the
//! ranking statistics.

use ads_core::calib::{fit_depth_profile, fit_width_exponents, peak_layer};
use ads_core::clrun::LayerTrace;
use ads_core::nncore::ArchitectureSpec;
use ads_core::stats::{self, CorrelationSettings};
use ads_core::{compute_ads, CalibrationParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn trace(layer_index: usize, w_in: usize, w_out: usize, rel_change: f64, mean_abs_cos: f64) -> LayerTrace {
    LayerTrace { layer_index, disp: 1.0, pathlen: 1.0, c_traj: 1.0, rel_change, mean_abs_cos, gold_spectral: 1.0, w_in, w_out }
}

fn power_law(alpha: f64, beta: f64, k: f64, layers: &[(usize, usize)]) -> Vec<LayerTrace> {
    layers.iter().enumerate().map(|(i, &(a, b))| trace(i % 5 + 1, a, b, k.exp() * (a as f64).powf(alpha) * (b as f64).powf(beta), 0.5)).collect()
}

fn depth_law(b: f64, c: f64, depth: usize) -> Vec<LayerTrace> {
    (1..=depth).map(|l| trace(l, 16, 16, 1.0, (l as f64).powf(b) * (-c * l as f64).exp())).collect()
}

fn width_grid() -> Vec<(usize, usize)> {
    let ws = [8, 16, 32, 64, 128, 256];
    ws.iter().flat_map(|&a| ws.iter().map(move |&b| (a, b))).filter(|(a, b)| (a * 7 + b * 3) % 5 != 0).collect()
}

fn oracle_ads(widths: &[usize], alpha: f64, beta: f64, b: f64, c: f64) -> f64 {
    let mut total = 0.0;
    for l in 1..widths.len() - 1 {
        let lf = l as f64;
        total += ((widths[l - 1] as f64).ln() * (alpha + 0.5) + (widths[l] as f64).ln() * beta).exp() * (lf.ln() * b - c * lf).exp();
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn width_fit_recovers_exact_power_laws(alpha in -1.5f64..1.5, beta in -1.5f64..1.5, k in -4.0f64..2.0) {
        let fit = fit_width_exponents(&power_law(alpha, beta, k, &width_grid())).unwrap();
        prop_assert!((fit.alpha - alpha).abs() < 1e-10 && (fit.beta - beta).abs() < 1e-10, "{fit:?}");
        prop_assert!((fit.intercept - k).abs() < 1e-9);
        prop_assert!(fit.r2 > 1.0 - 1e-12);
    }

    #[test]
    fn depth_fit_recovers_exact_profiles(b in 0.2f64..4.0, c in 0.05f64..1.5, depth in 4usize..12) {
        let fit = fit_depth_profile(&depth_law(b, c, depth)).unwrap();
        prop_assert!((fit.b - b).abs() < 1e-10 && (fit.c - c).abs() < 1e-10, "{fit:?}");
    }

    #[test]
    fn width_fit_ignores_order_duplication_and_scale(seed in 0u64..1000, scale in 0.01f64..100.0) {
        let base = power_law(0.3, -0.4, -1.0, &width_grid());
        // deterministic noise so the fit is not exact
        let noisy: Vec<LayerTrace> = base.iter().enumerate().map(|(i, t)| {
            let wobble = (((i as u64 * 2654435761 + seed) % 1000) as f64 / 1000.0 - 0.5) * 0.2;
            LayerTrace { rel_change: t.rel_change * wobble.exp(), ..t.clone() }
        }).collect();
        let reference = fit_width_exponents(&noisy).unwrap();
        let mut reordered = noisy.clone();
        reordered.reverse();
        reordered.rotate_left(seed as usize % noisy.len());
        let doubled: Vec<LayerTrace> = noisy.iter().chain(noisy.iter()).cloned().collect();
        let scaled: Vec<LayerTrace> = noisy.iter().map(|t| LayerTrace { rel_change: t.rel_change * scale, ..t.clone() }).collect();
        for other in [&reordered, &doubled, &scaled] {
            let f = fit_width_exponents(other).unwrap();
            prop_assert!((f.alpha - reference.alpha).abs() < 1e-10 && (f.beta - reference.beta).abs() < 1e-10);
        }
        let f = fit_width_exponents(&scaled).unwrap();
        prop_assert!((f.intercept - reference.intercept - scale.ln()).abs() < 1e-9);
    }

    #[test]
    fn ads_matches_scalar_recomputation(
        widths in prop::collection::vec(1usize..600, 3..12),
        alpha in -1.0f64..1.0, beta in -1.0f64..1.0, b in 0.0f64..3.0, c in 0.0f64..1.0,
    ) {
        let spec = ArchitectureSpec::from_widths(widths.clone()).unwrap();
        let score = compute_ads(&spec, &CalibrationParams::manual(alpha, beta, b, c)).unwrap();
        let expected = oracle_ads(&widths, alpha, beta, b, c);
        prop_assert!((score.value - expected).abs() <= 1e-12 * expected.max(1.0), "{} vs {expected}", score.value);
        prop_assert_eq!(score.per_layer_terms.len(), widths.len() - 2);
        prop_assert!(score.value > 0.0 && score.per_layer_terms.iter().all(|t| *t > 0.0));
    }

    #[test]
    fn ads_grows_with_width_when_exponents_are_positive(
        widths in prop::collection::vec(2usize..300, 4..10), pick in 0usize..100, alpha in 0.0f64..1.0, beta in 0.0f64..1.0,
    ) {
        let params = CalibrationParams::manual(alpha, beta, 1.0, 0.3);
        let spec = ArchitectureSpec::from_widths(widths.clone()).unwrap();
        let hidden = 1 + pick % (widths.len() - 2);
        let mut wider = widths.clone();
        wider[hidden] *= 2;
        let before = compute_ads(&spec, &params).unwrap().value;
        let after = compute_ads(&ArchitectureSpec::from_widths(wider).unwrap(), &params).unwrap().value;
        prop_assert!(after > before);
    }

    #[test]
    fn ads_ignores_output_width(widths in prop::collection::vec(1usize..300, 3..10), out in 1usize..50) {
        let params = CalibrationParams::manual(0.2, -0.3, 2.0, 0.5);
        let mut other = widths.clone();
        *other.last_mut().unwrap() = out;
        let a = compute_ads(&ArchitectureSpec::from_widths(widths).unwrap(), &params).unwrap();
        let b = compute_ads(&ArchitectureSpec::from_widths(other).unwrap(), &params).unwrap();
        prop_assert_eq!(a.value, b.value);
    }

    #[test]
    fn rank_statistics_are_invariant_to_monotone_maps(xs in prop::collection::vec(-50i32..50, 5..30), seed in 0u64..1000) {
        let x: Vec<f64> = xs.iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + ((i as u64 * 7919 + seed) % 13) as f64).collect();
        let mapped: Vec<f64> = x.iter().map(|v| (v / 10.0).exp()).collect();
        if let (Ok(s), Ok(k)) = (stats::spearman(&x, &y), stats::kendall(&x, &y)) {
            prop_assert!((stats::spearman(&mapped, &y).unwrap() - s).abs() < 1e-12);
            prop_assert!((stats::kendall(&mapped, &y).unwrap() - k).abs() < 1e-12);
            prop_assert!((stats::spearman(&y, &x).unwrap() - s).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&s) && (-1.0..=1.0).contains(&k));
        }
    }

    #[test]
    fn average_precision_matches_brute_force(labels in prop::collection::vec(any::<bool>(), 1..40), seed in 0u64..1000) {
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by_key(|&i| (i as u64 * 2654435761 + seed) % 1009);
        let n_pos = labels.iter().filter(|&&p| p).count();
        // mean precision at the cut-off of each positive
        let mut expected = 0.0;
        for (k, &i) in order.iter().enumerate() {
            if labels[i] {
                let hits = order[..=k].iter().filter(|&&j| labels[j]).count();
                expected += hits as f64 / (k + 1) as f64;
            }
        }
        let expected = if n_pos == 0 { 0.0 } else { expected / n_pos as f64 };
        prop_assert!((stats::average_precision(&order, &labels) - expected).abs() < 1e-12);
    }
}

#[test]
fn peak_layer_is_the_exact_argmax() {
    for (b, c, depth) in [(2.0, 0.5, 10), (1.0, 0.1, 5), (3.0, 2.0, 8), (0.5, 0.0, 6)] {
        let values: Vec<f64> = (1..=depth).map(|l| (l as f64).powf(b) * (-c * l as f64).exp()).collect();
        let argmax = 1 + values.iter().enumerate().fold(0, |best, (i, v)| if *v > values[best] { i } else { best });
        assert_eq!(peak_layer(b, c, depth), argmax, "b {b} c {c}");
    }
}

#[test]
fn depth_fit_needs_three_layers() {
    assert!(fit_depth_profile(&depth_law(2.0, 0.5, 2)).is_err());
}

#[test]
fn permutation_p_value_is_calibrated_under_independence() {
    let settings = CorrelationSettings { n_perm: 999, n_boot: 1000, level: 0.95, seed: 0 };
    let mut rejections = 0;
    let trials = 200;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(t as u64);
        let x: Vec<f64> = (0..15).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..15).map(|_| rng.gen()).collect();
        let rep = stats::correlate(&x, &y, &CorrelationSettings { seed: t as u64, ..settings }).unwrap();
        assert!(rep.p_value > 0.0 && rep.p_value <= 1.0);
        assert!(rep.ci_low <= rep.dc && rep.dc <= rep.ci_high, "{rep:?}");
        if rep.p_value < 0.05 {
            rejections += 1;
        }
    }
    // a generous band around the nominal 5%
    assert!(rejections <= 25, "{rejections} rejections in {trials}");
}

#[test]
fn perfect_agreement_is_significant() {
    let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| v * v + 1.0).collect();
    let rep = stats::correlate(&x, &y, &CorrelationSettings::default()).unwrap();
    assert_eq!((rep.spearman, rep.kendall, rep.dc), (1.0, 1.0, 1.0));
    assert!(rep.p_value <= 1.0 / 10_000.0 + 1e-15);
}
