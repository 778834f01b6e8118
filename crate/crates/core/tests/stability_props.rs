use num_bigint::BigUint;
use proptest::prelude::*;
use stable_posi::stability::*;

fn z(m: usize, delta: f64, eta: f64, nu: f64) -> f64 {
    posi_constant(m, delta, &StabilityBudget::new(eta, 0.0, nu).unwrap(), VarianceMode::KnownSigma)
        .unwrap()
}

#[test]
fn posi_constant_is_monotone() {
    let etas = [0.0, 0.1, 0.5, 1.0, 3.0, 10.0, 100.0];
    let sizes = [1, 2, 5, 20, 500];
    let deltas = [0.001, 0.01, 0.05, 0.1, 0.3];
    for &m in &sizes {
        for &delta in &deltas {
            for w in etas.windows(2) {
                assert!(z(m, delta, w[0], 0.01) <= z(m, delta, w[1], 0.01));
            }
        }
        for &eta in &etas {
            for w in deltas.windows(2) {
                assert!(z(m, w[0], eta, 0.01) >= z(m, w[1], eta, 0.01));
            }
        }
    }
    for &eta in &etas {
        for w in sizes.windows(2) {
            assert!(z(w[0], 0.05, eta, 0.0) <= z(w[1], 0.05, eta, 0.0));
        }
    }
    for dof in [3u64, 10, 50] {
        let mode = VarianceMode::EstimatedSigma { dof };
        let mut last = 0.0;
        for &eta in &etas {
            let k = posi_constant(4, 0.05, &StabilityBudget::new(eta, 0.0, 0.0).unwrap(), mode).unwrap();
            assert!(k >= last);
            last = k;
        }
    }
}

#[test]
fn zero_budget_recovers_bonferroni() {
    for &(m, delta) in &[(1usize, 0.05), (3, 0.1), (10, 0.01)] {
        let want = normal_quantile(1.0 - delta / (2.0 * m as f64));
        assert!((z(m, delta, 0.0, 0.0) - want).abs() < 1e-12);
        let t = posi_constant(m, delta, &StabilityBudget::ZERO, VarianceMode::EstimatedSigma { dof: 7 })
            .unwrap();
        assert!((t - t_quantile(1.0 - delta / (2.0 * m as f64), 7)).abs() < 1e-12);
    }
    assert_eq!(corrected_level(0.037, &StabilityBudget::ZERO), 0.037);
}

#[test]
fn sparse_selection_eta_matches_big_integer_sum() {
    fn binom(d: u64, k: u64) -> BigUint {
        let mut num = BigUint::from(1u32);
        let mut den = BigUint::from(1u32);
        for i in 0..k {
            num *= BigUint::from(d - i);
            den *= BigUint::from(i + 1);
        }
        num / den
    }
    fn ln_big(v: &BigUint) -> f64 {
        let bits = v.bits();
        let shift = bits.saturating_sub(60);
        let top: u64 = (v >> shift).try_into().unwrap();
        (top as f64).ln() + shift as f64 * 2f64.ln()
    }
    for &(d, s) in &[(10u64, 3u64), (20, 5), (40, 10), (64, 64), (64, 1), (50, 25)] {
        let total: BigUint = (1..=s).map(|k| binom(d, k)).sum();
        let want = ln_big(&total) + 20f64.ln();
        let got = sparse_selection_eta(d, s, 0.05).unwrap();
        assert!((got - want).abs() < 1e-9 * want, "d {d} s {s}: {got} vs {want}");
    }
    let big = sparse_selection_eta(500, 10, 0.05).unwrap();
    assert!(big.is_finite() && big > 0.0);
}

#[test]
fn scheffe_rate_sanity() {
    let alpha = 0.1;
    let d = 500u64;
    let ratios: Vec<f64> = (2..=20u64)
        .map(|s| {
            let eta = sparse_selection_eta(d, s, alpha / 3.0).unwrap();
            let b = StabilityBudget::new(eta, alpha / 3.0, 0.0).unwrap();
            let k = posi_constant(s as usize, alpha / 3.0, &b, VarianceMode::KnownSigma).unwrap();
            k / (s as f64 * (d as f64 / s as f64).ln()).sqrt()
        })
        .collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    assert!(hi / lo < 1.25, "ratio spread {lo}..{hi}");
}

#[test]
fn advanced_beats_simple_at_small_steps() {
    let adv = compose_adaptive_advanced(0.1, 10, 0.05).unwrap();
    let (simple, _) = compose_adaptive_simple(0.1, 0.0, 10).unwrap();
    assert!(adv < simple);
    // For large steps the simple rule is better.
    let adv = compose_adaptive_advanced(2.0, 10, 0.05).unwrap();
    assert!(adv > compose_adaptive_simple(2.0, 0.0, 10).unwrap().0);
}

#[test]
fn t_tends_to_normal() {
    for &p in &[0.9, 0.975, 0.995] {
        assert!((t_quantile(p, 10_000) - normal_quantile(p)).abs() < 5e-4);
    }
}

#[test]
fn corollary_example_constant() {
    // alpha = 0.1 in thirds, eta = 1, nu = alpha/3, one coefficient.
    let third = 0.1 / 3.0;
    let b = StabilityBudget::new(1.0, 0.0, third).unwrap();
    let k = posi_constant(1, third, &b, VarianceMode::KnownSigma).unwrap();
    let want = normal_quantile(1.0 - corrected_level(third, &b) / 2.0);
    assert!((k - want).abs() < 1e-10);
}

proptest! {
    #[test]
    fn intervals_are_ordered_and_centered(
        est in prop::collection::vec(-100.0f64..100.0, 1..8),
        k in 0.0f64..10.0,
    ) {
        let m = est.len();
        let fit = stable_posi::linmodel::FitResult {
            model: stable_posi::linmodel::ModelSet::full(m),
            coefficients: est.clone(),
            stderrs: (0..m).map(|i| 0.1 + i as f64).collect(),
        };
        let ci = build_intervals(&fit, k).unwrap();
        for j in 0..m {
            prop_assert!(ci.lower[j] <= ci.upper[j]);
            prop_assert!(((ci.lower[j] + ci.upper[j]) / 2.0 - est[j]).abs() < 1e-9 * est[j].abs().max(1.0));
        }
        prop_assert!(ci.covers(&est));
    }

    #[test]
    fn nonadaptive_composition_adds(
        parts in prop::collection::vec((0.0f64..5.0, 0.0f64..0.3, 0.0f64..0.3), 1..6)
    ) {
        let budgets: Vec<StabilityBudget> =
            parts.iter().map(|&(e, t, n)| StabilityBudget::new(e, t, n).unwrap()).collect();
        let c = compose_nonadaptive(&budgets).unwrap();
        let eta: f64 = parts.iter().map(|p| p.0).sum();
        prop_assert!((c.eta - eta).abs() < 1e-12);
        prop_assert!(c.tau <= 1.0 && c.nu <= 1.0);
    }
}
