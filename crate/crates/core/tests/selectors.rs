use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stable_posi::linmodel::DesignMatrix;
use stable_posi::noise::{laplace_cdf, NoisePolicy, RngStream};
use stable_posi::selectors::*;

fn gaussian(n: usize, d: usize, rng: &mut ChaCha8Rng) -> DesignMatrix {
    let s = 1.0 / (n as f64).sqrt();
    DesignMatrix::new(DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal) * s)).unwrap()
}

fn response(x: &DesignMatrix, active: usize, signal: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let beta: Vec<f64> = (0..x.d()).map(|j| if j < active { signal } else { 0.0 }).collect();
    x.mul_vec(&beta)
        .unwrap()
        .into_iter()
        .map(|m| m + rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn laplace_pdf(b: f64, x: f64) -> f64 {
    (-x.abs() / b).exp() / (2.0 * b)
}

/// Simpson's rule on `[a, b]` with `m` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn within_three_sigma(counts: &[usize], probs: &[f64], trials: usize) {
    let total: f64 = probs.iter().sum();
    assert!((total - 1.0).abs() < 1e-6, "oracle probabilities sum to {total}");
    for (c, p) in counts.iter().zip(probs) {
        let freq = *c as f64 / trials as f64;
        let sd = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((freq - p).abs() <= 3.0 * sd + 1e-12, "freq {freq} vs {p} (sd {sd})");
    }
}

#[test]
fn lasso_one_step_selection_law() {
    let x = DesignMatrix::from_rows(&[vec![1.0, 0.3], vec![0.5, -1.0], vec![-0.2, 0.8]]).unwrap();
    let y = [0.9, -0.4, 0.7];
    let c1 = 1.0;
    let base = NoisePolicy::subgaussian(1.0, 0.05, 1.0).unwrap();
    let target_b = 0.4;
    let eta = stable_posi::noise::scale_lasso(2, c1, &x, &base).unwrap() / target_b;
    let cfg = LassoConfig {
        c1,
        steps: 1,
        policy: NoisePolicy::subgaussian(1.0, 0.05, eta).unwrap(),
    };
    let trials = 100_000;
    let mut counts = [0usize; 4];
    let mut scores = Vec::new();
    let mut b = 0.0;
    for s in 0..trials {
        let r = stable_lasso(&x, &y, &cfg, &RngStream::new(s as u64)).unwrap();
        counts[r.trace[0].chosen] += 1;
        if s == 0 {
            scores = r.trace[0].scores.clone();
            b = r.noise_scale;
        }
    }
    assert!((b - target_b).abs() < 1e-12);
    // Oracle: P(v wins the noisy argmin) = ∫ f(t - s_v) Π_{u≠v} P(s_u + ξ_u > t) dt.
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min) - 60.0 * b;
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 60.0 * b;
    let probs: Vec<f64> = (0..4)
        .map(|v| {
            simpson(
                |t| {
                    let mut p = laplace_pdf(b, t - scores[v]);
                    for (u, su) in scores.iter().enumerate() {
                        if u != v {
                            p *= 1.0 - laplace_cdf(b, t - su);
                        }
                    }
                    p
                },
                lo,
                hi,
                200_000,
            )
        })
        .collect();
    within_three_sigma(&counts, &probs, trials);
}

#[test]
fn screening_one_step_selection_law() {
    let x = DesignMatrix::new(DMatrix::identity(3, 3)).unwrap();
    let y = [0.3, -0.5, 0.1];
    let b = 0.25;
    let trials = 100_000;
    let mut counts = [0usize; 3];
    for s in 0..trials {
        let r = screening_at_scale(&x, &y, 1, b, &RngStream::new(1_000_000 + s as u64)).unwrap();
        counts[r.order[0]] += 1;
    }
    let c: Vec<f64> = y.iter().map(|v| v / 3.0).collect();
    // P(i) = ∫_0^∞ density of |c_i + ξ| at t × Π_{j≠i} P(|c_j + ξ| < t) dt
    let probs: Vec<f64> = (0..3)
        .map(|i| {
            simpson(
                |t| {
                    let mut p = laplace_pdf(b, t - c[i]) + laplace_pdf(b, -t - c[i]);
                    for (j, cj) in c.iter().enumerate() {
                        if j != i {
                            p *= laplace_cdf(b, t - cj) - laplace_cdf(b, -t - cj);
                        }
                    }
                    p
                },
                0.0,
                60.0 * b,
                200_000,
            )
        })
        .collect();
    within_three_sigma(&counts, &probs, trials);
}

#[test]
fn zero_noise_limit_matches_exact_selectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for inst in 0..100u64 {
        let (n, d, k) = (30, 12, 4);
        let x = gaussian(n, d, &mut rng);
        let y = response(&x, 3, 3.0, &mut rng);
        let stream = RngStream::new(inst);
        let tight = NoisePolicy::subgaussian(1.0, 0.05, 1e12).unwrap();

        let exact = screening_exact(&x, &y, k).unwrap();
        assert_eq!(screening_at_scale(&x, &y, k, 0.0, &stream).unwrap().model, exact);
        assert_eq!(stable_screening(&x, &y, k, &tight, &stream).unwrap().model, exact);

        let exact = fs_exact(&x, &y, k).unwrap();
        assert_eq!(fs_at_scale(&x, &y, k, 0.0, &stream).unwrap().model, exact);
        assert_eq!(stable_fs(&x, &y, k, &tight, &stream).unwrap().model, exact);

        let theta = lasso_exact_fw(&x, &y, 2.0, 15).unwrap();
        let zero = lasso_at_scale(&x, &y, 2.0, 15, 0.0, &stream).unwrap();
        assert_eq!(zero.theta.as_deref(), Some(theta.as_slice()));
        let cfg = LassoConfig { c1: 2.0, steps: 15, policy: tight.clone() };
        let noisy = stable_lasso(&x, &y, &cfg, &stream).unwrap();
        let exact_path: Vec<usize> = zero.trace.iter().map(|t| t.chosen).collect();
        let noisy_path: Vec<usize> = noisy.trace.iter().map(|t| t.chosen).collect();
        assert_eq!(exact_path, noisy_path);
    }
}

#[test]
fn ties_go_to_the_lowest_index() {
    // Columns 0 and 2 are identical.
    let x = DesignMatrix::from_rows(&[vec![1.0, 0.2, 1.0], vec![0.5, 1.0, 0.5], vec![0.0, 0.3, 0.0]]).unwrap();
    let y = [2.0, 1.0, 0.0];
    assert_eq!(screening_exact(&x, &y, 1).unwrap().indices(), &[0]);
    let r = fs_at_scale(&x, &y, 2, 0.0, &RngStream::new(0)).unwrap();
    assert_eq!(r.order[0], 0);
    assert!(!r.order.contains(&2));
    let l = lasso_at_scale(&x, &y, 1.0, 1, 0.0, &RngStream::new(0)).unwrap();
    assert_eq!(l.trace[0].chosen, 0);
}

#[test]
fn forward_stepwise_criteria_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let x = gaussian(25, 10, &mut rng);
        let y = response(&x, 4, 2.0, &mut rng);
        let by_corr = fs_at_scale(&x, &y, 6, 0.0, &RngStream::new(0)).unwrap();
        let by_rss = fs_exact_rss(&x, &y, 6).unwrap();
        assert_eq!(by_corr.order, by_rss);
    }
}

#[test]
fn orthonormal_forward_stepwise_is_screening() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = DMatrix::from_fn(10, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let x = DesignMatrix::new(q).unwrap();
    let y: Vec<f64> = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let fs = fs_at_scale(&x, &y, 5, 0.0, &RngStream::new(0)).unwrap();
    let sc = screening_at_scale(&x, &y, 5, 0.0, &RngStream::new(0)).unwrap();
    assert_eq!(fs.order, sc.order);
}

#[test]
fn frank_wolfe_gap_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let x = gaussian(40, 15, &mut rng);
        let y = response(&x, 5, 2.0, &mut rng);
        let c1 = 1.5;
        let reference = lasso_exact_fw(&x, &y, c1, 20_000).unwrap();
        let lower = lasso_objective(&x, &y, &reference).unwrap() - fw_dual_gap(&x, &y, &reference, c1).unwrap();
        let cl = 4.0 * x.linf_norm().powi(2) * c1 * c1;
        for k in [1usize, 2, 5, 10, 50, 200] {
            let theta = lasso_exact_fw(&x, &y, c1, k).unwrap();
            let gap = lasso_objective(&x, &y, &theta).unwrap() - lower;
            assert!(gap <= 2.0 * cl / (k as f64 + 2.0), "k {k}: gap {gap}");
        }
    }
}

#[test]
fn orthonormal_lasso_approaches_ols() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let g = DMatrix::from_fn(8, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = DesignMatrix::new(g.qr().q()).unwrap();
    let y: Vec<f64> = (0..8).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let ols = x.tr_mul_vec(&y).unwrap();
    let c1 = 100.0;
    let k = 5000;
    let theta = lasso_exact_fw(&x, &y, c1, k).unwrap();
    // With X^T X = I, n (L(theta) - L*) = ||theta - X^T y||^2.
    let dist2: f64 = theta.iter().zip(&ols).map(|(a, b)| (a - b).powi(2)).sum();
    let cl = 4.0 * x.linf_norm().powi(2) * c1 * c1;
    assert!(dist2 <= 8.0 * 2.0 * cl / (k as f64 + 2.0));
    assert!(dist2 < 1.0);
}

#[test]
fn coordinate_descent_agrees_with_frank_wolfe() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let x = gaussian(30, 8, &mut rng);
        let y = response(&x, 3, 3.0, &mut rng);
        let xty = x.tr_mul_vec(&y).unwrap();
        let lmax = xty.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let theta_cd = lasso_penalized_cd(&x, &y, 0.3 * lmax, 1e-12, 100_000).unwrap();
        let c1: f64 = theta_cd.iter().map(|v| v.abs()).sum();
        let theta_fw = lasso_exact_fw(&x, &y, c1, 50_000).unwrap();
        let l_cd = lasso_objective(&x, &y, &theta_cd).unwrap();
        let l_fw = lasso_objective(&x, &y, &theta_fw).unwrap();
        assert!(l_fw >= l_cd - 1e-6, "{l_fw} < {l_cd}");
        assert!(l_fw - l_cd < 1e-3 * l_cd.max(1.0));
        assert!((lambda_to_c1(&x, &y, 0.3 * lmax).unwrap() - c1).abs() < 1e-6 * c1.max(1.0));
        assert_eq!(lambda_to_c1(&x, &y, 1.01 * lmax).unwrap(), 0.0);
    }
}

#[test]
fn small_lambda_recovers_ols_norm() {
    let x = DesignMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
    let y = [1.0, -2.0];
    // X^{-1} y = (1, -1)
    let c1 = lambda_to_c1(&x, &y, 1e-7).unwrap();
    assert!((c1 - 2.0).abs() < 1e-5);
}

#[test]
fn stable_lasso_iterates_stay_in_the_ball() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = gaussian(50, 20, &mut rng);
    let y = response(&x, 5, 4.0, &mut rng);
    let c1 = 3.0;
    let cfg = LassoConfig { c1, steps: 60, policy: NoisePolicy::subgaussian(1.0, 0.05, 0.5).unwrap() };
    for s in 0..20 {
        let r = stable_lasso(&x, &y, &cfg, &RngStream::new(s)).unwrap();
        let mut theta = vec![0.0; 20];
        for (t, step) in r.trace.iter().enumerate() {
            let delta = 2.0 / (t as f64 + 2.0);
            theta.iter_mut().for_each(|v| *v *= 1.0 - delta);
            let sign = if step.chosen % 2 == 0 { 1.0 } else { -1.0 };
            theta[step.chosen / 2] += delta * sign * c1;
            assert!(theta.iter().map(|v| v.abs()).sum::<f64>() <= c1 + 1e-9);
        }
        assert_eq!(Some(theta.as_slice()), r.theta.as_deref());
        assert_eq!(r.budgets, certify_budgets(60, 0.5, 0.05).unwrap());
        // The thresholds can only disagree on coordinates where +e_j and -e_j
        // were both visited and cancelled down to rounding dust.
        let th = r.theta.unwrap();
        let delta_k = 2.0 / (60.0 + 1.0);
        let (loose, strict) = (support(&th, 0.0), support(&th, SUPPORT_THRESHOLD));
        if th.iter().all(|v| *v == 0.0 || v.abs() >= delta_k * c1) {
            assert_eq!(loose, strict);
        }
        for &j in loose.indices() {
            if !strict.contains(j) {
                let signs: Vec<usize> = r.trace.iter().filter(|t| t.chosen / 2 == j).map(|t| t.chosen % 2).collect();
                assert!(signs.contains(&0) && signs.contains(&1));
            }
        }
    }
}

#[test]
fn selectors_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = gaussian(40, 10, &mut rng);
    let y = response(&x, 3, 2.0, &mut rng);
    let p = NoisePolicy::subgaussian(1.0, 0.05, 0.3).unwrap();
    let s = RngStream::new(5).child(2);
    // Out-of-play scores are NaN, so compare the printed form.
    let same = |a: SelectionResult, b: SelectionResult| assert_eq!(format!("{a:?}"), format!("{b:?}"));
    same(stable_screening(&x, &y, 3, &p, &s).unwrap(), stable_screening(&x, &y, 3, &p, &s).unwrap());
    same(stable_fs(&x, &y, 3, &p, &s).unwrap(), stable_fs(&x, &y, 3, &p, &s).unwrap());
    let cfg = LassoConfig { c1: 2.0, steps: 10, policy: p.clone() };
    same(stable_lasso(&x, &y, &cfg, &s).unwrap(), stable_lasso(&x, &y, &cfg, &s).unwrap());
    assert_ne!(
        stable_fs(&x, &y, 3, &p, &s).unwrap().trace[0].noisy[0],
        stable_fs(&x, &y, 3, &p, &s.child(0)).unwrap().trace[0].noisy[0]
    );
}

#[test]
fn default_step_rule() {
    let x = DesignMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0]]).unwrap();
    // n ||X||_inf^2 C1 eta / (sigma ||X||_{2,inf}) = 3 * 4 * 1 * 1 / sqrt(5)
    assert_eq!(default_lasso_steps(&x, 1.0, 1.0, 1.0), (12.0 / 5f64.sqrt()).ceil() as usize);
    assert_eq!(default_lasso_steps(&x, 1e9, 1e9, 1.0), MAX_DEFAULT_STEPS);
}
