use iasched::rate_model::{
    approx_rate, avg_rate_user, g_factor, gbar, mgf_residual, phi, success_prob, svd_rate,
    symmetric_f, symmetric_profile, symmetric_rate, ApproxOrder,
};
use iasched::sim::empirical_success;
use iasched::{DecisionVector, Error, RateMode, RngStream, SystemConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution, Gamma};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn dv(n: usize, active: &[usize]) -> DecisionVector {
    DecisionVector::from_active(n, active).unwrap()
}

/// Heterogeneous path loss from a fixed seed: direct in [0.8, 1.2], cross in [0.02, 0.4].
fn random_zeta_cfg(seed: u64, n: usize) -> SystemConfig {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut cfg = SystemConfig::reference(0.2, 30);
    cfg.n = n;
    cfg.nt = 8;
    cfg.nr = 8;
    cfg.zeta = (0..n)
        .map(|k| {
            (0..n)
                .map(|i| if i == k { rng.gen_range(0.8..1.2) } else { rng.gen_range(0.02..0.4) })
                .collect()
        })
        .collect();
    cfg.validate().unwrap();
    cfg
}

#[test]
fn derived_parameters() {
    let dp = SystemConfig::reference(0.2, 48).derived();
    assert_eq!(dp.q, 48);
    assert!((dp.a_breve - 97.0 / 48.0).abs() < 1e-15);
    assert!((dp.b_breve - 47.0 * 97.0 / 48.0).abs() < 1e-12);
    assert!((dp.delta - 2.0).abs() < 1e-15);
}

#[test]
fn g_factor_examples() {
    let cfg = SystemConfig::reference(1.0, 0);
    assert!((g_factor(&cfg, 0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!(g_factor(&SystemConfig::reference(1.0, 1000), 0, 1).unwrap() < 1e-5);
    // 0.2·2 / (2^{30/48} + 0.2·2), evaluated at 40 digits
    let g = g_factor(&SystemConfig::reference(0.2, 30), 0, 1).unwrap();
    assert!(rel(g, 0.205_950_865_254_797_58) < 1e-14);
    assert!(matches!(g_factor(&cfg, 2, 2), Err(Error::Argument(_))));
}

#[test]
fn mgf_examples() {
    let cfg = SystemConfig::reference(0.2, 30);
    assert_eq!(mgf_residual(&cfg, &dv(6, &[3]), 3).unwrap(), 1.0);
    let big = SystemConfig::reference(0.2, 10_000);
    assert!((mgf_residual(&big, &dv(6, &[0, 1, 2, 3, 4, 5]), 0).unwrap() - 1.0).abs() < 1e-6);
    assert!(matches!(mgf_residual(&cfg, &dv(6, &[0, 1]), 2), Err(Error::Argument(_))));
}

/// Direct sampler for `E[exp(-τ RI / α_kk)]` with
/// `RI = Σ α_ki d X_i Y_i`, `X ~ Gamma(Q, rate 2^{B/Q})`, `Y ~ Beta(ă, b̆)`.
fn mgf_monte_carlo(cfg: &SystemConfig, active: &[usize], k: usize, n: usize, seed: u64) -> (f64, f64) {
    let q = (cfg.nt * cfg.nr - 1) as f64;
    let a = ((q + 1.0) * cfg.d as f64 - 1.0) / q;
    let b = (q - 1.0) * a;
    let rate = 2f64.powf(cfg.bits as f64 / q);
    let x_law = Gamma::new(q, 1.0 / rate).unwrap();
    let y_law = Beta::new(a, b).unwrap();
    let alpha = |k: usize, i: usize| cfg.power * cfg.zeta[k][i] / cfg.d as f64;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let ri: f64 = active
            .iter()
            .filter(|&&i| i != k)
            .map(|&i| alpha(k, i) * cfg.d as f64 * x_law.sample(&mut rng) * y_law.sample(&mut rng))
            .sum();
        let v = (-cfg.tau * ri / alpha(k, k)).exp();
        s += v;
        s2 += v * v;
    }
    let mean = s / n as f64;
    let var = s2 / n as f64 - mean * mean;
    (mean, (var / n as f64).sqrt())
}

#[test]
fn mgf_matches_monte_carlo_oracle() {
    let cfg = SystemConfig::reference(0.2, 30);
    let exact = mgf_residual(&cfg, &dv(6, &[0, 1]), 0).unwrap();
    let (est, se) = mgf_monte_carlo(&cfg, &[0, 1], 0, 1_000_000, 11);
    assert!((est - exact).abs() <= 3.0 * se, "exact {exact} est {est} se {se}");
}

#[test]
fn mgf_matches_monte_carlo_on_grid() {
    let mut seed = 100;
    for bits in [15, 30, 40] {
        for cross in [0.2, 0.5] {
            for l in 2..=4usize {
                let cfg = SystemConfig::reference(cross, bits);
                let active: Vec<usize> = (0..l).collect();
                let exact = mgf_residual(&cfg, &dv(6, &active), 0).unwrap();
                seed += 1;
                let (est, se) = mgf_monte_carlo(&cfg, &active, 0, 1_000_000, seed);
                assert!(
                    (est - exact).abs() <= 3.0 * se,
                    "B={bits} ζc={cross} L={l}: exact {exact} est {est} se {se}"
                );
            }
        }
    }
}

#[test]
fn success_probability_examples() {
    let cfg = SystemConfig::reference(0.5, 15);
    let single = dv(6, &[2]);
    let p = success_prob(&cfg, &single, 2, RateMode::Perfect).unwrap();
    assert!((p - (-0.2f64).exp()).abs() < 1e-15);
    assert!((p - 0.818_730_753_1).abs() < 1e-10);
    assert_eq!(success_prob(&cfg, &single, 2, RateMode::Imperfect).unwrap(), p);

    let three = dv(6, &[0, 1, 2]);
    let exact = success_prob(&cfg, &three, 0, RateMode::Imperfect).unwrap();
    let mut rng = RngStream::new(5, 0).rng();
    let (est, se) = empirical_success(&cfg, &three, 0, RateMode::Imperfect, 1_000_000, &mut rng).unwrap();
    assert!((est - exact).abs() <= 3.0 * se, "exact {exact} est {est} se {se}");
}

#[test]
fn average_rate_examples() {
    let cfg = SystemConfig::reference(0.2, 40);
    let r = avg_rate_user(&cfg, &dv(6, &[4]), 4, RateMode::Perfect).unwrap();
    assert!((r - 0.99 * 2.0 * 1000.0 * (-0.2f64).exp()).abs() < 1e-9);
    assert!((r - 1621.09).abs() < 0.01);
    assert!(matches!(
        avg_rate_user(&cfg, &dv(6, &[4]), 1, RateMode::Perfect),
        Err(Error::Argument(_))
    ));
    let three = dv(6, &[1, 3, 5]);
    assert_eq!(
        avg_rate_user(&cfg, &three, 3, RateMode::Imperfect).unwrap(),
        symmetric_rate(&cfg, 3, RateMode::Imperfect, false).unwrap()
    );
}

#[test]
fn symmetric_f_examples() {
    assert!((symmetric_f(&SystemConfig::reference(0.2, 10_000)).unwrap() - 1.0).abs() < 1e-6);
    // 40-digit series evaluation with ζ = 1 everywhere, B = 40
    let f = symmetric_f(&SystemConfig::reference(1.0, 40)).unwrap();
    assert!(rel(f, 0.411_208_564_605_471_75) < 1e-12);
    for (bits, cross, want) in [
        (15, 1.0, 0.307_866_785_811_973_18),
        (30, 1.0, 0.369_002_521_558_086_06),
        (15, 0.2, 0.742_104_170_458_734),
        (15, 0.5, 0.509_075_545_383_516),
        (30, 0.2, 0.783_791_973_732_742),
        (30, 0.5, 0.570_926_269_885_495),
        (40, 0.2, 0.808_513_463_633_598),
        (40, 0.5, 0.610_327_338_827_008),
    ] {
        let f = symmetric_f(&SystemConfig::reference(cross, bits)).unwrap();
        assert!(rel(f, want) < 1e-12, "B={bits} ζc={cross}: {f}");
    }
    let mut cfg = SystemConfig::reference(0.2, 30);
    cfg.zeta[1][4] = 0.3;
    assert!(matches!(symmetric_f(&cfg), Err(Error::Argument(_))));
}

#[test]
fn symmetric_rate_examples() {
    let cfg = SystemConfig::reference(0.5, 30);
    assert_eq!(
        symmetric_rate(&cfg, 1, RateMode::Imperfect, false).unwrap(),
        symmetric_rate(&cfg, 1, RateMode::Perfect, false).unwrap()
    );

    let mut wide = SystemConfig::reference(0.5, 30).with_theta(0.1);
    wide.n = 8;
    wide.nt = 9;
    wide.nr = 9;
    wide.zeta = iasched::rate_model::uniform_zeta(8, 1.0, 0.5);
    let mu = |l| symmetric_rate(&wide, l, RateMode::Perfect, true).unwrap();
    assert!(mu(5) > mu(6) && mu(5) > mu(4));

    // Re-evaluated independently at 40 digits.
    let expect = [
        1621.086_891_094_404_1,
        1184.285_752_462_670_1,
        648.817_800_056_509_23,
        315.929_605_611_707_41,
        144.205_572_982_152_48,
        63.182_509_705_205_433,
    ];
    let cfg = SystemConfig::reference(1.0, 30);
    for (l, want) in (1..=6).zip(expect) {
        let got = symmetric_rate(&cfg, l, RateMode::Imperfect, true).unwrap();
        assert!(rel(got, want) < 1e-12, "L={l}: {got}");
    }
    assert!(matches!(symmetric_rate(&cfg, 0, RateMode::Imperfect, false), Err(Error::Argument(_))));
    assert!(matches!(symmetric_rate(&cfg, 7, RateMode::Imperfect, false), Err(Error::Argument(_))));
}

#[test]
fn svd_rate_examples() {
    let cfg = SystemConfig::reference(0.2, 30).with_tau(0.0);
    assert!((svd_rate(&cfg).unwrap() - 0.99 * 2.0 * 1000.0).abs() < 1e-9);
    let r = svd_rate(&SystemConfig::reference(0.2, 30)).unwrap();
    assert!((r - 1588.91).abs() < 0.01, "{r}");
}

#[test]
fn gbar_examples() {
    let cfg = SystemConfig::reference(0.3, 20);
    for k in 0..6 {
        assert!((gbar(&cfg, k).unwrap() - g_factor(&cfg, k, (k + 1) % 6).unwrap()).abs() < 1e-15);
    }

    // N = 3 with g_0· = {0.1, 0.3}: choose ζ_0i so that c/(δ+c) hits each value at B = 0.
    let mut cfg = SystemConfig::reference(0.3, 0);
    cfg.n = 3;
    cfg.zeta = iasched::rate_model::uniform_zeta(3, 1.0, 0.3);
    // g = c/(1+c) with c = 2ζ  ⇒  ζ = g/(2(1-g))
    cfg.zeta[0][1] = 0.1 / (2.0 * 0.9);
    cfg.zeta[0][2] = 0.3 / (2.0 * 0.7);
    assert!((gbar(&cfg, 0).unwrap() - 0.2).abs() < 1e-15);

    let mut single = SystemConfig::reference(0.3, 0);
    single.n = 1;
    single.zeta = vec![vec![1.0]];
    assert!(matches!(gbar(&single, 0), Err(Error::Argument(_))));
}

#[test]
fn gbar_equals_average_over_subsets() {
    let n = 6;
    let cfg = random_zeta_cfg(7, n);
    for k in 0..n {
        let g = gbar(&cfg, k).unwrap();
        for l in 2..=n {
            // Average of g_ki over every size-l subset containing k and every i ≠ k in it.
            let (mut sum, mut count) = (0.0, 0usize);
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize != l || mask & (1 << k) == 0 {
                    continue;
                }
                for i in (0..n).filter(|&i| i != k && mask & (1 << i) != 0) {
                    sum += g_factor(&cfg, k, i).unwrap();
                    count += 1;
                }
            }
            assert!((sum / count as f64 - g).abs() < 1e-14, "k={k} L={l}");
        }
    }
}

#[test]
fn phi_examples() {
    let cfg = SystemConfig::reference(0.4, 25);
    let perfect_single = avg_rate_user(&cfg, &dv(6, &[2]), 2, RateMode::Perfect).unwrap();
    assert_eq!(phi(&cfg, 2, 1).unwrap(), perfect_single);
    for k in 0..6 {
        for l in 1..=6 {
            let r = symmetric_rate(&cfg, l, RateMode::Imperfect, false).unwrap();
            let p = phi(&cfg, k, l).unwrap();
            // φ uses 1 - g while r(L) uses the exact MGF factor; they agree only in form.
            assert!(p >= r * (1.0 - 1e-12) || l == 1);
        }
    }

    // Independent re-derivation for a heterogeneous config.
    let cfg = random_zeta_cfg(21, 5);
    let q = (cfg.nt * cfg.nr - 1) as f64;
    let delta = 2f64.powf(cfg.bits as f64 / q);
    for k in 0..5 {
        let gs: Vec<f64> = (0..5)
            .filter(|&i| i != k)
            .map(|i| {
                let c = cfg.zeta[k][i] * cfg.tau * cfg.d as f64 / cfg.zeta[k][k];
                c / (delta + c)
            })
            .collect();
        let gb = gs.iter().sum::<f64>() / gs.len() as f64;
        let alpha = cfg.power * cfg.zeta[k][k] / cfg.d as f64;
        let want = (1.0 - 3.0 * cfg.theta) * cfg.d as f64 * cfg.rate * (-cfg.sigma2 * cfg.tau / alpha).exp() * (1.0 - gb).powi(2);
        assert!(rel(phi(&cfg, k, 3).unwrap(), want) < 1e-13);
    }
}

#[test]
fn phi_equals_symmetric_form() {
    // Under symmetric ζ, φ_k(L) is r(L) with the MGF factor replaced by (1-g)^{L-1}.
    let cfg = SystemConfig::reference(0.4, 25);
    let g = g_factor(&cfg, 0, 1).unwrap();
    for l in 1..=6 {
        let mu = symmetric_rate(&cfg, l, RateMode::Perfect, false).unwrap();
        for k in 0..6 {
            assert!(rel(phi(&cfg, k, l).unwrap(), mu * (1.0 - g).powi(l as i32 - 1)) < 1e-13);
        }
    }
}

#[test]
fn approx_rate_examples() {
    let cfg = random_zeta_cfg(3, 5);
    let single = dv(5, &[1]);
    let perfect = avg_rate_user(&cfg, &single, 1, RateMode::Perfect).unwrap();
    assert_eq!(approx_rate(&cfg, &single, 1, ApproxOrder::First).unwrap(), perfect);
    assert_eq!(approx_rate(&cfg, &single, 1, ApproxOrder::Second).unwrap(), perfect);

    let sym = SystemConfig::reference(0.5, 20);
    let set = dv(6, &[0, 2, 3, 5]);
    for k in [0, 2, 3, 5] {
        let a = approx_rate(&sym, &set, k, ApproxOrder::First).unwrap();
        let b = approx_rate(&sym, &set, k, ApproxOrder::Second).unwrap();
        assert!(rel(a, b) < 1e-14);
    }
}

#[test]
fn first_order_approximation_accuracy() {
    // All g below 0.1 at ζc = 0.05, B = 40.
    let cfg = SystemConfig::reference(0.05, 40);
    assert!(g_factor(&cfg, 0, 1).unwrap() < 0.1);
    for l in 2..=6 {
        let set = dv(6, &(0..l).collect::<Vec<_>>());
        let exact = avg_rate_user(&cfg, &set, 0, RateMode::Imperfect).unwrap();
        let approx = approx_rate(&cfg, &set, 0, ApproxOrder::First).unwrap();
        assert!(rel(approx, exact) < 0.02, "L={l}: {}", rel(approx, exact));
    }

    // The error grows with g.
    let set = dv(6, &[0, 1, 2, 3]);
    let mut last_err = 0.0;
    let mut last_g = 0.0;
    for cross in [0.02, 0.05, 0.1, 0.2, 0.4, 0.8, 1.6] {
        let cfg = SystemConfig::reference(cross, 30);
        let g = g_factor(&cfg, 0, 1).unwrap();
        let exact = avg_rate_user(&cfg, &set, 0, RateMode::Imperfect).unwrap();
        let err = rel(approx_rate(&cfg, &set, 0, ApproxOrder::First).unwrap(), exact);
        assert!(g > last_g && err > last_err, "ζc={cross}: g={g} err={err}");
        last_g = g;
        last_err = err;
    }
}

#[test]
fn rejects_invalid_configs() {
    let cfg = SystemConfig::reference(0.2, 30).with_theta(1.0 / 6.0);
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let mut cfg = SystemConfig::reference(0.2, 30);
    cfg.zeta[2][3] = 0.0;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let mut cfg = SystemConfig::reference(0.2, 30);
    cfg.d = 8;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    // IA infeasible: 7 + 7 < (7+1)·2
    let mut cfg = SystemConfig::reference(0.2, 30);
    cfg.n = 7;
    cfg.theta = 0.01;
    cfg.zeta = iasched::rate_model::uniform_zeta(7, 1.0, 0.2);
    assert!(matches!(symmetric_f(&cfg), Err(Error::Config(_))));
}

fn arb_symmetric() -> impl Strategy<Value = SystemConfig> {
    (0.05f64..1.5, 0u32..60, 0.2f64..3.0, 0.001f64..0.1).prop_map(|(cross, bits, tau, theta)| {
        SystemConfig::reference(cross, bits).with_tau(tau).with_theta(theta)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perfect_dominates_imperfect(seed in 0u64..1000, mask in 1u64..64, bits in 0u32..60) {
        let mut cfg = random_zeta_cfg(seed, 6);
        cfg.bits = bits;
        let set = DecisionVector::from_mask(6, mask);
        for k in set.active() {
            let p = avg_rate_user(&cfg, &set, k, RateMode::Perfect).unwrap();
            let i = avg_rate_user(&cfg, &set, k, RateMode::Imperfect).unwrap();
            prop_assert!(p >= i && i >= 0.0);
        }
    }

    #[test]
    fn symmetric_rate_strictly_decreasing(cfg in arb_symmetric()) {
        let r = symmetric_profile(&cfg, RateMode::Imperfect).unwrap();
        for w in r.windows(2) {
            prop_assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn symmetric_total_unimodal(cfg in arb_symmetric()) {
        let f = symmetric_f(&cfg).unwrap();
        let base = symmetric_rate(&cfg, 1, RateMode::Perfect, false).unwrap() / (1.0 - cfg.theta);
        let total = |l: f64| l * (1.0 - l * cfg.theta) * base * f.powf(l - 1.0);
        let top = 1.0 / cfg.theta;
        let steps = 4000;
        let h = top / steps as f64;
        let mut changes = 0;
        let mut prev_sign = 0.0;
        for j in 1..steps - 1 {
            let d = total((j + 1) as f64 * h) - total(j as f64 * h);
            // Skip differences lost in rounding near the zero tail.
            if d.abs() <= 1e-12 * total(j as f64 * h).abs().max(1e-300) {
                continue;
            }
            let s = d.signum();
            if prev_sign != 0.0 && s != prev_sign {
                changes += 1;
            }
            prev_sign = s;
        }
        prop_assert_eq!(changes, 1);
    }

    #[test]
    fn symmetric_rate_independent_of_active_identity(cfg in arb_symmetric(), a in 1u64..64, b in 1u64..64) {
        let da = DecisionVector::from_mask(6, a);
        let db = DecisionVector::from_mask(6, b);
        prop_assume!(da.cardinality() == db.cardinality());
        let ra = avg_rate_user(&cfg, &da, da.active()[0], RateMode::Imperfect).unwrap();
        let rb = avg_rate_user(&cfg, &db, *db.active().last().unwrap(), RateMode::Imperfect).unwrap();
        prop_assert_eq!(ra, rb);
    }
}
