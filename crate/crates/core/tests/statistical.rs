use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};

use tcpu_core::datagen::{derive_seed, gen_labeled};
use tcpu_core::{
    embedding_stats, estimate_mmd_pm, gen_synthetic, km2_ls_target_prior, km2_prior, KernelConfig,
    KmConfig, Sample, SampleTag, SyntheticConfig,
};

// two-sided acceptance region at level `alpha` for the mean of coordinate averages
fn mean_within(sample: &Sample, expected: f64, per_point_var: f64, alpha: f64) -> (bool, f64, f64) {
    let n = sample.len() as f64;
    let p = sample.dim() as f64;
    let mean = sample
        .rows()
        .map(|r| r.iter().sum::<f64>() / p)
        .sum::<f64>()
        / n;
    let z = Normal::new(0.0, 1.0)
        .unwrap()
        .inverse_cdf(1.0 - alpha / 2.0);
    let half = z * (per_point_var / n).sqrt();
    ((mean - expected).abs() <= half, mean, half)
}

#[test]
fn synthetic_samples_have_the_right_mixture_means() {
    for (seed, pi, pi_prime) in [(1u64, 0.2, 0.8), (2, 0.5, 0.3), (3, 0.1, 0.6)] {
        let cfg = SyntheticConfig {
            pi,
            pi_prime,
            seed,
            ..SyntheticConfig::default()
        };
        let d = gen_synthetic(&cfg).unwrap();
        let p = cfg.p as f64;
        // a coordinate average of N(label·1, I) has variance 1/p + prior(1 − prior)
        let checks = [
            (&d.positives, 1.0, 1.0 / p),
            (&d.unlabeled, pi, 1.0 / p + pi * (1.0 - pi)),
            (&d.target, pi_prime, 1.0 / p + pi_prime * (1.0 - pi_prime)),
        ];
        for (s, mu, var) in checks {
            let (ok, mean, half) = mean_within(s, mu, var, 1e-4);
            assert!(ok, "seed {seed}: mean {mean} vs {mu} ± {half}");
        }
    }
}

#[test]
fn labeled_counts_are_binomial() {
    let n = 5000;
    for (seed, prior) in [(10u64, 0.1), (11, 0.35), (12, 0.8)] {
        let data = gen_labeled(3, n, prior, &[1.0; 3], seed).unwrap();
        let k = data.positive_indices().len() as u64;
        let b = Binomial::new(prior, n as u64).unwrap();
        let lo = b.inverse_cdf(5e-5);
        let hi = b.inverse_cdf(1.0 - 5e-5);
        assert!(
            lo <= k && k <= hi,
            "prior {prior}: {k} outside [{lo}, {hi}]"
        );
    }
}

#[test]
fn labeling_frequency_one_leaves_no_unlabeled() {
    let d = gen_synthetic(&SyntheticConfig {
        c: 1.0,
        n_source: 500,
        n_target: 10,
        ..SyntheticConfig::default()
    })
    .unwrap();
    assert!(d.unlabeled.is_empty());
    assert_eq!(d.positives.len(), 500);
}

#[test]
fn class_distance_matches_gaussian_closed_form() {
    // E exp(−τ‖X − Y‖²) for X ~ N(μ₁, I), Y ~ N(μ₂, I) in p dimensions
    let p = 10;
    let tau: f64 = 0.1;
    let a_sq = p as f64;
    let scale = (1.0 + 4.0 * tau).powf(-(p as f64) / 2.0);
    let mmd_sq = 2.0 * scale * (1.0 - (-tau * a_sq / (1.0 + 4.0 * tau)).exp());
    let exact = mmd_sq.sqrt();
    assert!((exact - 0.43568).abs() < 1e-4);

    let k = KernelConfig::gaussian(tau).unwrap();
    let mut errs = Vec::new();
    for s in 0..3 {
        let cfg = SyntheticConfig {
            pi: 0.3,
            c: 0.3,
            n_source: 3000,
            n_target: 10,
            seed: derive_seed(77, s),
            ..SyntheticConfig::default()
        };
        let d = gen_synthetic(&cfg).unwrap();
        let stats = embedding_stats(&k, &d.unlabeled, &d.positives, &d.target).unwrap();
        errs.push(estimate_mmd_pm(&stats, cfg.pi).unwrap() - exact);
    }
    for e in &errs {
        assert!(e.abs() < 0.03, "{errs:?}");
    }
}

#[test]
fn km2_recovers_source_prior_on_default_instance() {
    let k = KernelConfig::gaussian_default(10).unwrap();
    let km = KmConfig::default();
    let mut close = 0;
    let mut estimates = Vec::new();
    for s in 0..20 {
        let cfg = SyntheticConfig {
            pi: 0.2,
            seed: derive_seed(4242, s),
            ..SyntheticConfig::default()
        };
        let d = gen_synthetic(&cfg).unwrap();
        let est = km2_prior(&k, &km, &d.unlabeled, &d.positives).unwrap();
        estimates.push(est.pi);
        if (est.pi - 0.2).abs() <= 0.1 {
            close += 1;
        }
    }
    assert!(close >= 16, "{estimates:?}");
}

#[test]
fn km2_saturates_when_mixture_is_all_positive() {
    let k = KernelConfig::gaussian_default(10).unwrap();
    let km = KmConfig::default();
    let pos = gen_labeled(10, 1000, 1.0, &[1.0; 10], 5).unwrap().features;
    let unl = gen_labeled(10, 2000, 1.0, &[1.0; 10], 6).unwrap().features;
    let est = km2_prior(&k, &km, &unl, &pos).unwrap();
    assert!(est.pi >= 0.9 - 1e-12, "{}", est.pi);

    let same =
        km2_ls_target_prior(&k, &km, &pos.clone().with_tag(SampleTag::Target), &pos).unwrap();
    assert!(same.pi >= 0.9 - 1e-12);
    assert!(same.low_confidence);
}

#[test]
fn hull_distance_grows_past_the_true_lambda() {
    let k = KernelConfig::gaussian_default(10).unwrap();
    let km = KmConfig::default();
    let cfg = SyntheticConfig {
        pi: 0.2,
        seed: 99,
        ..SyntheticConfig::default()
    };
    let d = gen_synthetic(&cfg).unwrap();
    let est = km2_prior(&k, &km, &d.unlabeled, &d.positives).unwrap();
    let c = &est.curve;
    assert!(c.distances.iter().all(|&x| x >= 0.0));
    let start = c.lambdas.iter().position(|&l| l >= 1.5).unwrap();
    for w in c.distances[start..].windows(2) {
        assert!(w[1] >= w[0] - 1e-4, "{} -> {}", w[0], w[1]);
    }
}
