//! One-off calibration of the KM2 slope threshold ν.
//!
//! For each source prior π ∈ {0.1, …, 0.5} and a handful of seeds, draws the
//! default synthetic PU source (p = 10, a = 1, c = 0.5, n = 2000), computes the
//! hull-distance curve once, and scores every candidate ν by the mean
//! absolute error of the resulting π̂. Prints the table and the best ν.
//!
//! Run with `cargo run --release -p tcpu-bench --example calibrate_slope [seeds]`.

use tcpu_core::baseline_km::{select_lambda, HullProblem, KmConfig};
use tcpu_core::datagen::derive_seed;
use tcpu_core::{gen_synthetic, KernelConfig, SyntheticConfig};

fn main() {
    let seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(10);
    let priors = [0.1, 0.2, 0.3, 0.4, 0.5];
    let candidates: Vec<f64> = (1..=40).map(|k| k as f64 * 0.01).collect();
    let km = KmConfig::default();
    let kernel = KernelConfig::gaussian_default(10).unwrap();

    let mut curves = Vec::new();
    for &pi in &priors {
        for s in 0..seeds {
            let cfg = SyntheticConfig {
                pi,
                seed: derive_seed(1000, s),
                ..SyntheticConfig::default()
            };
            let data = gen_synthetic(&cfg).unwrap();
            let problem = HullProblem::new(&kernel, &km, &data.unlabeled, &data.positives).unwrap();
            let curve = problem.distance_curve(&km);
            let unconverged = curve.weights_converged.iter().filter(|c| !**c).count();
            eprintln!("pi={pi} seed={s} unconverged={unconverged}");
            curves.push((pi, curve));
        }
    }

    let mut best = (f64::NAN, f64::INFINITY);
    println!(
        "nu,mean_abs_error,{}",
        priors.map(|p| format!("err_pi_{p}")).join(",")
    );
    for &nu in &candidates {
        let mut per_prior = vec![0.0; priors.len()];
        for (pi, curve) in &curves {
            let (lam, _) = select_lambda(curve, nu);
            let est = (1.0 - 1.0 / lam).clamp(0.0, 1.0);
            let k = priors.iter().position(|p| p == pi).unwrap();
            per_prior[k] += (est - pi).abs() / seeds as f64;
        }
        let mean = per_prior.iter().sum::<f64>() / priors.len() as f64;
        println!(
            "{nu:.2},{mean:.4},{}",
            per_prior
                .iter()
                .map(|e| format!("{e:.4}"))
                .collect::<Vec<_>>()
                .join(",")
        );
        if mean < best.1 {
            best = (nu, mean);
        }
    }
    println!("best nu = {:.2} (mean abs error {:.4})", best.0, best.1);
}
