//! `tcpu`: target class prior estimation from PU source data.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use tcpu_core::bounds::{check_delta, empirical_bound_from_norm, population_min_n, DEFAULT_DELTA};
use tcpu_core::datagen::{load_features_csv, standardize, write_features_csv};
use tcpu_core::harness::{summary_json, write_results_csv, ExperimentOutput};
use tcpu_core::kernel::median_heuristic_tau;
use tcpu_core::{
    embedding_stats, empirical_bound, gen_synthetic, km2_prior, population_bound, run_experiment,
    squared_norm_diff, tcpu_closed_form, BoundReport, Error, ExperimentConfig, KernelConfig,
    KmConfig, PiSource, Sample, SampleTag, SyntheticConfig,
};

#[derive(Parser)]
#[command(
    name = "tcpu",
    version,
    about = "Target class prior estimation under label shift from PU data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the target prior from positives, unlabeled and target CSV files.
    Estimate(EstimateArgs),
    /// Evaluate the confidence bound for given sample sizes.
    Bound(BoundArgs),
    /// Draw a synthetic PU dataset and write it as three CSV files.
    Simulate(SimulateArgs),
    /// Run a repeated experiment from a JSON config.
    Bench(BenchArgs),
}

#[derive(Args)]
struct KernelArgs {
    /// Gaussian scale τ in exp(-τ‖x−y‖²); defaults to 1/p.
    #[arg(long, conflicts_with = "median_heuristic")]
    tau: Option<f64>,
    /// Set τ from the median pairwise squared distance of the pooled data.
    #[arg(long)]
    median_heuristic: bool,
    /// Standardize features with pooled mean and standard deviation first.
    #[arg(long)]
    standardize: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    positives: PathBuf,
    #[arg(long)]
    unlabeled: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Known source prior.
    #[arg(
        long,
        required_unless_present = "estimate_pi",
        conflicts_with = "estimate_pi"
    )]
    pi: Option<f64>,
    /// Estimate the source prior with KM2 instead.
    #[arg(long)]
    estimate_pi: bool,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Seed for subsampling in KM2 and the median heuristic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n_prime: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// ‖Φ(P̂) − Φ(P̂⁺)‖; computed from --positives/--unlabeled when absent.
    #[arg(long)]
    denominator: Option<f64>,
    #[arg(long)]
    positives: Option<PathBuf>,
    #[arg(long)]
    unlabeled: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Kernel supremum M.
    #[arg(long, default_value_t = 1.0)]
    sup_bound: f64,
    /// Population mode: source prior.
    #[arg(long, requires_all = ["alpha", "mmd_pm"])]
    pi: Option<f64>,
    #[arg(long, requires = "pi")]
    alpha: Option<f64>,
    /// Population mode: ‖Φ(P₋) − Φ(P₊)‖.
    #[arg(long, requires = "pi")]
    mmd_pm: Option<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// Directory for positives.csv, unlabeled.csv and target.csv.
    #[arg(long)]
    out_dir: PathBuf,
    /// JSON file with synthetic settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    pi: Option<f64>,
    #[arg(long)]
    pi_prime: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    n_source: Option<usize>,
    #[arg(long)]
    n_target: Option<usize>,
    /// Mean shift of target positives.
    #[arg(long, allow_hyphen_values = true)]
    g: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment config (JSON).
    config: PathBuf,
    /// Results CSV; overrides the config's output_path.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Bound(a) => bound(a),
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::DegenerateEmbedding { .. } | Error::NumericalInconsistency { .. } => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> tcpu_core::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load_three(
    pos: &Path,
    u: &Path,
    tgt: &Path,
    standardized: bool,
) -> tcpu_core::Result<(Sample, Sample, Sample)> {
    let pos = load_features_csv(pos, SampleTag::SourcePositive)?;
    let u = load_features_csv(u, SampleTag::SourceUnlabeled)?;
    let tgt = load_features_csv(tgt, SampleTag::Target)?;
    if !standardized {
        return Ok((pos, u, tgt));
    }
    let mut out = standardize(&[&pos, &u, &tgt])?.into_iter();
    let (Some(pos), Some(u), Some(tgt)) = (out.next(), out.next(), out.next()) else {
        unreachable!()
    };
    Ok((pos, u, tgt))
}

fn kernel_for(
    args: &KernelArgs,
    samples: &[&Sample],
    seed: u64,
) -> tcpu_core::Result<KernelConfig> {
    if let Some(tau) = args.tau {
        KernelConfig::gaussian(tau)
    } else if args.median_heuristic {
        KernelConfig::gaussian(median_heuristic_tau(samples, 1000, seed)?)
    } else {
        KernelConfig::gaussian_default(samples[0].dim())
    }
}

fn estimate(a: EstimateArgs) -> tcpu_core::Result<()> {
    check_delta(a.delta)?;
    let start = Instant::now();
    let (pos, u, tgt) = load_three(&a.positives, &a.unlabeled, &a.target, a.kernel.standardize)?;
    let kernel = kernel_for(&a.kernel, &[&u, &pos, &tgt], a.seed)?;
    let stats = embedding_stats(&kernel, &u, &pos, &tgt)?;
    let (pi, source, km2) = match a.pi {
        Some(pi) => (pi, PiSource::Known, None),
        None => {
            let km = KmConfig {
                seed: a.seed,
                ..KmConfig::default()
            };
            let est = km2_prior(&kernel, &km, &u, &pos)
                .map_err(|e| Error::PluginFailure(e.to_string()))?;
            (
                est.pi,
                PiSource::Km2Plugin,
                Some((est.lambda_hat, est.low_confidence)),
            )
        }
    };
    let estimate = tcpu_closed_form(&stats, pi, source)?;
    let report = empirical_bound(&stats, &kernel, a.delta)?;
    let elapsed = start.elapsed().as_secs_f64();

    if a.json {
        return print_json(&json!({
            "estimate_raw": estimate.raw,
            "estimate_clipped": estimate.clipped,
            "pi_used": estimate.pi_used,
            "pi_source": estimate.pi_source,
            "km2_lambda_hat": km2.map(|k| k.0),
            "km2_low_confidence": km2.map(|k| k.1),
            "denominator": estimate.denominator,
            "tau": kernel.tau,
            "n": stats.n,
            "m": stats.m,
            "n_prime": stats.n_prime,
            "bound": report,
            "elapsed_s": elapsed,
        }));
    }
    println!(
        "target prior estimate: {:.6} (raw {:.6})",
        estimate.clipped, estimate.raw
    );
    let source = match source {
        PiSource::Known => "supplied".to_owned(),
        PiSource::Km2Plugin => {
            let (lam, low) = km2.unwrap_or_default();
            format!(
                "KM2, lambda {lam:.2}{}",
                if low { ", low confidence" } else { "" }
            )
        }
    };
    println!("source prior used:     {:.6} ({source})", estimate.pi_used);
    println!(
        "sizes n, m, n':        {}, {}, {}",
        stats.n, stats.m, stats.n_prime
    );
    println!("tau:                   {}", kernel.tau);
    println!("embedding distance:    {:.6}", estimate.denominator);
    print_bound_lines(&report);
    println!("elapsed:               {elapsed:.3} s");
    Ok(())
}

fn print_bound_lines(r: &BoundReport) {
    println!(
        "error bound:           {:.6} (N = {}, M = {}, delta = {})",
        r.bound_value, r.n_min, r.sup_bound, r.delta
    );
    println!("coverage:              {}", fmt_coverage(r.coverage));
}

fn fmt_coverage(c: f64) -> String {
    // 1 − 3δ picks up rounding noise, e.g. 0.85000000000000009
    format!("{}", (c * 1e12).round() / 1e12)
}

fn bound(a: BoundArgs) -> tcpu_core::Result<()> {
    check_delta(a.delta)?;
    let files = (a.positives.as_ref(), a.unlabeled.as_ref());
    let (norm, sizes) = match (a.denominator, files) {
        (Some(d), _) => (d, [a.n, a.m, a.n_prime]),
        (None, (Some(pos), Some(u))) => {
            let pos = load_features_csv(pos, SampleTag::SourcePositive)?;
            let u = load_features_csv(u, SampleTag::SourceUnlabeled)?;
            let tgt = a
                .target
                .as_ref()
                .map(|t| load_features_csv(t, SampleTag::Target))
                .transpose()?;
            let (pos, u) = if a.kernel.standardize {
                let mut v = standardize(&[&pos, &u])?;
                let u = v.pop().unwrap();
                (v.pop().unwrap(), u)
            } else {
                (pos, u)
            };
            let kernel = kernel_for(&a.kernel, &[&u, &pos], 0)?;
            // the target only contributes its size
            let stats = embedding_stats(&kernel, &u, &pos, &pos)?;
            let norm = squared_norm_diff(&stats)?.sqrt();
            let n_prime = a.n_prime.or(tgt.map(|t| t.len()));
            (
                norm,
                [a.n.or(Some(u.len())), a.m.or(Some(pos.len())), n_prime],
            )
        }
        _ => {
            return Err(Error::InvalidInput(
                "either --denominator or both --positives and --unlabeled are required".into(),
            ))
        }
    };
    let n_min = sizes.iter().flatten().copied().min().ok_or_else(|| {
        Error::InvalidInput("at least one of --n, --m, --n-prime is required".into())
    })?;

    let report = empirical_bound_from_norm(norm, n_min, a.sup_bound, a.delta)?;
    let population = match (a.pi, a.alpha, a.mmd_pm) {
        (Some(pi), Some(alpha), Some(mmd)) => {
            let required = population_min_n(pi, alpha, a.delta, a.sup_bound, mmd)?;
            Some((
                required,
                population_bound(pi, alpha, a.delta, a.sup_bound, n_min, mmd),
            ))
        }
        _ => None,
    };

    if a.json {
        let pop = population.as_ref().map(|(required, res)| {
            json!({
                "required_n": required,
                "bound": res.as_ref().ok(),
                "error": res.as_ref().err().map(|e| e.to_string()),
            })
        });
        print_json(&json!({ "empirical": report, "population": pop }))?;
    } else {
        print_bound_lines(&report);
        if let Some((required, res)) = &population {
            println!("population minimal N:  {required}");
            match res {
                Ok(r) => println!("population bound:      {:.6}", r.bound_value),
                Err(e) => println!("population bound:      unavailable ({e})"),
            }
        }
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> tcpu_core::Result<()> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str(&text)?
        }
        None => SyntheticConfig::default(),
    };
    if let Some(v) = a.p {
        cfg.p = v;
    }
    if let Some(v) = a.pi {
        cfg.pi = v;
    }
    if let Some(v) = a.pi_prime {
        cfg.pi_prime = v;
    }
    if let Some(v) = a.c {
        cfg.c = v;
    }
    if let Some(v) = a.n_source {
        cfg.n_source = v;
    }
    if let Some(v) = a.n_target {
        cfg.n_target = v;
    }
    if let Some(v) = a.g {
        cfg.disturbance_g = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let data = gen_synthetic(&cfg)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|source| Error::Io {
        path: a.out_dir.clone(),
        source,
    })?;
    let files = [
        ("positives.csv", &data.positives),
        ("unlabeled.csv", &data.unlabeled),
        ("target.csv", &data.target),
    ];
    for (name, sample) in files {
        write_features_csv(a.out_dir.join(name), sample)?;
    }
    if a.json {
        print_json(&json!({
            "out_dir": a.out_dir,
            "config": cfg,
            "positives": data.positives.len(),
            "unlabeled": data.unlabeled.len(),
            "target": data.target.len(),
        }))
    } else {
        println!(
            "wrote {} positives, {} unlabeled, {} target rows to {}",
            data.positives.len(),
            data.unlabeled.len(),
            data.target.len(),
            a.out_dir.display()
        );
        Ok(())
    }
}

fn bench(a: BenchArgs) -> tcpu_core::Result<()> {
    let mut cfg = ExperimentConfig::from_json_file(&a.config)?;
    if let Some(out) = a.output {
        cfg.output_path = Some(out);
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(reps) = a.repetitions {
        cfg.repetitions = reps;
    }
    let out_path = cfg.output_path.clone().ok_or_else(|| {
        Error::InvalidInput("no output path: set output_path in the config or pass --output".into())
    })?;
    if let Some(threads) = a.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }

    let output = run_experiment(&cfg)?;
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    let file = std::fs::File::create(&out_path).map_err(io_err(&out_path))?;
    write_results_csv(std::io::BufWriter::new(file), &output.results)?;
    let summary = summary_json(&cfg, &output)?;
    let summary_path = out_path.with_extension("json");
    std::fs::write(&summary_path, &summary).map_err(io_err(&summary_path))?;

    if a.json {
        println!("{summary}");
    } else {
        print_summary(&output, &out_path, &summary_path);
    }
    Ok(())
}

fn print_summary(output: &ExperimentOutput, csv: &Path, json: &Path) {
    println!(
        "{:<16} {:>12} {:>6} {:>9} {:>12} {:>10}",
        "method", "sweep", "runs", "failures", "mean |err|", "stderr"
    );
    for row in &output.summary {
        let f = |v: Option<f64>| v.map_or("-".to_owned(), |x| format!("{x:.4}"));
        println!(
            "{:<16} {:>12} {:>6} {:>9} {:>12} {:>10}",
            row.method.name(),
            row.sweep_value.map_or("-".to_owned(), |v| v.to_string()),
            row.runs,
            row.failures,
            f(row.mean_abs_error),
            f(row.stderr_abs_error)
        );
    }
    println!("results: {}", csv.display());
    println!("summary: {}", json.display());
}
