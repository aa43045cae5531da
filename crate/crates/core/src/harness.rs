//! Repeated-experiment runner and result emission.
//!
//! Each repetition draws fresh data from a seed derived from the experiment
//! seed and the repetition index, runs every requested method on it, and
//! records one [`RunResult`] per method. Repetitions run in parallel; results
//! are sorted by (sweep point, method, repetition) before they are returned,
//! so output is independent of scheduling.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline_km::{km2_ls_target_prior, km2_prior, KmConfig};
use crate::bounds::{check_delta, empirical_bound, DEFAULT_DELTA};
use crate::datagen::{
    derive_seed, downsample_to_prior, gen_synthetic, load_csv, make_pu_sample, standardize,
    LabeledDataset, PUDataset, SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::estimator::{tcpu_closed_form, PiSource};
use crate::kernel::{embedding_stats, median_heuristic_tau, KernelConfig, SampleTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TcpuKnownPi,
    TcpuPluginPi,
    Km2Ls,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::TcpuKnownPi => "tcpu_known_pi",
            Method::TcpuPluginPi => "tcpu_plugin_pi",
            Method::Km2Ls => "km2_ls",
        }
    }
}

/// Labeled CSV data; split into source and target, downsampled to the
/// requested priors, then PU-sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvScenario {
    pub source_path: PathBuf,
    /// When absent, the source file is split in half at random each repetition.
    #[serde(default)]
    pub target_path: Option<PathBuf>,
    pub label_column: String,
    pub positive_value: String,
    pub pi: f64,
    pub pi_prime: f64,
    pub c: f64,
    /// PU sample size; the largest size the downsampled source supports when absent.
    #[serde(default)]
    pub n_source: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Synthetic(SyntheticConfig),
    Csv(CsvScenario),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Pi,
    PiPrime,
    DisturbanceG,
    C,
    NSource,
    NTarget,
    /// The prior handed to `tcpu_known_pi`, leaving the data untouched.
    SuppliedPi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

fn default_methods() -> Vec<Method> {
    vec![Method::TcpuKnownPi]
}

fn default_repetitions() -> usize {
    20
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    /// Results CSV; the summary goes next to it with a `.json` extension.
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    /// Fixed Gaussian scale; `1/p` when absent.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub median_heuristic: bool,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub km: KmConfig,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// Wall-clock timings make the CSV run-dependent, so they are opt-in.
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn synthetic(
        cfg: SyntheticConfig,
        methods: Vec<Method>,
        repetitions: usize,
        seed: u64,
    ) -> Self {
        ExperimentConfig {
            scenario: Scenario::Synthetic(cfg),
            methods,
            repetitions,
            delta: DEFAULT_DELTA,
            seed,
            output_path: None,
            tau: None,
            median_heuristic: false,
            standardize: false,
            km: KmConfig::default(),
            sweep: None,
            record_timing: false,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        check_delta(self.delta)?;
        if let Some(tau) = self.tau {
            KernelConfig::gaussian(tau)?;
        }
        self.km.validate()?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::invalid("sweep needs at least one value"));
            }
            if matches!(self.scenario, Scenario::Csv(_))
                && matches!(
                    sweep.parameter,
                    SweepParameter::DisturbanceG | SweepParameter::NTarget
                )
            {
                return Err(Error::invalid(
                    "this sweep parameter applies to synthetic data only",
                ));
            }
        }
        for point in self.sweep_points() {
            self.scenario_at(point)?;
        }
        Ok(())
    }

    fn sweep_points(&self) -> Vec<Option<f64>> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| Some(v)).collect(),
            None => vec![None],
        }
    }

    /// The scenario with the sweep value applied.
    fn scenario_at(&self, value: Option<f64>) -> Result<Scenario> {
        let mut scenario = self.scenario.clone();
        let (Some(sweep), Some(v)) = (&self.sweep, value) else {
            if let Scenario::Synthetic(s) = &scenario {
                s.validate()?;
            }
            return Ok(scenario);
        };
        let as_size = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::invalid(format!(
                    "sample size sweep value {v} is not a positive integer"
                )))
            }
        };
        match &mut scenario {
            Scenario::Synthetic(s) => {
                match sweep.parameter {
                    SweepParameter::Pi => s.pi = v,
                    SweepParameter::PiPrime => s.pi_prime = v,
                    SweepParameter::DisturbanceG => s.disturbance_g = v,
                    SweepParameter::C => s.c = v,
                    SweepParameter::NSource => s.n_source = as_size(v)?,
                    SweepParameter::NTarget => s.n_target = as_size(v)?,
                    SweepParameter::SuppliedPi => crate::estimator::check_pi(v)?,
                }
                s.validate()?;
            }
            Scenario::Csv(s) => match sweep.parameter {
                SweepParameter::Pi => s.pi = v,
                SweepParameter::PiPrime => s.pi_prime = v,
                SweepParameter::C => s.c = v,
                SweepParameter::NSource => s.n_source = Some(as_size(v)?),
                SweepParameter::SuppliedPi => crate::estimator::check_pi(v)?,
                SweepParameter::DisturbanceG | SweepParameter::NTarget => {
                    return Err(Error::invalid(
                        "this sweep parameter applies to synthetic data only",
                    ))
                }
            },
        }
        Ok(scenario)
    }
}

/// One method's outcome on one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub sweep_value: Option<f64>,
    pub method: Method,
    pub rep_index: usize,
    /// Source prior handed to the method (the true one for KM2-LS).
    pub pi: f64,
    pub pi_prime_true: f64,
    pub estimate_raw: Option<f64>,
    pub estimate_clipped: Option<f64>,
    pub abs_error: Option<f64>,
    pub bound_value: Option<f64>,
    pub elapsed_seconds: Option<f64>,
    pub error_msg: Option<String>,
}

/// Mean ± standard error of the mean of `abs_error` for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sweep_value: Option<f64>,
    pub method: Method,
    pub runs: usize,
    pub failures: usize,
    pub mean_abs_error: Option<f64>,
    pub stderr_abs_error: Option<f64>,
    pub mean_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub results: Vec<RunResult>,
    pub summary: Vec<SummaryRow>,
}

struct RepData {
    data: PUDataset,
    pi: f64,
    pi_prime: f64,
}

fn csv_rep_data(
    s: &CsvScenario,
    source: &LabeledDataset,
    target: Option<&LabeledDataset>,
    seed: u64,
) -> Result<RepData> {
    let (src, tgt) = match target {
        Some(t) => (source.clone(), t.clone()),
        None => {
            let mut idx: Vec<usize> = (0..source.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 10)));
            let half = source.len() / 2;
            let (a, b) = idx.split_at(half);
            let (mut a, mut b) = (a.to_vec(), b.to_vec());
            a.sort_unstable();
            b.sort_unstable();
            (source.select(&a), source.select(&b))
        }
    };
    let src = downsample_to_prior(&src, s.pi, derive_seed(seed, 11))?;
    let tgt = downsample_to_prior(&tgt, s.pi_prime, derive_seed(seed, 12))?;
    let pi = src.positive_fraction();
    let n = match s.n_source {
        Some(n) => n,
        None => {
            let a = crate::datagen::scaling_factor(pi, s.c)?;
            let by_pos = src.positive_indices().len() as f64 / (a * s.c * pi);
            let by_rows = if s.c < 1.0 {
                src.len() as f64 / (a * (1.0 - s.c))
            } else {
                f64::INFINITY
            };
            by_pos.min(by_rows).floor() as usize
        }
    };
    let (positives, unlabeled) = make_pu_sample(&src, pi, s.c, n, derive_seed(seed, 13))?;
    let target = tgt.features.clone().with_tag(SampleTag::Target);
    Ok(RepData {
        pi_prime: tgt.positive_fraction(),
        pi,
        data: PUDataset {
            positives,
            unlabeled,
            target,
            true_pi: Some(pi),
            true_pi_prime: None,
        },
    })
}

struct Loaded {
    source: LabeledDataset,
    target: Option<LabeledDataset>,
}

fn rep_data(scenario: &Scenario, loaded: Option<&Loaded>, seed: u64) -> Result<RepData> {
    match scenario {
        Scenario::Synthetic(s) => {
            let cfg = SyntheticConfig { seed, ..s.clone() };
            Ok(RepData {
                data: gen_synthetic(&cfg)?,
                pi: s.pi,
                pi_prime: s.pi_prime,
            })
        }
        Scenario::Csv(s) => {
            let loaded = loaded.ok_or_else(|| Error::invalid("csv data not loaded"))?;
            csv_rep_data(s, &loaded.source, loaded.target.as_ref(), seed)
        }
    }
}

fn kernel_for(cfg: &ExperimentConfig, d: &PUDataset, seed: u64) -> Result<KernelConfig> {
    if let Some(tau) = cfg.tau {
        return KernelConfig::gaussian(tau);
    }
    if cfg.median_heuristic {
        let tau = median_heuristic_tau(&[&d.unlabeled, &d.positives, &d.target], 1000, seed)?;
        return KernelConfig::gaussian(tau);
    }
    KernelConfig::gaussian_default(d.target.dim())
}

fn failed(base: &RunResult, err: &Error) -> RunResult {
    RunResult {
        error_msg: Some(err.to_string()),
        ..base.clone()
    }
}

fn run_rep(
    cfg: &ExperimentConfig,
    scenario: &Scenario,
    loaded: Option<&Loaded>,
    sweep_value: Option<f64>,
    rep: usize,
) -> Vec<RunResult> {
    let seed = derive_seed(cfg.seed, rep as u64);
    let supplied_pi = match (&cfg.sweep, sweep_value) {
        (Some(s), Some(v)) if s.parameter == SweepParameter::SuppliedPi => Some(v),
        _ => None,
    };
    let prepared = rep_data(scenario, loaded, seed).and_then(|r| {
        let data = if cfg.standardize {
            let z = standardize(&[&r.data.unlabeled, &r.data.positives, &r.data.target])?;
            let mut it = z.into_iter();
            PUDataset {
                unlabeled: it.next().unwrap_or(r.data.unlabeled),
                positives: it.next().unwrap_or(r.data.positives),
                target: it.next().unwrap_or(r.data.target),
                ..r.data
            }
        } else {
            r.data
        };
        let kernel = kernel_for(cfg, &data, seed)?;
        Ok((RepData { data, ..r }, kernel))
    });

    cfg.methods
        .iter()
        .map(|&method| {
            let mut base = RunResult {
                sweep_value,
                method,
                rep_index: rep,
                pi: f64::NAN,
                pi_prime_true: f64::NAN,
                estimate_raw: None,
                estimate_clipped: None,
                abs_error: None,
                bound_value: None,
                elapsed_seconds: None,
                error_msg: None,
            };
            let (rep_data, kernel) = match &prepared {
                Ok(p) => p,
                Err(e) => return failed(&base, e),
            };
            base.pi = rep_data.pi;
            base.pi_prime_true = rep_data.pi_prime;
            let d = &rep_data.data;
            let km = KmConfig {
                seed: derive_seed(seed, 20 + method as u64),
                ..cfg.km.clone()
            };
            let start = Instant::now();
            let outcome: Result<(f64, f64, Option<f64>, f64)> = (|| match method {
                Method::TcpuKnownPi | Method::TcpuPluginPi => {
                    let stats = embedding_stats(kernel, &d.unlabeled, &d.positives, &d.target)?;
                    let (pi, source) = if method == Method::TcpuKnownPi {
                        (supplied_pi.unwrap_or(rep_data.pi), PiSource::Known)
                    } else {
                        let est = km2_prior(kernel, &km, &d.unlabeled, &d.positives)
                            .map_err(|e| Error::PluginFailure(e.to_string()))?;
                        (est.pi, PiSource::Km2Plugin)
                    };
                    let est = tcpu_closed_form(&stats, pi, source)?;
                    let bound = empirical_bound(&stats, kernel, cfg.delta)?;
                    Ok((est.raw, est.clipped, Some(bound.bound_value), pi))
                }
                Method::Km2Ls => {
                    let est = km2_ls_target_prior(kernel, &km, &d.target, &d.positives)?;
                    Ok((est.pi, est.pi, None, rep_data.pi))
                }
            })();
            let elapsed = start.elapsed().as_secs_f64();
            match outcome {
                Ok((raw, clipped, bound, pi)) => RunResult {
                    pi,
                    estimate_raw: Some(raw),
                    estimate_clipped: Some(clipped),
                    abs_error: Some((rep_data.pi_prime - raw).abs()),
                    bound_value: bound,
                    elapsed_seconds: cfg.record_timing.then_some(elapsed),
                    ..base
                },
                Err(e) => failed(&base, &e),
            }
        })
        .collect()
}

fn load_scenario(scenario: &Scenario) -> Result<Option<Loaded>> {
    match scenario {
        Scenario::Synthetic(_) => Ok(None),
        Scenario::Csv(s) => Ok(Some(Loaded {
            source: load_csv(&s.source_path, &s.label_column, &s.positive_value)?,
            target: s
                .target_path
                .as_ref()
                .map(|p| load_csv(p, &s.label_column, &s.positive_value))
                .transpose()?,
        })),
    }
}

/// Runs every (sweep point, repetition) pair and summarizes per method.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let loaded = load_scenario(&cfg.scenario)?;
    let points = cfg.sweep_points();
    let scenarios: Vec<Scenario> = points
        .iter()
        .map(|&v| cfg.scenario_at(v))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|s| (0..cfg.repetitions).map(move |r| (s, r)))
        .collect();
    let mut rows: Vec<(usize, RunResult)> = jobs
        .par_iter()
        .flat_map_iter(|&(s, r)| {
            run_rep(cfg, &scenarios[s], loaded.as_ref(), points[s], r)
                .into_iter()
                .map(move |res| (s, res))
        })
        .collect();
    rows.sort_by_key(|(s, r)| (*s, r.method, r.rep_index));

    let mut summary = Vec::new();
    for (s, &point) in points.iter().enumerate() {
        let mut methods = cfg.methods.clone();
        methods.sort();
        methods.dedup();
        for method in methods {
            let subset: Vec<&RunResult> = rows
                .iter()
                .filter(|(si, r)| *si == s && r.method == method)
                .map(|(_, r)| r)
                .collect();
            summary.push(summarize(point, method, &subset));
        }
    }
    Ok(ExperimentOutput {
        results: rows.into_iter().map(|(_, r)| r).collect(),
        summary,
    })
}

fn summarize(sweep_value: Option<f64>, method: Method, rows: &[&RunResult]) -> SummaryRow {
    let errors: Vec<f64> = rows.iter().filter_map(|r| r.abs_error).collect();
    let estimates: Vec<f64> = rows.iter().filter_map(|r| r.estimate_raw).collect();
    let k = errors.len();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let mean_err = mean(&errors);
    let stderr = mean_err.map(|m| {
        if k < 2 {
            0.0
        } else {
            let var = errors.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        }
    });
    SummaryRow {
        sweep_value,
        method,
        runs: rows.len(),
        failures: rows.len() - k,
        mean_abs_error: mean_err,
        stderr_abs_error: stderr,
        mean_estimate: mean(&estimates),
    }
}

pub const CSV_COLUMNS: [&str; 11] = [
    "method",
    "rep",
    "pi",
    "pi_prime",
    "estimate_raw",
    "estimate_clipped",
    "abs_error",
    "bound",
    "elapsed_s",
    "error_msg",
    "sweep_value",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one row per result with the columns in [`CSV_COLUMNS`].
pub fn write_results_csv<W: Write>(out: W, results: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in results {
        w.write_record([
            r.method.name().to_owned(),
            r.rep_index.to_string(),
            r.pi.to_string(),
            r.pi_prime_true.to_string(),
            opt(r.estimate_raw),
            opt(r.estimate_clipped),
            opt(r.abs_error),
            opt(r.bound_value),
            opt(r.elapsed_seconds),
            r.error_msg.clone().unwrap_or_default(),
            opt(r.sweep_value),
        ])?;
    }
    w.flush()
        .map_err(|e| Error::invalid(format!("write failed: {e}")))?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryDocument<'a> {
    uncertainty: &'static str,
    repetitions: usize,
    delta: f64,
    seed: u64,
    summary: &'a [SummaryRow],
}

/// Summary as a JSON document; the `±` column is labeled as a standard error.
pub fn summary_json(cfg: &ExperimentConfig, output: &ExperimentOutput) -> Result<String> {
    Ok(serde_json::to_string_pretty(&SummaryDocument {
        uncertainty: "standard error of the mean across repetitions",
        repetitions: cfg.repetitions,
        delta: cfg.delta,
        seed: cfg.seed,
        summary: &output.summary,
    })?)
}
