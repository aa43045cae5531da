//! Target class prior estimation under label shift from positive-unlabeled
//! source data.
//!
//! Given labeled positives and unlabeled data from a source population, and an
//! unlabeled sample from a target population whose class prior differs but
//! whose class-conditional distributions do not, the target prior is recovered
//! in closed form from kernel mean embeddings:
//!
//! ```
//! use tcpu_core::{embedding_stats, tcpu_closed_form, KernelConfig, PiSource, Sample, SampleTag};
//!
//! let cfg = KernelConfig::gaussian(1.0).unwrap();
//! let u = Sample::from_flat(vec![0.0, 2.0], 1, SampleTag::SourceUnlabeled).unwrap();
//! let pos = Sample::from_flat(vec![0.0], 1, SampleTag::SourcePositive).unwrap();
//! let tgt = Sample::from_flat(vec![2.0], 1, SampleTag::Target).unwrap();
//! let stats = embedding_stats(&cfg, &u, &pos, &tgt).unwrap();
//! let est = tcpu_closed_form(&stats, 0.5, PiSource::Known).unwrap();
//! assert!(est.raw.abs() < 1e-12);
//! ```
//!
//! Modules:
//! - [`kernel`]: Gaussian kernel and blocked mean-embedding inner products.
//! - [`estimator`]: the empirical objective, its closed-form minimizer and a grid oracle.
//! - [`bounds`]: computable deviation bounds and concentration radii.
//! - [`baseline_km`]: KM2 mixture proportion estimation (π plug-in and KM2-LS baseline).
//! - [`datagen`]: synthetic data, PU sampling, downsampling and CSV I/O.
//! - [`harness`]: repeated experiments and result emission.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline_km;
pub mod bounds;
pub mod datagen;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod kernel;

pub use baseline_km::{
    hull_distance, km2_ls_target_prior, km2_prior, DistanceCurve, HullProblem, Km2Estimate,
    KmConfig,
};
pub use bounds::{
    concentration_radius, delta_max, empirical_bound, estimate_mmd_pm, population_bound, BoundKind,
    BoundReport,
};
pub use datagen::{
    downsample_to_prior, gen_synthetic, load_csv, make_pu_sample, LabeledDataset, PUDataset,
    SyntheticConfig,
};
pub use error::{Error, Result};
pub use estimator::{
    estimate_target_prior, objective, tcpu_closed_form, tcpu_grid_oracle, PiSource, PiSpec,
    PriorEstimate,
};
pub use harness::{run_experiment, ExperimentConfig, Method, RunResult};
pub use kernel::{
    embedding_stats, eval_kernel, mean_cross_kernel, squared_norm_diff, EmbeddingStats,
    KernelConfig, KernelKind, Sample, SampleTag,
};
