//! Synthetic label-shift data, PU sampling, prior downsampling and CSV I/O.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Sample, SampleTag};

/// SplitMix64 finalizer over `seed + index`; yields independent per-repetition seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Round half to even.
fn round_size(x: f64) -> usize {
    x.round_ties_even().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub p: usize,
    /// Positive-class mean `a`; all ones when absent.
    pub shift: Option<Vec<f64>>,
    /// Target positives are drawn around `a + g·1`.
    pub disturbance_g: f64,
    pub pi: f64,
    pub pi_prime: f64,
    pub n_source: usize,
    pub n_target: usize,
    pub c: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            p: 10,
            shift: None,
            disturbance_g: 0.0,
            pi: 0.2,
            pi_prime: 0.8,
            n_source: 2000,
            n_target: 2000,
            c: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::invalid("p must be at least 1"));
        }
        if let Some(a) = &self.shift {
            if a.len() != self.p {
                return Err(Error::DimensionMismatch {
                    expected: self.p,
                    found: a.len(),
                });
            }
        }
        if !(0.0..1.0).contains(&self.pi) {
            return Err(Error::invalid(format!(
                "pi must lie in [0, 1), got {}",
                self.pi
            )));
        }
        if !(0.0..=1.0).contains(&self.pi_prime) {
            return Err(Error::invalid(format!(
                "pi_prime must lie in [0, 1], got {}",
                self.pi_prime
            )));
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::invalid(format!(
                "c must lie in (0, 1], got {}",
                self.c
            )));
        }
        if self.n_source == 0 || self.n_target == 0 {
            return Err(Error::invalid("sample sizes must be positive"));
        }
        if !self.disturbance_g.is_finite() {
            return Err(Error::invalid("disturbance must be finite"));
        }
        scaling_factor(self.pi, self.c)?;
        Ok(())
    }

    pub fn positive_mean(&self) -> Vec<f64> {
        self.shift.clone().unwrap_or_else(|| vec![1.0; self.p])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Sample,
    /// `+1` or `-1` per row.
    pub labels: Vec<i8>,
}

impl LabeledDataset {
    pub fn new(features: Sample, labels: Vec<i8>) -> Result<Self> {
        if labels.len() != features.len() {
            return Err(Error::invalid(format!(
                "{} labels for {} rows",
                labels.len(),
                features.len()
            )));
        }
        if labels.iter().any(|&l| l != 1 && l != -1) {
            return Err(Error::invalid("labels must be +1 or -1"));
        }
        Ok(LabeledDataset { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positive_indices(&self) -> Vec<usize> {
        self.indices_of(1)
    }

    pub fn negative_indices(&self) -> Vec<usize> {
        self.indices_of(-1)
    }

    fn indices_of(&self, label: i8) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i] == label)
            .collect()
    }

    pub fn positive_fraction(&self) -> f64 {
        self.positive_indices().len() as f64 / self.len() as f64
    }

    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PUDataset {
    pub positives: Sample,
    pub unlabeled: Sample,
    pub target: Sample,
    pub true_pi: Option<f64>,
    pub true_pi_prime: Option<f64>,
}

/// `A = (1 − c(1−π))⁻¹`.
pub fn scaling_factor(pi: f64, c: f64) -> Result<f64> {
    let denom = 1.0 - c * (1.0 - pi);
    if !(denom > 0.0) {
        return Err(Error::invalid(format!(
            "labeling frequency c={c} with pi={pi} leaves no unlabeled data"
        )));
    }
    Ok(1.0 / denom)
}

/// Sizes `(labeled positives, unlabeled)` for a PU sample of expected size `n`.
pub fn pu_sizes(pi: f64, c: f64, n: usize) -> Result<(usize, usize)> {
    let a = scaling_factor(pi, c)?;
    let n = n as f64;
    Ok((round_size(a * c * pi * n), round_size(a * (1.0 - c) * n)))
}

/// Draws a labeled-positive sample and an unlabeled sample from `data`.
///
/// The two draws are independent, so a row may land in both.
pub fn make_pu_sample(
    data: &LabeledDataset,
    pi: f64,
    c: f64,
    n: usize,
    seed: u64,
) -> Result<(Sample, Sample)> {
    if !(0.0..1.0).contains(&pi) || !(c > 0.0 && c <= 1.0) {
        return Err(Error::invalid(format!(
            "need pi in [0, 1) and c in (0, 1], got pi={pi}, c={c}"
        )));
    }
    let (k_pos, k_unl) = pu_sizes(pi, c, n)?;
    let pos_rows = data.positive_indices();
    if k_pos > pos_rows.len() {
        return Err(Error::invalid(format!(
            "need {k_pos} positive rows but only {} are available (deficit {})",
            pos_rows.len(),
            k_pos - pos_rows.len()
        )));
    }
    if k_unl > data.len() {
        return Err(Error::invalid(format!(
            "need {k_unl} rows for the unlabeled sample but only {} are available (deficit {})",
            data.len(),
            k_unl - data.len()
        )));
    }
    let mut rng_pos = stream(seed, 0);
    let mut rng_unl = stream(seed, 1);
    let mut pick = index::sample(&mut rng_pos, pos_rows.len(), k_pos).into_vec();
    pick.sort_unstable();
    let pos_idx: Vec<usize> = pick.into_iter().map(|i| pos_rows[i]).collect();
    let mut unl_idx = index::sample(&mut rng_unl, data.len(), k_unl).into_vec();
    unl_idx.sort_unstable();
    let positives = data
        .features
        .select(&pos_idx)
        .with_tag(SampleTag::SourcePositive);
    let unlabeled = data
        .features
        .select(&unl_idx)
        .with_tag(SampleTag::SourceUnlabeled);
    Ok((positives, unlabeled))
}

fn draw_rows(
    rng: &mut ChaCha8Rng,
    n: usize,
    prior: f64,
    pos_mean: &[f64],
    p: usize,
) -> (Vec<f64>, Vec<i8>) {
    let mut data = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let positive = rng.random::<f64>() < prior;
        labels.push(if positive { 1 } else { -1 });
        for &mu in pos_mean {
            let z: f64 = rng.sample(StandardNormal);
            data.push(if positive { mu + z } else { z });
        }
    }
    (data, labels)
}

/// Generates PU source data and an unlabeled target sample from Gaussian
/// class conditionals `N(0, I)` (negative) and `N(a, I)` (positive), with
/// target positives drawn from `N(a + g·1, I)`.
///
/// The source pool has Bernoulli(π) labels and is sized so that the PU draw
/// fits; if a pool comes up short it is regenerated at twice the size.
pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<PUDataset> {
    cfg.validate()?;
    let p = cfg.p;
    let a = cfg.positive_mean();
    let a_target: Vec<f64> = a.iter().map(|v| v + cfg.disturbance_g).collect();
    let scale = scaling_factor(cfg.pi, cfg.c)?;
    let (k_pos, _) = pu_sizes(cfg.pi, cfg.c, cfg.n_source)?;

    let mut pool_rng = stream(cfg.seed, 0);
    let mut pool_size = ((2.0 * scale * cfg.n_source as f64).ceil() as usize).max(cfg.n_source);
    let mut attempts = 0;
    let pool = loop {
        let (data, labels) = draw_rows(&mut pool_rng, pool_size, cfg.pi, &a, p);
        let pool = LabeledDataset::new(
            Sample::from_flat(data, p, SampleTag::SourceUnlabeled)?,
            labels,
        )?;
        if pool.positive_indices().len() >= k_pos {
            break pool;
        }
        attempts += 1;
        if attempts >= 16 {
            return Err(Error::invalid(format!(
                "could not draw {k_pos} positives with pi={}",
                cfg.pi
            )));
        }
        pool_size *= 2;
    };
    let (positives, unlabeled) =
        make_pu_sample(&pool, cfg.pi, cfg.c, cfg.n_source, derive_seed(cfg.seed, 1))?;

    let mut target_rng = stream(cfg.seed, 2);
    let (data, _) = draw_rows(&mut target_rng, cfg.n_target, cfg.pi_prime, &a_target, p);
    let target = Sample::from_flat(data, p, SampleTag::Target)?;

    Ok(PUDataset {
        positives,
        unlabeled,
        target,
        true_pi: Some(cfg.pi),
        true_pi_prime: Some(cfg.pi_prime),
    })
}

/// Draws a fully labeled Gaussian dataset with the given positive fraction.
pub fn gen_labeled(
    p: usize,
    n: usize,
    prior: f64,
    pos_mean: &[f64],
    seed: u64,
) -> Result<LabeledDataset> {
    if pos_mean.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: pos_mean.len(),
        });
    }
    let mut rng = stream(seed, 3);
    let (data, labels) = draw_rows(&mut rng, n, prior, pos_mean, p);
    LabeledDataset::new(
        Sample::from_flat(data, p, SampleTag::SourceUnlabeled)?,
        labels,
    )
}

/// Removes rows of the over-represented class so the positive fraction
/// matches `target_pi` as closely as an integer count allows.
pub fn downsample_to_prior(
    data: &LabeledDataset,
    target_pi: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if !(target_pi > 0.0 && target_pi < 1.0) {
        return Err(Error::invalid(format!(
            "target prior must lie in (0, 1), got {target_pi}"
        )));
    }
    let pos = data.positive_indices();
    let neg = data.negative_indices();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("both classes must be present to downsample"));
    }
    let current = pos.len() as f64 / data.len() as f64;
    let (shrink, keep_other, exact) = if current > target_pi {
        (&pos, &neg, target_pi * neg.len() as f64 / (1.0 - target_pi))
    } else {
        (&neg, &pos, (1.0 - target_pi) * pos.len() as f64 / target_pi)
    };
    let k = round_size(exact).min(shrink.len());
    if k == 0 {
        return Err(Error::invalid(format!(
            "target prior {target_pi} unreachable: it would remove the whole class"
        )));
    }
    if k == shrink.len() {
        return Ok(data.clone());
    }
    let mut rng = stream(seed, 4);
    let mut kept: Vec<usize> = index::sample(&mut rng, shrink.len(), k)
        .into_iter()
        .map(|i| shrink[i])
        .collect();
    kept.extend_from_slice(keep_other);
    kept.sort_unstable();
    Ok(data.select(&kept))
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_cell(path: &Path, line: u64, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| {
        parse_err(
            path,
            line,
            format!("column '{column}': '{cell}' is not a number"),
        )
    })?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            line,
            format!("column '{column}': non-finite value"),
        ));
    }
    Ok(v)
}

/// Reads a labeled dataset. Rows whose label equals `positive_value` are
/// positive; every other label is negative.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: &str,
    positive_value: &str,
) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: label_column.to_owned(),
            available: headers.clone(),
        })?;
    let p = headers.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != headers.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                labels.push(if cell == positive_value { 1 } else { -1 });
            } else {
                data.push(parse_cell(path, line, &headers[j], cell)?);
            }
        }
    }
    if p == 0 {
        return Err(parse_err(path, 1, "no feature columns"));
    }
    LabeledDataset::new(
        Sample::from_flat(data, p, SampleTag::SourceUnlabeled)?,
        labels,
    )
}

/// Reads an all-numeric feature file with a header row.
pub fn load_features_csv(path: impl AsRef<Path>, tag: SampleTag) -> Result<Sample> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if headers.is_empty() {
        return Err(parse_err(path, 1, "no columns"));
    }
    let mut data = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != headers.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (j, cell) in record.iter().enumerate() {
            data.push(parse_cell(path, line, &headers[j], cell)?);
        }
    }
    let sample = Sample::from_flat(data, headers.len(), tag)?;
    if sample.is_empty() {
        return Err(parse_err(path, 2, "file has no data rows"));
    }
    Ok(sample)
}

/// Writes a sample with header `x1,…,xp`.
pub fn write_features_csv(path: impl AsRef<Path>, sample: &Sample) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path)?;
    let header: Vec<String> = (1..=sample.dim()).map(|j| format!("x{j}")).collect();
    writer.write_record(&header)?;
    for row in sample.rows() {
        writer.write_record(row.iter().map(|v| v.to_string()))?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// Centers and scales each feature by the mean and standard deviation of the
/// pooled samples. Constant features are only centered.
pub fn standardize(samples: &[&Sample]) -> Result<Vec<Sample>> {
    let first = samples.first().ok_or(Error::EmptySample)?;
    let p = first.dim();
    let mut count = 0usize;
    let mut mean = vec![0.0; p];
    for s in samples {
        if s.dim() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: s.dim(),
            });
        }
        for row in s.rows() {
            count += 1;
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
    }
    if count < 2 {
        return Err(Error::invalid("standardization needs at least two rows"));
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0.0; p];
    for s in samples {
        for row in s.rows() {
            for ((acc, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
    }
    let sd: Vec<f64> = var
        .iter()
        .map(|v| {
            let sd = (v / (count - 1) as f64).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Ok(samples
        .iter()
        .map(|s| s.map_values(|j, v| (v - mean[j]) / sd[j]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn dataset(n_pos: usize, n_neg: usize) -> LabeledDataset {
        let n = n_pos + n_neg;
        let data: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let labels = (0..n).map(|i| if i < n_pos { 1 } else { -1 }).collect();
        LabeledDataset::new(
            Sample::from_flat(data, 1, SampleTag::SourceUnlabeled).unwrap(),
            labels,
        )
        .unwrap()
    }

    #[test]
    fn pu_sizes_reference_values() {
        assert_eq!(pu_sizes(0.5, 1.0, 1000).unwrap(), (1000, 0));
        assert_eq!(pu_sizes(0.2, 0.5, 1000).unwrap(), (167, 833));
        assert!((scaling_factor(0.2, 0.5).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert!(scaling_factor(0.0, 1.0).is_err());
    }

    #[test]
    fn rounding_is_half_even() {
        assert_eq!(round_size(2.5), 2);
        assert_eq!(round_size(3.5), 4);
        assert_eq!(round_size(166.67), 167);
    }

    #[test]
    fn make_pu_sample_sizes_and_membership() {
        let data = dataset(400, 600);
        let (pos, unl) = make_pu_sample(&data, 0.2, 0.5, 1000, 7).unwrap();
        assert_eq!(pos.len(), 167);
        assert_eq!(unl.len(), 833);
        assert!(pos.rows().all(|r| r[0] < 400.0));
        let again = make_pu_sample(&data, 0.2, 0.5, 1000, 7).unwrap();
        assert_eq!(again, (pos, unl));
    }

    #[test]
    fn make_pu_sample_reports_deficit() {
        let data = dataset(100, 900);
        let err = make_pu_sample(&data, 0.2, 0.5, 1000, 1).unwrap_err();
        assert!(err.to_string().contains("deficit 67"), "{err}");
    }

    #[test]
    fn downsample_reference_values() {
        let data = dataset(268, 500);
        let low = downsample_to_prior(&data, 0.2, 3).unwrap();
        assert_eq!(low.positive_indices().len(), 125);
        assert_eq!(low.negative_indices().len(), 500);
        let high = downsample_to_prior(&data, 0.8, 3).unwrap();
        assert_eq!(high.positive_indices().len(), 268);
        assert_eq!(high.negative_indices().len(), 67);
        // kept class untouched, in order
        let kept: Vec<f64> = high
            .select(&high.positive_indices())
            .features
            .as_flat()
            .to_vec();
        assert_eq!(kept, (0..268).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn downsample_noop_and_unreachable() {
        let data = dataset(200, 800);
        assert_eq!(downsample_to_prior(&data, 0.2, 0).unwrap(), data);
        let tiny = dataset(1, 1000);
        assert!(downsample_to_prior(&tiny, 0.9, 0).is_err());
        let lopsided = dataset(1, 5000);
        assert!(downsample_to_prior(&lopsided, 0.00001, 0).is_err());
        assert!(downsample_to_prior(&data, 1.0, 0).is_err());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = SyntheticConfig {
            n_source: 300,
            n_target: 200,
            seed: 42,
            ..SyntheticConfig::default()
        };
        let a = gen_synthetic(&cfg).unwrap();
        let b = gen_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.positives.len(), pu_sizes(0.2, 0.5, 300).unwrap().0);
        assert_eq!(a.unlabeled.len(), pu_sizes(0.2, 0.5, 300).unwrap().1);
        assert_eq!(a.target.len(), 200);
        let c = gen_synthetic(&SyntheticConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.target, c.target);
    }

    #[test]
    fn csv_loading() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "f1,f2,y\n1.0,2.0,pos\n3.5,-1,neg\n").unwrap();
        let d = load_csv(&path, "y", "pos").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.features.dim(), 2);
        assert_eq!(d.labels, vec![1, -1]);
        assert_eq!(d.features.row(1), &[3.5, -1.0]);

        let bad = dir.path().join("bad.csv");
        let mut f = std::fs::File::create(&bad).unwrap();
        writeln!(f, "f1,y\n1.0,a\n2.0,b\nxyz,a").unwrap();
        match load_csv(&bad, "y", "a") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        match load_csv(&path, "label", "pos") {
            Err(Error::MissingColumn { available, .. }) => {
                assert_eq!(available, vec!["f1", "f2", "y"])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn features_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let s = Sample::from_flat(vec![0.1, -2.5, 3.0, 1e-17], 2, SampleTag::Target).unwrap();
        write_features_csv(&path, &s).unwrap();
        assert_eq!(load_features_csv(&path, SampleTag::Target).unwrap(), s);
    }

    #[test]
    fn standardize_pooled() {
        let a = Sample::from_flat(vec![1.0, 5.0, 3.0, 5.0], 2, SampleTag::SourceUnlabeled).unwrap();
        let b = Sample::from_flat(vec![5.0, 5.0], 2, SampleTag::Target).unwrap();
        let out = standardize(&[&a, &b]).unwrap();
        // column 0: {1, 3, 5}, mean 3, sd 2; column 1 constant
        assert_eq!(out[0].as_flat(), &[-1.0, 0.0, 0.0, 0.0]);
        assert_eq!(out[1].as_flat(), &[1.0, 0.0]);
    }
}
