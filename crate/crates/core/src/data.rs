//! Datasets, CSV ingestion and the seeded sampling protocols.
//!
//! All randomness comes from ChaCha8 streams seeded through SplitMix64
//! ([`derive_seed`]), so every split, noise pattern and subsample is a pure
//! function of the input and a 64-bit seed, identical across platforms.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Stream tags mixed into seeds so that independent draws never share a stream.
pub mod stream {
    pub const SPLIT: u64 = 0x5350_4c49;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const SUBSAMPLE: u64 = 0x5355_4253;
    pub const SYNTHETIC: u64 = 0x5359_4e54;
}

/// SplitMix64 finalizer of `base ^ golden * (stream + 1)`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(stream.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// `round(fraction * m)` with halves rounded up; a small slack absorbs
/// binary representation error of decimal fractions.
pub fn round_count(fraction: f64, m: usize) -> usize {
    (fraction * m as f64 + 0.5 + 1e-9).floor() as usize
}

fn floor_count(fraction: f64, m: usize) -> usize {
    (fraction * m as f64 + 1e-9).floor() as usize
}

/// Labelled feature matrix with ±1 labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub x: DenseMatrix,
    pub y: Vec<i8>,
    pub source_path: String,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: DenseMatrix, y: Vec<i8>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows and {} labels",
                x.rows(),
                y.len()
            )));
        }
        if let Some(bad) = y.iter().find(|&&l| l != 1 && l != -1) {
            return Err(Error::InvalidParameter(format!("label {bad} is not +1 or -1")));
        }
        Ok(Self {
            name: name.into(),
            x,
            y,
            source_path: String::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    /// (positive, negative) counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.y.iter().filter(|&&l| l > 0).count();
        (pos, self.y.len() - pos)
    }

    /// Rows in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            source_path: self.source_path.clone(),
        }
    }

    fn class_indices(&self) -> (Vec<usize>, Vec<usize>) {
        (0..self.len()).partition(|&i| self.y[i] > 0)
    }
}

/// Which column holds the label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    pub has_header: bool,
    pub label_column: LabelColumn,
    /// Raw label mapped to +1; `None` maps the lexicographically larger label to +1.
    pub positive_label: Option<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            has_header: true,
            label_column: LabelColumn::Last,
            positive_label: None,
        }
    }
}

/// True when the first record has a non-numeric field outside the label column.
pub fn detect_header(path: impl AsRef<Path>, label_column: LabelColumn) -> Result<bool> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let Some(first) = reader.records().next() else {
        return Ok(false);
    };
    let first = first?;
    let label_idx = match label_column {
        LabelColumn::Last => first.len().saturating_sub(1),
        LabelColumn::Index(i) => i,
    };
    Ok(first
        .iter()
        .enumerate()
        .any(|(j, cell)| j != label_idx && cell.parse::<f64>().is_err()))
}

/// Reads an all-numeric comma-separated file (no label column).
pub fn load_features(path: impl AsRef<Path>, has_header: bool) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut data = Vec::new();
    let mut cols: Option<usize> = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0).is_some_and(str::is_empty) {
            continue;
        }
        if *cols.get_or_insert(record.len()) != record.len() {
            return Err(Error::Parse {
                row: line,
                col: record.len(),
                message: format!("expected {} fields, found {}", cols.unwrap(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => data.push(v),
                _ => {
                    return Err(Error::Parse {
                        row: line,
                        col: j + 1,
                        message: format!("'{cell}' is not a finite number"),
                    })
                }
            }
        }
        rows += 1;
    }
    match cols {
        Some(c) if rows > 0 => DenseMatrix::from_row_major(rows, c, data),
        _ => Err(Error::Parse {
            row: 0,
            col: 0,
            message: format!("{} has no data rows", path.display()),
        }),
    }
}

/// Reads a comma-separated file of numeric features plus one binary label column.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    let mut cols: Option<usize> = None;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record.get(0).is_some_and(str::is_empty) {
            continue;
        }
        if record.len() < 2 {
            return Err(Error::Parse {
                row: line,
                col: record.len(),
                message: "need at least one feature and a label".into(),
            });
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Parse {
                    row: line,
                    col: record.len(),
                    message: format!("expected {c} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        let label_idx = match options.label_column {
            LabelColumn::Last => record.len() - 1,
            LabelColumn::Index(i) if i < record.len() => i,
            LabelColumn::Index(i) => {
                return Err(Error::Parse {
                    row: line,
                    col: i + 1,
                    message: format!("label column {} out of range", i + 1),
                })
            }
        };
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                raw_labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                col: j + 1,
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    col: j + 1,
                    message: format!("'{cell}' is not finite"),
                });
            }
            features.push(v);
        }
    }

    let distinct: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
    if distinct.len() != 2 {
        return Err(Error::LabelCardinality {
            found: distinct.len(),
            labels: distinct.iter().map(|s| s.to_string()).collect(),
        });
    }
    let positive = match &options.positive_label {
        Some(p) if distinct.contains(p.as_str()) => p.clone(),
        Some(p) => {
            return Err(Error::InvalidParameter(format!(
                "positive label '{p}' not among {distinct:?}"
            )))
        }
        None => distinct.iter().next_back().expect("two labels").to_string(),
    };
    let y = raw_labels
        .iter()
        .map(|l| if *l == positive { 1 } else { -1 })
        .collect::<Vec<i8>>();
    let m = y.len();
    let n = cols.expect("at least one record") - 1;
    let x = DenseMatrix::from_row_major(m, n, features)?;
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    let mut ds = Dataset::new(name, x, y)?;
    ds.source_path = path.display().to_string();
    Ok(ds)
}

/// One benchmark entry: file, expected shape and label convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub file: String,
    pub m: usize,
    pub n: usize,
    #[serde(default = "default_true")]
    pub has_header: bool,
    #[serde(default, with = "label_column_repr")]
    pub label_column: LabelColumn,
    /// A raw label, or "auto".
    #[serde(default = "auto")]
    pub positive_label: String,
}

fn default_true() -> bool {
    true
}

fn auto() -> String {
    "auto".into()
}

mod label_column_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::LabelColumn;

    #[derive(serde::Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Name(String),
        Index(usize),
    }

    pub fn serialize<S: Serializer>(v: &LabelColumn, s: S) -> Result<S::Ok, S::Error> {
        match v {
            LabelColumn::Last => s.serialize_str("last"),
            LabelColumn::Index(i) => s.serialize_u64(*i as u64),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<LabelColumn, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Name(s) if s == "last" => Ok(LabelColumn::Last),
            Repr::Name(s) => Err(serde::de::Error::custom(format!(
                "label_column must be \"last\" or an index, got {s:?}"
            ))),
            Repr::Index(i) => Ok(LabelColumn::Index(i)),
        }
    }
}

impl ManifestEntry {
    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            has_header: self.has_header,
            label_column: self.label_column,
            positive_label: (self.positive_label != "auto").then(|| self.positive_label.clone()),
        }
    }
}

/// JSON index of benchmark files with their expected dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub datasets: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: Manifest = serde_json::from_str(&s)?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn entry(&self, name: &str) -> Result<&ManifestEntry> {
        self.datasets
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::UnknownDataset(name.to_string()))
    }

    pub fn path_of(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.file)
    }

    /// Entries whose files exist next to the manifest.
    pub fn available(&self) -> impl Iterator<Item = &ManifestEntry> + '_ {
        self.datasets.iter().filter(|e| self.path_of(e).is_file())
    }

    /// Loads a dataset and checks its shape against the manifest.
    pub fn load_dataset(&self, name: &str) -> Result<Dataset> {
        let entry = self.entry(name)?;
        let mut ds = load_csv(self.path_of(entry), &entry.csv_options())?;
        if ds.len() != entry.m || ds.n_features() != entry.n {
            return Err(Error::ManifestMismatch {
                name: entry.name.clone(),
                expected_m: entry.m,
                expected_n: entry.n,
                m: ds.len(),
                n: ds.n_features(),
            });
        }
        ds.name = entry.name.clone();
        Ok(ds)
    }
}

/// Row indices of a train/test partition, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self {
            train_fraction,
            stratified: true,
            seed,
        }
    }
}

/// Train/test partition. Stratified mode takes `floor(f * m_pos)` positives
/// and fills the remaining `round(f * m) - floor(f * m_pos)` slots with negatives.
pub fn split_indices(ds: &Dataset, spec: &SplitSpec) -> Result<SplitIndices> {
    let f = spec.train_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train fraction must lie in (0, 1), got {f}"
        )));
    }
    let m = ds.len();
    let n_train = round_count(f, m);
    let mut rng = rng_for(spec.seed, stream::SPLIT);
    let mut train = if spec.stratified {
        let (mut pos, mut neg) = ds.class_indices();
        let n_pos = floor_count(f, pos.len());
        let n_neg = n_train.saturating_sub(n_pos);
        if n_pos == 0 || n_neg == 0 || n_neg > neg.len() || n_pos > pos.len() {
            return Err(Error::InsufficientClassSamples(format!(
                "{} positives and {} negatives cannot give a stratified {f} split",
                pos.len(),
                neg.len()
            )));
        }
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        pos.truncate(n_pos);
        neg.truncate(n_neg);
        pos.extend(neg);
        pos
    } else {
        let mut all: Vec<usize> = (0..m).collect();
        all.shuffle(&mut rng);
        all.truncate(n_train);
        all
    };
    train.sort_unstable();
    let mut in_train = vec![false; m];
    train.iter().for_each(|&i| in_train[i] = true);
    let test: Vec<usize> = (0..m).filter(|&i| !in_train[i]).collect();
    let has = |idx: &[usize], label: i8| idx.iter().any(|&i| ds.y[i] == label);
    if !has(&train, 1) || !has(&train, -1) {
        return Err(Error::InsufficientClassSamples(
            "training part lacks a class".into(),
        ));
    }
    if test.is_empty() {
        return Err(Error::InsufficientClassSamples(format!(
            "train fraction {f} leaves no test samples out of {m}"
        )));
    }
    Ok(SplitIndices { train, test })
}

pub fn stratified_split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let idx = split_indices(ds, spec)?;
    Ok((ds.subset(&idx.train), ds.subset(&idx.test)))
}

/// Indices whose labels get flipped: exactly `round(fraction * m)` of them.
pub fn noise_indices(m: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!(
            "noise fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let k = round_count(fraction, m).min(m);
    let mut idx: Vec<usize> = (0..m).collect();
    if k > 0 {
        idx.shuffle(&mut rng_for(seed, stream::NOISE));
    }
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

/// Flips the labels of `round(fraction * m)` uniformly chosen samples.
pub fn inject_label_noise(train: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    let mut out = train.clone();
    for i in noise_indices(train.len(), fraction, seed)? {
        out.y[i] = -out.y[i];
    }
    Ok(out)
}

/// Stratified permutation of all rows: one row of each class first, then at
/// every position the class furthest behind its proportional share. Every
/// prefix of length k >= 2 therefore holds both classes in proportion
/// (within one sample), and shorter prefixes are contained in longer ones.
pub fn stratified_order(ds: &Dataset, seed: u64) -> Result<Vec<usize>> {
    let (mut pos, mut neg) = ds.class_indices();
    if pos.is_empty() {
        return Err(Error::MissingClass(1));
    }
    if neg.is_empty() {
        return Err(Error::MissingClass(-1));
    }
    let mut rng = rng_for(seed, stream::SUBSAMPLE);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let m = ds.len();
    let p_pos = pos.len() as f64 / m as f64;
    let mut order = Vec::with_capacity(m);
    let (mut ip, mut ineg) = (0usize, 0usize);
    for t in 0..m {
        let take_pos = if ip == pos.len() {
            false
        } else if ineg == neg.len() {
            true
        } else if t == 1 {
            ip == 0
        } else {
            let target = (t + 1) as f64;
            let deficit_pos = p_pos * target - ip as f64;
            let deficit_neg = (1.0 - p_pos) * target - ineg as f64;
            deficit_pos >= deficit_neg
        };
        if take_pos {
            order.push(pos[ip]);
            ip += 1;
        } else {
            order.push(neg[ineg]);
            ineg += 1;
        }
    }
    Ok(order)
}

/// Stratified prefix subsample of `round(fraction * m)` rows, kept in
/// original row order. `fraction = 1` returns the data unchanged.
pub fn subsample_indices(ds: &Dataset, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "subsample fraction must lie in (0, 1], got {fraction}"
        )));
    }
    if fraction == 1.0 {
        return Ok((0..ds.len()).collect());
    }
    let k = round_count(fraction, ds.len());
    if k < 2 {
        return Err(Error::InsufficientClassSamples(format!(
            "fraction {fraction} of {} rows keeps {k}; both classes need a sample",
            ds.len()
        )));
    }
    let mut idx = stratified_order(ds, seed)?;
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx)
}

pub fn subsample(train: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    Ok(train.subset(&subsample_indices(train, fraction, seed)?))
}

/// Two isotropic Gaussian classes in `n` dimensions, centred at `±separation/2`
/// along every axis, with alternating labels.
pub fn synthetic_blobs(m: usize, n: usize, separation: f64, seed: u64) -> Result<Dataset> {
    if m < 2 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "synthetic data needs m >= 2 and n >= 1, got {m}x{n}"
        )));
    }
    let mut rng = rng_for(seed, stream::SYNTHETIC);
    let mut data = Vec::with_capacity(m * n);
    let mut y = Vec::with_capacity(m);
    for i in 0..m {
        let label: i8 = if i % 2 == 0 { 1 } else { -1 };
        let shift = f64::from(label) * separation / 2.0;
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(z + shift);
        }
        y.push(label);
    }
    let x = DenseMatrix::from_row_major(m, n, data)?;
    Dataset::new(format!("blobs-{m}x{n}"), x, y)
}
