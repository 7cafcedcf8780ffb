//! Trajectory features: ten summary statistics per kinematic channel.
//!
//! With the default seven channels this yields the 70 named features
//! `distance_min`, `distance_max`, ..., `bearing_rate_rate_p90`. Names are
//! `<channel>_<statistic>` and are ordered channel-major.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{point_features, Channel, PointFeatureSeries};
use crate::matrix::Matrix;
use crate::segmentation::Segment;

pub const SCHEMA_VERSION: u32 = 1;

/// `true` divides the variance by `n`, `false` by `n - 1`.
pub const POPULATION_STD: bool = true;

pub const DEFAULT_CHANNELS: [Channel; 7] = [
    Channel::Distance,
    Channel::Speed,
    Channel::Accel,
    Channel::Jerk,
    Channel::Bearing,
    Channel::BearingRate,
    Channel::BearingRateRate,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Min,
    Max,
    Mean,
    Median,
    Std,
    P10,
    P25,
    P50,
    P75,
    P90,
}

impl Statistic {
    pub const ALL: [Statistic; 10] = [
        Statistic::Min,
        Statistic::Max,
        Statistic::Mean,
        Statistic::Median,
        Statistic::Std,
        Statistic::P10,
        Statistic::P25,
        Statistic::P50,
        Statistic::P75,
        Statistic::P90,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Min => "min",
            Statistic::Max => "max",
            Statistic::Mean => "mean",
            Statistic::Median => "median",
            Statistic::Std => "std",
            Statistic::P10 => "p10",
            Statistic::P25 => "p25",
            Statistic::P50 => "p50",
            Statistic::P75 => "p75",
            Statistic::P90 => "p90",
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn feature_name(channel: Channel, stat: Statistic) -> String {
    format!("{}_{}", channel.name(), stat.name())
}

pub fn feature_names(channels: &[Channel]) -> Vec<String> {
    channels
        .iter()
        .flat_map(|&c| Statistic::ALL.into_iter().map(move |s| feature_name(c, s)))
        .collect()
}

/// Percentile of an ascending slice by linear interpolation at rank
/// `(n - 1) * p / 100`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let pos = (n - 1) as f64 * p / 100.0;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    let (a, b) = (sorted[lo], sorted[hi]);
    if frac == 0.0 || a == b {
        return a;
    }
    (a + (b - a) * frac).clamp(a, b)
}

/// The ten statistics of one channel, in [`Statistic::ALL`] order.
pub fn summarize(values: &[f64]) -> [f64; 10] {
    assert!(!values.is_empty(), "cannot summarize an empty channel");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let min = sorted[0];
    let max = sorted[n - 1];
    // shifting by the minimum keeps constant channels exact
    let shifted_sum: f64 = values.iter().map(|v| v - min).sum();
    let mean = min + shifted_sum / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let denom = if POPULATION_STD || n == 1 { n } else { n - 1 } as f64;
    let std = (ss / denom).sqrt();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        let (a, b) = (sorted[n / 2 - 1], sorted[n / 2]);
        if a == b {
            a
        } else {
            (a / 2.0 + b / 2.0).clamp(a, b)
        }
    };
    [
        min,
        max,
        mean,
        median,
        std,
        percentile_sorted(&sorted, 10.0),
        percentile_sorted(&sorted, 25.0),
        median,
        percentile_sorted(&sorted, 75.0),
        percentile_sorted(&sorted, 90.0),
    ]
}

/// Flattens the statistics of the requested channels.
pub fn trajectory_features(series: &PointFeatureSeries, channels: &[Channel]) -> Vec<f64> {
    channels
        .iter()
        .flat_map(|&c| summarize(series.channel(c)))
        .collect()
}

/// Names of the eleven GeoLife transportation modes.
pub const GEOLIFE_MODES: [&str; 11] = [
    "airplane",
    "bike",
    "boat",
    "bus",
    "car",
    "motorcycle",
    "run",
    "subway",
    "taxi",
    "train",
    "walk",
];

/// Mapping from raw mode strings to an experiment's class set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    pub name: String,
    /// `None` passes every label through unchanged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<BTreeMap<String, String>>,
}

impl LabelScheme {
    pub fn raw() -> Self {
        Self {
            name: "raw".into(),
            mapping: None,
        }
    }

    /// walk, bike, bus, driving (car + taxi), train (train + subway).
    pub fn dabiri() -> Self {
        let pairs = [
            ("walk", "walk"),
            ("bike", "bike"),
            ("bus", "bus"),
            ("car", "driving"),
            ("taxi", "driving"),
            ("train", "train"),
            ("subway", "train"),
        ];
        Self::from_pairs("dabiri", &pairs)
    }

    /// Default seven-mode set used for user-oriented comparisons. Override
    /// with a mapping file when a different class set is wanted.
    pub fn endo() -> Self {
        let pairs = [
            ("walk", "walk"),
            ("bike", "bike"),
            ("bus", "bus"),
            ("car", "car"),
            ("taxi", "taxi"),
            ("subway", "subway"),
            ("train", "train"),
        ];
        Self::from_pairs("endo", &pairs)
    }

    fn from_pairs(name: &str, pairs: &[(&str, &str)]) -> Self {
        Self {
            name: name.into(),
            mapping: Some(
                pairs
                    .iter()
                    .map(|(a, b)| (a.to_string(), b.to_string()))
                    .collect(),
            ),
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "raw" => Ok(Self::raw()),
            "dabiri" => Ok(Self::dabiri()),
            "endo" => Ok(Self::endo()),
            other => Err(Error::UnknownScheme(other.to_string())),
        }
    }

    /// Loads `{"name": ..., "mapping": {"raw": "class", ...}}`.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let scheme: LabelScheme = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Ok(scheme)
    }

    /// Accepts a built-in scheme name or a path to a mapping file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match Self::from_name(name_or_path) {
            Ok(s) => Ok(s),
            Err(e) => {
                let path = Path::new(name_or_path);
                if path.is_file() {
                    Self::from_json_file(path)
                } else {
                    Err(e)
                }
            }
        }
    }

    pub fn map(&self, raw: &str) -> Option<String> {
        match &self.mapping {
            None => Some(raw.to_string()),
            Some(m) => m.get(raw).cloned(),
        }
    }

    /// Sorted class set, or `None` for a pass-through scheme.
    pub fn classes(&self) -> Option<Vec<String>> {
        self.mapping.as_ref().map(|m| {
            let mut c: Vec<String> = m.values().cloned().collect();
            c.sort();
            c.dedup();
            c
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: String,
    pub user_id: String,
    pub segment_ref: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub channels: Vec<Channel>,
    pub label_scheme: String,
    pub rows: Vec<FeatureVector>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, label_scheme: impl Into<String>, rows: Vec<FeatureVector>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| r.values.len() != feature_names.len()) {
            return Err(Error::Schema(format!(
                "row {} has {} values, expected {}",
                bad.segment_ref,
                bad.values.len(),
                feature_names.len()
            )));
        }
        Ok(Self {
            feature_names,
            channels: Vec::new(),
            label_scheme: label_scheme.into(),
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Resolves names to column indices, failing on unknown names.
    pub fn feature_indices<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.feature_index(n.as_ref())
                    .ok_or_else(|| Error::Schema(format!("unknown feature `{}`", n.as_ref())))
            })
            .collect()
    }

    /// Distinct labels in sorted order.
    pub fn classes(&self) -> Vec<String> {
        let mut c: Vec<String> = self.rows.iter().map(|r| r.label.clone()).collect();
        c.sort();
        c.dedup();
        c
    }

    /// Label of each row as an index into [`Dataset::classes`].
    pub fn class_indices(&self) -> (Vec<String>, Vec<usize>) {
        let classes = self.classes();
        let idx = self
            .rows
            .iter()
            .map(|r| classes.binary_search(&r.label).expect("label in class set"))
            .collect();
        (classes, idx)
    }

    pub fn matrix(&self) -> Matrix {
        let rows: Vec<&[f64]> = self.rows.iter().map(|r| r.values.as_slice()).collect();
        Matrix::from_rows(&rows).unwrap_or_else(|_| Matrix::new(Vec::new(), 0, self.n_features()).unwrap())
    }

    /// Row indices ordered by segment reference, ties by position.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        idx.sort_by(|&a, &b| self.rows[a].segment_ref.cmp(&self.rows[b].segment_ref).then(a.cmp(&b)));
        idx
    }

    pub fn schema(&self) -> DatasetSchema {
        DatasetSchema {
            schema_version: SCHEMA_VERSION,
            feature_names: self.feature_names.clone(),
            channels: self.channels.clone(),
            statistics: Statistic::ALL.iter().map(|s| s.name().to_string()).collect(),
            percentile_method: "linear interpolation at rank (n-1)*p/100".into(),
            std_denominator: if POPULATION_STD { "n" } else { "n-1" }.into(),
            label_scheme: self.label_scheme.clone(),
            classes: self.classes(),
            rows: self.rows.len(),
            fingerprint: None,
        }
    }
}

/// JSON sidecar describing a persisted dataset table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    pub channels: Vec<Channel>,
    pub statistics: Vec<String>,
    pub percentile_method: String,
    pub std_denominator: String,
    pub label_scheme: String,
    pub classes: Vec<String>,
    pub rows: usize,
    /// Content hash of the configuration that produced the table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBuild {
    pub dataset: Dataset,
    /// Segments whose mode has no class under the scheme.
    pub dropped_out_of_scheme: usize,
}

/// One row per segment, in segment order. Segments whose raw mode is not
/// covered by `scheme` are dropped and counted.
pub fn build_dataset(segments: &[Segment], scheme: &LabelScheme, channels: &[Channel]) -> Result<DatasetBuild> {
    if channels.is_empty() {
        return Err(Error::InvalidArgument("channel set is empty".into()));
    }
    let rows: Vec<Option<FeatureVector>> = segments
        .par_iter()
        .map(|seg| -> Result<Option<FeatureVector>> {
            let Some(label) = scheme.map(&seg.mode) else {
                return Ok(None);
            };
            let series = point_features(&seg.points)?;
            Ok(Some(FeatureVector {
                values: trajectory_features(&series, channels),
                label,
                user_id: seg.user_id.clone(),
                segment_ref: seg.segment_ref(),
            }))
        })
        .collect::<Result<_>>()?;
    let dropped = rows.iter().filter(|r| r.is_none()).count();
    Ok(DatasetBuild {
        dataset: Dataset {
            feature_names: feature_names(channels),
            channels: channels.to_vec(),
            label_scheme: scheme.name.clone(),
            rows: rows.into_iter().flatten().collect(),
        },
        dropped_out_of_scheme: dropped,
    })
}

/// `dataset.csv` -> `dataset.schema.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("schema.json")
}

const META_COLUMNS: [&str; 3] = ["label", "user_id", "segment_ref"];

pub fn write_dataset_csv<W: Write>(writer: W, dataset: &Dataset) -> Result<W> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let header: Vec<&str> = dataset
        .feature_names
        .iter()
        .map(String::as_str)
        .chain(META_COLUMNS)
        .collect();
    w.write_record(&header)?;
    for row in &dataset.rows {
        let mut rec: Vec<String> = row.values.iter().map(|v| v.to_string()).collect();
        rec.push(row.label.clone());
        rec.push(row.user_id.clone());
        rec.push(row.segment_ref.clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn read_dataset_csv<R: Read>(reader: R, label_scheme: &str, channels: Vec<Channel>) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let n = header.len();
    if n < META_COLUMNS.len() || header[n - 3..] != META_COLUMNS {
        return Err(Error::Schema(
            "dataset header must end with label,user_id,segment_ref".into(),
        ));
    }
    let feature_names = header[..n - 3].to_vec();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = Some(i + 2);
        let values = (0..n - 3)
            .map(|j| {
                rec[j]
                    .parse::<f64>()
                    .map_err(|_| Error::format(line, format!("bad value `{}` in {}", &rec[j], feature_names[j])))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(FeatureVector {
            values,
            label: rec[n - 3].to_string(),
            user_id: rec[n - 2].to_string(),
            segment_ref: rec[n - 1].to_string(),
        });
    }
    let mut ds = Dataset::new(feature_names, label_scheme, rows)?;
    ds.channels = channels;
    Ok(ds)
}

/// Writes the table and its schema sidecar.
pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    save_dataset_with_fingerprint(path, dataset, None)
}

pub fn save_dataset_with_fingerprint(path: &Path, dataset: &Dataset, fingerprint: Option<&str>) -> Result<()> {
    write_dataset_csv(BufWriter::new(File::create(path)?), dataset)?;
    let mut side = BufWriter::new(File::create(sidecar_path(path))?);
    let schema = DatasetSchema {
        fingerprint: fingerprint.map(str::to_string),
        ..dataset.schema()
    };
    serde_json::to_writer_pretty(&mut side, &schema)?;
    side.write_all(b"\n")?;
    side.flush()?;
    Ok(())
}

/// Reads a dataset table; the sidecar, when present, supplies the scheme and
/// channel set and must agree with the table header.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let side = sidecar_path(path);
    let schema: Option<DatasetSchema> = if side.is_file() {
        Some(serde_json::from_reader(BufReader::new(File::open(&side)?))?)
    } else {
        None
    };
    let (scheme, channels) = schema
        .as_ref()
        .map(|s| (s.label_scheme.clone(), s.channels.clone()))
        .unwrap_or_else(|| ("unknown".into(), Vec::new()));
    let ds = read_dataset_csv(BufReader::new(File::open(path)?), &scheme, channels)?;
    if let Some(s) = schema {
        if s.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "unsupported dataset schema version {}",
                s.schema_version
            )));
        }
        if s.feature_names != ds.feature_names {
            return Err(Error::Schema("sidecar feature names disagree with table header".into()));
        }
    }
    Ok(ds)
}
