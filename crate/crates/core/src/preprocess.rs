//! Min-max scaling fitted on training rows, and optional noise filtering.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::features::Dataset;
use crate::kinematics::haversine;
use crate::matrix::Matrix;
use crate::segmentation::{Segment, MIN_SEGMENT_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

/// Per-feature `(min, max)` learned from training data.
///
/// Serializes as a JSON object keyed by feature name, in column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub feature_names: Vec<String>,
    pub ranges: Vec<Range>,
}

impl Scaler {
    /// Fits on the selected rows of `x`.
    pub fn fit_rows(feature_names: Vec<String>, x: &Matrix, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("cannot fit a scaler on zero rows".into()));
        }
        if feature_names.len() != x.n_cols() {
            return Err(Error::Schema("feature names do not match matrix width".into()));
        }
        let mut ranges = vec![
            Range {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY
            };
            x.n_cols()
        ];
        for &r in rows {
            for (range, &v) in ranges.iter_mut().zip(x.row(r)) {
                range.min = range.min.min(v);
                range.max = range.max.max(v);
            }
        }
        Ok(Self {
            feature_names,
            ranges,
        })
    }

    #[inline]
    pub fn scale(&self, col: usize, v: f64) -> f64 {
        let Range { min, max } = self.ranges[col];
        if max > min {
            (v - min) / (max - min)
        } else {
            0.0
        }
    }

    /// Scales a row in place.
    pub fn transform_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = self.scale(j, *v);
        }
    }

    pub fn transform_matrix(&self, x: &mut Matrix) -> Result<()> {
        if x.n_cols() != self.ranges.len() {
            return Err(Error::Schema(format!(
                "scaler has {} features, data has {}",
                self.ranges.len(),
                x.n_cols()
            )));
        }
        for i in 0..x.n_rows() {
            self.transform_row(x.row_mut(i));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl Serialize for Scaler {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(self.ranges.len()))?;
        for (name, range) in self.feature_names.iter().zip(&self.ranges) {
            map.serialize_entry(name, range)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Scaler {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let map = serde_json::Map::<String, serde_json::Value>::deserialize(deserializer)?;
        let mut feature_names = Vec::with_capacity(map.len());
        let mut ranges = Vec::with_capacity(map.len());
        for (name, value) in map {
            let range: Range = serde_json::from_value(value).map_err(D::Error::custom)?;
            if range.min.partial_cmp(&range.max).is_none_or(|o| o.is_gt()) {
                return Err(D::Error::custom(format!("feature {name}: min > max")));
            }
            feature_names.push(name);
            ranges.push(range);
        }
        Ok(Scaler {
            feature_names,
            ranges,
        })
    }
}

/// Fits on every row of a training dataset.
pub fn fit_scaler(train: &Dataset) -> Result<Scaler> {
    let x = train.matrix();
    let rows: Vec<usize> = (0..train.len()).collect();
    Scaler::fit_rows(train.feature_names.clone(), &x, &rows)
}

pub fn transform(scaler: &Scaler, data: &Dataset) -> Result<Dataset> {
    if scaler.feature_names != data.feature_names {
        return Err(Error::Schema("dataset features do not match the scaler".into()));
    }
    let mut out = data.clone();
    for row in &mut out.rows {
        scaler.transform_row(&mut row.values);
    }
    Ok(out)
}

pub const DEFAULT_SPEED_CAP_MPS: f64 = 110.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum NoisePolicy {
    #[default]
    Off,
    /// Drops fixes implying a speed above `max_mps` from the last kept fix.
    SpeedCap { max_mps: f64 },
}

impl NoisePolicy {
    pub fn parse(name: &str, max_mps: Option<f64>) -> Result<Self> {
        match name {
            "off" => Ok(NoisePolicy::Off),
            "speed-cap" => Ok(NoisePolicy::SpeedCap {
                max_mps: max_mps.unwrap_or(DEFAULT_SPEED_CAP_MPS),
            }),
            other => Err(Error::UnknownPolicy(other.to_string())),
        }
    }
}

impl FromStr for NoisePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoisePolicy::parse(s, None)
    }
}

impl fmt::Display for NoisePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoisePolicy::Off => f.write_str("off"),
            NoisePolicy::SpeedCap { max_mps } => write!(f, "speed-cap({max_mps})"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NoiseFilterOutcome {
    pub segments: Vec<Segment>,
    pub points_removed: usize,
    /// Segments that fell below the minimum length after filtering.
    pub segments_discarded: usize,
}

/// Applies a noise policy to segments. Feature channels are recomputed from
/// the surviving points downstream.
pub fn noise_filter(segments: Vec<Segment>, policy: NoisePolicy) -> NoiseFilterOutcome {
    let NoisePolicy::SpeedCap { max_mps } = policy else {
        return NoiseFilterOutcome {
            segments,
            ..Default::default()
        };
    };
    let mut out = NoiseFilterOutcome::default();
    for mut seg in segments {
        let before = seg.points.len();
        let mut kept: Vec<crate::ingest::TrajectoryPoint> = Vec::with_capacity(before);
        for p in seg.points {
            let keep = match kept.last() {
                None => true,
                Some(last) => {
                    let dt = (p.timestamp - last.timestamp).num_seconds() as f64;
                    dt > 0.0 && haversine(last, &p) / dt <= max_mps
                }
            };
            if keep {
                kept.push(p);
            }
        }
        out.points_removed += before - kept.len();
        seg.points = kept;
        if seg.points.len() >= MIN_SEGMENT_POINTS {
            out.segments.push(seg);
        } else {
            out.segments_discarded += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use crate::ingest::TrajectoryPoint;
    use crate::kinematics::destination;
    use chrono::{Duration, NaiveDate};
    use proptest::prelude::*;

    fn column(values: &[f64]) -> (Matrix, Vec<usize>) {
        let rows: Vec<Vec<f64>> = values.iter().map(|v| vec![*v]).collect();
        (Matrix::from_rows(&rows).unwrap(), (0..values.len()).collect())
    }

    #[test]
    fn fit_and_scale() {
        let (x, rows) = column(&[2.0, 4.0, 6.0]);
        let s = Scaler::fit_rows(vec!["f".into()], &x, &rows).unwrap();
        assert_eq!(s.ranges[0], Range { min: 2.0, max: 6.0 });
        assert_eq!(s.scale(0, 2.0), 0.0);
        assert_eq!(s.scale(0, 6.0), 1.0);
        assert_eq!(s.scale(0, 4.0), 0.5);
        assert_eq!(s.scale(0, 10.0), 2.0);

        let (x, rows) = column(&[5.0, 5.0, 5.0]);
        let s = Scaler::fit_rows(vec!["f".into()], &x, &rows).unwrap();
        assert_eq!(s.ranges[0], Range { min: 5.0, max: 5.0 });
        assert_eq!(s.scale(0, 5.0), 0.0);
        assert_eq!(s.scale(0, 7.0), 0.0);
    }

    #[test]
    fn training_rows_only() {
        let (x, _) = column(&[2.0, 6.0, 1000.0, -1000.0]);
        let s = Scaler::fit_rows(vec!["f".into()], &x, &[0, 1]).unwrap();
        assert_eq!(s.ranges[0], Range { min: 2.0, max: 6.0 });
    }

    #[test]
    fn json_is_bit_exact() {
        let s = Scaler {
            feature_names: vec!["speed_p90".into(), "accel_min".into()],
            ranges: vec![
                Range { min: 0.1 + 0.2, max: 1.0 / 3.0 },
                Range { min: -7.5e-301, max: 12345.678901234567 },
            ],
        };
        let json = s.to_json().unwrap();
        assert!(json.find("speed_p90").unwrap() < json.find("accel_min").unwrap());
        assert_eq!(Scaler::from_json(&json).unwrap(), s);
        assert!(Scaler::from_json(r#"{"f":{"min":2.0,"max":1.0}}"#).is_err());
    }

    #[test]
    fn dataset_transform_schema_check() {
        let ds = Dataset::new(
            vec!["a".into()],
            "raw",
            vec![FeatureVector {
                values: vec![3.0],
                label: "walk".into(),
                user_id: "u".into(),
                segment_ref: "r".into(),
            }],
        )
        .unwrap();
        let s = fit_scaler(&ds).unwrap();
        assert_eq!(transform(&s, &ds).unwrap().rows[0].values, vec![0.0]);
        let mut other = ds.clone();
        other.feature_names = vec!["b".into()];
        assert!(matches!(transform(&s, &other), Err(Error::Schema(_))));
    }

    proptest! {
        #[test]
        fn train_maps_into_unit_interval_and_keeps_order(values in prop::collection::vec(-1e6..1e6f64, 1..50)) {
            let (x, rows) = column(&values);
            let s = Scaler::fit_rows(vec!["f".into()], &x, &rows).unwrap();
            let scaled: Vec<f64> = values.iter().map(|v| s.scale(0, *v)).collect();
            prop_assert!(scaled.iter().all(|v| (0.0..=1.0).contains(v)));
            if s.ranges[0].max > s.ranges[0].min {
                for i in 0..values.len() {
                    for j in 0..values.len() {
                        if values[i] < values[j] {
                            prop_assert!(scaled[i] < scaled[j]);
                        }
                    }
                }
            }
        }
    }

    fn segment_from(coords: &[(f64, f64)]) -> Segment {
        let t0 = NaiveDate::from_ymd_opt(2008, 5, 1).unwrap().and_hms_opt(9, 0, 0).unwrap();
        Segment {
            user_id: "u".into(),
            day: t0.date(),
            mode: "walk".into(),
            points: coords
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| TrajectoryPoint::new(a, b, t0 + Duration::seconds(i as i64 * 10)).unwrap())
                .collect(),
        }
    }

    fn straight(n: usize, step_m: f64) -> Vec<(f64, f64)> {
        let mut out = vec![(40.0, 116.0)];
        for _ in 1..n {
            let &(a, b) = out.last().unwrap();
            out.push(destination(a, b, 45.0, step_m));
        }
        out
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("off".parse::<NoisePolicy>().unwrap(), NoisePolicy::Off);
        assert_eq!(
            "speed-cap".parse::<NoisePolicy>().unwrap(),
            NoisePolicy::SpeedCap { max_mps: 110.0 }
        );
        assert!(matches!("median".parse::<NoisePolicy>(), Err(Error::UnknownPolicy(_))));
    }

    #[test]
    fn off_is_identity() {
        let segs = vec![segment_from(&straight(12, 50.0))];
        let out = noise_filter(segs.clone(), NoisePolicy::Off);
        assert_eq!(out.segments, segs);
    }

    #[test]
    fn speed_cap_removes_teleport() {
        let mut coords = straight(15, 50.0);
        // 5 km jump within 10 s is 500 m/s
        coords[7] = destination(coords[6].0, coords[6].1, 45.0 + 90.0, 5000.0);
        let seg = segment_from(&coords);
        let spike = seg.points[7];
        assert!((haversine(&seg.points[6], &spike) / 10.0 - 500.0).abs() < 1e-6);
        let out = noise_filter(vec![seg.clone()], NoisePolicy::SpeedCap { max_mps: 110.0 });
        assert_eq!(out.points_removed, 1);
        assert!(!out.segments[0].points.contains(&spike));

        let clean = vec![segment_from(&straight(15, 50.0))];
        let out = noise_filter(clean.clone(), NoisePolicy::SpeedCap { max_mps: 110.0 });
        assert_eq!(out.segments, clean);
    }

    #[test]
    fn speed_cap_discards_short_segments() {
        let mut coords = straight(10, 50.0);
        coords[5] = destination(coords[4].0, coords[4].1, 0.0, 5000.0);
        let out = noise_filter(vec![segment_from(&coords)], NoisePolicy::SpeedCap { max_mps: 110.0 });
        assert!(out.segments.is_empty());
        assert_eq!(out.segments_discarded, 1);
    }
}
