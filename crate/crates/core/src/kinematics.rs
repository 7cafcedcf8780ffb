//! Spherical geodesy and per-point kinematic channels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TrajectoryPoint;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Great-circle distance in meters between two `(lat, lon)` pairs in degrees.
pub fn haversine_deg(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let phi1 = lat1.to_radians();
    let phi2 = lat2.to_radians();
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.clamp(0.0, 1.0).sqrt().asin()
}

pub fn haversine(p: &TrajectoryPoint, q: &TrajectoryPoint) -> f64 {
    haversine_deg(p.lat, p.lon, q.lat, q.lon)
}

/// Initial great-circle course from the first to the second point, in `[0, 360)`.
pub fn bearing_deg(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let phi1 = lat1.to_radians();
    let phi2 = lat2.to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    normalize_degrees(y.atan2(x).to_degrees())
}

pub fn bearing(p: &TrajectoryPoint, q: &TrajectoryPoint) -> f64 {
    bearing_deg(p.lat, p.lon, q.lat, q.lon)
}

/// Maps any angle into `[0, 360)`.
pub fn normalize_degrees(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Signed shortest rotation from `from` to `to`, in `(-180, 180]`.
pub fn angle_delta(from: f64, to: f64) -> f64 {
    let d = (to - from).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Point reached by travelling `distance_m` along initial course `bearing`
/// from `(lat, lon)`. Returns `(lat, lon)` in degrees, lon in `[-180, 180]`.
pub fn destination(lat: f64, lon: f64, bearing: f64, distance_m: f64) -> (f64, f64) {
    let delta = distance_m / EARTH_RADIUS_M;
    let theta = bearing.to_radians();
    let phi1 = lat.to_radians();
    let lambda1 = lon.to_radians();
    let sin_phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).clamp(-1.0, 1.0);
    let phi2 = sin_phi2.asin();
    let lambda2 = lambda1
        + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * sin_phi2);
    let lon2 = (lambda2.to_degrees() + 540.0).rem_euclid(360.0) - 180.0;
    (phi2.to_degrees(), lon2)
}

/// Per-point kinematic channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Duration,
    Distance,
    Speed,
    Accel,
    Jerk,
    Bearing,
    BearingRate,
    BearingRateRate,
}

impl Channel {
    pub const ALL: [Channel; 8] = [
        Channel::Duration,
        Channel::Distance,
        Channel::Speed,
        Channel::Accel,
        Channel::Jerk,
        Channel::Bearing,
        Channel::BearingRate,
        Channel::BearingRateRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Duration => "duration",
            Channel::Distance => "distance",
            Channel::Speed => "speed",
            Channel::Accel => "accel",
            Channel::Jerk => "jerk",
            Channel::Bearing => "bearing",
            Channel::BearingRate => "bearing_rate",
            Channel::BearingRateRate => "bearing_rate_rate",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown channel `{s}`")))
    }
}

/// Kinematic channels of one segment; every channel has one value per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFeatureSeries {
    pub duration_s: Vec<f64>,
    pub distance_m: Vec<f64>,
    pub speed_mps: Vec<f64>,
    pub accel_mps2: Vec<f64>,
    pub jerk_mps3: Vec<f64>,
    pub bearing_deg: Vec<f64>,
    pub bearing_rate: Vec<f64>,
    pub bearing_rate_rate: Vec<f64>,
}

impl PointFeatureSeries {
    pub fn len(&self) -> usize {
        self.duration_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.duration_s.is_empty()
    }

    pub fn channel(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::Duration => &self.duration_s,
            Channel::Distance => &self.distance_m,
            Channel::Speed => &self.speed_mps,
            Channel::Accel => &self.accel_mps2,
            Channel::Jerk => &self.jerk_mps3,
            Channel::Bearing => &self.bearing_deg,
            Channel::BearingRate => &self.bearing_rate,
            Channel::BearingRateRate => &self.bearing_rate_rate,
        }
    }

    /// Builds every channel from per-interval durations, distances and
    /// bearings. Index 0 of each input is ignored and index 0 of each output
    /// channel copies index 1.
    pub fn from_intervals(duration_s: Vec<f64>, distance_m: Vec<f64>, bearing_deg: Vec<f64>) -> Result<Self> {
        let n = duration_s.len();
        if n < 2 {
            return Err(Error::InsufficientPoints { needed: 2, got: n });
        }
        if distance_m.len() != n || bearing_deg.len() != n {
            return Err(Error::InvalidArgument("interval channels differ in length".into()));
        }
        if let Some(i) = (1..n).find(|&i| duration_s[i].is_nan() || duration_s[i] <= 0.0) {
            return Err(Error::Precondition(format!(
                "non-increasing timestamp at point {i}"
            )));
        }
        let mut duration_s = duration_s;
        let mut distance_m = distance_m;
        let mut bearing_deg = bearing_deg;
        duration_s[0] = duration_s[1];
        distance_m[0] = distance_m[1];
        bearing_deg[0] = bearing_deg[1];

        let mut speed = vec![0.0; n];
        for i in 1..n {
            speed[i] = distance_m[i] / duration_s[i];
        }
        speed[0] = speed[1];
        let accel = rate_of(&speed, &duration_s, |a, b| b - a);
        let jerk = rate_of(&accel, &duration_s, |a, b| b - a);
        let bearing_rate = rate_of(&bearing_deg, &duration_s, angle_delta);
        let bearing_rate_rate = rate_of(&bearing_rate, &duration_s, |a, b| b - a);

        Ok(Self {
            duration_s,
            distance_m,
            speed_mps: speed,
            accel_mps2: accel,
            jerk_mps3: jerk,
            bearing_deg,
            bearing_rate,
            bearing_rate_rate,
        })
    }
}

/// `out[i] = diff(values[i-1], values[i]) / duration[i]`, backfilled at 0.
fn rate_of(values: &[f64], duration: &[f64], diff: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for i in 1..values.len() {
        out[i] = diff(values[i - 1], values[i]) / duration[i];
    }
    out[0] = out[1];
    out
}

/// Computes the kinematic channels of a time-ordered point sequence.
pub fn point_features(points: &[TrajectoryPoint]) -> Result<PointFeatureSeries> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InsufficientPoints { needed: 2, got: n });
    }
    let mut duration = vec![0.0; n];
    let mut distance = vec![0.0; n];
    let mut heading = vec![0.0; n];
    for i in 1..n {
        let (p, q) = (&points[i - 1], &points[i]);
        duration[i] = (q.timestamp - p.timestamp).num_seconds() as f64;
        distance[i] = haversine(p, q);
        heading[i] = bearing(p, q);
    }
    PointFeatureSeries::from_intervals(duration, distance, heading)
}
