//! Deterministic synthetic trajectories with per-class kinematic profiles.
//!
//! Each user travels in a single class. A user draws one additive speed
//! offset from `N(0, user_effect_std)` that shifts all of its segments, which
//! lets fold assignments that mix users benefit from user identity.

use std::collections::BTreeSet;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CanonicalRow, TrajectoryPoint};
use crate::kinematics::{destination, normalize_degrees};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub name: String,
    /// Metres per second.
    pub speed_mean: f64,
    pub speed_std: f64,
    /// Standard deviation of the heading change between fixes, degrees.
    pub heading_change_std_deg: f64,
    pub sampling_period_s: u32,
}

impl ClassProfile {
    pub fn new(name: &str, speed_mean: f64, speed_std: f64, heading_change_std_deg: f64, sampling_period_s: u32) -> Self {
        Self {
            name: name.into(),
            speed_mean,
            speed_std,
            heading_change_std_deg,
            sampling_period_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub classes: Vec<ClassProfile>,
    pub users_per_class: usize,
    pub segments_per_user: usize,
    pub points_per_segment: usize,
    /// Standard deviation of the per-user speed offset, m/s.
    pub user_effect_std: f64,
    /// Standard deviation of white position noise, metres.
    pub gps_noise_m: f64,
    pub seed: u64,
    pub base_lat: f64,
    pub base_lon: f64,
    pub start_date: NaiveDate,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: Vec::new(),
            users_per_class: 4,
            segments_per_user: 10,
            points_per_segment: 60,
            user_effect_std: 0.0,
            gps_noise_m: 0.0,
            seed: 0,
            base_lat: 39.9042,
            base_lon: 116.4074,
            start_date: NaiveDate::from_ymd_opt(2008, 5, 1).expect("valid date"),
        }
    }
}

const DAY_START_HOUR: u32 = 8;

impl SynthSpec {
    /// Three classes with well separated speeds.
    pub fn separated(seed: u64) -> Self {
        Self {
            classes: vec![
                ClassProfile::new("walk", 1.4, 0.3, 25.0, 2),
                ClassProfile::new("bike", 5.0, 0.8, 12.0, 2),
                ClassProfile::new("car", 15.0, 2.0, 5.0, 2),
            ],
            seed,
            ..Self::default()
        }
    }

    /// Two classes whose speed distributions overlap, with a strong per-user
    /// offset.
    pub fn confounded(seed: u64, user_effect_std: f64) -> Self {
        Self {
            classes: vec![
                ClassProfile::new("bus", 7.0, 2.5, 8.0, 2),
                ClassProfile::new("car", 8.5, 2.5, 8.0, 2),
            ],
            users_per_class: 6,
            segments_per_user: 8,
            points_per_segment: 40,
            user_effect_std,
            seed,
            ..Self::default()
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "separated" => Ok(Self::separated(seed)),
            "confounded" => Ok(Self::confounded(seed, 5.0)),
            other => Err(Error::InvalidArgument(format!(
                "unknown synthetic preset `{other}` (expected separated or confounded)"
            ))),
        }
    }

    pub fn n_users(&self) -> usize {
        self.classes.len() * self.users_per_class
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.classes.is_empty() || self.users_per_class == 0 || self.segments_per_user == 0 {
            return bad("classes, users per class and segments per user must be at least 1".into());
        }
        if self.points_per_segment < 2 {
            return bad("segments need at least 2 points".into());
        }
        let names: BTreeSet<&str> = self.classes.iter().map(|c| c.name.as_str()).collect();
        if names.len() != self.classes.len() {
            return bad("class names must be unique".into());
        }
        for c in &self.classes {
            let finite = [c.speed_mean, c.speed_std, c.heading_change_std_deg].iter().all(|v| v.is_finite());
            if !finite || c.speed_std < 0.0 || c.heading_change_std_deg < 0.0 {
                return bad(format!("class `{}` has invalid speed or heading parameters", c.name));
            }
            if c.sampling_period_s == 0 {
                return bad(format!("class `{}` needs a positive sampling period", c.name));
            }
            let span = (self.points_per_segment as u64 - 1) * c.sampling_period_s as u64;
            if span + 3600 >= (24 - DAY_START_HOUR as u64) * 3600 {
                return bad(format!("segments of class `{}` would cross midnight", c.name));
            }
        }
        if !(self.user_effect_std >= 0.0 && self.gps_noise_m >= 0.0) {
            return bad("user effect and GPS noise must be non-negative".into());
        }
        if !(self.base_lat.abs() < 80.0 && self.base_lon.abs() <= 180.0) {
            return bad("base coordinate out of range".into());
        }
        Ok(())
    }
}

fn normal(mean: f64, std: f64) -> Normal<f64> {
    Normal::new(mean, std).expect("validated parameters")
}

fn generate_user(spec: &SynthSpec, user: usize) -> Result<Vec<CanonicalRow>> {
    let class = &spec.classes[user / spec.users_per_class];
    let user_id = format!("{user:03}");
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, user as u64));
    let offset = normal(0.0, spec.user_effect_std).sample(&mut rng);
    let speed = normal(class.speed_mean + offset, class.speed_std);
    let turn = normal(0.0, class.heading_change_std_deg);
    let noise = normal(0.0, spec.gps_noise_m);
    let period = class.sampling_period_s as f64;

    let mut rows = Vec::with_capacity(spec.segments_per_user * spec.points_per_segment);
    for s in 0..spec.segments_per_user {
        let day = spec.start_date + Duration::days(s as i64);
        let start: NaiveDateTime = day.and_hms_opt(DAY_START_HOUR, 0, 0).expect("valid time")
            + Duration::seconds(rng.random_range(0..3600));
        let (mut lat, mut lon) = destination(
            spec.base_lat,
            spec.base_lon,
            rng.random_range(0.0..360.0),
            rng.random_range(0.0..5000.0),
        );
        let mut heading: f64 = rng.random_range(0.0..360.0);
        for i in 0..spec.points_per_segment {
            if i > 0 {
                let v = speed.sample(&mut rng).max(0.0);
                (lat, lon) = destination(lat, lon, heading, v * period);
                heading = normalize_degrees(heading + turn.sample(&mut rng));
            }
            let (mut plat, mut plon) = (lat, lon);
            if spec.gps_noise_m > 0.0 {
                let d = noise.sample(&mut rng).abs();
                (plat, plon) = destination(lat, lon, rng.random_range(0.0..360.0), d);
            }
            let t = start + Duration::seconds((i as u64 * class.sampling_period_s as u64) as i64);
            rows.push(CanonicalRow {
                user_id: user_id.clone(),
                point: TrajectoryPoint::new(plat, plon, t)?,
                mode: Some(class.name.clone()),
            });
        }
    }
    Ok(rows)
}

/// Generates labeled canonical rows, ordered by user then time.
pub fn generate(spec: &SynthSpec) -> Result<Vec<CanonicalRow>> {
    spec.validate()?;
    let per_user = (0..spec.n_users())
        .into_par_iter()
        .map(|u| generate_user(spec, u))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_user.into_iter().flatten().collect())
}
