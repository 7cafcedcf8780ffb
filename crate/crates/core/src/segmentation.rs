//! Splits labeled point streams into per-user, per-day, per-mode segments.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{format_timestamp, CanonicalRow, LabeledPoint, TrajectoryPoint};

/// Segments shorter than this are discarded.
pub const MIN_SEGMENT_POINTS: usize = 10;

/// A maximal run of one user's points sharing a calendar day and a mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub user_id: String,
    pub day: NaiveDate,
    pub mode: String,
    pub points: Vec<TrajectoryPoint>,
}

impl Segment {
    /// Stable identifier: user id and first timestamp.
    pub fn segment_ref(&self) -> String {
        format!("{}/{}", self.user_id, format_timestamp(&self.points[0].timestamp))
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < MIN_SEGMENT_POINTS {
            return Err(Error::Precondition(format!(
                "segment has {} points, minimum is {MIN_SEGMENT_POINTS}",
                self.points.len()
            )));
        }
        if self.points.iter().any(|p| p.timestamp.date() != self.day) {
            return Err(Error::Precondition("segment crosses a day boundary".into()));
        }
        if self.points.windows(2).any(|w| w[0].timestamp >= w[1].timestamp) {
            return Err(Error::Precondition("segment timestamps not increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    /// Runs dropped for having fewer than [`MIN_SEGMENT_POINTS`] points.
    pub discarded: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationStats {
    pub kept: usize,
    pub discarded: usize,
}

impl Segmentation {
    pub fn stats(&self) -> SegmentationStats {
        SegmentationStats {
            kept: self.segments.len(),
            discarded: self.discarded,
        }
    }
}

/// Segments one user's time-ordered labeled points.
///
/// A change of day or mode starts a new run and unlabeled points end the
/// current one.
pub fn segment(user_id: &str, points: &[LabeledPoint]) -> Segmentation {
    let mut out = Segmentation::default();
    let mut current: Option<Segment> = None;

    let close = |seg: Option<Segment>, out: &mut Segmentation| {
        if let Some(seg) = seg {
            if seg.points.len() >= MIN_SEGMENT_POINTS {
                out.segments.push(seg);
            } else {
                out.discarded += 1;
            }
        }
    };

    for lp in points {
        let Some(mode) = &lp.mode else {
            close(current.take(), &mut out);
            continue;
        };
        let day = lp.point.timestamp.date();
        match &mut current {
            Some(seg) if seg.day == day && &seg.mode == mode => seg.points.push(lp.point),
            _ => {
                close(current.take(), &mut out);
                current = Some(Segment {
                    user_id: user_id.to_string(),
                    day,
                    mode: mode.clone(),
                    points: vec![lp.point],
                });
            }
        }
    }
    close(current.take(), &mut out);
    out
}

/// Segments canonical rows of any number of users.
///
/// Users are processed in lexicographic id order; each user's rows are
/// time-sorted first and repeated timestamps keep the first row.
pub fn segment_rows(rows: &[CanonicalRow]) -> Segmentation {
    let mut by_user: BTreeMap<&str, Vec<LabeledPoint>> = BTreeMap::new();
    for row in rows {
        by_user.entry(row.user_id.as_str()).or_default().push(LabeledPoint {
            point: row.point,
            mode: row.mode.clone(),
        });
    }
    let per_user: Vec<Segmentation> = by_user
        .into_par_iter()
        .map(|(user, mut points)| {
            points.sort_by_key(|lp| lp.point.timestamp);
            points.dedup_by_key(|lp| lp.point.timestamp);
            segment(user, &points)
        })
        .collect();

    let mut out = Segmentation::default();
    for s in per_user {
        out.segments.extend(s.segments);
        out.discarded += s.discarded;
    }
    out
}
