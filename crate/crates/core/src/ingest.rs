//! GeoLife ingestion and the canonical point table.
//!
//! GeoLife ships one directory per user: `Data/<user>/Trajectory/*.plt`
//! holds the raw fixes and an optional `Data/<user>/labels.txt` holds the
//! transportation mode annotations. The canonical table is the flat CSV
//! every later stage reads:
//!
//! ```text
//! user_id,timestamp,lat,lon,altitude,mode
//! 000,2008-10-23T02:53:04Z,39.984702,116.318417,149.9616,walk
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEET_TO_METERS: f64 = 0.3048;

/// GeoLife's "altitude unknown" marker, in feet.
pub const INVALID_ALTITUDE_FEET: f64 = -777.0;

const PLT_HEADER_LINES: usize = 6;
const LABEL_TIME_FORMAT: &str = "%Y/%m/%d %H:%M:%S";
const CANONICAL_TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// One timestamped fix. Timestamps are UTC with one second resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub lat: f64,
    pub lon: f64,
    pub timestamp: NaiveDateTime,
    /// Meters; `None` when the source marks the altitude invalid.
    pub altitude: Option<f64>,
}

impl TrajectoryPoint {
    pub fn new(lat: f64, lon: f64, timestamp: NaiveDateTime) -> Result<Self> {
        let point = Self {
            lat,
            lon,
            timestamp,
            altitude: None,
        };
        if !point.has_valid_coordinates() {
            return Err(Error::InvalidArgument(format!(
                "coordinate out of range: lat {lat}, lon {lon}"
            )));
        }
        Ok(point)
    }

    pub fn with_altitude(mut self, altitude: Option<f64>) -> Self {
        self.altitude = altitude;
        self
    }

    pub fn has_valid_coordinates(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTrajectory {
    pub user_id: String,
    pub points: Vec<TrajectoryPoint>,
}

/// Row accounting for one PLT file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PltStats {
    pub rows: usize,
    pub kept: usize,
    pub dropped_invalid: usize,
    pub dropped_duplicate: usize,
    /// Rows earlier than the previously kept row.
    pub dropped_out_of_order: usize,
}

impl PltStats {
    pub fn dropped(&self) -> usize {
        self.dropped_invalid + self.dropped_duplicate + self.dropped_out_of_order
    }

    fn merge(&mut self, other: &PltStats) {
        self.rows += other.rows;
        self.kept += other.kept;
        self.dropped_invalid += other.dropped_invalid;
        self.dropped_duplicate += other.dropped_duplicate;
        self.dropped_out_of_order += other.dropped_out_of_order;
    }
}

/// Parses a GeoLife `.plt` log.
///
/// Unparseable or out-of-range rows are dropped and counted, as are rows
/// whose timestamp does not strictly exceed the last kept row.
pub fn parse_plt<R: BufRead>(reader: R, user_id: &str) -> Result<(RawTrajectory, PltStats)> {
    let mut lines = reader.lines();
    for n in 1..=PLT_HEADER_LINES {
        let line = match lines.next() {
            Some(line) => line?,
            None => {
                return Err(Error::format(
                    Some(n),
                    format!("truncated PLT header: expected {PLT_HEADER_LINES} header lines"),
                ))
            }
        };
        if n == 1 && !line.trim().to_ascii_lowercase().starts_with("geolife trajectory") {
            return Err(Error::format(Some(1), "missing `Geolife trajectory` header"));
        }
    }

    let mut stats = PltStats::default();
    let mut points: Vec<TrajectoryPoint> = Vec::new();
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        stats.rows += 1;
        let Some(point) = parse_plt_row(line) else {
            stats.dropped_invalid += 1;
            continue;
        };
        match points.last() {
            Some(last) if point.timestamp == last.timestamp => stats.dropped_duplicate += 1,
            Some(last) if point.timestamp < last.timestamp => stats.dropped_out_of_order += 1,
            _ => points.push(point),
        }
    }
    stats.kept = points.len();
    if points.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    Ok((
        RawTrajectory {
            user_id: user_id.to_string(),
            points,
        },
        stats,
    ))
}

fn parse_plt_row(line: &str) -> Option<TrajectoryPoint> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 7 {
        return None;
    }
    let lat: f64 = fields[0].parse().ok()?;
    let lon: f64 = fields[1].parse().ok()?;
    let altitude_feet: f64 = fields[3].parse().ok()?;
    let _days: f64 = fields[4].parse().ok()?;
    let date = NaiveDate::parse_from_str(fields[5], "%Y-%m-%d").ok()?;
    let time = NaiveTime::parse_from_str(fields[6], "%H:%M:%S").ok()?;
    if !lat.is_finite() || !lon.is_finite() {
        return None;
    }
    let altitude = (altitude_feet != INVALID_ALTITUDE_FEET && altitude_feet.is_finite())
        .then_some(altitude_feet * FEET_TO_METERS);
    TrajectoryPoint::new(lat, lon, date.and_time(time))
        .ok()
        .map(|p| p.with_altitude(altitude))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeAnnotation {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub mode: String,
}

impl ModeAnnotation {
    /// Closed-interval containment.
    pub fn covers(&self, t: NaiveDateTime) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelFile {
    /// Sorted by start time.
    pub annotations: Vec<ModeAnnotation>,
    pub warnings: Vec<String>,
}

/// Parses a GeoLife `labels.txt` file.
///
/// Annotations with `end <= start` are rejected with a warning. Overlaps
/// are reported as warnings; [`label_points`] resolves them in favor of the
/// later annotation.
pub fn parse_labels<R: BufRead>(reader: R) -> Result<LabelFile> {
    let mut out = LabelFile::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line_no == 1 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(Error::format(
                Some(line_no),
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let parse_time = |s: &str| {
            NaiveDateTime::parse_from_str(s, LABEL_TIME_FORMAT)
                .map_err(|e| Error::format(Some(line_no), format!("bad time `{s}`: {e}")))
        };
        let start = parse_time(fields[0])?;
        let end = parse_time(fields[1])?;
        let mode = fields[2].to_string();
        if end <= start {
            out.warnings.push(format!(
                "line {line_no}: annotation ends ({end}) before it starts ({start}); rejected"
            ));
            continue;
        }
        out.annotations.push(ModeAnnotation { start, end, mode });
    }
    out.annotations.sort_by_key(|a| a.start);

    let mut latest_end: Option<NaiveDateTime> = None;
    for a in &out.annotations {
        if let Some(end) = latest_end {
            if a.start <= end {
                out.warnings.push(format!(
                    "annotation {} {}..{} overlaps an earlier one; later interval wins",
                    a.mode, a.start, a.end
                ));
            }
        }
        latest_end = Some(latest_end.map_or(a.end, |e| e.max(a.end)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub point: TrajectoryPoint,
    pub mode: Option<String>,
}

/// Attaches a mode to every point covered by an annotation.
///
/// `annotations` must be sorted by start. When several annotations cover a
/// point the one starting last wins.
pub fn label_points(traj: &RawTrajectory, annotations: &[ModeAnnotation]) -> Vec<LabeledPoint> {
    // running maximum of end times lets the backwards scan stop early
    let mut max_end = Vec::with_capacity(annotations.len());
    let mut running: Option<NaiveDateTime> = None;
    for a in annotations {
        running = Some(running.map_or(a.end, |e| e.max(a.end)));
        max_end.push(running.unwrap());
    }

    traj.points
        .iter()
        .map(|p| {
            let t = p.timestamp;
            let upto = annotations.partition_point(|a| a.start <= t);
            let mode = (0..upto)
                .rev()
                .take_while(|&j| max_end[j] >= t)
                .find(|&j| annotations[j].covers(t))
                .map(|j| annotations[j].mode.clone());
            LabeledPoint { point: *p, mode }
        })
        .collect()
}

/// One row of the canonical point table.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalRow {
    pub user_id: String,
    pub point: TrajectoryPoint,
    pub mode: Option<String>,
}

pub const CANONICAL_HEADER: [&str; 6] = ["user_id", "timestamp", "lat", "lon", "altitude", "mode"];

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format(CANONICAL_TIME_FORMAT).to_string()
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.strip_suffix('Z').unwrap_or(s);
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S").ok()
}

/// Streaming writer for the canonical table.
pub struct CanonicalWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CanonicalWriter<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        inner.write_record(CANONICAL_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &CanonicalRow) -> Result<()> {
        let p = &row.point;
        self.inner.write_record([
            row.user_id.as_str(),
            &format_timestamp(&p.timestamp),
            &p.lat.to_string(),
            &p.lon.to_string(),
            &p.altitude.map(|a| a.to_string()).unwrap_or_default(),
            row.mode.as_deref().unwrap_or(""),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

pub fn write_canonical<'a, W: Write>(
    writer: W,
    rows: impl IntoIterator<Item = &'a CanonicalRow>,
) -> Result<W> {
    let mut w = CanonicalWriter::new(writer)?;
    for row in rows {
        w.write(row)?;
    }
    w.finish()
}

struct ColumnMap {
    user_id: usize,
    timestamp: usize,
    lat: usize,
    lon: usize,
    altitude: Option<usize>,
    mode: Option<usize>,
}

/// Streaming reader over the canonical table; memory use is one record.
pub struct CanonicalReader<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    columns: ColumnMap,
    line: usize,
}

impl<R: Read> CanonicalReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut inner = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let headers = inner.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let required = |name: &str| {
            find(name).ok_or_else(|| Error::Schema(format!("missing required column `{name}`")))
        };
        let columns = ColumnMap {
            user_id: required("user_id")?,
            timestamp: required("timestamp")?,
            lat: required("lat")?,
            lon: required("lon")?,
            altitude: find("altitude"),
            mode: find("mode"),
        };
        Ok(Self {
            records: inner.into_records(),
            columns,
            line: 1,
        })
    }

    fn decode(&self, rec: &csv::StringRecord) -> Result<CanonicalRow> {
        let line = Some(self.line);
        let get = |i: usize| rec.get(i).unwrap_or("");
        let c = &self.columns;
        let timestamp = parse_timestamp(get(c.timestamp))
            .ok_or_else(|| Error::format(line, format!("bad timestamp `{}`", get(c.timestamp))))?;
        let num = |i: usize, what: &str| -> Result<f64> {
            get(i)
                .parse::<f64>()
                .map_err(|_| Error::format(line, format!("bad {what} `{}`", get(i))))
        };
        let lat = num(c.lat, "lat")?;
        let lon = num(c.lon, "lon")?;
        let altitude = match c.altitude.map(get) {
            None | Some("") => None,
            Some(_) => Some(num(c.altitude.unwrap(), "altitude")?),
        };
        let mode = c.mode.map(get).filter(|m| !m.is_empty()).map(str::to_string);
        let point = TrajectoryPoint::new(lat, lon, timestamp)
            .map_err(|e| Error::format(line, e.to_string()))?
            .with_altitude(altitude);
        Ok(CanonicalRow {
            user_id: get(c.user_id).to_string(),
            point,
            mode,
        })
    }
}

impl<R: Read> Iterator for CanonicalReader<R> {
    type Item = Result<CanonicalRow>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = self.records.next()?;
        self.line += 1;
        Some(rec.map_err(Error::from).and_then(|r| self.decode(&r)))
    }
}

pub fn read_canonical<R: Read>(reader: R) -> Result<Vec<CanonicalRow>> {
    CanonicalReader::new(reader)?.collect()
}

pub fn read_canonical_file(path: &Path) -> Result<Vec<CanonicalRow>> {
    read_canonical(BufReader::new(File::open(path)?))
}

/// Summary of a directory ingest, printed by the CLI.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub users: usize,
    pub users_with_labels: usize,
    pub files: usize,
    pub points: usize,
    pub labeled_points: usize,
    pub rows: PltStats,
    pub label_distribution: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

/// Resolves the `Data/` directory under a GeoLife root (or the root itself).
pub fn data_dir(root: &Path) -> Result<PathBuf> {
    if !root.is_dir() {
        return Err(Error::MissingDirectory(root.to_path_buf()));
    }
    let nested = root.join("Data");
    Ok(if nested.is_dir() { nested } else { root.to_path_buf() })
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Parses one user's PLT files and labels into time-ordered labeled points.
pub fn ingest_user(user_dir: &Path, user_id: &str) -> Result<(Vec<LabeledPoint>, IngestStats)> {
    let mut stats = IngestStats {
        users: 1,
        ..Default::default()
    };
    let traj_dir = user_dir.join("Trajectory");
    let files: Vec<PathBuf> = if traj_dir.is_dir() {
        sorted_entries(&traj_dir)?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("plt")))
            .collect()
    } else {
        Vec::new()
    };
    stats.files = files.len();

    let parsed: Vec<Result<(RawTrajectory, PltStats)>> = files
        .par_iter()
        .map(|path| parse_plt(BufReader::new(File::open(path)?), user_id))
        .collect();

    let mut points = Vec::new();
    for (path, res) in files.iter().zip(parsed) {
        match res {
            Ok((traj, s)) => {
                stats.rows.merge(&s);
                points.extend(traj.points);
            }
            Err(Error::EmptyTrajectory) => {
                stats.warnings.push(format!("{}: no valid rows", path.display()));
            }
            Err(e) => stats.warnings.push(format!("{}: {e}", path.display())),
        }
    }
    // files may overlap in time; keep the first fix per timestamp
    points.sort_by_key(|p| p.timestamp);
    let before = points.len();
    points.dedup_by_key(|p| p.timestamp);
    stats.rows.dropped_duplicate += before - points.len();
    stats.rows.kept = points.len();

    let labels_path = user_dir.join("labels.txt");
    let annotations = if labels_path.is_file() {
        stats.users_with_labels = 1;
        let lf = parse_labels(BufReader::new(File::open(&labels_path)?))?;
        stats
            .warnings
            .extend(lf.warnings.into_iter().map(|w| format!("{}: {w}", labels_path.display())));
        lf.annotations
    } else {
        Vec::new()
    };
    let traj = RawTrajectory {
        user_id: user_id.to_string(),
        points,
    };
    let labeled = label_points(&traj, &annotations);
    stats.points = labeled.len();
    for lp in &labeled {
        if let Some(m) = &lp.mode {
            stats.labeled_points += 1;
            *stats.label_distribution.entry(m.clone()).or_default() += 1;
        }
    }
    Ok((labeled, stats))
}

/// Ingests a GeoLife tree user by user, handing each user's rows to `sink`
/// in user-id order. Only one user's points are held in memory at a time.
pub fn ingest_directory<F>(root: &Path, mut sink: F) -> Result<IngestStats>
where
    F: FnMut(&[CanonicalRow]) -> Result<()>,
{
    let data = data_dir(root)?;
    let mut total = IngestStats::default();
    for user_dir in sorted_entries(&data)?.into_iter().filter(|p| p.is_dir()) {
        let user_id = user_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (labeled, stats) = ingest_user(&user_dir, &user_id)?;
        if stats.files == 0 {
            continue;
        }
        let rows: Vec<CanonicalRow> = labeled
            .into_iter()
            .map(|lp| CanonicalRow {
                user_id: user_id.clone(),
                point: lp.point,
                mode: lp.mode,
            })
            .collect();
        sink(&rows)?;
        total.users += 1;
        total.users_with_labels += stats.users_with_labels;
        total.files += stats.files;
        total.points += stats.points;
        total.labeled_points += stats.labeled_points;
        total.rows.merge(&stats.rows);
        for (m, c) in stats.label_distribution {
            *total.label_distribution.entry(m).or_default() += c;
        }
        total.warnings.extend(stats.warnings);
    }
    if total.files == 0 {
        return Err(Error::EmptyInput(format!(
            "no .plt files under {}",
            data.display()
        )));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "Geolife trajectory\nWGS 84\nAltitude is in Feet\nReserved 3\n0,2,255,My Track,0,0,2,8421376\n0\n";

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").unwrap()
    }

    fn plt(rows: &[&str]) -> String {
        let mut s = HEADER.to_string();
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn parses_geolife_row() {
        let src = plt(&["39.984702,116.318417,0,492,39744.1201851852,2008-10-23,02:53:04"]);
        let (traj, stats) = parse_plt(src.as_bytes(), "000").unwrap();
        assert_eq!(stats.kept, 1);
        let p = traj.points[0];
        assert_eq!(p.lat, 39.984702);
        assert_eq!(p.lon, 116.318417);
        assert!((p.altitude.unwrap() - 149.9616).abs() < 1e-9);
        assert_eq!(p.timestamp, ts("2008-10-23 02:53:04"));
    }

    #[test]
    fn drops_out_of_range_and_duplicates() {
        let src = plt(&[
            "39.9,116.3,0,492,39744.12,2008-10-23,02:53:04",
            "91.0,116.3,0,492,39744.12,2008-10-23,02:53:05",
            "39.9,116.3,0,492,39744.12,2008-10-23,02:53:04",
            "39.9,116.3,0,-777,39744.12,2008-10-23,02:53:06",
            "garbage",
            "39.9,116.3,0,1,39744.12,2008-10-23,02:53:01",
        ]);
        let (traj, stats) = parse_plt(src.as_bytes(), "u").unwrap();
        assert_eq!(traj.points.len(), 2);
        assert_eq!(stats.dropped_invalid, 2);
        assert_eq!(stats.dropped_duplicate, 1);
        assert_eq!(stats.dropped_out_of_order, 1);
        assert_eq!(traj.points[1].altitude, None);
    }

    #[test]
    fn header_and_empty_errors() {
        let err = parse_plt("not geolife\n1\n2\n3\n4\n5\n".as_bytes(), "u").unwrap_err();
        assert!(matches!(err, Error::Format { line: Some(1), .. }));
        let err = parse_plt("Geolife trajectory\nWGS 84\n".as_bytes(), "u").unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        let err = parse_plt(plt(&["91,0,0,0,0,2008-10-23,02:53:04"]).as_bytes(), "u").unwrap_err();
        assert!(matches!(err, Error::EmptyTrajectory));
    }

    const LABEL_HEADER: &str = "Start Time\tEnd Time\tTransportation Mode\n";

    #[test]
    fn parses_labels() {
        let src = format!("{LABEL_HEADER}2008/04/02 11:24:21\t2008/04/02 11:50:45\twalk\n");
        let lf = parse_labels(src.as_bytes()).unwrap();
        assert_eq!(
            lf.annotations,
            vec![ModeAnnotation {
                start: ts("2008-04-02 11:24:21"),
                end: ts("2008-04-02 11:50:45"),
                mode: "walk".into()
            }]
        );
        assert!(parse_labels(LABEL_HEADER.as_bytes()).unwrap().annotations.is_empty());
    }

    #[test]
    fn label_errors_and_warnings() {
        let src = format!("{LABEL_HEADER}2008/04/02 11:24:21\t2008/04/02 11:00:00\twalk\n");
        let lf = parse_labels(src.as_bytes()).unwrap();
        assert!(lf.annotations.is_empty());
        assert_eq!(lf.warnings.len(), 1);

        let src = format!("{LABEL_HEADER}\n2008/04/02 xx\t2008/04/02 11:00:00\twalk\n");
        match parse_labels(src.as_bytes()).unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, Some(3)),
            e => panic!("unexpected {e}"),
        }

        let src = format!(
            "{LABEL_HEADER}2008/04/02 12:00:00\t2008/04/02 13:00:00\tbus\n2008/04/02 11:00:00\t2008/04/02 12:30:00\twalk\n"
        );
        let lf = parse_labels(src.as_bytes()).unwrap();
        assert_eq!(lf.annotations[0].mode, "walk");
        assert_eq!(lf.warnings.len(), 1);
    }

    fn traj(times: &[&str]) -> RawTrajectory {
        RawTrajectory {
            user_id: "u".into(),
            points: times
                .iter()
                .map(|t| TrajectoryPoint::new(40.0, 116.0, ts(t)).unwrap())
                .collect(),
        }
    }

    #[test]
    fn labels_closed_intervals() {
        let ann = vec![ModeAnnotation {
            start: ts("2008-04-02 11:24:21"),
            end: ts("2008-04-02 11:50:45"),
            mode: "walk".into(),
        }];
        let t = traj(&["2008-04-02 11:24:20", "2008-04-02 11:30:00", "2008-04-02 11:50:45", "2008-04-02 12:00:00"]);
        let modes: Vec<_> = label_points(&t, &ann).into_iter().map(|l| l.mode).collect();
        assert_eq!(modes, vec![None, Some("walk".into()), Some("walk".into()), None]);
    }

    #[test]
    fn later_annotation_wins_overlap() {
        let ann = vec![
            ModeAnnotation {
                start: ts("2008-04-02 11:00:00"),
                end: ts("2008-04-02 13:00:00"),
                mode: "walk".into(),
            },
            ModeAnnotation {
                start: ts("2008-04-02 11:30:00"),
                end: ts("2008-04-02 12:00:00"),
                mode: "bus".into(),
            },
        ];
        let t = traj(&["2008-04-02 11:10:00", "2008-04-02 11:45:00", "2008-04-02 12:30:00"]);
        let modes: Vec<_> = label_points(&t, &ann).into_iter().map(|l| l.mode).collect();
        assert_eq!(
            modes,
            vec![Some("walk".into()), Some("bus".into()), Some("walk".into())]
        );
    }

    #[test]
    fn canonical_missing_column() {
        let src = "user_id,timestamp,lon\nu,2008-01-01T00:00:00Z,1\n";
        match CanonicalReader::new(src.as_bytes()) {
            Err(Error::Schema(msg)) => assert!(msg.contains("lat")),
            _ => panic!("expected schema error"),
        }
    }

    #[test]
    fn canonical_round_trip_with_absent_cells() {
        let rows = vec![
            CanonicalRow {
                user_id: "010".into(),
                point: TrajectoryPoint::new(39.1, 116.2, ts("2008-04-02 11:00:00"))
                    .unwrap()
                    .with_altitude(Some(149.9616)),
                mode: Some("walk".into()),
            },
            CanonicalRow {
                user_id: "010".into(),
                point: TrajectoryPoint::new(-0.1, -179.999999, ts("2008-04-02 11:00:01")).unwrap(),
                mode: None,
            },
        ];
        let buf = write_canonical(Vec::new(), &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("user_id,timestamp,lat,lon,altitude,mode\n"));
        assert!(text.contains("2008-04-02T11:00:01Z"));
        assert_eq!(read_canonical(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn canonical_rejects_bad_values() {
        let src = "user_id,timestamp,lat,lon,altitude,mode\nu,2008-01-01T00:00:00Z,95,1,,\n";
        let err = read_canonical(src.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format { line: Some(2), .. }));
    }
}
