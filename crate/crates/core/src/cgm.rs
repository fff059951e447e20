//! CGM time-series ingestion: CSV parsing, range clamping, de-duplication and
//! day-level quality filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantile::{GLUCOSE_MAX, GLUCOSE_MIN};
use crate::scalar::Scalar;

pub const SERIES_HEADER: [&str; 3] = ["subject_id", "timestamp", "glucose"];
pub const LABELS_HEADER: [&str; 2] = ["subject_id", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlucoseRecord {
    pub timestamp: DateTime<Utc>,
    /// mg/dL, within the device range after clamping.
    pub glucose: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSeries {
    pub subject_id: String,
    pub records: Vec<GlucoseRecord>,
    pub nominal_interval_minutes: f64,
    pub retained_days: usize,
}

impl SubjectSeries {
    /// Builds a series from unsorted records; sorts by time and drops exact
    /// duplicate timestamps, keeping the first occurrence. Returns the number
    /// of records dropped as duplicates.
    pub fn from_records(subject_id: impl Into<String>, mut records: Vec<GlucoseRecord>, nominal_interval_minutes: f64) -> (Self, usize) {
        records.sort_by_key(|r| r.timestamp);
        let before = records.len();
        records.dedup_by_key(|r| r.timestamp);
        let deduped = before - records.len();
        let retained_days = distinct_days(&records);
        (
            Self {
                subject_id: subject_id.into(),
                records,
                nominal_interval_minutes,
                retained_days,
            },
            deduped,
        )
    }

    pub fn is_excluded(&self) -> bool {
        self.records.is_empty()
    }

    pub fn glucose(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.glucose).collect()
    }

    /// Minutes since the first record, paired with glucose values.
    pub fn minutes_and_values<T: Scalar>(&self) -> (Vec<T>, Vec<T>) {
        let Some(t0) = self.records.first().map(|r| r.timestamp) else {
            return (Vec::new(), Vec::new());
        };
        self.records
            .iter()
            .map(|r| (T::lit((r.timestamp - t0).num_seconds() as f64 / 60.0), T::lit(r.glucose)))
            .unzip()
    }
}

fn distinct_days(records: &[GlucoseRecord]) -> usize {
    records.iter().map(|r| r.timestamp.date_naive()).collect::<BTreeSet<_>>().len()
}

/// Subject → case (`true`) / control (`false`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortLabels(pub BTreeMap<String, bool>);

impl CohortLabels {
    pub fn get(&self, subject: &str) -> Option<bool> {
        self.0.get(subject).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    /// Longest single gap in the day.
    Single,
    /// Total non-acquisition time in the day.
    #[default]
    Cumulative,
}

impl FromStr for GapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(GapMode::Single),
            "cumulative" => Ok(GapMode::Cumulative),
            other => Err(Error::InvalidArgument(format!("unknown gap mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayFilter {
    pub max_gap_minutes: f64,
    pub mode: GapMode,
    /// Subjects with fewer retained days are excluded.
    pub min_days: usize,
    /// Intervals up to this multiple of the nominal sampling interval count as
    /// normal acquisition; longer ones count in full as missing time.
    pub normal_gap_factor: f64,
}

impl Default for DayFilter {
    fn default() -> Self {
        Self {
            max_gap_minutes: 120.0,
            mode: GapMode::Cumulative,
            min_days: 2,
            normal_gap_factor: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DayFilterOutcome {
    pub dropped_days: usize,
    pub dropped_records: usize,
    pub excluded: bool,
}

fn day_start(date: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight exists"))
}

/// Keeps only UTC calendar days whose missing time stays within the limit.
///
/// Each day is inspected over its part of the monitoring window (clipped to
/// the first and last record of the series). Intervals between consecutive
/// samples, and from the window edges to the first/last sample of the day,
/// count as missing time when longer than the normal gap.
pub fn filter_days(series: &SubjectSeries, filter: &DayFilter) -> (SubjectSeries, DayFilterOutcome) {
    let (Some(first), Some(last)) = (series.records.first(), series.records.last()) else {
        return (
            SubjectSeries {
                retained_days: 0,
                ..series.clone()
            },
            DayFilterOutcome {
                excluded: true,
                ..Default::default()
            },
        );
    };
    let (series_start, series_end) = (first.timestamp, last.timestamp);
    let normal = filter.normal_gap_factor * series.nominal_interval_minutes;

    let mut kept = Vec::with_capacity(series.records.len());
    let mut outcome = DayFilterOutcome::default();
    let mut retained_days = 0;
    let mut start = 0;
    while start < series.records.len() {
        let date = series.records[start].timestamp.date_naive();
        let end = start + series.records[start..].partition_point(|r| r.timestamp.date_naive() == date);
        let day = &series.records[start..end];

        let window_start = day_start(date).max(series_start);
        let window_end = (day_start(date) + Duration::days(1)).min(series_end);
        let mut points = Vec::with_capacity(day.len() + 2);
        points.push(window_start);
        points.extend(day.iter().map(|r| r.timestamp));
        points.push(window_end.max(day[day.len() - 1].timestamp));
        let gaps = points
            .windows(2)
            .map(|w| (w[1] - w[0]).num_seconds() as f64 / 60.0)
            .filter(|&g| g > normal);
        let missing = match filter.mode {
            GapMode::Single => gaps.fold(0.0, f64::max),
            GapMode::Cumulative => gaps.sum(),
        };
        if missing > filter.max_gap_minutes {
            outcome.dropped_days += 1;
            outcome.dropped_records += day.len();
        } else {
            retained_days += 1;
            kept.extend_from_slice(day);
        }
        start = end;
    }
    if retained_days == 0 || retained_days < filter.min_days {
        outcome.excluded = true;
        outcome.dropped_records += kept.len();
        kept.clear();
        retained_days = 0;
    }
    (
        SubjectSeries {
            subject_id: series.subject_id.clone(),
            records: kept,
            nominal_interval_minutes: series.nominal_interval_minutes,
            retained_days,
        },
        outcome,
    )
}

/// Per-subject accounting. Every input row ends up retained, de-duplicated
/// or dropped by the day filter: `rows = retained_records + deduped + dropped_records`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub rows: usize,
    pub retained_records: usize,
    pub retained_days: usize,
    pub dropped_days: usize,
    pub dropped_records: usize,
    pub clamped: usize,
    pub deduped: usize,
    pub excluded: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub subjects: BTreeMap<String, SubjectReport>,
    /// Labelled subjects with no rows in the series file.
    pub missing_series: Vec<String>,
    /// Subjects with series rows but no label.
    pub unlabeled: Vec<String>,
    pub excluded: Vec<String>,
}

/// Parsed and filtered cohort.
#[derive(Debug, Clone)]
pub struct Cohort {
    /// Retained (non-excluded) subjects, ordered by id.
    pub series: Vec<SubjectSeries>,
    pub labels: CohortLabels,
    pub report: IngestReport,
}

fn parse_error(file: &str, line: u64, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn check_header(reader: &mut csv::Reader<impl Read>, file: &str, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    if header.len() != expected.len() || header.iter().zip(expected).any(|(h, e)| h != *e) {
        return Err(Error::Header {
            file: file.to_string(),
            expected: expected.join(","),
        });
    }
    Ok(())
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

/// ISO-8601 timestamp at second resolution. Values without an offset are UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let parsed = DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .ok()
        .or_else(|| {
            ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
                .iter()
                .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
                .map(|n| Utc.from_utc_datetime(&n))
        })?;
    parsed.with_nanosecond(0)
}

/// Rows grouped per subject (ordered by id) plus per-subject counts.
pub struct ParsedSeries {
    pub series: Vec<SubjectSeries>,
    pub reports: BTreeMap<String, SubjectReport>,
}

/// Parses `subject_id,timestamp,glucose` rows, clamping glucose to the device range.
pub fn read_series<R: Read>(reader: R, file: &str, nominal_interval_minutes: f64) -> Result<ParsedSeries> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, file, &SERIES_HEADER)?;
    let mut raw: BTreeMap<String, Vec<GlucoseRecord>> = BTreeMap::new();
    let mut reports: BTreeMap<String, SubjectReport> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(parse_error(file, line, "row", format!("expected 3 fields, found {}", row.len())));
        }
        let subject = row[0].to_string();
        if subject.is_empty() {
            return Err(parse_error(file, line, "subject_id", "empty"));
        }
        let timestamp =
            parse_timestamp(&row[1]).ok_or_else(|| parse_error(file, line, "timestamp", format!("`{}` is not ISO-8601", &row[1])))?;
        let glucose: f64 = row[2]
            .parse()
            .ok()
            .filter(|g: &f64| g.is_finite())
            .ok_or_else(|| parse_error(file, line, "glucose", format!("`{}` is not a number", &row[2])))?;
        let report = reports.entry(subject.clone()).or_default();
        report.rows += 1;
        let clamped = glucose.clamp(GLUCOSE_MIN, GLUCOSE_MAX);
        if clamped != glucose {
            report.clamped += 1;
        }
        raw.entry(subject).or_default().push(GlucoseRecord {
            timestamp,
            glucose: clamped,
        });
    }
    let series = raw
        .into_iter()
        .map(|(id, records)| {
            let (s, deduped) = SubjectSeries::from_records(id.clone(), records, nominal_interval_minutes);
            let r = reports.get_mut(&id).expect("report exists for every subject");
            r.deduped = deduped;
            r.retained_records = s.records.len();
            r.retained_days = s.retained_days;
            s
        })
        .collect();
    Ok(ParsedSeries { series, reports })
}

/// Parses `subject_id,label` with labels in `{0, 1}`.
pub fn read_labels<R: Read>(reader: R, file: &str) -> Result<CohortLabels> {
    let mut rdr = csv_reader(reader);
    check_header(&mut rdr, file, &LABELS_HEADER)?;
    let mut labels = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 2 {
            return Err(parse_error(file, line, "row", format!("expected 2 fields, found {}", row.len())));
        }
        let label = match &row[1] {
            "0" => false,
            "1" => true,
            other => return Err(parse_error(file, line, "label", format!("`{other}` is not 0 or 1"))),
        };
        if let Some(prev) = labels.insert(row[0].to_string(), label) {
            if prev != label {
                return Err(parse_error(file, line, "label", format!("conflicting labels for subject {}", &row[0])));
            }
        }
    }
    Ok(CohortLabels(labels))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

pub fn read_labels_file(path: &Path) -> Result<CohortLabels> {
    read_labels(open(path)?, &path.display().to_string())
}

/// Parses both files, applies the day filter per subject and reconciles labels.
pub fn parse_cohort(series_path: &Path, labels_path: &Path, filter: &DayFilter, nominal_interval_minutes: f64) -> Result<Cohort> {
    let labels = read_labels_file(labels_path)?;
    let parsed = read_series(open(series_path)?, &series_path.display().to_string(), nominal_interval_minutes)?;
    Ok(assemble_cohort(parsed, labels, filter))
}

pub fn assemble_cohort(parsed: ParsedSeries, labels: CohortLabels, filter: &DayFilter) -> Cohort {
    let ParsedSeries { series, mut reports } = parsed;
    let filtered: Vec<(SubjectSeries, DayFilterOutcome)> = series.par_iter().map(|s| filter_days(s, filter)).collect();
    let mut report = IngestReport::default();
    let mut retained = Vec::new();
    for (s, outcome) in filtered {
        let r = reports.get_mut(&s.subject_id).expect("report exists for every subject");
        r.dropped_days = outcome.dropped_days;
        r.dropped_records = outcome.dropped_records;
        r.retained_records = s.records.len();
        r.retained_days = s.retained_days;
        r.excluded = outcome.excluded;
        if labels.get(&s.subject_id).is_none() {
            report.unlabeled.push(s.subject_id.clone());
        }
        if outcome.excluded {
            report.excluded.push(s.subject_id.clone());
        } else {
            retained.push(s);
        }
    }
    report.missing_series = labels.0.keys().filter(|id| !reports.contains_key(*id)).cloned().collect();
    report.subjects = reports;
    Cohort {
        series: retained,
        labels,
        report,
    }
}

/// Writes series rows in the input format; timestamps as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn write_series<W: Write>(writer: W, series: &[SubjectSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SERIES_HEADER)?;
    for s in series {
        for r in &s.records {
            w.write_record([
                s.subject_id.as_str(),
                &r.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
                &r.glucose.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<series output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> DateTime<Utc> {
        parse_timestamp(s).unwrap()
    }

    fn series_from(times: &[DateTime<Utc>]) -> SubjectSeries {
        let recs = times.iter().map(|&t| GlucoseRecord { timestamp: t, glucose: 100.0 }).collect();
        SubjectSeries::from_records("s", recs, 5.0).0
    }

    fn regular_days(days: i64) -> Vec<DateTime<Utc>> {
        let t0 = ts("2020-01-01T00:00:00Z");
        (0..days * 288).map(|i| t0 + Duration::minutes(5 * i)).collect()
    }

    #[test]
    fn shuffled_rows_are_sorted() {
        let csv = "subject_id,timestamp,glucose\ns1,2020-01-01T00:10:00Z,120\ns1,2020-01-01T00:00:00Z,100\ns1,2020-01-01T00:05:00,110\n";
        let p = read_series(csv.as_bytes(), "series.csv", 5.0).unwrap();
        assert_eq!(p.series.len(), 1);
        let g: Vec<f64> = p.series[0].glucose();
        assert_eq!(g, vec![100.0, 110.0, 120.0]);
    }

    #[test]
    fn out_of_range_is_clamped_and_counted() {
        let csv = "subject_id,timestamp,glucose\ns1,2020-01-01T00:00:00Z,39.0\ns1,2020-01-01T00:05:00Z,401\n";
        let p = read_series(csv.as_bytes(), "series.csv", 5.0).unwrap();
        assert_eq!(p.series[0].glucose(), vec![40.0, 400.0]);
        assert_eq!(p.reports["s1"].clamped, 2);
    }

    #[test]
    fn bad_timestamp_cites_line() {
        let csv = "subject_id,timestamp,glucose\ns1,2020-01-01T00:00:00Z,100\ns1,not-a-date,100\n";
        let err = read_series(csv.as_bytes(), "series.csv", 5.0).err().unwrap();
        let msg = err.to_string();
        assert!(msg.contains("series.csv:3"), "{msg}");
        assert!(msg.contains("timestamp"), "{msg}");
    }

    #[test]
    fn bad_glucose_cites_field() {
        let csv = "subject_id,timestamp,glucose\ns1,2020-01-01T00:00:00Z,high\n";
        let msg = read_series(csv.as_bytes(), "f.csv", 5.0).err().unwrap().to_string();
        assert!(msg.contains("f.csv:2") && msg.contains("glucose"), "{msg}");
    }

    #[test]
    fn header_is_mandatory() {
        let csv = "s1,2020-01-01T00:00:00Z,100\n";
        assert!(matches!(read_series(csv.as_bytes(), "f.csv", 5.0), Err(Error::Header { .. })));
    }

    #[test]
    fn duplicate_timestamps_keep_first() {
        let csv = "subject_id,timestamp,glucose\ns1,2020-01-01T00:00:00Z,100\ns1,2020-01-01T00:00:00Z,150\n";
        let p = read_series(csv.as_bytes(), "f.csv", 5.0).unwrap();
        assert_eq!(p.series[0].glucose(), vec![100.0]);
        assert_eq!(p.reports["s1"].deduped, 1);
    }

    #[test]
    fn labels_must_be_binary() {
        let ok = read_labels("subject_id,label\na,0\nb,1\n".as_bytes(), "l.csv").unwrap();
        assert_eq!(ok.get("b"), Some(true));
        let msg = read_labels("subject_id,label\na,2\n".as_bytes(), "l.csv").unwrap_err().to_string();
        assert!(msg.contains("l.csv:2") && msg.contains("label"), "{msg}");
    }

    #[test]
    fn uniform_day_retained() {
        let s = series_from(&regular_days(2));
        let (f, o) = filter_days(&s, &DayFilter::default());
        assert_eq!(f.retained_days, 2);
        assert_eq!(o, DayFilterOutcome::default());
    }

    #[test]
    fn day_with_long_gap_discarded() {
        let t0 = ts("2020-01-01T00:00:00Z");
        let mut times = regular_days(3);
        // Remove samples strictly inside a 125-minute window on day two.
        let gap_start = t0 + Duration::minutes(24 * 60 + 600);
        times.retain(|&t| !(t > gap_start && t < gap_start + Duration::minutes(125)));
        let s = series_from(&times);
        for mode in [GapMode::Single, GapMode::Cumulative] {
            let cfg = DayFilter { mode, ..Default::default() };
            let (f, o) = filter_days(&s, &cfg);
            assert_eq!((f.retained_days, o.dropped_days), (2, 1), "{mode:?}");
        }
    }

    #[test]
    fn modes_differ_on_many_short_gaps() {
        let t0 = ts("2020-01-01T00:00:00Z");
        let mut times = regular_days(3);
        // Three 60-minute holes on day two: 180 cumulative minutes, longest 60.
        for h in [3, 9, 15] {
            let s = t0 + Duration::minutes(24 * 60 + h * 60);
            times.retain(|&t| !(t > s && t < s + Duration::minutes(60)));
        }
        let s = series_from(&times);
        let single = filter_days(&s, &DayFilter { mode: GapMode::Single, ..Default::default() }).0;
        let cumulative = filter_days(&s, &DayFilter::default()).0;
        assert_eq!(single.retained_days, 3);
        assert_eq!(cumulative.retained_days, 2);
    }

    #[test]
    fn two_of_seven_days_kept() {
        let t0 = ts("2020-01-01T00:00:00Z");
        let mut times = regular_days(7);
        for d in [1, 2, 3, 4, 5] {
            let s = t0 + Duration::minutes(d * 24 * 60 + 300);
            times.retain(|&t| !(t > s && t < s + Duration::minutes(180)));
        }
        let s = series_from(&times);
        let (f, o) = filter_days(&s, &DayFilter::default());
        assert_eq!(f.retained_days, 2);
        assert!(!o.excluded);
        let strict = DayFilter { min_days: 3, ..Default::default() };
        let (f, o) = filter_days(&s, &strict);
        assert!(o.excluded && f.records.is_empty());
    }

    #[test]
    fn filter_is_idempotent() {
        let t0 = ts("2020-01-01T07:30:00Z");
        let mut times: Vec<_> = (0..4 * 288).map(|i| t0 + Duration::minutes(5 * i)).collect();
        let s = t0 + Duration::minutes(30 * 60);
        times.retain(|&t| !(t > s && t < s + Duration::minutes(200)));
        let s = series_from(&times);
        let cfg = DayFilter::default();
        let (once, _) = filter_days(&s, &cfg);
        let (twice, o2) = filter_days(&once, &cfg);
        assert_eq!(once, twice);
        assert_eq!(o2.dropped_days, 0);
    }

    #[test]
    fn cohort_reconciles_labels() {
        let csv = "subject_id,timestamp,glucose\n".to_string()
            + &regular_days(2)
                .iter()
                .map(|t| format!("a,{},100\n", t.format("%Y-%m-%dT%H:%M:%SZ")))
                .collect::<String>()
            + "b,2020-01-01T00:00:00Z,90\n";
        let parsed = read_series(csv.as_bytes(), "s.csv", 5.0).unwrap();
        let labels = read_labels("subject_id,label\na,1\nc,0\n".as_bytes(), "l.csv").unwrap();
        let cohort = assemble_cohort(parsed, labels, &DayFilter::default());
        assert_eq!(cohort.series.len(), 1);
        assert_eq!(cohort.report.missing_series, vec!["c".to_string()]);
        assert_eq!(cohort.report.unlabeled, vec!["b".to_string()]);
        assert_eq!(cohort.report.excluded, vec!["b".to_string()]);
        for r in cohort.report.subjects.values() {
            assert_eq!(r.rows, r.retained_records + r.deduped + r.dropped_records);
        }
    }

    #[test]
    fn write_then_read_round_trips() {
        let csv = "subject_id,timestamp,glucose\ns1,2020-01-01T00:00:00Z,101.25\ns1,2020-01-01T00:05:00Z,99.5\ns2,2020-03-01 12:00:00,77\n";
        let p = read_series(csv.as_bytes(), "s.csv", 5.0).unwrap();
        let mut out = Vec::new();
        write_series(&mut out, &p.series).unwrap();
        let again = read_series(out.as_slice(), "out.csv", 5.0).unwrap();
        assert_eq!(p.series, again.series);
    }
}
