//! Event and population table ingestion.
//!
//! Events arrive as delimited text with a header row and ISO-8601 timestamps;
//! every timestamp is normalized to UTC. Invalid rows are collected in a
//! rejection report instead of being dropped silently.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed delimited text: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema column `{0}` not found in header")]
    MissingColumn(String),
    #[error("{rejected} of {total} rows rejected; input looks malformed")]
    MostlyRejected { rejected: usize, total: usize },
    #[error("row {line}: {reason}")]
    BadPopulationRow { line: u64, reason: String },
    #[error("zero total population")]
    ZeroPopulation,
    #[error("duplicate population centroid ({lon}, {lat})")]
    DuplicateCentroid { lon: f64, lat: f64 },
}

/// Axis-aligned lon/lat rectangle; containment is inclusive on every edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBox {
    pub lon_min: f64,
    pub lat_min: f64,
    pub lon_max: f64,
    pub lat_max: f64,
}

impl GeoBox {
    pub fn new(lon_min: f64, lat_min: f64, lon_max: f64, lat_max: f64) -> Self {
        Self {
            lon_min,
            lat_min,
            lon_max,
            lat_max,
        }
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.lon_min && lon <= self.lon_max && lat >= self.lat_min && lat <= self.lat_max
    }

    pub fn width(&self) -> f64 {
        self.lon_max - self.lon_min
    }

    pub fn height(&self) -> f64 {
        self.lat_max - self.lat_min
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.lon_min + self.lon_max),
            0.5 * (self.lat_min + self.lat_max),
        )
    }

    /// Smallest box holding every point; `None` for an empty iterator.
    pub fn enclosing(points: impl IntoIterator<Item = (f64, f64)>) -> Option<Self> {
        points.into_iter().fold(None, |acc, (lon, lat)| {
            Some(match acc {
                None => GeoBox::new(lon, lat, lon, lat),
                Some(b) => GeoBox::new(
                    b.lon_min.min(lon),
                    b.lat_min.min(lat),
                    b.lon_max.max(lon),
                    b.lat_max.max(lat),
                ),
            })
        })
    }
}

/// Half-open UTC interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        t >= self.start && t < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub timestamp: DateTime<Utc>,
    pub lon: f64,
    pub lat: f64,
    pub category: String,
}

/// Validated events, sorted ascending by timestamp.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventTable {
    pub records: Vec<EventRecord>,
    pub source_id: String,
}

impl EventTable {
    /// Builds a table from arbitrary records, establishing the sort order.
    pub fn new(source_id: impl Into<String>, mut records: Vec<EventRecord>) -> Self {
        records.sort_by_key(|r| r.timestamp);
        Self {
            records,
            source_id: source_id.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationCell {
    pub lon: f64,
    pub lat: f64,
    pub population: f64,
}

/// Column mapping for event files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSchema {
    pub timestamp: String,
    pub lon: String,
    pub lat: String,
    pub category: String,
    pub delimiter: u8,
}

impl Default for EventSchema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            lon: "lon".into(),
            lat: "lat".into(),
            category: "category".into(),
            delimiter: b',',
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseOptions {
    pub schema: EventSchema,
    /// Study window; rows outside it are rejected.
    pub window: Option<TimeWindow>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    /// 1-based line number in the source file (the header is line 1).
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedEvents {
    pub table: EventTable,
    pub rejects: Vec<Rejection>,
}

pub fn parse_events(path: &Path, opts: &ParseOptions) -> Result<ParsedEvents, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Open {
        path: path.display().to_string(),
        source,
    })?;
    parse_events_from_reader(file, &path.display().to_string(), opts)
}

pub fn parse_events_from_reader<R: Read>(
    reader: R,
    source_id: &str,
    opts: &ParseOptions,
) -> Result<ParsedEvents, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.schema.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let (i_ts, i_lon, i_lat, i_cat) = (
        col(&opts.schema.timestamp)?,
        col(&opts.schema.lon)?,
        col(&opts.schema.lat)?,
        col(&opts.schema.category)?,
    );

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut total = 0usize;
    for (row, result) in rdr.records().enumerate() {
        total += 1;
        let line = row as u64 + 2;
        let rec = match result {
            Ok(rec) => rec,
            Err(e) => {
                rejects.push(Rejection {
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        match parse_event_row(&rec, [i_ts, i_lon, i_lat, i_cat], opts.window.as_ref()) {
            Ok(ev) => records.push(ev),
            Err(reason) => rejects.push(Rejection { line, reason }),
        }
    }
    if total > 0 && rejects.len() * 2 > total {
        return Err(IngestError::MostlyRejected {
            rejected: rejects.len(),
            total,
        });
    }
    Ok(ParsedEvents {
        table: EventTable::new(source_id, records),
        rejects,
    })
}

fn parse_event_row(
    rec: &csv::StringRecord,
    [i_ts, i_lon, i_lat, i_cat]: [usize; 4],
    window: Option<&TimeWindow>,
) -> Result<EventRecord, String> {
    let field = |i: usize| rec.get(i).ok_or_else(|| format!("missing field {i}"));
    let timestamp = parse_timestamp(field(i_ts)?)?;
    let lon: f64 = field(i_lon)?
        .parse()
        .map_err(|_| format!("unparsable lon `{}`", field(i_lon).unwrap_or("")))?;
    let lat: f64 = field(i_lat)?
        .parse()
        .map_err(|_| format!("unparsable lat `{}`", field(i_lat).unwrap_or("")))?;
    if !(-180.0..=180.0).contains(&lon) {
        return Err(format!("lon {lon} out of range"));
    }
    if !(-90.0..=90.0).contains(&lat) {
        return Err(format!("lat {lat} out of range"));
    }
    if let Some(w) = window {
        if !w.contains(timestamp) {
            return Err(format!("timestamp {timestamp} outside study window"));
        }
    }
    Ok(EventRecord {
        timestamp,
        lon,
        lat,
        category: field(i_cat)?.to_string(),
    })
}

/// Parses an ISO-8601 instant to UTC at seconds resolution.
///
/// Accepts RFC 3339 with an offset, naive date-times (taken as UTC) with a
/// `T` or space separator, and bare dates (midnight UTC).
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, String> {
    let parsed = if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        t.with_timezone(&Utc)
    } else if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f") {
        t.and_utc()
    } else if let Ok(t) = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f") {
        t.and_utc()
    } else if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc()
    } else {
        return Err(format!("unparsable timestamp `{s}`"));
    };
    Ok(parsed
        .with_nanosecond(0)
        .expect("zero nanoseconds is valid"))
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Writes the canonical `timestamp,lon,lat,category` form.
pub fn write_events<W: Write>(table: &EventTable, writer: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "lon", "lat", "category"])?;
    for r in &table.records {
        w.write_record([
            format_timestamp(&r.timestamp),
            r.lon.to_string(),
            r.lat.to_string(),
            r.category.clone(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes the `.rejects.csv` sidecar.
pub fn write_rejects<W: Write>(rejects: &[Rejection], writer: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["line", "reason"])?;
    for r in rejects {
        w.write_record([r.line.to_string(), r.reason.clone()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Drops exact duplicate tuples, keeping the first occurrence.
pub fn dedup_events(table: &EventTable) -> EventTable {
    let mut seen = HashSet::new();
    let records = table
        .records
        .iter()
        .filter(|r| {
            seen.insert((
                r.timestamp,
                r.lon.to_bits(),
                r.lat.to_bits(),
                r.category.clone(),
            ))
        })
        .cloned()
        .collect();
    EventTable {
        records,
        source_id: table.source_id.clone(),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventFilter {
    pub category: Option<String>,
    pub window: Option<TimeWindow>,
    pub bbox: Option<GeoBox>,
}

impl EventFilter {
    pub fn matches(&self, r: &EventRecord) -> bool {
        self.category.as_ref().is_none_or(|c| &r.category == c)
            && self.window.as_ref().is_none_or(|w| w.contains(r.timestamp))
            && self.bbox.as_ref().is_none_or(|b| b.contains(r.lon, r.lat))
    }
}

/// Keeps the records satisfying every predicate in `filter`, in order.
pub fn filter_events(table: &EventTable, filter: &EventFilter) -> EventTable {
    EventTable {
        records: table
            .records
            .iter()
            .filter(|r| filter.matches(r))
            .cloned()
            .collect(),
        source_id: table.source_id.clone(),
    }
}

pub fn parse_population(path: &Path) -> Result<Vec<PopulationCell>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Open {
        path: path.display().to_string(),
        source,
    })?;
    parse_population_from_reader(file)
}

pub fn parse_population_from_reader<R: Read>(
    reader: R,
) -> Result<Vec<PopulationCell>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let (i_lon, i_lat, i_pop) = (col("lon")?, col("lat")?, col("population")?);

    let mut cells = Vec::new();
    let mut seen = HashSet::new();
    for (row, result) in rdr.records().enumerate() {
        let line = row as u64 + 2;
        let rec = result?;
        let num = |i: usize, name: &str| -> Result<f64, IngestError> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| IngestError::BadPopulationRow {
                    line,
                    reason: format!("unparsable {name}"),
                })
        };
        let cell = PopulationCell {
            lon: num(i_lon, "lon")?,
            lat: num(i_lat, "lat")?,
            population: num(i_pop, "population")?,
        };
        if cell.population < 0.0 {
            return Err(IngestError::BadPopulationRow {
                line,
                reason: format!("negative population {}", cell.population),
            });
        }
        if !(-180.0..=180.0).contains(&cell.lon) || !(-90.0..=90.0).contains(&cell.lat) {
            return Err(IngestError::BadPopulationRow {
                line,
                reason: "coordinates out of range".into(),
            });
        }
        if !seen.insert((cell.lon.to_bits(), cell.lat.to_bits())) {
            return Err(IngestError::DuplicateCentroid {
                lon: cell.lon,
                lat: cell.lat,
            });
        }
        cells.push(cell);
    }
    if cells.iter().map(|c| c.population).sum::<f64>() <= 0.0 {
        return Err(IngestError::ZeroPopulation);
    }
    Ok(cells)
}

pub fn write_population<W: Write>(cells: &[PopulationCell], writer: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["lon", "lat", "population"])?;
    for c in cells {
        w.write_record([
            c.lon.to_string(),
            c.lat.to_string(),
            c.population.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn parse(text: &str) -> Result<ParsedEvents, IngestError> {
        parse_events_from_reader(text.as_bytes(), "test", &ParseOptions::default())
    }

    fn ts(y: i32, m: u32, d: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
    }

    #[test]
    fn well_formed_rows_are_kept_and_sorted() {
        let out = parse(
            "timestamp,lon,lat,category\n\
             2020-01-03T10:00:00Z,-87.6,41.8,theft\n\
             2020-01-01T09:30:00Z,-87.7,41.9,robbery\n\
             2020-01-02 12:00:00,-87.5,41.7,burglary\n",
        )
        .unwrap();
        assert_eq!(out.table.len(), 3);
        assert!(out.rejects.is_empty());
        let cats: Vec<_> = out
            .table
            .records
            .iter()
            .map(|r| r.category.as_str())
            .collect();
        assert_eq!(cats, ["robbery", "burglary", "theft"]);
    }

    #[test]
    fn out_of_range_latitude_is_rejected() {
        let out = parse(
            "timestamp,lon,lat,category\n\
             2020-01-01,0,95,theft\n\
             2020-01-02,0,10,theft\n\
             2020-01-03,0,11,theft\n",
        )
        .unwrap();
        assert_eq!(out.table.len(), 2);
        assert_eq!(out.rejects.len(), 1);
        assert_eq!(out.rejects[0].line, 2);
    }

    #[test]
    fn offsets_normalize_to_utc() {
        let t = parse_timestamp("2020-06-01T02:00:00+02:00").unwrap();
        assert_eq!(t, Utc.with_ymd_and_hms(2020, 6, 1, 0, 0, 0).unwrap());
        let t = parse_timestamp("2020-06-01T00:00:00.75Z").unwrap();
        assert_eq!(t.nanosecond(), 0);
    }

    #[test]
    fn majority_rejection_is_a_hard_error() {
        let err = parse(
            "timestamp,lon,lat,category\n\
             nope,0,0,theft\n\
             2020-01-01,500,0,theft\n\
             2020-01-01,0,0,theft\n",
        )
        .unwrap_err();
        assert!(matches!(
            err,
            IngestError::MostlyRejected {
                rejected: 2,
                total: 3
            }
        ));
    }

    #[test]
    fn unmappable_schema_and_missing_file() {
        let err = parse("time,x,y,kind\n").unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn(c) if c == "timestamp"));
        let err = parse_events(
            Path::new("/nonexistent/events.csv"),
            &ParseOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::Open { .. }));
    }

    #[test]
    fn custom_schema_and_delimiter() {
        let opts = ParseOptions {
            schema: EventSchema {
                timestamp: "when".into(),
                lon: "x".into(),
                lat: "y".into(),
                category: "kind".into(),
                delimiter: b';',
            },
            window: None,
        };
        let out = parse_events_from_reader(
            "kind;when;x;y\ntheft;2021-03-04;1.5;2.5\n".as_bytes(),
            "s",
            &opts,
        )
        .unwrap();
        assert_eq!(out.table.records[0].lon, 1.5);
        assert_eq!(out.table.records[0].category, "theft");
    }

    #[test]
    fn study_window_rejects_rather_than_drops() {
        let opts = ParseOptions {
            window: Some(TimeWindow {
                start: ts(2020, 1, 1),
                end: ts(2020, 2, 1),
            }),
            ..Default::default()
        };
        let out = parse_events_from_reader(
            "timestamp,lon,lat,category\n2020-01-05,0,0,a\n2020-01-06,0,0,a\n2020-03-01,0,0,a\n"
                .as_bytes(),
            "s",
            &opts,
        )
        .unwrap();
        assert_eq!(out.table.len(), 2);
        assert_eq!(out.rejects.len(), 1);
    }

    #[test]
    fn canonical_form_is_a_fixed_point() {
        let out = parse(
            "timestamp,lon,lat,category\n\
             2020-01-03T10:00:00+01:00,-87.61,41.8,theft\n\
             2020-01-01,-87.7,41.9,\"car, theft\"\n",
        )
        .unwrap();
        let mut first = Vec::new();
        write_events(&out.table, &mut first).unwrap();
        let again = parse_events_from_reader(&first[..], "test", &ParseOptions::default()).unwrap();
        let mut second = Vec::new();
        write_events(&again.table, &mut second).unwrap();
        assert_eq!(first, second);
        assert_eq!(again.table, out.table);
    }

    #[test]
    fn dedup_keeps_first_of_identical_tuples() {
        let r = EventRecord {
            timestamp: ts(2020, 1, 1),
            lon: 1.0,
            lat: 2.0,
            category: "theft".into(),
        };
        let table = EventTable::new("t", vec![r.clone(), r.clone()]);
        assert_eq!(table.len(), 2);
        assert_eq!(dedup_events(&table).len(), 1);
    }

    fn sample_table() -> EventTable {
        let records = (0..10)
            .map(|i| EventRecord {
                timestamp: ts(2020, 1, 1 + i),
                lon: i as f64,
                lat: -(i as f64),
                category: if i % 2 == 0 { "theft" } else { "robbery" }.into(),
            })
            .collect();
        EventTable::new("t", records)
    }

    #[test]
    fn filter_examples() {
        let t = sample_table();
        let none = filter_events(
            &t,
            &EventFilter {
                category: Some("arson".into()),
                ..Default::default()
            },
        );
        assert!(none.is_empty());
        assert_eq!(filter_events(&t, &EventFilter::default()), t);
        let half = filter_events(
            &t,
            &EventFilter {
                window: Some(TimeWindow {
                    start: ts(2020, 1, 1),
                    end: ts(2020, 1, 6),
                }),
                ..Default::default()
            },
        );
        assert_eq!(half.records, t.records[..5]);
    }

    #[test]
    fn conjunction_equals_sequential_filters() {
        let t = sample_table();
        let cat = EventFilter {
            category: Some("theft".into()),
            ..Default::default()
        };
        let bbox = EventFilter {
            bbox: Some(GeoBox::new(2.0, -9.0, 7.0, 0.0)),
            ..Default::default()
        };
        let both = EventFilter {
            category: cat.category.clone(),
            bbox: bbox.bbox,
            ..Default::default()
        };
        let a = filter_events(&filter_events(&t, &cat), &bbox);
        let b = filter_events(&filter_events(&t, &bbox), &cat);
        let c = filter_events(&t, &both);
        assert_eq!(a, c);
        assert_eq!(b, c);
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn population_examples() {
        let cells = parse_population_from_reader(
            "lon,lat,population\n0,0,100\n0,1,100\n1,0,100\n1,1,100\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells.iter().map(|c| c.population).sum::<f64>(), 400.0);

        let err = parse_population_from_reader("lon,lat,population\n0,0,-5\n1,1,10\n".as_bytes())
            .unwrap_err();
        assert!(matches!(err, IngestError::BadPopulationRow { line: 2, .. }));

        let err = parse_population_from_reader("lon,lat,population\n0,0,0\n1,1,0\n".as_bytes())
            .unwrap_err();
        assert_eq!(err.to_string(), "zero total population");

        let err = parse_population_from_reader("lon,lat,population\n0,0,1\n0,0,2\n".as_bytes())
            .unwrap_err();
        assert!(matches!(err, IngestError::DuplicateCentroid { .. }));
    }
}
