//! Equal-population regions and per-region weekly aggregation.
//!
//! Regions come from recursive weighted bisection of the population cells'
//! bounding box (k-d style): each node that must hold `k` regions is cut
//! along its longer side at the weighted quantile `floor(k/2)/k`, which is
//! the weighted median whenever `k` is even. Cells are atomic, so cuts fall
//! between distinct cell coordinates.

use std::io::{Read, Write};

use chrono::{Datelike, Days, NaiveDate};
use thiserror::Error;

use crate::ingest::{EventTable, GeoBox, PopulationCell};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum TessellateError {
    #[error("empty population cell list")]
    NoCells,
    #[error("target population must be positive and finite, got {0}")]
    BadTarget(f64),
    #[error("empty tessellation")]
    EmptyTessellation,
    #[error("event span covers {weeks} full week(s); at least 2 are required")]
    SpanTooShort { weeks: usize },
    #[error("malformed series table: {0}")]
    BadSeries(String),
    #[error("delimited text: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: usize,
    pub bbox: GeoBox,
    pub population: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tessellation {
    /// Sorted by id; `regions[i].id == i`.
    pub regions: Vec<Region>,
    pub target_population: f64,
    pub total_population: f64,
    pub warnings: Vec<String>,
}

impl Tessellation {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// `max - min` region population.
    pub fn population_spread(&self) -> f64 {
        let (lo, hi) = self
            .regions
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r.population), hi.max(r.population))
            });
        hi - lo
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TessellateError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "region_id",
            "lon_min",
            "lat_min",
            "lon_max",
            "lat_max",
            "population",
        ])?;
        for r in &self.regions {
            w.write_record([
                r.id.to_string(),
                r.bbox.lon_min.to_string(),
                r.bbox.lat_min.to_string(),
                r.bbox.lon_max.to_string(),
                r.bbox.lat_max.to_string(),
                r.population.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn build_tessellation(
    cells: &[PopulationCell],
    target_pop: f64,
) -> Result<Tessellation, TessellateError> {
    if cells.is_empty() {
        return Err(TessellateError::NoCells);
    }
    if !(target_pop > 0.0 && target_pop.is_finite()) {
        return Err(TessellateError::BadTarget(target_pop));
    }
    let total: f64 = cells.iter().map(|c| c.population).sum();
    let mut warnings = Vec::new();
    if target_pop > total {
        warnings.push(format!(
            "target population {target_pop} exceeds total population {total}; returning a single region"
        ));
    }
    let bbox = GeoBox::enclosing(cells.iter().map(|c| (c.lon, c.lat))).expect("cells nonempty");
    let mut work = cells.to_vec();
    let mut leaves = Vec::new();
    // Relative slack keeps an exact multiple of the target from rounding up.
    let k = ((total / target_pop) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    bisect(&mut work, bbox, k, &mut leaves, &mut warnings);

    leaves.sort_by(|(a, _), (b, _)| {
        let (ax, ay) = a.center();
        let (bx, by) = b.center();
        by.total_cmp(&ay).then(ax.total_cmp(&bx))
    });
    let regions = leaves
        .into_iter()
        .enumerate()
        .map(|(id, (bbox, population))| Region {
            id,
            bbox,
            population,
        })
        .collect();
    Ok(Tessellation {
        regions,
        target_population: target_pop,
        total_population: total,
        warnings,
    })
}

#[derive(Clone, Copy)]
enum Axis {
    Lon,
    Lat,
}

impl Axis {
    fn coord(self, c: &PopulationCell) -> f64 {
        match self {
            Axis::Lon => c.lon,
            Axis::Lat => c.lat,
        }
    }

    fn other(self) -> Axis {
        match self {
            Axis::Lon => Axis::Lat,
            Axis::Lat => Axis::Lon,
        }
    }
}

/// Splits a node that must hold `k` regions into `floor(k/2)` and the rest.
/// The region count is fixed from the root down, so a cut's error is shared
/// by the regions below it instead of changing their number.
fn bisect(
    cells: &mut [PopulationCell],
    bbox: GeoBox,
    k: usize,
    leaves: &mut Vec<(GeoBox, f64)>,
    warnings: &mut Vec<String>,
) {
    let pop: f64 = cells.iter().map(|c| c.population).sum();
    if k <= 1 {
        leaves.push((bbox, pop));
        return;
    }
    let desired_left = pop * (k / 2) as f64 / k as f64;
    let first = if bbox.width() >= bbox.height() {
        Axis::Lon
    } else {
        Axis::Lat
    };
    for axis in [first, first.other()] {
        if let Some((n_left, cut)) = best_cut(cells, axis, desired_left) {
            let (left, right) = cells.split_at_mut(n_left);
            let (lbox, rbox) = match axis {
                Axis::Lon => (
                    GeoBox {
                        lon_max: cut,
                        ..bbox
                    },
                    GeoBox {
                        lon_min: cut,
                        ..bbox
                    },
                ),
                Axis::Lat => (
                    GeoBox {
                        lat_max: cut,
                        ..bbox
                    },
                    GeoBox {
                        lat_min: cut,
                        ..bbox
                    },
                ),
            };
            bisect(left, lbox, k / 2, leaves, warnings);
            bisect(right, rbox, k - k / 2, leaves, warnings);
            return;
        }
    }
    warnings.push(format!(
        "region population {pop} was meant for {k} regions: cells cannot be split further"
    ));
    leaves.push((bbox, pop));
}

/// Sorts `cells` along `axis` and returns `(cells on the low side, cut
/// coordinate)` for the cut between distinct coordinates whose low-side
/// population is closest to `desired_left`. Both sides must be populated.
fn best_cut(cells: &mut [PopulationCell], axis: Axis, desired_left: f64) -> Option<(usize, f64)> {
    let other = axis.other();
    cells.sort_by(|a, b| {
        axis.coord(a)
            .total_cmp(&axis.coord(b))
            .then(other.coord(a).total_cmp(&other.coord(b)))
    });
    let total: f64 = cells.iter().map(|c| c.population).sum();
    let mut best: Option<(usize, f64, f64)> = None;
    let mut acc = 0.0;
    for i in 0..cells.len() - 1 {
        acc += cells[i].population;
        let (here, next) = (axis.coord(&cells[i]), axis.coord(&cells[i + 1]));
        if here == next || acc <= 0.0 || acc >= total {
            continue;
        }
        let err = (acc - desired_left).abs();
        if best.is_none_or(|(_, _, e)| err < e) {
            best = Some((i + 1, 0.5 * (here + next), err));
        }
    }
    best.map(|(n, cut, _)| (n, cut))
}

/// Uniform bucket grid over the tessellation extent for point location.
struct RegionIndex<'a> {
    tess: &'a Tessellation,
    extent: GeoBox,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl<'a> RegionIndex<'a> {
    fn new(tess: &'a Tessellation) -> Self {
        let extent = GeoBox::enclosing(tess.regions.iter().flat_map(|r| {
            [
                (r.bbox.lon_min, r.bbox.lat_min),
                (r.bbox.lon_max, r.bbox.lat_max),
            ]
        }))
        .expect("nonempty tessellation");
        let side = ((tess.len() as f64).sqrt().ceil() as usize).clamp(1, 512);
        let (nx, ny) = (side, side);
        let mut buckets = vec![Vec::new(); nx * ny];
        let mut idx = Self {
            tess,
            extent,
            nx,
            ny,
            buckets: Vec::new(),
        };
        for r in &tess.regions {
            let (x0, y0) = idx.bucket_of(r.bbox.lon_min, r.bbox.lat_min);
            let (x1, y1) = idx.bucket_of(r.bbox.lon_max, r.bbox.lat_max);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    buckets[y * nx + x].push(r.id);
                }
            }
        }
        idx.buckets = buckets;
        idx
    }

    fn bucket_of(&self, lon: f64, lat: f64) -> (usize, usize) {
        let frac = |v: f64, lo: f64, hi: f64, n: usize| {
            if hi > lo {
                (((v - lo) / (hi - lo) * n as f64).floor().max(0.0) as usize).min(n - 1)
            } else {
                0
            }
        };
        (
            frac(lon, self.extent.lon_min, self.extent.lon_max, self.nx),
            frac(lat, self.extent.lat_min, self.extent.lat_max, self.ny),
        )
    }

    /// Lowest-id region containing the point. Bucket coordinates are a
    /// monotone function of position, so every region whose closed box holds
    /// the point is registered in the point's bucket; ids there ascend.
    fn locate(&self, lon: f64, lat: f64) -> Option<usize> {
        if !self.extent.contains(lon, lat) {
            return None;
        }
        let (x, y) = self.bucket_of(lon, lat);
        self.buckets[y * self.nx + x]
            .iter()
            .copied()
            .find(|&id| self.tess.regions[id].bbox.contains(lon, lat))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionCounts {
    pub counts: Vec<u64>,
    pub outside: u64,
}

impl RegionCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.outside
    }
}

/// Counts events per region; boundary ties go to the lower region id.
pub fn assign_events(
    table: &EventTable,
    tess: &Tessellation,
) -> Result<RegionCounts, TessellateError> {
    if tess.is_empty() {
        return Err(TessellateError::EmptyTessellation);
    }
    let index = RegionIndex::new(tess);
    let mut counts = vec![0u64; tess.len()];
    let mut outside = 0;
    for r in &table.records {
        match index.locate(r.lon, r.lat) {
            Some(id) => counts[id] += 1,
            None => outside += 1,
        }
    }
    Ok(RegionCounts { counts, outside })
}

/// Weekly series per region on a common Monday-start week grid, plus the
/// city-level series (per-week sum over regions).
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSeriesSet<T> {
    pub week_starts: Vec<NaiveDate>,
    /// `regions[i][t]`; missing values are NaN.
    pub regions: Vec<Vec<T>>,
    pub city: Vec<T>,
}

impl<T: Scalar> RegionSeriesSet<T> {
    /// Builds the set, deriving the city series from the regions.
    pub fn from_regions(week_starts: Vec<NaiveDate>, regions: Vec<Vec<T>>) -> Self {
        let n = week_starts.len();
        let city = (0..n)
            .map(|t| regions.iter().map(|r| r[t]).fold(T::zero(), |a, b| a + b))
            .collect();
        Self {
            week_starts,
            regions,
            city,
        }
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn n_weeks(&self) -> usize {
        self.week_starts.len()
    }

    /// Sum over weeks per region, skipping missing values.
    pub fn region_totals(&self) -> Vec<T> {
        self.regions
            .iter()
            .map(|r| {
                r.iter()
                    .filter(|v| !v.is_nan())
                    .fold(T::zero(), |a, &b| a + b)
            })
            .collect()
    }

    /// Wide CSV: `week_start,region_0,...,region_{R-1},city`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TessellateError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["week_start".to_string()];
        header.extend((0..self.n_regions()).map(|i| format!("region_{i}")));
        header.push("city".into());
        w.write_record(&header)?;
        for (t, week) in self.week_starts.iter().enumerate() {
            let mut row = vec![week.to_string()];
            row.extend(self.regions.iter().map(|r| fmt_value(r[t])));
            row.push(fmt_value(self.city[t]));
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads the wide CSV. Empty cells become NaN; a missing `city` column
    /// is derived from the regions.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, TessellateError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("week_start") {
            return Err(TessellateError::BadSeries(
                "first column must be week_start".into(),
            ));
        }
        let mut region_cols = Vec::new();
        let mut city_col = None;
        for (i, h) in header.iter().enumerate().skip(1) {
            if h == "city" {
                city_col = Some(i);
            } else if let Some(id) = h
                .strip_prefix("region_")
                .and_then(|s| s.parse::<usize>().ok())
            {
                if id != region_cols.len() {
                    return Err(TessellateError::BadSeries(format!(
                        "region columns must be region_0..region_(R-1) in order, found {h}"
                    )));
                }
                region_cols.push(i);
            } else {
                return Err(TessellateError::BadSeries(format!("unexpected column {h}")));
            }
        }
        let mut weeks = Vec::new();
        let mut regions = vec![Vec::new(); region_cols.len()];
        let mut city = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let week = rec.get(0).unwrap_or("");
            weeks.push(
                NaiveDate::parse_from_str(week, "%Y-%m-%d")
                    .map_err(|_| TessellateError::BadSeries(format!("bad week_start `{week}`")))?,
            );
            let cell = |i: usize| -> Result<T, TessellateError> {
                match rec.get(i).unwrap_or("") {
                    "" | "NA" | "NaN" | "nan" => Ok(T::nan()),
                    s => s
                        .parse::<f64>()
                        .map(T::of)
                        .map_err(|_| TessellateError::BadSeries(format!("bad value `{s}`"))),
                }
            };
            for (series, &col) in regions.iter_mut().zip(&region_cols) {
                series.push(cell(col)?);
            }
            if let Some(c) = city_col {
                city.push(cell(c)?);
            }
        }
        if city_col.is_some() {
            Ok(Self {
                week_starts: weeks,
                regions,
                city,
            })
        } else {
            Ok(Self::from_regions(weeks, regions))
        }
    }
}

fn fmt_value<T: Scalar>(v: T) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// First Monday on or after `d`.
pub fn next_monday(d: NaiveDate) -> NaiveDate {
    let back = d.weekday().num_days_from_monday();
    if back == 0 {
        d
    } else {
        d + Days::new(u64::from(7 - back))
    }
}

/// Aggregates events into weekly per-region series.
///
/// The grid starts at the first Monday on or after `week_origin` and covers
/// every full week ending on or before `until` (exclusive date), which
/// defaults to the day after the last event. Events before the grid or in a
/// trailing partial week are dropped, as are events outside every region.
pub fn build_region_series<T: Scalar>(
    table: &EventTable,
    tess: &Tessellation,
    week_origin: NaiveDate,
    until: Option<NaiveDate>,
) -> Result<RegionSeriesSet<T>, TessellateError> {
    if tess.is_empty() {
        return Err(TessellateError::EmptyTessellation);
    }
    let start = next_monday(week_origin);
    let end = match until {
        Some(u) => u,
        None => match table.records.last() {
            Some(r) => r.timestamp.date_naive() + Days::new(1),
            None => return Err(TessellateError::SpanTooShort { weeks: 0 }),
        },
    };
    let days = (end - start).num_days();
    let n_weeks = if days > 0 { (days / 7) as usize } else { 0 };
    if n_weeks < 2 {
        return Err(TessellateError::SpanTooShort { weeks: n_weeks });
    }
    let index = RegionIndex::new(tess);
    let mut counts = vec![vec![0u64; n_weeks]; tess.len()];
    for r in &table.records {
        let offset = (r.timestamp.date_naive() - start).num_days();
        if offset < 0 {
            continue;
        }
        let week = (offset / 7) as usize;
        if week >= n_weeks {
            continue;
        }
        if let Some(id) = index.locate(r.lon, r.lat) {
            counts[id][week] += 1;
        }
    }
    let week_starts = (0..n_weeks)
        .map(|w| start + Days::new(7 * w as u64))
        .collect();
    let regions = counts
        .into_iter()
        .map(|c| c.into_iter().map(|v| T::of(v as f64)).collect())
        .collect();
    Ok(RegionSeriesSet::from_regions(week_starts, regions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::EventRecord;
    use chrono::{TimeZone, Utc};

    fn grid(n: usize, pop: f64) -> Vec<PopulationCell> {
        (0..n)
            .flat_map(|i| {
                (0..n).map(move |j| PopulationCell {
                    lon: i as f64,
                    lat: j as f64,
                    population: pop,
                })
            })
            .collect()
    }

    fn event(lon: f64, lat: f64, y: i32, m: u32, d: u32) -> EventRecord {
        EventRecord {
            timestamp: Utc.with_ymd_and_hms(y, m, d, 12, 0, 0).unwrap(),
            lon,
            lat,
            category: "theft".into(),
        }
    }

    #[test]
    fn four_corners_split_symmetrically() {
        let tess = build_tessellation(&grid(2, 100.0), 100.0).unwrap();
        assert_eq!(tess.len(), 4);
        assert!(tess.regions.iter().all(|r| r.population == 100.0));
        assert!(tess.warnings.is_empty());
    }

    /// Brute-force oracle: on a uniform grid every cut must halve the node,
    /// so the leaves are the 16 aligned 8x8 blocks.
    #[test]
    fn uniform_grid_gives_exact_blocks() {
        let cells = grid(32, 1.0);
        let tess = build_tessellation(&cells, 64.0).unwrap();
        assert_eq!(tess.len(), 16);
        for r in &tess.regions {
            assert_eq!(r.population, 64.0);
            let inside = cells
                .iter()
                .filter(|c| r.bbox.contains(c.lon, c.lat))
                .count();
            assert_eq!(inside, 64);
        }
    }

    #[test]
    fn indivisible_cell_warns() {
        let cells = [PopulationCell {
            lon: 1.0,
            lat: 1.0,
            population: 500.0,
        }];
        let tess = build_tessellation(&cells, 100.0).unwrap();
        assert_eq!(tess.len(), 1);
        assert_eq!(tess.regions[0].population, 500.0);
        assert!(!tess.warnings.is_empty());
    }

    #[test]
    fn target_above_total_warns_single_region() {
        let tess = build_tessellation(&grid(3, 1.0), 100.0).unwrap();
        assert_eq!(tess.len(), 1);
        assert_eq!(tess.warnings.len(), 1);
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(
            build_tessellation(&[], 1.0),
            Err(TessellateError::NoCells)
        ));
        assert!(matches!(
            build_tessellation(&grid(2, 1.0), 0.0),
            Err(TessellateError::BadTarget(_))
        ));
    }

    #[test]
    fn ids_are_row_major_from_the_north() {
        let tess = build_tessellation(&grid(2, 100.0), 100.0).unwrap();
        let centers: Vec<_> = tess.regions.iter().map(|r| r.bbox.center()).collect();
        assert!(centers[0].1 > centers[2].1);
        assert!(centers[0].0 < centers[1].0);
    }

    #[test]
    fn all_events_in_one_region() {
        let tess = build_tessellation(&grid(2, 100.0), 100.0).unwrap();
        let target = &tess.regions[2].bbox;
        let (cx, cy) = target.center();
        let table = EventTable::new("t", (0..7).map(|_| event(cx, cy, 2020, 1, 1)).collect());
        let counts = assign_events(&table, &tess).unwrap();
        assert_eq!(counts.counts[2], 7);
        assert_eq!(counts.total(), 7);
    }

    #[test]
    fn boundary_goes_to_lower_id_and_outside_is_counted() {
        let tess = build_tessellation(&grid(2, 100.0), 100.0).unwrap();
        // 0.5 is the cut in both directions: the shared corner touches all four.
        let table = EventTable::new(
            "t",
            vec![
                event(0.5, 0.5, 2020, 1, 1),
                event(0.5, 0.0, 2020, 1, 1),
                event(9.0, 9.0, 2020, 1, 1),
            ],
        );
        let counts = assign_events(&table, &tess).unwrap();
        assert_eq!(counts.counts[0], 1);
        let bottom: Vec<_> = tess
            .regions
            .iter()
            .filter(|r| r.bbox.contains(0.5, 0.0))
            .map(|r| r.id)
            .collect();
        assert_eq!(counts.counts[*bottom.iter().min().unwrap()], 1);
        assert_eq!(counts.outside, 1);
        assert_eq!(counts.total(), 3);
    }

    #[test]
    fn single_week_in_one_region() {
        let tess = build_tessellation(&grid(2, 100.0), 100.0).unwrap();
        let (cx, cy) = tess.regions[3].bbox.center();
        // 2024-01-01 is a Monday; events land in week 2.
        let table = EventTable::new(
            "t",
            vec![event(cx, cy, 2024, 1, 16), event(cx, cy, 2024, 1, 17)],
        );
        let origin = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let until = NaiveDate::from_ymd_opt(2024, 1, 29).unwrap();
        let set: RegionSeriesSet<f64> =
            build_region_series(&table, &tess, origin, Some(until)).unwrap();
        assert_eq!(set.n_weeks(), 4);
        assert_eq!(set.regions[3], vec![0.0, 0.0, 2.0, 0.0]);
        assert_eq!(set.city, set.regions[3]);
    }

    #[test]
    fn grid_snaps_to_monday_and_drops_partial_weeks() {
        let tess = build_tessellation(&grid(2, 100.0), 100.0).unwrap();
        let (cx, cy) = tess.regions[0].bbox.center();
        // Wed 2024-01-03 .. Wed 2024-01-24: full weeks start Mon 01-08 and 01-15.
        let table = EventTable::new(
            "t",
            vec![
                event(cx, cy, 2024, 1, 3),
                event(cx, cy, 2024, 1, 9),
                event(cx, cy, 2024, 1, 20),
                event(cx, cy, 2024, 1, 24),
            ],
        );
        let origin = NaiveDate::from_ymd_opt(2024, 1, 3).unwrap();
        let set: RegionSeriesSet<f64> = build_region_series(&table, &tess, origin, None).unwrap();
        assert_eq!(
            set.week_starts[0],
            NaiveDate::from_ymd_opt(2024, 1, 8).unwrap()
        );
        assert_eq!(set.n_weeks(), 2);
        assert_eq!(set.city, vec![1.0, 1.0]);
    }

    #[test]
    fn short_span_is_an_error() {
        let tess = build_tessellation(&grid(2, 100.0), 100.0).unwrap();
        let table = EventTable::new("t", vec![event(0.0, 0.0, 2024, 1, 2)]);
        let origin = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let err = build_region_series::<f64>(&table, &tess, origin, None).unwrap_err();
        assert!(matches!(err, TessellateError::SpanTooShort { weeks: 0 }));
    }

    #[test]
    fn series_csv_roundtrip_with_gap() {
        let weeks = vec![
            NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2024, 1, 8).unwrap(),
        ];
        let set = RegionSeriesSet::from_regions(weeks, vec![vec![1.0, f64::NAN], vec![2.5, 3.0]]);
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("week_start,region_0,region_1,city\n2024-01-01,1,2.5,3.5\n"));
        let back = RegionSeriesSet::<f64>::read_csv(&buf[..]).unwrap();
        assert!(back.regions[0][1].is_nan());
        assert_eq!(back.regions[1], vec![2.5, 3.0]);
    }

    #[test]
    fn tessellation_csv_header() {
        let tess = build_tessellation(&grid(2, 100.0), 100.0).unwrap();
        let mut buf = Vec::new();
        tess.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("region_id,lon_min,lat_min,lon_max,lat_max,population\n0,"));
        assert_eq!(text.lines().count(), 5);
    }

    proptest::proptest! {
        #[test]
        fn spread_within_two_max_cells(
            raw in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0, 1u32..1000), 2..300),
            k in 1usize..40,
        ) {
            let cells: Vec<PopulationCell> = raw
                .iter()
                .enumerate()
                .map(|(i, &(lon, lat, p))| PopulationCell {
                    lon: lon + i as f64 * 1e-9,
                    lat: lat + i as f64 * 1e-9,
                    population: f64::from(p),
                })
                .collect();
            let total: f64 = cells.iter().map(|c| c.population).sum();
            let max_cell = cells.iter().map(|c| c.population).fold(0.0, f64::max);
            let tess = build_tessellation(&cells, total / k as f64).unwrap();
            proptest::prop_assert!(tess.population_spread() <= 2.0 * max_cell + 1e-6);
            for c in &cells {
                let homes = tess.regions.iter().filter(|r| r.bbox.contains(c.lon, c.lat)).count();
                proptest::prop_assert_eq!(homes, 1);
            }
            let sum: f64 = tess.regions.iter().map(|r| r.population).sum();
            proptest::prop_assert!((sum - total).abs() < 1e-6);
        }
    }
}
