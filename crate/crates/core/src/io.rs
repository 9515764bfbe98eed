//! Delimited-text and JSON-lines readers and writers for every stage's
//! inputs and outputs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::colocation::{ColocationEvent, NullModelRow};
use crate::model::{ModelFit, ModelInputRow};
use crate::routines::EdgeChange;
use crate::semantics::{Geometry, Poi, PoiRef, SemanticLabel, Visit};
use crate::trajectory::{GpsPing, StopEvent, StopLocation, Trajectory};
use crate::{Error, Result};

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::from(e).in_file(path))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::from(e).in_file(path))
}

fn reader(r: impl Read, delimiter: u8) -> csv::Reader<impl Read> {
    csv::ReaderBuilder::new().delimiter(delimiter).trim(csv::Trim::All).from_reader(r)
}

fn writer<W: Write>(w: W, delimiter: u8) -> csv::Writer<W> {
    csv::WriterBuilder::new().delimiter(delimiter).from_writer(w)
}

/// Deserializes every record, reporting the line of the first bad one.
pub fn read_records<T: DeserializeOwned>(r: impl Read, delimiter: u8) -> Result<Vec<T>> {
    let mut rdr = reader(r, delimiter);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Writes a header and one row per record. An empty slice still gets the
/// header when `T` can describe it through `header`.
pub fn write_records<T: Serialize>(w: impl Write, delimiter: u8, header: &[&str], rows: &[T]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().delimiter(delimiter).has_headers(false).from_writer(w);
    wtr.write_record(header)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(r: impl Read) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::invalid(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(mut w: impl Write, rows: &[T]) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

// Pings

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PingRecord {
    user_id: String,
    timestamp: i64,
    lat: f64,
    lon: f64,
    #[serde(default)]
    accuracy: Option<f64>,
}

/// Reads `user_id,timestamp,lat,lon[,accuracy]` rows. Each user's pings
/// must already be in time order; trajectories come back sorted by user.
pub fn read_pings(r: impl Read, delimiter: u8) -> Result<Vec<Trajectory>> {
    let mut rdr = reader(r, delimiter);
    let headers = rdr.headers()?.clone();
    for need in ["user_id", "timestamp", "lat", "lon"] {
        if !headers.iter().any(|h| h == need) {
            return Err(Error::invalid(format!("ping file lacks a {need} column")));
        }
    }
    let mut users: BTreeMap<String, Vec<GpsPing>> = BTreeMap::new();
    for rec in rdr.deserialize::<PingRecord>() {
        let p = rec?;
        users.entry(p.user_id).or_default().push(GpsPing {
            timestamp: p.timestamp,
            lat: p.lat,
            lon: p.lon,
            accuracy: p.accuracy,
        });
    }
    let trajectories: Vec<Trajectory> = users
        .into_iter()
        .map(|(user_id, pings)| Trajectory { user_id, pings })
        .collect();
    for t in &trajectories {
        t.validate()?;
    }
    Ok(trajectories)
}

pub fn write_pings(w: impl Write, trajectories: &[Trajectory], delimiter: u8) -> Result<()> {
    let mut wtr = writer(w, delimiter);
    wtr.write_record(["user_id", "timestamp", "lat", "lon", "accuracy"])?;
    for t in trajectories {
        for p in &t.pings {
            let acc = p.accuracy.map(|a| a.to_string()).unwrap_or_default();
            wtr.write_record([&t.user_id, &p.timestamp.to_string(), &p.lat.to_string(), &p.lon.to_string(), &acc])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

// Stop events and locations

/// A stop event with the location it was grouped into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub user_id: String,
    pub location_id: u32,
    pub medoid_lat: f64,
    pub medoid_lon: f64,
    pub start_time: i64,
    pub end_time: i64,
    pub n_pings: usize,
    pub mean_lat: f64,
    pub mean_lon: f64,
}

const EVENT_HEADER: [&str; 9] = [
    "user_id",
    "location_id",
    "medoid_lat",
    "medoid_lon",
    "start_time",
    "end_time",
    "n_pings",
    "mean_lat",
    "mean_lon",
];

/// One row per stop event, in event time order within each user.
pub fn write_stop_events(w: impl Write, locations: &[StopLocation], delimiter: u8) -> Result<()> {
    let mut rows: Vec<EventRecord> = locations
        .iter()
        .flat_map(|l| {
            l.member_events.iter().map(|e| EventRecord {
                user_id: e.user_id.clone(),
                location_id: l.location_id,
                medoid_lat: e.medoid_lat,
                medoid_lon: e.medoid_lon,
                start_time: e.start_time,
                end_time: e.end_time,
                n_pings: e.n_pings,
                mean_lat: e.mean_lat,
                mean_lon: e.mean_lon,
            })
        })
        .collect();
    rows.sort_by(|a, b| (&a.user_id, a.start_time).cmp(&(&b.user_id, b.start_time)));
    write_records(w, delimiter, &EVENT_HEADER, &rows)
}

/// Rebuilds stop locations from an event file written by
/// [`write_stop_events`].
pub fn read_stop_locations(r: impl Read, delimiter: u8) -> Result<Vec<StopLocation>> {
    let rows: Vec<EventRecord> = read_records(r, delimiter)?;
    let mut groups: BTreeMap<(String, u32), Vec<StopEvent>> = BTreeMap::new();
    for e in rows {
        groups.entry((e.user_id.clone(), e.location_id)).or_default().push(StopEvent {
            user_id: e.user_id,
            medoid_lat: e.medoid_lat,
            medoid_lon: e.medoid_lon,
            start_time: e.start_time,
            end_time: e.end_time,
            n_pings: e.n_pings,
            mean_lat: e.mean_lat,
            mean_lon: e.mean_lon,
        });
    }
    Ok(groups
        .into_iter()
        .map(|((_, id), mut events)| {
            events.sort_by_key(|e| e.start_time);
            StopLocation::from_events(id, events)
        })
        .collect())
}

#[derive(Serialize)]
struct LocationRecord<'a> {
    user_id: &'a str,
    location_id: u32,
    centroid_lat: f64,
    centroid_lon: f64,
    n_events: usize,
}

pub fn write_stop_locations(w: impl Write, locations: &[StopLocation], delimiter: u8) -> Result<()> {
    let rows: Vec<LocationRecord> = locations
        .iter()
        .map(|l| LocationRecord {
            user_id: &l.user_id,
            location_id: l.location_id,
            centroid_lat: l.centroid_lat,
            centroid_lon: l.centroid_lon,
            n_events: l.member_events.len(),
        })
        .collect();
    write_records(w, delimiter, &["user_id", "location_id", "centroid_lat", "centroid_lon", "n_events"], &rows)
}

// POIs

#[derive(Debug, Serialize, Deserialize)]
struct PoiRecord {
    poi_id: String,
    geometry: String,
    l1: String,
    l2: String,
}

impl PoiRecord {
    fn into_poi(self) -> Result<Poi> {
        let geometry = Geometry::parse_wkt(&self.geometry)
            .map_err(|e| Error::invalid(format!("POI {}: {e}", self.poi_id)))?;
        geometry.validate()?;
        Ok(Poi {
            poi_id: self.poi_id,
            geometry,
            category_l1: self.l1,
            category_l2: self.l2,
        })
    }
}

/// Reads POIs from delimited text, or JSON lines when `path` ends in
/// `.jsonl`/`.ndjson`.
pub fn read_pois_file(path: &Path, delimiter: u8) -> Result<Vec<Poi>> {
    let json = matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "ndjson"));
    let r = open(path)?;
    let recs: Vec<PoiRecord> = if json { read_jsonl(r) } else { read_records(r, delimiter) }.map_err(|e| e.in_file(path))?;
    recs.into_iter().map(PoiRecord::into_poi).collect::<Result<_>>().map_err(|e| e.in_file(path))
}

pub fn read_pois(r: impl Read, delimiter: u8) -> Result<Vec<Poi>> {
    read_records::<PoiRecord>(r, delimiter)?.into_iter().map(PoiRecord::into_poi).collect()
}

pub fn write_pois(w: impl Write, pois: &[Poi], delimiter: u8) -> Result<()> {
    let rows: Vec<PoiRecord> = pois
        .iter()
        .map(|p| PoiRecord {
            poi_id: p.poi_id.clone(),
            geometry: p.geometry.to_wkt(),
            l1: p.category_l1.clone(),
            l2: p.category_l2.clone(),
        })
        .collect();
    write_records(w, delimiter, &["poi_id", "geometry", "l1", "l2"], &rows)
}

// Visits

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VisitRecord {
    user_id: String,
    location_id: u32,
    label: String,
    poi_id: Option<String>,
    l1: Option<String>,
    l2: Option<String>,
    start_time: i64,
    end_time: i64,
    day: NaiveDate,
    lat: f64,
    lon: f64,
}

const VISIT_HEADER: [&str; 11] =
    ["user_id", "location_id", "label", "poi_id", "l1", "l2", "start_time", "end_time", "day", "lat", "lon"];

pub fn write_visits(w: impl Write, visits: &[Visit], delimiter: u8) -> Result<()> {
    let rows: Vec<VisitRecord> = visits
        .iter()
        .map(|v| VisitRecord {
            user_id: v.user_id.clone(),
            location_id: v.location_id,
            label: v.label.kind().to_string(),
            poi_id: v.poi.as_ref().map(|p| p.poi_id.clone()),
            l1: v.poi.as_ref().map(|p| p.l1.clone()),
            l2: v.poi.as_ref().map(|p| p.l2.clone()),
            start_time: v.start_time,
            end_time: v.end_time,
            day: v.day,
            lat: v.lat,
            lon: v.lon,
        })
        .collect();
    write_records(w, delimiter, &VISIT_HEADER, &rows)
}

pub fn read_visits(r: impl Read, delimiter: u8) -> Result<Vec<Visit>> {
    let rows: Vec<VisitRecord> = read_records(r, delimiter)?;
    rows.into_iter()
        .map(|r| {
            let poi = match (r.poi_id, r.l1, r.l2) {
                (Some(poi_id), Some(l1), Some(l2)) => Some(PoiRef { poi_id, l1, l2 }),
                (None, None, None) => None,
                _ => return Err(Error::invalid(format!("visit of {}: partial POI columns", r.user_id))),
            };
            let label = match r.label.as_str() {
                "Residential" => SemanticLabel::Residential,
                "Workplace" => SemanticLabel::Workplace,
                "Other" => SemanticLabel::Other,
                "POI" => SemanticLabel::Poi(
                    poi.clone()
                        .ok_or_else(|| Error::invalid(format!("POI visit of {} without a POI", r.user_id)))?,
                ),
                other => return Err(Error::invalid(format!("unknown visit label {other:?}"))),
            };
            Ok(Visit {
                user_id: r.user_id,
                location_id: r.location_id,
                label,
                poi,
                start_time: r.start_time,
                end_time: r.end_time,
                day: r.day,
                lat: r.lat,
                lon: r.lon,
            })
        })
        .collect()
}

// Model input and output

pub fn read_model_input(r: impl Read, delimiter: u8) -> Result<Vec<ModelInputRow>> {
    read_records(r, delimiter)
}

pub fn write_model_input(w: impl Write, rows: &[ModelInputRow], delimiter: u8) -> Result<()> {
    write_records(
        w,
        delimiter,
        &["state", "date", "y_raw", "stringency", "deaths_per_100k", "tmax_c", "precip_mm"],
        rows,
    )
}

/// Natural-scale draws, one row per kept draw with its chain index.
pub fn write_draws(w: impl Write, fit: &ModelFit) -> Result<()> {
    let mut wtr = writer(w, b',');
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    header.extend(fit.names.iter().cloned());
    wtr.write_record(&header)?;
    let per_chain = fit.draws.len() / fit.chains.max(1);
    for (i, d) in fit.draws.iter().enumerate() {
        let mut row = vec![(i / per_chain.max(1)).to_string(), (i % per_chain.max(1)).to_string()];
        row.extend(d.iter().map(|v| v.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

// Routines

/// Serializes non-finite z-scores as the strings `"inf"` and `"-inf"`.
mod z_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(z: &f64, s: S) -> Result<S::Ok, S::Error> {
        if z.is_finite() {
            s.serialize_f64(*z)
        } else if *z > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad z-score {t:?}"))),
        }
    }
}

/// One significant routine of one user in one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutineRecord {
    pub user_id: String,
    pub period: String,
    pub subsequence: Vec<String>,
    pub occurrences: usize,
    pub mean: f64,
    pub std: f64,
    #[serde(with = "z_repr")]
    pub z_score: f64,
}

#[derive(Serialize)]
struct EdgeRecord<'a> {
    c1: &'a str,
    c2: &'a str,
    pre: f64,
    during: f64,
    pct_change: Option<f64>,
}

pub fn write_network(w: impl Write, edges: &[EdgeChange]) -> Result<()> {
    let rows: Vec<EdgeRecord> = edges
        .iter()
        .map(|e| EdgeRecord {
            c1: &e.c1,
            c2: &e.c2,
            pre: e.pre,
            during: e.during,
            pct_change: e.pct_change,
        })
        .collect();
    write_records(w, b',', &["c1", "c2", "pre", "during", "pct_change"], &rows)
}

// Co-location

/// Stable pseudonym for a user pair; the ids themselves are not exported.
pub fn pair_hash(a: &str, b: &str) -> String {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    let mut h = Sha256::new();
    h.update(a.as_bytes());
    h.update([0x1f]);
    h.update(b.as_bytes());
    hex::encode(&h.finalize()[..8])
}

#[derive(Serialize)]
struct ColocationRecord<'a> {
    day: NaiveDate,
    category: &'static str,
    poi_id: Option<&'a str>,
    pair_hash: String,
    overlap_minutes: f64,
    overlap_start: i64,
    overlap_end: i64,
}

pub fn write_colocations(w: impl Write, events: &[ColocationEvent], delimiter: u8) -> Result<()> {
    let rows: Vec<ColocationRecord> = events
        .iter()
        .map(|e| ColocationRecord {
            day: e.day,
            category: e.place.kind(),
            poi_id: match &e.place {
                crate::colocation::Place::Poi(id) => Some(id.as_str()),
                _ => None,
            },
            pair_hash: pair_hash(&e.user_a, &e.user_b),
            overlap_minutes: e.overlap_secs() as f64 / 60.0,
            overlap_start: e.overlap_start,
            overlap_end: e.overlap_end,
        })
        .collect();
    write_records(
        w,
        delimiter,
        &["day", "category", "poi_id", "pair_hash", "overlap_minutes", "overlap_start", "overlap_end"],
        &rows,
    )
}

#[derive(Serialize)]
struct NullRecord<'a> {
    poi_id: &'a str,
    day: NaiveDate,
    n: usize,
    median_duration: f64,
    mean_duration: f64,
    observed_events: usize,
    expected_events: f64,
    observed_overlap: Option<f64>,
    expected_overlap: Option<f64>,
}

pub fn write_null_model(w: impl Write, rows: &[NullModelRow]) -> Result<()> {
    let recs: Vec<NullRecord> = rows
        .iter()
        .map(|r| NullRecord {
            poi_id: &r.poi_id,
            day: r.day,
            n: r.n,
            median_duration: r.median_duration,
            mean_duration: r.mean_duration,
            observed_events: r.observed_events,
            expected_events: r.expected_events,
            observed_overlap: r.observed_overlap,
            expected_overlap: r.expected_overlap,
        })
        .collect();
    write_records(
        w,
        b',',
        &[
            "poi_id",
            "day",
            "n",
            "median_duration",
            "mean_duration",
            "observed_events",
            "expected_events",
            "observed_overlap",
            "expected_overlap",
        ],
        &recs,
    )
}

/// Parses a one-character delimiter name such as `,`, `;`, `|` or `tab`.
pub fn parse_delimiter(s: &str) -> Result<u8> {
    match s {
        "tab" | "\\t" | "\t" => Ok(b'\t'),
        s if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(Error::config(format!("delimiter must be one ASCII character, got {s:?}"))),
    }
}
