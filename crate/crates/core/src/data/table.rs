use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use serde::{Deserialize, Serialize};

use crate::error::{FateError, Result};

pub const TIMESTAMP_COLUMN: &str = "datetime";
pub const STATION_COLUMN: &str = "station";

/// One station's raw time series; `columns[f][row]` is `None` where missing.
#[derive(Clone, Debug, PartialEq)]
pub struct StationTable {
    pub station: String,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub timestamps: Vec<NaiveDateTime>,
    pub feature_names: Vec<String>,
    pub columns: Vec<Vec<Option<f64>>>,
}

impl StationTable {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.feature_names
            .iter()
            .position(|f| f == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn missing_count(&self) -> usize {
        self.columns.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// Fully observed columns; errors if anything is still missing.
    pub fn dense_columns(&self) -> Result<Vec<Vec<f64>>> {
        self.columns
            .iter()
            .zip(&self.feature_names)
            .map(|(c, name)| {
                c.iter()
                    .map(|v| {
                        v.ok_or_else(|| {
                            FateError::contract(format!(
                                "station {} feature {name} still has missing values",
                                self.station
                            ))
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub file: PathBuf,
    /// 1-based line in the file, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct LoadOutcome {
    pub tables: Vec<StationTable>,
    pub rejected: Vec<RejectedRow>,
    /// Rows inserted to restore a uniform time grid.
    pub inserted_rows: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coordinates {
    pub lat: f64,
    pub lon: f64,
}

const FORMATS: [&str; 4] = [
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M",
];

/// ISO-8601 date or date-time without offset; a bare date means midnight.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| {
            NaiveDate::parse_from_str(s, "%Y-%m-%d")
                .ok()
                .and_then(|d| d.and_hms_opt(0, 0, 0))
        })
}

fn parse_value(s: &str) -> std::result::Result<Option<f64>, String> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") || s.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(format!("unparsable value {s:?}")),
    }
}

fn open_csv(path: &Path) -> Result<(csv::Reader<File>, Vec<String>)> {
    let file = File::open(path).map_err(|e| FateError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(file);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.iter().all(String::is_empty) {
        return Err(FateError::Schema(format!("{}: empty file or header", path.display())));
    }
    if !headers.iter().any(|h| h == TIMESTAMP_COLUMN) {
        return Err(FateError::Schema(format!(
            "{}: missing required column {TIMESTAMP_COLUMN:?}",
            path.display()
        )));
    }
    Ok((rdr, headers))
}

type Observations = BTreeMap<NaiveDateTime, Vec<Option<f64>>>;

/// Reads `datetime` + value columns; rows that fail to parse are rejected
/// with their line number while the rest load.
fn read_rows(
    path: &Path,
    key_column: Option<&str>,
) -> Result<(Vec<String>, BTreeMap<String, Observations>, Vec<RejectedRow>)> {
    let (mut rdr, headers) = open_csv(path)?;
    let ts_idx = headers.iter().position(|h| h == TIMESTAMP_COLUMN).expect("checked");
    let key_idx = match key_column {
        Some(k) => Some(
            headers
                .iter()
                .position(|h| h == k)
                .ok_or_else(|| FateError::Schema(format!("{}: missing required column {k:?}", path.display())))?,
        ),
        None => None,
    };
    let value_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| i != ts_idx && Some(i) != key_idx)
        .collect();
    if value_cols.is_empty() {
        return Err(FateError::Schema(format!("{}: no value columns", path.display())));
    }
    let names = value_cols.iter().map(|&i| headers[i].clone()).collect();
    let mut out: BTreeMap<String, Observations> = BTreeMap::new();
    let mut rejected = Vec::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                rejected.push(RejectedRow {
                    file: path.to_path_buf(),
                    line,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let reject = |reason: String| RejectedRow {
            file: path.to_path_buf(),
            line,
            reason,
        };
        let Some(ts) = parse_timestamp(&rec[ts_idx]) else {
            rejected.push(reject(format!("unparsable timestamp {:?}", &rec[ts_idx])));
            continue;
        };
        let values: std::result::Result<Vec<_>, _> =
            value_cols.iter().map(|&i| parse_value(&rec[i])).collect();
        let values = match values {
            Ok(v) => v,
            Err(reason) => {
                rejected.push(reject(reason));
                continue;
            }
        };
        let key = key_idx.map_or_else(String::new, |i| rec[i].trim().to_string());
        if out.entry(key).or_default().insert(ts, values).is_some() {
            return Err(FateError::contract(format!(
                "{}: duplicate timestamp {ts} at line {line}",
                path.display()
            )));
        }
    }
    Ok((names, out, rejected))
}

/// Wide layout: one file per feature, `datetime` plus one column per station.
/// Files are joined on timestamp.
pub fn load_wide(files: &[(String, PathBuf)]) -> Result<LoadOutcome> {
    if files.is_empty() {
        return Err(FateError::contract("no input files"));
    }
    let mut stations: Option<Vec<String>> = None;
    let mut per_feature: Vec<(String, Vec<String>, Observations)> = Vec::new();
    let mut rejected = Vec::new();
    for (feature, path) in files {
        let (names, mut rows, rej) = read_rows(path, None)?;
        rejected.extend(rej);
        match &stations {
            None => stations = Some(names.clone()),
            Some(first) => {
                if let Some(missing) = first.iter().find(|s| !names.contains(s)) {
                    return Err(FateError::Schema(format!(
                        "{}: missing station column {missing:?}",
                        path.display()
                    )));
                }
            }
        }
        per_feature.push((feature.clone(), names, rows.remove("").unwrap_or_default()));
    }
    let stations = stations.expect("at least one file");
    let timestamps: BTreeSet<NaiveDateTime> =
        per_feature.iter().flat_map(|(_, _, o)| o.keys().copied()).collect();
    let timestamps: Vec<_> = timestamps.into_iter().collect();
    let tables = stations
        .iter()
        .map(|station| {
            let columns = per_feature
                .iter()
                .map(|(_, names, obs)| {
                    let idx = names.iter().position(|n| n == station).expect("checked");
                    timestamps
                        .iter()
                        .map(|ts| obs.get(ts).and_then(|row| row[idx]))
                        .collect()
                })
                .collect();
            StationTable {
                station: station.clone(),
                latitude: None,
                longitude: None,
                timestamps: timestamps.clone(),
                feature_names: per_feature.iter().map(|(f, _, _)| f.clone()).collect(),
                columns,
            }
        })
        .collect();
    finish(tables, rejected)
}

/// Long layout: `datetime`, `station`, then one column per feature.
pub fn load_long(path: &Path) -> Result<LoadOutcome> {
    let (names, rows, rejected) = read_rows(path, Some(STATION_COLUMN))?;
    let timestamps: BTreeSet<NaiveDateTime> = rows.values().flat_map(|o| o.keys().copied()).collect();
    let timestamps: Vec<_> = timestamps.into_iter().collect();
    let tables = rows
        .into_iter()
        .map(|(station, obs)| StationTable {
            station,
            latitude: None,
            longitude: None,
            columns: (0..names.len())
                .map(|f| {
                    timestamps
                        .iter()
                        .map(|ts| obs.get(ts).and_then(|r| r[f]))
                        .collect()
                })
                .collect(),
            timestamps: timestamps.clone(),
            feature_names: names.clone(),
        })
        .collect();
    finish(tables, rejected)
}

fn finish(mut tables: Vec<StationTable>, rejected: Vec<RejectedRow>) -> Result<LoadOutcome> {
    let rows = tables.first().map_or(0, StationTable::len);
    if rows < 2 {
        return Err(FateError::contract(format!("need at least 2 data rows, found {rows}")));
    }
    let mut inserted_rows = 0;
    for t in &mut tables {
        inserted_rows = regularize(t)?;
    }
    Ok(LoadOutcome {
        tables,
        rejected,
        inserted_rows,
    })
}

/// Smallest positive spacing of the timestamps.
pub fn time_step(timestamps: &[NaiveDateTime]) -> Result<TimeDelta> {
    timestamps
        .windows(2)
        .map(|w| w[1] - w[0])
        .min()
        .filter(|d| *d > TimeDelta::zero())
        .ok_or_else(|| FateError::contract("cannot infer a time step"))
}

/// Inserts all-missing rows so timestamps form a uniform grid; returns how
/// many rows were added. Spacings that are not a multiple of the step are
/// rejected.
pub fn regularize(table: &mut StationTable) -> Result<usize> {
    let step = time_step(&table.timestamps)?;
    let step_s = step.num_seconds();
    let mut ts = Vec::with_capacity(table.len());
    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(table.len()); table.columns.len()];
    let mut inserted = 0;
    for i in 0..table.len() {
        if i > 0 {
            let gap = (table.timestamps[i] - table.timestamps[i - 1]).num_seconds();
            if gap % step_s != 0 {
                return Err(FateError::contract(format!(
                    "station {}: irregular spacing before {}",
                    table.station, table.timestamps[i]
                )));
            }
            for k in 1..gap / step_s {
                ts.push(table.timestamps[i - 1] + step * k as i32);
                cols.iter_mut().for_each(|c| c.push(None));
                inserted += 1;
            }
        }
        ts.push(table.timestamps[i]);
        for (c, src) in cols.iter_mut().zip(&table.columns) {
            c.push(src[i]);
        }
    }
    table.timestamps = ts;
    table.columns = cols;
    Ok(inserted)
}

pub fn load_coordinates(path: &Path) -> Result<BTreeMap<String, Coordinates>> {
    let text = std::fs::read_to_string(path).map_err(|e| FateError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FateError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Sets latitude/longitude on every table; lists all stations lacking an entry.
pub fn attach_coordinates(tables: &mut [StationTable], coords: &BTreeMap<String, Coordinates>) -> Result<()> {
    let missing: Vec<String> = tables
        .iter()
        .filter(|t| !coords.contains_key(&t.station))
        .map(|t| t.station.clone())
        .collect();
    if !missing.is_empty() {
        return Err(FateError::MissingCoords(missing));
    }
    for t in tables {
        let c = coords[&t.station];
        t.latitude = Some(c.lat);
        t.longitude = Some(c.lon);
    }
    Ok(())
}

/// Plain numeric table (no timestamp), as used for correlation and clustering inputs.
pub fn load_numeric_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| FateError::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.iter().all(String::is_empty) {
        return Err(FateError::Schema(format!("{}: empty file or header", path.display())));
    }
    let keep: Vec<usize> = (0..headers.len()).filter(|&i| headers[i] != TIMESTAMP_COLUMN).collect();
    let mut columns = vec![Vec::new(); keep.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        for (c, &i) in columns.iter_mut().zip(&keep) {
            let v = parse_value(&rec[i])
                .ok()
                .flatten()
                .ok_or_else(|| FateError::Schema(format!("{}:{line}: non-numeric {:?}", path.display(), &rec[i])))?;
            c.push(v);
        }
    }
    Ok((keep.iter().map(|&i| headers[i].clone()).collect(), columns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn hourly_csv(rows: usize, cities: &[&str]) -> String {
        let mut s = format!("datetime,{}\n", cities.join(","));
        let start = parse_timestamp("2012-10-01 12:00:00").unwrap();
        for i in 0..rows {
            let ts = start + TimeDelta::hours(i as i64);
            let vals: Vec<String> = (0..cities.len()).map(|c| format!("{}", 280.0 + i as f64 + c as f64)).collect();
            s.push_str(&format!("{},{}\n", ts.format("%Y-%m-%d %H:%M:%S"), vals.join(",")));
        }
        s
    }

    #[test]
    fn wide_fixture_gives_one_table_per_city() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "temperature.csv", &hourly_csv(100, &["A", "B", "C"]));
        let out = load_wide(&[("temperature".into(), p)]).unwrap();
        assert_eq!(out.tables.len(), 3);
        assert!(out.tables.iter().all(|t| t.len() == 100));
        assert_eq!(out.tables[1].columns[0][0], Some(281.0));
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn bad_row_is_reported_and_others_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = hourly_csv(10, &["A"]);
        body = body.replacen("2012-10-01 15:00:00", "not-a-date", 1);
        let p = write(dir.path(), "t.csv", &body);
        let out = load_wide(&[("t".into(), p)]).unwrap();
        assert_eq!(out.rejected.len(), 1);
        // header is line 1, 12:00 is line 2, so 15:00 is line 5
        assert_eq!(out.rejected[0].line, 5);
        assert_eq!(out.inserted_rows, 1);
        let t = &out.tables[0];
        assert_eq!(t.len(), 10);
        assert_eq!(t.columns[0][3], None);
    }

    #[test]
    fn empty_and_missing_column_are_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "e.csv", "");
        assert!(matches!(load_wide(&[("t".into(), p)]), Err(FateError::Schema(_))));
        let p = write(dir.path(), "n.csv", "time,A\n2012-01-01,1\n2012-01-02,2\n");
        assert!(matches!(load_wide(&[("t".into(), p)]), Err(FateError::Schema(_))));
        let p = write(dir.path(), "one.csv", "datetime,A\n2012-01-01,1\n");
        assert!(matches!(load_wide(&[("t".into(), p)]), Err(FateError::Contract(_))));
    }

    #[test]
    fn wide_files_join_on_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let t = write(dir.path(), "t.csv", "datetime,A,B\n2012-01-01 00:00:00,1,2\n2012-01-01 01:00:00,3,4\n");
        let h = write(dir.path(), "h.csv", "datetime,B,A\n2012-01-01 01:00:00,40,30\n2012-01-01 00:00:00,20,10\n");
        let out = load_wide(&[("temp".into(), t), ("hum".into(), h)]).unwrap();
        let a = &out.tables[0];
        assert_eq!(a.station, "A");
        assert_eq!(a.feature_names, vec!["temp", "hum"]);
        assert_eq!(a.columns[1], vec![Some(10.0), Some(30.0)]);
    }

    #[test]
    fn long_layout_groups_by_station() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "l.csv",
            "datetime,station,temp,hum\n2012-01-01,X,1,,\n2012-01-02,X,2,5\n2012-01-01,Y,3,6\n2012-01-02,Y,4,7\n"
                .replace(",,\n", ",\n")
                .as_str(),
        );
        let out = load_long(&p).unwrap();
        assert_eq!(out.tables.len(), 2);
        assert_eq!(out.tables[0].columns[1], vec![None, Some(5.0)]);
        assert_eq!(out.tables[1].station, "Y");
    }

    #[test]
    fn coordinates_must_cover_every_station() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.csv", &hourly_csv(3, &["A", "B"]));
        let mut out = load_wide(&[("t".into(), p)]).unwrap();
        let mut coords = BTreeMap::new();
        coords.insert("A".to_string(), Coordinates { lat: 1.0, lon: 2.0 });
        let err = attach_coordinates(&mut out.tables, &coords).unwrap_err();
        assert_eq!(err.code(), "E_COORDS");
        coords.insert("B".to_string(), Coordinates { lat: 3.0, lon: 4.0 });
        attach_coordinates(&mut out.tables, &coords).unwrap();
        assert_eq!(out.tables[1].latitude, Some(3.0));
    }

    #[test]
    fn timestamp_formats() {
        assert!(parse_timestamp("2017-11-30T00:00:00").is_some());
        assert!(parse_timestamp("2017-11-30").is_some());
        assert!(parse_timestamp("30/11/2017").is_none());
    }
}
