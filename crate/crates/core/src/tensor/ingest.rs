use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::MobilityTensor;
use crate::analytics::Resolution;
use crate::error::{Error, Result};

/// Header names of the four long-format columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSchema {
    pub location: String,
    pub variable: String,
    pub time: String,
    pub count: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            location: "location".into(),
            variable: "variable".into(),
            time: "time_index".into(),
            count: "count".into(),
        }
    }
}

/// How the time column is encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TimeFormat {
    /// Integer step index, offset by `time_base`.
    #[default]
    Index,
    /// ISO-8601 timestamp; the earliest timestamp of each variable is step 0
    /// and the step width comes from the declared resolution.
    Timestamp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestOptions {
    pub schema: ColumnSchema,
    /// First valid time index (0 or 1).
    pub time_base: i64,
    pub time_format: TimeFormat,
    /// Order identifiers lexicographically instead of by first appearance.
    pub sort_ids: bool,
    pub resolution: String,
    /// Zero-fill series that stop before the end of their variable's range
    /// instead of rejecting them as ragged.
    pub fill_trailing: bool,
    /// Variable name used by the wide format when the file has no variable column.
    pub wide_variable: String,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            schema: ColumnSchema::default(),
            time_base: 1,
            time_format: TimeFormat::Index,
            sort_ids: false,
            resolution: "1h".into(),
            fill_trailing: false,
            wide_variable: "value".into(),
        }
    }
}

/// Accumulates validated observations before the tensor is assembled.
struct Collector {
    locations: Vec<String>,
    location_ids: HashMap<String, usize>,
    variables: Vec<String>,
    variable_ids: HashMap<String, usize>,
    // (location, variable) -> time -> count
    cells: HashMap<(usize, usize), BTreeMap<i64, u64>>,
    seen: HashSet<(usize, usize, i64)>,
    // per-variable timestamp origin, only used for `TimeFormat::Timestamp`
    stamps: Vec<(usize, usize, NaiveDateTime, u64, u64)>,
}

impl Collector {
    fn new() -> Self {
        Self {
            locations: Vec::new(),
            location_ids: HashMap::new(),
            variables: Vec::new(),
            variable_ids: HashMap::new(),
            cells: HashMap::new(),
            seen: HashSet::new(),
            stamps: Vec::new(),
        }
    }

    fn intern(names: &mut Vec<String>, ids: &mut HashMap<String, usize>, name: &str) -> usize {
        if let Some(&i) = ids.get(name) {
            return i;
        }
        names.push(name.to_string());
        ids.insert(name.to_string(), names.len() - 1);
        names.len() - 1
    }

    fn ids(&mut self, location: &str, variable: &str) -> (usize, usize) {
        let n = Self::intern(&mut self.locations, &mut self.location_ids, location);
        let g = Self::intern(&mut self.variables, &mut self.variable_ids, variable);
        (n, g)
    }

    fn insert(&mut self, line: u64, n: usize, g: usize, t: i64, count: u64) -> Result<()> {
        if !self.seen.insert((n, g, t)) {
            return Err(Error::DuplicateEntry {
                line,
                location: self.locations[n].clone(),
                variable: self.variables[g].clone(),
                time: t,
            });
        }
        self.cells.entry((n, g)).or_default().insert(t, count);
        Ok(())
    }

    fn resolve_stamps(&mut self, resolution: &str) -> Result<()> {
        if self.stamps.is_empty() {
            return Ok(());
        }
        let step = Resolution::parse(resolution)?.minutes() as i64 * 60;
        let mut origin: HashMap<usize, NaiveDateTime> = HashMap::new();
        for &(_, g, ts, _, _) in &self.stamps {
            origin
                .entry(g)
                .and_modify(|o| *o = (*o).min(ts))
                .or_insert(ts);
        }
        let stamps = std::mem::take(&mut self.stamps);
        for (n, g, ts, count, line) in stamps {
            let secs = (ts - origin[&g]).num_seconds();
            if secs % step != 0 {
                return Err(Error::InvalidTime {
                    line,
                    value: format!("{ts} is not aligned to the {resolution} grid"),
                });
            }
            self.insert(line, n, g, secs / step, count)?;
        }
        Ok(())
    }

    fn finish(mut self, opts: &IngestOptions) -> Result<MobilityTensor> {
        self.resolve_stamps(&opts.resolution)?;
        let (loc_order, var_order) = if opts.sort_ids {
            (sorted_order(&self.locations), sorted_order(&self.variables))
        } else {
            (
                (0..self.locations.len()).collect(),
                (0..self.variables.len()).collect(),
            )
        };

        let mut lengths = vec![0usize; self.variables.len()];
        for (&(_, g), cells) in &self.cells {
            if let Some((&t, _)) = cells.iter().next_back() {
                lengths[g] = lengths[g].max(t as usize + 1);
            }
        }
        let mut ragged: Vec<Vec<String>> = vec![Vec::new(); self.variables.len()];
        if !opts.fill_trailing {
            for &n in &loc_order {
                for &g in &var_order {
                    if let Some(cells) = self.cells.get(&(n, g)) {
                        let last = cells.keys().next_back().copied().unwrap_or(-1);
                        if (last + 1) as usize != lengths[g] {
                            ragged[g].push(format!("{}/{}", self.locations[n], self.variables[g]));
                        }
                    }
                }
            }
        }
        if let Some(g) = var_order.iter().copied().find(|&g| !ragged[g].is_empty()) {
            return Err(Error::RaggedCoverage {
                variable: self.variables[g].clone(),
                expected: lengths[g],
                series: std::mem::take(&mut ragged[g]),
            });
        }

        let series = loc_order
            .iter()
            .map(|&n| {
                var_order
                    .iter()
                    .map(|&g| {
                        self.cells.get(&(n, g)).map(|cells| {
                            let mut s = vec![0u64; lengths[g]];
                            for (&t, &v) in cells {
                                s[t as usize] = v;
                            }
                            s
                        })
                    })
                    .collect()
            })
            .collect();
        MobilityTensor::new(
            loc_order.iter().map(|&n| self.locations[n].clone()).collect(),
            var_order.iter().map(|&g| self.variables[g].clone()).collect(),
            series,
            opts.resolution.clone(),
        )
    }
}

fn sorted_order(names: &[String]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..names.len()).collect();
    idx.sort_by(|&a, &b| names[a].cmp(&names[b]));
    idx
}

fn parse_count(raw: &str, line: u64) -> Result<u64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<u64>() {
        return Ok(v);
    }
    // exports from dataframe tools often write integral floats ("12.0")
    match raw.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        _ => Err(Error::InvalidCount {
            line,
            value: raw.to_string(),
        }),
    }
}

fn parse_index(raw: &str, base: i64, line: u64) -> Result<i64> {
    let bad = || Error::InvalidTime {
        line,
        value: raw.to_string(),
    };
    let t = raw.trim().parse::<i64>().map_err(|_| bad())?;
    if t < base {
        return Err(bad());
    }
    Ok(t - base)
}

fn parse_timestamp(raw: &str, line: u64) -> Result<NaiveDateTime> {
    let raw = raw.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(dt);
        }
    }
    Err(Error::InvalidTime {
        line,
        value: raw.to_string(),
    })
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Csv {
        line,
        message: e.to_string(),
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

/// Reads long-format CSV (`location, variable, time, count`) from any reader.
pub fn read_long_csv<R: Read>(input: R, opts: &IngestOptions) -> Result<MobilityTensor> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let schema = &opts.schema;
    let (ci_loc, ci_var, ci_time, ci_count) = (
        column(&headers, &schema.location)?,
        column(&headers, &schema.variable)?,
        column(&headers, &schema.time)?,
        column(&headers, &schema.count)?,
    );
    let mut c = Collector::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let count = parse_count(field(ci_count), line)?;
        let (n, g) = c.ids(field(ci_loc).trim(), field(ci_var).trim());
        match opts.time_format {
            TimeFormat::Index => {
                let t = parse_index(field(ci_time), opts.time_base, line)?;
                c.insert(line, n, g, t, count)?;
            }
            TimeFormat::Timestamp => {
                let ts = parse_timestamp(field(ci_time), line)?;
                c.stamps.push((n, g, ts, count, line));
            }
        }
    }
    c.finish(opts)
}

/// Ingests a long-format CSV file.
pub fn ingest_long_csv(path: &Path, opts: &IngestOptions) -> Result<MobilityTensor> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_long_csv(std::io::BufReader::new(file), opts)
}

/// Reads wide-format CSV: a time column, an optional variable column, and one
/// count column per location. Empty cells are treated as absent rows.
pub fn read_wide_csv<R: Read>(input: R, opts: &IngestOptions) -> Result<MobilityTensor> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let ci_time = column(&headers, &opts.schema.time)?;
    let ci_var = column(&headers, &opts.schema.variable).ok();
    let loc_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != ci_time && Some(i) != ci_var)
        .map(|(i, h)| (i, h.trim().to_string()))
        .collect();
    let mut c = Collector::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let variable = ci_var
            .and_then(|i| record.get(i))
            .map(str::trim)
            .unwrap_or(&opts.wide_variable)
            .to_string();
        let time = record.get(ci_time).unwrap_or("");
        for (i, loc) in &loc_cols {
            let raw = record.get(*i).unwrap_or("").trim();
            if raw.is_empty() {
                continue;
            }
            let count = parse_count(raw, line)?;
            let (n, g) = c.ids(loc, &variable);
            match opts.time_format {
                TimeFormat::Index => {
                    let t = parse_index(time, opts.time_base, line)?;
                    c.insert(line, n, g, t, count)?;
                }
                TimeFormat::Timestamp => {
                    let ts = parse_timestamp(time, line)?;
                    c.stamps.push((n, g, ts, count, line));
                }
            }
        }
    }
    c.finish(opts)
}

pub fn ingest_wide_csv(path: &Path, opts: &IngestOptions) -> Result<MobilityTensor> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_wide_csv(std::io::BufReader::new(file), opts)
}
