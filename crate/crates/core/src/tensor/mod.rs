//! Ragged third-order count tensor indexed by (location, variable, time).
//!
//! Every variable has its own length, shared by all locations. A series that
//! never appeared in the input is flagged missing and is skipped by every
//! fitting routine instead of being treated as zeros.

mod ingest;

pub use ingest::{
    ingest_long_csv, ingest_wide_csv, read_long_csv, read_wide_csv, ColumnSchema, IngestOptions,
    TimeFormat,
};

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Zero-based address of one series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub struct SeriesKey {
    pub location: usize,
    pub variable: usize,
}

impl SeriesKey {
    pub fn new(location: usize, variable: usize) -> Self {
        Self { location, variable }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTensor {
    locations: Vec<String>,
    variables: Vec<String>,
    lengths: Vec<usize>,
    // row-major over (location, variable); `None` marks a missing series
    series: Vec<Option<Vec<u64>>>,
    resolution: String,
}

impl MobilityTensor {
    /// Builds a tensor from per-location, per-variable series.
    ///
    /// `series[n][g]` is `None` for a missing series. All present series of a
    /// variable must have the same nonzero length; variables with no present
    /// series at all are rejected because their length is undefined.
    pub fn new(
        locations: Vec<String>,
        variables: Vec<String>,
        series: Vec<Vec<Option<Vec<u64>>>>,
        resolution: impl Into<String>,
    ) -> Result<Self> {
        if series.len() != locations.len() {
            return Err(Error::Config(format!(
                "{} locations declared but {} location rows supplied",
                locations.len(),
                series.len()
            )));
        }
        let delta = variables.len();
        let mut lengths: Vec<Option<usize>> = vec![None; delta];
        let mut ragged: Vec<Vec<String>> = vec![Vec::new(); delta];
        for (n, row) in series.iter().enumerate() {
            if row.len() != delta {
                return Err(Error::Config(format!(
                    "location `{}` has {} variables, expected {delta}",
                    locations[n],
                    row.len()
                )));
            }
            for (g, s) in row.iter().enumerate() {
                if let Some(s) = s {
                    match lengths[g] {
                        None => lengths[g] = Some(s.len()),
                        Some(len) if len != s.len() => ragged[g].push(locations[n].clone()),
                        Some(_) => {}
                    }
                }
            }
        }
        for (g, offenders) in ragged.into_iter().enumerate() {
            if !offenders.is_empty() {
                return Err(Error::RaggedCoverage {
                    variable: variables[g].clone(),
                    expected: lengths[g].unwrap_or(0),
                    series: offenders,
                });
            }
        }
        let lengths = lengths
            .into_iter()
            .enumerate()
            .map(|(g, len)| match len {
                Some(len) if len > 0 => Ok(len),
                _ => Err(Error::Config(format!(
                    "variable `{}` has no observations",
                    variables[g]
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            locations,
            variables,
            lengths,
            series: series.into_iter().flatten().collect(),
            resolution: resolution.into(),
        })
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    /// Time length `T_γ` of a variable.
    pub fn length(&self, variable: usize) -> usize {
        self.lengths[variable]
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn resolution(&self) -> &str {
        &self.resolution
    }

    pub fn location_index(&self, id: &str) -> Option<usize> {
        self.locations.iter().position(|l| l == id)
    }

    pub fn variable_index(&self, id: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == id)
    }

    /// Resolves a (location id, variable id) pair.
    pub fn key(&self, location: &str, variable: &str) -> Result<SeriesKey> {
        let n = self
            .location_index(location)
            .ok_or_else(|| Error::UnknownLocation(location.to_string()))?;
        let g = self
            .variable_index(variable)
            .ok_or_else(|| Error::UnknownVariable(variable.to_string()))?;
        Ok(SeriesKey::new(n, g))
    }

    fn slot(&self, key: SeriesKey) -> Result<usize> {
        if key.location >= self.n_locations() || key.variable >= self.n_variables() {
            return Err(Error::BadIndex {
                location: key.location,
                variable: key.variable,
                locations: self.n_locations(),
                variables: self.n_variables(),
            });
        }
        Ok(key.location * self.n_variables() + key.variable)
    }

    pub fn is_missing(&self, key: SeriesKey) -> Result<bool> {
        Ok(self.series[self.slot(key)?].is_none())
    }

    /// Per-(location, variable) missing flags in canonical order.
    pub fn missing_mask(&self) -> Vec<bool> {
        self.series.iter().map(Option::is_none).collect()
    }

    /// Read-only view of one series in time order.
    pub fn series_view(&self, key: SeriesKey) -> Result<&[u64]> {
        let slot = self.slot(key)?;
        self.series[slot]
            .as_deref()
            .ok_or_else(|| Error::MissingSeries {
                location: self.locations[key.location].clone(),
                variable: self.variables[key.variable].clone(),
            })
    }

    /// All keys in canonical ascending (location, variable) order.
    pub fn keys(&self) -> impl Iterator<Item = SeriesKey> + '_ {
        let delta = self.n_variables();
        (0..self.n_locations()).flat_map(move |n| (0..delta).map(move |g| SeriesKey::new(n, g)))
    }

    /// Non-missing series in canonical order.
    pub fn present(&self) -> impl Iterator<Item = (SeriesKey, &[u64])> + '_ {
        self.keys()
            .zip(self.series.iter())
            .filter_map(|(k, s)| s.as_deref().map(|s| (k, s)))
    }

    /// Sum of every stored count.
    pub fn total_count(&self) -> u128 {
        self.present()
            .flat_map(|(_, s)| s.iter())
            .map(|&v| v as u128)
            .sum()
    }

    pub fn series_label(&self, key: SeriesKey) -> String {
        format!(
            "{}/{}",
            self.locations[key.location], self.variables[key.variable]
        )
    }

    /// Writes the tensor as long-format CSV (`location,variable,time_index,count`).
    /// Missing series produce no rows.
    pub fn write_long_csv<W: Write>(&self, out: W, time_base: i64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let map_err = |e: csv::Error| Error::Csv {
            line: 0,
            message: e.to_string(),
        };
        w.write_record(["location", "variable", "time_index", "count"])
            .map_err(map_err)?;
        for (key, s) in self.present() {
            for (t, v) in s.iter().enumerate() {
                w.write_record([
                    self.locations[key.location].as_str(),
                    self.variables[key.variable].as_str(),
                    &(t as i64 + time_base).to_string(),
                    &v.to_string(),
                ])
                .map_err(map_err)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }

    pub fn write_long_csv_path(&self, path: &Path, time_base: i64) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_long_csv(std::io::BufWriter::new(file), time_base)
    }
}
