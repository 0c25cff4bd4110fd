//! Per-series coefficient fitting on a fixed support.

mod qp;

pub use qp::{
    kkt_residual, project_to_simplex, solve_simplex_qp, QpSolution, QuadraticForm, SimplexOptions,
};

use std::collections::HashMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lag::{build_lag_system, LagSystem};
use crate::selection::SupportSet;
use crate::tensor::{MobilityTensor, SeriesKey};

/// Simplex-constrained fit of one series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexFit {
    pub support: SupportSet,
    /// Coefficients aligned with `support.lags()`.
    pub coeffs: Vec<f64>,
    pub sse: f64,
    /// NaN when the fit was loaded from CSV, which does not persist it.
    pub kkt_residual: f64,
    /// A rank-deficient face was solved in the minimum-norm sense.
    pub regularized: bool,
}

impl SimplexFit {
    pub fn coefficient(&self, lag: usize) -> Option<f64> {
        self.support.position(lag).map(|i| self.coeffs[i])
    }
}

pub fn fit_series(system: &LagSystem, support: &SupportSet) -> Result<SimplexFit> {
    fit_series_with(system, support, None, &SimplexOptions::default())
}

/// Fits with an optional warm start (coefficients aligned with `support`).
pub fn fit_series_with(
    system: &LagSystem,
    support: &SupportSet,
    warm: Option<&[f64]>,
    opts: &SimplexOptions,
) -> Result<SimplexFit> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    let form = system.quadratic_form(support.lags())?;
    let sol = solve_simplex_qp(&form, warm, opts);
    if !sol.weights.iter().all(|w| w.is_finite()) {
        return Err(Error::Numerical("non-finite coefficients".into()));
    }
    let sse = system.residual_sse(support, &sol.weights)?;
    Ok(SimplexFit {
        support: support.clone(),
        coeffs: sol.weights,
        sse,
        kkt_residual: sol.kkt_residual,
        regularized: sol.rank_deficient,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum FitOutcome {
    Fitted(SimplexFit),
    Missing,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldEntry {
    pub key: SeriesKey,
    pub outcome: FitOutcome,
}

/// Fitted coefficients for every (location, variable) pair of a tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub order: usize,
    pub support: SupportSet,
    pub locations: Vec<String>,
    pub variables: Vec<String>,
    /// Canonical ascending (location, variable) order, one entry per pair.
    pub entries: Vec<FieldEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FitSummary {
    pub fitted: usize,
    pub missing: usize,
    pub failed: usize,
}

/// Fits every non-missing series of the tensor on the shared support.
///
/// Failures are isolated per series; the call only errors if nothing could
/// be fitted.
pub fn fit_all(tensor: &MobilityTensor, order: usize, support: &SupportSet) -> Result<CoefficientField> {
    fit_all_with(tensor, order, support, &SimplexOptions::default())
}

pub fn fit_all_with(
    tensor: &MobilityTensor,
    order: usize,
    support: &SupportSet,
    opts: &SimplexOptions,
) -> Result<CoefficientField> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if let Some(max) = support.max_lag() {
        if max > order {
            return Err(Error::LagOutOfRange { lag: max, order });
        }
    }
    let keys: Vec<SeriesKey> = tensor.keys().collect();
    let entries: Vec<FieldEntry> = keys
        .par_iter()
        .map(|&key| {
            let outcome = match tensor.series_view(key) {
                Err(_) => FitOutcome::Missing,
                Ok(series) => match build_lag_system(series, order)
                    .and_then(|sys| fit_series_with(&sys, support, None, opts))
                {
                    Ok(fit) => FitOutcome::Fitted(fit),
                    Err(e) => FitOutcome::Failed {
                        reason: e.to_string(),
                    },
                },
            };
            FieldEntry { key, outcome }
        })
        .collect();
    let field = CoefficientField {
        order,
        support: support.clone(),
        locations: tensor.locations().to_vec(),
        variables: tensor.variables().to_vec(),
        entries,
    };
    let summary = field.summary();
    if summary.fitted == 0 {
        return Err(match field.entries.iter().find_map(|e| match &e.outcome {
            FitOutcome::Failed { reason } => Some(reason.clone()),
            _ => None,
        }) {
            Some(reason) => Error::AllFitsFailed(reason),
            None => Error::NoUsableSeries { order },
        });
    }
    Ok(field)
}

const CSV_HEADER: [&str; 6] = ["location", "variable", "lag", "coefficient", "sse", "status"];

impl CoefficientField {
    pub fn summary(&self) -> FitSummary {
        let mut s = FitSummary::default();
        for e in &self.entries {
            match e.outcome {
                FitOutcome::Fitted(_) => s.fitted += 1,
                FitOutcome::Missing => s.missing += 1,
                FitOutcome::Failed { .. } => s.failed += 1,
            }
        }
        s
    }

    pub fn get(&self, key: SeriesKey) -> Option<&FitOutcome> {
        self.entries
            .get(key.location * self.variables.len() + key.variable)
            .filter(|e| e.key == key)
            .map(|e| &e.outcome)
    }

    pub fn fit(&self, location: &str, variable: &str) -> Option<&SimplexFit> {
        let n = self.locations.iter().position(|l| l == location)?;
        let g = self.variables.iter().position(|v| v == variable)?;
        match self.get(SeriesKey::new(n, g))? {
            FitOutcome::Fitted(f) => Some(f),
            _ => None,
        }
    }

    /// Writes one row per (series, support lag):
    /// `location,variable,lag,coefficient,sse,status`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Csv {
            line: 0,
            message: e.to_string(),
        };
        w.write_record(CSV_HEADER).map_err(err)?;
        for e in &self.entries {
            let loc = &self.locations[e.key.location];
            let var = &self.variables[e.key.variable];
            for (i, lag) in self.support.lags().iter().enumerate() {
                let (coef, sse, status) = match &e.outcome {
                    FitOutcome::Fitted(f) => (
                        f.coeffs[i].to_string(),
                        f.sse.to_string(),
                        if f.regularized { "ok-regularized".to_string() } else { "ok".to_string() },
                    ),
                    FitOutcome::Missing => (String::new(), String::new(), "missing".to_string()),
                    FitOutcome::Failed { reason } => {
                        (String::new(), String::new(), format!("failed: {reason}"))
                    }
                };
                w.write_record([loc.as_str(), var.as_str(), &lag.to_string(), &coef, &sse, &status])
                    .map_err(err)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }

    /// Reads the CSV written by [`CoefficientField::write_csv`]. Pairs absent
    /// from the file are treated as missing series.
    pub fn read_csv<R: Read>(input: R, order: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (cl, cv, ck, cc, cs, cst) = (
            col("location")?,
            col("variable")?,
            col("lag")?,
            col("coefficient")?,
            col("sse")?,
            col("status")?,
        );
        let mut locations: Vec<String> = Vec::new();
        let mut variables: Vec<String> = Vec::new();
        // (n, g) -> rows of (lag, coefficient, sse, status)
        let mut rows: HashMap<(usize, usize), Vec<(usize, Option<f64>, Option<f64>, String)>> =
            HashMap::new();
        let mut order_seen: Vec<(usize, usize)> = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(csv_err)?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let get = |i: usize| record.get(i).unwrap_or("").trim();
            let intern = |names: &mut Vec<String>, name: &str| match names.iter().position(|x| x == name) {
                Some(i) => i,
                None => {
                    names.push(name.to_string());
                    names.len() - 1
                }
            };
            let n = intern(&mut locations, get(cl));
            let g = intern(&mut variables, get(cv));
            let bad = |what: &str, v: &str| Error::Csv {
                line,
                message: format!("invalid {what} `{v}`"),
            };
            let lag: usize = get(ck).parse().map_err(|_| bad("lag", get(ck)))?;
            let num = |i: usize, what: &str| -> Result<Option<f64>> {
                let v = get(i);
                if v.is_empty() {
                    Ok(None)
                } else {
                    v.parse::<f64>().map(Some).map_err(|_| bad(what, v))
                }
            };
            let coef = num(cc, "coefficient")?;
            let sse = num(cs, "sse")?;
            let entry = rows.entry((n, g)).or_insert_with(|| {
                order_seen.push((n, g));
                Vec::new()
            });
            entry.push((lag, coef, sse, get(cst).to_string()));
        }
        let first = order_seen.first().ok_or(Error::EmptySupport)?;
        let lags: Vec<usize> = rows[first].iter().map(|r| r.0).collect();
        let support = SupportSet::new(lags)?;
        if let Some(max) = support.max_lag() {
            if max > order {
                return Err(Error::LagOutOfRange { lag: max, order });
            }
        }
        let mut entries = Vec::with_capacity(locations.len() * variables.len());
        for n in 0..locations.len() {
            for g in 0..variables.len() {
                let key = SeriesKey::new(n, g);
                let outcome = match rows.get(&(n, g)) {
                    None => FitOutcome::Missing,
                    Some(r) => {
                        let these: Vec<usize> = r.iter().map(|x| x.0).collect();
                        if these != support.lags() {
                            return Err(Error::InvalidSupport(format!(
                                "series {}/{} uses lags {these:?}, expected {:?}",
                                locations[n],
                                variables[g],
                                support.lags()
                            )));
                        }
                        let status = &r[0].3;
                        if status.starts_with("ok") {
                            let coeffs = r
                                .iter()
                                .map(|x| x.1)
                                .collect::<Option<Vec<f64>>>()
                                .ok_or_else(|| Error::CoefficientMismatch(format!(
                                    "series {}/{} has empty coefficients",
                                    locations[n], variables[g]
                                )))?;
                            FitOutcome::Fitted(SimplexFit {
                                support: support.clone(),
                                coeffs,
                                sse: r[0].2.unwrap_or(f64::NAN),
                                kkt_residual: f64::NAN,
                                regularized: status == "ok-regularized",
                            })
                        } else if status == "missing" {
                            FitOutcome::Missing
                        } else {
                            FitOutcome::Failed {
                                reason: status.strip_prefix("failed: ").unwrap_or(status).to_string(),
                            }
                        }
                    }
                };
                entries.push(FieldEntry { key, outcome });
            }
        }
        Ok(Self {
            order,
            support,
            locations,
            variables,
            entries,
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    }
}
