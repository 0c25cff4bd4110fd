//! Periodicity strengths and the summary quantities derived from them.

use std::collections::BTreeSet;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::selection::SupportSet;
use crate::simplex::{CoefficientField, FitOutcome};
use crate::tensor::MobilityTensor;

/// Time-step width parsed from labels such as `1h`, `30min`, `15m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    minutes: u32,
}

impl Resolution {
    pub fn parse(label: &str) -> Result<Self> {
        let s = label.trim().to_ascii_lowercase();
        let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
        let (num, unit) = s.split_at(split);
        let n: u32 = if num.is_empty() {
            1
        } else {
            num.parse().map_err(|_| Error::Resolution(label.into()))?
        };
        let per = match unit.trim() {
            "h" | "hr" | "hour" | "hours" => 60,
            "m" | "min" | "mins" | "minute" | "minutes" => 1,
            _ => return Err(Error::Resolution(label.into())),
        };
        let minutes = n * per;
        if minutes == 0 || 1440 % minutes != 0 {
            return Err(Error::Resolution(label.into()));
        }
        Ok(Self { minutes })
    }

    pub fn minutes(&self) -> u32 {
        self.minutes
    }

    pub fn steps_per_day(&self) -> usize {
        (1440 / self.minutes) as usize
    }

    pub fn steps_per_week(&self) -> usize {
        7 * self.steps_per_day()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdCount {
    pub threshold: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocationValue {
    pub location: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableStrengths {
    pub variable: String,
    /// Number of series with a strength (not missing, not failed).
    pub present: usize,
    /// Arithmetic mean of present strengths.
    pub mean: Option<f64>,
    /// Series with strength at or above each threshold.
    pub above: Vec<ThresholdCount>,
    pub strengths: Vec<LocationValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicityReport {
    pub target_lag: usize,
    pub support: SupportSet,
    pub thresholds: Vec<f64>,
    pub variables: Vec<VariableStrengths>,
}

/// Reads the coefficient at `target_lag` for every series.
///
/// A series whose fit succeeded gets its coefficient, or 0 when the lag is
/// not in the support. Missing and failed series have no strength.
pub fn extract_strengths(
    field: &CoefficientField,
    target_lag: usize,
    thresholds: &[f64],
) -> Result<PeriodicityReport> {
    if target_lag == 0 || target_lag > field.order {
        return Err(Error::TargetLagOutOfRange {
            target: target_lag,
            order: field.order,
        });
    }
    if field.entries.is_empty() {
        return Err(Error::NoUsableSeries { order: field.order });
    }
    let pos = field.support.position(target_lag);
    let delta = field.variables.len();
    let variables = field
        .variables
        .iter()
        .enumerate()
        .map(|(g, variable)| {
            let strengths: Vec<LocationValue> = field
                .locations
                .iter()
                .enumerate()
                .map(|(n, location)| {
                    let value = match &field.entries[n * delta + g].outcome {
                        FitOutcome::Fitted(fit) => Some(pos.map_or(0.0, |i| fit.coeffs[i])),
                        _ => None,
                    };
                    LocationValue {
                        location: location.clone(),
                        value,
                    }
                })
                .collect();
            let present: Vec<f64> = strengths.iter().filter_map(|s| s.value).collect();
            let mean = if present.is_empty() {
                None
            } else {
                Some(present.iter().sum::<f64>() / present.len() as f64)
            };
            let above = thresholds
                .iter()
                .map(|&threshold| ThresholdCount {
                    threshold,
                    count: present.iter().filter(|&&v| v >= threshold).count(),
                })
                .collect();
            VariableStrengths {
                variable: variable.clone(),
                present: present.len(),
                mean,
                above,
                strengths,
            }
        })
        .collect();
    Ok(PeriodicityReport {
        target_lag,
        support: field.support.clone(),
        thresholds: thresholds.to_vec(),
        variables,
    })
}

impl PeriodicityReport {
    pub fn variable(&self, name: &str) -> Result<&VariableStrengths> {
        self.variables
            .iter()
            .find(|v| v.variable == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn strength(&self, location: &str, variable: &str) -> Option<f64> {
        self.variable(variable)
            .ok()?
            .strengths
            .iter()
            .find(|s| s.location == location)?
            .value
    }

    /// Strength differences `variable_b - variable_a` within this report.
    pub fn diff(&self, variable_a: &str, variable_b: &str) -> Result<DiffReport> {
        diff_strengths(
            &self.column(variable_a)?,
            &self.column(variable_b)?,
        )
    }

    pub fn column(&self, variable: &str) -> Result<StrengthColumn> {
        let v = self.variable(variable)?;
        Ok(StrengthColumn {
            variable: v.variable.clone(),
            target_lag: self.target_lag,
            values: v.strengths.clone(),
        })
    }

    /// One row per (location, variable): `location,variable,target_lag,strength`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["location", "variable", "target_lag", "strength"])
            .map_err(csv_err)?;
        let n_loc = self.variables.first().map_or(0, |v| v.strengths.len());
        for n in 0..n_loc {
            for v in &self.variables {
                let s = &v.strengths[n];
                w.write_record([
                    s.location.clone(),
                    v.variable.clone(),
                    self.target_lag.to_string(),
                    fmt_opt(s.value),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }

    /// Per-variable aggregates: `variable,present,mean,threshold,count`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["variable", "present", "mean", "threshold", "count"])
            .map_err(csv_err)?;
        for v in &self.variables {
            for t in &v.above {
                w.write_record([
                    v.variable.clone(),
                    v.present.to_string(),
                    fmt_opt(v.mean),
                    t.threshold.to_string(),
                    t.count.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

/// Strengths of one variable across locations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrengthColumn {
    pub variable: String,
    pub target_lag: usize,
    pub values: Vec<LocationValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffReport {
    pub variable_a: String,
    pub variable_b: String,
    pub target_lag: usize,
    /// `b - a` per location, ordered as in `a`; absent if either side is.
    pub values: Vec<LocationValue>,
}

pub fn diff_strengths(a: &StrengthColumn, b: &StrengthColumn) -> Result<DiffReport> {
    if a.target_lag != b.target_lag {
        return Err(Error::TargetLagMismatch {
            a: a.target_lag,
            b: b.target_lag,
        });
    }
    let set_a: BTreeSet<&str> = a.values.iter().map(|v| v.location.as_str()).collect();
    let set_b: BTreeSet<&str> = b.values.iter().map(|v| v.location.as_str()).collect();
    if set_a != set_b {
        return Err(Error::LocationMismatch {
            only_a: set_a.difference(&set_b).map(|s| s.to_string()).collect(),
            only_b: set_b.difference(&set_a).map(|s| s.to_string()).collect(),
        });
    }
    let values = a
        .values
        .iter()
        .map(|va| {
            let vb = b
                .values
                .iter()
                .find(|v| v.location == va.location)
                .and_then(|v| v.value);
            LocationValue {
                location: va.location.clone(),
                value: match (va.value, vb) {
                    (Some(x), Some(y)) => Some(y - x),
                    _ => None,
                },
            }
        })
        .collect();
    Ok(DiffReport {
        variable_a: a.variable.clone(),
        variable_b: b.variable.clone(),
        target_lag: a.target_lag,
        values,
    })
}

impl DiffReport {
    /// `(negative, zero, positive)` counts over present differences.
    pub fn sign_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for v in self.values.iter().filter_map(|v| v.value) {
            if v < 0.0 {
                c.0 += 1;
            } else if v > 0.0 {
                c.2 += 1;
            } else {
                c.1 += 1;
            }
        }
        c
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["location", "variable_a", "variable_b", "difference"])
            .map_err(csv_err)?;
        for v in &self.values {
            w.write_record([
                v.location.clone(),
                self.variable_a.clone(),
                self.variable_b.clone(),
                fmt_opt(v.value),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableProfile {
    pub variable: String,
    pub complete_cycles: usize,
    /// Mean total count per step of the cycle, summed over locations.
    pub profile: Vec<f64>,
    /// Sum of the profile: average volume of one complete cycle.
    pub cycle_total: f64,
    pub recovery_percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeeklyProfile {
    pub cycle: usize,
    pub anchor: usize,
    pub baseline: String,
    pub profiles: Vec<VariableProfile>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileOptions {
    pub baseline: String,
    /// Cycle position of each variable's first step (0 = Monday 00:00).
    pub anchor: usize,
    /// Cycle length in steps; defaults to one week at the tensor resolution.
    pub cycle: Option<usize>,
}

/// Average cycle profile of each variable and its volume relative to the
/// baseline variable.
///
/// Counts are summed over non-missing locations, then averaged over the
/// complete cycles from the start of each variable; a trailing partial cycle
/// is ignored.
pub fn weekly_profile(tensor: &MobilityTensor, opts: &ProfileOptions) -> Result<WeeklyProfile> {
    let cycle = match opts.cycle {
        Some(c) if c > 0 => c,
        Some(_) => return Err(Error::Config("cycle length must be positive".into())),
        None => Resolution::parse(tensor.resolution())?.steps_per_week(),
    };
    let baseline = tensor
        .variable_index(&opts.baseline)
        .ok_or_else(|| Error::UnknownVariable(opts.baseline.clone()))?;
    let mut profiles = Vec::with_capacity(tensor.n_variables());
    for (g, variable) in tensor.variables().iter().enumerate() {
        let len = tensor.length(g);
        let cycles = len / cycle;
        if cycles == 0 {
            return Err(Error::NoCompleteCycle {
                variable: variable.clone(),
                length: len,
                cycle,
            });
        }
        let mut totals = vec![0u128; len];
        for (key, s) in tensor.present() {
            if key.variable == g {
                for (t, &v) in s.iter().enumerate() {
                    totals[t] += v as u128;
                }
            }
        }
        let mut bins = vec![0u128; cycle];
        for (t, &v) in totals.iter().take(cycles * cycle).enumerate() {
            bins[(opts.anchor + t) % cycle] += v;
        }
        let profile: Vec<f64> = bins.iter().map(|&b| b as f64 / cycles as f64).collect();
        let cycle_total = bins.iter().sum::<u128>() as f64 / cycles as f64;
        profiles.push(VariableProfile {
            variable: variable.clone(),
            complete_cycles: cycles,
            profile,
            cycle_total,
            recovery_percentage: 0.0,
        });
    }
    let base_total = profiles[baseline].cycle_total;
    if base_total <= 0.0 {
        return Err(Error::ZeroBaseline(opts.baseline.clone()));
    }
    for p in &mut profiles {
        p.recovery_percentage = p.cycle_total / base_total * 100.0;
    }
    Ok(WeeklyProfile {
        cycle,
        anchor: opts.anchor,
        baseline: opts.baseline.clone(),
        profiles,
    })
}

impl WeeklyProfile {
    pub fn recovery(&self, variable: &str) -> Option<f64> {
        self.profiles
            .iter()
            .find(|p| p.variable == variable)
            .map(|p| p.recovery_percentage)
    }

    /// `variable,step,mean_count` rows.
    pub fn write_profile_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["variable", "step", "mean_count"]).map_err(csv_err)?;
        for p in &self.profiles {
            for (i, v) in p.profile.iter().enumerate() {
                w.write_record([p.variable.clone(), i.to_string(), v.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }

    /// `variable,complete_cycles,cycle_total,recovery_percentage` rows.
    pub fn write_recovery_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["variable", "complete_cycles", "cycle_total", "recovery_percentage"])
            .map_err(csv_err)?;
        for p in &self.profiles {
            w.write_record([
                p.variable.clone(),
                p.complete_cycles.to_string(),
                p.cycle_total.to_string(),
                p.recovery_percentage.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

/// Pairs `(x_t, x_{t-k})` for `t = k..T`, in time order.
pub fn lag_scatter(series: &[u64], lag: usize) -> Result<Vec<(u64, u64)>> {
    if lag == 0 || lag >= series.len() {
        return Err(Error::ScatterLag {
            lag,
            len: series.len(),
        });
    }
    Ok(series[lag..].iter().copied().zip(series.iter().copied()).collect())
}

pub fn write_scatter_csv<W: Write>(pairs: &[(u64, u64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x_t", "x_t_minus_k"]).map_err(csv_err)?;
    for (a, b) in pairs {
        w.write_record([a.to_string(), b.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyEntry {
    pub location: String,
    pub variable: String,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyAverage {
    pub steps_per_day: usize,
    pub entries: Vec<DailyEntry>,
    /// Trailing steps dropped per variable because they do not fill a day.
    pub dropped_steps: Vec<usize>,
}

/// Mean daily total of each series over its complete days.
pub fn daily_average(tensor: &MobilityTensor) -> Result<DailyAverage> {
    let per_day = Resolution::parse(tensor.resolution())?.steps_per_day();
    let mut dropped = Vec::with_capacity(tensor.n_variables());
    for (g, variable) in tensor.variables().iter().enumerate() {
        let len = tensor.length(g);
        if len < per_day {
            return Err(Error::NoCompleteCycle {
                variable: variable.clone(),
                length: len,
                cycle: per_day,
            });
        }
        let rest = len % per_day;
        if rest != 0 {
            log::warn!(
                "variable `{variable}`: dropping {rest} trailing steps that do not fill a day"
            );
        }
        dropped.push(rest);
    }
    let entries = tensor
        .keys()
        .map(|key| {
            let mean = tensor.series_view(key).ok().map(|s| {
                let days = s.len() / per_day;
                let total: u128 = s[..days * per_day].iter().map(|&v| v as u128).sum();
                total as f64 / days as f64
            });
            DailyEntry {
                location: tensor.locations()[key.location].clone(),
                variable: tensor.variables()[key.variable].clone(),
                mean,
            }
        })
        .collect();
    Ok(DailyAverage {
        steps_per_day: per_day,
        entries,
        dropped_steps: dropped,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv {
        line: 0,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::{FieldEntry, SimplexFit};
    use crate::tensor::SeriesKey;

    fn field(coeffs: &[Option<[f64; 2]>], lags: [usize; 2]) -> CoefficientField {
        let support = SupportSet::new(lags.to_vec()).unwrap();
        CoefficientField {
            order: 168,
            support: support.clone(),
            locations: (0..coeffs.len()).map(|i| format!("L{i}")).collect(),
            variables: vec!["v".into()],
            entries: coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| FieldEntry {
                    key: SeriesKey::new(i, 0),
                    outcome: match c {
                        Some(c) => FitOutcome::Fitted(SimplexFit {
                            support: support.clone(),
                            coeffs: c.to_vec(),
                            sse: 0.0,
                            kkt_residual: 0.0,
                            regularized: false,
                        }),
                        None => FitOutcome::Missing,
                    },
                })
                .collect(),
        }
    }

    #[test]
    fn resolution_labels() {
        assert_eq!(Resolution::parse("1h").unwrap().steps_per_week(), 168);
        assert_eq!(Resolution::parse("30min").unwrap().steps_per_week(), 336);
        assert_eq!(Resolution::parse("15m").unwrap().steps_per_day(), 96);
        assert!(Resolution::parse("7min").is_err());
        assert!(Resolution::parse("weekly").is_err());
    }

    #[test]
    fn strengths_means_and_thresholds() {
        let f = field(&[Some([0.1, 0.9]), Some([0.3, 0.7]), None], [1, 168]);
        let r = extract_strengths(&f, 168, &[0.8]).unwrap();
        let v = &r.variables[0];
        assert_eq!(v.present, 2);
        assert_eq!(v.mean, Some((0.9 + 0.7) / 2.0));
        assert_eq!(v.above[0].count, 1);
        assert_eq!(r.strength("L2", "v"), None);
        assert_eq!(r.strength("L0", "v"), Some(0.9));
    }

    #[test]
    fn unselected_target_lag_yields_zero() {
        let f = field(&[Some([0.4, 0.6]), Some([1.0, 0.0])], [1, 24]);
        let r = extract_strengths(&f, 168, &[0.8]).unwrap();
        assert!(r.variables[0].strengths.iter().all(|s| s.value == Some(0.0)));
        assert!(matches!(
            extract_strengths(&f, 169, &[]),
            Err(Error::TargetLagOutOfRange { .. })
        ));
    }

    #[test]
    fn diffs_propagate_absence_and_reject_mismatch() {
        let col = |vals: &[(&str, Option<f64>)]| StrengthColumn {
            variable: "x".into(),
            target_lag: 168,
            values: vals
                .iter()
                .map(|(l, v)| LocationValue {
                    location: l.to_string(),
                    value: *v,
                })
                .collect(),
        };
        let a = col(&[("p", Some(0.5)), ("q", Some(0.2))]);
        let b = col(&[("q", Some(0.6)), ("p", None)]);
        let d = diff_strengths(&a, &b).unwrap();
        assert_eq!(d.values[0].value, None);
        assert!((d.values[1].value.unwrap() - 0.4).abs() < 1e-15);
        let same = diff_strengths(&a, &a).unwrap();
        assert!(same.values.iter().all(|v| v.value == Some(0.0)));

        let c = col(&[("p", Some(0.5)), ("r", Some(0.2))]);
        match diff_strengths(&a, &c).unwrap_err() {
            Error::LocationMismatch { only_a, only_b } => {
                assert_eq!(only_a, vec!["q"]);
                assert_eq!(only_b, vec!["r"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scatter_pairs() {
        assert_eq!(lag_scatter(&[1, 2, 3, 4], 1).unwrap(), vec![(2, 1), (3, 2), (4, 3)]);
        let periodic: Vec<u64> = (0..30).map(|t| [4, 1, 8][t % 3]).collect();
        assert!(lag_scatter(&periodic, 3).unwrap().iter().all(|(a, b)| a == b));
        assert!(lag_scatter(&[1, 2], 2).is_err());
        assert!(lag_scatter(&[1, 2], 0).is_err());
    }

    fn ones(len: usize, res: &str) -> MobilityTensor {
        MobilityTensor::new(vec!["a".into()], vec!["v".into()], vec![vec![Some(vec![1; len])]], res).unwrap()
    }

    #[test]
    fn daily_average_truncates_partial_days() {
        let d = daily_average(&ones(48, "1h")).unwrap();
        assert_eq!(d.entries[0].mean, Some(24.0));
        assert_eq!(d.dropped_steps, vec![0]);
        let d = daily_average(&ones(50, "1h")).unwrap();
        assert_eq!(d.entries[0].mean, Some(24.0));
        assert_eq!(d.dropped_steps, vec![2]);
    }

    #[test]
    fn constant_profile_recovers_fully() {
        let t = MobilityTensor::new(
            vec!["a".into(), "b".into()],
            vec!["2019".into(), "2020".into()],
            vec![
                vec![Some(vec![3; 400]), Some(vec![3; 200])],
                vec![Some(vec![1; 400]), Some(vec![1; 200])],
            ],
            "1h",
        )
        .unwrap();
        let p = weekly_profile(
            &t,
            &ProfileOptions {
                baseline: "2019".into(),
                anchor: 0,
                cycle: None,
            },
        )
        .unwrap();
        assert_eq!(p.cycle, 168);
        assert_eq!(p.recovery("2019"), Some(100.0));
        assert_eq!(p.recovery("2020"), Some(100.0));
        assert_eq!(p.profiles[0].complete_cycles, 2);
        assert!(p.profiles[0].profile.iter().all(|&v| v == 4.0));
    }

    #[test]
    fn profile_requires_a_full_cycle() {
        let err = weekly_profile(
            &ones(100, "1h"),
            &ProfileOptions {
                baseline: "v".into(),
                anchor: 0,
                cycle: None,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::NoCompleteCycle { cycle: 168, .. }));
    }
}
