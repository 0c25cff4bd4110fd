//! Synthetic tensors with planted periodic structure, and recovery studies.
//!
//! Every series mixes one non-negative template per planted period,
//! `x_t = sum_p weight_p * template_p[t mod p]`, then adds noise and rounds
//! to a count. Randomness comes from ChaCha8 with one stream per series for
//! the templates and another for the noise, so any series can be
//! regenerated on its own and results do not depend on thread count.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::extract_strengths;
use crate::error::{Error, Result};
use crate::selection::{SelectionProblem, Solver};
use crate::simplex::fit_all_with;
use crate::config::SolverConfig;
use crate::tensor::MobilityTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedPeriod {
    pub period: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemplateRange {
    pub low: f64,
    pub high: f64,
}

impl Default for TemplateRange {
    fn default() -> Self {
        Self { low: 0.0, high: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum NoiseModel {
    #[default]
    None,
    /// `scale * Poisson(x / scale)`: mean `x`, variance `scale * x`.
    Poisson { scale: f64 },
    /// `x + N(0, sigma^2)`.
    Gaussian { sigma: f64 },
}

impl NoiseModel {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseModel::None => "none",
            NoiseModel::Poisson { .. } => "poisson",
            NoiseModel::Gaussian { .. } => "gaussian",
        }
    }

    pub fn level(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Poisson { scale } => scale,
            NoiseModel::Gaussian { sigma } => sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub locations: usize,
    pub variables: usize,
    pub length: usize,
    pub order: usize,
    pub periods: Vec<PlantedPeriod>,
    #[serde(default)]
    pub template: TemplateRange,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Synth(format!("invalid spec: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Synth(m));
        if self.locations == 0 || self.variables == 0 {
            return bad("need at least one location and one variable".into());
        }
        if self.order == 0 || self.length <= self.order {
            return bad(format!(
                "length {} must exceed order {} (and order must be positive)",
                self.length, self.order
            ));
        }
        if self.periods.is_empty() {
            return bad("at least one period is required".into());
        }
        let mut total = 0.0;
        for p in &self.periods {
            if p.period == 0 || p.period > self.order {
                return bad(format!("period {} must lie in 1..={}", p.period, self.order));
            }
            if !(p.weight >= 0.0 && p.weight.is_finite()) {
                return bad(format!("weight of period {} must be non-negative", p.period));
            }
            total += p.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("period weights sum to {total}, not 1"));
        }
        let t = self.template;
        if !(t.low >= 0.0 && t.high >= t.low && t.high.is_finite()) {
            return bad("template range must satisfy 0 <= low <= high".into());
        }
        match self.noise {
            NoiseModel::Poisson { scale } if !(scale > 0.0 && scale.is_finite()) => {
                bad("poisson scale must be positive".into())
            }
            NoiseModel::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                bad("gaussian sigma must be non-negative".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub periods: Vec<PlantedPeriod>,
    /// Post-noise values below zero that were clamped.
    pub clamped: u64,
    pub seed: u64,
}

impl GroundTruth {
    pub fn weight(&self, lag: usize) -> f64 {
        self.periods
            .iter()
            .filter(|p| p.period == lag)
            .map(|p| p.weight)
            .sum()
    }
}

fn series_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn generate_series(spec: &SynthSpec, index: u64) -> (Vec<u64>, u64) {
    let mut trng = series_rng(spec.seed, 2 * index);
    let mut nrng = series_rng(spec.seed, 2 * index + 1);
    let TemplateRange { low, high } = spec.template;
    let templates: Vec<Vec<f64>> = spec
        .periods
        .iter()
        .map(|p| {
            (0..p.period)
                .map(|_| if high > low { trng.random_range(low..high) } else { low })
                .collect()
        })
        .collect();
    let gauss = match spec.noise {
        NoiseModel::Gaussian { sigma } if sigma > 0.0 => Normal::new(0.0, sigma).ok(),
        _ => None,
    };
    let mut clamped = 0;
    let values = (0..spec.length)
        .map(|t| {
            let clean: f64 = spec
                .periods
                .iter()
                .zip(&templates)
                .map(|(p, tpl)| p.weight * tpl[t % p.period])
                .sum();
            let noisy = match spec.noise {
                NoiseModel::None => clean,
                NoiseModel::Gaussian { .. } => clean + gauss.map_or(0.0, |g| g.sample(&mut nrng)),
                NoiseModel::Poisson { scale } => {
                    let rate = clean / scale;
                    if rate > 0.0 {
                        let draw: f64 = Poisson::new(rate).expect("positive rate").sample(&mut nrng);
                        scale * draw
                    } else {
                        0.0
                    }
                }
            };
            let r = noisy.round();
            if r < 0.0 {
                clamped += 1;
                0
            } else {
                r as u64
            }
        })
        .collect();
    (values, clamped)
}

/// Builds the tensor described by `spec`. Locations are named `s0, s1, ...`
/// and variables `v0, v1, ...`.
pub fn generate(spec: &SynthSpec) -> Result<(MobilityTensor, GroundTruth)> {
    spec.validate()?;
    let n_series = spec.locations * spec.variables;
    let generated: Vec<(Vec<u64>, u64)> = (0..n_series as u64)
        .into_par_iter()
        .map(|i| generate_series(spec, i))
        .collect();
    let clamped = generated.iter().map(|g| g.1).sum();
    if clamped > 0 {
        log::warn!("{clamped} negative values clamped to zero");
    }
    let mut it = generated.into_iter();
    let series = (0..spec.locations)
        .map(|_| (0..spec.variables).map(|_| it.next().map(|g| g.0)).collect())
        .collect();
    let tensor = MobilityTensor::new(
        (0..spec.locations).map(|i| format!("s{i}")).collect(),
        (0..spec.variables).map(|i| format!("v{i}")).collect(),
        series,
        "1h",
    )?;
    let truth = GroundTruth {
        periods: spec.periods.clone(),
        clamped,
        seed: spec.seed,
    };
    Ok((tensor, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    /// Shape, periods and template; its noise and seed are replaced per cell.
    pub base: SynthSpec,
    pub noise_levels: Vec<NoiseModel>,
    /// Seeds per cell, run as `base.seed + i`.
    pub seeds: u64,
    pub sparsity: usize,
    #[serde(default)]
    pub solver: Solver,
    /// Lag whose strength and recovery are measured.
    pub target_lag: usize,
}

impl StudySpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Synth(format!("invalid study: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub noise_model: String,
    pub noise_level: f64,
    pub seeds: u64,
    /// Runs whose selected support contains the target lag.
    pub recovered: u64,
    pub recovery_rate: f64,
    /// Mean over successful runs of the per-run mean strength.
    pub mean_strength: Option<f64>,
    pub failed: u64,
}

struct RunOutcome {
    recovered: bool,
    strength: f64,
}

fn run_cell(spec: &SynthSpec, study: &StudySpec, config: &SolverConfig) -> Result<RunOutcome> {
    let (tensor, _) = generate(spec)?;
    let problem = SelectionProblem::from_tensor(&tensor, spec.order)?;
    let selection = match study.solver {
        Solver::Exact => problem.select_exact(study.sparsity, &config.exact_options())?,
        Solver::Greedy => problem.select_greedy(study.sparsity, &config.greedy_options())?,
    };
    let field = fit_all_with(&tensor, spec.order, &selection.support, &config.simplex_options())?;
    let report = extract_strengths(&field, study.target_lag, &[])?;
    let values: Vec<f64> = report
        .variables
        .iter()
        .flat_map(|v| v.strengths.iter().filter_map(|s| s.value))
        .collect();
    if values.is_empty() {
        return Err(Error::NoUsableSeries { order: spec.order });
    }
    Ok(RunOutcome {
        recovered: selection.support.contains(study.target_lag),
        strength: values.iter().sum::<f64>() / values.len() as f64,
    })
}

/// Runs generate, select, fit and extract for every (noise level, seed).
/// Failing runs are counted in their row and never abort the grid. Rows are
/// sorted by noise model and level.
pub fn recovery_study(study: &StudySpec) -> Result<Vec<StudyRow>> {
    if study.seeds == 0 {
        return Err(Error::Synth("seeds must be positive".into()));
    }
    if study.target_lag == 0 || study.target_lag > study.base.order {
        return Err(Error::TargetLagOutOfRange {
            target: study.target_lag,
            order: study.base.order,
        });
    }
    let config = SolverConfig {
        order: study.base.order,
        sparsity: study.sparsity,
        solver: study.solver,
        target_lag: study.target_lag,
        ..SolverConfig::default()
    };
    config.validate()?;
    let jobs: Vec<(usize, u64)> = (0..study.noise_levels.len())
        .flat_map(|c| (0..study.seeds).map(move |s| (c, s)))
        .collect();
    let outcomes: Vec<Result<RunOutcome>> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let spec = SynthSpec {
                noise: study.noise_levels[c],
                seed: study.base.seed.wrapping_add(s),
                ..study.base.clone()
            };
            run_cell(&spec, study, &config)
        })
        .collect();
    let mut rows: Vec<StudyRow> = study
        .noise_levels
        .iter()
        .enumerate()
        .map(|(c, noise)| {
            let cell = &outcomes[c * study.seeds as usize..(c + 1) * study.seeds as usize];
            let ok: Vec<&RunOutcome> = cell.iter().filter_map(|r| r.as_ref().ok()).collect();
            for e in cell.iter().filter_map(|r| r.as_ref().err()) {
                log::warn!("{} noise {}: run failed: {e}", noise.name(), noise.level());
            }
            let recovered = ok.iter().filter(|o| o.recovered).count() as u64;
            StudyRow {
                noise_model: noise.name().to_string(),
                noise_level: noise.level(),
                seeds: study.seeds,
                recovered,
                recovery_rate: recovered as f64 / study.seeds as f64,
                mean_strength: if ok.is_empty() {
                    None
                } else {
                    Some(ok.iter().map(|o| o.strength).sum::<f64>() / ok.len() as f64)
                },
                failed: (cell.len() - ok.len()) as u64,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.noise_model
            .cmp(&b.noise_model)
            .then(a.noise_level.total_cmp(&b.noise_level))
    });
    Ok(rows)
}

/// `noise_model,noise_level,seeds,recovered,recovery_rate,mean_strength,failed`.
pub fn write_study_csv<W: Write>(rows: &[StudyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Csv {
        line: 0,
        message: e.to_string(),
    };
    w.write_record([
        "noise_model",
        "noise_level",
        "seeds",
        "recovered",
        "recovery_rate",
        "mean_strength",
        "failed",
    ])
    .map_err(err)?;
    for r in rows {
        w.write_record([
            r.noise_model.clone(),
            r.noise_level.to_string(),
            r.seeds.to_string(),
            r.recovered.to_string(),
            r.recovery_rate.to_string(),
            r.mean_strength.map(|v| v.to_string()).unwrap_or_default(),
            r.failed.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
