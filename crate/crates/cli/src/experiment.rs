//! Monte-Carlo identification sweeps.

use std::io::Write;

use ident_core::gabor::{build_certified_matrix, draw_coefficients, MeasurementMatrix, SparkMode};
use ident_core::io::coefficients_from_json;
use ident_core::model::{random_spreading, SupportSet};
use ident_core::recover::{identify, Method, RecoveryReport};
use ident_core::rng::substream;
use ident_core::simulate::{add_noise, simulate_response};
use ident_core::subsets::{check_budget, random_subset};
use ident_core::IdentError;
use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CoefficientSource, ExperimentConfig};
use crate::error::{read_text, Result};

/// Stream reserved for drawing the probe coefficients; trials use
/// `(delta index << 32) | trial`.
pub const COEFFICIENT_STREAM: u64 = u64::MAX;

const DRAW_ATTEMPTS: usize = 100;

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub trial: usize,
    pub delta: String,
    pub method: Method,
    pub support_size: usize,
    pub support_exact: bool,
    pub reconstruction_rel_err: f64,
    pub residual: f64,
    pub alpha: f64,
    pub beta: f64,
    pub elapsed_ms: f64,
}

/// Success rate of one method at one density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub delta: String,
    pub method: Method,
    pub trials: usize,
    pub exact: usize,
    pub failures: usize,
    pub rate: f64,
}

/// Draws certified coefficients from the configured seed or loads and
/// re-certifies them from a file.
pub fn probe_matrix(cfg: &ExperimentConfig) -> Result<MeasurementMatrix> {
    let params = cfg.params()?;
    match &cfg.coefficients {
        CoefficientSource::Draw => Ok(draw_coefficients(
            &params,
            &mut substream(cfg.seed, COEFFICIENT_STREAM),
            DRAW_ATTEMPTS,
        )?),
        CoefficientSource::File(path) => {
            let c = coefficients_from_json(&read_text(path)?)?;
            Ok(build_certified_matrix(&c, &params, SparkMode::auto(cfg.l, cfg.seed))?)
        }
    }
}

/// Replaces an exhaustive search whose subset count exceeds the budget with SOMP.
pub fn effective_method(method: Method, l: usize, kmax: usize, budget: u128) -> Method {
    if method != Method::MmvExhaustive {
        return method;
    }
    match check_budget(l * l, kmax, budget) {
        Ok(_) => method,
        Err(e) => {
            warn!("{e}; falling back to SOMP");
            Method::Somp
        }
    }
}

fn failed_row(trial: usize, delta: &str, method: Method, err: &IdentError) -> Row {
    debug!("trial {trial} delta {delta} {method}: {err}");
    Row {
        trial,
        delta: delta.to_string(),
        method,
        support_size: 0,
        support_exact: false,
        reconstruction_rel_err: f64::NAN,
        residual: f64::NAN,
        alpha: f64::NAN,
        beta: f64::NAN,
        elapsed_ms: 0.0,
    }
}

fn report_row(trial: usize, delta: &str, r: &RecoveryReport, timing: bool) -> Row {
    Row {
        trial,
        delta: delta.to_string(),
        method: r.method,
        support_size: r.support_estimate.len(),
        support_exact: r.support_exact.unwrap_or(false),
        reconstruction_rel_err: r.reconstruction_rel_err.unwrap_or(f64::NAN),
        residual: r.residual,
        alpha: r.alpha,
        beta: r.beta,
        elapsed_ms: if timing { r.elapsed_ms } else { 0.0 },
    }
}

fn run_trial(
    cfg: &ExperimentConfig,
    m: &MeasurementMatrix,
    delta_index: usize,
    trial: usize,
    methods: &[Method],
) -> Result<Vec<Row>> {
    let l = cfg.l;
    let delta = &cfg.deltas[delta_index];
    let label = delta.to_string();
    let k = delta.kmax(l);
    let mut rng = substream(cfg.seed, ((delta_index as u64) << 32) | trial as u64);
    let support = SupportSet::from_indices(l, &random_subset(&mut rng, l * l, k))?;
    let truth = random_spreading(m.params(), &support, &mut rng)?.sf;
    let z = add_noise(&simulate_response(&truth, m)?, cfg.snr_db, &mut rng)?;
    Ok(methods
        .iter()
        .map(
            |&method| match identify(&z, m, method, k, &cfg.thresholds, Some(&truth)) {
                Ok(r) => report_row(trial, &label, &r, cfg.record_timing),
                Err(e) => failed_row(trial, &label, method, &e),
            },
        )
        .collect())
}

/// Runs every trial of the sweep; rows come back ordered by density, trial
/// and method regardless of scheduling.
pub fn run_rows(cfg: &ExperimentConfig, m: &MeasurementMatrix) -> Result<Vec<Row>> {
    cfg.validate()?;
    let params = cfg.params()?;
    let plans: Vec<Vec<Method>> = cfg
        .deltas
        .iter()
        .map(|d| {
            let k = d.kmax(cfg.l);
            if k > params.grid_len() && cfg.method.methods().contains(&Method::Music) {
                warn!(
                    "delta {d}: {k} cells exceed the {} grid points; MUSIC cannot succeed",
                    params.grid_len()
                );
            }
            cfg.method
                .methods()
                .into_iter()
                .map(|method| effective_method(method, cfg.l, k, cfg.thresholds.budget))
                .collect()
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cfg.deltas.len())
        .flat_map(|d| (0..cfg.trials).map(move |t| (d, t)))
        .collect();
    let rows: Vec<Vec<Row>> = jobs
        .par_iter()
        .map(|&(d, t)| run_trial(cfg, m, d, t, &plans[d]))
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn write_csv<W: Write>(rows: &[Row], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn summarize(rows: &[Row]) -> Vec<Summary> {
    let mut out: Vec<Summary> = Vec::new();
    for r in rows {
        let pos = out.iter().position(|s| s.delta == r.delta && s.method == r.method);
        let s = match pos {
            Some(i) => &mut out[i],
            None => {
                out.push(Summary {
                    delta: r.delta.clone(),
                    method: r.method,
                    trials: 0,
                    exact: 0,
                    failures: 0,
                    rate: 0.0,
                });
                out.last_mut().unwrap()
            }
        };
        s.trials += 1;
        s.exact += usize::from(r.support_exact);
        s.failures += usize::from(r.residual.is_nan());
    }
    for s in &mut out {
        s.rate = s.exact as f64 / s.trials as f64;
    }
    out
}

/// Loads or draws the probe, runs the sweep and writes the CSV to `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<Summary>> {
    let m = probe_matrix(cfg)?;
    let rows = run_rows(cfg, &m)?;
    let file = std::fs::File::create(&cfg.output).map_err(|source| crate::error::CliError::File {
        path: cfg.output.clone(),
        source,
    })?;
    write_csv(&rows, std::io::BufWriter::new(file))?;
    Ok(summarize(&rows))
}
