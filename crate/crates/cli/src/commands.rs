//! Subcommand definitions and their implementations.

use clap::{Args, Parser, Subcommand};
use ident_core::certify::{certify_with, condition_profile_with, counterexample, CertifyOptions};
use ident_core::gabor::{
    build_certified_matrix, build_matrix, draw_coefficients, spark_check, stability_bounds, MeasurementMatrix,
    SparkMode,
};
use ident_core::io;
use ident_core::model::{hs_norm, random_spreading, ModelParams, SupportSet};
use ident_core::recover::{identify, Method, Thresholds};
use ident_core::rng::substream;
use ident_core::simulate::{add_noise, simulate_response};
use ident_core::subsets::random_subset;
use log::info;
use serde_json::json;

use crate::config::{Delta, ExperimentConfig};
use crate::error::{read_file, read_text, write_file, CliError, Result};
use crate::experiment::{effective_method, run_experiment, COEFFICIENT_STREAM};

const DRAW_ATTEMPTS: usize = 100;

#[derive(Debug, Parser)]
#[command(
    name = "ident",
    version,
    about = "Identify time-varying operators from one probe response"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump the measurement matrix, check full spark and evaluate stability bounds.
    Gabor(GaborArgs),
    /// Worst-case stability certificate for all supports up to a density.
    Certify(CertifyArgs),
    /// Zak-domain response of a spreading function to the probe.
    Simulate(SimulateArgs),
    /// Recover support and spreading function from a Zak field.
    Recover(RecoverArgs),
    /// Monte-Carlo identification sweep driven by a config file.
    Experiment(ExperimentArgs),
    /// Two operators with disjoint supports and identical responses.
    Counterexample(CounterexampleArgs),
    /// Random Gaussian spreading function on a given or random support.
    RandomSf(RandomSfArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Number of cells per axis (probe period).
    #[arg(long = "L", default_value_t = 6)]
    pub l: usize,
    /// Delay extent of one cell.
    #[arg(long = "T", default_value_t = 1.0)]
    pub t: f64,
    /// Samples per cell along delay.
    #[arg(long = "Nt", default_value_t = 4)]
    pub nt: usize,
    /// Samples per cell along Doppler.
    #[arg(long = "Nf", default_value_t = 4)]
    pub nf: usize,
}

impl GridArgs {
    fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(self.l, self.t, self.nt, self.nf)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    /// Coefficient JSON file; without it coefficients are drawn from `--seed`.
    #[arg(long)]
    pub coefficients: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ProbeArgs {
    /// Spark-certified probe matrix on `params`.
    fn certified(&self, params: &ModelParams) -> Result<MeasurementMatrix> {
        match &self.coefficients {
            Some(path) => {
                let c = io::coefficients_from_json(&read_text(path)?)?;
                Ok(build_certified_matrix(
                    &c,
                    params,
                    SparkMode::auto(params.l(), self.seed),
                )?)
            }
            None => Ok(draw_coefficients(
                params,
                &mut substream(self.seed, COEFFICIENT_STREAM),
                DRAW_ATTEMPTS,
            )?),
        }
    }
}

#[derive(Debug, Args)]
pub struct GaborArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub probe: ProbeArgs,
    /// Write `A_c` as CSV (real and imaginary parts interleaved).
    #[arg(long)]
    pub csv: Option<String>,
    /// Save the coefficients as JSON.
    #[arg(long)]
    pub save_coefficients: Option<String>,
    /// JSON list of supports `[[[k, m], ...], ...]` to evaluate stability bounds on.
    #[arg(long)]
    pub supports: Option<String>,
    /// Force an exhaustive spark check limited to this many subsets.
    #[arg(long)]
    pub spark_budget: Option<u128>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long = "L", default_value_t = 6)]
    pub l: usize,
    #[arg(long = "T", default_value_t = 1.0)]
    pub t: f64,
    /// Target density `k/L`; supports of size `2 floor(delta L)` are swept.
    #[arg(long)]
    pub delta: Delta,
    #[command(flatten)]
    pub probe: ProbeArgs,
    /// Largest exhaustive sweep before switching to random sampling.
    #[arg(long, default_value_t = ident_core::SUBSET_BUDGET)]
    pub budget: u128,
    /// Random supports per size once the budget is exceeded.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Also write the condition profile as CSV.
    #[arg(long)]
    pub profile: Option<String>,
    /// Certificate JSON path; stdout when omitted.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Spreading function JSON.
    #[arg(long)]
    pub sf: String,
    #[command(flatten)]
    pub probe: ProbeArgs,
    /// Output `ZAKF` file.
    #[arg(long)]
    pub out: String,
    /// Also write a JSON mirror of the field.
    #[arg(long)]
    pub json: Option<String>,
    /// Add white Gaussian noise at this SNR (dB).
    #[arg(long)]
    pub snr_db: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub noise_seed: u64,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    /// Input `ZAKF` file.
    #[arg(long)]
    pub zak: String,
    #[command(flatten)]
    pub probe: ProbeArgs,
    /// mmv, somp or music.
    #[arg(long, default_value = "mmv")]
    pub method: Method,
    /// Largest support size searched by mmv and somp; defaults to floor(L/2).
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Ground-truth spreading function JSON for success flags.
    #[arg(long)]
    pub truth: Option<String>,
    /// Report JSON path; stdout when omitted.
    #[arg(long)]
    pub out: Option<String>,
    /// Write the reconstructed spreading function as JSON.
    #[arg(long)]
    pub sf_out: Option<String>,
    #[arg(long)]
    pub rank_threshold: Option<f64>,
    #[arg(long)]
    pub fit_threshold: Option<f64>,
    #[arg(long)]
    pub music_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML (or JSON) experiment configuration.
    #[arg(long)]
    pub config: String,
    /// Override the CSV output path.
    #[arg(long)]
    pub output: Option<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CounterexampleArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub probe: ProbeArgs,
    /// First support as JSON `[[k, m], ...]`.
    #[arg(long)]
    pub g1: String,
    /// Second support, disjoint from the first.
    #[arg(long)]
    pub g2: String,
    #[arg(long)]
    pub out1: String,
    #[arg(long)]
    pub out2: String,
}

#[derive(Debug, Args)]
pub struct RandomSfArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Support as JSON `[[k, m], ...]`.
    #[arg(long, conflicts_with = "k")]
    pub support: Option<String>,
    /// Number of randomly placed cells.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: String,
}

fn emit(path: Option<&str>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_file(p, format!("{text}\n")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gabor(a) => gabor(a),
        Command::Certify(a) => certify(a),
        Command::Simulate(a) => simulate(a),
        Command::Recover(a) => recover(a),
        Command::Experiment(a) => experiment(a),
        Command::Counterexample(a) => counterexample_cmd(a),
        Command::RandomSf(a) => random_sf(a),
    }
}

fn gabor(a: GaborArgs) -> Result<()> {
    let params = a.grid.params()?;
    let m = match &a.probe.coefficients {
        Some(path) => build_matrix(&io::coefficients_from_json(&read_text(path)?)?, &params)?,
        None => a.probe.certified(&params)?,
    };
    let mode = match a.spark_budget {
        Some(budget) => SparkMode::Exhaustive { budget },
        None => SparkMode::auto(params.l(), a.probe.seed),
    };
    let report = spark_check(&m, mode)?;
    if let Some(path) = &a.csv {
        write_file(path, io::matrix_to_csv(&m))?;
    }
    if let Some(path) = &a.save_coefficients {
        write_file(path, io::coefficients_to_json(m.coefficients())? + "\n")?;
    }
    let mut bounds = Vec::new();
    if let Some(path) = &a.supports {
        for s in io::parse_support_list(params.l(), &read_text(path)?)? {
            let b = stability_bounds(&m, &s)?;
            bounds.push(json!({
                "support": io::support_to_json(&s),
                "alpha": b.alpha,
                "beta": b.beta,
                "ratio": b.ratio(),
            }));
        }
    }
    emit(
        None,
        &pretty(&json!({
            "L": params.l(),
            "T": params.t(),
            "sigma_max": m.sigma_max(),
            "spark": report,
            "bounds": bounds,
        }))?,
    )
}

fn certify(a: CertifyArgs) -> Result<()> {
    let params = ModelParams::new(a.l, a.t, 1, 1)?;
    let kmax = a.delta.validate(a.l)?;
    let m = a.probe.certified(&params)?;
    let opts = CertifyOptions {
        budget: a.budget,
        sample_trials: a.samples,
        seed: a.probe.seed,
    };
    let cert = certify_with(&m, kmax, &opts)?;
    info!("certificate for delta {}: {:?}", a.delta, cert.verdict);
    if let Some(path) = &a.profile {
        write_file(path, io::profile_to_csv(&condition_profile_with(&m, kmax, &opts)?))?;
    }
    emit(a.out.as_deref(), &pretty(&cert)?)
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let sf = io::spreading_from_json(&read_text(&a.sf)?)?;
    let m = a.probe.certified(sf.params())?;
    let mut z = simulate_response(&sf, &m)?;
    if let Some(snr) = a.snr_db {
        z = add_noise(&z, snr, &mut substream(a.noise_seed, 0))?;
    }
    let mut bytes = Vec::new();
    io::write_zak(&z, &mut bytes)?;
    write_file(&a.out, bytes)?;
    if let Some(path) = &a.json {
        write_file(path, io::zak_to_json(&z)? + "\n")?;
    }
    Ok(())
}

fn recover(a: RecoverArgs) -> Result<()> {
    let z = io::read_zak(&read_file(&a.zak)?[..])?;
    let params = *z.params();
    let m = a.probe.certified(&params)?;
    let truth = match a.truth.as_deref() {
        Some(p) => Some(io::spreading_from_json(&read_text(p)?)?),
        None => None,
    };
    if let Some(t) = &truth {
        if t.params() != &params {
            return Err(CliError::Config(
                "ground truth and Zak field use different grids".into(),
            ));
        }
    }
    let mut th = Thresholds::default();
    th.rank = a.rank_threshold.unwrap_or(th.rank);
    th.fit = a.fit_threshold.unwrap_or(th.fit);
    th.music = a.music_threshold.unwrap_or(th.music);
    let kmax = a.kmax.unwrap_or(params.l() / 2).max(1);
    let method = effective_method(a.method, params.l(), kmax, th.budget);
    let report = identify(&z, &m, method, kmax, &th, truth.as_ref())?;
    if let Some(path) = &a.sf_out {
        write_file(path, io::spreading_to_json(&report.reconstruction)? + "\n")?;
    }
    emit(a.out.as_deref(), &pretty(&report)?)
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(o) = a.output {
        cfg.output = o;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let summary = run_experiment(&cfg)?;
    emit(None, &pretty(&json!({ "output": cfg.output, "summary": summary }))?)
}

fn counterexample_cmd(a: CounterexampleArgs) -> Result<()> {
    let params = a.grid.params()?;
    let g1 = io::parse_support(params.l(), &a.g1)?;
    let g2 = io::parse_support(params.l(), &a.g2)?;
    let m = a.probe.certified(&params)?;
    let (h1, h2) = counterexample(&m, &g1, &g2)?;
    write_file(&a.out1, io::spreading_to_json(&h1)? + "\n")?;
    write_file(&a.out2, io::spreading_to_json(&h2)? + "\n")?;
    let response = simulate_response(&h1, &m)?
        .difference(&simulate_response(&h2, &m)?)?
        .response_norm();
    emit(
        None,
        &pretty(&json!({
            "hs_norm_difference": hs_norm(&h1.difference(&h2)?),
            "response_difference_norm": response,
        }))?,
    )
}

fn random_sf(a: RandomSfArgs) -> Result<()> {
    let params = a.grid.params()?;
    let l = params.l();
    let mut rng = substream(a.seed, 0);
    let support = match (&a.support, a.k) {
        (Some(text), _) => io::parse_support(l, text)?,
        (None, Some(k)) if k <= l * l => SupportSet::from_indices(l, &random_subset(&mut rng, l * l, k))?,
        (None, Some(k)) => return Err(CliError::Config(format!("k={k} exceeds the {} cells", l * l))),
        (None, None) => return Err(CliError::Config("give --support or --k".into())),
    };
    let sf = random_spreading(&params, &support, &mut rng)?.sf;
    write_file(&a.out, io::spreading_to_json(&sf)? + "\n")
}
