//! Experiment configuration, read from TOML (or JSON when the file ends in
//! `.json` or fails to parse as TOML).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ident_core::model::ModelParams;
use ident_core::recover::{Method, Thresholds};
use serde::{Deserialize, Deserializer};

use crate::error::{read_text, CliError, Result};

/// A density `k/L` given as a fraction of two positive integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delta {
    pub num: u64,
    pub den: u64,
}

impl Delta {
    /// `floor(delta L)`, the largest support size at this density.
    pub fn kmax(&self, l: usize) -> usize {
        (self.num as u128 * l as u128 / self.den as u128) as usize
    }

    pub fn validate(&self, l: usize) -> Result<usize> {
        if self.num == 0 || self.num > self.den {
            return Err(CliError::Config(format!("delta {self} is outside (0, 1]")));
        }
        let k = self.kmax(l);
        if k == 0 {
            return Err(CliError::Config(format!("delta {self} gives no cells at L={l}")));
        }
        Ok(k)
    }
}

impl fmt::Display for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Delta {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CliError::Config(format!("expected a fraction like 1/2, got {s:?}"));
        let (a, b) = s.split_once('/').ok_or_else(bad)?;
        let num: u64 = a.trim().parse().map_err(|_| bad())?;
        let den: u64 = b.trim().parse().map_err(|_| bad())?;
        if den == 0 {
            return Err(bad());
        }
        Ok(Delta { num, den })
    }
}

impl<'de> Deserialize<'de> for Delta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Which recovery methods an experiment runs on every instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum MethodChoice {
    #[serde(rename = "MMV_EXHAUSTIVE")]
    MmvExhaustive,
    #[serde(rename = "SOMP")]
    Somp,
    #[serde(rename = "MUSIC")]
    Music,
    #[serde(rename = "ALL")]
    All,
}

impl MethodChoice {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodChoice::MmvExhaustive => vec![Method::MmvExhaustive],
            MethodChoice::Somp => vec![Method::Somp],
            MethodChoice::Music => vec![Method::Music],
            MethodChoice::All => vec![Method::MmvExhaustive, Method::Somp, Method::Music],
        }
    }
}

/// `"draw"` or a path to a coefficient JSON file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoefficientSource {
    Draw,
    File(String),
}

impl<'de> Deserialize<'de> for CoefficientSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s.eq_ignore_ascii_case("draw") {
            CoefficientSource::Draw
        } else {
            CoefficientSource::File(s)
        })
    }
}

fn snr<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Snr {
        Num(f64),
        Text(String),
    }
    match Snr::deserialize(d)? {
        Snr::Num(x) => Ok(x),
        Snr::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "none" => Ok(f64::INFINITY),
            other => other.parse().map_err(serde::de::Error::custom),
        },
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "Nt")]
    pub nt: usize,
    #[serde(rename = "Nf")]
    pub nf: usize,
    pub seed: u64,
    pub trials: usize,
    pub deltas: Vec<Delta>,
    pub method: MethodChoice,
    /// Signal-to-noise ratio in dB; infinite means noiseless.
    #[serde(deserialize_with = "snr")]
    pub snr_db: f64,
    pub coefficients: CoefficientSource,
    pub output: String,
    /// Write measured wall-clock times; off by default so results are reproducible byte for byte.
    pub record_timing: bool,
    pub thresholds: Thresholds,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            l: 6,
            t: 1.0,
            nt: 4,
            nf: 4,
            seed: 0,
            trials: 200,
            deltas: vec![Delta { num: 1, den: 2 }],
            method: MethodChoice::MmvExhaustive,
            snr_db: f64::INFINITY,
            coefficients: CoefficientSource::Draw,
            output: "results.csv".into(),
            record_timing: false,
            thresholds: Thresholds::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, json: bool) -> Result<Self> {
        let cfg: ExperimentConfig = if json {
            serde_json::from_str(text)?
        } else {
            match toml::from_str(text) {
                Ok(c) => c,
                Err(e) => serde_json::from_str(text).map_err(|_| CliError::Toml(e))?,
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &str) -> Result<Self> {
        let json = Path::new(path)
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&read_text(path)?, json)
    }

    pub fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(self.l, self.t, self.nt, self.nf)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if self.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        if self.deltas.is_empty() {
            return Err(CliError::Config("deltas must not be empty".into()));
        }
        for d in &self.deltas {
            d.validate(self.l)?;
        }
        if self.snr_db.is_nan() {
            return Err(CliError::Config("snr_db is NaN".into()));
        }
        Ok(())
    }
}
