//! Fitting the model to published pass@k numbers.
//!
//! With `p0 = pass@1` the success formula at `k` attempts has one unknown,
//! so the contaminated retry rate follows by inversion:
//! `p1 = 1 - ((1 - pass@k) / (1 - pass@1))^(1/(k-1))`. Given an assumed
//! pipeline depth `T`, attempt rates split into step rates via
//! `eps = 1 - p^(1/T)`.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::pow_complement;

/// CSV fixture with the three SWE-bench Verified records.
pub const SWEBENCH_FIXTURE_CSV: &str = include_str!("../data/swebench_pass_at_k.csv");

/// The same records as a JSON array.
pub const SWEBENCH_FIXTURE_JSON: &str = include_str!("../data/swebench_pass_at_k.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetryMode {
    /// Consecutive attempts in the same context.
    Contaminated,
    /// Independent fresh restarts.
    Fresh,
}

impl RetryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RetryMode::Contaminated => "contaminated",
            RetryMode::Fresh => "fresh",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassAtKObservation {
    pub name: String,
    pub pass_at_1: f64,
    pub pass_at_k: f64,
    pub k: u32,
    pub retry_mode: RetryMode,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub assumed_depth: Option<u32>,
}

// CSV leaves the optional column empty rather than omitting it.
fn empty_as_none<'de, D>(de: D) -> std::result::Result<Option<u32>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(u32),
        Text(String),
    }
    match Option::<Raw>::deserialize(de)? {
        None => Ok(None),
        Some(Raw::Num(n)) => Ok(Some(n)),
        Some(Raw::Text(s)) if s.trim().is_empty() => Ok(None),
        Some(Raw::Text(s)) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| serde::de::Error::custom(format!("invalid assumed_depth {s:?}"))),
    }
}

impl PassAtKObservation {
    pub fn validate(&self) -> Result<()> {
        self.check()
            .map_err(|message| Error::Validation { row: 0, message })
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !(self.pass_at_1 > 0.0 && self.pass_at_1 < 1.0) {
            return Err(format!(
                "{}: pass_at_1 must lie in (0,1), got {}",
                self.name, self.pass_at_1
            ));
        }
        if !(self.pass_at_k < 1.0) {
            return Err(format!(
                "{}: pass_at_k must be below 1, got {}",
                self.name, self.pass_at_k
            ));
        }
        if !(self.pass_at_k >= self.pass_at_1) {
            return Err(format!(
                "{}: pass_at_k ({}) is smaller than pass_at_1 ({})",
                self.name, self.pass_at_k, self.pass_at_1
            ));
        }
        if self.k < 2 {
            return Err(format!(
                "{}: k must be at least 2, got {}",
                self.name, self.k
            ));
        }
        if self.assumed_depth == Some(0) {
            return Err(format!("{}: assumed_depth must be at least 1", self.name));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub name: String,
    pub k: u32,
    pub p0: f64,
    pub p1: f64,
    pub eps0: Option<f64>,
    pub eps1: Option<f64>,
    pub cascade_ratio: Option<f64>,
    /// Max abs deviation of the fitted model from the two observations.
    pub fit_error: f64,
    /// Same residual with `p0`, `p1` rounded to three decimals.
    pub fit_error_printed: f64,
    pub iid_prediction: f64,
    pub iid_gap: f64,
}

/// `1 - (1 - p0)(1 - p1)^(k-1)` without the `p1 <= p0` restriction of
/// [`crate::model::DerivedRates`]; fits may land on either side.
fn predicted_pass_at_k(p0: f64, p1: f64, k: u32) -> f64 {
    1.0 - (1.0 - p0) * pow_complement(p1, u64::from(k) - 1)
}

fn residual(obs: &PassAtKObservation, p0: f64, p1: f64) -> f64 {
    let d1 = (p0 - obs.pass_at_1).abs();
    let dk = (predicted_pass_at_k(p0, p1, obs.k) - obs.pass_at_k).abs();
    d1.max(dk)
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// `1 - p^(1/T)`.
pub fn step_error_rate(attempt_success: f64, depth: u32) -> f64 {
    -(attempt_success.ln() / f64::from(depth)).exp_m1()
}

/// Fits `(p0, p1)` exactly to `(pass@1, pass@k)` for a contaminated-mode
/// observation.
pub fn fit_ccrm(obs: &PassAtKObservation) -> Result<FitResult> {
    obs.validate()?;
    if obs.retry_mode == RetryMode::Fresh {
        return Err(Error::Mode(format!(
            "{}: fresh-restart data reflects correlated task difficulty, not context contamination; \
             only the independent-retry prediction applies",
            obs.name
        )));
    }
    let p0 = obs.pass_at_1;
    let tail = (1.0 - obs.pass_at_k) / (1.0 - p0);
    if !(tail > 0.0 && tail <= 1.0) {
        return Err(Error::Inversion(format!(
            "{}: (1 - pass@k)/(1 - pass@1) = {tail} is outside (0,1]",
            obs.name
        )));
    }
    let p1 = -(tail.ln() / f64::from(obs.k - 1)).exp_m1();
    let (eps0, eps1, cascade_ratio) = match obs.assumed_depth {
        Some(depth) => {
            let e0 = step_error_rate(p0, depth);
            let e1 = step_error_rate(p1, depth);
            (Some(e0), Some(e1), Some(e1 / e0))
        }
        None => (None, None, None),
    };
    let (iid_prediction, iid_gap) = iid_prediction(obs)?;
    Ok(FitResult {
        name: obs.name.clone(),
        k: obs.k,
        p0,
        p1,
        eps0,
        eps1,
        cascade_ratio,
        fit_error: residual(obs, p0, p1),
        fit_error_printed: residual(obs, round3(p0), round3(p1)),
        iid_prediction,
        iid_gap,
    })
}

/// Independent-retry prediction `1 - (1 - pass@1)^k` and its overshoot over
/// the observed pass@k.
pub fn iid_prediction(obs: &PassAtKObservation) -> Result<(f64, f64)> {
    obs.validate()?;
    let predicted = 1.0 - pow_complement(obs.pass_at_1, u64::from(obs.k));
    Ok((predicted, predicted - obs.pass_at_k))
}

/// Per-observation outcome: a fit for contaminated rows, the independent
/// baseline for every row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub observation: PassAtKObservation,
    pub iid_prediction: f64,
    pub iid_gap: f64,
    pub fit: Option<FitResult>,
    pub note: Option<String>,
}

pub fn assess(obs: &PassAtKObservation) -> Result<Assessment> {
    let (iid_prediction, iid_gap) = iid_prediction(obs)?;
    let (fit, note) = match obs.retry_mode {
        RetryMode::Contaminated => (Some(fit_ccrm(obs)?), None),
        RetryMode::Fresh => (None, Some("fresh mode: CCRM fit skipped".to_string())),
    };
    Ok(Assessment {
        observation: obs.clone(),
        iid_prediction,
        iid_gap,
        fit,
        note,
    })
}

fn validate_rows(rows: Vec<PassAtKObservation>) -> Result<Vec<PassAtKObservation>> {
    for (i, obs) in rows.iter().enumerate() {
        obs.check().map_err(|message| Error::Validation {
            row: i + 1,
            message,
        })?;
    }
    Ok(rows)
}

/// Parses a JSON array of observations. Blank input is an empty set.
pub fn parse_json(text: &str, source_name: &str) -> Result<Vec<PassAtKObservation>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let raw: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        message: e.to_string(),
    })?;
    let mut rows = Vec::with_capacity(raw.len());
    for (i, value) in raw.into_iter().enumerate() {
        let obs = serde_json::from_value(value).map_err(|e| Error::Validation {
            row: i + 1,
            message: e.to_string(),
        })?;
        rows.push(obs);
    }
    validate_rows(rows)
}

/// Parses comma-separated observations with the header
/// `name,pass_at_1,pass_at_k,k,retry_mode,assumed_depth`.
pub fn parse_csv<R: Read>(reader: R, source_name: &str) -> Result<Vec<PassAtKObservation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        source_name: source_name.to_string(),
        message: e.to_string(),
    })?;
    if headers.is_empty() {
        return Ok(Vec::new());
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<PassAtKObservation>().enumerate() {
        let obs = rec.map_err(|e| Error::Validation {
            row: i + 1,
            message: e.to_string(),
        })?;
        rows.push(obs);
    }
    validate_rows(rows)
}

/// Reads an observation file; `.json` selects the JSON array format,
/// anything else is read as CSV.
pub fn ingest(path: &Path) -> Result<Vec<PassAtKObservation>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path.display().to_string();
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        parse_json(&text, &name)
    } else {
        parse_csv(text.as_bytes(), &name)
    }
}

/// The shipped SWE-bench records.
pub fn swebench_fixture() -> Vec<PassAtKObservation> {
    parse_csv(SWEBENCH_FIXTURE_CSV.as_bytes(), "swebench fixture").expect("fixture is valid")
}
