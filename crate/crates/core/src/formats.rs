//! File-facing formats: the JSON configuration schema, CSV artifacts with
//! the effective configuration embedded as a leading comment, and run
//! manifests.
//!
//! Specs mirror the library types but stay decoupled from them, so the
//! on-disk schema is stable against internal refactors and rejects unknown
//! fields with the offending name in the error. Floats are written with
//! Rust's shortest round-trip formatting: identical runs produce identical
//! bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::Dataset;
use crate::error::{bail_domain, Result};
use crate::expfam::{ConjugatePrior, ExpFam};
use crate::experiments::{gen_mixture_data, MixtureSpec};
use crate::partition::GibbsPartitionModel;

/// Partition model as written in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    DirichletProcess { theta: f64 },
    PitmanYor { sigma: f64, theta: f64 },
    Custom { v: Vec<f64>, w: Vec<f64> },
}

impl ModelSpec {
    pub fn build(&self) -> Result<GibbsPartitionModel> {
        match self {
            ModelSpec::DirichletProcess { theta } => GibbsPartitionModel::dp(*theta),
            ModelSpec::PitmanYor { sigma, theta } => GibbsPartitionModel::py(*sigma, *theta),
            ModelSpec::Custom { v, w } => GibbsPartitionModel::custom(v.clone(), w.clone()),
        }
    }

    pub fn of(model: &GibbsPartitionModel) -> Self {
        match model {
            GibbsPartitionModel::DirichletProcess { theta } => {
                ModelSpec::DirichletProcess { theta: *theta }
            }
            GibbsPartitionModel::PitmanYor { sigma, theta } => ModelSpec::PitmanYor {
                sigma: *sigma,
                theta: *theta,
            },
            GibbsPartitionModel::CustomTabulated { v, w } => ModelSpec::Custom {
                v: v.clone(),
                w: w.clone(),
            },
        }
    }
}

/// Observation family as written in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    GaussianKnownVariance { variances: Vec<f64> },
    NormalGamma,
    ExponentialGamma,
    PoissonGamma,
    GeometricBeta,
}

impl FamilySpec {
    pub fn build(&self) -> ExpFam {
        match self {
            FamilySpec::GaussianKnownVariance { variances } => ExpFam::GaussianKnownVariance {
                variances: variances.clone(),
            },
            FamilySpec::NormalGamma => ExpFam::NormalGamma,
            FamilySpec::ExponentialGamma => ExpFam::ExponentialGamma,
            FamilySpec::PoissonGamma => ExpFam::PoissonGamma,
            FamilySpec::GeometricBeta => ExpFam::GeometricBeta,
        }
    }

    pub fn of(family: &ExpFam) -> Self {
        match family {
            ExpFam::GaussianKnownVariance { variances } => FamilySpec::GaussianKnownVariance {
                variances: variances.clone(),
            },
            ExpFam::NormalGamma => FamilySpec::NormalGamma,
            ExpFam::ExponentialGamma => FamilySpec::ExponentialGamma,
            ExpFam::PoissonGamma => FamilySpec::PoissonGamma,
            ExpFam::GeometricBeta => FamilySpec::GeometricBeta,
        }
    }
}

/// Conjugate prior hyperparameters as written in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub xi: Vec<f64>,
    pub nu: f64,
}

impl PriorSpec {
    pub fn build(&self) -> ConjugatePrior {
        ConjugatePrior::new(self.xi.clone(), self.nu)
    }

    pub fn of(prior: &ConjugatePrior) -> Self {
        PriorSpec {
            xi: prior.xi.clone(),
            nu: prior.nu,
        }
    }
}

/// Mixture to synthesize data from, components given in mean form
/// (see [`MixtureSpec::from_means`] for the normal-gamma convention).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub weights: Vec<f64>,
    pub component_means: Vec<Vec<f64>>,
    pub n: usize,
    pub seed: u64,
}

/// Data section of a config: exactly one source.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalars: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateSpec>,
}

impl DataSpec {
    pub fn build(&self, family: &ExpFam) -> Result<Dataset> {
        let sources =
            self.points.is_some() as u8 + self.scalars.is_some() as u8 + self.generate.is_some() as u8;
        if sources != 1 {
            bail_domain!(
                "the data section must set exactly one of points, scalars, generate; found \
                 {sources}"
            );
        }
        if let Some(points) = &self.points {
            return Dataset::new(family.clone(), points.clone());
        }
        if let Some(scalars) = &self.scalars {
            return Dataset::from_scalars(family.clone(), scalars);
        }
        let g = self.generate.as_ref().expect("checked above");
        let spec = MixtureSpec::from_means(family, g.weights.clone(), &g.component_means)?;
        gen_mixture_data(family, &spec, g.n, g.seed)
    }
}

/// Parses a JSON config file into any spec type, reporting the file name
/// and the parser's line/column on failure.
pub fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        crate::error::Error::Domain(format!("config {}: {e}", path.display()))
    })
}

/// Formats one CSV cell. Floats use shortest round-trip notation; absent
/// optional values become empty cells.
pub fn csv_cell(value: Option<f64>) -> String {
    value.map_or(String::new(), |v| v.to_string())
}

/// Writes a CSV artifact: a `# config: {...}` comment carrying the
/// effective configuration, a header line, then the rows.
pub fn write_csv<C: Serialize>(
    path: &Path,
    config: &C,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut out = String::new();
    out.push_str("# config: ");
    out.push_str(&serde_json::to_string(config)?);
    out.push('\n');
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        if row.len() != header.len() {
            bail_domain!(
                "csv row has {} cells but the header names {} columns",
                row.len(),
                header.len()
            );
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Writes pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Record of one run: what was asked, with which effective configuration,
/// and which files came out. The timestamps are the only fields that differ
/// between identical reruns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub effective_config: Value,
    pub artifacts: Vec<String>,
    pub timestamp_unix: u64,
    pub timestamp_utc: String,
}

pub fn write_manifest<C: Serialize>(
    dir: &Path,
    command: &str,
    config: &C,
    artifacts: &[String],
) -> Result<Manifest> {
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = Manifest {
        command: command.to_string(),
        effective_config: serde_json::to_value(config)?,
        artifacts: artifacts.to_vec(),
        timestamp_unix: now,
        timestamp_utc: iso_utc(now),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Civil date from days since the epoch (Gregorian, proleptic).
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = (if mp < 10 { mp + 3 } else { mp - 9 }) as u32;
    (y + i64::from(m <= 2), m, d)
}

/// Seconds since the epoch as an ISO-8601 UTC stamp.
pub fn iso_utc(secs: u64) -> String {
    let days = (secs / 86_400) as i64;
    let rem = secs % 86_400;
    let (y, m, d) = civil_from_days(days);
    format!(
        "{y:04}-{m:02}-{d:02}T{:02}:{:02}:{:02}Z",
        rem / 3600,
        (rem % 3600) / 60,
        rem % 60
    )
}
