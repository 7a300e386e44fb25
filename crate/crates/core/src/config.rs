//! TOML experiment configuration.
//!
//! One table per concern: `geometry`, `material`, `laser`, `discretization`,
//! `surrogate_box`, `prior`, `chain`, `analysis`, `paths`. Only `geometry`,
//! `material` and `discretization` are required. Unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::bayes::PriorSpec;
use crate::error::{Error, Result};
use crate::fem::{LaserProfile, MaterialProperties};
use crate::mesh::ExperimentGeometry;
use crate::solver::{DiscretizationParams, KroneckerStrategy, SurrogateBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    pub h_target: f64,
    pub n_t: usize,
    #[serde(default = "default_n_d")]
    pub n_d: usize,
    pub k: usize,
    #[serde(default)]
    pub solver: KroneckerStrategy,
}

fn default_n_d() -> usize {
    401
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub intensity_min: f64,
    pub intensity_max: f64,
}

impl Default for BoxSection {
    fn default() -> Self {
        Self {
            lambda_min: 150.0,
            lambda_max: 507.0,
            intensity_min: 0.6e12,
            intensity_max: 1.8e12,
        }
    }
}

impl BoxSection {
    pub fn to_box(&self) -> SurrogateBox {
        SurrogateBox::from_ranges(
            (self.lambda_min, self.lambda_max),
            (self.intensity_min, self.intensity_max),
        )
    }
}

/// Prior on `lambda` by its mean and standard deviation, and on the noise
/// variance by inverse-gamma shape and scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    pub mu_lambda: f64,
    pub sd_lambda: f64,
    pub alpha_sigma: f64,
    pub beta_sigma: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            mu_lambda: 328.5,
            sd_lambda: 50.0,
            alpha_sigma: 3.0,
            beta_sigma: 0.0079,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    /// Total states `M` per chain.
    pub samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Proposal standard deviation; tuned by a pilot run when absent.
    pub beta: Option<f64>,
    pub seed: u64,
    /// Independent chains with seeds `seed, seed + 1, ...`.
    pub chains: usize,
    pub runaway_bound: f64,
    pub pilot_batch: usize,
    /// Explicit `(ln lambda, ln I)` start; drawn when absent.
    pub initial: Option<[f64; 2]>,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            samples: 100_000,
            burn_in: 10_000,
            thin: 1,
            beta: None,
            seed: 1,
            chains: 1,
            runaway_bound: 80.0,
            pilot_batch: 2000,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub bins: usize,
    pub joint_bins: usize,
    /// Intensity windows `[lo, hi]` for conditional histograms.
    pub windows: Option<Vec<[f64; 2]>>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            bins: 100,
            joint_bins: 100,
            windows: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub data: PathBuf,
    pub surrogate: PathBuf,
    pub output: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            data: "data.csv".into(),
            surrogate: "surrogate.txt".into(),
            output: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub geometry: ExperimentGeometry,
    pub material: MaterialProperties,
    pub profile: LaserProfile,
    pub discretization: DiscretizationSection,
    pub disc: DiscretizationParams,
    pub box_section: BoxSection,
    pub bounds: SurrogateBox,
    pub prior_section: PriorSection,
    pub prior: PriorSpec,
    pub chain: ChainSection,
    pub analysis: AnalysisSection,
    pub paths: PathsSection,
}

const SECTIONS: [&str; 9] = [
    "geometry",
    "material",
    "laser",
    "discretization",
    "surrogate_box",
    "prior",
    "chain",
    "analysis",
    "paths",
];

fn section<T: DeserializeOwned>(table: &Table, name: &str) -> Result<Option<T>> {
    match table.get(name) {
        None => Ok(None),
        Some(v) => T::deserialize(v.clone())
            .map(Some)
            .map_err(|e| Error::Config(format!("[{name}] {}", e.message()))),
    }
}

fn required<T: DeserializeOwned>(table: &Table, name: &str) -> Result<T> {
    section(table, name)?.ok_or_else(|| Error::Config(format!("missing required section [{name}]")))
}

/// Applies `section.key=value` overrides; values parse as TOML, else as strings.
pub fn apply_overrides(table: &mut Table, overrides: &[String]) -> Result<()> {
    for item in overrides {
        let (path, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
        let (sec, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("override key `{path}` must be section.key")))?;
        let raw = raw.trim();
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        let entry = table
            .entry(sec.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        let Value::Table(t) = entry else {
            return Err(Error::Config(format!("`{sec}` is not a section")));
        };
        t.insert(key.to_string(), value);
    }
    Ok(())
}

fn config_error(e: Error) -> Error {
    match e {
        Error::InvalidParameter(m) | Error::InvalidInput(m) => Error::Config(m),
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        apply_overrides(&mut table, overrides)?;
        if let Some(k) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown section [{k}]")));
        }
        let geometry: ExperimentGeometry = required(&table, "geometry")?;
        let material: MaterialProperties = required(&table, "material")?;
        let profile: LaserProfile = section(&table, "laser")?.unwrap_or(LaserProfile::Uniform);
        let discretization: DiscretizationSection = required(&table, "discretization")?;
        let box_section: BoxSection = section(&table, "surrogate_box")?.unwrap_or_default();
        let prior_section: PriorSection = section(&table, "prior")?.unwrap_or_default();
        let chain: ChainSection = section(&table, "chain")?.unwrap_or_default();
        let analysis: AnalysisSection = section(&table, "analysis")?.unwrap_or_default();
        let paths: PathsSection = section(&table, "paths")?.unwrap_or_default();

        geometry.validate().map_err(config_error)?;
        material.validate().map_err(config_error)?;
        profile
            .validate()
            .map_err(|e| Error::Config(format!("laser: {}", config_error(e))))?;
        if !(discretization.h_target.is_finite() && discretization.h_target > 0.0) {
            return Err(Error::Config(
                "discretization.h_target must be positive".into(),
            ));
        }
        let disc = DiscretizationParams::new(
            geometry.duration,
            discretization.n_t,
            discretization.n_d,
            discretization.k,
        )
        .map_err(config_error)?;
        if !disc.resolves_flash(geometry.flash_duration) {
            return Err(Error::Config(format!(
                "discretization.n_t: flash duration {} s is not a whole number of steps of {} s",
                geometry.flash_duration, disc.tau
            )));
        }
        let bounds = box_section.to_box();
        if !(box_section.lambda_min < box_section.lambda_max
            && box_section.intensity_min < box_section.intensity_max)
        {
            return Err(Error::Config(
                "surrogate_box: each minimum must be below its maximum".into(),
            ));
        }
        bounds
            .validate()
            .map_err(|e| Error::Config(format!("surrogate_box: {}", config_error(e))))?;
        let prior = PriorSpec::from_moments(
            prior_section.mu_lambda,
            prior_section.sd_lambda,
            prior_section.alpha_sigma,
            prior_section.beta_sigma,
        )
        .map_err(|e| Error::Config(format!("prior: {}", config_error(e))))?;
        if chain.samples <= chain.burn_in {
            return Err(Error::Config(
                "chain.samples must exceed chain.burn_in".into(),
            ));
        }
        if chain.thin == 0 || chain.chains == 0 {
            return Err(Error::Config(
                "chain.thin and chain.chains must be at least 1".into(),
            ));
        }
        if let Some(beta) = chain.beta {
            if !(beta.is_finite() && beta > 0.0) {
                return Err(Error::Config(format!(
                    "chain.beta must be positive, got {beta}"
                )));
            }
        }
        if chain.pilot_batch < 1000 {
            return Err(Error::Config(
                "chain.pilot_batch must be at least 1000".into(),
            ));
        }
        if !(chain.runaway_bound > 0.0) {
            return Err(Error::Config("chain.runaway_bound must be positive".into()));
        }
        if analysis.bins == 0 || analysis.joint_bins == 0 {
            return Err(Error::Config(
                "analysis.bins and analysis.joint_bins must be positive".into(),
            ));
        }
        Ok(Self {
            geometry,
            material,
            profile,
            discretization,
            disc,
            box_section,
            bounds,
            prior_section,
            prior,
            chain,
            analysis,
            paths,
        })
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Paths in the config are relative to the config file's directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.paths.data,
            &mut self.paths.surrogate,
            &mut self.paths.output,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Hex SHA-256 of every input that determines the surrogate matrix.
    pub fn surrogate_hash(&self) -> String {
        let g = &self.geometry;
        let m = &self.material;
        let b = &self.bounds;
        let profile = match self.profile {
            LaserProfile::Uniform => "uniform".to_string(),
            LaserProfile::Gaussian { width } => format!("gaussian {width}"),
        };
        let canonical = format!(
            "geometry {} {} {} {} {} {}\nmaterial {} {} {} {}\nlaser {profile}\n\
             discretization {} {} {} {}\nbox {} {} {} {}\n",
            g.radius,
            g.height,
            g.penetration_depth,
            g.flash_duration,
            g.duration,
            g.disc_radius,
            m.density,
            m.specific_heat,
            m.heat_transfer,
            m.ambient_temperature,
            self.discretization.h_target,
            self.disc.n_steps,
            self.disc.n_obs,
            self.disc.degree,
            b.mu_lambda,
            b.nu_lambda,
            b.mu_intensity,
            b.nu_intensity,
        );
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|x| format!("{x:02x}"))
            .collect()
    }
}
