//! The JSON problem description and its strict parser.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use qlwave::data::{FieldSpec, InitialDataSet};
use qlwave::lifespan::{RiccatiOptions, StartRule};
use qlwave::nullform::{CoefficientSet, SpeedVector};
use qlwave::radiation::RadonOptions;
use qlwave::simulator::{ProbeSpec, SimConfig, SimSettings};
use serde::{Deserialize, Serialize};

/// Everything a subcommand needs. Component indices are 1-based, as in the
/// coefficient files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub speeds: SpeedVector,
    /// JSON coefficient file, relative to the config file
    pub coefficients: PathBuf,
    pub data: DataConfig,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub radiation: RadiationConfig,
    #[serde(default)]
    pub lifespan: LifespanConfig,
    #[serde(default)]
    pub riccati: RiccatiConfig,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub scaling: ScalingConfig,
    /// relative to the config file
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// run even when the symmetry or structure checks fail
    #[serde(default)]
    pub allow_assumption_violations: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub f: Vec<FieldSpec>,
    pub g: Vec<FieldSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiationConfig {
    #[serde(default)]
    pub quadrature: RadonOptions,
    /// lower end of the rho grid; defaults to `-3 M`
    #[serde(default)]
    pub rho_min: Option<f64>,
    #[serde(default = "default_n_rho")]
    pub n_rho: usize,
    #[serde(default = "default_n_omega")]
    pub n_omega: usize,
}

impl Default for RadiationConfig {
    fn default() -> Self {
        Self {
            quadrature: RadonOptions::default(),
            rho_min: None,
            n_rho: default_n_rho(),
            n_omega: default_n_omega(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifespanConfig {
    /// tolerance of the off-grid polish of `H`; `null` keeps the table maximum
    #[serde(default = "default_refine")]
    pub refine_tolerance: Option<f64>,
    /// amplitudes tabulated by `lifespan`; defaults to `[epsilon]`
    #[serde(default)]
    pub epsilons: Vec<f64>,
}

impl Default for LifespanConfig {
    fn default() -> Self {
        Self {
            refine_tolerance: default_refine(),
            epsilons: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiccatiConfig {
    #[serde(default = "one")]
    pub component: usize,
    /// characteristic label; `null` picks the point attaining `H`
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub omega: Option<f64>,
    /// `null` uses the default rule at the configured epsilon
    #[serde(default)]
    pub start: Option<StartRule>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub options: RiccatiOptions,
}

impl Default for RiccatiConfig {
    fn default() -> Self {
        Self {
            component: 1,
            lambda: None,
            omega: None,
            start: None,
            t_end: default_t_end(),
            options: RiccatiOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub settings: SimSettings,
    #[serde(default)]
    pub probes: Vec<ProbeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub component: usize,
    pub lambda: f64,
    pub omega: f64,
    /// `null` uses the default start rule
    #[serde(default)]
    pub t0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    #[serde(default)]
    pub epsilons: Vec<f64>,
    /// relative shortfall of `eps^2 log(1 + T)` below `1/H` that gets flagged
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            epsilons: Vec::new(),
            tolerance: default_tolerance(),
        }
    }
}

fn default_epsilon() -> f64 {
    0.1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_n_rho() -> usize {
    241
}
fn default_n_omega() -> usize {
    32
}
fn default_refine() -> Option<f64> {
    Some(1e-8)
}
fn one() -> usize {
    1
}
fn default_t_end() -> f64 {
    1e4
}
fn default_tolerance() -> f64 {
    0.1
}

/// Reads and validates a config; relative paths are resolved against the
/// file's directory and computed defaults are filled in.
pub fn parse_config(path: &Path) -> Result<ProblemConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let mut cfg: ProblemConfig = match serde_path_to_error::deserialize(&mut de) {
        Ok(c) => c,
        Err(e) => {
            let at = e.path().to_string();
            let inner = e.into_inner();
            return Err(match inner.classify() {
                serde_json::error::Category::Syntax | serde_json::error::Category::Eof => {
                    anyhow!("malformed JSON in {}: {inner}", path.display())
                }
                _ if inner.to_string().starts_with("unknown field") => {
                    anyhow!("unknown key `{at}` in {}: {inner}", path.display())
                }
                _ => anyhow!("invalid value at `{at}` in {}: {inner}", path.display()),
            });
        }
    };
    de.end()
        .with_context(|| format!("malformed JSON in {}: trailing characters", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.coefficients = absolute(base, &cfg.coefficients)?;
    cfg.output_dir = absolute(base, &cfg.output_dir)?;
    if !cfg.coefficients.is_file() {
        bail!(
            "referenced coefficient file {} does not exist",
            cfg.coefficients.display()
        );
    }
    cfg.validate()?;
    let data = cfg.initial_data()?;
    cfg.radiation.rho_min.get_or_insert(-3.0 * data.support_radius());
    if cfg.lifespan.epsilons.is_empty() {
        cfg.lifespan.epsilons.push(cfg.epsilon);
    }
    Ok(cfg)
}

fn absolute(base: &Path, p: &Path) -> Result<PathBuf> {
    let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    if joined.is_absolute() {
        Ok(joined)
    } else {
        Ok(std::env::current_dir()?.join(joined))
    }
}

impl ProblemConfig {
    pub fn m(&self) -> usize {
        self.speeds.m()
    }

    fn validate(&self) -> Result<()> {
        let m = self.m();
        if self.data.f.len() != m || self.data.g.len() != m {
            bail!(
                "invalid config: data lists {} position and {} velocity fields for {m} speeds",
                self.data.f.len(),
                self.data.g.len()
            );
        }
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                bail!("invalid config: {name} must be positive, got {v}")
            }
        };
        positive("epsilon", self.epsilon)?;
        for &e in self.lifespan.epsilons.iter().chain(&self.scaling.epsilons) {
            positive("every listed epsilon", e)?;
        }
        if !(1..=m).contains(&self.riccati.component) {
            bail!(
                "invalid config: riccati.component {} is not in 1..={m}",
                self.riccati.component
            );
        }
        if let Some(sim) = &self.simulation {
            for p in &sim.probes {
                if !(1..=m).contains(&p.component) {
                    bail!("invalid config: probe component {} is not in 1..={m}", p.component);
                }
            }
        }
        if !(self.scaling.tolerance >= 0.0 && self.scaling.tolerance < 1.0) {
            bail!(
                "invalid config: scaling.tolerance must lie in [0, 1), got {}",
                self.scaling.tolerance
            );
        }
        Ok(())
    }

    pub fn initial_data(&self) -> Result<InitialDataSet> {
        Ok(InitialDataSet::from_specs(&self.data.f, &self.data.g)?)
    }

    pub fn coefficient_set(&self) -> Result<CoefficientSet> {
        Ok(CoefficientSet::from_json_file(self.m(), &self.coefficients)?)
    }

    pub fn rho_min(&self) -> f64 {
        self.radiation.rho_min.expect("filled by parse_config")
    }

    /// Simulator configuration at amplitude `epsilon`.
    pub fn sim_config(&self, coeffs: &CoefficientSet, data: &InitialDataSet, epsilon: f64) -> Result<SimConfig> {
        let sim = self
            .simulation
            .as_ref()
            .ok_or_else(|| anyhow!("invalid config: this subcommand needs a `simulation` section"))?;
        let mut cfg = SimConfig::new(
            coeffs.clone(),
            self.speeds.clone(),
            data.clone(),
            epsilon,
            sim.settings.clone(),
        );
        cfg.probes = sim
            .probes
            .iter()
            .map(|p| ProbeSpec {
                component: p.component - 1,
                lambda: p.lambda,
                omega: p.omega,
                t0: p.t0.unwrap_or_else(|| StartRule::Default { epsilon }.t0(p.lambda)),
            })
            .collect();
        cfg.validate()?;
        Ok(cfg)
    }
}
