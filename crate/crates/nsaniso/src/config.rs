//! Experiment configuration: a TOML file with one section per concern.
//! Every key mirrors a field of the runtime types it configures; identical
//! configuration files produce identical outputs bit-for-bit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::grid::{build_grid, Grid};
use crate::samples::FamilySpec;
use crate::solver::{Scheme, SolverParams};

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(String),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read configuration: {e}"),
            ConfigError::Parse(m) => write!(f, "cannot parse configuration: {m}"),
            ConfigError::Invalid(m) => write!(f, "invalid configuration: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Names of the experiments the driver knows how to run.
pub const EXPERIMENTS: [&str; 6] = [
    "simulate",
    "eps-sweep",
    "smallness-sweep",
    "local-existence",
    "density-demo",
    "constants",
];

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    #[serde(default = "one")]
    pub lx: f64,
    #[serde(default = "one")]
    pub ly: f64,
    #[serde(default)]
    pub half_domain: bool,
}

fn one() -> f64 {
    1.0
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid, ConfigError> {
        build_grid(self.nx, self.ny, self.nz, self.lx, self.ly, self.half_domain)
            .map_err(|e| invalid(format!("grid: {e}")))
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub nu_h: f64,
    #[serde(default)]
    pub eps: f64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "yes")]
    pub advection: bool,
    #[serde(default = "default_cfl_cap")]
    pub cfl_cap: f64,
    #[serde(default = "default_blowup")]
    pub blowup_threshold: f64,
    #[serde(default)]
    pub snapshot_stride: usize,
}

fn default_scheme() -> String {
    "imex-euler".into()
}

fn yes() -> bool {
    true
}

fn default_cfl_cap() -> f64 {
    0.5
}

fn default_blowup() -> f64 {
    1e3
}

impl ParamsConfig {
    pub fn build(&self) -> Result<SolverParams, ConfigError> {
        let scheme = match self.scheme.as_str() {
            "imex-euler" => Scheme::ImexEuler,
            "ab2-crank-nicolson" => Scheme::Ab2CrankNicolson,
            other => return Err(invalid(format!("unknown scheme {other:?}"))),
        };
        let params = SolverParams {
            nu_h: self.nu_h,
            eps: self.eps,
            dt: self.dt,
            t_end: self.t_end,
            cfl_cap: self.cfl_cap,
            blowup_threshold: self.blowup_threshold,
            scheme,
            advection: self.advection,
            snapshot_stride: self.snapshot_stride,
        };
        params.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(params)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub family: String,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_zmode")]
    pub zmode: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_width")]
    pub width: f64,
}

fn default_zmode() -> usize {
    1
}

fn default_eta() -> f64 {
    0.1
}

fn default_alpha() -> f64 {
    0.25
}

fn default_width() -> f64 {
    0.1
}

impl InitialConfig {
    pub fn family_spec(&self) -> Result<FamilySpec, ConfigError> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(invalid("initial amplitude must be nonnegative and finite"));
        }
        let spec = match self.family.as_str() {
            "planar-vortex" => FamilySpec::PlanarVortex {
                amplitude: self.amplitude,
                zmode: self.zmode,
            },
            "anisotropic" => FamilySpec::Anisotropic {
                amplitude: self.amplitude,
                eta: self.eta,
                alpha: self.alpha,
            },
            "boundary-layer" => FamilySpec::BoundaryLayer {
                amplitude: self.amplitude,
                width: self.width,
            },
            "random-solenoidal" => FamilySpec::RandomSolenoidal {
                amplitude: self.amplitude,
                seed: self.seed,
            },
            "vertical-shear" => FamilySpec::VerticalShear {
                amplitude: self.amplitude,
            },
            other => return Err(invalid(format!("unknown initial family {other:?}"))),
        };
        Ok(spec)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Regularization strengths, strictly decreasing, at least three.
    pub eps_values: Vec<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SmallnessConfig {
    /// Amplitude grid applied to the configured initial family.
    #[serde(default = "default_amplitudes")]
    pub amplitudes: Vec<f64>,
    /// Vertical-concentration parameters of the steep-shear family; the
    /// driver scales each into the viscosity window where the exponential
    /// shear test separates from the plain smallness test.
    #[serde(default = "default_etas")]
    pub eta_values: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Sample count for the empirical constants.
    #[serde(default = "default_small_samples")]
    pub n_samples: usize,
}

fn default_amplitudes() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 1.0, 2.0]
}

fn default_etas() -> Vec<f64> {
    vec![0.1, 0.05]
}

fn default_small_samples() -> usize {
    200
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LocalExistenceConfig {
    /// Target bound on `∫₀^{T₀}‖∇_h u‖²`.
    pub delta: f64,
    /// Spectral-cutoff budget; defaults to `delta`.
    #[serde(default)]
    pub delta0: Option<f64>,
    /// Eigenbasis depth available for the cutoff selection.
    #[serde(default = "default_modes")]
    pub basis_modes: usize,
    /// Sample count for the empirical constants feeding the Grönwall
    /// integrand columns.
    #[serde(default = "default_small_samples")]
    pub n_samples: usize,
}

fn default_modes() -> usize {
    16
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    /// Number of diagonal levels `(λ_k, η_k)`.
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Initial scale offset `λ₁ − 1`.
    #[serde(default = "default_scale_offset")]
    pub scale_offset: f64,
}

fn default_levels() -> usize {
    8
}

fn default_scale_offset() -> f64 {
    0.5
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    #[serde(default = "default_const_samples")]
    pub n_samples: usize,
    /// Also estimate on a horizontally refined grid and report the drift.
    #[serde(default = "yes")]
    pub compare_refined: bool,
}

fn default_const_samples() -> usize {
    1000
}

impl Default for ConstantsConfig {
    fn default() -> ConstantsConfig {
        ConstantsConfig {
            n_samples: default_const_samples(),
            compare_refined: true,
        }
    }
}

/// Pass/fail knobs with defaults from the tolerance policy.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    /// Cap on the scheme-exact energy-identity residual (default 1e−9).
    #[serde(default)]
    pub energy_residual: Option<f64>,
    /// Multiplicative slack on analytic inequalities (default 1.05).
    #[serde(default)]
    pub inequality_slack: Option<f64>,
    /// Calibration constant of the second-shear propagation check
    /// (default 1.0).
    #[serde(default)]
    pub h02_calibration: Option<f64>,
}

impl ToleranceOverrides {
    pub fn energy_residual(&self) -> f64 {
        self.energy_residual.unwrap_or(1e-9)
    }

    pub fn inequality_slack(&self) -> f64 {
        self.inequality_slack.unwrap_or(crate::tol::INEQUALITY_SLACK)
    }

    pub fn h02_calibration(&self) -> f64 {
        self.h02_calibration.unwrap_or(1.0)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One of [`EXPERIMENTS`].
    pub experiment: String,
    /// Global seed folded into sampled candidates (CLI `--seed` overrides).
    #[serde(default)]
    pub seed: u64,
    /// Output directory (CLI `--out` overrides).
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub grid: GridConfig,
    pub params: ParamsConfig,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub smallness: Option<SmallnessConfig>,
    #[serde(default)]
    pub local_existence: Option<LocalExistenceConfig>,
    #[serde(default)]
    pub density: Option<DensityConfig>,
    #[serde(default)]
    pub constants: Option<ConstantsConfig>,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return Err(invalid(format!(
                "unknown experiment {:?}; expected one of {EXPERIMENTS:?}",
                self.experiment
            )));
        }
        self.grid.build()?;
        self.params.build()?;
        if let Some(init) = &self.initial {
            init.family_spec()?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.eps_values.len() < 3 {
                return Err(invalid("sweep needs at least three eps values"));
            }
            if sweep
                .eps_values
                .windows(2)
                .any(|w| !(w[1] < w[0]) || !w[1].is_finite() || w[1] < 0.0)
            {
                return Err(invalid("sweep eps values must be strictly decreasing and nonnegative"));
            }
        }
        if let Some(le) = &self.local_existence {
            if !(le.delta > 0.0 && le.delta.is_finite()) {
                return Err(invalid("local-existence delta must be positive"));
            }
            if let Some(d0) = le.delta0 {
                if !(d0 > 0.0 && d0 <= le.delta) {
                    return Err(invalid("delta0 must satisfy 0 < delta0 <= delta"));
                }
            }
            if le.basis_modes == 0 {
                return Err(invalid("basis_modes must be positive"));
            }
        }
        if let Some(d) = &self.density {
            if d.levels == 0 {
                return Err(invalid("density levels must be positive"));
            }
            if !(d.scale_offset > 0.0 && d.scale_offset <= 1.0) {
                return Err(invalid("density scale_offset must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    /// Serialized echo embedded in run manifests.
    pub fn echo(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_else(|e| format!("<unserializable: {e}>"))
    }
}
