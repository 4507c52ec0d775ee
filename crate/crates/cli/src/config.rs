use std::path::{Path, PathBuf};

use bode_limits_core::bode::QuadConfig;
use bode_limits_core::spectra::WelchConfig;
use bode_limits_core::stochastic::{make_shaping_filter, ShapingFilter, SimConfig};
use bode_limits_core::verify::Tolerances;
use bode_limits_core::{Result as CoreResult, TransferFunction};
use num_complex::Complex64;
use serde::Deserialize;

use crate::CliError;

/// A root given either as a real number or as `[re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum RootSpec {
    Real(f64),
    Complex([f64; 2]),
}

impl RootSpec {
    fn value(self) -> Complex64 {
        match self {
            RootSpec::Real(r) => Complex64::new(r, 0.0),
            RootSpec::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZpkSpec {
    pub zeros: Vec<RootSpec>,
    pub poles: Vec<RootSpec>,
    pub gain: f64,
}

/// Polynomial coefficients in ascending powers of `s`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffSpec {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    Zpk(ZpkSpec),
    Coeffs(CoeffSpec),
}

impl SystemSpec {
    pub fn build(&self) -> CoreResult<TransferFunction> {
        match self {
            SystemSpec::Zpk(z) => {
                let zeros: Vec<Complex64> = z.zeros.iter().map(|r| r.value()).collect();
                let poles: Vec<Complex64> = z.poles.iter().map(|r| r.value()).collect();
                TransferFunction::from_zpk(&zeros, &poles, z.gain)
            }
            SystemSpec::Coeffs(c) => TransferFunction::from_coeffs(c.num.clone(), c.den.clone()),
        }
    }

    fn numbers(&self) -> Vec<f64> {
        match self {
            SystemSpec::Zpk(z) => {
                let mut v: Vec<f64> = z
                    .zeros
                    .iter()
                    .chain(&z.poles)
                    .flat_map(|r| {
                        let c = r.value();
                        [c.re, c.im]
                    })
                    .collect();
                v.push(z.gain);
                v
            }
            SystemSpec::Coeffs(c) => c.num.iter().chain(&c.den).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapingSpec {
    pub bandwidth: f64,
    pub variance: f64,
}

impl Default for ShapingSpec {
    fn default() -> Self {
        ShapingSpec {
            bandwidth: 100.0,
            variance: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lo: 1e-2,
            hi: 1e3,
            points: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub plant: SystemSpec,
    #[serde(default)]
    pub controller: Option<SystemSpec>,
    #[serde(default)]
    pub shaping: ShapingSpec,
    #[serde(default)]
    pub sim: SimConfig,
    /// When absent the segment length is the largest power of two not above
    /// an eighth of the record.
    #[serde(default)]
    pub welch: Option<WelchConfig>,
    #[serde(default)]
    pub quad: QuadConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub outputs: Option<PathBuf>,
}

impl AnalysisConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: AnalysisConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let mut numbers = self.plant.numbers();
        if let Some(c) = &self.controller {
            numbers.extend(c.numbers());
        }
        numbers.extend([
            self.shaping.bandwidth,
            self.shaping.variance,
            self.sim.dt,
            self.sim.duration,
            self.quad.rel_tol,
            self.quad.abs_tol,
            self.grid.lo,
            self.grid.hi,
        ]);
        if let Some(w) = &self.welch {
            numbers.push(w.overlap_fraction);
        }
        if numbers.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Config("all numeric fields must be finite".into()));
        }
        if !(self.grid.lo > 0.0 && self.grid.hi > self.grid.lo && self.grid.points >= 2) {
            return Err(CliError::Config(
                "grid needs 0 < lo < hi and at least 2 points".into(),
            ));
        }
        self.sim
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.quad
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(w) = &self.welch {
            w.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Open loop `plant * controller`.
    pub fn open_loop(&self) -> CoreResult<TransferFunction> {
        let g = self.plant.build()?;
        Ok(match &self.controller {
            Some(c) => g.series(&c.build()?),
            None => g,
        })
    }

    pub fn shaping_filter(&self) -> CoreResult<ShapingFilter> {
        make_shaping_filter(self.shaping.bandwidth, self.shaping.variance)
    }

    pub fn welch_config(&self) -> WelchConfig {
        self.welch.unwrap_or_else(|| auto_welch(self.sim.samples()))
    }
}

/// Default Welch settings with the segment set to the largest power of two
/// not above `samples / 8`.
pub fn auto_welch(samples: usize) -> WelchConfig {
    let target = (samples / 8).max(8);
    let seg = 1usize << (usize::BITS - 1 - target.leading_zeros());
    WelchConfig::with_segment(seg)
}
