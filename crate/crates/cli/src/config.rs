//! Run configuration: a TOML file mirrored by command-line flags, with the
//! flags taking precedence. The whole structure round-trips losslessly so a
//! run can be reproduced from its recorded configuration.

use serde::{Deserialize, Serialize};
use tofwit::builders::BellLabel;
use tofwit::envelope::{EnvelopeModel, WannierEnvelope};
use tofwit::fock::{LatticeGeometry, Level, Statistics};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub statistics: Statistics,
    pub seed: u64,
    pub builder: BuilderConfig,
    pub defects: DefectConfig,
    pub envelope: EnvelopeConfig,
    pub grid: Option<GridConfig>,
    pub x: Vec<i64>,
    pub shots: u64,
    pub output_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            statistics: Statistics::Boson,
            seed: 1,
            builder: BuilderConfig::default(),
            defects: DefectConfig::default(),
            envelope: EnvelopeConfig::default(),
            grid: None,
            x: vec![1],
            shots: 0,
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub sites: usize,
    pub lattice_const: f64,
    pub max_occ: u8,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            sites: 4,
            lattice_const: 1.0,
            max_occ: 1,
        }
    }
}

impl GeometryConfig {
    pub fn build(&self) -> anyhow::Result<LatticeGeometry> {
        Ok(LatticeGeometry::new(
            self.sites,
            self.lattice_const,
            self.max_occ,
        )?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BuilderConfig {
    /// mott | delocalized | bell-chain | random-sector | random-internal
    pub name: String,
    pub filling: u8,
    pub level: String,
    pub atoms: u32,
    pub bell: String,
    pub pair_offset: usize,
    pub components: usize,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self {
            name: "mott".into(),
            filling: 1,
            level: "a".into(),
            atoms: 1,
            bell: "phi-".into(),
            pair_offset: 1,
            components: 6,
        }
    }
}

impl BuilderConfig {
    pub fn level(&self) -> anyhow::Result<Level> {
        match self.level.to_ascii_lowercase().as_str() {
            "a" => Ok(Level::A),
            "b" => Ok(Level::B),
            other => anyhow::bail!("unknown level `{other}` (expected a or b)"),
        }
    }

    pub fn bell(&self) -> anyhow::Result<BellLabel> {
        Ok(self.bell.parse::<BellLabel>()?)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DefectConfig {
    pub epsilon: f64,
    pub r: u8,
}

impl Default for DefectConfig {
    fn default() -> Self {
        Self { epsilon: 0.0, r: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeConfig {
    /// ideal | gaussian
    pub model: String,
    /// Gaussian width in units of the lattice constant.
    pub sigma_over_d: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            model: "ideal".into(),
            sigma_over_d: tofwit::envelope::DEFAULT_GAUSSIAN_SIGMA_OVER_D,
        }
    }
}

impl EnvelopeConfig {
    pub fn build(&self, lattice_const: f64) -> anyhow::Result<WannierEnvelope> {
        match self.model.to_ascii_lowercase().as_str() {
            "ideal" => Ok(WannierEnvelope::ideal(lattice_const)),
            "gaussian" => Ok(WannierEnvelope {
                model: EnvelopeModel::Gaussian {
                    sigma: self.sigma_over_d * lattice_const,
                },
                lattice_const,
            }),
            other => anyhow::bail!("unknown envelope model `{other}` (expected ideal or gaussian)"),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub k_max: f64,
    pub n_points: usize,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
