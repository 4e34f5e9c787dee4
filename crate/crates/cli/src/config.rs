//! The run configuration document, read from TOML or JSON.

use std::path::{Path, PathBuf};

use pattern_entropy::bounds::SmallLetterOptions;
use pattern_entropy::distributions::{make_distribution, Source, SourceSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Bound selectors accepted in `bounds = [...]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundName {
    Simple,
    Ub1,
    Ub1Tight,
    Lb2,
    Ub3,
    C1,
    C21,
    C2Exact,
    C2Loosened,
    Lb4,
    Contribution,
    Range,
}

impl BoundName {
    pub const ALL: [BoundName; 12] = [
        Self::Simple,
        Self::Ub1,
        Self::Ub1Tight,
        Self::Lb2,
        Self::Ub3,
        Self::C1,
        Self::C21,
        Self::C2Exact,
        Self::C2Loosened,
        Self::Lb4,
        Self::Contribution,
        Self::Range,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    pub samples: u64,
    #[serde(default)]
    pub seed: u64,
}

/// Alphabet-size sweep for the region curve. `n` is real so that
/// astronomically long blocks can be evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSettings {
    pub n: f64,
    pub epsilon: f64,
    /// `n^eps1`.
    pub n_eps1: f64,
    pub k_min: f64,
    pub k_max: f64,
    /// Number of log-spaced points; ignored when `integer_step` is set.
    #[serde(default = "default_points")]
    pub points: usize,
    /// Sweep every integer `k` in `[k_min, k_max]` instead.
    #[serde(default)]
    pub integer_step: bool,
}

fn default_points() -> usize {
    200
}

fn default_epsilon() -> f64 {
    0.25
}

fn default_bounds() -> Vec<BoundName> {
    vec![BoundName::Simple]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// A named family; exclusive with `theta`.
    #[serde(default)]
    pub source: Option<SourceSpec>,
    /// Explicit letter probabilities; exclusive with `source`.
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub n: Option<u64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Margin in the regime condition `eps >= (1 + delta) ln ln n / ln n`.
    #[serde(default)]
    pub delta: f64,
    /// Exponent with `n^eps1` the smallest scaled letter probability, used
    /// by the range bounds.
    #[serde(default)]
    pub epsilon1: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default = "default_bounds")]
    pub bounds: Vec<BoundName>,
    #[serde(default)]
    pub oracle: bool,
    #[serde(default)]
    pub monte_carlo: bool,
    #[serde(default)]
    pub mc: Option<McSettings>,
    #[serde(default)]
    pub lb4: SmallLetterOptions,
    #[serde(default)]
    pub region: Option<RegionSettings>,
    #[serde(default)]
    pub format: Option<Format>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let config: Self = if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.source.is_some() && self.theta.is_some() {
            return Err(CliError::Config(
                "give either `source` or `theta`, not both".into(),
            ));
        }
        if self.monte_carlo && self.mc.is_none() {
            return Err(CliError::Config(
                "`monte_carlo = true` needs an `[mc]` table".into(),
            ));
        }
        if self.n == Some(0) {
            return Err(CliError::Config("`n` must be positive".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(CliError::Config("`epsilon` must be non-negative".into()));
        }
        Ok(())
    }

    pub fn block_length(&self) -> CliResult<u64> {
        self.n
            .ok_or_else(|| CliError::Config("`n` is required".into()))
    }

    /// Builds the source; families that scale with `n` read it here.
    pub fn source(&self) -> CliResult<Source> {
        let spec = match (&self.source, &self.theta) {
            (Some(spec), None) => spec.clone(),
            (None, Some(theta)) => SourceSpec::Explicit {
                probs: theta.clone(),
            },
            _ => {
                return Err(CliError::Config(
                    "a `source` table or a `theta` list is required".into(),
                ))
            }
        };
        Ok(make_distribution(&spec, self.n)?)
    }

    /// `n^eps1` for the range bounds; defaults to `n^(eps/2)`.
    pub fn n_eps1(&self) -> CliResult<f64> {
        let n = self.block_length()? as f64;
        Ok(n.powf(self.epsilon1.unwrap_or(self.epsilon / 2.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml() {
        let c = RunConfig::from_toml(
            "n = 2\ntheta = [0.5, 0.5]\nbounds = [\"simple\", \"c2_loosened\"]",
        )
        .unwrap();
        assert_eq!(c.bounds, vec![BoundName::Simple, BoundName::C2Loosened]);
        assert_eq!(c.source().unwrap().theta.k(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("n = 2\ntheta = [1.0]\nbogus = 1").is_err());
        assert!(RunConfig::from_toml("n = 2\ntheta = [1.0]\nbounds = [\"ub9\"]").is_err());
    }

    #[test]
    fn mc_toggle_needs_settings() {
        assert!(RunConfig::from_toml("n = 2\ntheta = [1.0]\nmonte_carlo = true").is_err());
    }

    #[test]
    fn family_tables() {
        let c = RunConfig::from_toml("n = 100\n[source]\nfamily = \"uniform\"\nk = 4").unwrap();
        assert_eq!(c.source().unwrap().theta.k(), 4);
    }
}
