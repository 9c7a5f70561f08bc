//! Parameter sweep studies: evaluate a family of analytic curves over a
//! grid of one parameter and record the orderings the family must obey
//! (curve height tracks stiffness ratio and element weight, steepness
//! tracks the rate constant).

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vma_core::{NormalizedSlse, SlseChain};

/// Which normalized parameter the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweptParameter {
    Kappa,
    Gamma,
    Beta,
}

impl SweptParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweptParameter::Kappa => "kappa",
            SweptParameter::Gamma => "gamma",
            SweptParameter::Beta => "beta",
        }
    }
}

/// Which element the swept parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementSelector {
    Control,
    Sheath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementSpec {
    pub kappa: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheathSpec {
    pub kappa: f64,
    pub gamma: f64,
    pub beta: f64,
}

fn default_points_per_side() -> usize {
    40
}

/// A sweep study description (TOML on disk).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweptParameter,
    pub element: ElementSelector,
    pub values: Vec<f64>,
    /// Pre-strain of the ramp start position.
    pub eps0: f64,
    /// Ramp strain travel.
    pub d_eps: f64,
    /// Curve velocity grid: log-spaced magnitudes, mirrored to both signs.
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default = "default_points_per_side")]
    pub points_per_side: usize,
    /// Base name for per-value curve files; defaults to the parameter name.
    #[serde(default)]
    pub output_stem: Option<String>,
    pub control: ElementSpec,
    #[serde(default)]
    pub sheath: Option<SheathSpec>,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let spec: SweepSpec =
            toml::from_str(&body).with_context(|| format!("parsing {}", path.display()))?;
        spec.validate()
            .with_context(|| format!("validating {}", path.display()))?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            bail!("values must be nonempty");
        }
        for (i, v) in self.values.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0) {
                bail!("values[{i}] = {v}; grid values must be positive");
            }
        }
        if !(self.v_min.is_finite() && self.v_min > 0.0 && self.v_min < self.v_max) {
            bail!("need 0 < v_min < v_max, got {} and {}", self.v_min, self.v_max);
        }
        if self.points_per_side == 0 {
            bail!("points_per_side must be at least 1");
        }
        if !(self.eps0.is_finite() && self.eps0 > 0.0) {
            bail!("eps0 must be positive");
        }
        if !(self.d_eps.is_finite() && self.d_eps > 0.0) {
            bail!("d_eps must be positive");
        }
        if self.element == ElementSelector::Sheath && self.sheath.is_none() {
            bail!("sweeping a sheath parameter requires a [sheath] section");
        }
        if self.element == ElementSelector::Control && self.parameter == SweptParameter::Beta {
            bail!("the control element has beta fixed at 1; sweep the sheath's beta instead");
        }
        // Base chain must construct at every grid value; probe the first.
        self.chain_at(self.values[0])?;
        Ok(())
    }

    pub fn stem(&self) -> String {
        self.output_stem
            .clone()
            .unwrap_or_else(|| self.parameter.as_str().to_string())
    }

    /// The base chain with the swept parameter replaced by `value`.
    pub fn chain_at(&self, value: f64) -> Result<SlseChain> {
        let mut control = (self.control.kappa, self.control.gamma);
        let mut sheath = self.sheath.as_ref().map(|s| (s.kappa, s.gamma, s.beta));
        match self.element {
            ElementSelector::Control => match self.parameter {
                SweptParameter::Kappa => control.0 = value,
                SweptParameter::Gamma => control.1 = value,
                SweptParameter::Beta => bail!("control beta is fixed at 1"),
            },
            ElementSelector::Sheath => {
                let s = sheath.as_mut().context("missing [sheath] section")?;
                match self.parameter {
                    SweptParameter::Kappa => s.0 = value,
                    SweptParameter::Gamma => s.1 = value,
                    SweptParameter::Beta => s.2 = value,
                }
            }
        }
        let control = NormalizedSlse::control(control.0, control.1)?;
        Ok(match sheath {
            None => SlseChain::single(control)?,
            Some((k, g, b)) => {
                SlseChain::control_and_sheath(control, NormalizedSlse::new(k, g, b)?)?
            }
        })
    }

    /// The control-only chain, for distance-to-control bookkeeping.
    pub fn control_chain(&self) -> Result<SlseChain> {
        let control = NormalizedSlse::control(self.control.kappa, self.control.gamma)?;
        Ok(SlseChain::single(control)?)
    }
}

/// Per-value summary plus the ordering checks, written as JSON next to the
/// curve files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub parameter: SweptParameter,
    pub element: ElementSelector,
    pub values: Vec<f64>,
    /// Curve file names, aligned with `values`.
    pub files: Vec<String>,
    /// Infinite-speed curve height per value.
    pub asymptote: Vec<f64>,
    /// Speed reaching 90% of the asymptote, per value.
    pub v_alpha_90: Vec<f64>,
    /// Root-mean-square offset between the chain curve and the bare
    /// control curve over the grid; present when the chain has a sheath.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_to_control: Option<Vec<f64>>,
    /// Named ordering assertions with their observed truth value.
    pub checks: BTreeMap<String, bool>,
}
