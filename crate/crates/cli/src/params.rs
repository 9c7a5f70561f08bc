//! Parameter files: a flat JSON document describing a one- or two-element
//! chain in normalized form, plus experiment geometry and, when the file
//! came out of a fit, the fit diagnostics.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vma_core::fit::FitResult;
use vma_core::{denormalize_params, NormalizedSlse, SlseChain, SlseParams};

use crate::io::write_atomic;

fn one() -> f64 {
    1.0
}

/// Flat on-disk schema. `model_arity` is 1 for a plain actuator, 2 for a
/// sheathed one; sheath keys exist exactly when arity is 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamFile {
    pub model_arity: usize,
    pub control_kappa: f64,
    pub control_gamma: f64,
    /// Always 1 by the normalization convention; kept explicit so every
    /// element row reads the same.
    #[serde(default = "one")]
    pub control_beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sheath_kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sheath_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sheath_beta: Option<f64>,
    /// Force scale [N] of the control parallel spring; arbitrary for
    /// normalized curves, used when materializing a dimensional chain.
    #[serde(default = "one")]
    pub k1_control: f64,
    /// Pre-strain of the ramp start position.
    pub eps0: f64,
    /// Ramp strain travel.
    pub d_eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressure_psi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actuator_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_sse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_r_squared: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_std_errors: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_degenerate: Option<Vec<bool>>,
}

impl ParamFile {
    /// A bare chain description without fit metadata.
    pub fn from_chain(chain: &SlseChain, eps0: f64, d_eps: f64) -> Result<Self> {
        let control = chain.control();
        let sheath = chain.sheaths().next();
        if chain.len() > 2 {
            bail!("parameter files describe at most control + one sheath, chain has {} elements", chain.len());
        }
        Ok(ParamFile {
            model_arity: chain.len(),
            control_kappa: control.kappa,
            control_gamma: control.gamma,
            control_beta: 1.0,
            sheath_kappa: sheath.map(|s| s.kappa),
            sheath_gamma: sheath.map(|s| s.gamma),
            sheath_beta: sheath.map(|s| s.beta),
            k1_control: 1.0,
            eps0,
            d_eps,
            pressure_psi: None,
            actuator_id: None,
            fit_stage: None,
            fit_sse: None,
            fit_r_squared: None,
            fit_iterations: None,
            fit_converged: None,
            fit_std_errors: None,
            fit_degenerate: None,
        })
    }

    /// Attaches a fit's outcome (stage name plus diagnostics).
    pub fn with_fit(mut self, stage: &str, fit: &FitResult) -> Self {
        self.fit_stage = Some(stage.to_string());
        self.fit_sse = Some(fit.sse);
        self.fit_r_squared = Some(fit.r_squared);
        self.fit_iterations = Some(fit.iterations);
        self.fit_converged = Some(fit.converged);
        self.fit_std_errors = Some(fit.std_errors.clone());
        self.fit_degenerate = Some(fit.degenerate.clone());
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.model_arity {
            1 => {
                if self.sheath_kappa.is_some() || self.sheath_gamma.is_some() || self.sheath_beta.is_some() {
                    bail!("model_arity 1 must not carry sheath parameters");
                }
            }
            2 => {
                if self.sheath_kappa.is_none() || self.sheath_gamma.is_none() || self.sheath_beta.is_none() {
                    bail!("model_arity 2 requires sheath_kappa, sheath_gamma, and sheath_beta");
                }
            }
            n => bail!("model_arity must be 1 or 2, got {n}"),
        }
        if self.control_beta != 1.0 {
            bail!("control_beta must be exactly 1, got {}", self.control_beta);
        }
        if !(self.k1_control.is_finite() && self.k1_control > 0.0) {
            bail!("k1_control must be positive");
        }
        if !(self.eps0.is_finite() && self.eps0 > 0.0) {
            bail!("eps0 must be positive");
        }
        if !(self.d_eps.is_finite() && self.d_eps > 0.0) {
            bail!("d_eps must be positive");
        }
        // Element values are validated by the chain constructors.
        self.chain().map(|_| ())
    }

    /// The normalized chain this file describes.
    pub fn chain(&self) -> Result<SlseChain> {
        let control = NormalizedSlse::control(self.control_kappa, self.control_gamma)?;
        Ok(match self.model_arity {
            1 => SlseChain::single(control)?,
            2 => {
                let sheath = NormalizedSlse::new(
                    self.sheath_kappa.context("missing sheath_kappa")?,
                    self.sheath_gamma.context("missing sheath_gamma")?,
                    self.sheath_beta.context("missing sheath_beta")?,
                )?;
                SlseChain::control_and_sheath(control, sheath)?
            }
            n => bail!("model_arity must be 1 or 2, got {n}"),
        })
    }

    /// Dimensional spring/dashpot parameters for simulation, scaled by
    /// `k1_control`.
    pub fn dimensional_chain(&self) -> Result<Vec<SlseParams>> {
        let chain = self.chain()?;
        chain
            .elements()
            .iter()
            .map(|e| Ok(denormalize_params(&e.params, self.k1_control)?))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = serde_json::to_string_pretty(self).context("serializing parameters")?;
        body.push('\n');
        write_atomic(path, body.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let file: ParamFile = serde_json::from_str(&body)
            .with_context(|| format!("parsing {}", path.display()))?;
        file.validate()
            .with_context(|| format!("validating {}", path.display()))?;
        Ok(file)
    }
}
