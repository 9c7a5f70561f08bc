//! Closed-form force-velocity mathematics for standard-linear-solid element
//! chains.
//!
//! # Model
//!
//! A standard-linear-solid element (SLSE, the Zener solid) is a parallel
//! spring `k1` alongside a series spring `k2` + dashpot `eta` branch. Writing
//! `eps` for the total strain and `eps2` for the strain carried by the series
//! spring, the element force and internal state obey
//!
//! ```text
//! F        = k1*eps + k2*eps2
//! d(eps2)  = d(eps)/dt - (k2/eta)*eps2
//! ```
//!
//! Under a constant-rate ramp `eps(t) = eps0 + v_hat*t` started from steady
//! state (`eps2 = 0`) the force has the closed form
//!
//! ```text
//! F(t) = k1*(eps0 + v_hat*t) + v_hat*eta*(1 - exp(-(k2/eta)*t))
//! ```
//!
//! Normalizing the peak force at target-reach `t = d_eps/|v_hat|` by the
//! pre-ramp force `k1*eps0` gives the force-velocity (FV) value
//!
//! ```text
//! FV(v_hat)  = 1 + sgn(v_hat)*d_eps/eps0 + dFV(v_hat)
//! dFV(v_hat) = (v_hat*kappa/(eps0*gamma)) * (1 - exp(-gamma*d_eps/|v_hat|))
//! ```
//!
//! in terms of the dimensionless element parameters `kappa = k2/k1` and
//! `gamma = k2/eta` [1/s]. `dFV` is odd in `v_hat`, strictly increasing, and
//! saturates at the horizontal asymptote `dFV(inf) = kappa*d_eps/eps0`.
//!
//! Multiple elements sharing the same strain compose in parallel. With
//! per-element weights `beta_i = k1_i/k1_control` the chain curve is the
//! weighted average
//!
//! ```text
//! dFV_chain = sum_i (beta_i / sum_j beta_j) * dFV_i
//! ```
//!
//! so the chain asymptote is `(d_eps/eps0) * sum(beta_i*kappa_i)/sum(beta_i)`
//! and the curve's knee velocity is controlled by the `gamma_i` mix.
//!
//! # Conventions
//!
//! `d_eps` is a magnitude; ramp direction is carried solely by the sign of
//! `v_hat`. `FV` has a jump at `v_hat = 0` (one-sided limits
//! `1 ± d_eps/eps0`); by convention `fv_single` returns 1 there (the no-ramp
//! steady state) and `dfv_single` returns 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance of the exact alpha-velocity root solve.
const V_ALPHA_REL_TOL: f64 = 1e-10;

/// Alphas above this are treated as asking for the unreachable asymptote.
const ALPHA_MAX: f64 = 1.0 - 1e-9;

// === Parameter types ===

/// Dimensional element parameters.
///
/// `k1` and `k2` are normalized stiffnesses in newtons (force per unit
/// strain), `eta` is the series damping coefficient in newton-seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlseParams {
    /// Parallel spring stiffness [N].
    pub k1: f64,
    /// Series spring stiffness [N].
    pub k2: f64,
    /// Series dashpot coefficient [N s].
    pub eta: f64,
}

impl SlseParams {
    /// Validates `k1 > 0`, `k2 > 0`, `eta > 0`, all finite.
    pub fn new(k1: f64, k2: f64, eta: f64) -> Result<Self> {
        for (name, v) in [("k1", k1), ("k2", k2), ("eta", eta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    "SlseParams",
                    format!("{name} = {v} must be finite and positive"),
                ));
            }
        }
        Ok(SlseParams { k1, k2, eta })
    }

    /// Inverse viscous time constant `k2/eta` [1/s].
    pub fn gamma(&self) -> f64 {
        self.k2 / self.eta
    }
}

/// Dimensionless element parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSlse {
    /// Stiffness ratio `k2/k1`.
    pub kappa: f64,
    /// Inverse viscous time constant `k2/eta` [1/s].
    pub gamma: f64,
    /// Parallel-stiffness ratio `k1/k1_control`; 1 for the control element.
    pub beta: f64,
}

impl NormalizedSlse {
    /// Validates `kappa > 0`, `gamma > 0`, `beta > 0`, all finite.
    pub fn new(kappa: f64, gamma: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("kappa", kappa), ("gamma", gamma), ("beta", beta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    "NormalizedSlse",
                    format!("{name} = {v} must be finite and positive"),
                ));
            }
        }
        Ok(NormalizedSlse { kappa, gamma, beta })
    }

    /// A control element (`beta = 1` exactly).
    pub fn control(kappa: f64, gamma: f64) -> Result<Self> {
        Self::new(kappa, gamma, 1.0)
    }
}

/// Role tag of a chain element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementRole {
    Control,
    Sheath,
}

/// One element of a chain together with its role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainElement {
    pub params: NormalizedSlse,
    pub role: ElementRole,
}

/// A parallel chain of normalized elements.
///
/// Construction enforces the chain invariants: at least one element, exactly
/// one element tagged control, and that element has `beta == 1` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ChainElement>", into = "Vec<ChainElement>")]
pub struct SlseChain {
    elements: Vec<ChainElement>,
}

impl SlseChain {
    pub fn new(elements: Vec<ChainElement>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::invalid("SlseChain", "chain must contain at least one element"));
        }
        let controls: Vec<&ChainElement> = elements
            .iter()
            .filter(|e| e.role == ElementRole::Control)
            .collect();
        if controls.len() != 1 {
            return Err(Error::invalid(
                "SlseChain",
                format!("chain must contain exactly one control element, found {}", controls.len()),
            ));
        }
        if controls[0].params.beta != 1.0 {
            return Err(Error::invalid(
                "SlseChain",
                format!("control element must have beta = 1, found {}", controls[0].params.beta),
            ));
        }
        Ok(SlseChain { elements })
    }

    /// Single-element chain around one control element.
    pub fn single(control: NormalizedSlse) -> Result<Self> {
        if control.beta != 1.0 {
            return Err(Error::invalid("SlseChain", "control element must have beta = 1"));
        }
        Self::new(vec![ChainElement {
            params: control,
            role: ElementRole::Control,
        }])
    }

    /// Two-element chain: one control plus one sheath.
    pub fn control_and_sheath(control: NormalizedSlse, sheath: NormalizedSlse) -> Result<Self> {
        if control.beta != 1.0 {
            return Err(Error::invalid("SlseChain", "control element must have beta = 1"));
        }
        Self::new(vec![
            ChainElement {
                params: control,
                role: ElementRole::Control,
            },
            ChainElement {
                params: sheath,
                role: ElementRole::Sheath,
            },
        ])
    }

    pub fn elements(&self) -> &[ChainElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    /// The unique control element.
    pub fn control(&self) -> &NormalizedSlse {
        self.elements
            .iter()
            .find(|e| e.role == ElementRole::Control)
            .map(|e| &e.params)
            .expect("chain invariant: exactly one control element")
    }

    /// Sheath elements in chain order.
    pub fn sheaths(&self) -> impl Iterator<Item = &NormalizedSlse> {
        self.elements
            .iter()
            .filter(|e| e.role == ElementRole::Sheath)
            .map(|e| &e.params)
    }

    pub fn beta_sum(&self) -> f64 {
        self.elements.iter().map(|e| e.params.beta).sum()
    }

    /// Chain curve height above the zero-velocity discontinuity.
    pub fn dfv(&self, r: &RampSpec) -> f64 {
        let beta_sum = self.beta_sum();
        self.elements
            .iter()
            .map(|e| e.params.beta / beta_sum * dfv_single(&e.params, r))
            .sum()
    }

    /// Full normalized FV value, `1 + sgn(v_hat)*d_eps/eps0 + dFV`.
    pub fn fv(&self, r: &RampSpec) -> f64 {
        if r.v_hat == 0.0 {
            return 1.0;
        }
        1.0 + r.v_hat.signum() * r.d_eps / r.eps0 + self.dfv(r)
    }

    /// Horizontal asymptote `(d_eps/eps0) * sum(beta*kappa)/sum(beta)`.
    pub fn dfv_asymptote(&self, d_eps: f64, eps0: f64) -> Result<f64> {
        check_ramp_scalars(d_eps, eps0)?;
        let beta_sum = self.beta_sum();
        let kappa_mean = self
            .elements
            .iter()
            .map(|e| e.params.beta * e.params.kappa)
            .sum::<f64>()
            / beta_sum;
        Ok(d_eps / eps0 * kappa_mean)
    }

    /// Closed-form estimate of the velocity reaching fraction `alpha` of the
    /// asymptote: `d_eps/(2(1-alpha)) * sum(beta*kappa*gamma)/sum(beta*kappa)`.
    pub fn v_alpha_approx(&self, d_eps: f64, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        if !(d_eps.is_finite() && d_eps > 0.0) {
            return Err(Error::invalid("v_alpha_approx", format!("d_eps = {d_eps} must be positive")));
        }
        let bk: f64 = self.elements.iter().map(|e| e.params.beta * e.params.kappa).sum();
        let bkg: f64 = self
            .elements
            .iter()
            .map(|e| e.params.beta * e.params.kappa * e.params.gamma)
            .sum();
        Ok(d_eps / (2.0 * (1.0 - alpha)) * (bkg / bk))
    }

    /// Exact velocity at which `dFV(v)/dFV(inf) = alpha`, by bracketed
    /// bisection to relative tolerance 1e-10.
    pub fn v_alpha_exact(&self, d_eps: f64, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        // eps0 cancels in the ratio; any positive value works.
        let eps0 = 1.0;
        let asymptote = self.dfv_asymptote(d_eps, eps0)?;
        let seed = self.v_alpha_approx(d_eps, alpha)?;
        let ratio = |v: f64| {
            let r = RampSpec {
                eps0,
                d_eps,
                v_hat: v,
            };
            self.dfv(&r) / asymptote
        };
        solve_increasing(ratio, seed, alpha)
    }
}

impl TryFrom<Vec<ChainElement>> for SlseChain {
    type Error = Error;

    fn try_from(elements: Vec<ChainElement>) -> Result<Self> {
        SlseChain::new(elements)
    }
}

impl From<SlseChain> for Vec<ChainElement> {
    fn from(chain: SlseChain) -> Self {
        chain.elements
    }
}

/// Constant-rate ramp description.
///
/// `eps0` is the pre-ramp steady-state strain, `d_eps` the ramp magnitude
/// (always positive; direction lives in the sign of `v_hat`), `v_hat` the
/// strain rate in 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampSpec {
    /// Pre-ramp steady-state strain; must be positive (the FV normalization
    /// divides by `k1*eps0`).
    pub eps0: f64,
    /// Ramp strain magnitude, > 0.
    pub d_eps: f64,
    /// Signed strain rate [1/s]; 0 is allowed for limit queries.
    pub v_hat: f64,
}

impl RampSpec {
    pub fn new(eps0: f64, d_eps: f64, v_hat: f64) -> Result<Self> {
        check_ramp_scalars(d_eps, eps0)?;
        if !v_hat.is_finite() {
            return Err(Error::invalid("RampSpec", format!("v_hat = {v_hat} must be finite")));
        }
        Ok(RampSpec { eps0, d_eps, v_hat })
    }

    /// Same ramp at a different rate.
    pub fn with_v_hat(&self, v_hat: f64) -> RampSpec {
        RampSpec { v_hat, ..*self }
    }

    /// Ramp duration `d_eps/|v_hat|` [s].
    pub fn duration(&self) -> Result<f64> {
        if self.v_hat == 0.0 {
            return Err(Error::invalid("RampSpec", "duration undefined at v_hat = 0"));
        }
        Ok(self.d_eps / self.v_hat.abs())
    }

    /// One-sided FV limits at the zero-velocity discontinuity, as
    /// `(limit from v_hat < 0, limit from v_hat > 0)` = `1 ∓ d_eps/eps0`.
    pub fn fv_limits_at_zero(&self) -> (f64, f64) {
        let jump = self.d_eps / self.eps0;
        (1.0 - jump, 1.0 + jump)
    }
}

fn check_ramp_scalars(d_eps: f64, eps0: f64) -> Result<()> {
    if !(eps0.is_finite() && eps0 > 0.0) {
        return Err(Error::invalid("RampSpec", format!("eps0 = {eps0} must be finite and positive")));
    }
    if !(d_eps.is_finite() && d_eps > 0.0) {
        return Err(Error::invalid("RampSpec", format!("d_eps = {d_eps} must be finite and positive")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0 && alpha <= ALPHA_MAX) {
        return Err(Error::AlphaOutOfRange { alpha });
    }
    Ok(())
}

// === Closed-form curves ===

/// `1 - exp(-x)` without cancellation for small `x`.
///
/// The near-asymptote regime has `x = gamma*d_eps/|v_hat|` far below 1, where
/// the naive form loses all significant digits.
#[inline]
pub(crate) fn one_minus_exp_neg(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// Element force during a constant-rate ramp started from steady state.
///
/// `F(t) = k1*(eps0 + v_hat*t) + v_hat*eta*(1 - exp(-(k2/eta)*t))`, the
/// solution of the element equations under `eps(t) = eps0 + v_hat*t` with the
/// series branch initially relaxed. At `t = 0` this is exactly `k1*eps0`. The
/// form stays valid for any `t >= 0`; target-reach is at `t = d_eps/|v_hat|`.
pub fn slse_ramp_force(p: &SlseParams, r: &RampSpec, t: f64) -> Result<f64> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid("slse_ramp_force", format!("t = {t} must be finite and >= 0")));
    }
    let gamma = p.gamma();
    Ok(p.k1 * (r.eps0 + r.v_hat * t) + r.v_hat * p.eta * one_minus_exp_neg(gamma * t))
}

/// Single-element curve height above the zero-velocity discontinuity.
///
/// `dFV = (v_hat*kappa/(eps0*gamma)) * (1 - exp(-gamma*d_eps/|v_hat|))`,
/// extended continuously with `dFV(0) = 0`. Odd in `v_hat`, strictly
/// increasing, bounded by `±kappa*d_eps/eps0`. Finite and NaN-free for
/// `|v_hat|` spanning at least 1e-12 to 1e12 times `gamma*d_eps`.
pub fn dfv_single(e: &NormalizedSlse, r: &RampSpec) -> f64 {
    if r.v_hat == 0.0 {
        return 0.0;
    }
    let x = e.gamma * r.d_eps / r.v_hat.abs();
    r.v_hat * e.kappa / (r.eps0 * e.gamma) * one_minus_exp_neg(x)
}

/// Single-element normalized FV value.
///
/// `1 + sgn(v_hat)*d_eps/eps0 + dFV`; returns 1 at `v_hat = 0` by the no-ramp
/// convention (the discontinuity's one-sided limits are available from
/// [`RampSpec::fv_limits_at_zero`]).
pub fn fv_single(e: &NormalizedSlse, r: &RampSpec) -> f64 {
    if r.v_hat == 0.0 {
        return 1.0;
    }
    1.0 + r.v_hat.signum() * r.d_eps / r.eps0 + dfv_single(e, r)
}

/// Single-element horizontal asymptote `(d_eps/eps0)*kappa`.
pub fn dfv_asymptote(e: &NormalizedSlse, d_eps: f64, eps0: f64) -> Result<f64> {
    check_ramp_scalars(d_eps, eps0)?;
    Ok(d_eps / eps0 * e.kappa)
}

/// Chain curve height; equals [`dfv_single`] for a one-element chain.
pub fn dfv_chain(chain: &SlseChain, r: &RampSpec) -> f64 {
    chain.dfv(r)
}

/// Single-element closed-form alpha-velocity estimate `d_eps*gamma/(2(1-alpha))`.
///
/// Useful above roughly `alpha = 0.75`, where the achieved fraction
/// `dFV(v_alpha)/dFV(inf)` stays within 5% of the requested `alpha`; the
/// deviation at 0.75 itself is about 4.9% and shrinks rapidly toward 1.
pub fn v_alpha_approx(e: &NormalizedSlse, d_eps: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(d_eps.is_finite() && d_eps > 0.0) {
        return Err(Error::invalid("v_alpha_approx", format!("d_eps = {d_eps} must be positive")));
    }
    Ok(d_eps * e.gamma / (2.0 * (1.0 - alpha)))
}

/// Single-element exact alpha-velocity.
///
/// Solves `dFV(v)/dFV(inf) = alpha`, which for one element reduces to
/// `(1 - exp(-x))/x = alpha` in `x = gamma*d_eps/v`; the root is found by
/// bracketed bisection to relative tolerance 1e-10 and mapped back through
/// `v = gamma*d_eps/x`.
pub fn v_alpha_exact(e: &NormalizedSlse, d_eps: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(d_eps.is_finite() && d_eps > 0.0) {
        return Err(Error::invalid("v_alpha_exact", format!("d_eps = {d_eps} must be positive")));
    }
    // (1 - exp(-x))/x falls from 1 toward 0, so alpha in (0, 1) always has a
    // root; solve in x where the problem is scale-free, then map back.
    let fraction_at = |x: f64| one_minus_exp_neg(x) / x;
    let x0 = 2.0 * (1.0 - alpha); // inverse of the small-x expansion 1 - x/2
    let x = solve_decreasing(fraction_at, x0, alpha)?;
    Ok(e.gamma * d_eps / x)
}

/// Dimensionless parameters of one element relative to a control stiffness.
pub fn normalize_params(p: &SlseParams, k1_control: f64) -> Result<NormalizedSlse> {
    if !(k1_control.is_finite() && k1_control > 0.0) {
        return Err(Error::invalid(
            "normalize_params",
            format!("k1_control = {k1_control} must be finite and positive"),
        ));
    }
    NormalizedSlse::new(p.k2 / p.k1, p.k2 / p.eta, p.k1 / k1_control)
}

/// Inverse of [`normalize_params`]: `k1 = beta*k1_control`, `k2 = kappa*k1`,
/// `eta = k2/gamma`.
pub fn denormalize_params(e: &NormalizedSlse, k1_control: f64) -> Result<SlseParams> {
    if !(k1_control.is_finite() && k1_control > 0.0) {
        return Err(Error::invalid(
            "denormalize_params",
            format!("k1_control = {k1_control} must be finite and positive"),
        ));
    }
    let k1 = e.beta * k1_control;
    let k2 = e.kappa * k1;
    SlseParams::new(k1, k2, k2 / e.gamma)
}

// === Root solving ===

/// Bisection for `f(v) = target` where `f` is strictly increasing.
///
/// Expands a bracket around `seed` geometrically, then bisects to
/// `V_ALPHA_REL_TOL` relative width.
fn solve_increasing(f: impl Fn(f64) -> f64, seed: f64, target: f64) -> Result<f64> {
    let seed = if seed.is_finite() && seed > 0.0 { seed } else { 1.0 };
    let (mut lo, mut hi) = (seed, seed);
    let mut expansions = 0;
    while f(lo) >= target {
        lo /= 4.0;
        expansions += 1;
        if expansions > 600 || lo == 0.0 {
            return Err(Error::BracketingFailed {
                message: format!("no lower bracket below target {target}"),
            });
        }
    }
    expansions = 0;
    while f(hi) <= target {
        hi *= 4.0;
        expansions += 1;
        if expansions > 600 || !hi.is_finite() {
            return Err(Error::BracketingFailed {
                message: format!("no upper bracket above target {target}"),
            });
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= V_ALPHA_REL_TOL * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisection for `f(x) = target` where `f` is strictly decreasing.
fn solve_decreasing(f: impl Fn(f64) -> f64, seed: f64, target: f64) -> Result<f64> {
    solve_increasing(|x| -f(x), seed, -target)
}
