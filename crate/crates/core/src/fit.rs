//! Parameter identification from force-velocity curves.
//!
//! Stage 1 fits a single element's (kappa, gamma) to a plain actuator's
//! curve. Stage 2 fits a sheath's (kappa, gamma, beta) to a sheathed
//! actuator's curve with the control element frozen at its stage-1 values.
//!
//! The minimizer is damped least squares (Levenberg-Marquardt) on
//! log-parameters, which keeps every parameter positive without constraint
//! machinery, with analytic Jacobians of the curve model. Initial guesses
//! come from the curve itself: the fastest points approximate the viscous
//! asymptote (giving kappa), and an intermediate speed's achieved fraction
//! of that asymptote inverts to a rate constant (giving gamma). A small
//! deterministic multistart grid around the data-driven guess guards
//! against stiff corners of the parameter space.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::FvCurve;
use crate::error::{Error, Result};
use crate::model::{NormalizedSlse, SlseChain};

/// Relative eigenvalue cutoff for the curvature pseudoinverse.
const PINV_RCOND: f64 = 1e-12;
/// Jacobian columns below this fraction of the largest column norm carry no
/// information about their parameter.
const UNIDENTIFIABLE_COL_FRACTION: f64 = 1e-8;
/// A parameter with at least this fraction of its axis inside the curvature
/// null space is flagged degenerate.
const NULL_SPACE_FRACTION: f64 = 0.3;
/// A confidence proxy this many times the parameter marks it degenerate.
const WIDE_PROXY_FACTOR: f64 = 10.0;
/// log-parameters are confined to exp(+-60) to keep arithmetic finite.
const LOG_BOUND: f64 = 60.0;

/// Optimizer knobs; the defaults match the intended analysis settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative SSE decrease below which an accepted step ends the fit.
    pub rel_tolerance: f64,
    /// Fit per-group mean points (weighted by multiplicity) instead of
    /// pooled raw points.
    pub use_group_means: bool,
    /// Retry from a deterministic grid around the initial guess when the
    /// first run is unconvincing.
    pub multistart: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            rel_tolerance: 1e-10,
            use_group_means: false,
            multistart: true,
        }
    }
}

/// One fitting datum: a normalized ramp velocity, the measured FV value,
/// and a least-squares weight (multiplicity for group means).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitObservation {
    /// Signed normalized ramp velocity [1/s] (positive extends).
    pub v_hat: f64,
    pub fv: f64,
    pub weight: f64,
}

/// A prepared least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub observations: Vec<FitObservation>,
    /// Ramp strain travel of the underlying experiments.
    pub d_eps: f64,
    /// Pre-strain of the start position.
    pub eps0: f64,
    /// Stage-2 only: the control element, never modified by the fit.
    pub frozen_control: Option<NormalizedSlse>,
}

impl FitProblem {
    /// Builds a problem from an extracted curve, pooling raw points or
    /// taking multiplicity-weighted group means per `use_group_means`.
    pub fn from_curve(curve: &FvCurve, use_group_means: bool) -> Result<Self> {
        let observations: Vec<FitObservation> = if use_group_means {
            curve
                .groups
                .iter()
                .map(|g| FitObservation {
                    v_hat: -g.v_mean,
                    fv: g.fv_mean,
                    weight: g.n as f64,
                })
                .collect()
        } else {
            curve
                .points
                .iter()
                .map(|p| FitObservation {
                    v_hat: -p.v,
                    fv: p.fv,
                    weight: 1.0,
                })
                .collect()
        };
        FitProblem::from_observations(observations, curve.d_eps, curve.eps0)
    }

    /// Builds a problem from raw observations (synthetic data, tests).
    pub fn from_observations(
        observations: Vec<FitObservation>,
        d_eps: f64,
        eps0: f64,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::invalid("FitProblem", "no observations"));
        }
        for (i, o) in observations.iter().enumerate() {
            if !(o.v_hat.is_finite() && o.v_hat != 0.0) {
                return Err(Error::invalid(
                    "FitProblem",
                    format!("observation {i} has velocity {}; need finite nonzero", o.v_hat),
                ));
            }
            if !o.fv.is_finite() {
                return Err(Error::invalid("FitProblem", format!("observation {i} has non-finite FV")));
            }
            if !(o.weight.is_finite() && o.weight > 0.0) {
                return Err(Error::invalid(
                    "FitProblem",
                    format!("observation {i} has weight {}; need positive", o.weight),
                ));
            }
        }
        if !(d_eps.is_finite() && d_eps > 0.0) {
            return Err(Error::invalid("FitProblem", "d_eps must be positive"));
        }
        if !(eps0.is_finite() && eps0 > 0.0) {
            return Err(Error::invalid("FitProblem", "eps0 must be positive"));
        }
        Ok(FitProblem {
            observations,
            d_eps,
            eps0,
            frozen_control: None,
        })
    }

    /// Attaches frozen stage-1 control parameters, turning this into a
    /// stage-2 problem.
    pub fn with_frozen_control(mut self, control: NormalizedSlse) -> Self {
        self.frozen_control = Some(control);
        self
    }

    fn distinct_velocity_count(&self) -> usize {
        let mut vs: Vec<f64> = self.observations.iter().map(|o| o.v_hat).collect();
        vs.sort_by(|a, b| a.partial_cmp(b).expect("finite velocities"));
        vs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()));
        vs.len()
    }
}

/// Outcome of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Fitted element: the control itself in stage 1 (beta = 1), the sheath
    /// in stage 2.
    pub element: NormalizedSlse,
    /// Stage-2 only: the control parameters the fit held fixed, returned
    /// exactly as supplied.
    pub frozen_control: Option<NormalizedSlse>,
    /// Weighted residual sum of squares at the solution.
    pub sse: f64,
    pub r_squared: f64,
    /// Accepted optimizer steps.
    pub iterations: usize,
    /// False when the iteration budget or damping ran out first; the best
    /// parameters found are still returned.
    pub converged: bool,
    /// Curvature-based standard error per fitted parameter, in parameter
    /// units, ordered (kappa, gamma[, beta]).
    pub std_errors: Vec<f64>,
    /// Per-parameter degeneracy flags, same order: the data carries no
    /// information about the parameter (zero Jacobian column) or the
    /// confidence proxy dwarfs the value itself.
    pub degenerate: Vec<bool>,
    /// SSE after initialization and after every accepted step.
    pub sse_history: Vec<f64>,
}

impl FitResult {
    /// The fitted chain: a lone control in stage 1, control plus sheath in
    /// stage 2.
    pub fn chain(&self) -> Result<SlseChain> {
        match &self.frozen_control {
            None => SlseChain::single(self.element),
            Some(c) => SlseChain::control_and_sheath(*c, self.element),
        }
    }
}

/// `(1 - exp(-x))/x` and `exp(-x) - (1 - exp(-x))/x`, series-switched near
/// zero; the pair the curve model and its gamma-derivative are built from.
fn ramp_shape(x: f64) -> (f64, f64) {
    if x < 1e-4 {
        let g = 1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0;
        let d = -x / 2.0 + x * x / 3.0 - x * x * x / 8.0;
        (g, d)
    } else {
        let g = -(-x).exp_m1() / x;
        (g, (-x).exp() - g)
    }
}

/// Curve model and analytic gradient with respect to log-parameters.
struct CurveModel {
    d_eps: f64,
    eps0: f64,
    frozen: Option<NormalizedSlse>,
}

impl CurveModel {
    fn arity(&self) -> usize {
        if self.frozen.is_some() {
            3
        } else {
            2
        }
    }

    /// Element curve offset from its slow-side limit: K*g(x) with
    /// K = sign(v)*kappa*d_eps/eps0 and x = gamma*d_eps/|v|.
    fn element_dfv(&self, kappa: f64, gamma: f64, v_hat: f64) -> (f64, f64) {
        let k = v_hat.signum() * kappa * self.d_eps / self.eps0;
        let x = gamma * self.d_eps / v_hat.abs();
        let (g, d) = ramp_shape(x);
        (k * g, k * d) // (dFV, d dFV / d ln gamma)
    }

    /// FV value and gradient d FV / d ln theta at one velocity.
    fn fv_and_grad(&self, theta: &[f64], v_hat: f64) -> (f64, [f64; 3]) {
        let offset = 1.0 + v_hat.signum() * self.d_eps / self.eps0;
        match self.frozen {
            None => {
                let (dfv, dgamma) = self.element_dfv(theta[0], theta[1], v_hat);
                (offset + dfv, [dfv, dgamma, 0.0])
            }
            Some(control) => {
                let beta = theta[2];
                let wc = 1.0 / (1.0 + beta);
                let ws = beta * wc;
                let (dfv_c, _) = self.element_dfv(control.kappa, control.gamma, v_hat);
                let (dfv_s, dgamma_s) = self.element_dfv(theta[0], theta[1], v_hat);
                let fv = offset + wc * dfv_c + ws * dfv_s;
                let dbeta = beta * (dfv_s - dfv_c) / ((1.0 + beta) * (1.0 + beta));
                (fv, [ws * dfv_s, ws * dgamma_s, dbeta])
            }
        }
    }

    fn fv(&self, theta: &[f64], v_hat: f64) -> f64 {
        self.fv_and_grad(theta, v_hat).0
    }

    fn sse(&self, theta: &[f64], obs: &[FitObservation]) -> f64 {
        obs.iter()
            .map(|o| {
                let r = self.fv(theta, o.v_hat) - o.fv;
                o.weight * r * r
            })
            .sum()
    }
}

/// Data-driven starting values for a single element.
///
/// The fastest points approximate the viscous asymptote, giving kappa; the
/// achieved fraction of that asymptote at an intermediate speed (closest to
/// 0.4x the fastest) inverts through the half-saturation approximation to a
/// rate-constant guess for gamma.
fn init_from_observations(obs: &[FitObservation], d_eps: f64, eps0: f64) -> Result<(f64, f64)> {
    let v_max = obs.iter().map(|o| o.v_hat.abs()).fold(0.0_f64, f64::max);
    let fast: Vec<&FitObservation> =
        obs.iter().filter(|o| o.v_hat.abs() >= 0.9 * v_max).collect();
    let v_mid_target = 0.4 * v_max;
    let v_mid = obs
        .iter()
        .map(|o| o.v_hat.abs())
        .filter(|v| *v < 0.9 * v_max)
        .min_by(|a, b| {
            (a - v_mid_target)
                .abs()
                .partial_cmp(&(b - v_mid_target).abs())
                .expect("finite velocities")
        })
        .ok_or_else(|| {
            Error::invalid(
                "init_control",
                "need at least two distinct speeds to initialize (asymptote and knee)",
            )
        })?;
    let mid: Vec<&FitObservation> = obs
        .iter()
        .filter(|o| (o.v_hat.abs() - v_mid).abs() <= 0.1 * v_mid)
        .collect();

    let mean_abs_dfv = |set: &[&FitObservation]| {
        set.iter()
            .map(|o| (o.fv - 1.0 - o.v_hat.signum() * d_eps / eps0).abs())
            .sum::<f64>()
            / set.len() as f64
    };
    let dfv_fast = mean_abs_dfv(&fast);
    let dfv_mid = mean_abs_dfv(&mid);

    let kappa0 = (dfv_fast * eps0 / d_eps).max(1e-3);
    let alpha = (dfv_mid / dfv_fast.max(1e-300)).clamp(0.05, 0.995);
    let gamma0 = (2.0 * (1.0 - alpha) * v_mid / d_eps).max(1e-6);
    Ok((kappa0, gamma0))
}

/// Starting values for a stage-1 fit, from the curve's own shape.
pub fn init_control(curve: &FvCurve, d_eps: f64, eps0: f64) -> Result<(f64, f64)> {
    let problem = FitProblem::from_curve(curve, false)?;
    init_from_observations(&problem.observations, d_eps, eps0)
}

struct LmRun {
    theta: Vec<f64>,
    sse: f64,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

/// Log-space damped least squares from one starting point. Only
/// SSE-decreasing steps are accepted; `essentially_zero` short-circuits
/// perfect fits.
fn run_lm(
    model: &CurveModel,
    obs: &[FitObservation],
    theta0: &[f64],
    opts: &FitOptions,
    essentially_zero: f64,
) -> LmRun {
    let n = model.arity();
    let m = obs.len();
    let mut u: Vec<f64> = theta0.iter().map(|t| t.ln().clamp(-LOG_BOUND, LOG_BOUND)).collect();
    let mut theta: Vec<f64> = u.iter().map(|x| x.exp()).collect();
    let mut sse = model.sse(&theta, obs);
    let mut history = vec![sse];
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = sse <= essentially_zero;

    while !converged && iterations < opts.max_iterations {
        // Residuals and Jacobian at the current point.
        let mut jac = DMatrix::zeros(m, n);
        let mut res = DVector::zeros(m);
        for (i, o) in obs.iter().enumerate() {
            let (fv, grad) = model.fv_and_grad(&theta, o.v_hat);
            let sw = o.weight.sqrt();
            res[i] = sw * (fv - o.fv);
            for k in 0..n {
                jac[(i, k)] = sw * grad[k];
            }
        }
        let jt = jac.transpose();
        let a = &jt * &jac;
        let g = &jt * &res;

        let max_diag = (0..n).map(|k| a[(k, k)]).fold(0.0_f64, f64::max);
        let floor = (1e-12 * max_diag).max(1e-300);

        // Inner damping loop: raise lambda until a step decreases the SSE.
        let mut stepped = false;
        while lambda <= 1e12 {
            let mut damped = a.clone();
            for k in 0..n {
                damped[(k, k)] += lambda * a[(k, k)].max(floor);
            }
            let Some(delta) = damped.lu().solve(&(-&g)) else {
                lambda *= 4.0;
                continue;
            };
            let u_new: Vec<f64> =
                u.iter().zip(delta.iter()).map(|(ui, d)| (ui + d).clamp(-LOG_BOUND, LOG_BOUND)).collect();
            let theta_new: Vec<f64> = u_new.iter().map(|x| x.exp()).collect();
            let sse_new = model.sse(&theta_new, obs);
            if sse_new < sse {
                let drop = sse - sse_new;
                u = u_new;
                theta = theta_new;
                sse = sse_new;
                history.push(sse);
                lambda = (lambda / 3.0).max(1e-12);
                iterations += 1;
                stepped = true;
                // A tiny drop only signals a minimum when damping is low
                // (the step was essentially undamped); at high damping it
                // just means the step was throttled.
                if sse <= essentially_zero
                    || (drop <= opts.rel_tolerance * sse.max(1e-300) && lambda <= 1e-3)
                {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !stepped {
            // No decreasing step exists at any damping. If even the least
            // damped step would barely move the parameters, the fit sits at
            // its floating-point resolution: converged. Otherwise the
            // landscape defeated the damping schedule: flagged.
            let mut probe = a.clone();
            for k in 0..n {
                probe[(k, k)] += 1e-12 * a[(k, k)].max(floor);
            }
            let tiny_step = probe
                .lu()
                .solve(&(-&g))
                .map(|d| d.amax() <= 1e-8)
                .unwrap_or(false);
            converged = sse <= essentially_zero || tiny_step;
            break;
        }
    }
    LmRun {
        theta,
        sse,
        iterations,
        converged,
        history,
    }
}

/// Runs LM from the data-driven start, falling back to a deterministic
/// factor grid around it when the first run is unconvincing.
fn minimize(
    model: &CurveModel,
    obs: &[FitObservation],
    theta0: &[f64],
    opts: &FitOptions,
) -> LmRun {
    // Comfortably above the double-precision residual floor (about 1e-31
    // for unit-scale values) yet far below any attainable noisy SSE, so
    // only exactly-realizable fits short-circuit here. Kept tight because
    // ill-conditioned curves need the last few orders of SSE descent to
    // pin their flat parameter combination.
    let sse_scale: f64 = obs.iter().map(|o| o.weight * o.fv * o.fv).sum();
    let essentially_zero = (1e-26 * sse_scale).max(1e-300);
    let mut best = run_lm(model, obs, theta0, opts, essentially_zero);
    if !opts.multistart || (best.converged && best.sse <= essentially_zero) {
        return best;
    }
    for ka in [0.1, 1.0, 10.0] {
        for ga in [0.1, 1.0, 10.0] {
            if ka == 1.0 && ga == 1.0 {
                continue;
            }
            let mut start = theta0.to_vec();
            start[0] *= ka;
            start[1] *= ga;
            let run = run_lm(model, obs, &start, opts, essentially_zero);
            if run.sse < best.sse {
                best = run;
            }
        }
    }
    best
}

/// Coefficient of determination of model values against data values.
pub fn r_squared(model: &[f64], data: &[f64]) -> Result<f64> {
    if model.len() != data.len() {
        return Err(Error::invalid(
            "r_squared",
            format!("length mismatch: {} model vs {} data", model.len(), data.len()),
        ));
    }
    if data.len() < 2 {
        return Err(Error::invalid("r_squared", "need at least two values"));
    }
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    let ss_tot: f64 = data.iter().map(|d| (d - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::invalid("r_squared", "data has zero variance"));
    }
    let ss_res: f64 = model.iter().zip(data).map(|(m, d)| (m - d).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Weighted R-squared over a problem's observations at the fitted model.
fn weighted_r_squared(model: &CurveModel, theta: &[f64], obs: &[FitObservation]) -> f64 {
    let wsum: f64 = obs.iter().map(|o| o.weight).sum();
    let mean = obs.iter().map(|o| o.weight * o.fv).sum::<f64>() / wsum;
    let ss_tot: f64 = obs.iter().map(|o| o.weight * (o.fv - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return f64::NAN;
    }
    let ss_res = model.sse(theta, obs);
    1.0 - ss_res / ss_tot
}

/// Curvature-based standard errors and degeneracy flags at the solution.
fn diagnostics(
    model: &CurveModel,
    theta: &[f64],
    obs: &[FitObservation],
    sse: f64,
) -> (Vec<f64>, Vec<bool>) {
    let n = model.arity();
    let m = obs.len();
    let mut jac = DMatrix::zeros(m, n);
    for (i, o) in obs.iter().enumerate() {
        let (_, grad) = model.fv_and_grad(theta, o.v_hat);
        let sw = o.weight.sqrt();
        for k in 0..n {
            jac[(i, k)] = sw * grad[k];
        }
    }
    // A column is dead if it is negligible against the other columns OR
    // against the overall response scale; the latter catches the case where
    // a collapsed weight silences every sheath column at once.
    let response_scale = obs
        .iter()
        .map(|o| o.weight * o.fv * o.fv)
        .sum::<f64>()
        .sqrt();
    let col_norms: Vec<f64> = (0..n).map(|k| jac.column(k).norm()).collect();
    let max_norm = col_norms.iter().fold(0.0_f64, |a, &b| a.max(b));
    let scale = max_norm.max(response_scale).max(1e-300);
    let unidentifiable: Vec<bool> = col_norms
        .iter()
        .map(|&c| c <= UNIDENTIFIABLE_COL_FRACTION * scale)
        .collect();

    // Pseudoinverse of J'J through its eigenvalues; directions below the
    // cutoff contribute nothing (and stay flagged via the column norms).
    let a = jac.transpose() * &jac;
    let eig = a.symmetric_eigen();
    let lam_max = eig.eigenvalues.iter().fold(0.0_f64, |acc, &l| acc.max(l));
    let total_weight: f64 = obs.iter().map(|o| o.weight).sum();
    let dof = (total_weight - n as f64).max(1.0);
    let sigma2 = sse / dof;
    let mut std_errors = Vec::with_capacity(n);
    let mut null_fraction = vec![0.0_f64; n];
    for k in 0..n {
        let mut var_u = 0.0;
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors[(k, j)];
            if lam > PINV_RCOND * lam_max.max(1e-300) {
                var_u += v * v / lam;
            } else {
                // Fraction of this parameter's axis lost to flat curvature
                // directions; independent of the residual level, so it
                // catches degeneracy even on noiseless data.
                null_fraction[k] += v * v;
            }
        }
        std_errors.push(theta[k] * (sigma2 * var_u).sqrt());
    }
    let degenerate: Vec<bool> = (0..n)
        .map(|k| {
            unidentifiable[k]
                || null_fraction[k] >= NULL_SPACE_FRACTION
                || std_errors[k] > WIDE_PROXY_FACTOR * theta[k].abs()
        })
        .collect();
    (std_errors, degenerate)
}

fn finish(
    model: &CurveModel,
    run: LmRun,
    obs: &[FitObservation],
    frozen_control: Option<NormalizedSlse>,
) -> Result<FitResult> {
    let (std_errors, degenerate) = diagnostics(model, &run.theta, obs, run.sse);
    let element = match frozen_control {
        None => NormalizedSlse::control(run.theta[0], run.theta[1])?,
        Some(_) => NormalizedSlse::new(run.theta[0], run.theta[1], run.theta[2])?,
    };
    Ok(FitResult {
        element,
        frozen_control,
        sse: run.sse,
        r_squared: weighted_r_squared(model, &run.theta, obs),
        iterations: run.iterations,
        converged: run.converged,
        std_errors,
        degenerate,
        sse_history: run.history,
    })
}

/// Stage 1: fits (kappa, gamma) of a plain actuator.
///
/// Needs at least four distinct velocities. Non-convergence is reported in
/// the result's flag, not as an error.
pub fn fit_control(problem: &FitProblem, opts: &FitOptions) -> Result<FitResult> {
    if problem.frozen_control.is_some() {
        return Err(Error::invalid(
            "fit_control",
            "problem carries frozen control parameters; use fit_sheath",
        ));
    }
    if problem.distinct_velocity_count() < 4 {
        return Err(Error::invalid(
            "fit_control",
            format!(
                "need at least 4 distinct velocities, found {}",
                problem.distinct_velocity_count()
            ),
        ));
    }
    let model = CurveModel {
        d_eps: problem.d_eps,
        eps0: problem.eps0,
        frozen: None,
    };
    let (kappa0, gamma0) = init_from_observations(&problem.observations, problem.d_eps, problem.eps0)?;
    let run = minimize(&model, &problem.observations, &[kappa0, gamma0], opts);
    finish(&model, run, &problem.observations, None)
}

/// Stage 2: fits the sheath triple (kappa, gamma, beta) with the control
/// element frozen.
///
/// beta starts at 1; (kappa, gamma) start from the sheathed curve's own
/// shape. The frozen control is returned untouched in the result.
pub fn fit_sheath(problem: &FitProblem, opts: &FitOptions) -> Result<FitResult> {
    let Some(control) = problem.frozen_control else {
        return Err(Error::invalid(
            "fit_sheath",
            "stage 2 requires frozen control parameters",
        ));
    };
    if problem.distinct_velocity_count() < 4 {
        return Err(Error::invalid(
            "fit_sheath",
            format!(
                "need at least 4 distinct velocities, found {}",
                problem.distinct_velocity_count()
            ),
        ));
    }
    let model = CurveModel {
        d_eps: problem.d_eps,
        eps0: problem.eps0,
        frozen: Some(control),
    };
    let (kappa0, gamma0) = init_from_observations(&problem.observations, problem.d_eps, problem.eps0)?;
    let run = minimize(&model, &problem.observations, &[kappa0, gamma0, 1.0], opts);
    finish(&model, run, &problem.observations, Some(control))
}
