//! Force-trace analysis: turns a sampled session into a force-velocity curve.
//!
//! The chain is segmentation -> velocity fitting -> point extraction ->
//! aggregation:
//!
//! * ramps are located from the commanded schedule, each window ending at the
//!   first sample whose extension reaches the commanded target;
//! * the realized velocity is the slope of a flat-ramp-flat piecewise-linear
//!   least-squares fit of extension vs. time around the window;
//! * the baseline force F0 is the mean over the two seconds before ramp
//!   onset, the peak is the force at the target-reach sample, and the point
//!   is FV = peak/F0 at normalized shortening velocity v = -slope/L_p;
//! * repetitions are aggregated into mean and sample standard deviation per
//!   (pressure, nominal speed, direction).
//!
//! Independently sampled pressure logs can be resampled onto the machine
//! clock, with the offset either supplied or estimated from the
//! pressurization step edge.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{ramp_schedule, strain_from_extension, ProtocolConfig};
use crate::sim::ForceTrace;

/// Baseline window length before ramp onset [s].
const F0_WINDOW_S: f64 = 2.0;
/// Histories shorter than this make the baseline unreliable.
const F0_MIN_HISTORY_S: f64 = 0.5;
/// Extension tolerance for target-reach detection [mm].
const TARGET_TOL_MM: f64 = 1e-9;

/// Which way a measurement ramp moves the actuator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RampDirection {
    Extend,
    Shorten,
}

impl RampDirection {
    fn from_velocity(v: f64) -> Self {
        if v >= 0.0 {
            RampDirection::Extend
        } else {
            RampDirection::Shorten
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RampDirection::Extend => "extend",
            RampDirection::Shorten => "shorten",
        }
    }
}

impl std::fmt::Display for RampDirection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One located measurement ramp inside a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampWindow {
    /// Position in the commanded schedule; the point's source id.
    pub id: usize,
    pub start_index: usize,
    pub start_time: f64,
    /// First sample at which the extension reaches the commanded target.
    pub target_index: usize,
    pub target_time: f64,
    /// Commanded signed machine velocity [mm/s].
    pub nominal_velocity_mm_s: f64,
    /// Fitted signed machine velocity [mm/s].
    pub fitted_velocity_mm_s: f64,
    pub direction: RampDirection,
    /// RMS extension residual of the piecewise-linear fit [mm].
    pub fit_residual_mm: f64,
    pub repetition: usize,
}

/// One extracted force-velocity point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FvPoint {
    /// Normalized shortening velocity [1/s]: minus the extension rate over
    /// the pressurized rest length.
    pub v: f64,
    /// Peak force over baseline force.
    pub fv: f64,
    pub pressure_psi: f64,
    /// Id of the ramp window the point came from.
    pub source_ramp: usize,
}

/// Aggregated repetitions at one (pressure, nominal speed, direction) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FvGroup {
    pub pressure_psi: f64,
    /// Commanded speed magnitude [mm/s].
    pub nominal_speed_mm_s: f64,
    pub direction: RampDirection,
    /// Mean normalized shortening velocity [1/s].
    pub v_mean: f64,
    pub fv_mean: f64,
    /// Sample standard deviation (n-1 denominator); 0 for a single point.
    pub fv_std: f64,
    pub n: usize,
}

/// An experimental force-velocity curve with its normalization context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FvCurve {
    pub actuator_id: String,
    pub pressure_psi: f64,
    /// Ramp strain travel.
    pub d_eps: f64,
    /// Pre-strain of the start position.
    pub eps0: f64,
    pub rest_length_unpressurized_mm: f64,
    pub rest_length_pressurized_mm: f64,
    /// Raw per-ramp points, in schedule order.
    pub points: Vec<FvPoint>,
    /// One aggregate per (pressure, nominal speed, direction).
    pub groups: Vec<FvGroup>,
}

/// Locates every measurement ramp of the commanded protocol in a trace.
///
/// Returns one window per fast ramp, in schedule order; holds, slow returns,
/// and preconditioning are never windowed. A trace in which any commanded
/// ramp cannot be located (truncated data, extension never reaching its
/// target) is rejected rather than partially analyzed.
pub fn segment_ramps(trace: &ForceTrace, cfg: &ProtocolConfig) -> Result<Vec<RampWindow>> {
    if trace.is_empty() {
        return Err(Error::invalid("segment_ramps", "trace has no samples"));
    }
    let schedule = ramp_schedule(cfg)?;
    let expected = schedule.len();

    let mut located = Vec::with_capacity(expected);
    let mut missing: Vec<f64> = Vec::new();
    for ramp in &schedule {
        let Some(start_index) = trace.index_at_or_after(ramp.start_time - 1e-9) else {
            missing.push(ramp.start_time);
            continue;
        };
        let sign = ramp.velocity_mm_s.signum();
        let target_mm = sign * cfg.extension_mm;
        // The extension must reach its target during the ramp or the hold
        // right after it; searching further would leak into the return.
        let search_end = ramp.start_time + ramp.duration + cfg.hold_s + 1e-9;
        let target_index = trace.samples[start_index..]
            .iter()
            .take_while(|s| s.time <= search_end)
            .position(|s| {
                if sign > 0.0 {
                    s.extension_mm >= target_mm - TARGET_TOL_MM
                } else {
                    s.extension_mm <= target_mm + TARGET_TOL_MM
                }
            })
            .map(|p| start_index + p);
        match target_index {
            Some(target_index) => located.push((ramp, start_index, target_index)),
            None => missing.push(ramp.start_time),
        }
    }
    if !missing.is_empty() {
        let times: Vec<String> = missing.iter().map(|t| format!("{t:.3}")).collect();
        return Err(Error::RampCountMismatch {
            expected,
            found: expected - missing.len(),
            detail: format!("no target crossing for ramps commanded at t = [{}] s", times.join(", ")),
        });
    }

    let mut windows = Vec::with_capacity(expected);
    for (id, (ramp, start_index, target_index)) in located.into_iter().enumerate() {
        let start_time = trace.samples[start_index].time;
        let target_time = trace.samples[target_index].time;
        // Keep the fit's right flat inside the post-ramp hold.
        let right_limit = ramp.start_time + ramp.duration + cfg.hold_s;
        let fit = fit_piecewise(trace, start_time, target_time, Some(right_limit))?;
        let direction = RampDirection::from_velocity(ramp.velocity_mm_s);
        if fit.slope.signum() != ramp.velocity_mm_s.signum() {
            return Err(Error::invalid(
                "segment_ramps",
                format!(
                    "fitted velocity {} mm/s contradicts the commanded direction at t = {start_time:.3} s",
                    fit.slope
                ),
            ));
        }
        windows.push(RampWindow {
            id,
            start_index,
            start_time,
            target_index,
            target_time,
            nominal_velocity_mm_s: ramp.velocity_mm_s,
            fitted_velocity_mm_s: fit.slope,
            direction,
            fit_residual_mm: fit.rms_residual,
            repetition: ramp.repetition,
        });
    }
    Ok(windows)
}

struct PiecewiseFit {
    slope: f64,
    rms_residual: f64,
}

/// Least squares of `x0` and `slope` for fixed breakpoints; returns
/// (x0, slope, sse), or None when the ramp basis has no variance.
fn flat_ramp_flat_ls(samples: &[(f64, f64)], t1: f64, t2: f64) -> Option<(f64, f64, f64)> {
    let n = samples.len() as f64;
    let mut s_phi = 0.0;
    let mut s_phi2 = 0.0;
    let mut s_x = 0.0;
    let mut s_phix = 0.0;
    for &(t, x) in samples {
        let phi = t.clamp(t1, t2) - t1;
        s_phi += phi;
        s_phi2 += phi * phi;
        s_x += x;
        s_phix += phi * x;
    }
    let det = n * s_phi2 - s_phi * s_phi;
    if det <= 1e-12 * n * s_phi2.max(1e-300) {
        return None;
    }
    let slope = (n * s_phix - s_phi * s_x) / det;
    let x0 = (s_x - slope * s_phi) / n;
    let mut sse = 0.0;
    for &(t, x) in samples {
        let r = x - (x0 + slope * (t.clamp(t1, t2) - t1));
        sse += r * r;
    }
    Some((x0, slope, sse))
}

/// Golden-section minimization on [a, b]; assumes a roughly unimodal
/// objective and returns the best abscissa probed.
fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}

/// Fits a flat-ramp-flat extension model around a ramp window.
///
/// The window spans up to 2 s of pre-onset history and a quarter of the ramp
/// duration past target reach (clamped to `right_limit` when the caller knows
/// where the following hold ends). Breakpoints start at the window edges and
/// are refined by coordinate descent; the refinement is kept only if it
/// strictly lowers the residual.
fn fit_piecewise(
    trace: &ForceTrace,
    start_time: f64,
    target_time: f64,
    right_limit: Option<f64>,
) -> Result<PiecewiseFit> {
    let duration = target_time - start_time;
    if !(duration > 0.0) {
        return Err(Error::invalid("fit_ramp_velocity", "window has no duration"));
    }
    let left = start_time - F0_WINDOW_S.min(start_time - trace.samples[0].time).max(0.0);
    let mut right = target_time + 0.25 * duration;
    if let Some(limit) = right_limit {
        right = right.min(limit);
    }
    let samples: Vec<(f64, f64)> = trace
        .samples
        .iter()
        .filter(|s| s.time >= left - 1e-12 && s.time <= right + 1e-12)
        .map(|s| (s.time, s.extension_mm))
        .collect();
    if samples.len() < 4 {
        return Err(Error::invalid(
            "fit_ramp_velocity",
            format!("window holds {} samples; need at least 4", samples.len()),
        ));
    }
    let mean_x = samples.iter().map(|&(_, x)| x).sum::<f64>() / samples.len() as f64;
    let sxx: f64 = samples.iter().map(|&(_, x)| (x - mean_x).powi(2)).sum();
    let scale = samples.iter().map(|&(_, x)| x.abs()).fold(0.0_f64, f64::max).max(1e-9);
    if sxx <= (1e-10 * scale).powi(2) * samples.len() as f64 {
        return Err(Error::DegenerateFit {
            message: "extension has no variance over the ramp window".into(),
        });
    }

    let init = flat_ramp_flat_ls(&samples, start_time, target_time).ok_or_else(|| {
        Error::DegenerateFit {
            message: "ramp basis is degenerate over the window".into(),
        }
    })?;

    // Coordinate descent on the breakpoints, each confined near its
    // commanded position so the refinement cannot wander onto a neighbouring
    // profile feature.
    let span = 0.4 * duration;
    let (w_lo, w_hi) = (samples[0].0, samples[samples.len() - 1].0);
    let mut t1 = start_time;
    let mut t2 = target_time;
    for _ in 0..3 {
        let t2_now = t2;
        t1 = golden_min(
            |t| flat_ramp_flat_ls(&samples, t, t2_now).map_or(f64::INFINITY, |(_, _, e)| e),
            w_lo.max(start_time - span),
            (start_time + span).min(t2_now - 1e-6 * duration),
        );
        let t1_now = t1;
        t2 = golden_min(
            |t| flat_ramp_flat_ls(&samples, t1_now, t).map_or(f64::INFINITY, |(_, _, e)| e),
            (target_time - span).max(t1_now + 1e-6 * duration),
            w_hi.min(target_time + span),
        );
    }
    let refined = flat_ramp_flat_ls(&samples, t1, t2);
    let (_, slope, sse) = match refined {
        Some(r) if r.2 < init.2 => r,
        _ => init,
    };
    Ok(PiecewiseFit {
        slope,
        rms_residual: (sse / samples.len() as f64).sqrt(),
    })
}

/// Realized machine velocity of one located ramp [mm/s], from the
/// flat-ramp-flat least-squares fit.
pub fn fit_ramp_velocity(trace: &ForceTrace, window: &RampWindow) -> Result<f64> {
    fit_piecewise(trace, window.start_time, window.target_time, None).map(|f| f.slope)
}

/// Extracts the force-velocity point of one located ramp.
///
/// F0 is the mean force over the 2 s before onset (shorter histories down to
/// 0.5 s are accepted); the peak is the force at the target-reach sample,
/// never later.
pub fn extract_fv_point(
    trace: &ForceTrace,
    window: &RampWindow,
    rest_length_pressurized_mm: f64,
) -> Result<FvPoint> {
    if window.fitted_velocity_mm_s == 0.0 {
        return Err(Error::invalid("extract_fv_point", "window has zero fitted velocity"));
    }
    if !(rest_length_pressurized_mm.is_finite() && rest_length_pressurized_mm > 0.0) {
        return Err(Error::invalid("extract_fv_point", "rest length must be positive"));
    }
    let history = window.start_time - trace.samples[0].time;
    if history < F0_MIN_HISTORY_S {
        return Err(Error::InsufficientHistory {
            available_s: history,
            required_s: F0_MIN_HISTORY_S,
        });
    }
    let lo = window.start_time - F0_WINDOW_S.min(history);
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in &trace.samples {
        if s.time >= lo - 1e-12 && s.time < window.start_time {
            sum += s.force;
            n += 1;
        }
        if s.time >= window.start_time {
            break;
        }
    }
    if n == 0 {
        return Err(Error::InsufficientHistory {
            available_s: 0.0,
            required_s: F0_MIN_HISTORY_S,
        });
    }
    let f0 = sum / n as f64;
    if !(f0 > 0.0) {
        return Err(Error::NonPositiveBaseline { f0 });
    }
    let peak = trace.samples[window.target_index].force;
    Ok(FvPoint {
        v: -window.fitted_velocity_mm_s / rest_length_pressurized_mm,
        fv: peak / f0,
        pressure_psi: trace.meta.pressure_psi,
        source_ramp: window.id,
    })
}

/// Runs the full analysis on one trace: segmentation, extraction, and
/// per-(speed, direction) aggregation.
pub fn build_fv_curve(trace: &ForceTrace, cfg: &ProtocolConfig) -> Result<FvCurve> {
    if (trace.meta.pressure_psi - cfg.pressure_psi).abs() > 1e-9 {
        return Err(Error::invalid(
            "build_fv_curve",
            format!(
                "trace is at {} psi but the protocol says {} psi",
                trace.meta.pressure_psi, cfg.pressure_psi
            ),
        ));
    }
    let lp = trace.meta.rest_length_pressurized_mm;
    let windows = segment_ramps(trace, cfg)?;
    let points: Vec<FvPoint> = windows
        .iter()
        .map(|w| extract_fv_point(trace, w, lp))
        .collect::<Result<_>>()?;

    let mut groups = Vec::with_capacity(2 * cfg.velocities_mm_s.len());
    for &speed in &cfg.velocities_mm_s {
        for direction in [RampDirection::Extend, RampDirection::Shorten] {
            let cell: Vec<&FvPoint> = windows
                .iter()
                .zip(&points)
                .filter(|(w, _)| w.direction == direction && w.nominal_velocity_mm_s.abs() == speed)
                .map(|(_, p)| p)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let n = cell.len();
            let fv_mean = cell.iter().map(|p| p.fv).sum::<f64>() / n as f64;
            let v_mean = cell.iter().map(|p| p.v).sum::<f64>() / n as f64;
            let fv_std = if n > 1 {
                (cell.iter().map(|p| (p.fv - fv_mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            groups.push(FvGroup {
                pressure_psi: cfg.pressure_psi,
                nominal_speed_mm_s: speed,
                direction,
                v_mean,
                fv_mean,
                fv_std,
                n,
            });
        }
    }

    Ok(FvCurve {
        actuator_id: trace.meta.actuator_id.clone(),
        pressure_psi: cfg.pressure_psi,
        d_eps: strain_from_extension(cfg.extension_mm, lp)?,
        eps0: trace.meta.machine_zero_strain(),
        rest_length_unpressurized_mm: trace.meta.rest_length_unpressurized_mm,
        rest_length_pressurized_mm: lp,
        points,
        groups,
    })
}

/// Time of the half-amplitude crossing of a step-like series, linearly
/// interpolated; None when the series has no amplitude to speak of.
fn half_crossing_time(series: &[(f64, f64)]) -> Option<f64> {
    let (_, first) = *series.first()?;
    let (_, last) = *series.last()?;
    let amp = last - first;
    if amp.abs() <= 1e-9 * (first.abs() + last.abs() + 1e-12) {
        return None;
    }
    let half = first + 0.5 * amp;
    let crossed = |y: f64| {
        if amp > 0.0 {
            y >= half
        } else {
            y <= half
        }
    };
    let i = series.iter().position(|&(_, y)| crossed(y))?;
    if i == 0 {
        return Some(series[0].0);
    }
    let (t0, y0) = series[i - 1];
    let (t1, y1) = series[i];
    if y1 == y0 {
        return Some(t1);
    }
    Some(t0 + (half - y0) / (y1 - y0) * (t1 - t0))
}

/// Estimates the clock offset between a machine trace and a pressure log by
/// aligning their step edges: `machine_time = log_time + offset`.
///
/// A constant pressure log needs no alignment and yields offset 0.
pub fn estimate_offset(machine: &ForceTrace, pressure_log: &[(f64, f64)]) -> Result<f64> {
    let Some(p_edge) = half_crossing_time(pressure_log) else {
        return Ok(0.0);
    };
    let force_series: Vec<(f64, f64)> = machine.samples.iter().map(|s| (s.time, s.force)).collect();
    let Some(m_edge) = half_crossing_time(&force_series) else {
        return Err(Error::invalid(
            "synchronize",
            "machine force has no step edge to align against; supply an explicit offset",
        ));
    };
    Ok(m_edge - p_edge)
}

/// Resamples an independently recorded pressure log onto the machine clock
/// and attaches it to the trace's pressure column.
///
/// `offset` maps log time to machine time (`machine = log + offset`); when
/// absent it is estimated with [`estimate_offset`]. The log is linearly
/// interpolated and held constant beyond its ends.
pub fn synchronize(
    machine: &ForceTrace,
    pressure_log: &[(f64, f64)],
    offset: Option<f64>,
) -> Result<ForceTrace> {
    if machine.is_empty() {
        return Err(Error::invalid("synchronize", "machine trace has no samples"));
    }
    if pressure_log.is_empty() {
        return Err(Error::invalid("synchronize", "pressure log is empty"));
    }
    for w in pressure_log.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::invalid("synchronize", "pressure log times must strictly increase"));
        }
    }
    let offset = match offset {
        Some(o) if o.is_finite() => o,
        Some(o) => return Err(Error::invalid("synchronize", format!("offset {o} must be finite"))),
        None => estimate_offset(machine, pressure_log)?,
    };

    let log_lo = pressure_log[0].0 + offset;
    let log_hi = pressure_log[pressure_log.len() - 1].0 + offset;
    let m_lo = machine.samples[0].time;
    let m_hi = machine.samples[machine.samples.len() - 1].time;
    if log_hi < m_lo || log_lo > m_hi {
        return Err(Error::NoTimeOverlap {
            message: format!(
                "pressure log covers [{log_lo:.3}, {log_hi:.3}] s on the machine clock, \
                 trace covers [{m_lo:.3}, {m_hi:.3}] s"
            ),
        });
    }

    let interp = |t_machine: f64| -> f64 {
        let t = t_machine - offset;
        match pressure_log.binary_search_by(|&(lt, _)| lt.partial_cmp(&t).expect("finite times")) {
            Ok(i) => pressure_log[i].1,
            Err(0) => pressure_log[0].1,
            Err(i) if i == pressure_log.len() => pressure_log[i - 1].1,
            Err(i) => {
                let (t0, p0) = pressure_log[i - 1];
                let (t1, p1) = pressure_log[i];
                p0 + (p1 - p0) * (t - t0) / (t1 - t0)
            }
        }
    };

    let samples = machine
        .samples
        .iter()
        .map(|s| crate::sim::TraceSample {
            pressure_psi: Some(interp(s.time)),
            ..*s
        })
        .collect();
    ForceTrace::new(machine.meta.clone(), samples)
}
