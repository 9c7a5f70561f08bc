//! Time-domain simulation of dimensional element chains under piecewise-linear
//! strain profiles: the virtual testing machine.
//!
//! Within a constant-rate segment the element dynamics are linear
//! time-invariant, so each series-branch strain has an exact update
//!
//! ```text
//! eps2(t+h) = (eps2(t) - r/gamma) * exp(-gamma*h) + r/gamma
//! ```
//!
//! with `gamma = k2/eta` and constant rate `r`. The integrator applies this
//! per sample step and has no truncation error for piecewise-constant rates,
//! which removes any stiffness concern when `gamma*dt` is large. Total force
//! is assembled per sample as `F = sum_i (k1_i*eps + k2_i*eps2_i)`.
//!
//! Traces are sampled on the uniform grid `k*dt` and additionally at every
//! segment boundary, so the exact end of each ramp is always present as a
//! sample; downstream target-reach detection depends on that.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SlseParams;

/// Grid points closer than this fraction of `dt` to a segment boundary are
/// merged into the boundary sample to keep sample times strictly increasing.
const BOUNDARY_MERGE_FRACTION: f64 = 1e-6;

/// One constant-rate piece of a strain schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSegment {
    /// Segment length [s], > 0.
    pub duration: f64,
    /// Strain rate over the segment [1/s]; 0 for holds.
    pub rate: f64,
}

/// Piecewise-linear strain-vs-time schedule.
///
/// Represented as an initial strain plus (duration, rate) segments, which
/// makes the trajectory continuous by construction: every segment starts at
/// the strain where the previous one ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainProfile {
    /// Strain at t = 0.
    pub start_strain: f64,
    /// Nominal sample period [s].
    pub dt: f64,
    /// Ordered segments; non-empty.
    pub segments: Vec<ProfileSegment>,
}

impl StrainProfile {
    pub fn new(start_strain: f64, dt: f64, segments: Vec<ProfileSegment>) -> Result<Self> {
        if !start_strain.is_finite() {
            return Err(Error::invalid("StrainProfile", "start_strain must be finite"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("StrainProfile", format!("dt = {dt} must be positive")));
        }
        if segments.is_empty() {
            return Err(Error::invalid("StrainProfile", "profile must contain at least one segment"));
        }
        for (i, s) in segments.iter().enumerate() {
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(Error::invalid(
                    "StrainProfile",
                    format!("segment {i} duration {} must be positive", s.duration),
                ));
            }
            if !s.rate.is_finite() {
                return Err(Error::invalid("StrainProfile", format!("segment {i} rate must be finite")));
            }
        }
        Ok(StrainProfile {
            start_strain,
            dt,
            segments,
        })
    }

    /// Rebuilds a profile from (time, strain) breakpoints, the profile CSV
    /// representation. Times must start at 0 and strictly increase.
    pub fn from_breakpoints(points: &[(f64, f64)], dt: f64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("StrainProfile", "need at least two breakpoints"));
        }
        if points[0].0 != 0.0 {
            return Err(Error::invalid(
                "StrainProfile",
                format!("breakpoints must start at t = 0, found {}", points[0].0),
            ));
        }
        let mut segments = Vec::with_capacity(points.len() - 1);
        for w in points.windows(2) {
            let (t0, s0) = w[0];
            let (t1, s1) = w[1];
            if !(t1.is_finite() && t1 > t0) {
                return Err(Error::invalid(
                    "StrainProfile",
                    format!("breakpoint times must strictly increase ({t0} -> {t1})"),
                ));
            }
            let duration = t1 - t0;
            segments.push(ProfileSegment {
                duration,
                rate: (s1 - s0) / duration,
            });
        }
        StrainProfile::new(points[0].1, dt, segments)
    }

    /// Total schedule duration [s].
    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Strain at the end of the schedule.
    pub fn end_strain(&self) -> f64 {
        self.start_strain + self.segments.iter().map(|s| s.duration * s.rate).sum::<f64>()
    }

    /// Segment boundary times including t = 0, cumulative.
    pub fn boundary_times(&self) -> Vec<f64> {
        let mut times = Vec::with_capacity(self.segments.len() + 1);
        let mut t = 0.0;
        times.push(t);
        for s in &self.segments {
            t += s.duration;
            times.push(t);
        }
        times
    }

    /// (time, strain) at every segment boundary; the profile CSV content.
    pub fn breakpoints(&self) -> Vec<(f64, f64)> {
        let mut points = Vec::with_capacity(self.segments.len() + 1);
        let mut t = 0.0;
        let mut strain = self.start_strain;
        points.push((t, strain));
        for s in &self.segments {
            t += s.duration;
            strain += s.duration * s.rate;
            points.push((t, strain));
        }
        points
    }

    /// Piecewise-linear strain evaluation; clamps beyond the schedule ends.
    pub fn strain_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.start_strain;
        }
        let mut t0 = 0.0;
        let mut strain = self.start_strain;
        for s in &self.segments {
            if t < t0 + s.duration {
                return strain + (t - t0) * s.rate;
            }
            t0 += s.duration;
            strain += s.duration * s.rate;
        }
        strain
    }
}

/// Simulator state: per-element series-branch strains plus the shared strain
/// and clock.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    /// Series-spring strain per element.
    pub eps2: Vec<f64>,
    /// Current total strain.
    pub strain: f64,
    /// Current time [s].
    pub time: f64,
}

impl ChainState {
    /// Steady state at a given strain: every series branch fully relaxed.
    pub fn steady(strain: f64, n_elements: usize) -> Self {
        ChainState {
            eps2: vec![0.0; n_elements],
            strain,
            time: 0.0,
        }
    }
}

/// Trace bookkeeping carried alongside the samples.
///
/// Lengths are in millimetres. The pressurized rest length is the strain and
/// velocity normalization length; the unpressurized rest length anchors the
/// machine's zero-extension position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub actuator_id: String,
    pub rest_length_unpressurized_mm: f64,
    pub rest_length_pressurized_mm: f64,
    pub pressure_psi: f64,
    /// Nominal sample period [s]; boundary samples may subdivide a period.
    pub sample_period_s: f64,
}

impl TraceMeta {
    pub fn new(
        actuator_id: impl Into<String>,
        rest_length_unpressurized_mm: f64,
        rest_length_pressurized_mm: f64,
        pressure_psi: f64,
        sample_period_s: f64,
    ) -> Result<Self> {
        if !(rest_length_pressurized_mm.is_finite() && rest_length_pressurized_mm > 0.0) {
            return Err(Error::invalid("TraceMeta", "pressurized rest length must be positive"));
        }
        if !(rest_length_unpressurized_mm.is_finite()
            && rest_length_unpressurized_mm >= rest_length_pressurized_mm)
        {
            return Err(Error::invalid(
                "TraceMeta",
                "unpressurized rest length must be >= pressurized rest length",
            ));
        }
        if !(sample_period_s.is_finite() && sample_period_s > 0.0) {
            return Err(Error::invalid("TraceMeta", "sample period must be positive"));
        }
        if !pressure_psi.is_finite() || pressure_psi < 0.0 {
            return Err(Error::invalid("TraceMeta", "pressure must be finite and >= 0"));
        }
        Ok(TraceMeta {
            actuator_id: actuator_id.into(),
            rest_length_unpressurized_mm,
            rest_length_pressurized_mm,
            pressure_psi,
            sample_period_s,
        })
    }

    /// Strain of the machine's zero-extension position (the unpressurized rest
    /// length) relative to the pressurized rest length.
    pub fn machine_zero_strain(&self) -> f64 {
        (self.rest_length_unpressurized_mm - self.rest_length_pressurized_mm)
            / self.rest_length_pressurized_mm
    }

    /// Machine extension [mm] corresponding to a strain value.
    pub fn extension_from_strain(&self, strain: f64) -> f64 {
        (strain - self.machine_zero_strain()) * self.rest_length_pressurized_mm
    }
}

/// One trace sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub time: f64,
    pub strain: f64,
    pub extension_mm: f64,
    pub force: f64,
    pub pressure_psi: Option<f64>,
}

/// A sampled force trace: the simulator's output and the analyzer's input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceTrace {
    pub meta: TraceMeta,
    pub samples: Vec<TraceSample>,
}

impl ForceTrace {
    /// Validates strictly increasing sample times.
    pub fn new(meta: TraceMeta, samples: Vec<TraceSample>) -> Result<Self> {
        for w in samples.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(Error::invalid(
                    "ForceTrace",
                    format!("sample times must strictly increase ({} -> {})", w[0].time, w[1].time),
                ));
            }
        }
        Ok(ForceTrace { meta, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Index of the first sample with `time >= t`, if any.
    pub fn index_at_or_after(&self, t: f64) -> Option<usize> {
        match self
            .samples
            .binary_search_by(|s| s.time.partial_cmp(&t).expect("finite times"))
        {
            Ok(i) => Some(i),
            Err(i) if i < self.samples.len() => Some(i),
            Err(_) => None,
        }
    }
}

/// Advances the chain state by one constant-rate step of length `h` using the
/// exact segment solution; no truncation error for piecewise-constant rates.
pub fn step_exact(
    state: &ChainState,
    params: &[SlseParams],
    rate: f64,
    h: f64,
) -> Result<ChainState> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid("step_exact", format!("step h = {h} must be positive")));
    }
    if !rate.is_finite() {
        return Err(Error::invalid("step_exact", "rate must be finite"));
    }
    if params.len() != state.eps2.len() {
        return Err(Error::invalid(
            "step_exact",
            format!("state has {} elements, params {}", state.eps2.len(), params.len()),
        ));
    }
    let mut eps2 = Vec::with_capacity(state.eps2.len());
    for (e2, p) in state.eps2.iter().zip(params) {
        let gamma = p.gamma();
        let settle = rate / gamma; // fixed point of the series-branch ODE
        eps2.push((e2 - settle) * (-gamma * h).exp() + settle);
    }
    Ok(ChainState {
        eps2,
        strain: state.strain + rate * h,
        time: state.time + h,
    })
}

/// Total chain force at a state: `sum_i (k1_i*eps + k2_i*eps2_i)`.
pub fn chain_force(state: &ChainState, params: &[SlseParams]) -> f64 {
    params
        .iter()
        .zip(&state.eps2)
        .map(|(p, e2)| p.k1 * state.strain + p.k2 * e2)
        .sum()
}

/// Simulates a dimensional chain over a strain profile.
///
/// The chain starts at steady state for the profile's initial strain (all
/// series branches relaxed). Samples lie on the uniform `dt` grid plus every
/// segment boundary; the trace's pressure column is left empty (pressure is
/// metadata, not physics).
pub fn simulate(
    chain: &[SlseParams],
    profile: &StrainProfile,
    meta: &TraceMeta,
) -> Result<ForceTrace> {
    if chain.is_empty() {
        return Err(Error::invalid("simulate", "chain must contain at least one element"));
    }
    let dt = profile.dt;
    let merge_tol = dt * BOUNDARY_MERGE_FRACTION;

    let mut state = ChainState::steady(profile.start_strain, chain.len());
    let mut samples = Vec::new();
    let mut push_sample = |state: &ChainState, time: f64| {
        samples.push(TraceSample {
            time,
            strain: state.strain,
            extension_mm: meta.extension_from_strain(state.strain),
            force: chain_force(state, chain),
            pressure_psi: None,
        });
    };
    push_sample(&state, 0.0);

    let mut seg_start = 0.0;
    for seg in &profile.segments {
        let seg_end = seg_start + seg.duration;
        // Uniform grid points strictly inside the segment, then the exact
        // boundary. Grid indices come from absolute time so the grid never
        // drifts across segments.
        let mut k = (seg_start / dt).floor() as u64 + 1;
        while (k as f64) * dt < seg_start + merge_tol {
            k += 1;
        }
        let mut prev_time = seg_start;
        loop {
            let t = (k as f64) * dt;
            if t >= seg_end - merge_tol {
                break;
            }
            state = step_exact(&state, chain, seg.rate, t - prev_time)?;
            // Pin the clock to the grid to avoid accumulation drift.
            state.time = t;
            push_sample(&state, t);
            prev_time = t;
            k += 1;
        }
        state = step_exact(&state, chain, seg.rate, seg_end - prev_time)?;
        state.time = seg_end;
        push_sample(&state, seg_end);
        seg_start = seg_end;
    }

    ForceTrace::new(meta.clone(), samples)
}

/// Adds independent zero-mean Gaussian noise to the force column.
///
/// Deterministic for a fixed seed; `sigma = 0` returns the trace unchanged.
pub fn add_noise(trace: &ForceTrace, force_sigma: f64, seed: u64) -> Result<ForceTrace> {
    if !(force_sigma.is_finite() && force_sigma >= 0.0) {
        return Err(Error::invalid("add_noise", format!("sigma = {force_sigma} must be >= 0")));
    }
    if force_sigma == 0.0 {
        return Ok(trace.clone());
    }
    let normal = Normal::new(0.0, force_sigma)
        .map_err(|e| Error::invalid("add_noise", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = trace
        .samples
        .iter()
        .map(|s| TraceSample {
            force: s.force + normal.sample(&mut rng),
            ..*s
        })
        .collect();
    ForceTrace::new(trace.meta.clone(), samples)
}
