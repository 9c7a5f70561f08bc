//! Iso-velocity experiment schedules.
//!
//! Builds the strain-vs-time profile a testing machine would command for a
//! session at one pressure: settle, one slow preconditioning cycle, settle,
//! then for each speed an extension ramp and a shortening ramp, each followed
//! by a long hold and a slow return to the start position.
//!
//! Machine quantities are millimetres and mm/s; profiles are dimensionless
//! strain. The conversion length is the pressurized rest length, and the
//! machine's zero-extension position sits at the unpressurized rest length,
//! so the session starts at strain `(L_u - L_p)/L_p`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{ProfileSegment, StrainProfile};

fn default_settle_s() -> f64 {
    30.0
}

fn default_sample_rate_hz() -> f64 {
    100.0
}

fn default_repetitions() -> usize {
    1
}

/// Session parameters for one pressure level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Ramp speed magnitudes [mm/s]; one extension and one shortening ramp
    /// are commanded per entry.
    pub velocities_mm_s: Vec<f64>,
    /// Ramp travel [mm].
    pub extension_mm: f64,
    /// Dwell after each ramp [s].
    pub hold_s: f64,
    /// Slow return speed [mm/s].
    pub return_rate_mm_s: f64,
    /// Preconditioning excursion [mm]; 0 skips the cycle.
    pub precondition_amplitude_mm: f64,
    /// Preconditioning speed [mm/s].
    pub precondition_rate_mm_s: f64,
    pub rest_length_unpressurized_mm: f64,
    pub rest_length_pressurized_mm: f64,
    pub pressure_psi: f64,
    /// Number of times the whole per-velocity sequence is repeated.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// Settling dwell before and after preconditioning [s].
    #[serde(default = "default_settle_s")]
    pub settle_s: f64,
    #[serde(default = "default_sample_rate_hz")]
    pub sample_rate_hz: f64,
    /// Permit shortening below the pressurized rest length (slack actuator).
    #[serde(default)]
    pub allow_overshorten: bool,
}

impl ProtocolConfig {
    /// The standard session: speeds {2,4,6,8,10} mm/s, 30 s holds,
    /// 0.01 mm/s returns, one +/-4 mm preconditioning cycle, and 2 mm of
    /// travel, reduced to 1 mm at pressures of 5 psi or below where the
    /// contraction margin is too small for 2 mm of shortening.
    ///
    /// One repetition; raise `repetitions` to pool repeated sequences.
    pub fn standard(
        pressure_psi: f64,
        rest_length_unpressurized_mm: f64,
        rest_length_pressurized_mm: f64,
    ) -> Self {
        ProtocolConfig {
            velocities_mm_s: vec![2.0, 4.0, 6.0, 8.0, 10.0],
            extension_mm: if pressure_psi <= 5.0 { 1.0 } else { 2.0 },
            hold_s: 30.0,
            return_rate_mm_s: 0.01,
            precondition_amplitude_mm: 4.0,
            precondition_rate_mm_s: 0.01,
            rest_length_unpressurized_mm,
            rest_length_pressurized_mm,
            pressure_psi,
            repetitions: default_repetitions(),
            settle_s: default_settle_s(),
            sample_rate_hz: default_sample_rate_hz(),
            allow_overshorten: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.velocities_mm_s.is_empty() {
            return Err(Error::invalid("ProtocolConfig", "need at least one ramp velocity"));
        }
        for &v in &self.velocities_mm_s {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    "ProtocolConfig",
                    format!("ramp velocity {v} mm/s must be positive"),
                ));
            }
        }
        if !(self.extension_mm.is_finite() && self.extension_mm > 0.0) {
            return Err(Error::invalid("ProtocolConfig", "extension must be positive"));
        }
        if !(self.hold_s.is_finite() && self.hold_s >= 0.0) {
            return Err(Error::invalid("ProtocolConfig", "hold must be >= 0"));
        }
        if !(self.settle_s.is_finite() && self.settle_s >= 0.0) {
            return Err(Error::invalid("ProtocolConfig", "settle must be >= 0"));
        }
        if !(self.return_rate_mm_s.is_finite() && self.return_rate_mm_s > 0.0) {
            return Err(Error::invalid("ProtocolConfig", "return rate must be positive"));
        }
        if !(self.precondition_amplitude_mm.is_finite() && self.precondition_amplitude_mm >= 0.0) {
            return Err(Error::invalid("ProtocolConfig", "precondition amplitude must be >= 0"));
        }
        if self.precondition_amplitude_mm > 0.0
            && !(self.precondition_rate_mm_s.is_finite() && self.precondition_rate_mm_s > 0.0)
        {
            return Err(Error::invalid("ProtocolConfig", "precondition rate must be positive"));
        }
        if !(self.rest_length_pressurized_mm.is_finite() && self.rest_length_pressurized_mm > 0.0) {
            return Err(Error::invalid("ProtocolConfig", "pressurized rest length must be positive"));
        }
        if !(self.rest_length_unpressurized_mm.is_finite()
            && self.rest_length_unpressurized_mm >= self.rest_length_pressurized_mm)
        {
            return Err(Error::invalid(
                "ProtocolConfig",
                "unpressurized rest length must be >= pressurized rest length",
            ));
        }
        if !(self.pressure_psi.is_finite() && self.pressure_psi >= 0.0) {
            return Err(Error::invalid("ProtocolConfig", "pressure must be >= 0"));
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("ProtocolConfig", "repetitions must be >= 1"));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::invalid("ProtocolConfig", "sample rate must be positive"));
        }
        let margin = self.rest_length_unpressurized_mm - self.rest_length_pressurized_mm;
        let worst_shortening = self.extension_mm.max(self.precondition_amplitude_mm);
        if worst_shortening > margin + 1e-12 && !self.allow_overshorten {
            return Err(Error::invalid(
                "ProtocolConfig",
                format!(
                    "shortening by {worst_shortening} mm goes below the pressurized rest length \
                     (contraction margin {margin:.3} mm) and the actuator would fall slack; \
                     use a smaller travel (e.g. 1 mm at 5 psi) or set allow_overshorten"
                ),
            ));
        }
        Ok(())
    }

    /// Strain of the machine's zero-extension position.
    pub fn start_strain(&self) -> f64 {
        (self.rest_length_unpressurized_mm - self.rest_length_pressurized_mm)
            / self.rest_length_pressurized_mm
    }

    /// Expected number of measurement ramps in the full session.
    pub fn expected_ramp_count(&self) -> usize {
        2 * self.velocities_mm_s.len() * self.repetitions
    }
}

/// Where one commanded measurement ramp sits in the session timeline.
///
/// Only the fast ramps are listed; holds, returns, and preconditioning are
/// part of the profile but carry no measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandedRamp {
    /// Signed machine velocity [mm/s]; positive extends the actuator.
    pub velocity_mm_s: f64,
    /// Ramp onset [s] from session start.
    pub start_time: f64,
    /// Ramp length [s].
    pub duration: f64,
    /// Which repetition of the per-velocity sequence this ramp belongs to.
    pub repetition: usize,
}

struct ScheduleBuilder {
    lp: f64,
    t: f64,
    segments: Vec<ProfileSegment>,
    ramps: Vec<CommandedRamp>,
}

impl ScheduleBuilder {
    fn new(lp: f64) -> Self {
        ScheduleBuilder {
            lp,
            t: 0.0,
            segments: Vec::new(),
            ramps: Vec::new(),
        }
    }

    fn hold(&mut self, duration: f64) {
        if duration > 0.0 {
            self.segments.push(ProfileSegment { duration, rate: 0.0 });
            self.t += duration;
        }
    }

    /// Travel `delta_mm` (signed) at `speed_mm_s` (positive magnitude).
    fn travel(&mut self, delta_mm: f64, speed_mm_s: f64) {
        let duration = delta_mm.abs() / speed_mm_s;
        let rate = delta_mm.signum() * speed_mm_s / self.lp;
        self.segments.push(ProfileSegment { duration, rate });
        self.t += duration;
    }

    fn measurement_ramp(&mut self, delta_mm: f64, speed_mm_s: f64, repetition: usize) {
        let duration = delta_mm.abs() / speed_mm_s;
        self.ramps.push(CommandedRamp {
            velocity_mm_s: delta_mm.signum() * speed_mm_s,
            start_time: self.t,
            duration,
            repetition,
        });
        self.travel(delta_mm, speed_mm_s);
    }
}

fn build(cfg: &ProtocolConfig) -> Result<(StrainProfile, Vec<CommandedRamp>)> {
    cfg.validate()?;
    let mut b = ScheduleBuilder::new(cfg.rest_length_pressurized_mm);
    b.hold(cfg.settle_s);
    if cfg.precondition_amplitude_mm > 0.0 {
        let a = cfg.precondition_amplitude_mm;
        b.travel(a, cfg.precondition_rate_mm_s);
        b.travel(-2.0 * a, cfg.precondition_rate_mm_s);
        b.travel(a, cfg.precondition_rate_mm_s);
    }
    b.hold(cfg.settle_s);
    for rep in 0..cfg.repetitions {
        for &v in &cfg.velocities_mm_s {
            for sign in [1.0, -1.0] {
                b.measurement_ramp(sign * cfg.extension_mm, v, rep);
                b.hold(cfg.hold_s);
                b.travel(-sign * cfg.extension_mm, cfg.return_rate_mm_s);
                b.hold(cfg.hold_s);
            }
        }
    }
    let profile = StrainProfile::new(cfg.start_strain(), 1.0 / cfg.sample_rate_hz, b.segments)?;
    Ok((profile, b.ramps))
}

/// The full commanded strain profile for a session.
pub fn build_protocol(cfg: &ProtocolConfig) -> Result<StrainProfile> {
    build(cfg).map(|(profile, _)| profile)
}

/// Onset times and durations of the measurement ramps, in profile order.
/// Shares the timeline construction with [`build_protocol`], so the two are
/// always consistent.
pub fn ramp_schedule(cfg: &ProtocolConfig) -> Result<Vec<CommandedRamp>> {
    build(cfg).map(|(_, ramps)| ramps)
}

/// Converts a machine displacement (or speed) to strain (or strain rate).
pub fn strain_from_extension(extension_mm: f64, rest_length_pressurized_mm: f64) -> Result<f64> {
    if !(rest_length_pressurized_mm.is_finite() && rest_length_pressurized_mm > 0.0) {
        return Err(Error::invalid(
            "strain_from_extension",
            format!("rest length {rest_length_pressurized_mm} mm must be positive"),
        ));
    }
    if !extension_mm.is_finite() {
        return Err(Error::invalid("strain_from_extension", "extension must be finite"));
    }
    Ok(extension_mm / rest_length_pressurized_mm)
}

/// Maximum contraction as a percentage of the initial length:
/// `100*(il - ml)/il`.
pub fn contraction_ratio(il_mm: f64, ml_mm: f64) -> Result<f64> {
    if !(il_mm.is_finite() && ml_mm.is_finite() && ml_mm > 0.0) {
        return Err(Error::invalid("contraction_ratio", "lengths must be finite and positive"));
    }
    if ml_mm > il_mm {
        return Err(Error::invalid(
            "contraction_ratio",
            format!("contracted length {ml_mm} mm exceeds initial length {il_mm} mm"),
        ));
    }
    Ok(100.0 * (il_mm - ml_mm) / il_mm)
}
