//! Modeling toolkit for viscoelastic McKibben actuators built from parallel
//! chains of standard-linear-solid elements.
//!
//! The crate is organized along the experimental workflow it reproduces:
//!
//! * [`model`] — closed-form element and chain force-velocity curves.
//! * [`sim`] — exact time-domain simulation of dimensional chains under
//!   piecewise-linear strain profiles (the virtual testing machine).
//! * [`protocol`] — iso-velocity experiment generator (preconditioning,
//!   ramp/hold/return blocks) and geometry utilities.
//! * [`analysis`] — force-trace segmentation, ramp-velocity fitting, and
//!   force-velocity curve extraction.
//! * [`fit`] — two-stage damped least-squares parameter identification.

pub mod analysis;
pub mod error;
pub mod fit;
pub mod model;
pub mod protocol;
pub mod sim;

pub use analysis::{FvCurve, FvGroup, FvPoint, RampDirection, RampWindow};
pub use error::{Error, Result};
pub use fit::{FitObservation, FitOptions, FitProblem, FitResult};
pub use model::{
    dfv_asymptote, dfv_chain, dfv_single, denormalize_params, fv_single, normalize_params,
    slse_ramp_force, v_alpha_approx, v_alpha_exact, ChainElement, ElementRole, NormalizedSlse,
    RampSpec, SlseChain, SlseParams,
};
pub use protocol::{CommandedRamp, ProtocolConfig};
pub use sim::{ChainState, ForceTrace, ProfileSegment, StrainProfile, TraceMeta, TraceSample};
